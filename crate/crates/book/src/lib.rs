//! The guide in `book/`, one module per chapter so `cargo test --doc` runs
//! every snippet.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}
#[doc = include_str!("../../../book/src/ground-matrices.md")]
pub mod ground_matrices {}
#[doc = include_str!("../../../book/src/transport.md")]
pub mod transport {}
#[doc = include_str!("../../../book/src/segmentation.md")]
pub mod segmentation {}
#[doc = include_str!("../../../book/src/driving.md")]
pub mod driving {}
#[doc = include_str!("../../../book/src/alternation.md")]
pub mod alternation {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
