use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sevot_lab::agent::{NetShape, PolicyValueParams};
use sevot_lab::drive::MEASUREMENTS;
use sevot_lab::io::{checkpoint_string, read_checkpoint, Block};
use sevot_lab::seg::SoftmaxModel;

/// Output root shared by every command of one experiment.
pub struct Run {
    pub out: PathBuf,
    pub quiet: bool,
}

impl Run {
    /// `<out>/<name>`, created on demand.
    pub fn dir(&self, name: &str) -> Result<PathBuf> {
        let dir = self.out.join(name);
        fs::create_dir_all(&dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(dir)
    }

    /// `<out>/<name>` that a previous command must have produced.
    pub fn input(&self, name: &str, what: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        if !path.exists() {
            bail!("{what} {} not found", path.display());
        }
        Ok(path)
    }

    pub fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

pub fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, &text)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut buf = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut buf, &row)?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    f.write_all(&buf)
        .with_context(|| format!("cannot write {}", path.display()))
}

fn block(name: &str, values: Vec<f64>) -> Block {
    Block {
        name: name.into(),
        rows: 1,
        cols: values.len(),
        values,
    }
}

fn find<'a>(blocks: &'a [Block], name: &str, path: &Path) -> Result<&'a [f64]> {
    blocks
        .iter()
        .find(|b| b.name == name)
        .map(|b| b.values.as_slice())
        .with_context(|| format!("checkpoint {} has no `{name}` block", path.display()))
}

fn dims<const K: usize>(values: &[f64], path: &Path) -> Result<[usize; K]> {
    let mut out = [0; K];
    if values.len() != K {
        bail!("checkpoint {} has a malformed shape block", path.display());
    }
    for (o, v) in out.iter_mut().zip(values) {
        if !(v.fract() == 0.0 && *v >= 0.0) {
            bail!("checkpoint {} has a malformed shape block", path.display());
        }
        *o = *v as usize;
    }
    Ok(out)
}

pub fn save_segmenter(path: &Path, model: &SoftmaxModel) -> Result<()> {
    let shape = [model.input(), model.hidden(), model.classes()]
        .map(|v| v as f64)
        .to_vec();
    write(
        path,
        &checkpoint_string(&[block("shape", shape), block("params", model.params().to_vec())]),
    )
}

pub fn load_segmenter(path: &Path) -> Result<SoftmaxModel> {
    let blocks = read_checkpoint(path)?;
    let [input, hidden, classes] = dims(find(&blocks, "shape", path)?, path)?;
    let params = find(&blocks, "params", path)?.to_vec();
    SoftmaxModel::from_params(input, hidden, classes, params)
        .with_context(|| format!("in checkpoint {}", path.display()))
}

pub fn save_agent(path: &Path, params: &PolicyValueParams) -> Result<()> {
    let s = params.shape();
    let shape = [s.latent, s.latent_hidden, s.meas_hidden, s.fused]
        .map(|v| v as f64)
        .to_vec();
    write(
        path,
        &checkpoint_string(&[
            block("shape", shape),
            block("meas_scale", params.meas_scale().to_vec()),
            block("params", params.params().to_vec()),
        ]),
    )
}

pub fn load_agent(path: &Path) -> Result<PolicyValueParams> {
    let blocks = read_checkpoint(path)?;
    let [latent, latent_hidden, meas_hidden, fused] = dims(find(&blocks, "shape", path)?, path)?;
    let scale: [f64; MEASUREMENTS] = find(&blocks, "meas_scale", path)?
        .try_into()
        .with_context(|| format!("checkpoint {} has a malformed meas_scale block", path.display()))?;
    let shape = NetShape {
        latent,
        latent_hidden,
        meas_hidden,
        fused,
    };
    let params = find(&blocks, "params", path)?.to_vec();
    PolicyValueParams::from_params(shape, scale, params).with_context(|| format!("in checkpoint {}", path.display()))
}
