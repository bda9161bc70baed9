//! On-disk formats: P2 label grids, per-scene feature CSV, flat CSV checkpoints.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::seg::SceneSample;

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Plain graymap of class indices.
pub fn pgm_string(height: usize, width: usize, labels: &[usize], max_value: usize) -> String {
    let mut out = format!("P2\n{width} {height}\n{max_value}\n");
    for row in labels.chunks(width.max(1)) {
        let line: Vec<String> = row.iter().map(usize::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Parses a P2 graymap into `(height, width, labels)`.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<usize>)> {
    let text = read(path)?;
    let mut tokens = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        tokens.extend(line.split_whitespace().map(|t| (k + 1, t)));
    }
    let mut it = tokens.into_iter();
    match it.next() {
        Some((_, "P2")) => {}
        Some((line, other)) => return Err(parse_err(path, line, format!("expected P2 magic, found {other}"))),
        None => return Err(parse_err(path, 1, "empty file")),
    }
    let mut number = |what: &str| -> Result<usize> {
        let (line, t) = it.next().ok_or_else(|| parse_err(path, 0, format!("missing {what}")))?;
        t.parse()
            .map_err(|_| parse_err(path, line, format!("{what} {t:?} is not a nonnegative integer")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let max_value = number("max value")?;
    let mut labels = Vec::with_capacity(width * height);
    for _ in 0..width * height {
        let v = number("pixel")?;
        if v > max_value {
            return Err(parse_err(path, 0, format!("pixel {v} exceeds max value {max_value}")));
        }
        labels.push(v);
    }
    Ok((height, width, labels))
}

/// One CSV line of feature values per pixel, row-major.
pub fn features_csv(sample: &SceneSample) -> String {
    let mut out = String::new();
    for p in 0..sample.pixels() {
        let line: Vec<String> = sample.feature(p).iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn read_features_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = read(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            l.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| parse_err(path, k + 1, format!("{t:?} is not a number")))
                })
                .collect()
        })
        .collect()
}

/// Writes `<stem>.pgm` and `<stem>.csv` into `dir`.
pub fn save_sample(dir: &Path, stem: &str, sample: &SceneSample, classes: usize) -> Result<()> {
    let pgm = pgm_string(sample.height, sample.width, &sample.labels, classes.saturating_sub(1));
    write_text(&dir.join(format!("{stem}.pgm")), &pgm)?;
    write_text(&dir.join(format!("{stem}.csv")), &features_csv(sample))
}

pub fn load_sample(dir: &Path, stem: &str, seed: u64) -> Result<SceneSample> {
    let pgm = dir.join(format!("{stem}.pgm"));
    let (height, width, labels) = read_pgm(&pgm)?;
    let csv = dir.join(format!("{stem}.csv"));
    let rows = read_features_csv(&csv)?;
    if rows.len() != labels.len() {
        return Err(parse_err(
            &csv,
            rows.len(),
            format!("{} feature rows for {} pixels", rows.len(), labels.len()),
        ));
    }
    let dim = rows.first().map_or(0, Vec::len);
    if let Some(k) = rows.iter().position(|r| r.len() != dim) {
        return Err(parse_err(&csv, k + 1, "ragged feature row"));
    }
    Ok(SceneSample {
        height,
        width,
        features: rows.concat(),
        labels,
        seed,
    })
}

/// Named parameter block of a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

/// `name,rows,cols,v1,v2,...` per block.
pub fn checkpoint_string(blocks: &[Block]) -> String {
    let mut out = String::new();
    for b in blocks {
        let _ = write!(out, "{},{},{}", b.name, b.rows, b.cols);
        for v in &b.values {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<Block>> {
    let text = read(path)?;
    let mut blocks = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let name = parts.next().unwrap_or_default().trim().to_string();
        let mut dim = |what: &str| -> Result<usize> {
            let t = parts
                .next()
                .ok_or_else(|| parse_err(path, k + 1, format!("missing {what}")))?;
            t.trim()
                .parse()
                .map_err(|_| parse_err(path, k + 1, format!("{what} {t:?} is not an integer")))
        };
        let rows = dim("rows")?;
        let cols = dim("cols")?;
        let values: Vec<f64> = parts
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|_| parse_err(path, k + 1, format!("{t:?} is not a number")))
            })
            .collect::<Result<_>>()?;
        if values.len() != rows * cols {
            return Err(parse_err(
                path,
                k + 1,
                format!("block {name} declares {rows}x{cols} but holds {} values", values.len()),
            ));
        }
        blocks.push(Block {
            name,
            rows,
            cols,
            values,
        });
    }
    Ok(blocks)
}
