use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use sevot_lab::io::{load_sample, save_sample};
use sevot_lab::rng;
use sevot_lab::seg::{generate_scene, SceneSample, N_CLASSES};

use crate::experiment::ExperimentConfig;
use crate::output::{write, Run};

pub const MANIFEST: &str = "manifest.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub stem: String,
    pub seed: u64,
    pub test: bool,
}

pub fn cmd_gen_data(cfg: &ExperimentConfig, run: &Run) -> Result<()> {
    let dir = run.dir("data")?;
    let n = cfg.data.scenes;
    let n_test = ((n as f64 * cfg.data.test_fraction).round() as usize).clamp(1, n - 1);
    let mut manifest = String::from("stem,seed,split\n");
    for i in 0..n {
        let seed = rng::derive(cfg.seed, "data", i as u64);
        let stem = format!("scene-{i:04}");
        let sample = generate_scene(seed, &cfg.data.scene)?;
        save_sample(&dir, &stem, &sample, N_CLASSES)?;
        let split = if i >= n - n_test { "test" } else { "train" };
        let _ = writeln!(manifest, "{stem},{seed},{split}");
    }
    write(&dir.join(MANIFEST), &manifest)?;
    run.note(format!("wrote {n} scenes ({n_test} test) to {}", dir.display()));
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<Entry>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("dataset manifest {} not found", path.display()))?;
    let mut entries = Vec::new();
    for (k, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        let [stem, seed, split] = parts.as_slice() else {
            bail!("{} line {}: expected stem,seed,split", path.display(), k + 1);
        };
        let seed = seed
            .parse()
            .with_context(|| format!("{} line {}: bad seed `{seed}`", path.display(), k + 1))?;
        let test = match *split {
            "train" => false,
            "test" => true,
            other => bail!("{} line {}: unknown split `{other}`", path.display(), k + 1),
        };
        entries.push(Entry {
            stem: stem.to_string(),
            seed,
            test,
        });
    }
    Ok(entries)
}

/// Train and test scenes of the generated dataset.
pub fn load_dataset(run: &Run) -> Result<(Vec<SceneSample>, Vec<SceneSample>)> {
    let dir = run.input("data", "dataset directory")?;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for e in read_manifest(&dir.join(MANIFEST))? {
        let s = load_sample(&dir, &e.stem, e.seed)?;
        if e.test {
            test.push(s);
        } else {
            train.push(s);
        }
    }
    if train.is_empty() || test.is_empty() {
        bail!("dataset in {} needs both train and test scenes", dir.display());
    }
    Ok((train, test))
}
