//! Dataset generation and the on-disk sample layout.
//!
//! ```text
//! <out>/manifest.json
//! <out>/000000/obs_0.png obs_1.png obs_2.png gt_R.pfm gt_T.pfm meta.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use polarsep_core::imagecore::{io, BitDepth};
use polarsep_core::synth::{synthesize_sample, PolarStack, SampleMeta, SampleRecord};
use polarsep_core::ImageF;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const MANIFEST_SCHEMA: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const META_FILE: &str = "meta.json";
pub const GT_REFLECTION: &str = "gt_R.pfm";
pub const GT_TRANSMISSION: &str = "gt_T.pfm";

const SOURCE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "pfm"];

pub fn observation_file(i: usize) -> String {
    format!("obs_{i}.png")
}

pub fn sample_dir_name(index: usize) -> String {
    format!("{index:06}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: u32,
    pub master_seed: u64,
    pub config_hash: String,
    pub count: usize,
    pub samples: Vec<usize>,
    pub config: RunConfig,
}

#[derive(Debug, Clone)]
pub struct SynthJob {
    pub sources: PathBuf,
    pub out: PathBuf,
    pub count: usize,
    pub seed: u64,
    pub workers: usize,
    pub config: RunConfig,
}

struct Source {
    name: String,
    image: ImageF,
}

/// Per-sample generator: stream `index` of a ChaCha8 generator keyed by the
/// master seed. The first draw seeds the sample, the next two pick its
/// sources.
fn sample_rng(master: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index as u64);
    rng
}

pub fn sample_seed(master: u64, index: usize) -> u64 {
    sample_rng(master, index).next_u64()
}

fn load_sources(dir: &Path) -> Result<Vec<Source>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| SOURCE_EXTENSIONS.contains(&e.as_str())) {
            paths.push(path);
        }
    }
    paths.sort();
    let mut sources = Vec::with_capacity(paths.len());
    for path in paths {
        let image = io::read_image(&path)?.to_rgb();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        sources.push(Source { name, image });
    }
    if sources.len() < 2 {
        return Err(CliError::Usage(format!(
            "{}: need at least 2 source images, found {}",
            dir.display(),
            sources.len()
        )));
    }
    Ok(sources)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes `dir` through a temporary sibling that is renamed into place.
fn write_atomically(dir: &Path, fill: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let parent = dir.parent().unwrap_or(Path::new("."));
    let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or("sample");
    let tmp = parent.join(format!(".{name}.tmp"));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    }
    fs::create_dir_all(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    fill(&tmp)?;
    if dir.exists() {
        warn!("replacing existing {}", dir.display());
        fs::remove_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::rename(&tmp, dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_sample(dir: &Path, record: &SampleRecord, sources: Option<[String; 2]>) -> Result<()> {
    write_atomically(dir, |tmp| {
        for (i, obs) in record.stack.images().iter().enumerate() {
            io::write_png(&tmp.join(observation_file(i)), obs, BitDepth::Eight)?;
        }
        io::write_pfm(&tmp.join(GT_REFLECTION), &record.reflection)?;
        io::write_pfm(&tmp.join(GT_TRANSMISSION), &record.transmission)?;
        let mut meta = record.meta();
        meta.sources = sources;
        write_json(&tmp.join(META_FILE), &meta)
    })
}

pub fn read_meta(dir: &Path) -> Result<SampleMeta> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Observations and metadata of a sample directory.
pub fn read_sample_stack(dir: &Path) -> Result<(PolarStack, SampleMeta)> {
    let meta = read_meta(dir)?;
    let images = [0, 1, 2].map(|i| io::read_image(&dir.join(observation_file(i))));
    let [a, b, c] = images;
    let stack = PolarStack::new([a?, b?, c?], meta.angles, meta.nominal_phi0)?;
    Ok((stack, meta))
}

/// Generates `job.count` samples into `job.out` and writes the manifest.
pub fn run_synth(job: &SynthJob) -> Result<Manifest> {
    job.config.validate()?;
    if job.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    fs::create_dir_all(&job.out).map_err(|e| CliError::io(&job.out, e))?;
    let sources = if job.count > 0 { load_sources(&job.sources)? } else { Vec::new() };
    let cfg = &job.config.synth;
    info!("generating {} samples from {} sources", job.count, sources.len());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(job.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("worker pool: {e}")))?;
    pool.install(|| {
        (0..job.count).into_par_iter().try_for_each(|index| {
            let mut rng = sample_rng(job.seed, index);
            let seed = rng.next_u64();
            let a = rng.random_range(0..sources.len());
            let mut b = rng.random_range(0..sources.len() - 1);
            if b >= a {
                b += 1;
            }
            let record = synthesize_sample(&sources[a].image, &sources[b].image, cfg, seed).map_err(|e| {
                match CliError::from(e) {
                    CliError::Usage(m) => {
                        CliError::Usage(format!("sample {index} ({}, {}): {m}", sources[a].name, sources[b].name))
                    }
                    other => other,
                }
            })?;
            let names = [sources[a].name.clone(), sources[b].name.clone()];
            write_sample(&job.out.join(sample_dir_name(index)), &record, Some(names))
        })
    })?;

    let manifest = Manifest {
        schema: MANIFEST_SCHEMA,
        master_seed: job.seed,
        config_hash: job.config.hash(),
        count: job.count,
        samples: (0..job.count).collect(),
        config: job.config.clone(),
    };
    let path = job.out.join(MANIFEST_FILE);
    let tmp = job.out.join(format!(".{MANIFEST_FILE}.tmp"));
    write_json(&tmp, &manifest)?;
    fs::rename(&tmp, &path).map_err(|e| CliError::io(&path, e))?;
    Ok(manifest)
}

/// Sample indices present under `dir`: subdirectories named by six digits.
pub fn sample_indices(dir: &Path) -> Result<Vec<usize>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if name.len() == 6 && name.bytes().all(|b| b.is_ascii_digit()) && entry.path().is_dir() {
            out.push(name.parse().expect("digits"));
        }
    }
    out.sort_unstable();
    Ok(out)
}
