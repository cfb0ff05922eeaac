use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use polarsep_core::imagecore::{io, MetricReport, SampleMetrics};
use polarsep_core::ImageF;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{sample_dir_name, sample_indices, GT_REFLECTION, GT_TRANSMISSION};
use crate::error::{CliError, Result};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";

/// Per-layer metrics, each averaged per image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub reflection: MetricReport,
    pub transmission: MetricReport,
}

#[derive(Debug, Clone)]
pub struct EvalJob {
    pub predictions: PathBuf,
    pub ground_truth: PathBuf,
    pub out: Option<PathBuf>,
    pub workers: usize,
}

/// `R_hat.pfm`, falling back to `R_hat.png`.
fn read_prediction(dir: &Path, stem: &str) -> Result<ImageF> {
    let pfm = dir.join(format!("{stem}.pfm"));
    let path = if pfm.exists() { pfm } else { dir.join(format!("{stem}.png")) };
    Ok(io::read_image(&path)?)
}

fn index_mismatch(pred: &[usize], gt: &[usize]) -> Option<String> {
    let missing: Vec<_> = gt.iter().filter(|i| pred.binary_search(i).is_err()).collect();
    let extra: Vec<_> = pred.iter().filter(|i| gt.binary_search(i).is_err()).collect();
    if missing.is_empty() && extra.is_empty() {
        return None;
    }
    let mut msg = String::from("prediction and ground-truth samples differ");
    if !missing.is_empty() {
        write!(msg, "; missing predictions: {missing:?}").unwrap();
    }
    if !extra.is_empty() {
        write!(msg, "; extra predictions: {extra:?}").unwrap();
    }
    Some(msg)
}

pub fn render_table(report: &EvalReport) -> String {
    let mut out = String::new();
    writeln!(out, "{:<8} {:>10} {:>10} {:>10} {:>10}", "sample", "R rmse", "R psnr", "T rmse", "T psnr").unwrap();
    for (r, t) in report.reflection.per_image.iter().zip(&report.transmission.per_image) {
        writeln!(out, "{:<8} {:>10.6} {:>10.3} {:>10.6} {:>10.3}", r.id, r.rmse, r.psnr, t.rmse, t.psnr).unwrap();
    }
    writeln!(
        out,
        "{:<8} {:>10.6} {:>10.3} {:>10.6} {:>10.3}",
        "mean", report.reflection.rmse, report.reflection.psnr, report.transmission.rmse, report.transmission.psnr
    )
    .unwrap();
    out
}

pub fn run_eval(job: &EvalJob) -> Result<EvalReport> {
    if job.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let pred = sample_indices(&job.predictions)?;
    let gt = sample_indices(&job.ground_truth)?;
    if let Some(msg) = index_mismatch(&pred, &gt) {
        return Err(CliError::Usage(msg));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(job.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("worker pool: {e}")))?;
    let scored: Vec<(SampleMetrics, SampleMetrics)> = pool.install(|| {
        gt.par_iter()
            .map(|&index| {
                let name = sample_dir_name(index);
                let (p, g) = (job.predictions.join(&name), job.ground_truth.join(&name));
                let r = SampleMetrics::evaluate(&name, &read_prediction(&p, "R_hat")?, &io::read_pfm(&g.join(GT_REFLECTION))?)?;
                let t = SampleMetrics::evaluate(&name, &read_prediction(&p, "T_hat")?, &io::read_pfm(&g.join(GT_TRANSMISSION))?)?;
                Ok((r, t))
            })
            .collect::<Result<_>>()
    })?;
    let (r, t): (Vec<_>, Vec<_>) = scored.into_iter().unzip();
    let report = EvalReport {
        samples: r.len(),
        reflection: MetricReport::from_samples(r),
        transmission: MetricReport::from_samples(t),
    };
    if let Some(out) = &job.out {
        fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        let mut json = serde_json::to_string_pretty(&report).expect("serializable");
        json.push('\n');
        let path = out.join(REPORT_JSON);
        fs::write(&path, json).map_err(|e| CliError::io(&path, e))?;
        let path = out.join(REPORT_TEXT);
        fs::write(&path, render_table(&report)).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(report)
}
