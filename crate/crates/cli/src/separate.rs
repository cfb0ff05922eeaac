//! `project`, `separate` and `histmatch`.

use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use polarsep_core::decompose::{
    canonical_baseline_separate, canonical_solve, combine_residuals, fresnel_inverse_separate,
    fresnel_inverse_separate_masked, CanonicalPair, ResidualFields,
};
use polarsep_core::geometry::AoiField;
use polarsep_core::imagecore::{histogram_match, io, BitDepth};
use polarsep_core::optics::OpticalConfig;
use polarsep_core::synth::{nominal_angles, PolarStack, SampleMeta};
use polarsep_core::{Error as CoreError, ImageF};

use crate::dataset::{read_meta, read_sample_stack};
use crate::error::{CliError, Result};

pub const I_PERP: &str = "i_perp.pfm";
pub const I_PAR: &str = "i_par.pfm";
pub const PHI_PERP: &str = "phi_perp.pfm";
pub const R_TILDE: &str = "r_tilde.pfm";
pub const T_TILDE: &str = "t_tilde.pfm";
pub const XI_PERP: &str = "xi_perp.pfm";
pub const XI_PAR: &str = "xi_par.pfm";

/// Where three observations come from.
#[derive(Debug, Clone)]
pub enum StackSource {
    /// A generated sample directory; angles come from its metadata.
    Sample(PathBuf),
    /// Three image files at `phi0 + i*pi/4`, or at explicit realized angles.
    Files { paths: [PathBuf; 3], phi0: f64, angles: Option<[f64; 3]> },
}

impl StackSource {
    pub fn load(&self) -> Result<PolarStack> {
        match self {
            StackSource::Sample(dir) => Ok(read_sample_stack(dir)?.0),
            StackSource::Files { paths, phi0, angles } => {
                let [a, b, c] = paths.clone().map(|p| io::read_image(&p));
                let images = [a?, b?, c?];
                let angles = angles.unwrap_or_else(|| nominal_angles(*phi0));
                Ok(PolarStack::new(images, angles, *phi0)?)
            }
        }
    }
}

fn create_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

pub fn write_canonical(dir: &Path, canon: &CanonicalPair) -> Result<()> {
    create_out(dir)?;
    io::write_pfm(&dir.join(I_PERP), &canon.i_perp)?;
    io::write_pfm(&dir.join(I_PAR), &canon.i_par)?;
    io::write_pfm(&dir.join(PHI_PERP), &canon.phi_perp)?;
    Ok(())
}

pub fn read_canonical(dir: &Path) -> Result<CanonicalPair> {
    let read = |name| io::read_pfm(&dir.join(name));
    Ok(CanonicalPair::new(read(I_PERP)?, read(I_PAR)?, read(PHI_PERP)?)?)
}

pub fn read_residuals(dir: &Path) -> Result<ResidualFields> {
    let read = |name| io::read_image(&dir.join(name));
    Ok(ResidualFields::new(read(R_TILDE)?, read(T_TILDE)?, read(XI_PERP)?, read(XI_PAR)?)?)
}

pub fn run_project(source: &StackSource, out: &Path) -> Result<CanonicalPair> {
    let canon = canonical_solve(&source.load()?)?;
    let flat = canon.undefined_phase.iter().filter(|&&f| f).count();
    if flat > 0 {
        warn!("{flat} pixel(s) without measurable polarization; phi_perp set to 0 there");
    }
    write_canonical(out, &canon)?;
    Ok(canon)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    /// Closed-form inverse using the per-column angle of incidence.
    FresnelInverse,
    /// Geometry-free estimate from the canonical images alone.
    CanonicalBaseline,
    /// Blend externally predicted residual images with the canonical pair.
    Residual,
}

#[derive(Debug, Clone)]
pub enum SeparateInput {
    Stack(StackSource),
    /// Directory holding a canonical PFM triple.
    Canonical(PathBuf),
}

#[derive(Debug, Clone)]
pub enum AoiSource {
    /// `meta.json` of a generated sample, or a sample directory.
    Meta(PathBuf),
    Uniform(f64),
}

#[derive(Debug, Clone)]
pub struct SeparateJob {
    pub input: SeparateInput,
    pub method: Method,
    pub aoi: Option<AoiSource>,
    pub residual: Option<PathBuf>,
    pub allow_singular: bool,
    pub histmatch: bool,
    pub optics: OpticalConfig,
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct Separation {
    pub reflection: ImageF,
    pub transmission: ImageF,
    /// Columns zeroed because the angle of incidence was ill-conditioned.
    pub masked_columns: Vec<usize>,
}

fn resolve_aoi(job: &SeparateJob, width: usize) -> Result<AoiField> {
    let field = match (&job.aoi, &job.input) {
        (Some(AoiSource::Uniform(theta)), _) => AoiField::uniform(width, *theta)?,
        (Some(AoiSource::Meta(path)), _) => {
            let meta: SampleMeta = if path.is_dir() {
                read_meta(path)?
            } else {
                let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?
            };
            meta.aoi
        }
        (None, SeparateInput::Stack(StackSource::Sample(dir))) => read_meta(dir)?.aoi,
        (None, _) => {
            return Err(CliError::Usage(
                "fresnel-inverse needs the angle of incidence: pass --meta or --theta".into(),
            ))
        }
    };
    Ok(field)
}

pub fn run_separate(job: &SeparateJob) -> Result<Separation> {
    let (canon, reference) = match &job.input {
        SeparateInput::Stack(source) => {
            let stack = source.load()?;
            let reference = stack.images()[0].clone();
            (canonical_solve(&stack)?, Some(reference))
        }
        SeparateInput::Canonical(dir) => (read_canonical(dir)?, None),
    };
    if job.histmatch && reference.is_none() {
        return Err(CliError::Usage("--histmatch needs the observations, not a canonical triple".into()));
    }

    let mut masked_columns = Vec::new();
    let (mut reflection, mut transmission) = match job.method {
        Method::CanonicalBaseline => canonical_baseline_separate(&canon),
        Method::Residual => {
            let dir = job
                .residual
                .as_ref()
                .ok_or_else(|| CliError::Usage("method residual needs --residual <dir>".into()))?;
            combine_residuals(&canon, &read_residuals(dir)?)?
        }
        Method::FresnelInverse => {
            let aoi = resolve_aoi(job, canon.i_perp.width())?;
            if job.allow_singular {
                let (r, t, cols) = fresnel_inverse_separate_masked(&canon, &aoi, &job.optics)?;
                if !cols.is_empty() {
                    warn!("masked {} ill-conditioned column(s): {cols:?}", cols.len());
                }
                masked_columns = cols;
                (r, t)
            } else {
                fresnel_inverse_separate(&canon, &aoi, &job.optics).map_err(|e| match e {
                    CoreError::Singular { columns } => CliError::Numeric(format!(
                        "ill-conditioned angle of incidence at columns {columns:?}; \
                         rerun with --allow-singular to zero them"
                    )),
                    other => other.into(),
                })?
            }
        }
    };
    if let (true, Some(reference)) = (job.histmatch, &reference) {
        reflection = histogram_match(&reflection, reference)?;
        transmission = histogram_match(&transmission, reference)?;
    }

    create_out(&job.out)?;
    io::write_png(&job.out.join("R_hat.png"), &reflection, BitDepth::Eight)?;
    io::write_png(&job.out.join("T_hat.png"), &transmission, BitDepth::Eight)?;
    io::write_pfm(&job.out.join("R_hat.pfm"), &reflection)?;
    io::write_pfm(&job.out.join("T_hat.pfm"), &transmission)?;
    Ok(Separation { reflection, transmission, masked_columns })
}

/// Matches `src` to `reference` and writes PNG (8-bit) or PFM by extension.
pub fn run_histmatch(src: &Path, reference: &Path, out: &Path) -> Result<ImageF> {
    let matched = histogram_match(&io::read_image(src)?, &io::read_image(reference)?)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_out(parent)?;
    }
    let is_pfm = out.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("pfm"));
    if is_pfm {
        io::write_pfm(out, &matched)?;
    } else {
        io::write_png(out, &matched, BitDepth::Eight)?;
    }
    Ok(matched)
}
