//! Fresnel reflectance of a single air/glass interface and the forward model of
//! an observation taken through a linear polarizer.
//!
//! For a pixel whose light meets the surface at angle of incidence `theta`, a
//! polarizer at angle `phi` records
//!
//! ```text
//! I_phi = alpha * I_R / 2 + (1 - alpha) * I_T / 2
//! alpha = r_s(theta) cos^2(phi - phi_perp) + r_p(theta) sin^2(phi - phi_perp)
//! ```
//!
//! The transmittances of a lossless interface are `1 - r_s` and `1 - r_p`, so
//! the complementary weight `1 - alpha` is exact rather than approximate.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::geometry::AoiField;
use crate::{Error, ImageF, Result};

/// Refractive indices on either side of the semi-reflector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpticalConfig {
    pub n1: f64,
    pub n2: f64,
}

impl Default for OpticalConfig {
    fn default() -> Self {
        Self { n1: 1.0, n2: 1.5 }
    }
}

impl OpticalConfig {
    pub fn new(n1: f64, n2: f64) -> Result<Self> {
        let cfg = Self { n1, n2 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n1 >= 1.0 && self.n2 > self.n1 && self.n2.is_finite()) {
            return Err(Error::Config(format!(
                "refractive indices must satisfy n2 > n1 >= 1 (n1 = {}, n2 = {})",
                self.n1, self.n2
            )));
        }
        Ok(())
    }
}

/// Power reflectances for s- and p-polarized light at one angle of incidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FresnelCoeffs {
    pub r_s: f64,
    pub r_p: f64,
    pub theta: f64,
}

impl FresnelCoeffs {
    /// Reflectance for unpolarized illumination.
    pub fn unpolarized(&self) -> f64 {
        0.5 * (self.r_s + self.r_p)
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(0.0..FRAC_PI_2).contains(&theta) {
        return Err(Error::invalid(format!("angle of incidence {theta} outside [0, pi/2)")));
    }
    Ok(())
}

pub fn fresnel(theta: f64, cfg: &OpticalConfig) -> Result<FresnelCoeffs> {
    check_theta(theta)?;
    Ok(fresnel_unchecked(theta, cfg))
}

pub(crate) fn fresnel_unchecked(theta: f64, cfg: &OpticalConfig) -> FresnelCoeffs {
    let (n1, n2) = (cfg.n1, cfg.n2);
    let cos_i = theta.cos();
    let sin_t = n1 / n2 * theta.sin();
    let cos_t = (1.0 - sin_t * sin_t).sqrt();
    let rs_amp = (n1 * cos_i - n2 * cos_t) / (n1 * cos_i + n2 * cos_t);
    let rp_amp = (n1 * cos_t - n2 * cos_i) / (n1 * cos_t + n2 * cos_i);
    FresnelCoeffs { r_s: rs_amp * rs_amp, r_p: rp_amp * rp_amp, theta }
}

/// Angle of incidence at which p-polarized reflectance vanishes.
pub fn brewster(cfg: &OpticalConfig) -> f64 {
    (cfg.n2 / cfg.n1).atan()
}

/// Fraction of the observation attributed to the reflected layer.
pub fn mixing_alpha(theta: f64, phi_perp: f64, phi: f64, cfg: &OpticalConfig) -> Result<f64> {
    let f = fresnel(theta, cfg)?;
    Ok(alpha_from(&f, phi - phi_perp))
}

#[inline]
fn alpha_from(f: &FresnelCoeffs, delta: f64) -> f64 {
    let (s, c) = delta.sin_cos();
    f.r_s * c * c + f.r_p * s * s
}

/// Renders the observation through a polarizer at `phi`.
///
/// `aoi` supplies the angle of incidence per image column; `phi_perp` is the
/// s-direction for the whole image. The result is unclipped.
pub fn observe(
    reflection: &ImageF,
    transmission: &ImageF,
    aoi: &AoiField,
    phi_perp: f64,
    phi: f64,
    cfg: &OpticalConfig,
) -> Result<ImageF> {
    reflection.ensure_same_shape(transmission, "observe: reflection vs transmission")?;
    if aoi.width() != reflection.width() {
        return Err(Error::shape(format!(
            "observe: AOI field has {} columns, image has {}",
            aoi.width(),
            reflection.width()
        )));
    }
    let alphas = aoi
        .theta()
        .iter()
        .map(|&t| fresnel(t, cfg).map(|f| alpha_from(&f, phi - phi_perp)))
        .collect::<Result<Vec<_>>>()?;
    let (w, ch) = (reflection.width(), reflection.channels());
    let data = reflection
        .data()
        .iter()
        .zip(transmission.data())
        .enumerate()
        .map(|(i, (&r, &t))| {
            let a = alphas[(i / ch) % w];
            a * r / 2.0 + (1.0 - a) * t / 2.0
        })
        .collect();
    Ok(ImageF::from_raw(w, reflection.height(), ch, data))
}

/// Intensity seen through a polarizer at `phi` given the canonical images and
/// a per-pixel s-direction field.
pub fn malus_project(i_perp: &ImageF, i_par: &ImageF, phi_perp: &ImageF, phi: f64) -> Result<ImageF> {
    i_perp.ensure_same_shape(i_par, "malus_project: i_perp vs i_par")?;
    if phi_perp.channels() != 1 {
        return Err(Error::shape("malus_project: phi_perp field must be single-channel"));
    }
    i_perp.ensure_same_size(phi_perp, "malus_project: phi_perp field")?;
    let ch = i_perp.channels();
    let data = i_perp
        .data()
        .iter()
        .zip(i_par.data())
        .enumerate()
        .map(|(i, (&p, &q))| {
            let (s, c) = (phi - phi_perp.data()[i / ch]).sin_cos();
            p * c * c + q * s * s
        })
        .collect();
    Ok(ImageF::from_raw(i_perp.width(), i_perp.height(), ch, data))
}
