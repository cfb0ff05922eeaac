//! Inversion of the polarization model.
//!
//! Per pixel, an observation through a polarizer at `phi` is
//! `I(phi) = I_perp cos^2(phi - phi_perp) + I_par sin^2(phi - phi_perp)`,
//! equivalently `S/2 + A cos(2(phi - phi_perp))` with `S = I_perp + I_par` and
//! `A = (I_perp - I_par)/2`. Three shots determine `S`, `A` and `phi_perp`.
//!
//! The triple `(I_perp, I_par, phi_perp)` and `(I_par, I_perp, phi_perp +- pi/2)`
//! describe the same measurements; we always report `phi_perp` in
//! `[-pi/4, pi/4)`, which makes the solution unique.
//!
//! Colour images share one `phi_perp` per pixel. Each channel contributes a
//! modulation vector `A_c (cos 2phi_perp, sin 2phi_perp)` whose sign follows
//! that channel's polarization, so the shared direction is the principal axis
//! of the channel vectors, and each channel's signed amplitude is its
//! projection onto that axis.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use crate::geometry::AoiField;
use crate::optics::{fresnel, OpticalConfig};
use crate::synth::PolarStack;
use crate::{Error, ImageF, Result};

/// Minimum `|r_s - r_p|` for the closed-form separation.
pub const CONDITION_EPSILON: f64 = 1e-3;

/// Below this polarization amplitude the phase is undefined.
const PHASE_EPSILON: f64 = 1e-12;

const SPACING_TOLERANCE: f64 = 1e-12;

/// Canonical projections of a polarization stack.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalPair {
    pub i_perp: ImageF,
    pub i_par: ImageF,
    /// Single channel, radians in `[-pi/4, pi/4)`.
    pub phi_perp: ImageF,
    /// Pixels without measurable polarization, where `phi_perp` was set to 0.
    pub undefined_phase: Vec<bool>,
}

impl CanonicalPair {
    pub fn new(i_perp: ImageF, i_par: ImageF, phi_perp: ImageF) -> Result<Self> {
        i_perp.ensure_same_shape(&i_par, "canonical pair")?;
        if phi_perp.channels() != 1 {
            return Err(Error::shape("phi_perp field must be single-channel"));
        }
        i_perp.ensure_same_size(&phi_perp, "canonical phi_perp field")?;
        let undefined_phase = vec![false; i_perp.pixel_count()];
        Ok(Self { i_perp, i_par, phi_perp, undefined_phase })
    }
}

/// Network-style residual predictions blended with the canonical images.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualFields {
    pub r_tilde: ImageF,
    pub t_tilde: ImageF,
    pub xi_perp: ImageF,
    pub xi_par: ImageF,
}

impl ResidualFields {
    /// Validates shapes and clamps both weight maps to `[0, 1]`.
    pub fn new(r_tilde: ImageF, t_tilde: ImageF, xi_perp: ImageF, xi_par: ImageF) -> Result<Self> {
        r_tilde.ensure_same_shape(&t_tilde, "residual images")?;
        for (name, xi) in [("xi_perp", &xi_perp), ("xi_par", &xi_par)] {
            if xi.channels() != 1 {
                return Err(Error::shape(format!("{name} must be single-channel")));
            }
            r_tilde.ensure_same_size(xi, name)?;
        }
        Ok(Self {
            r_tilde,
            t_tilde,
            xi_perp: xi_perp.clip(0.0, 1.0),
            xi_par: xi_par.clip(0.0, 1.0),
        })
    }
}

fn reduce_phase(phi: f64) -> f64 {
    let mut r = (phi + FRAC_PI_4).rem_euclid(FRAC_PI_2) - FRAC_PI_4;
    if r >= FRAC_PI_4 {
        r -= FRAC_PI_2;
    }
    if r < -FRAC_PI_4 {
        r += FRAC_PI_2;
    }
    r
}

fn is_nominal_spacing(angles: [f64; 3]) -> bool {
    (angles[1] - angles[0] - FRAC_PI_4).abs() <= SPACING_TOLERANCE
        && (angles[2] - angles[0] - FRAC_PI_2).abs() <= SPACING_TOLERANCE
}

/// Inverse of the 3x3 design matrix with rows `[1, cos 2phi_i, sin 2phi_i]`.
fn design_inverse(angles: [f64; 3]) -> Result<[[f64; 3]; 3]> {
    let m: Vec<[f64; 3]> = angles.iter().map(|a| [1.0, (2.0 * a).cos(), (2.0 * a).sin()]).collect();
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let det = m[0][0] * cof(1, 2, 1, 2) - m[0][1] * cof(1, 2, 0, 2) + m[0][2] * cof(1, 2, 0, 1);
    if det.abs() < 1e-9 {
        return Err(Error::invalid(format!(
            "polarizer angles {angles:?} do not determine the canonical images"
        )));
    }
    let adj = [
        [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
        [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
        [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
    ];
    Ok(adj.map(|row| row.map(|v| v / det)))
}

/// Projects three polarizer observations onto the canonical directions.
///
/// With exact `pi/4` spacing the closed form below is used; otherwise the
/// same three-unknown system is solved with the realized angles. Negative
/// canonical values, which quantization can produce, are clamped to zero.
pub fn canonical_solve(stack: &PolarStack) -> Result<CanonicalPair> {
    let [i0, i1, i2] = stack.images();
    let angles = stack.angles();
    let (w, h, ch) = (i0.width(), i0.height(), i0.channels());
    let n = w * h;

    let mut i_perp = Vec::with_capacity(n * ch);
    let mut i_par = Vec::with_capacity(n * ch);
    let mut phi = Vec::with_capacity(n);
    let mut undefined = Vec::with_capacity(n);

    // per channel: mean level and the (cos, sin) components of the
    // modulation in a per-pixel reference frame
    let mut mean = vec![0.0; ch];
    let mut cos_part = vec![0.0; ch];
    let mut sin_part = vec![0.0; ch];

    enum Mode {
        Nominal(f64),
        General([[f64; 3]; 3]),
    }
    let mode = if is_nominal_spacing(angles) {
        Mode::Nominal(angles[0])
    } else {
        Mode::General(design_inverse(angles)?)
    };

    for p in 0..n {
        let base = p * ch;
        for c in 0..ch {
            let (v0, v1, v2) = (i0.data()[base + c], i1.data()[base + c], i2.data()[base + c]);
            match &mode {
                Mode::Nominal(_) => {
                    let half_sum = (v0 + v2) / 2.0;
                    mean[c] = half_sum;
                    // A cos(2(phi0 - phi_perp)) and A sin(2(phi0 - phi_perp))
                    cos_part[c] = v0 - half_sum;
                    sin_part[c] = half_sum - v1;
                }
                Mode::General(inv) => {
                    let solve = |row: &[f64; 3]| row[0] * v0 + row[1] * v1 + row[2] * v2;
                    mean[c] = solve(&inv[0]);
                    // A cos(2 phi_perp) and A sin(2 phi_perp)
                    cos_part[c] = solve(&inv[1]);
                    sin_part[c] = solve(&inv[2]);
                }
            }
        }
        // the channel vectors are collinear with signed lengths; take their
        // principal axis so opposite-signed channels reinforce each other
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for (x, y) in cos_part.iter().zip(&sin_part) {
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
        }
        let flat = (sxx + syy).sqrt() <= PHASE_EPSILON;
        let axis = (2.0 * sxy).atan2(sxx - syy) / 2.0;
        let phi_perp = if flat {
            0.0
        } else {
            match &mode {
                Mode::Nominal(phi0) => reduce_phase(phi0 - axis / 2.0),
                Mode::General(_) => reduce_phase(axis / 2.0),
            }
        };
        // unit direction of the shared phase in the same frame as the parts
        let dir = match &mode {
            Mode::Nominal(phi0) => 2.0 * (phi0 - phi_perp),
            Mode::General(_) => 2.0 * phi_perp,
        };
        let (ds, dc) = dir.sin_cos();
        for c in 0..ch {
            let amp = cos_part[c] * dc + sin_part[c] * ds;
            i_perp.push((mean[c] + amp).max(0.0));
            i_par.push((mean[c] - amp).max(0.0));
        }
        phi.push(phi_perp);
        undefined.push(flat);
    }

    Ok(CanonicalPair {
        i_perp: ImageF::from_raw(w, h, ch, i_perp),
        i_par: ImageF::from_raw(w, h, ch, i_par),
        phi_perp: ImageF::from_raw(w, h, 1, phi),
        undefined_phase: undefined,
    })
}

#[inline]
fn convex_blend(weight: f64, residual: f64, canonical: f64) -> f64 {
    let v = weight * residual + (1.0 - weight) * canonical;
    // rounding must not leave the segment between the two inputs
    v.clamp(residual.min(canonical), residual.max(canonical))
}

/// `R = xi_perp R~ + (1 - xi_perp) I_perp` and
/// `T = xi_par T~ + (1 - xi_par) I_par`, per pixel.
pub fn combine_residuals(canon: &CanonicalPair, res: &ResidualFields) -> Result<(ImageF, ImageF)> {
    canon.i_perp.ensure_same_shape(&res.r_tilde, "combine_residuals")?;
    let ch = canon.i_perp.channels();
    let blend = |xi: &ImageF, residual: &ImageF, canonical: &ImageF| {
        let data = residual
            .data()
            .iter()
            .zip(canonical.data())
            .enumerate()
            .map(|(i, (&r, &c))| convex_blend(xi.data()[i / ch], r, c))
            .collect();
        ImageF::from_raw(residual.width(), residual.height(), ch, data)
    };
    Ok((
        blend(&res.xi_perp, &res.r_tilde, &canon.i_perp),
        blend(&res.xi_par, &res.t_tilde, &canon.i_par),
    ))
}

fn separate_columns(
    canon: &CanonicalPair,
    aoi: &AoiField,
    cfg: &OpticalConfig,
) -> Result<(ImageF, ImageF, Vec<usize>)> {
    let (w, h, ch) = (canon.i_perp.width(), canon.i_perp.height(), canon.i_perp.channels());
    if aoi.width() != w {
        return Err(Error::shape(format!("AOI field has {} columns, image has {w}", aoi.width())));
    }
    let coeffs = aoi.theta().iter().map(|&t| fresnel(t, cfg)).collect::<Result<Vec<_>>>()?;
    let singular: Vec<usize> = coeffs
        .iter()
        .enumerate()
        .filter(|(_, f)| (f.r_s - f.r_p).abs() < CONDITION_EPSILON)
        .map(|(i, _)| i)
        .collect();

    let mut r_out = Vec::with_capacity(w * h * ch);
    let mut t_out = Vec::with_capacity(w * h * ch);
    for (i, (&perp, &par)) in canon.i_perp.data().iter().zip(canon.i_par.data()).enumerate() {
        let f = &coeffs[(i / ch) % w];
        let det = f.r_s - f.r_p;
        if det.abs() < CONDITION_EPSILON {
            r_out.push(0.0);
            t_out.push(0.0);
            continue;
        }
        let reflection = 2.0 * ((1.0 - f.r_p) * perp - (1.0 - f.r_s) * par) / det;
        let transmission = 2.0 * (f.r_s * par - f.r_p * perp) / det;
        r_out.push(reflection.clamp(0.0, 1.0));
        t_out.push(transmission.clamp(0.0, 1.0));
    }
    Ok((ImageF::from_raw(w, h, ch, r_out), ImageF::from_raw(w, h, ch, t_out), singular))
}

/// Closed-form layer separation given the angle of incidence per column.
///
/// Solves the 2x2 system relating the canonical images to the reflected and
/// transmitted layers through `r_s` and `r_p`. Fails with
/// [`Error::Singular`] naming every column where `|r_s - r_p|` is below
/// [`CONDITION_EPSILON`].
pub fn fresnel_inverse_separate(
    canon: &CanonicalPair,
    aoi: &AoiField,
    cfg: &OpticalConfig,
) -> Result<(ImageF, ImageF)> {
    let (r, t, singular) = separate_columns(canon, aoi, cfg)?;
    if !singular.is_empty() {
        return Err(Error::Singular { columns: singular });
    }
    Ok((r, t))
}

/// As [`fresnel_inverse_separate`], but ill-conditioned columns are set to
/// zero and reported instead of failing.
pub fn fresnel_inverse_separate_masked(
    canon: &CanonicalPair,
    aoi: &AoiField,
    cfg: &OpticalConfig,
) -> Result<(ImageF, ImageF, Vec<usize>)> {
    separate_columns(canon, aoi, cfg)
}

/// Geometry-free estimate `R = 2 (I_perp - I_par)`, `T = 2 I_par`, clipped.
///
/// This is the Brewster-angle inverse without the `1/r_s` scale on the
/// reflection, so it is qualitative for the reflection layer.
pub fn canonical_baseline_separate(canon: &CanonicalPair) -> (ImageF, ImageF) {
    let r = canon
        .i_perp
        .zip_map(&canon.i_par, |p, q| (2.0 * (p - q)).clamp(0.0, 1.0))
        .expect("canonical pair shapes are validated");
    let t = canon.i_par.map(|q| (2.0 * q).clamp(0.0, 1.0));
    (r, t)
}
