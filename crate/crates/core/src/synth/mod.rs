//! Image-based generation of polarized training samples.
//!
//! Two ordinary (gamma-compressed, low dynamic range) images play the
//! reflected and transmitted scenes. [`synthesize_sample`] runs, in order:
//!
//! 1. a random patch crop of each source;
//! 2. dynamic-range manipulation and, for some samples, threshold masking of
//!    one layer (stage DR);
//! 3. independent non-rigid deformations of the reflection for each of the
//!    three shots, for some samples (stage NRD);
//! 4. a parabolic surface and its per-column angle of incidence, or a single
//!    image-wide angle (stage LCG);
//! 5. rendering through a polarizer at three noisy angles spaced pi/4 apart,
//!    followed by 8-bit readout.
//!
//! Ground truth is the clipped, observable part of each layer. The same layers
//! drive the rendering, so without NRD the stored ground truth reproduces the
//! observations exactly.

mod config;
mod warp;

pub use config::{Stage, Stages, SynthConfig};
pub use warp::{nonrigid_warp, warp_with_grid, AnchorGrid};

use std::f64::consts::{FRAC_PI_4, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{sample_surface, uniform_in, AoiField, SurfaceGeometry};
use crate::imagecore::{clip_quantize, gamma_expand, BitDepth};
use crate::optics::observe;
use crate::{Error, ImageF, Result};

/// Version of the sample metadata layout.
pub const SAMPLE_SCHEMA: u32 = 1;

/// Three co-registered observations and the polarizer angles they were taken
/// at.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarStack {
    images: [ImageF; 3],
    angles: [f64; 3],
    nominal_phi0: f64,
}

impl PolarStack {
    pub fn new(images: [ImageF; 3], angles: [f64; 3], nominal_phi0: f64) -> Result<Self> {
        images[0].ensure_same_shape(&images[1], "polar stack observation 1")?;
        images[0].ensure_same_shape(&images[2], "polar stack observation 2")?;
        if angles.iter().chain([&nominal_phi0]).any(|a| !a.is_finite()) {
            return Err(Error::invalid("polarizer angles must be finite"));
        }
        Ok(Self { images, angles, nominal_phi0 })
    }

    /// Stack at the exact nominal angles `phi0 + i * pi/4`.
    pub fn nominal(images: [ImageF; 3], phi0: f64) -> Result<Self> {
        Self::new(images, nominal_angles(phi0), phi0)
    }

    pub fn images(&self) -> &[ImageF; 3] {
        &self.images
    }

    pub fn angles(&self) -> [f64; 3] {
        self.angles
    }

    pub fn nominal_phi0(&self) -> f64 {
        self.nominal_phi0
    }
}

pub fn nominal_angles(phi0: f64) -> [f64; 3] {
    [phi0, phi0 + FRAC_PI_4, phi0 + 2.0 * FRAC_PI_4]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Reflection,
    Transmission,
}

/// Every random quantity drawn while building one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub seed: u64,
    pub stages: Stages,
    pub crop_reflection: [usize; 2],
    pub crop_transmission: [usize; 2],
    pub beta: f64,
    pub gamma_exponent: f64,
    /// Layer zeroed below the mean-intensity threshold, if any.
    pub masked_layer: Option<Layer>,
    /// Anchor sigma in pixels when the shots were deformed.
    pub nrd_sigma: Option<f64>,
    pub geometry: Option<SurfaceGeometry>,
    /// Image-wide angle of incidence when no surface was generated.
    pub uniform_theta: Option<f64>,
    pub phi_perp: f64,
    pub nominal_phi0: f64,
    pub angles: [f64; 3],
}

/// One synthetic sample: observations, observable ground-truth layers and the
/// parameters that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub stack: PolarStack,
    pub reflection: ImageF,
    pub transmission: ImageF,
    pub phi_perp: f64,
    pub aoi: AoiField,
    pub provenance: Provenance,
}

/// Serialized form of a sample's metadata (`meta.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleMeta {
    pub schema: u32,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub phi_perp: f64,
    pub angles: [f64; 3],
    pub nominal_phi0: f64,
    pub aoi: AoiField,
    pub provenance: Provenance,
    /// Names of the source images, filled in by the dataset writer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<[String; 2]>,
}

impl SampleRecord {
    pub fn meta(&self) -> SampleMeta {
        SampleMeta {
            schema: SAMPLE_SCHEMA,
            width: self.reflection.width(),
            height: self.reflection.height(),
            channels: self.reflection.channels(),
            phi_perp: self.phi_perp,
            angles: self.stack.angles(),
            nominal_phi0: self.stack.nominal_phi0(),
            aoi: self.aoi.clone(),
            provenance: self.provenance.clone(),
            sources: None,
        }
    }
}

/// Boosts the reflection and attenuates the transmission after linearising
/// both: `(beta * R^e, T^e / beta)`.
pub fn dynamic_range(
    reflection: &ImageF,
    transmission: &ImageF,
    beta: f64,
    gamma_exponent: f64,
) -> Result<(ImageF, ImageF)> {
    if !(beta >= 1.0 && beta.is_finite()) {
        return Err(Error::invalid(format!("beta must be >= 1, got {beta}")));
    }
    let r = gamma_expand(reflection, gamma_exponent)?.map(|v| beta * v);
    let t = gamma_expand(transmission, gamma_exponent)?.map(|v| v / beta);
    Ok((r, t))
}

/// Zeroes `layer` wherever its channel mean falls below the image-wide mean
/// of `layer + other`.
pub fn threshold_mask(layer: &ImageF, other: &ImageF) -> Result<ImageF> {
    layer.ensure_same_shape(other, "threshold_mask")?;
    let n = layer.pixel_count();
    if n == 0 {
        return Ok(layer.clone());
    }
    let mut means = Vec::with_capacity(n);
    let mut total = 0.0;
    for y in 0..layer.height() {
        for x in 0..layer.width() {
            let m = layer.channel_mean(x, y);
            means.push(m);
            total += m + other.channel_mean(x, y);
        }
    }
    let threshold = total / n as f64;
    let ch = layer.channels();
    let data = layer
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| if means[i / ch] >= threshold { v } else { 0.0 })
        .collect();
    Ok(ImageF::from_raw(layer.width(), layer.height(), ch, data))
}

/// Nominal angles `phi0 + i * pi/4`, each perturbed independently by a uniform
/// offset within `+-noise_deg`.
pub fn perturb_angles<R: Rng + ?Sized>(phi0: f64, noise_deg: f64, rng: &mut R) -> Result<[f64; 3]> {
    if !(noise_deg >= 0.0 && noise_deg.is_finite()) {
        return Err(Error::invalid(format!("angle noise must be >= 0, got {noise_deg}")));
    }
    let bound = noise_deg.to_radians();
    let mut angles = nominal_angles(phi0);
    if bound > 0.0 {
        for a in &mut angles {
            *a += rng.random_range(-bound..=bound);
        }
    }
    Ok(angles)
}

/// Builds one sample from two source images. Identical `(sources, cfg, seed)`
/// always give a bit-identical record.
pub fn synthesize_sample(
    src_reflection: &ImageF,
    src_transmission: &ImageF,
    cfg: &SynthConfig,
    seed: u64,
) -> Result<SampleRecord> {
    cfg.validate()?;
    let p = cfg.patch_size;
    for (name, src) in [("reflection", src_reflection), ("transmission", src_transmission)] {
        if src.width() < p || src.height() < p {
            return Err(Error::invalid(format!(
                "{name} source {}x{} smaller than patch size {p}",
                src.width(),
                src.height()
            )));
        }
    }
    if src_reflection.channels() != src_transmission.channels() {
        return Err(Error::shape("sources differ in channel count"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stages = cfg.stages;

    let mut crop = |src: &ImageF| -> Result<(ImageF, [usize; 2])> {
        let x = rng.random_range(0..=src.width() - p);
        let y = rng.random_range(0..=src.height() - p);
        Ok((src.crop(x, y, p, p)?, [x, y]))
    };
    let (patch_r, crop_reflection) = crop(src_reflection)?;
    let (patch_t, crop_transmission) = crop(src_transmission)?;

    let beta = if stages.dr { uniform_in(&mut rng, [1.0, cfg.beta_max]) } else { 1.0 };
    let (mut layer_r, mut layer_t) = dynamic_range(&patch_r, &patch_t, beta, cfg.gamma_exponent)?;
    let mut masked_layer = None;
    if stages.dr && rng.random_bool(cfg.mask_probability) {
        if rng.random_bool(0.5) {
            layer_r = threshold_mask(&layer_r, &layer_t)?;
            masked_layer = Some(Layer::Reflection);
        } else {
            layer_t = threshold_mask(&layer_t, &layer_r)?;
            masked_layer = Some(Layer::Transmission);
        }
    }
    // stored as f32 on disk; round now so the files hold exactly what was rendered
    let reflection = layer_r.clip(0.0, 1.0).round_to_f32();
    let transmission = layer_t.clip(0.0, 1.0).round_to_f32();

    let mut shots_r = [reflection.clone(), reflection.clone(), reflection.clone()];
    let mut shots_t = [transmission.clone(), transmission.clone(), transmission.clone()];
    let mut nrd_sigma = None;
    if stages.nrd && rng.random_bool(cfg.nrd_probability) {
        let sigma = uniform_in(&mut rng, [0.0, cfg.nrd_sigma_max]);
        for shot in &mut shots_r {
            *shot = nonrigid_warp(&reflection, cfg.nrd_grid_spacing, sigma, &mut rng)?;
        }
        if cfg.nrd_warp_transmission {
            for shot in &mut shots_t {
                *shot = nonrigid_warp(&transmission, cfg.nrd_grid_spacing, sigma, &mut rng)?;
            }
        }
        nrd_sigma = Some(sigma);
    }

    let (geometry, uniform_theta, aoi) = if stages.lcg {
        let (geom, field) = sample_surface(&mut rng, &cfg.geometry_ranges, p)?;
        (Some(geom), None, field)
    } else {
        let theta = uniform_in(&mut rng, cfg.uniform_theta);
        (None, Some(theta), AoiField::uniform(p, theta)?)
    };

    let phi_perp = rng.random_range(-FRAC_PI_4..FRAC_PI_4);
    let nominal_phi0 = rng.random_range(0.0..PI);
    let angles = perturb_angles(nominal_phi0, cfg.angle_noise_deg, &mut rng)?;

    let mut observations = Vec::with_capacity(3);
    for i in 0..3 {
        let rendered = observe(&shots_r[i], &shots_t[i], &aoi, phi_perp, angles[i], &cfg.optics)?;
        observations.push(if cfg.quantize_observations {
            clip_quantize(&rendered, BitDepth::Eight)
        } else {
            rendered.clip(0.0, 1.0)
        });
    }
    let images: [ImageF; 3] = observations.try_into().expect("three observations");

    Ok(SampleRecord {
        stack: PolarStack::new(images, angles, nominal_phi0)?,
        reflection,
        transmission,
        phi_perp,
        aoi,
        provenance: Provenance {
            seed,
            stages,
            crop_reflection,
            crop_transmission,
            beta,
            gamma_exponent: cfg.gamma_exponent,
            masked_layer,
            nrd_sigma,
            geometry,
            uniform_theta,
            phi_perp,
            nominal_phi0,
            angles,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::mixing_alpha;
    use approx::assert_abs_diff_eq;

    fn source(seed: u64, w: usize, h: usize) -> ImageF {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (rng.random_range(0.02..0.2), rng.random_range(0.02..0.2));
        ImageF::from_fn(w, h, 3, |x, y, c| {
            0.5 + 0.45 * ((x as f64 * a + c as f64).sin() * (y as f64 * b).cos())
        })
    }

    #[test]
    fn dynamic_range_examples() {
        let x = source(1, 8, 8, );
        let (r, t) = dynamic_range(&x, &x, 1.0, 1.0).unwrap();
        assert_eq!(r, x);
        assert_eq!(t, x);
        let half = ImageF::filled(1, 1, 1, 0.5);
        let (r, _) = dynamic_range(&half, &half, 2.0, 2.2).unwrap();
        assert_abs_diff_eq!(r.data()[0], 0.4353, epsilon = 1e-4);
        assert!(dynamic_range(&half, &half, 0.99, 2.2).is_err());
    }

    #[test]
    fn dynamic_range_product_is_beta_free() {
        let r = source(2, 6, 5);
        let t = source(3, 6, 5);
        let (r1, t1) = dynamic_range(&r, &t, 1.3, 2.2).unwrap();
        let (r2, t2) = dynamic_range(&r, &t, 2.7, 2.2).unwrap();
        for i in 0..r.data().len() {
            assert_abs_diff_eq!(r1.data()[i] * t1.data()[i], r2.data()[i] * t2.data()[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn threshold_mask_examples() {
        let r = ImageF::new(2, 1, 1, vec![0.2, 1.4]).unwrap();
        let t = ImageF::new(2, 1, 1, vec![0.6, 0.2]).unwrap();
        assert_eq!(threshold_mask(&r, &t).unwrap().data(), &[0.0, 1.4]);
        let c = ImageF::filled(3, 3, 3, 0.4);
        assert!(threshold_mask(&c, &c).unwrap().data().iter().all(|&v| v == 0.0));
        let z = ImageF::zeros(3, 3, 3);
        assert_eq!(threshold_mask(&z, &c).unwrap(), z);
        assert!(threshold_mask(&z, &ImageF::zeros(3, 3, 1)).is_err());
    }

    #[test]
    fn angle_perturbation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let exact = perturb_angles(0.3, 0.0, &mut rng).unwrap();
        assert_eq!(exact, [0.3, 0.3 + FRAC_PI_4, 0.3 + 2.0 * FRAC_PI_4]);
        let bound = 4.0f64.to_radians();
        for _ in 0..100_000 {
            let a = perturb_angles(1.0, 4.0, &mut rng).unwrap();
            for (i, v) in a.iter().enumerate() {
                assert!((v - (1.0 + i as f64 * FRAC_PI_4)).abs() <= bound + 1e-15);
            }
        }
        let draw = |s| perturb_angles(0.1, 4.0, &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
        assert_eq!(draw(5), draw(5));
        assert!(perturb_angles(0.0, -1.0, &mut rng).is_err());
    }

    fn pinned_config() -> SynthConfig {
        SynthConfig {
            beta_max: 1.0,
            gamma_exponent: 1.0,
            angle_noise_deg: 0.0,
            uniform_theta: [0.7, 0.7],
            patch_size: 32,
            stages: Stages::NONE,
            ..Default::default()
        }
    }

    #[test]
    fn single_term_rendering_when_transmission_is_black() {
        let cfg = pinned_config();
        let src_r = source(4, 48, 40);
        let src_t = ImageF::zeros(40, 48, 3);
        let rec = synthesize_sample(&src_r, &src_t, &cfg, 11).unwrap();
        let [cx, cy] = rec.provenance.crop_reflection;
        let patch = src_r.crop(cx, cy, 32, 32).unwrap();
        for (i, obs) in rec.stack.images().iter().enumerate() {
            let a = mixing_alpha(0.7, rec.phi_perp, rec.stack.angles()[i], &cfg.optics).unwrap();
            let expected = clip_quantize(&patch.map(|v| a * (v as f32 as f64) / 2.0), BitDepth::Eight);
            assert_eq!(obs, &expected);
        }
    }

    #[test]
    fn deterministic_records() {
        let cfg = SynthConfig { patch_size: 48, nrd_probability: 1.0, mask_probability: 1.0, ..Default::default() };
        let (r, t) = (source(5, 64, 64), source(6, 70, 60));
        let a = synthesize_sample(&r, &t, &cfg, 42).unwrap();
        assert_eq!(a, synthesize_sample(&r, &t, &cfg, 42).unwrap());
        assert_ne!(a, synthesize_sample(&r, &t, &cfg, 43).unwrap());
    }

    #[test]
    fn stored_layers_reproduce_observations_without_nrd() {
        let cfg = SynthConfig { patch_size: 32, stages: "dr,lcg".parse().unwrap(), ..Default::default() };
        let (r, t) = (source(7, 64, 64), source(8, 64, 64));
        for seed in 0..40 {
            let rec = synthesize_sample(&r, &t, &cfg, seed).unwrap();
            assert!(rec.provenance.nrd_sigma.is_none());
            for (i, obs) in rec.stack.images().iter().enumerate() {
                let again = observe(&rec.reflection, &rec.transmission, &rec.aoi, rec.phi_perp, rec.stack.angles()[i], &cfg.optics)
                    .unwrap();
                assert_eq!(obs, &clip_quantize(&again, BitDepth::Eight));
            }
        }
    }

    #[test]
    fn records_stay_in_unit_range_and_meta_roundtrips() {
        let cfg = SynthConfig { patch_size: 32, nrd_probability: 1.0, mask_probability: 0.5, ..Default::default() };
        let (r, t) = (source(9, 40, 50), source(10, 50, 40));
        for seed in 0..30 {
            let rec = synthesize_sample(&r, &t, &cfg, seed).unwrap();
            let in_unit = |img: &ImageF| img.data().iter().all(|v| (0.0..=1.0).contains(v));
            assert!(rec.stack.images().iter().all(in_unit));
            assert!(in_unit(&rec.reflection) && in_unit(&rec.transmission));
            let meta = rec.meta();
            let json = serde_json::to_string(&meta).unwrap();
            assert_eq!(serde_json::from_str::<SampleMeta>(&json).unwrap(), meta);
        }
    }

    #[test]
    fn undersized_sources_are_rejected() {
        let cfg = SynthConfig { patch_size: 32, ..Default::default() };
        let small = source(11, 31, 64);
        let ok = source(12, 64, 64);
        assert!(matches!(synthesize_sample(&small, &ok, &cfg, 0), Err(Error::InvalidInput(_))));
        assert!(synthesize_sample(&ok, &small, &cfg, 0).is_err());
    }

    #[test]
    fn beta_is_uniform() {
        // Kolmogorov-Smirnov against U[1, 2.8] at the 1% level
        let cfg = SynthConfig { patch_size: 16, stages: "dr".parse().unwrap(), ..Default::default() };
        let (r, t) = (source(13, 16, 16), source(14, 16, 16));
        let mut betas: Vec<f64> = (0..2000)
            .map(|s| synthesize_sample(&r, &t, &cfg, s).unwrap().provenance.beta)
            .collect();
        betas.sort_by(f64::total_cmp);
        let n = betas.len() as f64;
        let d = betas
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let f = (b - 1.0) / 1.8;
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 1.63 / n.sqrt(), "KS statistic {d}");
        assert!(betas.iter().all(|b| (1.0..=2.8).contains(b)));
    }

    #[test]
    fn ablation_regimes_all_produce_records() {
        let (r, t) = (source(15, 40, 40), source(16, 40, 40));
        for stages in ["dr", "dr,nrd", "dr,nrd,lcg"] {
            let cfg = SynthConfig { patch_size: 32, stages: stages.parse().unwrap(), ..Default::default() };
            for seed in 0..10 {
                let rec = synthesize_sample(&r, &t, &cfg, seed).unwrap();
                assert_eq!(rec.provenance.geometry.is_some(), stages.contains("lcg"));
                if !stages.contains("nrd") {
                    assert!(rec.provenance.nrd_sigma.is_none());
                }
            }
        }
    }
}
