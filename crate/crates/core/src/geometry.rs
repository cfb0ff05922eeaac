//! Parabolic semi-reflector cross-sections and the per-column angle of
//! incidence they induce.
//!
//! In the surface's local frame the cross-section is the parabola
//! `y = P_S.y + convexity * a * (x - P_S.x)^2` with its vertex at the surface
//! point `P_S`. A segment of length `l` (measured along x) centred on `P_S` is
//! mapped onto the image columns. For each column the angle of incidence is the
//! angle between the surface normal and the ray towards the camera `C`.
//! Curvature acts along the horizontal image axis only, so the field is
//! constant down each column.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Convexity {
    /// `+1`: `y = a x^2` is a convex function, opening towards `+y`.
    Convex,
    /// `-1`: the surface falls away from `+y` on both sides of the vertex.
    Concave,
}

impl Convexity {
    pub fn sign(self) -> f64 {
        match self {
            Convexity::Convex => 1.0,
            Convexity::Concave => -1.0,
        }
    }
}

impl TryFrom<i8> for Convexity {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Convexity::Convex),
            -1 => Ok(Convexity::Concave),
            _ => Err(format!("convexity must be +1 or -1, got {v}")),
        }
    }
}

impl From<Convexity> for i8 {
    fn from(c: Convexity) -> i8 {
        match c {
            Convexity::Convex => 1,
            Convexity::Concave => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceGeometry {
    /// Camera position in meters.
    pub camera: [f64; 2],
    /// Vertex of the parabola and centre of the imaged segment, meters.
    pub surface_point: [f64; 2],
    /// Horizontal extent of the imaged segment, meters.
    pub length: f64,
    pub convexity: Convexity,
    /// Quadratic coefficient of the parabola, 1/meters. Zero is a flat pane.
    pub curvature: f64,
}

impl SurfaceGeometry {
    pub fn flat(camera: [f64; 2], surface_point: [f64; 2], length: f64) -> Self {
        Self { camera, surface_point, length, convexity: Convexity::Convex, curvature: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.camera.iter().chain(&self.surface_point).all(|v| v.is_finite());
        if !finite || !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::invalid(format!("degenerate surface geometry {self:?}")));
        }
        if !(self.curvature >= 0.0 && self.curvature.is_finite()) {
            return Err(Error::invalid(format!("curvature must be >= 0, got {}", self.curvature)));
        }
        Ok(())
    }

    /// Offset from the vertex, along x, of the centre of column `col`.
    fn column_offset(&self, col: usize, width: usize) -> f64 {
        ((col as f64 + 0.5) / width as f64 - 0.5) * self.length
    }
}

/// Angle of incidence per image column, radians in `[0, pi/2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AoiField {
    theta: Vec<f64>,
}

impl AoiField {
    pub fn from_theta(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::invalid("AOI field needs at least one column"));
        }
        if let Some(t) = theta.iter().find(|t| !(0.0..FRAC_PI_2).contains(*t)) {
            return Err(Error::invalid(format!("angle of incidence {t} outside [0, pi/2)")));
        }
        Ok(Self { theta })
    }

    /// The same angle everywhere, as for a flat pane seen from infinity.
    pub fn uniform(width: usize, theta: f64) -> Result<Self> {
        Self::from_theta(vec![theta; width])
    }

    pub fn width(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn is_constant(&self) -> bool {
        self.theta.iter().all(|&t| t == self.theta[0])
    }

    pub fn range(&self) -> (f64, f64) {
        self.theta
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| (lo.min(t), hi.max(t)))
    }
}

impl TryFrom<Vec<f64>> for AoiField {
    type Error = Error;

    fn try_from(theta: Vec<f64>) -> Result<Self> {
        Self::from_theta(theta)
    }
}

impl From<AoiField> for Vec<f64> {
    fn from(f: AoiField) -> Vec<f64> {
        f.theta
    }
}

/// Samples the parabola at `width` column centres and returns the angle of
/// incidence of the camera ray at each.
///
/// Fails when the camera lies on the surface or behind the tangent plane at
/// any sample (grazing or back-facing incidence).
pub fn aoi_field(geom: &SurfaceGeometry, width: usize) -> Result<AoiField> {
    geom.validate()?;
    if width == 0 {
        return Err(Error::invalid("AOI field width must be >= 1"));
    }
    let k = geom.convexity.sign() * geom.curvature;
    let [cx, cy] = geom.camera;
    let [px, py] = geom.surface_point;
    let mut theta = Vec::with_capacity(width);
    for col in 0..width {
        let x = geom.column_offset(col, width);
        let (sx, sy) = (px + x, py + k * x * x);
        let (rx, ry) = (cx - sx, cy - sy);
        let ray_len = rx.hypot(ry);
        let (nx, ny) = (-2.0 * k * x, 1.0);
        let n_len = nx.hypot(ny);
        if ray_len == 0.0 {
            return Err(Error::invalid(format!("camera lies on the surface at column {col}")));
        }
        let cos = (rx * nx + ry * ny) / (ray_len * n_len);
        let t = cos.min(1.0).acos();
        if !(cos > 0.0) || t >= FRAC_PI_2 {
            return Err(Error::invalid(format!(
                "camera behind the tangent plane at column {col} (cos theta = {cos})"
            )));
        }
        theta.push(t);
    }
    Ok(AoiField { theta })
}

/// Intervals from which [`sample_surface`] draws geometries.
///
/// The surface point is the origin; the camera is placed at
/// `(lateral_offset, camera_distance)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryRanges {
    pub camera_distance: [f64; 2],
    pub lateral_offset: [f64; 2],
    pub segment_length: [f64; 2],
    /// Curvature is drawn log-uniformly from this interval when not flat.
    pub curvature: [f64; 2],
    pub flat_probability: f64,
    /// `None` draws the sign with a fair coin.
    pub convexity: Option<Convexity>,
    pub max_retries: u32,
}

impl Default for GeometryRanges {
    fn default() -> Self {
        Self {
            camera_distance: [0.5, 3.0],
            lateral_offset: [-2.0, 2.0],
            segment_length: [0.2, 2.0],
            curvature: [1e-4, 1.0],
            flat_probability: 0.3,
            convexity: None,
            max_retries: 1000,
        }
    }
}

impl GeometryRanges {
    pub fn validate(&self) -> Result<()> {
        let interval = |name: &str, [lo, hi]: [f64; 2], positive: bool| -> Result<()> {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) || (positive && lo <= 0.0) {
                return Err(Error::Config(format!("geometry range {name} = [{lo}, {hi}] is invalid")));
            }
            Ok(())
        };
        interval("camera_distance", self.camera_distance, true)?;
        interval("lateral_offset", self.lateral_offset, false)?;
        interval("segment_length", self.segment_length, true)?;
        interval("curvature", self.curvature, true)?;
        if !(0.0..=1.0).contains(&self.flat_probability) {
            return Err(Error::Config(format!(
                "flat_probability {} outside [0, 1]",
                self.flat_probability
            )));
        }
        if self.max_retries == 0 {
            return Err(Error::Config("max_retries must be positive".into()));
        }
        Ok(())
    }
}

pub(crate) fn uniform_in<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn draw_geometry<R: Rng + ?Sized>(rng: &mut R, ranges: &GeometryRanges) -> SurfaceGeometry {
    let flat = rng.random_bool(ranges.flat_probability);
    let [lo, hi] = ranges.curvature;
    let log_a = uniform_in(rng, [lo.ln(), hi.ln()]);
    let convexity = match ranges.convexity {
        Some(c) => c,
        None if rng.random_bool(0.5) => Convexity::Convex,
        None => Convexity::Concave,
    };
    let distance = uniform_in(rng, ranges.camera_distance);
    let offset = uniform_in(rng, ranges.lateral_offset);
    let length = uniform_in(rng, ranges.segment_length);
    SurfaceGeometry {
        camera: [offset, distance],
        surface_point: [0.0, 0.0],
        length,
        convexity,
        curvature: if flat { 0.0 } else { log_a.exp() },
    }
}

/// Draws a geometry whose AOI field over `width` columns is valid, retrying
/// up to `ranges.max_retries` times.
pub fn sample_surface<R: Rng + ?Sized>(
    rng: &mut R,
    ranges: &GeometryRanges,
    width: usize,
) -> Result<(SurfaceGeometry, AoiField)> {
    ranges.validate()?;
    for _ in 0..ranges.max_retries {
        let geom = draw_geometry(rng, ranges);
        if let Ok(field) = aoi_field(&geom, width) {
            return Ok((geom, field));
        }
    }
    Err(Error::Config(format!(
        "no valid surface geometry after {} attempts; check geometry ranges",
        ranges.max_retries
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{brewster, OpticalConfig};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flat_on_axis_centre_is_normal_incidence() {
        let g = SurfaceGeometry::flat([0.0, 1.5], [0.0, 0.0], 1.0);
        let f = aoi_field(&g, 33).unwrap();
        assert_eq!(f.theta()[16], 0.0);
    }

    #[test]
    fn flat_pane_matches_planar_trigonometry() {
        let d = 0.8;
        let g = SurfaceGeometry::flat([0.3, d], [0.3, 0.0], 1.2);
        let width = 50;
        let f = aoi_field(&g, width).unwrap();
        for (col, &t) in f.theta().iter().enumerate() {
            let x = ((col as f64 + 0.5) / width as f64 - 0.5) * 1.2;
            assert_abs_diff_eq!(t, (x.abs() / d).atan(), epsilon = 1e-12);
        }
    }

    #[test]
    fn flat_limit_is_continuous() {
        let flat = SurfaceGeometry::flat([0.4, 1.1], [0.0, 0.0], 1.5);
        let curved = SurfaceGeometry { curvature: 1e-12, convexity: Convexity::Concave, ..flat };
        let a = aoi_field(&flat, 64).unwrap();
        let b = aoi_field(&curved, 64).unwrap();
        for (x, y) in a.theta().iter().zip(b.theta()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-9);
        }
    }

    #[test]
    fn flat_on_axis_symmetry_and_monotonicity() {
        let g = SurfaceGeometry::flat([0.0, 0.7], [0.0, 0.0], 2.0);
        for width in [64, 65] {
            let t = aoi_field(&g, width).unwrap();
            let t = t.theta();
            for j in 0..width {
                assert_abs_diff_eq!(t[j], t[width - 1 - j], epsilon = 1e-12);
            }
            for j in 1..width / 2 {
                assert!(t[j - 1] > t[j], "theta must grow away from the centre");
            }
        }
    }

    #[test]
    fn back_facing_camera_is_rejected() {
        let below = SurfaceGeometry::flat([0.0, -1.0], [0.0, 0.0], 1.0);
        assert!(aoi_field(&below, 8).is_err());
        // the edges of a strongly curved segment fall behind a close camera
        let bump = SurfaceGeometry {
            camera: [0.0, 0.1],
            surface_point: [0.0, 0.0],
            length: 2.0,
            convexity: Convexity::Concave,
            curvature: 1.0,
        };
        assert!(aoi_field(&bump, 16).is_err());
        assert!(aoi_field(&SurfaceGeometry::flat([0.0, 1.0], [0.0, 0.0], 0.0), 8).is_err());
        assert!(aoi_field(&SurfaceGeometry::flat([0.0, 1.0], [0.0, 0.0], 1.0), 0).is_err());
    }

    #[test]
    fn pinned_ranges_give_one_geometry() {
        let ranges = GeometryRanges {
            camera_distance: [1.0, 1.0],
            lateral_offset: [0.25, 0.25],
            segment_length: [0.5, 0.5],
            curvature: [0.3, 0.3],
            flat_probability: 0.0,
            convexity: Some(Convexity::Concave),
            max_retries: 10,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (first, _) = sample_surface(&mut rng, &ranges, 32).unwrap();
        assert_eq!(first.camera, [0.25, 1.0]);
        assert_abs_diff_eq!(first.curvature, 0.3, epsilon = 1e-15);
        for _ in 0..20 {
            assert_eq!(sample_surface(&mut rng, &ranges, 32).unwrap().0, first);
        }
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let ranges = GeometryRanges::default();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| sample_surface(&mut rng, &ranges, 128).unwrap().0).collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn default_ranges_always_valid_and_reach_brewster() {
        let ranges = GeometryRanges::default();
        let tb = brewster(&OpticalConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut crossings = 0;
        for _ in 0..10_000 {
            let (_, field) = sample_surface(&mut rng, &ranges, 128).unwrap();
            assert!(field.theta().iter().all(|t| (0.0..FRAC_PI_2).contains(t)));
            let (lo, hi) = field.range();
            if lo < tb && tb < hi {
                crossings += 1;
            }
        }
        assert!(crossings > 0);
    }

    #[test]
    fn impossible_ranges_are_a_config_error() {
        let ranges = GeometryRanges {
            camera_distance: [0.01, 0.01],
            lateral_offset: [0.0, 0.0],
            segment_length: [2.0, 2.0],
            curvature: [1.0, 1.0],
            flat_probability: 0.0,
            convexity: Some(Convexity::Concave),
            max_retries: 20,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(sample_surface(&mut rng, &ranges, 16), Err(Error::Config(_))));
    }

    #[test]
    fn geometry_json_layout() {
        let g = SurfaceGeometry {
            camera: [0.5, 1.0],
            surface_point: [0.0, 0.0],
            length: 0.75,
            convexity: Convexity::Concave,
            curvature: 0.02,
        };
        let json = serde_json::to_value(g).unwrap();
        assert_eq!(json["convexity"], -1);
        assert_eq!(json["camera"], serde_json::json!([0.5, 1.0]));
        let back: SurfaceGeometry = serde_json::from_value(json).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<Convexity>("0").is_err());
    }

    #[test]
    fn uniform_field() {
        let f = AoiField::uniform(5, 0.9).unwrap();
        assert!(f.is_constant());
        assert!(AoiField::uniform(5, FRAC_PI_2).is_err());
        assert!(serde_json::from_str::<AoiField>("[0.1, 2.0]").is_err());
    }
}
