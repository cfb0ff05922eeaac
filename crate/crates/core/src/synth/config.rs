use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::GeometryRanges;
use crate::optics::OpticalConfig;
use crate::{Error, Result};

/// One of the three optional synthesis stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Dynamic-range manipulation and threshold masking.
    Dr,
    /// Non-rigid deformation between the three shots.
    Nrd,
    /// Local curvature generation (parabolic surface, per-column AOI).
    Lcg,
}

impl Stage {
    fn name(self) -> &'static str {
        match self {
            Stage::Dr => "dr",
            Stage::Nrd => "nrd",
            Stage::Lcg => "lcg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Stage>", into = "Vec<Stage>")]
pub struct Stages {
    pub dr: bool,
    pub nrd: bool,
    pub lcg: bool,
}

impl Stages {
    pub const ALL: Stages = Stages { dr: true, nrd: true, lcg: true };
    pub const NONE: Stages = Stages { dr: false, nrd: false, lcg: false };

    pub fn contains(&self, stage: Stage) -> bool {
        match stage {
            Stage::Dr => self.dr,
            Stage::Nrd => self.nrd,
            Stage::Lcg => self.lcg,
        }
    }

    fn list(&self) -> Vec<Stage> {
        [Stage::Dr, Stage::Nrd, Stage::Lcg].into_iter().filter(|s| self.contains(*s)).collect()
    }
}

impl Default for Stages {
    fn default() -> Self {
        Stages::ALL
    }
}

impl TryFrom<Vec<Stage>> for Stages {
    type Error = String;

    fn try_from(list: Vec<Stage>) -> std::result::Result<Self, String> {
        let mut out = Stages::NONE;
        for s in list {
            let slot = match s {
                Stage::Dr => &mut out.dr,
                Stage::Nrd => &mut out.nrd,
                Stage::Lcg => &mut out.lcg,
            };
            if *slot {
                return Err(format!("stage {} listed twice", s.name()));
            }
            *slot = true;
        }
        Ok(out)
    }
}

impl From<Stages> for Vec<Stage> {
    fn from(s: Stages) -> Vec<Stage> {
        s.list()
    }
}

impl FromStr for Stages {
    type Err = Error;

    /// Parses a comma separated list such as `dr,nrd,lcg`; `none` or an empty
    /// string disables every stage.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("none") {
            return Ok(Stages::NONE);
        }
        let list = s
            .split(',')
            .map(|part| match part.trim().to_ascii_lowercase().as_str() {
                "dr" => Ok(Stage::Dr),
                "nrd" => Ok(Stage::Nrd),
                "lcg" => Ok(Stage::Lcg),
                other => Err(Error::Config(format!("unknown stage {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Stages::try_from(list).map_err(Error::Config)
    }
}

impl fmt::Display for Stages {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.list().into_iter().map(Stage::name).collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join(","))
        }
    }
}

/// Parameters of the synthetic data pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Upper bound K of the dynamic-range factor beta ~ U[1, K].
    pub beta_max: f64,
    /// Exponent applied to the gamma-compressed sources to linearise them.
    pub gamma_exponent: f64,
    pub mask_probability: f64,
    pub nrd_probability: f64,
    /// Anchor displacement sigma is drawn from U[0, nrd_sigma_max] per patch.
    pub nrd_sigma_max: f64,
    pub nrd_grid_spacing: usize,
    /// Also deform the transmission layer between shots.
    pub nrd_warp_transmission: bool,
    /// Polarizer angles are perturbed uniformly within +-angle_noise_deg.
    pub angle_noise_deg: f64,
    pub optics: OpticalConfig,
    pub geometry_ranges: GeometryRanges,
    /// Interval for the image-wide angle of incidence when LCG is disabled.
    pub uniform_theta: [f64; 2],
    pub patch_size: usize,
    pub stages: Stages,
    /// 8-bit readout of the observations. Off keeps the float rendering.
    pub quantize_observations: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            beta_max: 2.8,
            gamma_exponent: 2.2,
            mask_probability: 0.3,
            nrd_probability: 0.5,
            nrd_sigma_max: 4.0,
            nrd_grid_spacing: 16,
            nrd_warp_transmission: false,
            angle_noise_deg: 4.0,
            optics: OpticalConfig::default(),
            geometry_ranges: GeometryRanges::default(),
            uniform_theta: [0.1, 1.4],
            patch_size: 128,
            stages: Stages::ALL,
            quantize_observations: true,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.beta_max >= 1.0 && self.beta_max.is_finite()) {
            return bad(format!("beta_max must be >= 1, got {}", self.beta_max));
        }
        if !(self.gamma_exponent > 0.0 && self.gamma_exponent.is_finite()) {
            return bad(format!("gamma_exponent must be positive, got {}", self.gamma_exponent));
        }
        for (name, p) in [("mask_probability", self.mask_probability), ("nrd_probability", self.nrd_probability)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} {p} outside [0, 1]"));
            }
        }
        if !(self.nrd_sigma_max >= 0.0 && self.nrd_sigma_max.is_finite()) {
            return bad(format!("nrd_sigma_max must be >= 0, got {}", self.nrd_sigma_max));
        }
        if self.nrd_grid_spacing < 2 {
            return bad(format!("nrd_grid_spacing must be >= 2, got {}", self.nrd_grid_spacing));
        }
        if !(self.angle_noise_deg >= 0.0 && self.angle_noise_deg.is_finite()) {
            return bad(format!("angle_noise_deg must be >= 0, got {}", self.angle_noise_deg));
        }
        let [lo, hi] = self.uniform_theta;
        if !(0.0 <= lo && lo <= hi && hi < FRAC_PI_2) {
            return bad(format!("uniform_theta [{lo}, {hi}] must lie in [0, pi/2)"));
        }
        if self.patch_size < 16 {
            return bad(format!("patch_size must be >= 16, got {}", self.patch_size));
        }
        self.optics.validate()?;
        self.geometry_ranges.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stages_parse_and_print() {
        assert_eq!("dr".parse::<Stages>().unwrap(), Stages { dr: true, nrd: false, lcg: false });
        assert_eq!("dr,nrd,lcg".parse::<Stages>().unwrap(), Stages::ALL);
        assert_eq!("none".parse::<Stages>().unwrap(), Stages::NONE);
        assert!("dr,dr".parse::<Stages>().is_err());
        assert!("dr,xyz".parse::<Stages>().is_err());
        assert_eq!(Stages::ALL.to_string(), "dr,nrd,lcg");
        assert_eq!(serde_json::to_string(&Stages::ALL).unwrap(), r#"["dr","nrd","lcg"]"#);
    }

    #[test]
    fn config_is_schema_strict() {
        let ok: SynthConfig = serde_json::from_str(r#"{"beta_max": 2.0}"#).unwrap();
        assert_eq!(ok.beta_max, 2.0);
        assert_eq!(ok.patch_size, 128);
        assert!(serde_json::from_str::<SynthConfig>(r#"{"beta_mx": 2.0}"#).is_err());
        assert!(serde_json::from_str::<SynthConfig>(r#"{"optics": {"n3": 2.0}}"#).is_err());
    }

    #[test]
    fn validation() {
        assert!(SynthConfig::default().validate().is_ok());
        for cfg in [
            SynthConfig { beta_max: 0.5, ..Default::default() },
            SynthConfig { mask_probability: 1.5, ..Default::default() },
            SynthConfig { patch_size: 8, ..Default::default() },
            SynthConfig { nrd_grid_spacing: 1, ..Default::default() },
            SynthConfig { uniform_theta: [0.2, 1.6], ..Default::default() },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        }
    }
}
