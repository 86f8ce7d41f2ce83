//! TOML run configuration.
//!
//! Every table and field is optional; missing values take the defaults
//! below. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Scheme;
use crate::channel::GainPattern;
use crate::error::{Error, Result};
use crate::fast_opt::PddConfig;
use crate::localization::LocalizationConfig;
use crate::slow_opt::PsoConfig;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Number of BS subarrays `B`.
    pub subarrays: usize,
    /// Antennas per subarray `N`.
    pub antennas_per_subarray: usize,
    pub users: usize,
    /// Side `A` of the cube holding the subarray centres, meters.
    pub cube_side: f64,
    /// Users are uniform over the spherical shell `[r_min, r_max]`, meters.
    pub r_min: f64,
    pub r_max: f64,
    pub carrier_ghz: f64,
    /// BS transmit power budget, relative to the reference power of
    /// `snr_db`.
    pub zeta: f64,
    /// Receive SNR of a unit-power isotropic link at `r_max`; fixes the
    /// noise power.
    pub snr_db: f64,
    pub amp_bits: u32,
    pub phase_bits: u32,
    /// Minimum subarray spacing; defaults to `(sqrt(2)/2 + 1/2) lambda`.
    pub d_min: Option<f64>,
    /// Channel coherence intervals evaluated per location interval.
    pub coherence_intervals: usize,
    /// Rate weights; all ones when absent.
    pub weights: Option<Vec<f64>>,
    pub gain: GainPattern,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            subarrays: 16,
            antennas_per_subarray: 4,
            users: 30,
            cube_side: 1.0,
            r_min: 20.0,
            r_max: 200.0,
            carrier_ghz: 24.0,
            zeta: 1.0,
            snr_db: 10.0,
            amp_bits: 1,
            phase_bits: 3,
            d_min: None,
            coherence_intervals: 5,
            weights: None,
            gain: GainPattern::THREE_GPP,
        }
    }
}

impl ScenarioConfig {
    pub fn lambda(&self) -> f64 {
        SPEED_OF_LIGHT / (self.carrier_ghz * 1e9)
    }

    pub fn d_min(&self) -> f64 {
        let l = self.lambda();
        self.d_min.unwrap_or((std::f64::consts::SQRT_2 / 2.0 + 0.5) * l)
    }

    pub fn weights(&self) -> Vec<f64> {
        self.weights.clone().unwrap_or_else(|| vec![1.0; self.users])
    }

    pub fn validate(&self) -> Result<()> {
        if self.subarrays == 0 || self.antennas_per_subarray == 0 || self.users == 0 {
            return Err(Error::Config(
                "subarrays, antennas_per_subarray and users must be >= 1".into(),
            ));
        }
        if !(self.r_min > 1.0 && self.r_max > self.r_min) {
            return Err(Error::Config(format!(
                "need 1 < r_min < r_max, got [{}, {}]",
                self.r_min, self.r_max
            )));
        }
        for (name, v) in [
            ("cube_side", self.cube_side),
            ("carrier_ghz", self.carrier_ghz),
            ("zeta", self.zeta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.snr_db.is_finite() {
            return Err(Error::Config(format!("snr_db must be finite, got {}", self.snr_db)));
        }
        if !(self.d_min() > 0.0) {
            return Err(Error::Config(format!("d_min must be positive, got {}", self.d_min())));
        }
        if self.amp_bits > 8 || self.phase_bits > 8 {
            return Err(Error::Config("at most 8 amplitude/phase bits".into()));
        }
        if let Some(w) = &self.weights {
            if w.len() != self.users || w.iter().any(|x| !(*x >= 0.0)) {
                return Err(Error::Config(format!(
                    "weights must hold {} non-negative values, got {w:?}",
                    self.users
                )));
            }
        }
        Ok(())
    }
}

/// Where the pose search takes user locations from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationSource {
    /// Run the pilot phase and use the estimates.
    Sensed,
    /// Use the true locations.
    Genie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingConfig {
    /// Training poses `M`.
    pub poses: usize,
    /// Pilot length `L`.
    pub slots: usize,
    /// Polarforming blocks `P`.
    pub blocks: usize,
    /// Received pilot SNR of the weakest user.
    pub snr_db: f64,
    pub locations: LocationSource,
    pub localization: LocalizationConfig,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self {
            poses: 8,
            slots: 32,
            blocks: 8,
            snr_db: 10.0,
            locations: LocationSource::Sensed,
            localization: LocalizationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Monte-Carlo trials per sweep point.
    pub trials: usize,
    pub schemes: Vec<Scheme>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            trials: 50,
            schemes: Scheme::ALL.to_vec(),
        }
    }
}

/// Parameter varied by `polarsim sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Transmit power `10 log10(zeta)`.
    ZetaDb,
    /// Total BS antennas `N B`; `B` follows from the configured `N`.
    Antennas,
    Subarrays,
    Users,
    AmpBits,
    PhaseBits,
    /// Mini-batch size of the pose search.
    Batch,
    SnrDb,
    SensingSnrDb,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::ZetaDb => "zeta_db",
            SweepAxis::Antennas => "antennas",
            SweepAxis::Subarrays => "subarrays",
            SweepAxis::Users => "users",
            SweepAxis::AmpBits => "amp_bits",
            SweepAxis::PhaseBits => "phase_bits",
            SweepAxis::Batch => "batch",
            SweepAxis::SnrDb => "snr_db",
            SweepAxis::SensingSnrDb => "sensing_snr_db",
        }
    }

    /// Returns `cfg` with this axis set to `value`.
    pub fn apply(&self, cfg: &Config, value: f64) -> Result<Config> {
        let mut out = cfg.clone();
        let count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!(
                    "{} needs a non-negative integer, got {v}",
                    self.name()
                )))
            }
        };
        match self {
            SweepAxis::ZetaDb => out.scenario.zeta = 10f64.powf(value / 10.0),
            SweepAxis::Antennas => {
                let total = count(value)?;
                let n = out.scenario.antennas_per_subarray;
                if total == 0 || total % n != 0 {
                    return Err(Error::Config(format!("{total} antennas is not a multiple of N = {n}")));
                }
                out.scenario.subarrays = total / n;
            }
            SweepAxis::Subarrays => out.scenario.subarrays = count(value)?,
            SweepAxis::Users => {
                out.scenario.users = count(value)?;
                out.scenario.weights = None;
            }
            SweepAxis::AmpBits => out.scenario.amp_bits = count(value)? as u32,
            SweepAxis::PhaseBits => out.scenario.phase_bits = count(value)? as u32,
            SweepAxis::Batch => out.pso.batch = count(value)?,
            SweepAxis::SnrDb => out.scenario.snr_db = value,
            SweepAxis::SensingSnrDb => out.sensing.snr_db = value,
        }
        out.validate()?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            axis: SweepAxis::ZetaDb,
            values: vec![-10.0, -5.0, 0.0, 5.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizeConfig {
    pub snr_db: Vec<f64>,
    pub trials: usize,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        Self {
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            trials: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioConfig,
    pub sensing: SensingConfig,
    pub pso: PsoConfig,
    /// Inner solver used for reported rates.
    pub pdd: PddConfig,
    /// Inner solver used inside the pose search.
    #[serde(default = "PddConfig::cheap")]
    pub pdd_search: PddConfig,
    pub run: RunConfig,
    pub sweep: SweepConfig,
    pub localize: LocalizeConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            sensing: SensingConfig::default(),
            pso: PsoConfig::default(),
            pdd: PddConfig::default(),
            pdd_search: PddConfig::cheap(),
            run: RunConfig::default(),
            sweep: SweepConfig::default(),
            localize: LocalizeConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        let s = &self.sensing;
        if s.poses == 0 || s.blocks == 0 || s.slots < self.scenario.users {
            return Err(Error::Config(format!(
                "sensing needs poses >= 1, blocks >= 1 and slots >= users ({}): {s:?}",
                self.scenario.users
            )));
        }
        if !s.snr_db.is_finite() || self.localize.snr_db.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("SNR values must be finite".into()));
        }
        self.pso.validate().map_err(|e| Error::Config(format!("pso: {e}")))?;
        self.pdd.validate().map_err(|e| Error::Config(format!("pdd: {e}")))?;
        self.pdd_search
            .validate()
            .map_err(|e| Error::Config(format!("pdd_search: {e}")))?;
        if self.run.schemes.is_empty() {
            return Err(Error::Config("run.schemes is empty".into()));
        }
        if self.sweep.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sweep values must be finite".into()));
        }
        Ok(())
    }
}
