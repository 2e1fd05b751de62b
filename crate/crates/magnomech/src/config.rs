//! Parameter files.
//!
//! Every rate is given as an ordinary frequency in Hz and converted to rad/s
//! on load. Mode frequencies are derived from the detunings, so a file fixes
//! the cavity frequency and the detunings of both steps:
//!
//! ```text
//! ω_01 = ω_a − Δ_a        ω_m1 = ω_01 + Δ_m1
//! ω_m2 = ω_a − Δ_am2      ω_02 = ω_m2 − Δ_m2
//! ```

use std::f64::consts::TAU;

use magnomech_core::model::{Crystal, Warning};
use magnomech_core::protocol::{ProtocolOptions, Step2Means};
use magnomech_core::{DriveProfile, DriveSpec, DriveStrength, Magnet, SystemParams};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Ordinary frequency in Hz.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Hz(pub f64);

impl Hz {
    pub fn angular(self) -> f64 {
        TAU * self.0
    }

    fn pair(v: [Hz; 2]) -> [f64; 2] {
        [v[0].angular(), v[1].angular()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamFile {
    pub system: SystemSection,
    pub step1: Step1Section,
    pub step2: Step2Section,
    #[serde(default)]
    pub numerics: Numerics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub cavity_frequency_hz: Hz,
    pub mechanical_frequency_hz: [Hz; 2],
    pub cavity_decay_hz: Hz,
    pub magnon_decay_hz: [Hz; 2],
    pub mechanical_damping_hz: [Hz; 2],
    pub cavity_magnon_coupling_hz: [Hz; 2],
    pub magnomechanical_coupling_hz: [Hz; 2],
    pub temperature_k: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crystal1: Option<CrystalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crystal2: Option<CrystalSection>,
}

/// Cuboid crystal; needed when a drive is given as a field or a power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalSection {
    pub length_m: f64,
    pub width_m: f64,
    pub thickness_m: f64,
    pub spin_density_m3: f64,
}

impl From<CrystalSection> for Crystal {
    fn from(c: CrystalSection) -> Crystal {
        Crystal {
            length: c.length_m,
            width: c.width_m,
            thickness: c.thickness_m,
            spin_density: c.spin_density_m3,
        }
    }
}

/// Exactly one of `field_t`, `power_w` and `rabi_hz` sets a drive strength.
fn strength(
    section: &str,
    field_t: Option<f64>,
    power_w: Option<f64>,
    rabi_hz: Option<Hz>,
) -> Result<DriveStrength, ConfigError> {
    match (field_t, power_w, rabi_hz) {
        (Some(b), None, None) => Ok(DriveStrength::Field(b)),
        (None, Some(p), None) => Ok(DriveStrength::Power(p)),
        (None, None, Some(r)) => Ok(DriveStrength::Rabi(r.angular())),
        _ => Err(ConfigError::Invalid(format!(
            "[{section}] needs exactly one of field_t, power_w, rabi_hz"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step1Section {
    /// `Δ_a = ω_a − ω_01`.
    pub cavity_detuning_hz: Hz,
    /// `Δ_m1 = ω_m1 − ω_01`.
    pub magnon1_detuning_hz: Hz,
    /// `Δ_am2 = ω_a − ω_m2`.
    pub cavity_magnon2_detuning_hz: Hz,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rabi_hz: Option<Hz>,
    #[serde(default)]
    pub self_consistent: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeansMode {
    #[default]
    Transient,
    Settled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step2Section {
    /// `Δ_m2 = ω_m2 − ω_02`.
    pub magnon2_detuning_hz: Hz,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rabi_hz: Option<Hz>,
    /// Pulse durations searched for the optimum.
    pub window_s: f64,
    /// Free evolution after the pulse.
    #[serde(default)]
    pub free_evolution_s: f64,
    #[serde(default)]
    pub means: MeansMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_s: Option<f64>,
    pub physicality_tol: f64,
    pub step_tolerance: f64,
    pub escalate_coarse_step: bool,
}

impl Default for Numerics {
    fn default() -> Self {
        let o = ProtocolOptions::default();
        Numerics {
            dt_s: None,
            physicality_tol: o.physicality_tol,
            step_tolerance: o.step_tolerance,
            escalate_coarse_step: o.escalate_coarse_step,
        }
    }
}

/// A parameter file turned into model objects.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub params: SystemParams,
    pub drive1: DriveSpec,
    /// Held on for the search window; the pulse length is the optimum.
    pub drive2: DriveSpec,
    pub window: f64,
    pub free_duration: f64,
    pub options: ProtocolOptions,
    pub warnings: Vec<Warning>,
}

impl ParamFile {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let s = &self.system;
        let wa = s.cavity_frequency_hz.angular();
        let w01 = wa - self.step1.cavity_detuning_hz.angular();
        let wm1 = w01 + self.step1.magnon1_detuning_hz.angular();
        let wm2 = wa - self.step1.cavity_magnon2_detuning_hz.angular();
        let w02 = wm2 - self.step2.magnon2_detuning_hz.angular();
        let params = SystemParams {
            cavity_frequency: wa,
            magnon_frequency: [wm1, wm2],
            mechanical_frequency: Hz::pair(s.mechanical_frequency_hz),
            cavity_decay: s.cavity_decay_hz.angular(),
            magnon_decay: Hz::pair(s.magnon_decay_hz),
            mechanical_damping: Hz::pair(s.mechanical_damping_hz),
            cavity_magnon_coupling: Hz::pair(s.cavity_magnon_coupling_hz),
            magnomechanical_coupling: Hz::pair(s.magnomechanical_coupling_hz),
            temperature: s.temperature_k,
            crystals: [s.crystal1.map(Crystal::from), s.crystal2.map(Crystal::from)],
        };
        let warnings = params.validate()?;

        let window = self.step2.window_s;
        if !(window > 0.0 && window.is_finite()) {
            return Err(ConfigError::Invalid(
                "step2.window_s must be positive".into(),
            ));
        }
        let free_duration = self.step2.free_evolution_s;
        if !(free_duration >= 0.0 && free_duration.is_finite()) {
            return Err(ConfigError::Invalid(
                "step2.free_evolution_s must be non-negative".into(),
            ));
        }
        let drive1 = DriveSpec {
            target: Magnet::One,
            frequency: w01,
            strength: strength(
                "step1",
                self.step1.field_t,
                self.step1.power_w,
                self.step1.rabi_hz,
            )?,
            profile: DriveProfile::Continuous,
        };
        let drive2 = DriveSpec {
            target: Magnet::Two,
            frequency: w02,
            strength: strength(
                "step2",
                self.step2.field_t,
                self.step2.power_w,
                self.step2.rabi_hz,
            )?,
            profile: DriveProfile::Flattop { duration: window },
        };
        // surfaces missing crystals and bad strengths before any sweep starts
        drive1.rabi_frequency(&params)?;
        drive2.rabi_frequency(&params)?;

        let n = &self.numerics;
        if let Some(dt) = n.dt_s {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(ConfigError::Invalid(
                    "numerics.dt_s must be positive".into(),
                ));
            }
        }
        let options = ProtocolOptions {
            self_consistent: self.step1.self_consistent,
            dt: n.dt_s,
            step_tolerance: n.step_tolerance,
            physicality_tol: n.physicality_tol,
            escalate_coarse_step: n.escalate_coarse_step,
            step2_means: match self.step2.means {
                MeansMode::Transient => Step2Means::Transient,
                MeansMode::Settled => Step2Means::Settled,
            },
            ..ProtocolOptions::default()
        };
        Ok(Resolved {
            params,
            drive1,
            drive2,
            window,
            free_duration,
            options,
            warnings,
        })
    }

    /// Returns a copy with the number at `path` replaced by `value`.
    ///
    /// Paths are dotted keys with optional `[i]` indices, e.g.
    /// `system.mechanical_frequency_hz[1]` or `step1.cavity_detuning_hz`.
    /// The last key may be absent from its table (optional fields); anything
    /// that is not part of the schema is rejected.
    pub fn with_value(&self, path: &str, value: f64) -> Result<ParamFile, ConfigError> {
        let mut root = toml::Value::try_from(self)?;
        let slot = lookup(&mut root, path)?;
        *slot = toml::Value::Float(value);
        root.try_into()
            .map_err(|_| ConfigError::UnknownPath(path.to_string()))
    }

    /// Checks that `path` names a numeric parameter.
    pub fn check_path(&self, path: &str) -> Result<(), ConfigError> {
        self.with_value(path, 1.0).map(|_| ())
    }
}

fn lookup<'a>(root: &'a mut toml::Value, path: &str) -> Result<&'a mut toml::Value, ConfigError> {
    let unknown = || ConfigError::UnknownPath(path.to_string());
    let keys: Vec<&str> = path.split('.').collect();
    let mut cur = root;
    for (n, key) in keys.iter().enumerate() {
        let (name, index) = match key.split_once('[') {
            Some((name, rest)) => {
                let idx = rest
                    .strip_suffix(']')
                    .and_then(|i| i.parse::<usize>().ok())
                    .ok_or_else(unknown)?;
                (name, Some(idx))
            }
            None => (*key, None),
        };
        let table = cur.as_table_mut().ok_or_else(unknown)?;
        let last = n + 1 == keys.len();
        if !table.contains_key(name) {
            if last && index.is_none() {
                table.insert(name.to_string(), toml::Value::Float(0.0));
            } else {
                return Err(unknown());
            }
        }
        cur = table.get_mut(name).ok_or_else(unknown)?;
        if let Some(i) = index {
            cur = cur
                .as_array_mut()
                .and_then(|a| a.get_mut(i))
                .ok_or_else(unknown)?;
        }
    }
    match cur {
        toml::Value::Float(_) | toml::Value::Integer(_) => Ok(cur),
        _ => Err(unknown()),
    }
}
