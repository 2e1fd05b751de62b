//! Built-in sweeps of the two-magnet entanglement maps.
//!
//! All presets share one working point (`base_params`). The axis spans are
//! a choice made here: the optimum plus a wide margin on each side.

use magnomech_core::model::YIG_SPIN_DENSITY;

use crate::config::{
    CrystalSection, Hz, MeansMode, Numerics, ParamFile, Step1Section, Step2Section, SystemSection,
};
use crate::error::ConfigError;
use crate::sweep::{Axis, Quantity, Scale, Stage, SweepConfig};

pub const NAMES: [&str; 8] = [
    "fig3a", "fig3b", "fig3c", "fig3d", "fig5a", "fig5b", "fig5c", "fig5d",
];

/// Points per axis unless overridden.
pub const GRID_POINTS: usize = 101;

pub const OMEGA_B1_HZ: f64 = 17e6;
pub const OMEGA_B2_HZ: f64 = 12e6;
pub const KAPPA_A_HZ: f64 = 1e6;

/// Drive field of both steps (T).
pub const DRIVE_FIELD: f64 = 4.8e-4;

/// Search window for the pulse duration (s).
pub const PULSE_WINDOW: f64 = 4e-7;
/// Free evolution after the pulse (s).
pub const FREE_EVOLUTION: f64 = 2e-5;

fn crystal(length_m: f64) -> CrystalSection {
    CrystalSection {
        length_m,
        width_m: 3e-6,
        thickness_m: 1e-6,
        spin_density_m3: YIG_SPIN_DENSITY,
    }
}

/// Working point shared by all presets: `Δ_a = −0.95 ω_b1`,
/// `Δ_m1 = 0.95 ω_b1`, `Δ_am2 = 0.9 κ_a`, `Δ_m2 = ω_b2`.
pub fn base_params() -> ParamFile {
    ParamFile {
        system: SystemSection {
            cavity_frequency_hz: Hz(10e9),
            mechanical_frequency_hz: [Hz(OMEGA_B1_HZ), Hz(OMEGA_B2_HZ)],
            cavity_decay_hz: Hz(KAPPA_A_HZ),
            magnon_decay_hz: [Hz(KAPPA_A_HZ); 2],
            mechanical_damping_hz: [Hz(100.0); 2],
            cavity_magnon_coupling_hz: [Hz(5e6), Hz(1e6)],
            magnomechanical_coupling_hz: [Hz(10.0); 2],
            temperature_k: 0.01,
            crystal1: Some(crystal(13.7e-6)),
            crystal2: Some(crystal(16.4e-6)),
        },
        step1: Step1Section {
            cavity_detuning_hz: Hz(-0.95 * OMEGA_B1_HZ),
            magnon1_detuning_hz: Hz(0.95 * OMEGA_B1_HZ),
            cavity_magnon2_detuning_hz: Hz(0.9 * KAPPA_A_HZ),
            field_t: Some(DRIVE_FIELD),
            power_w: None,
            rabi_hz: None,
            self_consistent: false,
        },
        step2: Step2Section {
            magnon2_detuning_hz: Hz(OMEGA_B2_HZ),
            field_t: Some(DRIVE_FIELD),
            power_w: None,
            rabi_hz: None,
            window_s: PULSE_WINDOW,
            free_evolution_s: FREE_EVOLUTION,
            means: MeansMode::Transient,
        },
        numerics: Numerics::default(),
    }
}

fn axis(path: &str, start: f64, stop: f64, count: usize, unit: f64, label: &str) -> Axis {
    Axis {
        path: path.to_string(),
        start,
        stop,
        count,
        scale: Scale::Linear,
        unit,
        label: Some(label.to_string()),
    }
}

fn cavity_axis(n: usize) -> Axis {
    axis(
        "step1.cavity_detuning_hz",
        -1.5,
        -0.5,
        n,
        OMEGA_B1_HZ,
        "delta_a_over_omega_b1",
    )
}

fn magnon1_axis(n: usize) -> Axis {
    axis(
        "step1.magnon1_detuning_hz",
        0.5,
        1.5,
        n,
        OMEGA_B1_HZ,
        "delta_m1_over_omega_b1",
    )
}

/// The named preset; `points` overrides the per-axis count (or the number
/// of series samples).
pub fn preset(name: &str, points: Option<usize>) -> Result<SweepConfig, ConfigError> {
    let n = points.unwrap_or(GRID_POINTS);
    let base = base_params();
    let fig3 = |q: Quantity| {
        SweepConfig::new(
            base_params(),
            Stage::Step1,
            vec![q, Quantity::Margin],
            vec![cavity_axis(n), magnon1_axis(n)],
        )
    };
    let mut cfg = match name {
        "fig3a" => fig3(Quantity::EB1m2)?,
        "fig3c" => fig3(Quantity::EB1a)?,
        "fig3d" => fig3(Quantity::EB1b2)?,
        "fig3b" => SweepConfig::new(
            base,
            Stage::Step1,
            vec![Quantity::EB1m2, Quantity::Margin],
            vec![
                cavity_axis(n),
                axis(
                    "step1.cavity_magnon2_detuning_hz",
                    -5.0,
                    5.0,
                    n,
                    KAPPA_A_HZ,
                    "delta_am2_over_kappa_a",
                ),
            ],
        )?,
        "fig5a" => SweepConfig::new(
            base,
            Stage::Step2,
            vec![
                Quantity::EB1b2,
                Quantity::TMax,
                Quantity::EB1m2,
                Quantity::Margin,
            ],
            vec![axis(
                "step2.magnon2_detuning_hz",
                0.5,
                1.5,
                n,
                OMEGA_B2_HZ,
                "delta_m2_over_omega_b2",
            )],
        )?,
        "fig5b" => SweepConfig::new(
            base,
            Stage::Step2Series,
            vec![Quantity::EB1b2, Quantity::EB1m2],
            Vec::new(),
        )?,
        "fig5c" => SweepConfig::new(base, Stage::FreeSeries, vec![Quantity::EB1b2], Vec::new())?,
        "fig5d" => SweepConfig::new(
            base,
            Stage::Step2,
            vec![Quantity::EB1b2, Quantity::TMax, Quantity::Margin],
            vec![axis(
                "system.temperature_k",
                0.0,
                0.3,
                n,
                1.0,
                "temperature_k",
            )],
        )?,
        _ => {
            return Err(ConfigError::UnknownPreset {
                name: name.to_string(),
                available: NAMES.to_vec(),
            })
        }
    };
    if cfg.stage.is_series() {
        cfg.samples = points.unwrap_or(crate::sweep::DEFAULT_SAMPLES);
        cfg.validate()?;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_resolves() {
        for name in NAMES {
            let cfg = preset(name, None).unwrap();
            assert!(cfg.point_count() >= 1, "{name}");
            cfg.params.resolve().unwrap();
        }
    }

    #[test]
    fn unknown_preset_lists_the_names() {
        let err = preset("fig4", None).unwrap_err().to_string();
        for name in NAMES {
            assert!(err.contains(name));
        }
    }

    #[test]
    fn fig3d_shares_the_fig3a_axes() {
        let a = preset("fig3a", None).unwrap();
        let d = preset("fig3d", None).unwrap();
        assert_eq!(a.axes, d.axes);
        assert_eq!(d.quantities[0], Quantity::EB1b2);
    }

    #[test]
    fn grid_contains_the_working_point() {
        let a = preset("fig3a", None).unwrap();
        let (coords, p) = a.point(55 * 101 + 45).unwrap();
        assert!((coords[0] + 0.95).abs() < 1e-12 && (coords[1] - 0.95).abs() < 1e-12);
        let r = p.resolve().unwrap();
        let w = base_params().resolve().unwrap();
        assert!((r.params.magnon_frequency[0] - w.params.magnon_frequency[0]).abs() < 1.0);
    }
}
