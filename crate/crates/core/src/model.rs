//! Physics of the five-mode cavity magnomechanical system: parameters, unit
//! conversions, classical mean fields and the linearized drift/diffusion.
//!
//! Every frequency and rate is an angular quantity in rad/s. Decay rates
//! (`κ`, `γ`) are amplitude decay rates as they appear in the Langevin
//! equations.

use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};
use core::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gaussian_state::{Mode, ModeLayout};
use crate::linear_dynamics::{DiffusionMatrix, DriftMatrix};

pub const HBAR: f64 = 1.054_571_817e-34;
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const VACUUM_PERMEABILITY: f64 = 1.256_637_062_12e-6;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Electron gyromagnetic ratio, `γ/2π = 28 GHz/T`, in rad/(s·T).
pub const GYROMAGNETIC_RATIO: f64 = 2.0 * PI * 28e9;
/// Net spin density of YIG (m⁻³), the usual literature value. Used only when
/// a drive is specified as a field or a power.
pub const YIG_SPIN_DENSITY: f64 = 4.22e27;

/// Mechanical quality factor below which the Markov treatment of the
/// Brownian force is flagged.
pub const MIN_MECHANICAL_Q: f64 = 1e3;
/// Mean amplitude below which linearization is flagged.
pub const MIN_MEAN_AMPLITUDE: f64 = 1e2;

const FIXED_POINT_RTOL: f64 = 1e-10;
const FIXED_POINT_MAX_ITER: usize = 1000;

/// Which of the two ferrimagnets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Magnet {
    One,
    Two,
}

impl Magnet {
    pub fn index(self) -> usize {
        match self {
            Magnet::One => 0,
            Magnet::Two => 1,
        }
    }

    pub fn other(self) -> Magnet {
        match self {
            Magnet::One => Magnet::Two,
            Magnet::Two => Magnet::One,
        }
    }

    pub fn magnon(self) -> Mode {
        match self {
            Magnet::One => Mode::Magnon1,
            Magnet::Two => Mode::Magnon2,
        }
    }

    pub fn phonon(self) -> Mode {
        match self {
            Magnet::One => Mode::Phonon1,
            Magnet::Two => Mode::Phonon2,
        }
    }
}

/// Cuboid crystal geometry (meters) and net spin density (m⁻³).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crystal {
    pub length: f64,
    pub width: f64,
    pub thickness: f64,
    pub spin_density: f64,
}

impl Crystal {
    pub fn volume(&self) -> f64 {
        self.length * self.width * self.thickness
    }

    pub fn spin_count(&self) -> f64 {
        self.spin_density * self.volume()
    }
}

/// Non-fatal diagnostics about the validity of the linearized model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Warning {
    LowMechanicalQ { magnet: Magnet, quality: f64 },
    SmallMeanAmplitude { mode: Mode, amplitude: f64 },
    CoarseStep { discrepancy: f64 },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::LowMechanicalQ { magnet, quality } => write!(
                f,
                "mechanical quality factor of {} is {quality:.3e} (< {MIN_MECHANICAL_Q:e})",
                magnet.phonon()
            ),
            Warning::SmallMeanAmplitude { mode, amplitude } => write!(
                f,
                "mean amplitude |<{mode}>| = {amplitude:.3e} is not large (< {MIN_MEAN_AMPLITUDE:e})"
            ),
            Warning::CoarseStep { discrepancy } => write!(
                f,
                "first-step full/half-step discrepancy {discrepancy:.3e} exceeds tolerance"
            ),
        }
    }
}

/// All frequencies, couplings and dissipation rates of the system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub cavity_frequency: f64,
    pub magnon_frequency: [f64; 2],
    pub mechanical_frequency: [f64; 2],
    pub cavity_decay: f64,
    pub magnon_decay: [f64; 2],
    pub mechanical_damping: [f64; 2],
    /// Cavity–magnon couplings `g_j`.
    pub cavity_magnon_coupling: [f64; 2],
    /// Bare magnomechanical couplings `G_0j`.
    pub magnomechanical_coupling: [f64; 2],
    /// Bath temperature in kelvin.
    pub temperature: f64,
    pub crystals: [Option<Crystal>; 2],
}

fn positive(name: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, "must be positive and finite"))
    }
}

fn non_negative(name: &'static str, x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, "must be non-negative and finite"))
    }
}

impl SystemParams {
    /// Checks signs and finiteness; returns validity warnings.
    pub fn validate(&self) -> Result<Vec<Warning>> {
        positive("cavity_frequency", self.cavity_frequency)?;
        positive("cavity_decay", self.cavity_decay)?;
        non_negative("temperature", self.temperature)?;
        let mut warnings = Vec::new();
        for magnet in [Magnet::One, Magnet::Two] {
            let j = magnet.index();
            positive("magnon_frequency", self.magnon_frequency[j])?;
            positive("mechanical_frequency", self.mechanical_frequency[j])?;
            positive("magnon_decay", self.magnon_decay[j])?;
            positive("mechanical_damping", self.mechanical_damping[j])?;
            non_negative("cavity_magnon_coupling", self.cavity_magnon_coupling[j])?;
            non_negative("magnomechanical_coupling", self.magnomechanical_coupling[j])?;
            if let Some(c) = &self.crystals[j] {
                positive("crystal.length", c.length)?;
                positive("crystal.width", c.width)?;
                positive("crystal.thickness", c.thickness)?;
                positive("crystal.spin_density", c.spin_density)?;
            }
            let quality = self.mechanical_frequency[j] / self.mechanical_damping[j];
            if quality < MIN_MECHANICAL_Q {
                warnings.push(Warning::LowMechanicalQ { magnet, quality });
            }
        }
        Ok(warnings)
    }

    /// Mode-label swap `1 ↔ 2` of everything attached to the two magnets.
    pub fn swapped(&self) -> SystemParams {
        let sw = |a: [f64; 2]| [a[1], a[0]];
        SystemParams {
            magnon_frequency: sw(self.magnon_frequency),
            mechanical_frequency: sw(self.mechanical_frequency),
            magnon_decay: sw(self.magnon_decay),
            mechanical_damping: sw(self.mechanical_damping),
            cavity_magnon_coupling: sw(self.cavity_magnon_coupling),
            magnomechanical_coupling: sw(self.magnomechanical_coupling),
            crystals: [self.crystals[1], self.crystals[0]],
            ..*self
        }
    }

    pub fn mode_frequency(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Cavity => self.cavity_frequency,
            Mode::Magnon1 => self.magnon_frequency[0],
            Mode::Magnon2 => self.magnon_frequency[1],
            Mode::Phonon1 => self.mechanical_frequency[0],
            Mode::Phonon2 => self.mechanical_frequency[1],
        }
    }

    pub fn thermal_occupation(&self, mode: Mode) -> f64 {
        thermal_occupation(self.mode_frequency(mode), self.temperature)
    }
}

/// How the drive amplitude is specified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriveStrength {
    /// Magnetic field amplitude `B` in tesla.
    Field(f64),
    /// Drive power in watts; converted through the crystal's length and width.
    Power(f64),
    /// Rabi frequency `Ω` in rad/s.
    Rabi(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriveProfile {
    Continuous,
    /// Constant amplitude for `duration` seconds with instantaneous edges.
    Flattop {
        duration: f64,
    },
}

/// A single microwave drive on one magnon mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveSpec {
    pub target: Magnet,
    /// Drive angular frequency `ω_0` (rad/s); sets the rotating frame.
    pub frequency: f64,
    pub strength: DriveStrength,
    pub profile: DriveProfile,
}

impl DriveSpec {
    pub fn validate(&self) -> Result<()> {
        positive("drive.frequency", self.frequency)?;
        match self.strength {
            DriveStrength::Field(x) | DriveStrength::Power(x) | DriveStrength::Rabi(x) => {
                non_negative("drive.strength", x)?
            }
        }
        if let DriveProfile::Flattop { duration } = self.profile {
            positive("drive.duration", duration)?;
        }
        Ok(())
    }

    /// Rabi frequency `Ω` (rad/s) of this drive on its target crystal.
    pub fn rabi_frequency(&self, params: &SystemParams) -> Result<f64> {
        self.validate()?;
        let crystal = || {
            params.crystals[self.target.index()].ok_or_else(|| {
                Error::invalid(
                    "crystal",
                    "field or power drive needs the target crystal's geometry and spin density",
                )
            })
        };
        Ok(match self.strength {
            DriveStrength::Rabi(omega) => omega,
            DriveStrength::Field(b) => rabi_frequency(b, crystal()?.spin_count()),
            DriveStrength::Power(p) => {
                let c = crystal()?;
                rabi_frequency(field_from_power(p, c.length, c.width), c.spin_count())
            }
        })
    }

    /// Rabi amplitude on each magnon at time `t` after switch-on.
    pub fn amplitudes(&self, rabi: f64, t: f64) -> [f64; 2] {
        let on = match self.profile {
            DriveProfile::Continuous => true,
            DriveProfile::Flattop { duration } => t < duration,
        };
        let mut out = [0.0; 2];
        if on {
            out[self.target.index()] = rabi;
        }
        out
    }
}

/// Bose–Einstein occupation `1/(exp(ħω/k_B T) − 1)`; exactly 0 at `T = 0`.
pub fn thermal_occupation(omega: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        return 0.0;
    }
    let x = HBAR * omega / (BOLTZMANN * temperature);
    1.0 / libm::expm1(x)
}

/// `Ω = (√5/4) γ √N B`.
pub fn rabi_frequency(field: f64, spin_count: f64) -> f64 {
    libm::sqrt(5.0) / 4.0 * GYROMAGNETIC_RATIO * libm::sqrt(spin_count) * field
}

/// `B = √(2 μ₀ P / (l w c))`.
pub fn field_from_power(power: f64, length: f64, width: f64) -> f64 {
    libm::sqrt(2.0 * VACUUM_PERMEABILITY * power / (length * width * SPEED_OF_LIGHT))
}

/// Detunings `Δ = ω_mode − ω_drive` of the cavity and both magnons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detunings {
    pub cavity: f64,
    pub magnon: [f64; 2],
}

impl Detunings {
    pub fn relative_to(params: &SystemParams, drive_frequency: f64) -> Detunings {
        Detunings {
            cavity: params.cavity_frequency - drive_frequency,
            magnon: [
                params.magnon_frequency[0] - drive_frequency,
                params.magnon_frequency[1] - drive_frequency,
            ],
        }
    }
}

/// Classical amplitudes of all modes in the drive's rotating frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassicalMeans {
    pub cavity: Complex64,
    pub magnon: [Complex64; 2],
    pub position: [f64; 2],
    pub momentum: [f64; 2],
}

impl ClassicalMeans {
    /// `self + h·rate`, component-wise.
    pub fn advanced(&self, rate: &ClassicalMeans, h: f64) -> ClassicalMeans {
        ClassicalMeans {
            cavity: self.cavity + rate.cavity * h,
            magnon: [
                self.magnon[0] + rate.magnon[0] * h,
                self.magnon[1] + rate.magnon[1] * h,
            ],
            position: [
                self.position[0] + rate.position[0] * h,
                self.position[1] + rate.position[1] * h,
            ],
            momentum: [
                self.momentum[0] + rate.momentum[0] * h,
                self.momentum[1] + rate.momentum[1] * h,
            ],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.cavity.is_finite()
            && self.magnon.iter().all(|z| z.is_finite())
            && self
                .position
                .iter()
                .chain(&self.momentum)
                .all(|x| x.is_finite())
    }

    /// Largest component-wise difference relative to the larger magnitude.
    pub fn relative_difference(&self, other: &ClassicalMeans) -> f64 {
        let pairs = [
            (self.cavity, other.cavity),
            (self.magnon[0], other.magnon[0]),
            (self.magnon[1], other.magnon[1]),
            (self.position[0].into(), other.position[0].into()),
            (self.position[1].into(), other.position[1].into()),
            (self.momentum[0].into(), other.momentum[0].into()),
            (self.momentum[1].into(), other.momentum[1].into()),
        ];
        let scale = pairs
            .iter()
            .map(|(a, b): &(Complex64, Complex64)| a.norm().max(b.norm()))
            .fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        pairs
            .iter()
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
            / scale
    }

    pub fn swapped(&self) -> ClassicalMeans {
        ClassicalMeans {
            cavity: self.cavity,
            magnon: [self.magnon[1], self.magnon[0]],
            position: [self.position[1], self.position[0]],
            momentum: [self.momentum[1], self.momentum[0]],
        }
    }
}

/// Effective couplings `G_j` and the (possibly shifted) detunings entering the
/// drift matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveCouplings {
    pub coupling: [Complex64; 2],
    pub detunings: Detunings,
}

impl EffectiveCouplings {
    /// Couplings for a given mean field; `shift` adds `G_0j ⟨q_j⟩` to the
    /// magnon detunings.
    pub fn from_means(
        params: &SystemParams,
        bare: &Detunings,
        means: &ClassicalMeans,
        shift: bool,
    ) -> EffectiveCouplings {
        let g0 = params.magnomechanical_coupling;
        let mut detunings = *bare;
        if shift {
            for j in 0..2 {
                detunings.magnon[j] += g0[j] * means.position[j];
            }
        }
        EffectiveCouplings {
            coupling: [
                effective_coupling(g0[0], means.magnon[0]),
                effective_coupling(g0[1], means.magnon[1]),
            ],
            detunings,
        }
    }

    pub fn decoupled(detunings: Detunings) -> EffectiveCouplings {
        EffectiveCouplings {
            coupling: [Complex64::new(0.0, 0.0); 2],
            detunings,
        }
    }
}

/// `G = i√2 G₀ ⟨m⟩`.
pub fn effective_coupling(bare: f64, mean_magnon: Complex64) -> Complex64 {
    Complex64::new(0.0, SQRT_2 * bare) * mean_magnon
}

/// Steady-state solution of the classical mean-field equations.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub means: ClassicalMeans,
    pub bare_detunings: Detunings,
    /// `Δ̃_mj = Δ_mj + G_0j ⟨q_j⟩` when self-consistent, otherwise the bare values.
    pub effective_detunings: Detunings,
    pub couplings: EffectiveCouplings,
    pub rabi: f64,
    pub iterations: usize,
    pub warnings: Vec<Warning>,
}

/// Closed-form magnon means for fixed magnon detunings `Δ̃`:
/// `[[g₁² + c₁c_a, g₁g₂], [g₁g₂, g₂² + c₂c_a]] m = c_a Ω` with
/// `c = iΔ + κ`.
fn magnon_means(
    params: &SystemParams,
    cavity_detuning: f64,
    magnon_detuning: [f64; 2],
    rabi: [f64; 2],
) -> [Complex64; 2] {
    let [g1, g2] = params.cavity_magnon_coupling;
    let ca = Complex64::new(params.cavity_decay, cavity_detuning);
    let c1 = Complex64::new(params.magnon_decay[0], magnon_detuning[0]);
    let c2 = Complex64::new(params.magnon_decay[1], magnon_detuning[1]);
    let d11 = c1 * ca + g1 * g1;
    let d22 = c2 * ca + g2 * g2;
    let off = g1 * g2;
    let det = d11 * d22 - off * off;
    let m1 = ca * (d22 * rabi[0] - off * rabi[1]) / det;
    let m2 = ca * (d11 * rabi[1] - off * rabi[0]) / det;
    [m1, m2]
}

fn cavity_mean(params: &SystemParams, cavity_detuning: f64, magnon: &[Complex64; 2]) -> Complex64 {
    let [g1, g2] = params.cavity_magnon_coupling;
    let ca = Complex64::new(params.cavity_decay, cavity_detuning);
    Complex64::new(0.0, -1.0) * (magnon[0] * g1 + magnon[1] * g2) / ca
}

fn positions(params: &SystemParams, magnon: &[Complex64; 2]) -> [f64; 2] {
    let mut q = [0.0; 2];
    for j in 0..2 {
        q[j] = -params.magnomechanical_coupling[j] * magnon[j].norm_sqr()
            / params.mechanical_frequency[j];
    }
    q
}

/// Steady-state means under a continuous drive.
///
/// With `self_consistent` off the magnon detunings are taken unshifted
/// (`Δ̃ = Δ`); with it on, `Δ̃_j = Δ_j + G_0j⟨q_j⟩` is iterated to a fixed
/// point (relative change below 1e-10, at most 1000 iterations).
pub fn steady_state_means(
    params: &SystemParams,
    drive: &DriveSpec,
    self_consistent: bool,
) -> Result<SteadyState> {
    params.validate()?;
    if drive.profile != DriveProfile::Continuous {
        return Err(Error::invalid(
            "drive.profile",
            "steady state requires a continuous drive",
        ));
    }
    let rabi = drive.rabi_frequency(params)?;
    let amplitudes = drive.amplitudes(rabi, 0.0);
    let bare = Detunings::relative_to(params, drive.frequency);

    let mut effective = bare;
    let mut magnon = magnon_means(params, bare.cavity, bare.magnon, amplitudes);
    let mut iterations = 1;
    if self_consistent {
        // Plain iteration of Δ̃ ↦ Δ + G₀q(Δ̃), under-relaxed whenever the
        // update grows, which happens near bistable points.
        let mut relax = 1.0;
        let mut previous = f64::INFINITY;
        loop {
            let q = positions(params, &magnon);
            for j in 0..2 {
                let target = bare.magnon[j] + params.magnomechanical_coupling[j] * q[j];
                effective.magnon[j] += relax * (target - effective.magnon[j]);
            }
            let next = magnon_means(params, bare.cavity, effective.magnon, amplitudes);
            iterations += 1;
            let change = (0..2)
                .map(|j| {
                    let scale = next[j].norm();
                    if scale == 0.0 {
                        0.0
                    } else {
                        (next[j] - magnon[j]).norm() / scale
                    }
                })
                .fold(0.0, f64::max)
                / relax;
            magnon = next;
            if !change.is_finite() {
                return Err(Error::FixedPointDiverged { iterations });
            }
            if change < FIXED_POINT_RTOL {
                break;
            }
            if iterations > FIXED_POINT_MAX_ITER {
                return Err(Error::FixedPointDiverged { iterations });
            }
            if change > previous && relax > 1.0 / 64.0 {
                relax *= 0.5;
            }
            previous = change;
        }
    }

    let means = ClassicalMeans {
        cavity: cavity_mean(params, bare.cavity, &magnon),
        magnon,
        position: positions(params, &magnon),
        momentum: [0.0; 2],
    };
    let mut warnings = params.validate()?;
    if rabi > 0.0 {
        for (mode, z) in [
            (Mode::Cavity, means.cavity),
            (Mode::Magnon1, means.magnon[0]),
            (Mode::Magnon2, means.magnon[1]),
        ] {
            if z.norm() < MIN_MEAN_AMPLITUDE {
                warnings.push(Warning::SmallMeanAmplitude {
                    mode,
                    amplitude: z.norm(),
                });
            }
        }
    }
    let couplings = EffectiveCouplings {
        coupling: [
            effective_coupling(params.magnomechanical_coupling[0], magnon[0]),
            effective_coupling(params.magnomechanical_coupling[1], magnon[1]),
        ],
        detunings: effective,
    };
    Ok(SteadyState {
        means,
        bare_detunings: bare,
        effective_detunings: effective,
        couplings,
        rabi,
        iterations,
        warnings,
    })
}

/// Time derivative of the noise-free nonlinear mean-field equations in the
/// frame of a drive with the given bare detunings and per-magnon Rabi
/// amplitudes.
pub fn mean_field_rate(
    params: &SystemParams,
    detunings: &Detunings,
    rabi: [f64; 2],
    s: &ClassicalMeans,
) -> ClassicalMeans {
    let i = Complex64::new(0.0, 1.0);
    let g = params.cavity_magnon_coupling;
    let g0 = params.magnomechanical_coupling;
    let ca = Complex64::new(params.cavity_decay, detunings.cavity);
    let cavity = -ca * s.cavity - i * (s.magnon[0] * g[0] + s.magnon[1] * g[1]);
    let mut magnon = [Complex64::new(0.0, 0.0); 2];
    let mut position = [0.0; 2];
    let mut momentum = [0.0; 2];
    for j in 0..2 {
        let cm = Complex64::new(params.magnon_decay[j], detunings.magnon[j]);
        magnon[j] =
            -cm * s.magnon[j] - i * s.magnon[j] * (g0[j] * s.position[j]) - i * s.cavity * g[j]
                + rabi[j];
        let wb = params.mechanical_frequency[j];
        position[j] = wb * s.momentum[j];
        momentum[j] = -wb * s.position[j]
            - params.mechanical_damping[j] * s.momentum[j]
            - g0[j] * s.magnon[j].norm_sqr();
    }
    ClassicalMeans {
        cavity,
        magnon,
        position,
        momentum,
    }
}

/// The 10×10 drift matrix of the linearized fluctuations, mode order
/// `(a, m1, m2, b1, b2)`.
pub fn drift_matrix(params: &SystemParams, c: &EffectiveCouplings) -> DriftMatrix {
    let mut a = DMatrix::<f64>::zeros(10, 10);
    let ka = params.cavity_decay;
    let da = c.detunings.cavity;
    let g = params.cavity_magnon_coupling;

    a[(0, 0)] = -ka;
    a[(0, 1)] = da;
    a[(1, 0)] = -da;
    a[(1, 1)] = -ka;

    for j in 0..2 {
        let x = 2 + 2 * j; // magnon quadratures (x_j, y_j)
        let q = 6 + 2 * j; // mechanical quadratures (q_j, p_j)
        let km = params.magnon_decay[j];
        let dm = c.detunings.magnon[j];
        let big = c.coupling[j];

        a[(0, x + 1)] = g[j];
        a[(1, x)] = -g[j];
        a[(x, 1)] = g[j];
        a[(x + 1, 0)] = -g[j];

        a[(x, x)] = -km;
        a[(x, x + 1)] = dm;
        a[(x + 1, x)] = -dm;
        a[(x + 1, x + 1)] = -km;
        a[(x, q)] = -big.re;
        a[(x + 1, q)] = -big.im;

        let wb = params.mechanical_frequency[j];
        a[(q, q + 1)] = wb;
        a[(q + 1, x)] = -big.im;
        a[(q + 1, x + 1)] = big.re;
        a[(q + 1, q)] = -wb;
        a[(q + 1, q + 1)] = -params.mechanical_damping[j];
    }
    DriftMatrix::new(a, ModeLayout::standard()).expect("finite 10x10 drift")
}

/// Diagonal diffusion matrix of the thermal input noises; the mechanical
/// position entries are exactly zero.
pub fn diffusion_matrix(params: &SystemParams) -> DiffusionMatrix {
    let na = params.thermal_occupation(Mode::Cavity);
    let ka = params.cavity_decay;
    let mut diag = [0.0; 10];
    diag[0] = ka * (2.0 * na + 1.0);
    diag[1] = diag[0];
    for (j, magnet) in [Magnet::One, Magnet::Two].into_iter().enumerate() {
        let nm = params.thermal_occupation(magnet.magnon());
        let km = params.magnon_decay[j];
        diag[2 + 2 * j] = km * (2.0 * nm + 1.0);
        diag[3 + 2 * j] = diag[2 + 2 * j];
        let nb = params.thermal_occupation(magnet.phonon());
        diag[6 + 2 * j] = 0.0;
        diag[7 + 2 * j] = params.mechanical_damping[j] * (2.0 * nb + 1.0);
    }
    DiffusionMatrix::diagonal(&diag).expect("non-negative diagonal")
}

/// Largest angular rate present in a drift configuration: detunings,
/// mechanical frequencies, couplings and decay rates.
pub fn fastest_rate(params: &SystemParams, c: &EffectiveCouplings) -> f64 {
    let mut rates: Vec<f64> = alloc::vec![c.detunings.cavity.abs(), params.cavity_decay,];
    for j in 0..2 {
        rates.extend([
            c.detunings.magnon[j].abs(),
            params.mechanical_frequency[j],
            c.coupling[j].norm(),
            params.cavity_magnon_coupling[j],
            params.magnon_decay[j],
        ]);
    }
    rates.into_iter().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_dynamics::{solve_lyapunov, stability_margin};
    use approx::assert_abs_diff_eq;

    const TWO_PI: f64 = 2.0 * PI;

    fn params() -> SystemParams {
        SystemParams {
            cavity_frequency: TWO_PI * 10e9,
            magnon_frequency: [TWO_PI * 10.02e9, TWO_PI * 9.9991e9],
            mechanical_frequency: [TWO_PI * 17e6, TWO_PI * 12e6],
            cavity_decay: TWO_PI * 1e6,
            magnon_decay: [TWO_PI * 1e6; 2],
            mechanical_damping: [TWO_PI * 100.0; 2],
            cavity_magnon_coupling: [TWO_PI * 5e6, TWO_PI * 1e6],
            magnomechanical_coupling: [TWO_PI * 10.0; 2],
            temperature: 0.01,
            crystals: [None, None],
        }
    }

    fn drive(rabi: f64, freq: f64) -> DriveSpec {
        DriveSpec {
            target: Magnet::One,
            frequency: freq,
            strength: DriveStrength::Rabi(rabi),
            profile: DriveProfile::Continuous,
        }
    }

    #[test]
    fn occupation_zero_temperature() {
        assert_eq!(thermal_occupation(1e9, 0.0), 0.0);
    }

    #[test]
    fn occupation_unit_at_ln2() {
        let t = 0.05;
        let omega = BOLTZMANN * t * core::f64::consts::LN_2 / HBAR;
        assert_abs_diff_eq!(thermal_occupation(omega, t), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn occupation_of_mechanics_at_ten_millikelvin() {
        // x = ħω/k_BT = 0.057 594 8...; 1/(e^x − 1) evaluated by series below
        let x = HBAR * TWO_PI * 12e6 / (BOLTZMANN * 0.01);
        let mut e = 0.0;
        let mut term = 1.0;
        for k in 1..30 {
            term *= x / k as f64;
            e += term;
        }
        let n = thermal_occupation(TWO_PI * 12e6, 0.01);
        assert_abs_diff_eq!(n, 1.0 / e, epsilon = 1e-10);
        assert!((n - 16.87).abs() < 0.1, "{n}");
    }

    #[test]
    fn rabi_scaling() {
        let base = rabi_frequency(1e-4, 1e10);
        assert_abs_diff_eq!(
            rabi_frequency(2e-4, 1e10),
            2.0 * base,
            epsilon = 1e-6 * base
        );
        assert_abs_diff_eq!(
            rabi_frequency(1e-4, 4e10),
            2.0 * base,
            epsilon = 1e-6 * base
        );
    }

    #[test]
    fn field_scaling_with_power() {
        let b = field_from_power(1e-3, 1e-5, 3e-6);
        assert_abs_diff_eq!(field_from_power(4e-3, 1e-5, 3e-6), 2.0 * b, epsilon = 1e-15);
    }

    #[test]
    fn undriven_means_vanish() {
        let p = params();
        let s = steady_state_means(&p, &drive(0.0, TWO_PI * 10.016e9), true).unwrap();
        assert_eq!(s.means, ClassicalMeans::default());
    }

    #[test]
    fn single_magnet_limit() {
        let mut p = params();
        p.cavity_magnon_coupling[1] = 0.0;
        let w0 = TWO_PI * 10.016e9;
        let omega = 1e12;
        let s = steady_state_means(&p, &drive(omega, w0), false).unwrap();
        assert_eq!(s.means.magnon[1], Complex64::new(0.0, 0.0));
        let ca = Complex64::new(p.cavity_decay, p.cavity_frequency - w0);
        let c1 = Complex64::new(p.magnon_decay[0], p.magnon_frequency[0] - w0);
        let g1 = p.cavity_magnon_coupling[0];
        let expected = ca * omega / (c1 * ca + g1 * g1);
        assert!((s.means.magnon[0] - expected).norm() < 1e-12 * expected.norm());
    }

    #[test]
    fn steady_state_rejects_pulse() {
        let mut d = drive(1e12, TWO_PI * 10.016e9);
        d.profile = DriveProfile::Flattop { duration: 1e-6 };
        assert!(steady_state_means(&params(), &d, false).is_err());
    }

    #[test]
    fn field_drive_requires_crystal() {
        let mut d = drive(0.0, TWO_PI * 10.016e9);
        d.strength = DriveStrength::Field(4.8e-4);
        assert!(matches!(
            d.rabi_frequency(&params()),
            Err(Error::InvalidParameter {
                name: "crystal",
                ..
            })
        ));
    }

    #[test]
    fn mean_field_rate_vanishes_at_steady_state() {
        let mut p = params();
        let w0 = p.cavity_frequency + 0.95 * p.mechanical_frequency[0];
        p.magnon_frequency[0] = w0 + 0.95 * p.mechanical_frequency[0];
        let d = drive(2e13, w0);
        let s = steady_state_means(&p, &d, true).unwrap();
        assert!(s.iterations > 2);
        let rate = mean_field_rate(&p, &s.bare_detunings, d.amplitudes(s.rabi, 0.0), &s.means);
        let worst = [rate.cavity, rate.magnon[0], rate.magnon[1]]
            .iter()
            .map(|z| z.norm())
            .chain(rate.position.iter().chain(&rate.momentum).map(|x| x.abs()))
            .fold(0.0, f64::max);
        assert!(worst < 1e-9 * 2e13, "residual {worst:e}");
    }

    #[test]
    fn coupling_phase_bookkeeping() {
        assert_eq!(
            effective_coupling(5.0, Complex64::new(0.0, 0.0)),
            Complex64::new(0.0, 0.0)
        );
        let g = effective_coupling(5.0, Complex64::new(3.0, 0.0));
        assert_eq!(g.re, 0.0);
        assert_abs_diff_eq!(g.im, SQRT_2 * 15.0, epsilon = 1e-12);
    }

    #[test]
    fn decoupled_drift_blocks() {
        let p = params();
        let det = Detunings::relative_to(&p, TWO_PI * 10.016e9);
        let mut p0 = p;
        p0.cavity_magnon_coupling = [0.0; 2];
        let a = drift_matrix(&p0, &EffectiveCouplings::decoupled(det));
        let m = a.matrix();
        assert_eq!(m[(0, 0)], -p.cavity_decay);
        assert_eq!(m[(0, 1)], det.cavity);
        assert_eq!(m[(1, 0)], -det.cavity);
        assert_eq!(m[(2, 3)], det.magnon[0]);
        assert_eq!(m[(6, 7)], p.mechanical_frequency[0]);
        assert_eq!(m[(7, 6)], -p.mechanical_frequency[0]);
        assert_eq!(m[(7, 7)], -p.mechanical_damping[0]);
        assert_eq!(m[(9, 8)], -p.mechanical_frequency[1]);
        // nothing couples different modes
        for i in 0..10 {
            for j in 0..10 {
                if i / 2 != j / 2 {
                    assert_eq!(m[(i, j)], 0.0, "({i}, {j})");
                }
            }
        }
    }

    #[test]
    fn imaginary_coupling_slots() {
        let p = params();
        let det = Detunings::relative_to(&p, TWO_PI * 10.016e9);
        let c = EffectiveCouplings {
            coupling: [Complex64::new(0.0, 3.0), Complex64::new(0.0, -2.0)],
            detunings: det,
        };
        let m = drift_matrix(&p, &c).into_matrix();
        // one-based (3,7), (8,4)-type positions of the printed matrix
        assert_eq!(m[(2, 6)], 0.0);
        assert_eq!(m[(3, 6)], -3.0);
        assert_eq!(m[(7, 2)], -3.0);
        assert_eq!(m[(7, 3)], 0.0);
        assert_eq!(m[(5, 8)], 2.0);
        assert_eq!(m[(9, 4)], 2.0);
    }

    #[test]
    fn drift_is_linear_in_couplings() {
        let p = params();
        let det = Detunings::relative_to(&p, TWO_PI * 10.016e9);
        let at = |re: f64, im: f64, g1: f64| {
            let mut q = p;
            q.cavity_magnon_coupling[0] = g1;
            drift_matrix(
                &q,
                &EffectiveCouplings {
                    coupling: [Complex64::new(re, im), Complex64::new(1.0, 2.0)],
                    detunings: det,
                },
            )
            .into_matrix()
        };
        let base = at(1.0, 2.0, 3.0);
        for (dre, dim, dg) in [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)] {
            let one = &at(1.0 + dre, 2.0 + dim, 3.0 + dg) - &base;
            let two = &at(1.0 + 2.0 * dre, 2.0 + 2.0 * dim, 3.0 + 2.0 * dg) - &base;
            assert_eq!(two, one * 2.0);
        }
    }

    #[test]
    fn zero_temperature_diffusion() {
        let mut p = params();
        p.temperature = 0.0;
        let d = diffusion_matrix(&p);
        let k = p.cavity_decay;
        let g = p.mechanical_damping[0];
        let expected = [k, k, k, k, k, k, 0.0, g, 0.0, g];
        for (i, e) in expected.iter().enumerate() {
            assert_eq!(d.matrix()[(i, i)], *e);
        }
    }

    #[test]
    fn diffusion_occupations_at_ten_millikelvin() {
        let p = params();
        assert!(p.thermal_occupation(Mode::Cavity) < 1e-20);
        for m in [Mode::Phonon1, Mode::Phonon2] {
            let n = p.thermal_occupation(m);
            assert!((10.0..30.0).contains(&n), "{m}: {n}");
        }
        let d = diffusion_matrix(&p);
        assert_eq!(d.matrix()[(6, 6)], 0.0);
        assert_eq!(d.matrix()[(8, 8)], 0.0);
    }

    #[test]
    fn decoupled_mechanics_are_exactly_thermal() {
        let mut p = params();
        p.magnomechanical_coupling = [0.0; 2];
        let s = steady_state_means(&p, &drive(2e13, TWO_PI * 10.016e9), false).unwrap();
        let a = drift_matrix(&p, &s.couplings);
        assert!(stability_margin(&a) < 0.0);
        let v = solve_lyapunov(&a, &diffusion_matrix(&p)).unwrap();
        for (j, m) in [Mode::Phonon1, Mode::Phonon2].into_iter().enumerate() {
            let n = p.thermal_occupation(m);
            let q = 6 + 2 * j;
            let tol = 1e-8 * (n + 0.5);
            assert_abs_diff_eq!(v.matrix()[(q, q)], n + 0.5, epsilon = tol);
            assert_abs_diff_eq!(v.matrix()[(q + 1, q + 1)], n + 0.5, epsilon = tol);
            for k in 0..10 {
                if k / 2 != q / 2 {
                    assert_abs_diff_eq!(v.matrix()[(q, k)], 0.0, epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut p = params();
        p.cavity_decay = 0.0;
        assert!(p.validate().is_err());
        let mut p = params();
        p.temperature = -1.0;
        assert!(p.validate().is_err());
        let mut p = params();
        p.mechanical_damping[1] = p.mechanical_frequency[1] / 10.0;
        let w = p.validate().unwrap();
        assert!(matches!(
            w[0],
            Warning::LowMechanicalQ {
                magnet: Magnet::Two,
                ..
            }
        ));
    }
}
