//! The two-step entanglement-transfer protocol.
//!
//! Step 1 drives magnon 1 continuously and computes the steady state of the
//! fluctuations. Step 2 switches to a flattop pulse on magnon 2 (new rotating
//! frame), resolves the classical transient and propagates the covariance
//! matrix through the resulting time-dependent drift. After the pulse the
//! system evolves freely.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gaussian_state::{physicality, CovarianceMatrix, Mode, ModeLayout, PHYSICALITY_TOL};
use crate::linear_dynamics::{
    propagate_cm_observed, solve_lyapunov, stability_margin, DriftMatrix, DriftSchedule,
    DriftSegment, DriftSource, Propagation, PropagationOptions,
};
use crate::model::{
    diffusion_matrix, drift_matrix, fastest_rate, mean_field_rate, steady_state_means,
    ClassicalMeans, Detunings, DriveProfile, DriveSpec, EffectiveCouplings, SteadyState,
    SystemParams, Warning,
};

/// Default time step is this fraction of the inverse fastest rate.
pub const STEP_FRACTION: f64 = 0.01;

/// Classical means used to build the step-2 drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Step2Means {
    /// Integrate the mean-field equations from the step-1 means, so the
    /// switch-on transient of `⟨m_j⟩(t)` enters `G_j(t)`.
    #[default]
    Transient,
    /// Start from, and therefore stay at, the steady state under the step-2
    /// drive (instantaneous switch-on).
    Settled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolOptions {
    /// Iterate the mechanical detuning shift to self-consistency in step 1.
    pub self_consistent: bool,
    /// Time step; `None` picks `STEP_FRACTION / fastest rate`.
    pub dt: Option<f64>,
    pub step_tolerance: f64,
    pub physicality_tol: f64,
    /// Keep every n-th covariance matrix of step 2 and free evolution.
    pub output_stride: usize,
    /// Turn a coarse-step warning into [`Error::StepTooCoarse`].
    pub escalate_coarse_step: bool,
    pub step2_means: Step2Means,
    /// Check the uncertainty relation on every propagated step, not only on
    /// the initial state.
    pub check_every_step: bool,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        ProtocolOptions {
            self_consistent: false,
            dt: None,
            step_tolerance: 1e-6,
            physicality_tol: PHYSICALITY_TOL,
            output_stride: 1,
            escalate_coarse_step: false,
            step2_means: Step2Means::Transient,
            check_every_step: true,
        }
    }
}

impl ProtocolOptions {
    fn propagation(&self) -> PropagationOptions {
        PropagationOptions {
            output_stride: self.output_stride,
            step_tolerance: self.step_tolerance,
            physicality_tol: self.physicality_tol,
        }
    }
}

/// Log-negativities of phonon 1 with each other mode.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EntanglementReport {
    pub b1_m2: f64,
    pub b1_a: f64,
    pub b1_m1: f64,
    pub b1_b2: f64,
}

impl EntanglementReport {
    pub fn measure(v: &CovarianceMatrix, tol: f64) -> Result<Self> {
        let e = |other| v.pair_negativity(Mode::Phonon1, other, tol);
        Ok(EntanglementReport {
            b1_m2: e(Mode::Magnon2)?,
            b1_a: e(Mode::Cavity)?,
            b1_m1: e(Mode::Magnon1)?,
            b1_b2: e(Mode::Phonon2)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step1 {
    pub steady: SteadyState,
    pub drift: DriftMatrix,
    pub margin: f64,
    pub covariance: CovarianceMatrix,
    pub entanglement: EntanglementReport,
    pub warnings: Vec<Warning>,
}

/// Steady state under the continuous step-1 drive.
///
/// An unstable drift is reported as [`Error::Unstable`] carrying the margin.
pub fn step1_steady_state(
    params: &SystemParams,
    drive: &DriveSpec,
    options: &ProtocolOptions,
) -> Result<Step1> {
    let steady = steady_state_means(params, drive, options.self_consistent)?;
    let drift = drift_matrix(params, &steady.couplings);
    let margin = stability_margin(&drift);
    if !(margin < 0.0) {
        return Err(Error::Unstable { margin });
    }
    let covariance = solve_lyapunov(&drift, &diffusion_matrix(params))?;
    let check = covariance.is_physical(options.physicality_tol);
    if !check.physical {
        return Err(Error::Unphysical {
            min_eigenvalue: check.min_eigenvalue,
        });
    }
    let entanglement = EntanglementReport::measure(&covariance, options.physicality_tol)?;
    let warnings = steady.warnings.clone();
    Ok(Step1 {
        steady,
        drift,
        margin,
        covariance,
        entanglement,
        warnings,
    })
}

/// Classical means sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub means: Vec<ClassicalMeans>,
    /// Relative difference of the final state against a run at half the step.
    pub step_error: f64,
}

#[allow(clippy::too_many_arguments)]
fn rk4_means(
    params: &SystemParams,
    detunings: &Detunings,
    drive: &DriveSpec,
    rabi: f64,
    initial: &ClassicalMeans,
    steps: usize,
    h: f64,
    mut sink: impl FnMut(f64, &ClassicalMeans),
) -> Result<ClassicalMeans> {
    let rate = |t: f64, s: &ClassicalMeans| {
        mean_field_rate(params, detunings, drive.amplitudes(rabi, t), s)
    };
    let mut s = *initial;
    sink(0.0, &s);
    for k in 0..steps {
        let t = k as f64 * h;
        let k1 = rate(t, &s);
        let k2 = rate(t + 0.5 * h, &s.advanced(&k1, 0.5 * h));
        let k3 = rate(t + 0.5 * h, &s.advanced(&k2, 0.5 * h));
        let k4 = rate(t + h, &s.advanced(&k3, h));
        s = s
            .advanced(&k1, h / 6.0)
            .advanced(&k2, h / 3.0)
            .advanced(&k3, h / 3.0)
            .advanced(&k4, h / 6.0);
        let t_next = (k + 1) as f64 * h;
        if !s.is_finite() {
            return Err(Error::NonFinite { time: t_next });
        }
        sink(t_next, &s);
    }
    Ok(s)
}

fn grid(total: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("dt", "step must be positive and finite"));
    }
    if !(total >= 0.0) || !total.is_finite() {
        return Err(Error::invalid(
            "duration",
            "must be non-negative and finite",
        ));
    }
    let n = libm::ceil(total / dt - 1e-9);
    let steps = if n < 1.0 { 0 } else { n as usize };
    Ok((
        steps,
        if steps == 0 {
            0.0
        } else {
            total / steps as f64
        },
    ))
}

/// Integrates the noise-free nonlinear mean-field equations in the frame of
/// `drive` with fixed-step RK4 on the grid `T / ceil(T / dt)`.
pub fn classical_trajectory(
    params: &SystemParams,
    drive: &DriveSpec,
    initial: &ClassicalMeans,
    total: f64,
    dt: f64,
) -> Result<Trajectory> {
    params.validate()?;
    let rabi = drive.rabi_frequency(params)?;
    let detunings = Detunings::relative_to(params, drive.frequency);
    let (steps, h) = grid(total, dt)?;
    let mut times = Vec::with_capacity(steps + 1);
    let mut means = Vec::with_capacity(steps + 1);
    let end = rk4_means(
        params,
        &detunings,
        drive,
        rabi,
        initial,
        steps,
        h,
        |t, s| {
            times.push(t);
            means.push(*s);
        },
    )?;
    let fine = rk4_means(
        params,
        &detunings,
        drive,
        rabi,
        initial,
        2 * steps,
        0.5 * h,
        |_, _| {},
    )?;
    Ok(Trajectory {
        times,
        means,
        step_error: end.relative_difference(&fine),
    })
}

/// Time step used when none is configured: `STEP_FRACTION` over the fastest
/// rate seen in either of the given coupling configurations.
pub fn default_step(params: &SystemParams, couplings: &[EffectiveCouplings]) -> f64 {
    let fastest = couplings
        .iter()
        .map(|c| fastest_rate(params, c))
        .fold(0.0, f64::max);
    STEP_FRACTION / fastest
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step2 {
    /// Every propagation step, starting at the switch-over.
    pub times: Vec<f64>,
    pub b1_b2: Vec<f64>,
    pub b1_m2: Vec<f64>,
    /// Covariance matrices at the output stride.
    pub propagation: Propagation,
    pub trajectory: Trajectory,
    pub dt: f64,
    pub warnings: Vec<Warning>,
}

impl Step2 {
    pub fn optimum(&self) -> Option<PulseOptimum> {
        optimal_pulse_duration(&self.times, &self.b1_b2)
    }
}

/// Step-2 evolution from the step-1 state `v0` and means `initial`
/// (ignored with [`Step2Means::Settled`]).
///
/// Detunings are taken relative to the step-2 drive; `A(t)` follows the
/// classical trajectory, including the detuning shift `G_0j⟨q_j⟩(t)`.
pub fn step2_evolve(
    params: &SystemParams,
    drive: &DriveSpec,
    v0: &CovarianceMatrix,
    initial: &ClassicalMeans,
    total: f64,
    options: &ProtocolOptions,
) -> Result<Step2> {
    if v0.layout() != &ModeLayout::standard() {
        return Err(Error::invalid("v0", "expected the five-mode layout"));
    }
    let bare = Detunings::relative_to(params, drive.frequency);
    let mut continuous = *drive;
    continuous.profile = DriveProfile::Continuous;
    let settled = steady_state_means(
        params,
        &continuous,
        options.step2_means == Step2Means::Settled,
    )?
    .means;
    let initial = match options.step2_means {
        Step2Means::Transient => *initial,
        Step2Means::Settled => settled,
    };
    let dt = match options.dt {
        Some(dt) => dt,
        None => {
            let start = EffectiveCouplings::from_means(params, &bare, &initial, true);
            let end = EffectiveCouplings::from_means(params, &bare, &settled, true);
            default_step(params, &[start, end])
        }
    };
    let trajectory = classical_trajectory(params, drive, &initial, total, dt)?;
    let steps = trajectory.times.len() - 1;
    let h = if steps == 0 { dt } else { trajectory.times[1] };

    let matrices: Vec<DMatrix<f64>> = trajectory
        .means
        .iter()
        .map(|m| {
            let c = EffectiveCouplings::from_means(params, &bare, m, true);
            drift_matrix(params, &c).into_matrix()
        })
        .collect();
    let schedule = DriftSchedule::new(alloc::vec![DriftSegment {
        start: 0.0,
        end: if total > 0.0 { total } else { h },
        source: DriftSource::Sampled {
            start: 0.0,
            step: h,
            matrices,
        },
    }])?;

    let tol = options.physicality_tol;
    let check = options.check_every_step;
    let layout = ModeLayout::standard();
    let mut times = Vec::with_capacity(steps + 1);
    let mut b1_b2 = Vec::with_capacity(steps + 1);
    let mut b1_m2 = Vec::with_capacity(steps + 1);
    let mut failure: Option<Error> = None;
    let propagation = propagate_cm_observed(
        &schedule,
        &diffusion_matrix(params),
        v0,
        total,
        h,
        &options.propagation(),
        &mut |t, v| {
            if failure.is_some() {
                return;
            }
            if let Err(e) = check_step(v, tol, check) {
                failure = Some(e);
                return;
            }
            let cm = CovarianceMatrix::from_symmetric_unchecked(v.clone(), layout.clone());
            let pair = |other| cm.pair_negativity(Mode::Phonon1, other, tol);
            match (pair(Mode::Phonon2), pair(Mode::Magnon2)) {
                (Ok(bb), Ok(bm)) => {
                    times.push(t);
                    b1_b2.push(bb);
                    b1_m2.push(bm);
                }
                (Err(e), _) | (_, Err(e)) => failure = Some(e),
            }
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }

    let mut warnings = Vec::new();
    if propagation.coarse_step_warning {
        if options.escalate_coarse_step {
            return Err(Error::StepTooCoarse {
                discrepancy: propagation.step_discrepancy,
            });
        }
        warnings.push(Warning::CoarseStep {
            discrepancy: propagation.step_discrepancy,
        });
    }
    Ok(Step2 {
        times,
        b1_b2,
        b1_m2,
        propagation,
        trajectory,
        dt: h,
        warnings,
    })
}

fn check_step(v: &DMatrix<f64>, tol: f64, enabled: bool) -> Result<()> {
    if !enabled {
        return Ok(());
    }
    let p = physicality(v, tol)?;
    if p.physical {
        Ok(())
    } else {
        Err(Error::Unphysical {
            min_eigenvalue: p.min_eigenvalue,
        })
    }
}

/// Location of the largest value of a sampled series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseOptimum {
    pub duration: f64,
    pub negativity: f64,
    /// The grid maximum sits on the first or last sample, so no refinement
    /// was possible and the true optimum may lie outside the window.
    pub at_boundary: bool,
}

/// Grid argmax of `values` refined by the parabola through the bracketing
/// samples. Returns `None` when every value is zero (no entanglement).
pub fn optimal_pulse_duration(times: &[f64], values: &[f64]) -> Option<PulseOptimum> {
    let n = times.len().min(values.len());
    if n == 0 {
        return None;
    }
    let (k, &peak) = values[..n].iter().enumerate().fold(
        None,
        |best: Option<(usize, &f64)>, (i, v)| match best {
            Some((_, b)) if *b >= *v => best,
            _ => Some((i, v)),
        },
    )?;
    if !(peak > 0.0) {
        return None;
    }
    if k == 0 || k + 1 == n {
        return Some(PulseOptimum {
            duration: times[k],
            negativity: peak,
            at_boundary: true,
        });
    }
    let (x0, x1, x2) = (times[k - 1], times[k], times[k + 1]);
    let (y0, y1, y2) = (values[k - 1], values[k], values[k + 1]);
    // vertex of the interpolating parabola
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let curvature = (d12 - d01) / (x2 - x0);
    if !(curvature < 0.0) {
        return Some(PulseOptimum {
            duration: x1,
            negativity: y1,
            at_boundary: false,
        });
    }
    let slope_at_x1 = d01 + curvature * (x1 - x0);
    let shift = -slope_at_x1 / (2.0 * curvature);
    let vertex = x1 + shift;
    let value = y1 + slope_at_x1 * shift + curvature * shift * shift;
    Some(PulseOptimum {
        duration: vertex.clamp(x0, x2),
        negativity: value.max(y1),
        at_boundary: false,
    })
}

/// Runs step 2 with a drive held on over `search` and locates the maximum of
/// `E_b1b2(t)`.
pub fn find_optimal_pulse_duration(
    params: &SystemParams,
    drive: &DriveSpec,
    v0: &CovarianceMatrix,
    initial: &ClassicalMeans,
    search: f64,
    options: &ProtocolOptions,
) -> Result<(Step2, Option<PulseOptimum>)> {
    let mut held = *drive;
    held.profile = DriveProfile::Continuous;
    let run = step2_evolve(params, &held, v0, initial, search, options)?;
    let optimum = run.optimum();
    Ok((run, optimum))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreeEvolution {
    /// Every propagation step, starting at the switch-off.
    pub times: Vec<f64>,
    pub b1_b2: Vec<f64>,
    /// Covariance matrices at the output stride.
    pub propagation: Propagation,
    pub dt: f64,
}

impl FreeEvolution {
    /// First sampled time at which `E_b1b2` has fallen to `1/e` of its
    /// initial value, linearly interpolated.
    pub fn decay_time(&self) -> Option<f64> {
        let e0 = *self.b1_b2.first()?;
        if !(e0 > 0.0) {
            return None;
        }
        let target = e0 / core::f64::consts::E;
        let k = self.b1_b2.iter().position(|&e| e <= target)?;
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let (a, b) = (self.b1_b2[k - 1], self.b1_b2[k]);
        Some(t0 + (a - target) / (a - b) * (t1 - t0))
    }
}

/// Evolution with the drive off (`G_j = 0`, no drive). The cavity–magnon
/// couplings remain but no longer reach the mechanics.
///
/// `detunings` fixes the rotating frame; it does not affect the mechanical
/// blocks. `E_b1b2` is recorded on every step.
pub fn free_evolution(
    params: &SystemParams,
    detunings: &Detunings,
    v: &CovarianceMatrix,
    total: f64,
    options: &ProtocolOptions,
) -> Result<FreeEvolution> {
    let couplings = EffectiveCouplings::decoupled(*detunings);
    let dt = options
        .dt
        .unwrap_or_else(|| default_step(params, &[couplings]));
    let drift = drift_matrix(params, &couplings);
    let schedule = DriftSchedule::constant(&drift, if total > 0.0 { total } else { dt })?;
    let tol = options.physicality_tol;
    let layout = v.layout().clone();
    let mut times = Vec::new();
    let mut b1_b2 = Vec::new();
    let mut failure = None;
    let propagation = propagate_cm_observed(
        &schedule,
        &diffusion_matrix(params),
        v,
        total,
        dt,
        &options.propagation(),
        &mut |t, v| {
            if failure.is_some() {
                return;
            }
            let e = check_step(v, tol, options.check_every_step).and_then(|_| {
                CovarianceMatrix::from_symmetric_unchecked(v.clone(), layout.clone())
                    .pair_negativity(Mode::Phonon1, Mode::Phonon2, tol)
            });
            match e {
                Ok(e) => {
                    times.push(t);
                    b1_b2.push(e);
                }
                Err(e) => failure = Some(e),
            }
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let dt = propagation.step;
    Ok(FreeEvolution {
        times,
        b1_b2,
        propagation,
        dt,
    })
}

/// Everything produced by one run of the protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolResult {
    pub step1: Step1,
    pub step2: Step2,
    pub optimum: Option<PulseOptimum>,
    pub free: Option<FreeEvolution>,
}

/// Step 1, step 2 over `search`, and optionally `free_duration` of free
/// evolution starting from the state at the best grid point before `t_max`.
pub fn run_protocol(
    params: &SystemParams,
    drive1: &DriveSpec,
    drive2: &DriveSpec,
    search: f64,
    free_duration: Option<f64>,
    options: &ProtocolOptions,
) -> Result<ProtocolResult> {
    let step1 = step1_steady_state(params, drive1, options)?;
    let (step2, optimum) = find_optimal_pulse_duration(
        params,
        drive2,
        &step1.covariance,
        &step1.steady.means,
        search,
        options,
    )?;
    let free = match (free_duration, &optimum) {
        (Some(duration), Some(opt)) => {
            // re-run up to the grid point nearest t_max so the hand-off state is exact
            let k = step2
                .times
                .iter()
                .position(|&t| t >= opt.duration)
                .unwrap_or(step2.times.len() - 1);
            // held on through the last step; it switches off at the hand-off
            let mut pulse = *drive2;
            pulse.profile = DriveProfile::Continuous;
            let opts = ProtocolOptions {
                dt: Some(step2.dt),
                output_stride: usize::MAX,
                ..*options
            };
            let to_peak = step2_evolve(
                params,
                &pulse,
                &step1.covariance,
                &step1.steady.means,
                step2.times[k],
                &opts,
            )?;
            let v = to_peak
                .propagation
                .states
                .last()
                .cloned()
                .ok_or_else(|| Error::invalid("search", "empty step-2 window"))?;
            let detunings = Detunings::relative_to(params, drive2.frequency);
            Some(free_evolution(params, &detunings, &v, duration, options)?)
        }
        _ => None,
    };
    Ok(ProtocolResult {
        step1,
        step2,
        optimum,
        free,
    })
}
