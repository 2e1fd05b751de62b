//! Linear open-system machinery: stability, the continuous Lyapunov equation,
//! and time-ordered covariance propagation.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expm::matrix_exponential;
use crate::gaussian_state::{physicality, CovarianceMatrix, ModeLayout, PHYSICALITY_TOL};

/// Relative residual bound `‖AV + VAᵀ + D‖ ≤ LYAPUNOV_RTOL·‖D‖` (max-abs norm).
pub const LYAPUNOV_RTOL: f64 = 1e-8;

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// Drift matrix `A` of `u̇ = A u + n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftMatrix {
    matrix: DMatrix<f64>,
    layout: ModeLayout,
}

impl DriftMatrix {
    pub fn new(matrix: DMatrix<f64>, layout: ModeLayout) -> Result<Self> {
        if matrix.nrows() != layout.dim() || matrix.ncols() != layout.dim() {
            return Err(Error::Dimension {
                expected: layout.dim(),
                found: matrix.nrows().max(matrix.ncols()),
            });
        }
        if !matrix.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("drift", "non-finite entry"));
        }
        Ok(DriftMatrix { matrix, layout })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn layout(&self) -> &ModeLayout {
        &self.layout
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }
}

/// Diffusion matrix `D`: symmetric and positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionMatrix {
    matrix: DMatrix<f64>,
}

impl DiffusionMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Dimension {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let scale = max_abs(&matrix).max(f64::MIN_POSITIVE);
        let asym = max_abs(&(&matrix - matrix.transpose()));
        if !asym.is_finite() || asym > 1e-12 * scale {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        let matrix = 0.5 * (&matrix + matrix.transpose());
        let min_eig = matrix.clone().symmetric_eigenvalues().min();
        if min_eig < -1e-12 * scale {
            return Err(Error::invalid(
                "diffusion",
                "matrix is not positive semidefinite",
            ));
        }
        Ok(DiffusionMatrix { matrix })
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(entries)))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

/// Largest real part of the drift spectrum; the system is stable iff negative.
pub fn stability_margin(a: &DriftMatrix) -> f64 {
    spectral_abscissa(&a.matrix)
}

pub(crate) fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `AV + VAᵀ + D` in the max-abs norm.
pub fn lyapunov_residual(a: &DMatrix<f64>, v: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    max_abs(&(a * v + v * a.transpose() + d))
}

/// Solves `AV + VAᵀ = −D` through the Kronecker form
/// `(I⊗A + A⊗I) vec(V) = −vec(D)` with one step of iterative refinement.
pub fn solve_lyapunov(a: &DriftMatrix, d: &DiffusionMatrix) -> Result<CovarianceMatrix> {
    let n = a.matrix.nrows();
    if d.matrix.nrows() != n {
        return Err(Error::Dimension {
            expected: n,
            found: d.matrix.nrows(),
        });
    }
    let margin = stability_margin(a);
    if !(margin < 0.0) {
        return Err(Error::Unstable { margin });
    }

    let am = &a.matrix;
    let nn = n * n;
    // column-major vec: index of V[(i, j)] is i + n j
    let mut k = DMatrix::<f64>::zeros(nn, nn);
    for j in 0..n {
        for i in 0..n {
            let row = i + n * j;
            for p in 0..n {
                // (AV)_{ij} = Σ_p A_ip V_pj
                k[(row, p + n * j)] += am[(i, p)];
                // (VAᵀ)_{ij} = Σ_p V_ip A_jp
                k[(row, i + n * p)] += am[(j, p)];
            }
        }
    }
    let rhs = DVector::from_iterator(nn, d.matrix.iter().map(|x| -x));
    let lu = k.clone().lu();

    let diag = lu.u().diagonal();
    let umax = diag.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let umin = diag.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
    let condition = if umin > 0.0 {
        umax / umin
    } else {
        f64::INFINITY
    };

    let mut x = lu.solve(&rhs).ok_or(Error::Singular {
        condition,
        residual: f64::INFINITY,
    })?;
    let r = &rhs - &k * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }

    let v = DMatrix::from_column_slice(n, n, x.as_slice());
    let v = 0.5 * (&v + v.transpose());
    let residual = lyapunov_residual(am, &v, &d.matrix);
    let scale = max_abs(&d.matrix);
    if !residual.is_finite() || residual > LYAPUNOV_RTOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Singular {
            condition,
            residual,
        });
    }
    Ok(CovarianceMatrix::from_symmetric_unchecked(
        v,
        a.layout.clone(),
    ))
}

/// Where a segment's drift comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftSource {
    Constant(DMatrix<f64>),
    /// Matrices sampled at `start + k·step`, linearly interpolated in between
    /// and held constant beyond the last sample.
    Sampled {
        start: f64,
        step: f64,
        matrices: Vec<DMatrix<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftSegment {
    pub start: f64,
    pub end: f64,
    pub source: DriftSource,
}

/// Piecewise definition of `t ↦ A(t)` on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftSchedule {
    segments: Vec<DriftSegment>,
    dim: usize,
}

impl DriftSchedule {
    /// Segments must start at 0, be contiguous and share one dimension.
    pub fn new(segments: Vec<DriftSegment>) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| Error::invalid("schedule", "no segments"))?;
        if first.start != 0.0 {
            return Err(Error::invalid(
                "schedule",
                "first segment must start at t = 0",
            ));
        }
        let dim = match &first.source {
            DriftSource::Constant(m) => m.nrows(),
            DriftSource::Sampled { matrices, .. } => matrices
                .first()
                .map(|m| m.nrows())
                .ok_or_else(|| Error::invalid("schedule", "sampled segment without samples"))?,
        };
        let mut prev_end = 0.0;
        for seg in &segments {
            if seg.start != prev_end {
                return Err(Error::invalid("schedule", "segments are not contiguous"));
            }
            if !(seg.end > seg.start) {
                return Err(Error::invalid("schedule", "empty or reversed segment"));
            }
            let ok = match &seg.source {
                DriftSource::Constant(m) => m.nrows() == dim && m.ncols() == dim,
                DriftSource::Sampled { step, matrices, .. } => {
                    *step > 0.0
                        && !matrices.is_empty()
                        && matrices
                            .iter()
                            .all(|m| m.nrows() == dim && m.ncols() == dim)
                }
            };
            if !ok {
                return Err(Error::invalid("schedule", "inconsistent segment matrices"));
            }
            prev_end = seg.end;
        }
        Ok(DriftSchedule { segments, dim })
    }

    pub fn constant(a: &DriftMatrix, duration: f64) -> Result<Self> {
        Self::new(alloc::vec![DriftSegment {
            start: 0.0,
            end: duration,
            source: DriftSource::Constant(a.matrix.clone()),
        }])
    }

    pub fn duration(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.end)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn segment_index(&self, t: f64) -> usize {
        self.segments
            .iter()
            .position(|s| t < s.end)
            .unwrap_or(self.segments.len() - 1)
    }

    /// `A(t)`; times past the end use the last segment.
    pub fn at(&self, t: f64) -> DMatrix<f64> {
        let seg = &self.segments[self.segment_index(t)];
        match &seg.source {
            DriftSource::Constant(m) => m.clone(),
            DriftSource::Sampled {
                start,
                step,
                matrices,
            } => {
                let x = ((t - start) / step).max(0.0);
                let k = libm::floor(x) as usize;
                if k + 1 >= matrices.len() {
                    return matrices[matrices.len() - 1].clone();
                }
                let w = x - k as f64;
                &matrices[k] * (1.0 - w) + &matrices[k + 1] * w
            }
        }
    }

    fn constant_segment_at(&self, t: f64) -> Option<usize> {
        let idx = self.segment_index(t);
        matches!(self.segments[idx].source, DriftSource::Constant(_)).then_some(idx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationOptions {
    /// Keep every `output_stride`-th step (the initial and final states are
    /// always kept).
    pub output_stride: usize,
    /// Relative tolerance of the first-step full-versus-half-step comparison.
    pub step_tolerance: f64,
    pub physicality_tol: f64,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        PropagationOptions {
            output_stride: 1,
            step_tolerance: 1e-6,
            physicality_tol: PHYSICALITY_TOL,
        }
    }
}

/// Sampled output of [`propagate_cm`].
#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub times: Vec<f64>,
    pub states: Vec<CovarianceMatrix>,
    /// Step actually used: `T / ceil(T / dt)`.
    pub step: f64,
    /// Relative difference between one full step and two half steps on the
    /// first step.
    pub step_discrepancy: f64,
    /// Set when `step_discrepancy` exceeded the requested tolerance.
    pub coarse_step_warning: bool,
}

struct StepKernel {
    transfer: DMatrix<f64>,
    noise: DMatrix<f64>,
}

impl StepKernel {
    /// `M = exp(A h)` and the midpoint-rule noise `h · M(h/2) D M(h/2)ᵀ`.
    fn midpoint(a: &DMatrix<f64>, d: &DMatrix<f64>, h: f64) -> Result<Self> {
        let half = matrix_exponential(a, 0.5 * h)?;
        let transfer = &half * &half;
        let noise = (&half * d * half.transpose()) * h;
        Ok(StepKernel { transfer, noise })
    }

    /// Exact noise integral `∫₀ʰ e^{As} D e^{Aᵀs} ds` from the block
    /// exponential of `[[−A, D], [0, Aᵀ]]` (Van Loan).
    fn exact(a: &DMatrix<f64>, d: &DMatrix<f64>, h: f64) -> Result<Self> {
        let n = a.nrows();
        let mut block = DMatrix::zeros(2 * n, 2 * n);
        block.view_mut((0, 0), (n, n)).copy_from(&(-a));
        block.view_mut((0, n), (n, n)).copy_from(d);
        block.view_mut((n, n), (n, n)).copy_from(&a.transpose());
        let e = matrix_exponential(&block, h)?;
        let transfer = e.view((n, n), (n, n)).transpose();
        let noise = &transfer * e.view((0, n), (n, n));
        let noise = 0.5 * (&noise + noise.transpose());
        Ok(StepKernel { transfer, noise })
    }

    fn apply(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let next = &self.transfer * v * self.transfer.transpose() + &self.noise;
        0.5 * (&next + next.transpose())
    }
}

fn step_count(total: f64, dt: f64) -> Result<usize> {
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
    Ok(if n < 1.0 { 0 } else { n as usize })
}

/// Propagates `V` under `dV/dt = A(t)V + VA(t)ᵀ + D` as a time-ordered
/// product of single-step exponentials, evaluating `A` at each step midpoint.
///
/// On constant segments the noise integral of each step is exact; on sampled
/// segments it uses the midpoint rule.
///
/// `observer` sees every step (including `t = 0`), independent of the output
/// stride.
pub fn propagate_cm_observed(
    schedule: &DriftSchedule,
    d: &DiffusionMatrix,
    v0: &CovarianceMatrix,
    total: f64,
    dt: f64,
    options: &PropagationOptions,
    observer: &mut dyn FnMut(f64, &DMatrix<f64>),
) -> Result<Propagation> {
    let dim = v0.dim();
    if schedule.dim() != dim || d.matrix.nrows() != dim {
        return Err(Error::Dimension {
            expected: dim,
            found: schedule.dim(),
        });
    }
    let check = physicality(v0.matrix(), options.physicality_tol)?;
    if !check.physical {
        return Err(Error::Unphysical {
            min_eigenvalue: check.min_eigenvalue,
        });
    }
    let steps = step_count(total, dt)?;
    let h = if steps == 0 {
        0.0
    } else {
        total / steps as f64
    };
    let stride = options.output_stride.max(1);
    let layout = v0.layout().clone();

    let mut v = v0.matrix().clone();
    let mut times = alloc::vec![0.0];
    let mut states = alloc::vec![v0.clone()];
    observer(0.0, &v);

    let mut step_discrepancy = 0.0;
    let mut cached: Option<(usize, StepKernel)> = None;
    for k in 0..steps {
        let t = k as f64 * h;
        let mid = t + 0.5 * h;
        let kernel = match (schedule.constant_segment_at(mid), cached.take()) {
            (Some(seg), Some((cseg, kern))) if seg == cseg => (seg, kern),
            (Some(seg), _) => (seg, StepKernel::exact(&schedule.at(mid), &d.matrix, h)?),
            (None, _) => (
                usize::MAX,
                StepKernel::midpoint(&schedule.at(mid), &d.matrix, h)?,
            ),
        };
        let next = kernel.1.apply(&v);
        if k == 0 {
            let make = if kernel.0 == usize::MAX {
                StepKernel::midpoint
            } else {
                StepKernel::exact
            };
            let first_half = make(&schedule.at(t + 0.25 * h), &d.matrix, 0.5 * h)?;
            let second_half = make(&schedule.at(t + 0.75 * h), &d.matrix, 0.5 * h)?;
            let fine = second_half.apply(&first_half.apply(&v));
            step_discrepancy = max_abs(&(&fine - &next)) / max_abs(&fine).max(1.0);
        }
        if kernel.0 != usize::MAX {
            cached = Some(kernel);
        }
        v = next;
        let t_next = (k + 1) as f64 * h;
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite { time: t_next });
        }
        observer(t_next, &v);
        if (k + 1) % stride == 0 || k + 1 == steps {
            times.push(t_next);
            states.push(CovarianceMatrix::from_symmetric_unchecked(
                v.clone(),
                layout.clone(),
            ));
        }
    }

    Ok(Propagation {
        times,
        states,
        step: h,
        step_discrepancy,
        coarse_step_warning: step_discrepancy > options.step_tolerance,
    })
}

pub fn propagate_cm(
    schedule: &DriftSchedule,
    d: &DiffusionMatrix,
    v0: &CovarianceMatrix,
    total: f64,
    dt: f64,
    options: &PropagationOptions,
) -> Result<Propagation> {
    propagate_cm_observed(schedule, d, v0, total, dt, options, &mut |_, _| {})
}

/// Classical RK4 integration of `dV/dt = A(t)V + VA(t)ᵀ + D`; returns `V(T)`.
///
/// Independent route to the same evolution as [`propagate_cm`], used as a
/// cross-check.
pub fn integrate_covariance_ode(
    schedule: &DriftSchedule,
    d: &DiffusionMatrix,
    v0: &DMatrix<f64>,
    total: f64,
    dt: f64,
) -> Result<DMatrix<f64>> {
    let steps = step_count(total, dt)?;
    let h = if steps == 0 {
        0.0
    } else {
        total / steps as f64
    };
    let rhs = |a: &DMatrix<f64>, v: &DMatrix<f64>| a * v + v * a.transpose() + &d.matrix;
    let mut v = v0.clone();
    for k in 0..steps {
        let t = k as f64 * h;
        let a0 = schedule.at(t);
        let am = schedule.at(t + 0.5 * h);
        let a1 = schedule.at(t + h);
        let k1 = rhs(&a0, &v);
        let k2 = rhs(&am, &(&v + &k1 * (0.5 * h)));
        let k3 = rhs(&am, &(&v + &k2 * (0.5 * h)));
        let k4 = rhs(&a1, &(&v + &k3 * h));
        v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite { time: t + h });
        }
    }
    Ok(0.5 * (&v + v.transpose()))
}
