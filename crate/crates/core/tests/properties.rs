mod common;

use common::*;
use magnomech_core::expm::matrix_exponential;
use magnomech_core::gaussian_state::{symplectic_spectrum, CovarianceMatrix, Mode, ModeLayout};
use magnomech_core::linear_dynamics::{
    lyapunov_residual, propagate_cm, solve_lyapunov, DiffusionMatrix, DriftMatrix, DriftSchedule,
    DriftSegment, DriftSource, PropagationOptions, LYAPUNOV_RTOL,
};
use magnomech_core::model::{drift_matrix, Detunings, EffectiveCouplings};
use magnomech_core::PHYSICALITY_TOL;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn pair() -> ModeLayout {
    ModeLayout::new(&[Mode::Phonon1, Mode::Phonon2]).unwrap()
}

fn small_stable(dim: usize, seed: u64) -> (DriftMatrix, DiffusionMatrix) {
    let mut r = rng(seed);
    let a = random_stable(dim, 0.2, &mut r);
    let d = random_psd(dim, &mut r);
    let layout = ModeLayout::new(&Mode::ALL[..dim / 2]).unwrap();
    (
        DriftMatrix::new(a, layout).unwrap(),
        DiffusionMatrix::new(d).unwrap(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symplectic_spectrum_is_invariant(seed in any::<u64>(), n in 1usize..=5) {
        let mut r = rng(seed);
        let v = random_physical(n, &mut r);
        let s = random_symplectic(n, &mut r);
        let before = symplectic_spectrum(&v).unwrap();
        let after = symplectic_spectrum(&(&s * &v * s.transpose())).unwrap();
        for (a, b) in before.iter().zip(&after) {
            prop_assert!((a - b).abs() <= 1e-8 * a.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn log_negativity_is_local_symplectic_invariant(seed in any::<u64>()) {
        let mut r = rng(seed);
        let v = random_physical(2, &mut r);
        let sa = random_symplectic(1, &mut r);
        let sb = random_symplectic(1, &mut r);
        let mut local = DMatrix::<f64>::zeros(4, 4);
        local.view_mut((0, 0), (2, 2)).copy_from(&sa);
        local.view_mut((2, 2), (2, 2)).copy_from(&sb);
        let w = &local * &v * local.transpose();
        let e1 = CovarianceMatrix::new(v, pair()).unwrap().log_negativity(1e-7).unwrap();
        let e2 = CovarianceMatrix::new(w, pair()).unwrap().log_negativity(1e-7).unwrap();
        prop_assert!((e1 - e2).abs() <= 1e-7 * e1.max(1.0), "{e1} vs {e2}");
        prop_assert!(e1 >= 0.0);
    }

    #[test]
    fn partial_transpose_is_an_involution(seed in any::<u64>()) {
        let mut r = rng(seed);
        let v = CovarianceMatrix::new(random_physical(2, &mut r), pair()).unwrap();
        let back = v.partial_transpose().unwrap().partial_transpose().unwrap();
        prop_assert_eq!(back, v);
    }

    #[test]
    fn random_physical_states_pass_the_check(seed in any::<u64>(), n in 1usize..=5) {
        let mut r = rng(seed);
        let v = random_physical(n, &mut r);
        let layout = ModeLayout::new(&Mode::ALL[..n]).unwrap();
        prop_assert!(CovarianceMatrix::new(v, layout).unwrap().is_physical(1e-8).physical);
    }

    #[test]
    fn drift_is_linear_in_each_coupling(
        re in -1e7f64..1e7, im in -1e7f64..1e7, g in 0.0f64..1e7, slot in 0usize..2,
    ) {
        let (p, w0) = working_point();
        let det = Detunings::relative_to(&p, w0);
        let build = |re: f64, im: f64, g: f64| {
            let mut q = p;
            q.cavity_magnon_coupling[slot] = g;
            let mut c = [Complex64::new(1e6, -2e6); 2];
            c[slot] = Complex64::new(re, im);
            drift_matrix(&q, &EffectiveCouplings { coupling: c, detunings: det }).into_matrix()
        };
        let base = build(re, im, g);
        for (dre, dim, dg) in [(1e6, 0.0, 0.0), (0.0, 1e6, 0.0), (0.0, 0.0, 1e6)] {
            let one = build(re + dre, im + dim, g + dg) - &base;
            let two = build(re + 2.0 * dre, im + 2.0 * dim, g + 2.0 * dg) - &base;
            prop_assert!(max_abs(&(two - one * 2.0)) <= 1e-8 * 1e6);
        }
    }

    #[test]
    fn lyapunov_output_meets_residual_bound(seed in any::<u64>()) {
        let (a, d) = small_stable(10, seed);
        let v = solve_lyapunov(&a, &d).unwrap();
        let res = lyapunov_residual(a.matrix(), v.matrix(), d.matrix());
        prop_assert!(res <= LYAPUNOV_RTOL * max_abs(d.matrix()));
        prop_assert_eq!(v.matrix(), &v.matrix().transpose());
        let min = v.matrix().clone().symmetric_eigenvalues().min();
        prop_assert!(min >= -1e-9 * max_abs(v.matrix()));
    }

    #[test]
    fn propagation_preserves_physicality(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random_stable(4, 0.1, &mut r);
        // D ⪰ −i(AΩ + ΩAᵀ)/2 keeps the evolution physical; take D = βI large enough
        let omega = magnomech_core::gaussian_state::symplectic_form(
            std::num::NonZeroUsize::new(2).unwrap(),
        );
        let k = &a * &omega + &omega * a.transpose();
        let beta = k.norm() + 0.1;
        let d = DiffusionMatrix::new(DMatrix::identity(4, 4) * beta).unwrap();
        let v0 = CovarianceMatrix::new(random_physical(2, &mut r), pair()).unwrap();
        let drift = DriftMatrix::new(a, pair()).unwrap();
        let sched = DriftSchedule::constant(&drift, 5.0).unwrap();
        let out = propagate_cm(&sched, &d, &v0, 5.0, 0.01, &PropagationOptions {
            output_stride: 25,
            ..PropagationOptions::default()
        }).unwrap();
        for s in &out.states {
            prop_assert!(s.is_physical(PHYSICALITY_TOL).physical);
        }
    }

    #[test]
    fn exponential_inverse_product(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = DMatrix::<f64>::from_fn(10, 10, |_, _| {
            rand::Rng::random_range(&mut r, -1.0..1.0)
        });
        let m = &m * (10.0 / m.norm());
        let e = matrix_exponential(&m, 1.0).unwrap();
        let f = matrix_exponential(&m, -1.0).unwrap();
        let err = max_abs(&(&e * &f - DMatrix::<f64>::identity(10, 10)));
        prop_assert!(err < 1e-8, "{err:e}");
    }
}

#[test]
fn piecewise_identical_segments_match_single_exponential() {
    let (a, d) = small_stable(4, 7);
    let v0 = CovarianceMatrix::vacuum(a.layout().clone());
    let single = DriftSchedule::constant(&a, 3.0).unwrap();
    let pieces = DriftSchedule::new(
        [0.0, 0.7, 1.9, 3.0]
            .windows(2)
            .map(|w| DriftSegment {
                start: w[0],
                end: w[1],
                source: DriftSource::Constant(a.matrix().clone()),
            })
            .collect(),
    )
    .unwrap();
    let opts = PropagationOptions::default();
    let x = propagate_cm(&single, &d, &v0, 3.0, 0.01, &opts).unwrap();
    let y = propagate_cm(&pieces, &d, &v0, 3.0, 0.01, &opts).unwrap();
    let diff = max_abs(&(x.states.last().unwrap().matrix() - y.states.last().unwrap().matrix()));
    assert!(diff < 1e-12, "{diff:e}");
    // one exact exponential for the homogeneous part
    let m = matrix_exponential(a.matrix(), 3.0).unwrap();
    let d0 = DiffusionMatrix::new(DMatrix::zeros(4, 4)).unwrap();
    let z = propagate_cm(&single, &d0, &v0, 3.0, 0.01, &opts).unwrap();
    let exact = &m * v0.matrix() * m.transpose();
    assert!(max_abs(&(z.states.last().unwrap().matrix() - exact)) < 1e-10);
}

#[test]
fn propagation_converges_monotonically_to_fixed_point() {
    let (a, d) = small_stable(4, 11);
    let vinf = solve_lyapunov(&a, &d).unwrap();
    let v0 = CovarianceMatrix::vacuum(a.layout().clone());
    let margin = magnomech_core::linear_dynamics::stability_margin(&a).abs();
    let total = 20.0 / margin;
    let sched = DriftSchedule::constant(&a, total).unwrap();
    let out = propagate_cm(
        &sched,
        &d,
        &v0,
        total,
        total / 4000.0,
        &PropagationOptions {
            output_stride: 40,
            ..PropagationOptions::default()
        },
    )
    .unwrap();
    let dist: Vec<f64> = out
        .states
        .iter()
        .map(|s| max_abs(&(s.matrix() - vinf.matrix())))
        .collect();
    let start = dist.len() / 5;
    for w in dist[start..].windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-14);
    }
    assert!(*dist.last().unwrap() < 1e-6);
}
