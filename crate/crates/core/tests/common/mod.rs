#![allow(dead_code)]

use std::f64::consts::PI;

use magnomech_core::model::{Crystal, SystemParams, YIG_SPIN_DENSITY};
use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub const TWO_PI: f64 = 2.0 * PI;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Random product of rotations, single-mode squeezers and beam splitters.
pub fn random_symplectic(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let dim = 2 * n;
    let mut s = DMatrix::<f64>::identity(dim, dim);
    for _ in 0..3 * n {
        let k = rng.random_range(0..n);
        let mut e = DMatrix::<f64>::identity(dim, dim);
        match rng.random_range(0..3) {
            0 => {
                let th: f64 = rng.random_range(0.0..TWO_PI);
                let (c, sn) = (th.cos(), th.sin());
                e[(2 * k, 2 * k)] = c;
                e[(2 * k, 2 * k + 1)] = sn;
                e[(2 * k + 1, 2 * k)] = -sn;
                e[(2 * k + 1, 2 * k + 1)] = c;
            }
            1 => {
                let r: f64 = rng.random_range(-0.8..0.8);
                e[(2 * k, 2 * k)] = r.exp();
                e[(2 * k + 1, 2 * k + 1)] = (-r).exp();
            }
            _ if n > 1 => {
                let l = (k + rng.random_range(1..n)) % n;
                let phi: f64 = rng.random_range(0.0..TWO_PI);
                let (c, sn) = (phi.cos(), phi.sin());
                for q in 0..2 {
                    let (a, b) = (2 * k + q, 2 * l + q);
                    e[(a, a)] = c;
                    e[(a, b)] = sn;
                    e[(b, a)] = -sn;
                    e[(b, b)] = c;
                }
            }
            _ => {}
        }
        s = e * s;
    }
    s
}

/// `S · diag(ν₁, ν₁, …) · Sᵀ` with `ν_k ≥ 1/2`.
pub fn random_physical(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let s = random_symplectic(n, rng);
    let mut d = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for k in 0..n {
        let nu = 0.5 + rng.random_range(0.0..3.0);
        d[(2 * k, 2 * k)] = nu;
        d[(2 * k + 1, 2 * k + 1)] = nu;
    }
    let v = &s * d * s.transpose();
    0.5 * (&v + v.transpose())
}

/// Random Hurwitz matrix: `B − (α(B) + margin)·I`.
pub fn random_stable(dim: usize, margin: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    let b = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let alpha = b
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    b - DMatrix::identity(dim, dim) * (alpha + margin)
}

pub fn random_psd(dim: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let l = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let d = &l * l.transpose();
    0.5 * (&d + d.transpose())
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}

pub const CRYSTAL1: Crystal = Crystal {
    length: 13.7e-6,
    width: 3e-6,
    thickness: 1e-6,
    spin_density: YIG_SPIN_DENSITY,
};
pub const CRYSTAL2: Crystal = Crystal {
    length: 16.4e-6,
    width: 3e-6,
    thickness: 1e-6,
    spin_density: YIG_SPIN_DENSITY,
};

/// Two-magnet working point with `Δ_m1 = 0.95 ω_b1`, `Δ_a = −0.95 ω_b1` and
/// `ω_m2 = ω_a − 0.9 κ_a`, relative to the returned drive frequency.
pub fn working_point() -> (SystemParams, f64) {
    let wb1 = TWO_PI * 17e6;
    let ka = TWO_PI * 1e6;
    let wa = TWO_PI * 10e9;
    let w01 = wa + 0.95 * wb1;
    let p = SystemParams {
        cavity_frequency: wa,
        magnon_frequency: [w01 + 0.95 * wb1, wa - 0.9 * ka],
        mechanical_frequency: [wb1, TWO_PI * 12e6],
        cavity_decay: ka,
        magnon_decay: [ka; 2],
        mechanical_damping: [TWO_PI * 100.0; 2],
        cavity_magnon_coupling: [TWO_PI * 5e6, TWO_PI * 1e6],
        magnomechanical_coupling: [TWO_PI * 10.0; 2],
        temperature: 0.01,
        crystals: [Some(CRYSTAL1), Some(CRYSTAL2)],
    };
    (p, w01)
}
