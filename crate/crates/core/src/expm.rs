//! Matrix exponential by scaling and squaring with diagonal Padé approximants
//! (Higham 2005 degree selection).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

// Higham's backward-error bounds, kept at their printed precision.
#[allow(clippy::excessive_precision)]
const THETA: [(usize, f64); 4] = [
    (3, 1.495_585_217_958_292e-2),
    (5, 2.539_398_330_063_230e-1),
    (7, 9.504_178_996_162_932e-1),
    (9, 2.097_847_961_257_068),
];
const THETA_13: f64 = 5.371_920_351_148_152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn pade_low(a: &DMatrix<f64>, b: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let a2 = a * a;
    let mut power = DMatrix::identity(n, n);
    let mut u = DMatrix::zeros(n, n);
    let mut v = DMatrix::zeros(n, n);
    for k in (0..b.len()).step_by(2) {
        v += &power * b[k];
        u += &power * b[k + 1];
        power = &power * &a2;
    }
    (a * u, v)
}

fn pade_13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let b = &B13;
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = a * (&a6 * inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    (u, v)
}

/// `exp(m·t)`.
///
/// Relative accuracy is close to machine precision for well-conditioned
/// input; non-finite entries or norms too large to scale produce
/// [`Error::Overflow`].
pub fn matrix_exponential(m: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    let a = m * t;
    let norm = one_norm(&a);
    if !norm.is_finite() {
        return Err(Error::Overflow { norm });
    }
    let n = a.nrows();
    if norm == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }

    let (u, v, squarings) = match THETA.iter().find(|&&(_, theta)| norm <= theta) {
        Some(&(degree, _)) => {
            let b: &[f64] = match degree {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            let (u, v) = pade_low(&a, b);
            (u, v, 0u32)
        }
        None => {
            let s = libm::ceil(libm::log2(norm / THETA_13)).max(0.0);
            if s > 1000.0 {
                return Err(Error::Overflow { norm });
            }
            let s = s as u32;
            let scaled = &a * libm::ldexp(1.0, -(s as i32));
            let (u, v) = pade_13(&scaled);
            (u, v, s)
        }
    };

    let denom = &v - &u;
    let numer = &v + &u;
    let mut r = denom.lu().solve(&numer).ok_or(Error::Overflow { norm })?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if r.iter().all(|x| x.is_finite()) {
        Ok(r)
    } else {
        Err(Error::Overflow { norm })
    }
}
