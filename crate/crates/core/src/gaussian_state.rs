//! Covariance-matrix algebra for multimode Gaussian states.
//!
//! Quadratures follow the `x = (a + a†)/√2`, `y = i(a† − a)/√2` convention, so
//! the vacuum covariance matrix is `I/2` and the uncertainty relation reads
//! `V + (i/2)Ω ⪰ 0`. Other texts scale quadratures so that the vacuum variance
//! is 1; values produced here are not directly comparable with those.
//!
//! Quadratures are interleaved per mode: mode `k` of a layout occupies rows
//! `(2k, 2k + 1)`.

use alloc::vec::Vec;
use core::fmt;
use core::num::NonZeroUsize;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default tolerance of the uncertainty-relation check, in quadrature units.
pub const PHYSICALITY_TOL: f64 = 1e-9;

/// Values of `−ln(2ν̃₋)` closer than this to zero are reported as exactly zero.
pub const NEGATIVITY_CLAMP: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-9;

/// The five bosonic modes of the cavity magnomechanical system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Cavity,
    Magnon1,
    Magnon2,
    Phonon1,
    Phonon2,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Cavity,
        Mode::Magnon1,
        Mode::Magnon2,
        Mode::Phonon1,
        Mode::Phonon2,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Mode::Cavity => "a",
            Mode::Magnon1 => "m1",
            Mode::Magnon2 => "m2",
            Mode::Phonon1 => "b1",
            Mode::Phonon2 => "b2",
        }
    }

    pub fn from_label(label: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.label() == label)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Ordered list of modes; the position of a mode fixes its quadrature rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeLayout {
    modes: Vec<Mode>,
}

impl ModeLayout {
    /// `(a, m1, m2, b1, b2)`, matching the fluctuation vector
    /// `[δX, δY, δx₁, δy₁, δx₂, δy₂, δq₁, δp₁, δq₂, δp₂]`.
    pub fn standard() -> Self {
        ModeLayout {
            modes: Mode::ALL.to_vec(),
        }
    }

    pub fn new(modes: &[Mode]) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::Dimension {
                expected: 2,
                found: 0,
            });
        }
        for (i, m) in modes.iter().enumerate() {
            if modes[..i].contains(m) {
                return Err(Error::DuplicateMode(*m));
            }
        }
        Ok(ModeLayout {
            modes: modes.to_vec(),
        })
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn dim(&self) -> usize {
        2 * self.modes.len()
    }

    pub fn position(&self, mode: Mode) -> Option<usize> {
        self.modes.iter().position(|&m| m == mode)
    }

    /// Quadrature row indices `(2k, 2k + 1)` of `mode`.
    pub fn quadratures(&self, mode: Mode) -> Option<(usize, usize)> {
        self.position(mode).map(|k| (2 * k, 2 * k + 1))
    }
}

/// Result of the uncertainty-relation check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Physicality {
    pub physical: bool,
    /// Smallest eigenvalue of the Hermitian matrix `V + (i/2)Ω`.
    pub min_eigenvalue: f64,
}

/// The `2n × 2n` symplectic form `⊕ [[0, 1], [−1, 0]]`.
pub fn symplectic_form(n: NonZeroUsize) -> DMatrix<f64> {
    let dim = 2 * n.get();
    let mut omega = DMatrix::zeros(dim, dim);
    for k in 0..n.get() {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

fn mode_count(dim: usize) -> Result<NonZeroUsize> {
    if !dim.is_multiple_of(2) {
        return Err(Error::Dimension {
            expected: dim + 1,
            found: dim,
        });
    }
    NonZeroUsize::new(dim / 2).ok_or(Error::Dimension {
        expected: 2,
        found: 0,
    })
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Symplectic eigenvalues of a raw `2n × 2n` matrix, ascending.
///
/// The spectrum of `ΩV` is `{±iν_k}`; the moduli come in equal pairs and
/// each pair is averaged into one `ν_k`.
pub fn symplectic_spectrum(v: &DMatrix<f64>) -> Result<Vec<f64>> {
    if v.nrows() != v.ncols() {
        return Err(Error::Dimension {
            expected: v.nrows(),
            found: v.ncols(),
        });
    }
    let n = mode_count(v.nrows())?;
    let omega = symplectic_form(n);
    let mut moduli: Vec<f64> = (&omega * v)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .collect();
    moduli.sort_by(f64::total_cmp);
    Ok(moduli.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect())
}

/// Uncertainty-relation check on a raw `2n × 2n` matrix.
pub fn physicality(v: &DMatrix<f64>, tol: f64) -> Result<Physicality> {
    if v.nrows() != v.ncols() {
        return Err(Error::Dimension {
            expected: v.nrows(),
            found: v.ncols(),
        });
    }
    let n = mode_count(v.nrows())?;
    let dim = v.nrows();
    let half_omega = symplectic_form(n) * 0.5;
    // H = V + iY with Y = Ω/2 is represented by the real symmetric
    // [[V, −Y], [Y, V]], whose spectrum is that of H with doubled multiplicity.
    let mut embed = DMatrix::zeros(2 * dim, 2 * dim);
    embed.view_mut((0, 0), (dim, dim)).copy_from(v);
    embed.view_mut((dim, dim), (dim, dim)).copy_from(v);
    embed
        .view_mut((0, dim), (dim, dim))
        .copy_from(&(-&half_omega));
    embed.view_mut((dim, 0), (dim, dim)).copy_from(&half_omega);
    let sym = 0.5 * (&embed + embed.transpose());
    let min_eigenvalue = sym.symmetric_eigenvalues().min();
    Ok(Physicality {
        physical: min_eigenvalue >= -tol,
        min_eigenvalue,
    })
}

/// Symmetric covariance matrix of quadrature fluctuations tied to a mode layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    matrix: DMatrix<f64>,
    layout: ModeLayout,
}

impl CovarianceMatrix {
    /// Validates shape and symmetry; the stored matrix is exactly symmetric.
    pub fn new(matrix: DMatrix<f64>, layout: ModeLayout) -> Result<Self> {
        if matrix.nrows() != layout.dim() || matrix.ncols() != layout.dim() {
            return Err(Error::Dimension {
                expected: layout.dim(),
                found: matrix.nrows().max(matrix.ncols()),
            });
        }
        let scale = matrix.amax().max(1.0);
        let asymmetry = max_asymmetry(&matrix);
        if !asymmetry.is_finite() || asymmetry > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric { asymmetry });
        }
        let matrix = 0.5 * (&matrix + matrix.transpose());
        Ok(CovarianceMatrix { matrix, layout })
    }

    pub(crate) fn from_symmetric_unchecked(matrix: DMatrix<f64>, layout: ModeLayout) -> Self {
        debug_assert_eq!(matrix.nrows(), layout.dim());
        CovarianceMatrix { matrix, layout }
    }

    pub fn vacuum(layout: ModeLayout) -> Self {
        let dim = layout.dim();
        CovarianceMatrix {
            matrix: DMatrix::identity(dim, dim) * 0.5,
            layout,
        }
    }

    /// Thermal state with the given mean occupation per mode of the layout.
    pub fn thermal(layout: ModeLayout, occupations: &[f64]) -> Result<Self> {
        if occupations.len() != layout.len() {
            return Err(Error::Dimension {
                expected: layout.len(),
                found: occupations.len(),
            });
        }
        let diag: Vec<f64> = occupations
            .iter()
            .flat_map(|&n| [n + 0.5, n + 0.5])
            .collect();
        Ok(CovarianceMatrix {
            matrix: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)),
            layout,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn layout(&self) -> &ModeLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Mean excitation number `(V_xx + V_yy)/2 − 1/2` of one mode.
    pub fn occupation(&self, mode: Mode) -> Result<f64> {
        let (x, y) = self
            .layout
            .quadratures(mode)
            .ok_or(Error::UnknownMode(mode))?;
        Ok(0.5 * (self.matrix[(x, x)] + self.matrix[(y, y)]) - 0.5)
    }

    /// Keeps the rows and columns of `modes`, in the parent layout's order.
    pub fn reduce(&self, modes: &[Mode]) -> Result<CovarianceMatrix> {
        let mut picked: Vec<(usize, Mode)> = Vec::with_capacity(modes.len());
        for &m in modes {
            let k = self.layout.position(m).ok_or(Error::UnknownMode(m))?;
            if picked.iter().any(|&(_, p)| p == m) {
                return Err(Error::DuplicateMode(m));
            }
            picked.push((k, m));
        }
        if picked.is_empty() {
            return Err(Error::Dimension {
                expected: 2,
                found: 0,
            });
        }
        picked.sort_by_key(|&(k, _)| k);
        let rows: Vec<usize> = picked
            .iter()
            .flat_map(|&(k, _)| [2 * k, 2 * k + 1])
            .collect();
        let dim = rows.len();
        let matrix = DMatrix::from_fn(dim, dim, |i, j| self.matrix[(rows[i], rows[j])]);
        let order: Vec<Mode> = picked.iter().map(|&(_, m)| m).collect();
        Ok(CovarianceMatrix {
            matrix,
            layout: ModeLayout { modes: order },
        })
    }

    /// `P V P` with `P = diag(1, −1, 1, 1)`: momentum sign flip on the first mode.
    pub fn partial_transpose(&self) -> Result<CovarianceMatrix> {
        if self.dim() != 4 {
            return Err(Error::Dimension {
                expected: 4,
                found: self.dim(),
            });
        }
        let mut matrix = self.matrix.clone();
        for j in 0..4 {
            if j != 1 {
                matrix[(1, j)] = -matrix[(1, j)];
                matrix[(j, 1)] = -matrix[(j, 1)];
            }
        }
        Ok(CovarianceMatrix {
            matrix,
            layout: self.layout.clone(),
        })
    }

    /// Symplectic eigenvalues `ν_k` (moduli of the spectrum of `iΩV`), ascending.
    ///
    /// No physicality check is performed; for unphysical input the values are
    /// still well defined but may fall below 1/2.
    pub fn symplectic_eigenvalues(&self) -> Result<Vec<f64>> {
        symplectic_spectrum(&self.matrix)
    }

    pub fn is_physical(&self, tol: f64) -> Physicality {
        physicality(&self.matrix, tol).expect("layout guarantees an even square matrix")
    }

    /// Logarithmic negativity `max(0, −ln 2ν̃₋)` of a two-mode state.
    ///
    /// Fails with [`Error::Unphysical`] when `V + (i/2)Ω` has an eigenvalue
    /// below `−tol`.
    pub fn log_negativity(&self, tol: f64) -> Result<f64> {
        if self.dim() != 4 {
            return Err(Error::Dimension {
                expected: 4,
                found: self.dim(),
            });
        }
        let check = self.is_physical(tol);
        if !check.physical {
            return Err(Error::Unphysical {
                min_eigenvalue: check.min_eigenvalue,
            });
        }
        let nu_min = self.partial_transpose()?.symplectic_eigenvalues()?[0];
        let value = -libm::log(2.0 * nu_min);
        Ok(if value <= NEGATIVITY_CLAMP {
            0.0
        } else {
            value
        })
    }

    /// Reduces to the pair `(first, second)` and evaluates its log-negativity.
    pub fn pair_negativity(&self, first: Mode, second: Mode, tol: f64) -> Result<f64> {
        self.reduce(&[first, second])?.log_negativity(tol)
    }
}
