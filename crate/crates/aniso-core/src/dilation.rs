//! Expansive dilation matrices and their spectral bookkeeping.
//!
//! A dilation is a real n-by-n matrix `A` all of whose eigenvalues have
//! modulus strictly larger than one. Iterating `A` stretches space
//! anisotropically; the whole calculus downstream (quasi-norms, frequency
//! shells, exponent ranges) is driven by three derived quantities:
//!
//! * `b = |det A|` — the volume growth per application of `A`;
//! * spectral margins `1 < lambda_minus < |lambda_1| <= ... <= |lambda_n| < lambda_plus`
//!   bracketing the eigenvalue moduli strictly from below and above;
//! * the homogeneity exponents `zeta_minus = ln lambda_minus / ln b` and
//!   `zeta_plus = ln lambda_plus / ln b`, which control how Euclidean length
//!   compares with the dilation-adapted quasi-norm.
//!
//! The margins are deliberately *strict*: every power-growth estimate in the
//! library has the form `c (lambda_minus)^k <= |A^k x| <= c (lambda_plus)^k`
//! with constants that blow up as the margins touch the spectrum, so the
//! margins are data, not derived quantities. Default margins place
//! `lambda_minus` halfway between 1 and `|lambda_1|` and put `lambda_plus`
//! five percent above `|lambda_n|`.
//!
//! Integer powers `A^k` for `|k| <= 64` are precomputed at construction; the
//! accessor computes larger powers on demand and refuses only when the
//! exponent could overflow `f64` range.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest power magnitude cached eagerly at construction.
pub const POWER_CACHE_RADIUS: i64 = 64;

/// Hard ceiling for on-demand powers; beyond this `f64` overflow is likely.
pub const POWER_HARD_LIMIT: i64 = 1024;

/// Eigenvalue moduli must exceed `1 + EXPANSIVE_TOL` to count as expansive.
///
/// The slack absorbs eigensolver rounding; a rotation (moduli exactly 1)
/// is rejected, while genuinely expansive spectra sit far above the cutoff.
pub const EXPANSIVE_TOL: f64 = 1e-10;

/// An expansive dilation matrix together with its spectral data and margins.
///
/// Construction validates expansiveness and the margin ordering; every
/// consumer may therefore rely on
/// `1 < lambda_minus < |lambda_1| <= ... <= |lambda_n| < lambda_plus`
/// and `zeta_minus <= 1/n <= zeta_plus` without re-checking.
#[derive(Debug, Clone)]
pub struct Dilation {
    matrix: DMatrix<f64>,
    dim: usize,
    det_abs: f64,
    eig_moduli: Vec<f64>,
    lambda_minus: f64,
    lambda_plus: f64,
    zeta_minus: f64,
    zeta_plus: f64,
    /// `powers[k + POWER_CACHE_RADIUS] = A^k` for `|k| <= POWER_CACHE_RADIUS`.
    powers: Vec<DMatrix<f64>>,
}

/// Build a dilation from a row-major square matrix.
///
/// `margins`, when given, is `(lambda_minus, lambda_plus)`; otherwise the
/// defaults `lambda_minus = (1 + |lambda_1|) / 2` and
/// `lambda_plus = 1.05 * |lambda_n|` are used.
///
/// Errors with [`Error::NotExpansive`] if any eigenvalue modulus fails the
/// strict `> 1` test, and with [`Error::BadMargins`] if the margins do not
/// bracket the spectrum strictly.
pub fn new_dilation(rows: &[Vec<f64>], margins: Option<(f64, f64)>) -> Result<Dilation> {
    let dim = rows.len();
    if !(1..=3).contains(&dim) {
        return Err(Error::UnsupportedDimension { dim });
    }
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::UnsupportedDimension { dim: 0 });
    }
    let matrix = DMatrix::from_fn(dim, dim, |i, j| rows[i][j]);
    Dilation::from_matrix(matrix, margins)
}

impl Dilation {
    fn from_matrix(matrix: DMatrix<f64>, margins: Option<(f64, f64)>) -> Result<Self> {
        let dim = matrix.nrows();
        let mut eig_moduli: Vec<f64> = matrix
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .collect();
        eig_moduli.sort_by(|a, b| a.partial_cmp(b).expect("eigenvalue moduli are finite"));
        let eig_min = eig_moduli[0];
        let eig_max = eig_moduli[dim - 1];
        if !(eig_min > 1.0 + EXPANSIVE_TOL) {
            return Err(Error::NotExpansive { modulus: eig_min });
        }

        let (lambda_minus, lambda_plus) =
            margins.unwrap_or(((1.0 + eig_min) / 2.0, 1.05 * eig_max));
        if !(1.0 < lambda_minus && lambda_minus < eig_min && eig_max < lambda_plus) {
            return Err(Error::BadMargins {
                lambda_minus,
                lambda_plus,
                eig_min,
                eig_max,
            });
        }

        let det_abs = matrix.determinant().abs();
        let ln_b = det_abs.ln();
        let zeta_minus = lambda_minus.ln() / ln_b;
        let zeta_plus = lambda_plus.ln() / ln_b;
        debug_assert!(zeta_minus <= 1.0 / dim as f64 + 1e-12);
        debug_assert!(zeta_plus >= 1.0 / dim as f64 - 1e-12);

        let powers = build_power_cache(&matrix)?;

        Ok(Dilation {
            matrix,
            dim,
            det_abs,
            eig_moduli,
            lambda_minus,
            lambda_plus,
            zeta_minus,
            zeta_plus,
            powers,
        })
    }

    /// The underlying matrix `A`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Spatial dimension `n`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Volume growth factor `b = |det A| > 1`.
    pub fn b(&self) -> f64 {
        self.det_abs
    }

    /// Eigenvalue moduli sorted ascending.
    pub fn eig_moduli(&self) -> &[f64] {
        &self.eig_moduli
    }

    /// Lower spectral margin, strictly between 1 and `|lambda_1|`.
    pub fn lambda_minus(&self) -> f64 {
        self.lambda_minus
    }

    /// Upper spectral margin, strictly above `|lambda_n|`.
    pub fn lambda_plus(&self) -> f64 {
        self.lambda_plus
    }

    /// Lower homogeneity exponent `ln lambda_minus / ln b`.
    pub fn zeta_minus(&self) -> f64 {
        self.zeta_minus
    }

    /// Upper homogeneity exponent `ln lambda_plus / ln b`.
    pub fn zeta_plus(&self) -> f64 {
        self.zeta_plus
    }

    /// Integer power `A^k`.
    ///
    /// Powers with `|k| <= POWER_CACHE_RADIUS` come from the construction-time
    /// cache; larger ones are computed on demand. `|k| > POWER_HARD_LIMIT`
    /// errors with [`Error::RangeExceeded`] because entries would leave `f64`
    /// range for typical spectra.
    pub fn power(&self, k: i64) -> Result<DMatrix<f64>> {
        if k.abs() <= POWER_CACHE_RADIUS {
            return Ok(self.powers[(k + POWER_CACHE_RADIUS) as usize].clone());
        }
        if k.abs() > POWER_HARD_LIMIT {
            return Err(Error::RangeExceeded {
                k,
                max: POWER_HARD_LIMIT,
            });
        }
        let step = if k > 0 {
            self.powers[(1 + POWER_CACHE_RADIUS) as usize].clone()
        } else {
            self.powers[(-1 + POWER_CACHE_RADIUS) as usize].clone()
        };
        let mut acc = self.powers
            [(k.signum() * POWER_CACHE_RADIUS + POWER_CACHE_RADIUS) as usize]
            .clone();
        for _ in POWER_CACHE_RADIUS..k.abs() {
            acc = &acc * &step;
        }
        Ok(acc)
    }

    /// Integer power of the adjoint, `(A^T)^k = (A^k)^T`.
    pub fn adjoint_power(&self, k: i64) -> Result<DMatrix<f64>> {
        Ok(self.power(k)?.transpose())
    }

    /// The adjoint dilation `A^T` with the same margins.
    ///
    /// `A` and `A^T` share eigenvalues (hence `b`, margins and exponents);
    /// only the ellipsoid geometry downstream differs.
    pub fn adjoint(&self) -> Dilation {
        Dilation::from_matrix(
            self.matrix.transpose(),
            Some((self.lambda_minus, self.lambda_plus)),
        )
        .expect("adjoint of a valid dilation is valid")
    }

    /// Smallest `M >= 1` such that the normalized operator norms
    /// `||(A^T)^j||^(1/j)` stay at or below `(1 + eps) * lambda_plus` for
    /// every `j` in the window `(M, M + 64]`.
    ///
    /// The window, rather than a single test, guards against the non-monotone
    /// transients of non-normal matrices (shears overshoot their spectral
    /// radius for many iterations before settling).
    pub fn spectral_threshold(&self, eps: f64) -> Result<usize> {
        let threshold = (1.0 + eps) * self.lambda_plus;
        let at = self.matrix.transpose();
        // Incrementally computed operator norms of (A^T)^j.
        let mut norms: Vec<f64> = Vec::new();
        let mut acc = DMatrix::identity(self.dim, self.dim);
        let grow = |norms: &mut Vec<f64>, acc: &mut DMatrix<f64>, upto: usize| {
            while norms.len() < upto {
                *acc = &*acc * &at;
                norms.push(operator_norm(acc));
            }
        };
        let passes = |norms: &[f64], j: usize| -> bool {
            norms[j - 1].powf(1.0 / j as f64) <= threshold
        };

        let mut m: usize = 1;
        'outer: loop {
            grow(&mut norms, &mut acc, m + 64);
            for j in (m + 1)..=(m + 64) {
                if !passes(&norms, j) {
                    m = j;
                    if m as i64 > POWER_HARD_LIMIT {
                        return Err(Error::RangeExceeded {
                            k: m as i64,
                            max: POWER_HARD_LIMIT,
                        });
                    }
                    continue 'outer;
                }
            }
            return Ok(m);
        }
    }

    /// A copy with both margins moved halfway toward the spectrum:
    /// `lambda_minus <- (lambda_minus + |lambda_1|) / 2`,
    /// `lambda_plus <- (|lambda_n| + lambda_plus) / 2`.
    pub fn tighten(&self) -> Dilation {
        let eig_min = self.eig_moduli[0];
        let eig_max = self.eig_moduli[self.dim - 1];
        Dilation::from_matrix(
            self.matrix.clone(),
            Some((
                (self.lambda_minus + eig_min) / 2.0,
                (eig_max + self.lambda_plus) / 2.0,
            )),
        )
        .expect("tightened margins remain strictly bracketing")
    }
}

/// Largest singular value (spectral operator norm).
fn operator_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |a, &s| a.max(s))
}

fn build_power_cache(matrix: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
    let dim = matrix.nrows();
    let inv = matrix
        .clone()
        .try_inverse()
        .expect("expansive matrices are invertible");
    let radius = POWER_CACHE_RADIUS as usize;
    let mut powers = vec![DMatrix::identity(dim, dim); 2 * radius + 1];
    for k in 1..=radius {
        powers[radius + k] = &powers[radius + k - 1] * matrix;
        powers[radius - k] = &powers[radius - k + 1] * &inv;
    }
    Ok(powers)
}

/// Serialization mirror: the matrix rows plus the two margins.
///
/// Everything else (spectrum, exponents, power cache) is recomputed on
/// deserialization, which re-validates the expansiveness and margin
/// invariants from scratch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DilationSpec {
    pub matrix: Vec<Vec<f64>>,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
}

impl From<&Dilation> for DilationSpec {
    fn from(d: &Dilation) -> Self {
        DilationSpec {
            matrix: (0..d.dim)
                .map(|i| (0..d.dim).map(|j| d.matrix[(i, j)]).collect())
                .collect(),
            lambda_minus: d.lambda_minus,
            lambda_plus: d.lambda_plus,
        }
    }
}

impl TryFrom<&DilationSpec> for Dilation {
    type Error = Error;

    fn try_from(spec: &DilationSpec) -> Result<Dilation> {
        new_dilation(&spec.matrix, Some((spec.lambda_minus, spec.lambda_plus)))
    }
}

impl Serialize for Dilation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DilationSpec::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Dilation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = DilationSpec::deserialize(d)?;
        Dilation::try_from(&spec).map_err(serde::de::Error::custom)
    }
}
