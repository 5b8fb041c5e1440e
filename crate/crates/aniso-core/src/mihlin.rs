//! Fourier symbols and empirical Mihlin-condition estimation.
//!
//! A [`Multiplier`] wraps a symbol `m(xi)` together with optional exact
//! partial derivatives and a declared scale-invariance flag. The quantity
//! the estimator measures is the anisotropic analogue of the Mihlin
//! condition: for each scale `j` and multi-index `beta`, the size of
//!
//! ```text
//! D^beta [ m((A^T)^j u) ]   over u in the canonical dual annulus B*_1 \ B*_0,
//! ```
//!
//! which must stay bounded uniformly in `j` for the symbol to define a
//! bounded operator on the anisotropic scale of spaces. Symbols that are
//! genuinely scale-invariant — built from the smooth scale coordinate, so
//! that rescaling only changes them by a constant phase — produce rows that
//! agree across `j` up to rounding, which the tests pin down.
//!
//! Derivatives are estimated by nested central differences with an
//! order-adapted step (`h ~ |u| * eps^{1/(|beta|+2)}`), balancing truncation
//! against cancellation so that even sixth-order estimates keep several
//! significant digits. Exact oracles, when a symbol carries one, are only
//! meaningful at `j = 0`, where the rescaled symbol coincides with the
//! symbol itself.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::dilation::Dilation;
use crate::error::{Error, Result};
use crate::field::MAX_DERIVATIVE_ORDER;
use crate::partition::LPPartition;
use crate::poly::multi_indices;
use crate::quasinorm::{canonical_ellipsoids, EllipsoidFamily, ScaleIndex};
use crate::sampling::{kronecker_point, unit_directions};

type EvalFn = dyn Fn(&[f64]) -> Complex64 + Send + Sync;
type OracleFn = dyn Fn(&[f64], &[u32]) -> Complex64 + Send + Sync;

/// A Fourier symbol with optional exact-derivative oracle.
#[derive(Clone)]
pub struct Multiplier {
    name: String,
    dim: usize,
    eval: Arc<EvalFn>,
    oracle: Option<Arc<OracleFn>>,
    scale_invariant: bool,
}

impl fmt::Debug for Multiplier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Multiplier")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("scale_invariant", &self.scale_invariant)
            .field("has_oracle", &self.oracle.is_some())
            .finish()
    }
}

impl Multiplier {
    /// Wrap a symbol. `scale_invariant` declares that the symbol's Mihlin
    /// data does not depend on the scale (rescaling changes it by at most a
    /// unimodular constant); the estimator can verify the claim empirically.
    pub fn new<F>(name: &str, dim: usize, scale_invariant: bool, eval: F) -> Multiplier
    where
        F: Fn(&[f64]) -> Complex64 + Send + Sync + 'static,
    {
        Multiplier {
            name: name.to_string(),
            dim,
            eval: Arc::new(eval),
            oracle: None,
            scale_invariant,
        }
    }

    /// Attach exact partial derivatives `(xi, beta) -> D^beta m(xi)`.
    pub fn with_oracle<F>(mut self, oracle: F) -> Multiplier
    where
        F: Fn(&[f64], &[u32]) -> Complex64 + Send + Sync + 'static,
    {
        self.oracle = Some(Arc::new(oracle));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale_invariant(&self) -> bool {
        self.scale_invariant
    }

    /// Evaluate the symbol.
    pub fn eval(&self, xi: &[f64]) -> Complex64 {
        (self.eval)(xi)
    }

    /// Exact derivative, when the symbol carries an oracle.
    pub fn oracle(&self, xi: &[f64], beta: &[u32]) -> Option<Complex64> {
        self.oracle.as_ref().map(|f| f(xi, beta))
    }
}

/// Central-difference stencil for one derivative order: coefficients over
/// the offsets `-w..=w` (widths grow with the order, accuracy is O(h^2)).
fn stencil(order: usize) -> (&'static [f64], i64) {
    match order {
        0 => (&[1.0], 0),
        1 => (&[-0.5, 0.0, 0.5], 1),
        2 => (&[1.0, -2.0, 1.0], 1),
        3 => (&[-0.5, 1.0, 0.0, -1.0, 0.5], 2),
        4 => (&[1.0, -4.0, 6.0, -4.0, 1.0], 2),
        5 => (&[-0.5, 2.0, -2.5, 0.0, 2.5, -2.0, 0.5], 3),
        6 => (&[1.0, -6.0, 15.0, -20.0, 15.0, -6.0, 1.0], 3),
        _ => unreachable!("stencil orders are capped at MAX_DERIVATIVE_ORDER"),
    }
}

/// Unscaled nested stencil sum; the caller divides by `h^{|beta|}` once.
fn nested_stencil_sum<F: Fn(&[f64]) -> Complex64>(
    eval: &F,
    x: &mut [f64],
    beta: &[u32],
    axis: usize,
    h: f64,
) -> Complex64 {
    if axis == beta.len() {
        return eval(x);
    }
    let order = beta[axis] as usize;
    if order == 0 {
        return nested_stencil_sum(eval, x, beta, axis + 1, h);
    }
    let (coefs, width) = stencil(order);
    let x0 = x[axis];
    let mut acc = Complex64::new(0.0, 0.0);
    for (ci, &c) in coefs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        x[axis] = x0 + (ci as i64 - width) as f64 * h;
        acc += nested_stencil_sum(eval, x, beta, axis + 1, h) * c;
    }
    x[axis] = x0;
    acc
}

/// `D^beta [ m((A^T)^j u) ]` at a point `u` of the canonical dual annulus
/// `B*_1 \ B*_0`, by nested central differences in `u`.
///
/// `star` must be the ellipsoid family of the adjoint dilation; a base point
/// outside the canonical annulus is refused with [`Error::OutsideShell`]
/// (the estimate is only meaningful there — rescaling is what brings every
/// other shell back to this one).
pub fn aniso_derivative(
    m: &Multiplier,
    star: &EllipsoidFamily,
    j: i64,
    beta: &[u32],
    u: &[f64],
) -> Result<Complex64> {
    let order: u32 = beta.iter().sum();
    if order as usize > MAX_DERIVATIVE_ORDER {
        return Err(Error::DerivativeOrderExceeded {
            order: order as usize,
            max: MAX_DERIVATIVE_ORDER,
        });
    }
    match star.scale_index(u)? {
        ScaleIndex::Finite(0) => {}
        ScaleIndex::Finite(found) => return Err(Error::OutsideShell { j: 0, found }),
        ScaleIndex::NegInfinity => {
            return Err(Error::OutsideShell {
                j: 0,
                found: i64::MIN,
            })
        }
    }
    let a_j = star.dilation().power(j)?;
    let n = m.dim();
    let g = |x: &[f64]| {
        let mut y = vec![0.0; n];
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, &xk) in x.iter().enumerate() {
                acc += a_j[(i, k)] * xk;
            }
            *yi = acc;
        }
        m.eval(&y)
    };
    if order == 0 {
        return Ok(g(u));
    }
    // Step size balancing O(h^2) truncation against eps / h^{|beta|}
    // cancellation: h ~ |u| eps^{1/(|beta| + 2)}.
    let norm_u: f64 = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    let h = norm_u * f64::EPSILON.powf(1.0 / (order as f64 + 2.0));
    let mut x = u.to_vec();
    let sum = nested_stencil_sum(&g, &mut x, beta, 0, h);
    Ok(sum / h.powi(order as i32))
}

/// One row of a Mihlin report: the measured sup for a fixed `(j, beta)`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MihlinRow {
    pub j: i64,
    pub beta: Vec<u32>,
    pub sup: f64,
}

/// Empirical Mihlin data for a symbol.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MihlinReport {
    pub symbol: String,
    pub order: usize,
    pub j_lo: i64,
    pub j_hi: i64,
    pub samples: usize,
    pub rows: Vec<MihlinRow>,
    /// Overall constant: the largest row sup.
    pub constant: f64,
}

impl MihlinReport {
    /// The row for a given `(j, beta)`, if present.
    pub fn row(&self, j: i64, beta: &[u32]) -> Option<&MihlinRow> {
        self.rows.iter().find(|r| r.j == j && r.beta == beta)
    }
}

/// Estimate the Mihlin data of a symbol: for every scale `j in [j_lo, j_hi]`
/// and every `|beta| <= order`, the sup of the rescaled derivative over a
/// low-discrepancy sample of the canonical dual annulus.
///
/// The same annulus points are reused for every `(j, beta)` pair, so for a
/// scale-invariant symbol the rows of a fixed `beta` agree up to rounding.
pub fn mihlin_constant(
    m: &Multiplier,
    dil: &Dilation,
    order: usize,
    j_lo: i64,
    j_hi: i64,
    n_samples: usize,
) -> Result<MihlinReport> {
    if order > MAX_DERIVATIVE_ORDER {
        return Err(Error::DerivativeOrderExceeded {
            order,
            max: MAX_DERIVATIVE_ORDER,
        });
    }
    if j_lo > j_hi {
        return Err(Error::EmptyRange {
            what: format!("scale range [{j_lo}, {j_hi}]"),
        });
    }
    let star = canonical_ellipsoids(&dil.adjoint(), None)?;
    let n = dil.dim();

    // Low-discrepancy annulus sample: golden-angle directions crossed with a
    // Kronecker radial fraction, kept away from the shell boundaries.
    let dirs = unit_directions(n, n_samples.max(1));
    let points: Vec<Vec<f64>> = (0..n_samples.max(1))
        .map(|l| {
            let t = 0.05 + 0.9 * kronecker_point(l, 1)[0];
            star.annulus_point(&dirs[l], t)
        })
        .collect();

    let betas = multi_indices(n, order);
    let jobs: Vec<(i64, Vec<u32>)> = (j_lo..=j_hi)
        .flat_map(|j| betas.iter().map(move |b| (j, b.clone())))
        .collect();

    let rows: Vec<Result<MihlinRow>> = jobs
        .par_iter()
        .map(|(j, beta)| {
            let mut sup = 0.0f64;
            for u in &points {
                let v = aniso_derivative(m, &star, *j, beta, u)?;
                let mag = v.norm();
                if !mag.is_finite() {
                    return Err(Error::NonFinite {
                        what: format!(
                            "derivative of {} at scale {j}, beta {beta:?}",
                            m.name()
                        ),
                    });
                }
                sup = sup.max(mag);
            }
            Ok(MihlinRow {
                j: *j,
                beta: beta.clone(),
                sup,
            })
        })
        .collect();
    let rows: Vec<MihlinRow> = rows.into_iter().collect::<Result<_>>()?;
    let constant = rows.iter().fold(0.0f64, |a, r| a.max(r.sup));

    Ok(MihlinReport {
        symbol: m.name().to_string(),
        order,
        j_lo,
        j_hi,
        samples: n_samples,
        rows,
        constant,
    })
}

/// Largest observed `|m(A^T xi) - m(xi)|` over low-discrepancy samples of
/// the dual shells `j in [-5, 5]` — an empirical check of a symbol's
/// declared invariance (exact invariance shows up as rounding noise).
pub fn invariance_defect(m: &Multiplier, dil: &Dilation, n_samples: usize) -> Result<f64> {
    let star = canonical_ellipsoids(&dil.adjoint(), None)?;
    let a_star = dil.adjoint_power(1)?;
    let n = dil.dim();
    let dirs = unit_directions(n, n_samples.max(1));
    let mut worst = 0.0f64;
    for (l, v) in dirs.iter().enumerate() {
        let t = 0.05 + 0.9 * kronecker_point(l, 1)[0];
        let base = star.annulus_point(v, t);
        let j = (l as i64 % 11) - 5;
        let pow = star.dilation().power(j)?;
        let mut xi = vec![0.0; n];
        for (i, c) in xi.iter_mut().enumerate() {
            for (k, &bk) in base.iter().enumerate() {
                *c += pow[(i, k)] * bk;
            }
        }
        let mut mapped = vec![0.0; n];
        for (i, c) in mapped.iter_mut().enumerate() {
            for (k, &xk) in xi.iter().enumerate() {
                *c += a_star[(i, k)] * xk;
            }
        }
        let defect = (m.eval(&mapped) - m.eval(&xi)).norm();
        if !defect.is_finite() {
            return Err(Error::NonFinite {
                what: format!("invariance defect of {}", m.name()),
            });
        }
        worst = worst.max(defect);
    }
    Ok(worst)
}

/// Whether the matrix is a positive scalar multiple of the identity — the
/// condition under which the angular and Riesz-type symbols below commute
/// with the dilation.
fn is_scalar_matrix(dil: &Dilation) -> bool {
    let a = dil.matrix();
    let c = a[(0, 0)];
    let n = dil.dim();
    for i in 0..n {
        for j in 0..n {
            let want = if i == j { c } else { 0.0 };
            if (a[(i, j)] - want).abs() > 1e-12 {
                return false;
            }
        }
    }
    c > 0.0
}

/// Construct one of the built-in symbols. Recognized specs:
///
/// * `one` — the constant symbol `1` (exactly invariant);
/// * `scale-phase` — `exp(2 pi i Theta(xi))`, a unimodular symbol built on
///   the smooth scale coordinate (exactly invariant: `Theta` shifts by one);
/// * `rho-power` or `rho-power:<tau>` — `exp(i tau ln(b) Theta(xi))`, the
///   smoothed imaginary power of the dual quasi-norm (invariant Mihlin
///   data: rescaling multiplies it by the constant phase `b^{i tau}`);
/// * `angular` — the degree-two harmonic `(xi_1^2 - xi_2^2)/|xi|^2`
///   (invariant only for scalar dilations, which the flag records);
/// * `riesz:<k>` — `xi_k/|xi|` with `k` in `1..=dim` (same flag rule).
///
/// The scale-built symbols take the value `1` at the origin by convention;
/// the homogeneous-of-degree-zero ones take `0` there.
pub fn builtin_multiplier(spec: &str, dil: &Dilation) -> Result<Multiplier> {
    let n = dil.dim();
    let (kind, param) = match spec.split_once(':') {
        Some((k, p)) => (k, Some(p)),
        None => (spec, None),
    };
    match kind {
        "one" => Ok(Multiplier::new("one", n, true, |_| Complex64::new(1.0, 0.0))
            .with_oracle(|_, beta: &[u32]| {
                if beta.iter().all(|&b| b == 0) {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })),
        "scale-phase" | "rho-power" => {
            let tau = match (kind, param) {
                ("scale-phase", None) => None,
                ("rho-power", None) => Some(1.0),
                ("rho-power", Some(p)) => Some(p.parse::<f64>().map_err(|_| Error::BadExponent {
                    what: format!("rho-power parameter {p:?} is not a number"),
                })?),
                _ => {
                    return Err(Error::BadExponent {
                        what: format!("symbol spec {spec:?} takes no parameter"),
                    })
                }
            };
            let part = LPPartition::new(dil)?;
            let rate = match tau {
                None => 2.0 * std::f64::consts::PI,
                Some(t) => t * dil.b().ln(),
            };
            let name = match tau {
                None => "scale-phase".to_string(),
                Some(t) => format!("rho-power:{t}"),
            };
            Ok(Multiplier::new(&name, n, true, move |xi: &[f64]| {
                if xi.iter().all(|&c| c == 0.0) {
                    return Complex64::new(1.0, 0.0);
                }
                match part.theta(xi) {
                    Ok(th) if th.is_finite() => Complex64::new(0.0, rate * th).exp(),
                    _ => Complex64::new(1.0, 0.0),
                }
            }))
        }
        "angular" => {
            if n < 2 {
                return Err(Error::UnsupportedDimension { dim: n });
            }
            let invariant = is_scalar_matrix(dil);
            Ok(Multiplier::new("angular", n, invariant, |xi: &[f64]| {
                let r2: f64 = xi.iter().map(|c| c * c).sum();
                if r2 == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                Complex64::new((xi[0] * xi[0] - xi[1] * xi[1]) / r2, 0.0)
            }))
        }
        "riesz" => {
            let k: usize = param
                .ok_or_else(|| Error::BadExponent {
                    what: "riesz symbol needs an axis, e.g. riesz:1".into(),
                })?
                .parse()
                .map_err(|_| Error::BadExponent {
                    what: format!("riesz axis {param:?} is not an integer"),
                })?;
            if k == 0 || k > n {
                return Err(Error::BadExponent {
                    what: format!("riesz axis {k} outside 1..={n}"),
                });
            }
            let invariant = is_scalar_matrix(dil);
            let name = format!("riesz:{k}");
            Ok(Multiplier::new(&name, n, invariant, move |xi: &[f64]| {
                let r: f64 = xi.iter().map(|c| c * c).sum::<f64>().sqrt();
                if r == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                Complex64::new(xi[k - 1] / r, 0.0)
            }))
        }
        other => Err(Error::BadExponent {
            what: format!("unknown symbol spec {other:?}"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dilation::new_dilation;
    use approx::assert_relative_eq;

    fn scalar2() -> Dilation {
        new_dilation(&[vec![2.0, 0.0], vec![0.0, 2.0]], None).unwrap()
    }

    fn shear() -> Dilation {
        new_dilation(&[vec![2.0, 1.0], vec![0.0, 3.0]], None).unwrap()
    }

    /// Plane wave exp(2 pi i a.xi) with exact derivatives
    /// D^beta = (2 pi i a)^beta m.
    fn plane_wave(a: Vec<f64>) -> Multiplier {
        let a_eval = a.clone();
        let a_oracle = a.clone();
        Multiplier::new("plane-wave", a.len(), false, move |xi: &[f64]| {
            let phase: f64 = xi.iter().zip(&a_eval).map(|(x, c)| x * c).sum();
            Complex64::new(0.0, 2.0 * std::f64::consts::PI * phase).exp()
        })
        .with_oracle(move |xi: &[f64], beta: &[u32]| {
            let phase: f64 = xi.iter().zip(&a_oracle).map(|(x, c)| x * c).sum();
            let base = Complex64::new(0.0, 2.0 * std::f64::consts::PI * phase).exp();
            let mut w = Complex64::new(1.0, 0.0);
            for (k, &b) in beta.iter().enumerate() {
                for _ in 0..b {
                    w *= Complex64::new(0.0, 2.0 * std::f64::consts::PI * a_oracle[k]);
                }
            }
            base * w
        })
    }

    #[test]
    fn stencils_match_exact_oracle_at_scale_zero() {
        let d = scalar2();
        let star = canonical_ellipsoids(&d.adjoint(), None).unwrap();
        let m = plane_wave(vec![0.23, 0.31]);
        // Relative tolerance degrades with the order, as the step balance
        // predicts: ~eps^{2/(order+2)}, times stencil-sum amplification
        // (coefficient sums reach 64 at order six).
        let tols = [1e-12, 1e-9, 1e-6, 5e-5, 5e-4, 3e-3, 1e-2];
        for (v, t) in [([1.0, 0.3], 0.3), ([-0.4, 1.0], 0.6), ([0.2, -0.9], 0.8)] {
            let vn: f64 = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            let dir: Vec<f64> = v.iter().map(|c| c / vn).collect();
            let u = star.annulus_point(&dir, t);
            for beta in multi_indices(2, 6) {
                let order: u32 = beta.iter().sum();
                let fd = aniso_derivative(&m, &star, 0, &beta, &u).unwrap();
                let exact = m.oracle(&u, &beta).unwrap();
                let denom = exact.norm().max(1.0);
                assert!(
                    (fd - exact).norm() / denom < tols[order as usize],
                    "order {order}, beta {beta:?}: fd {fd}, exact {exact}"
                );
            }
        }
    }

    #[test]
    fn derivative_requires_annulus_point_and_bounded_order() {
        let d = scalar2();
        let star = canonical_ellipsoids(&d.adjoint(), None).unwrap();
        let m = builtin_multiplier("one", &d).unwrap();
        // A point two shells out.
        let far = star.annulus_point(&[1.0, 0.0], 0.5);
        let far: Vec<f64> = far.iter().map(|c| c * 4.0).collect();
        assert!(matches!(
            aniso_derivative(&m, &star, 0, &[1, 0], &far),
            Err(Error::OutsideShell { found: 2, .. })
        ));
        let u = star.annulus_point(&[0.0, 1.0], 0.5);
        assert!(matches!(
            aniso_derivative(&m, &star, 0, &[4, 3], &u),
            Err(Error::DerivativeOrderExceeded { .. })
        ));
    }

    #[test]
    fn constant_symbol_has_exactly_trivial_report() {
        let d = shear();
        let m = builtin_multiplier("one", &d).unwrap();
        let report = mihlin_constant(&m, &d, 4, -6, 6, 32).unwrap();
        assert_eq!(report.constant, 1.0);
        for row in &report.rows {
            if row.beta.iter().all(|&b| b == 0) {
                assert_eq!(row.sup, 1.0);
            } else {
                // Every stencil row sums to zero, so the differences of a
                // constant cancel exactly in floating point.
                assert_eq!(row.sup, 0.0, "beta {:?}", row.beta);
            }
        }
    }

    #[test]
    fn scale_built_symbols_have_scale_independent_rows() {
        for d in [scalar2(), shear()] {
            let m = builtin_multiplier("rho-power:1.0", &d).unwrap();
            let report = mihlin_constant(&m, &d, 2, -4, 4, 24).unwrap();
            // |m| = 1 on the shell.
            for row in report.rows.iter().filter(|r| r.beta.iter().all(|&b| b == 0)) {
                assert_relative_eq!(row.sup, 1.0, max_relative = 1e-12);
            }
            // Rows of a fixed beta agree across j up to FD-level noise: the
            // rescaled symbols differ by a constant phase only.
            for beta in multi_indices(2, 2) {
                let base = report.row(0, &beta).unwrap().sup;
                for j in -4..=4 {
                    let sup = report.row(j, &beta).unwrap().sup;
                    let scale = base.abs().max(1.0);
                    assert!(
                        (sup - base).abs() < 1e-6 * scale,
                        "beta {beta:?}: row {j} sup {sup} vs base {base}"
                    );
                }
            }
            assert!(report.constant.is_finite());
        }
    }

    #[test]
    fn scale_phase_is_exactly_invariant() {
        for d in [scalar2(), shear()] {
            let m = builtin_multiplier("scale-phase", &d).unwrap();
            assert!(m.scale_invariant());
            let defect = invariance_defect(&m, &d, 64).unwrap();
            assert!(defect < 1e-10, "invariance defect {defect}");
        }
    }

    #[test]
    fn homogeneous_symbols_flag_scalar_dilations_only() {
        let iso = scalar2();
        let m = builtin_multiplier("riesz:1", &iso).unwrap();
        assert!(m.scale_invariant());
        let defect = invariance_defect(&m, &iso, 64).unwrap();
        assert!(defect < 1e-12, "scalar-dilation riesz defect {defect}");
        assert_relative_eq!(m.eval(&[3.0, 0.0]).re, 1.0, max_relative = 1e-15);

        let sh = shear();
        let m2 = builtin_multiplier("riesz:1", &sh).unwrap();
        assert!(!m2.scale_invariant());
        let defect2 = invariance_defect(&m2, &sh, 64).unwrap();
        assert!(defect2 > 1e-3, "shear should break homogeneity: {defect2}");

        let ang = builtin_multiplier("angular", &iso).unwrap();
        assert!(ang.scale_invariant());
        assert_relative_eq!(ang.eval(&[2.0, 0.0]).re, 1.0, max_relative = 1e-15);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!(ang.eval(&[s, s]).norm() < 1e-15);
    }

    #[test]
    fn angular_symbol_satisfies_mihlin_bounds_for_scalar_dilation() {
        let d = scalar2();
        let m = builtin_multiplier("angular", &d).unwrap();
        let report = mihlin_constant(&m, &d, 3, -5, 5, 32).unwrap();
        assert!(report.constant.is_finite());
        // Degree-zero homogeneity with a scalar dilation: rows repeat.
        for beta in multi_indices(2, 3) {
            let base = report.row(0, &beta).unwrap().sup;
            for j in -5..=5 {
                let sup = report.row(j, &beta).unwrap().sup;
                assert!(
                    (sup - base).abs() < 1e-5 * base.abs().max(1.0),
                    "beta {beta:?}, j {j}: {sup} vs {base}"
                );
            }
        }
    }

    #[test]
    fn non_finite_symbols_are_reported() {
        let d = scalar2();
        let bad = Multiplier::new("bad", 2, false, |xi: &[f64]| {
            Complex64::new(1.0 / (xi[0] - xi[0]), 0.0)
        });
        assert!(matches!(
            mihlin_constant(&bad, &d, 1, 0, 0, 8),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn builtin_spec_parsing() {
        let d = scalar2();
        assert!(builtin_multiplier("nope", &d).is_err());
        assert!(builtin_multiplier("riesz", &d).is_err());
        assert!(builtin_multiplier("riesz:3", &d).is_err());
        assert!(builtin_multiplier("rho-power:x", &d).is_err());
        let m = builtin_multiplier("rho-power:0.5", &d).unwrap();
        assert_eq!(m.name(), "rho-power:0.5");
        // tau = 0 degenerates to the constant symbol.
        let m0 = builtin_multiplier("rho-power:0", &d).unwrap();
        let v = m0.eval(&[1.3, -0.4]);
        assert_relative_eq!(v.re, 1.0, max_relative = 1e-15);
        assert!(v.im.abs() < 1e-15);
    }
}
