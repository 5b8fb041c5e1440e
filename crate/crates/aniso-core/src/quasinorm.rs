//! Canonical ellipsoid families and the step quasi-norm of a dilation.
//!
//! For an expansive matrix `A` there is an ellipsoid `B_0` of unit volume
//! with `B_0 ⊂ A B_0`; setting `B_k = A^k B_0` produces an increasing chain
//! of ellipsoids with `|B_k| = b^k` that plays the role dyadic balls play in
//! the isotropic theory. The step quasi-norm is then
//!
//! ```text
//! rho(x) = b^j   for x in B_{j+1} \ B_j,      rho(0) = 0,
//! ```
//!
//! which satisfies the exact homogeneity `rho(A x) = b * rho(x)` and a
//! quasi-triangle inequality `rho(x + y) <= b^omega (rho(x) + rho(y))`,
//! where `omega` is the smallest integer with `2 B_0 ⊂ B_omega`.
//!
//! The ellipsoid is built from the quadratic form
//!
//! ```text
//! P = sum_{j >= 0} r^{2j} (A^{-j})^T (A^{-j}),        1 < r < lambda_minus,
//! ```
//!
//! truncated once terms drop below `1e-14` in norm. The shape parameter `r`
//! makes nesting *quantitative*: `||A^{-1} x||_P <= r^{-1} ||x||_P`, so each
//! application of `A^{-1}` contracts the `P`-metric by at least `1/r`. The
//! scaling constant `kappa` normalizes `vol(B_0) = |{x : x^T P x <= kappa}| = 1`.
//!
//! Boundary convention: membership is tested with a strict inequality and a
//! relative tie tolerance, `x in B_k  iff  (A^{-k}x)^T P (A^{-k}x) <
//! kappa * (1 - 1e-12)`, so a point lying exactly on an ellipsoid boundary
//! deterministically joins the *outer* shell. Shells differ from the closed
//! convention only on measure-zero sets, and every routine in the crate uses
//! this single predicate.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::dilation::Dilation;
use crate::error::{Error, Result};
use crate::sampling;

/// Scale indices are searched within `[-SCALE_RADIUS, SCALE_RADIUS]`.
pub const SCALE_RADIUS: i64 = 60;

/// Series terms below this norm are dropped when assembling `P`.
pub const P_SERIES_TOL: f64 = 1e-14;

/// Relative tie tolerance of the membership predicate: boundary points are
/// pushed to the outer shell deterministically.
pub const MEMBERSHIP_TIE_TOL: f64 = 1e-12;

/// Volume of the Euclidean unit ball in dimension `n` (n = 1, 2, 3).
fn unit_ball_volume(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => std::f64::consts::PI,
        _ => 4.0 * std::f64::consts::PI / 3.0,
    }
}

/// The canonical ellipsoid family `B_k = A^k B_0` of a dilation.
///
/// Holds the defining form `P`, the volume normalization `kappa`, the shape
/// parameter `r`, and a cache of *factored* pull-backs
/// `M_k = P^{1/2} A^{-k}` for `|k| <= SCALE_RADIUS`, so the membership form
/// evaluates as the sum of squares `|M_k x|^2`. The factored route matters:
/// assembling `Q_k = M_k^T M_k` explicitly and contracting it with `x` can
/// cancel catastrophically at extreme scales for non-normal dilations (the
/// mixed terms of a shear grow like the largest eigenvalue power while the
/// form value along near-contracted directions is smaller by the eigenvalue
/// ratio to the `k`-th power, which quickly passes 10^16), whereas a sum of
/// squares is always sign-correct and loses only the vector-level digits.
#[derive(Debug, Clone)]
pub struct EllipsoidFamily {
    dilation: Dilation,
    p_form: DMatrix<f64>,
    kappa: f64,
    r: f64,
    factors: Vec<DMatrix<f64>>,
    p_sqrt: DMatrix<f64>,
    p_inv_sqrt: DMatrix<f64>,
}

/// Build the canonical ellipsoid family for a dilation.
///
/// `r`, when given, must satisfy `1 < r < lambda_minus`; the default is the
/// midpoint `(1 + lambda_minus) / 2`. Errors with
/// [`Error::BadShapeParameter`] otherwise.
pub fn canonical_ellipsoids(dilation: &Dilation, r: Option<f64>) -> Result<EllipsoidFamily> {
    let lm = dilation.lambda_minus();
    let r = r.unwrap_or((1.0 + lm) / 2.0);
    if !(1.0 < r && r < lm) {
        return Err(Error::BadShapeParameter { r, lambda_minus: lm });
    }
    let n = dilation.dim();

    // P = sum r^{2j} (A^{-j})^T (A^{-j}), truncated at P_SERIES_TOL.
    let a_inv = dilation.power(-1)?;
    let mut p = DMatrix::<f64>::zeros(n, n);
    let mut factor = DMatrix::<f64>::identity(n, n); // (A^{-j}) with r^j folded in
    loop {
        let term = factor.transpose() * &factor;
        if term.norm() < P_SERIES_TOL && p.norm() > 0.0 {
            break;
        }
        p += &term;
        factor = r * (&factor * &a_inv);
        if factor.norm() > 1e6 {
            // The series diverges only if r >= |lambda_1|, which the shape
            // check above excludes; this is a hard stop for safety.
            return Err(Error::BadShapeParameter { r, lambda_minus: lm });
        }
    }
    // Symmetrize away accumulation asymmetry.
    p = (&p + &p.transpose()) * 0.5;

    // kappa: vol{x^T P x <= kappa} = V_n kappa^{n/2} / sqrt(det P) = 1.
    let det_p = p.determinant();
    let kappa = (det_p.sqrt() / unit_ball_volume(n)).powf(2.0 / n as f64);

    let eig = nalgebra::SymmetricEigen::new(p.clone());
    let mut sqrt_vals = eig.eigenvalues.clone();
    let mut inv_sqrt_vals = eig.eigenvalues.clone();
    for i in 0..n {
        sqrt_vals[i] = eig.eigenvalues[i].sqrt();
        inv_sqrt_vals[i] = 1.0 / eig.eigenvalues[i].sqrt();
    }
    let p_sqrt = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
    let p_inv_sqrt =
        &eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt_vals) * eig.eigenvectors.transpose();

    // Factored pull-backs for the searchable index range.
    let mut factors = Vec::with_capacity(2 * SCALE_RADIUS as usize + 1);
    for k in -SCALE_RADIUS..=SCALE_RADIUS {
        factors.push(&p_sqrt * dilation.power(-k)?);
    }

    let fam = EllipsoidFamily {
        dilation: dilation.clone(),
        p_form: p,
        kappa,
        r,
        factors,
        p_sqrt,
        p_inv_sqrt,
    };

    // Nesting must hold as a form inequality: (A^{-1})^T P A^{-1} <= r^{-2} P.
    let f1 = &fam.factors[(1 + SCALE_RADIUS) as usize];
    let m = f1.transpose() * f1 - (1.0 / (r * r)) * &fam.p_form;
    let max_eig = nalgebra::SymmetricEigen::new((&m + &m.transpose()) * 0.5)
        .eigenvalues
        .iter()
        .fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    debug_assert!(
        max_eig <= 1e-10 * fam.p_form.norm(),
        "nesting inequality violated: {max_eig}"
    );

    Ok(fam)
}

/// Result of a scale-index query: either a finite shell index or the marker
/// for the origin, whose quasi-norm is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleIndex {
    /// `x` lies in `B_{j+1} \ B_j`.
    Finite(i64),
    /// `x` is the origin.
    NegInfinity,
}

impl EllipsoidFamily {
    /// The dilation this family belongs to.
    pub fn dilation(&self) -> &Dilation {
        &self.dilation
    }

    /// The defining quadratic form `P`.
    pub fn p_form(&self) -> &DMatrix<f64> {
        &self.p_form
    }

    /// Volume normalization: `B_0 = {x : x^T P x <= kappa}` has volume 1.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Shape parameter `r` of the defining series.
    pub fn r(&self) -> f64 {
        self.r
    }

    /// Value of the membership form for `B_k` at `x`:
    /// `(A^{-k} x)^T P (A^{-k} x) = |M_k x|^2`, from the factored cache.
    pub fn form_value(&self, k: i64, x: &[f64]) -> f64 {
        let m = &self.factors[(k + SCALE_RADIUS) as usize];
        let n = self.dilation.dim();
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += m[(i, j)] * x[j];
            }
            acc += row * row;
        }
        acc
    }

    /// Membership predicate `x in B_k` (strict form, ties outward).
    pub fn member(&self, k: i64, x: &[f64]) -> bool {
        self.form_value(k, x) < self.kappa * (1.0 - MEMBERSHIP_TIE_TOL)
    }

    /// The shell index `j` with `x in B_{j+1} \ B_j`, by bisection on the
    /// monotone membership predicate over `[-SCALE_RADIUS, SCALE_RADIUS]`.
    ///
    /// Returns [`ScaleIndex::NegInfinity`] for the origin and
    /// [`Error::ScaleUnresolvable`] for points whose index falls outside the
    /// searchable range.
    pub fn scale_index(&self, x: &[f64]) -> Result<ScaleIndex> {
        let norm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(ScaleIndex::NegInfinity);
        }
        if !self.member(SCALE_RADIUS, x) {
            return Err(Error::ScaleUnresolvable {
                norm,
                max: SCALE_RADIUS,
            });
        }
        if self.member(-SCALE_RADIUS, x) {
            return Err(Error::ScaleUnresolvable {
                norm,
                max: SCALE_RADIUS,
            });
        }
        // member(-SCALE_RADIUS) = false, member(SCALE_RADIUS) = true; the
        // P-metric contraction of A^{-1} makes membership monotone in k.
        let mut lo = -SCALE_RADIUS; // not a member
        let mut hi = SCALE_RADIUS; // member
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.member(mid, x) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(ScaleIndex::Finite(hi - 1))
    }

    /// Largest Euclidean norm over `B_k` (the bounding radius):
    /// `sqrt(kappa)` over the smallest singular value of `M_k`.
    pub fn bounding_radius(&self, k: i64) -> f64 {
        let m = &self.factors[(k + SCALE_RADIUS) as usize];
        let sigma_min = m
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .fold(f64::INFINITY, |a, &s| a.min(s));
        self.kappa.sqrt() / sigma_min
    }

    /// Smallest Euclidean norm over the boundary of `B_k` (the inscribed
    /// radius): `sqrt(kappa)` over the largest singular value of `M_k`.
    pub fn inner_radius(&self, k: i64) -> f64 {
        let m = &self.factors[(k + SCALE_RADIUS) as usize];
        let sigma_max = m
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .fold(0.0_f64, |a, &s| a.max(s));
        self.kappa.sqrt() / sigma_max
    }

    /// A point of the boundary `∂B_0` in direction `u` (unit vector):
    /// `sqrt(kappa) * P^{-1/2} u` has `x^T P x = kappa` when the direction is
    /// mapped through the inverse square root.
    pub fn boundary_point(&self, u: &[f64]) -> Vec<f64> {
        let n = self.dilation.dim();
        let mut x = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                x[i] += self.p_inv_sqrt[(i, j)] * u[j];
            }
        }
        let scale = self.kappa.sqrt();
        for v in &mut x {
            *v *= scale;
        }
        x
    }

    /// A point of the canonical annulus `B_1 \ B_0` in direction `v` at
    /// radial fraction `t in (0, 1)`: the radius interpolates geometrically
    /// between the two boundary crossings of the ray `tau v`.
    ///
    /// For interior `t` the shell membership of the returned point is exact
    /// by construction: `tau_0(v) < tau < tau_1(v)`.
    pub fn annulus_point(&self, v: &[f64], t: f64) -> Vec<f64> {
        let q0 = self.form_value(0, v);
        let q1 = self.form_value(1, v);
        let tau0 = (self.kappa / q0).sqrt();
        let tau1 = (self.kappa / q1).sqrt();
        let tau = tau0.powf(1.0 - t) * tau1.powf(t);
        v.iter().map(|&c| c * tau).collect()
    }

    /// `P`-metric operator norm of `A^{-k}`:
    /// the largest singular value of `P^{1/2} A^{-k} P^{-1/2}`.
    pub fn p_metric_contraction(&self, k: i64) -> Result<f64> {
        let m = &self.p_sqrt * self.dilation.power(-k)? * &self.p_inv_sqrt;
        Ok(m.svd(false, false)
            .singular_values
            .iter()
            .fold(0.0_f64, |a, &s| a.max(s)))
    }
}

/// The step quasi-norm `rho` of a dilation, together with the doubling data
/// `omega` (smallest integer with `2 B_0 ⊂ B_omega`) and `c = b^omega`.
#[derive(Debug, Clone)]
pub struct StepQuasiNorm {
    family: EllipsoidFamily,
    omega: i64,
    doubling: f64,
}

/// Determine `omega` by two independent routes and keep the larger answer.
///
/// * Exact route: `2 B_0 ⊂ B_k` iff `4 ||A^{-k}||_P^2 <= 1`, where the norm
///   is the `P`-metric operator norm; the `P`-contraction of `A^{-1}` makes
///   the criterion monotone in `k`, so the first success is minimal.
/// * Sampled route: at least `boundary_samples` (minimum `10^4`) points of
///   `∂B_0` are doubled and tested for membership in `B_k`.
///
/// Both routes allow a `1e-12` relative slack so that exact tangency (for
/// example `2 B_0 = B_1` when `A = 2I`) counts as containment.
pub fn omega_and_doubling(
    family: &EllipsoidFamily,
    boundary_samples: usize,
) -> Result<StepQuasiNorm> {
    let n = family.dilation.dim();
    let samples = boundary_samples.max(10_000);
    let tol = 1.0 + 1e-12;

    let exact_holds = |k: i64| -> Result<bool> {
        let norm = family.p_metric_contraction(k)?;
        Ok(4.0 * norm * norm <= tol)
    };
    let sampled_holds = |k: i64| -> bool {
        let kappa_tol = family.kappa * tol;
        sampling::unit_directions(n, samples)
            .into_iter()
            .all(|u| {
                let x = family.boundary_point(&u);
                let doubled: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
                family.form_value(k, &doubled) <= kappa_tol
            })
    };

    let mut omega_exact = None;
    let mut omega_sampled = None;
    for k in 0..=SCALE_RADIUS {
        if omega_exact.is_none() && exact_holds(k)? {
            omega_exact = Some(k);
        }
        if omega_sampled.is_none() && sampled_holds(k) {
            omega_sampled = Some(k);
        }
        if omega_exact.is_some() && omega_sampled.is_some() {
            break;
        }
    }
    let (Some(e), Some(s)) = (omega_exact, omega_sampled) else {
        return Err(Error::ScaleUnresolvable {
            norm: 2.0,
            max: SCALE_RADIUS,
        });
    };
    debug_assert!(s <= e, "sampled sup cannot exceed the exact sup");
    let omega = e.max(s);
    let doubling = family.dilation.b().powi(omega as i32);
    Ok(StepQuasiNorm {
        family: family.clone(),
        omega,
        doubling,
    })
}

impl StepQuasiNorm {
    /// The underlying ellipsoid family.
    pub fn family(&self) -> &EllipsoidFamily {
        &self.family
    }

    /// Smallest integer with `2 B_0 ⊂ B_omega`.
    pub fn omega(&self) -> i64 {
        self.omega
    }

    /// Quasi-triangle constant `c = b^omega`.
    pub fn doubling(&self) -> f64 {
        self.doubling
    }

    /// The step quasi-norm: `rho(x) = b^j` for `x in B_{j+1} \ B_j`, zero at
    /// the origin.
    pub fn rho(&self, x: &[f64]) -> Result<f64> {
        match self.family.scale_index(x)? {
            ScaleIndex::NegInfinity => Ok(0.0),
            ScaleIndex::Finite(j) => Ok(self.family.dilation.b().powi(j as i32)),
        }
    }
}

/// Outcome of comparing the quasi-norm with Euclidean length.
///
/// The fitted constant is the smallest `c >= 1` with
///
/// ```text
/// (1/c) rho(x)^zeta_minus <= |x| <= c rho(x)^zeta_plus   for rho(x) >= 1,
/// (1/c) rho(x)^zeta_plus  <= |x| <= c rho(x)^zeta_minus  for rho(x) <  1,
/// ```
///
/// over the drawn samples; `violations` recounts failures at the fitted
/// constant and is zero by construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EuclidCompareReport {
    pub c_a: f64,
    pub samples: usize,
    pub violations: usize,
    pub rho_min: f64,
    pub rho_max: f64,
}

/// Fit the two-sided power sandwich between `rho` and Euclidean length on
/// `n_samples` points spanning shell indices `[-20, 20]`.
pub fn euclid_compare(q: &StepQuasiNorm, n_samples: usize, seed: u64) -> Result<EuclidCompareReport> {
    let rows = quasinorm_table(q, n_samples, seed)?;
    let zm = q.family.dilation.zeta_minus();
    let zp = q.family.dilation.zeta_plus();

    let mut c = 1.0_f64;
    let mut rho_min = f64::INFINITY;
    let mut rho_max = 0.0_f64;
    for row in &rows {
        let (rho, len) = (row.rho, row.euclid);
        rho_min = rho_min.min(rho);
        rho_max = rho_max.max(rho);
        let (up, down) = if rho >= 1.0 { (zp, zm) } else { (zm, zp) };
        c = c.max(len / rho.powf(up));
        c = c.max(rho.powf(down) / len);
    }

    let slack = 1.0 + 1e-12;
    let violations = rows
        .iter()
        .filter(|row| {
            let (rho, len) = (row.rho, row.euclid);
            let (up, down) = if rho >= 1.0 { (zp, zm) } else { (zm, zp) };
            len > c * rho.powf(up) * slack || len * c * slack < rho.powf(down)
        })
        .count();

    Ok(EuclidCompareReport {
        c_a: c,
        samples: rows.len(),
        violations,
        rho_min,
        rho_max,
    })
}

/// One sampled point with its quasi-norm data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuasinormRow {
    pub x: Vec<f64>,
    pub scale_index: i64,
    pub rho: f64,
    pub euclid: f64,
}

/// Draw `n_samples` points with shell indices uniform over `[-20, 20]` and
/// geometric radial positions inside each shell, and tabulate
/// `(x, scale_index, rho, |x|)`.
///
/// The sampler places points strictly inside their shells (radial fraction in
/// `[0.02, 0.98]`), so the recorded index is exact by construction.
pub fn quasinorm_table(q: &StepQuasiNorm, n_samples: usize, seed: u64) -> Result<Vec<QuasinormRow>> {
    let fam = &q.family;
    let n = fam.dilation.dim();
    let mut rng = sampling::seeded_rng(seed);
    let mut rows = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let j = rng.gen_range(-20..=20_i64);
        let t = rng.gen_range(0.02..0.98);
        let v = sampling::random_direction(n, &mut rng);
        let y = fam.annulus_point(&v, t);
        let a_j = fam.dilation.power(j)?;
        let mut x = vec![0.0; n];
        for i in 0..n {
            for l in 0..n {
                x[i] += a_j[(i, l)] * y[l];
            }
        }
        let idx = match fam.scale_index(&x)? {
            ScaleIndex::Finite(i) => i,
            ScaleIndex::NegInfinity => unreachable!("sampler never returns the origin"),
        };
        let euclid = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        rows.push(QuasinormRow {
            x,
            scale_index: idx,
            rho: fam.dilation.b().powi(idx as i32),
            euclid,
        });
    }
    Ok(rows)
}

/// Write a quasi-norm table as CSV: coordinates, shell index, `rho`, `|x|`.
pub fn write_table_csv<W: Write>(rows: &[QuasinormRow], mut w: W) -> Result<()> {
    let dim = rows.first().map_or(0, |r| r.x.len());
    let coords: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    writeln!(w, "{},scale_index,rho,euclid", coords.join(","))?;
    for row in rows {
        let xs: Vec<String> = row.x.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(
            w,
            "{},{},{:.17e},{:.17e}",
            xs.join(","),
            row.scale_index,
            row.rho,
            row.euclid
        )?;
    }
    Ok(())
}

/// Serialization mirror for [`EllipsoidFamily`]: the dilation, the shape
/// parameter, and the derived `(P, kappa)` for archival.
///
/// Deserialization rebuilds the family from `(dilation, r)` and cross-checks
/// the stored form and normalization to `1e-10` relative.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EllipsoidFamilySpec {
    pub dilation: crate::dilation::DilationSpec,
    pub r: f64,
    pub p_form: Vec<Vec<f64>>,
    pub kappa: f64,
}

impl From<&EllipsoidFamily> for EllipsoidFamilySpec {
    fn from(f: &EllipsoidFamily) -> Self {
        let n = f.dilation.dim();
        EllipsoidFamilySpec {
            dilation: (&f.dilation).into(),
            r: f.r,
            p_form: (0..n)
                .map(|i| (0..n).map(|j| f.p_form[(i, j)]).collect())
                .collect(),
            kappa: f.kappa,
        }
    }
}

impl TryFrom<&EllipsoidFamilySpec> for EllipsoidFamily {
    type Error = Error;

    fn try_from(spec: &EllipsoidFamilySpec) -> Result<EllipsoidFamily> {
        let dilation = Dilation::try_from(&spec.dilation)?;
        let fam = canonical_ellipsoids(&dilation, Some(spec.r))?;
        let n = dilation.dim();
        let mut max_dev = (fam.kappa - spec.kappa).abs() / fam.kappa;
        for i in 0..n {
            for j in 0..n {
                max_dev = max_dev.max((fam.p_form[(i, j)] - spec.p_form[i][j]).abs() / fam.p_form.norm());
            }
        }
        if max_dev > 1e-10 {
            return Err(Error::BadShapeParameter {
                r: spec.r,
                lambda_minus: dilation.lambda_minus(),
            });
        }
        Ok(fam)
    }
}
