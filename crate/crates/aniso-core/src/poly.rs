//! Polynomial bookkeeping: graded multi-indices, monomials, orthonormal
//! bases in the grid-sampling measure, and local polynomial projections.
//!
//! The projection of a field onto polynomials over a dilated ball is the
//! engine of the atomic decomposition: the ladder pieces it produces must
//! have *exactly* vanishing moments in the discrete measure, not merely up
//! to quadrature error. That is arranged by orthonormalizing the monomials
//! against the very quadrature rule the moments are later taken in, and by
//! working in the ball's own coordinates `u = A^{-j}(x - y)` so the Gram
//! matrix stays conditioned independently of how eccentric the ball is in
//! the ambient frame.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::dilation::Dilation;
use crate::error::{Error, Result};
use crate::field::{DomainTag, Grid, SampledField};
use crate::quadrature::{ellipsoid_rule, ellipsoid_rule_clipped, QuadratureRule};
use crate::quasinorm::EllipsoidFamily;

/// Gram matrices beyond this condition number are rejected: past it the
/// triangular solve loses more than half the mantissa and the "exact"
/// discrete orthogonality silently degrades.
pub const GRAM_CONDITION_LIMIT: f64 = 1e12;

/// All multi-indices `beta in N^dim` with `|beta| <= max_order`, in graded
/// lexicographic order (total degree first, then lexicographic).
pub fn multi_indices(dim: usize, max_order: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for total in 0..=max_order as u32 {
        let mut current = vec![0u32; dim];
        compositions(total, 0, &mut current, &mut out);
    }
    out
}

fn compositions(rest: u32, axis: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if axis + 1 == current.len() {
        current[axis] = rest;
        out.push(current.clone());
        return;
    }
    // Lexicographic within a degree: larger leading entries first.
    for lead in (0..=rest).rev() {
        current[axis] = lead;
        compositions(rest - lead, axis + 1, current, out);
    }
}

/// Evaluate the monomial `x^beta`.
pub fn monomial(x: &[f64], beta: &[u32]) -> f64 {
    x.iter()
        .zip(beta)
        .map(|(&xi, &b)| xi.powi(b as i32))
        .product()
}

/// Polynomials orthonormal with respect to a discrete measure, stored as
/// lower-triangular combinations of monomials in graded lexicographic
/// order: `Q_i = sum_{j <= i} coeffs[(i, j)] u^{indices[j]}`.
#[derive(Debug, Clone)]
pub struct PolynomialBasis {
    indices: Vec<Vec<u32>>,
    coeffs: DMatrix<f64>,
    gram_residual: f64,
    condition: f64,
}

impl PolynomialBasis {
    /// Orthonormalize the monomials of total degree `<= degree` against the
    /// measure `sum_z weights[z] delta_{points[z]}` by a Cholesky (i.e.
    /// Gram-Schmidt) factorization of the Gram matrix.
    pub fn orthonormal(
        dim: usize,
        degree: usize,
        points: &[Vec<f64>],
        weights: &[f64],
    ) -> Result<PolynomialBasis> {
        let indices = multi_indices(dim, degree);
        let nm = indices.len();
        let mut gram = DMatrix::zeros(nm, nm);
        let mut mono = vec![0.0; nm];
        for (x, &w) in points.iter().zip(weights) {
            for (a, beta) in indices.iter().enumerate() {
                mono[a] = monomial(x, beta);
            }
            for a in 0..nm {
                for b in 0..=a {
                    gram[(a, b)] += w * mono[a] * mono[b];
                }
            }
        }
        for a in 0..nm {
            for b in a + 1..nm {
                gram[(a, b)] = gram[(b, a)];
            }
        }

        let sv = gram.clone().svd(false, false).singular_values;
        let condition: f64 = sv.max() / sv.min();
        if !condition.is_finite() || condition > GRAM_CONDITION_LIMIT {
            return Err(Error::IllConditioned { cond: condition });
        }
        let chol = nalgebra::Cholesky::new(gram.clone())
            .ok_or(Error::IllConditioned { cond: condition })?;
        let coeffs = chol
            .l()
            .solve_lower_triangular(&DMatrix::identity(nm, nm))
            .ok_or(Error::IllConditioned { cond: condition })?;

        // How orthonormal the result actually is: C G C^T - I in the max norm.
        let defect: DMatrix<f64> =
            &coeffs * &gram * coeffs.transpose() - DMatrix::<f64>::identity(nm, nm);
        let gram_residual = defect.iter().fold(0.0f64, |m, &v| m.max(v.abs()));

        Ok(PolynomialBasis {
            indices,
            coeffs,
            gram_residual,
            condition,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Multi-indices of the underlying monomials, graded lexicographic.
    pub fn indices(&self) -> &[Vec<u32>] {
        &self.indices
    }

    /// Lower-triangular coefficient matrix (rows are basis elements).
    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    /// Max-norm of `C G C^T - I`; round-off level when construction succeeds.
    pub fn gram_residual(&self) -> f64 {
        self.gram_residual
    }

    /// Condition number of the monomial Gram matrix that was factored.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Evaluate basis element `i` at `u`.
    pub fn eval(&self, i: usize, u: &[f64]) -> f64 {
        let mut acc = 0.0;
        for j in 0..=i {
            acc += self.coeffs[(i, j)] * monomial(u, &self.indices[j]);
        }
        acc
    }

    /// Evaluate every basis element at `u` into `out`.
    pub fn eval_all(&self, u: &[f64], out: &mut [f64]) {
        let nm = self.indices.len();
        let mut mono = vec![0.0; nm];
        for (j, beta) in self.indices.iter().enumerate() {
            mono[j] = monomial(u, beta);
        }
        for (i, o) in out.iter_mut().enumerate().take(nm) {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += self.coeffs[(i, j)] * mono[j];
            }
            *o = acc;
        }
    }
}

/// Orthogonal projection onto polynomials of bounded degree over one
/// dilated ball, in the ball's own quadrature measure.
///
/// Basis elements are `phi_alpha(x) = Q_alpha(A^{-j}(x - y))` with the
/// `Q_alpha` orthonormalized against the rule of the ball `y + B_j`, so
/// `pi f = sum_alpha <f, phi_alpha> phi_alpha` is idempotent and `f - pi f`
/// annihilates every monomial of degree `<= degree` exactly in the grid
/// measure of the ball.
#[derive(Debug, Clone)]
pub struct ProjectionOperator {
    rule: QuadratureRule,
    basis: PolynomialBasis,
    degree: usize,
    /// `phi_alpha` at each rule cell: `values[(alpha, z)]`.
    values: DMatrix<f64>,
    /// Ball center, for evaluating the basis away from the rule cells.
    center: Vec<f64>,
    /// `A^{-scale}`, the map to unit-ball coordinates.
    back: DMatrix<f64>,
}

impl ProjectionOperator {
    pub fn new(
        dil: &Dilation,
        fam: &EllipsoidFamily,
        grid: &Grid,
        center: &[f64],
        scale: i64,
        degree: usize,
    ) -> Result<ProjectionOperator> {
        let rule = ellipsoid_rule(grid, fam, center, scale)?;
        Self::with_rule(dil, grid, center, scale, degree, rule)
    }

    /// Like [`ProjectionOperator::new`] but over the intersection of the
    /// ball with the grid box, for ladders whose balls outgrow the box.
    pub fn new_clipped(
        dil: &Dilation,
        fam: &EllipsoidFamily,
        grid: &Grid,
        center: &[f64],
        scale: i64,
        degree: usize,
    ) -> Result<ProjectionOperator> {
        let rule = ellipsoid_rule_clipped(grid, fam, center, scale)?;
        Self::with_rule(dil, grid, center, scale, degree, rule)
    }

    fn with_rule(
        dil: &Dilation,
        grid: &Grid,
        center: &[f64],
        scale: i64,
        degree: usize,
        rule: QuadratureRule,
    ) -> Result<ProjectionOperator> {
        let back = dil.power(-scale)?;
        let n = grid.dim();

        let mut x = vec![0.0; n];
        let mut locals = Vec::with_capacity(rule.cells().len());
        let mut weights = Vec::with_capacity(rule.cells().len());
        for &(flat, w) in rule.cells() {
            grid.coord_into(flat, &mut x);
            let mut u = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    u[i] += back[(i, j)] * (x[j] - center[j]);
                }
            }
            locals.push(u);
            weights.push(w);
        }

        let basis = PolynomialBasis::orthonormal(n, degree, &locals, &weights)?;
        let nb = basis.len();
        let mut values = DMatrix::zeros(nb, locals.len());
        let mut col = vec![0.0; nb];
        for (z, u) in locals.iter().enumerate() {
            basis.eval_all(u, &mut col);
            for (a, &v) in col.iter().enumerate() {
                values[(a, z)] = v;
            }
        }

        Ok(ProjectionOperator {
            rule,
            basis,
            degree,
            values,
            center: center.to_vec(),
            back,
        })
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn basis(&self) -> &PolynomialBasis {
        &self.basis
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Coefficients `<f, phi_alpha>` in the ball's quadrature measure.
    pub fn coefficients(&self, f: &SampledField) -> Result<Vec<Complex64>> {
        f.expect_tag(DomainTag::Space)?;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); self.basis.len()];
        for (z, &(flat, w)) in self.rule.cells().iter().enumerate() {
            let fv = f.data()[flat] * w;
            for (a, c) in coeffs.iter_mut().enumerate() {
                *c += fv * self.values[(a, z)];
            }
        }
        Ok(coeffs)
    }

    /// `pi f` as a field supported on the ball's cells (zero elsewhere).
    pub fn project_field(&self, f: &SampledField) -> Result<SampledField> {
        let coeffs = self.coefficients(f)?;
        let mut out = SampledField::zeros(self.rule.grid(), DomainTag::Space);
        for (z, &(flat, _)) in self.rule.cells().iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (a, &c) in coeffs.iter().enumerate() {
                acc += c * self.values[(a, z)];
            }
            out.data_mut()[flat] = acc;
        }
        Ok(out)
    }

    /// `(f - pi f) 1_B` as a field supported on the ball's cells.
    pub fn residual_on_ball(&self, f: &SampledField) -> Result<SampledField> {
        let mut out = self.project_field(f)?;
        for &(flat, _) in self.rule.cells() {
            let v = f.data()[flat] - out.data()[flat];
            out.data_mut()[flat] = v;
        }
        Ok(out)
    }

    /// Re-zero the plain lattice moments of a field by subtracting a lump
    /// supported on the ball.
    ///
    /// Subtracts `sum_a c_a Q_a(u(x)) occ(x)` with
    /// `c_a = h^n sum_x f(x) Q_a(u(x))` accumulated over the whole grid.
    /// Because the `Q_a` are orthonormal in the rule measure and `occ`
    /// folds that measure into plain sums, the correction basis is
    /// bi-orthogonal to the plain moments — one sweep lands every moment
    /// of degree `<= s` at the round-off of `f`'s own magnitude, and the
    /// subtracted lump never leaves the ball. Two uses: moment-correcting
    /// a spread-out field by a compactly supported lump, and the moment
    /// analogue of re-orthogonalization — telescoping differences of
    /// projection residuals are moment-free in exact arithmetic but carry
    /// cancellation noise at the scale of the *inputs*, which matters
    /// once the difference is renormalized by a small coefficient.
    pub fn scrub_plain_moments(&self, f: &mut SampledField) -> Result<()> {
        f.expect_tag(DomainTag::Space)?;
        let grid = self.rule.grid();
        let n = grid.dim();
        let cell = grid.spacing().powi(n as i32);
        let mut coeffs = vec![Complex64::new(0.0, 0.0); self.basis.len()];
        let mut x = vec![0.0; n];
        let mut u = vec![0.0; n];
        let mut row = vec![0.0; self.basis.len()];
        for flat in 0..grid.len() {
            let fv = f.data()[flat];
            if fv == Complex64::new(0.0, 0.0) {
                continue;
            }
            grid.coord_into(flat, &mut x);
            for i in 0..n {
                u[i] = 0.0;
                for j in 0..n {
                    u[i] += self.back[(i, j)] * (x[j] - self.center[j]);
                }
            }
            self.basis.eval_all(&u, &mut row);
            for (a, c) in coeffs.iter_mut().enumerate() {
                *c += fv * cell * row[a];
            }
        }
        for (z, &(flat, w)) in self.rule.cells().iter().enumerate() {
            let occ = w / cell;
            let mut acc = Complex64::new(0.0, 0.0);
            for (a, &c) in coeffs.iter().enumerate() {
                acc += c * self.values[(a, z)];
            }
            f.data_mut()[flat] -= acc * occ;
        }
        Ok(())
    }

    /// Largest moment of `(f - pi f) 1_B` against the local monomials
    /// `u^beta`, `|beta| <= degree`, in the ball's quadrature measure.
    /// Round-off level by construction; exposed so callers can verify.
    pub fn moment_defect(&self, f: &SampledField) -> Result<f64> {
        let res = self.residual_on_ball(f)?;
        let coeffs = self.coefficients(&res)?;
        // The monomial moments are triangular combinations of the basis
        // coefficients, so it is enough that the latter vanish.
        Ok(coeffs.iter().fold(0.0f64, |m, c| m.max(c.norm())))
    }

    /// The uniform projection constant: the smallest witnessed `C0` with
    /// `|pi f(x)| <= C0 int_B |f| dmu / mu(B)` over the ball's cells,
    /// realized as
    /// `sup_x sum_alpha |phi_alpha(x)| * max_z |phi_alpha(z)| * mu(B)`.
    /// Orthonormality makes each factor scale like `mu(B)^{-1/2}`, so the
    /// estimate is invariant under dilation and translation of the ball up
    /// to quadrature error. For degree zero it is exactly 1 on any ball.
    pub fn c0_estimate(&self) -> f64 {
        let nb = self.basis.len();
        let nc = self.rule.cells().len();
        let mut col_max = vec![0.0f64; nb];
        for a in 0..nb {
            for z in 0..nc {
                col_max[a] = col_max[a].max(self.values[(a, z)].abs());
            }
        }
        let mut best = 0.0f64;
        for x in 0..nc {
            let mut row = 0.0;
            for (a, &m) in col_max.iter().enumerate() {
                row += self.values[(a, x)].abs() * m;
            }
            best = best.max(row);
        }
        best * self.rule.measure()
    }

    /// Schur bound for the projection on sup-norms: the kernel of `pi` is
    /// `K(x, z) = sum_alpha phi_alpha(x) phi_alpha(z)`, and
    /// `sup_x sum_z w_z |K(x, z)|` dominates the operator norm of `pi` on
    /// bounded functions over the ball.
    pub fn schur_constant(&self) -> f64 {
        let nb = self.basis.len();
        let nc = self.rule.cells().len();
        let mut best = 0.0f64;
        for x in 0..nc {
            let mut row = 0.0;
            for (z, &(_, w)) in self.rule.cells().iter().enumerate() {
                let mut k = 0.0;
                for a in 0..nb {
                    k += self.values[(a, x)] * self.values[(a, z)];
                }
                row += w * k.abs();
            }
            best = best.max(row);
        }
        best
    }
}
