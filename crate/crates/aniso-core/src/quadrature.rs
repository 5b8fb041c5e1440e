//! Grid quadrature restricted to an ellipsoid.
//!
//! The sampling grid is the single integration authority of the crate: every
//! moment, Gram matrix, and norm taken over a ball is a weighted sum of the
//! same lattice values a [`SampledField`](crate::field::SampledField) holds.
//! A rule assigns each lattice cell its full volume `h^n` when the cell lies
//! inside the ellipsoid and a fractional volume near the boundary, measured
//! by subsampling the cell at `4^n` interior points. That makes the rule's
//! total measure second-order accurate in `h` while every weight stays
//! nonnegative — the rule is a genuine (sub-)probability measure after
//! normalization, which the projection bounds downstream rely on.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{DomainTag, Grid, SampledField};
use crate::quasinorm::EllipsoidFamily;

/// Subsamples per axis when measuring the occupancy of a boundary cell.
pub const OCCUPANCY_SUBSAMPLES: usize = 4;

/// A quadrature rule over the lattice cells meeting `center + B_scale`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    grid: Grid,
    center: Vec<f64>,
    scale: i64,
    /// `(flat index, weight)` for every cell with nonzero occupancy.
    cells: Vec<(usize, f64)>,
    measure: f64,
}

/// Build the rule for the translated ellipsoid `center + B_scale` of a
/// family. The ellipsoid must fit inside the grid box; a ball reaching
/// beyond it would silently lose mass, so that case errors instead.
pub fn ellipsoid_rule(
    grid: &Grid,
    fam: &EllipsoidFamily,
    center: &[f64],
    scale: i64,
) -> Result<QuadratureRule> {
    let radius = fam.bounding_radius(scale);
    for &c in center {
        if c.abs() + radius > grid.half_extent() {
            return Err(Error::BadGrid {
                what: format!(
                    "ball of bounding radius {radius} at {center:?} leaves the box of half-extent {}",
                    grid.half_extent()
                ),
            });
        }
    }
    build_rule(grid, fam, center, scale)
}

/// Like [`ellipsoid_rule`], but for the intersection of the ball with the
/// grid box: cells outside the box are simply absent. This is the right
/// rule for decomposition ladders, whose balls eventually swallow the whole
/// box — once they do, the rule degenerates to the plain cell measure.
pub fn ellipsoid_rule_clipped(
    grid: &Grid,
    fam: &EllipsoidFamily,
    center: &[f64],
    scale: i64,
) -> Result<QuadratureRule> {
    build_rule(grid, fam, center, scale)
}

fn build_rule(
    grid: &Grid,
    fam: &EllipsoidFamily,
    center: &[f64],
    scale: i64,
) -> Result<QuadratureRule> {
    let n = grid.dim();
    if center.len() != n {
        return Err(Error::BadGrid {
            what: format!("center has {} coordinates on a {n}-d grid", center.len()),
        });
    }
    let radius = fam.bounding_radius(scale);

    // Lattice bounding box of the ball.
    let h = grid.spacing();
    let p = grid.points();
    let mut lo = vec![0usize; n];
    let mut hi = vec![0usize; n];
    for a in 0..n {
        let f_lo = (center[a] - radius + grid.half_extent()) / h - 1.0;
        let f_hi = (center[a] + radius + grid.half_extent()) / h + 1.0;
        lo[a] = f_lo.max(0.0) as usize;
        hi[a] = (f_hi as usize).min(p - 1);
    }

    let sub = OCCUPANCY_SUBSAMPLES;
    let sub_count = sub.pow(n as u32);
    let cell_vol = h.powi(n as i32);
    let mut cells = Vec::new();
    let mut measure = 0.0;

    let mut idx = lo.clone();
    let mut x_cell = vec![0.0; n];
    let mut y = vec![0.0; n];
    'cells: loop {
        let flat = grid.flat_of_multi(&idx);
        grid.coord_into(flat, &mut x_cell);
        // Occupancy: fraction of the 4^n subcell centers inside the ball.
        let mut inside = 0usize;
        for s in 0..sub_count {
            let mut rest = s;
            for a in 0..n {
                let sa = rest % sub;
                rest /= sub;
                y[a] = x_cell[a] - 0.5 * h + (sa as f64 + 0.5) * h / sub as f64 - center[a];
            }
            if fam.member(scale, &y) {
                inside += 1;
            }
        }
        if inside > 0 {
            let w = cell_vol * inside as f64 / sub_count as f64;
            cells.push((flat, w));
            measure += w;
        }
        // Advance the bounding-box multi-index.
        for a in (0..n).rev() {
            idx[a] += 1;
            if idx[a] <= hi[a] {
                continue 'cells;
            }
            idx[a] = lo[a];
            if a == 0 {
                break 'cells;
            }
        }
    }

    if cells.is_empty() {
        return Err(Error::BadGrid {
            what: format!("ball at scale {scale} meets no lattice cell"),
        });
    }
    Ok(QuadratureRule {
        grid: grid.clone(),
        center: center.to_vec(),
        scale,
        cells,
        measure,
    })
}

impl QuadratureRule {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn scale(&self) -> i64 {
        self.scale
    }

    /// `(flat index, weight)` pairs, ascending in the flat index.
    pub fn cells(&self) -> &[(usize, f64)] {
        &self.cells
    }

    /// Total measure of the rule (the ball volume, up to occupancy error).
    pub fn measure(&self) -> f64 {
        self.measure
    }

    /// True when the rule has degenerated to the plain cell measure of the
    /// whole grid: every cell present at full weight. For a clipped rule
    /// this means the ball has swallowed the box, after which every larger
    /// ball produces the identical rule.
    pub fn saturates_grid(&self) -> bool {
        let cell_vol = self.grid.spacing().powi(self.grid.dim() as i32);
        self.cells.len() == self.grid.len()
            && (self.measure - cell_vol * self.grid.len() as f64).abs()
                <= 1e-12 * cell_vol * self.grid.len() as f64
    }

    /// Integrate a function of the cell-center coordinate.
    pub fn integrate<F: FnMut(&[f64]) -> Complex64>(&self, mut f: F) -> Complex64 {
        let mut x = vec![0.0; self.grid.dim()];
        let mut acc = Complex64::new(0.0, 0.0);
        for &(flat, w) in &self.cells {
            self.grid.coord_into(flat, &mut x);
            acc += f(&x) * w;
        }
        acc
    }

    /// Integrate a sampled field over the ball (same grid, space domain).
    pub fn integrate_field(&self, f: &SampledField) -> Result<Complex64> {
        self.check_field(f)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for &(flat, w) in &self.cells {
            acc += f.data()[flat] * w;
        }
        Ok(acc)
    }

    /// Weighted pairing `sum w f g*` of two fields over the ball.
    pub fn inner_product(&self, f: &SampledField, g: &SampledField) -> Result<Complex64> {
        self.check_field(f)?;
        self.check_field(g)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for &(flat, w) in &self.cells {
            acc += f.data()[flat] * g.data()[flat].conj() * w;
        }
        Ok(acc)
    }

    fn check_field(&self, f: &SampledField) -> Result<()> {
        f.expect_tag(DomainTag::Space)?;
        if f.grid().dim() != self.grid.dim()
            || f.grid().points() != self.grid.points()
            || (f.grid().half_extent() - self.grid.half_extent()).abs()
                > 1e-12 * self.grid.half_extent()
        {
            return Err(Error::BadGrid {
                what: "field grid differs from the rule's grid".to_string(),
            });
        }
        Ok(())
    }
}
