//! Smooth dyadic-type partition of unity on the frequency side.
//!
//! Everything here lives on the *adjoint* ellipsoid family: the shells of
//! `A^T` tile frequency space the way the primal shells tile physical space.
//! The building block is a `C^infinity` cutoff `eta` that is exactly `1` on
//! the closed dual ball `B*_{-1}` and exactly `0` outside the open `B*_0`,
//! glued between the two boundaries by the classical flat bump
//! `h(t) = exp(-1/t)`:
//!
//! ```text
//! eta(xi) = S(t(xi)),   S(t) = h(1-t) / (h(t) + h(1-t)),
//! t(xi)   = ln q_{-1} / (ln q_{-1} - ln q_0),
//! ```
//!
//! where `q_j` is the membership form of `B*_j` normalized by `kappa`. The
//! transition coordinate is `0` on the inner boundary and `1` on the outer
//! one, and the two logarithms are separated by at least `2 ln r`, so `t` is
//! smooth and strictly monotone along rays.
//!
//! The annular piece is `psi^(xi) = eta((A^T)^{-1} xi) - eta(xi)`, supported
//! in the open shell `B*_1 \ closure(B*_{-1})`; its rescalings
//! `psi^((A^T)^{-j} xi)` telescope, so partial sums of the partition are
//! exactly `1` on the covered frequency band and exactly `0` at the origin.
//!
//! The same telescoping collapses the smooth scale coordinate
//! `Theta(xi) = sum_j j psi^((A^T)^{-j} xi)` to two terms:
//! `Theta = (i+1) - eta((A^T)^{-(i+1)} xi)` where `i` is the dual shell
//! index of `xi`. `Theta` increases by exactly one under `xi -> A^T xi`,
//! which is what makes the built-in invariant symbols invariant.
//!
//! All evaluations go through the *cached* pullback forms of the family, so
//! the cutoffs, the shell indices, and the membership predicate can never
//! disagree about which side of a boundary a point is on.

use crate::dilation::Dilation;
use crate::error::Result;
use crate::quasinorm::{canonical_ellipsoids, EllipsoidFamily, ScaleIndex, SCALE_RADIUS};

/// The smooth partition machinery for one dilation.
#[derive(Debug, Clone)]
pub struct LPPartition {
    star: EllipsoidFamily,
}

/// The flat half-bump `exp(-1/t)` for `t > 0`, zero otherwise.
fn flat_bump(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// The `C^infinity` step: `1` for `t <= 0`, `0` for `t >= 1`, strictly
/// decreasing in between, with all derivatives vanishing at the joins.
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t >= 1.0 {
        return 0.0;
    }
    let a = flat_bump(1.0 - t);
    let b = flat_bump(t);
    a / (a + b)
}

impl LPPartition {
    /// Build the partition for a dilation, using the canonical ellipsoids of
    /// its adjoint (default shape parameter).
    pub fn new(dil: &Dilation) -> Result<LPPartition> {
        let star = canonical_ellipsoids(&dil.adjoint(), None)?;
        Ok(LPPartition { star })
    }

    /// The underlying dual ellipsoid family.
    pub fn star_family(&self) -> &EllipsoidFamily {
        &self.star
    }

    /// Transition coordinate of the scale-`j` cutoff: `0` on the inner
    /// boundary of the transition shell `B*_j \ B*_{j-1}`, `1` on the outer.
    /// Clamps to the exact branches outside that shell.
    fn transition(&self, j: i64, xi: &[f64]) -> f64 {
        assert!(
            j > -SCALE_RADIUS && j <= SCALE_RADIUS,
            "cutoff scale {j} outside the cached form range"
        );
        let kappa = self.star.kappa();
        let q_outer = self.star.form_value(j, xi) / kappa;
        if q_outer >= 1.0 {
            return 1.0;
        }
        let q_inner = self.star.form_value(j - 1, xi) / kappa;
        if q_inner <= 1.0 {
            return 0.0;
        }
        // q_outer < 1 < q_inner; the log gap is at least 2 ln r > 0.
        q_inner.ln() / (q_inner.ln() - q_outer.ln())
    }

    /// The rescaled cutoff `eta((A^T)^{-j} xi)`: exactly `1` on the closed
    /// `B*_{j-1}`, exactly `0` outside the open `B*_j`.
    ///
    /// Evaluated through the cached membership forms (no matrix powers are
    /// applied to `xi`), so it is consistent with `scale_index` bit for bit.
    pub fn eta_scaled(&self, j: i64, xi: &[f64]) -> f64 {
        smoothstep(self.transition(j, xi))
    }

    /// The base cutoff `eta = eta_scaled(0, .)`.
    pub fn eta(&self, xi: &[f64]) -> f64 {
        self.eta_scaled(0, xi)
    }

    /// The annular piece at scale `j`: `psi^((A^T)^{-j} xi)`, supported in
    /// the open shell `B*_{j+1} \ closure(B*_{j-1})`.
    pub fn psi_hat_scaled(&self, j: i64, xi: &[f64]) -> f64 {
        self.eta_scaled(j + 1, xi) - self.eta_scaled(j, xi)
    }

    /// The base annular piece `psi^ = psi_hat_scaled(0, .)`.
    pub fn psi_hat(&self, xi: &[f64]) -> f64 {
        self.psi_hat_scaled(0, xi)
    }

    /// Literal partial sum `sum_{j=j_lo}^{j_hi} psi^((A^T)^{-j} xi)`.
    pub fn partition_sum(&self, j_lo: i64, j_hi: i64, xi: &[f64]) -> f64 {
        (j_lo..=j_hi).map(|j| self.psi_hat_scaled(j, xi)).sum()
    }

    /// The telescoped form of the same sum:
    /// `eta_scaled(j_hi + 1) - eta_scaled(j_lo)`.
    pub fn partition_sum_closed(&self, j_lo: i64, j_hi: i64, xi: &[f64]) -> f64 {
        self.eta_scaled(j_hi + 1, xi) - self.eta_scaled(j_lo, xi)
    }

    /// Dual shell index of `xi`: the `i` with `xi in B*_{i+1} \ B*_i`.
    pub fn scale_index_star(&self, xi: &[f64]) -> Result<ScaleIndex> {
        self.star.scale_index(xi)
    }

    /// The smooth scale coordinate `Theta(xi) = sum_j j psi^((A^T)^{-j} xi)`,
    /// evaluated through its two-term collapsed form. Satisfies
    /// `Theta(A^T xi) = Theta(xi) + 1` and interpolates the dual shell index:
    /// `Theta in [i, i+1]` on the shell `B*_{i+1} \ B*_i`, hitting the
    /// integers exactly on the shell boundaries.
    ///
    /// Returns `-infinity` at the origin (the coordinate diverges there; the
    /// symbols built on top of it handle the origin by convention).
    pub fn theta(&self, xi: &[f64]) -> Result<f64> {
        match self.star.scale_index(xi)? {
            ScaleIndex::NegInfinity => Ok(f64::NEG_INFINITY),
            ScaleIndex::Finite(i) => Ok((i + 1) as f64 - self.eta_scaled(i + 1, xi)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dilation::new_dilation;
    use crate::sampling::{seeded_rng, unit_directions};
    use nalgebra::DVector;
    use rand::Rng;

    fn isotropic() -> LPPartition {
        let d = new_dilation(&[vec![2.0, 0.0], vec![0.0, 2.0]], None).unwrap();
        LPPartition::new(&d).unwrap()
    }

    fn sheared() -> LPPartition {
        let d = new_dilation(&[vec![2.0, 1.0], vec![0.0, 3.0]], None).unwrap();
        LPPartition::new(&d).unwrap()
    }

    /// A point of the dual shell `B*_{j+1} \ B*_j` in direction `v` at
    /// radial fraction `t`.
    fn dual_shell_point(p: &LPPartition, j: i64, v: &[f64], t: f64) -> Vec<f64> {
        let base = p.star_family().annulus_point(v, t);
        let m = p.star_family().dilation().power(j).unwrap();
        let y = &m * DVector::from_column_slice(&base);
        y.as_slice().to_vec()
    }

    #[test]
    fn smoothstep_endpoints_and_symmetry() {
        assert_eq!(smoothstep(0.0), 1.0);
        assert_eq!(smoothstep(-3.0), 1.0);
        assert_eq!(smoothstep(1.0), 0.0);
        assert_eq!(smoothstep(5.0), 0.0);
        let mut prev = 1.0;
        for k in 1..100 {
            let t = k as f64 / 100.0;
            let s = smoothstep(t);
            // Monotone everywhere; strictly so in the middle of the
            // transition (near the joins the function is flat to all orders,
            // so consecutive f64 values legitimately tie at 1 or 0).
            assert!(s <= prev, "smoothstep must be non-increasing");
            if (0.2..=0.8).contains(&t) {
                assert!(s < prev, "smoothstep must strictly decrease mid-transition");
            }
            assert!((s + smoothstep(1.0 - t) - 1.0).abs() < 1e-15);
            prev = s;
        }
    }

    #[test]
    fn eta_hits_exact_branches() {
        for part in [isotropic(), sheared()] {
            for (di, v) in unit_directions(2, 16).iter().enumerate() {
                let t = 0.1 + 0.8 * (di as f64 / 16.0);
                // Inside closure(B*_{-1}): exactly 1.
                let inner = dual_shell_point(&part, -2, v, t);
                assert_eq!(part.eta(&inner), 1.0);
                // In the transition shell B*_0 \ B*_{-1}: strictly between.
                let mid = dual_shell_point(&part, -1, v, t);
                let e = part.eta(&mid);
                assert!(e > 0.0 && e < 1.0, "eta = {e} in the transition shell");
                // Outside B*_0: exactly 0.
                let outer = dual_shell_point(&part, 0, v, t);
                assert_eq!(part.eta(&outer), 0.0);
            }
            // The origin is inside everything.
            assert_eq!(part.eta(&[0.0, 0.0]), 1.0);
        }
    }

    #[test]
    fn eta_decreases_along_rays() {
        let part = sheared();
        for v in unit_directions(2, 8) {
            let mut prev = 1.0;
            for k in 0..200 {
                let tau = 0.05 * 1.03f64.powi(k);
                let x = [tau * v[0], tau * v[1]];
                let e = part.eta(&x);
                assert!(e <= prev + 1e-15, "eta must be radially non-increasing");
                prev = e;
            }
        }
    }

    #[test]
    fn psi_support_is_the_open_double_shell() {
        for part in [isotropic(), sheared()] {
            for v in unit_directions(2, 12) {
                // Zero on closure(B*_{-1}) and outside B*_1.
                assert_eq!(part.psi_hat(&dual_shell_point(&part, -2, &v, 0.5)), 0.0);
                assert_eq!(part.psi_hat(&dual_shell_point(&part, 1, &v, 0.5)), 0.0);
                // Positive somewhere inside: the midpoint of each ray's
                // transition band.
                let lo = part.psi_hat(&dual_shell_point(&part, -1, &v, 0.5));
                let hi = part.psi_hat(&dual_shell_point(&part, 0, &v, 0.5));
                assert!(lo >= 0.0 && hi >= 0.0);
                assert!(lo + hi > 0.1, "psi^ vanishes across the whole shell");
            }
            assert_eq!(part.psi_hat(&[0.0, 0.0]), 0.0);
        }
    }

    #[test]
    fn only_two_consecutive_pieces_are_active() {
        let part = sheared();
        let mut rng = seeded_rng(23);
        for _ in 0..200 {
            let i = rng.gen_range(-6..6);
            let v = crate::sampling::random_direction(2, &mut rng);
            let t: f64 = rng.gen_range(0.02..0.98);
            let xi = dual_shell_point(&part, i, &v, t);
            let found = match part.scale_index_star(&xi).unwrap() {
                ScaleIndex::Finite(k) => k,
                ScaleIndex::NegInfinity => panic!("nonzero point"),
            };
            assert_eq!(found, i, "shell point landed in the wrong shell");
            for j in -12..=12 {
                let val = part.psi_hat_scaled(j, &xi);
                if j == i || j == i + 1 {
                    continue; // the two possibly-active pieces
                }
                assert_eq!(val, 0.0, "piece {j} active on shell {i}");
            }
            // The two active pieces sum to exactly the closed form.
            let s = part.psi_hat_scaled(i, &xi) + part.psi_hat_scaled(i + 1, &xi);
            assert!((s - 1.0).abs() < 1e-15, "local partition sum {s}");
        }
    }

    #[test]
    fn partial_sums_telescope_to_one_on_the_band() {
        let part = sheared();
        let mut rng = seeded_rng(29);
        let j_max = 8;
        for _ in 0..300 {
            let i = rng.gen_range(-(j_max - 3)..(j_max - 3));
            let v = crate::sampling::random_direction(2, &mut rng);
            let t: f64 = rng.gen_range(0.02..0.98);
            let xi = dual_shell_point(&part, i, &v, t);
            let literal = part.partition_sum(-j_max, j_max, &xi);
            let closed = part.partition_sum_closed(-j_max, j_max, &xi);
            assert!((literal - closed).abs() < 1e-13);
            assert!((literal - 1.0).abs() < 1e-12, "sum = {literal} at shell {i}");
        }
        // Exactly zero at the origin: every piece vanishes there.
        assert_eq!(part.partition_sum(-j_max, j_max, &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn theta_shifts_by_one_under_the_adjoint() {
        for part in [isotropic(), sheared()] {
            let a_star = part.star_family().dilation().matrix().clone();
            let mut rng = seeded_rng(31);
            for _ in 0..200 {
                let i = rng.gen_range(-8..8);
                let v = crate::sampling::random_direction(2, &mut rng);
                let t: f64 = rng.gen_range(0.02..0.98);
                let xi = dual_shell_point(&part, i, &v, t);
                let mapped = &a_star * DVector::from_column_slice(&xi);
                let t0 = part.theta(&xi).unwrap();
                let t1 = part.theta(mapped.as_slice()).unwrap();
                assert!(
                    (t1 - t0 - 1.0).abs() < 1e-10,
                    "Theta covariance defect {} at shell {i}",
                    t1 - t0 - 1.0
                );
                // Theta interpolates the shell index.
                assert!(t0 >= i as f64 - 1e-12 && t0 <= (i + 1) as f64 + 1e-12);
            }
        }
    }

    #[test]
    fn theta_is_exact_on_shell_boundaries() {
        let part = isotropic();
        for v in unit_directions(2, 8) {
            let x = part.star_family().boundary_point(&v);
            let th = part.theta(&x).unwrap();
            assert_eq!(th, 0.0, "Theta on the unit shell boundary: {th}");
        }
        assert_eq!(part.theta(&[0.0, 0.0]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn isotropic_theta_matches_binary_logarithm() {
        // For A = 2I the dual balls are Euclidean and Theta is a smoothed
        // log2 |xi| up to an additive constant: the covariance pins the
        // fractional part, so Theta(2 xi) - Theta(xi) = 1 tested above
        // already implies the shape; here we check monotonicity along a ray.
        let part = isotropic();
        let mut prev = f64::NEG_INFINITY;
        for k in -40..40 {
            let tau = 2.0f64.powf(k as f64 / 8.0);
            let th = part.theta(&[tau, 0.0]).unwrap();
            assert!(th >= prev - 1e-12, "Theta must be ray-monotone");
            prev = th;
        }
    }
}
