//! Admissibility and range arithmetic for the exponent calculus.
//!
//! All of the analytic machinery downstream is parametrized by a handful of
//! real exponents tied to the dilation's spectral margins:
//!
//! * a triple `(p, q, s)` — integrability `p in (0, 1]`, size exponent
//!   `q in [1, inf]` with `p < q`, and a vanishing-moment order
//!   `s >= floor((1/p - 1) ln b / ln lambda_minus)`;
//! * a quadruple `(p, q, s, d)` adding a decay weight
//!   `d > s zeta_plus + 1 - 1/q`, with interpolation parameter
//!   `theta = (1/p - 1/q) / d` and derived decay rate `r = d (1 - theta)`;
//! * a multiplier budget built from a derivative order `N`: the quantity
//!
//!   ```text
//!   L = (N ln lambda_minus / ln b - 1) * ln b / ln lambda_plus
//!   ```
//!
//!   caps the usable decay order, and `floor(L)` drives the admissible range
//!   `0 <= 1/p - 1 < floor(L) (ln lambda_minus)^2 / (ln b ln lambda_plus)`.
//!
//! Endpoints matter here: lower bounds on `p` are always *excluded*, `p = 1`
//! is included for the multiplier range, and when `L` lands on an integer
//! (within `1e-12`) the margins are tightened once toward the spectrum to
//! resolve which side of the boundary the budget sits on.

use serde::{Deserialize, Serialize};

use crate::dilation::Dilation;
use crate::error::{Error, Result};

/// Tolerance at which `L` counts as an integer and triggers margin tightening.
pub const INTEGER_L_TOL: f64 = 1e-12;

/// An extended Lebesgue exponent `q in [1, inf]`.
///
/// Infinity is a first-class value: `recip()` returns exactly `0.0` for it,
/// and serialization uses the string `"inf"` so JSON round-trips losslessly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Qexp {
    Finite(f64),
    Infinity,
}

impl Qexp {
    /// Validate `q >= 1`.
    pub fn new(q: f64) -> Result<Qexp> {
        if q.is_infinite() && q > 0.0 {
            return Ok(Qexp::Infinity);
        }
        if !(q >= 1.0) || !q.is_finite() {
            return Err(Error::BadExponent {
                what: format!("q = {q} must lie in [1, inf]"),
            });
        }
        Ok(Qexp::Finite(q))
    }

    /// The value as `f64` (`f64::INFINITY` for the infinite endpoint).
    pub fn as_f64(&self) -> f64 {
        match self {
            Qexp::Finite(q) => *q,
            Qexp::Infinity => f64::INFINITY,
        }
    }

    /// `1/q`, exactly zero at infinity.
    pub fn recip(&self) -> f64 {
        match self {
            Qexp::Finite(q) => 1.0 / q,
            Qexp::Infinity => 0.0,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Qexp::Infinity)
    }
}

impl Serialize for Qexp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Qexp::Finite(q) => s.serialize_f64(*q),
            Qexp::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Qexp {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        let raw = Raw::deserialize(d)?;
        let q = match raw {
            Raw::Num(v) => v,
            Raw::Str(s) if s == "inf" => f64::INFINITY,
            Raw::Str(s) => {
                return Err(serde::de::Error::custom(format!("bad q value: {s:?}")));
            }
        };
        Qexp::new(q).map_err(serde::de::Error::custom)
    }
}

/// Smallest admissible vanishing-moment order for integrability `p`:
/// `floor((1/p - 1) ln b / ln lambda_minus)`, clamped at zero.
pub fn min_s(d: &Dilation, p: f64) -> Result<u32> {
    check_p(p)?;
    let arg = (1.0 / p - 1.0) * d.b().ln() / d.lambda_minus().ln();
    Ok(arg.floor().max(0.0) as u32)
}

/// Infimum of admissible decay weights for moment order `s` and exponent `q`:
/// `s zeta_plus + 1 - 1/q` (the weight itself must exceed this strictly).
pub fn min_d(dil: &Dilation, s: u32, q: Qexp) -> f64 {
    s as f64 * dil.zeta_plus() + 1.0 - q.recip()
}

/// Lower bound on the decay order `R` needed by a kernel with `(p, s)` data:
/// `max{ (1/p - 1) ln b / ln lambda_minus,  s ln lambda_plus / ln lambda_minus }`.
pub fn czr_lower(d: &Dilation, p: f64, s: u32) -> Result<f64> {
    check_p(p)?;
    let lm = d.lambda_minus().ln();
    let t1 = (1.0 / p - 1.0) * d.b().ln() / lm;
    let t2 = s as f64 * d.lambda_plus().ln() / lm;
    Ok(t1.max(t2))
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::BadExponent {
            what: format!("p = {p} must lie in (0, 1]"),
        });
    }
    Ok(())
}

/// An admissible `(p, q, s)` triple.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdmissibleTriple {
    pub p: f64,
    pub q: Qexp,
    pub s: u32,
}

impl AdmissibleTriple {
    /// Validate `p in (0,1]`, `q in [1,inf]`, `p < q`, and `s >= min_s(p)`.
    pub fn new(d: &Dilation, p: f64, q: Qexp, s: u32) -> Result<Self> {
        check_p(p)?;
        if p >= q.as_f64() {
            return Err(Error::BadExponent {
                what: format!("need p < q, got p = {p}, q = {}", q.as_f64()),
            });
        }
        let smin = min_s(d, p)?;
        if s < smin {
            return Err(Error::BadExponent {
                what: format!("s = {s} below the admissible minimum {smin} for p = {p}"),
            });
        }
        Ok(AdmissibleTriple { p, q, s })
    }
}

/// An admissible `(p, q, s, d)` quadruple with its interpolation data.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdmissibleQuadruple {
    pub triple: AdmissibleTriple,
    /// Decay weight, strictly above `min_d`.
    pub d_weight: f64,
    /// Interpolation parameter `theta = (1/p - 1/q) / d`, in `(0, 1)`.
    pub theta: f64,
}

impl AdmissibleQuadruple {
    /// Validate the weight (default: `min_d + 0.5`) and derive `theta`.
    pub fn new(dil: &Dilation, triple: AdmissibleTriple, d_weight: Option<f64>) -> Result<Self> {
        let bound = min_d(dil, triple.s, triple.q);
        let d_weight = d_weight.unwrap_or(bound + 0.5);
        if !(d_weight > bound) {
            return Err(Error::BadExponent {
                what: format!("d = {d_weight} must exceed s*zeta_plus + 1 - 1/q = {bound}"),
            });
        }
        let theta = (1.0 / triple.p - triple.q.recip()) / d_weight;
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::BadExponent {
                what: format!("theta = {theta} must lie in (0, 1)"),
            });
        }
        Ok(AdmissibleQuadruple {
            triple,
            d_weight,
            theta,
        })
    }

    /// Coefficient decay rate `r = d (1 - theta) = d - (1/p - 1/q)`.
    pub fn decay_rate(&self) -> f64 {
        self.d_weight - (1.0 / self.triple.p - self.triple.q.recip())
    }
}

/// Admissible half-open range `R in [0, L)` of decay orders for a symbol
/// with `N` controlled derivatives.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RRange {
    /// Exclusive upper endpoint `L`.
    pub upper: f64,
    /// Largest usable integer order, `floor(L)` (equals `L - 1` when `L` is
    /// itself an integer, since the endpoint is excluded).
    pub max_integer: i64,
}

/// The decay-order range `0 <= R < L` afforded by `N` symbol derivatives.
///
/// Errors with [`Error::EmptyRange`] when `L <= 0`.
pub fn dw_r_range(d: &Dilation, n_order: u32) -> Result<RRange> {
    let l = l_value(d, n_order);
    if l <= 0.0 {
        return Err(Error::EmptyRange {
            what: format!("decay order range is empty: L = {l} for N = {n_order}"),
        });
    }
    let fl = l.floor();
    let max_integer = if fl == l { fl as i64 - 1 } else { fl as i64 };
    Ok(RRange {
        upper: l,
        max_integer,
    })
}

/// `L = (N ln lambda_minus / ln b - 1) ln b / ln lambda_plus`.
pub fn l_value(d: &Dilation, n_order: u32) -> f64 {
    let ln_b = d.b().ln();
    (n_order as f64 * d.lambda_minus().ln() / ln_b - 1.0) * ln_b / d.lambda_plus().ln()
}

/// A validated integrability range `p in (p_low, 1]` for a symbol with `N`
/// controlled derivatives.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MultiplierBudget {
    /// Derivative order `N` the budget was computed from.
    pub n_order: u32,
    /// The decay cap `L` (after tightening, when it applied).
    pub l_value: f64,
    /// `floor(L)`, the usable integer decay order.
    pub floor_l: i64,
    /// Exclusive lower endpoint of the admissible `p` range.
    pub p_low: f64,
    /// Whether `p = 1` is admissible (always true for a nonempty budget).
    pub one_included: bool,
    /// Margins were tightened once because `L` was an integer within 1e-12.
    pub tightened: bool,
}

/// The admissible integrability range for `N` symbol derivatives:
/// `0 <= 1/p - 1 < floor(L) (ln lambda_minus)^2 / (ln b ln lambda_plus)`.
///
/// When `L` lands on an integer within `1e-12` the margins are tightened
/// once (midpoints toward the spectrum) and the budget is recomputed; the
/// tightening must not change `floor(L)`, which is checked. Errors with
/// [`Error::EmptyRange`] when `floor(L) < 1`.
pub fn multiplier_p_range(d: &Dilation, n_order: u32) -> Result<MultiplierBudget> {
    let l = l_value(d, n_order);
    let mut tightened = false;
    let (dil, l) = if (l - l.round()).abs() < INTEGER_L_TOL && l.round() >= 1.0 {
        let tight = d.tighten();
        let lt = l_value(&tight, n_order);
        if lt.floor() != l.round() {
            return Err(Error::BadExponent {
                what: format!(
                    "tightening jumped floor(L) from {} to {}: margins too slack to resolve \
                     the integer boundary",
                    l.round(),
                    lt.floor()
                ),
            });
        }
        tightened = true;
        (tight, lt)
    } else {
        (d.clone(), l)
    };

    let floor_l = l.floor() as i64;
    if floor_l < 1 {
        return Err(Error::EmptyRange {
            what: format!("multiplier p-range is empty: floor(L) = {floor_l} for N = {n_order}"),
        });
    }
    let p_low = p_low_from(&dil, floor_l);
    Ok(MultiplierBudget {
        n_order,
        l_value: l,
        floor_l,
        p_low,
        one_included: true,
        tightened,
    })
}

fn p_low_from(d: &Dilation, order: i64) -> f64 {
    let lm = d.lambda_minus().ln();
    let width = order as f64 * lm * lm / (d.b().ln() * d.lambda_plus().ln());
    1.0 / (1.0 + width)
}

/// Integrability range granted by a kernel of decay order `R`:
/// `0 < 1/p - 1 < R (ln lambda_minus)^2 / (ln b ln lambda_plus)`.
///
/// The displayed interval is open at both ends; `p = 1` is nevertheless
/// reported admissible (`one_included`) because the boundary case is covered
/// by the classical size-only argument rather than the decay estimate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SioPRange {
    pub r_order: i64,
    pub p_low: f64,
    pub one_included: bool,
}

/// See [`SioPRange`]. Errors with [`Error::EmptyRange`] for `R < 1`.
pub fn sio_p_range(d: &Dilation, r_order: i64) -> Result<SioPRange> {
    if r_order < 1 {
        return Err(Error::EmptyRange {
            what: format!("singular-integral p-range is empty for R = {r_order}"),
        });
    }
    Ok(SioPRange {
        r_order,
        p_low: p_low_from(d, r_order),
        one_included: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dilation::new_dilation;
    use approx::assert_relative_eq;

    fn scalar2_margined() -> Dilation {
        new_dilation(&[vec![2.0, 0.0], vec![0.0, 2.0]], Some((1.9, 2.1))).unwrap()
    }

    // Expected values below were frozen from a 40-digit evaluation of the
    // closed-form expressions (independent of the f64 code paths here).

    #[test]
    fn min_s_matches_frozen_value() {
        let d = scalar2_margined();
        // (1/p - 1) ln b / ln lambda_minus = 2.1598285699987917 at p = 1/2.
        assert_eq!(min_s(&d, 0.5).unwrap(), 2);
        assert_eq!(min_s(&d, 1.0).unwrap(), 0);
        assert!(min_s(&d, 0.0).is_err());
        assert!(min_s(&d, 1.5).is_err());
    }

    #[test]
    fn min_d_matches_frozen_value() {
        let d = scalar2_margined();
        let bound = min_d(&d, 2, Qexp::new(2.0).unwrap());
        assert_relative_eq!(bound, 1.5703893278913979, max_relative = 1e-14);
        // q = inf drops the 1/q term exactly.
        let bound_inf = min_d(&d, 2, Qexp::Infinity);
        assert_relative_eq!(bound_inf, bound + 0.5, max_relative = 1e-14);
    }

    #[test]
    fn czr_lower_matches_frozen_value() {
        let d = scalar2_margined();
        let r = czr_lower(&d, 2.0 / 3.0, 1).unwrap();
        // max(1.0799142849993958, 1.1559287257008229): the moment term wins.
        assert_relative_eq!(r, 1.1559287257008229, max_relative = 1e-14);
    }

    #[test]
    fn multiplier_budget_matches_frozen_values() {
        let d = scalar2_margined();
        let budget = multiplier_p_range(&d, 4).unwrap();
        assert_relative_eq!(budget.l_value, 1.5919419503010784, max_relative = 1e-13);
        assert_eq!(budget.floor_l, 1);
        assert_relative_eq!(budget.p_low, 0.7140085384415796, max_relative = 1e-13);
        assert!(!budget.tightened);
        assert!(budget.one_included);
    }

    #[test]
    fn integer_l_triggers_one_tightening() {
        // Manufacture margins with L = 1 exactly: lambda_plus = exp((4 ln 1.9 / ln 4 - 1) ln 4).
        let ln4 = 4.0_f64.ln();
        let lp = ((4.0 * 1.9_f64.ln() / ln4 - 1.0) * ln4).exp();
        assert!(lp > 2.0);
        let d = new_dilation(&[vec![2.0, 0.0], vec![0.0, 2.0]], Some((1.9, lp))).unwrap();
        let l = l_value(&d, 4);
        assert!((l - 1.0).abs() < INTEGER_L_TOL, "constructed L = {l}");
        let budget = multiplier_p_range(&d, 4).unwrap();
        assert!(budget.tightened);
        assert_eq!(budget.floor_l, 1);
        assert!(budget.l_value > 1.0, "tightening must lift L off the boundary");
        // p_low uses the tightened margins, so it sits below the naive value.
        assert!(budget.p_low < 1.0 / (1.0 + 1.9_f64.ln().powi(2) / (ln4 * lp.ln())));
    }

    #[test]
    fn empty_ranges_error() {
        let d = scalar2_margined();
        assert!(matches!(
            multiplier_p_range(&d, 1),
            Err(Error::EmptyRange { .. })
        ));
        assert!(matches!(dw_r_range(&d, 1), Err(Error::EmptyRange { .. })));
        assert!(matches!(sio_p_range(&d, 0), Err(Error::EmptyRange { .. })));
    }

    #[test]
    fn dw_range_excludes_integer_endpoint() {
        let d = scalar2_margined();
        let range = dw_r_range(&d, 4).unwrap();
        assert_relative_eq!(range.upper, 1.5919419503010784, max_relative = 1e-13);
        assert_eq!(range.max_integer, 1);
        // Exact-integer L: the endpoint is excluded, so max_integer = L - 1.
        let ln4 = 4.0_f64.ln();
        let lp = ((4.0 * 1.9_f64.ln() / ln4 - 1.0) * ln4).exp();
        let d2 = new_dilation(&[vec![2.0, 0.0], vec![0.0, 2.0]], Some((1.9, lp))).unwrap();
        let r2 = dw_r_range(&d2, 4).unwrap();
        if r2.upper == 1.0 {
            assert_eq!(r2.max_integer, 0);
        }
    }

    #[test]
    fn sio_range_matches_multiplier_range_at_floor_l() {
        let d = scalar2_margined();
        let budget = multiplier_p_range(&d, 4).unwrap();
        let sio = sio_p_range(&d, budget.floor_l).unwrap();
        assert!((budget.p_low - sio.p_low).abs() < 1e-12);
    }

    #[test]
    fn classical_reduction_converges_to_two_over_n_minus_one() {
        // A = 2I_2, N = 4: ten tightening steps drive p_low monotonically
        // down to n/(N-1) = 2/3.
        let mut d = scalar2_margined();
        let mut prev = f64::INFINITY;
        let mut last = f64::NAN;
        for _ in 0..=10 {
            let budget = multiplier_p_range(&d, 4).unwrap();
            assert_eq!(budget.floor_l, 1);
            assert!(budget.p_low < prev, "p_low must decrease monotonically");
            prev = budget.p_low;
            last = budget.p_low;
            d = d.tighten();
        }
        assert!((last - 2.0 / 3.0).abs() < 1e-3, "p_low after 10 steps: {last}");
    }

    #[test]
    fn triple_and_quadruple_validation() {
        let d = scalar2_margined();
        let q2 = Qexp::new(2.0).unwrap();
        // s below the minimum is rejected (min_s(1/2) = 2).
        assert!(AdmissibleTriple::new(&d, 0.5, q2, 1).is_err());
        let triple = AdmissibleTriple::new(&d, 0.5, q2, 2).unwrap();
        // p < q enforced.
        assert!(AdmissibleTriple::new(&d, 1.0, Qexp::new(1.0).unwrap(), 0).is_err());

        let quad = AdmissibleQuadruple::new(&d, triple, None).unwrap();
        assert_relative_eq!(quad.d_weight, 1.5703893278913979 + 0.5, max_relative = 1e-13);
        assert!(quad.theta > 0.0 && quad.theta < 1.0);
        assert_relative_eq!(
            quad.decay_rate(),
            quad.d_weight * (1.0 - quad.theta),
            max_relative = 1e-12
        );
        // Weight at or below the infimum is rejected.
        assert!(AdmissibleQuadruple::new(&d, triple, Some(1.57)).is_err());
    }

    #[test]
    fn qexp_serde_round_trip() {
        let fin = Qexp::new(2.0).unwrap();
        let inf = Qexp::Infinity;
        assert_eq!(serde_json::to_string(&fin).unwrap(), "2.0");
        assert_eq!(serde_json::to_string(&inf).unwrap(), "\"inf\"");
        assert_eq!(serde_json::from_str::<Qexp>("2.0").unwrap(), fin);
        assert_eq!(serde_json::from_str::<Qexp>("\"inf\"").unwrap(), inf);
        assert!(serde_json::from_str::<Qexp>("0.5").is_err());
        assert_eq!(inf.recip(), 0.0);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn min_s_decreases_as_p_grows(p1 in 0.05_f64..1.0, p2 in 0.05_f64..1.0) {
                let d = scalar2_margined();
                let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
                prop_assert!(min_s(&d, lo).unwrap() >= min_s(&d, hi).unwrap());
            }

            #[test]
            fn budget_p_low_stays_in_unit_interval(n in 2u32..40) {
                let d = scalar2_margined();
                if let Ok(budget) = multiplier_p_range(&d, n) {
                    prop_assert!(budget.p_low > 0.0 && budget.p_low < 1.0);
                    prop_assert!(budget.floor_l >= 1);
                }
            }

            #[test]
            fn budget_widens_with_more_derivatives(n in 2u32..20) {
                let d = scalar2_margined();
                let (Ok(a), Ok(b)) = (multiplier_p_range(&d, n), multiplier_p_range(&d, n + 1))
                else { return Ok(()); };
                prop_assert!(b.p_low <= a.p_low + 1e-15);
            }
        }
    }
}
