//! Poisson demand weights and expectations over realized demand.
//!
//! A store facing expected traffic `x` meets exactly `n` customers with
//! probability `z(n, x) = e^{-x} x^n / n!`. Market-level payoffs are series
//! of the form `Σ_n z(n, x) f(n)`; [`expect_over_demand`] evaluates them with
//! an adaptive truncation index chosen from the accumulated tail mass.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{CoreError, Result};

/// Expected number of arrivals at a store. Nonnegative and finite.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PoissonRate(f64);

impl PoissonRate {
    pub fn new(x: f64) -> Result<Self> {
        if !x.is_finite() || x < 0.0 {
            return Err(CoreError::InvalidParameter(format!(
                "arrival rate must be finite and nonnegative, got {x}"
            )));
        }
        Ok(Self(x))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Truncation policy for demand series.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SeriesPolicy {
    /// Stop once the unaccumulated Poisson tail mass falls below this bound.
    pub tail_tolerance: f64,
    /// Hard cap on the number of series terms examined.
    pub max_terms: usize,
}

impl Default for SeriesPolicy {
    fn default() -> Self {
        Self { tail_tolerance: 1e-12, max_terms: 512 }
    }
}

impl SeriesPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.tail_tolerance > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "tail_tolerance must be positive, got {}",
                self.tail_tolerance
            )));
        }
        if self.max_terms < 2 {
            return Err(CoreError::InvalidParameter(format!(
                "max_terms must be at least 2, got {}",
                self.max_terms
            )));
        }
        Ok(())
    }
}

// Below this demand count the multiplicative recurrence from e^{-x} is both
// cheap and keeps z(1,x) = x*z(0,x) exact to the last bit; larger n falls
// back to log space so n! never overflows.
const DIRECT_TERMS: u64 = 64;

/// Probability that a store with expected traffic `x` meets exactly `n` customers.
pub fn z(n: u64, x: PoissonRate) -> f64 {
    let x = x.value();
    if n == 0 {
        return (-x).exp();
    }
    if x == 0.0 {
        return 0.0;
    }
    if n <= DIRECT_TERMS && x < 700.0 {
        let mut w = (-x).exp();
        for k in 1..=n {
            w *= x / k as f64;
        }
        return w;
    }
    let nf = n as f64;
    (-x + nf * x.ln() - ln_gamma(nf + 1.0)).exp()
}

/// Evaluates `Σ_{n≥start} z(n, x) f(n)` for `|f| ≤ 1`.
///
/// Terms are accumulated with compensated summation until the remaining tail
/// mass drops below `policy.tail_tolerance`, which bounds the truncation error
/// by the same amount. Hitting `policy.max_terms` first is a truncation error
/// carrying the residual mass.
pub fn expect_over_demand<F>(
    x: PoissonRate,
    policy: SeriesPolicy,
    start: u64,
    mut f: F,
) -> Result<f64>
where
    F: FnMut(u64) -> f64,
{
    policy.validate()?;
    let rate = x.value();
    let mut weight = (-rate).exp();
    let mut mass = KahanSum::default();
    let mut value = KahanSum::default();
    for n in 0..policy.max_terms as u64 {
        if n > 0 {
            weight *= rate / n as f64;
        }
        mass.add(weight);
        if n >= start {
            value.add(weight * f(n));
        }
        let residual = 1.0 - mass.total();
        if residual <= policy.tail_tolerance {
            return Ok(value.total());
        }
    }
    Err(CoreError::Truncation { residual: (1.0 - mass.total()).max(0.0) })
}

/// Compensated (Kahan) accumulator.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub(crate) fn add(&mut self, term: f64) {
        let y = term - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rate(x: f64) -> PoissonRate {
        PoissonRate::new(x).unwrap()
    }

    #[test]
    fn rejects_bad_rates() {
        assert!(PoissonRate::new(-0.5).is_err());
        assert!(PoissonRate::new(f64::NAN).is_err());
        assert!(PoissonRate::new(f64::INFINITY).is_err());
    }

    #[test]
    fn zero_rate_is_certain_emptiness() {
        assert_eq!(z(0, rate(0.0)), 1.0);
        assert_eq!(z(3, rate(0.0)), 0.0);
    }

    #[test]
    fn empty_store_mass_at_unit_rate() {
        assert!((z(0, rate(1.0)) - 0.36787944117144233).abs() < 1e-15);
    }

    #[test]
    fn single_customer_identity() {
        for x in [0.5, 1.0, 2.0] {
            assert_eq!(z(1, rate(x)), x * z(0, rate(x)));
        }
    }

    #[test]
    fn splitting_identity() {
        for (x, y) in [(0.3, 0.9), (1.5, 2.5), (0.0, 4.0)] {
            let lhs = z(0, rate(x + y));
            let rhs = z(0, rate(x)) * z(0, rate(y));
            assert!((lhs - rhs).abs() < 1e-15);
        }
    }

    #[test]
    fn log_space_matches_recurrence_at_crossover() {
        let x = rate(12.0);
        let nf = 64.0_f64;
        let log_form = (-12.0 + nf * 12.0_f64.ln() - ln_gamma(nf + 1.0)).exp();
        assert!((z(64, x) - log_form).abs() / log_form < 1e-12);
        let direct: f64 = {
            let mut w = (-12.0_f64).exp();
            for k in 1..=65u64 {
                w *= 12.0 / k as f64;
            }
            w
        };
        assert!((z(65, x) - direct).abs() / direct < 1e-12);
    }

    #[test]
    fn total_mass_sums_to_one() {
        let policy = SeriesPolicy::default();
        for x in [0.0, 0.2, 1.0, 5.0, 12.5, 20.0] {
            let total = expect_over_demand(rate(x), policy, 0, |_| 1.0).unwrap();
            assert!((total - 1.0).abs() < 1e-11, "x={x} total={total}");
        }
    }

    #[test]
    fn tail_from_one_is_arrival_probability() {
        let policy = SeriesPolicy::default();
        let got = expect_over_demand(rate(1.0), policy, 1, |_| 1.0).unwrap();
        let expected = 1.0 - (-1.0_f64).exp();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn geometric_payoff_series_matches_closed_form() {
        // f(n) = θ^n (1-b) summed from n = 1 telescopes to
        // z(0, (1-θ)x)·(1 - z(0, θx))·(1-b).
        let (theta, b, x) = (0.5_f64, 0.5, 2.0);
        let policy = SeriesPolicy::default();
        let series =
            expect_over_demand(rate(x), policy, 1, |n| theta.powi(n as i32) * (1.0 - b)).unwrap();
        let closed = z(0, rate(1.0)) * (1.0 - z(0, rate(1.0))) * (1.0 - b);
        assert!((series - closed).abs() < 1e-12);
        assert!((series - 0.11627207896741533).abs() < 1e-12);
    }

    #[test]
    fn zero_rate_series_is_first_term() {
        let policy = SeriesPolicy::default();
        let got = expect_over_demand(rate(0.0), policy, 0, |n| if n == 0 { 0.25 } else { 1.0 });
        assert_eq!(got.unwrap(), 0.25);
        let tail = expect_over_demand(rate(0.0), policy, 1, |_| 1.0).unwrap();
        assert_eq!(tail, 0.0);
    }

    #[test]
    fn starved_policy_reports_residual() {
        let policy = SeriesPolicy { tail_tolerance: 1e-12, max_terms: 5 };
        match expect_over_demand(rate(20.0), policy, 0, |_| 1.0) {
            Err(CoreError::Truncation { residual }) => assert!(residual > 0.9),
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_degenerate_policy() {
        let bad = SeriesPolicy { tail_tolerance: 0.0, max_terms: 512 };
        assert!(expect_over_demand(rate(1.0), bad, 0, |_| 1.0).is_err());
        let tiny = SeriesPolicy { tail_tolerance: 1e-9, max_terms: 1 };
        assert!(expect_over_demand(rate(1.0), tiny, 0, |_| 1.0).is_err());
    }
}
