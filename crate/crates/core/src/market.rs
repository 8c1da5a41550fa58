//! Directed-search market layer.
//!
//! Sellers post an auction format and a reserve; buyers of two types choose
//! visit rates, producing independent Poisson demand (x_h, x_l) at each store.
//! A buyer who finds the store empty trades at the reserve; with n ≥ 2 buyers
//! present the per-store subgame from [`crate::auction`] plays out with type
//! mix θ = x_l/(x_h + x_l). Expected utilities and profits compose Poisson
//! weights with the per-n payoffs; closed forms exist for the standard format
//! and for the all-pay format when the budget exceeds θ.

use serde::Serialize;

use crate::auction::{allpay_payoffs, AuctionScene};
use crate::error::{CoreError, Result};
use crate::poisson::{expect_over_demand, z, PoissonRate, SeriesPolicy};

/// Largest total visit rate the demand solver searches over.
const X_MAX: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AuctionFormat {
    /// First or second price; payoff equivalent at this level.
    Standard,
    AllPay,
}

/// Market primitives: buyer-seller ratio, low-type share, low-type budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarketParams {
    lambda: PoissonRate,
    sigma: f64,
    budget: f64,
}

impl MarketParams {
    pub fn new(lambda: f64, sigma: f64, budget: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(CoreError::InvalidParameter(format!(
                "buyer-seller ratio must be positive and finite, got {lambda}"
            )));
        }
        if !(0.0..=1.0).contains(&sigma) {
            return Err(CoreError::InvalidParameter(format!(
                "low-type share must lie in [0,1], got {sigma}"
            )));
        }
        if !(budget > 0.0 && budget < 1.0) {
            return Err(CoreError::InvalidParameter(format!(
                "budget must lie in (0,1), got {budget}"
            )));
        }
        Ok(Self { lambda: PoissonRate::new(lambda)?, sigma, budget })
    }

    pub fn lambda(&self) -> PoissonRate {
        self.lambda
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }
}

/// What a seller announces: the auction format and a reserve price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MechanismPosting {
    pub format: AuctionFormat,
    pub reserve: f64,
}

impl MechanismPosting {
    pub fn new(format: AuctionFormat, reserve: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&reserve) {
            return Err(CoreError::InvalidParameter(format!(
                "reserve must lie in [0,1], got {reserve}"
            )));
        }
        Ok(Self { format, reserve })
    }
}

/// Type-specific Poisson visit rates at one store.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DemandResponse {
    x_h: PoissonRate,
    x_l: PoissonRate,
}

impl DemandResponse {
    pub fn new(x_h: f64, x_l: f64) -> Result<Self> {
        Ok(Self { x_h: PoissonRate::new(x_h)?, x_l: PoissonRate::new(x_l)? })
    }

    /// Splits a total rate into type rates at low share `theta`.
    pub fn from_total(x: f64, theta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(CoreError::InvalidParameter(format!(
                "low share must lie in [0,1], got {theta}"
            )));
        }
        Self::new(x * (1.0 - theta), x * theta)
    }

    pub fn x_h(&self) -> PoissonRate {
        self.x_h
    }

    pub fn x_l(&self) -> PoissonRate {
        self.x_l
    }

    pub fn total(&self) -> f64 {
        self.x_h.value() + self.x_l.value()
    }

    /// Probability that any one visitor is a low type; zero at zero demand.
    pub fn theta(&self) -> f64 {
        let total = self.total();
        if total == 0.0 {
            0.0
        } else {
            self.x_l.value() / total
        }
    }
}

/// Symmetric market outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarketEquilibrium {
    pub omega_h: f64,
    pub omega_l: f64,
    pub reserve_star: f64,
    pub profit: f64,
    pub format: AuctionFormat,
}

/// Outcome of the all-pay deviation construction against a posted standard
/// equilibrium. `subsidy_required` marks solutions whose reserve would have to
/// be negative, which the posting space does not allow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviationReport {
    pub theta_hat: f64,
    pub r_hat: f64,
    pub profit_gain: f64,
    pub subsidy_required: bool,
}

fn scene_for(n_total: u64, theta: f64, b: f64) -> Result<AuctionScene> {
    AuctionScene::new(
        u32::try_from(n_total).map_err(|_| {
            CoreError::InvalidParameter(format!("store size {n_total} exceeds supported range"))
        })?,
        theta,
        b,
    )
}

/// Expected utilities `(U_h, U_l)` of visiting a store with posting `post`,
/// demand `demand`, and low-type budget `b`. A visitor alone at the store
/// trades at the reserve; otherwise the per-n subgame payoffs apply.
pub fn utilities(post: &MechanismPosting, demand: &DemandResponse, b: f64) -> Result<(f64, f64)> {
    if !(b > 0.0 && b < 1.0) {
        return Err(CoreError::InvalidParameter(format!("budget must lie in (0,1), got {b}")));
    }
    let x = PoissonRate::new(demand.total())?;
    let x_h = demand.x_h();
    let x_l = demand.x_l();
    let theta = demand.theta();
    let r = post.reserve;
    let alone = z(0, x) * (1.0 - r);
    match post.format {
        AuctionFormat::Standard => {
            // Σ_{n≥1} z_n(x) θ^n collapses through z_0(x_h)(1 - z_0(x_l)),
            // and the low-type tie term through (1 - z_0 - z_1)(x_l)/x_l.
            let u_h = alone + z(0, x_h) * (1.0 - z(0, x_l)) * (1.0 - b);
            let low_meet = if x_l.value() == 0.0 {
                0.0
            } else {
                (1.0 - z(0, x_l) - z(1, x_l)) / x_l.value()
            };
            let u_l = alone + z(0, x_h) * low_meet * (1.0 - b);
            Ok((u_h, u_l))
        }
        AuctionFormat::AllPay => {
            if b > theta {
                // Every meeting of two or more bidders dissipates the whole
                // surplus, so only the empty-store term survives.
                return Ok((alone, alone));
            }
            let policy = SeriesPolicy::default();
            let u_h = alone
                + expect_over_demand(x, policy, 1, |k| {
                    scene_for(k + 1, theta, b).map(|s| allpay_payoffs(&s).u_h).unwrap_or(0.0)
                })?;
            let u_l = alone
                + expect_over_demand(x, policy, 1, |k| {
                    scene_for(k + 1, theta, b).map(|s| allpay_payoffs(&s).u_l).unwrap_or(0.0)
                })?;
            Ok((u_h, u_l))
        }
    }
}

/// Expected seller profit from the posting, computed from the direct series
/// or its closed form (never through the visit-rate identity, which is the
/// independent cross-check).
pub fn profit_direct(post: &MechanismPosting, demand: &DemandResponse, b: f64) -> Result<f64> {
    if !(b > 0.0 && b < 1.0) {
        return Err(CoreError::InvalidParameter(format!("budget must lie in (0,1), got {b}")));
    }
    let x = PoissonRate::new(demand.total())?;
    let x_h = demand.x_h();
    let theta = demand.theta();
    let r = post.reserve;
    let lone_sale = z(1, x) * r;
    match post.format {
        AuctionFormat::Standard => {
            let capped = z(0, x_h) + z(1, x_h) - z(0, x) - z(1, x);
            Ok(lone_sale + 1.0 - z(0, x_h) - z(1, x_h) + b * capped)
        }
        AuctionFormat::AllPay => {
            if b > theta {
                return Ok(lone_sale + 1.0 - z(0, x) - z(1, x));
            }
            let policy = SeriesPolicy::default();
            let meetings = expect_over_demand(x, policy, 2, |n| {
                scene_for(n, theta, b).map(|s| allpay_payoffs(&s).pi).unwrap_or(0.0)
            })?;
            Ok(lone_sale + meetings)
        }
    }
}

/// Residual of the visit-rate profit identity
/// `Π = 1 - z_0(x_h+x_l) - x_h U_h - x_l U_l`; zero for every posting.
pub fn lemma1_residual(post: &MechanismPosting, demand: &DemandResponse, b: f64) -> Result<f64> {
    let (u_h, u_l) = utilities(post, demand, b)?;
    let profit = profit_direct(post, demand, b)?;
    let x = PoissonRate::new(demand.total())?;
    let implied = 1.0 - z(0, x) - demand.x_h().value() * u_h - demand.x_l().value() * u_l;
    Ok(profit - implied)
}

enum XSolve {
    /// Even an empty store cannot deliver the target utility.
    NoEntry,
    /// The target utility stays undercut even at the search cap; demand of
    /// this type is effectively unbounded at this mix.
    Saturated,
    Root(f64),
}

/// Total-rate solve of `U_type(x, θ) = target` at a fixed mix, using that
/// utilities strictly fall in the total visit rate.
fn solve_x_at_mix(
    post: &MechanismPosting,
    b: f64,
    theta: f64,
    target: f64,
    low_side: bool,
) -> Result<XSolve> {
    let u_at = |x: f64| -> Result<f64> {
        let demand = DemandResponse::from_total(x, theta)?;
        let (u_h, u_l) = utilities(post, &demand, b)?;
        Ok(if low_side { u_l } else { u_h })
    };
    if 1.0 - post.reserve <= target {
        return Ok(XSolve::NoEntry);
    }
    let mut hi = 1.0;
    while u_at(hi)? > target {
        hi *= 2.0;
        if hi > X_MAX {
            return Ok(XSolve::Saturated);
        }
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if u_at(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Ok(XSolve::Root(0.5 * (lo + hi)))
}

/// Demand attracted by a posting when buyers hold market utilities
/// `(omega_h, omega_l)`: each attracted type is exactly indifferent, a type
/// strictly worse off stays away.
///
/// Solved in (total rate, mix) coordinates: utilities fall in the total rate
/// at a fixed mix and rise in the low share at a fixed rate. The reserve must
/// not exceed the budget; above it the congestion monotonicity the solver
/// relies on can fail.
pub fn solve_demand(
    post: &MechanismPosting,
    omega_h: f64,
    omega_l: f64,
    b: f64,
) -> Result<DemandResponse> {
    for omega in [omega_h, omega_l] {
        if !(omega > 0.0 && omega < 1.0) {
            return Err(CoreError::InvalidParameter(format!(
                "market utility must lie in (0,1), got {omega}"
            )));
        }
    }
    if post.reserve > b {
        return Err(CoreError::InvalidParameter(format!(
            "reserve {} above budget {b} is outside the solver's monotone domain",
            post.reserve
        )));
    }
    let top = 1.0 - post.reserve;
    if top <= omega_h && top <= omega_l {
        return DemandResponse::new(0.0, 0.0);
    }

    // Expected low-type slack at the rate where high types are indifferent.
    let low_slack = |theta: f64| -> Result<f64> {
        match solve_x_at_mix(post, b, theta, omega_h, false)? {
            XSolve::Root(x) => {
                let demand = DemandResponse::from_total(x, theta)?;
                Ok(utilities(post, &demand, b)?.1 - omega_l)
            }
            XSolve::Saturated => Ok(-omega_l),
            XSolve::NoEntry => Err(CoreError::NonConvergence(
                "high-type rate vanished during the mix search".into(),
            )),
        }
    };

    if top > omega_h {
        let x0 = match solve_x_at_mix(post, b, 0.0, omega_h, false)? {
            XSolve::Root(x) => x,
            _ => {
                return Err(CoreError::NonConvergence(format!(
                    "high-only demand not bracketed below x = {X_MAX}"
                )))
            }
        };
        if low_slack(0.0)? <= 0.0 {
            return DemandResponse::from_total(x0, 0.0);
        }
        if low_slack(1.0)? >= 0.0 {
            // Low types overflow any mix; only-low corner.
            return match solve_x_at_mix(post, b, 1.0, omega_l, true)? {
                XSolve::Root(x) => DemandResponse::from_total(x, 1.0),
                _ => Err(CoreError::NonConvergence(format!(
                    "low-only demand not bracketed below x = {X_MAX}"
                ))),
            };
        }
        let mut lo = 0.0;
        let mut hi = 1.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if low_slack(mid)? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        let theta = 0.5 * (lo + hi);
        return match solve_x_at_mix(post, b, theta, omega_h, false)? {
            XSolve::Root(x) => DemandResponse::from_total(x, theta),
            _ => Err(CoreError::NonConvergence("mix search left the bracket".into())),
        };
    }

    // High types never enter; lows might.
    match solve_x_at_mix(post, b, 1.0, omega_l, true)? {
        XSolve::Root(x) => DemandResponse::from_total(x, 1.0),
        XSolve::NoEntry => DemandResponse::new(0.0, 0.0),
        XSolve::Saturated => Err(CoreError::NonConvergence(format!(
            "low-only demand not bracketed below x = {X_MAX}"
        ))),
    }
}

/// The symmetric equilibrium when every seller posts the all-pay format:
/// zero reserve, market utility `z_0(λ)` for both types, and profit
/// `1 - z_0(λ) - z_1(λ)`. Requires the budget to exceed the low-type share.
pub fn allpay_symmetric_equilibrium(params: &MarketParams) -> Result<MarketEquilibrium> {
    if params.budget() <= params.sigma() {
        return Err(CoreError::HypothesisViolated(format!(
            "characterization needs budget {} above low-type share {}",
            params.budget(),
            params.sigma()
        )));
    }
    let lambda = params.lambda();
    let omega = z(0, lambda);
    Ok(MarketEquilibrium {
        omega_h: omega,
        omega_l: omega,
        reserve_star: 0.0,
        profit: 1.0 - z(0, lambda) - z(1, lambda),
        format: AuctionFormat::AllPay,
    })
}

/// Best profit a seller could reach by posting a standard auction against the
/// symmetric all-pay market, minus the equilibrium profit. The deviating
/// store attracts only high types, whose rate solves `z_0(x)(1 - r) = Ω`;
/// the reserve is scanned on a grid and refined. Nonpositive by construction,
/// zero at r = 0.
pub fn standard_deviation_check(params: &MarketParams) -> Result<f64> {
    let eq = allpay_symmetric_equilibrium(params)?;
    let omega = eq.omega_h;
    let profit_at = |r: f64| -> f64 {
        if 1.0 - r <= omega {
            return 0.0;
        }
        let x = ((1.0 - r) / omega).ln();
        let rate = PoissonRate::new(x).expect("positive rate");
        z(1, rate) * r + 1.0 - z(0, rate) - z(1, rate)
    };
    let grid = 2001;
    let mut best_r = 0.0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..grid {
        let r = i as f64 / (grid - 1) as f64;
        let p = profit_at(r);
        if p > best {
            best = p;
            best_r = r;
        }
    }
    // Golden-section refinement around the best cell.
    let step = 1.0 / (grid - 1) as f64;
    let mut lo = (best_r - step).max(0.0);
    let mut hi = (best_r + step).min(1.0);
    let phi = 0.5 * (3.0 - 5.0_f64.sqrt());
    for _ in 0..60 {
        let a = lo + phi * (hi - lo);
        let c = hi - phi * (hi - lo);
        if profit_at(a) > profit_at(c) {
            hi = c;
        } else {
            lo = a;
        }
    }
    let refined = profit_at(0.5 * (lo + hi)).max(best);
    Ok(refined - eq.profit)
}

/// All-pay series tail `Σ_{n≥1} z_n(λ) u_i(n+1)` with the empty-store term
/// excluded; the reserve enters utilities only through that excluded term.
fn allpay_meeting_value(lambda: PoissonRate, theta: f64, b: f64, low_side: bool) -> Result<f64> {
    let policy = SeriesPolicy::default();
    expect_over_demand(lambda, policy, 1, |k| {
        scene_for(k + 1, theta, b)
            .map(|s| {
                let p = allpay_payoffs(&s);
                if low_side {
                    p.u_l
                } else {
                    p.u_h
                }
            })
            .unwrap_or(0.0)
    })
}

/// Constructs the profitable all-pay deviation against a hypothetical
/// symmetric standard equilibrium posting reserve `r_s` with demand λ per
/// store. The deviator keeps total demand at λ but tilts its mix to a low
/// share θ̂ > σ, using that the reserve shifts both utilities only through
/// the empty-store term: θ̂ solves the reserve-free difference equation, then
/// the level equation yields r̂. The profit gain is λ(θ̂ - σ)(U_h - U_l).
pub fn allpay_deviation_from_standard(params: &MarketParams, r_s: f64) -> Result<DeviationReport> {
    let sigma = params.sigma();
    if sigma == 0.0 || sigma == 1.0 {
        return Err(CoreError::Degenerate(format!(
            "single-type market (sigma = {sigma}) leaves no cross-type margin"
        )));
    }
    let lambda = params.lambda();
    let b = params.budget();
    let standard = MechanismPosting::new(AuctionFormat::Standard, r_s)?;
    let incumbent = DemandResponse::from_total(lambda.value(), sigma)?;
    let (u_h_s, u_l_s) = utilities(&standard, &incumbent, b)?;
    let d_s = u_h_s - u_l_s;

    let diff = |theta: f64| -> Result<f64> {
        Ok(allpay_meeting_value(lambda, theta, b, false)?
            - allpay_meeting_value(lambda, theta, b, true)?)
    };
    // The meeting-value difference is zero at θ = 0 and exceeds the standard
    // premium at θ = 1 term by term, and it is nondecreasing, so bisection
    // brackets a root on [0, 1].
    let mut lo = 0.0;
    let mut hi = 1.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if diff(mid)? < d_s {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    let theta_hat = 0.5 * (lo + hi);
    let r_hat = 1.0 - (u_l_s - allpay_meeting_value(lambda, theta_hat, b, true)?) / z(0, lambda);
    let profit_gain = lambda.value() * (theta_hat - sigma) * d_s;
    Ok(DeviationReport { theta_hat, r_hat, profit_gain, subsidy_required: r_hat < 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::standard_payoffs;
    use proptest::prelude::*;

    fn post(format: AuctionFormat, reserve: f64) -> MechanismPosting {
        MechanismPosting::new(format, reserve).unwrap()
    }

    fn demand(x_h: f64, x_l: f64) -> DemandResponse {
        DemandResponse::new(x_h, x_l).unwrap()
    }

    /// Series oracle: composes Poisson weights with per-n subgame payoffs
    /// directly, independent of the closed forms in `utilities`.
    fn standard_utility_series(demand: &DemandResponse, r: f64, b: f64) -> (f64, f64) {
        let x = PoissonRate::new(demand.total()).unwrap();
        let theta = demand.theta();
        let policy = SeriesPolicy::default();
        let u = |low_side: bool| {
            z(0, x) * (1.0 - r)
                + expect_over_demand(x, policy, 1, |k| {
                    let s = AuctionScene::new(k as u32 + 1, theta, b).unwrap();
                    let p = standard_payoffs(&s);
                    if low_side {
                        p.u_l
                    } else {
                        p.u_h
                    }
                })
                .unwrap()
        };
        (u(false), u(true))
    }

    #[test]
    fn allpay_utilities_collapse_when_budget_clears_mix() {
        let d = demand(0.6, 0.4);
        let (u_h, u_l) = utilities(&post(AuctionFormat::AllPay, 0.0), &d, 0.5).unwrap();
        let expected = (-1.0_f64).exp();
        assert!((u_h - expected).abs() < 1e-12);
        assert!((u_l - expected).abs() < 1e-12);
    }

    #[test]
    fn standard_high_only_utility() {
        let d = demand(1.3, 0.0);
        let (u_h, u_l) = utilities(&post(AuctionFormat::Standard, 0.25), &d, 0.5).unwrap();
        let expected = (-1.3_f64).exp() * 0.75;
        assert!((u_h - expected).abs() < 1e-12);
        assert!((u_l - expected).abs() < 1e-12);
    }

    #[test]
    fn standard_closed_forms_match_series() {
        for (x_h, x_l, r, b) in
            [(0.5, 0.5, 0.0, 0.5), (0.7, 0.3, 0.2, 0.5), (1.5, 0.4, 0.1, 0.3), (0.2, 1.8, 0.05, 0.9)]
        {
            let d = demand(x_h, x_l);
            let (u_h, u_l) = utilities(&post(AuctionFormat::Standard, r), &d, b).unwrap();
            let (s_h, s_l) = standard_utility_series(&d, r, b);
            assert!((u_h - s_h).abs() < 1e-10, "u_h {u_h} vs series {s_h}");
            assert!((u_l - s_l).abs() < 1e-10, "u_l {u_l} vs series {s_l}");
        }
    }

    #[test]
    fn allpay_series_engages_below_theta() {
        // b ≤ θ: meetings retain value, utilities sit strictly above the
        // empty-store term alone for high types.
        let d = demand(0.5, 1.5);
        let (u_h, u_l) = utilities(&post(AuctionFormat::AllPay, 0.0), &d, 0.2).unwrap();
        let alone = (-2.0_f64).exp();
        assert!(u_h > alone + 1e-3);
        assert!(u_h > u_l);
    }

    #[test]
    fn profit_examples() {
        let d = demand(0.6, 0.4);
        let pi = profit_direct(&post(AuctionFormat::AllPay, 0.0), &d, 0.5).unwrap();
        assert!((pi - (1.0 - 2.0 * (-1.0_f64).exp())).abs() < 1e-12);
        assert!((pi - 0.2642411176571153).abs() < 1e-12);

        let d_high = demand(1.0, 0.0);
        let pi_s = profit_direct(&post(AuctionFormat::Standard, 0.0), &d_high, 0.5).unwrap();
        assert!((pi_s - 0.2642411176571153).abs() < 1e-12);

        let nobody = demand(0.0, 0.0);
        assert_eq!(profit_direct(&post(AuctionFormat::Standard, 0.3), &nobody, 0.5).unwrap(), 0.0);
        assert_eq!(profit_direct(&post(AuctionFormat::AllPay, 0.3), &nobody, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn profit_identity_examples() {
        let d = DemandResponse::from_total(1.0, 0.3).unwrap();
        let r = lemma1_residual(&post(AuctionFormat::Standard, 0.2), &d, 0.5).unwrap();
        assert!(r.abs() < 1e-9, "residual {r}");

        let d = DemandResponse::from_total(2.0, 0.4).unwrap();
        let r = lemma1_residual(&post(AuctionFormat::AllPay, 0.0), &d, 0.6).unwrap();
        assert!(r.abs() < 1e-9, "residual {r}");

        // Budget below the mix: the all-pay side must go through the series.
        let d = DemandResponse::from_total(2.0, 0.7).unwrap();
        let r = lemma1_residual(&post(AuctionFormat::AllPay, 0.1), &d, 0.2).unwrap();
        assert!(r.abs() < 1e-9, "residual {r}");

        let nobody = demand(0.0, 0.0);
        assert_eq!(lemma1_residual(&post(AuctionFormat::Standard, 0.2), &nobody, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn solve_demand_symmetric_allpay_recovers_ratio() {
        let omega = (-1.3_f64).exp();
        let d = solve_demand(&post(AuctionFormat::AllPay, 0.0), omega, omega, 0.9).unwrap();
        assert!((d.total() - 1.3).abs() < 1e-9, "total {}", d.total());
        let (u_h, u_l) = utilities(&post(AuctionFormat::AllPay, 0.0), &d, 0.9).unwrap();
        assert!((u_h - omega).abs() < 1e-10);
        assert!((u_l - omega).abs() < 1e-10);
    }

    #[test]
    fn solve_demand_unreachable_utilities_mean_no_entry() {
        let d = solve_demand(&post(AuctionFormat::Standard, 0.1), 0.95, 0.95, 0.5).unwrap();
        assert_eq!(d.total(), 0.0);
        let d = solve_demand(&post(AuctionFormat::AllPay, 0.0), 1.0 - 1e-9, 1.0 - 1e-9, 0.5).unwrap();
        assert!(d.total() < 1e-6);
    }

    #[test]
    fn solve_demand_high_only_corner() {
        let omega_h = (-1.0_f64).exp();
        let omega_l = omega_h + 0.01;
        let d = solve_demand(&post(AuctionFormat::Standard, 0.0), omega_h, omega_l, 0.5).unwrap();
        assert_eq!(d.x_l().value(), 0.0);
        assert!((d.x_h().value() - 1.0).abs() < 1e-9);
        let (u_h, _) = utilities(&post(AuctionFormat::Standard, 0.0), &d, 0.5).unwrap();
        assert!((u_h - omega_h).abs() < 1e-10);
    }

    #[test]
    fn solve_demand_interior_roundtrip() {
        for (format, x_h, x_l, r, b) in [
            (AuctionFormat::Standard, 0.8, 0.4, 0.2, 0.7),
            (AuctionFormat::AllPay, 0.5, 1.0, 0.1, 0.3),
            (AuctionFormat::Standard, 1.2, 0.9, 0.0, 0.4),
        ] {
            let target = demand(x_h, x_l);
            let posting = post(format, r);
            let (omega_h, omega_l) = utilities(&posting, &target, b).unwrap();
            let solved = solve_demand(&posting, omega_h, omega_l, b).unwrap();
            assert!(
                (solved.x_h().value() - x_h).abs() < 1e-7
                    && (solved.x_l().value() - x_l).abs() < 1e-7,
                "recovered ({}, {}) for target ({x_h}, {x_l})",
                solved.x_h().value(),
                solved.x_l().value(),
            );
            let (u_h, u_l) = utilities(&posting, &solved, b).unwrap();
            assert!((u_h - omega_h).abs() < 1e-10);
            assert!((u_l - omega_l).abs() < 1e-10);
        }
    }

    #[test]
    fn solve_demand_rejects_reserve_above_budget() {
        assert!(solve_demand(&post(AuctionFormat::Standard, 0.8), 0.3, 0.3, 0.5).is_err());
    }

    #[test]
    fn symmetric_equilibrium_values() {
        let eq = allpay_symmetric_equilibrium(&MarketParams::new(1.0, 0.2, 0.5).unwrap()).unwrap();
        assert!((eq.omega_h - 0.36787944117144233).abs() < 1e-15);
        assert_eq!(eq.reserve_star, 0.0);
        assert!((eq.profit - 0.2642411176571153).abs() < 1e-15);

        let eq = allpay_symmetric_equilibrium(&MarketParams::new(2.0, 0.3, 0.5).unwrap()).unwrap();
        assert!((eq.profit - (1.0 - 3.0 * (-2.0_f64).exp())).abs() < 1e-15);

        let eq = allpay_symmetric_equilibrium(&MarketParams::new(1e-8, 0.2, 0.5).unwrap()).unwrap();
        assert!(eq.profit < 1e-9);
        assert!(eq.omega_h > 1.0 - 1e-6);

        assert!(matches!(
            allpay_symmetric_equilibrium(&MarketParams::new(1.0, 0.6, 0.5).unwrap()),
            Err(CoreError::HypothesisViolated(_))
        ));
    }

    #[test]
    fn standard_deviation_never_profits() {
        for (lambda, sigma, b) in [(1.0, 0.2, 0.5), (2.0, 0.1, 0.9), (0.5, 0.3, 0.4)] {
            let gain =
                standard_deviation_check(&MarketParams::new(lambda, sigma, b).unwrap()).unwrap();
            assert!(gain.abs() <= 1e-9, "gain {gain} at ({lambda}, {sigma}, {b})");
        }
    }

    #[test]
    fn allpay_deviation_example() {
        let params = MarketParams::new(1.0, 0.3, 0.5).unwrap();
        let dev = allpay_deviation_from_standard(&params, 0.3).unwrap();
        assert!(dev.theta_hat > 0.3);
        assert!(dev.r_hat < 0.3);
        assert!(dev.profit_gain > 0.0);
        assert!(!dev.subsidy_required);

        // The solved pair reproduces the standard utilities for both types.
        let standard = post(AuctionFormat::Standard, 0.3);
        let incumbent = DemandResponse::from_total(1.0, 0.3).unwrap();
        let (u_h_s, u_l_s) = utilities(&standard, &incumbent, 0.5).unwrap();
        let deviator = DemandResponse::from_total(1.0, dev.theta_hat).unwrap();
        let allpay = post(AuctionFormat::AllPay, dev.r_hat.max(0.0));
        // r̂ ≥ 0 here, so the posting is admissible as-is.
        let (u_h_a, u_l_a) = utilities(&allpay, &deviator, 0.5).unwrap();
        assert!((u_h_a - u_h_s).abs() < 1e-10, "high side {u_h_a} vs {u_h_s}");
        assert!((u_l_a - u_l_s).abs() < 1e-10, "low side {u_l_a} vs {u_l_s}");
    }

    #[test]
    fn allpay_deviation_zero_reserve_needs_subsidy() {
        let params = MarketParams::new(1.0, 0.3, 0.5).unwrap();
        let dev = allpay_deviation_from_standard(&params, 0.0).unwrap();
        assert!(dev.r_hat < 0.0);
        assert!(dev.subsidy_required);
        assert!(dev.profit_gain > 0.0);
    }

    #[test]
    fn allpay_deviation_degenerate_mix_rejected() {
        let params = MarketParams::new(1.0, 0.0, 0.5).unwrap();
        assert!(matches!(
            allpay_deviation_from_standard(&params, 0.3),
            Err(CoreError::Degenerate(_))
        ));
    }

    #[test]
    fn utility_monotonicity_grid() {
        let eps = 1e-4;
        for format in [AuctionFormat::Standard, AuctionFormat::AllPay] {
            for x in [0.5, 1.0, 2.5] {
                for theta in [0.2, 0.5, 0.8] {
                    for r in [0.0, 0.3] {
                        let b = 0.6;
                        let p = post(format, r);
                        let base = DemandResponse::from_total(x, theta).unwrap();
                        let (u_h, u_l) = utilities(&p, &base, b).unwrap();
                        let denser = DemandResponse::from_total(x + eps, theta).unwrap();
                        let (v_h, v_l) = utilities(&p, &denser, b).unwrap();
                        assert!(v_h < u_h && v_l < u_l, "crowding must hurt");
                        let lower_mix = DemandResponse::from_total(x, theta + eps).unwrap();
                        let (w_h, w_l) = utilities(&p, &lower_mix, b).unwrap();
                        assert!(w_h >= u_h - 1e-14 && w_l >= u_l - 1e-14, "softer rivals help");
                        let pricier = post(format, r + eps);
                        let (y_h, y_l) = utilities(&pricier, &base, b).unwrap();
                        assert!(y_h < u_h && y_l < u_l, "higher reserve hurts");
                    }
                }
            }
        }
    }

    #[test]
    fn market_level_format_dominance() {
        // Identical demand and reserve: buyers strictly prefer the standard
        // format, the seller strictly prefers all-pay.
        for (x_h, x_l, r, b) in [(0.7, 0.7, 0.1, 0.4), (0.4, 1.2, 0.0, 0.7), (1.5, 0.5, 0.2, 0.25)]
        {
            let d = demand(x_h, x_l);
            let (sh, sl) = utilities(&post(AuctionFormat::Standard, r), &d, b).unwrap();
            let (ah, al) = utilities(&post(AuctionFormat::AllPay, r), &d, b).unwrap();
            assert!(ah < sh && al < sl);
            let pi_s = profit_direct(&post(AuctionFormat::Standard, r), &d, b).unwrap();
            let pi_a = profit_direct(&post(AuctionFormat::AllPay, r), &d, b).unwrap();
            assert!(pi_a > pi_s);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn profit_identity_everywhere(
            lambda in 0.05f64..6.0,
            theta in 0.0f64..=1.0,
            b in 0.05f64..0.95,
            r_frac in 0.0f64..=1.0,
            format_pick in 0..2,
        ) {
            let format = if format_pick == 0 { AuctionFormat::Standard } else { AuctionFormat::AllPay };
            let r = r_frac * b;
            let d = DemandResponse::from_total(lambda, theta).unwrap();
            let residual = lemma1_residual(&post(format, r), &d, b).unwrap();
            prop_assert!(residual.abs() < 1e-9, "residual {residual}");
        }
    }
}
