//! Per-store bidding subgame at fixed (n, θ, b).
//!
//! A store meets `n ≥ 2` bidders who all value the good at 1. Each bidder is
//! independently a low type with probability θ; low types can pay at most the
//! budget `b`, high types are unconstrained. The module constructs the
//! symmetric equilibrium bid distributions and payoffs for the all-pay format
//! and the payoff-equivalent standard (first or second price) format, plus a
//! grid best-response oracle used to certify the constructions.

use serde::Serialize;

use crate::dist::{Atom, BidDistribution, CdfForm, Segment};
use crate::error::{CoreError, Result};

/// Bidders present at a store, their type mix, and the low-type budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuctionScene {
    n: u32,
    theta: f64,
    budget: f64,
}

impl AuctionScene {
    pub fn new(n: u32, theta: f64, budget: f64) -> Result<Self> {
        if n < 2 {
            return Err(CoreError::InvalidParameter(format!("need at least 2 bidders, got {n}")));
        }
        if !(0.0..=1.0).contains(&theta) {
            return Err(CoreError::InvalidParameter(format!("theta must lie in [0,1], got {theta}")));
        }
        if !(theta.is_finite() && budget.is_finite()) || !(budget > 0.0 && budget < 1.0) {
            return Err(CoreError::InvalidParameter(format!("budget must lie in (0,1), got {budget}")));
        }
        Ok(Self { n, theta, budget })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// θ^{n-1}: the probability that all rivals of one bidder are low types.
    pub fn theta_pow_rivals(&self) -> f64 {
        self.theta.powi(self.n as i32 - 1)
    }
}

/// Budget-binding regime of a scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RegionTag {
    /// b < θ^{n-1}/n: low types pool all mass at the budget.
    R1,
    /// θ^{n-1}/n ≤ b < θ^{n-1}: low types mix below and keep an atom at the budget.
    R2,
    /// b ≥ θ^{n-1}: the budget never binds.
    R3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Region {
    pub tag: RegionTag,
    /// θ^{n-1}/n, the boundary below which low types pool at the budget.
    pub pooling_threshold: f64,
    /// θ^{n-1}, the boundary from which the budget stops binding.
    pub slack_threshold: f64,
}

/// Expected payoffs per auction with `n` bidders: high type, low type, seller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PayoffTriple {
    pub u_h: f64,
    pub u_l: f64,
    pub pi: f64,
}

impl PayoffTriple {
    /// The item is always awarded and transfers net out, so revenue plus
    /// type-weighted bidder payoffs must return the unit surplus.
    pub fn surplus_residual(&self, scene: &AuctionScene) -> f64 {
        let n = scene.n as f64;
        self.pi + n * ((1.0 - scene.theta) * self.u_h + scene.theta * self.u_l) - 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BidderType {
    High,
    Low,
}

/// Equilibrium bid distributions for one scene under the all-pay format,
/// including the degenerate type mixes θ ∈ {0, 1}.
#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumProfile {
    pub scene: AuctionScene,
    pub region: Region,
    pub g_h: BidDistribution,
    pub g_l: BidDistribution,
    pub payoffs: PayoffTriple,
}

impl EquilibriumProfile {
    pub fn bids_for(&self, t: BidderType) -> &BidDistribution {
        match t {
            BidderType::High => &self.g_h,
            BidderType::Low => &self.g_l,
        }
    }
}

pub fn classify_region(scene: &AuctionScene) -> Region {
    let slack = scene.theta_pow_rivals();
    let pooling = slack / scene.n as f64;
    let tag = if scene.budget < pooling {
        RegionTag::R1
    } else if scene.budget < slack {
        RegionTag::R2
    } else {
        RegionTag::R3
    };
    Region { tag, pooling_threshold: pooling, slack_threshold: slack }
}

/// Payoffs under the standard (first or second price) format; the two price
/// rules are payoff equivalent here.
///
/// High types beat the budget-capped low types, so a high wins at price b
/// exactly when all rivals are low; two or more highs compete the price to 1.
pub fn standard_payoffs(scene: &AuctionScene) -> PayoffTriple {
    let n = scene.n as f64;
    let theta = scene.theta;
    let b = scene.budget;
    let tp = scene.theta_pow_rivals();
    let u_h = tp * (1.0 - b);
    let u_l = tp * (1.0 - b) / n;
    let all_low = tp * theta;
    let one_high = n * tp * (1.0 - theta);
    let pi = (all_low + one_high) * b + 1.0 - all_low - one_high;
    PayoffTriple { u_h, u_l, pi }
}

/// Payoffs under the all-pay format. Revenue follows from the surplus
/// accounting identity; integrating the bid distributions is the independent
/// cross-check.
pub fn allpay_payoffs(scene: &AuctionScene) -> PayoffTriple {
    let n = scene.n as f64;
    let theta = scene.theta;
    let tp = scene.theta_pow_rivals();
    let u_h = (tp - scene.budget).max(0.0);
    let u_l = (tp / n - scene.budget).max(0.0);
    let pi = 1.0 - n * ((1.0 - theta) * u_h + theta * u_l);
    PayoffTriple { u_h, u_l, pi }
}

/// Probability of winning for a bidder at a bid where each of the other
/// `n - 1` rivals independently bids below with probability `below` and
/// exactly there with probability `at`, ties split uniformly.
///
/// Evaluated as the factored difference-of-powers sum, which is exact as
/// `at → 0` where it reduces to `below^{n-1}`.
pub(crate) fn tie_break_win_prob(below: f64, at: f64, n: u32) -> f64 {
    let top = below + at;
    let mut sum = 0.0;
    let mut top_pow = 1.0;
    for j in 0..n {
        // top^j * below^{n-1-j}
        sum += top_pow * below.powi((n - 1 - j) as i32);
        top_pow *= top;
    }
    sum / n as f64
}

/// Size of the low-type atom at the budget in region R2.
///
/// The atom mass balances the tie-splitting win probability against the
/// budget: b·n/θ^{n-1} = (1 - (1-μ)^n)/μ, whose right side strictly falls in
/// μ, so bisection is exact.
pub fn solve_atom_mu(scene: &AuctionScene) -> Result<f64> {
    let region = classify_region(scene);
    if region.tag != RegionTag::R2 {
        return Err(CoreError::WrongRegion(format!(
            "atom size is defined in R2 only, scene is {:?}",
            region.tag
        )));
    }
    let n = scene.n;
    let target = scene.budget * n as f64 / scene.theta_pow_rivals();
    // (1-(1-μ)^n)/μ = Σ_{j<n} (1-μ)^j, monotone decreasing from n to 1.
    let tie_sum = |mu: f64| -> f64 {
        let mut sum = 0.0;
        let mut pow = 1.0;
        for _ in 0..n {
            sum += pow;
            pow *= 1.0 - mu;
        }
        sum
    };
    let f = |mu: f64| target - tie_sum(mu);
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    // f(0) = target - n ≤ 0 and f(1) = target - 1 ≥ 0 inside R2.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    let mu = 0.5 * (lo + hi);
    if f(mu).abs() > 1e-11 {
        return Err(CoreError::NonConvergence(format!(
            "atom equation residual {} at mu = {mu}",
            f(mu)
        )));
    }
    Ok(mu)
}

/// All-pay expected payoff of bidding exactly the budget when the low side
/// holds an atom of size `mu` there.
pub fn atom_payoff(scene: &AuctionScene, mu: f64) -> Result<f64> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(CoreError::InvalidParameter(format!("atom mass must lie in (0,1], got {mu}")));
    }
    let below = scene.theta * (1.0 - mu);
    let at = scene.theta * mu;
    Ok(tie_break_win_prob(below, at, scene.n) - scene.budget)
}

/// Equilibrium all-pay bid distributions `(G_h, G_l)` for interior θ.
pub fn allpay_bid_cdfs(scene: &AuctionScene) -> Result<(BidDistribution, BidDistribution)> {
    let theta = scene.theta;
    if theta == 0.0 || theta == 1.0 {
        return Err(CoreError::Degenerate(format!(
            "type mix theta = {theta} collapses one side; use equilibrium_profile"
        )));
    }
    let m = scene.n - 1;
    let tp = scene.theta_pow_rivals();
    let b = scene.budget;
    let region = classify_region(scene);

    let high_capped = || -> Result<BidDistribution> {
        BidDistribution::new(
            vec![Segment {
                lower: b,
                upper: 1.0 - tp + b,
                form: CdfForm::Root { m, shift: tp - b, offset: theta, scale: 1.0 - theta },
            }],
            vec![],
        )
    };
    let low_root = CdfForm::Root { m, shift: 0.0, offset: 0.0, scale: theta };

    match region.tag {
        RegionTag::R1 => Ok((high_capped()?, BidDistribution::unit_atom(b))),
        RegionTag::R2 => {
            let mu = solve_atom_mu(scene)?;
            let cap = (theta * (1.0 - mu)).powi(m as i32);
            let mut segments = Vec::new();
            if 1.0 - mu > 1e-12 {
                segments.push(Segment { lower: 0.0, upper: cap, form: low_root });
            }
            let mut atoms = Vec::new();
            if mu > 1e-12 {
                atoms.push(Atom { location: b, mass: mu });
            }
            Ok((high_capped()?, BidDistribution::new(segments, atoms)?))
        }
        RegionTag::R3 => {
            let g_l =
                BidDistribution::new(vec![Segment { lower: 0.0, upper: tp, form: low_root }], vec![])?;
            let g_h = BidDistribution::new(
                vec![Segment {
                    lower: tp,
                    upper: 1.0,
                    form: CdfForm::Root { m, shift: 0.0, offset: theta, scale: 1.0 - theta },
                }],
                vec![],
            )?;
            Ok((g_h, g_l))
        }
    }
}

/// All-pay equilibrium profile for any θ ∈ [0,1], including the degenerate
/// mixes: at θ = 0 the highs mix on [0,1] with G = p^{1/(n-1)} and the low
/// side is an off-path atom at zero; at θ = 1 the high side collapses onto
/// the budget while the low side keeps its R1/R2 shape.
pub fn equilibrium_profile(scene: &AuctionScene) -> Result<EquilibriumProfile> {
    let region = classify_region(scene);
    let payoffs = allpay_payoffs(scene);
    let m = scene.n - 1;
    let (g_h, g_l) = if scene.theta == 0.0 {
        let g_h = BidDistribution::new(
            vec![Segment {
                lower: 0.0,
                upper: 1.0,
                form: CdfForm::Root { m, shift: 0.0, offset: 0.0, scale: 1.0 },
            }],
            vec![],
        )?;
        (g_h, BidDistribution::unit_atom(0.0))
    } else if scene.theta == 1.0 {
        let b = scene.budget;
        let g_l = match region.tag {
            RegionTag::R1 => BidDistribution::unit_atom(b),
            RegionTag::R2 => {
                let mu = solve_atom_mu(scene)?;
                let cap = (1.0 - mu).powi(m as i32);
                let mut segments = Vec::new();
                if 1.0 - mu > 1e-12 {
                    segments.push(Segment {
                        lower: 0.0,
                        upper: cap,
                        form: CdfForm::Root { m, shift: 0.0, offset: 0.0, scale: 1.0 },
                    });
                }
                let mut atoms = Vec::new();
                if mu > 1e-12 {
                    atoms.push(Atom { location: b, mass: mu });
                }
                BidDistribution::new(segments, atoms)?
            }
            RegionTag::R3 => unreachable!("b < 1 = theta^{{n-1}} keeps theta = 1 out of R3"),
        };
        (BidDistribution::unit_atom(b), g_l)
    } else {
        allpay_bid_cdfs(scene)?
    };
    Ok(EquilibriumProfile { scene: *scene, region, g_h, g_l, payoffs })
}

/// Expected all-pay payoff of bidding `p` against `n-1` rivals drawn from the
/// mixed population (G_h, G_l). `p` must not carry rival atom mass; those
/// points need the tie-aware [`atom_payoff`] treatment.
pub fn eu_of_bid(
    p: f64,
    g_h: &BidDistribution,
    g_l: &BidDistribution,
    scene: &AuctionScene,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(CoreError::InvalidParameter(format!("bid must lie in [0,1], got {p}")));
    }
    let theta = scene.theta;
    let at = theta * (g_l.eval(p) - g_l.eval_left(p))
        + (1.0 - theta) * (g_h.eval(p) - g_h.eval_left(p));
    if at > 0.0 {
        return Err(CoreError::AtomicBid(p));
    }
    let m = theta * g_l.eval(p) + (1.0 - theta) * g_h.eval(p);
    Ok(m.powi(scene.n as i32 - 1) - p)
}

/// Tie-aware expected payoff of bidding `p` against the mixed rival
/// population; coincides with [`eu_of_bid`] off atoms.
fn payoff_at(p: f64, g_h: &BidDistribution, g_l: &BidDistribution, scene: &AuctionScene) -> f64 {
    let theta = scene.theta;
    let below = theta * g_l.eval_left(p) + (1.0 - theta) * g_h.eval_left(p);
    let at =
        theta * (g_l.eval(p) - g_l.eval_left(p)) + (1.0 - theta) * (g_h.eval(p) - g_h.eval_left(p));
    tie_break_win_prob(below, at.max(0.0), scene.n) - p
}

/// Scans achievable all-pay payoffs over a bid grid and reports, per type,
/// the largest excess over the claimed equilibrium payoff. Low types only
/// reach bids up to the budget. Support endpoints and atom locations are
/// always scanned in addition to the uniform grid.
pub fn best_response_gap(
    g_h: &BidDistribution,
    g_l: &BidDistribution,
    scene: &AuctionScene,
    grid_size: usize,
) -> Result<(f64, f64)> {
    if grid_size < 1000 {
        return Err(CoreError::InvalidParameter(format!(
            "grid needs at least 1000 points, got {grid_size}"
        )));
    }
    let claimed = allpay_payoffs(scene);
    let mut extra = Vec::new();
    for d in [g_h, g_l] {
        for s in d.segments() {
            extra.push(s.lower);
            extra.push(s.upper);
        }
        for a in d.atoms() {
            extra.push(a.location);
        }
    }
    extra.push(scene.budget);
    extra.retain(|p| (0.0..=1.0).contains(p));

    let step = 1.0 / (grid_size - 1) as f64;
    let mut gap_h = f64::NEG_INFINITY;
    let mut gap_l = f64::NEG_INFINITY;
    let mut visit = |p: f64| {
        let value = payoff_at(p, g_h, g_l, scene);
        gap_h = gap_h.max(value - claimed.u_h);
        if p <= scene.budget {
            gap_l = gap_l.max(value - claimed.u_l);
        }
    };
    for i in 0..grid_size {
        visit((i as f64 * step).min(1.0));
    }
    for p in extra {
        visit(p);
    }
    Ok((gap_h, gap_l))
}

/// Mean of a bid distribution; spelled out as the named operation used by the
/// revenue cross-checks.
pub fn expected_bid(dist: &BidDistribution) -> f64 {
    dist.mean()
}

/// High-type mixed strategy under the first-price rule, for interior θ.
/// Low types bid the budget; highs mix on [b, 1-(1-b)θ^{n-1}] so that
/// (θ + (1-θ)F(p))^{n-1}(1-p) stays equal to θ^{n-1}(1-b).
pub fn firstprice_high_cdf(scene: &AuctionScene) -> Result<BidDistribution> {
    let theta = scene.theta;
    if theta == 0.0 || theta == 1.0 {
        return Err(CoreError::Degenerate(format!(
            "type mix theta = {theta} collapses the first-price mixing interval"
        )));
    }
    let m = scene.n - 1;
    let tp = scene.theta_pow_rivals();
    let b = scene.budget;
    BidDistribution::new(
        vec![Segment {
            lower: b,
            upper: 1.0 - (1.0 - b) * tp,
            form: CdfForm::ReciprocalRoot {
                m,
                k: (1.0 - b) * tp,
                offset: theta,
                scale: 1.0 - theta,
            },
        }],
        vec![],
    )
}
