//! Monte Carlo verification of the analytic payoffs, profits, and bid
//! distributions.
//!
//! Every estimator draws one ChaCha8 stream per replication from a single
//! seed, accumulates fixed-size blocks in parallel, and merges blocks in
//! index order with compensated summation, so results are bit-identical for
//! a given config regardless of thread count.
//!
//! Utility estimates use a conditional probe: the probed bidder's type is
//! forced while its rivals share the common draws across the high and low
//! scenarios, which removes most of the cross-type variance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::auction::{equilibrium_profile, firstprice_high_cdf, AuctionScene};
use crate::dist::BidDistribution;
use crate::error::{CoreError, Result};
use crate::market::{AuctionFormat, DemandResponse, MarketParams, MechanismPosting};
use crate::poisson::KahanSum;

const BLOCK: u64 = 4096;
/// The Poisson sampling table stops once this much tail mass remains.
const TAIL_MASS: f64 = 1e-15;
const DEFAULT_SEED: u64 = 0xA11BA1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SimConfig {
    pub replications: u64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(replications: u64, seed: u64) -> Result<Self> {
        if replications < 10_000 {
            return Err(CoreError::InvalidParameter(format!(
                "need at least 1e4 replications for the error bands to mean anything, got {replications}"
            )));
        }
        Ok(Self { replications, seed })
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { replications: 1_000_000, seed: DEFAULT_SEED }
    }
}

/// How far a simulated mean sits from its analytic reference, in standard
/// errors: at most 3 passes, between 3 and 4 is flagged, beyond 4 fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Agreement {
    Pass,
    Flag,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub replications: u64,
    pub target: String,
}

impl SimEstimate {
    fn from_sums(sum: f64, sumsq: f64, n: u64, target: &str) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        let var = ((sumsq / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
        Self { mean, std_error: (var / nf).sqrt(), replications: n, target: target.into() }
    }

    pub fn z_score(&self, reference: f64) -> f64 {
        let gap = (self.mean - reference).abs();
        if self.std_error == 0.0 {
            if gap == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            gap / self.std_error
        }
    }

    pub fn agreement(&self, reference: f64) -> Agreement {
        let zs = self.z_score(reference);
        if zs <= 3.0 {
            Agreement::Pass
        } else if zs <= 4.0 {
            Agreement::Flag
        } else {
            Agreement::Fail
        }
    }
}

/// Concrete auction rules for a single store. The two standard variants are
/// payoff equivalent in theory; simulating both is the point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreFormat {
    FirstPrice,
    SecondPrice,
    AllPay,
}

#[derive(Debug, Clone, Serialize)]
pub struct StoreSimReport {
    pub u_h: SimEstimate,
    pub u_l: SimEstimate,
    pub pi: SimEstimate,
}

#[derive(Debug, Clone, Serialize)]
pub struct MarketSimReport {
    pub u_h: SimEstimate,
    pub u_l: SimEstimate,
    pub profit: SimEstimate,
    pub empty_share: SimEstimate,
}

/// Draws a bid from `dist` by inversion; `u` must lie in [0, 1).
pub fn sample_bid(dist: &BidDistribution, u: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&u) {
        return Err(CoreError::InvalidParameter(format!(
            "inversion input must lie in [0,1), got {u}"
        )));
    }
    Ok(dist.inverse(u))
}

struct Played {
    winner: usize,
    top: f64,
    second: f64,
    sum: f64,
}

/// Resolves one auction among `(bid, tie_key)` pairs. The winner is the
/// lexicographic max, which implements a uniform tie-break because keys are
/// iid uniforms.
fn play(bids: &[(f64, f64)]) -> Played {
    let mut winner = 0;
    for (i, &(bid, key)) in bids.iter().enumerate().skip(1) {
        if bid > bids[winner].0 || (bid == bids[winner].0 && key > bids[winner].1) {
            winner = i;
        }
    }
    let mut second = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for (i, &(bid, _)) in bids.iter().enumerate() {
        sum += bid;
        if i != winner && bid > second {
            second = bid;
        }
    }
    Played { winner, top: bids[winner].0, second, sum }
}

fn bidder_payoff(format: StoreFormat, played: &Played, me: usize, my_bid: f64, reserve: f64) -> f64 {
    let won = played.winner == me;
    match format {
        StoreFormat::FirstPrice => {
            if won {
                1.0 - my_bid
            } else {
                0.0
            }
        }
        StoreFormat::SecondPrice => {
            if won {
                1.0 - played.second.max(reserve)
            } else {
                0.0
            }
        }
        StoreFormat::AllPay => {
            if won {
                1.0 - my_bid
            } else {
                -my_bid
            }
        }
    }
}

fn seller_revenue(format: StoreFormat, played: &Played, reserve: f64) -> f64 {
    match format {
        StoreFormat::FirstPrice => played.top,
        StoreFormat::SecondPrice => played.second.max(reserve),
        // Every bid is sunk, so revenue is the exact pathwise bid sum.
        StoreFormat::AllPay => played.sum,
    }
}

/// Bid profile simulated for a store-level scene under `format`.
///
/// The standard profiles: second price has highs bid their value and lows
/// their budget at any mix; first price uses the indifference distribution
/// for highs, except θ = 0 where everyone bids 1 outright. At θ = 1 first
/// price admits no equilibrium (the best response to lows at the budget is an
/// open set), so that combination is rejected.
fn store_profile(
    scene: &AuctionScene,
    format: StoreFormat,
) -> Result<(BidDistribution, BidDistribution)> {
    let b = scene.budget();
    match format {
        StoreFormat::AllPay => {
            let profile = equilibrium_profile(scene)?;
            Ok((profile.g_h, profile.g_l))
        }
        StoreFormat::SecondPrice => {
            Ok((BidDistribution::unit_atom(1.0), BidDistribution::unit_atom(b)))
        }
        StoreFormat::FirstPrice => {
            if scene.theta() == 0.0 {
                return Ok((BidDistribution::unit_atom(1.0), BidDistribution::unit_atom(b)));
            }
            Ok((firstprice_high_cdf(scene)?, BidDistribution::unit_atom(b)))
        }
    }
}

/// Runs `rep_fn` once per replication on its own RNG stream and returns
/// per-estimand `(sum, sum of squares)`, merged across blocks in index order.
fn accumulate<const K: usize, F>(config: &SimConfig, rep_fn: F) -> ([f64; K], [f64; K])
where
    F: Fn(&mut ChaCha8Rng, &mut Vec<(f64, f64)>) -> [f64; K] + Sync,
{
    let reps = config.replications;
    let blocks = reps.div_ceil(BLOCK);
    let partials: Vec<([f64; K], [f64; K])> = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let lo = block * BLOCK;
            let hi = ((block + 1) * BLOCK).min(reps);
            let mut sums = [KahanSum::default(); K];
            let mut sqs = [KahanSum::default(); K];
            let mut scratch: Vec<(f64, f64)> = Vec::new();
            for rep in lo..hi {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(rep);
                let values = rep_fn(&mut rng, &mut scratch);
                for k in 0..K {
                    sums[k].add(values[k]);
                    sqs[k].add(values[k] * values[k]);
                }
            }
            (sums.map(|s| s.total()), sqs.map(|s| s.total()))
        })
        .collect();
    let mut sums = [KahanSum::default(); K];
    let mut sqs = [KahanSum::default(); K];
    for (bs, bq) in partials {
        for k in 0..K {
            sums[k].add(bs[k]);
            sqs[k].add(bq[k]);
        }
    }
    (sums.map(|s| s.total()), sqs.map(|s| s.total()))
}

/// Estimates `(u_h, u_l, π)` for one store by simulation.
///
/// Per replication, in fixed draw order: n-1 rivals (type, bid, tie-key
/// uniforms), one extra bidder completing the n-bidder revenue auction, then
/// forced high and low probes (bid, tie key each). The probes face the same
/// rivals; the revenue auction replaces the probe with the extra bidder.
pub fn simulate_store(
    scene: &AuctionScene,
    format: StoreFormat,
    config: &SimConfig,
) -> Result<StoreSimReport> {
    let (g_h, g_l) = store_profile(scene, format)?;
    let n = scene.n() as usize;
    let theta = scene.theta();
    let rep_fn = |rng: &mut ChaCha8Rng, scratch: &mut Vec<(f64, f64)>| -> [f64; 3] {
        scratch.clear();
        for _ in 0..n - 1 {
            let low = rng.random::<f64>() < theta;
            let bu = rng.random::<f64>();
            let key = rng.random::<f64>();
            let bid = if low { g_l.inverse(bu) } else { g_h.inverse(bu) };
            scratch.push((bid, key));
        }
        let extra_low = rng.random::<f64>() < theta;
        let extra_bu = rng.random::<f64>();
        let extra_key = rng.random::<f64>();
        let extra =
            (if extra_low { g_l.inverse(extra_bu) } else { g_h.inverse(extra_bu) }, extra_key);
        let probe_h = (g_h.inverse(rng.random::<f64>()), rng.random::<f64>());
        let probe_l = (g_l.inverse(rng.random::<f64>()), rng.random::<f64>());

        let mut out = [0.0; 3];
        for (slot, probe) in [(0usize, probe_h), (1, probe_l)] {
            scratch.push(probe);
            let played = play(scratch);
            out[slot] = bidder_payoff(format, &played, n - 1, probe.0, 0.0);
            scratch.pop();
        }
        scratch.push(extra);
        let played = play(scratch);
        out[2] = seller_revenue(format, &played, 0.0);
        scratch.pop();
        out
    };
    let (sums, sqs) = accumulate::<3, _>(config, rep_fn);
    let n_reps = config.replications;
    Ok(StoreSimReport {
        u_h: SimEstimate::from_sums(sums[0], sqs[0], n_reps, "u_h"),
        u_l: SimEstimate::from_sums(sums[1], sqs[1], n_reps, "u_l"),
        pi: SimEstimate::from_sums(sums[2], sqs[2], n_reps, "pi"),
    })
}

/// Cumulative Poisson table for inversion sampling, extended until the
/// remaining tail mass is below `TAIL_MASS`. Index = count.
fn poisson_cdf_table(x: f64) -> Vec<f64> {
    let mut weight = (-x).exp();
    let mut cum = weight;
    let mut table = vec![cum];
    let mut n = 1.0;
    while 1.0 - cum > TAIL_MASS && table.len() < 4096 {
        weight *= x / n;
        cum += weight;
        table.push(cum);
        n += 1.0;
    }
    table
}

fn sample_count(table: &[f64], u: f64) -> usize {
    table.partition_point(|&c| c <= u).min(table.len() - 1)
}

/// Estimates `(U_h, U_l, Π, empty share)` for one posting by simulation.
///
/// Per replication, three independent scenarios run in fixed order: a forced
/// high visitor joining Poisson companions, a forced low visitor likewise,
/// then the seller's store unconditioned. A lone visitor trades at the
/// reserve; with two or more present the per-n profile plays out. Standard
/// postings resolve as a second-price auction whose winner pays at least the
/// reserve; all-pay bids are sunk with no reserve floor.
pub fn simulate_market(
    params: &MarketParams,
    post: &MechanismPosting,
    demand: &DemandResponse,
    config: &SimConfig,
) -> Result<MarketSimReport> {
    let b = params.budget();
    let theta = demand.theta();
    let r = post.reserve;
    let table_h = poisson_cdf_table(demand.x_h().value());
    let table_l = poisson_cdf_table(demand.x_l().value());
    // Largest store any scenario can realize: both count caps plus a probe.
    let n_max = (table_h.len() - 1) + (table_l.len() - 1) + 1;
    let store_format = match post.format {
        AuctionFormat::Standard => StoreFormat::SecondPrice,
        AuctionFormat::AllPay => StoreFormat::AllPay,
    };
    let mut profiles: Vec<(BidDistribution, BidDistribution)> = Vec::new();
    for n in 2..=n_max.max(2) {
        let scene = AuctionScene::new(
            u32::try_from(n).map_err(|_| {
                CoreError::InvalidParameter(format!("store size {n} exceeds supported range"))
            })?,
            theta,
            b,
        )?;
        profiles.push(store_profile(&scene, store_format)?);
    }
    let profiles = &profiles;
    let table_h = &table_h;
    let table_l = &table_l;

    // Fills `scratch` with companion bids drawn from the profile for a store
    // of `n_store` bidders.
    let fill_companions = |rng: &mut ChaCha8Rng,
                           scratch: &mut Vec<(f64, f64)>,
                           k_h: usize,
                           k_l: usize,
                           n_store: usize| {
        scratch.clear();
        let (g_h, g_l) = &profiles[n_store - 2];
        for _ in 0..k_h {
            let bu = rng.random::<f64>();
            let key = rng.random::<f64>();
            scratch.push((g_h.inverse(bu), key));
        }
        for _ in 0..k_l {
            let bu = rng.random::<f64>();
            let key = rng.random::<f64>();
            scratch.push((g_l.inverse(bu), key));
        }
    };

    let rep_fn = move |rng: &mut ChaCha8Rng, scratch: &mut Vec<(f64, f64)>| -> [f64; 4] {
        let mut out = [0.0; 4];
        // Probe scenarios: store size is the probe plus its companions.
        for (slot, probe_low) in [(0usize, false), (1, true)] {
            let k_h = sample_count(table_h, rng.random::<f64>());
            let k_l = sample_count(table_l, rng.random::<f64>());
            let n = 1 + k_h + k_l;
            out[slot] = if n == 1 {
                1.0 - r
            } else {
                fill_companions(rng, scratch, k_h, k_l, n);
                let (g_h, g_l) = &profiles[n - 2];
                let bu = rng.random::<f64>();
                let key = rng.random::<f64>();
                let own = if probe_low { g_l.inverse(bu) } else { g_h.inverse(bu) };
                scratch.push((own, key));
                let played = play(scratch);
                bidder_payoff(store_format, &played, n - 1, own, r)
            };
        }
        // Seller scenario, unconditioned.
        let k_h = sample_count(table_h, rng.random::<f64>());
        let k_l = sample_count(table_l, rng.random::<f64>());
        match k_h + k_l {
            0 => out[3] = 1.0,
            1 => out[2] = r,
            n => {
                fill_companions(rng, scratch, k_h, k_l, n);
                let played = play(scratch);
                out[2] = seller_revenue(store_format, &played, r);
            }
        }
        out
    };
    let (sums, sqs) = accumulate::<4, _>(config, rep_fn);
    let n_reps = config.replications;
    Ok(MarketSimReport {
        u_h: SimEstimate::from_sums(sums[0], sqs[0], n_reps, "u_h"),
        u_l: SimEstimate::from_sums(sums[1], sqs[1], n_reps, "u_l"),
        profit: SimEstimate::from_sums(sums[2], sqs[2], n_reps, "profit"),
        empty_share: SimEstimate::from_sums(sums[3], sqs[3], n_reps, "empty_share"),
    })
}
