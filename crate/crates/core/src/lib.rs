//! Equilibrium analysis of all-pay auctions with budget-constrained bidders
//! in a competitive search market.
//!
//! Buyers are either unconstrained ("high") or capped at a common budget
//! ("low"); every buyer values the single unit at 1. [`auction`] solves the
//! resulting store-level bidding games in closed form, [`market`] embeds them
//! in a directed-search market with Poisson demand from [`poisson`], and
//! [`sim`] verifies both layers by Monte Carlo. [`dist`] carries the
//! piecewise mixed bid distributions all of them share.

pub mod auction;
pub mod dist;
pub mod error;
pub mod market;
pub mod poisson;
pub mod sim;

pub use auction::{
    allpay_bid_cdfs, allpay_payoffs, atom_payoff, best_response_gap, classify_region,
    equilibrium_profile, eu_of_bid, expected_bid, firstprice_high_cdf, solve_atom_mu,
    standard_payoffs, AuctionScene, BidderType, EquilibriumProfile, PayoffTriple, Region,
    RegionTag,
};
pub use dist::{Atom, BidDistribution, CdfForm, Segment};
pub use error::CoreError;
pub use market::{
    allpay_deviation_from_standard, allpay_symmetric_equilibrium, lemma1_residual, profit_direct,
    solve_demand, standard_deviation_check, utilities, AuctionFormat, DemandResponse,
    DeviationReport, MarketEquilibrium, MarketParams, MechanismPosting,
};
pub use poisson::{expect_over_demand, z, PoissonRate, SeriesPolicy};
pub use sim::{
    sample_bid, simulate_market, simulate_store, Agreement, MarketSimReport, SimConfig,
    SimEstimate, StoreFormat, StoreSimReport,
};
