//! Python bindings: thin wrappers over the core types plus flat functions
//! that take and return plain numbers, tuples, and dicts.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use allpay_core as ac;
use allpay_core::CoreError;

fn to_py(err: CoreError) -> PyErr {
    match err {
        CoreError::Truncation { .. } | CoreError::NonConvergence(_) => {
            PyRuntimeError::new_err(err.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_store_format(name: &str) -> PyResult<ac::StoreFormat> {
    match name {
        "allpay" => Ok(ac::StoreFormat::AllPay),
        "firstprice" => Ok(ac::StoreFormat::FirstPrice),
        "secondprice" => Ok(ac::StoreFormat::SecondPrice),
        other => Err(PyValueError::new_err(format!(
            "store format must be allpay, firstprice, or secondprice, got {other:?}"
        ))),
    }
}

fn parse_market_format(name: &str) -> PyResult<ac::AuctionFormat> {
    match name {
        "standard" => Ok(ac::AuctionFormat::Standard),
        "allpay" => Ok(ac::AuctionFormat::AllPay),
        other => Err(PyValueError::new_err(format!(
            "market format must be standard or allpay, got {other:?}"
        ))),
    }
}

/// Bidders at one store: count, low-type probability, low-type budget.
#[pyclass(frozen, name = "Scene")]
struct PyScene {
    inner: ac::AuctionScene,
}

#[pymethods]
impl PyScene {
    #[new]
    fn new(n: u32, theta: f64, b: f64) -> PyResult<Self> {
        Ok(Self { inner: ac::AuctionScene::new(n, theta, b).map_err(to_py)? })
    }

    #[getter]
    fn n(&self) -> u32 {
        self.inner.n()
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta()
    }

    #[getter]
    fn b(&self) -> f64 {
        self.inner.budget()
    }

    fn __repr__(&self) -> String {
        format!(
            "Scene(n={}, theta={}, b={})",
            self.inner.n(),
            self.inner.theta(),
            self.inner.budget()
        )
    }
}

/// Mixed bid distribution: continuous pieces plus point masses.
#[pyclass(frozen, name = "BidCdf")]
struct PyBidCdf {
    inner: ac::BidDistribution,
}

#[pymethods]
impl PyBidCdf {
    fn eval(&self, p: f64) -> f64 {
        self.inner.eval(p)
    }

    fn eval_left(&self, p: f64) -> f64 {
        self.inner.eval_left(p)
    }

    fn mass_at(&self, p: f64) -> f64 {
        self.inner.mass_at(p)
    }

    fn inverse(&self, u: f64) -> f64 {
        self.inner.inverse(u)
    }

    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    fn support(&self) -> (f64, f64) {
        self.inner.support()
    }

    fn atoms(&self) -> Vec<(f64, f64)> {
        self.inner.atoms().iter().map(|a| (a.location, a.mass)).collect()
    }

    fn segments(&self) -> Vec<(f64, f64)> {
        self.inner.segments().iter().map(|s| (s.lower, s.upper)).collect()
    }

    fn __repr__(&self) -> String {
        let (lo, hi) = self.inner.support();
        format!("BidCdf(support=[{lo}, {hi}], atoms={})", self.inner.atoms().len())
    }
}

#[pyfunction]
fn z(n: u64, x: f64) -> PyResult<f64> {
    Ok(ac::z(n, ac::PoissonRate::new(x).map_err(to_py)?))
}

/// Expectation of `f(n)` over Poisson demand, restricted to `n >= start`.
#[pyfunction]
#[pyo3(signature = (x, f, start = 0))]
fn expect_over_demand(x: f64, f: Bound<'_, PyAny>, start: u64) -> PyResult<f64> {
    let rate = ac::PoissonRate::new(x).map_err(to_py)?;
    let mut failure: Option<PyErr> = None;
    let value = ac::expect_over_demand(rate, ac::SeriesPolicy::default(), start, |n| {
        if failure.is_some() {
            return 0.0;
        }
        match f.call1((n,)).and_then(|v| v.extract::<f64>()) {
            Ok(v) => v,
            Err(err) => {
                failure = Some(err);
                0.0
            }
        }
    })
    .map_err(to_py);
    if let Some(err) = failure {
        return Err(err);
    }
    value
}

#[pyfunction]
fn classify_region<'py>(py: Python<'py>, scene: PyRef<'_, PyScene>) -> PyResult<Bound<'py, PyDict>> {
    let region = ac::classify_region(&scene.inner);
    let out = PyDict::new(py);
    out.set_item("tag", format!("{:?}", region.tag))?;
    out.set_item("pooling_threshold", region.pooling_threshold)?;
    out.set_item("slack_threshold", region.slack_threshold)?;
    Ok(out)
}

#[pyfunction]
fn standard_payoffs(scene: PyRef<'_, PyScene>) -> (f64, f64, f64) {
    let p = ac::standard_payoffs(&scene.inner);
    (p.u_h, p.u_l, p.pi)
}

#[pyfunction]
fn allpay_payoffs(scene: PyRef<'_, PyScene>) -> (f64, f64, f64) {
    let p = ac::allpay_payoffs(&scene.inner);
    (p.u_h, p.u_l, p.pi)
}

#[pyfunction]
fn solve_atom_mu(scene: PyRef<'_, PyScene>) -> PyResult<f64> {
    ac::solve_atom_mu(&scene.inner).map_err(to_py)
}

#[pyfunction]
fn atom_payoff(scene: PyRef<'_, PyScene>, mu: f64) -> PyResult<f64> {
    ac::atom_payoff(&scene.inner, mu).map_err(to_py)
}

/// Equilibrium all-pay bid distributions `(g_h, g_l)`.
#[pyfunction]
fn equilibrium_profile(scene: PyRef<'_, PyScene>) -> PyResult<(PyBidCdf, PyBidCdf)> {
    let profile = ac::equilibrium_profile(&scene.inner).map_err(to_py)?;
    Ok((PyBidCdf { inner: profile.g_h }, PyBidCdf { inner: profile.g_l }))
}

#[pyfunction]
fn firstprice_high_cdf(scene: PyRef<'_, PyScene>) -> PyResult<PyBidCdf> {
    Ok(PyBidCdf { inner: ac::firstprice_high_cdf(&scene.inner).map_err(to_py)? })
}

#[pyfunction]
fn eu_of_bid(
    p: f64,
    g_h: PyRef<'_, PyBidCdf>,
    g_l: PyRef<'_, PyBidCdf>,
    scene: PyRef<'_, PyScene>,
) -> PyResult<f64> {
    ac::eu_of_bid(p, &g_h.inner, &g_l.inner, &scene.inner).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (g_h, g_l, scene, grid_size = 100_000))]
fn best_response_gap(
    g_h: PyRef<'_, PyBidCdf>,
    g_l: PyRef<'_, PyBidCdf>,
    scene: PyRef<'_, PyScene>,
    grid_size: usize,
) -> PyResult<(f64, f64)> {
    ac::best_response_gap(&g_h.inner, &g_l.inner, &scene.inner, grid_size).map_err(to_py)
}

#[pyfunction]
fn expected_bid(dist: PyRef<'_, PyBidCdf>) -> f64 {
    ac::expected_bid(&dist.inner)
}

#[pyfunction]
fn sample_bid(dist: PyRef<'_, PyBidCdf>, u: f64) -> PyResult<f64> {
    ac::sample_bid(&dist.inner, u).map_err(to_py)
}

/// Expected utilities `(U_h, U_l)` of visiting a store with demand
/// `(x_h, x_l)` posting `format` at `reserve`.
#[pyfunction]
fn utilities(format: &str, reserve: f64, x_h: f64, x_l: f64, b: f64) -> PyResult<(f64, f64)> {
    let post = ac::MechanismPosting::new(parse_market_format(format)?, reserve).map_err(to_py)?;
    let demand = ac::DemandResponse::new(x_h, x_l).map_err(to_py)?;
    ac::utilities(&post, &demand, b).map_err(to_py)
}

#[pyfunction]
fn profit(format: &str, reserve: f64, x_h: f64, x_l: f64, b: f64) -> PyResult<f64> {
    let post = ac::MechanismPosting::new(parse_market_format(format)?, reserve).map_err(to_py)?;
    let demand = ac::DemandResponse::new(x_h, x_l).map_err(to_py)?;
    ac::profit_direct(&post, &demand, b).map_err(to_py)
}

/// Residual of `profit = 1 - z_0(x) - x_h U_h - x_l U_l`; zero everywhere.
#[pyfunction]
fn profit_identity_residual(
    format: &str,
    reserve: f64,
    x_h: f64,
    x_l: f64,
    b: f64,
) -> PyResult<f64> {
    let post = ac::MechanismPosting::new(parse_market_format(format)?, reserve).map_err(to_py)?;
    let demand = ac::DemandResponse::new(x_h, x_l).map_err(to_py)?;
    ac::lemma1_residual(&post, &demand, b).map_err(to_py)
}

/// Demand `(x_h, x_l)` attracted by a posting against market utilities.
#[pyfunction]
fn solve_demand(
    format: &str,
    reserve: f64,
    omega_h: f64,
    omega_l: f64,
    b: f64,
) -> PyResult<(f64, f64)> {
    let post = ac::MechanismPosting::new(parse_market_format(format)?, reserve).map_err(to_py)?;
    let demand = ac::solve_demand(&post, omega_h, omega_l, b).map_err(to_py)?;
    Ok((demand.x_h().value(), demand.x_l().value()))
}

#[pyfunction]
fn symmetric_equilibrium<'py>(
    py: Python<'py>,
    lam: f64,
    sigma: f64,
    b: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let params = ac::MarketParams::new(lam, sigma, b).map_err(to_py)?;
    let eq = ac::allpay_symmetric_equilibrium(&params).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("omega", eq.omega_h)?;
    out.set_item("reserve_star", eq.reserve_star)?;
    out.set_item("profit", eq.profit)?;
    Ok(out)
}

/// Best standard-format deviation profit minus the all-pay equilibrium
/// profit; nonpositive.
#[pyfunction]
fn standard_deviation_gain(lam: f64, sigma: f64, b: f64) -> PyResult<f64> {
    let params = ac::MarketParams::new(lam, sigma, b).map_err(to_py)?;
    ac::standard_deviation_check(&params).map_err(to_py)
}

#[pyfunction]
fn allpay_deviation<'py>(
    py: Python<'py>,
    lam: f64,
    sigma: f64,
    b: f64,
    r_s: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let params = ac::MarketParams::new(lam, sigma, b).map_err(to_py)?;
    let dev = ac::allpay_deviation_from_standard(&params, r_s).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("theta_hat", dev.theta_hat)?;
    out.set_item("r_hat", dev.r_hat)?;
    out.set_item("profit_gain", dev.profit_gain)?;
    out.set_item("subsidy_required", dev.subsidy_required)?;
    Ok(out)
}

fn estimate_dict<'py>(py: Python<'py>, est: &ac::SimEstimate) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("mean", est.mean)?;
    out.set_item("std_error", est.std_error)?;
    out.set_item("replications", est.replications)?;
    out.set_item("target", est.target.clone())?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (n, theta, b, format, reps = 100_000, seed = 0xA11BA1))]
fn simulate_store<'py>(
    py: Python<'py>,
    n: u32,
    theta: f64,
    b: f64,
    format: &str,
    reps: u64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let scene = ac::AuctionScene::new(n, theta, b).map_err(to_py)?;
    let config = ac::SimConfig::new(reps, seed).map_err(to_py)?;
    let report = ac::simulate_store(&scene, parse_store_format(format)?, &config).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("u_h", estimate_dict(py, &report.u_h)?)?;
    out.set_item("u_l", estimate_dict(py, &report.u_l)?)?;
    out.set_item("pi", estimate_dict(py, &report.pi)?)?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (lam, sigma, b, format, reserve, x_h, x_l, reps = 100_000, seed = 0xA11BA1))]
#[allow(clippy::too_many_arguments)]
fn simulate_market<'py>(
    py: Python<'py>,
    lam: f64,
    sigma: f64,
    b: f64,
    format: &str,
    reserve: f64,
    x_h: f64,
    x_l: f64,
    reps: u64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let params = ac::MarketParams::new(lam, sigma, b).map_err(to_py)?;
    let post = ac::MechanismPosting::new(parse_market_format(format)?, reserve).map_err(to_py)?;
    let demand = ac::DemandResponse::new(x_h, x_l).map_err(to_py)?;
    let config = ac::SimConfig::new(reps, seed).map_err(to_py)?;
    let report = ac::simulate_market(&params, &post, &demand, &config).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("u_h", estimate_dict(py, &report.u_h)?)?;
    out.set_item("u_l", estimate_dict(py, &report.u_l)?)?;
    out.set_item("profit", estimate_dict(py, &report.profit)?)?;
    out.set_item("empty_share", estimate_dict(py, &report.empty_share)?)?;
    Ok(out)
}

#[pymodule]
fn allpay_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScene>()?;
    m.add_class::<PyBidCdf>()?;
    m.add_function(wrap_pyfunction!(z, m)?)?;
    m.add_function(wrap_pyfunction!(expect_over_demand, m)?)?;
    m.add_function(wrap_pyfunction!(classify_region, m)?)?;
    m.add_function(wrap_pyfunction!(standard_payoffs, m)?)?;
    m.add_function(wrap_pyfunction!(allpay_payoffs, m)?)?;
    m.add_function(wrap_pyfunction!(solve_atom_mu, m)?)?;
    m.add_function(wrap_pyfunction!(atom_payoff, m)?)?;
    m.add_function(wrap_pyfunction!(equilibrium_profile, m)?)?;
    m.add_function(wrap_pyfunction!(firstprice_high_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(eu_of_bid, m)?)?;
    m.add_function(wrap_pyfunction!(best_response_gap, m)?)?;
    m.add_function(wrap_pyfunction!(expected_bid, m)?)?;
    m.add_function(wrap_pyfunction!(sample_bid, m)?)?;
    m.add_function(wrap_pyfunction!(utilities, m)?)?;
    m.add_function(wrap_pyfunction!(profit, m)?)?;
    m.add_function(wrap_pyfunction!(profit_identity_residual, m)?)?;
    m.add_function(wrap_pyfunction!(solve_demand, m)?)?;
    m.add_function(wrap_pyfunction!(symmetric_equilibrium, m)?)?;
    m.add_function(wrap_pyfunction!(standard_deviation_gain, m)?)?;
    m.add_function(wrap_pyfunction!(allpay_deviation, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_store, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_market, m)?)?;
    Ok(())
}
