use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use allpay_core::{
    allpay_deviation_from_standard, allpay_payoffs, allpay_symmetric_equilibrium, classify_region,
    equilibrium_profile, lemma1_residual, profit_direct, simulate_market, simulate_store,
    solve_atom_mu, standard_deviation_check, standard_payoffs, utilities, z, Agreement,
    AuctionFormat, AuctionScene, CoreError, DemandResponse, MarketParams, MechanismPosting,
    PoissonRate, RegionTag, SimConfig, SimEstimate, StoreFormat,
};

use crate::manifest::RunManifest;

const DEFAULT_SEED: u64 = 0xA11BA1;

#[derive(Debug)]
pub enum CliError {
    Core(CoreError),
    Io(std::io::Error),
    Usage(String),
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        CliError::Core(err)
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Io(err)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
            CliError::Usage(msg) => write!(f, "{msg}"),
        }
    }
}

/// 1 = usage or domain error, 2 = numerical or I/O failure; statistical
/// breaches exit 3 from the command itself.
pub fn exit_code(err: &CliError) -> u8 {
    match err {
        CliError::Usage(_) => 1,
        CliError::Core(CoreError::Truncation { .. }) | CliError::Core(CoreError::NonConvergence(_)) => 2,
        CliError::Core(_) => 1,
        CliError::Io(_) => 2,
    }
}

fn write_output(out: &Option<PathBuf>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(CliError::Io),
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn json_bytes(value: &serde_json::Value) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    text.into_bytes()
}

/// 17 significant digits; round-trips every finite f64.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Args, Debug, Serialize)]
pub struct EquilibriumArgs {
    /// Bidders at the store
    #[arg(long)]
    pub n: u32,
    /// Probability a rival bidder is budget-capped
    #[arg(long)]
    pub theta: f64,
    /// Common budget of capped bidders
    #[arg(long)]
    pub b: f64,
    /// Write the JSON report here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn equilibrium(args: EquilibriumArgs) -> Result<u8, CliError> {
    let scene = AuctionScene::new(args.n, args.theta, args.b)?;
    let region = classify_region(&scene);
    let profile = equilibrium_profile(&scene)?;
    let mu = if region.tag == RegionTag::R2 { Some(solve_atom_mu(&scene)?) } else { None };
    let allpay = allpay_payoffs(&scene);
    let standard = standard_payoffs(&scene);
    let manifest = RunManifest::new("equilibrium", None, &args);
    let report = json!({
        "manifest": manifest,
        "region": region,
        "mu": mu,
        "supports": {
            "g_h": profile.g_h.support(),
            "g_l": profile.g_l.support(),
        },
        "atoms": {
            "g_h": profile.g_h.atoms(),
            "g_l": profile.g_l.atoms(),
        },
        "payoffs": { "allpay": allpay, "standard": standard },
        "format_comparison": {
            "u_h_standard_premium": standard.u_h - allpay.u_h,
            "u_l_standard_premium": standard.u_l - allpay.u_l,
            "profit_allpay_premium": allpay.pi - standard.pi,
        },
    });
    write_output(&args.out, &json_bytes(&report))?;
    Ok(0)
}

#[derive(Args, Debug, Serialize)]
pub struct BidcdfArgs {
    #[arg(long)]
    pub n: u32,
    #[arg(long)]
    pub theta: f64,
    #[arg(long)]
    pub b: f64,
    /// Uniform sample points across the union of both supports
    #[arg(long, default_value_t = 201)]
    pub points: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn bidcdf(args: BidcdfArgs) -> Result<u8, CliError> {
    if args.points < 2 {
        return Err(CliError::Usage(format!("need at least 2 points, got {}", args.points)));
    }
    let scene = AuctionScene::new(args.n, args.theta, args.b)?;
    let profile = equilibrium_profile(&scene)?;
    let (gl_lo, gl_hi) = profile.g_l.support();
    let (gh_lo, gh_hi) = profile.g_h.support();
    let lo = gl_lo.min(gh_lo);
    let hi = gl_hi.max(gh_hi);

    let mut grid: Vec<f64> = if hi > lo {
        (0..args.points)
            .map(|i| lo + (hi - lo) * i as f64 / (args.points - 1) as f64)
            .collect()
    } else {
        vec![lo]
    };
    // Always include the points that define the shape, wherever the uniform
    // grid happens to fall.
    for dist in [&profile.g_l, &profile.g_h] {
        for seg in dist.segments() {
            grid.push(seg.lower);
            grid.push(seg.upper);
        }
        for atom in dist.atoms() {
            grid.push(atom.location);
        }
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let manifest = RunManifest::new("bidcdf", None, &args);
    let mut out = String::new();
    out.push_str(&format!(
        "# manifest {}\n",
        serde_json::to_string(&manifest).expect("manifest serializes")
    ));
    out.push_str("bid,g_l,g_h,atom_l,atom_h\n");
    for bid in grid {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            num(bid),
            num(profile.g_l.eval(bid)),
            num(profile.g_h.eval(bid)),
            num(profile.g_l.mass_at(bid)),
            num(profile.g_h.mass_at(bid)),
        ));
    }
    write_output(&args.out, out.as_bytes())?;
    Ok(0)
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    /// Store runs take allpay | firstprice | secondprice; market runs take
    /// standard | allpay
    #[arg(long)]
    pub format: String,
    /// Store mode: bidders at the store (market mode when absent)
    #[arg(long)]
    pub n: Option<u32>,
    /// Store mode: probability a rival is budget-capped
    #[arg(long)]
    pub theta: Option<f64>,
    /// Budget of capped buyers
    #[arg(long)]
    pub b: f64,
    /// Market mode: buyers per seller
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Market mode: share of budget-capped buyers
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Market mode: posted reserve
    #[arg(long, default_value_t = 0.0)]
    pub r: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub reps: u64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Shifts every analytic reference; exists to prove the breach detector
    /// trips (exit 3).
    #[arg(long, hide = true, default_value_t = 0.0)]
    pub bias_analytic: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn worst(agreements: &[Agreement]) -> Agreement {
    let mut acc = Agreement::Pass;
    for a in agreements {
        acc = match (acc, a) {
            (_, Agreement::Fail) | (Agreement::Fail, _) => Agreement::Fail,
            (_, Agreement::Flag) | (Agreement::Flag, _) => Agreement::Flag,
            _ => Agreement::Pass,
        };
    }
    acc
}

fn target_row(estimate: &SimEstimate, analytic: f64) -> (serde_json::Value, Agreement) {
    let agreement = estimate.agreement(analytic);
    let zs = estimate.z_score(analytic);
    let row = json!({
        "target": estimate.target,
        "analytic": analytic,
        "estimate": estimate.mean,
        "std_error": estimate.std_error,
        "z_score": if zs.is_finite() { json!(zs) } else { json!("inf") },
        "agreement": agreement,
    });
    (row, agreement)
}

pub fn simulate(args: SimulateArgs) -> Result<u8, CliError> {
    let config = SimConfig::new(args.reps, args.seed)?;
    let bias = args.bias_analytic;
    let (mode, pairs): (&str, Vec<(SimEstimate, f64)>) = if let Some(n) = args.n {
        let theta = args
            .theta
            .ok_or_else(|| CliError::Usage("store mode needs --theta".into()))?;
        let format = match args.format.as_str() {
            "allpay" => StoreFormat::AllPay,
            "firstprice" => StoreFormat::FirstPrice,
            "secondprice" => StoreFormat::SecondPrice,
            other => {
                return Err(CliError::Usage(format!(
                    "store format must be allpay, firstprice, or secondprice, got {other}"
                )))
            }
        };
        let scene = AuctionScene::new(n, theta, args.b)?;
        let exact = match format {
            StoreFormat::AllPay => allpay_payoffs(&scene),
            _ => standard_payoffs(&scene),
        };
        let report = simulate_store(&scene, format, &config)?;
        (
            "store",
            vec![
                (report.u_h, exact.u_h + bias),
                (report.u_l, exact.u_l + bias),
                (report.pi, exact.pi + bias),
            ],
        )
    } else if let Some(lambda) = args.lambda {
        let sigma = args
            .sigma
            .ok_or_else(|| CliError::Usage("market mode needs --sigma".into()))?;
        let format = match args.format.as_str() {
            "standard" => AuctionFormat::Standard,
            "allpay" => AuctionFormat::AllPay,
            other => {
                return Err(CliError::Usage(format!(
                    "market format must be standard or allpay, got {other}"
                )))
            }
        };
        if args.r > args.b {
            return Err(CliError::Usage(format!(
                "reserve {} above budget {} prices capped buyers out; analytic references assume r <= b",
                args.r, args.b
            )));
        }
        let params = MarketParams::new(lambda, sigma, args.b)?;
        let post = MechanismPosting::new(format, args.r)?;
        let demand = DemandResponse::from_total(lambda, sigma)?;
        let (u_h, u_l) = utilities(&post, &demand, args.b)?;
        let profit = profit_direct(&post, &demand, args.b)?;
        let empty = z(0, PoissonRate::new(demand.total())?);
        let report = simulate_market(&params, &post, &demand, &config)?;
        (
            "market",
            vec![
                (report.u_h, u_h + bias),
                (report.u_l, u_l + bias),
                (report.profit, profit + bias),
                (report.empty_share, empty + bias),
            ],
        )
    } else {
        return Err(CliError::Usage("pass --n for a store run or --lambda for a market run".into()));
    };

    let mut rows = Vec::new();
    let mut agreements = Vec::new();
    for (estimate, analytic) in &pairs {
        let (row, agreement) = target_row(estimate, *analytic);
        rows.push(row);
        agreements.push(agreement);
    }
    let status = worst(&agreements);
    let manifest = RunManifest::new("simulate", Some(args.seed), &args);
    let report = json!({
        "manifest": manifest,
        "mode": mode,
        "targets": rows,
        "status": status,
    });
    write_output(&args.out, &json_bytes(&report))?;
    Ok(if status == Agreement::Fail { 3 } else { 0 })
}

#[derive(Args, Debug, Serialize)]
pub struct MarketArgs {
    /// Buyers per seller
    #[arg(long)]
    pub lambda: f64,
    /// Share of budget-capped buyers
    #[arg(long)]
    pub sigma: f64,
    /// Budget of capped buyers
    #[arg(long)]
    pub b: f64,
    /// Reserve of the hypothetical standard market probed by the all-pay
    /// deviation construction
    #[arg(long, default_value_t = 0.3)]
    pub r: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn market(args: MarketArgs) -> Result<u8, CliError> {
    let params = MarketParams::new(args.lambda, args.sigma, args.b)?;
    let manifest = RunManifest::new("market", None, &args);
    match allpay_symmetric_equilibrium(&params) {
        Err(CoreError::HypothesisViolated(msg)) => {
            eprintln!("warning: {msg}; reporting status only");
            let report = json!({
                "manifest": manifest,
                "status": "hypothesis_violated",
                "equilibrium": serde_json::Value::Null,
                "standard_deviation_gain": serde_json::Value::Null,
                "allpay_deviation": serde_json::Value::Null,
            });
            write_output(&args.out, &json_bytes(&report))?;
            Ok(0)
        }
        Err(other) => Err(other.into()),
        Ok(eq) => {
            let scan_gain = standard_deviation_check(&params)?;
            // Single-type markets leave no cross-type margin to exploit; the
            // deviation construction is skipped rather than failed.
            let deviation = match allpay_deviation_from_standard(&params, args.r) {
                Ok(dev) => serde_json::to_value(dev).expect("report serializes"),
                Err(CoreError::Degenerate(_)) => serde_json::Value::Null,
                Err(other) => return Err(other.into()),
            };
            let report = json!({
                "manifest": manifest,
                "status": "ok",
                "equilibrium": {
                    "omega": eq.omega_h,
                    "reserve_star": eq.reserve_star,
                    "profit": eq.profit,
                },
                "standard_deviation_gain": scan_gain,
                "allpay_deviation": deviation,
            });
            write_output(&args.out, &json_bytes(&report))?;
            Ok(0)
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct DeviateArgs {
    #[arg(long)]
    pub lambda: f64,
    #[arg(long)]
    pub sigma: f64,
    #[arg(long)]
    pub b: f64,
    /// Reserve posted by the standard market being deviated against
    #[arg(long)]
    pub r: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn deviate(args: DeviateArgs) -> Result<u8, CliError> {
    let params = MarketParams::new(args.lambda, args.sigma, args.b)?;
    let report = allpay_deviation_from_standard(&params, args.r)?;
    let manifest = RunManifest::new("deviate", None, &args);
    let body = json!({ "manifest": manifest, "report": report });
    write_output(&args.out, &json_bytes(&body))?;
    Ok(0)
}

#[derive(Args, Debug, Serialize)]
pub struct SweepArgs {
    /// Each axis takes a single value or start:stop:step (inclusive)
    #[arg(long, default_value = "2")]
    pub n: String,
    #[arg(long, default_value = "0.5")]
    pub theta: String,
    #[arg(long, default_value = "0.5")]
    pub b: String,
    #[arg(long, default_value = "1.0")]
    pub lambda: String,
    #[arg(long, default_value = "0.3")]
    pub sigma: String,
    #[arg(long, default_value = "0.0")]
    pub r: String,
    /// CSV destination; a .manifest.json sidecar lands next to it
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_f64_axis(spec: &str, name: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let parse = |s: &str| -> Result<f64, CliError> {
        s.parse::<f64>()
            .map_err(|_| CliError::Usage(format!("axis --{name}: cannot parse {s:?} as a number")))
    };
    match parts.as_slice() {
        [single] => Ok(vec![parse(single)?]),
        [start, stop, step] => {
            let (start, stop, step) = (parse(start)?, parse(stop)?, parse(step)?);
            if !(step > 0.0) {
                return Err(CliError::Usage(format!("axis --{name}: step must be positive")));
            }
            if start > stop {
                return Ok(Vec::new());
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|i| start + step * i as f64).collect())
        }
        _ => Err(CliError::Usage(format!(
            "axis --{name}: expected a value or start:stop:step, got {spec:?}"
        ))),
    }
}

fn parse_u32_axis(spec: &str, name: &str) -> Result<Vec<u32>, CliError> {
    parse_f64_axis(spec, name)?
        .into_iter()
        .map(|v| {
            if v.fract() == 0.0 && (0.0..=u32::MAX as f64).contains(&v) {
                Ok(v as u32)
            } else {
                Err(CliError::Usage(format!("axis --{name}: {v} is not a valid count")))
            }
        })
        .collect()
}

const SWEEP_HEADER: &str = "n,theta,b,lambda,sigma,r,region,mu,\
allpay_u_h,allpay_u_l,allpay_pi,standard_u_h,standard_u_l,standard_pi,\
allpay_surplus_residual,standard_surplus_residual,\
market_allpay_u_h,market_allpay_u_l,market_allpay_profit,\
market_standard_u_h,market_standard_u_l,market_standard_profit,\
allpay_profit_identity_residual,standard_profit_identity_residual";

fn sweep_row(n: u32, theta: f64, b: f64, lambda: f64, sigma: f64, r: f64) -> Result<String, CliError> {
    let scene = AuctionScene::new(n, theta, b)?;
    let region = classify_region(&scene);
    let mu = if region.tag == RegionTag::R2 { Some(solve_atom_mu(&scene)?) } else { None };
    let allpay = allpay_payoffs(&scene);
    let standard = standard_payoffs(&scene);
    let demand = DemandResponse::from_total(lambda, sigma)?;
    let post_s = MechanismPosting::new(AuctionFormat::Standard, r)?;
    let post_a = MechanismPosting::new(AuctionFormat::AllPay, r)?;
    let (m_sh, m_sl) = utilities(&post_s, &demand, b)?;
    let (m_ah, m_al) = utilities(&post_a, &demand, b)?;
    let m_spi = profit_direct(&post_s, &demand, b)?;
    let m_api = profit_direct(&post_a, &demand, b)?;
    let res_s = lemma1_residual(&post_s, &demand, b)?;
    let res_a = lemma1_residual(&post_a, &demand, b)?;
    Ok([
        n.to_string(),
        num(theta),
        num(b),
        num(lambda),
        num(sigma),
        num(r),
        format!("{:?}", region.tag),
        mu.map(num).unwrap_or_default(),
        num(allpay.u_h),
        num(allpay.u_l),
        num(allpay.pi),
        num(standard.u_h),
        num(standard.u_l),
        num(standard.pi),
        num(allpay.surplus_residual(&scene)),
        num(standard.surplus_residual(&scene)),
        num(m_ah),
        num(m_al),
        num(m_api),
        num(m_sh),
        num(m_sl),
        num(m_spi),
        num(res_a),
        num(res_s),
    ]
    .join(","))
}

pub fn sweep(args: SweepArgs) -> Result<u8, CliError> {
    let ns = parse_u32_axis(&args.n, "n")?;
    let thetas = parse_f64_axis(&args.theta, "theta")?;
    let bs = parse_f64_axis(&args.b, "b")?;
    let lambdas = parse_f64_axis(&args.lambda, "lambda")?;
    let sigmas = parse_f64_axis(&args.sigma, "sigma")?;
    let rs = parse_f64_axis(&args.r, "r")?;

    let mut combos = Vec::new();
    for &n in &ns {
        for &theta in &thetas {
            for &b in &bs {
                for &lambda in &lambdas {
                    for &sigma in &sigmas {
                        for &r in &rs {
                            combos.push((n, theta, b, lambda, sigma, r));
                        }
                    }
                }
            }
        }
    }
    // Grid points are independent; the indexed collect keeps row order fixed.
    let rows: Vec<String> = combos
        .par_iter()
        .map(|&(n, theta, b, lambda, sigma, r)| sweep_row(n, theta, b, lambda, sigma, r))
        .collect::<Result<_, _>>()?;

    let manifest = RunManifest::new("sweep", None, &args);
    let manifest_json = serde_json::to_string(&manifest).expect("manifest serializes");
    let mut out = String::new();
    out.push_str(&format!("# manifest {manifest_json}\n"));
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    std::fs::write(&args.out, out.as_bytes())?;

    let mut sidecar = args.out.as_os_str().to_owned();
    sidecar.push(".manifest.json");
    let mut manifest_pretty =
        serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    manifest_pretty.push('\n');
    std::fs::write(PathBuf::from(sidecar), manifest_pretty.as_bytes())?;
    Ok(0)
}
