//! skewmix: measure mixing machinery of piecewise expanding skew products.
//!
//! Subcommands: `decay` (correlation series + stretched fit), `spectrum`
//! (twisted spectral-radius sweep), `transversality` (witness table),
//! `families` (invariance verification), `cancel` (weight-reduction demo).
//! Outputs CSV/JSON artifacts into `--out`; failures emit a machine-readable
//! error JSON on stderr with a nonzero exit status.

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use skewmix::cancellation::{decay_loop, reduction_witness, weight_reduction_step, write_reduction_csv};
use skewmix::config::{self, ConfigDoc};
use skewmix::correlation::{correlation, fit_rate_table, mode_split_bound, spectrum_sweep, Observable2D};
use skewmix::dynamics::SkewProduct;
use skewmix::families::{
    random_pair, solve_parameters, verify_invariance, GridPolicy, PairParams, ParameterBundle,
    StandardFamily, StandardPair,
};
use skewmix::grid::GridDensity;
use skewmix::interval::Interval;
use skewmix::transversality::{transversality_table, SearchConfig, TableResult};
use skewmix::{Complex, Error};
use std::fs;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "skewmix", version, about = "Twisted transfer operators and mixing rates for expanding skew products")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config path.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preset (doubling_cos, tripling_cos, coboundary, markov_cos, perturbed_cos).
    #[arg(long)]
    preset: Option<String>,
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Full-circle grid resolution override.
    #[arg(long)]
    resolution: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Correlation decay series, stretched-exponential fit, and split bound.
    Decay {
        #[command(flatten)]
        common: Common,
        /// Vertical mode cap.
        #[arg(long)]
        modes: Option<i64>,
        /// Largest time n.
        #[arg(long)]
        nmax: Option<usize>,
    },
    /// Spectral-radius estimates of the twisted operators over a twist range.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Twist range "lo..hi" (integers) or a single value.
        #[arg(long)]
        b: Option<String>,
    },
    /// Transversality witness table over a δ-grid of intervals.
    Transversality {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Standard-family invariance verification.
    Families {
        #[command(flatten)]
        common: Common,
    },
    /// Weight-reduction demonstration (single step + decay loop).
    Cancel {
        #[command(flatten)]
        common: Common,
        /// Twist frequency b.
        #[arg(long)]
        b: Option<f64>,
        /// Rounds of the decay loop.
        #[arg(long)]
        k: Option<usize>,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            let payload = json!({"error": format!("{e}"), "kind": error_kind(&e)});
            eprintln!("{payload}");
            1
        }
    };
    std::process::exit(code);
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidMap(_) | Error::InvalidRoof(_) => "invalid-input",
        Error::Resolution { .. } => "resolution",
        Error::InfeasibleWithinBudget(_) => "infeasible",
        Error::BelowB0 { .. } => "below-b0",
        Error::CannotReduce(_) => "cannot-reduce",
        Error::BranchCapExceeded { .. } | Error::Resource(_) => "resource",
        Error::Config(_) | Error::Json(_) => "config",
        _ => "runtime",
    }
}

fn load_doc(common: &Common) -> Result<ConfigDoc, Error> {
    let mut doc = match (&common.config, &common.preset) {
        (Some(path), _) => config::load(path)?,
        (None, Some(name)) => config::preset_doc(name)?,
        (None, None) => {
            return Err(Error::Config("pass --config PATH or --preset NAME".into()))
        }
    };
    if let Some(res) = common.resolution {
        doc.experiment.resolution = res;
    }
    Ok(doc)
}

fn prepare(common: &Common) -> Result<(ConfigDoc, SkewProduct), Error> {
    let doc = load_doc(common)?;
    let skew = config::build_skew(&doc)?;
    fs::create_dir_all(&common.out)?;
    Ok((doc, skew))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Decay { common, modes, nmax } => {
            let (mut doc, skew) = prepare(&common)?;
            if let Some(m) = modes {
                doc.experiment.modes = m;
            }
            if let Some(n) = nmax {
                doc.experiment.nmax = n;
            }
            let exp = &doc.experiment;
            let phi = Observable2D::cos_xy();
            let series = correlation(&skew, &phi, &phi, exp.nmax, exp.resolution, exp.modes)?;
            let rates = fit_rate_table(&skew, 2, exp.resolution, 24)?;
            let mut csv = String::from("n,cor,bound\n");
            for (n, v) in series.values.iter().enumerate() {
                let bound =
                    mode_split_bound(&skew, &phi, &phi, n, &rates, exp.modes, exp.resolution)?;
                csv.push_str(&format!("{n},{v},{bound}\n"));
            }
            fs::write(common.out.join("decay.csv"), csv)?;
            let fit = series.fit.as_ref();
            let payload = json!({
                "gamma3": fit.map(|f| f.gamma3),
                "c": fit.map(|f| f.c),
                "r_squared": fit.map(|f| f.r_squared),
                "points_used": fit.map(|f| f.points_used),
                "gamma2": rates.gamma2,
                "nmax": exp.nmax,
                "resolution": exp.resolution,
                "modes": exp.modes,
            });
            fs::write(common.out.join("fit.json"), serde_json::to_string_pretty(&payload)?)?;
            println!("decay: wrote decay.csv and fit.json (gamma3 = {:?})", fit.map(|f| f.gamma3));
            Ok(())
        }
        Command::Spectrum { common, b } => {
            let (doc, skew) = prepare(&common)?;
            let exp = &doc.experiment;
            let bs: Vec<f64> = match b {
                Some(spec) => parse_range(&spec)?,
                None => (exp.b_range[0]..=exp.b_range[1]).map(|k| k as f64).collect(),
            };
            let estimates = spectrum_sweep(&skew, &bs, exp.resolution, 220, 3)?;
            fs::write(
                common.out.join("spectrum.json"),
                serde_json::to_string_pretty(&estimates)?,
            )?;
            for est in &estimates {
                println!(
                    "b = {:>7.2}: spectral radius ~ {:.6} ({:?})",
                    est.b, est.estimate, est.verdict
                );
            }
            Ok(())
        }
        Command::Transversality { common, delta } => {
            let (doc, skew) = prepare(&common)?;
            let delta = delta.unwrap_or(doc.experiment.delta.max(0.1));
            let cfg = SearchConfig::default();
            let result = transversality_table(&skew, delta, &cfg)?;
            let payload = match &result {
                TableResult::Transversal(w) => json!({
                    "verdict": "transversal",
                    "n_delta": w.n_delta,
                    "k_delta": w.k_delta,
                    "C1": w.c1,
                    "Delta": w.delta,
                    "M": w.least_domain,
                    "b0": w.b0(),
                    "pairs": w.pairs.iter().map(|p| json!({
                        "word1": p.word1, "word2": p.word2,
                        "I_star": [p.overlap.lo, p.overlap.hi],
                        "C1": p.c1, "Delta": p.delta, "M": p.least_domain,
                    })).collect::<Vec<_>>(),
                }),
                TableResult::CohomologySuspected { failed_interval, depth_cap } => json!({
                    "verdict": "cohomology-suspected",
                    "failed_interval": [failed_interval.lo, failed_interval.hi],
                    "depth_cap": depth_cap,
                }),
            };
            fs::write(common.out.join("witness.json"), serde_json::to_string_pretty(&payload)?)?;
            println!("transversality: {}", payload["verdict"].as_str().unwrap_or("?"));
            Ok(())
        }
        Command::Families { common } => {
            let (doc, skew) = prepare(&common)?;
            let exp = &doc.experiment;
            let bundle = match solve_parameters(&skew.base, &skew.roof) {
                Ok(b) => b,
                Err(_) => ParameterBundle::manual(exp.a, 2, exp.eps0, exp.boundary_b, &skew.base),
            };
            let params = PairParams::new(exp.a, exp.b.min(16.0), exp.eps0, skew.base.alpha);
            let pair = random_pair(
                Interval::new(0.21, 0.21 + exp.eps0 * 0.6),
                params,
                7,
                &GridPolicy::default(),
            );
            let family = StandardFamily::singleton(pair, exp.boundary_b);
            let n = bundle.n.min(3).max(1);
            let report = verify_invariance(&family, n, &skew, &bundle, 10, &GridPolicy::default())?;
            fs::write(
                common.out.join("families_report.json"),
                serde_json::to_string_pretty(&report)?,
            )?;
            println!(
                "families: pass = {} (weight dev {:.3e}, H {:.4} <= {:.4}, arg {:.4} <= {:.4})",
                report.pass,
                report.weight_deviation,
                report.max_child_h,
                report.h_bound,
                report.max_child_arg,
                report.arg_bound
            );
            Ok(())
        }
        Command::Cancel { common, b, k } => {
            let (doc, skew) = prepare(&common)?;
            let exp = &doc.experiment;
            let b = b.unwrap_or(exp.b);
            let params = PairParams::new(exp.a, b, exp.eps0, skew.base.alpha);
            let cfg = SearchConfig { depth_cap: 9, samples: 128, ..SearchConfig::default() };
            let witness = reduction_witness(&skew, exp.delta, exp.a, &cfg)?;
            let pair = StandardPair::from_fns(
                Interval::new(0.31, 0.31 + exp.eps0 * 0.66),
                4096,
                params,
                |x| 1.0 + 0.1 * (std::f64::consts::TAU * x).sin(),
                |x| 0.2 * x,
            )?;
            let family = StandardFamily::singleton(pair, exp.boundary_b);
            let policy = GridPolicy::default();
            let restore = GridPolicy::modulus_only(16);
            let (_, report) =
                weight_reduction_step(&family, &skew, exp.delta, &witness, &policy, &restore)?;
            fs::write(
                common.out.join("reduction.json"),
                serde_json::to_string_pretty(&report)?,
            )?;
            println!(
                "cancel: gamma1 = {:.6e} over depth {} ({} cancelled, {} skipped)",
                report.gamma1, report.total_depth, report.cancelled, report.skipped
            );
            if let Some(k) = k {
                let g0 = GridDensity::full_circle_from_fn(exp.resolution, |x| {
                    Complex::new(1.0 + 0.3 * (std::f64::consts::TAU * x).sin(), 0.0)
                })?;
                let loop_report = decay_loop(
                    &g0, &skew, params, k, exp.delta, &witness, &policy, &restore,
                    exp.resolution,
                )?;
                let mut csv = Vec::new();
                write_reduction_csv(&mut csv, &loop_report)?;
                fs::write(common.out.join("reduction.csv"), csv)?;
                println!(
                    "decay loop: total gamma = {:.6e} over {} rounds",
                    loop_report.total_gamma,
                    loop_report.checkpoints.len()
                );
            }
            Ok(())
        }
    }
}

fn parse_range(spec: &str) -> Result<Vec<f64>, Error> {
    if let Some((lo, hi)) = spec.split_once("..") {
        let lo: i64 = lo.trim().parse().map_err(|_| Error::Config(format!("bad range '{spec}'")))?;
        let hi: i64 = hi.trim().parse().map_err(|_| Error::Config(format!("bad range '{spec}'")))?;
        Ok((lo..=hi).map(|k| k as f64).collect())
    } else {
        let v: f64 = spec.trim().parse().map_err(|_| Error::Config(format!("bad twist '{spec}'")))?;
        Ok(vec![v])
    }
}
