//! The `mrt` command line.

use std::ffi::OsString;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::beta::{BetaEngine, MultiVariant};
use crate::curve::{certify, construct_curve, verify_connected, SegmentKind};
use crate::dyadic::CubeTree;
use crate::error::{invalid, Error, Result};
use crate::io::{load_measure, to_json, Format};
use crate::jones::{jones_at_atoms, square_sum, JonesVariant, SquareSum};
use crate::measure::DiscreteMeasure;
use crate::nets::{fit_alphas, nets_from_points, validate_nets};
use crate::rectify::{decompose_estimate, DecomposeConfig};

#[derive(Debug, Parser)]
#[command(
    name = "mrt",
    version,
    about = "Multiscale beta numbers, Jones functions and traveling-salesman curves for discrete measures"
)]
pub struct Cli {
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true, env = "MRT_THREADS")]
    pub threads: Option<usize>,
    /// Write the report here instead of standard output.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Recorded in the report; every computation is deterministic.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Input {
    /// Measure file (csv or json).
    pub input: PathBuf,
    /// Input format; guessed from the extension when absent.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaChoice {
    /// `beta_p(mu, 3Q)`.
    Best,
    Star,
    StarStar,
    StarC,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum JonesChoice {
    Star,
    Tilde,
    StarStar,
    StarC,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "snake_case", tag = "command")]
pub enum Command {
    /// Beta numbers of every cube with mass in its triple.
    Beta {
        #[command(flatten)]
        #[serde(flatten)]
        input: Input,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, value_enum, default_value_t = BetaChoice::Star)]
        variant: BetaChoice,
        /// Density level for the star-c variant.
        #[arg(long, default_value_t = 0.1)]
        c: f64,
        #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
        k_min: i32,
        #[arg(long, default_value_t = 4, allow_negative_numbers = true)]
        k_max: i32,
    },
    /// Jones functions at every atom.
    Jones {
        #[command(flatten)]
        #[serde(flatten)]
        input: Input,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, value_enum, default_value_t = JonesChoice::Star)]
        variant: JonesChoice,
        #[arg(long, default_value_t = 0.1)]
        c: f64,
        /// Finest scale; per-atom default when absent.
        #[arg(long)]
        k_max: Option<i32>,
    },
    /// Square sums of set betas and of beta**.
    Tst {
        #[command(flatten)]
        #[serde(flatten)]
        input: Input,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
        k_min: i32,
        #[arg(long, default_value_t = 6, allow_negative_numbers = true)]
        k_max: i32,
    },
    /// Nets through the atoms, the curve construction and its certificate.
    Curve {
        #[command(flatten)]
        #[serde(flatten)]
        input: Input,
        #[arg(long, default_value_t = 6)]
        depth: usize,
        /// Top scale; defaults to the support diameter.
        #[arg(long)]
        r0: Option<f64>,
        #[arg(long, default_value_t = 1.0 / 32.0)]
        epsilon: f64,
    },
    /// Rectifiable and unrectifiable candidates with curves through the former.
    Decompose {
        #[command(flatten)]
        #[serde(flatten)]
        input: Input,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.03, 0.01])]
        c: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [1.0])]
        n: Vec<f64>,
        /// Localization parameters as fractions of the top-cube mass.
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.1])]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 8)]
        k_max: i32,
    },
    /// Net, tree and ledger validators.
    Validate {
        #[command(flatten)]
        #[serde(flatten)]
        input: Input,
        #[arg(long, default_value_t = 6)]
        depth: usize,
        #[arg(long)]
        r0: Option<f64>,
        /// Constant the nets are validated against.
        #[arg(long, default_value_t = 2.0)]
        c_star: f64,
    },
}

/// Exit status and captured streams of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

struct Report {
    body: Value,
    failed: bool,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            return if code == 0 {
                Outcome {
                    code,
                    stdout: text,
                    stderr: String::new(),
                }
            } else {
                Outcome {
                    code,
                    stdout: String::new(),
                    stderr: error_object("usage", &text),
                }
            };
        }
    };
    run_cli(&cli)
}

pub fn run_cli(cli: &Cli) -> Outcome {
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => return failure(3, "internal", &e.to_string()),
    };
    let result = catch_unwind(AssertUnwindSafe(|| pool.install(|| execute(cli))));
    match result {
        Ok(Ok(report)) => {
            let mut text = to_json(&report.body);
            text.push('\n');
            let code = if report.failed { 1 } else { 0 };
            match &cli.output {
                Some(path) => match std::fs::write(path, &text) {
                    Ok(()) => Outcome {
                        code,
                        stdout: String::new(),
                        stderr: String::new(),
                    },
                    Err(e) => failure(2, "input", &format!("{}: {e}", path.display())),
                },
                None => Outcome {
                    code,
                    stdout: text,
                    stderr: String::new(),
                },
            }
        }
        Ok(Err(e)) => {
            let (code, kind) = classify(&e);
            failure(code, kind, &e.to_string())
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "internal assertion".into());
            failure(3, "internal", &msg)
        }
    }
}

fn classify(e: &Error) -> (i32, &'static str) {
    match e {
        Error::Hypothesis(_) => (1, "hypothesis"),
        Error::Construction(_) => (3, "construction"),
        Error::InvalidParameter { .. } => (2, "parameter"),
        Error::DimensionMismatch { .. } => (2, "dimension"),
        _ => (2, "input"),
    }
}

fn error_object(kind: &str, message: &str) -> String {
    let mut s = to_json(&json!({ "error": { "kind": kind, "message": message } }));
    s.push('\n');
    s
}

fn failure(code: i32, kind: &str, message: &str) -> Outcome {
    Outcome {
        code,
        stdout: String::new(),
        stderr: error_object(kind, message),
    }
}

fn config(cli: &Cli) -> Value {
    let mut v = serde_json::to_value(&cli.command).expect("config serializes");
    v["seed"] = json!(cli.seed);
    v
}

fn load(input: &Input) -> Result<DiscreteMeasure> {
    load_measure(&input.input, input.format)
}

fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(invalid("p", format!("{p} is not a finite exponent >= 1")))
    }
}

fn check_range(k_min: i32, k_max: i32) -> Result<()> {
    if k_min > k_max {
        Err(invalid("k_min", "must not exceed k_max"))
    } else {
        Ok(())
    }
}

fn execute(cli: &Cli) -> Result<Report> {
    let cfg = config(cli);
    match &cli.command {
        Command::Beta {
            input,
            p,
            variant,
            c,
            k_min,
            k_max,
        } => {
            check_p(*p)?;
            check_range(*k_min, *k_max)?;
            let mu = load(input)?;
            let engine = BetaEngine::new(&mu);
            let mut cubes = Vec::new();
            for k in *k_min..=*k_max {
                let occupied = engine.occupied(k);
                let values = occupied
                    .par_iter()
                    .map(|q| match variant {
                        BetaChoice::Best => engine.triple_best(q, *p),
                        BetaChoice::Star => engine.multi(q, *p, MultiVariant::Star),
                        BetaChoice::StarStar => engine.multi(q, *p, MultiVariant::StarStar),
                        BetaChoice::StarC => engine.multi(q, *p, MultiVariant::StarC(*c)),
                    })
                    .collect::<Result<Vec<_>>>()?;
                cubes.extend(values);
            }
            Ok(Report {
                body: json!({ "config": cfg, "cubes": cubes }),
                failed: false,
            })
        }
        Command::Jones {
            input,
            p,
            variant,
            c,
            k_max,
        } => {
            check_p(*p)?;
            let mu = load(input)?;
            let engine = BetaEngine::new(&mu);
            let variant = match variant {
                JonesChoice::Star => JonesVariant::Star,
                JonesChoice::Tilde => JonesVariant::Tilde,
                JonesChoice::StarStar => JonesVariant::StarStar,
                JonesChoice::StarC => JonesVariant::StarC(*c),
            };
            let reports = jones_at_atoms(&engine, *p, *k_max, variant)?;
            Ok(Report {
                body: json!({ "config": cfg, "reports": reports }),
                failed: false,
            })
        }
        Command::Tst {
            input,
            p,
            k_min,
            k_max,
        } => {
            check_p(*p)?;
            check_range(*k_min, *k_max)?;
            let mu = load(input)?;
            let set = square_sum(&SquareSum::Set {
                points: mu.points(),
                scales: *k_min..=*k_max,
            })?;
            let star_star = square_sum(&SquareSum::star_star(&mu, *k_min..=*k_max, *p))?;
            Ok(Report {
                body: json!({
                    "config": cfg,
                    "set_sum": { "total": set.total, "by_scale": set.by_scale() },
                    "star_star_sum": { "total": star_star.total, "by_scale": star_star.by_scale() },
                }),
                failed: false,
            })
        }
        Command::Curve {
            input,
            depth,
            r0,
            epsilon,
        } => {
            let mu = load(input)?;
            let r0 = resolve_r0(&mu, *r0)?;
            let nets = nets_from_points(mu.points(), r0, *depth)?;
            let alphas = fit_alphas(&nets, None)?;
            let construction = construct_curve(&nets, &alphas, *epsilon)?;
            let cert = certify(&construction);
            let curve = construction.curve();
            let connected = verify_connected(&curve).connected;
            let segments: Vec<Value> = curve
                .segments
                .iter()
                .map(|s| {
                    let kind = match s.kind {
                        SegmentKind::Edge => "edge",
                        SegmentKind::Bridge => "bridge",
                        SegmentKind::Connector => "connector",
                    };
                    json!({ "a": s.a, "b": s.b, "kind": kind, "gen": s.gen })
                })
                .collect();
            let failed = !(cert.passed() && connected);
            Ok(Report {
                body: json!({
                    "config": cfg,
                    "r0": r0,
                    "vertices": curve.vertices,
                    "segments": segments,
                    "length": { "naive": cert.length_naive, "dedup": cert.length_dedup },
                    "accounting": construction.accounting,
                    "certificate": {
                        "passed": cert.passed(),
                        "connected": connected,
                        "cores": cert.cores,
                        "core_overlaps": cert.core_overlaps.len(),
                        "ledger_violations": cert.ledger_violations,
                        "window_violations": cert.window_violations,
                        "budget": cert.budget,
                        "c_hat": cert.c_hat,
                    },
                }),
                failed,
            })
        }
        Command::Decompose {
            input,
            p,
            c,
            n,
            eps,
            k_max,
        } => {
            let mu = load(input)?;
            let config = DecomposeConfig {
                p: *p,
                c_ladder: c.clone(),
                n_ladder: n.clone(),
                eps_ladder: eps.clone(),
                k_max: *k_max,
            };
            let report = decompose_estimate(&mu, &config)?;
            Ok(Report {
                body: json!({ "config": cfg, "report": report }),
                failed: false,
            })
        }
        Command::Validate {
            input,
            depth,
            r0,
            c_star,
        } => {
            let mu = load(input)?;
            let r0 = resolve_r0(&mu, *r0)?;
            let mut checks = Vec::new();
            let nets = nets_from_points(mu.points(), r0, *depth)?;
            let net_check = validate_nets(&nets, *c_star);
            checks.push(json!({
                "name": "nets",
                "passed": net_check.passed(),
                "violations": net_check.violations.len(),
                "smallest_c_star": net_check.smallest_c_star,
            }));
            let alphas = fit_alphas(&nets, None)?;
            let construction = construct_curve(&nets, &alphas, crate::curve::DEFAULT_EPSILON)?;
            let cert = certify(&construction);
            checks.push(json!({
                "name": "ledger",
                "passed": cert.ledger_violations.is_empty(),
                "violations": cert.ledger_violations,
            }));
            checks.push(json!({
                "name": "cores",
                "passed": cert.core_overlaps.is_empty(),
                "cores": cert.cores,
            }));
            checks.push(json!({ "name": "windows", "passed": cert.window_violations == 0 }));
            let disconnected: Vec<usize> = construction
                .snapshots
                .iter()
                .filter(|s| !verify_connected(&construction.graph.restrict(&s.segments)).connected)
                .map(|s| s.k)
                .collect();
            checks.push(json!({ "name": "connected", "passed": disconnected.is_empty(), "failing_generations": disconnected }));
            checks.push(tree_check(&mu, *depth));
            let failed = checks.iter().any(|c| c["passed"] != json!(true));
            Ok(Report {
                body: json!({ "config": cfg, "r0": r0, "checks": checks }),
                failed,
            })
        }
    }
}

/// Upward closure of the support tree `{Q : mu(3Q) > 0}` under each maximal cube.
fn tree_check(mu: &DiscreteMeasure, depth: usize) -> Value {
    let engine = BetaEngine::new(mu);
    let diam = mu.support_diam();
    let k_top = if diam > 0.0 {
        (-diam.log2()).ceil() as i32
    } else {
        0
    };
    let k_max = k_top + depth as i32;
    let mut trees = 0;
    let mut problems = Vec::new();
    for top in engine.occupied(k_top) {
        let mut members = vec![top.clone()];
        let mut level = vec![top.clone()];
        for _ in k_top..k_max {
            level = level
                .iter()
                .flat_map(|q| q.children())
                .filter(|c| engine.triple_mass(c) > 0.0)
                .collect();
            members.extend(level.iter().cloned());
        }
        match CubeTree::new(top, members) {
            Ok(_) => trees += 1,
            Err(e) => problems.push(e.to_string()),
        }
    }
    json!({ "name": "trees", "passed": problems.is_empty(), "trees": trees, "problems": problems })
}

fn resolve_r0(mu: &DiscreteMeasure, r0: Option<f64>) -> Result<f64> {
    match r0 {
        Some(r) if r.is_finite() && r > 0.0 => Ok(r),
        Some(r) => Err(invalid("r0", format!("{r} must be positive"))),
        None => {
            let d = mu.support_diam();
            Ok(if d > 0.0 { d } else { 1.0 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_exits_zero() {
        let out = run(["mrt", "--help"]);
        assert_eq!(out.code, 0);
        assert!(out.stdout.contains("decompose"));
    }

    #[test]
    fn unknown_flag_is_input_error() {
        let out = run(["mrt", "beta", "x.csv", "--bogus"]);
        assert_eq!(out.code, 2);
        assert!(out.stderr.contains("\"error\""));
    }

    #[test]
    fn missing_file_is_input_error() {
        let out = run(["mrt", "jones", "/nonexistent/measure.csv"]);
        assert_eq!(out.code, 2);
    }
}
