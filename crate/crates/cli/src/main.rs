//! radipose: two-view relative pose estimation for radially distorted
//! cameras. Single-pair estimation, synthetic benchmarks and dataset
//! benchmarks over precomputed correspondences.

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::UnitQuaternion;
use serde::Serialize;

use radipose_core::bench::{generate_scenario, BenchPair, ScenarioKind, ScenarioSpec};
use radipose_core::robust::{ransac_estimate, RansacConfig, RobustError};

use radipose_cli::method::{parse_method_list, MethodSpec, PriorMode};
use radipose_cli::report::{Report, ReportMeta, ReportRow, ReportWarnings};
use radipose_cli::runner::{self, refinement_label, run_method_over_pairs, strategy_for_method};
use radipose_cli::schema::{load_pairs, load_priors, PairRecord, PriorRecord};

#[derive(Parser)]
#[command(
    name = "radipose",
    version,
    about = "Two-view relative pose estimation under radial distortion",
    long_about = None
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// RANSAC seed (the RADIPOSE_SEED environment variable overrides this).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum RANSAC iterations.
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    /// Minimum RANSAC iterations before adaptive termination may stop.
    #[arg(long, default_value_t = 10)]
    min_iters: usize,
    /// Inlier threshold in pixels (converted to normalized units).
    #[arg(long, default_value_t = 3.0)]
    threshold_px: f64,
    /// RANSAC confidence in (0, 1).
    #[arg(long, default_value_t = 0.99)]
    confidence: f64,
    /// Refinement blocks for local optimization, e.g. "R,t,f1,f2,l1,l2" or
    /// "R,t,f,l".
    #[arg(long, default_value = "R,t,f1,f2,l1,l2")]
    refine: String,
    /// Maximum Levenberg-Marquardt iterations per local optimization.
    #[arg(long, default_value_t = 25)]
    lo_iters: usize,
}

impl CommonOpts {
    fn to_config(&self) -> Result<RansacConfig> {
        let mut seed = self.seed;
        if let Ok(env_seed) = std::env::var("RADIPOSE_SEED") {
            seed = env_seed
                .parse()
                .map_err(|_| anyhow!("RADIPOSE_SEED is not a valid u64: '{env_seed}'"))?;
        }
        Ok(RansacConfig {
            max_iterations: self.max_iters,
            min_iterations: self.min_iters,
            confidence: self.confidence,
            inlier_threshold_px: self.threshold_px,
            seed,
            refine_blocks: runner::parse_refine_blocks(&self.refine)?,
            lo_max_lm_iterations: self.lo_iters,
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    #[value(name = "A", alias = "a")]
    A,
    #[value(name = "B", alias = "b")]
    B,
    #[value(name = "C", alias = "c")]
    C,
}

impl From<ScenarioArg> for ScenarioKind {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::A => ScenarioKind::A,
            ScenarioArg::B => ScenarioKind::B,
            ScenarioArg::C => ScenarioKind::C,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the two-view model for one pair from a JSONL pairs file.
    Estimate {
        /// Pairs file (line-delimited JSON).
        #[arg(long)]
        pairs: PathBuf,
        /// Pair id to estimate; defaults to the first record.
        #[arg(long)]
        pair_id: Option<String>,
        /// Method spec, e.g. "7pt:0,-0.6,-1.2+shared" or "9ptFlambda".
        #[arg(long)]
        method: String,
        /// Priors file for prior-based methods.
        #[arg(long)]
        priors: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run a synthetic benchmark scenario and write CSV/JSON reports.
    BenchSynth {
        #[arg(long, value_enum)]
        scenario: ScenarioArg,
        /// Share intrinsics (lambda and focal) between the two cameras.
        #[arg(long)]
        shared: bool,
        /// Number of synthetic pairs.
        #[arg(long)]
        pairs: usize,
        /// Correspondences per pair.
        #[arg(long, default_value_t = 500)]
        points: usize,
        /// Gaussian pixel noise sigma.
        #[arg(long, default_value_t = 1.0)]
        noise_px: f64,
        /// Outlier fraction in [0, 1).
        #[arg(long, default_value_t = 0.0)]
        outliers: f64,
        /// Methods to evaluate, separated by ';' (or ',' before an engine
        /// name), e.g. "7pt:0,-0.6,-1.2+shared;9ptFlambda".
        #[arg(long)]
        methods: String,
        /// Output path prefix; writes <out>.csv and <out>.json.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads for pair evaluation.
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
        /// Write 0 in the time column for byte-reproducible reports.
        #[arg(long)]
        stable_time: bool,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Benchmark methods on a dataset of precomputed correspondences.
    BenchData {
        /// Pairs file (line-delimited JSON).
        #[arg(long)]
        pairs: PathBuf,
        /// Priors file for prior-based methods.
        #[arg(long)]
        priors: Option<PathBuf>,
        #[arg(long)]
        methods: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
        #[arg(long)]
        stable_time: bool,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Pretty-print a JSON report (or convert it to CSV on stdout).
    Report {
        #[arg(long)]
        input: PathBuf,
        /// Output format: table or csv.
        #[arg(long, default_value = "table")]
        format: String,
    },
}

fn default_jobs() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Estimate {
            pairs,
            pair_id,
            method,
            priors,
            common,
        } => cmd_estimate(&pairs, pair_id.as_deref(), &method, priors.as_deref(), &common),
        Command::BenchSynth {
            scenario,
            shared,
            pairs,
            points,
            noise_px,
            outliers,
            methods,
            out,
            jobs,
            stable_time,
            common,
        } => {
            if pairs == 0 {
                bail!("--pairs must be at least 1");
            }
            if !(0.0..1.0).contains(&outliers) {
                bail!("--outliers must lie in [0, 1)");
            }
            if noise_px < 0.0 {
                bail!("--noise-px must be nonnegative");
            }
            let cfg = common.to_config()?;
            let spec = ScenarioSpec {
                kind: scenario.into(),
                shared_lambda: shared,
                pairs,
                points_per_pair: points,
                noise_px,
                outlier_fraction: outliers,
                seed: cfg.seed,
            };
            let bench_pairs = generate_scenario(&spec);
            let config_desc = format!(
                "bench-synth scenario={:?} shared={} pairs={} points={} noise_px={} outliers={} methods={} refine={} threshold_px={} max_iters={}",
                spec.kind,
                shared,
                pairs,
                points,
                noise_px,
                outliers,
                methods,
                common.refine,
                common.threshold_px,
                common.max_iters,
            );
            run_bench(
                &bench_pairs,
                0,
                &methods,
                None,
                &cfg,
                shared,
                jobs,
                stable_time,
                &out,
                config_desc,
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::BenchData {
            pairs,
            priors,
            methods,
            out,
            jobs,
            stable_time,
            common,
        } => {
            let cfg = common.to_config()?;
            let (records, skipped) = load_pairs(&pairs)?;
            if records.is_empty() {
                bail!("no usable pairs in {}", pairs.display());
            }
            let bench_pairs: Vec<BenchPair> = records
                .iter()
                .map(PairRecord::to_bench_pair)
                .collect::<Result<_>>()?;
            let prior_map = match priors.as_deref() {
                Some(p) => Some(load_priors(p)?),
                None => None,
            };
            let config_desc = format!(
                "bench-data pairs={} methods={} refine={} threshold_px={} max_iters={}",
                pairs.display(),
                methods,
                common.refine,
                common.threshold_px,
                common.max_iters,
            );
            run_bench(
                &bench_pairs,
                skipped,
                &methods,
                prior_map.as_ref().map(|m| (m, records.as_slice())),
                &cfg,
                false,
                jobs,
                stable_time,
                &out,
                config_desc,
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { input, format } => {
            let report = Report::load_json(&input)?;
            match format.as_str() {
                "table" => print!("{}", report.render_table()),
                "csv" => {
                    let tmp = std::env::temp_dir()
                        .join(format!("radipose-report-{}.csv", std::process::id()));
                    report.write_csv(&tmp)?;
                    print!("{}", std::fs::read_to_string(&tmp)?);
                    let _ = std::fs::remove_file(&tmp);
                }
                other => bail!("unknown format '{other}' (use table or csv)"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Looks up the two prior records for a pair, failing with the offending id.
fn priors_for_pair<'a>(
    map: &'a HashMap<String, PriorRecord>,
    record: &PairRecord,
) -> Result<(&'a PriorRecord, &'a PriorRecord)> {
    let id1 = record
        .image1_id
        .as_deref()
        .ok_or_else(|| anyhow!("pair '{}' lacks image1_id needed for priors", record.pair_id))?;
    let id2 = record
        .image2_id
        .as_deref()
        .ok_or_else(|| anyhow!("pair '{}' lacks image2_id needed for priors", record.pair_id))?;
    let p1 = map
        .get(id1)
        .ok_or_else(|| anyhow!("priors file has no record for image id '{id1}'"))?;
    let p2 = map
        .get(id2)
        .ok_or_else(|| anyhow!("priors file has no record for image id '{id2}'"))?;
    Ok((p1, p2))
}

#[allow(clippy::too_many_arguments)]
fn run_bench(
    pairs: &[BenchPair],
    skipped_pairs: usize,
    methods_arg: &str,
    priors: Option<(&HashMap<String, PriorRecord>, &[PairRecord])>,
    cfg: &RansacConfig,
    shared_metric: bool,
    jobs: usize,
    stable_time: bool,
    out: &std::path::Path,
    config_desc: String,
) -> Result<()> {
    let methods = parse_method_list(methods_arg)?;
    let mut rows = Vec::with_capacity(methods.len());
    for m in &methods {
        let strategies = build_strategies(m, pairs.len(), priors)?;
        let agg = run_method_over_pairs(m.engine, &strategies, pairs, cfg, shared_metric, jobs)?;
        let shared_label = m.shared || shared_metric;
        rows.push(ReportRow::from_aggregate(
            m.render(),
            refinement_label(&cfg.refine_blocks, shared_label),
            m.sample_label(),
            &agg,
            stable_time,
        ));
    }

    let report = Report {
        meta: ReportMeta {
            seed: cfg.seed,
            config: config_desc,
        },
        rows,
        warnings: ReportWarnings { skipped_pairs },
    };
    let csv_path = out.with_extension("csv");
    let json_path = out.with_extension("json");
    report.write_csv(&csv_path)?;
    report.write_json(&json_path)?;
    print!("{}", report.render_table());
    eprintln!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

/// Per-pair strategies for a method; prior methods resolve their records up
/// front so missing ids fail before any estimation starts.
fn build_strategies(
    method: &MethodSpec,
    n_pairs: usize,
    priors: Option<(&HashMap<String, PriorRecord>, &[PairRecord])>,
) -> Result<Vec<radipose_core::robust::EstimationStrategy>> {
    if method.prior == PriorMode::None {
        let s = strategy_for_method(method, None)?;
        return Ok(vec![s; n_pairs]);
    }
    let Some((map, records)) = priors else {
        bail!(
            "method '{}' needs --priors with per-image records",
            method.render()
        );
    };
    records
        .iter()
        .map(|record| {
            let (p1, p2) = priors_for_pair(map, record)?;
            strategy_for_method(method, Some((p1, p2)))
        })
        .collect()
}

#[derive(Serialize)]
struct EstimateOutput {
    pair_id: String,
    method: String,
    fundamental: [f64; 9],
    rotation: Option<[f64; 4]>,
    translation: Option<[f64; 3]>,
    f1: f64,
    f2: f64,
    lambda1: f64,
    lambda2: f64,
    inliers: usize,
    iterations: usize,
    wall_time_ms: f64,
}

fn cmd_estimate(
    pairs_path: &std::path::Path,
    pair_id: Option<&str>,
    method_str: &str,
    priors_path: Option<&std::path::Path>,
    common: &CommonOpts,
) -> Result<ExitCode> {
    let cfg = common.to_config()?;
    let method = MethodSpec::parse(method_str)?;
    let (records, _) = load_pairs(pairs_path)?;
    let record = match pair_id {
        Some(id) => records
            .iter()
            .find(|r| r.pair_id == id)
            .ok_or_else(|| anyhow!("pair id '{id}' not found in {}", pairs_path.display()))?,
        None => records
            .first()
            .ok_or_else(|| anyhow!("no usable pairs in {}", pairs_path.display()))?,
    };
    let pair = record.to_bench_pair()?;

    let strategy = if method.prior == PriorMode::None {
        strategy_for_method(&method, None)?
    } else {
        let path =
            priors_path.ok_or_else(|| anyhow!("method '{}' needs --priors", method.render()))?;
        let map = load_priors(path)?;
        let (p1, p2) = priors_for_pair(&map, record)?;
        strategy_for_method(&method, Some((p1, p2)))?
    };

    match ransac_estimate(
        &pair.corrs,
        pair.dims1,
        pair.dims2,
        method.engine,
        &strategy,
        &cfg,
    ) {
        Ok(result) => {
            let m = &result.model;
            let fm = m.fundamental.matrix();
            let mut fundamental = [0.0; 9];
            for r in 0..3 {
                for c in 0..3 {
                    fundamental[3 * r + c] = fm[(r, c)];
                }
            }
            let (rotation, translation) = match &m.pose {
                Some(p) => {
                    let q = UnitQuaternion::from_matrix(&p.rotation);
                    let t = p.translation.into_inner();
                    (Some([q.w, q.i, q.j, q.k]), Some([t.x, t.y, t.z]))
                }
                None => (None, None),
            };
            let out = EstimateOutput {
                pair_id: record.pair_id.clone(),
                method: method.render(),
                fundamental,
                rotation,
                translation,
                f1: m.cam1.focal,
                f2: m.cam2.focal,
                lambda1: m.cam1.division.lambda,
                lambda2: m.cam2.division.lambda,
                inliers: result.inlier_count(),
                iterations: result.iterations_run,
                wall_time_ms: result.wall_time * 1e3,
            };
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(ExitCode::SUCCESS)
        }
        Err(RobustError::NoModelFound) => {
            eprintln!("no model found for pair '{}'", record.pair_id);
            Ok(ExitCode::from(2))
        }
        Err(e) => Err(e).context("estimation failed"),
    }
}
