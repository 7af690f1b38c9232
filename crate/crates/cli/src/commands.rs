use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use specreg::bench::{mc_run, BenchSetup, NoiseMode, ReplicationRecord};
use specreg::penalty::{check_conditions, verify_penalty_inequalities, PenaltyViolation};
use specreg::selection::{select_alpha_with, VarianceOptions};
use specreg::smoothers::check_ordered;
use specreg::spectral::{simulate_observation, OrthogonalResidual};
use specreg::stream::replication_stream;
use specreg::{PenaltyTable, SigmaMode};

use crate::config::ExperimentConfig;
use crate::CliError;

pub struct Context {
    pub cfg: ExperimentConfig,
    pub base: PathBuf,
}

/// Violations written out in full per kind, beyond which only counts are kept.
const VIOLATION_SAMPLE: usize = 50;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn build_table(ctx: &Context) -> Result<(crate::config::Problem, PenaltyTable, specreg::AlphaGrid, specreg::SmootherFamily), CliError> {
    let problem = ctx.cfg.problem(&ctx.base)?;
    let family = ctx.cfg.family()?;
    let grid = ctx.cfg.grid(&family, problem.spectrum())?;
    let table = PenaltyTable::build(&family, &grid, problem.spectrum(), ctx.cfg.gamma)?;
    Ok((problem, table, grid, family))
}

#[derive(Serialize)]
struct DecomposeOutput<'a> {
    rank: usize,
    dimension: usize,
    n: Option<usize>,
    eigenvalues: &'a [f64],
    y: Option<Vec<f64>>,
    orthogonal: Option<OrthogonalResidual>,
}

pub fn decompose(ctx: &Context) -> Result<(), CliError> {
    let problem = ctx.cfg.problem(&ctx.base)?;
    let data = problem.observed()?;
    let spectrum = problem.spectrum();
    let n = match &problem {
        crate::config::Problem::Design { design, .. } => Some(design.n),
        _ => None,
    };
    let out = DecomposeOutput {
        rank: spectrum.effective_rank(),
        dimension: spectrum.dimension(),
        n,
        eigenvalues: spectrum.eigenvalues(),
        orthogonal: data.as_ref().and_then(|d| d.orthogonal),
        y: data.map(|d| d.y),
    };
    write_json(&ctx.cfg.outputs.resolve(&ctx.cfg.outputs.decompose), &out)
}

pub const PENALTY_HEADER: [&str; 10] = [
    "alpha",
    "pen_u",
    "pen_cv",
    "D",
    "mu",
    "q_plus",
    "pen_total",
    "h_lambda_norm2",
    "one_minus_h_norm2",
    "max_h_over_lambda",
];

pub fn penalty_table(ctx: &Context) -> Result<(), CliError> {
    let (_, table, _, _) = build_table(ctx)?;
    let path = ctx.cfg.outputs.resolve(&ctx.cfg.outputs.penalty_table);
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
    w.write_record(PENALTY_HEADER).map_err(|e| io_err(&path, e))?;
    for r in &table.rows {
        let fields = [
            r.alpha,
            r.pen_u,
            r.pen_cv,
            r.d,
            r.mu,
            r.q_plus,
            r.pen_total,
            r.h_lambda_norm2,
            r.one_minus_h_norm2,
            r.max_h_over_lambda,
        ];
        w.write_record(fields.iter().map(|&v| fmt_f(v)))
            .map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))
}

#[derive(Serialize)]
struct SelectOutput<'a> {
    alpha_hat: f64,
    alpha_hat_index: usize,
    sigma_hat2: Option<f64>,
    contrasts: &'a [f64],
    estimate: &'a [f64],
}

pub fn select(ctx: &Context) -> Result<(), CliError> {
    let (problem, table, _, _) = build_table(ctx)?;
    let data = match problem.observed()? {
        Some(d) => d,
        // No observation in the config: draw one from the ground truth.
        None => {
            let model = problem.model()?;
            simulate_observation(&model, &mut replication_stream(ctx.cfg.seed, 0))
        }
    };
    let mode = match ctx.cfg.mode {
        NoiseMode::Unknown => SigmaMode::Unknown,
        NoiseMode::Known => SigmaMode::Known {
            sigma2: ctx.cfg.sigma2.or(problem.sigma2()).ok_or_else(|| {
                CliError::Config("known mode needs `sigma2` or a problem sigma".into())
            })?,
        },
    };
    let opts = VarianceOptions {
        include_orthogonal: ctx.cfg.include_orthogonal,
    };
    let sel = select_alpha_with(&data, &table, mode, ctx.cfg.penalty, opts)?;
    let out = SelectOutput {
        alpha_hat: sel.alpha_hat,
        alpha_hat_index: sel.alpha_hat_index,
        sigma_hat2: sel.sigma_hat2,
        contrasts: &sel.contrasts,
        estimate: &sel.estimate,
    };
    write_json(&ctx.cfg.outputs.resolve(&ctx.cfg.outputs.select), &out)
}

pub const REPLICATION_HEADER: [&str; 5] = ["rep", "alpha_hat_index", "loss", "sigma_hat2", "excess_sup"];

fn write_replications(path: &Path, records: &[ReplicationRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(REPLICATION_HEADER).map_err(|e| io_err(path, e))?;
    for r in records {
        w.write_record([
            r.rep.to_string(),
            r.alpha_hat_index.to_string(),
            fmt_f(r.loss),
            r.sigma_hat2.map(fmt_f).unwrap_or_default(),
            fmt_f(r.excess_sup),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn bench(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let problem = cfg.problem(&ctx.base)?;
    let model = problem.model()?;
    let family = cfg.family()?;
    let grid = cfg.grid(&family, &model.spectrum)?;
    let setup = BenchSetup {
        model,
        family,
        grid,
        gamma: cfg.gamma,
        mode: cfg.mode,
        penalty: cfg.penalty,
        replications: cfg.replications,
        seed: cfg.seed,
        bound_constant: cfg.bound_constant,
    };
    let outcome = mc_run(&setup)?;
    write_json(&cfg.outputs.resolve(&cfg.outputs.bench_report), &outcome.report)?;
    write_replications(
        &cfg.outputs.resolve(&cfg.outputs.bench_replications),
        &outcome.records,
    )?;
    let r = &outcome.report;
    println!(
        "empirical risk {:.6e} (se {:.2e}), oracle risk {:.6e}, ratio {:.4}",
        r.empirical_risk.mean, r.empirical_risk.std_error, r.oracle_risk, r.oracle_ratio
    );
    Ok(())
}

#[derive(Serialize, Default)]
struct ViolationCounts {
    lower_bound: usize,
    mu_lower_bound: usize,
    log_control: usize,
    ratio_monotone: usize,
}

#[derive(Serialize)]
struct InequalitySummary {
    passed: bool,
    rows_checked: usize,
    pairs_checked: usize,
    counts: ViolationCounts,
    /// At most a few witnesses of each kind.
    examples: Vec<PenaltyViolation>,
}

#[derive(Serialize)]
struct CheckOutput {
    family: &'static str,
    grid_points: usize,
    passed: bool,
    ordering: specreg::smoothers::OrderingReport,
    conditions: specreg::penalty::ConditionsReport,
    penalty_inequalities: InequalitySummary,
    psi: Option<f64>,
}

pub fn check(ctx: &Context) -> Result<(), CliError> {
    let (problem, table, grid, family) = build_table(ctx)?;
    let ordering = check_ordered(&family, &grid, problem.spectrum())?;
    let conditions = check_conditions(&table);
    let report = verify_penalty_inequalities(&table);

    let mut counts = ViolationCounts::default();
    let mut examples = Vec::new();
    for v in &report.violations {
        let slot = match v {
            PenaltyViolation::LowerBound { .. } => &mut counts.lower_bound,
            PenaltyViolation::MuLowerBound { .. } => &mut counts.mu_lower_bound,
            PenaltyViolation::LogControl { .. } => &mut counts.log_control,
            PenaltyViolation::RatioMonotone { .. } => &mut counts.ratio_monotone,
        };
        *slot += 1;
        if *slot <= VIOLATION_SAMPLE {
            examples.push(v.clone());
        }
    }
    let passed = ordering.passed && conditions.passed && report.passed;
    let out = CheckOutput {
        family: family.name(),
        grid_points: table.len(),
        passed,
        psi: table.psi,
        penalty_inequalities: InequalitySummary {
            passed: report.passed,
            rows_checked: report.rows_checked,
            pairs_checked: report.pairs_checked,
            counts,
            examples,
        },
        ordering,
        conditions,
    };
    write_json(&ctx.cfg.outputs.resolve(&ctx.cfg.outputs.check), &out)?;

    let status = |ok: bool| if ok { "ok" } else { "FAILED" };
    let c = &out.penalty_inequalities.counts;
    println!("ordering: {}", status(out.ordering.passed));
    println!(
        "conditions: {} (c2_hat = {:.4e})",
        status(out.conditions.passed),
        out.conditions.c2_hat
    );
    println!(
        "penalty inequalities: {} (lower bound {}, mu bound {}, log control {}, ratio monotone {})",
        status(out.penalty_inequalities.passed),
        c.lower_bound,
        c.mu_lower_bound,
        c.log_control,
        c.ratio_monotone
    );
    if passed {
        Ok(())
    } else {
        Err(CliError::CheckFailed)
    }
}
