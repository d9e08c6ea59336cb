use std::fs;
use std::path::Path;

use serde::Serialize;

use gammaphi::calibration::{certify, SamplingMode, SamplingPlan, Tolerances, Verdict};
use gammaphi::conditions::check_conditions;
use gammaphi::consistency::{
    adversarial_sequence, surrogate_descent, with_surrogate_infimum, DescentOptions, DiscreteDistribution, Trajectory,
};
use gammaphi::counterexample::{profile_table, verify_counterexample, CexParams, DEFAULT_T_GRID};
use gammaphi::risk::{bayes_conditional_risk, conditional_risk, ExtendedScore, SolverOptions};
use gammaphi::{LossSpec, ProbVector, ScoreVector};

use crate::output::{csv_table, to_json, write_artifacts, RunConfig};
use crate::*;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<gammaphi::Error> for CliError {
    fn from(e: gammaphi::Error) -> Self {
        let code = match e {
            gammaphi::Error::Solver { .. } => EXIT_SOLVER,
            _ => EXIT_USAGE,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError { code: EXIT_SOLVER, message: format!("i/o: {e}") }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

pub fn run(command: &Command, argv: &[String]) -> CliResult<u8> {
    match command {
        Command::Conditions(a) => conditions(a, argv),
        Command::Risk(a) => risk(a, argv),
        Command::Certify(a) => certify_cmd(a, argv),
        Command::Cex(a) => cex(a, argv),
        Command::Simulate(a) => simulate(a, argv),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

/// Resolves `--loss` or `--config`. A `k` in the config file must agree with `k`.
fn resolve_loss(args: &LossArgs, k: usize) -> CliResult<LossSpec> {
    if k < 2 {
        return Err(CliError::usage(format!("k must be at least 2, got {k}")));
    }
    let spec = match (&args.loss, &args.config) {
        (Some(name), None) => LossSpec::preset(name, k)?,
        (None, Some(path)) => LossSpec::from_config(&read_text(path)?, Some(k))?,
        (None, None) => return Err(CliError::usage("one of --loss or --config is required")),
        (Some(_), Some(_)) => return Err(CliError::usage("--loss and --config are exclusive")),
    };
    if spec.k != k {
        return Err(CliError::usage(format!("config has k = {}, but k = {k} was requested", spec.k)));
    }
    Ok(spec)
}

fn emit(output: &OutputArgs, json: &str, csv: &str, pretty: &str, format: Format, extra: &[(&str, String)]) -> CliResult<()> {
    write_artifacts(output, json, extra)?;
    match format {
        Format::Json => print!("{json}"),
        Format::Csv => print!("{csv}"),
        Format::Pretty => print!("{pretty}"),
    }
    Ok(())
}

fn conditions(a: &ConditionsArgs, argv: &[String]) -> CliResult<u8> {
    let spec = resolve_loss(&a.loss, a.k)?;
    let format = a.output.format.unwrap_or(Format::Pretty);
    let report = check_conditions(&spec)?;
    let mut run = RunConfig::new("conditions", argv, &a.output, format);
    run.loss = Some(spec.to_config());
    run.k = Some(spec.k);

    let flags = [
        ("gamma_si", report.gamma_si),
        ("gamma_pd", report.gamma_pd),
        ("gamma_sup_infinite", report.gamma_sup_infinite),
        ("phi_ndz", report.phi_ndz),
        ("phi_inf_zero", report.phi_inf_zero),
    ];
    let sufficient = report.sufficient_for_calibration();
    let mut csv = String::from("condition,holds\n");
    let mut pretty = String::new();
    for (name, ok) in flags {
        csv.push_str(&format!("{name},{ok}\n"));
        pretty.push_str(&format!("{name:<20} {}\n", if ok { "yes" } else { "no" }));
    }
    for e in &report.evidence {
        pretty.push_str(&format!("  {} at x = {}: {} ({})\n", e.condition, e.x, e.value, e.note));
    }
    pretty.push_str(&format!("sufficient for calibration: {}\n", if sufficient { "yes" } else { "no" }));

    emit(&a.output, &to_json(&run, &report), &csv, &pretty, format, &[])?;
    Ok(if sufficient { EXIT_OK } else { EXIT_CONDITIONS })
}

#[derive(Serialize)]
struct RiskReport {
    p: ProbVector,
    v: Option<ScoreVector>,
    bayes: bool,
    value: f64,
    witness: Option<ExtendedScore>,
    converged: Option<bool>,
}

fn risk(a: &RiskArgs, argv: &[String]) -> CliResult<u8> {
    let p = ProbVector::new(a.p.clone())?;
    let spec = resolve_loss(&a.loss, p.len())?;
    let format = a.output.format.unwrap_or(Format::Pretty);
    let solver = SolverOptions { seed: a.seed, ..SolverOptions::default() };
    let report = match (&a.v, a.bayes) {
        (Some(v), false) => {
            let v = ScoreVector::new(v.clone())?;
            let value = conditional_risk(&p, &spec, &v)?;
            RiskReport { p, v: Some(v), bayes: false, value, witness: None, converged: None }
        }
        (None, true) => {
            let sol = bayes_conditional_risk(&p, &spec, &solver)?;
            RiskReport { p, v: None, bayes: true, value: sol.value, witness: Some(sol.witness), converged: Some(sol.converged) }
        }
        _ => return Err(CliError::usage("give exactly one of --v or --bayes")),
    };
    let mut run = RunConfig::new("risk", argv, &a.output, format);
    run.loss = Some(spec.to_config());
    run.k = Some(spec.k);
    run.seed = a.seed;

    let csv = format!("value\n{}\n", report.value);
    let pretty = format!("{:.6}\n", report.value);
    emit(&a.output, &to_json(&run, &report), &csv, &pretty, format, &[])?;
    Ok(EXIT_OK)
}

fn certify_cmd(a: &CertifyArgs, argv: &[String]) -> CliResult<u8> {
    let spec = resolve_loss(&a.loss, a.k)?;
    let mode: SamplingMode = a.mode.parse()?;
    let format = a.output.format.unwrap_or(Format::Pretty);
    let plan = SamplingPlan { mode, n: a.n, seed: a.seed };
    let tolerances = Tolerances::default();
    let solver = SolverOptions { seed: a.seed, ..SolverOptions::default() };
    let report = certify(&spec, &plan, &tolerances, &solver)?;

    let mut run = RunConfig::new("certify", argv, &a.output, format);
    run.loss = Some(spec.to_config());
    run.k = Some(spec.k);
    run.seed = a.seed;
    run.sampling = serde_json::to_value(plan).ok();
    run.tolerances = serde_json::to_value(tolerances).ok();

    let header: Vec<String> = (0..spec.k)
        .map(|i| format!("p{i}"))
        .chain(["y", "bayes", "constrained", "gap"].map(String::from))
        .collect();
    let records = csv_table(
        &header.join(","),
        report.records.iter().map(|r| {
            let mut row = r.p.as_slice().to_vec();
            row.extend([r.y as f64, r.bayes, r.constrained, r.gap]);
            row
        }),
    );

    let mut pretty = format!(
        "verdict: {:?}\nevaluated pairs: {}\nsolver failures: {}\n",
        report.verdict,
        report.records.len(),
        report.solver_failures
    );
    if let Some(g) = report.min_gap {
        pretty.push_str(&format!("min gap: {g:e}\n"));
    }
    if let Some(w) = &report.witness {
        pretty.push_str(&format!(
            "witness: p = {:?}, y = {}, bayes = {}, constrained = {}, gap = {:e}\n",
            w.p.as_slice(),
            w.y,
            w.bayes,
            w.constrained,
            w.gap
        ));
    }
    for d in &report.diagnostics {
        pretty.push_str(&format!("note: {d}\n"));
    }

    emit(&a.output, &to_json(&run, &report), &records, &pretty, format, &[("records.csv", records.clone())])?;
    Ok(match report.verdict {
        Verdict::CalibratedEvidence => EXIT_OK,
        Verdict::ViolationFound => EXIT_VIOLATION,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    })
}

fn cex(a: &CexArgs, argv: &[String]) -> CliResult<u8> {
    let format = a.output.format.unwrap_or(Format::Pretty);
    let params = CexParams { r: a.r, k: a.k, t_grid: DEFAULT_T_GRID.to_vec() };
    let solver = SolverOptions { seed: a.seed, ..SolverOptions::default() };
    let report = verify_counterexample(&params, a.tol, &solver)?;

    let mut run = RunConfig::new("cex", argv, &a.output, format);
    run.loss = Some(LossSpec::counterexample(a.k).to_config());
    run.k = Some(a.k);
    run.seed = a.seed;
    run.tolerances = Some(serde_json::json!({ "tol": a.tol }));

    let witness = csv_table("t,risk", report.witness_path.iter().map(|w| vec![w.t, w.risk]));
    let profile = csv_table(
        "x,F,Fprime",
        profile_table(a.r, -5.0, 5.0, 2001).into_iter().map(|(x, f, d)| vec![x, f, d]),
    );

    let mut pretty = format!("p = {:?}\nBayes risk: {}\n", report.p.as_slice(), report.bayes_risk);
    for w in &report.witness_path {
        pretty.push_str(&format!("  t = {:<6} risk = {:.9} gap = {:e} argmax = {}\n", w.t, w.risk, w.gap, w.argmax));
    }
    for c in &report.checks {
        pretty.push_str(&format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail));
    }
    for n in &report.notes {
        pretty.push_str(&format!("note: {n}\n"));
    }
    pretty.push_str(&format!("verification: {}\n", if report.passed { "passed" } else { "failed" }));

    emit(
        &a.output,
        &to_json(&run, &report),
        &witness,
        &pretty,
        format,
        &[("witness.csv", witness.clone()), ("profile.csv", profile)],
    )?;
    Ok(if report.passed { EXIT_OK } else { EXIT_VERIFICATION })
}

#[derive(Serialize)]
struct SimulationReport<'a> {
    adversarial: bool,
    cells: usize,
    violating_cells: Option<Vec<usize>>,
    final_surrogate_regret: Option<f64>,
    final_zero_one_regret: f64,
    trajectory: &'a Trajectory,
}

fn simulate(a: &SimulateArgs, argv: &[String]) -> CliResult<u8> {
    let dist = DiscreteDistribution::from_json(&read_text(&a.dist)?)?;
    let spec = resolve_loss(&a.loss, dist.k())?;
    let format = a.output.format.unwrap_or(Format::Csv);
    let descent = DescentOptions { steps: a.steps, ..DescentOptions::default() };
    let solver = SolverOptions { seed: a.seed, ..SolverOptions::default() };

    let (trajectory, violating) = if a.adversarial {
        let run = adversarial_sequence(&dist, &spec, &DEFAULT_T_GRID, &descent, &solver)?;
        (run.trajectory, Some(run.violating_cells))
    } else {
        let t = surrogate_descent(&dist, &spec, &descent)?;
        (with_surrogate_infimum(t, &dist, &spec, &solver)?, None)
    };
    let report = SimulationReport {
        adversarial: a.adversarial,
        cells: dist.cells.len(),
        violating_cells: violating,
        final_surrogate_regret: trajectory.final_surrogate_regret(),
        final_zero_one_regret: trajectory.final_zero_one_regret(),
        trajectory: &trajectory,
    };

    let mut run = RunConfig::new("simulate", argv, &a.output, format);
    run.loss = Some(spec.to_config());
    run.k = Some(spec.k);
    run.seed = a.seed;

    let csv = trajectory.to_csv();
    let last = trajectory.last();
    let mut pretty = format!(
        "steps: {}\nfinal surrogate risk: {}\nfinal 01-risk: {}\nBayes 01-risk: {}\n01-regret: {}\n",
        trajectory.steps.len(),
        last.surrogate_risk,
        last.zero_one_risk,
        trajectory.bayes_zero_one_risk,
        report.final_zero_one_regret
    );
    if let Some(r) = report.final_surrogate_regret {
        pretty.push_str(&format!("surrogate regret: {r:e}\n"));
    }

    emit(&a.output, &to_json(&run, &report), &csv, &pretty, format, &[("trajectory.csv", csv.clone())])?;
    Ok(EXIT_OK)
}
