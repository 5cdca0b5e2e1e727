//! The `combsim` command line.
//!
//! Exit codes: 0 when everything checked passes, 1 when a validation or a
//! verification check fails, 2 on any runtime error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::grid::NormKind;
use crate::model::HypothesisReport;
use crate::output::{self, Manifest};
use crate::scenario::{Method, Scenario, ScenarioFile};
use crate::solver::ContractionParams;
use crate::wellposed::{self, DependenceReport, PerturbationPlan};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

/// Largest accepted relative distance between the picard and mol paths.
pub const CROSS_CHECK_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(name = "combsim", version, about = "Layered combustion front solver")]
pub struct Cli {
    /// Seed for the sampled constants (overrides the scenario).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check every coefficient, fuel and parabolicity hypothesis.
    Validate(ValidateArgs),
    /// Solve and write trajectory and diagnostics CSVs.
    Solve(SolveArgs),
    /// Run a continuous-dependence plan.
    Perturb(PerturbArgs),
    /// Print the constants entering the contraction window.
    Window(ValidateArgs),
    /// Write the scenario in canonical form.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub scenario: PathBuf,
    /// Also write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub scenario: PathBuf,
    #[arg(long, default_value = "global")]
    pub method: Method,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Keep every n-th time in the trajectory CSVs.
    #[arg(long, default_value_t = 1)]
    pub every: usize,
    /// Also solve by the other path and report the distance.
    #[arg(long)]
    pub cross_check: bool,
    /// Solve even if validation fails.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    pub scenario: PathBuf,
    pub plan: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Also run the operator-convergence check for parameter plans.
    #[arg(long)]
    pub operator: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub scenario: PathBuf,
    /// Destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parse `args`, run, and return the exit code. Messages go to `out` and
/// `err`.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_ERROR;
            }
            let _ = write!(out, "{e}");
            return EXIT_PASS;
        }
    };
    if let Some(n) = cli.threads {
        // a second build in the same process (tests) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match run(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                Error::HypothesisViolatedByPerturbation(_) => EXIT_FAIL,
                _ => EXIT_ERROR,
            }
        }
    }
}

fn load(path: &Path, seed: Option<u64>) -> Result<(ScenarioFile, Scenario)> {
    let mut file = ScenarioFile::load(path)?;
    if let Some(s) = seed {
        file.sampling.seed = s;
    }
    let scenario = file.build()?;
    Ok((file, scenario))
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Validate(a) => {
            let (_, s) = load(&a.scenario, cli.seed)?;
            let report = s.validate();
            render_report(out, &s, &report)?;
            if let Some(p) = &a.json {
                output::write_json(p, &report)?;
            }
            Ok(if report.passed { EXIT_PASS } else { EXIT_FAIL })
        }
        Command::Window(a) => {
            let (_, s) = load(&a.scenario, cli.seed)?;
            let report = s.validate();
            if !report.passed {
                render_report(out, &s, &report)?;
                return Ok(EXIT_FAIL);
            }
            let problem = s.problem(&report)?;
            let beta_tilde = s.beta_tilde(&problem)?;
            let (params, _) = s.window_params(&report, beta_tilde)?;
            render_window(out, &params, s.solver.dt)?;
            if let Some(p) = &a.json {
                output::write_json(p, &params)?;
            }
            Ok(EXIT_PASS)
        }
        Command::Solve(a) => solve(cli, a, out),
        Command::Perturb(a) => perturb(cli, a, out),
        Command::Export(a) => {
            let (file, _) = load(&a.scenario, cli.seed)?;
            let text = file.export()?;
            match &a.out {
                Some(p) => std::fs::write(p, text)?,
                None => out.write_all(text.as_bytes())?,
            }
            Ok(EXIT_PASS)
        }
    }
}

fn solve(cli: &Cli, a: &SolveArgs, out: &mut dyn Write) -> Result<i32> {
    let (file, s) = load(&a.scenario, cli.seed)?;
    let report = s.validate();
    let mut manifest = Manifest::new("solve", &file);
    manifest.method = Some(a.method.to_string());
    if !report.passed {
        render_report(out, &s, &report)?;
        if !a.force {
            return Ok(EXIT_FAIL);
        }
        writeln!(out, "WARNING: hypotheses violated; solving anyway (--force)")?;
        manifest.forced = true;
        manifest.notes.push("solved with violated hypotheses".into());
    }
    let run = s.run(a.method)?;
    std::fs::create_dir_all(&a.out)?;
    let mut files: Vec<String> = output::write_trajectory(&a.out, &run.trajectory, a.every)?
        .iter()
        .map(|p| p.display().to_string())
        .collect();
    let diag = a.out.join("diagnostics.csv");
    output::write_diagnostics(&diag, &run.trajectory)?;
    files.push(diag.display().to_string());
    if let Some(g) = &run.global {
        let p = a.out.join("windows.csv");
        output::write_windows(&p, &g.windows)?;
        files.push(p.display().to_string());
    }
    let p = a.out.join("report.json");
    output::write_json(&p, &run.report)?;
    files.push(p.display().to_string());

    let tr = &run.trajectory;
    writeln!(
        out,
        "{}: {} steps to t = {}, sup L2 = {:.6e}, sup H2 = {:.6e}",
        a.method,
        tr.len() - 1,
        tr.times.last().copied().unwrap_or(0.0),
        tr.sup_norm(NormKind::L2),
        tr.sup_norm(NormKind::H2)
    )?;
    if let Some(p) = &run.picard {
        writeln!(
            out,
            "picard: {} iterations, final defect {:.3e}, max ratio {:.4}, bound {:.4}",
            p.iterations,
            p.final_defect,
            p.max_ratio(),
            run.window.map_or(f64::NAN, |w| w.contraction_bound)
        )?;
    }
    if let Some(g) = &run.global {
        writeln!(out, "global: {} windows, running max mu = {:.6e}", g.windows.len(), g.mu_max)?;
        if !g.psi_flags.is_empty() {
            writeln!(out, "WARNING: H2 ratio not finite at {} times", g.psi_flags.len())?;
        }
    }

    let mut code = EXIT_PASS;
    if a.cross_check {
        let other = if a.method == Method::Mol {
            s.run(Method::Global)?.trajectory
        } else {
            s.mol_like(tr)?
        };
        let d = tr.relative_distance(&other)?;
        let ok = d <= CROSS_CHECK_TOLERANCE;
        writeln!(
            out,
            "cross-check: relative sup L2 distance {d:.3e} ({})",
            if ok { "ok" } else { "FAIL" }
        )?;
        manifest.notes.push(format!("cross-check relative distance {d:e}"));
        if !ok {
            code = EXIT_FAIL;
        }
    }
    manifest.report = Some(&run.report);
    manifest.window = run.window.as_ref();
    manifest.files = files;
    manifest.write(&a.out)?;
    writeln!(out, "wrote {}", a.out.display())?;
    Ok(code)
}

fn perturb(cli: &Cli, a: &PerturbArgs, out: &mut dyn Write) -> Result<i32> {
    let (file, s) = load(&a.scenario, cli.seed)?;
    let report = s.validate();
    if !report.passed {
        render_report(out, &s, &report)?;
        return Ok(EXIT_FAIL);
    }
    let plan = PerturbationPlan::parse(&std::fs::read_to_string(&a.plan)?)?;
    let dep = wellposed::run_plan(&s, &plan)?;
    std::fs::create_dir_all(&a.out)?;
    let csv = a.out.join("dependence.csv");
    output::write_dependence(&csv, &dep)?;
    output::write_json(&a.out.join("dependence.json"), &dep)?;
    render_dependence(out, &dep)?;
    let mut manifest = Manifest::new("perturb", &file);
    manifest.method = Some(plan.method.to_string());
    manifest.files = vec![csv.display().to_string(), a.out.join("dependence.json").display().to_string()];
    manifest.notes.push(format!("plan: {}", serde_json::to_string(&plan)?));
    let mut passed = dep.passed;
    if a.operator && plan.target != wellposed::Target::InitialData {
        let rows = wellposed::operator_convergence_check(&s, &plan)?;
        let p = a.out.join("operator.csv");
        output::write_operator_rows(&p, &rows)?;
        manifest.files.push(p.display().to_string());
        writeln!(out, "{:>10} {:>12} {:>12} {:>12}", "epsilon", "measured", "bound", "squared")?;
        for r in &rows {
            writeln!(
                out,
                "{:>10.1e} {:>12.4e} {:>12.4e} {:>12.4e}{}",
                r.epsilon,
                r.measured,
                r.bound,
                r.squared_bound,
                if r.holds { "" } else { "  VIOLATED" }
            )?;
        }
        passed &= rows.iter().all(|r| r.holds);
    }
    manifest.write(&a.out)?;
    Ok(if passed { EXIT_PASS } else { EXIT_FAIL })
}

pub fn render_report(out: &mut dyn Write, s: &Scenario, r: &HypothesisReport) -> Result<()> {
    writeln!(out, "scenario {} ({} layers, nx = {})", s.name, s.model.n_layers(), s.grid().nx())?;
    writeln!(out, "  k1 = {:.6e}  k2 = {:.6e}  k3 = {:.6e}", r.k1, r.k2, r.k3)?;
    writeln!(out, "  mu0 = {:.6e}  mu1 = {:.6e}", r.mu0, r.mu1)?;
    for (i, (b, rr)) in r.beta_accretivity.iter().zip(&r.r_per_layer).enumerate() {
        writeln!(out, "  layer {i}: beta = {b:.6e}  R = {rr:.6e}")?;
    }
    writeln!(out, "  R~ = {:.6e}  rho = {:.6e}  sample times = {}", r.r_tilde, r.rho, r.sample_times)?;
    if r.passed {
        writeln!(out, "PASS: all hypotheses hold")?;
    } else {
        writeln!(out, "FAIL: {} violation(s)", r.violations.len())?;
        for v in &r.violations {
            writeln!(
                out,
                "  [{:?}] {} in layer {}{}{} (value {:.4e})",
                v.group,
                v.clause,
                v.layer,
                v.index.map(|k| format!(" at node {k}")).unwrap_or_default(),
                v.t.map(|t| format!(" at t = {t}")).unwrap_or_default(),
                v.value
            )?;
        }
    }
    Ok(())
}

pub fn render_window(out: &mut dyn Write, p: &ContractionParams, dt: f64) -> Result<()> {
    writeln!(out, "rho = {:.6e}  M = {:.6e}  R = {:.6e}", p.rho, p.m, p.r)?;
    writeln!(out, "beta = {:.6e}  beta~ = {:.6e}", p.beta, p.beta_tilde)?;
    writeln!(out, "kappa = {:.6e}  mu = {:.6e}", p.kappa, p.mu)?;
    writeln!(out, "T = {:.6e}  T_max = {:.6e}", p.t, p.t_max)?;
    let names = ["T", "M/(mu e^(beta T))", "1/(kappa e^(beta T))", "(R e^(-beta~ T) - rho)/mu"];
    for (n, v) in names.iter().zip(p.bound_terms) {
        writeln!(out, "  {n:<28} {v:.6e}")?;
    }
    writeln!(out, "T' = {:.6e} ({} steps of {dt})", p.t_prime, p.steps(dt))?;
    writeln!(out, "contraction bound T' kappa e^(beta T) = {:.6}", p.contraction_bound)?;
    Ok(())
}

pub fn render_dependence(out: &mut dyn Write, d: &DependenceReport) -> Result<()> {
    writeln!(
        out,
        "target {} direction {:?} via {} to t = {} (base sup H2 {:.4e})",
        d.target.name(),
        d.direction,
        d.method,
        d.horizon,
        d.base_norm
    )?;
    writeln!(out, "{:>10} {:>12} {:>12} {:>12} {:>10}", "epsilon", "input", "output", "d/dt", "ratio")?;
    for r in &d.rows {
        writeln!(
            out,
            "{:>10.1e} {:>12.4e} {:>12.4e} {:>12.4e} {:>10.4}",
            r.epsilon, r.input_distance, r.output_distance, r.time_derivative_distance, r.ratio
        )?;
    }
    writeln!(out, "fitted kappa~ = {:.6}", d.fitted_kappa_tilde)?;
    for n in &d.notes {
        writeln!(out, "note: {n}")?;
    }
    writeln!(out, "{}", if d.passed { "PASS" } else { "FAIL" })?;
    Ok(())
}
