// Copyright 2026 The liethermal Authors
// SPDX-License-Identifier: Apache-2.0

//! `liethermal`: algebra listing, control optimisation, speed-limit scans,
//! dense verification, sampling and circuit export.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use liethermal_core::circuit_builder::build_circuit;
use liethermal_core::control::{optimize, qsl_scan, ControlProblem, QslConfig, Solution};
use liethermal_core::io::{
    beta_curve_csv, qsl_csv, samples_csv, to_json, AlgebraDocument, ProblemConfig, RunManifest,
    SolutionDocument,
};
use liethermal_core::pauli_algebra::generate_closure;
use liethermal_core::thermal_sampling::{chain_tables, draw_samples};
use liethermal_core::verifier::{
    beta_curve, conjugation_infidelity, dense_propagate_check, ground_state_bound,
    realize_dense, simulate_circuit, state_infidelity, thermal_state,
};
use liethermal_core::Error;
use serde_json::json;

const THREADS_ENV: &str = "LIETHERMAL_THREADS";

#[derive(Parser)]
#[command(name = "liethermal", version, about = "Thermal-state preparation by optimal control of the parent Hamiltonian")]
struct Cli {
    /// Overrides the seed of the configuration or subcommand.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: $LIETHERMAL_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Suppress informational output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the Lie-algebra basis for an n-site chain.
    Algebra {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimise the control protocol and initial condition.
    Optimize(OptimizeArgs),
    /// Scan the final time and report the best infidelity at each point.
    Qsl(QslArgs),
    /// Check a solution against the dense oracle.
    Verify(VerifyArgs),
    /// Draw spin configurations from the initial thermal state.
    Sample {
        #[arg(long)]
        solution: PathBuf,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the preparation circuit of the initial thermal state.
    Circuit {
        #[arg(long)]
        solution: PathBuf,
        #[arg(long)]
        beta: f64,
        #[arg(long, value_enum, default_value = "json")]
        format: CircuitFormat,
        #[arg(long)]
        out: PathBuf,
    },
    /// algebra → optimize → verify, with a manifest.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Inverse temperature for the state report; default 2/λ.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        best_effort: bool,
    },
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    warm_start: Option<PathBuf>,
    /// Exit 0 even when no restart converged.
    #[arg(long)]
    best_effort: bool,
}

#[derive(Args)]
struct QslArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    tf_min: f64,
    #[arg(long)]
    tf_max: f64,
    #[arg(long)]
    steps: usize,
    #[arg(long)]
    out: PathBuf,
    /// Slices per site (default 150).
    #[arg(long)]
    discretization_factor: Option<usize>,
    #[arg(long, default_value_t = 1e-8)]
    drop_threshold: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum VerifyMode {
    Operator,
    State,
    Gsbound,
    Propagation,
    Circuit,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    solution: PathBuf,
    #[arg(long, value_enum)]
    mode: VerifyMode,
    #[arg(long)]
    beta: Option<f64>,
    /// `min,max,steps` in units of λβ; writes a CSV curve.
    #[arg(long)]
    beta_grid: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum CircuitFormat {
    Json,
    Text,
}

enum Failure {
    Validation(String),
    NotConverged(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::NotConverged(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::NotConverged(m) | Failure::Io(m) => m,
        }
    }
}

fn stage(name: &'static str) -> impl Fn(Error) -> Failure {
    move |e| match e {
        Error::InfeasibleAlignment | Error::Numeric(_) => Failure::NotConverged(format!("{name}: {e}")),
        _ => Failure::Validation(format!("{name}: {e}")),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

struct Ctx {
    seed: Option<u64>,
    quiet: bool,
}

impl Ctx {
    fn info(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }
}

fn load_config(path: &Path, ctx: &Ctx) -> Result<ProblemConfig, Failure> {
    let mut cfg = ProblemConfig::from_json(&read(path)?).map_err(stage("config"))?;
    if let Some(s) = ctx.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(stage("config"))?;
    Ok(cfg)
}

fn load_solution(path: &Path) -> Result<(SolutionDocument, ControlProblem, Solution), Failure> {
    let doc = SolutionDocument::from_json(&read(path)?).map_err(stage("solution"))?;
    let problem = doc.problem().map_err(stage("solution"))?;
    let sol = doc.solution(&problem).map_err(stage("solution"))?;
    Ok((doc, problem, sol))
}

fn run_optimize(cfg: &ProblemConfig, restarts: Option<usize>, warm: Option<&Path>) -> Result<(ControlProblem, Solution), Failure> {
    let problem = cfg.problem().map_err(stage("optimize"))?;
    let mut oc = cfg.optimize_config();
    if let Some(r) = restarts {
        if r == 0 {
            return Err(Failure::Validation("optimize: need at least one restart".into()));
        }
        oc.restarts = r;
    }
    let warm = match warm {
        Some(p) => {
            let (doc, _, sol) = load_solution(p)?;
            if doc.basis_hash != problem.basis.content_hash() {
                return Err(Failure::Validation("optimize: warm start was built on a different basis".into()));
            }
            Some(sol)
        }
        None => None,
    };
    let sol = optimize(&problem, &oc, warm.as_ref()).map_err(stage("optimize"))?;
    Ok((problem, sol))
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    let bad = || Failure::Validation(format!("beta grid must be min,max,steps, got {spec:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let steps: usize = parts[2].parse().map_err(|_| bad())?;
    if !(lo >= 0.0) || !(hi >= lo) || steps < 2 {
        return Err(bad());
    }
    Ok((0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect())
}

fn state_report(problem: &ControlProblem, sol: &Solution, lambda: f64, beta: f64) -> Result<serde_json::Value, Failure> {
    let (j, a_f) = sol.evaluate(problem).map_err(stage("verify"))?;
    let kf = realize_dense(&a_f, &problem.basis).map_err(stage("verify"))?;
    let kt = realize_dense(&problem.target, &problem.basis).map_err(stage("verify"))?;
    let rho = thermal_state(&kf, beta).map_err(stage("verify"))?;
    let sigma = thermal_state(&kt, beta).map_err(stage("verify"))?;
    let si = state_infidelity(&rho.matrix, &sigma.matrix).map_err(stage("verify"))?;
    Ok(json!({
        "mode": "state",
        "basis_hash": sol.basis_hash,
        "beta": beta,
        "lambda_beta": lambda * beta,
        "state_infidelity": si,
        "operator_infidelity": j,
    }))
}

fn verify(args: &VerifyArgs, ctx: &Ctx) -> Result<(), Failure> {
    let (doc, problem, sol) = load_solution(&args.solution)?;
    let need_beta = || args.beta.ok_or_else(|| Failure::Validation("verify: --beta is required for this mode".into()));
    let report = match args.mode {
        VerifyMode::Operator => {
            let (j, a_f) = sol.evaluate(&problem).map_err(stage("verify"))?;
            let scale = liethermal_core::control::rescale_initial(&a_f, &problem.target).map_err(stage("verify"))?;
            json!({
                "mode": "operator",
                "basis_hash": doc.basis_hash,
                "J_stored": doc.j,
                "J_recomputed": j,
                "residual_scale": scale,
            })
        }
        VerifyMode::State => {
            if let Some(grid) = &args.beta_grid {
                let grid = parse_grid(grid)?;
                let (_, a_f) = sol.evaluate(&problem).map_err(stage("verify"))?;
                let curve = beta_curve(&a_f, &problem.target, &problem.basis, doc.lambda_scale, &grid).map_err(stage("verify"))?;
                write(&args.out, &beta_curve_csv(&curve, &doc.basis_hash))?;
                ctx.info(format!("wrote {} points to {}", curve.len(), args.out.display()));
                return Ok(());
            }
            state_report(&problem, &sol, doc.lambda_scale, need_beta()?)?
        }
        VerifyMode::Gsbound => {
            let (_, a_f) = sol.evaluate(&problem).map_err(stage("verify"))?;
            let gs = ground_state_bound(&a_f, &problem.target, &problem.basis).map_err(stage("verify"))?;
            json!({
                "mode": "gsbound",
                "basis_hash": doc.basis_hash,
                "bound": gs.bound,
                "ground_state_infidelity": gs.ground_state_infidelity,
                "gap": gs.gap,
            })
        }
        VerifyMode::Propagation => {
            let beta = args.beta.unwrap_or(2.0 / doc.lambda_scale);
            let (_, a_f) = sol.evaluate(&problem).map_err(stage("verify"))?;
            let err = dense_propagate_check(&sol.c, &sol.protocol, &problem.basis, &a_f).map_err(stage("verify"))?;
            let inf = conjugation_infidelity(&sol.c, &sol.protocol, &problem.basis, &a_f, beta).map_err(stage("verify"))?;
            json!({
                "mode": "propagation",
                "basis_hash": doc.basis_hash,
                "max_coefficient_error": err,
                "beta": beta,
                "conjugation_infidelity": inf,
            })
        }
        VerifyMode::Circuit => {
            let beta = need_beta()?;
            let circ = build_circuit(&sol.c.c, beta).map_err(stage("verify"))?;
            let sim = simulate_circuit(&circ).map_err(stage("verify"))?;
            let a0 = sol.c.coefficients(&problem.basis).map_err(stage("verify"))?;
            let rho = thermal_state(&realize_dense(&a0, &problem.basis).map_err(stage("verify"))?, beta).map_err(stage("verify"))?;
            let inf = state_infidelity(&sim.reduced, &rho.matrix).map_err(stage("verify"))?;
            json!({
                "mode": "circuit",
                "basis_hash": doc.basis_hash,
                "beta": beta,
                "reduced_state_infidelity": inf,
                "success_probability": sim.success_probability,
                "predicted_success_probability": circ.postselect.predicted_success,
            })
        }
    };
    let text = to_json(&report).map_err(stage("verify"))?;
    write(&args.out, &text)?;
    ctx.info(text.trim_end());
    Ok(())
}

fn pipeline(config: &Path, out_dir: &Path, beta: Option<f64>, best_effort: bool, ctx: &Ctx) -> Result<(), Failure> {
    let cfg = load_config(config, ctx)?;
    let mut manifest = RunManifest::new(String::new(), serde_json::to_value(&cfg).unwrap_or_default());

    let t = Instant::now();
    let basis = generate_closure(cfg.n).map_err(stage("algebra"))?;
    manifest.basis_hash = basis.content_hash();
    let algebra = to_json(&AlgebraDocument::from_basis(&basis)).map_err(stage("algebra"))?;
    let path = out_dir.join("algebra.json");
    write(&path, &algebra)?;
    manifest.output(&path, algebra.as_bytes());
    manifest.stage("algebra", t.elapsed().as_secs_f64());

    let t = Instant::now();
    let (problem, sol) = run_optimize(&cfg, None, None)?;
    let solution = to_json(&SolutionDocument::new(&sol, &cfg)).map_err(stage("optimize"))?;
    let path = out_dir.join("solution.json");
    write(&path, &solution)?;
    manifest.output(&path, solution.as_bytes());
    manifest.stage("optimize", t.elapsed().as_secs_f64());
    ctx.info(format!("optimize: J = {:e} (converged: {})", sol.j, sol.converged));

    let t = Instant::now();
    let beta = beta.unwrap_or(2.0 / cfg.lambda_scale);
    let report = to_json(&state_report(&problem, &sol, cfg.lambda_scale, beta)?).map_err(stage("verify"))?;
    let path = out_dir.join("report.json");
    write(&path, &report)?;
    manifest.output(&path, report.as_bytes());
    manifest.stage("verify", t.elapsed().as_secs_f64());

    let text = to_json(&manifest).map_err(stage("manifest"))?;
    write(&out_dir.join("manifest.json"), &text)?;
    if !sol.converged && !best_effort {
        return Err(Failure::NotConverged(format!("optimize: best J = {:e} did not converge", sol.j)));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let ctx = Ctx { seed: cli.seed, quiet: cli.quiet };
    match cli.command {
        Command::Algebra { n, out } => {
            let basis = generate_closure(n).map_err(stage("algebra"))?;
            let text = to_json(&AlgebraDocument::from_basis(&basis)).map_err(stage("algebra"))?;
            write(&out, &text)?;
            ctx.info(format!("n = {n}: {} elements, hash {}", basis.len(), basis.content_hash()));
        }
        Command::Optimize(args) => {
            let cfg = load_config(&args.config, &ctx)?;
            let (_, sol) = run_optimize(&cfg, args.restarts, args.warm_start.as_deref())?;
            let mut doc_cfg = cfg.clone();
            if let Some(r) = args.restarts {
                doc_cfg.restarts = r;
            }
            write(&args.out, &to_json(&SolutionDocument::new(&sol, &doc_cfg)).map_err(stage("optimize"))?)?;
            ctx.info(format!("J = {:e}, converged: {}, restart {}", sol.j, sol.converged, sol.restart));
            if !sol.converged && !args.best_effort {
                return Err(Failure::NotConverged(format!("optimize: best J = {:e} did not converge", sol.j)));
            }
        }
        Command::Qsl(args) => {
            let cfg = load_config(&args.config, &ctx)?;
            if !(args.tf_min > 0.0) || !(args.tf_max > args.tf_min) || args.steps < 2 {
                return Err(Failure::Validation("qsl: need 0 < tf_min < tf_max and steps >= 2".into()));
            }
            let grid: Vec<f64> = (0..args.steps)
                .map(|i| args.tf_min + (args.tf_max - args.tf_min) * i as f64 / (args.steps - 1) as f64)
                .collect();
            let problem = cfg.problem().map_err(stage("qsl"))?;
            let qsl = QslConfig {
                discretization_factor: args.discretization_factor.unwrap_or(QslConfig::default().discretization_factor),
                drop_threshold: args.drop_threshold,
                stop_at_drop: false,
            };
            let curve = qsl_scan(&problem, &grid, &cfg.optimize_config(), &qsl).map_err(stage("qsl"))?;
            write(&args.out, &qsl_csv(&curve, cfg.g, &problem.basis.content_hash()))?;
            match curve.t_min {
                Some(t) => ctx.info(format!("drop at t_f = {t}")),
                None => ctx.info("no drop below the threshold on this grid"),
            }
        }
        Command::Verify(args) => verify(&args, &ctx)?,
        Command::Sample { solution, beta, count, out } => {
            let (doc, _, sol) = load_solution(&solution)?;
            let tables = chain_tables(&sol.c.c, beta).map_err(stage("sample"))?;
            let seed = ctx.seed.unwrap_or(doc.seed);
            let samples = draw_samples(&tables, count, seed, 0);
            let energies: Vec<f64> = samples.iter().map(|s| tables.energy(&s.z)).collect();
            write(&out, &samples_csv(&samples, &energies, doc.n, seed, 0, beta, &doc.basis_hash))?;
            ctx.info(format!("wrote {count} samples to {}", out.display()));
        }
        Command::Circuit { solution, beta, format, out } => {
            let (_, _, sol) = load_solution(&solution)?;
            let circ = build_circuit(&sol.c.c, beta).map_err(stage("circuit"))?;
            let text = match format {
                CircuitFormat::Json => to_json(&circ).map_err(stage("circuit"))?,
                CircuitFormat::Text => circ.to_text(),
            };
            write(&out, &text)?;
            if !ctx.quiet {
                println!("P_s = {:e}", circ.postselect.predicted_success);
            }
        }
        Command::Pipeline { config, out_dir, beta, best_effort } => pipeline(&config, &out_dir, beta, best_effort, &ctx)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()));
    if let Some(t) = threads.filter(|t| *t > 0) {
        // Results do not depend on the pool size; ignore a pool that already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
