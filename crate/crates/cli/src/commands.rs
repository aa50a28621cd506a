use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context};
use cnot_core::equilibrium::{el_residual, equilibrium_defect, equilibrium_defect_against};
use cnot_core::finite_games::{
    build_finite_game, convergence_experiment, estimate_lipschitz, median_w1, ModulusOfContinuity, Sampling,
    LIPSCHITZ_SAMPLES,
};
use cnot_core::io;
use cnot_core::solvers::{
    best_reply_iterate, random_initial_measure, solve_ode_map, variational_solve, w1_distance, SolveReport,
    StepSchedule,
};
use cnot_core::transport::{quotient_perm_distance, w1, wc, wc_atoms};
use cnot_core::{DiscreteMeasure, Scenario, SolverKind, TransportCost};
use serde_json::json;

use crate::manifest::{read_scenario, RunManifest, SCENARIO};
use crate::{CompareArgs, ConvergeArgs, DistanceArgs, Init, Metric, Overrides, SolveArgs, VerifyArgs};

pub enum Outcome {
    Done,
    NotConverged,
}

pub const MEASURE: &str = "measure.csv";
pub const TRACE: &str = "trace.csv";
pub const PLAN: &str = "plan.csv";
pub const DUALS: &str = "duals.csv";
pub const MATRIX: &str = "w1_matrix.csv";
pub const EXPERIMENT: &str = "experiment.csv";
pub const REFERENCE: &str = "reference.csv";
/// Player count of the game on which the Lipschitz constant is sampled.
const LIPSCHITZ_GAME_SIZE: usize = 6;

fn load(o: &Overrides) -> anyhow::Result<Scenario> {
    let mut s = Scenario::load(&o.scenario)?;
    if let Some(n) = o.grid {
        s = s.with_grid(n)?;
    }
    let mut p = s.solver.clone();
    if let Some(v) = o.tol {
        p.tol = v;
    }
    if let Some(v) = o.max_iter {
        p.max_iter = v;
    }
    if let Some(v) = o.damping {
        p.damping = v;
    }
    if let Some(v) = o.seed {
        p.seed = v;
    }
    if let Some(v) = o.eta0 {
        p.eta0 = v;
    }
    Ok(s.with_solver(p)?)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn prepare_out(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_measure(dir: &Path, name: &str, nu: &DiscreteMeasure, s: &Scenario) -> anyhow::Result<()> {
    io::write_measure(create(&dir.join(name))?, nu, &s.cost.reference_weights(nu.grid()))?;
    Ok(())
}

fn run_solver(s: &Scenario, kind: SolverKind, init: Init) -> anyhow::Result<SolveReport> {
    let nu0 = match (init, kind) {
        (Init::Reference, _) => None,
        (Init::Random, SolverKind::Ode) => bail!("--init random does not apply to the ode solver"),
        (Init::Random, _) => Some(random_initial_measure(s.strategy_grid.clone(), s.solver.seed)),
    };
    Ok(match kind {
        SolverKind::BestReply => best_reply_iterate(s, s.solver.damping, nu0)?,
        SolverKind::Ode => solve_ode_map(s)?,
        SolverKind::Variational => variational_solve(s, StepSchedule { eta0: s.solver.eta0 }, nu0)?,
    })
}

pub fn solve(args: SolveArgs, argv: &[String]) -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let s = load(&args.overrides)?;
    let kind: SolverKind = args.solver.parse()?;
    let report = run_solver(&s, kind, args.init)?;
    let defect = equilibrium_defect(&report.final_gamma, &s.mu, &s.cost, None)?;
    let residual = if s.cost.kernel_is_symmetric() {
        Some(el_residual(&report.final_nu, &s.mu, &s.cost, None)?.relative)
    } else {
        None
    };

    let out = &args.out;
    prepare_out(out)?;
    fs::write(out.join(SCENARIO), s.to_json())?;
    write_measure(out, MEASURE, &report.final_nu, &s)?;
    io::write_trace(create(&out.join(TRACE))?, &report.trace)?;
    let mut files = vec![SCENARIO.to_string(), MEASURE.to_string(), TRACE.to_string()];
    if args.dump_transport {
        let t = wc(&s.mu, &report.final_nu, &s.cost.transport)?;
        io::write_plan(create(&out.join(PLAN))?, &t.plan)?;
        io::write_duals(create(&out.join(DUALS))?, &t)?;
        files.extend([PLAN.to_string(), DUALS.to_string()]);
    }

    let mut m = RunManifest::new("solve", argv, &s);
    m.solver = Some(kind.to_string());
    m.iterations = Some(report.iterations);
    m.converged = Some(report.converged);
    m.stop_reason = Some(report.stop_reason.clone());
    m.final_defect = Some(defect.relative_defect);
    m.final_el_residual = residual;
    m.ode_constant = report.ode_constant;
    m.contraction_factor = report.contraction_factor;
    m.restarts = Some(report.restarts);
    m.files = files;
    m.wall_time_seconds = start.elapsed().as_secs_f64();
    m.write(out)?;

    println!(
        "{} on {}: converged={} iterations={} defect={:.3e}{} ({})",
        kind,
        s.name(),
        report.converged,
        report.iterations,
        defect.relative_defect,
        residual.map(|r| format!(" el_residual={r:.3e}")).unwrap_or_default(),
        report.stop_reason
    );
    Ok(if report.converged { Outcome::Done } else { Outcome::NotConverged })
}

fn load_run(dir: &Path) -> anyhow::Result<(RunManifest, Scenario, DiscreteMeasure)> {
    let m = RunManifest::read(dir)?;
    if m.kind != "solve" {
        bail!("{} holds a `{}` run, not a solve run", dir.display(), m.kind);
    }
    let s = read_scenario(dir)?;
    let path = dir.join(MEASURE);
    let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let nu = io::read_measure_on(file, s.strategy_grid.clone()).with_context(|| format!("reading {}", path.display()))?;
    Ok((m, s, nu))
}

pub fn verify(args: VerifyArgs) -> anyhow::Result<Outcome> {
    let (m, s, nu) = load_run(&args.run)?;
    if s.hash() != m.scenario_hash {
        bail!("{} does not match the scenario hash in the manifest", SCENARIO);
    }
    let plan = wc(&s.mu, &nu, &s.cost.transport)?;
    let defect = equilibrium_defect_against(&plan.plan, &s.mu, &nu, &s.cost, None)?;
    let residual = if s.cost.kernel_is_symmetric() {
        Some(el_residual(&nu, &s.mu, &s.cost, None)?.relative)
    } else {
        None
    };
    let ok = defect.relative_defect <= args.tol && residual.map_or(true, |r| r <= args.tol);
    let summary = json!({
        "run": args.run.display().to_string(),
        "solver": m.solver,
        "tolerance": args.tol,
        "relative_defect": defect.relative_defect,
        "support_defect": defect.support_defect,
        "cost_scale": defect.cost_scale,
        "el_residual": residual,
        "duality_gap": plan.duality_gap,
        "verified": ok,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(if ok { Outcome::Done } else { Outcome::NotConverged })
}

pub fn compare(args: CompareArgs, argv: &[String]) -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let runs = args.runs.iter().map(|d| load_run(d)).collect::<anyhow::Result<Vec<_>>>()?;
    let (first, scenario, _) = &runs[0];
    for (dir, (m, _, _)) in args.runs.iter().zip(&runs).skip(1) {
        if m.scenario_hash != first.scenario_hash {
            bail!(
                "scenario hash mismatch: {} has {} but {} has {}",
                args.runs[0].display(),
                first.scenario_hash,
                dir.display(),
                m.scenario_hash
            );
        }
    }
    let n = runs.len();
    let mut matrix = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in a + 1..n {
            let d = w1_distance(&runs[a].2, &runs[b].2)?;
            matrix[a][b] = d;
            matrix[b][a] = d;
        }
    }
    let labels: Vec<String> = args
        .runs
        .iter()
        .zip(&runs)
        .map(|(d, (m, _, _))| format!("{}:{}", m.solver.as_deref().unwrap_or("?"), d.display()))
        .collect();
    let max = matrix.iter().flatten().copied().fold(0.0, f64::max);

    prepare_out(&args.out)?;
    io::write_matrix(create(&args.out.join(MATRIX))?, &labels, &matrix)?;
    let mut m = RunManifest::new("compare", argv, scenario);
    m.files = vec![MATRIX.to_string()];
    m.summary = json!({ "runs": labels, "max_pairwise_w1": max });
    m.wall_time_seconds = start.elapsed().as_secs_f64();
    m.write(&args.out)?;
    println!("max pairwise W1 = {max:.6e}");
    Ok(Outcome::Done)
}

pub fn converge_n(args: ConvergeArgs, argv: &[String]) -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let s = load(&args.overrides)?;
    let kind: SolverKind = args.solver.parse()?;
    if args.n_list.is_empty() || args.seeds == 0 {
        bail!("--n-list and --seeds must be nonempty");
    }
    let base = args.overrides.seed.unwrap_or(1);
    let seeds: Vec<u64> = (base..base + args.seeds).collect();
    let reference = run_solver(&s, kind, Init::Reference)?;
    let probe = build_finite_game(&s, LIPSCHITZ_GAME_SIZE, Sampling::Iid { seed: base })?;
    let k = estimate_lipschitz(&probe, LIPSCHITZ_SAMPLES, base)?;
    let modulus = if k > 0.0 { Some(ModulusOfContinuity::linear(k)?) } else { None };
    let rows = convergence_experiment(&s, &args.n_list, &seeds, &reference.final_nu, modulus)?;

    let mut ns = args.n_list.clone();
    ns.sort_unstable();
    ns.dedup();
    let medians: Vec<Option<f64>> = ns.iter().map(|&n| median_w1(&rows, n)).collect();
    let decreasing = medians.windows(2).all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b < a));
    let first_to_last = matches!((medians.first(), medians.last()), (Some(Some(a)), Some(Some(b))) if b < a);

    let out = &args.out;
    prepare_out(out)?;
    fs::write(out.join(SCENARIO), s.to_json())?;
    io::write_experiment(create(&out.join(EXPERIMENT))?, &rows)?;
    write_measure(out, REFERENCE, &reference.final_nu, &s)?;
    let mut m = RunManifest::new("converge-n", argv, &s);
    m.solver = Some(kind.to_string());
    m.seeds = seeds;
    m.iterations = Some(reference.iterations);
    m.converged = Some(reference.converged);
    m.stop_reason = Some(reference.stop_reason.clone());
    m.files = vec![SCENARIO.to_string(), EXPERIMENT.to_string(), REFERENCE.to_string()];
    m.summary = json!({
        "n": ns,
        "median_w1_to_ref": medians,
        "lipschitz_estimate": k,
        "strictly_decreasing": decreasing,
        "last_below_first": first_to_last,
        "pure_nash_found": rows.iter().filter(|r| r.pure_nash_found).count(),
        "cells": rows.len(),
    });
    m.wall_time_seconds = start.elapsed().as_secs_f64();
    m.write(out)?;
    for (n, med) in ns.iter().zip(&medians) {
        println!("N = {n:>6}  median W1 to reference = {}", med.map_or("none".into(), |v| format!("{v:.6e}")));
    }
    println!("W1 decreasing from first to last N: {first_to_last} (strictly monotone: {decreasing})");
    Ok(if reference.converged { Outcome::Done } else { Outcome::NotConverged })
}

pub fn distance(args: DistanceArgs) -> anyhow::Result<Outcome> {
    let read = |p: &Path| -> anyhow::Result<_> {
        let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
        io::read_measure(f).with_context(|| format!("reading {}", p.display()))
    };
    let (a, b) = (read(&args.a)?, read(&args.b)?);
    let value = match args.metric {
        Metric::W1 => w1(&a, &b)?,
        Metric::Wc => wc_atoms(&a, &b, &TransportCost::new(args.exponent, args.scale)?)?,
        Metric::Quotient => {
            let uniform = |w: &[f64]| w.iter().all(|x| (x - w[0]).abs() <= 1e-12 * w[0].abs());
            if !uniform(a.weights()) || !uniform(b.weights()) {
                bail!("quotient distance needs equally weighted point lists");
            }
            quotient_perm_distance(a.points(), b.points())?
        }
    };
    println!("{}", io::format_f64(value));
    Ok(Outcome::Done)
}
