//! One function per subcommand. Each validates its inputs, runs the core
//! pipeline, writes its artifacts and returns the exit status.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use approach_core::bridge::io::read_binary;
use approach_core::bridge::{
    build_target_cylinder, compare_grids, decreasing_by_sections_check, programmed_iteration, Absorber, BridgeError,
    FlowCache, GridComparison, GridSpec, IterationResult, MembershipMode, SectionsReport, TimeSlicedGrid,
};
use approach_core::flows::{check_flow_commutation, CommutationSample};
use approach_core::gamespec::{build_transformed, AuxiliarySystem, Game};
use approach_core::isaacs::{isaacs_gap, isaacs_gap_transformed, IsaacsReport};
use approach_core::sampling::{rng, sphere_directions, uniform_in_box};
use approach_core::simulate::{run_trials, trial_motion, TrialGroup};
use approach_core::vectorfield::{lie_bracket, norm, DEFAULT_FD_STEP};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::output::{OutDir, Timings};
use crate::problem::Problem;
use crate::{CliError, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Commute,
    Bracket,
    Isaacs,
    Sections,
}

pub fn read_grid(path: &Path) -> Result<TimeSlicedGrid, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    read_binary(bytes.as_slice()).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn matching_grid(problem: &Problem, path: &Path) -> Result<TimeSlicedGrid, CliError> {
    let grid = read_grid(path)?;
    if grid.spec() != &problem.spec {
        return Err(CliError::Input(format!("{}: grid does not match the problem's grid section", path.display())));
    }
    Ok(grid)
}

fn absorber<G: Game + ?Sized>(problem: &Problem, game: &G, target: TimeSlicedGrid) -> Result<Absorber, CliError> {
    let s = &problem.file.solver;
    let cache = FlowCache::build(game, &problem.spec, s.substeps)?;
    Ok(Absorber::new(cache, target, s.membership)?.with_constraint_slack(s.constraint_slack))
}

#[derive(Debug, Serialize)]
struct IterationSummary {
    fixed_point: bool,
    /// Smallest `k ≥ 1` with `A(W_k) = W_k`.
    iterations: Option<usize>,
    sizes: Vec<usize>,
    final_cells: usize,
    dropped_landings: usize,
}

/// Runs the iteration; on non-convergence exports both last iterates
/// under `stem` before reporting the error.
fn iterate(
    absorber: &Absorber,
    max_iter: usize,
    out: &OutDir,
    stem: &str,
) -> Result<(IterationResult, IterationSummary), (CliError, IterationSummary)> {
    match programmed_iteration(absorber, max_iter) {
        Ok(r) => {
            let summary = IterationSummary {
                fixed_point: true,
                iterations: Some(r.iterations()),
                sizes: r.sizes.clone(),
                final_cells: r.fixed_point().count(),
                dropped_landings: absorber.cache().dropped(),
            };
            Ok((r, summary))
        }
        Err(BridgeError::NonConvergence { max_iter, previous, last, sizes }) => {
            let summary = IterationSummary {
                fixed_point: false,
                iterations: None,
                final_cells: last.count(),
                sizes,
                dropped_landings: absorber.cache().dropped(),
            };
            let written = out
                .write_grid(&format!("{stem}_previous"), &previous)
                .and_then(|_| out.write_grid(&format!("{stem}_last"), &last));
            let err = match written {
                Ok(()) => CliError::NonConvergence(format!(
                    "{stem}: no fixed point after {max_iter} iterations; last two iterates written to {}",
                    out.path(&format!("{stem}_{{previous,last}}.grid")).display()
                )),
                Err(e) => e,
            };
            Err((err, summary))
        }
        Err(e) => Err((
            e.into(),
            IterationSummary {
                fixed_point: false,
                iterations: None,
                sizes: vec![],
                final_cells: 0,
                dropped_landings: 0,
            },
        )),
    }
}

#[derive(Debug, Serialize)]
struct SolveReport<'a> {
    command: &'static str,
    schema_version: u32,
    seed: u64,
    membership: MembershipMode,
    constraint_slack: f64,
    grid: &'a GridSpec,
    target_cells: usize,
    target_dropped_landings: usize,
    iteration: IterationSummary,
}

pub fn solve(problem: &Problem, out: &OutDir) -> Result<Status, CliError> {
    let mut timings = Timings::default();
    let (target, target_dropped) = timings.time("target", || problem.target_grid())?;
    out.write_grid("target", &target)?;
    let abs = timings.time("flow_cache", || absorber(problem, &problem.game, target.clone()))?;
    let result = timings.time("iteration", || iterate(&abs, problem.file.solver.max_iter, out, "bridge"));
    let (outcome, iteration) = match result {
        Ok((r, s)) => (Ok(r), s),
        Err((e, s)) => (Err(e), s),
    };
    let report = SolveReport {
        command: "solve",
        schema_version: problem.file.schema_version,
        seed: problem.file.seed,
        membership: problem.file.solver.membership,
        constraint_slack: problem.file.solver.constraint_slack,
        grid: &problem.spec,
        target_cells: target.count(),
        target_dropped_landings: target_dropped,
        iteration,
    };
    if let Ok(r) = &outcome {
        out.write_grid("bridge", r.fixed_point())?;
        println!(
            "fixed point after {} iteration(s): {} of {} cells (target {})",
            r.iterations(),
            r.fixed_point().count(),
            problem.spec.cell_count() * problem.spec.slice_count(),
            target.count()
        );
        println!("sizes: {:?}", r.sizes);
    }
    out.write_json("report.json", &report)?;
    out.write_json("timings.json", &timings)?;
    outcome.map(|_| Status::Pass)
}

fn commutation_samples(problem: &Problem, aux: &AuxiliarySystem, r: &mut ChaCha8Rng) -> Vec<CommutationSample> {
    let game = &problem.game;
    let c = &problem.file.checks;
    let xs = uniform_in_box(r, problem.spec.lo(), problem.spec.hi(), c.samples);
    xs.into_iter()
        .map(|x| {
            let (p, q) = (r.gen_range(0..game.p().len()), r.gen_range(0..game.q().len()));
            let w = r.gen_range(0..aux.omega().len());
            CommutationSample {
                x,
                f_params: game.params(p, q),
                g_params: aux.omega().points()[w].clone(),
                tau_f: r.gen_range(0.0..=c.max_tau),
                tau_g: r.gen_range(0.0..=c.max_tau),
            }
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct CommutationSummary {
    samples: usize,
    max_tau: f64,
    max_discrepancy: f64,
    tolerance: f64,
    holds: bool,
}

fn commutation(problem: &Problem, aux: &AuxiliarySystem) -> Result<CommutationSummary, CliError> {
    let c = &problem.file.checks;
    let samples = commutation_samples(problem, aux, &mut rng(problem.file.seed));
    let rep = check_flow_commutation(problem.game.field(), aux.field(), &samples, c.substeps, false)?;
    Ok(CommutationSummary {
        samples: samples.len(),
        max_tau: c.max_tau,
        max_discrepancy: rep.max_discrepancy,
        tolerance: c.commute_tolerance,
        holds: rep.max_discrepancy <= c.commute_tolerance,
    })
}

#[derive(Debug, Serialize)]
struct CompareRow {
    k: usize,
    #[serde(flatten)]
    comparison: GridComparison,
}

#[derive(Debug, Serialize)]
struct TransformReport<'a> {
    command: &'static str,
    schema_version: u32,
    seed: u64,
    membership: MembershipMode,
    constraint_slack: f64,
    grid: &'a GridSpec,
    commutation: CommutationSummary,
    forced: bool,
    direct: Option<IterationSummary>,
    transformed: Option<IterationSummary>,
    per_k: Vec<CompareRow>,
    /// `|W ∆ W*| / |W|` at the fixed points.
    final_symmetric_difference_fraction: Option<f64>,
    pass: Option<bool>,
}

pub fn transform_compare(problem: &Problem, out: &OutDir, force: bool) -> Result<Status, CliError> {
    let mut timings = Timings::default();
    let aux = problem.transform_aux()?;
    let commutation = timings.time("commutation", || commutation(problem, &aux))?;
    let mut report = TransformReport {
        command: "transform-compare",
        schema_version: problem.file.schema_version,
        seed: problem.file.seed,
        membership: problem.file.solver.membership,
        constraint_slack: problem.file.solver.constraint_slack,
        grid: &problem.spec,
        forced: force,
        direct: None,
        transformed: None,
        per_k: vec![],
        final_symmetric_difference_fraction: None,
        pass: None,
        commutation,
    };
    println!(
        "commutation: max discrepancy {:e} over {} samples (tolerance {:e})",
        report.commutation.max_discrepancy, report.commutation.samples, report.commutation.tolerance
    );
    if !report.commutation.holds && !force {
        out.write_json("report.json", &report)?;
        out.write_json("timings.json", &timings)?;
        return Err(CliError::Hypothesis(format!(
            "flows of f and g do not commute (max discrepancy {:e} > {:e}); rerun with --force to compare anyway",
            report.commutation.max_discrepancy, report.commutation.tolerance
        )));
    }

    let tp = build_transformed(&problem.game, &aux).map_err(|e| CliError::Input(e.to_string()))?;
    let (target, _) = timings.time("target", || problem.target_grid())?;
    let target_star = build_target_cylinder(tp.terminal(), &problem.spec, true);
    out.write_grid("target", &target)?;
    out.write_grid("target_star", &target_star)?;
    let max_iter = problem.file.solver.max_iter;

    let direct_abs = timings.time("flow_cache", || absorber(problem, &problem.game, target))?;
    let direct = timings.time("iteration", || iterate(&direct_abs, max_iter, out, "bridge"));
    drop(direct_abs);
    let star_abs = timings.time("flow_cache_transformed", || absorber(problem, &tp, target_star))?;
    let star = timings.time("iteration_transformed", || iterate(&star_abs, max_iter, out, "bridge_star"));
    drop(star_abs);

    let (direct, star) = match (direct, star) {
        (Ok(d), Ok(s)) => (d, s),
        (d, s) => {
            let mut first_err = None;
            for r in [d, s] {
                let (e, summary) = match r {
                    Ok((_, summary)) => (None, summary),
                    Err((e, summary)) => (Some(e), summary),
                };
                if report.direct.is_none() {
                    report.direct = Some(summary);
                } else {
                    report.transformed = Some(summary);
                }
                first_err = first_err.or(e);
            }
            out.write_json("report.json", &report)?;
            out.write_json("timings.json", &timings)?;
            return Err(first_err.expect("one side failed"));
        }
    };
    let ((w, w_sum), (ws, ws_sum)) = (direct, star);
    let last = w.iterations().max(ws.iterations());
    timings.time("compare", || -> Result<(), CliError> {
        for k in 0..=last {
            let (a, b) = (w.iterate(k), ws.iterate(k));
            out.write_grid_binary(&format!("iterates/w_{k}"), a)?;
            out.write_grid_binary(&format!("iterates/wstar_{k}"), b)?;
            report.per_k.push(CompareRow { k, comparison: compare_grids(a, b, 1)? });
        }
        Ok(())
    })?;
    out.write_grid("bridge", w.fixed_point())?;
    out.write_grid("bridge_star", ws.fixed_point())?;
    let exact = compare_grids(w.fixed_point(), ws.fixed_point(), 0)?;
    let fraction = exact.symmetric_difference as f64 / (exact.a_cells.max(1)) as f64;
    let pass = report.per_k.iter().all(|r| r.comparison.mutual_inclusion());

    println!("direct: k = {}, sizes {:?}", w.iterations(), w.sizes);
    println!("transformed: k = {}, sizes {:?}", ws.iterations(), ws.sizes);
    for r in &report.per_k {
        let c = &r.comparison;
        println!(
            "k = {:>2}: |W| = {:>8}, |W*| = {:>8}, sym diff {:>7}, mutual inclusion (r = 1): {}",
            r.k,
            c.a_cells,
            c.b_cells,
            c.symmetric_difference,
            c.mutual_inclusion()
        );
    }
    println!("final symmetric difference: {:.4}% of |W|", 100.0 * fraction);
    println!("{}", if pass { "PASS" } else { "FAIL" });

    report.direct = Some(w_sum);
    report.transformed = Some(ws_sum);
    report.final_symmetric_difference_fraction = Some(fraction);
    report.pass = Some(pass);
    out.write_json("report.json", &report)?;
    out.write_json("timings.json", &timings)?;
    Ok(Status::from_pass(pass))
}

#[derive(Debug, Serialize)]
struct BracketSummary {
    samples: usize,
    max_norm: f64,
    tolerance: f64,
    holds: bool,
}

#[derive(Debug, Serialize)]
struct IsaacsSummary {
    samples: usize,
    tolerance: f64,
    max_gap: f64,
    max_gap_transformed: Option<f64>,
    /// Samples whose transformed min-max is attained on the `g` branch.
    auxiliary_branch_samples: Option<usize>,
    holds: bool,
}

#[derive(Debug, Serialize)]
struct SectionsSummary {
    grid_cells: usize,
    tolerance_cells: usize,
    #[serde(flatten)]
    report: SectionsReport,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum CheckResult {
    Commute(CommutationSummary),
    Bracket(BracketSummary),
    Isaacs(IsaacsSummary),
    Sections(SectionsSummary),
}

#[derive(Debug, Serialize)]
struct CheckReport {
    command: &'static str,
    schema_version: u32,
    seed: u64,
    check: CheckKind,
    result: CheckResult,
    pass: bool,
}

pub fn check(
    problem: &Problem,
    which: CheckKind,
    grid: Option<&Path>,
    out: Option<&OutDir>,
) -> Result<Status, CliError> {
    let c = &problem.file.checks;
    let mut extra: Option<(String, String)> = None;
    let (result, pass) = match which {
        CheckKind::Commute => {
            let aux = problem.transform_aux()?;
            let s = commutation(problem, &aux)?;
            println!(
                "max commutation discrepancy {:e} over {} samples (tolerance {:e})",
                s.max_discrepancy, s.samples, s.tolerance
            );
            let pass = s.holds;
            (CheckResult::Commute(s), pass)
        }
        CheckKind::Bracket => {
            let aux = problem.transform_aux()?;
            let mut r = rng(problem.file.seed);
            let samples = commutation_samples(problem, &aux, &mut r);
            let mut max_norm = 0.0f64;
            for s in &samples {
                let b = lie_bracket(problem.game.field(), aux.field(), &s.x, &s.f_params, &s.g_params, DEFAULT_FD_STEP)
                    .map_err(|e| CliError::Input(e.to_string()))?;
                max_norm = max_norm.max(norm(&b));
            }
            let s = BracketSummary {
                samples: samples.len(),
                max_norm,
                tolerance: c.bracket_tolerance,
                holds: max_norm <= c.bracket_tolerance,
            };
            println!("max ‖[f, g]‖ {:e} over {} samples (tolerance {:e})", s.max_norm, s.samples, s.tolerance);
            let pass = s.holds;
            (CheckResult::Bracket(s), pass)
        }
        CheckKind::Isaacs => {
            let cfg = &problem.file.isaacs;
            let n = problem.spec.ndim();
            let xs = uniform_in_box(&mut rng(problem.file.seed), problem.spec.lo(), problem.spec.hi(), cfg.samples);
            let ss = sphere_directions(n, cfg.samples);
            let g = &problem.game;
            let direct = isaacs_gap(g.field(), g.p(), g.q(), &xs, &ss)?;
            let star: Option<IsaacsReport> = match problem.transform_aux() {
                Ok(aux) => {
                    let tp = build_transformed(g, &aux).map_err(|e| CliError::Input(e.to_string()))?;
                    Some(isaacs_gap_transformed(&tp, &xs, &ss)?)
                }
                Err(_) => None,
            };
            let holds = direct.holds(cfg.tolerance) && star.as_ref().is_none_or(|s| s.holds(cfg.tolerance));
            println!(
                "max Isaacs gap {:e} over {} samples (tolerance {:e})",
                direct.max_gap, cfg.samples, cfg.tolerance
            );
            if let Some(s) = &star {
                println!("max Isaacs gap, transformed dynamics: {:e}", s.max_gap);
            }
            extra = Some(("isaacs.csv".into(), direct.to_csv()));
            let s = IsaacsSummary {
                samples: cfg.samples,
                tolerance: cfg.tolerance,
                max_gap: direct.max_gap,
                max_gap_transformed: star.as_ref().map(|s| s.max_gap),
                auxiliary_branch_samples: star.as_ref().map(|s| {
                    s.samples.iter().filter(|x| x.case == Some(approach_core::gamespec::Branch::Auxiliary)).count()
                }),
                holds,
            };
            (CheckResult::Isaacs(s), holds)
        }
        CheckKind::Sections => {
            let path = grid.ok_or_else(|| CliError::Input("the sections check needs --grid <FILE>".into()))?;
            let e = matching_grid(problem, path)?;
            let aux = problem.transform_aux()?;
            let opts = problem.sections_options();
            let report = decreasing_by_sections_check(&e, &aux, &opts)?;
            println!(
                "{} backward paths checked, {} left the grid box, {} violation(s) beyond {} cell(s)",
                report.checked_paths,
                report.out_of_bounds,
                report.violations.len(),
                opts.tolerance_cells
            );
            let pass = report.is_clean();
            (
                CheckResult::Sections(SectionsSummary {
                    grid_cells: e.count(),
                    tolerance_cells: opts.tolerance_cells,
                    report,
                }),
                pass,
            )
        }
    };
    println!("{}", if pass { "PASS" } else { "FAIL" });
    if let Some(out) = out {
        let report = CheckReport {
            command: "check",
            schema_version: problem.file.schema_version,
            seed: problem.file.seed,
            check: which,
            result,
            pass,
        };
        out.write_json("check.json", &report)?;
        if let Some((name, body)) = extra {
            out.write(&name, body.as_bytes())?;
        }
    }
    Ok(Status::from_pass(pass))
}

#[derive(Debug, Serialize)]
struct SimulateReport<'a> {
    command: &'static str,
    schema_version: u32,
    seed: u64,
    grid: &'a GridSpec,
    bridge_cells: usize,
    starts: usize,
    epsilon: f64,
    vacuous: bool,
    overall_fraction: Option<f64>,
    groups: &'a [TrialGroup],
}

pub fn simulate(problem: &Problem, bridge_path: &Path, out: &OutDir, trajectories: usize) -> Result<Status, CliError> {
    let mut timings = Timings::default();
    let bridge = matching_grid(problem, bridge_path)?;
    let (target, _) = timings.time("target", || problem.target_grid())?;
    let opts = problem.trial_options();
    let report = timings.time("trials", || run_trials(&problem.game, &bridge, &target, &opts))?;
    if report.vacuous {
        log::warn!("no start positions in the requested region: the trial report is vacuous");
        println!("vacuous: no start positions in the requested region");
    }
    for g in &report.groups {
        match g.fraction {
            Some(f) => println!(
                "{:?} at {} steps: {}/{} captured ({:.1}%)",
                g.adversary,
                g.steps,
                g.successes,
                g.trials,
                100.0 * f
            ),
            None => println!("{:?} at {} steps: no trials", g.adversary, g.steps),
        }
    }
    out.write("trials.csv", report.to_csv().as_bytes())?;
    for (i, o) in report.outcomes.iter().take(trajectories).enumerate() {
        let m = trial_motion(&problem.game, &bridge, &target, &opts, &report.starts[o.start], o.adversary, o.steps)?;
        out.write(&format!("trajectories/trial_{i}.csv"), m.to_csv().as_bytes())?;
    }
    let summary = SimulateReport {
        command: "simulate",
        schema_version: problem.file.schema_version,
        seed: problem.file.seed,
        grid: &problem.spec,
        bridge_cells: bridge.count(),
        starts: report.starts.len(),
        epsilon: report.epsilon,
        vacuous: report.vacuous,
        overall_fraction: report.overall_fraction(),
        groups: &report.groups,
    };
    out.write_json("report.json", &summary)?;
    out.write_json("timings.json", &timings)?;
    Ok(Status::Pass)
}

/// Boundary cells (an occupied cell with an unoccupied or out-of-domain
/// face neighbor) of the selected slices, as CSV `slice,t,x1..xn`.
pub fn boundary_csv(grid: &TimeSlicedGrid, slice: Option<usize>) -> Result<String, CliError> {
    let spec = grid.spec();
    let slices: Vec<usize> = match slice {
        Some(k) if k >= spec.slice_count() => {
            return Err(CliError::Input(format!("slice {k} out of range (grid has {} slices)", spec.slice_count())));
        }
        Some(k) => vec![k],
        None => (0..spec.slice_count()).collect(),
    };
    let cols: Vec<String> = (1..=spec.ndim()).map(|i| format!("x{i}")).collect();
    let mut out = format!("slice,t,{}\n", cols.join(","));
    for k in slices {
        let set = grid.slice(k);
        for c in set.iter() {
            if spec.face_neighbors(c).any(|n| n.is_none_or(|n| !set.contains(n))) {
                let xs: Vec<String> = spec.center(c).iter().map(|v| format!("{v:e}")).collect();
                let _ = writeln!(out, "{k},{:e},{}", spec.time(k), xs.join(","));
            }
        }
    }
    Ok(out)
}

pub fn export_plot(grid_path: &Path, slice: Option<usize>, out: Option<&Path>) -> Result<Status, CliError> {
    let grid = read_grid(grid_path)?;
    let csv = boundary_csv(&grid, slice)?;
    match out {
        Some(path) => crate::output::write_atomic(path, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    Ok(Status::Pass)
}
