//! End-to-end acceptance gate. Every criterion runs at its stated tolerance
//! and prints one PASS/FAIL line; the test fails if any criterion fails.
//!
//! Run with `cargo test -p approach-cli --test acceptance -- --nocapture`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use approach_cli::problem::{Problem, ProblemFile};
use approach_core::bridge::io::{read_binary, read_csv, to_binary, write_csv};
use approach_core::bridge::{
    build_target_cylinder, compare_grids, decreasing_by_sections_check, programmed_iteration, Absorber, CellSet,
    FlowCache, GridSpec, IterationResult, TimeSlicedGrid,
};
use approach_core::flows::{
    check_flow_commutation, check_rearrangement, group_first, CommutationSample, FamilySegment,
};
use approach_core::gamespec::{build_transformed, Game};
use approach_core::isaacs::{isaacs_gap, isaacs_gap_transformed};
use approach_core::sampling::{rng, sphere_directions, uniform_in_box};
use approach_core::simulate::{run_trials, AdversaryKind, StartRegion};
use approach_core::vectorfield::{lie_bracket, norm, DEFAULT_FD_STEP};
use rand::Rng;
use tempfile::TempDir;

fn problems() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems")
}

fn load(name: &str) -> Problem {
    Problem::load(&problems().join(name)).unwrap()
}

/// Same problem with a different grid resolution.
fn regridded(name: &str, cells: Vec<usize>, time_steps: usize) -> Problem {
    let path = problems().join(name);
    let mut file: ProblemFile = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    file.grid.cells = cells;
    file.grid.time_steps = time_steps;
    Problem::from_file(file, problems()).unwrap()
}

fn absorber<G: Game + ?Sized>(p: &Problem, game: &G, target: TimeSlicedGrid) -> Absorber {
    let s = &p.file.solver;
    let cache = FlowCache::build(game, &p.spec, s.substeps).unwrap();
    Absorber::new(cache, target, s.membership).unwrap().with_constraint_slack(s.constraint_slack)
}

fn grid_from(spec: &GridSpec, member: impl Fn(usize, &[f64]) -> bool) -> TimeSlicedGrid {
    let slices =
        (0..spec.slice_count()).map(|k| CellSet::from_fn(spec.cell_count(), |c| member(k, &spec.center(c)))).collect();
    TimeSlicedGrid::from_slices(spec, slices).unwrap()
}

/// Everything learned from one game iterated to its fixed point.
struct Run {
    result: IterationResult,
    /// Every iterate is a bitwise subset of its predecessor.
    monotone: bool,
    /// `A(W_final) == W_final`, recomputed.
    stationary: bool,
    /// This game's operator applied to each probe set.
    absorbed: Vec<TimeSlicedGrid>,
}

fn run<G: Game + ?Sized>(p: &Problem, game: &G, target: TimeSlicedGrid, probes: &[TimeSlicedGrid]) -> Run {
    let abs = absorber(p, game, target);
    let result = programmed_iteration(&abs, p.file.solver.max_iter).unwrap();
    let monotone = (1..=result.iterations()).all(|k| result.iterate(k).is_subset(result.iterate(k - 1)));
    let stationary = abs.apply(result.fixed_point()).unwrap() == *result.fixed_point();
    let absorbed = probes.iter().map(|e| abs.apply(e).unwrap()).collect();
    Run { result, monotone, stationary, absorbed }
}

/// Both iterations of one problem; `probes` are extra sets `E` to which
/// both operators are applied.
struct Pair {
    target: TimeSlicedGrid,
    target_star: TimeSlicedGrid,
    direct: Run,
    star: Run,
}

fn pair(p: &Problem, probes: impl FnOnce(&TimeSlicedGrid) -> Vec<TimeSlicedGrid>) -> (Pair, Vec<TimeSlicedGrid>) {
    let aux = p.transform_aux().unwrap();
    let tp = build_transformed(&p.game, &aux).unwrap();
    let (target, _) = p.target_grid().unwrap();
    let target_star = build_target_cylinder(tp.terminal(), &p.spec, true);
    let probes = probes(&target);
    let direct = run(p, &p.game, target.clone(), &probes);
    let star = run(p, &tp, target_star.clone(), &probes);
    (Pair { target, target_star, direct, star }, probes)
}

fn per_k_mutual_inclusion(pair: &Pair) -> (bool, usize) {
    let (w, ws) = (&pair.direct.result, &pair.star.result);
    let last = w.iterations().max(ws.iterations());
    let ok = (0..=last).all(|k| compare_grids(w.iterate(k), ws.iterate(k), 1).unwrap().mutual_inclusion());
    (ok, last)
}

fn final_symmetric_fraction(pair: &Pair) -> f64 {
    let c = compare_grids(pair.direct.result.fixed_point(), pair.star.result.fixed_point(), 0).unwrap();
    c.symmetric_difference as f64 / c.a_cells.max(1) as f64
}

/// Game-tree search for the discrete simple-motion game: from `x` at step
/// `j`, can the first player reach `|x| ≤ r` against the constant `v`
/// while staying inside `[lo, hi]`?
fn reaches(x: f64, j: usize, steps: usize, dt: f64, us: &[f64], v: f64, (lo, hi, r): (f64, f64, f64)) -> bool {
    if x.abs() <= r + 1e-12 {
        return true;
    }
    j < steps
        && us.iter().any(|&u| {
            let y = x + (u + v) * dt;
            (lo..=hi).contains(&y) && reaches(y, j + 1, steps, dt, us, v, (lo, hi, r))
        })
}

fn simple_motion_band(spec: &GridSpec) -> TimeSlicedGrid {
    grid_from(spec, |k, x| x[0].abs() <= 0.2 + 0.5 * (1.0 - spec.time(k)) + 1e-9)
}

#[derive(Default)]
struct Gate {
    lines: Vec<(String, bool)>,
}

impl Gate {
    fn record(&mut self, name: &str, pass: bool, detail: String) {
        let line = format!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        println!("{line}");
        self.lines.push((line, pass));
    }
}

fn approach(args: &[&dyn AsRef<std::ffi::OsStr>], threads: &str) -> i32 {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_approach"));
    for a in args {
        cmd.arg(a);
    }
    cmd.env("RAYON_NUM_THREADS", threads).output().unwrap().status.code().unwrap_or(-1)
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = vec![];
    for e in fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        if path.is_dir() {
            out.extend(files(&path));
        } else {
            out.push(path);
        }
    }
    out.sort();
    out
}

fn round_trips(g: &TimeSlicedGrid) -> bool {
    let bytes = to_binary(g);
    let back = read_binary(bytes.as_slice()).unwrap();
    let mut csv = Vec::new();
    write_csv(g, &mut csv).unwrap();
    let from_csv = read_csv(csv.as_slice(), g.spec()).unwrap();
    back == *g && to_binary(&back) == bytes && from_csv == *g
}

#[test]
fn acceptance() {
    let mut gate = Gate::default();

    // 1: simple motion, cylinder target
    let t = Instant::now();
    let p1 = load("simple_motion.json");
    let (one, _) = pair(&p1, |_| vec![]);
    let c1_seconds = t.elapsed().as_secs_f64();
    let (per_k, last) = per_k_mutual_inclusion(&one);
    let frac1 = final_symmetric_fraction(&one);
    let band = simple_motion_band(&p1.spec);
    let vs_band = compare_grids(one.direct.result.fixed_point(), &band, 1).unwrap().mutual_inclusion();

    let coarse = regridded("simple_motion.json", vec![21], 5);
    let cs = &coarse.spec;
    let us: Vec<f64> = coarse.game.p().points().iter().map(|u| u[0]).collect();
    let vs: Vec<f64> = coarse.game.q().points().iter().map(|v| v[0]).collect();
    let oracle = grid_from(cs, |k, x| {
        vs.iter().all(|&v| reaches(x[0], k, cs.time_steps(), cs.dt(), &us, v, (cs.lo()[0], cs.hi()[0], 0.2)))
    });
    let coarse_w = pair(&coarse, |_| vec![]).0.direct.result;
    let oracle_vs_band = compare_grids(&oracle, &simple_motion_band(cs), 1).unwrap().mutual_inclusion();
    let oracle_vs_grid = compare_grids(coarse_w.fixed_point(), &oracle, 1).unwrap().mutual_inclusion();
    gate.record(
        "criterion 1 (simple motion: W vs W*, analytic band, game-tree oracle)",
        per_k && frac1 <= 0.02 && vs_band && oracle_vs_band && oracle_vs_grid && c1_seconds < 60.0,
        format!(
            "k = {}, k* = {}, mutual inclusion r=1 for k ≤ {last}: {per_k}; final sym diff {:.3}% (≤ 2%); \
             band {vs_band}; oracle vs band {oracle_vs_band}; 21×6 grid vs oracle {oracle_vs_grid}; {c1_seconds:.1} s (< 60 s)",
            one.direct.result.iterations(),
            one.star.result.iterations(),
            100.0 * frac1
        ),
    );

    // 2: sinking island, controllability target
    let t = Instant::now();
    let p2 = load("sinking_island.json");
    let aux2 = p2.transform_aux().unwrap();
    // E = M and a thicker set {|y| ≤ 1 − t + 0.25, |z| ≤ 0.25} ⊇ M; both
    // are closed under backward flows of g = (w, 0), |w| ≤ 1
    let (two, probes) = pair(&p2, |m| {
        let thick =
            grid_from(&p2.spec, |k, x| x[0].abs() <= 1.25 - p2.spec.time(k) + 1e-9 && x[1].abs() <= 0.25 + 1e-9);
        vec![m.clone(), thick.union(m).unwrap()]
    });
    let c2_seconds = t.elapsed().as_secs_f64();
    let analytic_m = grid_from(&p2.spec, |k, x| x[0].abs() <= 1.0 - p2.spec.time(k) + 1e-9 && x[1].abs() < 1e-12);
    let m_ok = (0..p2.spec.slice_count()).all(|k| {
        let single = |g: &TimeSlicedGrid| {
            let mut slices = vec![CellSet::empty(p2.spec.cell_count()); p2.spec.slice_count()];
            slices[k] = g.slice(k).clone();
            TimeSlicedGrid::from_slices(&p2.spec, slices).unwrap()
        };
        compare_grids(&single(&two.target), &single(&analytic_m), 1).unwrap().mutual_inclusion()
    });
    let f2 = p2.game.field();
    let mut r = rng(20);
    let mut bracket = 0.0f64;
    for x in uniform_in_box(&mut r, p2.spec.lo(), p2.spec.hi(), 100) {
        let u = p2.game.p().points()[r.gen_range(0..p2.game.p().len())][0];
        let v: f64 = r.gen_range(-0.5..=0.5);
        let w = aux2.omega().points()[r.gen_range(0..aux2.omega().len())][0];
        bracket = bracket.max(norm(&lie_bracket(f2, aux2.field(), &x, &[u, v], &[w], DEFAULT_FD_STEP).unwrap()));
    }
    let samples: Vec<CommutationSample> = uniform_in_box(&mut r, p2.spec.lo(), p2.spec.hi(), 100)
        .into_iter()
        .map(|x| CommutationSample {
            x,
            f_params: vec![r.gen_range(-2.0..=2.0), r.gen_range(-0.5..=0.5)],
            g_params: vec![r.gen_range(-1.0..=1.0)],
            tau_f: r.gen_range(0.0..=1.0),
            tau_g: r.gen_range(0.0..=1.0),
        })
        .collect();
    let commute = check_flow_commutation(f2, aux2.field(), &samples, 16, false).unwrap().max_discrepancy;
    let (per_k2, last2) = per_k_mutual_inclusion(&two);
    let frac2 = final_symmetric_fraction(&two);
    gate.record(
        "criterion 2 (sinking island: controllability target, bracket, commutation, W vs W*)",
        m_ok && bracket <= 1e-8 && commute <= 1e-6 && per_k2 && c2_seconds < 300.0,
        format!(
            "M vs {{|y| ≤ 1−t, z = 0}} per slice r=1: {m_ok}; max ‖[f, g]‖ {bracket:.2e} (≤ 1e-8); \
             max commutation {commute:.2e} (≤ 1e-6); k = {}, k* = {}, mutual inclusion r=1 for k ≤ {last2}: {per_k2}; \
             final sym diff {:.3}%; {c2_seconds:.1} s (< 300 s)",
            two.direct.result.iterations(),
            two.star.result.iterations(),
            100.0 * frac2
        ),
    );

    // 3: monotone iterates and a genuine fixed point
    let runs = [("1", &one.direct), ("1*", &one.star), ("2", &two.direct), ("2*", &two.star)];
    let c3 = runs.iter().all(|(_, r)| r.monotone && r.stationary && r.result.iterations() <= 30);
    let detail: Vec<String> = runs
        .iter()
        .map(|(n, r)| format!("{n}: k = {}, nested {}, A(W) = W {}", r.result.iterations(), r.monotone, r.stationary))
        .collect();
    gate.record("criterion 3 (nested iterates, fixed point within 30)", c3, detail.join("; "));

    // 4: sections property of A*(E), A(E) vs A*(E), regrouped schedules
    let opts = p2.sections_options();
    let violations = |e: &TimeSlicedGrid| decreasing_by_sections_check(e, &aux2, &opts).unwrap().violations.len();
    let full = TimeSlicedGrid::full(&p2.spec);
    // (E, A(E), A*(E)) for E = full, M, thick superset of M
    let mut cases = vec![(&full, two.direct.result.iterate(1), two.star.result.iterate(1))];
    cases.extend(probes.iter().zip(two.direct.absorbed.iter().zip(&two.star.absorbed)).map(|(e, (a, b))| (e, a, b)));
    let per_e: Vec<(bool, usize, bool)> = cases
        .iter()
        .map(|(e, a, b)| {
            (violations(e) == 0 && b.is_subset(e), violations(b), compare_grids(a, b, 1).unwrap().mutual_inclusion())
        })
        .collect();
    let family = [f2, aux2.field()];
    let mut r = rng(40);
    let mut regroup = 0.0f64;
    for _ in 0..50 {
        let n = r.gen_range(2..10);
        let schedule: Vec<FamilySegment> = (0..n)
            .map(|_| {
                let field = r.gen_range(0..2);
                let params = if field == 0 {
                    vec![r.gen_range(-2.0..=2.0), r.gen_range(-0.5..=0.5)]
                } else {
                    vec![r.gen_range(-1.0..=1.0)]
                };
                FamilySegment { field, params, duration: r.gen_range(0.0..0.2) }
            })
            .collect();
        let x0 = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
        let rep = check_rearrangement(&family, &x0, &schedule, &group_first(&schedule, 0), 16).unwrap();
        regroup = regroup.max(rep.discrepancy);
    }
    gate.record(
        "criterion 4 (A*(E) decreasing by sections, A(E) ≈ A*(E), regrouped schedules)",
        per_e.iter().all(|&(pre, v, same)| pre && v == 0 && same) && regroup <= 1e-6,
        format!(
            "E = full / M / thick ⊇ M: (E clean and A*(E) ⊆ E, violations in A*(E), A(E) vs A*(E) r=1) {per_e:?}; \
             max regrouping discrepancy {regroup:.2e} over 50 schedules (≤ 1e-6)"
        ),
    );

    // 5: Isaacs condition
    let mut gaps = vec![];
    for p in [&p1, &p2] {
        let xs = uniform_in_box(&mut rng(p.file.seed), p.spec.lo(), p.spec.hi(), 1000);
        let ss = sphere_directions(p.spec.ndim(), 1000);
        let tp = build_transformed(&p.game, &p.transform_aux().unwrap()).unwrap();
        gaps.push(isaacs_gap(p.game.field(), p.game.p(), p.game.q(), &xs, &ss).unwrap().max_gap);
        gaps.push(isaacs_gap_transformed(&tp, &xs, &ss).unwrap().max_gap);
    }
    let pg = load("product_game.json");
    let (ps, qs) = (pg.game.p().points(), pg.game.q().points());
    let xs = vec![vec![0.0]; 2];
    let ss = vec![vec![1.0], vec![-1.0]];
    let product = isaacs_gap(pg.game.field(), pg.game.p(), pg.game.q(), &xs, &ss).unwrap();
    let oracle_gap = ss
        .iter()
        .map(|s| {
            let h = |u: &[f64], v: &[f64]| s[0] * u[0] * v[0];
            let minmax =
                ps.iter().map(|u| qs.iter().map(|v| h(u, v)).fold(f64::MIN, f64::max)).fold(f64::MAX, f64::min);
            let maxmin =
                qs.iter().map(|v| ps.iter().map(|u| h(u, v)).fold(f64::MAX, f64::min)).fold(f64::MIN, f64::max);
            minmax - maxmin
        })
        .fold(0.0, f64::max);
    gate.record(
        "criterion 5 (Isaacs condition on sampled control sets)",
        gaps.iter().all(|&g| g <= 1e-12) && product.max_gap == 2.0 && oracle_gap == 2.0,
        format!(
            "max gaps (1, 1*, 2, 2*) {gaps:?} over 1000 samples (≤ 1e-12); u·v gap {} (oracle {oracle_gap}, expected 2)",
            product.max_gap
        ),
    );

    // 6: non-commuting flows are detected and refused
    let rt = load("rotation_translation.json");
    let rt_aux = rt.transform_aux().unwrap();
    let mut r = rng(60);
    let samples: Vec<CommutationSample> = (0..100)
        .map(|_| CommutationSample {
            x: vec![r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)],
            f_params: vec![0.0, 0.0],
            g_params: vec![r.gen_range(0.5..=1.0)],
            tau_f: r.gen_range(0.1..=1.0),
            tau_g: r.gen_range(0.1..=1.0),
        })
        .collect();
    let rep = check_flow_commutation(rt.game.field(), rt_aux.field(), &samples, 64, false).unwrap();
    // rotation by a after a shift b e1: ‖b (R(a) − I) e1‖ = 2 b sin(a / 2)
    let closed_form = samples
        .iter()
        .zip(&rep.discrepancies)
        .map(|(s, d)| (d - 2.0 * s.g_params[0] * s.tau_g * (s.tau_f / 2.0).sin()).abs())
        .fold(0.0, f64::max);
    let tmp = TempDir::new().unwrap();
    let refused = approach(
        &[&"transform-compare", &problems().join("rotation_translation.json"), &"-o", &tmp.path().join("rt")],
        "1",
    );
    gate.record(
        "criterion 6 (rotation vs translation: hypothesis violation detected)",
        rep.max_discrepancy > 1e-3 && closed_form <= 1e-8 && refused == 4,
        format!(
            "max discrepancy {:.3e} (> 1e-3), deviation from 2 w τ_g sin(τ_f/2) {closed_form:.1e}; transform-compare exit code {refused} (expected 4)",
            rep.max_discrepancy
        ),
    );

    // 7: extremal shift on the simple-motion bridge
    let bridge = one.direct.result.fixed_point();
    let mut opts = p1.trial_options();
    opts.starts = 200;
    opts.region = StartRegion::InsideEroded(2);
    opts.adversaries = vec![
        AdversaryKind::Constant(0),
        AdversaryKind::Constant(2),
        AdversaryKind::Constant(4),
        AdversaryKind::Lookahead,
    ];
    opts.partitions = vec![50];
    let inside = run_trials(&p1.game, bridge, &one.target, &opts).unwrap();
    opts.region = StartRegion::OutsideDilated(2);
    opts.adversaries = vec![AdversaryKind::Lookahead];
    let outside = run_trials(&p1.game, bridge, &one.target, &opts).unwrap();
    let inside_ok = !inside.vacuous && inside.groups.iter().all(|g| g.fraction.is_some_and(|f| f >= 0.95));
    let prevented = outside.groups[0].fraction.map(|f| 1.0 - f);
    let detail: Vec<String> =
        inside.groups.iter().map(|g| format!("{:?} {}/{}", g.adversary, g.successes, g.trials)).collect();
    gate.record(
        "criterion 7 (extremal shift captures from inside, lookahead prevents from outside)",
        inside_ok && prevented.is_some_and(|f| f >= 0.8),
        format!(
            "captured inside (≥ 95% each): {}; prevented outside {:.1}% of {} (≥ 80%)",
            detail.join(", "),
            100.0 * prevented.unwrap_or(0.0),
            outside.groups[0].trials
        ),
    );

    // 8: determinism and lossless artifacts
    let problem1 = problems().join("simple_motion.json");
    let (a, b) = (tmp.path().join("solve_a"), tmp.path().join("solve_b"));
    let codes = [approach(&[&"solve", &problem1, &"-o", &a], "1"), approach(&[&"solve", &problem1, &"-o", &b], "3")];
    let artifacts = |d: &Path| -> Vec<(PathBuf, Vec<u8>)> {
        files(d)
            .into_iter()
            .filter(|f| f.file_name().unwrap() != "timings.json")
            .map(|f| (f.strip_prefix(d).unwrap().to_path_buf(), fs::read(&f).unwrap()))
            .collect()
    };
    let repeat_same = codes == [0, 0] && artifacts(&a) == artifacts(&b);
    let cli_bridge = fs::read(a.join("bridge.grid")).unwrap() == to_binary(one.direct.result.fixed_point());

    let tc = tmp.path().join("island");
    let code2 = approach(&[&"transform-compare", &problems().join("sinking_island.json"), &"-o", &tc], "2");
    let same_file = |name: &str, g: &TimeSlicedGrid| fs::read(tc.join(name)).is_ok_and(|bytes| bytes == to_binary(g));
    let cli_island = code2 == 0
        && same_file("bridge.grid", two.direct.result.fixed_point())
        && same_file("bridge_star.grid", two.star.result.fixed_point())
        && same_file("target.grid", &two.target)
        && same_file("target_star.grid", &two.target_star)
        && (0..=last2).all(|k| {
            same_file(&format!("iterates/w_{k}.grid"), two.direct.result.iterate(k))
                && same_file(&format!("iterates/wstar_{k}.grid"), two.star.result.iterate(k))
        });

    let mut all: Vec<&TimeSlicedGrid> =
        vec![&one.target, &one.target_star, &two.target, &two.target_star, &band, &analytic_m];
    all.extend(&probes);
    for r in [&one.direct, &one.star, &two.direct, &two.star] {
        all.extend((0..=r.result.iterations()).map(|k| r.result.iterate(k)));
        all.extend(&r.absorbed);
    }
    let lossless = all.iter().all(|g| round_trips(g));
    gate.record(
        "criterion 8 (bitwise determinism, lossless grid files)",
        repeat_same && cli_bridge && cli_island && lossless,
        format!(
            "solve with 1 and 3 threads identical: {repeat_same}; CLI bridge = in-process: {cli_bridge}; \
             CLI transform-compare artifacts = in-process (exit {code2}): {cli_island}; {} grids round-trip: {lossless}",
            all.len()
        ),
    );

    println!("\nacceptance summary:");
    for (line, _) in &gate.lines {
        println!("  {line}");
    }
    let failed: Vec<&String> = gate.lines.iter().filter(|(_, p)| !p).map(|(l, _)| l).collect();
    assert!(
        failed.is_empty(),
        "{} criterion(s) failed:\n{}",
        failed.len(),
        failed.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("\n")
    );
}
