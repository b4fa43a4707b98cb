//! Step-by-step motions of the game under a first-player contrstrategy and
//! a second-player strategy, the extremal-shift contrstrategy extracted
//! from a computed bridge, and batch trials.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bridge::{dilate, erode, GridSpec, TimeSlicedGrid};
use crate::flows::{flow_const, FlowError};
use crate::gamespec::Game;
use crate::sampling::rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulateError {
    #[error("partition: {0}")]
    Partition(String),
    #[error("strategy: {0}")]
    Strategy(String),
    #[error("start: {0}")]
    Start(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Strictly increasing times `t_* = τ_0 < … < τ_r = ϑ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    times: Vec<f64>,
}

impl Partition {
    pub fn new(times: Vec<f64>) -> Result<Self, SimulateError> {
        if times.len() < 2 {
            return Err(SimulateError::Partition("needs at least two points".into()));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SimulateError::Partition("times must be finite and strictly increasing".into()));
        }
        Ok(Partition { times })
    }

    pub fn uniform(t0: f64, t1: f64, steps: usize) -> Result<Self, SimulateError> {
        if steps == 0 {
            return Err(SimulateError::Partition("needs at least one step".into()));
        }
        let h = (t1 - t0) / steps as f64;
        Self::new((0..=steps).map(|k| if k == steps { t1 } else { t0 + k as f64 * h }).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("two points")
    }

    /// Largest gap between consecutive points.
    pub fn fineness(&self) -> f64 {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

/// First-player rule `(t, x, v) → u`, returning an index into the
/// first-player sample.
pub trait Contrstrategy: Sync {
    fn control(&self, t: f64, x: &[f64], v: usize) -> Result<usize, SimulateError>;
}

impl<F: Fn(f64, &[f64], usize) -> usize + Sync> Contrstrategy for F {
    fn control(&self, t: f64, x: &[f64], v: usize) -> Result<usize, SimulateError> {
        Ok(self(t, x, v))
    }
}

/// Second-player rule `(t, x) → v`, an index into the second-player
/// sample, applied at the adversary's own partition points.
pub trait AdversaryStrategy: Sync {
    fn control(&self, t: f64, x: &[f64]) -> Result<usize, SimulateError>;
}

impl<F: Fn(f64, &[f64]) -> usize + Sync> AdversaryStrategy for F {
    fn control(&self, t: f64, x: &[f64]) -> Result<usize, SimulateError> {
        Ok(self(t, x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Exit {
    /// The state left the grid box; the motion is truncated there.
    OutOfBounds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Motion {
    /// Points of the joint refinement that were reached.
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `(u, v)` sample indices used on each piece.
    pub controls: Vec<(usize, usize)>,
    pub exit: Option<Exit>,
}

impl Motion {
    pub fn endpoint(&self) -> &[f64] {
        self.states.last().expect("start state")
    }

    pub fn to_csv(&self) -> String {
        let dim = self.states[0].len();
        let cols: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
        let mut out = format!("t,{},u_index,v_index\n", cols.join(","));
        for (k, (t, x)) in self.times.iter().zip(&self.states).enumerate() {
            let xs: Vec<String> = x.iter().map(|v| format!("{v:e}")).collect();
            let (u, v) = match self.controls.get(k) {
                Some((u, v)) => (u.to_string(), v.to_string()),
                None => (String::new(), String::new()),
            };
            out.push_str(&format!("{t:e},{},{u},{v}\n", xs.join(",")));
        }
        out
    }
}

fn joint_refinement(a: &Partition, b: &Partition) -> Vec<f64> {
    let mut all: Vec<f64> = a.times().iter().chain(b.times()).copied().collect();
    all.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(all.len());
    for t in all {
        if out.last().is_none_or(|&last| t - last > 1e-12 * t.abs().max(1.0)) {
            out.push(t);
        }
    }
    out
}

/// Step-by-step motion from `(t_*, x_*)` with `t_*` the common start of both
/// partitions. On each piece of their joint refinement `v` is the value the
/// adversary chose at its latest partition point and `u = U(τ, x(τ), v)`
/// with `τ` the latest point of the first player's partition. Each piece is
/// integrated with `substeps` RK4 steps. `bounds`, when given, truncates
/// the motion on leaving the grid box.
pub fn step_motion<G: Game + ?Sized>(
    game: &G,
    u_rule: &dyn Contrstrategy,
    v_rule: &dyn AdversaryStrategy,
    du: &Partition,
    dv: &Partition,
    x0: &[f64],
    substeps: usize,
    bounds: Option<&GridSpec>,
) -> Result<Motion, SimulateError> {
    let eps = 1e-12;
    if (du.start() - dv.start()).abs() > eps || (du.end() - dv.end()).abs() > eps {
        return Err(SimulateError::Partition("partitions must share their endpoints".into()));
    }
    if x0.len() != game.state_dim() {
        return Err(SimulateError::Start(format!(
            "start has {} coordinates, state has {}",
            x0.len(),
            game.state_dim()
        )));
    }
    if bounds.is_some_and(|g| !g.contains(x0)) {
        return Err(SimulateError::Start("start lies outside the grid box".into()));
    }
    let times = joint_refinement(du, dv);
    let is_point = |p: &Partition, t: f64| p.times().iter().any(|s| (s - t).abs() <= 1e-12 * t.abs().max(1.0));
    let mut x = x0.to_vec();
    let mut motion = Motion { times: vec![times[0]], states: vec![x.clone()], controls: vec![], exit: None };
    let (mut v, mut u_anchor) = (0usize, (times[0], x.clone()));
    for w in times.windows(2) {
        let (t, t_next) = (w[0], w[1]);
        if is_point(dv, t) {
            v = v_rule.control(t, &x)?;
        }
        if is_point(du, t) {
            u_anchor = (t, x.clone());
        }
        let u = u_rule.control(u_anchor.0, &u_anchor.1, v)?;
        if u >= game.first_player().len() || v >= game.second_player().len() {
            return Err(SimulateError::Strategy(format!("control index out of range: ({u}, {v})")));
        }
        x = flow_const(game.field(), &x, &game.params(u, v), t_next - t, substeps)?;
        motion.controls.push((u, v));
        motion.times.push(t_next);
        motion.states.push(x.clone());
        if bounds.is_some_and(|g| !g.contains(&x)) {
            motion.exit = Some(Exit::OutOfBounds);
            break;
        }
    }
    Ok(motion)
}

/// Occupied cell centers per slice, for nearest-cell queries.
#[derive(Debug, Clone)]
struct SliceCenters {
    spec: GridSpec,
    centers: Vec<Vec<(usize, Vec<f64>)>>,
}

impl SliceCenters {
    fn new(grid: &TimeSlicedGrid) -> Self {
        let centers = (0..grid.spec().slice_count()).map(|i| grid.occupied_centers(i)).collect();
        SliceCenters { spec: grid.spec().clone(), centers }
    }

    /// First slice whose time is at or after `t`.
    fn slice_at_or_after(&self, t: f64) -> usize {
        let k = (t / self.spec.dt() - 1e-9).ceil().max(0.0) as usize;
        k.min(self.spec.time_steps())
    }

    /// First slice whose time is strictly after `t` (the last slice at the
    /// horizon).
    fn slice_after(&self, t: f64) -> usize {
        let k = (t / self.spec.dt() + 1e-9).floor().max(-1.0) + 1.0;
        (k as usize).min(self.spec.time_steps())
    }

    /// Nearest occupied center (Euclidean, lowest cell index on ties) in
    /// the first nonempty slice from `start` on.
    fn nearest(&self, start: usize, x: &[f64]) -> Option<(f64, &[f64])> {
        self.centers[start..].iter().find(|c| !c.is_empty()).map(|cells| {
            let mut best = (f64::INFINITY, cells[0].1.as_slice());
            for (_, c) in cells {
                let d2: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                if d2 < best.0 {
                    best = (d2, c.as_slice());
                }
            }
            (best.0.sqrt(), best.1)
        })
    }
}

/// Extremal shift toward a time-sliced bridge: aim at the nearest occupied
/// cell center `w` of the first slice strictly after `t`, and pick the
/// first-player sample minimizing `⟨x − w, f(x, u, v)⟩`.
///
/// With [`with_step`](Self::with_step) the objective becomes
/// `2⟨x − w, f⟩ + h‖f‖²`, i.e. `‖x + h f − w‖²` up to a constant. Inside the
/// bridge `x − w` is below a cell and the plain rule swings between extreme
/// samples; the quadratic term damps that.
pub struct ExtremalShift<'a, G: Game + ?Sized> {
    game: &'a G,
    bridge: SliceCenters,
    step: f64,
}

impl<'a, G: Game + ?Sized> ExtremalShift<'a, G> {
    pub fn new(game: &'a G, bridge: &TimeSlicedGrid) -> Self {
        ExtremalShift { game, bridge: SliceCenters::new(bridge), step: 0.0 }
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }
}

impl<G: Game + ?Sized> Contrstrategy for ExtremalShift<'_, G> {
    fn control(&self, t: f64, x: &[f64], v: usize) -> Result<usize, SimulateError> {
        let (_, w) = self
            .bridge
            .nearest(self.bridge.slice_after(t), x)
            .ok_or_else(|| SimulateError::Strategy(format!("bridge is empty at and after t = {t}")))?;
        let shift: Vec<f64> = x.iter().zip(w).map(|(a, b)| a - b).collect();
        let mut best = (f64::INFINITY, 0);
        for p in 0..self.game.first_player().len() {
            let vel = self.game.field().eval(x, &self.game.params(p, v)).map_err(FlowError::from)?;
            let ip: f64 = shift.iter().zip(&vel).map(|(a, b)| a * b).sum();
            let score =
                if self.step > 0.0 { 2.0 * ip + self.step * vel.iter().map(|a| a * a).sum::<f64>() } else { ip };
            if score < best.0 {
                best = (score, p);
            }
        }
        Ok(best.1)
    }
}

/// Picks the second-player sample that maximizes the smallest distance to
/// the target the first player can achieve after one adversary step.
pub struct LookaheadAdversary<'a, G: Game + ?Sized> {
    game: &'a G,
    target: SliceCenters,
    step: f64,
    substeps: usize,
}

impl<'a, G: Game + ?Sized> LookaheadAdversary<'a, G> {
    pub fn new(game: &'a G, target: &TimeSlicedGrid, step: f64, substeps: usize) -> Self {
        LookaheadAdversary { game, target: SliceCenters::new(target), step, substeps }
    }
}

impl<G: Game + ?Sized> AdversaryStrategy for LookaheadAdversary<'_, G> {
    fn control(&self, t: f64, x: &[f64]) -> Result<usize, SimulateError> {
        let mut best = (f64::NEG_INFINITY, 0);
        for q in 0..self.game.second_player().len() {
            let mut worst = f64::INFINITY;
            for p in 0..self.game.first_player().len() {
                let y = flow_const(self.game.field(), x, &self.game.params(p, q), self.step, self.substeps)?;
                let d = self
                    .target
                    .nearest(self.target.slice_at_or_after(t + self.step), &y)
                    .map_or(f64::INFINITY, |(d, _)| d);
                worst = worst.min(d);
            }
            if worst > best.0 {
                best = (worst, q);
            }
        }
        Ok(best.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryKind {
    /// Always the given second-player sample.
    Constant(usize),
    Lookahead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartRegion {
    /// Occupied cells of the bridge's first slice after eroding by this many
    /// cells.
    InsideEroded(usize),
    /// Unoccupied cells of the first slice after dilating the bridge by
    /// this many cells.
    OutsideDilated(usize),
}

#[derive(Debug, Clone)]
pub struct TrialOptions {
    pub starts: usize,
    pub region: StartRegion,
    pub adversaries: Vec<AdversaryKind>,
    /// Partition step counts over `[0, ϑ]`, shared by both players.
    pub partitions: Vec<usize>,
    /// Capture radius; `None` means 1.5 cell diagonals.
    pub epsilon: Option<f64>,
    /// Use the partition step in the aiming objective (see
    /// [`ExtremalShift::with_step`]).
    pub step_aware: bool,
    pub substeps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub start: usize,
    pub adversary: AdversaryKind,
    pub steps: usize,
    pub success: bool,
    pub capture_time: Option<f64>,
    pub exit: Option<Exit>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialGroup {
    pub adversary: AdversaryKind,
    pub steps: usize,
    pub trials: usize,
    pub successes: usize,
    pub fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialReport {
    pub starts: Vec<Vec<f64>>,
    pub outcomes: Vec<TrialOutcome>,
    pub groups: Vec<TrialGroup>,
    pub epsilon: f64,
    /// No starts could be drawn (empty region); fractions are undefined.
    pub vacuous: bool,
}

impl TrialReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("adversary,steps,trials,successes,fraction\n");
        for g in &self.groups {
            let adv = match g.adversary {
                AdversaryKind::Constant(q) => format!("constant:{q}"),
                AdversaryKind::Lookahead => "lookahead".into(),
            };
            let frac = g.fraction.map_or(String::new(), |f| format!("{f}"));
            out.push_str(&format!("{adv},{},{},{},{frac}\n", g.steps, g.trials, g.successes));
        }
        out
    }

    /// Success fraction pooled over all groups.
    pub fn overall_fraction(&self) -> Option<f64> {
        let n = self.outcomes.len();
        (n > 0).then(|| self.outcomes.iter().filter(|o| o.success).count() as f64 / n as f64)
    }
}

/// Uniform points inside randomly chosen cells of `region` at slice 0.
pub fn sample_starts(bridge: &TimeSlicedGrid, region: StartRegion, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let spec = bridge.spec();
    let cells: Vec<usize> = match region {
        StartRegion::InsideEroded(r) => erode(bridge, r).slice(0).iter().collect(),
        StartRegion::OutsideDilated(r) => dilate(bridge, r).slice(0).complement().iter().collect(),
    };
    if cells.is_empty() {
        return vec![];
    }
    let mut r = rng(seed);
    let widths = spec.widths();
    (0..count)
        .map(|_| {
            let c = cells[r.gen_range(0..cells.len())];
            spec.center(c).iter().zip(&widths).map(|(m, w)| m + w * (r.gen::<f64>() - 0.5)).collect()
        })
        .collect()
}

/// First grid time at which the motion is within `epsilon` of an occupied
/// target cell center of that slice.
pub fn capture_time(motion: &Motion, target: &TimeSlicedGrid, epsilon: f64) -> Option<f64> {
    let spec = target.spec();
    let dt = spec.dt();
    motion.times.iter().zip(&motion.states).find_map(|(&t, x)| {
        let k = (t / dt).round();
        if (t - k * dt).abs() > 1e-9 * dt || k < 0.0 || k as usize > spec.time_steps() {
            return None;
        }
        let hit = target.slice(k as usize).iter().any(|c| {
            let m = spec.center(c);
            m.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() <= epsilon
        });
        hit.then_some(t)
    })
}

/// The motion of one trial: extremal shift toward `bridge` (step-aware if
/// `opts.step_aware`) against `adversary`, both on the uniform partition of
/// `[0, ϑ]` into `steps` pieces.
pub fn trial_motion<G: Game + ?Sized>(
    game: &G,
    bridge: &TimeSlicedGrid,
    target: &TimeSlicedGrid,
    opts: &TrialOptions,
    start: &[f64],
    adversary: AdversaryKind,
    steps: usize,
) -> Result<Motion, SimulateError> {
    let spec = bridge.spec();
    let part = Partition::uniform(0.0, spec.horizon(), steps)?;
    let mut u_rule = ExtremalShift::new(game, bridge);
    if opts.step_aware {
        u_rule = u_rule.with_step(part.fineness());
    }
    match adversary {
        AdversaryKind::Constant(q) => {
            if q >= game.second_player().len() {
                return Err(SimulateError::Strategy(format!("no second-player sample {q}")));
            }
            let v_rule = move |_: f64, _: &[f64]| q;
            step_motion(game, &u_rule, &v_rule, &part, &part, start, opts.substeps, Some(spec))
        }
        AdversaryKind::Lookahead => {
            let v_rule = LookaheadAdversary::new(game, target, part.fineness(), opts.substeps);
            step_motion(game, &u_rule, &v_rule, &part, &part, start, opts.substeps, Some(spec))
        }
    }
}

/// Extremal-shift trials against the listed adversaries from starts drawn
/// in `opts.region`. Trials run in parallel; outcomes are ordered by
/// (start, adversary, partition).
pub fn run_trials<G: Game + ?Sized>(
    game: &G,
    bridge: &TimeSlicedGrid,
    target: &TimeSlicedGrid,
    opts: &TrialOptions,
) -> Result<TrialReport, SimulateError> {
    let spec = bridge.spec();
    if spec != target.spec() {
        return Err(SimulateError::Start("bridge and target use different grid specs".into()));
    }
    let epsilon = opts.epsilon.unwrap_or(1.5 * spec.diagonal());
    let starts = sample_starts(bridge, opts.region, opts.starts, opts.seed);
    let empty_groups = || {
        opts.adversaries
            .iter()
            .flat_map(|&adversary| {
                opts.partitions.iter().map(move |&steps| TrialGroup {
                    adversary,
                    steps,
                    trials: 0,
                    successes: 0,
                    fraction: None,
                })
            })
            .collect::<Vec<_>>()
    };
    if starts.is_empty() || bridge.is_empty() {
        log::warn!("no starts available in the requested region; trial report is vacuous");
        return Ok(TrialReport { starts, outcomes: vec![], groups: empty_groups(), epsilon, vacuous: true });
    }
    let jobs: Vec<(usize, AdversaryKind, usize)> = (0..starts.len())
        .flat_map(|s| opts.adversaries.iter().flat_map(move |&a| opts.partitions.iter().map(move |&n| (s, a, n))))
        .collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(s, adversary, steps)| {
            let motion = trial_motion(game, bridge, target, opts, &starts[s], adversary, steps)?;
            let capture = capture_time(&motion, target, epsilon);
            Ok(TrialOutcome {
                start: s,
                adversary,
                steps,
                success: capture.is_some(),
                capture_time: capture,
                exit: motion.exit,
            })
        })
        .collect::<Result<Vec<_>, SimulateError>>()?;
    let mut groups = empty_groups();
    for g in &mut groups {
        let mine = outcomes.iter().filter(|o| o.adversary == g.adversary && o.steps == g.steps);
        for o in mine {
            g.trials += 1;
            g.successes += o.success as usize;
        }
        g.fraction = (g.trials > 0).then(|| g.successes as f64 / g.trials as f64);
    }
    Ok(TrialReport { starts, outcomes, groups, epsilon, vacuous: false })
}
