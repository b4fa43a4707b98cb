//! Fixed-step RK4 flows under constant and piecewise-constant controls.
//!
//! `S^τ` denotes the time-τ map of a field under one frozen parameter
//! vector. Negative τ integrates backward with a negative step, so
//! `S^{-τ} ∘ S^τ` is the identity up to integrator error.

use thiserror::Error;

use crate::vectorfield::{norm, EvalError, VectorField};

/// RK4 substeps per grid time step unless configured otherwise.
pub const DEFAULT_SUBSTEPS: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("state became non-finite at step {step}")]
    Divergence { step: usize },
    #[error("substeps must be at least 1")]
    ZeroSubsteps,
    #[error("time {time} leaves the horizon [0, {horizon}]")]
    OutsideHorizon { time: f64, horizon: f64 },
    #[error("negative duration {0} in a schedule")]
    NegativeDuration(f64),
    #[error("control value has length {got}, group expects {expected}")]
    ControlDim { expected: usize, got: usize },
    #[error("negative flow time {0} outside extended mode")]
    NegativeTime(f64),
}

/// Reusable RK4 scratch space for one field.
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Rk4 { k1: vec![0.0; dim], k2: vec![0.0; dim], k3: vec![0.0; dim], k4: vec![0.0; dim], tmp: vec![0.0; dim] }
    }

    /// Advances `x` in place by `steps` RK4 steps of size `h`.
    pub fn advance(
        &mut self,
        field: &VectorField,
        x: &mut [f64],
        params: &[f64],
        h: f64,
        steps: usize,
    ) -> Result<(), FlowError> {
        let n = x.len();
        for step in 0..steps {
            field.eval_into(x, params, &mut self.k1)?;
            for i in 0..n {
                self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
            }
            field.eval_into(&self.tmp, params, &mut self.k2)?;
            for i in 0..n {
                self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
            }
            field.eval_into(&self.tmp, params, &mut self.k3)?;
            for i in 0..n {
                self.tmp[i] = x[i] + h * self.k3[i];
            }
            field.eval_into(&self.tmp, params, &mut self.k4)?;
            for i in 0..n {
                x[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(FlowError::Divergence { step });
            }
        }
        Ok(())
    }
}

/// `S^τ(x0)` for the frozen parameter vector `params` (flat layout), using
/// `substeps` RK4 steps of size `τ / substeps`. `τ = 0` returns `x0`.
pub fn flow_const(
    field: &VectorField,
    x0: &[f64],
    params: &[f64],
    tau: f64,
    substeps: usize,
) -> Result<Vec<f64>, FlowError> {
    if substeps == 0 {
        return Err(FlowError::ZeroSubsteps);
    }
    field.check_dims(x0, params)?;
    let mut x = x0.to_vec();
    if tau == 0.0 {
        return Ok(x);
    }
    Rk4::new(x.len()).advance(field, &mut x, params, tau / substeps as f64, substeps)?;
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub duration: f64,
    pub value: Vec<f64>,
}

/// Schedule of `(duration, value)` pairs for one control group.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PiecewiseControl {
    segments: Vec<Segment>,
}

impl PiecewiseControl {
    pub fn new(segments: Vec<Segment>) -> Result<Self, FlowError> {
        if let Some(s) = segments.iter().find(|s| !(s.duration >= 0.0)) {
            return Err(FlowError::NegativeDuration(s.duration));
        }
        Ok(PiecewiseControl { segments })
    }

    pub fn constant(value: Vec<f64>, duration: f64) -> Result<Self, FlowError> {
        Self::new(vec![Segment { duration, value }])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

/// States sampled every `dt` from `t0` in the direction of travel, plus
/// the exact composed endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub direction: Direction,
    pub states: Vec<Vec<f64>>,
    pub end_time: f64,
    pub endpoint: Vec<f64>,
}

impl Trajectory {
    pub fn sample_time(&self, k: usize) -> f64 {
        self.t0 + self.direction.sign() * self.dt * k as f64
    }

    /// `t,x1,..,xn` rows, one per sample; the endpoint is appended when it
    /// does not coincide with the last sample.
    pub fn to_csv(&self) -> String {
        let n = self.endpoint.len();
        let mut out = String::from("t");
        for i in 0..n {
            out.push_str(&format!(",x{}", i + 1));
        }
        out.push('\n');
        let mut row = |t: f64, x: &[f64]| {
            out.push_str(&format!("{t}"));
            for v in x {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        };
        for (k, s) in self.states.iter().enumerate() {
            row(self.sample_time(k), s);
        }
        let last = self.sample_time(self.states.len() - 1);
        if (last - self.end_time).abs() > 1e-12 {
            row(self.end_time, &self.endpoint);
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PiecewiseOptions {
    /// Sample spacing; each sample interval gets `substeps` RK4 steps.
    pub dt: f64,
    pub substeps: usize,
    pub horizon: f64,
}

fn steps_for(duration: f64, dt: f64, substeps: usize) -> usize {
    let pieces = (duration / dt - 1e-9).ceil().max(1.0) as usize;
    pieces * substeps
}

/// Integrates `field` from `(t_start, x0)` while group `group` follows
/// `ctrl`; every other group keeps its value from `base_params` (flat).
///
/// The endpoint is the composition `S^{τ_k}_{b_k} ∘ … ∘ S^{τ_1}_{b_1}(x0)`,
/// each factor a single [`flow_const`] call with
/// `ceil(τ_i / dt) · substeps` steps.
pub fn flow_piecewise(
    field: &VectorField,
    x0: &[f64],
    t_start: f64,
    ctrl: &PiecewiseControl,
    group: usize,
    base_params: &[f64],
    direction: Direction,
    opts: PiecewiseOptions,
) -> Result<Trajectory, FlowError> {
    if opts.substeps == 0 {
        return Err(FlowError::ZeroSubsteps);
    }
    field.check_dims(x0, base_params)?;
    let sig = field.signature();
    let offset = sig.group_offset(group);
    let gdim = sig.groups()[group].dim;
    let sign = direction.sign();
    let total = ctrl.total_duration();
    let end_time = t_start + sign * total;
    let slack = 1e-9 * opts.horizon.max(1.0);
    for t in [t_start, end_time] {
        if t < -slack || t > opts.horizon + slack {
            return Err(FlowError::OutsideHorizon { time: t, horizon: opts.horizon });
        }
    }

    let mut params = base_params.to_vec();
    let mut rk = Rk4::new(x0.len());
    let mut states = vec![x0.to_vec()];
    let mut x = x0.to_vec();
    let mut elapsed = 0.0;
    let mut next_sample = 1usize;
    for seg in ctrl.segments() {
        if seg.value.len() != gdim {
            return Err(FlowError::ControlDim { expected: gdim, got: seg.value.len() });
        }
        params[offset..offset + gdim].copy_from_slice(&seg.value);
        let seg_end = elapsed + seg.duration;
        // samples strictly inside the segment
        let mut cursor = x.clone();
        let mut cursor_t = elapsed;
        while (next_sample as f64) * opts.dt < seg_end - 1e-12 * opts.dt.max(1.0) {
            let ts = next_sample as f64 * opts.dt;
            let piece = ts - cursor_t;
            if piece > 0.0 {
                let steps = steps_for(piece, opts.dt, opts.substeps);
                rk.advance(field, &mut cursor, &params, sign * piece / steps as f64, steps)?;
            }
            states.push(cursor.clone());
            cursor_t = ts;
            next_sample += 1;
        }
        if seg.duration > 0.0 {
            let steps = steps_for(seg.duration, opts.dt, opts.substeps);
            rk.advance(field, &mut x, &params, sign * seg.duration / steps as f64, steps)?;
        }
        elapsed = seg_end;
        if ((next_sample as f64) * opts.dt - elapsed).abs() <= 1e-12 * opts.dt.max(1.0) {
            states.push(x.clone());
            next_sample += 1;
        }
    }
    Ok(Trajectory { t0: t_start, dt: opts.dt, direction, states, end_time, endpoint: x })
}

/// One sample for [`check_flow_commutation`]: a state, a flat parameter
/// vector for each field, and the two flow times.
#[derive(Debug, Clone, PartialEq)]
pub struct CommutationSample {
    pub x: Vec<f64>,
    pub f_params: Vec<f64>,
    pub g_params: Vec<f64>,
    pub tau_f: f64,
    pub tau_g: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommutationReport {
    pub max_discrepancy: f64,
    pub argmax: Option<usize>,
    pub discrepancies: Vec<f64>,
}

/// Largest `‖S_F^{τ'} ∘ S_G^{τ''}(x) − S_G^{τ''} ∘ S_F^{τ'}(x)‖` over the
/// samples. Negative times are rejected unless `allow_negative` is set.
pub fn check_flow_commutation(
    f: &VectorField,
    g: &VectorField,
    samples: &[CommutationSample],
    substeps: usize,
    allow_negative: bool,
) -> Result<CommutationReport, FlowError> {
    if f.state_dim() != g.state_dim() {
        return Err(EvalError::Mismatch(f.state_dim(), g.state_dim()).into());
    }
    let mut discrepancies = Vec::with_capacity(samples.len());
    let mut best: Option<(usize, f64)> = None;
    for (k, s) in samples.iter().enumerate() {
        if !allow_negative {
            for t in [s.tau_f, s.tau_g] {
                if t < 0.0 {
                    return Err(FlowError::NegativeTime(t));
                }
            }
        }
        let fg = flow_const(f, &flow_const(g, &s.x, &s.g_params, s.tau_g, substeps)?, &s.f_params, s.tau_f, substeps)?;
        let gf = flow_const(g, &flow_const(f, &s.x, &s.f_params, s.tau_f, substeps)?, &s.g_params, s.tau_g, substeps)?;
        let d = norm(&fg.iter().zip(&gf).map(|(a, b)| a - b).collect::<Vec<_>>());
        if best.is_none_or(|(_, m)| d > m) {
            best = Some((k, d));
        }
        discrepancies.push(d);
    }
    Ok(CommutationReport { max_discrepancy: best.map_or(0.0, |(_, d)| d), argmax: best.map(|(k, _)| k), discrepancies })
}

/// One constant-control piece of a schedule over a family of fields.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilySegment {
    /// Index into the field family.
    pub field: usize,
    pub params: Vec<f64>,
    pub duration: f64,
}

/// Endpoint of running `schedule` in order from `x0`.
pub fn run_schedule(
    family: &[&VectorField],
    x0: &[f64],
    schedule: &[FamilySegment],
    substeps: usize,
) -> Result<Vec<f64>, FlowError> {
    let mut x = x0.to_vec();
    for seg in schedule {
        if seg.duration < 0.0 {
            return Err(FlowError::NegativeDuration(seg.duration));
        }
        x = flow_const(family[seg.field], &x, &seg.params, seg.duration, substeps)?;
    }
    Ok(x)
}

/// Stable regrouping that moves every segment of field `first` to the
/// front and keeps the relative order inside each part.
pub fn group_first(schedule: &[FamilySegment], first: usize) -> Vec<usize> {
    let (mut front, back): (Vec<usize>, Vec<usize>) = (0..schedule.len()).partition(|&i| schedule[i].field == first);
    front.extend(back);
    front
}

#[derive(Debug, Clone, PartialEq)]
pub struct RearrangementReport {
    pub discrepancy: f64,
    pub interleaved: Vec<f64>,
    pub regrouped: Vec<f64>,
}

impl RearrangementReport {
    pub fn exceeds(&self, tolerance: f64) -> bool {
        self.discrepancy > tolerance
    }
}

/// Endpoint discrepancy between `schedule` and the same segments run in
/// the order `permutation` (indices into `schedule`).
pub fn check_rearrangement(
    family: &[&VectorField],
    x0: &[f64],
    schedule: &[FamilySegment],
    permutation: &[usize],
    substeps: usize,
) -> Result<RearrangementReport, FlowError> {
    let mut sorted = permutation.to_vec();
    sorted.sort_unstable();
    assert!(
        sorted.iter().copied().eq(0..schedule.len()),
        "permutation must reorder every schedule segment exactly once"
    );
    let interleaved = run_schedule(family, x0, schedule, substeps)?;
    let reordered: Vec<FamilySegment> = permutation.iter().map(|&i| schedule[i].clone()).collect();
    let regrouped = run_schedule(family, x0, &reordered, substeps)?;
    let discrepancy = norm(&interleaved.iter().zip(&regrouped).map(|(a, b)| a - b).collect::<Vec<_>>());
    Ok(RearrangementReport { discrepancy, interleaved, regrouped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectorfield::{parse_field, FieldSignature};

    fn field(src: &[&str], groups: &[(&str, usize)]) -> VectorField {
        let sig = FieldSignature::new(src.len(), groups.iter().map(|(g, d)| (g.to_string(), *d)).collect()).unwrap();
        parse_field(src, sig).unwrap()
    }

    #[test]
    fn constant_velocity() {
        let g = field(&["w"], &[("w", 1)]);
        let x = flow_const(&g, &[1.0], &[0.5], 2.0, 4).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn exponential_growth() {
        let f = field(&["x1"], &[]);
        let x = flow_const(&f, &[1.0], &[], 1.0, 100).unwrap();
        assert!((x[0] - std::f64::consts::E).abs() < 1e-8);
        let back = flow_const(&f, &x, &[], -1.0, 100).unwrap();
        assert!((back[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn zero_time_is_identity() {
        let f = field(&["x1*x2 - 3", "1/(x1+4)"], &[]);
        let x0 = [0.123456789, -7.5];
        assert_eq!(flow_const(&f, &x0, &[], 0.0, 7).unwrap(), x0.to_vec());
    }

    #[test]
    fn flow_errors() {
        let f = field(&["x1^2"], &[]);
        assert_eq!(flow_const(&f, &[1.0], &[], 1.0, 0), Err(FlowError::ZeroSubsteps));
        // blows up at t = 1 from x0 = 1
        assert!(matches!(flow_const(&f, &[1.0], &[], 50.0, 10), Err(FlowError::Divergence { .. })));
        let h = field(&["1/x1"], &[]);
        assert!(matches!(flow_const(&h, &[0.0], &[], 1.0, 1), Err(FlowError::Eval(EvalError::DivisionByZero { .. }))));
    }

    #[test]
    fn piecewise_cancellation() {
        let f = field(&["b"], &[("b", 1)]);
        let ctrl = PiecewiseControl::new(vec![
            Segment { duration: 1.0, value: vec![1.0] },
            Segment { duration: 1.0, value: vec![-1.0] },
        ])
        .unwrap();
        let opts = PiecewiseOptions { dt: 0.25, substeps: 4, horizon: 2.0 };
        let tr = flow_piecewise(&f, &[0.0], 0.0, &ctrl, 0, &[0.0], Direction::Forward, opts).unwrap();
        assert!(tr.endpoint[0].abs() < 1e-15);
        assert_eq!(tr.states.len(), 9);
        assert!((tr.states[4][0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_segment_matches_flow_const_bitwise() {
        let f = field(&["x2", "-x1 + 0.3*b"], &[("b", 1)]);
        let ctrl = PiecewiseControl::constant(vec![0.7], 0.9).unwrap();
        let opts = PiecewiseOptions { dt: 0.1, substeps: 5, horizon: 1.0 };
        let tr = flow_piecewise(&f, &[1.0, 0.0], 0.1, &ctrl, 0, &[0.0], Direction::Forward, opts).unwrap();
        let direct = flow_const(&f, &[1.0, 0.0], &[0.7], 0.9, steps_for(0.9, 0.1, 5)).unwrap();
        assert_eq!(tr.endpoint, direct);
    }

    #[test]
    fn double_integrator_kinematics() {
        let f = field(&["x2", "u + v"], &[("u", 1), ("v", 1)]);
        let ctrl = PiecewiseControl::constant(vec![1.0], 1.0).unwrap();
        let opts = PiecewiseOptions { dt: 0.02, substeps: 16, horizon: 1.0 };
        let tr = flow_piecewise(&f, &[0.0, 0.0], 0.0, &ctrl, 0, &[0.0, 0.0], Direction::Forward, opts).unwrap();
        assert!((tr.endpoint[0] - 0.5).abs() < 1e-9 && (tr.endpoint[1] - 1.0).abs() < 1e-9);
        assert_eq!(tr.states.len(), 51);
    }

    #[test]
    fn piecewise_horizon_and_dims() {
        let f = field(&["b"], &[("b", 1)]);
        let opts = PiecewiseOptions { dt: 0.1, substeps: 1, horizon: 1.0 };
        let ctrl = PiecewiseControl::constant(vec![1.0], 0.6).unwrap();
        assert!(matches!(
            flow_piecewise(&f, &[0.0], 0.5, &ctrl, 0, &[0.0], Direction::Forward, opts),
            Err(FlowError::OutsideHorizon { .. })
        ));
        let tr = flow_piecewise(&f, &[0.0], 0.6, &ctrl, 0, &[0.0], Direction::Backward, opts).unwrap();
        assert!((tr.endpoint[0] + 0.6).abs() < 1e-12);
        assert!(tr.end_time.abs() < 1e-12);
        let bad = PiecewiseControl::constant(vec![1.0, 2.0], 0.1).unwrap();
        assert!(matches!(
            flow_piecewise(&f, &[0.0], 0.0, &bad, 0, &[0.0], Direction::Forward, opts),
            Err(FlowError::ControlDim { .. })
        ));
        assert!(PiecewiseControl::new(vec![Segment { duration: -1.0, value: vec![0.0] }]).is_err());
    }

    #[test]
    fn rotation_and_translation_do_not_commute() {
        // R(1)(x + e1) − (R(1)x + e1) = (R(1) − I)e1, norm 2 sin(1/2)
        let rot = field(&["-x2", "x1"], &[]);
        let shift = field(&["1", "0"], &[]);
        let samples =
            vec![CommutationSample { x: vec![0.3, -0.2], f_params: vec![], g_params: vec![], tau_f: 1.0, tau_g: 1.0 }];
        let rep = check_flow_commutation(&rot, &shift, &samples, 64, false).unwrap();
        assert!((rep.max_discrepancy - 2.0 * 0.5f64.sin()).abs() < 1e-6, "{}", rep.max_discrepancy);
        assert!(rep.max_discrepancy > 1e-3);
        assert_eq!(rep.argmax, Some(0));
    }

    #[test]
    fn zero_field_commutes_trivially() {
        let f = field(&["x2", "-x1*x2"], &[]);
        let zero = VectorField::zero(FieldSignature::new(2, vec![("w".into(), 1)]).unwrap());
        let samples: Vec<_> = (0..5)
            .map(|k| CommutationSample {
                x: vec![0.1 * k as f64, 1.0],
                f_params: vec![],
                g_params: vec![0.0],
                tau_f: 0.3,
                tau_g: 0.7,
            })
            .collect();
        let rep = check_flow_commutation(&f, &zero, &samples, 16, false).unwrap();
        assert_eq!(rep.max_discrepancy, 0.0);
        let mut neg = samples.clone();
        neg[0].tau_g = -0.1;
        assert!(matches!(check_flow_commutation(&f, &zero, &neg, 16, false), Err(FlowError::NegativeTime(_))));
        assert!(check_flow_commutation(&f, &zero, &neg, 16, true).is_ok());
    }

    #[test]
    fn rearrangement_detects_non_commuting_pair() {
        let rot = field(&["-x2", "x1"], &[]);
        let shift = field(&["1", "0"], &[]);
        let family = [&rot, &shift];
        let schedule = vec![
            FamilySegment { field: 0, params: vec![], duration: 0.5 },
            FamilySegment { field: 1, params: vec![], duration: 0.5 },
            FamilySegment { field: 0, params: vec![], duration: 0.5 },
        ];
        let perm = group_first(&schedule, 0);
        assert_eq!(perm, vec![0, 2, 1]);
        let rep = check_rearrangement(&family, &[1.0, 0.0], &schedule, &perm, 32).unwrap();
        assert!(rep.exceeds(1e-6));
        let single = &schedule[..1];
        let rep = check_rearrangement(&family, &[1.0, 0.0], single, &[0], 32).unwrap();
        assert_eq!(rep.discrepancy, 0.0);
    }
}
