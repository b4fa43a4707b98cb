//! Problem model: sampled control sets, terminal sets, the approach game,
//! the auxiliary system whose controllability set is the target, and the
//! transformed "at the moment" game.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bridge::TimeSlicedGrid;
use crate::sampling::halton;
use crate::vectorfield::{BinOp, Expr, FieldSignature, ParseError, SignatureError, Var, VectorField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("control set descriptor: {0}")]
    Descriptor(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("horizon must be positive, got {0}")]
    Horizon(f64),
    #[error(transparent)]
    Signature(#[from] SignatureError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// One closed interval sampled at `count` evenly spaced points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalAxis {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// How a [`SampledControlSet`] was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSetDescriptor {
    Interval {
        lo: f64,
        hi: f64,
        count: usize,
    },
    /// Cartesian product of per-axis interval samples.
    Box {
        axes: Vec<IntervalAxis>,
    },
    /// Closed ball around the origin.
    Ball {
        dim: usize,
        radius: f64,
        count: usize,
    },
    Explicit {
        points: Vec<Vec<f64>>,
    },
}

/// Finite sample of a compact control set.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledControlSet {
    dim: usize,
    points: Vec<Vec<f64>>,
    descriptor: ControlSetDescriptor,
}

impl SampledControlSet {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn descriptor(&self) -> &ControlSetDescriptor {
        &self.descriptor
    }

    /// Wraps points that were produced elsewhere (e.g. the canonical
    /// transformed sample).
    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self, SpecError> {
        sample_control_set(&ControlSetDescriptor::Explicit { points })
    }
}

fn axis_points(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>, SpecError> {
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(SpecError::Descriptor(format!("bad interval [{lo}, {hi}]")));
    }
    if count == 0 {
        return Err(SpecError::Descriptor("sample count must be at least 1".into()));
    }
    if lo == hi {
        return Ok(vec![lo]);
    }
    if count < 2 {
        return Err(SpecError::Descriptor(format!(
            "interval [{lo}, {hi}] needs at least 2 samples to include both endpoints"
        )));
    }
    let step = (hi - lo) / (count - 1) as f64;
    Ok((0..count).map(|i| if i == count - 1 { hi } else { lo + step * i as f64 }).collect())
}

/// Deterministic sample for a descriptor. Interval endpoints are always
/// included; balls are sampled as center, the `2·dim` axis poles and then
/// Halton points inside the ball (1-D balls are plain intervals).
pub fn sample_control_set(descriptor: &ControlSetDescriptor) -> Result<SampledControlSet, SpecError> {
    let (dim, points) = match descriptor {
        ControlSetDescriptor::Interval { lo, hi, count } => {
            (1, axis_points(*lo, *hi, *count)?.into_iter().map(|p| vec![p]).collect())
        }
        ControlSetDescriptor::Box { axes } => {
            if axes.is_empty() {
                return Err(SpecError::Descriptor("box with no axes".into()));
            }
            let per_axis = axes.iter().map(|a| axis_points(a.lo, a.hi, a.count)).collect::<Result<Vec<_>, _>>()?;
            let mut pts: Vec<Vec<f64>> = vec![vec![]];
            for axis in &per_axis {
                pts = pts
                    .into_iter()
                    .flat_map(|p| {
                        axis.iter().map(move |&a| {
                            let mut q = p.clone();
                            q.push(a);
                            q
                        })
                    })
                    .collect();
            }
            (axes.len(), pts)
        }
        ControlSetDescriptor::Ball { dim, radius, count } => {
            if *dim == 0 || !(*radius >= 0.0) || *count == 0 {
                return Err(SpecError::Descriptor(format!("bad ball: dim {dim}, radius {radius}, count {count}")));
            }
            if *dim == 1 {
                (1, axis_points(-radius, *radius, *count)?.into_iter().map(|p| vec![p]).collect())
            } else if *radius == 0.0 {
                (*dim, vec![vec![0.0; *dim]])
            } else {
                (*dim, ball_points(*dim, *radius, *count))
            }
        }
        ControlSetDescriptor::Explicit { points } => {
            let dim =
                points.first().map(|p| p.len()).ok_or_else(|| SpecError::Descriptor("empty point list".into()))?;
            if dim == 0 || points.iter().any(|p| p.len() != dim) {
                return Err(SpecError::Descriptor("explicit points must share a positive dimension".into()));
            }
            if points.iter().flatten().any(|v| !v.is_finite()) {
                return Err(SpecError::Descriptor("explicit points must be finite".into()));
            }
            for (i, p) in points.iter().enumerate() {
                if points[..i].contains(p) {
                    return Err(SpecError::Descriptor(format!("duplicate point {p:?}")));
                }
            }
            (dim, points.clone())
        }
    };
    Ok(SampledControlSet { dim, points, descriptor: descriptor.clone() })
}

fn ball_points(dim: usize, radius: f64, count: usize) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; dim]];
    for axis in 0..dim {
        for sign in [-1.0, 1.0] {
            let mut p = vec![0.0; dim];
            p[axis] = sign * radius;
            pts.push(p);
        }
    }
    let mut k = 1;
    while pts.len() < count {
        let h = halton(k, dim);
        k += 1;
        let p: Vec<f64> = h.iter().map(|c| 2.0 * c - 1.0).collect();
        if p.iter().map(|c| c * c).sum::<f64>() <= 1.0 {
            pts.push(p.iter().map(|c| c * radius).collect());
        }
    }
    pts.truncate(count);
    pts
}

/// Terminal set `F` as a predicate over states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalSet {
    Empty,
    Point { point: Vec<f64> },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

/// Absolute slack for boundary tests, so that cell centers computed with
/// roundoff still count as lying on a closed boundary.
const MEMBERSHIP_SLACK: f64 = 1e-9;

impl TerminalSet {
    pub fn dim(&self) -> Option<usize> {
        match self {
            TerminalSet::Empty => None,
            TerminalSet::Point { point } => Some(point.len()),
            TerminalSet::Box { lo, .. } => Some(lo.len()),
            TerminalSet::Ball { center, .. } => Some(center.len()),
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        match self {
            TerminalSet::Box { lo, hi } if lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| a > b) => {
                Err(SpecError::Descriptor("terminal box needs lo <= hi per axis".into()))
            }
            TerminalSet::Ball { radius, .. } if !(*radius >= 0.0) => {
                Err(SpecError::Descriptor("terminal ball radius must be non-negative".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let slack = |v: f64| MEMBERSHIP_SLACK * v.abs().max(1.0);
        match self {
            TerminalSet::Empty => false,
            TerminalSet::Point { point } => point.iter().zip(x).all(|(p, v)| (p - v).abs() <= slack(*p)),
            TerminalSet::Box { lo, hi } => {
                x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| *v >= a - slack(*a) && *v <= b + slack(*b))
            }
            TerminalSet::Ball { center, radius } => {
                let d2: f64 = center.iter().zip(x).map(|(c, v)| (c - v) * (c - v)).sum();
                d2.sqrt() <= radius + slack(*radius)
            }
        }
    }
}

/// Auxiliary control system `ẋ = g(x, ω)` and its terminal set `F`.
#[derive(Debug, Clone)]
pub struct AuxiliarySystem {
    g: VectorField,
    omega: SampledControlSet,
    terminal: TerminalSet,
}

impl AuxiliarySystem {
    /// `g` must declare exactly one parameter group, of `Ω`'s dimension.
    pub fn new(g: VectorField, omega: SampledControlSet, terminal: TerminalSet) -> Result<Self, SpecError> {
        let groups = g.signature().groups();
        if groups.len() != 1 || groups[0].dim != omega.dim() {
            return Err(SpecError::Dimension(format!(
                "auxiliary field must have one control group of dimension {}",
                omega.dim()
            )));
        }
        terminal.validate()?;
        if terminal.dim().is_some_and(|d| d != g.state_dim()) {
            return Err(SpecError::Dimension("terminal set and auxiliary field disagree on state dimension".into()));
        }
        Ok(AuxiliarySystem { g, omega, terminal })
    }

    /// `g ≡ 0` with `Ω = {0}`: its controllability set is the cylinder
    /// `[0, ϑ] × F`.
    pub fn cylinder(state_dim: usize, terminal: TerminalSet) -> Result<Self, SpecError> {
        let sig = FieldSignature::new(state_dim, vec![("w".into(), 1)])?;
        let omega = sample_control_set(&ControlSetDescriptor::Explicit { points: vec![vec![0.0]] })?;
        Self::new(VectorField::zero(sig), omega, terminal)
    }

    pub fn field(&self) -> &VectorField {
        &self.g
    }

    pub fn omega(&self) -> &SampledControlSet {
        &self.omega
    }

    pub fn terminal(&self) -> &TerminalSet {
        &self.terminal
    }
}

/// Where the first player must bring the state.
#[derive(Debug, Clone)]
pub enum TargetSpec {
    ExplicitGrid(TimeSlicedGrid),
    /// `[0, ϑ] × F`; the same set as `Controllability` with `g ≡ 0`.
    Cylinder(TerminalSet),
    Controllability(AuxiliarySystem),
}

/// Read-only view shared by the original and the transformed game: the
/// field's last parameter group belongs to the second player, all earlier
/// groups (concatenated) to the first.
pub trait Game: Sync {
    fn field(&self) -> &VectorField;
    fn first_player(&self) -> &SampledControlSet;
    fn second_player(&self) -> &SampledControlSet;
    fn horizon(&self) -> f64;

    fn state_dim(&self) -> usize {
        self.field().state_dim()
    }

    /// Flat parameter vector for first-player point `p` and second-player
    /// point `q`.
    fn params(&self, p: usize, q: usize) -> Vec<f64> {
        let mut v = self.first_player().points()[p].clone();
        v.extend_from_slice(&self.second_player().points()[q]);
        v
    }
}

/// `ẋ = f(x, u, v)`, `u ∈ P`, `v ∈ Q` on `[0, ϑ]` with a target.
#[derive(Debug, Clone)]
pub struct GameProblem {
    f: VectorField,
    p: SampledControlSet,
    q: SampledControlSet,
    horizon: f64,
    target: TargetSpec,
}

impl GameProblem {
    /// `f` must declare two groups `(u, v)` whose dimensions match `P`, `Q`.
    pub fn new(
        f: VectorField,
        p: SampledControlSet,
        q: SampledControlSet,
        horizon: f64,
        target: TargetSpec,
    ) -> Result<Self, SpecError> {
        let groups = f.signature().groups();
        if groups.len() != 2 || groups[0].dim != p.dim() || groups[1].dim != q.dim() {
            return Err(SpecError::Dimension(format!("dynamics must declare groups (u: {}, v: {})", p.dim(), q.dim())));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(SpecError::Horizon(horizon));
        }
        if let TargetSpec::Controllability(aux) = &target {
            if aux.field().state_dim() != f.state_dim() {
                return Err(SpecError::Dimension("auxiliary system state dimension differs from dynamics".into()));
            }
        }
        Ok(GameProblem { f, p, q, horizon, target })
    }

    pub fn p(&self) -> &SampledControlSet {
        &self.p
    }

    pub fn q(&self) -> &SampledControlSet {
        &self.q
    }

    pub fn target(&self) -> &TargetSpec {
        &self.target
    }
}

impl Game for GameProblem {
    fn field(&self) -> &VectorField {
        &self.f
    }
    fn first_player(&self) -> &SampledControlSet {
        &self.p
    }
    fn second_player(&self) -> &SampledControlSet {
        &self.q
    }
    fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// Which half of the transformed dynamics a first-player point selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `ν = 1`: the original dynamics `f(x, u, v)`.
    Original,
    /// `ν = 0`: the auxiliary dynamics `g(x, ω)`.
    Auxiliary,
}

/// `ẋ = ν·f(x,u,v) + (1−ν)·g(x,ω)` with first-player control `(ν, u, ω)`
/// and the terminal condition `x(ϑ) ∈ F`.
#[derive(Debug, Clone)]
pub struct TransformedProblem {
    f_star: VectorField,
    p_star: SampledControlSet,
    q: SampledControlSet,
    horizon: f64,
    terminal: TerminalSet,
    original_count: usize,
}

impl TransformedProblem {
    pub fn f_star(&self) -> &VectorField {
        &self.f_star
    }

    pub fn p_star(&self) -> &SampledControlSet {
        &self.p_star
    }

    pub fn terminal(&self) -> &TerminalSet {
        &self.terminal
    }

    /// Branch of the `i`-th canonical `P*` point. Points with `ν = 1` come
    /// first.
    pub fn branch(&self, i: usize) -> Branch {
        if i < self.original_count {
            Branch::Original
        } else {
            Branch::Auxiliary
        }
    }
}

impl Game for TransformedProblem {
    fn field(&self) -> &VectorField {
        &self.f_star
    }
    fn first_player(&self) -> &SampledControlSet {
        &self.p_star
    }
    fn second_player(&self) -> &SampledControlSet {
        &self.q
    }
    fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// Builds `f*` symbolically together with the canonical first-player
/// sample `{(1, u, ω₀) : u ∈ P} ∪ {(0, u₀, ω) : ω ∈ Ω}`, where `u₀`, `ω₀`
/// are the first points of `P`, `Ω`. With `ν = 1` the `ω` slot is inert and
/// with `ν = 0` the `u` slot is, so this sample has the same velocity set
/// as the full product `{0,1} × P × Ω`.
pub fn build_transformed(problem: &GameProblem, aux: &AuxiliarySystem) -> Result<TransformedProblem, SpecError> {
    let f = &problem.f;
    let g = &aux.g;
    if f.state_dim() != g.state_dim() {
        return Err(SpecError::Dimension(format!(
            "dynamics has state dimension {}, auxiliary system {}",
            f.state_dim(),
            g.state_dim()
        )));
    }
    let fsig = f.signature();
    let (u_dim, v_dim, w_dim) = (fsig.groups()[0].dim, fsig.groups()[1].dim, g.signature().groups()[0].dim);
    let groups = vec![
        ("nu".to_string(), 1),
        (fsig.groups()[0].name.clone(), u_dim),
        (g.signature().groups()[0].name.clone(), w_dim),
        (fsig.groups()[1].name.clone(), v_dim),
    ];
    let sig = match fsig.state_names() {
        Some(names) => FieldSignature::with_state_names(names.to_vec(), groups)?,
        None => FieldSignature::new(f.state_dim(), groups)?,
    };
    let nu = || Expr::Var(Var::Param(0));
    // flat layout: [nu | u | w | v]
    let remap_f = |v: Var| match v {
        Var::Param(k) if k < u_dim => Var::Param(1 + k),
        Var::Param(k) => Var::Param(1 + w_dim + k),
        s => s,
    };
    let remap_g = |v: Var| match v {
        Var::Param(k) => Var::Param(1 + u_dim + k),
        s => s,
    };
    let components = f
        .components()
        .iter()
        .zip(g.components())
        .map(|(fc, gc)| {
            Expr::bin(
                BinOp::Add,
                Expr::bin(BinOp::Mul, nu(), fc.map_vars(&remap_f)),
                Expr::bin(BinOp::Mul, Expr::bin(BinOp::Sub, Expr::num(1.0), nu()), gc.map_vars(&remap_g)),
            )
        })
        .collect();
    let f_star = VectorField::from_exprs(sig, components)?;

    let u0 = &problem.p.points()[0];
    let w0 = &aux.omega.points()[0];
    let mut points = Vec::with_capacity(problem.p.len() + aux.omega.len());
    for u in problem.p.points() {
        let mut pt = vec![1.0];
        pt.extend_from_slice(u);
        pt.extend_from_slice(w0);
        points.push(pt);
    }
    for w in aux.omega.points() {
        let mut pt = vec![0.0];
        pt.extend_from_slice(u0);
        pt.extend_from_slice(w);
        points.push(pt);
    }
    Ok(TransformedProblem {
        f_star,
        p_star: SampledControlSet::from_points(points)?,
        q: problem.q.clone(),
        horizon: problem.horizon,
        terminal: aux.terminal.clone(),
        original_count: problem.p.len(),
    })
}
