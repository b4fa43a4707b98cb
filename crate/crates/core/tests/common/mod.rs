#![allow(dead_code)]

use approach_core::bridge::{
    build_controllability_target, build_target_cylinder, Absorber, FlowCache, GridSpec, MembershipMode, TimeSlicedGrid,
};
use approach_core::gamespec::{
    build_transformed, sample_control_set, AuxiliarySystem, ControlSetDescriptor, GameProblem, SampledControlSet,
    TargetSpec, TerminalSet, TransformedProblem,
};
use approach_core::vectorfield::{parse_field, FieldSignature};

pub fn interval(lo: f64, hi: f64, count: usize) -> SampledControlSet {
    sample_control_set(&ControlSetDescriptor::Interval { lo, hi, count }).unwrap()
}

pub struct Setup {
    pub game: GameProblem,
    pub aux: AuxiliarySystem,
    pub transformed: TransformedProblem,
    pub spec: GridSpec,
    pub target: TimeSlicedGrid,
    pub target_star: TimeSlicedGrid,
}

impl Setup {
    pub fn absorber(&self, mode: MembershipMode) -> Absorber {
        let cache = FlowCache::build(&self.game, &self.spec, 16).unwrap();
        Absorber::new(cache, self.target.clone(), mode).unwrap()
    }

    pub fn absorber_star(&self, mode: MembershipMode) -> Absorber {
        let cache = FlowCache::build(&self.transformed, &self.spec, 16).unwrap();
        Absorber::new(cache, self.target_star.clone(), mode).unwrap()
    }
}

/// `ẋ = u + v`, `P = [-1,1]`, `Q = [-0.5,0.5]`, cylinder over `|x| ≤ 0.2`.
pub fn simple_motion(cells: usize, steps: usize) -> Setup {
    let sig = FieldSignature::new(1, vec![("u".into(), 1), ("v".into(), 1)]).unwrap();
    let f = parse_field(&["u + v"], sig).unwrap();
    let terminal = TerminalSet::Box { lo: vec![-0.2], hi: vec![0.2] };
    let game = GameProblem::new(
        f,
        interval(-1.0, 1.0, 9),
        interval(-0.5, 0.5, 5),
        1.0,
        TargetSpec::Cylinder(terminal.clone()),
    )
    .unwrap();
    let aux = AuxiliarySystem::cylinder(1, terminal.clone()).unwrap();
    let transformed = build_transformed(&game, &aux).unwrap();
    let spec = GridSpec::new(vec![(-2.0, 2.0)], vec![cells], steps, 1.0).unwrap();
    let target = build_target_cylinder(&terminal, &spec, false);
    let target_star = build_target_cylinder(&terminal, &spec, true);
    Setup { game, aux, transformed, spec, target, target_star }
}

/// State `(y, z)`, `ẏ = z`, `ż = u + v`; auxiliary `g = (ω, 0)` toward
/// `F = {(0, 0)}`.
pub fn sinking_island(cells: usize, steps: usize, mode: MembershipMode) -> Setup {
    let names = vec!["y".to_string(), "z".to_string()];
    let sig = FieldSignature::with_state_names(names.clone(), vec![("u".into(), 1), ("v".into(), 1)]).unwrap();
    let f = parse_field(&["z", "u + v"], sig).unwrap();
    let gsig = FieldSignature::with_state_names(names, vec![("w".into(), 1)]).unwrap();
    let g = parse_field(&["w", "0"], gsig).unwrap();
    let aux = AuxiliarySystem::new(g, interval(-1.0, 1.0, 9), TerminalSet::Point { point: vec![0.0, 0.0] }).unwrap();
    let game = GameProblem::new(
        f,
        interval(-2.0, 2.0, 9),
        interval(-0.5, 0.5, 5),
        1.0,
        TargetSpec::Controllability(aux.clone()),
    )
    .unwrap();
    let transformed = build_transformed(&game, &aux).unwrap();
    let spec = GridSpec::new(vec![(-1.0, 1.0), (-1.0, 1.0)], vec![cells, cells], steps, 1.0).unwrap();
    let target = build_controllability_target(&aux, &spec, mode, 16).unwrap().grid;
    let target_star = build_target_cylinder(aux.terminal(), &spec, true);
    Setup { game, aux, transformed, spec, target, target_star }
}
