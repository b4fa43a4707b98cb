mod common;

use approach_core::bridge::MembershipMode;
use approach_core::gamespec::{
    build_transformed, sample_control_set, AuxiliarySystem, Branch, ControlSetDescriptor, Game, GameProblem,
    SampledControlSet, TargetSpec, TerminalSet,
};
use approach_core::isaacs::{hamiltonian_table, isaacs_gap, isaacs_gap_transformed};
use approach_core::sampling::{rng, sphere_directions, uniform_in_box};
use approach_core::vectorfield::{parse_field, FieldSignature};

fn samples(dim: usize, count: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let xs = uniform_in_box(&mut rng(seed), &vec![-1.0; dim], &vec![1.0; dim], count);
    let ss = sphere_directions(dim, count);
    (xs, ss)
}

fn explicit(points: &[f64]) -> SampledControlSet {
    sample_control_set(&ControlSetDescriptor::Explicit { points: points.iter().map(|p| vec![*p]).collect() }).unwrap()
}

#[test]
fn both_problems_satisfy_the_condition_before_and_after_transforming() {
    for s in [common::simple_motion(11, 5), common::sinking_island(11, 5, MembershipMode::Nearest)] {
        let (xs, ss) = samples(s.spec.ndim(), 1000, 7);
        let direct = isaacs_gap(s.game.field(), s.game.p(), s.game.q(), &xs, &ss).unwrap();
        assert!(direct.holds(1e-12), "{}", direct.max_gap);
        let star = isaacs_gap_transformed(&s.transformed, &xs, &ss).unwrap();
        assert!(star.holds(1e-12), "{}", star.max_gap);
        for smp in direct.samples.iter().chain(&star.samples) {
            assert!(smp.gap >= 0.0);
        }
        assert!(star.samples.iter().all(|smp| smp.case.is_some()));
    }
}

#[test]
fn product_game_is_the_negative_control() {
    let sig = FieldSignature::new(1, vec![("u".into(), 1), ("v".into(), 1)]).unwrap();
    let f = parse_field(&["u * v"], sig).unwrap();
    let pm = explicit(&[-1.0, 1.0]);
    let rep = isaacs_gap(&f, &pm, &pm, &[vec![0.0]], &[vec![1.0]]).unwrap();
    // brute force over the four pairs
    let h: Vec<Vec<f64>> = [-1.0, 1.0].iter().map(|u| [-1.0, 1.0].iter().map(|v| u * v).collect()).collect();
    let minmax = h.iter().map(|r| r.iter().cloned().fold(f64::MIN, f64::max)).fold(f64::MAX, f64::min);
    let maxmin = (0..2).map(|j| h.iter().map(|r| r[j]).fold(f64::MAX, f64::min)).fold(f64::MIN, f64::max);
    assert_eq!(rep.max_gap, minmax - maxmin);
    assert_eq!(rep.max_gap, 2.0);
    assert!(!rep.holds(1e-12));
}

#[test]
fn auxiliary_branch_wins_when_g_is_much_slower_along_s() {
    // f = u + v + 10 with u, v in [-1, 1]; g = w in [-20, -19]
    let sig = FieldSignature::new(1, vec![("u".into(), 1), ("v".into(), 1)]).unwrap();
    let f = parse_field(&["u + v + 10"], sig).unwrap();
    let terminal = TerminalSet::Box { lo: vec![-0.1], hi: vec![0.1] };
    let problem = GameProblem::new(
        f,
        common::interval(-1.0, 1.0, 3),
        common::interval(-1.0, 1.0, 3),
        1.0,
        TargetSpec::Cylinder(terminal.clone()),
    )
    .unwrap();
    let g = parse_field(&["w"], FieldSignature::new(1, vec![("w".into(), 1)]).unwrap()).unwrap();
    let aux = AuxiliarySystem::new(g, common::interval(-20.0, -19.0, 2), terminal).unwrap();
    let tp = build_transformed(&problem, &aux).unwrap();
    let rep = isaacs_gap_transformed(&tp, &[vec![0.0], vec![0.0]], &[vec![1.0], vec![-1.0]]).unwrap();
    assert_eq!(rep.samples[0].case, Some(Branch::Auxiliary));
    assert_eq!(rep.samples[0].minmax, -20.0);
    // along -s the f-branch wins: min_u max_v -(u + v + 10) = -10
    assert_eq!(rep.samples[1].case, Some(Branch::Original));
    assert_eq!(rep.samples[1].minmax, -10.0);
    assert_eq!(rep.max_gap, 0.0);
}

#[test]
fn singleton_zero_auxiliary_takes_the_smaller_side() {
    let s = common::simple_motion(11, 5);
    let xs = vec![vec![0.0]; 2];
    let ss = vec![vec![1.0], vec![-1.0]];
    let rep = isaacs_gap_transformed(&s.transformed, &xs, &ss).unwrap();
    for smp in &rep.samples {
        // f-side: min_u max_v s(u + v) = -0.5; g-side: 0
        assert_eq!(smp.minmax, -0.5);
        assert_eq!(smp.case, Some(Branch::Original));
        assert_eq!(smp.gap, 0.0);
    }
}

#[test]
fn saddle_point_is_reported() {
    let s = common::sinking_island(11, 5, MembershipMode::Nearest);
    let (xs, ss) = samples(2, 50, 9);
    let rep = isaacs_gap(s.game.field(), s.game.p(), s.game.q(), &xs, &ss).unwrap();
    for smp in &rep.samples {
        let h = hamiltonian_table(s.game.field(), s.game.p(), s.game.q(), &smp.x, &smp.s).unwrap();
        let value = h[smp.argmin_u][smp.argmax_v];
        assert_eq!(value, smp.minmax);
        assert!(h[smp.argmin_u].iter().all(|&x| x <= value));
        assert!(h.iter().all(|row| row[smp.argmax_v] >= value));
    }
}
