use levy_bsde::generators::{generator_from_ref, GeneratorRef};
use levy_bsde::lattice::{build_tree, ScenarioTree, SolverOptions};
use levy_bsde::levy_model::{retained_at, truncate_model, LevyModel, Mark, TimeGrid};
use levy_bsde::terminal::{TerminalFunctional, TerminalRef};
use proptest::prelude::*;

fn tree(sigma: f64, marks: &[(f64, f64)], steps: usize) -> ScenarioTree {
    let m = LevyModel::new(0.0, sigma, marks.iter().map(|&(x, l)| Mark::new(x, l)).collect()).unwrap();
    build_tree(&m, &TimeGrid::new(1.0, steps).unwrap()).unwrap()
}

/// Leaf probabilities from the base-b digits of the node index.
fn leaf_probabilities(t: &ScenarioTree) -> Vec<f64> {
    let b = t.branching();
    let n = t.steps();
    (0..b.pow(n as u32))
        .map(|mut k| {
            let mut p = 1.0;
            for _ in 0..n {
                p *= t.branch_prob(k % b);
                k /= b;
            }
            p
        })
        .collect()
}

fn weighted_mean(w: &[f64], v: &[f64]) -> f64 {
    w.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn small_tree() -> impl Strategy<Value = ScenarioTree> {
    (0usize..2, 1usize..3, 2usize..5).prop_map(|(sigma, marks, steps)| {
        let all = [(0.05, 0.7), (0.6, 1.3)];
        tree(sigma as f64, &all[..marks], steps)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn iterated_conditioning_matches_leaf_weights(t in small_tree(), seed in 0u64..1000) {
        let leaves = t.level(t.steps()).len();
        let v: Vec<f64> = (0..leaves).map(|k| ((k as u64 * 7919 + seed) % 101) as f64 / 10.0 - 5.0).collect();
        let mut cur = v.clone();
        for _ in 0..t.steps() {
            cur = t.conditional_expectation(&cur).unwrap();
        }
        prop_assert_eq!(cur.len(), 1);
        let direct = weighted_mean(&leaf_probabilities(&t), &v);
        prop_assert!((cur[0] - direct).abs() < 1e-12);
    }

    #[test]
    fn en_is_an_idempotent_mean_preserving_contraction(t in small_tree(), n in 1u32..30, seed in 0u64..1000) {
        let w = leaf_probabilities(&t);
        let v: Vec<f64> = (0..w.len()).map(|k| (((k as u64 + 3) * 104_729 + seed) % 97) as f64 - 48.0).collect();
        let p = t.project_en(&v, n).unwrap();
        let pp = t.project_en(&p, n).unwrap();
        for (a, b) in p.iter().zip(&pp) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert!((weighted_mean(&w, &p) - weighted_mean(&w, &v)).abs() < 1e-10);
        let sq = |x: &[f64]| weighted_mean(&w, &x.iter().map(|a| a * a).collect::<Vec<_>>());
        prop_assert!(sq(&p) <= sq(&v) + 1e-10);
    }

    #[test]
    fn truncated_marks_grow_with_the_level(xs in prop::collection::vec(-3.0f64..3.0, 0..6), n in 1u32..50, k in 0u32..50) {
        let marks: Vec<Mark> = xs.iter().filter(|x| **x != 0.0).map(|&x| Mark::new(x, 1.0)).collect();
        let m = LevyModel::new(0.0, 1.0, marks).unwrap();
        let small = truncate_model(&m, n);
        let large = truncate_model(&m, n + k);
        prop_assert!(small.num_marks() <= large.num_marks());
        for mk in small.marks() {
            prop_assert!(retained_at(mk.x, n + k));
            prop_assert!(large.marks().contains(mk));
        }
    }

    #[test]
    fn ordered_terminals_give_ordered_solutions(
        a in -1.0f64..1.0,
        b in -0.5f64..0.5,
        c in -0.5f64..0.5,
        shift in 0.0f64..1.0,
    ) {
        let t = tree(1.0, &[(0.5, 1.0)], 4);
        let m = t.model().clone();
        let g = generator_from_ref(&GeneratorRef { name: "linear".into(), a: Some(a), b: Some(b), c: Some(vec![c]), ..Default::default() }, &m).unwrap();
        let opts = SolverOptions::default();
        let pairs = [
            (TerminalRef::from("x_T"), TerminalRef::from("pos_x")),
            (TerminalRef::from("tanh_x"), TerminalRef::Spec { name: "tanh_x".into(), scale: None, shift: Some(shift) }),
        ];
        for (lo, hi) in pairs {
            let s = t.solve(&g, &lo.build(1).unwrap(), &opts).unwrap();
            let sp = t.solve(&g, &hi.build(1).unwrap(), &opts).unwrap();
            let (excess, _, _) = s.max_excess_over(&sp).unwrap();
            prop_assert!(excess <= 1e-10, "excess {excess}");
        }
    }
}

#[test]
fn full_retention_projection_is_the_identity() {
    let t = tree(1.0, &[(0.05, 0.7), (0.6, 1.3)], 3);
    let v: Vec<f64> = (0..t.level(3).len()).map(|k| (k as f64).sin()).collect();
    assert_eq!(t.project_en(&v, 20).unwrap(), v);
}

#[test]
fn truncated_solve_equals_solve_when_nothing_is_removed() {
    let t = tree(1.0, &[(0.5, 1.0)], 4);
    let g = generator_from_ref(&GeneratorRef::named("sin_y"), t.model()).unwrap();
    let xi = TerminalFunctional::by_name("tanh_x", 1).unwrap();
    let opts = SolverOptions::default();
    let full = t.solve(&g, &xi, &opts).unwrap();
    let trunc = t.solve_truncated(&g, &xi, 2, &opts).unwrap();
    for (a, b) in full.levels().iter().zip(trunc.levels()) {
        assert_eq!(a.y, b.y);
    }
}
