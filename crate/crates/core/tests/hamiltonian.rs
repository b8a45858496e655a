use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use blockspin::blockgraph::{gen_graph, BlockGraph};
use blockspin::hamiltonian::{
    diagonal_offset, edge_alignment, energy_complete, energy_from_alignment, energy_gap_bound,
    energy_random, energy_via_links, interaction_sums, link_counts, magnetization, Magnetization,
    ModelParams, SpinConfig,
};
use blockspin::Error;

fn spins(v: &[i8]) -> SpinConfig {
    SpinConfig::new(v.to_vec()).unwrap()
}

#[test]
fn magnetization_examples() {
    assert_eq!(magnetization(&SpinConfig::all_plus(4)), Magnetization::new(1.0, 1.0));
    assert_eq!(magnetization(&spins(&[1, 1, -1, -1])), Magnetization::new(1.0, -1.0));
    assert_eq!(magnetization(&spins(&[1, -1, 1, -1])), Magnetization::new(0.0, 0.0));
}

#[test]
fn link_count_examples() {
    let lc = link_counts(&spins(&[1, 1, -1, -1]));
    assert_eq!((lc.lb_plus, lc.lnb_plus, lc.lnb_minus), (8, 0, 8));
    let lc = link_counts(&SpinConfig::all_plus(4));
    assert_eq!((lc.lb_plus, lc.lnb_plus, lc.lnb_minus), (8, 8, 0));
}

#[test]
fn link_counts_at_n12_match_float_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let sigma = SpinConfig::random(12, &mut rng);
        let m = magnetization(&sigma);
        let lc = link_counts(&sigma);
        let n2 = 144.0;
        assert!((lc.lb_plus as f64 - n2 / 8.0 * (m.m1 * m.m1 + m.m2 * m.m2 + 2.0)).abs() < 1e-9);
        assert!((lc.lnb_plus as f64 - n2 / 4.0 * (m.m1 * m.m2 + 1.0)).abs() < 1e-9);
        assert!((lc.lnb_minus as f64 - n2 / 4.0 * (1.0 - m.m1 * m.m2)).abs() < 1e-9);
    }
}

#[test]
fn energy_random_examples() {
    let empty = BlockGraph::empty(6, 0.5, 0.5).unwrap();
    let params = ModelParams::new(1.0, 0.5, 0.5, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let s = SpinConfig::random(6, &mut rng);
        assert_eq!(energy_random(&empty, &params, &s).unwrap(), 0.0);
    }
    let g = BlockGraph::complete(4).unwrap();
    let params = ModelParams::new(2.0, 1.0, 1.0, 1.0).unwrap();
    let e = energy_random(&g, &params, &SpinConfig::all_plus(4)).unwrap();
    assert!((e + 2.0).abs() < 1e-15);
}

#[test]
fn energy_random_rejects_mismatch() {
    let g = gen_graph(6, 0.5, 0.5, 1, true).unwrap();
    let params = ModelParams::new(1.0, 0.5, 0.5, 0.5).unwrap();
    assert!(matches!(
        energy_random(&g, &params, &SpinConfig::all_plus(4)),
        Err(Error::InvalidArgument(_))
    ));
    let other = ModelParams::new(1.0, 0.5, 0.6, 0.5).unwrap();
    assert!(energy_random(&g, &other, &SpinConfig::all_plus(6)).is_err());
}

#[test]
fn energy_complete_examples() {
    assert_eq!(energy_complete(10, 2.0, 1.0, Magnetization::new(0.0, 0.0)), 0.0);
    assert!((energy_complete(4, 2.0, 1.0, Magnetization::new(1.0, -1.0)) + 1.0).abs() < 1e-15);
    assert!((energy_complete(4, 2.0, 1.0, Magnetization::new(1.0, 1.0)) + 3.0).abs() < 1e-15);
}

#[test]
fn gap_bound_examples() {
    let params = ModelParams::new(2.0, 1.0, 1.0, 1.0).unwrap().with_a(0.5).unwrap();
    assert_eq!(energy_gap_bound(&params, 100, 0.0, 0.0).unwrap(), 0.0);
    assert!((energy_gap_bound(&params, 100, 0.1, 0.1).unwrap() - 30.0).abs() < 1e-12);
}

#[test]
fn gap_bound_holds_for_most_configurations() {
    let (n, p, q, c) = (200usize, 0.5, 0.25, 3.0);
    let g = gen_graph(n, p, q, 8, true).unwrap();
    let params = ModelParams::for_graph(&g, 1.5, 0.8).unwrap();
    let gamma = c / (p * n as f64).sqrt();
    let kappa = c / (q * n as f64).sqrt();
    let bound = energy_gap_bound(&params, n, gamma, kappa).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let draws = 10_000;
    let inside = (0..draws)
        .filter(|_| {
            let s = SpinConfig::random(n, &mut rng);
            let e = energy_random(&g, &params, &s).unwrap();
            let ec = energy_complete(n, params.beta, params.lambda(), magnetization(&s));
            (e - ec).abs() <= bound
        })
        .count();
    assert!(inside as f64 >= 0.99 * draws as f64, "{inside}");
}

#[test]
fn params_validation() {
    assert!(ModelParams::new(0.0, 0.0, 0.5, 0.5).is_err());
    assert!(ModelParams::new(1.0, 0.0, 0.4, 0.5).is_err());
    assert!(ModelParams::new(1.0, 3.0, 0.5, 0.25).is_err());
    assert!(ModelParams::new(1.0, 2.0, 0.5, 0.25).is_ok());
    let p = ModelParams::new(1.0, 2.0, 0.5, 0.25).unwrap();
    assert_eq!(p.a, 0.5);
    assert_eq!(p.lambda(), 1.0);
    assert!(p.with_a(1.5).is_err());
}

fn any_config(n: usize) -> impl Strategy<Value = SpinConfig> {
    proptest::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], n)
        .prop_map(|v| SpinConfig::new(v).unwrap())
}

fn graph_and_config() -> impl Strategy<Value = (BlockGraph, SpinConfig, ModelParams)> {
    (1usize..12, 0.2f64..=1.0, 0.1f64..=1.0, any::<u64>(), any::<bool>(), 0.1f64..3.0, -1.0f64..=1.0)
        .prop_flat_map(|(half, p, qf, seed, directed, beta, af)| {
            let n = 2 * half;
            let q = p * qf;
            let g = gen_graph(n, p, q, seed, directed).unwrap();
            let params = ModelParams::new(beta, af * beta * p / q, p, q).unwrap();
            (Just(g), any_config(n), Just(params))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn identities_hold_exactly(half in 1usize..=8, seed: u64) {
        let n = 2 * half;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = SpinConfig::random(n, &mut rng);
        let (s1, s2) = s.block_sums();
        let lc = link_counts(&s);
        prop_assert!(lc.satisfies_identities(n, s1, s2));
        let nn = (n * n) as u64;
        prop_assert_eq!(lc.lnb_plus + lc.lnb_minus, nn / 2);
        prop_assert!(lc.lb_plus >= nn / 4 && lc.lb_plus <= nn / 2);
        prop_assert!(magnetization(&s).is_admissible(n));
    }

    #[test]
    fn spin_flip_symmetry((g, s, params) in graph_and_config()) {
        let e = energy_random(&g, &params, &s).unwrap();
        let f = energy_random(&g, &params, &s.negated()).unwrap();
        prop_assert_eq!(e, f);
        let m = magnetization(&s);
        let n = g.n();
        prop_assert_eq!(
            energy_complete(n, params.beta, params.lambda(), m),
            energy_complete(n, params.beta, params.lambda(), Magnetization::new(-m.m1, -m.m2))
        );
    }

    #[test]
    fn block_flip_covariance(half in 1usize..20, s1 in -20i64..=20, s2 in -20i64..=20, beta in 0.1f64..4.0, lambda in -3.0f64..3.0) {
        let n = 2 * half;
        let m = Magnetization::from_block_sums(n, s1.clamp(-(half as i64), half as i64), s2.clamp(-(half as i64), half as i64));
        let flipped = Magnetization::new(m.m1, -m.m2);
        let a = energy_complete(n, beta, lambda, m);
        let b = energy_complete(n, beta, -lambda, flipped);
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn rewrite_forms_agree((g, s, params) in graph_and_config()) {
        let direct = energy_random(&g, &params, &s).unwrap();
        let al = edge_alignment(&g, &s).unwrap();
        for form in [false, true] {
            let e = energy_from_alignment(g.n(), &params, &al, form);
            prop_assert!((e - direct).abs() <= 1e-12 * direct.abs().max(1e-300));
        }
        prop_assert!((energy_via_links(&g, &params, &s).unwrap() - direct).abs() <= 1e-12 * direct.abs().max(1e-300));
        let (w, b) = interaction_sums(&g, &s).unwrap();
        prop_assert_eq!(w, 2 * al.within_aligned as i64 - al.within_edges as i64);
        prop_assert_eq!(b, al.between_edges as i64 - 2 * al.between_antialigned as i64);
    }

    #[test]
    fn complete_graph_offset_is_constant(half in 1usize..10, seed: u64, beta in 0.1f64..4.0, af in -1.0f64..=1.0) {
        let n = 2 * half;
        let g = BlockGraph::complete(n).unwrap();
        let alpha = af * beta;
        let params = ModelParams::new(beta, alpha, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..8 {
            let s = SpinConfig::random(n, &mut rng);
            let gap = energy_random(&g, &params, &s).unwrap()
                - energy_complete(n, beta, alpha, magnetization(&s));
            prop_assert!((gap - diagonal_offset(beta)).abs() < 1e-10);
        }
    }
}
