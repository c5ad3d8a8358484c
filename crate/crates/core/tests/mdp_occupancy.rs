mod common;

use proptest::prelude::*;
use proto_rmdp::environments::{GridWorldSpec, UP};
use proto_rmdp::mdp::{l1_distance, sample_trajectory, value_function, LayerLayout, LayeredMdp, Policy, TransitionKernel};
use proto_rmdp::occupancy::{expected_reward, induce_kernel, induce_policy, occupancy_from};
use proto_rmdp::planning::optimal_policy_dp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_deterministic_policy<R: Rng>(rng: &mut R, mdp: &LayeredMdp) -> Policy {
    Policy::new(
        (0..mdp.layout().num_decision_states())
            .map(|_| rng.gen_range(0..mdp.num_actions()))
            .collect(),
    )
}

#[test]
fn occupancy_matches_monte_carlo_frequencies() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mdp, _) = common::random_instance(&mut rng, &[1, 3, 3, 1], 2, 1, false);
    let policy = random_deterministic_policy(&mut rng, &mdp);
    let q = occupancy_from(mdp.true_kernel(), &policy, &mdp).unwrap();

    let n = 1_000_000usize;
    let s_total = mdp.num_states();
    let mut counts = vec![0u64; s_total * 2 * s_total];
    for _ in 0..n {
        for step in sample_trajectory(mdp.true_kernel(), &policy, &mdp, &mut rng) {
            counts[(step.state * 2 + step.action) * s_total + step.next] += 1;
        }
    }
    for s in 0..mdp.layout().num_decision_states() {
        for a in 0..2 {
            for next in 0..s_total {
                let p = q.get(s, a, next);
                let freq = counts[(s * 2 + a) * s_total + next] as f64 / n as f64;
                let se = (p * (1.0 - p) / n as f64).sqrt();
                assert!((freq - p).abs() <= 3.0 * se + 1e-12, "({s},{a},{next}): q={p}, freq={freq}");
            }
        }
    }
}

#[test]
fn two_branch_sampling_frequencies() {
    let layout = LayerLayout::new(&[1, 2]).unwrap();
    let kernel = TransitionKernel::new(&layout, 1, vec![vec![vec![0.0, 0.7, 0.3]]]).unwrap();
    let mdp = LayeredMdp::new(layout, 1, vec![vec![0.0]], kernel.clone()).unwrap();
    let policy = Policy::new(vec![0]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 1_000_000;
    let hits = (0..n)
        .filter(|_| sample_trajectory(&kernel, &policy, &mdp, &mut rng)[0].next == 1)
        .count();
    let freq = hits as f64 / n as f64;
    let se = (0.7 * 0.3 / n as f64).sqrt();
    assert!((freq - 0.7).abs() <= 3.0 * se, "frequency {freq}");
}

#[test]
fn gridworld_optimal_value_equals_occupancy_reward() {
    for z in [[0.8, 0.3], [0.5, 0.5], [1.0, 0.0], [0.1, 0.9]] {
        let mdp = GridWorldSpec::single(z).build().unwrap();
        let (policy, values) = optimal_policy_dp(mdp.true_kernel(), &mdp);
        let q = occupancy_from(mdp.true_kernel(), &policy, &mdp).unwrap();
        assert!((expected_reward(&q, mdp.rewards()) - values[0]).abs() <= 1e-9);
    }
}

#[test]
fn always_up_in_deterministic_grid_collects_left_column_rewards() {
    // up succeeds surely: (0,0) -> (0,1) -> ... -> (0,3) -> right along the top
    let mdp = GridWorldSpec::single([1.0, 1.0]).build().unwrap();
    let policy = Policy::new(vec![UP; mdp.layout().num_decision_states()]);
    let v = value_function(&policy, mdp.true_kernel(), &mdp).unwrap()[0];
    assert_eq!(v, 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn occupancy_properties_hold(seed in any::<u64>(), sparse in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = rng.gen_range(2..=6);
        let sizes = common::random_sizes(&mut rng, layers, 4);
        let actions = rng.gen_range(1..=3);
        let (mdp, _) = common::random_instance(&mut rng, &sizes, actions, 1, sparse);
        let policy = common::random_policy(&mut rng, &mdp, sparse);
        let q = occupancy_from(mdp.true_kernel(), &policy, &mdp).unwrap();

        prop_assert!(q.property_defect() <= 1e-9);
        for s in 0..mdp.layout().num_decision_states() {
            for a in 0..actions {
                for next in 0..mdp.num_states() {
                    prop_assert!(q.get(s, a, next) >= 0.0);
                }
            }
        }

        let v = value_function(&policy, mdp.true_kernel(), &mdp).unwrap()[0];
        prop_assert!((expected_reward(&q, mdp.rewards()) - v).abs() <= 1e-9);

        let kernel = induce_kernel(&q).complete_with(mdp.true_kernel()).unwrap();
        let rebuilt = occupancy_from(&kernel, &induce_policy(&q).complete(actions), &mdp).unwrap();
        prop_assert!(rebuilt.l1_distance(&q) <= 1e-9);
    }

    #[test]
    fn trajectories_are_reproducible_and_follow_the_kernel(seed in any::<u64>(), sparse in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = common::random_sizes(&mut rng, 5, 3);
        let (mdp, _) = common::random_instance(&mut rng, &sizes, 2, 1, sparse);
        let policy = random_deterministic_policy(&mut rng, &mdp);
        let a = sample_trajectory(mdp.true_kernel(), &policy, &mdp, &mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let b = sample_trajectory(mdp.true_kernel(), &policy, &mdp, &mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.len(), mdp.layout().horizon());
        prop_assert_eq!(a[0].state, 0);
        for (l, step) in a.iter().enumerate() {
            prop_assert_eq!(mdp.layout().layer_of(step.state), l);
            prop_assert_eq!(step.action, policy.action(step.state));
            prop_assert!(mdp.true_kernel().prob(step.state, step.action, step.next) > 0.0);
            if l + 1 < a.len() {
                prop_assert_eq!(step.next, a[l + 1].state);
            }
        }
    }

    #[test]
    fn l1_is_a_metric(
        x in prop::collection::vec(0.0f64..1.0, 6),
        y in prop::collection::vec(0.0f64..1.0, 6),
        z in prop::collection::vec(0.0f64..1.0, 6),
    ) {
        let xy = l1_distance(&x, &y).unwrap();
        prop_assert!(xy >= 0.0);
        prop_assert_eq!(l1_distance(&x, &x).unwrap(), 0.0);
        prop_assert!((xy - l1_distance(&y, &x).unwrap()).abs() <= 1e-15);
        prop_assert!(xy <= l1_distance(&x, &z).unwrap() + l1_distance(&z, &y).unwrap() + 1e-12);
    }
}

#[test]
fn l1_rejects_mismatched_lengths() {
    assert!(l1_distance(&[0.5, 0.5], &[1.0]).is_err());
    assert!((l1_distance(&[0.9, 0.1], &[0.2, 0.8]).unwrap() - 1.4).abs() < 1e-12);
}
