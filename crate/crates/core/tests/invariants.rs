use agentmix_core::game::{
    normalize_to_simplex, rewards_and_advantage, sample_budget, shapley_exact, shapley_mc, GameTable,
};
use agentmix_core::model::{CoalitionMask, EmbeddedCase, ModelParams, ModelShape};
use agentmix_core::rng::{stream_rng, Stream};
use agentmix_core::train::{TrainConfig, Trainer};
use agentmix_core::Matrix;
use proptest::prelude::*;
use rand::Rng;

fn table(agents: usize, classes: usize, seed: u64) -> GameTable {
    let mut rng = stream_rng(seed, Stream::Synth);
    GameTable::from_fn(agents, classes, |_| (0..classes).map(|_| rng.random_range(0.0..2.0)).collect()).unwrap()
}

fn batch(agents: usize, classes: usize, dim: usize, n: usize, seed: u64) -> Vec<EmbeddedCase> {
    let mut rng = stream_rng(seed, Stream::Synth);
    (0..n)
        .map(|j| EmbeddedCase {
            id: j.to_string(),
            partitions: (0..agents).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
            global: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            labels: (0..classes).map(|_| f64::from(rng.random_bool(0.5))).collect(),
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn efficiency_holds_for_any_table(n in 1usize..7, c in 1usize..4, seed in any::<u64>()) {
        let t = table(n, c, seed);
        let exact = shapley_exact(&t).unwrap();
        let full = t.get((1 << n) - 1);
        for k in 0..c {
            let sum: f64 = (0..n).map(|i| exact.classical.get(i, k)).sum();
            prop_assert!((sum - (t.get(0)[k] - full[k])).abs() < 1e-10);
        }
    }

    #[test]
    fn mc_estimate_lies_on_the_simplex(n in 1usize..7, c in 1usize..4, seed in any::<u64>(), m in 1usize..20) {
        let phi = shapley_mc(&table(n, c, seed), m, &mut stream_rng(seed, Stream::Shapley)).unwrap();
        prop_assert!(phi.as_slice().iter().all(|&p| p >= 0.0));
        prop_assert!((phi.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn advantage_columns_sum_to_zero(n in 1usize..6, c in 1usize..4, seed in any::<u64>()) {
        let mut shape = ModelShape::new(n, c, 3);
        shape.agent_hidden = vec![4];
        shape.fusion_hidden = vec![3];
        let params = ModelParams::init(shape, &mut stream_rng(seed, Stream::Init)).unwrap();
        let cases = batch(n, c, 3, 4, seed);
        let (_, adv) = rewards_and_advantage(&params, &cases).unwrap();
        for k in 0..c {
            let s: f64 = adv.advantage.column(k).iter().sum();
            prop_assert!(s.abs() < 1e-12, "column {k} sums to {s}");
        }
    }

    #[test]
    fn normalization_is_scale_free(values in prop::collection::vec(0.0f64..5.0, 6), scale in 0.01f64..100.0) {
        let a = Matrix::from_vec(2, 3, values.clone()).unwrap();
        let b = Matrix::from_vec(2, 3, values.iter().map(|v| v * scale).collect()).unwrap();
        let (na, nb) = (normalize_to_simplex(&a), normalize_to_simplex(&b));
        if a.sum() > 1e-9 {
            prop_assert!(na.max_abs_diff(&nb).unwrap() < 1e-12);
        }
    }
}

#[test]
fn budget_is_rounded_up_power_of_root_two() {
    for n in 1..=20usize {
        let want = (2f64.powf(n as f64 / 2.0)).ceil() as usize;
        assert_eq!(sample_budget(n).unwrap(), want, "N = {n}");
    }
    assert!(sample_budget(0).is_err());
}

#[test]
fn exact_enumeration_is_capped() {
    assert!(GameTable::from_fn(13, 1, |_| vec![0.0]).is_err());
}

#[test]
fn masks_round_trip_bits() {
    for bits in 0..32u64 {
        let mask = CoalitionMask::from_bits(5, bits);
        assert_eq!(mask.to_bits(), bits);
        assert_eq!(mask.count(), bits.count_ones() as usize);
    }
}

#[test]
fn weights_stay_on_the_simplex_through_training() {
    let mut config = TrainConfig::new(4, 3, 5);
    config.agent_hidden = vec![8];
    config.fusion_hidden = vec![6];
    config.epochs = 20;
    config.learning_rate = 5e-2;
    let cases = batch(4, 3, 5, 24, 9);
    let mut trainer = Trainer::new(config).unwrap();
    trainer
        .run(&cases, |r| {
            assert!(r.weights.as_slice().iter().all(|&w| w > 0.0));
            assert!((r.weights.sum() - 1.0).abs() < 1e-9);
        })
        .unwrap();
}
