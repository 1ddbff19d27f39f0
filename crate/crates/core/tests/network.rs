use microspot_core::network::*;
use microspot_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_input(steps: usize, dims: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..steps * dims)
        .map(|_| rng.random_range(0.0..1.0))
        .collect()
}

#[test]
fn zero_model_is_undecided() {
    let m = LstmModel::zeros(Architecture::default());
    let (p, _) = m.forward(&random_input(25, 24, 1), 25).unwrap();
    assert_eq!(p, [0.5, 0.5]);
    assert_eq!(m.predict(&random_input(25, 24, 2), 25).unwrap(), 0.5);
}

#[test]
fn zero_input_with_zero_biases_is_undecided() {
    let mut m = LstmModel::initialize(Architecture::default(), 3).unwrap();
    for l in &mut m.layers {
        l.bias.iter_mut().for_each(|b| *b = 0.0);
    }
    let (p, _) = m.forward(&vec![0.0; 25 * 24], 25).unwrap();
    assert_eq!(p, [0.5, 0.5]);
}

#[test]
fn seeded_forward_is_byte_identical() {
    let a = LstmModel::initialize(Architecture::default(), 11).unwrap();
    let b = LstmModel::initialize(Architecture::default(), 11).unwrap();
    let x = random_input(25, 24, 4);
    let pa = a.forward(&x, 25).unwrap().0;
    let pb = b.forward(&x, 25).unwrap().0;
    assert_eq!(pa[0].to_bits(), pb[0].to_bits());
    assert_eq!(pa[1].to_bits(), pb[1].to_bits());
    assert!((pa[0] + pa[1] - 1.0).abs() < 1e-9);
}

#[test]
fn wrong_input_shape_is_rejected() {
    let m = LstmModel::zeros(Architecture::default());
    assert!(matches!(
        m.forward(&[0.0; 10], 25),
        Err(Error::Validation(_))
    ));
}

#[test]
fn initialization_follows_the_recipe() {
    let m = LstmModel::initialize(Architecture::default(), 5).unwrap();
    let h = 12;
    let l = &m.layers[0];
    let limit = (6.0f64 / (24 + 48) as f64).sqrt();
    assert!(l.w_input.iter().all(|w| w.abs() <= limit));
    assert!(l.bias[..h].iter().all(|&b| b == 0.0));
    assert!(l.bias[h..2 * h].iter().all(|&b| b == 1.0));
    assert!(l.bias[2 * h..].iter().all(|&b| b == 0.0));
    // recurrent rows orthonormal
    for r in 0..h {
        for s in 0..h {
            let dot: f64 = (0..4 * h)
                .map(|c| l.w_recurrent[r * 4 * h + c] * l.w_recurrent[s * 4 * h + c])
                .sum();
            let expect = if r == s { 1.0 } else { 0.0 };
            assert!((dot - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn loss_values() {
    let w = [1.0, 1.0];
    assert!((loss(&[0.5, 0.5], 1, &w).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    assert_eq!(loss(&[0.0, 1.0], 1, &w).unwrap(), 0.0);
    assert!((loss(&[0.9, 0.1], 1, &[1.0, 2.0]).unwrap() - 4.605170185988091).abs() < 1e-9);
    assert!(loss(&[0.5, 0.5], 2, &w).is_err());
}

#[test]
fn zero_weight_gives_zero_gradients() {
    let m = LstmModel::initialize(Architecture::default(), 1).unwrap();
    let x = random_input(25, 24, 1);
    let (_, cache) = m.forward(&x, 25).unwrap();
    let g = m.backward(&cache, 1, 0.0).unwrap();
    assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
}

#[test]
fn stale_cache_is_a_contract_violation() {
    let mut m = LstmModel::initialize(Architecture::default(), 1).unwrap();
    let (_, cache) = m.forward(&random_input(25, 24, 1), 25).unwrap();
    m.head.bias[0] += 0.1;
    assert!(matches!(
        m.backward(&cache, 0, 1.0),
        Err(Error::Contract(_))
    ));
}

#[test]
fn hidden_states_stay_bounded() {
    let mut m = LstmModel::initialize(Architecture::default(), 9).unwrap();
    for t in m.tensors_mut() {
        t.iter_mut().for_each(|v| *v *= 40.0);
    }
    let x: Vec<f64> = random_input(25, 24, 3).iter().map(|v| v * 100.0).collect();
    let (p, cache) = m.forward(&x, 25).unwrap();
    assert!(p.iter().all(|v| v.is_finite()));
    for l in &cache.layers {
        assert!(l.hidden.iter().all(|h| h.abs() <= 1.0));
    }
}

fn miniature(seed: u64) -> (LstmModel, Vec<f64>) {
    let arch = Architecture {
        input_dim: 4,
        hidden: 3,
        layers: 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = LstmModel::zeros(arch);
    for t in model.tensors_mut() {
        t.iter_mut().for_each(|v| *v = rng.random_range(-0.8..0.8));
    }
    let x: Vec<f64> = (0..5 * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
    (model, x)
}

#[test]
fn backprop_matches_finite_differences() {
    for seed in [3, 21] {
        let (model, x) = miniature(seed);
        for label in 0..2 {
            let report = gradcheck::check(&model, &x, 5, label, 1e-5).unwrap();
            assert!(report.max_abs < 1e-9, "{report:?}");
            assert!(report.max_relative < 1e-5, "{report:?}");
        }
    }
}
