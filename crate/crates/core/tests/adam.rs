use microspot_core::network::Architecture;
use microspot_core::network::*;

#[test]
fn first_step_moves_each_parameter_by_lr() {
    // with bias correction the first update is lr · g/|g| (up to epsilon)
    let arch = Architecture {
        input_dim: 2,
        hidden: 2,
        layers: 1,
    };
    let mut model = LstmModel::zeros(arch);
    let mut grads = LstmModel::zeros(arch);
    for t in grads.tensors_mut() {
        t.iter_mut()
            .enumerate()
            .for_each(|(i, g)| *g = if i % 2 == 0 { 0.5 } else { -2.0 });
    }
    let mut adam = Adam::new(AdamConfig::default(), &model).unwrap();
    adam.step(&mut model, &grads);
    for (p, g) in model.tensors().iter().zip(grads.tensors()) {
        for (pv, gv) in p.iter().zip(g) {
            assert!((pv + 1e-3 * gv.signum()).abs() < 1e-10);
        }
    }
}

#[test]
fn zero_learning_rate_is_a_no_op() {
    let arch = Architecture {
        input_dim: 2,
        hidden: 2,
        layers: 1,
    };
    let mut model = LstmModel::initialize(arch, 1).unwrap();
    let before = model.clone();
    let grads = LstmModel::initialize(arch, 2).unwrap();
    let cfg = AdamConfig {
        learning_rate: 0.0,
        ..AdamConfig::default()
    };
    let mut adam = Adam::new(cfg, &model).unwrap();
    adam.step(&mut model, &grads);
    assert_eq!(model, before);
}

#[test]
fn invalid_betas_are_rejected() {
    let cfg = AdamConfig {
        beta1: 1.0,
        ..AdamConfig::default()
    };
    assert!(cfg.validate().is_err());
}
