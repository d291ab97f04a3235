//! Multi-layer plumbing: forward against a straight-line reimplementation,
//! backward against finite differences, merges against the adapted model.

use qbara::adapters::{Adapter, AdapterKind, AdapterShape, Balance, ScaleOperator};
use qbara::model::{model_backward, model_forward, Activation, DenseModel, Model, QuantizedLinear};
use qbara::numerics::{Distribution, Matrix, Rng};
use qbara::quant::{QuantConfig, QuantMode};
use qbara::training::{finite_difference_check, gradcheck_case, run_gradcheck, LossKind, GRADCHECK_EPS};

fn normal(rng: &mut Rng, r: usize, c: usize, std: f64) -> Matrix {
    rng.fill(r, c, Distribution::normal(0.0, std)).unwrap()
}

fn random_model(seed: u64, widths: &[usize], act: Activation, shape: Option<AdapterShape>, op: ScaleOperator) -> Model {
    let mut rng = Rng::seed_from_u64(seed);
    let weights = widths.windows(2).map(|w| normal(&mut rng, w[0], w[1], 0.4)).collect();
    let dense = DenseModel::new(act, weights).unwrap();
    let mut model = Model::quantize_dense(&dense, &QuantConfig::new(4, 4, 4, QuantMode::MinMax).unwrap()).unwrap();
    if let Some(shape) = shape {
        for (i, w) in widths.windows(2).enumerate() {
            let mut a = shape.zeros(w[0], w[1], 0.5, op).unwrap();
            for p in a.params_mut() {
                *p = normal(&mut rng, p.rows(), p.cols(), 0.3);
            }
            model.set_adapter(i, Some(a)).unwrap();
        }
    }
    model
}

fn shapes() -> [AdapterShape; 3] {
    [
        AdapterShape::Lora { rank: 3 },
        AdapterShape::Bara {
            balance: Balance::square(2),
            rank: 3,
        },
        AdapterShape::Hira {
            balance: Balance::new(4, 4),
        },
    ]
}

#[test]
fn forward_matches_straight_line_reimplementation() {
    for (k, shape) in shapes().into_iter().enumerate() {
        let model = random_model(
            20 + k as u64,
            &[16, 32, 16, 8],
            Activation::Tanh,
            Some(shape),
            ScaleOperator::PoolRepeat,
        );
        let x = normal(&mut Rng::seed_from_u64(1), 6, 16, 1.0);
        let mut h = x.clone();
        for (i, layer) in model.layers().iter().enumerate() {
            let w = layer
                .w_tilde()
                .add(&layer.adapter().unwrap().scaled_delta_weight().unwrap())
                .unwrap();
            h = h.matmul(&w).unwrap();
            if i + 1 < model.layers().len() {
                h = h.map(f64::tanh);
            }
        }
        let (y, _) = model_forward(&model, &x).unwrap();
        let scale = h.max_abs();
        assert!(y.max_abs_diff(&h) <= 1e-12 * scale.max(1.0), "{shape:?}");
    }
}

#[test]
fn single_identity_layer_backward_is_adapter_backward() {
    for (k, shape) in shapes().into_iter().enumerate() {
        let model = random_model(
            30 + k as u64,
            &[16, 8],
            Activation::Identity,
            Some(shape),
            ScaleOperator::PoolRepeat,
        );
        let mut rng = Rng::seed_from_u64(2);
        let x = normal(&mut rng, 4, 16, 1.0);
        let g = normal(&mut rng, 4, 8, 1.0);
        let (_, tape) = model_forward(&model, &x).unwrap();
        let grads = model_backward(&model, &tape, &g).unwrap();
        let layer = &model.layers()[0];
        let (direct, g_x) = layer.adapter().unwrap().backward(&x, &g, layer.w_tilde()).unwrap();
        assert_eq!(grads.layers[0].adapter.as_ref().unwrap(), &direct);
        assert_eq!(grads.input, g_x);
    }
}

#[test]
fn full_model_finite_differences_every_kind_and_operator() {
    for kind in [AdapterKind::Lora, AdapterKind::Bara, AdapterKind::Hira] {
        for op in ScaleOperator::ALL {
            let err = run_gradcheck(kind, op, 5).unwrap();
            assert!(err <= 1e-6, "{kind:?}/{op:?}: {err:e}");
        }
    }
}

#[test]
fn gradcheck_is_reproducible() {
    let a = run_gradcheck(AdapterKind::Bara, ScaleOperator::StrideInterp, 9).unwrap();
    let b = run_gradcheck(AdapterKind::Bara, ScaleOperator::StrideInterp, 9).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
    let case = gradcheck_case(AdapterKind::Hira, ScaleOperator::PoolRepeat, 9).unwrap();
    assert!(case.model.params().iter().all(|p| !p.is_zero()));
}

#[test]
fn zero_adapter_linear_model_is_exact_under_central_differences() {
    let mut model = random_model(40, &[8, 4], Activation::Identity, None, ScaleOperator::PoolRepeat);
    let shape = AdapterShape::Lora { rank: 2 };
    model
        .set_adapter(0, Some(shape.zeros(8, 4, 1.0, ScaleOperator::PoolRepeat).unwrap()))
        .unwrap();
    let mut rng = Rng::seed_from_u64(3);
    let x = normal(&mut rng, 5, 8, 1.0);
    let t = normal(&mut rng, 5, 4, 1.0);
    let err = finite_difference_check(&model, &x, &t, LossKind::Mse, GRADCHECK_EPS).unwrap();
    assert!(err <= 1e-8, "{err:e}");
}

#[test]
fn trainable_bias_gradients_match_finite_differences() {
    let mut rng = Rng::seed_from_u64(4);
    let model = random_model(
        41,
        &[8, 8, 4],
        Activation::Tanh,
        Some(AdapterShape::Bara {
            balance: Balance::square(2),
            rank: 2,
        }),
        ScaleOperator::PoolRepeat,
    );
    let layers: Vec<QuantizedLinear> = model
        .layers()
        .iter()
        .map(|l| {
            let b = normal(&mut rng, 1, l.d_out(), 0.5);
            l.clone().with_bias(b, true).unwrap()
        })
        .collect();
    let model = Model::new(Activation::Tanh, layers).unwrap();
    assert_eq!(model.params().len(), 6);
    let x = normal(&mut rng, 3, 8, 1.0);
    let t = normal(&mut rng, 3, 4, 1.0);
    for loss in [LossKind::Mse, LossKind::CrossEntropy] {
        let target = if loss == LossKind::Mse {
            t.clone()
        } else {
            let mut onehot = Matrix::zeros(3, 4);
            for i in 0..3 {
                onehot.set(i, i, 1.0);
            }
            onehot
        };
        let err = finite_difference_check(&model, &x, &target, loss, GRADCHECK_EPS).unwrap();
        assert!(err <= 1e-6, "{loss:?}: {err:e}");
    }
}

#[test]
fn merged_models_match_adapted_model() {
    let widths = [16, 32, 16];
    let x = normal(&mut Rng::seed_from_u64(5), 10, 16, 1.0);
    for (k, shape) in shapes().into_iter().enumerate() {
        let model = random_model(
            50 + k as u64,
            &widths,
            Activation::Relu,
            Some(shape),
            ScaleOperator::PoolRepeat,
        );
        let y = model.predict(&x).unwrap();
        let dense = model.merge_dense().unwrap();
        let rel = y.max_abs_diff(&dense.forward(&x).unwrap()) / y.max_abs();
        assert!(rel <= 1e-9, "{shape:?} dense: {rel:e}");
        if let AdapterShape::Hira { .. } = shape {
            let merged = model.merge_hira().unwrap();
            let rel = y.max_abs_diff(&merged.predict(&x).unwrap()) / y.max_abs();
            assert!(rel <= 1e-9, "hira beta: {rel:e}");
            assert!(merged.layers().iter().all(|l| l.adapter().is_none()));
            for (a, b) in model.layers().iter().zip(merged.layers()) {
                assert_eq!(a.base().packed_codes(), b.base().packed_codes());
                assert_eq!(a.base().alphas(), b.base().alphas());
            }
        } else {
            assert!(model.merge_hira().is_err());
        }
    }
}

#[test]
fn forward_is_bit_deterministic() {
    let model = random_model(
        60,
        &[16, 16, 8],
        Activation::Relu,
        Some(shapes()[1]),
        ScaleOperator::PoolRepeat,
    );
    let x = normal(&mut Rng::seed_from_u64(6), 7, 16, 1.0);
    let a = model.predict(&x).unwrap();
    let b = model.clone().predict(&x).unwrap();
    assert!(a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .all(|(p, q)| p.to_bits() == q.to_bits()));
}

#[test]
fn set_adapter_checks_geometry() {
    let mut model = random_model(61, &[16, 8], Activation::Relu, None, ScaleOperator::PoolRepeat);
    let wrong = AdapterShape::Lora { rank: 2 }
        .zeros(8, 8, 1.0, ScaleOperator::PoolRepeat)
        .unwrap();
    assert!(model.set_adapter(0, Some(wrong)).is_err());
    assert!(model.set_adapter(3, None).is_err());
    let ok: Adapter = AdapterShape::Lora { rank: 2 }
        .zeros(16, 8, 1.0, ScaleOperator::PoolRepeat)
        .unwrap();
    model.set_adapter(0, Some(ok)).unwrap();
}
