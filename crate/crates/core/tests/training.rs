//! Training driver: initialization, determinism, frozen bases, sweeps and
//! magnitude statistics.

use qbara::adapters::{merge_hira, Adapter, AdapterShape, Balance, ScaleOperator};
use qbara::model::{Activation, DenseModel, Model};
use qbara::numerics::{Distribution, Matrix, Rng};
use qbara::persistence::save_quantized;
use qbara::quant::{quantize_matrix, QuantConfig, QuantMode};
use qbara::training::{
    build_student, evaluate, fine_tune, init_adapter, lambda_sweep, magnitude_report, train_loop, AdapterPlan,
    LossKind, MagnitudeTensor, OptimizerConfig, SyntheticTask, TaskConfig, TaskKind, TrainConfig,
};
use qbara::Error;

fn small_task() -> SyntheticTask {
    SyntheticTask::generate(&TaskConfig {
        widths: vec![16, 16, 8],
        eval_samples: 64,
        ..TaskConfig::default()
    })
    .unwrap()
}

fn quant() -> QuantConfig {
    QuantConfig::new(4, 4, 4, QuantMode::MinMax).unwrap()
}

fn bara_plan() -> AdapterPlan {
    AdapterPlan {
        shape: AdapterShape::Bara {
            balance: Balance::square(2),
            rank: 4,
        },
        operator: ScaleOperator::PoolRepeat,
    }
}

fn short(steps: usize) -> TrainConfig {
    TrainConfig {
        steps,
        batch_size: 8,
        optimizer: OptimizerConfig::adam(1e-2),
        ..TrainConfig::default()
    }
}

fn base_bytes(model: &Model) -> Vec<Vec<u8>> {
    model
        .layers()
        .iter()
        .map(|l| {
            let mut v = Vec::new();
            save_quantized(l.base(), &mut v).unwrap();
            v
        })
        .collect()
}

#[test]
fn initialization_makes_the_adapter_path_zero() {
    let mut rng = Rng::seed_from_u64(1);
    let mut bara = AdapterShape::Bara {
        balance: Balance::square(2),
        rank: 3,
    }
    .zeros(16, 8, 1.0, ScaleOperator::PoolRepeat)
    .unwrap();
    init_adapter(&mut bara, &mut rng).unwrap();
    assert!(bara.scaled_delta_weight().unwrap().is_zero());
    let a = bara.params()[0];
    let bound = 1.0 / (a.rows() as f64).sqrt();
    assert!(!a.is_zero() && a.max_abs() <= bound);

    let w = rng.fill(16, 8, Distribution::normal(0.0, 1.0)).unwrap();
    let q = quantize_matrix(&w, &QuantConfig::new(4, 2, 2, QuantMode::MinMax).unwrap()).unwrap();
    let mut hira = AdapterShape::Hira {
        balance: Balance::square(2),
    }
    .zeros(16, 8, 1.0, ScaleOperator::PoolRepeat)
    .unwrap();
    *hira.params_mut()[0] = Matrix::filled(8, 4, 3.0);
    init_adapter(&mut hira, &mut rng).unwrap();
    let Adapter::Hira(h) = &hira else { unreachable!() };
    let merged = merge_hira(&q, h).unwrap();
    let bytes = |q: &qbara::quant::QuantizedMatrix| {
        let mut v = Vec::new();
        save_quantized(q, &mut v).unwrap();
        v
    };
    assert_eq!(bytes(&merged), bytes(&q));

    let mut a1 = bara.clone();
    let mut a2 = bara.clone();
    init_adapter(&mut a1, &mut Rng::seed_from_u64(9)).unwrap();
    init_adapter(&mut a2, &mut Rng::seed_from_u64(9)).unwrap();
    assert_eq!(a1, a2);
}

#[test]
fn zero_steps_leave_the_model_untouched() {
    let task = small_task();
    let cfg = short(0);
    let (mut init, _) = cfg.streams();
    let mut model = build_student(&task, &quant(), Some(&bara_plan()), cfg.lora_alpha, &mut init).unwrap();
    let before = model.clone();
    let history = train_loop(&mut model, &task, &cfg).unwrap();
    assert!(history.is_empty());
    assert_eq!(model.params(), before.params());
}

#[test]
fn zero_learning_rate_keeps_eval_loss_constant() {
    let task = small_task();
    let cfg = TrainConfig {
        optimizer: OptimizerConfig::sgd(0.0),
        ..short(10)
    };
    let run = fine_tune(&task, &quant(), &bara_plan(), &cfg).unwrap();
    assert_eq!(run.history.len(), 10);
    assert!(run.history.iter().all(|h| h.eval_loss == run.history[0].eval_loss));
    assert_eq!(run.history[0].eval_loss, run.baseline_eval_loss);
}

#[test]
fn training_is_deterministic_and_only_touches_adapters() {
    let task = small_task();
    let cfg = short(40);
    let a = fine_tune(&task, &quant(), &bara_plan(), &cfg).unwrap();
    let b = fine_tune(&task, &quant(), &bara_plan(), &cfg).unwrap();
    let bits = |r: &qbara::training::FineTuneRun| {
        r.history
            .iter()
            .map(|h| (h.step, h.train_loss.to_bits(), h.eval_loss.to_bits()))
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
    assert!(a.history.iter().enumerate().all(|(i, h)| h.step == i + 1));

    let untrained = Model::quantize_dense(task.teacher(), &quant()).unwrap();
    assert_eq!(base_bytes(&a.model), base_bytes(&untrained));
    assert!(a.final_eval_loss() < a.baseline_eval_loss);
}

#[test]
fn every_adapter_kind_reduces_eval_loss() {
    let task = small_task();
    let plans = [
        AdapterShape::Lora { rank: 2 },
        AdapterShape::Bara {
            balance: Balance::square(2),
            rank: 4,
        },
        AdapterShape::Hira {
            balance: Balance::square(4),
        },
    ];
    for shape in plans {
        let plan = AdapterPlan {
            shape,
            operator: ScaleOperator::PoolRepeat,
        };
        let run = fine_tune(&task, &quant(), &plan, &short(60)).unwrap();
        assert!(run.final_eval_loss() < run.baseline_eval_loss, "{shape:?}");
    }
}

#[test]
fn classification_task_trains_with_cross_entropy() {
    let task = SyntheticTask::generate(&TaskConfig {
        kind: TaskKind::Classification,
        widths: vec![16, 16, 4],
        eval_samples: 64,
        ..TaskConfig::default()
    })
    .unwrap();
    let cfg = TrainConfig {
        loss: LossKind::CrossEntropy,
        ..short(60)
    };
    let run = fine_tune(&task, &quant(), &bara_plan(), &cfg).unwrap();
    assert!(run.final_eval_loss().is_finite());
    assert!(run.final_eval_loss() < run.baseline_eval_loss);
}

#[test]
fn geometry_mismatch_is_a_shape_error() {
    let task = small_task();
    let other = SyntheticTask::generate(&TaskConfig {
        widths: vec![8, 8],
        ..TaskConfig::default()
    })
    .unwrap();
    let mut model = Model::quantize_dense(other.teacher(), &quant()).unwrap();
    assert!(matches!(train_loop(&mut model, &task, &short(1)), Err(Error::Shape(_))));
}

#[test]
fn sweep_unit_balance_is_a_lora_run() {
    let task = small_task();
    let cfg = short(15);
    let records = lambda_sweep(
        &task,
        &quant(),
        &[Balance::square(1)],
        3,
        ScaleOperator::PoolRepeat,
        &cfg,
    )
    .unwrap();
    assert_eq!(records.len(), 1);
    let lora = AdapterPlan {
        shape: AdapterShape::Lora { rank: 3 },
        operator: ScaleOperator::PoolRepeat,
    };
    let run = fine_tune(&task, &quant(), &lora, &cfg).unwrap();
    assert_eq!(records[0].final_eval_loss.to_bits(), run.final_eval_loss().to_bits());
    assert_eq!(records[0].params, run.model.trainable_param_count() as u64);
}

#[test]
fn sweep_keeps_parameter_count() {
    let task = small_task();
    let lambdas: Vec<Balance> = [1, 2, 4, 8].map(Balance::square).to_vec();
    let records = lambda_sweep(&task, &quant(), &lambdas, 2, ScaleOperator::PoolRepeat, &short(10)).unwrap();
    assert_eq!(records.len(), 4);
    assert!(records.iter().all(|r| r.params == records[0].params));
    assert!(records.iter().all(|r| r.final_eval_loss.is_finite()));
    assert_eq!(records.iter().map(|r| r.rank).collect::<Vec<_>>(), vec![2, 4, 8, 16]);
}

#[test]
fn sweep_rejects_non_dividing_factor() {
    let task = small_task();
    let err = lambda_sweep(
        &task,
        &quant(),
        &[Balance::square(2), Balance::square(3)],
        2,
        ScaleOperator::PoolRepeat,
        &short(1),
    )
    .unwrap_err();
    match err {
        Error::Shape(msg) => assert!(msg.contains("λ=3"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

fn identity_model(width: usize) -> Model {
    let dense = DenseModel::new(
        Activation::Identity,
        vec![Matrix::identity(width), Matrix::identity(width)],
    )
    .unwrap();
    Model::quantize_dense(&dense, &QuantConfig::new(4, 2, 2, QuantMode::MinMax).unwrap()).unwrap()
}

#[test]
fn magnitude_report_closed_forms() {
    let model = identity_model(4);
    let report = magnitude_report(&model, &Matrix::filled(3, 4, -2.5)).unwrap();
    assert_eq!(report.len(), 2 * 3 * 4);
    for r in report.iter().filter(|r| r.tensor == MagnitudeTensor::Input) {
        if r.layer == 0 {
            assert_eq!((r.mean_abs, r.max_abs), (2.5, 2.5));
        } else {
            assert!((r.mean_abs - 2.5).abs() < 1e-6);
        }
    }
    let zero = magnitude_report(&model, &Matrix::zeros(3, 4)).unwrap();
    assert!(zero
        .iter()
        .filter(|r| r.tensor != MagnitudeTensor::Weight)
        .all(|r| r.mean_abs == 0.0 && r.max_abs == 0.0));
}

#[test]
fn magnitude_report_matches_naive_recomputation() {
    let task = small_task();
    let cfg = short(5);
    let (mut init, _) = cfg.streams();
    let model = build_student(&task, &quant(), Some(&bara_plan()), 16.0, &mut init).unwrap();
    let x = task.sample_inputs(&mut Rng::seed_from_u64(3), 20).unwrap();
    let report = magnitude_report(&model, &x).unwrap();

    let mut h = x.clone();
    let mut expected = Vec::new();
    for (l, layer) in model.layers().iter().enumerate() {
        let pre = layer.forward(&h).unwrap();
        for (tensor, m) in [
            (MagnitudeTensor::Input, h.clone()),
            (MagnitudeTensor::Output, pre.clone()),
        ] {
            for c in 0..m.cols() {
                let col: Vec<f64> = (0..m.rows()).map(|r| m.get(r, c).abs()).collect();
                let mean = col.iter().sum::<f64>() / col.len() as f64;
                let max = col.iter().cloned().fold(0.0, f64::max);
                expected.push((l, tensor, c, mean, max));
            }
        }
        let w = layer.w_tilde();
        for r in 0..w.rows() {
            let row: Vec<f64> = w.row(r).iter().map(|v| v.abs()).collect();
            expected.push((
                l,
                MagnitudeTensor::Weight,
                r,
                row.iter().sum::<f64>() / row.len() as f64,
                row.iter().cloned().fold(0.0, f64::max),
            ));
        }
        h = if l + 1 < model.layers().len() {
            pre.map(|v| v.max(0.0))
        } else {
            pre
        };
    }
    assert_eq!(report.len(), expected.len());
    for (r, (l, t, c, mean, max)) in report.iter().zip(expected) {
        assert_eq!((r.layer, r.tensor, r.channel), (l, t, c));
        assert!((r.mean_abs - mean).abs() <= 1e-12 && (r.max_abs - max).abs() <= 1e-12);
    }
    assert!(evaluate(&model, &task, LossKind::Mse).unwrap().is_finite());
}
