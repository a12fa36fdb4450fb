use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use s2s_core::model::{
    combine_query, Combiner, InputMode, ModelConfig, QueryInput, TwoStreamModel,
};
use s2s_core::nn::{BackboneKind, Feature};
use s2s_core::wordvec::{embed_label, semantic_fixture_table};
use s2s_core::S2sError;

fn set_param(model: &mut TwoStreamModel<f64>, name: &str, values: &[f64]) {
    let p = model
        .params_mut()
        .params_mut()
        .iter_mut()
        .find(|p| p.name == name)
        .unwrap();
    assert_eq!(p.data.len(), values.len(), "{name}");
    p.data.copy_from_slice(values);
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[test]
fn closeness_matches_closed_form() {
    let cfg = ModelConfig {
        c_hidden: 4,
        ..ModelConfig::tiny(InputMode::S2s, 3, 16, 2)
    };
    let mut m = TwoStreamModel::<f64>::new(cfg).unwrap();
    let mut eye = vec![0.0; 16];
    (0..4).for_each(|i| eye[i * 5] = 1.0);
    set_param(&mut m, "cnet.fc1.weight", &eye);
    set_param(&mut m, "cnet.fc1.bias", &[0.0; 4]);
    set_param(&mut m, "cnet.fc2.weight", &[0.7, -1.3, 0.25, 2.0]);
    set_param(&mut m, "cnet.fc2.bias", &[-0.1]);
    for (fv, fq) in [
        ([0.5, -2.0], [1.5, 0.3]),
        ([3.0, 1.0], [-1.0, -1.0]),
        ([0.0, 0.0], [0.0, 0.0]),
    ] {
        let relu = |x: f64| x.max(0.0);
        let pre =
            0.7 * relu(fv[0]) - 1.3 * relu(fv[1]) + 0.25 * relu(fq[0]) + 2.0 * relu(fq[1]) - 0.1;
        let tau = m.closeness(&fv, &fq).unwrap();
        assert!((tau - sigmoid(pre)).abs() < 1e-9);
    }
}

#[test]
fn closeness_is_open_unit_and_asymmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m = TwoStreamModel::<f64>::new(ModelConfig {
        seed: 3,
        ..ModelConfig::tiny(InputMode::S2s, 4, 16, 8)
    })
    .unwrap();
    let mut asymmetric = false;
    for _ in 0..20 {
        let a: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
        let t = m.closeness(&a, &b).unwrap();
        assert!(t > 0.0 && t < 1.0);
        asymmetric |= t != m.closeness(&b, &a).unwrap();
    }
    assert!(asymmetric);
    assert!(matches!(
        m.closeness(&[f64::NAN; 8], &[0.0; 8]),
        Err(S2sError::Numeric(_))
    ));
    assert!(matches!(
        m.closeness(&[0.0; 7], &[0.0; 8]),
        Err(S2sError::Dimension(_))
    ));
}

#[test]
fn score_equals_manual_composition() {
    let words = semantic_fixture_table(6, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for combiner in Combiner::ALL {
        for separate in [false, true] {
            let cfg = ModelConfig {
                combiner,
                separate_qnets: separate,
                seed: 9,
                ..ModelConfig::tiny(InputMode::S2s, 6, 16, 8)
            };
            let m = TwoStreamModel::<f64>::new(cfg).unwrap();
            let x = Feature::new(
                6,
                16,
                16,
                (0..6 * 256).map(|_| rng.random_range(0.0..1.0)).collect(),
            );
            let (vv, vo) = (
                embed_label(&words, "ride").unwrap(),
                embed_label(&words, "horse").unwrap(),
            );
            let f_v = m.forward_vnet(&x).unwrap();
            let f_q = if separate {
                m.forward_qnet_separate(&vv, &vo).unwrap()
            } else {
                m.forward_qnet(&combine_query(&vv, &vo, combiner).unwrap())
                    .unwrap()
            };
            let manual = m.closeness(&f_v, &f_q).unwrap();
            let s = m.score(&x, "ride", "horse", &words).unwrap();
            assert_eq!(s, manual);
            assert_eq!(s, m.score(&x, "ride", "horse", &words).unwrap());
        }
    }
}

#[test]
fn rgb_model_rejects_blob_input() {
    let words = semantic_fixture_table(6, 1).unwrap();
    let m = TwoStreamModel::<f32>::new(ModelConfig::tiny(InputMode::Rgb, 6, 16, 8)).unwrap();
    let blob = Feature::<f32>::zeros(6, 16, 16);
    assert!(matches!(
        m.score(&blob, "ride", "horse", &words),
        Err(S2sError::Dimension(_))
    ));
    assert!(matches!(
        m.forward_vnet(&Feature::zeros(3, 8, 8)),
        Err(S2sError::Dimension(_))
    ));
}

#[test]
fn output_shapes_per_layout() {
    for combiner in Combiner::ALL {
        for separate in [false, true] {
            let cfg = ModelConfig {
                combiner,
                separate_qnets: separate,
                ..ModelConfig::tiny(InputMode::S2s, 5, 32, 12)
            };
            let m = TwoStreamModel::<f32>::new(cfg.clone()).unwrap();
            let v = m.forward_vnet(&Feature::zeros(5, 32, 32)).unwrap();
            assert_eq!(v.len(), 12);
            assert!(v.iter().all(|x| x.is_finite()));
            let q = m.query_input(&[0.1; 5], &[0.2; 5]).unwrap();
            assert_eq!(m.forward_query(&q).unwrap().len(), 12);
            match q {
                QueryInput::Combined(c) => {
                    assert!(!separate);
                    assert_eq!(c.len(), combiner.output_dim(5));
                    assert_eq!(c.len(), cfg.query_dim());
                    assert!(matches!(
                        m.forward_qnet_separate(&[0.0; 5], &[0.0; 5]),
                        Err(S2sError::Config(_))
                    ));
                }
                QueryInput::Separate { verb, object } => {
                    assert!(separate);
                    assert_eq!((verb.len(), object.len()), (5, 5));
                }
            }
        }
    }
}

#[test]
fn residual_backbone_widths() {
    let r18 = ModelConfig::residual(BackboneKind::Paper18, InputMode::S2s, 300, 64);
    assert_eq!((r18.d_v, r18.c_hidden), (512, 1024));
    let r50 = ModelConfig::residual(BackboneKind::Paper50, InputMode::S2s, 300, 64);
    assert_eq!((r50.d_v, r50.c_hidden), (2048, 4096));
    let bad = ModelConfig { d_v: 256, ..r18 };
    assert!(matches!(
        TwoStreamModel::<f32>::new(bad),
        Err(S2sError::Config(_))
    ));
}

#[test]
fn construction_is_deterministic() {
    let cfg = ModelConfig {
        seed: 5,
        ..ModelConfig::tiny(InputMode::Orthovec2s, 7, 16, 8)
    };
    let a = TwoStreamModel::<f32>::new(cfg.clone()).unwrap();
    let b = TwoStreamModel::<f32>::new(cfg.clone()).unwrap();
    assert_eq!(a.params().params(), b.params().params());
    let c = TwoStreamModel::<f32>::new(ModelConfig { seed: 6, ..cfg }).unwrap();
    let shapes = |m: &TwoStreamModel<f32>| {
        m.params()
            .params()
            .iter()
            .map(|p| (p.name.clone(), p.dims.clone()))
            .collect::<Vec<_>>()
    };
    assert_eq!(shapes(&a), shapes(&c));
    assert_ne!(a.params().params(), c.params().params());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn symmetric_combiners_ignore_vo_swap(v in prop::collection::vec(-2.0f64..2.0, 4), o in prop::collection::vec(-2.0f64..2.0, 4)) {
        for c in Combiner::ALL {
            let a = combine_query(&v, &o, c).unwrap();
            let b = combine_query(&o, &v, c).unwrap();
            match c {
                Combiner::Sum | Combiner::Hadamard => prop_assert_eq!(a, b),
                Combiner::CatV | Combiner::CatH => if v != o { prop_assert_ne!(a, b) },
            }
        }
        let cfg = ModelConfig { combiner: Combiner::Sum, seed: 2, ..ModelConfig::tiny(InputMode::S2s, 4, 16, 8) };
        let m = TwoStreamModel::<f64>::new(cfg).unwrap();
        let fa = m.forward_query(&m.query_input(&v, &o).unwrap()).unwrap();
        let fb = m.forward_query(&m.query_input(&o, &v).unwrap()).unwrap();
        prop_assert_eq!(fa, fb);
    }

    #[test]
    fn hadamard_is_unit_or_zero(v in prop::collection::vec(-2.0f64..2.0, 1..8)) {
        let o: Vec<f64> = v.iter().rev().copied().collect();
        let h = combine_query(&v, &o, Combiner::Hadamard).unwrap();
        let n = h.iter().map(|x| x * x).sum::<f64>().sqrt();
        let raw = v.iter().zip(&o).map(|(a, b)| (a * b).powi(2)).sum::<f64>().sqrt();
        if raw > 1e-12 {
            prop_assert!((n - 1.0).abs() < 1e-6);
        } else {
            prop_assert!(n <= 1.0);
        }
    }
}
