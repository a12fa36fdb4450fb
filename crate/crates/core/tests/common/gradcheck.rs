//! Central finite-difference checks of every trainable path, in f64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use s2s_core::maskio::{InstanceMask, Mask, SceneAnnotation};
use s2s_core::model::{Combiner, InputMode, ModelConfig, QueryInput, TwoStreamModel};
use s2s_core::nn::{BackboneKind, Feature, Grads};
use s2s_core::pipeline::{InputPipeline, LoadedImage};
use s2s_core::synthgen::{ManifestEntry, Side, VoPair};
use s2s_core::train::{batch_gradients, EpisodeBatch, QueryCache, Sample, TrainData};
use s2s_core::wordvec::semantic_fixture_table;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Compares `analytic` against central differences of `loss` on
/// `per_tensor` entries of every parameter tensor. `loss` also returns the
/// ReLU on/off pattern; entries whose ±h perturbation flips a unit sit on a
/// kink and are replaced by another draw.
fn check_params(
    model: &mut TwoStreamModel<f64>,
    analytic: &Grads<f64>,
    per_tensor: usize,
    seed: u64,
    loss: impl Fn(&TwoStreamModel<f64>) -> (f64, Vec<bool>),
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = loss(model).1;
    for k in 0..model.params().len() {
        let n = model.params().params()[k].data.len();
        let mut candidates: Vec<usize> = (0..n).collect();
        if n > per_tensor {
            candidates = (0..per_tensor * 20)
                .map(|_| rng.random_range(0..n))
                .collect();
        }
        let mut checked = 0;
        for i in candidates {
            if checked == per_tensor {
                break;
            }
            let orig = model.params().params()[k].data[i];
            model.params_mut().params_mut()[k].data[i] = orig + H;
            let (up, p_up) = loss(model);
            model.params_mut().params_mut()[k].data[i] = orig - H;
            let (down, p_down) = loss(model);
            model.params_mut().params_mut()[k].data[i] = orig;
            if p_up != base || p_down != base {
                continue;
            }
            let numeric = (up - down) / (2.0 * H);
            let e = rel_err(analytic.data[k][i], numeric);
            assert!(
                e < TOL,
                "{}[{i}]: analytic {} numeric {numeric}",
                model.params().params()[k].name,
                analytic.data[k][i]
            );
            checked += 1;
        }
        assert!(
            checked > 0,
            "no smooth entry found in {}",
            model.params().params()[k].name
        );
    }
}

pub fn vnet_check(kind: BackboneKind, in_c: usize, size: usize, d_v: usize, per_tensor: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mode = if in_c == 3 {
        InputMode::Rgb
    } else {
        InputMode::S2s
    };
    let cfg = ModelConfig {
        backbone: kind,
        seed: 4,
        ..ModelConfig::tiny(mode, in_c, size, d_v)
    };
    let mut model = TwoStreamModel::<f64>::new(cfg).unwrap();
    let x = Feature::new(in_c, size, size, random_vec(&mut rng, in_c * size * size));
    let r = random_vec(&mut rng, d_v);
    let jvp = |m: &TwoStreamModel<f64>, x: &Feature<f64>| {
        let (f, trace) = m.vnet_trace(x).unwrap();
        (
            f.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>(),
            trace.relu_pattern(),
        )
    };
    let (_, trace) = model.vnet_trace(&x).unwrap();
    let mut grads = Grads::zeros_like(model.params());
    let dx = model.vnet_backward(&mut grads, &trace, &r, true).unwrap();
    check_params(&mut model, &grads, per_tensor, 1, |m| jvp(m, &x));
    let base = jvp(&model, &x).1;
    let mut checked = 0;
    while checked < 8 {
        let i = rng.random_range(0..x.data.len());
        let (mut up, mut down) = (x.clone(), x.clone());
        up.data[i] += H;
        down.data[i] -= H;
        let ((fu, pu), (fd, pd)) = (jvp(&model, &up), jvp(&model, &down));
        if pu != base || pd != base {
            continue;
        }
        checked += 1;
        let numeric = (fu - fd) / (2.0 * H);
        assert!(
            rel_err(dx.data[i], numeric) < TOL,
            "input[{i}]: {} vs {numeric}",
            dx.data[i]
        );
    }
}

pub fn query_check(combiner: Combiner, separate: bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let cfg = ModelConfig {
        combiner,
        separate_qnets: separate,
        seed: 8,
        ..ModelConfig::tiny(InputMode::S2s, 6, 16, 8)
    };
    let mut model = TwoStreamModel::<f64>::new(cfg).unwrap();
    let q = model
        .query_input(&random_vec(&mut rng, 6), &random_vec(&mut rng, 6))
        .unwrap();
    let r = random_vec(&mut rng, 8);
    let (out, trace) = model.query_trace(&q).unwrap();
    assert_eq!(out.len(), 8);
    let mut grads = Grads::zeros_like(model.params());
    let dq = model.query_backward(&mut grads, &trace, &r);
    let loss = |m: &TwoStreamModel<f64>, q: &QueryInput<f64>| {
        m.forward_query(q)
            .unwrap()
            .iter()
            .zip(&r)
            .map(|(a, b)| a * b)
            .sum::<f64>()
    };
    check_params(&mut model, &grads, 40, 2, |m| (loss(m, &q), vec![]));
    let flat: Vec<f64> = match &q {
        QueryInput::Combined(v) => v.clone(),
        QueryInput::Separate { verb, object } => verb.iter().chain(object).copied().collect(),
    };
    let rebuild = |v: Vec<f64>| match &q {
        QueryInput::Combined(_) => QueryInput::Combined(v),
        QueryInput::Separate { verb, .. } => {
            let object = v[verb.len()..].to_vec();
            QueryInput::Separate {
                verb: v[..verb.len()].to_vec(),
                object,
            }
        }
    };
    for i in 0..flat.len() {
        let (mut up, mut down) = (flat.clone(), flat.clone());
        up[i] += H;
        down[i] -= H;
        let numeric = (loss(&model, &rebuild(up)) - loss(&model, &rebuild(down))) / (2.0 * H);
        assert!(rel_err(dq[i], numeric) < TOL, "query input {i}");
    }
}

pub fn cnet_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut model = TwoStreamModel::<f64>::new(ModelConfig {
        seed: 3,
        ..ModelConfig::tiny(InputMode::S2s, 4, 16, 8)
    })
    .unwrap();
    let (fv, fq) = (random_vec(&mut rng, 8), random_vec(&mut rng, 8));
    let (_, trace) = model.closeness_trace(&fv, &fq).unwrap();
    let mut grads = Grads::zeros_like(model.params());
    let (dv, dq) = model.closeness_backward(&mut grads, &trace, 1.0);
    check_params(&mut model, &grads, 60, 3, |m| {
        (m.closeness(&fv, &fq).unwrap(), vec![])
    });
    for i in 0..8 {
        for (which, d) in [(0, &dv), (1, &dq)] {
            let (mut a, mut b) = ([fv.clone(), fq.clone()], [fv.clone(), fq.clone()]);
            a[which][i] += H;
            b[which][i] -= H;
            let numeric = (model.closeness(&a[0], &a[1]).unwrap()
                - model.closeness(&b[0], &b[1]).unwrap())
                / (2.0 * H);
            assert!(rel_err(d[i], numeric) < TOL);
        }
    }
}

fn toy_scene(id: &str, verb: &str, object: &str, offset: usize) -> SceneAnnotation {
    SceneAnnotation {
        image_id: id.into(),
        width: 16,
        height: 16,
        instances: vec![
            InstanceMask {
                label: "person".into(),
                mask: Mask::from_fn(16, 16, |x, y| (2..6).contains(&x) && (1..12).contains(&y)),
            },
            InstanceMask {
                label: object.into(),
                mask: Mask::from_fn(16, 16, |x, y| {
                    (offset..offset + 5).contains(&x) && (8..13).contains(&y)
                }),
            },
        ],
        verb: verb.into(),
        object: object.into(),
        rgb_path: None,
    }
}

pub fn full_batch_check() {
    let words = semantic_fixture_table(6, 2).unwrap();
    let specs = [
        ("ride", "horse", 3),
        ("wash", "horse", 9),
        ("feed", "dog", 7),
    ];
    let entries: Vec<ManifestEntry> = specs
        .iter()
        .enumerate()
        .map(|(i, &(v, o, _))| ManifestEntry {
            image_id: format!("img{i}"),
            verb: v.into(),
            object: o.into(),
            split: Side::Train,
        })
        .collect();
    let images = specs
        .iter()
        .enumerate()
        .map(|(i, &(v, o, off))| LoadedImage::Scene(toy_scene(&format!("img{i}"), v, o, off)))
        .collect();
    let data = TrainData {
        entries,
        images,
        pipeline: InputPipeline::blob(InputMode::S2s, 16, words.clone()).unwrap(),
        words,
    };
    let batch = EpisodeBatch {
        samples: vec![
            Sample {
                image: 0,
                query: VoPair::new("ride", "horse"),
                target: 1.0,
            },
            Sample {
                image: 0,
                query: VoPair::new("wash", "horse"),
                target: 0.0,
            },
            Sample {
                image: 1,
                query: VoPair::new("wash", "horse"),
                target: 1.0,
            },
            Sample {
                image: 2,
                query: VoPair::new("ride", "horse"),
                target: 0.0,
            },
        ],
    };
    for separate in [false, true] {
        let cfg = ModelConfig {
            separate_qnets: separate,
            seed: 12,
            ..ModelConfig::tiny(InputMode::S2s, 6, 16, 8)
        };
        let mut model = TwoStreamModel::<f64>::new(cfg).unwrap();
        // Sparse blobs put zero-bias units exactly on the ReLU kink.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for p in model
            .params_mut()
            .params_mut()
            .iter_mut()
            .filter(|p| p.name.ends_with(".bias"))
        {
            p.data
                .iter_mut()
                .for_each(|b| *b = rng.random_range(-0.1..0.1));
        }
        let (_, grads) = batch_gradients(&model, &data, &mut QueryCache::new(), &batch).unwrap();
        check_params(&mut model, &grads, 10, 4, |m| {
            (
                batch_gradients(m, &data, &mut QueryCache::new(), &batch)
                    .unwrap()
                    .0,
                vec![],
            )
        });
    }
}
