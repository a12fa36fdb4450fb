//! Episode training: matched and unmatched image-query pairs regressed to
//! 1 and 0 with squared error, optimized by Adam.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{read_archive, write_archive, Record};
use crate::error::{IoContext, Result, S2sError};
use crate::model::{QueryInput, TwoStreamModel};
use crate::nn::{Grads, ParamStore, Real};
use crate::pipeline::{InputPipeline, LoadedImage};
use crate::synthgen::{Manifest, ManifestEntry, Side, VoPair};
use crate::wordvec::{embed_label, EmbeddingTable};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Parameters whose names start with this prefix receive weight decay.
pub const DECAY_PREFIX: &str = "qnet";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr0: f64,
    pub anneal_factor: f64,
    pub anneal_every: u64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub iterations: u64,
    pub seed: u64,
    /// VO pairs drawn per episode.
    pub episode_classes: usize,
    pub negatives_per_positive: usize,
    /// A metrics record is emitted every `log_every` iterations.
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 1e-5,
            anneal_factor: 0.5,
            anneal_every: 200_000,
            weight_decay: 1e-5,
            batch_size: 32,
            iterations: 1000,
            seed: 0,
            episode_classes: 8,
            negatives_per_positive: 1,
            log_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(S2sError::Config(m.into()));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if self.anneal_factor.is_nan() || self.anneal_factor <= 0.0 || self.anneal_every == 0 {
            return bad("annealing factor and period must be positive");
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return bad("weight decay must be non-negative");
        }
        if self.batch_size == 0 || self.negatives_per_positive == 0 || self.log_every == 0 {
            return bad("batch size, negatives per positive and log period must be positive");
        }
        if self.episode_classes < 2 {
            return bad("an episode needs at least 2 classes");
        }
        Ok(())
    }

    /// Matched samples per batch; the remainder are unmatched.
    pub fn positives(&self) -> usize {
        (self.batch_size / (1 + self.negatives_per_positive)).max(1)
    }
}

/// `lr0 · anneal_factor^⌊iteration / anneal_every⌋`.
pub fn lr_at(iteration: u64, config: &TrainConfig) -> f64 {
    let steps = (iteration / config.anneal_every) as i32;
    config.lr0 * config.anneal_factor.powi(steps)
}

pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(S2sError::Loss("empty batch".into()));
    }
    if predictions.len() != targets.len() {
        return Err(S2sError::Loss(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let sum: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / predictions.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Index into the entry list the episode was drawn from.
    pub image: usize,
    pub query: VoPair,
    pub target: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct EpisodeBatch {
    pub samples: Vec<Sample>,
}

/// Distinct pairs of `entries`, sorted, with the images of each.
pub fn images_by_pair(entries: &[ManifestEntry]) -> BTreeMap<VoPair, Vec<usize>> {
    let mut map: BTreeMap<VoPair, Vec<usize>> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        map.entry(VoPair::new(&e.verb, &e.object))
            .or_default()
            .push(i);
    }
    map
}

/// Draw `episode_classes` pairs, then matched samples from their images,
/// each followed by unmatched samples that reuse the image with a uniformly
/// drawn different pair of the episode.
pub fn sample_episode<R: Rng>(
    entries: &[ManifestEntry],
    config: &TrainConfig,
    rng: &mut R,
) -> Result<EpisodeBatch> {
    let by_pair = images_by_pair(entries);
    if by_pair.len() < config.episode_classes {
        return Err(S2sError::Sampling(format!(
            "episode needs {} VO pairs, training data has {}",
            config.episode_classes,
            by_pair.len()
        )));
    }
    if config.episode_classes < 2 {
        return Err(S2sError::Sampling(
            "an episode needs at least 2 classes".into(),
        ));
    }
    let pairs: Vec<(&VoPair, &Vec<usize>)> = by_pair.iter().collect();
    let mut chosen = index::sample(rng, pairs.len(), config.episode_classes).into_vec();
    chosen.sort_unstable();
    let episode: Vec<(&VoPair, &Vec<usize>)> = chosen.into_iter().map(|i| pairs[i]).collect();
    let mut samples = Vec::with_capacity(config.batch_size);
    for _ in 0..config.positives() {
        let k = rng.random_range(0..episode.len());
        let (pair, images) = episode[k];
        let image = images[rng.random_range(0..images.len())];
        samples.push(Sample {
            image,
            query: pair.clone(),
            target: 1.0,
        });
        for _ in 0..config.negatives_per_positive {
            let mut j = rng.random_range(0..episode.len() - 1);
            if j >= k {
                j += 1;
            }
            samples.push(Sample {
                image,
                query: episode[j].0.clone(),
                target: 0.0,
            });
        }
    }
    Ok(EpisodeBatch { samples })
}

/// Episode stream for one iteration, independent of every other iteration.
pub fn episode_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    rng
}

/// Adds `weight_decay · θ` to the gradient of every Q-Net parameter.
pub fn apply_weight_decay<T: Real>(
    params: &ParamStore<T>,
    grads: &mut Grads<T>,
    weight_decay: f64,
) {
    if weight_decay == 0.0 {
        return;
    }
    let wd = T::of(weight_decay);
    for (p, g) in params.params().iter().zip(&mut grads.data) {
        if p.name.starts_with(DECAY_PREFIX) {
            g.iter_mut().zip(&p.data).for_each(|(g, &w)| *g += wd * w);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Steps taken.
    pub t: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros: Vec<Vec<T>> = params
            .params()
            .iter()
            .map(|p| vec![T::zero(); p.data.len()])
            .collect();
        Adam {
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &Grads<T>, lr: f64) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for (((p, g), m), v) in params
            .params_mut()
            .iter_mut()
            .zip(&grads.data)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((w, &g), m), v) in p.data.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                let g = g.f64();
                let m1 = b1 * m.f64() + (1.0 - b1) * g;
                let v1 = b2 * v.f64() + (1.0 - b2) * g * g;
                *m = T::of(m1);
                *v = T::of(v1);
                *w = T::of(w.f64() - lr * (m1 / c1) / ((v1 / c2).sqrt() + self.eps));
            }
        }
    }
}

/// Training images held in memory with their query vectors.
pub struct TrainData {
    pub entries: Vec<ManifestEntry>,
    pub images: Vec<LoadedImage>,
    pub pipeline: InputPipeline,
    pub words: EmbeddingTable,
}

impl TrainData {
    pub fn load(
        root: &Path,
        manifest: &Manifest,
        side: Side,
        pipeline: InputPipeline,
        words: EmbeddingTable,
    ) -> Result<Self> {
        let entries: Vec<ManifestEntry> = manifest.side(side).cloned().collect();
        let images = pipeline.load_all(root, &entries)?;
        Ok(TrainData {
            entries,
            images,
            pipeline,
            words,
        })
    }

    pub fn pairs(&self) -> Vec<VoPair> {
        images_by_pair(&self.entries).into_keys().collect()
    }
}

/// Per-pair query inputs, computed once.
pub struct QueryCache<T> {
    inputs: HashMap<VoPair, QueryInput<T>>,
}

impl<T: Real> QueryCache<T> {
    pub fn new() -> Self {
        QueryCache {
            inputs: HashMap::new(),
        }
    }

    pub fn get(
        &mut self,
        model: &TwoStreamModel<T>,
        words: &EmbeddingTable,
        pair: &VoPair,
    ) -> Result<&QueryInput<T>> {
        if !self.inputs.contains_key(pair) {
            let q = model.query_input(
                &embed_label(words, &pair.verb)?,
                &embed_label(words, &pair.object)?,
            )?;
            self.inputs.insert(pair.clone(), q);
        }
        Ok(&self.inputs[pair])
    }
}

impl<T: Real> Default for QueryCache<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Mean squared error of a batch and its parameter gradient. Each distinct
/// image goes through the V-Net once.
pub fn batch_gradients<T: Real>(
    model: &TwoStreamModel<T>,
    data: &TrainData,
    queries: &mut QueryCache<T>,
    batch: &EpisodeBatch,
) -> Result<(f64, Grads<T>)> {
    let n = batch.samples.len();
    if n == 0 {
        return Err(S2sError::Loss("empty batch".into()));
    }
    let mut groups: BTreeMap<usize, Vec<&Sample>> = BTreeMap::new();
    for s in &batch.samples {
        groups.entry(s.image).or_default().push(s);
    }
    let mut grads = Grads::zeros_like(model.params());
    let mut loss = 0.0;
    for (image, samples) in groups {
        let x = data.pipeline.feature::<T>(&data.images[image])?;
        let (f_v, vtrace) = model.vnet_trace(&x)?;
        let mut d_fv = vec![T::zero(); f_v.len()];
        for s in samples {
            let q = queries.get(model, &data.words, &s.query)?;
            let (f_q, qtrace) = model.query_trace(q)?;
            let (tau, ctrace) = model.closeness_trace(&f_v, &f_q)?;
            let err = tau.f64() - s.target;
            loss += err * err;
            let (dv, dq) =
                model.closeness_backward(&mut grads, &ctrace, T::of(2.0 * err / n as f64));
            d_fv.iter_mut().zip(&dv).for_each(|(a, b)| *a += *b);
            model.query_backward(&mut grads, &qtrace, &dq);
        }
        model.vnet_backward(&mut grads, &vtrace, &d_fv, false);
    }
    Ok((loss / n as f64, grads))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRecord {
    /// Steps completed.
    pub iter: u64,
    pub loss: f64,
    pub lr: f64,
}

impl LogRecord {
    /// One `iter,loss,lr` line without the newline.
    pub fn to_line(&self) -> String {
        format!("{},{:.8e},{:e}", self.iter, self.loss, self.lr)
    }
}

pub const LOG_HEADER: &str = "iter,loss,lr";

/// Optimizer state carried across resumed runs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    /// Iterations already completed.
    pub iteration: u64,
    pub adam: Adam<f32>,
}

impl TrainState {
    pub fn new(model: &TwoStreamModel<f32>) -> Self {
        TrainState {
            iteration: 0,
            adam: Adam::new(model.params()),
        }
    }

    pub fn save(&self, model: &TwoStreamModel<f32>, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json =
            serde_json::json!({ "iteration": self.iteration, "adam_t": self.adam.t }).to_string();
        let mut records = Vec::new();
        for (p, (m, v)) in model
            .params()
            .params()
            .iter()
            .zip(self.adam.m.iter().zip(&self.adam.v))
        {
            records.push(Record {
                name: format!("m/{}", p.name),
                dims: p.dims.clone(),
                data: m.clone(),
            });
            records.push(Record {
                name: format!("v/{}", p.name),
                dims: p.dims.clone(),
                data: v.clone(),
            });
        }
        let file = File::create(path).at(path)?;
        write_archive(BufWriter::new(file), &json, &records).at(path)
    }

    pub fn load(model: &TwoStreamModel<f32>, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (json, records) = read_archive(BufReader::new(File::open(path).at(path)?))?;
        let meta: serde_json::Value = serde_json::from_str(&json)?;
        let field = |k: &str| {
            meta.get(k)
                .and_then(serde_json::Value::as_u64)
                .ok_or_else(|| S2sError::Format(format!("trainer state lacks `{k}`")))
        };
        let mut by_name: HashMap<String, Record> =
            records.into_iter().map(|r| (r.name.clone(), r)).collect();
        let mut state = TrainState::new(model);
        state.iteration = field("iteration")?;
        state.adam.t = field("adam_t")?;
        for (k, p) in model.params().params().iter().enumerate() {
            for (prefix, slot) in [("m", &mut state.adam.m[k]), ("v", &mut state.adam.v[k])] {
                let r = by_name
                    .remove(&format!("{prefix}/{}", p.name))
                    .ok_or_else(|| {
                        S2sError::Consistency(format!("trainer state lacks `{prefix}/{}`", p.name))
                    })?;
                if r.dims != p.dims {
                    return Err(S2sError::Dimension(format!(
                        "trainer state tensor `{}` has the wrong shape",
                        r.name
                    )));
                }
                *slot = r.data;
            }
        }
        if let Some(extra) = by_name.keys().next() {
            return Err(S2sError::Consistency(format!(
                "unexpected trainer state tensor `{extra}`"
            )));
        }
        Ok(state)
    }
}

/// Run iterations `state.iteration .. config.iterations`. Every
/// `log_every`-th completed step is passed to `on_log`.
pub fn train_loop(
    model: &mut TwoStreamModel<f32>,
    state: &mut TrainState,
    data: &TrainData,
    config: &TrainConfig,
    mut on_log: impl FnMut(&LogRecord) -> Result<()>,
) -> Result<()> {
    config.validate()?;
    if data.pipeline.mode() != model.config().input_mode {
        return Err(S2sError::Config(format!(
            "model expects {} input, data was prepared as {}",
            model.config().input_mode.as_str(),
            data.pipeline.mode().as_str()
        )));
    }
    let mut queries = QueryCache::new();
    while state.iteration < config.iterations {
        let it = state.iteration;
        let batch = sample_episode(&data.entries, config, &mut episode_rng(config.seed, it))?;
        let (loss, mut grads) = match batch_gradients(model, data, &mut queries, &batch) {
            Err(S2sError::Numeric(_)) => {
                return Err(S2sError::Divergence {
                    iteration: it,
                    loss: f64::NAN,
                })
            }
            other => other?,
        };
        if !loss.is_finite() {
            return Err(S2sError::Divergence {
                iteration: it,
                loss,
            });
        }
        apply_weight_decay(model.params(), &mut grads, config.weight_decay);
        let lr = lr_at(it, config);
        state.adam.step(model.params_mut(), &grads, lr);
        state.iteration += 1;
        if state.iteration.is_multiple_of(config.log_every) {
            on_log(&LogRecord {
                iter: state.iteration,
                loss,
                lr,
            })?;
        }
    }
    Ok(())
}

/// Fraction of correct matched/unmatched decisions (τ ≥ 0.5 means matched)
/// over every image of `data` crossed with every pair in `pairs`.
pub fn pair_classification_accuracy(
    model: &TwoStreamModel<f32>,
    data: &TrainData,
    pairs: &[VoPair],
) -> Result<f64> {
    let mut queries = QueryCache::new();
    let mut f_qs = Vec::with_capacity(pairs.len());
    for p in pairs {
        let q = queries.get(model, &data.words, p)?.clone();
        f_qs.push(model.forward_query(&q)?);
    }
    let (mut correct, mut total) = (0usize, 0usize);
    for (entry, image) in data.entries.iter().zip(&data.images) {
        let f_v = model.forward_vnet(&data.pipeline.feature(image)?)?;
        for (p, f_q) in pairs.iter().zip(&f_qs) {
            let matched = p.verb == entry.verb && p.object == entry.object;
            let tau = model.closeness(&f_v, f_q)?;
            correct += usize::from((tau >= 0.5) == matched);
            total += 1;
        }
    }
    if total == 0 {
        return Err(S2sError::Protocol("no images to classify".into()));
    }
    Ok(correct as f64 / total as f64)
}
