//! The two-stream matching network.
//!
//! * V-Net: a convolutional [`Backbone`] over the visual input (RGB, S2S or
//!   orthonormal-vector blob), globally pooled to `d_v` features.
//! * Q-Net: an MLP over the combined verb/object query vector, or two MLPs
//!   encoding verb and object separately (`d_v / 2` each, concatenated).
//! * C-Net: `affine → ReLU → affine → sigmoid` over the concatenation of
//!   both features, giving the closeness score `τ ∈ (0, 1)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, S2sError};
use crate::nn::{
    relu_backward_inplace, relu_inplace, sigmoid, Backbone, BackboneTrace, Feature, Grads, Linear,
    ParamStore, Real,
};
use crate::wordvec::{embed_label, EmbeddingTable};

pub use crate::nn::BackboneKind;

/// Guard for normalizing an all-zero Hadamard product.
pub const HADAMARD_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputMode {
    Rgb,
    S2s,
    Orthovec2s,
}

impl InputMode {
    pub const ALL: [InputMode; 3] = [InputMode::Rgb, InputMode::S2s, InputMode::Orthovec2s];

    pub fn as_str(self) -> &'static str {
        match self {
            InputMode::Rgb => "rgb",
            InputMode::S2s => "s2s",
            InputMode::Orthovec2s => "orthovec2s",
        }
    }
}

impl std::str::FromStr for InputMode {
    type Err = S2sError;

    fn from_str(s: &str) -> Result<Self> {
        InputMode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| S2sError::Config(format!("unknown input mode `{s}`")))
    }
}

/// How the verb and object vectors form one query vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Combiner {
    #[serde(rename = "sum")]
    Sum,
    /// `[v_V ‖ v_O]`
    #[serde(rename = "catV")]
    CatV,
    /// interleaved `[v_V1, v_O1, v_V2, v_O2, ...]`
    #[serde(rename = "catH")]
    CatH,
    /// L2-normalized element-wise product
    #[serde(rename = "hadamard")]
    Hadamard,
}

impl Combiner {
    pub const ALL: [Combiner; 4] = [
        Combiner::Sum,
        Combiner::CatV,
        Combiner::CatH,
        Combiner::Hadamard,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Combiner::Sum => "sum",
            Combiner::CatV => "catV",
            Combiner::CatH => "catH",
            Combiner::Hadamard => "hadamard",
        }
    }

    /// Query width produced from two `word_dim` vectors.
    pub fn output_dim(self, word_dim: usize) -> usize {
        match self {
            Combiner::Sum | Combiner::Hadamard => word_dim,
            Combiner::CatV | Combiner::CatH => 2 * word_dim,
        }
    }
}

impl std::str::FromStr for Combiner {
    type Err = S2sError;

    fn from_str(s: &str) -> Result<Self> {
        Combiner::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| S2sError::Config(format!("unknown combiner `{s}`")))
    }
}

impl std::str::FromStr for BackboneKind {
    type Err = S2sError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "paper18" => Ok(BackboneKind::Paper18),
            "paper34" => Ok(BackboneKind::Paper34),
            "paper50" => Ok(BackboneKind::Paper50),
            "tiny" => Ok(BackboneKind::Tiny),
            _ => Err(S2sError::Config(format!("unknown backbone `{s}`"))),
        }
    }
}

pub fn combine_query(v_verb: &[f64], v_object: &[f64], mode: Combiner) -> Result<Vec<f64>> {
    if v_verb.len() != v_object.len() {
        return Err(S2sError::Dimension(format!(
            "verb vector has {} components, object vector {}",
            v_verb.len(),
            v_object.len()
        )));
    }
    Ok(match mode {
        Combiner::Sum => v_verb.iter().zip(v_object).map(|(a, b)| a + b).collect(),
        Combiner::CatV => v_verb.iter().chain(v_object).copied().collect(),
        Combiner::CatH => v_verb
            .iter()
            .zip(v_object)
            .flat_map(|(&a, &b)| [a, b])
            .collect(),
        Combiner::Hadamard => {
            let prod: Vec<f64> = v_verb.iter().zip(v_object).map(|(a, b)| a * b).collect();
            let norm = prod
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
                .max(HADAMARD_EPS);
            prod.into_iter().map(|x| x / norm).collect()
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_mode: InputMode,
    /// 3 for RGB, the word-vector dimension otherwise.
    pub in_channels: usize,
    /// Side length of the square visual input.
    pub input_size: usize,
    /// Word-vector dimension `l_v` fed to the query stream.
    pub word_dim: usize,
    pub d_v: usize,
    pub q_hidden: usize,
    pub c_hidden: usize,
    pub combiner: Combiner,
    pub separate_qnets: bool,
    pub backbone: BackboneKind,
    /// Initialization seed.
    pub seed: u64,
}

impl ModelConfig {
    /// Desk-scale configuration with the tiny backbone; hidden widths follow
    /// the defaults (`q_hidden = d_v`, `c_hidden = 2·d_v`).
    pub fn tiny(input_mode: InputMode, word_dim: usize, input_size: usize, d_v: usize) -> Self {
        ModelConfig {
            input_mode,
            in_channels: if input_mode == InputMode::Rgb {
                3
            } else {
                word_dim
            },
            input_size,
            word_dim,
            d_v,
            q_hidden: d_v,
            c_hidden: 2 * d_v,
            combiner: Combiner::Sum,
            separate_qnets: false,
            backbone: BackboneKind::Tiny,
            seed: 0,
        }
    }

    /// Residual backbone with its fixed output width (512 or 2048) and
    /// C-Net hidden width 1024 or 4096.
    pub fn residual(
        backbone: BackboneKind,
        input_mode: InputMode,
        word_dim: usize,
        input_size: usize,
    ) -> Self {
        let d_v = backbone.fixed_dim().unwrap_or(512);
        ModelConfig {
            backbone,
            ..ModelConfig::tiny(input_mode, word_dim, input_size, d_v)
        }
    }

    pub fn query_dim(&self) -> usize {
        if self.separate_qnets {
            self.word_dim
        } else {
            self.combiner.output_dim(self.word_dim)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(S2sError::Config(msg));
        if self.word_dim == 0 || self.d_v == 0 || self.q_hidden == 0 || self.c_hidden == 0 {
            return bad("all widths must be positive".into());
        }
        let want_c = if self.input_mode == InputMode::Rgb {
            3
        } else {
            self.word_dim
        };
        if self.in_channels != want_c {
            return bad(format!(
                "{} input needs {want_c} channels, config has {}",
                self.input_mode.as_str(),
                self.in_channels
            ));
        }
        if let Some(d) = self.backbone.fixed_dim() {
            if self.d_v != d {
                return bad(format!(
                    "backbone {:?} produces d_v = {d}, config has {}",
                    self.backbone, self.d_v
                ));
            }
        }
        let m = self.backbone.size_multiple();
        if self.input_size == 0 || !self.input_size.is_multiple_of(m) {
            return bad(format!(
                "input size {} must be a positive multiple of {m}",
                self.input_size
            ));
        }
        if self.separate_qnets && !self.d_v.is_multiple_of(2) {
            return bad("separate Q-Nets need an even d_v".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Mlp {
    fc1: Linear,
    fc2: Linear,
}

impl Mlp {
    fn new<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        in_f: usize,
        hidden: usize,
        out_f: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Mlp {
            fc1: Linear::new(
                store,
                &format!("{prefix}.fc1"),
                in_f,
                hidden,
                std::f64::consts::SQRT_2,
                rng,
            ),
            fc2: Linear::new(store, &format!("{prefix}.fc2"), hidden, out_f, 1.0, rng),
        }
    }

    fn forward<T: Real>(&self, store: &ParamStore<T>, x: &[T]) -> (Vec<T>, Vec<T>) {
        let mut h = self.fc1.forward(store, x);
        relu_inplace(&mut h);
        (self.fc2.forward(store, &h), h)
    }

    fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        grads: &mut Grads<T>,
        x: &[T],
        h: &[T],
        dy: &[T],
    ) -> Vec<T> {
        let mut dh = self.fc2.backward(store, grads, h, dy);
        relu_backward_inplace(h, &mut dh);
        self.fc1.backward(store, grads, x, &dh)
    }
}

#[derive(Clone, Debug)]
enum QueryNet {
    Single(Mlp),
    Separate { verb: Mlp, object: Mlp },
}

/// Query-stream input: one combined vector, or verb and object vectors for
/// separate Q-Nets.
#[derive(Clone, Debug, PartialEq)]
pub enum QueryInput<T> {
    Combined(Vec<T>),
    Separate { verb: Vec<T>, object: Vec<T> },
}

#[derive(Debug)]
pub struct QueryTrace<T> {
    input: QueryInput<T>,
    hidden: Vec<Vec<T>>,
}

#[derive(Debug)]
pub struct ClosenessTrace<T> {
    joint: Vec<T>,
    hidden: Vec<T>,
    tau: T,
}

#[derive(Clone, Debug)]
pub struct TwoStreamModel<T> {
    config: ModelConfig,
    params: ParamStore<T>,
    vnet: Backbone,
    qnet: QueryNet,
    cnet: Mlp,
}

impl<T: Real> TwoStreamModel<T> {
    /// Fresh model with fan-in scaled Gaussian weights and zero biases,
    /// deterministic in `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let vnet = Backbone::new(
            &mut params,
            "vnet",
            config.backbone,
            config.in_channels,
            config.d_v,
            &mut rng,
        );
        let qnet = if config.separate_qnets {
            let half = config.d_v / 2;
            QueryNet::Separate {
                verb: Mlp::new(
                    &mut params,
                    "qnet.verb",
                    config.word_dim,
                    config.q_hidden,
                    half,
                    &mut rng,
                ),
                object: Mlp::new(
                    &mut params,
                    "qnet.object",
                    config.word_dim,
                    config.q_hidden,
                    half,
                    &mut rng,
                ),
            }
        } else {
            QueryNet::Single(Mlp::new(
                &mut params,
                "qnet",
                config.query_dim(),
                config.q_hidden,
                config.d_v,
                &mut rng,
            ))
        };
        let cnet = Mlp::new(
            &mut params,
            "cnet",
            2 * config.d_v,
            config.c_hidden,
            1,
            &mut rng,
        );
        Ok(TwoStreamModel {
            config,
            params,
            vnet,
            qnet,
            cnet,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Same architecture with parameters converted to another precision.
    pub fn cast<U: Real>(&self) -> TwoStreamModel<U> {
        TwoStreamModel {
            config: self.config.clone(),
            params: self.params.cast(),
            vnet: self.vnet.clone(),
            qnet: self.qnet.clone(),
            cnet: self.cnet.clone(),
        }
    }

    pub fn check_visual(&self, x: &Feature<T>) -> Result<()> {
        let c = &self.config;
        if x.c != c.in_channels {
            return Err(S2sError::Dimension(format!(
                "V-Net expects {} input channels, got {}",
                c.in_channels, x.c
            )));
        }
        if x.h != c.input_size || x.w != c.input_size {
            return Err(S2sError::Dimension(format!(
                "V-Net expects {0}x{0} input, got {1}x{2}",
                c.input_size, x.h, x.w
            )));
        }
        Ok(())
    }

    pub fn forward_vnet(&self, x: &Feature<T>) -> Result<Vec<T>> {
        Ok(self.vnet_trace(x)?.0)
    }

    pub fn vnet_trace(&self, x: &Feature<T>) -> Result<(Vec<T>, BackboneTrace<T>)> {
        self.check_visual(x)?;
        Ok(self.vnet.forward(&self.params, x))
    }

    pub fn vnet_backward(
        &self,
        grads: &mut Grads<T>,
        trace: &BackboneTrace<T>,
        d_out: &[T],
        need_dx: bool,
    ) -> Option<Feature<T>> {
        self.vnet
            .backward(&self.params, grads, trace, d_out, need_dx)
    }

    /// Q-Net input for a verb/object vector pair under this configuration.
    pub fn query_input(&self, v_verb: &[f64], v_object: &[f64]) -> Result<QueryInput<T>> {
        let cast = |v: &[f64]| v.iter().map(|&x| T::of(x)).collect::<Vec<T>>();
        for v in [v_verb, v_object] {
            if v.len() != self.config.word_dim {
                return Err(S2sError::Dimension(format!(
                    "query word vector has {} components, model expects {}",
                    v.len(),
                    self.config.word_dim
                )));
            }
        }
        Ok(if self.config.separate_qnets {
            QueryInput::Separate {
                verb: cast(v_verb),
                object: cast(v_object),
            }
        } else {
            QueryInput::Combined(cast(&combine_query(
                v_verb,
                v_object,
                self.config.combiner,
            )?))
        })
    }

    /// Single Q-Net over a combined query vector.
    pub fn forward_qnet(&self, query: &[T]) -> Result<Vec<T>> {
        match self.qnet {
            QueryNet::Single(_) => Ok(self.query_trace(&QueryInput::Combined(query.to_vec()))?.0),
            QueryNet::Separate { .. } => Err(S2sError::Config(
                "model uses separate Q-Nets; call forward_qnet_separate".into(),
            )),
        }
    }

    /// Separate verb and object Q-Nets, outputs concatenated.
    pub fn forward_qnet_separate(&self, v_verb: &[T], v_object: &[T]) -> Result<Vec<T>> {
        match self.qnet {
            QueryNet::Separate { .. } => {
                let q = QueryInput::Separate {
                    verb: v_verb.to_vec(),
                    object: v_object.to_vec(),
                };
                Ok(self.query_trace(&q)?.0)
            }
            QueryNet::Single(_) => Err(S2sError::Config(
                "model has a single Q-Net; separate path unavailable".into(),
            )),
        }
    }

    pub fn forward_query(&self, query: &QueryInput<T>) -> Result<Vec<T>> {
        Ok(self.query_trace(query)?.0)
    }

    pub fn query_trace(&self, query: &QueryInput<T>) -> Result<(Vec<T>, QueryTrace<T>)> {
        let p = &self.params;
        match (&self.qnet, query) {
            (QueryNet::Single(mlp), QueryInput::Combined(q)) => {
                if q.len() != mlp.fc1.in_f {
                    return Err(S2sError::Dimension(format!(
                        "Q-Net expects {} inputs, got {}",
                        mlp.fc1.in_f,
                        q.len()
                    )));
                }
                let (out, h) = mlp.forward(p, q);
                Ok((
                    out,
                    QueryTrace {
                        input: query.clone(),
                        hidden: vec![h],
                    },
                ))
            }
            (
                QueryNet::Separate { verb, object },
                QueryInput::Separate {
                    verb: vv,
                    object: vo,
                },
            ) => {
                if vv.len() != verb.fc1.in_f || vo.len() != object.fc1.in_f {
                    return Err(S2sError::Dimension(format!(
                        "separate Q-Nets expect {} inputs each",
                        verb.fc1.in_f
                    )));
                }
                let (mut out, h1) = verb.forward(p, vv);
                let (o2, h2) = object.forward(p, vo);
                out.extend(o2);
                Ok((
                    out,
                    QueryTrace {
                        input: query.clone(),
                        hidden: vec![h1, h2],
                    },
                ))
            }
            _ => Err(S2sError::Config(
                "query input does not match the Q-Net layout".into(),
            )),
        }
    }

    /// Returns the gradient with respect to the query input(s), concatenated.
    pub fn query_backward(
        &self,
        grads: &mut Grads<T>,
        trace: &QueryTrace<T>,
        d_out: &[T],
    ) -> Vec<T> {
        let p = &self.params;
        match (&self.qnet, &trace.input) {
            (QueryNet::Single(mlp), QueryInput::Combined(q)) => {
                mlp.backward(p, grads, q, &trace.hidden[0], d_out)
            }
            (
                QueryNet::Separate { verb, object },
                QueryInput::Separate {
                    verb: vv,
                    object: vo,
                },
            ) => {
                let half = d_out.len() / 2;
                let mut dx = verb.backward(p, grads, vv, &trace.hidden[0], &d_out[..half]);
                dx.extend(object.backward(p, grads, vo, &trace.hidden[1], &d_out[half..]));
                dx
            }
            _ => unreachable!("trace produced by query_trace"),
        }
    }

    pub fn closeness(&self, f_v: &[T], f_q: &[T]) -> Result<T> {
        Ok(self.closeness_trace(f_v, f_q)?.0)
    }

    pub fn closeness_trace(&self, f_v: &[T], f_q: &[T]) -> Result<(T, ClosenessTrace<T>)> {
        let d = self.config.d_v;
        if f_v.len() != d || f_q.len() != d {
            return Err(S2sError::Dimension(format!(
                "C-Net expects two {d}-d features, got {} and {}",
                f_v.len(),
                f_q.len()
            )));
        }
        if f_v.iter().chain(f_q).any(|v| !v.is_finite()) {
            return Err(S2sError::Numeric("non-finite feature fed to C-Net".into()));
        }
        let joint: Vec<T> = f_v.iter().chain(f_q).copied().collect();
        let (logit, hidden) = self.cnet.forward(&self.params, &joint);
        let tau = sigmoid(logit[0]);
        Ok((tau, ClosenessTrace { joint, hidden, tau }))
    }

    /// Backpropagates `dτ`; returns `(d f_v, d f_q)`.
    pub fn closeness_backward(
        &self,
        grads: &mut Grads<T>,
        trace: &ClosenessTrace<T>,
        d_tau: T,
    ) -> (Vec<T>, Vec<T>) {
        let d_logit = d_tau * trace.tau * (T::one() - trace.tau);
        let mut dj =
            self.cnet
                .backward(&self.params, grads, &trace.joint, &trace.hidden, &[d_logit]);
        let dq = dj.split_off(self.config.d_v);
        (dj, dq)
    }

    /// Full pipeline for one prepared visual input and a verb-object query.
    pub fn score(
        &self,
        input: &Feature<T>,
        verb: &str,
        object: &str,
        table: &EmbeddingTable,
    ) -> Result<T> {
        let q = self.query_input(&embed_label(table, verb)?, &embed_label(table, object)?)?;
        let f_v = self.forward_vnet(input)?;
        let f_q = self.forward_query(&q)?;
        self.closeness(&f_v, &f_q)
    }
}
