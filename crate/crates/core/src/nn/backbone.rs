//! Convolutional visual encoders ending in global average pooling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{avg_pool2, avg_pool2_backward, relu_backward_inplace, relu_inplace};
use super::{Conv2d, ConvTrace, Feature, Grads, ParamStore, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneKind {
    /// Residual net with basic blocks `[2, 2, 2, 2]`, 512-d output.
    Paper18,
    /// Residual net with basic blocks `[3, 4, 6, 3]`, 512-d output.
    Paper34,
    /// Residual net with bottleneck blocks `[3, 4, 6, 3]`, 2048-d output.
    Paper50,
    /// Four conv3×3 → ReLU → 2×2 average-pool blocks with a channel ramp.
    Tiny,
}

impl BackboneKind {
    /// Fixed output width of the residual variants.
    pub fn fixed_dim(self) -> Option<usize> {
        match self {
            BackboneKind::Paper18 | BackboneKind::Paper34 => Some(512),
            BackboneKind::Paper50 => Some(2048),
            BackboneKind::Tiny => None,
        }
    }

    /// Input side lengths must be a multiple of this.
    pub fn size_multiple(self) -> usize {
        match self {
            BackboneKind::Tiny => 16,
            _ => 32,
        }
    }
}

#[derive(Clone, Debug)]
enum ResBlock {
    Basic {
        c1: Conv2d,
        c2: Conv2d,
        proj: Option<Conv2d>,
    },
    Bottleneck {
        c1: Conv2d,
        c2: Conv2d,
        c3: Conv2d,
        proj: Option<Conv2d>,
    },
}

#[derive(Clone, Debug)]
enum Layers {
    Tiny(Vec<Conv2d>),
    Residual { stem: Conv2d, blocks: Vec<ResBlock> },
}

#[derive(Clone, Debug)]
pub struct Backbone {
    kind: BackboneKind,
    in_c: usize,
    out_dim: usize,
    layers: Layers,
}

/// Forward state kept for [`Backbone::backward`].
#[derive(Debug)]
pub struct BackboneTrace<T> {
    stages: Vec<StageTrace<T>>,
    /// shape of the map entering global pooling
    top: (usize, usize, usize),
}

#[derive(Debug)]
enum StageTrace<T> {
    /// conv → relu → pool
    Plain { conv: ConvTrace<T>, act: Feature<T> },
    Basic {
        t1: ConvTrace<T>,
        h1: Feature<T>,
        t2: ConvTrace<T>,
        proj: Option<ConvTrace<T>>,
        out: Feature<T>,
    },
    Bottleneck {
        t1: ConvTrace<T>,
        h1: Feature<T>,
        t2: ConvTrace<T>,
        h2: Feature<T>,
        t3: ConvTrace<T>,
        proj: Option<ConvTrace<T>>,
        out: Feature<T>,
    },
}

impl<T: Real> BackboneTrace<T> {
    /// On/off state of every ReLU unit in the forward pass.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for st in &self.stages {
            let maps: Vec<&Feature<T>> = match st {
                StageTrace::Plain { act, .. } => vec![act],
                StageTrace::Basic { h1, out, .. } => vec![h1, out],
                StageTrace::Bottleneck { h1, h2, out, .. } => vec![h1, h2, out],
            };
            for m in maps {
                out.extend(m.data.iter().map(|v| *v > T::zero()));
            }
        }
        out
    }
}

const RELU_GAIN: f64 = std::f64::consts::SQRT_2;

impl Backbone {
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        kind: BackboneKind,
        in_c: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let layers = match kind {
            BackboneKind::Tiny => {
                let widths = [
                    (out_dim / 8).max(4),
                    (out_dim / 4).max(4),
                    (out_dim / 2).max(4),
                    out_dim,
                ];
                let mut prev = in_c;
                let convs = widths
                    .iter()
                    .enumerate()
                    .map(|(i, &w)| {
                        let conv = Conv2d::new(
                            store,
                            &format!("{prefix}.block{i}.conv"),
                            prev,
                            w,
                            3,
                            1,
                            1,
                            RELU_GAIN,
                            rng,
                        );
                        prev = w;
                        conv
                    })
                    .collect();
                Layers::Tiny(convs)
            }
            _ => {
                let (bottleneck, depths) = match kind {
                    BackboneKind::Paper18 => (false, [2, 2, 2, 2]),
                    BackboneKind::Paper34 => (false, [3, 4, 6, 3]),
                    _ => (true, [3, 4, 6, 3]),
                };
                let total: usize = depths.iter().sum();
                // shrink each residual branch's last layer so the sum stays O(1)
                let branch_gain = RELU_GAIN / (total as f64).sqrt();
                let stem = Conv2d::new(
                    store,
                    &format!("{prefix}.stem"),
                    in_c,
                    64,
                    7,
                    2,
                    3,
                    RELU_GAIN,
                    rng,
                );
                let mut blocks = Vec::with_capacity(total);
                let mut prev = 64;
                for (stage, (&depth, width)) in
                    depths.iter().zip([64usize, 128, 256, 512]).enumerate()
                {
                    for b in 0..depth {
                        let stride = if stage > 0 && b == 0 { 2 } else { 1 };
                        let name = format!("{prefix}.layer{}.{b}", stage + 1);
                        let out = if bottleneck { width * 4 } else { width };
                        let proj = (stride != 1 || prev != out).then(|| {
                            Conv2d::new(
                                store,
                                &format!("{name}.proj"),
                                prev,
                                out,
                                1,
                                stride,
                                0,
                                1.0,
                                rng,
                            )
                        });
                        let block = if bottleneck {
                            ResBlock::Bottleneck {
                                c1: Conv2d::new(
                                    store,
                                    &format!("{name}.conv1"),
                                    prev,
                                    width,
                                    1,
                                    1,
                                    0,
                                    RELU_GAIN,
                                    rng,
                                ),
                                c2: Conv2d::new(
                                    store,
                                    &format!("{name}.conv2"),
                                    width,
                                    width,
                                    3,
                                    stride,
                                    1,
                                    RELU_GAIN,
                                    rng,
                                ),
                                c3: Conv2d::new(
                                    store,
                                    &format!("{name}.conv3"),
                                    width,
                                    out,
                                    1,
                                    1,
                                    0,
                                    branch_gain,
                                    rng,
                                ),
                                proj,
                            }
                        } else {
                            ResBlock::Basic {
                                c1: Conv2d::new(
                                    store,
                                    &format!("{name}.conv1"),
                                    prev,
                                    width,
                                    3,
                                    stride,
                                    1,
                                    RELU_GAIN,
                                    rng,
                                ),
                                c2: Conv2d::new(
                                    store,
                                    &format!("{name}.conv2"),
                                    width,
                                    out,
                                    3,
                                    1,
                                    1,
                                    branch_gain,
                                    rng,
                                ),
                                proj,
                            }
                        };
                        blocks.push(block);
                        prev = out;
                    }
                }
                assert_eq!(prev, out_dim, "residual backbone width");
                Layers::Residual { stem, blocks }
            }
        };
        Backbone {
            kind,
            in_c,
            out_dim,
            layers,
        }
    }

    pub fn kind(&self) -> BackboneKind {
        self.kind
    }

    pub fn in_channels(&self) -> usize {
        self.in_c
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        x: &Feature<T>,
    ) -> (Vec<T>, BackboneTrace<T>) {
        let mut stages = Vec::new();
        let mut cur = match &self.layers {
            Layers::Tiny(convs) => {
                let mut cur = x.clone();
                for conv in convs {
                    let (mut act, t) = conv.forward(store, &cur);
                    relu_inplace(&mut act.data);
                    cur = avg_pool2(&act);
                    stages.push(StageTrace::Plain { conv: t, act });
                }
                cur
            }
            Layers::Residual { stem, blocks } => {
                let (mut act, t) = stem.forward(store, x);
                relu_inplace(&mut act.data);
                let mut cur = avg_pool2(&act);
                stages.push(StageTrace::Plain { conv: t, act });
                for block in blocks {
                    let (out, trace) = block.forward(store, &cur);
                    stages.push(trace);
                    cur = out;
                }
                cur
            }
        };
        let top = cur.shape();
        let plane = cur.h * cur.w;
        let inv = T::one() / T::of(plane as f64);
        let pooled = cur
            .data
            .chunks_exact_mut(plane)
            .map(|ch| ch.iter().copied().sum::<T>() * inv)
            .collect();
        (pooled, BackboneTrace { stages, top })
    }

    /// Accumulates parameter gradients; returns the input gradient when
    /// `need_dx`.
    pub fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        grads: &mut Grads<T>,
        trace: &BackboneTrace<T>,
        d_out: &[T],
        need_dx: bool,
    ) -> Option<Feature<T>> {
        let (c, h, w) = trace.top;
        assert_eq!(d_out.len(), c, "backbone output gradient width");
        let inv = T::one() / T::of((h * w) as f64);
        let mut d = Feature::new(
            c,
            h,
            w,
            d_out
                .iter()
                .flat_map(|&g| std::iter::repeat_n(g * inv, h * w))
                .collect(),
        );

        let convs: Vec<&Conv2d> = match &self.layers {
            Layers::Tiny(convs) => convs.iter().collect(),
            Layers::Residual { stem, blocks } => {
                for (block, st) in blocks.iter().zip(&trace.stages[1..]).rev() {
                    d = block.backward(store, grads, st, d);
                }
                vec![stem]
            }
        };
        // plain conv → relu → pool stages, last to first
        let mut dx = None;
        for (i, (conv, st)) in convs.iter().zip(&trace.stages).enumerate().rev() {
            let StageTrace::Plain { conv: t, act } = st else {
                unreachable!("plain stage")
            };
            let mut g = avg_pool2_backward(&d, act.h, act.w);
            relu_backward_inplace(&act.data, &mut g.data);
            let want = i > 0 || need_dx;
            match conv.backward(store, grads, t, &g, want) {
                Some(next) if i > 0 => d = next,
                other => dx = other,
            }
        }
        dx
    }
}

fn add_inplace<T: Real>(a: &mut Feature<T>, b: &Feature<T>) {
    a.data.iter_mut().zip(&b.data).for_each(|(x, &y)| *x += y);
}

impl ResBlock {
    fn forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        x: &Feature<T>,
    ) -> (Feature<T>, StageTrace<T>) {
        match self {
            ResBlock::Basic { c1, c2, proj } => {
                let (mut h1, t1) = c1.forward(store, x);
                relu_inplace(&mut h1.data);
                let (mut out, t2) = c2.forward(store, &h1);
                let tp = match proj {
                    Some(p) => {
                        let (s, tp) = p.forward(store, x);
                        add_inplace(&mut out, &s);
                        Some(tp)
                    }
                    None => {
                        add_inplace(&mut out, x);
                        None
                    }
                };
                relu_inplace(&mut out.data);
                (
                    out.clone(),
                    StageTrace::Basic {
                        t1,
                        h1,
                        t2,
                        proj: tp,
                        out,
                    },
                )
            }
            ResBlock::Bottleneck { c1, c2, c3, proj } => {
                let (mut h1, t1) = c1.forward(store, x);
                relu_inplace(&mut h1.data);
                let (mut h2, t2) = c2.forward(store, &h1);
                relu_inplace(&mut h2.data);
                let (mut out, t3) = c3.forward(store, &h2);
                let tp = match proj {
                    Some(p) => {
                        let (s, tp) = p.forward(store, x);
                        add_inplace(&mut out, &s);
                        Some(tp)
                    }
                    None => {
                        add_inplace(&mut out, x);
                        None
                    }
                };
                relu_inplace(&mut out.data);
                (
                    out.clone(),
                    StageTrace::Bottleneck {
                        t1,
                        h1,
                        t2,
                        h2,
                        t3,
                        proj: tp,
                        out,
                    },
                )
            }
        }
    }

    fn backward<T: Real>(
        &self,
        store: &ParamStore<T>,
        grads: &mut Grads<T>,
        trace: &StageTrace<T>,
        mut d: Feature<T>,
    ) -> Feature<T> {
        match (self, trace) {
            (
                ResBlock::Basic { c1, c2, proj },
                StageTrace::Basic {
                    t1,
                    h1,
                    t2,
                    proj: tp,
                    out,
                },
            ) => {
                relu_backward_inplace(&out.data, &mut d.data);
                let mut g = c2.backward(store, grads, t2, &d, true).expect("dx");
                relu_backward_inplace(&h1.data, &mut g.data);
                let mut dx = c1.backward(store, grads, t1, &g, true).expect("dx");
                shortcut_backward(store, grads, proj, tp, &d, &mut dx);
                dx
            }
            (
                ResBlock::Bottleneck { c1, c2, c3, proj },
                StageTrace::Bottleneck {
                    t1,
                    h1,
                    t2,
                    h2,
                    t3,
                    proj: tp,
                    out,
                },
            ) => {
                relu_backward_inplace(&out.data, &mut d.data);
                let mut g = c3.backward(store, grads, t3, &d, true).expect("dx");
                relu_backward_inplace(&h2.data, &mut g.data);
                let mut g = c2.backward(store, grads, t2, &g, true).expect("dx");
                relu_backward_inplace(&h1.data, &mut g.data);
                let mut dx = c1.backward(store, grads, t1, &g, true).expect("dx");
                shortcut_backward(store, grads, proj, tp, &d, &mut dx);
                dx
            }
            _ => unreachable!("trace does not match block"),
        }
    }
}

fn shortcut_backward<T: Real>(
    store: &ParamStore<T>,
    grads: &mut Grads<T>,
    proj: &Option<Conv2d>,
    trace: &Option<ConvTrace<T>>,
    d: &Feature<T>,
    dx: &mut Feature<T>,
) {
    match (proj, trace) {
        (Some(p), Some(t)) => {
            let g = p.backward(store, grads, t, d, true).expect("dx");
            add_inplace(dx, &g);
        }
        _ => add_inplace(dx, d),
    }
}
