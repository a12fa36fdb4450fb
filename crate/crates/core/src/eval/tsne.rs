//! Exact t-SNE to two dimensions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, S2sError};

#[derive(Clone, Debug, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    /// `None` picks `max(n / early_exaggeration / 4, 50)`.
    pub learning_rate: Option<f64>,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: None,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub coords: Vec<[f64; 2]>,
    /// Set when the input had to be jittered.
    pub warning: Option<String>,
}

fn sq_distances(x: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Conditional affinities of row `i` at the precision matching `log(perp)`.
fn row_affinities(d: &[f64], i: usize, n: usize, log_perp: f64, out: &mut [f64]) {
    let (mut beta, mut lo, mut hi) = (1.0f64, f64::NEG_INFINITY, f64::INFINITY);
    let row = &d[i * n..(i + 1) * n];
    let dmin = row
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    for _ in 0..100 {
        let mut sum = 0.0;
        let mut weighted = 0.0;
        for j in 0..n {
            out[j] = if j == i {
                0.0
            } else {
                (-(row[j] - dmin) * beta).exp()
            };
            sum += out[j];
            weighted += out[j] * (row[j] - dmin);
        }
        let entropy = sum.ln() + beta * weighted / sum;
        out.iter_mut().for_each(|p| *p /= sum);
        let diff = entropy - log_perp;
        if diff.abs() < 1e-5 {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() {
                (beta + hi) / 2.0
            } else {
                beta * 2.0
            };
        } else {
            hi = beta;
            beta = if lo.is_finite() {
                (beta + lo) / 2.0
            } else {
                beta / 2.0
            };
        }
    }
}

/// Embed the rows of `x` in the plane. Identical input rows are jittered
/// by seeded noise first and reported through `warning`.
pub fn tsne(x: &[Vec<f64>], config: &TsneConfig, seed: u64) -> Result<Projection> {
    let n = x.len();
    if n < 2 {
        return Err(S2sError::Protocol(
            "projection needs at least 2 rows".into(),
        ));
    }
    let dim = x[0].len();
    if x.iter().any(|r| r.len() != dim) {
        return Err(S2sError::Dimension("feature rows differ in length".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(S2sError::Numeric("non-finite feature value".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = x.to_vec();
    let mut warning = None;
    if data.iter().all(|r| r == &data[0]) {
        warning = Some(format!(
            "all {n} rows are identical; added jitter before projecting"
        ));
        let jitter = Normal::new(0.0, 1e-3).expect("valid std");
        data.iter_mut()
            .flatten()
            .for_each(|v| *v += jitter.sample(&mut rng));
    }
    let d = sq_distances(&data);
    let perp = config.perplexity.min((n - 1) as f64 / 3.0).max(1.0);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        row_affinities(&d, i, n, perp.ln(), &mut p[i * n..(i + 1) * n]);
    }
    let mut pj = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            pj[i * n + j] = ((p[i * n + j] + p[j * n + i]) / (2.0 * n as f64)).max(1e-12);
        }
    }
    let init = Normal::new(0.0, 1e-4).expect("valid std");
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| [init.sample(&mut rng), init.sample(&mut rng)])
        .collect();
    let mut velocity = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0; 2]; n];
    let mut num = vec![0.0; n * n];
    let lr = config
        .learning_rate
        .unwrap_or((n as f64 / config.early_exaggeration / 4.0).max(50.0));
    for it in 0..config.iterations {
        let exaggeration = if it < config.exaggeration_iters {
            config.early_exaggeration
        } else {
            1.0
        };
        let momentum = if it < config.exaggeration_iters {
            0.5
        } else {
            0.8
        };
        let mut z = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let dx = y[i][0] - y[j][0];
                    let dy = y[i][1] - y[j][1];
                    num[i * n + j] = 1.0 / (1.0 + dx * dx + dy * dy);
                    z += num[i * n + j];
                } else {
                    num[i * n + j] = 0.0;
                }
            }
        }
        for i in 0..n {
            let mut grad = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = (num[i * n + j] / z).max(1e-12);
                let mult = 4.0 * (exaggeration * pj[i * n + j] - q) * num[i * n + j];
                grad[0] += mult * (y[i][0] - y[j][0]);
                grad[1] += mult * (y[i][1] - y[j][1]);
            }
            for k in 0..2 {
                let same_sign = (grad[k] > 0.0) == (velocity[i][k] > 0.0);
                gains[i][k] = if same_sign {
                    (gains[i][k] * 0.8f64).max(0.01)
                } else {
                    gains[i][k] + 0.2
                };
                velocity[i][k] = momentum * velocity[i][k] - lr * gains[i][k] * grad[k];
            }
        }
        for (yi, vi) in y.iter_mut().zip(&velocity) {
            yi[0] += vi[0];
            yi[1] += vi[1];
        }
        let mean = y.iter().fold([0.0; 2], |m, v| {
            [m[0] + v[0] / n as f64, m[1] + v[1] / n as f64]
        });
        y.iter_mut().for_each(|v| {
            v[0] -= mean[0];
            v[1] -= mean[1];
        });
    }
    Ok(Projection { coords: y, warning })
}

/// [`tsne`] with default settings.
pub fn project2d(x: &[Vec<f64>], seed: u64) -> Result<Projection> {
    tsne(x, &TsneConfig::default(), seed)
}
