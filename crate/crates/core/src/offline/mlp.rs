//! Sigmoid multilayer perceptron regressor trained with Adam on MSE.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{RegressionSample, Regressor};
use crate::error::{Error, Result};

pub const MIN_TRAINING_SAMPLES: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpHyper {
    /// Hidden layer widths; `[16]` is input, one hidden layer, output.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpHyper {
    fn default() -> Self {
        Self {
            hidden: vec![16],
            epochs: 500,
            learning_rate: 1e-3,
            batch_size: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    n_in: usize,
    n_out: usize,
    /// Row-major `[out][in]`.
    w: Vec<f64>,
    b: Vec<f64>,
}

/// Standardized 2 -> hidden... -> 1 network. Hidden layers use the logistic
/// sigmoid, the output is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    input_mean: [f64; 2],
    input_std: [f64; 2],
    output_mean: f64,
    output_std: f64,
    layers: Vec<Dense>,
}

#[derive(Debug, Clone)]
pub struct MlpTraining {
    pub model: MlpModel,
    /// Mean squared error over each epoch's minibatches, measured before each
    /// update, in standardized target units.
    pub epoch_mse: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl MlpModel {
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![2];
        sizes.extend(self.layers.iter().map(|l| l.n_out));
        sizes
    }

    fn normalize_input(&self, cmd: f64, v: f64) -> [f64; 2] {
        let z = |x: f64, k: usize| {
            if self.input_std[k] > 0.0 {
                (x - self.input_mean[k]) / self.input_std[k]
            } else {
                0.0
            }
        };
        [z(cmd, 0), z(v, 1)]
    }

    /// Standardized output for standardized input; fills per-layer activations.
    fn forward(&self, x: [f64; 2], acts: &mut Vec<Vec<f64>>) -> f64 {
        if acts.len() != self.layers.len() + 1 {
            acts.clear();
            acts.push(vec![0.0; 2]);
            acts.extend(self.layers.iter().map(|l| vec![0.0; l.n_out]));
        }
        acts[0].copy_from_slice(&x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (prev, rest) = acts.split_at_mut(l + 1);
            let input = &prev[l][..layer.n_in];
            let out = &mut rest[0][..layer.n_out];
            for ((slot, row), b) in out.iter_mut().zip(layer.w.chunks_exact(layer.n_in)).zip(&layer.b) {
                let z = b + row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>();
                *slot = if l == last { z } else { sigmoid(z) };
            }
        }
        acts[last + 1][0]
    }

    /// Adds `scale / 2 * d(out - y)^2 / d(param)` to the workspace gradients
    /// and returns the squared error before the update.
    fn accumulate_gradient(&self, x: [f64; 2], y: f64, scale: f64, ws: &mut Workspace) -> f64 {
        let out = self.forward(x, &mut ws.acts);
        let n_layers = self.layers.len();
        ws.deltas[n_layers - 1][0] = scale * (out - y);
        for l in (0..n_layers).rev() {
            let layer = &self.layers[l];
            let input = &ws.acts[l][..layer.n_in];
            let deltas = &ws.deltas[l][..layer.n_out];
            for ((d, gb), gw) in deltas
                .iter()
                .zip(ws.grad_b[l].iter_mut())
                .zip(ws.grad_w[l].chunks_exact_mut(layer.n_in))
            {
                *gb += d;
                for (g, a) in gw.iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if l > 0 {
                let (lower, upper) = ws.deltas.split_at_mut(l);
                let upper = &upper[0][..layer.n_out];
                for ((i, slot), a) in lower[l - 1].iter_mut().enumerate().zip(input) {
                    let back: f64 = upper.iter().enumerate().map(|(o, d)| layer.w[o * layer.n_in + i] * d).sum();
                    *slot = back * a * (1.0 - a);
                }
            }
        }
        (out - y).powi(2)
    }

    fn predict_std(&self, cmd: f64, v: f64) -> f64 {
        let mut acts = Vec::new();
        self.forward(self.normalize_input(cmd, v), &mut acts)
    }

    /// Text form: normalization header, then each layer's weights and biases.
    /// Numbers use the shortest exact representation.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# mlp regressor\n");
        let _ = writeln!(s, "input_mean: {:e} {:e}", self.input_mean[0], self.input_mean[1]);
        let _ = writeln!(s, "input_std: {:e} {:e}", self.input_std[0], self.input_std[1]);
        let _ = writeln!(s, "output_mean: {:e}", self.output_mean);
        let _ = writeln!(s, "output_std: {:e}", self.output_std);
        for layer in &self.layers {
            let _ = writeln!(s, "layer: {} {}", layer.n_out, layer.n_in);
            for o in 0..layer.n_out {
                let row = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
                let line: Vec<String> = row.iter().map(|w| format!("{w:e}")).collect();
                let _ = writeln!(s, "{}", line.join(" "));
            }
            let bias: Vec<String> = layer.b.iter().map(|b| format!("{b:e}")).collect();
            let _ = writeln!(s, "bias: {}", bias.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty())
            .peekable();
        let err = |line: usize, message: &str| Error::Parse {
            line,
            message: message.to_string(),
        };
        let nums = |line: usize, s: &str| -> Result<Vec<f64>> {
            s.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| err(line, &format!("not a number: {t:?}"))))
                .collect()
        };
        let mut field = |label: &str, n: usize| -> Result<Vec<f64>> {
            let (line, content) = lines.next().ok_or_else(|| err(0, &format!("missing {label}")))?;
            let rest = content
                .strip_prefix(label)
                .ok_or_else(|| err(line, &format!("expected `{label}`")))?;
            let v = nums(line, rest)?;
            if v.len() != n {
                return Err(err(line, &format!("expected {n} values")));
            }
            Ok(v)
        };
        let im = field("input_mean:", 2)?;
        let is = field("input_std:", 2)?;
        let om = field("output_mean:", 1)?[0];
        let os = field("output_std:", 1)?[0];

        let mut layers = Vec::new();
        while let Some((line, content)) = lines.next() {
            let dims = content
                .strip_prefix("layer:")
                .ok_or_else(|| err(line, "expected `layer:`"))?;
            let dims: Vec<usize> = dims
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| err(line, "bad layer size")))
                .collect::<Result<_>>()?;
            let [n_out, n_in] = dims[..] else {
                return Err(err(line, "layer needs `out in`"));
            };
            let mut w = Vec::with_capacity(n_out * n_in);
            for _ in 0..n_out {
                let (line, content) = lines.next().ok_or_else(|| err(line, "truncated layer"))?;
                let row = nums(line, content)?;
                if row.len() != n_in {
                    return Err(err(line, "weight row has wrong length"));
                }
                w.extend(row);
            }
            let (line, content) = lines.next().ok_or_else(|| err(line, "missing bias"))?;
            let b = nums(
                line,
                content.strip_prefix("bias:").ok_or_else(|| err(line, "expected `bias:`"))?,
            )?;
            if b.len() != n_out {
                return Err(err(line, "bias has wrong length"));
            }
            layers.push(Dense { n_in, n_out, w, b });
        }
        let chained = layers.first().is_some_and(|l| l.n_in == 2)
            && layers.last().is_some_and(|l| l.n_out == 1)
            && layers.windows(2).all(|p| p[0].n_out == p[1].n_in);
        if !chained {
            return Err(err(0, "layer sizes do not chain 2 -> ... -> 1"));
        }
        Ok(Self {
            input_mean: [im[0], im[1]],
            input_std: [is[0], is[1]],
            output_mean: om,
            output_std: os,
            layers,
        })
    }
}

impl Regressor for MlpModel {
    fn predict(&self, cmd: f64, v: f64) -> f64 {
        if self.output_std == 0.0 {
            return self.output_mean;
        }
        self.output_mean + self.output_std * self.predict_std(cmd, v)
    }
}

/// Scratch buffers for backpropagation.
struct Workspace {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
    grad_w: Vec<Vec<f64>>,
    grad_b: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(model: &MlpModel) -> Self {
        Self {
            acts: Vec::new(),
            deltas: model.layers.iter().map(|l| vec![0.0; l.n_out]).collect(),
            grad_w: model.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            grad_b: model.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    fn zero(&mut self) {
        self.grad_w.iter_mut().for_each(|g| g.fill(0.0));
        self.grad_b.iter_mut().for_each(|g| g.fill(0.0));
    }
}

/// Adam state for one parameter vector.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, t: i32) {
        let c1 = 1.0 - Self::BETA1.powi(t);
        let c2 = 1.0 - Self::BETA2.powi(t);
        for k in 0..params.len() {
            self.m[k] = Self::BETA1 * self.m[k] + (1.0 - Self::BETA1) * grad[k];
            self.v[k] = Self::BETA2 * self.v[k] + (1.0 - Self::BETA2) * grad[k] * grad[k];
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            params[k] -= lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

/// Trains on raw-unit samples; inputs and target are standardized internally
/// from these samples only.
///
/// Deterministic for a given `hyper.seed`. Constant targets yield a constant
/// model (with a warning) instead of an error.
pub fn train_mlp(samples: &[RegressionSample], hyper: &MlpHyper) -> Result<MlpTraining> {
    if samples.len() < MIN_TRAINING_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_TRAINING_SAMPLES,
            got: samples.len(),
        });
    }
    if hyper.hidden.is_empty() || hyper.hidden.contains(&0) || hyper.batch_size == 0 {
        return Err(Error::InvalidParameter(
            "mlp needs non-empty hidden layers and batch size >= 1".into(),
        ));
    }
    let (cm, cs) = mean_std(samples.iter().map(|s| s.cmd));
    let (vm, vs) = mean_std(samples.iter().map(|s| s.v));
    let (am, as_) = mean_std(samples.iter().map(|s| s.acc));

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut sizes = vec![2];
    sizes.extend(&hyper.hidden);
    sizes.push(1);
    let layers: Vec<Dense> = sizes
        .windows(2)
        .map(|p| {
            let (n_in, n_out) = (p[0], p[1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            Dense {
                n_in,
                n_out,
                w: (0..n_in * n_out).map(|_| rng.random_range(-limit..limit)).collect(),
                b: vec![0.0; n_out],
            }
        })
        .collect();
    let mut model = MlpModel {
        input_mean: [cm, vm],
        input_std: [cs, vs],
        output_mean: am,
        output_std: as_,
        layers,
    };

    if as_ == 0.0 {
        log::warn!("all {} training targets equal {am}; returning a constant model", samples.len());
        return Ok(MlpTraining {
            model,
            epoch_mse: Vec::new(),
        });
    }

    let data: Vec<([f64; 2], f64)> = samples
        .iter()
        .map(|s| (model.normalize_input(s.cmd, s.v), (s.acc - am) / as_))
        .collect();

    let mut adam_w: Vec<Adam> = model.layers.iter().map(|l| Adam::new(l.w.len())).collect();
    let mut adam_b: Vec<Adam> = model.layers.iter().map(|l| Adam::new(l.b.len())).collect();
    let mut ws = Workspace::new(&model);

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_mse = Vec::with_capacity(hyper.epochs);
    let mut step = 0i32;
    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut sse = 0.0;
        for batch in order.chunks(hyper.batch_size) {
            ws.zero();
            let scale = 2.0 / batch.len() as f64;
            for &idx in batch {
                let (x, y) = data[idx];
                sse += model.accumulate_gradient(x, y, scale, &mut ws);
            }
            step += 1;
            for (l, layer) in model.layers.iter_mut().enumerate() {
                adam_w[l].step(&mut layer.w, &ws.grad_w[l], hyper.learning_rate, step);
                adam_b[l].step(&mut layer.b, &ws.grad_b[l], hyper.learning_rate, step);
            }
        }
        epoch_mse.push(sse / data.len() as f64);
    }
    Ok(MlpTraining { model, epoch_mse })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_samples(f: impl Fn(f64, f64) -> f64, n: usize, seed: u64) -> Vec<RegressionSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let cmd = rng.random_range(-100.0..100.0);
                let v = rng.random_range(0.0..3.0);
                RegressionSample { cmd, v, acc: f(cmd, v) }
            })
            .collect()
    }

    #[test]
    fn learns_linear_function() {
        let f = |c: f64, v: f64| 0.02 * c - 0.05 * v;
        let train = grid_samples(f, 2000, 1);
        let test = grid_samples(f, 500, 2);
        let fit = train_mlp(&train, &MlpHyper::default()).unwrap();
        let mae = test.iter().map(|s| (fit.model.predict(s.cmd, s.v) - s.acc).abs()).sum::<f64>()
            / test.len() as f64;
        assert!(mae < 0.02, "test MAE {mae}");
        assert!(fit.epoch_mse.last().unwrap() <= &fit.epoch_mse[0]);
    }

    #[test]
    fn constant_targets_give_constant_model() {
        let train = grid_samples(|_, _| 0.37, 100, 3);
        let fit = train_mlp(&train, &MlpHyper::default()).unwrap();
        for s in grid_samples(|_, _| 0.0, 50, 4) {
            assert!((fit.model.predict(s.cmd, s.v) - 0.37).abs() < 1e-3);
        }
    }

    #[test]
    fn odd_target_gives_near_odd_model() {
        let f = |c: f64, _v: f64| 3.0 * (c / 100.0) + (c / 100.0).powi(3);
        let mut train = grid_samples(f, 800, 5);
        // Mirror every sample so the training set itself is symmetric.
        let mirrored: Vec<_> = train
            .iter()
            .map(|s| RegressionSample { cmd: -s.cmd, v: s.v, acc: -s.acc })
            .collect();
        train.extend(mirrored);
        let hyper = MlpHyper { epochs: 200, ..MlpHyper::default() };
        let m = train_mlp(&train, &hyper).unwrap().model;
        for c in [10.0, 40.0, 80.0] {
            let asym = m.predict(c, 1.0) + m.predict(-c, 1.0);
            assert!(asym.abs() < 0.05, "cmd {c}: {asym}");
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let train = grid_samples(|c, v| (c / 50.0).tanh() + 0.1 * v, 300, 6);
        let hyper = MlpHyper { epochs: 20, seed: 9, ..MlpHyper::default() };
        let a = train_mlp(&train, &hyper).unwrap();
        let b = train_mlp(&train, &hyper).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.epoch_mse, b.epoch_mse);
        let c = train_mlp(&train, &MlpHyper { seed: 10, ..hyper }).unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn too_few_samples() {
        let train = grid_samples(|c, _| c, 49, 0);
        assert!(matches!(
            train_mlp(&train, &MlpHyper::default()),
            Err(Error::TooFewSamples { needed: 50, got: 49 })
        ));
    }

    #[test]
    fn two_hidden_layers_train() {
        let f = |c: f64, v: f64| 0.01 * c + 0.2 * v;
        let hyper = MlpHyper { hidden: vec![8, 8], epochs: 100, ..MlpHyper::default() };
        let fit = train_mlp(&grid_samples(f, 500, 7), &hyper).unwrap();
        assert_eq!(fit.model.layer_sizes(), vec![2, 8, 8, 1]);
        assert!(fit.epoch_mse.last().unwrap() < &0.05);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let samples = grid_samples(|c, v| (c / 40.0).sin() + v, 60, 8);
        let hyper = MlpHyper { hidden: vec![4, 3], epochs: 3, ..MlpHyper::default() };
        let model = train_mlp(&samples, &hyper).unwrap().model;
        let (x, y) = (model.normalize_input(samples[0].cmd, samples[0].v), 0.3);
        let loss = |m: &MlpModel| {
            let mut a = Vec::new();
            (m.forward(x, &mut a) - y).powi(2)
        };
        let mut ws = Workspace::new(&model);
        ws.zero();
        model.accumulate_gradient(x, y, 2.0, &mut ws);
        let h = 1e-6;
        for l in 0..model.layers.len() {
            for k in 0..model.layers[l].w.len() {
                let mut plus = model.clone();
                plus.layers[l].w[k] += h;
                let mut minus = model.clone();
                minus.layers[l].w[k] -= h;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let analytic = ws.grad_w[l][k];
                assert!((analytic - numeric).abs() < 1e-6, "layer {l} w{k}: {analytic} vs {numeric}");
            }
            for k in 0..model.layers[l].b.len() {
                let mut plus = model.clone();
                plus.layers[l].b[k] += h;
                let mut minus = model.clone();
                minus.layers[l].b[k] -= h;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                assert!((ws.grad_b[l][k] - numeric).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let train = grid_samples(|c, v| 0.01 * c * v, 100, 11);
        let m = train_mlp(&train, &MlpHyper { epochs: 5, ..MlpHyper::default() }).unwrap().model;
        let back = MlpModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert!(MlpModel::from_text("input_mean: 0 0\n").is_err());
    }
}
