//! Gated three-stream encoder with a forecast head and a latent-Gaussian
//! decision head, over a flat parameter vector.
//!
//! Matrices are row-major `[out][in]`. Each stream encoder is
//! `tanh(W2 tanh(W1 x + b1) + b2)`; the embedding is the softmax-gated sum
//! of the three encodings. The decision head draws `z = mu + sigma * eps`
//! and emits raw logits `W z + b`.

use std::ops::Range;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{FeatureConfig, FeatureVector, Standardizer, STREAM_WIDTHS};
use super::PolicyError;
use crate::sim::CandidateGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub grid: CandidateGrid,
    pub hidden: usize,
    pub embed: usize,
    pub forecast_hidden: usize,
    pub latent: usize,
    /// Initial bias of the log standard deviation map.
    pub init_log_sigma: f64,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            grid: CandidateGrid::default(),
            hidden: 32,
            embed: 16,
            forecast_hidden: 16,
            latent: 16,
            init_log_sigma: -1.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub w: usize,
    pub b: usize,
    pub n_in: usize,
    pub n_out: usize,
}

impl Dense {
    fn len(&self) -> usize {
        self.n_in * self.n_out + self.n_out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub enc: [[Dense; 2]; 3],
    pub gate: usize,
    pub fc1: Dense,
    pub fc2: Dense,
    pub mu: Dense,
    pub logsig: Dense,
    pub out: Dense,
    pub total: usize,
}

pub const STREAM_NAMES: [&str; 3] = ["sales", "attrs", "objective"];

impl Layout {
    pub fn new(cfg: &NetConfig) -> Layout {
        let mut at = 0;
        let mut dense = |n_in: usize, n_out: usize| {
            let d = Dense { w: at, b: at + n_in * n_out, n_in, n_out };
            at += d.len();
            d
        };
        let enc = STREAM_WIDTHS.map(|w| [dense(w, cfg.hidden), dense(cfg.hidden, cfg.embed)]);
        let fc1 = dense(cfg.embed, cfg.forecast_hidden);
        let fc2 = dense(cfg.forecast_hidden, 1);
        let mu = dense(cfg.embed, cfg.latent);
        let logsig = dense(cfg.embed, cfg.latent);
        let out = dense(cfg.latent, cfg.grid.len());
        let gate = at;
        at += 3;
        Layout { enc, gate, fc1, fc2, mu, logsig, out, total: at }
    }

    /// Named parameter groups in a fixed order.
    pub fn groups(&self) -> Vec<(String, Range<usize>)> {
        let mut g = Vec::new();
        let mut push = |name: String, d: &Dense| {
            g.push((format!("{name}.w"), d.w..d.b));
            g.push((format!("{name}.b"), d.b..d.b + d.n_out));
        };
        for (s, layers) in self.enc.iter().enumerate() {
            push(format!("{}.l1", STREAM_NAMES[s]), &layers[0]);
            push(format!("{}.l2", STREAM_NAMES[s]), &layers[1]);
        }
        push("forecast.l1".into(), &self.fc1);
        push("forecast.l2".into(), &self.fc2);
        push("decision.mu".into(), &self.mu);
        push("decision.log_sigma".into(), &self.logsig);
        push("decision.out".into(), &self.out);
        g.push(("gate".into(), self.gate..self.gate + 3));
        g
    }

    /// Encoders, gate and forecast head.
    pub fn representation(&self) -> Vec<Range<usize>> {
        vec![0..self.mu.w, self.gate..self.gate + 3]
    }

    /// Latent maps and logit projection.
    pub fn decision(&self) -> Range<usize> {
        self.mu.w..self.gate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub config: NetConfig,
    pub features: FeatureConfig,
    pub stats: Standardizer,
    pub params: Vec<f64>,
    #[serde(skip)]
    layout: Option<Layout>,
}

/// Standardized network input.
#[derive(Debug, Clone, PartialEq)]
pub struct Input {
    pub x: [Vec<f64>; 3],
    pub scale: f64,
}

/// Forward activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    pub x: [Vec<f64>; 3],
    pub h1: [Vec<f64>; 3],
    pub enc: [Vec<f64>; 3],
    pub gate: [f64; 3],
    pub embedding: Vec<f64>,
    pub fh: Vec<f64>,
    pub forecast_pre: f64,
    /// Forecast in units of the example's demand scale.
    pub forecast_rel: f64,
    pub scale: f64,
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
    pub eps: Vec<f64>,
    pub z: Vec<f64>,
    pub logits: Vec<f64>,
}

impl Cache {
    pub fn forecast(&self) -> f64 {
        self.forecast_rel * self.scale
    }

    /// Closed-form `KL(N(mu, sigma^2) || N(0, I))`.
    pub fn kl(&self) -> f64 {
        kl_standard_normal(&self.mu, &self.log_sigma)
    }
}

pub fn kl_standard_normal(mu: &[f64], log_sigma: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(log_sigma)
        .map(|(m, ls)| m * m + (2.0 * ls).exp() - 1.0 - 2.0 * ls)
        .sum::<f64>()
}

/// Upstream derivatives entering the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Seeds {
    pub dlogits: Option<Vec<f64>>,
    /// Weight of the KL term of the latent posterior.
    pub kl_weight: f64,
    /// Derivative of the loss with respect to `forecast_rel`.
    pub dforecast_rel: f64,
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 { x } else { x.exp().ln_1p() }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn affine(p: &[f64], d: &Dense, x: &[f64]) -> Vec<f64> {
    (0..d.n_out)
        .map(|o| {
            let row = &p[d.w + o * d.n_in..d.w + (o + 1) * d.n_in];
            p[d.b + o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        })
        .collect()
}

/// Accumulates weight/bias gradients of `d` and returns `W^T dy`.
fn affine_back(p: &[f64], g: &mut [f64], d: &Dense, x: &[f64], dy: &[f64]) -> Vec<f64> {
    let mut dx = vec![0.0; d.n_in];
    for o in 0..d.n_out {
        let go = dy[o];
        if go == 0.0 {
            continue;
        }
        g[d.b + o] += go;
        let base = d.w + o * d.n_in;
        for i in 0..d.n_in {
            g[base + i] += go * x[i];
            dx[i] += go * p[base + i];
        }
    }
    dx
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    xs.iter().map(|x| x - lse).collect()
}

impl PolicyNet {
    /// Fresh network with uniform Glorot weights, zero biases and the
    /// configured log-sigma bias.
    pub fn new(config: NetConfig, features: FeatureConfig, stats: Standardizer) -> PolicyNet {
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.total];
        let mut rng = crate::seed::stream(config.seed, 0);
        let mut init = |d: &Dense, rng: &mut ChaCha8Rng| {
            let a = (6.0 / (d.n_in + d.n_out) as f64).sqrt();
            for w in &mut params[d.w..d.b] {
                *w = rng.random_range(-a..a);
            }
        };
        for layers in &layout.enc {
            init(&layers[0], &mut rng);
            init(&layers[1], &mut rng);
        }
        for d in [&layout.fc1, &layout.fc2, &layout.mu, &layout.logsig, &layout.out] {
            init(d, &mut rng);
        }
        for w in &mut params[layout.logsig.w..layout.logsig.b] {
            *w *= 0.1;
        }
        for b in &mut params[layout.logsig.b..layout.logsig.b + layout.logsig.n_out] {
            *b = config.init_log_sigma;
        }
        PolicyNet { config, features, stats, params, layout: Some(layout) }
    }

    pub fn layout(&self) -> Layout {
        self.layout.clone().unwrap_or_else(|| Layout::new(&self.config))
    }

    pub(crate) fn rebuild_layout(&mut self) {
        self.layout = Some(Layout::new(&self.config));
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn n_actions(&self) -> usize {
        self.config.grid.len()
    }

    pub fn prepare(&self, f: &FeatureVector) -> Result<Input, PolicyError> {
        for (s, stream) in f.streams().iter().enumerate() {
            if stream.len() != STREAM_WIDTHS[s] {
                return Err(PolicyError::Shape(format!(
                    "stream {} has width {}, expected {}",
                    STREAM_NAMES[s],
                    stream.len(),
                    STREAM_WIDTHS[s]
                )));
            }
        }
        if !f.is_finite() {
            return Err(PolicyError::Numeric("non-finite feature".into()));
        }
        Ok(Input { x: self.stats.apply(f), scale: f.demand_scale })
    }

    pub fn gate(&self) -> [f64; 3] {
        let l = self.layout();
        let g = softmax(&self.params[l.gate..l.gate + 3]);
        [g[0], g[1], g[2]]
    }

    /// Full forward pass; `eps = None` takes the latent mode `z = mu`.
    pub fn forward(&self, input: &Input, eps: Option<&[f64]>) -> Result<Cache, PolicyError> {
        self.forward_with(&self.params, input, eps)
    }

    pub fn forward_with(&self, p: &[f64], input: &Input, eps: Option<&[f64]>) -> Result<Cache, PolicyError> {
        let l = self.layout();
        if p.len() != l.total {
            return Err(PolicyError::Shape(format!("{} parameters, layout needs {}", p.len(), l.total)));
        }
        let latent = self.config.latent;
        let eps: Vec<f64> = match eps {
            Some(e) if e.len() != latent => {
                return Err(PolicyError::Shape(format!("noise has {} entries, latent width {latent}", e.len())))
            }
            Some(e) => e.to_vec(),
            None => vec![0.0; latent],
        };
        let mut h1: [Vec<f64>; 3] = Default::default();
        let mut enc: [Vec<f64>; 3] = Default::default();
        for s in 0..3 {
            h1[s] = affine(p, &l.enc[s][0], &input.x[s]).into_iter().map(f64::tanh).collect();
            enc[s] = affine(p, &l.enc[s][1], &h1[s]).into_iter().map(f64::tanh).collect();
        }
        let g = softmax(&p[l.gate..l.gate + 3]);
        let gate = [g[0], g[1], g[2]];
        let embedding: Vec<f64> =
            (0..self.config.embed).map(|j| (0..3).map(|s| gate[s] * enc[s][j]).sum()).collect();
        let fh: Vec<f64> = affine(p, &l.fc1, &embedding).into_iter().map(f64::tanh).collect();
        let forecast_pre = affine(p, &l.fc2, &fh)[0];
        let mu = affine(p, &l.mu, &embedding);
        let log_sigma = affine(p, &l.logsig, &embedding);
        let z: Vec<f64> = (0..latent).map(|j| mu[j] + log_sigma[j].exp() * eps[j]).collect();
        let logits = affine(p, &l.out, &z);
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(PolicyError::Numeric("non-finite logits".into()));
        }
        Ok(Cache {
            x: input.x.clone(),
            h1,
            enc,
            gate,
            embedding,
            fh,
            forecast_pre,
            forecast_rel: softplus(forecast_pre),
            scale: input.scale,
            mu,
            log_sigma,
            eps,
            z,
            logits,
        })
    }

    /// Adds the gradient of the seeded loss into `grad`.
    pub fn backward(&self, cache: &Cache, seeds: &Seeds, grad: &mut [f64]) {
        self.backward_with(&self.params, cache, seeds, grad)
    }

    pub fn backward_with(&self, p: &[f64], c: &Cache, seeds: &Seeds, g: &mut [f64]) {
        let l = self.layout();
        let e = self.config.embed;
        let mut d_emb = vec![0.0; e];

        if seeds.dlogits.is_some() || seeds.kl_weight != 0.0 {
            let dz = match &seeds.dlogits {
                Some(dl) => affine_back(p, g, &l.out, &c.z, dl),
                None => vec![0.0; self.config.latent],
            };
            let kw = seeds.kl_weight;
            let dmu: Vec<f64> = (0..dz.len()).map(|j| dz[j] + kw * c.mu[j]).collect();
            let dls: Vec<f64> = (0..dz.len())
                .map(|j| {
                    let sigma = c.log_sigma[j].exp();
                    dz[j] * c.eps[j] * sigma + kw * (sigma * sigma - 1.0)
                })
                .collect();
            let a = affine_back(p, g, &l.mu, &c.embedding, &dmu);
            let b = affine_back(p, g, &l.logsig, &c.embedding, &dls);
            for j in 0..e {
                d_emb[j] += a[j] + b[j];
            }
        }

        if seeds.dforecast_rel != 0.0 {
            let dpre = seeds.dforecast_rel * sigmoid(c.forecast_pre);
            let dfh = affine_back(p, g, &l.fc2, &c.fh, &[dpre]);
            let dfh_pre: Vec<f64> = dfh.iter().zip(&c.fh).map(|(d, h)| d * (1.0 - h * h)).collect();
            let de = affine_back(p, g, &l.fc1, &c.embedding, &dfh_pre);
            for j in 0..e {
                d_emb[j] += de[j];
            }
        }

        let dgate: Vec<f64> = (0..3).map(|s| c.enc[s].iter().zip(&d_emb).map(|(a, b)| a * b).sum()).collect();
        let dot: f64 = (0..3).map(|s| c.gate[s] * dgate[s]).sum();
        for s in 0..3 {
            g[l.gate + s] += c.gate[s] * (dgate[s] - dot);
            let dpre2: Vec<f64> = (0..e).map(|j| c.gate[s] * d_emb[j] * (1.0 - c.enc[s][j] * c.enc[s][j])).collect();
            let dh1 = affine_back(p, g, &l.enc[s][1], &c.h1[s], &dpre2);
            let dpre1: Vec<f64> = dh1.iter().zip(&c.h1[s]).map(|(d, h)| d * (1.0 - h * h)).collect();
            affine_back(p, g, &l.enc[s][0], &c.x[s], &dpre1);
        }
    }

    /// Mode logits (`z = mu`).
    pub fn mode_logits(&self, input: &Input) -> Result<Vec<f64>, PolicyError> {
        Ok(self.forward(input, None)?.logits)
    }

    /// Argmax of the mode logits; ties go to the smaller `v`.
    pub fn greedy_index(&self, input: &Input) -> Result<usize, PolicyError> {
        Ok(argmax(&self.mode_logits(input)?))
    }

    pub fn greedy_days(&self, f: &FeatureVector) -> Result<u32, PolicyError> {
        let input = self.prepare(f)?;
        Ok(self.config.grid.value_at(self.greedy_index(&input)?))
    }

    pub fn forecast(&self, f: &FeatureVector) -> Result<f64, PolicyError> {
        Ok(self.forward(&self.prepare(f)?, None)?.forecast())
    }
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::fd_gradient;

    pub(crate) fn small_net(seed: u64) -> PolicyNet {
        let cfg = NetConfig { hidden: 5, embed: 4, forecast_hidden: 3, latent: 3, grid: CandidateGrid::new(2, 6).unwrap(), seed, ..NetConfig::default() };
        PolicyNet::new(cfg, FeatureConfig::default(), Standardizer::identity())
    }

    pub(crate) fn random_input(seed: u64) -> Input {
        let mut rng = crate::seed::stream(seed, 99);
        Input { x: STREAM_WIDTHS.map(|w| (0..w).map(|_| rng.random_range(-1.5..1.5)).collect()), scale: 3.0 }
    }

    #[test]
    fn layout_covers_parameters_once() {
        let net = PolicyNet::new(NetConfig::default(), FeatureConfig::default(), Standardizer::identity());
        let mut seen = vec![0u8; net.n_params()];
        for (_, r) in net.layout().groups() {
            for i in r {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert!(net.n_params() < 100_000);
        assert_eq!(net.mode_logits(&random_input(1)).unwrap().len(), 28);
    }

    #[test]
    fn gates_sum_to_one_and_limit() {
        let mut net = small_net(3);
        let l = net.layout();
        net.params[l.gate..l.gate + 3].copy_from_slice(&[0.3, -1.2, 2.0]);
        assert!((net.gate().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        net.params[l.gate..l.gate + 3].copy_from_slice(&[60.0, 0.0, 0.0]);
        let c = net.forward(&random_input(2), None).unwrap();
        for j in 0..c.embedding.len() {
            assert!((c.embedding[j] - c.enc[0][j]).abs() < 1e-20);
        }
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_embedding() {
        let net = small_net(4);
        let input = Input { x: STREAM_WIDTHS.map(|w| vec![0.0; w]), scale: 1.0 };
        let c = net.forward(&input, None).unwrap();
        assert!(c.embedding.iter().all(|&x| x == 0.0));
        assert!(c.forecast() >= 0.0 && c.forecast().is_finite());
    }

    #[test]
    fn zero_noise_equals_mode_and_noise_matters() {
        let net = small_net(5);
        let x = random_input(5);
        let mode = net.forward(&x, None).unwrap().logits;
        assert_eq!(net.forward(&x, Some(&[0.0; 3])).unwrap().logits, mode);
        let a = net.forward(&x, Some(&[0.5, -1.0, 0.2])).unwrap().logits;
        let b = net.forward(&x, Some(&[-0.7, 0.3, 1.1])).unwrap().logits;
        assert_ne!(a, b);
        assert!(net.forward(&x, Some(&[0.0; 2])).is_err());
    }

    #[test]
    fn zero_projection_gives_bias_logits() {
        let mut net = small_net(6);
        let l = net.layout();
        for w in &mut net.params[l.out.w..l.out.b] {
            *w = 0.0;
        }
        let bias: Vec<f64> = (0..5).map(|i| i as f64 * 0.25).collect();
        net.params[l.out.b..l.out.b + 5].copy_from_slice(&bias);
        assert_eq!(net.forward(&random_input(7), Some(&[1.0, 2.0, 3.0])).unwrap().logits, bias);
    }

    #[test]
    fn kl_is_zero_only_at_standard_normal() {
        assert_eq!(kl_standard_normal(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!(kl_standard_normal(&[0.1, 0.0], &[0.0, 0.0]) > 0.0);
        assert!(kl_standard_normal(&[0.0, 0.0], &[0.0, -0.3]) > 0.0);
    }

    #[test]
    fn softmax_normalizes() {
        let p = softmax(&[1000.0, -3.0, 2.5, 0.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let lp = log_softmax(&[1.0, 2.0, 3.0]);
        let direct = (2.0f64.exp() / (1.0f64.exp() + 2.0f64.exp() + 3.0f64.exp())).ln();
        assert!((lp[1] - direct).abs() < 1e-14);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let net = small_net(8);
        let x = random_input(8);
        let eps = [0.4, -0.9, 1.3];
        let dl = vec![0.3, -0.2, 0.5, -0.1, 0.25];
        let loss = |p: &[f64]| {
            let c = net.forward_with(p, &x, Some(&eps)).unwrap();
            let lin: f64 = c.logits.iter().zip(&dl).map(|(a, b)| a * b).sum();
            lin + 0.7 * c.kl() + 1.3 * c.forecast_rel
        };
        let c = net.forward(&x, Some(&eps)).unwrap();
        let mut g = vec![0.0; net.n_params()];
        net.backward(&c, &Seeds { dlogits: Some(dl.clone()), kl_weight: 0.7, dforecast_rel: 1.3 }, &mut g);
        let fd = fd_gradient(&mut |p| loss(p), &net.params, 1e-5);
        for (i, (a, n)) in g.iter().zip(&fd).enumerate() {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            assert!(rel < 1e-4, "param {i}: {a} vs {n}");
        }
    }
}
