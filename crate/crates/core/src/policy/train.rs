//! Three-stage pretraining on selection labels.
//!
//! S1 fits encoders, gate and forecast head to the forward demand target.
//! S2 freezes those and fits the decision head to the labels under the
//! single-sample ELBO. S3 trains everything on the decision loss while the
//! forecast loss is only logged.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::net::{log_softmax, softmax, Input, PolicyNet, Seeds};
use super::sample::draw_noise;
use super::{FeatureVector, PolicyError};
use crate::oracles::fd_gradient;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "S1_forecast")]
    S1Forecast,
    #[serde(rename = "S2_decision_frozen")]
    S2DecisionFrozen,
    #[serde(rename = "S3_joint")]
    S3Joint,
}

impl Stage {
    pub const ORDER: [Stage; 3] = [Stage::S1Forecast, Stage::S2DecisionFrozen, Stage::S3Joint];

    pub fn weights(self) -> LossWeights {
        match self {
            Stage::S1Forecast => LossWeights { forecast: 1.0, decision: 0.0 },
            Stage::S2DecisionFrozen | Stage::S3Joint => LossWeights { forecast: 0.0, decision: 1.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub forecast: f64,
    pub decision: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub epochs: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSchedule {
    pub s1: StageConfig,
    pub s2: StageConfig,
    pub s3: StageConfig,
    pub vae_kl_weight: f64,
    pub batch_size: usize,
    /// RMSprop squared-gradient decay.
    pub rms_decay: f64,
    pub rms_eps: f64,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            s1: StageConfig { epochs: 40, learning_rate: 3e-3 },
            s2: StageConfig { epochs: 80, learning_rate: 3e-3 },
            s3: StageConfig { epochs: 20, learning_rate: 1e-3 },
            vae_kl_weight: 0.1,
            batch_size: 32,
            rms_decay: 0.99,
            rms_eps: 1e-8,
            seed: 5,
        }
    }
}

impl TrainSchedule {
    pub fn stage(&self, s: Stage) -> StageConfig {
        match s {
            Stage::S1Forecast => self.s1,
            Stage::S2DecisionFrozen => self.s2,
            Stage::S3Joint => self.s3,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        for s in Stage::ORDER {
            let c = self.stage(s);
            if !(c.learning_rate > 0.0 && c.learning_rate.is_finite()) {
                return Err(PolicyError::Data(format!("{s:?}: learning rate must be positive")));
            }
        }
        if !(self.vae_kl_weight >= 0.0) || self.batch_size == 0 || !(0.0..1.0).contains(&self.rms_decay) {
            return Err(PolicyError::Data("invalid kl weight, batch size or decay".into()));
        }
        Ok(())
    }
}

/// One labeled training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub features: FeatureVector,
    pub label: u32,
    /// Mean demand over the forecast horizon, units/day.
    pub forecast_target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub stage: Stage,
    pub epoch: usize,
    pub forecast_loss: f64,
    pub decision_loss: f64,
    pub kl_term: f64,
}

/// Momentum-free RMSprop.
#[derive(Debug, Clone)]
pub struct Rmsprop {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    sq: Vec<f64>,
}

impl Rmsprop {
    pub fn new(n: usize, lr: f64, decay: f64, eps: f64) -> Rmsprop {
        Rmsprop { lr, decay, eps, sq: vec![0.0; n] }
    }

    /// Descends along `grad` on the coordinates where `mask` is true.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], mask: &[bool]) {
        for i in 0..params.len() {
            if !mask[i] {
                continue;
            }
            self.sq[i] = self.decay * self.sq[i] + (1.0 - self.decay) * grad[i] * grad[i];
            params[i] -= self.lr * grad[i] / (self.sq[i].sqrt() + self.eps);
        }
    }
}

/// Forecast loss, cross-entropy and KL of one example at fixed noise.
pub fn example_losses(net: &PolicyNet, p: &[f64], input: &Input, label: usize, target: f64, eps: &[f64]) -> Result<(f64, f64, f64), PolicyError> {
    let c = net.forward_with(p, input, Some(eps))?;
    let r = c.forecast_rel - target / c.scale;
    let ce = -log_softmax(&c.logits)[label];
    Ok((r * r, ce, c.kl()))
}

pub struct Prepared {
    input: Input,
    label: usize,
    target: f64,
}

fn prepare(net: &PolicyNet, data: &[Example]) -> Result<Vec<Prepared>, PolicyError> {
    data.iter()
        .map(|ex| {
            let label = net.config.grid.index_of(ex.label).ok_or_else(|| {
                PolicyError::Data(format!("label {} outside [{}, {}]", ex.label, net.config.grid.min_days, net.config.grid.max_days))
            })?;
            if !ex.forecast_target.is_finite() || ex.forecast_target < 0.0 {
                return Err(PolicyError::Data("forecast target must be finite and nonnegative".into()));
            }
            Ok(Prepared { input: net.prepare(&ex.features)?, label, target: ex.forecast_target })
        })
        .collect()
}

/// Mean loss terms and gradient of the weighted batch loss
/// `mean(wf * forecast + wd * (ce + kl_weight * kl))`.
pub fn batch_gradient(
    net: &PolicyNet,
    p: &[f64],
    batch: &[(&Input, usize, f64, &[f64])],
    weights: LossWeights,
    kl_weight: f64,
) -> Result<(Vec<f64>, [f64; 3]), PolicyError> {
    let n = batch.len().max(1) as f64;
    let parts = batch
        .par_iter()
        .map(|&(input, label, target, eps)| {
            let c = net.forward_with(p, input, Some(eps))?;
            let r = c.forecast_rel - target / c.scale;
            let probs = softmax(&c.logits);
            let ce = -log_softmax(&c.logits)[label];
            let kl = c.kl();
            let mut g = vec![0.0; p.len()];
            let dlogits = (weights.decision != 0.0).then(|| {
                probs.iter().enumerate().map(|(i, q)| weights.decision * (q - f64::from(u8::from(i == label))) / n).collect()
            });
            let seeds = Seeds {
                dlogits,
                kl_weight: weights.decision * kl_weight / n,
                dforecast_rel: weights.forecast * 2.0 * r / n,
            };
            net.backward_with(p, &c, &seeds, &mut g);
            Ok((g, [r * r, ce, kl]))
        })
        .collect::<Result<Vec<_>, PolicyError>>()?;
    let mut grad = vec![0.0; p.len()];
    let mut sums = [0.0; 3];
    for (g, l) in parts {
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
        for k in 0..3 {
            sums[k] += l[k] / n;
        }
    }
    Ok((grad, sums))
}

fn stage_mask(net: &PolicyNet, stage: Stage) -> Vec<bool> {
    let l = net.layout();
    let mut mask = vec![false; net.n_params()];
    let mut set = |r: std::ops::Range<usize>| mask[r].iter_mut().for_each(|m| *m = true);
    match stage {
        Stage::S1Forecast => l.representation().into_iter().for_each(&mut set),
        Stage::S2DecisionFrozen => set(l.decision()),
        Stage::S3Joint => set(0..l.total),
    }
    mask
}

/// Runs S1, S2 and S3 in order and returns one log row per stage epoch.
pub fn pretrain(net: &mut PolicyNet, data: &[Example], schedule: &TrainSchedule) -> Result<Vec<TrainLogRow>, PolicyError> {
    schedule.validate()?;
    if data.is_empty() {
        return Err(PolicyError::Data("empty training set".into()));
    }
    let prepared = prepare(net, data)?;
    let latent = net.config.latent;
    let mut log = Vec::new();
    for (si, stage) in Stage::ORDER.into_iter().enumerate() {
        let sc = schedule.stage(stage);
        let mask = stage_mask(net, stage);
        let mut opt = Rmsprop::new(net.n_params(), sc.learning_rate, schedule.rms_decay, schedule.rms_eps);
        let mut order: Vec<usize> = (0..prepared.len()).collect();
        for epoch in 0..sc.epochs {
            let mut rng = crate::seed::stream(schedule.seed, ((si as u64) << 32) | epoch as u64);
            order.shuffle(&mut rng);
            let mut totals = [0.0; 3];
            for chunk in order.chunks(schedule.batch_size) {
                let noise: Vec<Vec<f64>> = chunk.iter().map(|_| draw_noise(latent, &mut rng)).collect();
                let batch: Vec<_> = chunk
                    .iter()
                    .zip(&noise)
                    .map(|(&i, e)| (&prepared[i].input, prepared[i].label, prepared[i].target, e.as_slice()))
                    .collect();
                let (grad, losses) = batch_gradient(net, &net.params, &batch, stage.weights(), schedule.vae_kl_weight)?;
                if losses.iter().chain(&grad).any(|x| !x.is_finite()) {
                    return Err(PolicyError::Diverged { stage, epoch, detail: format!("batch losses {losses:?}") });
                }
                let mut params = std::mem::take(&mut net.params);
                opt.step(&mut params, &grad, &mask);
                net.params = params;
                for k in 0..3 {
                    totals[k] += losses[k] * chunk.len() as f64;
                }
            }
            let n = prepared.len() as f64;
            log.push(TrainLogRow {
                stage,
                epoch,
                forecast_loss: totals[0] / n,
                decision_loss: totals[1] / n + schedule.vae_kl_weight * totals[2] / n,
                kl_term: totals[2] / n,
            });
        }
    }
    Ok(log)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub per_group: Vec<(String, f64)>,
}

/// Central differences on every parameter against the analytic gradient of
/// the total loss `forecast + ce + kl_weight * kl` at fixed noise.
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn grad_check(net: &PolicyNet, batch: &[Example], epsilon: f64, kl_weight: f64, seed: u64) -> Result<GradCheckReport, PolicyError> {
    let prepared = prepare(net, batch)?;
    let mut rng = crate::seed::stream(seed, 7);
    let noise: Vec<Vec<f64>> = prepared.iter().map(|_| draw_noise(net.config.latent, &mut rng)).collect();
    let items: Vec<_> =
        prepared.iter().zip(&noise).map(|(p, e)| (&p.input, p.label, p.target, e.as_slice())).collect();
    let weights = LossWeights { forecast: 1.0, decision: 1.0 };
    let (analytic, _) = batch_gradient(net, &net.params, &items, weights, kl_weight)?;
    let n = items.len() as f64;
    let mut total = |p: &[f64]| -> f64 {
        items
            .iter()
            .map(|&(input, label, target, eps)| {
                let (f, ce, kl) = example_losses(net, p, input, label, target, eps).unwrap_or((f64::NAN, 0.0, 0.0));
                (f + ce + kl_weight * kl) / n
            })
            .sum()
    };
    let numeric = fd_gradient(&mut total, &net.params, epsilon);
    let mut per_group = Vec::new();
    let mut max_rel_error: f64 = 0.0;
    for (name, range) in net.layout().groups() {
        let worst = range
            .map(|i| {
                let (a, b) = (analytic[i], numeric[i]);
                (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
            })
            .fold(0.0, f64::max);
        max_rel_error = max_rel_error.max(worst);
        per_group.push((name, worst));
    }
    Ok(GradCheckReport { max_rel_error, per_group })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{DemandPanel, SkuRecord, ValueClass, VolatilityClass};
    use crate::money::Cents;
    use crate::policy::{build_features, FeatureConfig, NetConfig, Standardizer};
    use crate::sim::CandidateGrid;

    fn panel() -> DemandPanel {
        let skus = (0..4)
            .map(|i| SkuRecord {
                sku_id: format!("s{i}"),
                category_id: "C".into(),
                unit_cost: Cents(100 + 10 * i),
                unit_price: Cents(400),
                vlt_days: 1 + i as u32 % 3,
                nrt_days: 5,
                volatility_class: VolatilityClass::ALL[i as usize % 3],
                value_class: ValueClass::A,
            })
            .collect();
        let demand = (0..4).map(|i| (0..120).map(|t| ((t * (i + 3)) % 7 + 2 * i) as u32).collect()).collect();
        DemandPanel::new(skus, demand).unwrap()
    }

    fn dataset(label: impl Fn(usize) -> u32) -> Vec<Example> {
        let p = panel();
        let cfg = FeatureConfig::default();
        let mut out = Vec::new();
        for s in 0..4 {
            for d in (30..100).step_by(5) {
                out.push(Example {
                    features: build_features(&p, s, d, 10, 12.0, &cfg),
                    label: label(s),
                    forecast_target: crate::policy::forecast_target(&p, s, d, &cfg).unwrap(),
                });
            }
        }
        out
    }

    fn fresh(data: &[Example]) -> PolicyNet {
        let rows: Vec<_> = data.iter().map(|e| e.features.clone()).collect();
        let cfg = NetConfig { hidden: 8, embed: 6, forecast_hidden: 4, latent: 4, grid: CandidateGrid::new(3, 12).unwrap(), ..NetConfig::default() };
        PolicyNet::new(cfg, FeatureConfig::default(), Standardizer::fit(&rows))
    }

    #[test]
    fn grad_check_passes_on_small_batch() {
        let data = dataset(|s| 4 + s as u32);
        let net = fresh(&data);
        let report = grad_check(&net, &data[..4], 1e-5, 0.1, 3).unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
        let wider = grad_check(&net, &data[..4], 2e-5, 0.1, 3).unwrap();
        assert!(wider.max_rel_error < 1e-3);
    }

    #[test]
    fn s2_freezes_representation_and_memorizes_single_label() {
        let data = dataset(|_| 7);
        let mut net = fresh(&data);
        let sched = TrainSchedule {
            s1: StageConfig { epochs: 5, learning_rate: 3e-3 },
            s2: StageConfig { epochs: 30, learning_rate: 1e-2 },
            s3: StageConfig { epochs: 0, learning_rate: 1e-3 },
            batch_size: 16,
            ..TrainSchedule::default()
        };
        let only_s1 = TrainSchedule { s2: StageConfig { epochs: 0, ..sched.s2 }, ..sched };
        let mut a = net.clone();
        pretrain(&mut a, &data, &only_s1).unwrap();
        let log = pretrain(&mut net, &data, &sched).unwrap();
        assert_eq!(log.len(), 35);
        let l = net.layout();
        for r in l.representation() {
            assert_eq!(net.hash_range(r.clone()), a.hash_range(r));
        }
        let hits = data.iter().filter(|e| net.greedy_days(&e.features).unwrap() == 7).count();
        assert!(hits as f64 >= 0.99 * data.len() as f64);
    }

    #[test]
    fn zero_kl_weight_is_pure_cross_entropy() {
        let data = dataset(|s| 3 + s as u32);
        let net = fresh(&data);
        let prepared = prepare(&net, &data[..6]).unwrap();
        let noise = vec![vec![0.3; 4]; 6];
        let batch: Vec<_> = prepared.iter().zip(&noise).map(|(p, e)| (&p.input, p.label, p.target, e.as_slice())).collect();
        let (_, [_, ce, _]) = batch_gradient(&net, &net.params, &batch, Stage::S2DecisionFrozen.weights(), 0.0).unwrap();
        let direct: f64 = prepared
            .iter()
            .zip(&noise)
            .map(|(p, e)| example_losses(&net, &net.params, &p.input, p.label, p.target, e).unwrap().1)
            .sum::<f64>()
            / 6.0;
        assert!((ce - direct).abs() < 1e-12);
    }

    #[test]
    fn forecast_head_learns_constant_demand() {
        let p = {
            let mut p = panel();
            p.demand = vec![vec![6; 120]; 4];
            p
        };
        let cfg = FeatureConfig::default();
        let mk = |days: std::ops::Range<usize>| {
            let mut v = Vec::new();
            for s in 0..4 {
                for d in days.clone().step_by(3) {
                    v.push(Example { features: build_features(&p, s, d, 10, 12.0, &cfg), label: 5, forecast_target: 6.0 });
                }
            }
            v
        };
        let (train, held) = (mk(30..90), mk(90..110));
        let mut net = fresh(&train);
        let sched = TrainSchedule {
            s1: StageConfig { epochs: 80, learning_rate: 1e-2 },
            s2: StageConfig { epochs: 0, learning_rate: 1e-3 },
            s3: StageConfig { epochs: 0, learning_rate: 1e-3 },
            ..TrainSchedule::default()
        };
        pretrain(&mut net, &train, &sched).unwrap();
        for e in &held {
            let f = net.forecast(&e.features).unwrap();
            assert!((f - 6.0).abs() <= 0.6, "{f}");
        }
    }

    #[test]
    fn labels_outside_grid_are_rejected() {
        let data = dataset(|_| 40);
        let mut net = fresh(&dataset(|_| 5));
        assert!(matches!(pretrain(&mut net, &data, &TrainSchedule::default()), Err(PolicyError::Data(_))));
    }
}
