//! Leave-one-out policy-gradient fine-tuning under a hybrid reward.
//!
//! For each prompt, `k` actions are drawn from the live policy. Each gets a
//! hybrid reward `omega * rule + (1 - omega) * sim`, shifted by the sampled
//! log-ratio penalty `-beta * (log pi - log pi_ref)`. The baseline of a
//! sample is the mean return of its `k - 1` peers. The surrogate
//! `sum A * log pi / (B * k)` is maximized; parameters descend its negation.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::DemandPanel;
use crate::policy::{
    categorical_kl, draw_noise, log_softmax, sample_action, softmax, FeatureVector, Input, PolicyError, PolicyNet,
    Rmsprop, Seeds,
};
use crate::sim::{evaluate_from, DemandTrace, InventoryState, SimConfig, SimError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RlooError {
    #[error("invalid reward config: {0}")]
    Config(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("non-finite {what} at prompt {prompt}, sample {sample}")]
    NonFinite { what: &'static str, prompt: usize, sample: usize },
    #[error("empty dataset")]
    Empty,
}

/// Which incumbent decision anchors the sign test of the rule reward.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    /// Greedy action of the frozen reference policy.
    #[default]
    PretrainedGreedy,
    /// Label of the prompt's previous epoch, when there is one.
    PriorEpoch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub omega: f64,
    pub focal_gamma: f64,
    pub sign_alpha: f64,
    pub kl_beta: f64,
    pub sim_horizon_days: usize,
    pub k_samples: usize,
    pub temperature: f64,
    pub base: BaseKind,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            omega: 0.5,
            focal_gamma: 1.0,
            sign_alpha: 2.0,
            kl_beta: 0.05,
            sim_horizon_days: 14,
            k_samples: 4,
            temperature: 1.0,
            base: BaseKind::PretrainedGreedy,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RlooError> {
        let bad = |m: &str| Err(RlooError::Config(m.into()));
        if !(0.0..=1.0).contains(&self.omega) {
            return bad("omega must lie in [0, 1]");
        }
        if !(self.focal_gamma >= 0.0) {
            return bad("focal_gamma must be nonnegative");
        }
        if !(self.sign_alpha > 1.0) {
            return bad("sign_alpha must exceed 1");
        }
        if !(self.kl_beta >= 0.0) {
            return bad("kl_beta must be nonnegative");
        }
        if self.sim_horizon_days == 0 {
            return bad("sim_horizon_days must be at least 1");
        }
        if self.k_samples < 2 {
            return bad("k_samples must be at least 2");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        Ok(())
    }
}

/// Sign-aware focal loss of `y` against `a_star`, negated. Adjustments are
/// measured from `a_base`; a zero adjustment matches either sign.
pub fn rule_reward(y: u32, a_star: u32, a_base: u32, cfg: &RewardConfig) -> f64 {
    let d_hat = y as i64 - a_base as i64;
    let d_star = a_star as i64 - a_base as i64;
    let e = ((y as i64 - a_star as i64) as f64).powi(2);
    let w = if d_hat == 0 || d_star == 0 || d_hat.signum() == d_star.signum() { 1.0 } else { cfg.sign_alpha };
    let we = w * e;
    let focal = if cfg.focal_gamma == 0.0 { 1.0 } else { (1.0 - (-we).exp()).powf(cfg.focal_gamma) };
    -(focal * we)
}

const REL_EPS: f64 = 1e-9;

fn less(a: f64, b: f64) -> bool {
    a < b && (b - a) > REL_EPS * a.abs().max(b.abs())
}

fn close(a: f64, b: f64) -> bool {
    !less(a, b) && !less(b, a)
}

/// +1 when `(t, l)` Pareto-dominates `(t0, l0)` (lower is better on both),
/// -1 when dominated, 0 otherwise.
pub fn pareto_indicator(t: f64, l: f64, t0: f64, l0: f64) -> f64 {
    let le = |a, b| less(a, b) || close(a, b);
    if le(t, t0) && le(l, l0) && (less(t, t0) || less(l, l0)) {
        1.0
    } else if le(t0, t) && le(l0, l) && (less(t0, t) || less(l0, l)) {
        -1.0
    } else {
        0.0
    }
}

pub fn hybrid_reward(rule: f64, sim: f64, omega: f64) -> f64 {
    if omega == 1.0 {
        rule
    } else if omega == 0.0 {
        sim
    } else {
        omega * rule + (1.0 - omega) * sim
    }
}

pub fn kl_adjusted_return(r_total: f64, logp_theta: f64, logp_ref: f64, beta: f64) -> f64 {
    if beta == 0.0 {
        r_total
    } else {
        r_total - beta * (logp_theta - logp_ref)
    }
}

/// `b_j = (sum R - R_j) / (k - 1)`.
pub fn loo_baselines(returns: &[f64]) -> Vec<f64> {
    let k = returns.len();
    let total: f64 = returns.iter().sum();
    returns.iter().map(|r| (total - r) / (k as f64 - 1.0)).collect()
}

/// `R_j - b_j`, computed as `k / (k - 1) * (R_j - mean)` so that a common
/// shift cancels before rounding.
pub fn loo_advantages(returns: &[f64]) -> Vec<f64> {
    let k = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / k;
    returns.iter().map(|r| k / (k - 1.0) * (r - mean)).collect()
}

/// One fine-tuning prompt: a SKU at a decision day with its state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub features: FeatureVector,
    pub sku: usize,
    pub day: usize,
    pub start: InventoryState,
    pub a_star: u32,
    /// Previous-epoch decision, if any.
    pub prior: Option<u32>,
    /// Rollouts may not read demand at or beyond this day.
    pub horizon_end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    OrLabels,
    ExpertLabels,
}

/// Reference and incumbent decisions keyed by (group id, epoch start).
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSource {
    pub kind: ReferenceKind,
    pub labels: HashMap<(String, usize), u32>,
    pub prior_decision: HashMap<(String, usize), u32>,
}

impl ReferenceSource {
    /// Labels keyed by group; the prior decision of each epoch is the
    /// label of the epoch before it.
    pub fn from_labels(kind: ReferenceKind, labels: &crate::select::LabelSet) -> ReferenceSource {
        let mut by_group: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        for r in &labels.rows {
            by_group.entry(r.category_id.clone()).or_default().push((r.epoch_start_day, r.v_days));
        }
        let mut map = HashMap::new();
        let mut prior = HashMap::new();
        for (g, mut rows) in by_group {
            rows.sort_unstable();
            for (i, &(e, v)) in rows.iter().enumerate() {
                map.insert((g.clone(), e), v);
                if i > 0 {
                    prior.insert((g.clone(), e), rows[i - 1].1);
                }
            }
        }
        ReferenceSource { kind, labels: map, prior_decision: prior }
    }

    pub fn resolve(&self, group: &str, epoch_start: usize) -> Option<(u32, Option<u32>)> {
        let key = (group.to_string(), epoch_start);
        self.labels.get(&key).map(|&v| (v, self.prior_decision.get(&key).copied()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutMetrics {
    pub turnover: f64,
    pub lost_value: f64,
}

/// Simulator access for rewards, with a per-(prompt, action) cache and
/// call counters.
pub struct RewardEnv<'a> {
    pub panel: &'a DemandPanel,
    pub sim: SimConfig,
    pub cfg: RewardConfig,
    cache: Mutex<HashMap<(usize, u32), Option<RolloutMetrics>>>,
    sim_reward_calls: AtomicUsize,
    simulator_runs: AtomicUsize,
    rule_reward_calls: AtomicUsize,
    skipped: AtomicUsize,
}

impl<'a> RewardEnv<'a> {
    pub fn new(panel: &'a DemandPanel, sim: SimConfig, cfg: RewardConfig) -> Result<Self, RlooError> {
        cfg.validate()?;
        Ok(RewardEnv {
            panel,
            sim,
            cfg,
            cache: Mutex::new(HashMap::new()),
            sim_reward_calls: AtomicUsize::new(0),
            simulator_runs: AtomicUsize::new(0),
            rule_reward_calls: AtomicUsize::new(0),
            skipped: AtomicUsize::new(0),
        })
    }

    pub fn sim_reward_calls(&self) -> usize {
        self.sim_reward_calls.load(Ordering::Relaxed)
    }

    pub fn simulator_runs(&self) -> usize {
        self.simulator_runs.load(Ordering::Relaxed)
    }

    pub fn rule_reward_calls(&self) -> usize {
        self.rule_reward_calls.load(Ordering::Relaxed)
    }

    /// Samples whose rollout did not fit before the prompt's horizon end.
    pub fn skipped(&self) -> usize {
        self.skipped.load(Ordering::Relaxed)
    }

    pub fn rule(&self, y: u32, a_star: u32, a_base: u32) -> f64 {
        self.rule_reward_calls.fetch_add(1, Ordering::Relaxed);
        rule_reward(y, a_star, a_base, &self.cfg)
    }

    /// H-day rollout of constant `v` from the prompt's state. Turnover falls
    /// back to average inventory when the rollout saw no demand.
    pub fn rollout(&self, prompt_id: usize, prompt: &Prompt, v: u32) -> Result<Option<RolloutMetrics>, RlooError> {
        if let Some(m) = self.cache.lock().expect("cache lock").get(&(prompt_id, v)) {
            return Ok(*m);
        }
        let h = self.cfg.sim_horizon_days;
        let end = prompt.day + h;
        let metrics = if end > prompt.horizon_end.min(self.panel.horizon_days) {
            None
        } else {
            self.simulator_runs.fetch_add(1, Ordering::Relaxed);
            let trace = DemandTrace::from_panel(self.panel, prompt.sku, prompt.day..end);
            let out = evaluate_from(&trace, &self.panel.skus[prompt.sku], v, &self.sim.with_horizon(h), &prompt.start)?;
            let dem = out.avg_demand_units();
            let turnover = if dem > 0.0 { out.avg_inventory_units / dem } else { out.avg_inventory_units };
            Some(RolloutMetrics { turnover, lost_value: out.lost_sales_value.as_units() })
        };
        self.cache.lock().expect("cache lock").insert((prompt_id, v), metrics);
        Ok(metrics)
    }

    /// Pareto indicator of `y` against `a_star`; `None` when the rollout
    /// does not fit.
    pub fn sim(&self, prompt_id: usize, prompt: &Prompt, y: u32) -> Result<Option<f64>, RlooError> {
        self.sim_reward_calls.fetch_add(1, Ordering::Relaxed);
        if y == prompt.a_star {
            return Ok(Some(0.0));
        }
        let (Some(a), Some(b)) = (self.rollout(prompt_id, prompt, y)?, self.rollout(prompt_id, prompt, prompt.a_star)?)
        else {
            self.skipped.fetch_add(1, Ordering::Relaxed);
            return Ok(None);
        };
        Ok(Some(pareto_indicator(a.turnover, a.lost_value, b.turnover, b.lost_value)))
    }
}

/// A sampled action with everything needed to replay its surrogate term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub prompt: usize,
    pub action: u32,
    pub index: usize,
    pub eps: Vec<f64>,
    pub rule: f64,
    pub sim: f64,
    pub log_prob: f64,
    pub ref_log_prob: f64,
    pub ret: f64,
    pub baseline: f64,
    pub advantage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlooBatchStats {
    pub mean_reward: f64,
    pub mean_rule_reward: f64,
    pub mean_sim_reward: f64,
    /// Mean sampled log-ratio `log pi - log pi_ref`.
    pub mean_kl: f64,
    pub mean_advantage: f64,
    pub grad_norm: f64,
    pub records: Vec<SampleRecord>,
}

/// Surrogate `sum A * log pi_T(y | x, eps) / (B * k)` over frozen samples.
pub fn surrogate(net: &PolicyNet, p: &[f64], inputs: &[Input], samples: &[SampleRecord], b: usize, k: usize, t: f64) -> Result<f64, PolicyError> {
    let mut s = 0.0;
    for r in samples {
        let c = net.forward_with(p, &inputs[r.prompt], Some(&r.eps))?;
        let scaled: Vec<f64> = c.logits.iter().map(|x| x / t).collect();
        s += r.advantage * log_softmax(&scaled)[r.index];
    }
    Ok(s / (b * k) as f64)
}

/// Gradient of [`surrogate`] with respect to the parameters.
pub fn surrogate_gradient(
    net: &PolicyNet,
    p: &[f64],
    inputs: &[Input],
    samples: &[SampleRecord],
    b: usize,
    k: usize,
    t: f64,
) -> Result<Vec<f64>, PolicyError> {
    let scale = 1.0 / (b * k) as f64;
    let parts = samples
        .par_iter()
        .map(|r| {
            let mut g = vec![0.0; p.len()];
            if r.advantage == 0.0 {
                return Ok(g);
            }
            let c = net.forward_with(p, &inputs[r.prompt], Some(&r.eps))?;
            let scaled: Vec<f64> = c.logits.iter().map(|x| x / t).collect();
            let probs = softmax(&scaled);
            let dlogits = probs
                .iter()
                .enumerate()
                .map(|(i, q)| r.advantage * scale * (f64::from(u8::from(i == r.index)) - q) / t)
                .collect();
            net.backward_with(p, &c, &Seeds { dlogits: Some(dlogits), kl_weight: 0.0, dforecast_rel: 0.0 }, &mut g);
            Ok(g)
        })
        .collect::<Result<Vec<_>, PolicyError>>()?;
    let mut grad = vec![0.0; p.len()];
    for g in parts {
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok(grad)
}

/// Samples `k` actions per prompt and scores them. `ids` are the prompts'
/// dataset indices, used as cache keys.
pub fn collect_samples(
    policy: &PolicyNet,
    reference: &PolicyNet,
    prompts: &[&Prompt],
    ids: &[usize],
    env: &RewardEnv<'_>,
    seed: u64,
) -> Result<(Vec<Input>, Vec<SampleRecord>), RlooError> {
    let cfg = env.cfg;
    let grid = policy.config.grid;
    let per_prompt = prompts
        .par_iter()
        .enumerate()
        .map(|(pi, prompt)| -> Result<(Input, Vec<SampleRecord>), RlooError> {
            let mut rng = crate::seed::stream(seed, pi as u64);
            let input = policy.prepare(&prompt.features)?;
            let a_base = match (cfg.base, prompt.prior) {
                (BaseKind::PriorEpoch, Some(v)) => v,
                _ => grid.value_at(reference.greedy_index(&input)?),
            };
            let mut recs = Vec::with_capacity(cfg.k_samples);
            for j in 0..cfg.k_samples {
                let eps = draw_noise(policy.config.latent, &mut rng);
                let live = policy.forward(&input, Some(&eps))?;
                let s = sample_action(&live.logits, cfg.temperature, &grid, &mut rng)?;
                let rc = reference.forward(&input, Some(&eps))?;
                let scaled: Vec<f64> = rc.logits.iter().map(|x| x / cfg.temperature).collect();
                let ref_log_prob = log_softmax(&scaled)[s.index];
                let rule = if cfg.omega > 0.0 { env.rule(s.action, prompt.a_star, a_base) } else { 0.0 };
                let sim = if cfg.omega < 1.0 {
                    match env.sim(ids[pi], prompt, s.action)? {
                        Some(v) => v,
                        None => {
                            log::debug!("rollout past horizon for sku {} at day {}; sim reward omitted", prompt.sku, prompt.day);
                            0.0
                        }
                    }
                } else {
                    0.0
                };
                let r = hybrid_reward(rule, sim, cfg.omega);
                let ret = kl_adjusted_return(r, s.log_prob, ref_log_prob, cfg.kl_beta);
                if !ret.is_finite() {
                    return Err(RlooError::NonFinite { what: "reward", prompt: ids[pi], sample: j });
                }
                recs.push(SampleRecord {
                    prompt: pi,
                    action: s.action,
                    index: s.index,
                    eps,
                    rule,
                    sim,
                    log_prob: s.log_prob,
                    ref_log_prob,
                    ret,
                    baseline: 0.0,
                    advantage: 0.0,
                });
            }
            let returns: Vec<f64> = recs.iter().map(|r| r.ret).collect();
            let base = loo_baselines(&returns);
            let adv = loo_advantages(&returns);
            for (j, r) in recs.iter_mut().enumerate() {
                r.baseline = base[j];
                r.advantage = adv[j];
            }
            Ok((input, recs))
        })
        .collect::<Result<Vec<_>, RlooError>>()?;
    let mut inputs = Vec::with_capacity(prompts.len());
    let mut records = Vec::new();
    for (input, recs) in per_prompt {
        inputs.push(input);
        records.extend(recs);
    }
    Ok((inputs, records))
}

/// One RLOO update on a batch of prompts.
pub fn rloo_step(
    policy: &mut PolicyNet,
    reference: &PolicyNet,
    prompts: &[&Prompt],
    ids: &[usize],
    env: &RewardEnv<'_>,
    opt: &mut Rmsprop,
    seed: u64,
) -> Result<RlooBatchStats, RlooError> {
    if prompts.is_empty() {
        return Err(RlooError::Empty);
    }
    let (inputs, records) = collect_samples(policy, reference, prompts, ids, env, seed)?;
    let (b, k, t) = (prompts.len(), env.cfg.k_samples, env.cfg.temperature);
    let ascent = surrogate_gradient(policy, &policy.params, &inputs, &records, b, k, t)?;
    if let Some(i) = ascent.iter().position(|g| !g.is_finite()) {
        return Err(RlooError::NonFinite { what: "gradient", prompt: i, sample: 0 });
    }
    let grad_norm = ascent.iter().map(|g| g * g).sum::<f64>().sqrt();
    let descent: Vec<f64> = ascent.iter().map(|g| -g).collect();
    let mask = vec![true; descent.len()];
    let mut params = std::mem::take(&mut policy.params);
    opt.step(&mut params, &descent, &mask);
    policy.params = params;

    let n = records.len() as f64;
    let mean = |f: &dyn Fn(&SampleRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    Ok(RlooBatchStats {
        mean_reward: mean(&|r| r.ret),
        mean_rule_reward: mean(&|r| r.rule),
        mean_sim_reward: mean(&|r| r.sim),
        mean_kl: mean(&|r| r.log_prob - r.ref_log_prob),
        mean_advantage: mean(&|r| r.advantage),
        grad_norm,
        records,
    })
}

/// Mean exact categorical KL between the mode distributions.
pub fn exact_kl(policy: &PolicyNet, reference: &PolicyNet, prompts: &[Prompt], temperature: f64) -> Result<f64, PolicyError> {
    if prompts.is_empty() {
        return Ok(0.0);
    }
    let total = prompts
        .par_iter()
        .map(|p| {
            let x = policy.prepare(&p.features)?;
            Ok(categorical_kl(&policy.mode_logits(&x)?, &reference.mode_logits(&x)?, temperature))
        })
        .collect::<Result<Vec<f64>, PolicyError>>()?;
    Ok(total.iter().sum::<f64>() / prompts.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub n_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rms_decay: f64,
    /// Validation cadence in steps; 0 evaluates only at the start and end.
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig { n_steps: 300, batch_size: 16, learning_rate: 1e-3, rms_decay: 0.99, eval_every: 50, seed: 11 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneLogRow {
    pub step: usize,
    pub mean_reward: f64,
    pub mean_rule_reward: f64,
    pub mean_sim_reward: f64,
    pub exact_kl: f64,
    pub grad_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_cost: Option<f64>,
}

pub type Validator<'v> = dyn Fn(&PolicyNet) -> Result<f64, RlooError> + Sync + 'v;

#[derive(Debug, Clone)]
pub struct FinetuneResult {
    /// Best checkpoint by validation cost, or the final policy without a
    /// validator.
    pub policy: PolicyNet,
    pub last: PolicyNet,
    pub best_step: usize,
    pub log: Vec<FinetuneLogRow>,
}

/// Repeats [`rloo_step`] over shuffled passes through `prompts`.
pub fn finetune(
    policy: &PolicyNet,
    reference: &PolicyNet,
    prompts: &[Prompt],
    env: &RewardEnv<'_>,
    cfg: &FinetuneConfig,
    validator: Option<&Validator<'_>>,
) -> Result<FinetuneResult, RlooError> {
    if prompts.is_empty() {
        return Err(RlooError::Empty);
    }
    let mut live = policy.clone();
    let mut best = (validator.map(|v| v(&live)).transpose()?, 0usize, live.clone());
    let mut log = Vec::with_capacity(cfg.n_steps);
    let mut opt = Rmsprop::new(live.n_params(), cfg.learning_rate, cfg.rms_decay, 1e-8);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut pass = 0u64;
    for step in 1..=cfg.n_steps {
        let mut ids = Vec::with_capacity(cfg.batch_size);
        while ids.len() < cfg.batch_size.min(prompts.len()) {
            if cursor >= order.len() {
                order = (0..prompts.len()).collect();
                order.shuffle(&mut crate::seed::stream(cfg.seed, pass));
                pass += 1;
                cursor = 0;
            }
            ids.push(order[cursor]);
            cursor += 1;
        }
        let batch: Vec<&Prompt> = ids.iter().map(|&i| &prompts[i]).collect();
        let step_seed = crate::seed::derive(cfg.seed, &format!("step-{step}"));
        let stats = rloo_step(&mut live, reference, &batch, &ids, env, &mut opt, step_seed)?;
        let at_eval = step == cfg.n_steps || (cfg.eval_every > 0 && step % cfg.eval_every == 0);
        let validation_cost = match (validator, at_eval) {
            (Some(v), true) => Some(v(&live)?),
            _ => None,
        };
        if let (Some(c), Some(b)) = (validation_cost, best.0) {
            if c < b {
                best = (Some(c), step, live.clone());
            }
        }
        let kl = if at_eval { exact_kl(&live, reference, prompts, env.cfg.temperature)? } else { stats.mean_kl };
        log.push(FinetuneLogRow {
            step,
            mean_reward: stats.mean_reward,
            mean_rule_reward: stats.mean_rule_reward,
            mean_sim_reward: stats.mean_sim_reward,
            exact_kl: kl,
            grad_norm: stats.grad_norm,
            validation_cost,
        });
    }
    let (policy_out, best_step) = if validator.is_some() { (best.2, best.1) } else { (live.clone(), cfg.n_steps) };
    Ok(FinetuneResult { policy: policy_out, last: live, best_step, log })
}
