use rand::Rng;
use rand_distr::StandardNormal;

use super::net::{log_softmax, softmax};
use super::PolicyError;
use crate::sim::CandidateGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSample {
    pub action: u32,
    pub index: usize,
    /// Log-probability of `index` under `softmax(logits / temperature)`.
    pub log_prob: f64,
    /// Raw, untempered logits.
    pub logits: Vec<f64>,
    pub latent: Vec<f64>,
}

pub fn draw_noise<R: Rng + ?Sized>(width: usize, rng: &mut R) -> Vec<f64> {
    (0..width).map(|_| rng.sample(StandardNormal)).collect()
}

/// Categorical draw from `softmax(logits / temperature)` by inverse CDF.
pub fn sample_action<R: Rng + ?Sized>(
    logits: &[f64],
    temperature: f64,
    grid: &CandidateGrid,
    rng: &mut R,
) -> Result<ActionSample, PolicyError> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(PolicyError::Numeric(format!("temperature {temperature} must be positive")));
    }
    if logits.len() != grid.len() {
        return Err(PolicyError::Shape(format!("{} logits for {} actions", logits.len(), grid.len())));
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(PolicyError::Numeric("non-finite logits".into()));
    }
    let scaled: Vec<f64> = logits.iter().map(|x| x / temperature).collect();
    let p = softmax(&scaled);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut index = p.len() - 1;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            index = i;
            break;
        }
    }
    Ok(ActionSample {
        action: grid.value_at(index),
        index,
        log_prob: log_softmax(&scaled)[index],
        logits: logits.to_vec(),
        latent: Vec::new(),
    })
}

/// Exact `KL(softmax(p / t) || softmax(q / t))`.
pub fn categorical_kl(p_logits: &[f64], q_logits: &[f64], temperature: f64) -> f64 {
    let sp: Vec<f64> = p_logits.iter().map(|x| x / temperature).collect();
    let sq: Vec<f64> = q_logits.iter().map(|x| x / temperature).collect();
    let (lp, lq) = (log_softmax(&sp), log_softmax(&sq));
    lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).sum::<f64>().max(0.0)
}
