//! Predict-then-optimize and empirical-quantile base-stock baselines.
//!
//! Orders are placed on the SKU's review calendar and raise the inventory
//! position to a base-stock level `S` re-estimated from a trailing window of
//! demand on every review day. The critical ratio uses unit price as the
//! shortage penalty `b` and unit cost as the holding penalty `h`.

use serde::{Deserialize, Serialize};

use crate::datagen::SkuRecord;
use crate::sim::{OrderRule, ReviewContext, SimError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BaselineError {
    #[error("domain error: {0}")]
    Domain(String),
}

fn domain<T>(msg: impl Into<String>) -> Result<T, BaselineError> {
    Err(BaselineError::Domain(msg.into()))
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse standard normal CDF: a rational approximation with relative
/// error below 1.2e-9, polished by one Newton step.
pub fn normal_quantile(p: f64) -> Result<f64, BaselineError> {
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("probability {p} outside (0, 1)"));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] =
        [-5.447609879822406e1, 1.615858368580409e2, -1.556989798598866e2, 6.680131188771972e1, -1.328068155288572e1];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - P_LOW {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    Ok(x - (normal_cdf(x) - p) / density)
}

/// Regularized lower incomplete gamma `P(shape, x)`: power series below
/// `shape + 1`, Lentz continued fraction for the upper tail above.
pub fn gamma_p(shape: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let log_prefix = -x + shape * x.ln() - libm::lgamma(shape);
    if x < shape + 1.0 {
        let mut term = 1.0 / shape;
        let mut sum = term;
        let mut a = shape;
        for _ in 0..10_000 {
            a += 1.0;
            term *= x / a;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        (sum.ln() + log_prefix).exp().min(1.0)
    } else {
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - shape;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - shape);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-17 {
                break;
            }
        }
        (1.0 - (h.ln() + log_prefix).exp()).max(0.0)
    }
}

pub fn gamma_cdf(x: f64, shape: f64, scale: f64) -> f64 {
    gamma_p(shape, x / scale)
}

/// Inverse gamma CDF by bracketing then bisection on the CDF.
pub fn gamma_quantile(shape: f64, scale: f64, p: f64) -> Result<f64, BaselineError> {
    if !(shape > 0.0 && shape.is_finite() && scale > 0.0 && scale.is_finite()) {
        return domain(format!("gamma parameters shape {shape}, scale {scale} must be positive"));
    }
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("probability {p} outside (0, 1)"));
    }
    let mut hi = shape.max(1.0);
    while gamma_p(shape, hi) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gamma_p(shape, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi) * scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PtoInputs {
    pub mu_d: f64,
    pub sigma_d: f64,
    pub gamma_shape: f64,
    pub gamma_scale: f64,
    pub review_days: u32,
    pub lead_days: u32,
    pub stockout_cost: f64,
    pub holding_cost: f64,
}

impl PtoInputs {
    /// Moments of a daily demand window. The gamma fit uses
    /// `k = mu^2 / sigma^2`, `theta = sigma^2 / mu` and is zero when the
    /// window is degenerate.
    pub fn from_history(window: &[u32], sku: &SkuRecord) -> Result<PtoInputs, BaselineError> {
        if window.is_empty() {
            return domain("empty demand window");
        }
        let n = window.len() as f64;
        let mu = window.iter().map(|&d| d as f64).sum::<f64>() / n;
        let var = if window.len() > 1 {
            window.iter().map(|&d| (d as f64 - mu).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let (gamma_shape, gamma_scale) = if var > 0.0 && mu > 0.0 { (mu * mu / var, var / mu) } else { (0.0, 0.0) };
        Ok(PtoInputs {
            mu_d: mu,
            sigma_d: var.sqrt(),
            gamma_shape,
            gamma_scale,
            review_days: sku.nrt_days.max(1),
            lead_days: sku.vlt_days,
            stockout_cost: sku.unit_price.as_units(),
            holding_cost: sku.unit_cost.as_units(),
        })
    }

    pub fn risk_days(&self) -> f64 {
        (self.review_days + self.lead_days) as f64
    }

    pub fn critical_ratio(&self) -> f64 {
        self.stockout_cost / (self.stockout_cost + self.holding_cost)
    }

    fn check(&self) -> Result<(), BaselineError> {
        if !(self.mu_d >= 0.0 && self.sigma_d >= 0.0 && self.mu_d.is_finite() && self.sigma_d.is_finite()) {
            return domain("demand moments must be finite and nonnegative");
        }
        if !(self.stockout_cost > 0.0 && self.holding_cost > 0.0) {
            return domain("b and h must be positive");
        }
        if self.review_days < 1 {
            return domain("review period must be at least one day");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    PtoNormal,
    PtoGamma,
    /// Empirical percentile of daily demand times the risk period.
    Quantile { percentile: u8 },
}

impl BaselineMethod {
    pub fn name(&self) -> String {
        match self {
            BaselineMethod::PtoNormal => "PTO_normal".into(),
            BaselineMethod::PtoGamma => "PTO_gamma".into(),
            BaselineMethod::Quantile { percentile } => format!("BM_{percentile}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseStockPolicy {
    pub base_stock_level: f64,
    pub method: BaselineMethod,
}

/// `S = mu (R + LT) + z sigma sqrt(R + LT)` with `z` at the critical ratio.
pub fn pto_normal(inp: &PtoInputs) -> Result<BaseStockPolicy, BaselineError> {
    inp.check()?;
    let l = inp.risk_days();
    let z = normal_quantile(inp.critical_ratio())?;
    let s = inp.mu_d * l + z * inp.sigma_d * l.sqrt();
    Ok(BaseStockPolicy { base_stock_level: s.max(0.0), method: BaselineMethod::PtoNormal })
}

/// Critical-ratio quantile of `Gamma((R + LT) k, theta)`.
pub fn pto_gamma(inp: &PtoInputs) -> Result<BaseStockPolicy, BaselineError> {
    inp.check()?;
    if inp.sigma_d == 0.0 || inp.mu_d == 0.0 || inp.gamma_shape <= 0.0 {
        let flat = PtoInputs { sigma_d: 0.0, ..*inp };
        let s = pto_normal(&flat)?.base_stock_level;
        return Ok(BaseStockPolicy { base_stock_level: s, method: BaselineMethod::PtoGamma });
    }
    let s = gamma_quantile(inp.risk_days() * inp.gamma_shape, inp.gamma_scale, inp.critical_ratio())?;
    Ok(BaseStockPolicy { base_stock_level: s.max(0.0), method: BaselineMethod::PtoGamma })
}

/// Linearly interpolated `x`-th percentile of the window times `risk_days`.
pub fn quantile_policy(window: &[u32], x: f64, risk_days: f64) -> Result<f64, BaselineError> {
    if window.is_empty() {
        return domain("empty demand window");
    }
    if !(x > 0.0 && x < 100.0) {
        return domain(format!("percentile {x} outside (0, 100)"));
    }
    let mut sorted = window.to_vec();
    sorted.sort_unstable();
    let h = (sorted.len() - 1) as f64 * x / 100.0;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let q = sorted[lo] as f64 + (h - lo as f64) * (sorted[hi] as f64 - sorted[lo] as f64);
    Ok(q * risk_days)
}

/// Order-up-to quantity `max(0, round_half_up(S - position))`.
pub fn base_stock_to_order(s: f64, position: u64) -> u64 {
    let gap = s - position as f64;
    if gap <= 0.0 {
        0
    } else {
        (gap + 0.5).floor() as u64
    }
}

/// Base-stock level of `method` for a SKU given its recent demand.
pub fn base_stock_level(method: BaselineMethod, window: &[u32], sku: &SkuRecord) -> Result<f64, BaselineError> {
    let inp = PtoInputs::from_history(window, sku)?;
    match method {
        BaselineMethod::PtoNormal => Ok(pto_normal(&inp)?.base_stock_level),
        BaselineMethod::PtoGamma => Ok(pto_gamma(&inp)?.base_stock_level),
        BaselineMethod::Quantile { percentile } => quantile_policy(window, percentile as f64, inp.risk_days()),
    }
}

/// Simulator rule re-estimating `S` from the trailing `window` days of
/// history on every review day.
pub struct BaseStockRule<'a> {
    pub method: BaselineMethod,
    pub sku: &'a SkuRecord,
    pub window: usize,
    /// Last level used, for reporting.
    pub last_level: f64,
}

impl<'a> BaseStockRule<'a> {
    pub fn new(method: BaselineMethod, sku: &'a SkuRecord, window: usize) -> Self {
        BaseStockRule { method, sku, window: window.max(1), last_level: 0.0 }
    }
}

impl OrderRule for BaseStockRule<'_> {
    fn order(&mut self, ctx: &ReviewContext<'_>) -> Result<u64, SimError> {
        let h = ctx.history;
        let mut recent = &h[h.len().saturating_sub(self.window)..];
        if recent.is_empty() {
            recent = std::slice::from_ref(&ctx.today);
        }
        let s = base_stock_level(self.method, recent, self.sku)
            .map_err(|e| SimError::Rule { day: ctx.day, message: e.to_string() })?;
        self.last_level = s;
        Ok(base_stock_to_order(s, ctx.position()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{gamma_cdf_quadrature, normal_quantile_bisection};
    use proptest::prelude::*;

    fn inputs(mu: f64, sigma: f64, r: u32, lt: u32, b: f64, h: f64) -> PtoInputs {
        let (k, t) = if sigma > 0.0 { (mu * mu / (sigma * sigma), sigma * sigma / mu) } else { (0.0, 0.0) };
        PtoInputs {
            mu_d: mu,
            sigma_d: sigma,
            gamma_shape: k,
            gamma_scale: t,
            review_days: r,
            lead_days: lt,
            stockout_cost: b,
            holding_cost: h,
        }
    }

    #[test]
    fn normal_quantile_known_points() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert!((normal_quantile(0.975).unwrap() - normal_quantile_bisection(0.975)).abs() < 1e-9);
        assert!((normal_quantile(0.9).unwrap() - 1.2815515655446004).abs() < 1e-9);
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!(normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn pto_normal_cases() {
        let s = pto_normal(&inputs(10.0, 2.0, 3, 1, 1.0, 1.0)).unwrap().base_stock_level;
        assert_eq!(s, 40.0);
        let s = pto_normal(&inputs(10.0, 2.0, 3, 1, 9.0, 1.0)).unwrap().base_stock_level;
        let oracle = 40.0 + normal_quantile_bisection(0.9) * 4.0;
        assert!((s - oracle).abs() < 1e-8, "{s}");
        assert!((s - 45.126).abs() < 1e-3);
        assert_eq!(pto_normal(&inputs(10.0, 0.0, 3, 1, 9.0, 1.0)).unwrap().base_stock_level, 40.0);
    }

    #[test]
    fn gamma_quantile_cases() {
        let q = gamma_quantile(1.0, 1.0, 0.5).unwrap();
        assert!((q - std::f64::consts::LN_2).abs() < 1e-12);
        let median = gamma_quantile(16.0, 2.5, 0.5).unwrap();
        assert!((gamma_cdf_quadrature(median, 16.0, 2.5) - 0.5).abs() < 1e-8);
        // Wilson-Hilferty: k theta (1 - 1/(9k))^3 at the median.
        let wh = 40.0 * (1.0 - 1.0 / 144.0f64).powi(3);
        assert!((median - wh).abs() < 0.01, "{median} vs {wh}");
        assert!((median - 39.2).abs() < 0.05);
        assert!(gamma_quantile(0.0, 1.0, 0.5).is_err());
        assert!(gamma_quantile(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn pto_gamma_cases() {
        let base = inputs(10.0, 5.0, 3, 1, 1.0, 1.0);
        assert_eq!(base.gamma_shape, 4.0);
        assert_eq!(base.gamma_scale, 2.5);
        let s = pto_gamma(&base).unwrap().base_stock_level;
        assert!((s - gamma_quantile(16.0, 2.5, 0.5).unwrap()).abs() < 1e-12);
        let high = pto_gamma(&inputs(10.0, 5.0, 3, 1, 99.0, 1.0)).unwrap().base_stock_level;
        assert!(high > 40.0);
        let flat = pto_gamma(&inputs(10.0, 0.0, 3, 1, 99.0, 1.0)).unwrap().base_stock_level;
        assert_eq!(flat, 40.0);
        let mut prev = 0.0;
        for b in 1..20 {
            let s = pto_gamma(&inputs(10.0, 5.0, 3, 1, b as f64, 1.0)).unwrap().base_stock_level;
            assert!(s >= prev);
            prev = s;
        }
    }

    #[test]
    fn quantile_policy_cases() {
        assert_eq!(quantile_policy(&[5; 9], 85.0, 4.0).unwrap(), 20.0);
        assert_eq!(quantile_policy(&[0, 10], 50.0, 3.0).unwrap(), 15.0);
        // Sorted [1,2,3,4]: position 3 * 0.85 = 2.55 between 3 and 4.
        assert!((quantile_policy(&[4, 1, 3, 2], 85.0, 1.0).unwrap() - 3.55).abs() < 1e-12);
        assert!(quantile_policy(&[], 50.0, 1.0).is_err());
    }

    #[test]
    fn order_up_to_rounding() {
        assert_eq!(base_stock_to_order(45.126, 20), 25);
        assert_eq!(base_stock_to_order(45.126, 0), 45);
        assert_eq!(base_stock_to_order(10.0, 10), 0);
        assert_eq!(base_stock_to_order(10.0, 50), 0);
        assert_eq!(base_stock_to_order(10.5, 0), 11);
    }

    proptest! {
        #[test]
        fn normal_symmetry(p in 1e-6f64..0.999999) {
            let a = normal_quantile(p).unwrap();
            let b = normal_quantile(1.0 - p).unwrap();
            prop_assert!((a + b).abs() < 1e-8 * a.abs().max(1.0));
        }

        #[test]
        fn gamma_inverse_identity(shape in 0.1f64..200.0, p in 0.001f64..0.999) {
            let q = gamma_quantile(shape, 1.7, p).unwrap();
            prop_assert!((gamma_cdf(q, shape, 1.7) - p).abs() < 1e-7);
        }

        #[test]
        fn normal_inverse_identity(p in 1e-8f64..(1.0 - 1e-8)) {
            let q = normal_quantile(p).unwrap();
            prop_assert!((normal_cdf(q) - p).abs() < 1e-7 * p.min(1.0 - p).max(1e-3));
        }

        #[test]
        fn pto_normal_monotone_in_costs(b in 0.1f64..50.0, h in 0.1f64..50.0, db in 0.0f64..10.0) {
            let lo = pto_normal(&inputs(8.0, 3.0, 5, 2, b, h)).unwrap().base_stock_level;
            let hi_b = pto_normal(&inputs(8.0, 3.0, 5, 2, b + db, h)).unwrap().base_stock_level;
            let hi_h = pto_normal(&inputs(8.0, 3.0, 5, 2, b, h + db)).unwrap().base_stock_level;
            prop_assert!(hi_b >= lo - 1e-12);
            prop_assert!(hi_h <= lo + 1e-12);
        }
    }
}
