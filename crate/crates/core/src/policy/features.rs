//! Three feature streams per (SKU, decision day).
//!
//! Demand-scale features scale linearly with the demand series; the others
//! are scale-free or static attributes.

use serde::{Deserialize, Serialize};

use crate::datagen::{DemandPanel, ValueClass, VolatilityClass};

pub const SALES_WIDTH: usize = 12;
pub const ATTRS_WIDTH: usize = 11;
pub const OBJECTIVE_WIDTH: usize = 2;
pub const STREAM_WIDTHS: [usize; 3] = [SALES_WIDTH, ATTRS_WIDTH, OBJECTIVE_WIDTH];

/// Sales-stream names, in order.
pub const SALES_NAMES: [&str; SALES_WIDTH] = [
    "mean7", "mean14", "mean28", "std7", "std28", "ewma", "seasonal_naive", "cover_days", "zero_frac", "cv28",
    "trend", "no_signal",
];
/// Indices of the sales features that scale with demand.
pub const DEMAND_SCALE: [usize; 7] = [0, 1, 2, 3, 4, 5, 6];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub lookback: usize,
    pub forecast_days: usize,
    pub ewma_alpha: f64,
    pub cover_cap_days: f64,
    pub seasonal_lag: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { lookback: 28, forecast_days: 7, ewma_alpha: 0.2, cover_cap_days: 90.0, seasonal_lag: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub stream_sales: Vec<f64>,
    pub stream_attrs: Vec<f64>,
    pub stream_objective: Vec<f64>,
    /// Per-example forecast scale: `max(mean28, 0.5)` units/day.
    pub demand_scale: f64,
}

impl FeatureVector {
    pub fn streams(&self) -> [&[f64]; 3] {
        [&self.stream_sales, &self.stream_attrs, &self.stream_objective]
    }

    pub fn is_finite(&self) -> bool {
        self.streams().iter().all(|s| s.iter().all(|x| x.is_finite())) && self.demand_scale.is_finite()
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 }
}

fn std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Lookback window ending the day before `day`, left-padded with zeros.
fn window(series: &[u32], day: usize, len: usize) -> (Vec<f64>, bool) {
    let have = day.min(len);
    let mut w = vec![0.0; len - have];
    w.extend(series[day - have..day].iter().map(|&d| d as f64));
    (w, have < len)
}

/// Features of SKU `sku` for a decision taken at the start of `day`, given
/// its inventory position and the turnover target.
pub fn build_features(
    panel: &DemandPanel,
    sku: usize,
    day: usize,
    position: u64,
    turnover_target: f64,
    cfg: &FeatureConfig,
) -> FeatureVector {
    let series = &panel.demand[sku];
    let lb = cfg.lookback.max(1);
    let (w, padded) = window(series, day, lb);
    let tail = |n: usize| &w[lb - n.min(lb)..];
    let m7 = mean(tail(7));
    let m14 = mean(tail(14));
    let m28 = mean(&w);
    let s7 = std(tail(7));
    let s28 = std(&w);
    let mut ewma = 0.0;
    for &x in &w {
        ewma = cfg.ewma_alpha * x + (1.0 - cfg.ewma_alpha) * ewma;
    }
    let seasonal = if day >= cfg.seasonal_lag && cfg.seasonal_lag > 0 { series[day - cfg.seasonal_lag] as f64 } else { 0.0 };
    let cover = if m28 > 0.0 {
        (position as f64 / m28).min(cfg.cover_cap_days)
    } else if position > 0 {
        cfg.cover_cap_days
    } else {
        0.0
    };
    let zero_frac = w.iter().filter(|&&x| x == 0.0).count() as f64 / lb as f64;
    let cv = if m28 > 0.0 { s28 / m28 } else { 0.0 };
    let trend = if m28 > 0.0 { m7 / m28 } else { 0.0 };
    let no_signal = if padded || m28 == 0.0 { 1.0 } else { 0.0 };
    let stream_sales = vec![m7, m14, m28, s7, s28, ewma, seasonal, cover, zero_frac, cv, trend, no_signal];

    let rec = &panel.skus[sku];
    let price = rec.unit_price.as_units();
    let cost = rec.unit_cost.as_units();
    let mut stream_attrs = vec![
        rec.vlt_days as f64,
        rec.nrt_days as f64,
        price.max(1e-9).ln(),
        if price > 0.0 { (price - cost) / price } else { 0.0 },
    ];
    stream_attrs.extend(VolatilityClass::ALL.iter().map(|c| f64::from(u8::from(*c == rec.volatility_class))));
    stream_attrs.extend(ValueClass::ALL.iter().map(|c| f64::from(u8::from(*c == rec.value_class))));
    stream_attrs.push(m28.ln_1p());

    let value = |i: usize| -> f64 {
        let (w, _) = window(&panel.demand[i], day, lb);
        w.iter().sum::<f64>() * panel.skus[i].unit_price.as_units()
    };
    let own = value(sku);
    let category: f64 = (0..panel.n_skus())
        .filter(|&i| panel.skus[i].category_id == rec.category_id)
        .map(value)
        .sum();
    let share = if category > 0.0 { own / category } else { 0.0 };
    let stream_objective = vec![share, turnover_target];

    FeatureVector { stream_sales, stream_attrs, stream_objective, demand_scale: m28.max(0.5) }
}

/// Mean demand over `day..day + forecast_days`; `None` past the panel end.
pub fn forecast_target(panel: &DemandPanel, sku: usize, day: usize, cfg: &FeatureConfig) -> Option<f64> {
    let end = day + cfg.forecast_days.max(1);
    (end <= panel.horizon_days).then(|| {
        panel.demand[sku][day..end].iter().map(|&d| d as f64).sum::<f64>() / (end - day) as f64
    })
}

/// Per-feature standardization constants fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: [Vec<f64>; 3],
    pub std: [Vec<f64>; 3],
}

impl Standardizer {
    pub fn identity() -> Standardizer {
        Standardizer {
            mean: STREAM_WIDTHS.map(|w| vec![0.0; w]),
            std: STREAM_WIDTHS.map(|w| vec![1.0; w]),
        }
    }

    /// Population mean and standard deviation per feature; constant
    /// features get unit scale.
    pub fn fit(rows: &[FeatureVector]) -> Standardizer {
        let mut out = Standardizer::identity();
        if rows.is_empty() {
            return out;
        }
        let n = rows.len() as f64;
        for s in 0..3 {
            for j in 0..STREAM_WIDTHS[s] {
                let m = rows.iter().map(|r| r.streams()[s][j]).sum::<f64>() / n;
                let v = rows.iter().map(|r| (r.streams()[s][j] - m).powi(2)).sum::<f64>() / n;
                out.mean[s][j] = m;
                out.std[s][j] = if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 };
            }
        }
        out
    }

    pub fn apply(&self, f: &FeatureVector) -> [Vec<f64>; 3] {
        let streams = f.streams();
        std::array::from_fn(|s| streams[s].iter().enumerate().map(|(j, x)| (x - self.mean[s][j]) / self.std[s][j]).collect())
    }
}
