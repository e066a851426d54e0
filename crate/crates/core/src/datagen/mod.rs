//! Synthetic demand panels and their CSV representation.

mod csv_io;

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::money::Cents;
use crate::seed;

pub use csv_io::{load_panel, parse_demand, parse_skus, save_panel, write_demand, write_skus, DEMAND_HEADER, SKUS_HEADER};

#[derive(Debug, thiserror::Error)]
pub enum PanelError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("{file}: row {row}: {message}")]
    Parse { file: String, row: u64, message: String },
    #[error("{file}: {message}")]
    Schema { file: String, message: String },
    #[error("invalid panel: {0}")]
    Invalid(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Demand variability archetype, lowest coefficient of variation first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VolatilityClass {
    X,
    Y,
    Z,
}

/// Product value archetype, highest unit price first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ValueClass {
    A,
    B,
    C,
}

impl VolatilityClass {
    pub const ALL: [VolatilityClass; 3] = [VolatilityClass::X, VolatilityClass::Y, VolatilityClass::Z];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl ValueClass {
    pub const ALL: [ValueClass; 3] = [ValueClass::A, ValueClass::B, ValueClass::C];

    pub fn index(self) -> usize {
        self as usize
    }
}

macro_rules! class_text {
    ($ty:ty, $($variant:ident),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                match self { $(Self::$variant => f.write_str(stringify!($variant)),)+ }
            }
        }

        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $(stringify!($variant) => Ok(Self::$variant),)+
                    other => Err(format!("unknown class {other:?}")),
                }
            }
        }
    };
}

class_text!(VolatilityClass, X, Y, Z);
class_text!(ValueClass, A, B, C);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkuRecord {
    pub sku_id: String,
    pub category_id: String,
    pub unit_cost: Cents,
    pub unit_price: Cents,
    pub vlt_days: u32,
    /// Review period: days between ordering opportunities.
    pub nrt_days: u32,
    pub volatility_class: VolatilityClass,
    pub value_class: ValueClass,
}

impl SkuRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.sku_id.is_empty() {
            return Err("empty sku_id".into());
        }
        if self.category_id.is_empty() {
            return Err(format!("sku {}: empty category_id", self.sku_id));
        }
        if self.unit_cost.0 <= 0 {
            return Err(format!("sku {}: unit_cost must be positive", self.sku_id));
        }
        if self.unit_price < self.unit_cost {
            return Err(format!("sku {}: unit_price below unit_cost", self.sku_id));
        }
        if self.nrt_days == 0 {
            return Err(format!("sku {}: nrt_days must be at least 1", self.sku_id));
        }
        Ok(())
    }
}

/// Per-SKU daily demand matrix with SKU attributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemandPanel {
    pub skus: Vec<SkuRecord>,
    /// `demand[i][t]` is the demand of SKU `i` on day `t`.
    pub demand: Vec<Vec<u32>>,
    pub horizon_days: usize,
}

impl DemandPanel {
    pub fn new(skus: Vec<SkuRecord>, demand: Vec<Vec<u32>>) -> Result<Self, PanelError> {
        let horizon_days = demand.first().map_or(0, Vec::len);
        let panel = DemandPanel { skus, demand, horizon_days };
        panel.validate()?;
        Ok(panel)
    }

    pub fn validate(&self) -> Result<(), PanelError> {
        if self.skus.len() != self.demand.len() {
            return Err(PanelError::Invalid(format!(
                "{} SKU records but {} demand rows",
                self.skus.len(),
                self.demand.len()
            )));
        }
        let mut seen = HashSet::new();
        for (sku, row) in self.skus.iter().zip(&self.demand) {
            sku.validate().map_err(PanelError::Invalid)?;
            if !seen.insert(sku.sku_id.as_str()) {
                return Err(PanelError::Invalid(format!("duplicate sku_id {}", sku.sku_id)));
            }
            if row.len() != self.horizon_days {
                return Err(PanelError::Invalid(format!(
                    "sku {} has {} days, panel horizon is {}",
                    sku.sku_id,
                    row.len(),
                    self.horizon_days
                )));
            }
        }
        Ok(())
    }

    pub fn n_skus(&self) -> usize {
        self.skus.len()
    }

    pub fn sku_index(&self, sku_id: &str) -> Option<usize> {
        self.skus.iter().position(|s| s.sku_id == sku_id)
    }

    /// Distinct category ids in order of first appearance.
    pub fn categories(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.skus
            .iter()
            .filter(|s| seen.insert(s.category_id.clone()))
            .map(|s| s.category_id.clone())
            .collect()
    }
}

/// Demand spike applied multiplicatively over a contiguous window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PromoWindow {
    pub start_day: usize,
    pub duration_days: usize,
    pub demand_multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_skus: usize,
    pub horizon_days: usize,
    /// Interval for per-SKU base mean demand, units/day.
    pub base_demand_range: (f64, f64),
    /// Coefficient of variation for the X, Y, Z archetypes (up to three).
    pub volatility_classes: Vec<f64>,
    /// Unit price tiers for the A, B, C archetypes (up to three).
    pub value_classes: Vec<f64>,
    pub promo_calendar: Vec<PromoWindow>,
    pub seed: u64,
    /// Unit cost as a fraction of unit price.
    pub cost_ratio: f64,
    /// Relative amplitude of the weekly demand sinusoid.
    pub seasonal_amplitude: f64,
    pub seasonal_period_days: f64,
    /// Inclusive range of vendor lead times, drawn per SKU.
    pub vlt_range: (u32, u32),
    /// Review periods, assigned per category in round-robin order.
    pub nrt_choices: Vec<u32>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_skus: 36,
            horizon_days: 360,
            base_demand_range: (2.0, 40.0),
            volatility_classes: vec![0.3, 0.7, 1.2],
            value_classes: vec![120.0, 40.0, 10.0],
            promo_calendar: vec![
                PromoWindow { start_day: 150, duration_days: 5, demand_multiplier: 2.5 },
                PromoWindow { start_day: 300, duration_days: 5, demand_multiplier: 3.0 },
            ],
            seed: 7,
            cost_ratio: 0.05,
            seasonal_amplitude: 0.15,
            seasonal_period_days: 7.0,
            vlt_range: (1, 4),
            nrt_choices: vec![5, 7],
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), PanelError> {
        let bad = |m: &str| Err(PanelError::Config(m.to_string()));
        if self.n_skus == 0 {
            return bad("n_skus must be at least 1");
        }
        if self.horizon_days == 0 {
            return bad("horizon_days must be at least 1");
        }
        let (lo, hi) = self.base_demand_range;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return bad("base_demand_range must satisfy 0 <= lo <= hi");
        }
        if self.volatility_classes.is_empty() || self.volatility_classes.len() > 3 {
            return bad("volatility_classes needs one to three levels");
        }
        if self.volatility_classes.iter().any(|cv| !(cv.is_finite() && *cv >= 0.0)) {
            return bad("coefficients of variation must be finite and nonnegative");
        }
        if self.value_classes.is_empty() || self.value_classes.len() > 3 {
            return bad("value_classes needs one to three tiers");
        }
        if self.value_classes.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return bad("unit price tiers must be positive");
        }
        if self.promo_calendar.iter().any(|p| !(p.demand_multiplier.is_finite() && p.demand_multiplier > 0.0)) {
            return bad("promo multipliers must be positive");
        }
        if !(self.cost_ratio > 0.0 && self.cost_ratio <= 1.0) {
            return bad("cost_ratio must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.seasonal_amplitude) {
            return bad("seasonal_amplitude must lie in [0, 1)");
        }
        if !(self.seasonal_period_days > 0.0) {
            return bad("seasonal_period_days must be positive");
        }
        if self.vlt_range.0 > self.vlt_range.1 {
            return bad("vlt_range must be ordered");
        }
        if self.nrt_choices.is_empty() || self.nrt_choices.contains(&0) {
            return bad("nrt_choices needs at least one positive review period");
        }
        Ok(())
    }

    /// Product of active promo multipliers on `day`.
    pub fn promo_multiplier(&self, day: usize) -> f64 {
        self.promo_calendar
            .iter()
            .filter(|p| day >= p.start_day && day < p.start_day + p.duration_days)
            .map(|p| p.demand_multiplier)
            .product()
    }
}

/// Generates a panel. SKU `i` draws from stream `i` of the scenario seed, so
/// the result is independent of thread count.
pub fn generate_panel(config: &ScenarioConfig) -> Result<DemandPanel, PanelError> {
    config.validate()?;
    let n_vol = config.volatility_classes.len();
    let n_val = config.value_classes.len();
    let categories: Vec<(ValueClass, VolatilityClass)> = (0..n_val)
        .flat_map(|a| (0..n_vol).map(move |x| (ValueClass::ALL[a], VolatilityClass::ALL[x])))
        .collect();

    let rows: Vec<(SkuRecord, Vec<u32>)> = (0..config.n_skus)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::stream(config.seed, i as u64);
            let vol = VolatilityClass::ALL[i % n_vol];
            let val = ValueClass::ALL[(i / n_vol) % n_val];
            let cat_index = categories.iter().position(|c| *c == (val, vol)).unwrap_or(0);
            let nrt = config.nrt_choices[cat_index % config.nrt_choices.len()];
            let vlt = rng.random_range(config.vlt_range.0..=config.vlt_range.1);
            let price_units = config.value_classes[val.index()] * rng.random_range(0.8..1.2);
            let unit_price = Cents::from_units(price_units).max(Cents(1));
            let unit_cost = Cents::from_units(price_units * config.cost_ratio).max(Cents(1)).min(unit_price);
            let (lo, hi) = config.base_demand_range;
            let base = if hi > lo { rng.random_range(lo..hi) } else { lo };
            let phase = rng.random_range(0.0..2.0 * PI);
            let cv = config.volatility_classes[vol.index()];

            let demand = (0..config.horizon_days)
                .map(|t| {
                    let season = 1.0
                        + config.seasonal_amplitude * (2.0 * PI * t as f64 / config.seasonal_period_days + phase).sin();
                    let mean = base * season * config.promo_multiplier(t);
                    draw_overdispersed(&mut rng, mean, cv)
                })
                .collect();

            let sku = SkuRecord {
                sku_id: format!("SKU{i:04}"),
                category_id: format!("{val}{vol}"),
                unit_cost,
                unit_price,
                vlt_days: vlt,
                nrt_days: nrt,
                volatility_class: vol,
                value_class: val,
            };
            (sku, demand)
        })
        .collect();

    let (skus, demand) = rows.into_iter().unzip();
    DemandPanel::new(skus, demand)
}

/// Negative-binomial draw with the given mean and coefficient of variation,
/// as a gamma-mixed Poisson. Falls back to plain Poisson when the requested
/// dispersion is below the Poisson floor.
fn draw_overdispersed<R: Rng + ?Sized>(rng: &mut R, mean: f64, cv: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let excess = cv * cv - 1.0 / mean;
    let lambda = if excess > 1e-12 {
        let shape = 1.0 / excess;
        match Gamma::new(shape, mean / shape) {
            Ok(g) => g.sample(rng),
            Err(_) => mean,
        }
    } else {
        mean
    };
    if lambda <= 0.0 {
        return 0;
    }
    match Poisson::new(lambda) {
        Ok(p) => {
            let x: f64 = p.sample(rng);
            x.min(u32::MAX as f64) as u32
        }
        Err(_) => 0,
    }
}
