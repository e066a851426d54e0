use std::fmt;
use std::ops::Range;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EvalError;
use crate::baselines::BaselineMethod;
use crate::datagen::ScenarioConfig;
use crate::policy::{FeatureConfig, NetConfig, TrainSchedule};
use crate::rloo::{FinetuneConfig, ReferenceKind, RewardConfig};
use crate::select::{CalibrationOptions, EpochStart, SolverKind, SolverOptions};
use crate::sim::{CandidateGrid, SaleBasis, SimConfig};

/// A method that can appear in a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Hindsight labels solved on the evaluated split itself.
    Or,
    Baseline(BaselineMethod),
    DlPretrain,
    OrprFinetuned,
}

impl Method {
    pub fn all_default() -> Vec<Method> {
        vec![
            Method::Or,
            Method::Baseline(BaselineMethod::PtoNormal),
            Method::Baseline(BaselineMethod::PtoGamma),
            Method::Baseline(BaselineMethod::Quantile { percentile: 50 }),
            Method::Baseline(BaselineMethod::Quantile { percentile: 85 }),
            Method::DlPretrain,
            Method::OrprFinetuned,
        ]
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Or => f.write_str("OR"),
            Method::Baseline(b) => f.write_str(&b.name()),
            Method::DlPretrain => f.write_str("DL_pretrain"),
            Method::OrprFinetuned => f.write_str("ORPR_finetuned"),
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "OR" => Method::Or,
            "PTO_normal" => Method::Baseline(BaselineMethod::PtoNormal),
            "PTO_gamma" => Method::Baseline(BaselineMethod::PtoGamma),
            "DL_pretrain" => Method::DlPretrain,
            "ORPR_finetuned" => Method::OrprFinetuned,
            _ => {
                let x = s.strip_prefix("BM_").ok_or_else(|| format!("unknown method {s:?}"))?;
                match x.parse::<u8>() {
                    Ok(p) if (1..=99).contains(&p) => Method::Baseline(BaselineMethod::Quantile { percentile: p }),
                    _ => return Err(format!("BM percentile must be an integer in 1..=99, got {x:?}")),
                }
            }
        })
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Where the demand panel comes from. A directory, when given, wins over
/// the scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanelConfig {
    /// Directory holding skus.csv and demand.csv.
    pub dir: Option<PathBuf>,
    pub scenario: ScenarioConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// One label per category and epoch, broadcast to its SKUs.
    #[default]
    Category,
    Sku,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelingConfig {
    /// Turnover target in days for calibration.
    pub target_turnover: f64,
    /// Fixed loss-budget parameter; when set, calibration is skipped.
    pub alpha: Option<f64>,
    pub tolerance: f64,
    pub epoch_days: usize,
    pub granularity: Granularity,
    /// Inventory each labeled epoch starts from.
    pub epoch_start: EpochStart,
    pub basis: SaleBasis,
    pub solver: SolverKind,
    pub solver_options: SolverOptions,
    pub calibration: CalibrationOptions,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        LabelingConfig {
            target_turnover: 4.0,
            alpha: None,
            tolerance: 0.25,
            epoch_days: 30,
            granularity: Granularity::Category,
            epoch_start: EpochStart::Reset,
            basis: SaleBasis::default(),
            solver: SolverKind::Auto,
            solver_options: SolverOptions::default(),
            calibration: CalibrationOptions::default(),
        }
    }
}

/// Half-open global day ranges, written `[start, end]` in the config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Splits {
    pub train: (usize, usize),
    pub validation: (usize, usize),
    pub test: (usize, usize),
}

impl Default for Splits {
    fn default() -> Self {
        Splits { train: (28, 210), validation: (210, 270), test: (270, 360) }
    }
}

impl Splits {
    pub fn train(&self) -> Range<usize> {
        self.train.0..self.train.1
    }

    pub fn validation(&self) -> Range<usize> {
        self.validation.0..self.validation.1
    }

    pub fn test(&self) -> Range<usize> {
        self.test.0..self.test.1
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, (a, b)) in [("train", self.train), ("validation", self.validation), ("test", self.test)] {
            if a >= b {
                return Err(format!("{name} split [{a}, {b}) is empty"));
            }
        }
        if self.train.1 > self.validation.0 || self.validation.1 > self.test.0 {
            return Err("splits must be disjoint and ordered train < validation < test".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed. Every component seed is derived from it.
    pub seed: u64,
    pub panel: PanelConfig,
    pub grid: CandidateGrid,
    pub sim: SimConfig,
    pub labeling: LabelingConfig,
    pub features: FeatureConfig,
    pub net: NetConfig,
    pub schedule: TrainSchedule,
    pub reward: RewardConfig,
    pub finetune: FinetuneConfig,
    pub splits: Splits,
    pub methods: Vec<Method>,
    /// Percentages in the report are relative to this method, or to the
    /// first row when it is not evaluated.
    pub reference_method: Method,
    /// Trailing days of demand behind the base-stock estimates.
    pub baseline_window: usize,
    /// Fine-tuning reference. Expert labels are read from `expert_labels`.
    pub reference: ReferenceKind,
    pub expert_labels: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 7,
            panel: PanelConfig::default(),
            grid: CandidateGrid { min_days: 1, max_days: 21 },
            sim: SimConfig::default(),
            labeling: LabelingConfig::default(),
            features: FeatureConfig::default(),
            net: NetConfig::default(),
            schedule: TrainSchedule::default(),
            reward: RewardConfig::default(),
            finetune: FinetuneConfig::default(),
            splits: Splits::default(),
            methods: Method::all_default(),
            reference_method: Method::Or,
            baseline_window: 28,
            reference: ReferenceKind::OrLabels,
            expert_labels: None,
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<ExperimentConfig, EvalError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| EvalError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::Config(m));
        CandidateGrid::new(self.grid.min_days, self.grid.max_days).map_err(|e| EvalError::Config(e.to_string()))?;
        self.sim.validate().map_err(|e| EvalError::Config(e.to_string()))?;
        if self.panel.dir.is_none() {
            self.panel.scenario.validate().map_err(|e| EvalError::Config(e.to_string()))?;
        }
        self.splits.validate().map_err(EvalError::Config)?;
        if self.methods.is_empty() {
            return bad("method list is empty".into());
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return bad(format!("method {m} listed twice"));
            }
        }
        let l = &self.labeling;
        if !(l.target_turnover.is_finite() && l.target_turnover >= 0.0) {
            return bad("labeling.target_turnover must be finite and nonnegative".into());
        }
        if l.alpha.is_some_and(|a| !(0.0..=1.0).contains(&a)) {
            return bad("labeling.alpha must lie in [0, 1]".into());
        }
        if !(l.tolerance >= 0.0) {
            return bad("labeling.tolerance must be nonnegative".into());
        }
        if l.epoch_days == 0 {
            return bad("labeling.epoch_days must be at least 1".into());
        }
        for (name, r) in [("train", self.splits.train()), ("test", self.splits.test())] {
            if l.epoch_days > r.len() {
                return bad(format!("labeling.epoch_days {} exceeds the {name} split", l.epoch_days));
            }
        }
        self.schedule.validate().map_err(|e| EvalError::Config(e.to_string()))?;
        self.reward.validate().map_err(|e| EvalError::Config(e.to_string()))?;
        if self.finetune.batch_size == 0 || !(self.finetune.learning_rate > 0.0) {
            return bad("finetune needs a positive batch size and learning rate".into());
        }
        if !(0.0..1.0).contains(&self.finetune.rms_decay) {
            return bad("finetune.rms_decay must lie in [0, 1)".into());
        }
        if self.net.hidden == 0 || self.net.embed == 0 || self.net.latent == 0 || self.net.forecast_hidden == 0 {
            return bad("network widths must be positive".into());
        }
        if self.baseline_window == 0 {
            return bad("baseline_window must be at least 1".into());
        }
        if self.reference == ReferenceKind::ExpertLabels && self.expert_labels.is_none() {
            return bad("reference = \"expert_labels\" needs expert_labels = <path>".into());
        }
        Ok(())
    }

    /// Copy with `seed` replaced and all component seeds derived from it.
    pub fn resolved(&self) -> ExperimentConfig {
        let mut c = self.clone();
        c.net.grid = c.grid;
        c.panel.scenario.seed = crate::seed::derive(c.seed, "panel");
        c.net.seed = crate::seed::derive(c.seed, "net");
        c.schedule.seed = crate::seed::derive(c.seed, "pretrain");
        c.finetune.seed = crate::seed::derive(c.seed, "finetune");
        c
    }

    pub fn with_seed(&self, seed: u64) -> ExperimentConfig {
        ExperimentConfig { seed, ..self.clone() }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn needs_labels(&self) -> bool {
        self.methods.iter().any(|m| matches!(m, Method::Or | Method::DlPretrain | Method::OrprFinetuned))
    }

    pub fn needs_pretrain(&self) -> bool {
        self.methods.iter().any(|m| matches!(m, Method::DlPretrain | Method::OrprFinetuned))
    }

    pub fn needs_finetune(&self) -> bool {
        self.methods.contains(&Method::OrprFinetuned)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::all_default() {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert_eq!("BM_95".parse::<Method>().unwrap().to_string(), "BM_95");
        for bad in ["BM_0", "BM_100", "BM_x", "bm_50", "", "OR "] {
            assert!(bad.parse::<Method>().is_err(), "{bad}");
        }
    }

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let c = ExperimentConfig::from_toml_str("seed = 3\nmethods = [\"BM_50\"]\n[splits]\ntest = [280, 350]\n").unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.methods.len(), 1);
        assert_eq!(c.splits.test(), 280..350);
        assert_eq!(c.splits.train(), 28..210);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cases = [
            "methods = []",
            "bogus = 1",
            "[splits]\ntrain = [0, 250]",
            "[splits]\ntest = [300, 300]",
            "[labeling]\nalpha = 1.5",
            "[labeling]\ntarget_turnover = -1.0",
            "[grid]\nmin_days = 5\nmax_days = 2",
            "methods = [\"OR\", \"OR\"]",
            "[labeling]\nepoch_days = 200",
            "reference = \"expert_labels\"",
        ];
        for text in cases {
            assert!(ExperimentConfig::from_toml_str(text).is_err(), "{text}");
        }
        let ok = "[labeling]\ntarget_turnover = 4.0\n";
        ExperimentConfig::from_toml_str(ok).unwrap();
        let fixed = ExperimentConfig::from_toml_str("[labeling]\nalpha = 0.9\n").unwrap();
        assert_eq!(fixed.labeling.alpha, Some(0.9));
    }

    #[test]
    fn resolved_seeds_follow_master_seed() {
        let a = ExperimentConfig::default().resolved();
        let b = ExperimentConfig::default().with_seed(8).resolved();
        assert_ne!(a.net.seed, b.net.seed);
        assert_ne!(a.panel.scenario.seed, b.panel.scenario.seed);
        assert_eq!(a, ExperimentConfig::default().resolved());
        assert_ne!(a.hash(), b.hash());
    }
}
