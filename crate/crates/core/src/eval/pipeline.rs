use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Granularity, Method};
use super::report::{build_report, DecisionRow, Report};
use super::EvalError;
use crate::baselines::{BaseStockRule, BaselineMethod};
use crate::datagen::{generate_panel, load_panel, DemandPanel};
use crate::policy::{build_features, forecast_target, pretrain, Example, PolicyNet, Standardizer, TrainLogRow};
use crate::rloo::{finetune, FinetuneResult, Prompt, ReferenceKind, ReferenceSource, RewardEnv};
use crate::select::{calibrate_alpha, generate_labels, replay_labels, EpochStart, LabelRun, LabelSet, LabelingPlan, Probe};
use crate::sim::{
    chain_epochs, epoch_ranges, evaluate_from, initial_state, run_rule, tabulate_parameters, DemandTrace, Grouping,
    ParamTable, SimOutcome,
};

fn stage<E: std::fmt::Display>(name: &'static str) -> impl Fn(E) -> EvalError {
    move |e| EvalError::Stage { stage: name, cause: e.to_string() }
}

/// Outcome of the labeling stage on the train split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub alpha: f64,
    pub calibrated: bool,
    pub achieved_turnover: Option<f64>,
    /// Turnover objective fed to the policy as a feature.
    pub turnover_feature: f64,
    pub probes: Vec<Probe>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone)]
pub struct LabelStage {
    pub summary: LabelSummary,
    pub run: LabelRun,
}

/// One method executed over a split: chained trajectory per SKU and the
/// decision taken at every epoch start.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: Method,
    pub outcomes: Vec<SimOutcome>,
    pub decisions: Vec<DecisionRow>,
}

/// Trained artifacts consumed by the evaluation stage.
#[derive(Debug, Clone, Copy, Default)]
pub struct Models<'a> {
    pub labels: Option<&'a LabelSummary>,
    pub pretrained: Option<&'a PolicyNet>,
    pub finetuned: Option<&'a PolicyNet>,
}

/// A resolved configuration bound to its demand panel.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub panel: DemandPanel,
}

impl Experiment {
    /// Validates `config`, derives component seeds and loads or generates
    /// the panel.
    pub fn new(config: &ExperimentConfig) -> Result<Experiment, EvalError> {
        config.validate()?;
        let cfg = config.resolved();
        let panel = match &cfg.panel.dir {
            Some(dir) => load_panel(dir).map_err(stage("gen"))?,
            None => generate_panel(&cfg.panel.scenario).map_err(stage("gen"))?,
        };
        Experiment::with_panel(cfg, panel)
    }

    /// Binds an already resolved configuration to a panel.
    pub fn with_panel(config: ExperimentConfig, panel: DemandPanel) -> Result<Experiment, EvalError> {
        config.validate()?;
        panel.validate().map_err(stage("gen"))?;
        let horizon = panel.demand.first().map_or(0, Vec::len);
        if config.splits.test.1 > horizon {
            return Err(EvalError::Config(format!(
                "test split ends at day {} but the panel has {horizon} days",
                config.splits.test.1
            )));
        }
        Ok(Experiment { config, panel })
    }

    pub fn grouping(&self) -> Grouping {
        match self.config.labeling.granularity {
            Granularity::Category => Grouping::by_category(&self.panel),
            Granularity::Sku => Grouping::per_sku(&self.panel),
        }
    }

    pub fn plan(&self, window: Range<usize>) -> LabelingPlan<'_> {
        let l = &self.config.labeling;
        LabelingPlan {
            panel: &self.panel,
            window,
            grid: self.config.grid,
            sim: self.config.sim.clone(),
            grouping: self.grouping(),
            epoch_days: l.epoch_days,
            basis: l.basis,
            solver: l.solver,
            solver_options: l.solver_options,
            epoch_start: l.epoch_start,
        }
    }

    /// Parameter table of the first train epoch from the initial states.
    pub fn params(&self) -> Result<ParamTable, EvalError> {
        let train = self.config.splits.train();
        let first = train.start..(train.start + self.config.labeling.epoch_days).min(train.end);
        let plan = self.plan(train);
        let starts = plan.start_states();
        let cfg = self.config.sim.with_horizon(first.len());
        tabulate_parameters(&self.panel, first, &self.config.grid, &cfg, &plan.grouping, plan.basis, Some(&starts))
            .map_err(stage("params"))
    }

    /// Calibrates (or fixes) the loss-budget parameter on the train split
    /// and produces the chained labels.
    pub fn labels(&self) -> Result<LabelStage, EvalError> {
        let l = &self.config.labeling;
        let plan = self.plan(self.config.splits.train());
        let err = stage("labels");
        let (summary, run) = match l.alpha {
            Some(alpha) => {
                let run = generate_labels(&plan, alpha).map_err(&err)?;
                let achieved = run.metrics.turnover_days;
                let feature = achieved.unwrap_or(l.target_turnover);
                let s = LabelSummary {
                    alpha,
                    calibrated: false,
                    achieved_turnover: achieved,
                    turnover_feature: feature,
                    probes: vec![Probe { alpha, turnover: achieved }],
                    warning: None,
                };
                (s, run)
            }
            None => {
                let c = calibrate_alpha(&plan, l.target_turnover, l.tolerance, &l.calibration).map_err(&err)?;
                if let Some(w) = &c.warning {
                    log::warn!("calibration: {w}");
                }
                let s = LabelSummary {
                    alpha: c.alpha,
                    calibrated: true,
                    achieved_turnover: c.achieved_turnover,
                    turnover_feature: l.target_turnover,
                    probes: c.probes,
                    warning: c.warning,
                };
                (s, c.run)
            }
        };
        Ok(LabelStage { summary, run })
    }

    /// Rebuilds the train-split trajectory under stored labels.
    pub fn replay_train_labels(&self, labels: &LabelSet, summary: LabelSummary) -> Result<LabelStage, EvalError> {
        let plan = self.plan(self.config.splits.train());
        let run = replay_labels(&plan, labels).map_err(stage("labels"))?;
        Ok(LabelStage { summary, run })
    }

    /// One example per SKU and train epoch, featurized from the labeled
    /// trajectory's state at the epoch start.
    pub fn examples(&self, labels: &LabelStage) -> Vec<Example> {
        let run = &labels.run;
        let fc = &self.config.features;
        let mut out = Vec::new();
        for (e, &day) in run.epoch_starts.iter().enumerate() {
            for i in 0..self.panel.n_skus() {
                let pos = run.epoch_states[e][i].position();
                let features = build_features(&self.panel, i, day, pos, labels.summary.turnover_feature, fc);
                let target = forecast_target(&self.panel, i, day, fc).unwrap_or(features.stream_sales[0]);
                out.push(Example { features, label: run.sku_days[i][e], forecast_target: target });
            }
        }
        out
    }

    pub fn pretrain(&self, labels: &LabelStage) -> Result<(PolicyNet, Vec<TrainLogRow>), EvalError> {
        let data = self.examples(labels);
        let rows: Vec<_> = data.iter().map(|x| x.features.clone()).collect();
        let mut net = PolicyNet::new(self.config.net, self.config.features, Standardizer::fit(&rows));
        let log = pretrain(&mut net, &data, &self.config.schedule).map_err(stage("pretrain"))?;
        Ok((net, log))
    }

    /// Reference decisions for fine-tuning together with the trajectory
    /// whose states seed the prompts.
    pub fn reference(&self, labels: &LabelStage) -> Result<(ReferenceSource, LabelRun), EvalError> {
        match (self.config.reference, &self.config.expert_labels) {
            (ReferenceKind::ExpertLabels, Some(path)) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| EvalError::Io { path: path.display().to_string(), source: e })?;
                let set = LabelSet::parse_csv(text.as_bytes(), &self.config.grid)
                    .map_err(|e| EvalError::Stage { stage: "finetune", cause: format!("{}: {e}", path.display()) })?;
                let run = replay_labels(&self.plan(self.config.splits.train()), &set).map_err(stage("finetune"))?;
                Ok((ReferenceSource::from_labels(ReferenceKind::ExpertLabels, &set), run))
            }
            _ => Ok((ReferenceSource::from_labels(ReferenceKind::OrLabels, &labels.run.labels), labels.run.clone())),
        }
    }

    pub fn prompts(&self, source: &ReferenceSource, run: &LabelRun, turnover_feature: f64) -> Result<Vec<Prompt>, EvalError> {
        let grouping = self.grouping();
        let end = self.config.splits.train.1;
        let mut out = Vec::new();
        for (e, &day) in run.epoch_starts.iter().enumerate() {
            for i in 0..self.panel.n_skus() {
                let group = &grouping.group_ids[grouping.sku_group[i]];
                let (a_star, prior) = source.resolve(group, day).ok_or_else(|| EvalError::Stage {
                    stage: "finetune",
                    cause: format!("no reference label for group {group} at day {day}"),
                })?;
                let start = run.epoch_states[e][i].clone();
                let features = build_features(&self.panel, i, day, start.position(), turnover_feature, &self.config.features);
                out.push(Prompt { features, sku: i, day, start, a_star, prior, horizon_end: end });
            }
        }
        Ok(out)
    }

    /// Total cost of `net` on the validation split, in currency units.
    pub fn validation_cost(&self, net: &PolicyNet, turnover_feature: f64) -> Result<f64, EvalError> {
        let r = self.run_net(Method::OrprFinetuned, net, self.config.splits.validation(), turnover_feature)?;
        Ok(r.outcomes.iter().map(|o| (o.stock_value + o.lost_sales_value).as_units()).sum())
    }

    /// RLOO fine-tuning from the pretrained policy, which is also the
    /// frozen reference; the best validation checkpoint is returned.
    pub fn finetune(&self, pretrained: &PolicyNet, labels: &LabelStage) -> Result<FinetuneResult, EvalError> {
        let feature = labels.summary.turnover_feature;
        let (source, run) = self.reference(labels)?;
        let prompts = self.prompts(&source, &run, feature)?;
        let env = RewardEnv::new(&self.panel, self.config.sim.clone(), self.config.reward).map_err(stage("finetune"))?;
        let validator = |net: &PolicyNet| {
            self.validation_cost(net, feature).map_err(|e| crate::rloo::RlooError::Config(e.to_string()))
        };
        let result = finetune(pretrained, pretrained, &prompts, &env, &self.config.finetune, Some(&validator))
            .map_err(stage("finetune"))?;
        if env.skipped() > 0 {
            log::warn!("{} rollouts ran past the train split and scored no simulation reward", env.skipped());
        }
        Ok(result)
    }

    fn epochs(&self, window: &Range<usize>) -> Vec<Range<usize>> {
        epoch_ranges(window.clone(), self.config.labeling.epoch_days)
    }

    /// Greedy network decisions at every epoch start, chained per SKU.
    pub fn run_net(&self, method: Method, net: &PolicyNet, window: Range<usize>, turnover_feature: f64) -> Result<MethodRun, EvalError> {
        let epochs = self.epochs(&window);
        let sim = &self.config.sim;
        let per_sku = (0..self.panel.n_skus())
            .into_par_iter()
            .map(|i| -> Result<(SimOutcome, Vec<DecisionRow>), EvalError> {
                let sku = &self.panel.skus[i];
                let start = initial_state(&DemandTrace::from_panel(&self.panel, i, window.clone()), sim);
                let mut rows = Vec::with_capacity(epochs.len());
                let mut net_err = None;
                let out = chain_epochs(&epochs, &start, |_, range, state| {
                    let f = build_features(&self.panel, i, range.start, state.position(), turnover_feature, &net.features);
                    let v = net.greedy_days(&f).map_err(|e| {
                        net_err = Some(e.to_string());
                        crate::sim::SimError::Domain("policy evaluation failed".into())
                    })?;
                    rows.push(DecisionRow::days(&sku.sku_id, range.start, method, v));
                    let trace = DemandTrace::from_panel(&self.panel, i, range.clone());
                    evaluate_from(&trace, sku, v, &sim.with_horizon(range.len()), state)
                });
                let out = out.map_err(|e| EvalError::Stage {
                    stage: "eval",
                    cause: format!("{method} on sku {}: {}", sku.sku_id, net_err.clone().unwrap_or(e.to_string())),
                })?;
                Ok((out, rows))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(collect(method, per_sku))
    }

    /// Base-stock rule re-estimated on every review day.
    pub fn run_baseline(&self, method: BaselineMethod, window: Range<usize>) -> Result<MethodRun, EvalError> {
        let m = Method::Baseline(method);
        let epochs = self.epochs(&window);
        let sim = &self.config.sim;
        let per_sku = (0..self.panel.n_skus())
            .into_par_iter()
            .map(|i| -> Result<(SimOutcome, Vec<DecisionRow>), EvalError> {
                let sku = &self.panel.skus[i];
                let start = initial_state(&DemandTrace::from_panel(&self.panel, i, window.clone()), sim);
                let mut rows = Vec::with_capacity(epochs.len());
                let out = chain_epochs(&epochs, &start, |_, range, state| {
                    let trace = DemandTrace::from_panel(&self.panel, i, range.clone());
                    let mut rule = BaseStockRule::new(method, sku, self.config.baseline_window);
                    let o = run_rule(&trace, sku, &sim.with_horizon(range.len()), state, &mut rule)?;
                    rows.push(DecisionRow::level(&sku.sku_id, range.start, m, rule.last_level));
                    Ok(o)
                })
                .map_err(|e| EvalError::Stage { stage: "eval", cause: format!("{m} on sku {}: {e}", sku.sku_id) })?;
                Ok((out, rows))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(collect(m, per_sku))
    }

    /// Hindsight labels solved on `window` itself at the calibrated alpha,
    /// then executed as one continuous trajectory.
    pub fn run_or(&self, alpha: f64, window: Range<usize>) -> Result<MethodRun, EvalError> {
        let mut plan = self.plan(window);
        let solved = generate_labels(&plan, alpha).map_err(stage("eval"))?;
        plan.epoch_start = EpochStart::Chained;
        let run = replay_labels(&plan, &solved.labels).map_err(stage("eval"))?;
        let mut decisions = Vec::new();
        for (i, sku) in self.panel.skus.iter().enumerate() {
            for (e, &day) in run.epoch_starts.iter().enumerate() {
                decisions.push(DecisionRow::days(&sku.sku_id, day, Method::Or, run.sku_days[i][e]));
            }
        }
        Ok(MethodRun { method: Method::Or, outcomes: run.outcomes, decisions })
    }

    /// Runs every configured method on the test split.
    pub fn evaluate(&self, models: Models<'_>) -> Result<Report, EvalError> {
        let test = self.config.splits.test();
        let missing = |what: &str| EvalError::Stage { stage: "eval", cause: format!("{what} is required but missing") };
        let runs = self
            .config
            .methods
            .par_iter()
            .map(|&m| match m {
                Method::Or => self.run_or(models.labels.ok_or_else(|| missing("label summary"))?.alpha, test.clone()),
                Method::Baseline(b) => self.run_baseline(b, test.clone()),
                Method::DlPretrain | Method::OrprFinetuned => {
                    let net = if m == Method::DlPretrain { models.pretrained } else { models.finetuned };
                    let net = net.ok_or_else(|| missing(&format!("{m} model")))?;
                    let feature = models.labels.ok_or_else(|| missing("label summary"))?.turnover_feature;
                    self.run_net(m, net, test.clone(), feature)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        build_report(self, &runs)
    }
}

fn collect(method: Method, per_sku: Vec<(SimOutcome, Vec<DecisionRow>)>) -> MethodRun {
    let mut outcomes = Vec::with_capacity(per_sku.len());
    let mut decisions = Vec::new();
    for (o, d) in per_sku {
        outcomes.push(o);
        decisions.extend(d);
    }
    MethodRun { method, outcomes, decisions }
}
