//! Functional gradient descent with component-wise learner selection, and
//! its K-step generalization where each stage has its own learner set and
//! continues from the fit of the previous stage.

use std::collections::{HashMap, HashSet};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::{BinaryOutcome, DesignMatrix};
use crate::error::{Error, Result};
use crate::learner::{BaseLearner, LearnerFit, LearnerKind};
use crate::loss::{pseudo_residuals, LossFamily};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffsetMode {
    Zero,
    #[default]
    MeanLink,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    /// Learning rate, strictly inside (0, 1).
    pub eta: f64,
    pub m_stop: usize,
    pub offset_mode: OffsetMode,
    pub family: LossFamily,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            eta: 0.1,
            m_stop: 100,
            offset_mode: OffsetMode::MeanLink,
            family: LossFamily::BinomialLogit,
        }
    }
}

impl BoostConfig {
    pub fn with_m_stop(mut self, m_stop: usize) -> Self {
        self.m_stop = m_stop;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must lie strictly inside (0, 1), got {}",
                self.eta
            )));
        }
        Ok(())
    }
}

/// Initial constant fit: zero, or the link-scale mean of the outcome.
pub fn init_offset(family: LossFamily, y: &BinaryOutcome, mode: OffsetMode) -> Result<f64> {
    match mode {
        OffsetMode::Zero => Ok(0.0),
        OffsetMode::MeanLink => {
            if y.is_empty() || !y.has_both_classes() {
                return Err(Error::DegenerateOutcome);
            }
            Ok(family.inverse_link(y.mean()))
        }
    }
}

/// Accumulated coefficients of one learner in a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedTerm {
    pub id: String,
    pub kind: LearnerKind,
    pub columns: Vec<usize>,
    pub column_labels: Vec<String>,
    /// Centers of the columns on the training design.
    pub centers: Vec<f64>,
    pub coef: Vec<f64>,
    pub lambda: f64,
    pub df_target: f64,
}

impl FittedTerm {
    pub fn is_selected(&self) -> bool {
        self.coef.iter().any(|&c| c != 0.0)
    }

    /// Contribution `Σ coef_j (x_j - center_j)` for uncentered values `x`.
    pub fn contribution_at(&self, raw_values: &[f64]) -> f64 {
        self.coef
            .iter()
            .zip(&self.centers)
            .zip(raw_values)
            .map(|((b, c), x)| b * (x - c))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    /// 1-based iteration counted across all stages.
    pub iteration: usize,
    /// 1-based stage index; single-stage runs use stage 1.
    pub stage: usize,
    pub learner: String,
    pub risk_after: f64,
}

/// The fitted additive model `offset + Σ X_learner · coef(learner)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostFit {
    pub family: LossFamily,
    pub offset: f64,
    /// Risk of the offset-only model on the training data.
    pub initial_risk: f64,
    pub terms: Vec<FittedTerm>,
    pub selection_path: Vec<PathStep>,
    pub total_risk_reduction: f64,
}

impl BoostFit {
    pub fn term(&self, id: &str) -> Option<&FittedTerm> {
        self.terms.iter().find(|t| t.id == id)
    }

    pub fn final_risk(&self) -> f64 {
        self.selection_path
            .last()
            .map_or(self.initial_risk, |s| s.risk_after)
    }

    pub fn n_stages(&self) -> usize {
        self.selection_path.iter().map(|s| s.stage).max().unwrap_or(0)
    }

    /// Distinct learners that were selected at least once, in first-selection order.
    pub fn selected(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.selection_path
            .iter()
            .filter(|s| seen.insert(s.learner.as_str()))
            .map(|s| s.learner.as_str())
            .collect()
    }

    /// Selected learners of one kind, in first-selection order.
    pub fn selected_of_kind(&self, kind: LearnerKind) -> Vec<&str> {
        self.selected()
            .into_iter()
            .filter(|id| self.term(id).is_some_and(|t| t.kind == kind))
            .collect()
    }

    fn check_design(&self, design: &DesignMatrix) -> Result<()> {
        for term in &self.terms {
            for (&j, label) in term.columns.iter().zip(&term.column_labels) {
                match design.columns().get(j) {
                    Some(meta) if meta.label() == *label => {}
                    Some(meta) => {
                        return Err(Error::ColumnMismatch(format!(
                            "column {j} is `{}`, the model expects `{label}`",
                            meta.label()
                        )))
                    }
                    None => {
                        return Err(Error::ColumnMismatch(format!(
                            "design has {} columns, the model uses column {j}",
                            design.p()
                        )))
                    }
                }
            }
        }
        Ok(())
    }

    /// Linear predictor on `design`, centering with the training centers.
    pub fn linear_predictor(&self, design: &DesignMatrix) -> Result<DVector<f64>> {
        self.check_design(design)?;
        let raw = design.raw();
        let mut eta = DVector::from_element(design.n(), self.offset);
        for term in self.terms.iter().filter(|t| t.is_selected()) {
            for ((&j, &b), &c) in term.columns.iter().zip(&term.coef).zip(&term.centers) {
                if b == 0.0 {
                    continue;
                }
                for (e, &x) in eta.iter_mut().zip(raw.column(j).iter()) {
                    *e += b * (x - c);
                }
            }
        }
        Ok(eta)
    }

    /// Per-observation contribution of a single term.
    pub fn term_contribution(&self, term: &FittedTerm, design: &DesignMatrix) -> DVector<f64> {
        let raw = design.raw();
        let mut out = DVector::zeros(design.n());
        for ((&j, &b), &c) in term.columns.iter().zip(&term.coef).zip(&term.centers) {
            for (e, &x) in out.iter_mut().zip(raw.column(j).iter()) {
                *e += b * (x - c);
            }
        }
        out
    }
}

/// Probabilities `h(offset + Σ contributions)` for every row of `design`.
pub fn predict(fit: &BoostFit, design: &DesignMatrix) -> Result<Vec<f64>> {
    let eta = fit.linear_predictor(design)?;
    Ok(eta.iter().map(|&e| fit.family.link(e)).collect())
}

/// Index of the learner with the smallest residual sum of squares against
/// `u`. Ties go to the lowest index.
pub fn select_learner(
    learners: &[BaseLearner],
    design: &DesignMatrix,
    u: &DVector<f64>,
) -> Result<(usize, LearnerFit)> {
    let uu = u.norm_squared();
    let mut best: Option<(usize, LearnerFit)> = None;
    for (i, learner) in learners.iter().enumerate() {
        let fit = learner.fit_with_norm(design, u, uu);
        if best.as_ref().is_none_or(|(_, b)| fit.sse < b.sse) {
            best = Some((i, fit));
        }
    }
    let (idx, fit) =
        best.ok_or_else(|| Error::InvalidConfig("learner set is empty".into()))?;
    if !fit.beta.iter().all(|b| b.is_finite()) {
        return Err(Error::NumericalFailure(format!(
            "non-finite fit for learner `{}`",
            learners[idx].id()
        )));
    }
    Ok((idx, fit))
}

/// Mutable boosting state that stages can be run against in sequence.
pub struct Booster<'a> {
    design: &'a DesignMatrix,
    y: &'a BinaryOutcome,
    family: LossFamily,
    eta: f64,
    offset: f64,
    f: DVector<f64>,
    initial_risk: f64,
    risk: f64,
    terms: Vec<FittedTerm>,
    slots: HashMap<String, usize>,
    path: Vec<PathStep>,
    stage: usize,
}

impl<'a> Booster<'a> {
    pub fn new(design: &'a DesignMatrix, y: &'a BinaryOutcome, config: &BoostConfig) -> Result<Self> {
        config.validate()?;
        let offset = init_offset(config.family, y, config.offset_mode)?;
        Self::with_offset(design, y, config, offset)
    }

    pub fn with_offset(
        design: &'a DesignMatrix,
        y: &'a BinaryOutcome,
        config: &BoostConfig,
        offset: f64,
    ) -> Result<Self> {
        config.validate()?;
        if y.len() != design.n() {
            return Err(Error::ColumnMismatch(format!(
                "outcome has {} entries, design has {} rows",
                y.len(),
                design.n()
            )));
        }
        let f = DVector::from_element(design.n(), offset);
        let risk = config.family.risk(y.labels(), f.as_slice());
        Ok(Booster {
            design,
            y,
            family: config.family,
            eta: config.eta,
            offset,
            f,
            initial_risk: risk,
            risk,
            terms: Vec::new(),
            slots: HashMap::new(),
            path: Vec::new(),
            stage: 0,
        })
    }

    /// Continues boosting from a fitted model, evaluated on `design`: its
    /// offset, terms and path carry over and new stages are numbered after
    /// its last one.
    pub fn continue_from(
        design: &'a DesignMatrix,
        y: &'a BinaryOutcome,
        config: &BoostConfig,
        base: &BoostFit,
    ) -> Result<Self> {
        let mut booster = Self::with_offset(design, y, config, base.offset)?;
        if base.family != config.family {
            return Err(Error::InvalidConfig("loss family differs from the base fit".into()));
        }
        booster.f = base.linear_predictor(design)?;
        booster.risk = config.family.risk(y.labels(), booster.f.as_slice());
        booster.terms = base.terms.clone();
        booster.slots = base
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.id.clone(), i))
            .collect();
        booster.path = base.selection_path.clone();
        booster.stage = base.n_stages();
        Ok(booster)
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn risk(&self) -> f64 {
        self.risk
    }

    /// Current linear predictor on the training rows.
    pub fn fitted(&self) -> &DVector<f64> {
        &self.f
    }

    fn register(&mut self, learners: &[BaseLearner]) -> Result<Vec<usize>> {
        let mut ids = HashSet::new();
        let mut slots = Vec::with_capacity(learners.len());
        for learner in learners {
            if !ids.insert(learner.id()) {
                return Err(Error::InvalidConfig(format!(
                    "learner id `{}` repeated within a stage",
                    learner.id()
                )));
            }
            let slot = match self.slots.get(learner.id()) {
                Some(&slot) => {
                    if self.terms[slot].columns != learner.columns() {
                        return Err(Error::LearnerConflict(learner.id().to_string()));
                    }
                    slot
                }
                None => {
                    let metas = self.design.columns();
                    self.terms.push(FittedTerm {
                        id: learner.id().to_string(),
                        kind: learner.kind(),
                        columns: learner.columns().to_vec(),
                        column_labels: learner.columns().iter().map(|&j| metas[j].label()).collect(),
                        centers: learner.columns().iter().map(|&j| metas[j].center).collect(),
                        coef: vec![0.0; learner.columns().len()],
                        lambda: learner.lambda(),
                        df_target: learner.df_target(),
                    });
                    self.slots.insert(learner.id().to_string(), self.terms.len() - 1);
                    self.terms.len() - 1
                }
            };
            slots.push(slot);
        }
        Ok(slots)
    }

    /// Runs `m` iterations over `learners` as a new stage. `observer` sees
    /// each selected learner with the coefficient increment `η·β` applied.
    pub fn run_stage<F>(&mut self, learners: &[BaseLearner], m: usize, mut observer: F) -> Result<()>
    where
        F: FnMut(&BaseLearner, &DVector<f64>),
    {
        let slots = self.register(learners)?;
        self.stage += 1;
        if m == 0 {
            return Ok(());
        }
        if learners.is_empty() {
            return Err(Error::InvalidConfig(format!("stage {} has no learners", self.stage)));
        }
        for _ in 0..m {
            let u = pseudo_residuals(self.family, self.y, &self.f);
            let (best, fit) = select_learner(learners, self.design, &u)?;
            let learner = &learners[best];
            let step = fit.beta * self.eta;
            let term = &mut self.terms[slots[best]];
            for (c, s) in term.coef.iter_mut().zip(step.iter()) {
                *c += s;
            }
            self.f += learner.contribution(self.design, &step);
            self.risk = self.family.risk(self.y.labels(), self.f.as_slice());
            if !self.risk.is_finite() {
                return Err(Error::NumericalFailure("risk became non-finite".into()));
            }
            self.path.push(PathStep {
                iteration: self.path.len() + 1,
                stage: self.stage,
                learner: learner.id().to_string(),
                risk_after: self.risk,
            });
            observer(learner, &step);
        }
        Ok(())
    }

    /// The model fitted so far.
    pub fn snapshot(&self) -> BoostFit {
        BoostFit {
            family: self.family,
            offset: self.offset,
            initial_risk: self.initial_risk,
            total_risk_reduction: self.initial_risk - self.risk,
            terms: self.terms.clone(),
            selection_path: self.path.clone(),
        }
    }

    pub fn finish(self) -> BoostFit {
        BoostFit {
            family: self.family,
            offset: self.offset,
            initial_risk: self.initial_risk,
            total_risk_reduction: self.initial_risk - self.risk,
            terms: self.terms,
            selection_path: self.path,
        }
    }
}

/// Single-stage boosting for `config.m_stop` iterations.
pub fn boost(
    design: &DesignMatrix,
    y: &BinaryOutcome,
    learners: &[BaseLearner],
    config: &BoostConfig,
) -> Result<BoostFit> {
    let mut booster = Booster::new(design, y, config)?;
    booster.run_stage(learners, config.m_stop, |_, _| {})?;
    Ok(booster.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageBudget {
    Fixed(usize),
    /// Tuned by cross-validation up to `m_max` iterations.
    CrossValidated { m_max: usize },
}

#[derive(Debug, Clone)]
pub struct Stage {
    pub name: String,
    pub learners: Vec<BaseLearner>,
    pub budget: StageBudget,
}

/// Ordered learner sets with per-stage iteration budgets.
#[derive(Debug, Clone)]
pub struct StagePlan {
    pub stages: Vec<Stage>,
}

impl StagePlan {
    pub fn new(stages: Vec<Stage>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::InvalidConfig("a stage plan needs at least one stage".into()));
        }
        for stage in &stages {
            let mut ids = HashSet::new();
            if let Some(dup) = stage.learners.iter().find(|l| !ids.insert(l.id())) {
                return Err(Error::InvalidConfig(format!(
                    "learner id `{}` repeated in stage `{}`",
                    dup.id(),
                    stage.name
                )));
            }
        }
        Ok(StagePlan { stages })
    }

    pub fn single(learners: Vec<BaseLearner>, budget: StageBudget) -> Self {
        StagePlan {
            stages: vec![Stage {
                name: "main".into(),
                learners,
                budget,
            }],
        }
    }

    pub fn fixed_budgets(&self) -> Result<Vec<usize>> {
        self.stages
            .iter()
            .enumerate()
            .map(|(k, s)| match s.budget {
                StageBudget::Fixed(m) => Ok(m),
                StageBudget::CrossValidated { .. } => Err(Error::UnresolvedBudget(k + 1)),
            })
            .collect()
    }
}

/// Runs the stages in order; each starts from the fit left by the previous
/// one. `config.m_stop` is ignored in favour of the stage budgets.
pub fn k_step_boost(
    design: &DesignMatrix,
    y: &BinaryOutcome,
    plan: &StagePlan,
    config: &BoostConfig,
) -> Result<BoostFit> {
    let budgets = plan.fixed_budgets()?;
    let mut booster = Booster::new(design, y, config)?;
    for (stage, m) in plan.stages.iter().zip(budgets) {
        booster.run_stage(&stage.learners, m, |_, _| {})?;
    }
    Ok(booster.finish())
}
