//! Synthetic binary survey-style data with planted main, group-latent and
//! interaction effects.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetSchema, OutcomeSpec, RawTable, VariableSpec};
use crate::error::{Error, Result};
use crate::learner::LearnerKind;
use crate::loss::LossFamily;
use crate::pipeline::{fit_model, ModelKind, RunConfig};
use crate::rng::{stream_rng, STREAM_SYNTH};

pub const OUTCOME: &str = "y";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthVariable {
    pub name: String,
    pub group: String,
    pub moderator: bool,
    /// Marginal probability of a 1 when the variable does not copy its
    /// group's latent bit.
    pub p_one: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub variables: Vec<SynthVariable>,
    pub intercept: f64,
    pub beta_main: BTreeMap<String, f64>,
    /// (moderator, partner, coefficient) on the product of the 0/1 values.
    pub beta_interaction: Vec<(String, String, f64)>,
    /// Effect of each group's latent bit on the linear predictor.
    pub beta_latent: BTreeMap<String, f64>,
    /// Probability that a variable copies its group's latent bit instead of
    /// drawing independently. 0 gives independent predictors.
    pub latent_share: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// `p_vars` binary variables `x1..`, in groups of `group_size`, the
    /// first `n_moderators` flagged as moderators; all effects zero.
    pub fn blank(p_vars: usize, group_size: usize, n_moderators: usize, n: usize, seed: u64) -> Self {
        let variables = (0..p_vars)
            .map(|j| SynthVariable {
                name: format!("x{}", j + 1),
                group: format!("g{}", j / group_size.max(1) + 1),
                moderator: j < n_moderators,
                p_one: 0.5,
            })
            .collect();
        SynthSpec {
            n,
            variables,
            intercept: 0.0,
            beta_main: BTreeMap::new(),
            beta_interaction: Vec::new(),
            beta_latent: BTreeMap::new(),
            latent_share: 0.0,
            seed,
        }
    }

    /// A planted moderator × partner effect with no main effects on the
    /// linear predictor: `x1` (a moderator) with `x5`.
    pub fn pure_interaction(n: usize, beta: f64, seed: u64) -> Self {
        let mut spec = Self::blank(10, 5, 3, n, seed);
        spec.beta_interaction.push(("x1".into(), "x5".into(), beta));
        spec.intercept = -0.25 * beta;
        spec
    }

    /// Main effects only, on the first `effects.len()` variables.
    pub fn main_effects(
        p_vars: usize,
        n_moderators: usize,
        n: usize,
        effects: &[f64],
        seed: u64,
    ) -> Self {
        let mut spec = Self::blank(p_vars, 5, n_moderators, n, seed);
        for (j, &b) in effects.iter().enumerate() {
            spec.beta_main.insert(format!("x{}", j + 1), b);
        }
        spec.intercept = -0.5 * effects.iter().sum::<f64>();
        spec
    }

    /// Outcome driven by unobserved group factors that every item of the
    /// group measures with noise.
    pub fn latent_groups(
        n_groups: usize,
        group_size: usize,
        latent_effects: &[f64],
        latent_share: f64,
        n: usize,
        seed: u64,
    ) -> Self {
        let mut spec = Self::blank(n_groups * group_size, group_size, 0, n, seed);
        for (g, &b) in latent_effects.iter().enumerate() {
            spec.beta_latent.insert(format!("g{}", g + 1), b);
        }
        spec.latent_share = latent_share;
        spec.intercept = -0.5 * latent_effects.iter().sum::<f64>();
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n < 1 {
            return bad("synthetic data needs n >= 1".into());
        }
        let has = |name: &str| self.variables.iter().any(|v| v.name == name);
        for (name, b) in &self.beta_main {
            if !has(name) {
                return bad(format!("main effect on unknown variable `{name}`"));
            }
            if !b.is_finite() {
                return bad(format!("non-finite coefficient on `{name}`"));
            }
        }
        for (m, p, b) in &self.beta_interaction {
            if !has(m) || !has(p) || m == p {
                return bad(format!("invalid interaction `{m}:{p}`"));
            }
            if !b.is_finite() {
                return bad(format!("non-finite coefficient on `{m}:{p}`"));
            }
        }
        for (g, b) in &self.beta_latent {
            if !self.variables.iter().any(|v| v.group == *g) || !b.is_finite() {
                return bad(format!("invalid latent effect on group `{g}`"));
            }
        }
        if !(0.0..=1.0).contains(&self.latent_share) || !self.intercept.is_finite() {
            return bad("latent share must lie in [0, 1] and the intercept be finite".into());
        }
        if self.variables.iter().any(|v| !(0.0..=1.0).contains(&v.p_one)) {
            return bad("marginal probabilities must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub fn schema(&self) -> Result<DatasetSchema> {
        DatasetSchema::new(
            OutcomeSpec {
                name: OUTCOME.into(),
                positive: "1".into(),
                negative: "0".into(),
                positive_meaning: None,
            },
            self.variables
                .iter()
                .map(|v| VariableSpec::binary(&v.name, &v.group, v.moderator))
                .collect(),
        )
    }

    fn groups(&self) -> Vec<String> {
        let mut groups: Vec<String> = Vec::new();
        for v in &self.variables {
            if !groups.contains(&v.group) {
                groups.push(v.group.clone());
            }
        }
        groups
    }

    fn linear_predictor(&self, x: &BTreeMap<String, f64>, latent: &BTreeMap<String, f64>) -> f64 {
        let mut eta = self.intercept;
        for (name, b) in &self.beta_main {
            eta += b * x[name];
        }
        for (m, p, b) in &self.beta_interaction {
            eta += b * x[m] * x[p];
        }
        for (g, b) in &self.beta_latent {
            eta += b * latent[g];
        }
        eta
    }
}

/// What was planted, with the true success probability of every row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    pub spec: SynthSpec,
    pub probabilities: Vec<f64>,
}

impl TrueModel {
    pub fn prevalence(&self) -> f64 {
        self.probabilities.iter().sum::<f64>() / self.probabilities.len() as f64
    }

    /// Exact population prevalence by enumerating the variables and latent
    /// bits that enter the linear predictor. `None` beyond 24 of them.
    pub fn marginal_prevalence(&self) -> Option<f64> {
        let spec = &self.spec;
        let vars: Vec<&SynthVariable> = spec
            .variables
            .iter()
            .filter(|v| {
                spec.beta_main.get(&v.name).is_some_and(|&b| b != 0.0)
                    || spec
                        .beta_interaction
                        .iter()
                        .any(|(m, p, b)| *b != 0.0 && (*m == v.name || *p == v.name))
            })
            .collect();
        let mut groups: Vec<String> = spec
            .beta_latent
            .iter()
            .filter(|(_, &b)| b != 0.0)
            .map(|(g, _)| g.clone())
            .collect();
        if spec.latent_share > 0.0 {
            for v in &vars {
                if !groups.contains(&v.group) {
                    groups.push(v.group.clone());
                }
            }
        }
        let bits = vars.len() + groups.len();
        if bits > 24 {
            return None;
        }
        let link = LossFamily::BinomialLogit;
        let mut total = 0.0;
        let mut x: BTreeMap<String, f64> =
            spec.variables.iter().map(|v| (v.name.clone(), 0.0)).collect();
        let mut latent: BTreeMap<String, f64> =
            spec.groups().into_iter().map(|g| (g, 0.0)).collect();
        for state in 0u32..(1 << bits) {
            let mut weight = 1.0;
            for (k, g) in groups.iter().enumerate() {
                latent.insert(g.clone(), ((state >> (vars.len() + k)) & 1) as f64);
                weight *= 0.5;
            }
            for (k, v) in vars.iter().enumerate() {
                let bit = ((state >> k) & 1) as f64;
                let p1 = spec.latent_share * latent[&v.group] + (1.0 - spec.latent_share) * v.p_one;
                weight *= if bit == 1.0 { p1 } else { 1.0 - p1 };
                x.insert(v.name.clone(), bit);
            }
            total += weight * link.link(spec.linear_predictor(&x, &latent));
        }
        Some(total)
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub schema: DatasetSchema,
    pub table: RawTable,
    pub truth: TrueModel,
}

/// Draws `spec.n` rows. Per row: one latent bit per group, then each
/// variable copies its group's bit with probability `latent_share` or is
/// Bernoulli(`p_one`), then the outcome is Bernoulli(h(η)).
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let schema = spec.schema()?;
    let mut rng = stream_rng(spec.seed, STREAM_SYNTH);
    let groups = spec.groups();
    let mut headers: Vec<String> = spec.variables.iter().map(|v| v.name.clone()).collect();
    headers.push(OUTCOME.into());
    let mut table = RawTable::new(headers);
    let mut probabilities = Vec::with_capacity(spec.n);
    let link = LossFamily::BinomialLogit;
    for _ in 0..spec.n {
        let latent: BTreeMap<String, f64> = groups
            .iter()
            .map(|g| (g.clone(), rng.random_bool(0.5) as u8 as f64))
            .collect();
        let mut x = BTreeMap::new();
        let mut row = Vec::with_capacity(spec.variables.len() + 1);
        for v in &spec.variables {
            let value = if spec.latent_share > 0.0 && rng.random_bool(spec.latent_share) {
                latent[&v.group]
            } else {
                rng.random_bool(v.p_one) as u8 as f64
            };
            x.insert(v.name.clone(), value);
            row.push(format!("{}", value as u8));
        }
        let p = link.link(spec.linear_predictor(&x, &latent));
        probabilities.push(p);
        row.push(format!("{}", rng.random_bool(p) as u8));
        table.rows.push(row);
    }
    Ok(SynthData {
        schema,
        table,
        truth: TrueModel {
            spec: spec.clone(),
            probabilities,
        },
    })
}

/// Main-effects-only data on which every selected interaction is spurious.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullStudySpec {
    pub p_vars: usize,
    pub n_moderators: usize,
    pub n: usize,
    pub seeds: Vec<u64>,
    /// Main effects, placed on evenly spaced variables starting at `x1`.
    pub effects: Vec<f64>,
    pub m_max: usize,
    pub cv_folds: usize,
}

impl NullStudySpec {
    /// A third of the variables as moderators and four unit main effects of
    /// alternating sign.
    pub fn new(p_vars: usize, n: usize, seeds: Vec<u64>) -> Self {
        NullStudySpec {
            p_vars,
            n_moderators: (p_vars / 3).max(1),
            n,
            seeds,
            effects: vec![1.0, -1.0, 1.0, -1.0],
            m_max: 1000,
            cv_folds: 10,
        }
    }

    pub fn synth_spec(&self, seed: u64) -> SynthSpec {
        let mut spec = SynthSpec::blank(self.p_vars, 5, self.n_moderators, self.n, seed);
        let k = self.effects.len().min(self.p_vars);
        for (i, &b) in self.effects.iter().take(k).enumerate() {
            spec.beta_main.insert(format!("x{}", i * self.p_vars / k + 1), b);
        }
        spec.intercept = -0.5 * self.effects.iter().take(k).sum::<f64>();
        spec
    }

    fn run_config(&self, model: ModelKind, seed: u64) -> RunConfig {
        RunConfig {
            m_max: self.m_max,
            cv_folds: self.cv_folds,
            seed,
            ..RunConfig::new(model)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullStudyRow {
    pub seed: u64,
    /// Distinct interaction learners selected by each model.
    pub mb_int: usize,
    pub two_boost: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullStudyReport {
    pub rows: Vec<NullStudyRow>,
    pub median_mb_int: f64,
    pub median_two_boost: f64,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

/// Fits mb-int and 2-boost per seed and counts the interaction learners each
/// selects.
pub fn null_interaction_study(spec: &NullStudySpec) -> Result<NullStudyReport> {
    if spec.p_vars < 4 {
        return Err(Error::InvalidConfig("the null study needs at least 4 variables".into()));
    }
    let rows = spec
        .seeds
        .par_iter()
        .map(|&seed| {
            let data = generate(&spec.synth_spec(seed))?;
            let count = |model| -> Result<usize> {
                let out = fit_model(&data.schema, &data.table, &spec.run_config(model, seed))?;
                Ok(out.artifact.fit.selected_of_kind(LearnerKind::Interaction).len())
            };
            Ok(NullStudyRow {
                seed,
                mb_int: count(ModelKind::MbInt)?,
                two_boost: count(ModelKind::TwoBoost)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let col = |f: fn(&NullStudyRow) -> usize| median(&rows.iter().map(|r| f(r) as f64).collect::<Vec<_>>());
    Ok(NullStudyReport {
        median_mb_int: col(|r| r.mb_int),
        median_two_boost: col(|r| r.two_boost),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::encode;

    #[test]
    fn null_model_is_balanced() {
        let data = generate(&SynthSpec::blank(4, 2, 1, 10_000, 5)).unwrap();
        let (_, y) = encode(&data.schema, &data.table).unwrap();
        // 4 standard errors of a fair coin at n = 10000
        assert!((y.mean() - 0.5).abs() < 4.0 * 0.005);
        assert_eq!(data.truth.marginal_prevalence(), Some(0.5));
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = SynthSpec::pure_interaction(200, 2.5, 11);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.table, b.table);
        let c = generate(&SynthSpec { seed: 12, ..spec }).unwrap();
        assert_ne!(a.table, c.table);
    }

    #[test]
    fn unknown_names_rejected() {
        let mut spec = SynthSpec::blank(3, 3, 1, 10, 1);
        spec.beta_main.insert("nope".into(), 1.0);
        assert!(generate(&spec).is_err());
        let mut spec = SynthSpec::blank(3, 3, 1, 10, 1);
        spec.beta_interaction.push(("x1".into(), "x1".into(), 1.0));
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn null_study_places_effects_and_is_deterministic() {
        let mut spec = NullStudySpec::new(8, 200, vec![1, 2]);
        spec.m_max = 30;
        spec.cv_folds = 3;
        let s = spec.synth_spec(1);
        let names: Vec<&str> = s.beta_main.keys().map(String::as_str).collect();
        assert_eq!(names, ["x1", "x3", "x5", "x7"]);
        assert!(s.beta_interaction.is_empty());
        let a = null_interaction_study(&spec).unwrap();
        assert_eq!(a, null_interaction_study(&spec).unwrap());
        assert_eq!(a.rows.len(), 2);
        assert!(null_interaction_study(&NullStudySpec::new(3, 100, vec![1])).is_err());
    }

    #[test]
    fn exact_marginal_for_single_effect() {
        let mut spec = SynthSpec::blank(3, 3, 0, 10, 1);
        spec.beta_main.insert("x1".into(), 2.0);
        spec.intercept = -1.0;
        let truth = generate(&spec).unwrap().truth;
        let h = |e: f64| 1.0 / (1.0 + (-e).exp());
        let expected = 0.5 * h(-1.0) + 0.5 * h(1.0);
        assert!((truth.marginal_prevalence().unwrap() - expected).abs() < 1e-15);
    }
}
