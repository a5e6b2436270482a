//! Variable importance, odds ratios, partial effects, and the one-term
//! logistic probe for joint-category effects of an interaction.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::boost::{BoostFit, FittedTerm};
use crate::data::{encode_outcome, DatasetSchema, DesignMatrix, RawTable, VariableKind};
use crate::error::{Error, Result};
use crate::learner::LearnerKind;
use crate::loss::LossFamily;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub learner: String,
    pub kind: LearnerKind,
    /// Summed risk reduction over the steps that selected this learner.
    pub absolute: f64,
    /// Share of the total reduction.
    pub relative: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub rows: Vec<ImportanceRow>,
}

impl ImportanceTable {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, learner: &str) -> Option<&ImportanceRow> {
        self.rows.iter().find(|r| r.learner == learner)
    }

    /// Rows by decreasing relative importance, ties in model order.
    pub fn ranked(&self) -> Vec<&ImportanceRow> {
        let mut rows: Vec<&ImportanceRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| b.relative.total_cmp(&a.relative));
        rows
    }

    pub fn top(&self) -> Option<&ImportanceRow> {
        self.ranked().into_iter().find(|r| r.absolute > 0.0)
    }

    pub fn total(&self) -> f64 {
        self.rows.iter().map(|r| r.absolute).sum()
    }
}

/// Risk reduction credited to each learner along the whole selection path.
pub fn importance(fit: &BoostFit) -> ImportanceTable {
    importance_filtered(fit, |_| true)
}

/// Importance restricted to the steps of one stage of a K-step fit.
pub fn importance_for_stage(fit: &BoostFit, stage: usize) -> ImportanceTable {
    importance_filtered(fit, |s| s == stage)
}

fn importance_filtered(fit: &BoostFit, keep_stage: impl Fn(usize) -> bool) -> ImportanceTable {
    let mut reduction: HashMap<&str, f64> = HashMap::new();
    let mut before = fit.initial_risk;
    let mut any = false;
    for step in &fit.selection_path {
        if keep_stage(step.stage) {
            *reduction.entry(step.learner.as_str()).or_default() += before - step.risk_after;
            any = true;
        }
        before = step.risk_after;
    }
    if !any {
        return ImportanceTable::default();
    }
    let total: f64 = reduction.values().sum();
    let rows = fit
        .terms
        .iter()
        .map(|t| {
            let absolute = reduction.get(t.id.as_str()).copied().unwrap_or(0.0);
            ImportanceRow {
                learner: t.id.clone(),
                kind: t.kind,
                absolute,
                relative: if total > 0.0 { absolute / total } else { 0.0 },
            }
        })
        .collect();
    ImportanceTable { rows }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsRatio {
    pub learner: String,
    pub column: String,
    pub coefficient: f64,
    pub odds_ratio: f64,
}

/// `exp(coefficient)` per encoded column. Centering shifts only the
/// intercept, so the coefficient is also the effect of a unit change on the
/// uncentered column (a 0 → 1 category contrast for indicators).
pub fn odds_ratios(fit: &BoostFit) -> Vec<OddsRatio> {
    fit.terms
        .iter()
        .flat_map(|t| {
            t.column_labels.iter().zip(&t.coef).map(move |(label, &b)| OddsRatio {
                learner: t.id.clone(),
                column: label.clone(),
                coefficient: b,
                odds_ratio: b.exp(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub label: String,
    /// Uncentered values of the learner's columns.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialEffectRow {
    pub point: GridPoint,
    pub contribution: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialEffectGrid {
    pub learner: String,
    /// Mean over rows of the summed contributions of all other learners.
    pub others_mean: f64,
    pub rows: Vec<PartialEffectRow>,
}

fn find_term<'f>(fit: &'f BoostFit, learner: &str) -> Result<&'f FittedTerm> {
    fit.term(learner)
        .ok_or_else(|| Error::UnknownLearner(learner.to_string()))
}

/// Reference point plus one point per column. Indicator columns switch from
/// 0 to 1; continuous columns sit at their center or one unit above it.
pub fn default_grid(fit: &BoostFit, learner: &str) -> Result<Vec<GridPoint>> {
    let term = find_term(fit, learner)?;
    let continuous: Vec<bool> = term
        .column_labels
        .iter()
        .map(|l| !l.contains('='))
        .collect();
    let base: Vec<f64> = continuous
        .iter()
        .zip(&term.centers)
        .map(|(&c, &center)| if c { center } else { 0.0 })
        .collect();
    let mut grid = vec![GridPoint {
        label: "reference".into(),
        values: base.clone(),
    }];
    for (k, label) in term.column_labels.iter().enumerate() {
        let mut values = base.clone();
        values[k] += 1.0;
        grid.push(GridPoint {
            label: if continuous[k] {
                format!("{label}+1")
            } else {
                label.clone()
            },
            values,
        });
    }
    Ok(grid)
}

/// Probabilities across `grid` for one learner with all other learners held
/// at their average contribution over the rows of `design`.
pub fn partial_effects(
    fit: &BoostFit,
    design: &DesignMatrix,
    learner: &str,
    grid: &[GridPoint],
) -> Result<PartialEffectGrid> {
    let term = find_term(fit, learner)?;
    let eta = fit.linear_predictor(design)?;
    let own = fit.term_contribution(term, design);
    let others_mean = if design.n() == 0 {
        0.0
    } else {
        (eta - own).mean() - fit.offset
    };
    let rows = grid
        .iter()
        .map(|point| {
            if point.values.len() != term.columns.len() {
                return Err(Error::ColumnMismatch(format!(
                    "grid point `{}` has {} values, learner `{learner}` has {} columns",
                    point.label,
                    point.values.len(),
                    term.columns.len()
                )));
            }
            let contribution = term.contribution_at(&point.values);
            Ok(PartialEffectRow {
                point: point.clone(),
                contribution,
                probability: fit.family.link(fit.offset + others_mean + contribution),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PartialEffectGrid {
        learner: learner.to_string(),
        others_mean,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    /// Include both main effects next to the product term.
    pub main_effects: bool,
    pub max_iter: usize,
    /// Relative change in deviance that counts as converged.
    pub tolerance: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            main_effects: true,
            max_iter: 50,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeCell {
    pub moderator_category: String,
    pub partner_category: String,
    pub n: usize,
    pub positives: usize,
    /// Fitted probability; `None` when the stratum's fit did not converge.
    pub probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumProbe {
    pub stratum: String,
    pub converged: bool,
    pub message: Option<String>,
    pub cells: Vec<ProbeCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub moderator: String,
    pub partner: String,
    pub strata: Vec<StratumProbe>,
}

pub const POOLED: &str = "pooled";

/// Unpenalized logistic regression with an intercept, optionally both main
/// effects, and the moderator × partner product, fitted per stratum of
/// `strata_column` and once on all rows.
pub fn interaction_probe(
    schema: &DatasetSchema,
    table: &RawTable,
    moderator: &str,
    partner: &str,
    strata_column: Option<&str>,
    options: &ProbeOptions,
) -> Result<ProbeResult> {
    let mut categories = Vec::new();
    let mut values = Vec::new();
    for name in [moderator, partner] {
        let var = schema
            .variable(name)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variable `{name}`")))?;
        if var.kind == VariableKind::Continuous {
            return Err(Error::InvalidConfig(format!(
                "probe needs categorical variables; `{name}` is continuous"
            )));
        }
        let levels = table
            .column(name)?
            .into_iter()
            .map(|v| {
                var.categories.iter().position(|c| c == v).ok_or_else(|| Error::UnknownCategory {
                    variable: name.to_string(),
                    value: v.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        categories.push(var.categories.clone());
        values.push(levels);
    }
    let y = encode_outcome(schema, table)?;

    let mut strata: Vec<(String, Vec<usize>)> = Vec::new();
    if let Some(col) = strata_column {
        for (i, s) in table.column(col)?.into_iter().enumerate() {
            match strata.iter_mut().find(|(name, _)| name == s) {
                Some((_, rows)) => rows.push(i),
                None => strata.push((s.to_string(), vec![i])),
            }
        }
    }
    strata.push((POOLED.to_string(), (0..table.n_rows()).collect()));

    let strata = strata
        .into_iter()
        .map(|(name, rows)| {
            probe_stratum(
                name,
                &rows,
                (&values[0], &values[1]),
                (categories[0].len(), categories[1].len()),
                (&categories[0], &categories[1]),
                y.labels(),
                options,
            )
        })
        .collect();
    Ok(ProbeResult {
        moderator: moderator.to_string(),
        partner: partner.to_string(),
        strata,
    })
}

fn probe_stratum(
    stratum: String,
    rows: &[usize],
    levels: (&[usize], &[usize]),
    widths: (usize, usize),
    names: (&[String], &[String]),
    y: &[f64],
    options: &ProbeOptions,
) -> StratumProbe {
    let (km, kp) = widths;
    // candidate columns as functions of (moderator level, partner level)
    let mut features: Vec<Box<dyn Fn(usize, usize) -> f64>> = vec![Box::new(|_, _| 1.0)];
    if options.main_effects {
        for a in 1..km {
            features.push(Box::new(move |m, _| (m == a) as u8 as f64));
        }
        for b in 1..kp {
            features.push(Box::new(move |_, p| (p == b) as u8 as f64));
        }
    }
    for a in 1..km {
        for b in 1..kp {
            features.push(Box::new(move |m, p| (m == a && p == b) as u8 as f64));
        }
    }
    let mut counts = vec![(0usize, 0usize); km * kp];
    for &i in rows {
        let cell = &mut counts[levels.0[i] * kp + levels.1[i]];
        cell.0 += 1;
        cell.1 += (y[i] == 1.0) as usize;
    }
    let observed: Vec<(usize, usize)> = (0..km)
        .flat_map(|m| (0..kp).map(move |p| (m, p)))
        .filter(|&(m, p)| counts[m * kp + p].0 > 0)
        .collect();
    // columns that are zero on every observed cell cannot be estimated
    let used: Vec<&Box<dyn Fn(usize, usize) -> f64>> = features
        .iter()
        .filter(|f| observed.iter().any(|&(m, p)| f(m, p) != 0.0))
        .collect();
    let x = DMatrix::from_fn(rows.len(), used.len(), |r, c| {
        used[c](levels.0[rows[r]], levels.1[rows[r]])
    });
    let yv = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i]));

    let fit = logistic_irls(&x, &yv, options.max_iter, options.tolerance);
    let (converged, message, beta) = match fit {
        Ok(beta) => (true, None, Some(beta)),
        Err(e) => (false, Some(e.to_string()), None),
    };
    let cells = observed
        .iter()
        .map(|&(m, p)| {
            let (n, positives) = counts[m * kp + p];
            let probability = beta.as_ref().map(|b| {
                let eta: f64 = used.iter().zip(b.iter()).map(|(f, bj)| f(m, p) * bj).sum();
                LossFamily::BinomialLogit.link(eta)
            });
            ProbeCell {
                moderator_category: names.0[m].clone(),
                partner_category: names.1[p].clone(),
                n,
                positives,
                probability,
            }
        })
        .collect();
    StratumProbe {
        stratum,
        converged,
        message,
        cells,
    }
}

/// Probabilities this close to 0 or 1 indicate (quasi-)separation.
const SEPARATION_EPS: f64 = 1e-8;

/// Maximum-likelihood logistic regression by iteratively reweighted least
/// squares with step halving.
pub fn logistic_irls(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    max_iter: usize,
    tolerance: f64,
) -> Result<DVector<f64>> {
    let family = LossFamily::BinomialLogit;
    let deviance = |beta: &DVector<f64>| -> f64 {
        let eta = x * beta;
        2.0 * family.risk(y.as_slice(), eta.as_slice())
    };
    let mut beta = DVector::zeros(x.ncols());
    let mut dev = deviance(&beta);
    for _ in 0..max_iter {
        let eta = x * &beta;
        let mu: DVector<f64> = eta.map(|e| family.link(e));
        let w: DVector<f64> = mu.map(|m| m * (1.0 - m));
        let score = x.tr_mul(&(y - &mu));
        let mut info = DMatrix::zeros(x.ncols(), x.ncols());
        for (r, &wr) in w.iter().enumerate() {
            let row = x.row(r);
            info += row.transpose() * row * wr;
        }
        let step = info
            .cholesky()
            .ok_or_else(|| Error::NonConvergence("singular information matrix".into()))?
            .solve(&score);
        let mut scale = 1.0;
        let mut candidate = &beta + &step;
        let mut new_dev = deviance(&candidate);
        while new_dev > dev && scale > 1e-6 {
            scale *= 0.5;
            candidate = &beta + &step * scale;
            new_dev = deviance(&candidate);
        }
        let change = (dev - new_dev).abs();
        beta = candidate;
        dev = new_dev;
        if change <= tolerance * (dev.abs() + 0.1) {
            let eta = x * &beta;
            if eta.iter().any(|&e| {
                let p = family.link(e);
                !(SEPARATION_EPS..=1.0 - SEPARATION_EPS).contains(&p)
            }) {
                return Err(Error::NonConvergence(
                    "fitted probabilities at 0 or 1 (separation)".into(),
                ));
            }
            return Ok(beta);
        }
    }
    Err(Error::NonConvergence(format!(
        "no convergence within {max_iter} iterations"
    )))
}
