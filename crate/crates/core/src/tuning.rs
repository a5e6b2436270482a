//! Train/test splitting, cross-validated early stopping, and ROC analysis.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boost::{BoostConfig, BoostFit, Booster, OffsetMode, StageBudget, StagePlan};
use crate::data::{BinaryOutcome, DesignMatrix};
use crate::error::{Error, Result};
use crate::learner::BaseLearner;
use crate::rng::{stream_rng, STREAM_FOLDS, STREAM_SPLIT};

const MIN_SPLIT_ROWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.7,
            seed: 1,
            stratified: true,
        }
    }
}

fn class_indices(y: &BinaryOutcome) -> [Vec<usize>; 2] {
    let mut classes = [Vec::new(), Vec::new()];
    for (i, &v) in y.labels().iter().enumerate() {
        classes[(v == 1.0) as usize].push(i);
    }
    classes
}

/// Splits rows into (train, test), both sorted. Stratified splits take the
/// floor of `fraction · n_c` per class and hand the rows still needed to
/// reach `round(fraction · n)` to the classes with the largest fractional
/// parts, one each.
pub fn split(y: &BinaryOutcome, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = y.len();
    if n < MIN_SPLIT_ROWS {
        return Err(Error::TooFewObservations {
            needed: MIN_SPLIT_ROWS,
            got: n,
        });
    }
    let frac = spec.train_fraction;
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction must lie strictly inside (0, 1), got {frac}"
        )));
    }
    let mut rng = stream_rng(spec.seed, STREAM_SPLIT);
    let target = (frac * n as f64).round() as usize;
    let mut train = Vec::with_capacity(target);
    let mut test = Vec::with_capacity(n - target);
    if spec.stratified {
        let mut classes = class_indices(y);
        let exact: Vec<f64> = classes.iter().map(|c| frac * c.len() as f64).collect();
        let mut take: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut remainder = target.saturating_sub(take.iter().sum());
        let mut order = [0usize, 1];
        order.sort_by(|&a, &b| {
            let fa = exact[a] - exact[a].floor();
            let fb = exact[b] - exact[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &c in &order {
            if remainder > 0 && take[c] < classes[c].len() {
                take[c] += 1;
                remainder -= 1;
            }
        }
        for (c, rows) in classes.iter_mut().enumerate() {
            rows.shuffle(&mut rng);
            train.extend_from_slice(&rows[..take[c]]);
            test.extend_from_slice(&rows[take[c]..]);
        }
    } else {
        let mut rows: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut rng);
        train.extend_from_slice(&rows[..target]);
        test.extend_from_slice(&rows[target..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "train fraction {frac} leaves an empty side for {n} rows"
        )));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Fold id per row. Classes are shuffled separately and dealt round-robin,
/// continuing the deal across classes, so fold class counts differ by at
/// most one.
pub fn fold_assignment(y: &BinaryOutcome, folds: usize, seed: u64, stratified: bool) -> Result<Vec<usize>> {
    let n = y.len();
    if folds < 2 || folds > n {
        return Err(Error::InvalidConfig(format!(
            "cannot form {folds} folds from {n} observations"
        )));
    }
    let mut rng = stream_rng(seed, STREAM_FOLDS);
    let mut assignment = vec![0; n];
    let mut next = 0;
    let groups = if stratified {
        class_indices(y).to_vec()
    } else {
        vec![(0..n).collect()]
    };
    for mut rows in groups {
        rows.shuffle(&mut rng);
        for i in rows {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    Ok(assignment)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvSpec {
    pub folds: usize,
    pub m_max: usize,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for CvSpec {
    fn default() -> Self {
        CvSpec {
            folds: 10,
            m_max: 1000,
            seed: 1,
            stratified: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// Out-of-fold mean negative log-likelihood, folds × (m_max + 1).
    pub risk_matrix: Vec<Vec<f64>>,
    pub m_star: usize,
}

impl CvResult {
    pub fn from_matrix(risk_matrix: Vec<Vec<f64>>) -> Result<Self> {
        let means = column_means(&risk_matrix);
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::NumericalFailure("non-finite cross-validated risk".into()));
        }
        let m_star = means
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) })
            .0;
        Ok(CvResult { risk_matrix, m_star })
    }

    pub fn mean_risk(&self) -> Vec<f64> {
        column_means(&self.risk_matrix)
    }

    pub fn m_max(&self) -> usize {
        self.risk_matrix.first().map_or(0, |r| r.len().saturating_sub(1))
    }
}

fn column_means(matrix: &[Vec<f64>]) -> Vec<f64> {
    let width = matrix.first().map_or(0, Vec::len);
    (0..width)
        .map(|m| matrix.iter().map(|row| row[m]).sum::<f64>() / matrix.len() as f64)
        .collect()
}

/// Cross-validated choice of the number of iterations for one learner set.
pub fn cv_mstop(
    design: &DesignMatrix,
    y: &BinaryOutcome,
    learners: &[BaseLearner],
    config: &BoostConfig,
    cv: &CvSpec,
) -> Result<CvResult> {
    cv_mstop_from(design, y, None, learners, config, cv)
}

/// As [`cv_mstop`], but every fold starts from the frozen `base` fit (the
/// earlier stages of a K-step plan fitted on all of `design`) and tunes only
/// the new learner set on top of it.
pub fn cv_mstop_from(
    design: &DesignMatrix,
    y: &BinaryOutcome,
    base: Option<&BoostFit>,
    learners: &[BaseLearner],
    config: &BoostConfig,
    cv: &CvSpec,
) -> Result<CvResult> {
    config.validate()?;
    if cv.m_max < 1 {
        return Err(Error::InvalidConfig("m_max must be at least 1".into()));
    }
    let assignment = fold_assignment(y, cv.folds, cv.seed, cv.stratified)?;
    let rows = (0..cv.folds)
        .into_par_iter()
        .map(|k| fold_risk_curve(design, y, &assignment, k, base, learners, config, cv.m_max))
        .collect::<Result<Vec<_>>>()?;
    CvResult::from_matrix(rows)
}

#[allow(clippy::too_many_arguments)]
fn fold_risk_curve(
    design: &DesignMatrix,
    y: &BinaryOutcome,
    assignment: &[usize],
    fold: usize,
    base: Option<&BoostFit>,
    learners: &[BaseLearner],
    config: &BoostConfig,
    m_max: usize,
) -> Result<Vec<f64>> {
    let (train, test): (Vec<usize>, Vec<usize>) =
        (0..y.len()).partition(|&i| assignment[i] != fold);
    let y_train = y.subset(&train);
    let y_test = y.subset(&test);
    if config.offset_mode == OffsetMode::MeanLink && base.is_none() && !y_train.has_both_classes() {
        return Err(Error::DegenerateFold(fold));
    }
    let train_design = design.subset_rows(&train);
    let test_design = design.subset_rows_with_centers(&test, &train_design.centers());
    let family = config.family;

    let (mut booster, mut f_oof) = match base {
        Some(fit) => (
            Booster::continue_from(&train_design, &y_train, config, fit)?,
            fit.linear_predictor(&test_design)?,
        ),
        None => {
            let booster = Booster::new(&train_design, &y_train, config)?;
            let f = DVector::from_element(test.len(), booster.offset());
            (booster, f)
        }
    };
    let fold_learners = recalibrate_all(learners, &train_design)?;
    let mut curve = Vec::with_capacity(m_max + 1);
    curve.push(family.mean_risk(y_test.labels(), f_oof.as_slice()));
    booster.run_stage(&fold_learners, m_max, |learner, step| {
        f_oof += learner.contribution(&test_design, step);
        curve.push(family.mean_risk(y_test.labels(), f_oof.as_slice()));
    })?;
    Ok(curve)
}

fn recalibrate_all(learners: &[BaseLearner], design: &DesignMatrix) -> Result<Vec<BaseLearner>> {
    learners.iter().map(|l| l.recalibrated_clamped(design)).collect()
}

/// A K-step fit whose cross-validated stage budgets have been resolved.
#[derive(Debug, Clone)]
pub struct TunedFit {
    pub fit: BoostFit,
    /// Per stage; `None` where the budget was fixed.
    pub cv: Vec<Option<CvResult>>,
    pub m_stop: Vec<usize>,
}

/// Fits the stages in order on all rows. A cross-validated stage is tuned
/// with every fold starting from the frozen fit of the stages before it.
/// `cv.m_max` is replaced by each stage's own `m_max`.
pub fn fit_with_cv(
    design: &DesignMatrix,
    y: &BinaryOutcome,
    plan: &StagePlan,
    config: &BoostConfig,
    cv: &CvSpec,
) -> Result<TunedFit> {
    let mut m_stop = Vec::with_capacity(plan.stages.len());
    let mut results = Vec::with_capacity(plan.stages.len());
    let mut booster = Booster::new(design, y, config)?;
    for (k, stage) in plan.stages.iter().enumerate() {
        let m = match stage.budget {
            StageBudget::Fixed(m) => {
                results.push(None);
                m
            }
            StageBudget::CrossValidated { m_max } => {
                let base = (k > 0).then(|| booster.snapshot());
                let spec = CvSpec { m_max, ..*cv };
                let result = cv_mstop_from(design, y, base.as_ref(), &stage.learners, config, &spec)?;
                let m = result.m_star;
                if m == m_max {
                    log::warn!(
                        "stage `{}`: cross-validated optimum sits at the upper bound m_max = {m_max}",
                        stage.name
                    );
                }
                results.push(Some(result));
                m
            }
        };
        booster.run_stage(&stage.learners, m, |_, _| {})?;
        m_stop.push(m);
    }
    let fit = booster.finish();
    Ok(TunedFit {
        fit,
        cv: results,
        m_stop,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// (false positive rate, true positive rate), from (0, 0) to (1, 1).
    pub points: Vec<(f64, f64)>,
    /// Score at which each point is reached; +∞ for the origin.
    pub thresholds: Vec<f64>,
    pub auc: f64,
}

fn class_counts(labels: &BinaryOutcome) -> Result<(usize, usize)> {
    let pos = labels.n_positive();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((pos, neg))
}

/// ROC curve over all distinct score thresholds; AUC by the trapezoidal rule.
pub fn roc_auc(scores: &[f64], labels: &BinaryOutcome) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::ColumnMismatch(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let (pos, neg) = class_counts(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = vec![f64::INFINITY];
    // twice the area in units of pos·neg, accumulated exactly in integers
    let mut doubled_area: u128 = 0;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if labels.labels()[order[i]] == 1.0 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        doubled_area += ((fp - fp0) as u128) * ((tp + tp0) as u128);
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        thresholds.push(s);
    }
    let auc = doubled_area as f64 / (2.0 * pos as f64 * neg as f64);
    Ok(RocCurve {
        points,
        thresholds,
        auc,
    })
}

/// AUC as the share of (positive, negative) pairs ranked correctly, ties
/// counting one half.
pub fn auc_by_pairs(scores: &[f64], labels: &BinaryOutcome) -> Result<f64> {
    let (pos, neg) = class_counts(labels)?;
    let y = labels.labels();
    let mut doubled: u128 = 0;
    for i in (0..scores.len()).filter(|&i| y[i] == 1.0) {
        for j in (0..scores.len()).filter(|&j| y[j] == 0.0) {
            if scores[i] > scores[j] {
                doubled += 2;
            } else if scores[i] == scores[j] {
                doubled += 1;
            }
        }
    }
    Ok(doubled as f64 / (2.0 * pos as f64 * neg as f64))
}

/// Area under a polyline by the trapezoidal rule.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * 0.5)
        .sum()
}
