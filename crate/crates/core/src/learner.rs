//! Ridge-penalized least-squares base-learners over column subsets.
//!
//! The effective degrees of freedom of a learner are `tr(2S - SᵀS)` with
//! `S = X(XᵀX + λI)⁻¹Xᵀ`. With `d_i` the eigenvalues of `XᵀX` this is
//! `Σ 2t_i - t_i²`, `t_i = d_i / (d_i + λ)`, so the n×n hat matrix is never
//! formed.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::DesignMatrix;
use crate::error::{Error, Result};

/// Eigenvalues at or below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-10;
const DF_TOL: f64 = 1e-12;
const MAX_BISECTIONS: usize = 200;
/// Bisection bracket for log10(λ / max eigenvalue).
const LOG_LAMBDA_RANGE: (f64, f64) = (-12.0, 12.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Individual,
    Group,
    Interaction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerFit {
    pub beta: DVector<f64>,
    pub sse: f64,
}

/// Eigen-spectrum of the Gram matrix of a column block.
#[derive(Debug, Clone)]
pub struct GramSpectrum {
    pub eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl GramSpectrum {
    pub fn new(design: &DesignMatrix, columns: &[usize]) -> Self {
        let x = design.values().select_columns(columns.iter());
        let gram = x.tr_mul(&x);
        let eig = SymmetricEigen::new(gram.clone());
        GramSpectrum {
            eigenvalues: eig.eigenvalues.iter().map(|&d| d.max(0.0)).collect(),
            eigenvectors: eig.eigenvectors,
            gram,
        }
    }

    fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().cloned().fold(0.0, f64::max)
    }

    fn zero_cutoff(&self) -> f64 {
        self.max_eigenvalue() * RANK_TOL
    }

    pub fn rank(&self) -> usize {
        let max = self.max_eigenvalue();
        if max <= f64::MIN_POSITIVE {
            return 0;
        }
        let cut = self.zero_cutoff();
        self.eigenvalues.iter().filter(|&&d| d > cut).count()
    }

    pub fn df(&self, lambda: f64) -> f64 {
        if self.max_eigenvalue() <= f64::MIN_POSITIVE {
            return 0.0;
        }
        let cut = self.zero_cutoff();
        self.eigenvalues
            .iter()
            .filter(|&&d| d > cut)
            .map(|&d| {
                let t = d / (d + lambda);
                2.0 * t - t * t
            })
            .sum()
    }

    /// `(XᵀX + λI)⁺`, pseudo-inverting directions with a zero eigenvalue.
    fn penalized_inverse(&self, lambda: f64) -> DMatrix<f64> {
        let cut = self.zero_cutoff();
        let k = self.eigenvalues.len();
        let inv = DVector::from_iterator(
            k,
            self.eigenvalues.iter().map(|&d| {
                if d + lambda > cut && d + lambda > 0.0 {
                    1.0 / (d + lambda)
                } else {
                    0.0
                }
            }),
        );
        let v = &self.eigenvectors;
        let scaled = DMatrix::from_fn(k, k, |i, j| v[(i, j)] * inv[j]);
        scaled * v.transpose()
    }
}

/// `tr(2S - SᵀS)` of the ridge hat matrix on `columns`.
pub fn effective_df(design: &DesignMatrix, columns: &[usize], lambda: f64) -> f64 {
    GramSpectrum::new(design, columns).df(lambda)
}

/// Ridge penalty whose effective degrees of freedom equal `df_target`.
pub fn calibrate_lambda(design: &DesignMatrix, columns: &[usize], df_target: f64) -> Result<f64> {
    calibrate_spectrum(&GramSpectrum::new(design, columns), df_target)
}

fn calibrate_spectrum(spec: &GramSpectrum, df_target: f64) -> Result<f64> {
    let rank = spec.rank();
    if !(df_target > 0.0) || df_target > rank as f64 + DF_TOL {
        return Err(Error::UnattainableDf {
            target: df_target,
            rank,
        });
    }
    if df_target >= rank as f64 - DF_TOL {
        return Ok(0.0);
    }
    let scale = spec.max_eigenvalue();
    let lambda_at = |log: f64| scale * 10f64.powf(log);
    let (mut lo, mut hi) = LOG_LAMBDA_RANGE;
    if spec.df(lambda_at(hi)) > df_target {
        return Err(Error::UnattainableDf {
            target: df_target,
            rank,
        });
    }
    if spec.df(lambda_at(lo)) < df_target {
        // Target sits between the bracket and λ = 0; bisect linearly there.
        let (mut a, mut b) = (0.0, lambda_at(lo));
        for _ in 0..MAX_BISECTIONS {
            let mid = 0.5 * (a + b);
            let df = spec.df(mid);
            if (df - df_target).abs() <= DF_TOL || mid == a || mid == b {
                return Ok(mid);
            }
            if df > df_target {
                a = mid;
            } else {
                b = mid;
            }
        }
        return Ok(0.5 * (a + b));
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..MAX_BISECTIONS {
        mid = 0.5 * (lo + hi);
        let df = spec.df(lambda_at(mid));
        if (df - df_target).abs() <= DF_TOL || mid == lo || mid == hi {
            break;
        }
        if df > df_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lambda_at(mid))
}

/// A column subset with a ridge penalty calibrated to a target effective
/// degrees of freedom. The cached Gram quantities belong to the design the
/// learner was built on.
#[derive(Debug, Clone)]
pub struct BaseLearner {
    id: String,
    columns: Vec<usize>,
    lambda: f64,
    df_target: f64,
    kind: LearnerKind,
    gram: DMatrix<f64>,
    operator: DMatrix<f64>,
}

impl BaseLearner {
    pub fn calibrated(
        design: &DesignMatrix,
        id: impl Into<String>,
        columns: Vec<usize>,
        df_target: f64,
        kind: LearnerKind,
    ) -> Result<Self> {
        check_columns(design, &columns)?;
        let spec = GramSpectrum::new(design, &columns);
        let lambda = calibrate_spectrum(&spec, df_target)?;
        Ok(Self::from_spectrum(spec, id.into(), columns, lambda, df_target, kind))
    }

    pub fn with_lambda(
        design: &DesignMatrix,
        id: impl Into<String>,
        columns: Vec<usize>,
        lambda: f64,
        kind: LearnerKind,
    ) -> Result<Self> {
        check_columns(design, &columns)?;
        if !(lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!("ridge penalty {lambda} is negative")));
        }
        let spec = GramSpectrum::new(design, &columns);
        let df = spec.df(lambda);
        Ok(Self::from_spectrum(spec, id.into(), columns, lambda, df, kind))
    }

    fn from_spectrum(
        spec: GramSpectrum,
        id: String,
        columns: Vec<usize>,
        lambda: f64,
        df_target: f64,
        kind: LearnerKind,
    ) -> Self {
        let operator = spec.penalized_inverse(lambda);
        BaseLearner {
            id,
            columns,
            lambda,
            df_target,
            kind,
            gram: spec.gram,
            operator,
        }
    }

    /// Same learner re-calibrated to its df target on another design.
    pub fn recalibrated(&self, design: &DesignMatrix) -> Result<Self> {
        Self::calibrated(design, self.id.clone(), self.columns.clone(), self.df_target, self.kind)
    }

    /// Like [`recalibrated`](Self::recalibrated), but a target above the rank
    /// of the block on `design` is lowered to that rank. Row subsets can lose
    /// rare categories; such a learner then simply fits less (or nothing).
    pub fn recalibrated_clamped(&self, design: &DesignMatrix) -> Result<Self> {
        check_columns(design, &self.columns)?;
        let spec = GramSpectrum::new(design, &self.columns);
        let rank = spec.rank() as f64;
        let lambda = if rank == 0.0 || self.df_target >= rank {
            0.0
        } else {
            calibrate_spectrum(&spec, self.df_target)?
        };
        Ok(Self::from_spectrum(
            spec,
            self.id.clone(),
            self.columns.clone(),
            lambda,
            self.df_target,
            self.kind,
        ))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn df_target(&self) -> f64 {
        self.df_target
    }

    pub fn kind(&self) -> LearnerKind {
        self.kind
    }

    pub fn achieved_df(&self) -> f64 {
        let spec = SymmetricEigen::new(self.gram.clone());
        let eigenvalues: Vec<f64> = spec.eigenvalues.iter().map(|&d| d.max(0.0)).collect();
        GramSpectrum {
            eigenvalues,
            eigenvectors: spec.eigenvectors,
            gram: self.gram.clone(),
        }
        .df(self.lambda)
    }

    /// `Xᵀu` restricted to this learner's columns.
    fn cross(&self, design: &DesignMatrix, target: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.columns.len(),
            self.columns.iter().map(|&j| design.column(j).dot(target)),
        )
    }

    /// Penalized least-squares fit and its residual sum of squares, given
    /// `uᵀu` of the target.
    pub(crate) fn fit_with_norm(
        &self,
        design: &DesignMatrix,
        target: &DVector<f64>,
        target_sq: f64,
    ) -> LearnerFit {
        if self.columns.len() == 1 {
            let c = design.column(self.columns[0]).dot(target);
            let b = self.operator[(0, 0)] * c;
            let sse = target_sq - 2.0 * b * c + b * b * self.gram[(0, 0)];
            return LearnerFit {
                beta: DVector::from_element(1, b),
                sse: sse.max(0.0),
            };
        }
        let c = self.cross(design, target);
        let beta = &self.operator * &c;
        let sse = target_sq - 2.0 * beta.dot(&c) + beta.dot(&(&self.gram * &beta));
        LearnerFit {
            beta,
            sse: sse.max(0.0),
        }
    }

    /// Linear contribution `Xβ` of coefficients over this learner's columns.
    pub(crate) fn contribution(&self, design: &DesignMatrix, beta: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(design.n());
        for (&j, &b) in self.columns.iter().zip(beta.iter()) {
            out.axpy(b, &design.column(j), 1.0);
        }
        out
    }
}

fn check_columns(design: &DesignMatrix, columns: &[usize]) -> Result<()> {
    if columns.is_empty() {
        return Err(Error::InvalidConfig("base-learner with no columns".into()));
    }
    if let Some(&j) = columns.iter().find(|&&j| j >= design.p()) {
        return Err(Error::ColumnMismatch(format!(
            "column {j} out of range for a design with {} columns",
            design.p()
        )));
    }
    Ok(())
}

/// Fits `learner` to `target` by ridge-penalized least squares.
pub fn fit_learner(
    design: &DesignMatrix,
    learner: &BaseLearner,
    target: &DVector<f64>,
) -> Result<LearnerFit> {
    if target.len() != design.n() {
        return Err(Error::ColumnMismatch(format!(
            "target has {} entries, design has {} rows",
            target.len(),
            design.n()
        )));
    }
    let fit = learner.fit_with_norm(design, target, target.norm_squared());
    if !fit.beta.iter().all(|b| b.is_finite()) || !fit.sse.is_finite() {
        return Err(Error::NumericalFailure(format!(
            "non-finite coefficients for learner `{}`",
            learner.id
        )));
    }
    Ok(fit)
}
