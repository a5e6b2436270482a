//! Learner sets for the model variants: component-wise (mb), group, sparse
//! group with mixing parameter α, and interaction learners.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetSchema, DesignMatrix, InteractionTerm};
use crate::error::{Error, Result};
use crate::learner::{BaseLearner, LearnerKind};

/// Prefix of group learner ids; the group name follows.
pub const GROUP_PREFIX: &str = "group:";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgbSpec {
    /// Mixing parameter in [0, 1]; 1 favours individual variables, 0 groups.
    pub alpha: f64,
    /// Degrees of freedom shared within each group before the 1/p_g split.
    pub df_base: f64,
}

impl SgbSpec {
    pub fn new(alpha: f64) -> Result<Self> {
        let spec = SgbSpec { alpha, df_base: 1.0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "mixing parameter alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.df_base > 0.0) {
            return Err(Error::InvalidConfig("df_base must be positive".into()));
        }
        Ok(())
    }
}

fn variable_block(design: &DesignMatrix, name: &str) -> Result<Vec<usize>> {
    let cols = design.variable_columns(name);
    if cols.is_empty() {
        return Err(Error::ColumnMismatch(format!("variable `{name}` has no encoded columns")));
    }
    Ok(cols)
}

/// One learner per variable (its whole column block), each at df = 1.
pub fn build_mb(design: &DesignMatrix, schema: &DatasetSchema) -> Result<Vec<BaseLearner>> {
    schema
        .variables
        .iter()
        .map(|v| {
            let cols = variable_block(design, &v.name)?;
            BaseLearner::calibrated(design, v.name.clone(), cols, 1.0, LearnerKind::Individual)
        })
        .collect()
}

/// One learner per group spanning all of the group's columns, each at df = 1.
pub fn build_group(design: &DesignMatrix, schema: &DatasetSchema) -> Result<Vec<BaseLearner>> {
    schema
        .groups()
        .into_iter()
        .map(|(g, members)| {
            let mut cols = Vec::new();
            for v in members {
                cols.extend(variable_block(design, &v.name)?);
            }
            BaseLearner::calibrated(design, format!("{GROUP_PREFIX}{g}"), cols, 1.0, LearnerKind::Group)
        })
        .collect()
}

/// Per group g with p_g variables: one learner per variable at df α/p_g and
/// one group learner at df (1 − α)/p_g. Learners whose target is zero are
/// left out, which is the λ → ∞ limit.
pub fn build_sgb(
    design: &DesignMatrix,
    schema: &DatasetSchema,
    spec: &SgbSpec,
) -> Result<Vec<BaseLearner>> {
    spec.validate()?;
    let mut learners = Vec::new();
    for (g, members) in schema.groups() {
        let p_g = members.len() as f64;
        let df_individual = spec.df_base * spec.alpha / p_g;
        let df_group = spec.df_base * (1.0 - spec.alpha) / p_g;
        let mut group_cols = Vec::new();
        for v in &members {
            let cols = variable_block(design, &v.name)?;
            group_cols.extend(cols.iter().copied());
            if df_individual > 0.0 {
                learners.push(BaseLearner::calibrated(
                    design,
                    v.name.clone(),
                    cols,
                    df_individual,
                    LearnerKind::Individual,
                )?);
            }
        }
        if df_group > 0.0 {
            learners.push(BaseLearner::calibrated(
                design,
                format!("{GROUP_PREFIX}{g}"),
                group_cols,
                df_group,
                LearnerKind::Group,
            )?);
        }
    }
    Ok(learners)
}

/// Interaction learners at df = 1 over each term's product columns.
#[derive(Debug, Clone)]
pub struct InteractionLearners {
    pub learners: Vec<BaseLearner>,
    /// Terms whose product columns carry no variation and were dropped.
    pub dropped: Vec<String>,
}

/// `design` must be the augmented design holding the terms' product columns.
pub fn build_interaction_learners(
    design: &DesignMatrix,
    terms: &[InteractionTerm],
) -> Result<InteractionLearners> {
    let mut learners = Vec::with_capacity(terms.len());
    let mut dropped = Vec::new();
    for term in terms {
        match BaseLearner::calibrated(
            design,
            term.id(),
            term.columns.clone(),
            1.0,
            LearnerKind::Interaction,
        ) {
            Ok(l) => learners.push(l),
            Err(Error::UnattainableDf { rank: 0, .. }) => dropped.push(term.id()),
            Err(e) => return Err(e),
        }
    }
    if !dropped.is_empty() {
        warn!(
            "dropped {} of {} interaction terms with constant product columns",
            dropped.len(),
            terms.len()
        );
    }
    Ok(InteractionLearners { learners, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{encode, expand_interactions, OutcomeSpec, RawTable, VariableSpec};
    use crate::learner::effective_df;

    fn fixture() -> (DatasetSchema, DesignMatrix) {
        let schema = DatasetSchema::new(
            OutcomeSpec {
                name: "y".into(),
                positive: "1".into(),
                negative: "0".into(),
                positive_meaning: None,
            },
            vec![
                VariableSpec::binary("temp", "Climate", false),
                VariableSpec::binary("rain", "Climate", false),
                VariableSpec::binary("drought", "Climate", false),
                VariableSpec::binary("extreme", "Climate", false),
                VariableSpec::categorical("region", &["CC", "CT", "NT", "SC"], "Natural", true),
                VariableSpec::binary("debt", "Economic", true),
            ],
        )
        .unwrap();
        let rows = (0..40)
            .map(|i: usize| {
                vec![
                    (i % 2).to_string(),
                    ((i / 2) % 2).to_string(),
                    ((i / 4) % 2).to_string(),
                    ((i * 7 / 3) % 2).to_string(),
                    ["CC", "CT", "NT", "SC"][(i * 3) % 4].to_string(),
                    ((i / 5) % 2).to_string(),
                    ((i * 5 / 7) % 2).to_string(),
                ]
            })
            .collect();
        let table = RawTable {
            headers: ["temp", "rain", "drought", "extreme", "region", "debt", "y"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            rows,
        };
        let (design, _) = encode(&schema, &table).unwrap();
        (schema, design)
    }

    #[test]
    fn mb_has_one_learner_per_variable() {
        let (schema, design) = fixture();
        let mb = build_mb(&design, &schema).unwrap();
        assert_eq!(mb.len(), schema.variables.len());
        for l in &mb {
            assert!((l.achieved_df() - 1.0).abs() < 1e-8);
            if l.columns().len() == 1 {
                assert_eq!(l.lambda(), 0.0);
            }
        }
        let region = mb.iter().find(|l| l.id() == "region").unwrap();
        assert_eq!(region.columns().len(), 3);
        assert!(region.lambda() > 0.0);
        assert!((effective_df(&design, region.columns(), region.lambda()) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn sgb_alpha_edges() {
        let (schema, design) = fixture();
        let ones = build_sgb(&design, &schema, &SgbSpec::new(1.0).unwrap()).unwrap();
        assert!(ones.iter().all(|l| l.kind() == LearnerKind::Individual));
        assert_eq!(ones.len(), 6);
        let zeros = build_sgb(&design, &schema, &SgbSpec::new(0.0).unwrap()).unwrap();
        assert!(zeros.iter().all(|l| l.kind() == LearnerKind::Group));
        assert_eq!(zeros.len(), 3);
    }

    #[test]
    fn sgb_half_splits_climate_group() {
        let (schema, design) = fixture();
        let sgb = build_sgb(&design, &schema, &SgbSpec::new(0.5).unwrap()).unwrap();
        let climate: Vec<&BaseLearner> = sgb
            .iter()
            .filter(|l| ["temp", "rain", "drought", "extreme", "group:Climate"].contains(&l.id()))
            .collect();
        assert_eq!(climate.len(), 5);
        for l in climate {
            assert_eq!(l.df_target(), 0.125);
            assert!((l.achieved_df() - 0.125).abs() < 1e-8);
        }
        let group = sgb.iter().find(|l| l.id() == "group:Climate").unwrap();
        assert_eq!(group.columns(), &[0, 1, 2, 3]);
    }

    #[test]
    fn sgb_rejects_alpha_out_of_range() {
        assert!(SgbSpec::new(1.5).is_err());
        assert!(SgbSpec::new(-0.1).is_err());
    }

    #[test]
    fn group_learners_span_groups() {
        let (schema, design) = fixture();
        let groups = build_group(&design, &schema).unwrap();
        assert_eq!(groups.len(), 3);
        assert_eq!(groups[1].columns().len(), 3);
    }

    #[test]
    fn constant_products_are_dropped() {
        let (schema, design) = fixture();
        let terms = expand_interactions(&schema, &design).unwrap();
        let augmented = design.augment(&terms).unwrap();
        let built = build_interaction_learners(&augmented, &terms).unwrap();
        assert_eq!(built.learners.len() + built.dropped.len(), terms.len());

        // force an all-zero product: temp=1 never co-occurs with a zeroed debt
        let mut raw = augmented.raw().clone();
        let debt_temp = terms.iter().find(|t| t.id() == "debt:temp").unwrap();
        for i in 0..raw.nrows() {
            raw[(i, debt_temp.columns[0])] = 0.0;
        }
        let zeroed = DesignMatrix::from_raw(raw, augmented.columns().to_vec());
        let built = build_interaction_learners(&zeroed, &terms).unwrap();
        assert_eq!(built.dropped, vec!["debt:temp".to_string()]);
    }
}
