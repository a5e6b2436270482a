use nalgebra::{DMatrix, DVectorView};
use serde::{Deserialize, Serialize};

use super::schema::{DatasetSchema, VariableKind};
use super::table::RawTable;
use crate::error::{Error, Result};

/// Provenance of one encoded column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    /// Source variable, or (moderator, partner) for interaction products.
    pub sources: Vec<String>,
    /// Category indicated by the column per source; empty for continuous.
    pub categories: Vec<String>,
    /// Value subtracted from the raw column.
    pub center: f64,
}

impl ColumnMeta {
    pub fn label(&self) -> String {
        self.sources
            .iter()
            .zip(&self.categories)
            .map(|(s, c)| if c.is_empty() { s.clone() } else { format!("{s}={c}") })
            .collect::<Vec<_>>()
            .join(":")
    }
}

/// Numeric design matrix. `raw` holds the encoded but uncentered values,
/// `values` the mean-centered copy that learners are fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    raw: DMatrix<f64>,
    values: DMatrix<f64>,
    columns: Vec<ColumnMeta>,
}

impl DesignMatrix {
    /// Builds a design from uncentered values, centering each column on its mean.
    pub fn from_raw(raw: DMatrix<f64>, mut columns: Vec<ColumnMeta>) -> Self {
        assert_eq!(raw.ncols(), columns.len(), "one meta entry per column");
        for (j, meta) in columns.iter_mut().enumerate() {
            meta.center = if raw.nrows() == 0 { 0.0 } else { raw.column(j).mean() };
        }
        Self::with_metas(raw, columns)
    }

    fn with_metas(raw: DMatrix<f64>, columns: Vec<ColumnMeta>) -> Self {
        let mut values = raw.clone();
        for (j, meta) in columns.iter().enumerate() {
            values.column_mut(j).add_scalar_mut(-meta.center);
        }
        DesignMatrix {
            raw,
            values,
            columns,
        }
    }

    /// Unlabelled continuous columns named `x0, x1, ...`.
    pub fn from_columns(raw: DMatrix<f64>) -> Self {
        let metas = (0..raw.ncols())
            .map(|j| ColumnMeta {
                sources: vec![format!("x{j}")],
                categories: vec![String::new()],
                center: 0.0,
            })
            .collect();
        Self::from_raw(raw, metas)
    }

    pub fn n(&self) -> usize {
        self.raw.nrows()
    }

    pub fn p(&self) -> usize {
        self.raw.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn raw(&self) -> &DMatrix<f64> {
        &self.raw
    }

    pub fn column(&self, j: usize) -> DVectorView<'_, f64> {
        self.values.column(j)
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn centers(&self) -> Vec<f64> {
        self.columns.iter().map(|c| c.center).collect()
    }

    /// Encoded columns that belong to a single source variable, in order.
    pub fn variable_columns(&self, name: &str) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.sources.len() == 1 && c.sources[0] == name)
            .map(|(j, _)| j)
            .collect()
    }

    /// Row subset, re-centered on the subset means.
    pub fn subset_rows(&self, rows: &[usize]) -> DesignMatrix {
        let raw = self.raw.select_rows(rows.iter());
        DesignMatrix::from_raw(raw, self.columns.clone())
    }

    /// Row subset centered with externally supplied centers (e.g. those of a
    /// training subset).
    pub fn subset_rows_with_centers(&self, rows: &[usize], centers: &[f64]) -> DesignMatrix {
        assert_eq!(centers.len(), self.p());
        let raw = self.raw.select_rows(rows.iter());
        let mut metas = self.columns.clone();
        for (m, &c) in metas.iter_mut().zip(centers) {
            m.center = c;
        }
        DesignMatrix::with_metas(raw, metas)
    }

    /// Appends the product columns of `terms`. Products are taken on the
    /// uncentered parents and centered afterwards.
    pub fn augment(&self, terms: &[InteractionTerm]) -> Result<DesignMatrix> {
        let extra: usize = terms.iter().map(|t| t.columns.len()).sum();
        let n = self.n();
        let p = self.p();
        let mut raw = self.raw.clone().resize_horizontally(p + extra, 0.0);
        let mut metas: Vec<ColumnMeta> = self.columns.clone();
        for term in terms {
            for (&(a, b), &dest) in term.parent_columns.iter().zip(&term.columns) {
                if dest != metas.len() || a >= p || b >= p {
                    return Err(Error::ColumnMismatch(format!(
                        "interaction `{}` was expanded against a different design",
                        term.id()
                    )));
                }
                for i in 0..n {
                    raw[(i, dest)] = self.raw[(i, a)] * self.raw[(i, b)];
                }
                let (ma, mb) = (&self.columns[a], &self.columns[b]);
                metas.push(ColumnMeta {
                    sources: vec![ma.sources[0].clone(), mb.sources[0].clone()],
                    categories: vec![ma.categories[0].clone(), mb.categories[0].clone()],
                    center: 0.0,
                });
            }
        }
        Ok(DesignMatrix::from_raw(raw, metas))
    }
}

/// Binary outcome coded 0/1.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryOutcome {
    labels: Vec<f64>,
    pub positive_meaning: String,
}

impl BinaryOutcome {
    pub fn new(labels: Vec<f64>, positive_meaning: impl Into<String>) -> Result<Self> {
        if let Some(bad) = labels.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::NonBinaryOutcome {
                column: "outcome".into(),
                value: bad.to_string(),
                positive: "1".into(),
                negative: "0".into(),
            });
        }
        Ok(BinaryOutcome {
            labels,
            positive_meaning: positive_meaning.into(),
        })
    }

    pub fn from_bools(labels: &[bool]) -> Self {
        BinaryOutcome {
            labels: labels.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            positive_meaning: "1".into(),
        }
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&v| v == 1.0).count()
    }

    pub fn mean(&self) -> f64 {
        self.n_positive() as f64 / self.len() as f64
    }

    pub fn has_both_classes(&self) -> bool {
        let pos = self.n_positive();
        pos > 0 && pos < self.len()
    }

    pub fn subset(&self, rows: &[usize]) -> BinaryOutcome {
        BinaryOutcome {
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            positive_meaning: self.positive_meaning.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EncodeOptions {
    /// Reject columns that are constant in the table.
    pub reject_degenerate: bool,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        EncodeOptions {
            reject_degenerate: true,
        }
    }
}

/// Encodes the predictors with reference-cell coding (first category is the
/// reference) and maps the outcome column to 0/1.
pub fn encode(schema: &DatasetSchema, table: &RawTable) -> Result<(DesignMatrix, BinaryOutcome)> {
    encode_with(schema, table, EncodeOptions::default())
}

pub fn encode_with(
    schema: &DatasetSchema,
    table: &RawTable,
    options: EncodeOptions,
) -> Result<(DesignMatrix, BinaryOutcome)> {
    let design = encode_predictors(schema, table, options)?;
    let outcome = encode_outcome(schema, table)?;
    Ok((design, outcome))
}

pub fn encode_predictors(
    schema: &DatasetSchema,
    table: &RawTable,
    options: EncodeOptions,
) -> Result<DesignMatrix> {
    let n = table.n_rows();
    let p: usize = schema.variables.iter().map(|v| v.encoded_width()).sum();
    let mut raw = DMatrix::<f64>::zeros(n, p);
    let mut metas = Vec::with_capacity(p);
    let mut j = 0;
    for var in &schema.variables {
        let values = table.column(&var.name)?;
        match var.kind {
            VariableKind::Continuous => {
                for (i, v) in values.iter().enumerate() {
                    raw[(i, j)] = v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| {
                        Error::InvalidNumber {
                            variable: var.name.clone(),
                            value: v.to_string(),
                        }
                    })?;
                }
                metas.push(ColumnMeta {
                    sources: vec![var.name.clone()],
                    categories: vec![String::new()],
                    center: 0.0,
                });
                j += 1;
            }
            VariableKind::Binary | VariableKind::Categorical => {
                for (i, v) in values.iter().enumerate() {
                    let level = var.categories.iter().position(|c| c == v).ok_or_else(|| {
                        Error::UnknownCategory {
                            variable: var.name.clone(),
                            value: v.to_string(),
                        }
                    })?;
                    if level > 0 {
                        raw[(i, j + level - 1)] = 1.0;
                    }
                }
                for cat in &var.categories[1..] {
                    metas.push(ColumnMeta {
                        sources: vec![var.name.clone()],
                        categories: vec![cat.clone()],
                        center: 0.0,
                    });
                }
                j += var.encoded_width();
            }
        }
    }
    if options.reject_degenerate {
        for (col, meta) in metas.iter().enumerate() {
            let c = raw.column(col);
            if n == 0 || c.iter().all(|&v| v == c[0]) {
                return Err(Error::DegenerateColumn(meta.label()));
            }
        }
    }
    Ok(DesignMatrix::from_raw(raw, metas))
}

pub fn encode_outcome(schema: &DatasetSchema, table: &RawTable) -> Result<BinaryOutcome> {
    let spec = &schema.outcome;
    let labels = table
        .column(&spec.name)?
        .into_iter()
        .map(|v| {
            if v == spec.positive {
                Ok(1.0)
            } else if v == spec.negative {
                Ok(0.0)
            } else {
                Err(Error::NonBinaryOutcome {
                    column: spec.name.clone(),
                    value: v.to_string(),
                    positive: spec.positive.clone(),
                    negative: spec.negative.clone(),
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BinaryOutcome {
        labels,
        positive_meaning: spec
            .positive_meaning
            .clone()
            .unwrap_or_else(|| spec.positive.clone()),
    })
}

/// A moderator × partner interaction and the design columns it occupies
/// once appended with [`DesignMatrix::augment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionTerm {
    pub moderator: String,
    pub partner: String,
    /// Pairs of parent columns (moderator column, partner column).
    pub parent_columns: Vec<(usize, usize)>,
    /// Indices of the product columns in the augmented design.
    pub columns: Vec<usize>,
}

impl InteractionTerm {
    pub fn id(&self) -> String {
        format!("{}:{}", self.moderator, self.partner)
    }
}

/// (moderator, partner) name pairs: one per unordered pair with at least one
/// moderator, partner ranging over every other predictor. Two moderators are
/// paired once, with the earlier schema variable as moderator.
pub fn interaction_pairs(schema: &DatasetSchema) -> Vec<(String, String)> {
    let mut pairs = Vec::new();
    for (mi, moderator) in schema.variables.iter().enumerate() {
        if !moderator.moderator {
            continue;
        }
        for (pi, partner) in schema.variables.iter().enumerate() {
            if pi == mi || (partner.moderator && pi < mi) {
                continue;
            }
            pairs.push((moderator.name.clone(), partner.name.clone()));
        }
    }
    pairs
}

/// The terms of [`interaction_pairs`] with the column indices they take when
/// appended to `design`.
pub fn expand_interactions(
    schema: &DatasetSchema,
    design: &DesignMatrix,
) -> Result<Vec<InteractionTerm>> {
    if schema.moderators().next().is_none() {
        return Err(Error::InvalidConfig(
            "interaction expansion needs at least one moderator".into(),
        ));
    }
    let mut next_col = design.p();
    let mut terms = Vec::new();
    for (moderator, partner) in interaction_pairs(schema) {
        let mod_cols = design.variable_columns(&moderator);
        let partner_cols = design.variable_columns(&partner);
        let parent_columns: Vec<(usize, usize)> = mod_cols
            .iter()
            .flat_map(|&a| partner_cols.iter().map(move |&b| (a, b)))
            .collect();
        let columns = (next_col..next_col + parent_columns.len()).collect();
        next_col += parent_columns.len();
        terms.push(InteractionTerm {
            moderator,
            partner,
            parent_columns,
            columns,
        });
    }
    Ok(terms)
}

/// Encoded column indices per schema group, groups in first-appearance order.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupIndex {
    groups: Vec<(String, Vec<usize>)>,
}

impl GroupIndex {
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.groups.iter().map(|(g, c)| (g.as_str(), c.as_slice()))
    }

    pub fn get(&self, group: &str) -> Option<&[usize]> {
        self.groups
            .iter()
            .find(|(g, _)| g == group)
            .map(|(_, c)| c.as_slice())
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

pub fn column_group_index(schema: &DatasetSchema, design: &DesignMatrix) -> GroupIndex {
    let groups = schema
        .groups()
        .into_iter()
        .map(|(g, members)| {
            let mut cols: Vec<usize> = members
                .iter()
                .flat_map(|v| design.variable_columns(&v.name))
                .collect();
            cols.sort_unstable();
            (g, cols)
        })
        .collect();
    GroupIndex { groups }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema::{OutcomeSpec, VariableSpec};

    fn outcome() -> OutcomeSpec {
        OutcomeSpec {
            name: "y".into(),
            positive: "yes".into(),
            negative: "no".into(),
            positive_meaning: Some("not vulnerable".into()),
        }
    }

    fn table(headers: &[&str], rows: &[&[&str]]) -> RawTable {
        RawTable {
            headers: headers.iter().map(|s| s.to_string()).collect(),
            rows: rows
                .iter()
                .map(|r| r.iter().map(|s| s.to_string()).collect())
                .collect(),
        }
    }

    #[test]
    fn four_region_variable_gets_three_columns() {
        let regions = ["CentralChile", "CentralTunisia", "NorthernTunisia", "SouthernChile"];
        let schema = DatasetSchema::new(
            outcome(),
            vec![VariableSpec::categorical("Natural assets", &regions, "Natural", true)],
        )
        .unwrap();
        let t = table(
            &["Natural assets", "y"],
            &[
                &["CentralChile", "yes"],
                &["CentralTunisia", "no"],
                &["NorthernTunisia", "yes"],
                &["SouthernChile", "no"],
            ],
        );
        let (design, y) = encode(&schema, &t).unwrap();
        assert_eq!(design.p(), 3);
        assert_eq!(design.columns()[0].categories[0], "CentralTunisia");
        // reference row is all zero before centering
        assert_eq!(design.raw().row(0).iter().sum::<f64>(), 0.0);
        assert_eq!(y.labels(), &[1.0, 0.0, 1.0, 0.0]);
        assert_eq!(y.positive_meaning, "not vulnerable");
    }

    #[test]
    fn constant_binary_column_is_degenerate() {
        let schema = DatasetSchema::new(
            outcome(),
            vec![VariableSpec::categorical("a", &["no", "yes"], "g", false)],
        )
        .unwrap();
        let t = table(&["a", "y"], &[&["yes", "yes"], &["yes", "no"]]);
        assert!(matches!(encode(&schema, &t), Err(Error::DegenerateColumn(_))));
        let relaxed = encode_with(
            &schema,
            &t,
            EncodeOptions {
                reject_degenerate: false,
            },
        );
        assert!(relaxed.is_ok());
    }

    #[test]
    fn two_binary_predictors_center_to_half() {
        let schema = DatasetSchema::new(
            outcome(),
            vec![VariableSpec::binary("a", "g", false), VariableSpec::binary("b", "g", false)],
        )
        .unwrap();
        let t = table(
            &["a", "b", "y"],
            &[&["0", "0", "no"], &["0", "1", "yes"], &["1", "0", "no"], &["1", "1", "yes"]],
        );
        let (design, _) = encode(&schema, &t).unwrap();
        assert_eq!(design.p(), 2);
        for j in 0..2 {
            assert_eq!(design.column(j).sum(), 0.0);
            assert!(design.column(j).iter().all(|v| v.abs() == 0.5));
        }
    }

    #[test]
    fn encode_errors() {
        let schema =
            DatasetSchema::new(outcome(), vec![VariableSpec::binary("a", "g", false)]).unwrap();
        let unknown = table(&["a", "y"], &[&["2", "yes"], &["0", "no"]]);
        assert!(matches!(encode(&schema, &unknown), Err(Error::UnknownCategory { .. })));
        let missing = table(&["y"], &[&["yes"]]);
        assert!(matches!(encode(&schema, &missing), Err(Error::MissingColumn(_))));
        let nonbinary = table(&["a", "y"], &[&["1", "maybe"], &["0", "no"]]);
        assert!(matches!(encode(&schema, &nonbinary), Err(Error::NonBinaryOutcome { .. })));
    }

    #[test]
    fn expansion_counts_and_widths() {
        let schema = DatasetSchema::new(
            outcome(),
            vec![
                VariableSpec::categorical("m", &["a", "b", "c", "d"], "g", true),
                VariableSpec::categorical("q", &["a", "b", "c"], "g", false),
                VariableSpec::binary("r", "h", true),
            ],
        )
        .unwrap();
        let rows: Vec<Vec<String>> = (0..12)
            .map(|i| {
                vec![
                    ["a", "b", "c", "d"][i % 4].to_string(),
                    ["a", "b", "c"][i % 3].to_string(),
                    (i % 2).to_string(),
                    ["yes", "no"][i % 2].to_string(),
                ]
            })
            .collect();
        let t = RawTable {
            headers: vec!["m".into(), "q".into(), "r".into(), "y".into()],
            rows,
        };
        let (design, _) = encode(&schema, &t).unwrap();
        let terms = expand_interactions(&schema, &design).unwrap();
        let ids: Vec<String> = terms.iter().map(|t| t.id()).collect();
        assert_eq!(ids, vec!["m:q", "m:r", "r:q"]);
        assert_eq!(terms[0].columns.len(), 6);
        assert_eq!(terms[1].columns.len(), 3);
        assert_eq!(terms[2].columns.len(), 2);
        let augmented = design.augment(&terms).unwrap();
        assert_eq!(augmented.p(), design.p() + 11);
    }

    #[test]
    fn single_moderator_single_partner() {
        let schema = DatasetSchema::new(
            outcome(),
            vec![VariableSpec::binary("m", "g", true), VariableSpec::binary("x", "g", false)],
        )
        .unwrap();
        let t = table(
            &["m", "x", "y"],
            &[&["0", "0", "no"], &["0", "1", "yes"], &["1", "0", "no"], &["1", "1", "yes"]],
        );
        let (design, _) = encode(&schema, &t).unwrap();
        let terms = expand_interactions(&schema, &design).unwrap();
        assert_eq!(terms.len(), 1);
        assert_eq!(terms[0].columns, vec![2]);
        assert_eq!(terms[0].parent_columns, vec![(0, 1)]);
    }

    #[test]
    fn group_index_partitions_columns() {
        let schema = DatasetSchema::new(
            outcome(),
            vec![
                VariableSpec::binary("temp", "Climate", false),
                VariableSpec::binary("rain", "Climate", false),
                VariableSpec::categorical("region", &["a", "b", "c"], "Natural", true),
                VariableSpec::binary("drought", "Climate", false),
                VariableSpec::binary("extreme", "Climate", false),
            ],
        )
        .unwrap();
        let rows: Vec<Vec<String>> = (0..6)
            .map(|i| {
                vec![
                    (i % 2).to_string(),
                    ((i / 2) % 2).to_string(),
                    ["a", "b", "c"][i % 3].to_string(),
                    ((i + 1) % 2).to_string(),
                    ((i / 3) % 2).to_string(),
                    "yes".to_string(),
                ]
            })
            .collect();
        let t = RawTable {
            headers: ["temp", "rain", "region", "drought", "extreme", "y"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            rows,
        };
        let design = encode_predictors(&schema, &t, EncodeOptions::default()).unwrap();
        let index = column_group_index(&schema, &design);
        assert_eq!(index.get("Climate").unwrap(), &[0, 1, 4, 5]);
        assert_eq!(index.get("Natural").unwrap(), &[2, 3]);
        let mut all: Vec<usize> = index.iter().flat_map(|(_, c)| c.to_vec()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..design.p()).collect::<Vec<_>>());
    }
}
