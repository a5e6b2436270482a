//! Dataset schema: predictor variables with their kind, category list, group
//! membership and moderator flag, plus the binary outcome.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    Binary,
    Categorical,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub kind: VariableKind,
    /// Ordered category labels. The first one is the reference category.
    #[serde(default)]
    pub categories: Vec<String>,
    pub group: String,
    #[serde(default)]
    pub moderator: bool,
}

impl VariableSpec {
    pub fn binary(name: &str, group: &str, moderator: bool) -> Self {
        VariableSpec {
            name: name.to_string(),
            kind: VariableKind::Binary,
            categories: vec!["0".to_string(), "1".to_string()],
            group: group.to_string(),
            moderator,
        }
    }

    pub fn categorical(name: &str, categories: &[&str], group: &str, moderator: bool) -> Self {
        VariableSpec {
            name: name.to_string(),
            kind: VariableKind::Categorical,
            categories: categories.iter().map(|c| c.to_string()).collect(),
            group: group.to_string(),
            moderator,
        }
    }

    pub fn continuous(name: &str, group: &str, moderator: bool) -> Self {
        VariableSpec {
            name: name.to_string(),
            kind: VariableKind::Continuous,
            categories: Vec::new(),
            group: group.to_string(),
            moderator,
        }
    }

    /// Number of encoded columns under reference-cell coding.
    pub fn encoded_width(&self) -> usize {
        match self.kind {
            VariableKind::Continuous => 1,
            _ => self.categories.len() - 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub name: String,
    /// Raw value coded as 1.
    pub positive: String,
    /// Raw value coded as 0.
    pub negative: String,
    /// Human readable meaning of the positive class, e.g. "not vulnerable".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_meaning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub outcome: OutcomeSpec,
    pub variables: Vec<VariableSpec>,
}

impl DatasetSchema {
    pub fn new(outcome: OutcomeSpec, variables: Vec<VariableSpec>) -> Result<Self> {
        let schema = DatasetSchema { outcome, variables };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: DatasetSchema = toml::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("schema serializes to toml")
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidSchema(msg));
        if self.variables.is_empty() {
            return invalid("no predictor variables declared".into());
        }
        if self.outcome.positive == self.outcome.negative {
            return invalid("outcome positive and negative values coincide".into());
        }
        let mut seen = HashSet::new();
        for v in &self.variables {
            if v.name.is_empty() {
                return invalid("variable with empty name".into());
            }
            if !seen.insert(v.name.as_str()) {
                return invalid(format!("duplicate variable `{}`", v.name));
            }
            if v.name == self.outcome.name {
                return invalid(format!("outcome `{}` is also listed as a predictor", v.name));
            }
            if v.group.is_empty() {
                return invalid(format!("variable `{}` has no group", v.name));
            }
            let n_cat = v.categories.len();
            match v.kind {
                VariableKind::Binary if n_cat != 2 => {
                    return invalid(format!(
                        "binary variable `{}` must list exactly 2 categories, got {n_cat}",
                        v.name
                    ))
                }
                VariableKind::Categorical if n_cat < 2 => {
                    return invalid(format!(
                        "categorical variable `{}` needs at least 2 categories",
                        v.name
                    ))
                }
                VariableKind::Continuous if n_cat != 0 => {
                    return invalid(format!("continuous variable `{}` lists categories", v.name))
                }
                _ => {}
            }
            let distinct: HashSet<&String> = v.categories.iter().collect();
            if distinct.len() != n_cat {
                return invalid(format!("variable `{}` repeats a category", v.name));
            }
        }
        Ok(())
    }

    pub fn variable(&self, name: &str) -> Option<&VariableSpec> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn moderators(&self) -> impl Iterator<Item = &VariableSpec> {
        self.variables.iter().filter(|v| v.moderator)
    }

    /// Groups in order of first appearance, each with its member variables.
    pub fn groups(&self) -> Vec<(String, Vec<&VariableSpec>)> {
        let mut groups: Vec<(String, Vec<&VariableSpec>)> = Vec::new();
        for v in &self.variables {
            match groups.iter_mut().find(|(g, _)| *g == v.group) {
                Some((_, members)) => members.push(v),
                None => groups.push((v.group.clone(), vec![v])),
            }
        }
        groups
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("schema serializes to json");
        hex::encode(Sha256::digest(&canonical))
    }
}
