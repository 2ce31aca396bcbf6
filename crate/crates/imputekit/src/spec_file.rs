//! JSON model files that name columns instead of indexing them.
//!
//! ```json
//! {
//!   "columns": [{"name": "y1", "kind": "binary"}],
//!   "models": [
//!     {"target": "y1", "family": "logistic", "terms": ["intercept", "x1", "x1:y2"]},
//!     {"target": "x1", "family": "linear", "terms": ["intercept", "y1"], "prior": "jeffreys"}
//!   ],
//!   "analysis": {"model": "linear", "target": "x1", "terms": ["intercept", "y1"]}
//! }
//! ```
//!
//! Models are visited in file order. Terms are `intercept`, a column name,
//! or two column names joined by `:`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use imputekit_core::combine::AnalysisModel;
use imputekit_core::condmodels::{ConditionalModelSpec, Family, LinearPrior, Term};
use imputekit_core::data::{ColumnKind, DataMatrix};

use crate::error::{Error, Result};
use crate::report::read_json;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedSpec {
    pub target: String,
    pub family: Family,
    pub terms: Vec<String>,
    #[serde(default)]
    pub prior: LinearPrior,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase", deny_unknown_fields)]
pub enum NamedAnalysis {
    Linear { target: String, terms: Vec<String> },
    Logistic { target: String, terms: Vec<String> },
    Gaussian { columns: Vec<String> },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    /// Kind overrides; columns not listed keep their inferred kind.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<ColumnSchema>,
    #[serde(default)]
    pub models: Vec<NamedSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<NamedAnalysis>,
}

fn column(dm: &DataMatrix, name: &str) -> Result<usize> {
    dm.column_index(name)
        .ok_or_else(|| Error::Config(format!("no column named `{name}`")))
}

pub fn parse_term(dm: &DataMatrix, term: &str) -> Result<Term> {
    if term == "intercept" {
        return Ok(Term::Intercept);
    }
    match term.split_once(':') {
        Some((a, b)) => Ok(Term::Interaction(column(dm, a.trim())?, column(dm, b.trim())?)),
        None => Ok(Term::Main(column(dm, term)?)),
    }
}

fn parse_terms(dm: &DataMatrix, terms: &[String]) -> Result<Vec<Term>> {
    terms.iter().map(|t| parse_term(dm, t)).collect()
}

impl SpecFile {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// `dm` with the kind overrides applied.
    pub fn apply_schema(&self, dm: DataMatrix) -> Result<DataMatrix> {
        if self.columns.is_empty() {
            return Ok(dm);
        }
        let mut kinds = dm.kinds().to_vec();
        for c in &self.columns {
            kinds[column(&dm, &c.name)?] = c.kind;
        }
        Ok(dm.with_kinds(kinds)?)
    }

    /// Index-based specs in visit order, validated against `dm`.
    pub fn resolve(&self, dm: &DataMatrix) -> Result<Vec<ConditionalModelSpec>> {
        self.models
            .iter()
            .map(|s| {
                let spec = ConditionalModelSpec {
                    target: column(dm, &s.target)?,
                    family: s.family,
                    terms: parse_terms(dm, &s.terms)?,
                    prior: s.prior,
                };
                spec.validate(dm)?;
                Ok(spec)
            })
            .collect()
    }

    pub fn resolve_analysis(&self, dm: &DataMatrix) -> Result<Option<AnalysisModel>> {
        self.analysis.as_ref().map(|a| a.resolve(dm)).transpose()
    }
}

impl NamedAnalysis {
    pub fn resolve(&self, dm: &DataMatrix) -> Result<AnalysisModel> {
        Ok(match self {
            NamedAnalysis::Linear { target, terms } => AnalysisModel::Linear {
                target: column(dm, target)?,
                terms: parse_terms(dm, terms)?,
            },
            NamedAnalysis::Logistic { target, terms } => AnalysisModel::Logistic {
                target: column(dm, target)?,
                terms: parse_terms(dm, terms)?,
            },
            NamedAnalysis::Gaussian { columns } => AnalysisModel::Gaussian {
                columns: columns.iter().map(|c| column(dm, c)).collect::<Result<_>>()?,
            },
        })
    }
}
