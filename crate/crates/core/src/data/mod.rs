//! Dataset schema, CSV tables, and the encoded design matrix.

mod design;
mod schema;
mod table;

pub use design::{
    column_group_index, encode, encode_outcome, encode_predictors, encode_with,
    expand_interactions, interaction_pairs, BinaryOutcome, ColumnMeta, DesignMatrix, EncodeOptions, GroupIndex,
    InteractionTerm,
};
pub use schema::{DatasetSchema, OutcomeSpec, VariableKind, VariableSpec};
pub use table::RawTable;
