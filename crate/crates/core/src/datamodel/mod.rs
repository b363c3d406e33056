//! Dataset containers, validation and the `TSR1` tensor file format.

pub mod container;
mod io;
pub mod kv;
mod types;

pub use container::{read_tensor, read_tensor_f64, write_tensor, write_tensor_f64};
pub(crate) use io::{csv_err, write_csv};
pub use io::{load_dataset, load_prompt_table, read_two_column_csv, write_dataset, write_prompt_tables, PROMPT_STYLES};
pub use types::{
    GroundEmbeddingSet, LabeledDataset, PromptEmbeddingTable, SpectralTemporalCube, AGGREGATE_MONTH, DIRECTIONS,
};
