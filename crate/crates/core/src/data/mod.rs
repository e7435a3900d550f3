//! Dataset ingestion, covariate transforms, design grids, collapsing into the
//! weighted representation, and partitioning by cluster.

mod collapse;
mod dataset;
mod design;
mod schema;
mod transform;

pub use collapse::{collapse, CollapsedDataset};
pub use dataset::{load_csv, partition_by_practice, read_csv, Column, Dataset, Standardization};
pub use design::{enumerate_designs, levels_from_data, Design, DesignGrid};
pub use schema::{format_schema, parse_schema, read_schema, validate_schema, ColumnSchema, Kind, Role};
pub use transform::{bin_column_name, bin_continuous, standardize, BinScheme, BIN_SUFFIX};
