//! Protocol tables and compositionality metrics over them.
//!
//! All mutual information is the plug-in estimate in nats.

mod disentangle;
mod report;
mod table;
mod topsim;

pub use disentangle::{
    bosdis, compositional_rate, discrete_mi, gap_ratio, mi_matrix, mutual_information, posdis, specialization_ratio,
    MiMatrix, EPS,
};
pub use report::MetricReport;
pub use table::ProtocolTable;
pub use topsim::{spearman, topsim, TopSim, TOPSIM_MAX_ROWS};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("protocol table is empty")]
    EmptyTable,
    #[error("need at least 2 attributes, table has {0}")]
    TooFewAttributes(usize),
    #[error("ragged table: {0}")]
    Shape(String),
    #[error("value {value} out of range in column {column}")]
    OutOfRange { column: usize, value: usize },
    #[error("csv: {0}")]
    Csv(String),
    #[error("malformed report: {0}")]
    Report(String),
}

pub type Result<T> = std::result::Result<T, MetricError>;
