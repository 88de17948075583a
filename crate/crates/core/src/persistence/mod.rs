//! On-disk formats: the binary map file, parameter files and CSV reports.

pub mod config;
pub mod map_file;
pub mod reports;

pub use config::{dump_config, load_config, parse_config, save_config, ConfigError, CONFIG_KEYS};
pub use map_file::{decode_map, encode_map, encoded_len, load_map, save_map, MapFileError};
pub use reports::{
    read_hypotheses, read_labels, write_bench, write_hypotheses, write_labels, write_pr_curve, HypothesisRow,
    ReportError,
};
