//! Configurable experiment runner behind the command-line tool.

pub mod config;
pub mod emit;
pub mod families;
pub mod run;

pub use config::{ExperimentConfig, ExperimentKind, RectGrid, Tolerances};
pub use emit::{write_report, Format};
pub use families::{gen_family, FamilyDescriptor};
pub use run::{run_experiment, Check, ScanReport};
