//! Benchmark data and the experiment driver.

pub mod dataset;
pub mod experiment;
pub mod house;
pub mod synthetic;

pub use dataset::{load_dataset, write_synthetic, Dataset, Manifest, PairEntry};
pub use experiment::{
    bp_series, emit_plot_data, run_experiment, write_report, BpRow, DataSource, ExperimentConfig,
    ExperimentReport, Method, ReportRow,
};
pub use house::{angular_order, frame_paths, house_pairs, load_frames, split_thirds};
pub use synthetic::{gen_synthetic, Silhouette, SyntheticConfig, SyntheticDataset, SyntheticImage};
