//! Experiment configuration, file formats and end-to-end orchestration.

mod config;
mod formats;
mod run;

pub use config::{
    kappa_for_rate_ratio, AnalysisConfig, CouplingConfig, EmitterCounts, EnsembleConfig,
    EstimatorChoice, ExperimentConfig, LifetimeComponent, OutputConfig, StreamFormat,
};
pub use formats::{
    histogram_stream_csv, read_histogram_csv, read_json, read_stream_binary, read_stream_csv,
    read_stream_file, to_json_string, write_histogram_csv, write_json, write_stream_binary,
    write_stream_csv, StreamCsvReader, Versioned, BINARY_MAGIC,
};
pub use run::{
    analyze_particle, dominant_lifetime, run_pipeline, simulate_particle, slow_lifetime,
    ErrorReport, LifetimeChoice, LifetimeSource, ParticleRecord, RunReport,
};
