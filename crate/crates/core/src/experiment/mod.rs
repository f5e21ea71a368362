//! Experiment configuration and the simulate → reconstruct → evaluate
//! pipelines behind the command-line tool.

mod config;
mod pipeline;
mod sweep;

pub use config::{ExperimentConfig, MethodKind, Metric, PatternSpec, SceneSource};
pub use pipeline::{
    load_dataset, load_simulation, make_dataset, quality, reconstruct, save_dataset, save_simulation, scene,
    scene_for_seed, simulate, Simulation, StoredSimulation, TRAINING_SCENE_SEED_BASE,
};
pub use sweep::{
    dedup_sorted, depth_csv, exposure_csv, ista_network, sweep_depth, sweep_exposures, DepthRow, ExposureRow,
    DEPTH_CSV_HEADER, EXPOSURE_CSV_HEADER,
};
