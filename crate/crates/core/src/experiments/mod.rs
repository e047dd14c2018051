//! Experiment campaigns: configuration, presets, execution, CSV output,
//! lower-bound experiments and pilot calibration.

pub mod calibration;
pub mod campaign;
pub mod config;
pub mod lower_bounds;
pub mod presets;

pub use calibration::{calibrate, committed, Calibration};
pub use campaign::{
    run_campaign, run_campaign_with, write_csv, write_csv_to, write_meta, CampaignResult, CampaignRow,
    RunOptions,
};
pub use config::{parse_config, parse_config_str, Campaign, GridPoint, ProcessConfig, SweepAxis, SweepField};
pub use lower_bounds::{first_batch_lower_bound, log_lower_experiment, poisson_min_gap};
pub use presets::{preset, Preset, Scale};
