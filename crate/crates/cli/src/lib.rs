//! Configuration, presets, and run/sweep execution behind the `tlbsim`
//! binary. The simulator itself lives in `tlbsim-core`.

pub mod config;
pub mod presets;
pub mod runner;

pub use config::{load_config, load_sweep_config, ConfigError, RunConfig, SweepConfig, SweepVariant, TraceSource};
pub use presets::{preset_rows, render_presets_table, Preset};
pub use runner::{run, sweep, RunError, SweepReport, SweepRow};
