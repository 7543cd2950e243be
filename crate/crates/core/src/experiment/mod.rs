//! Seeded end-to-end scenarios, parameter sweeps and their result tables.

mod config;
mod records;
mod run;
mod sweep;
mod table;
mod validate;

pub use config::{
    ClassifierSettings, DeliveryMode, DeliverySettings, DetectionSettings, InfeasiblePolicy, KPolicy, MobilityConfig,
    ProfileConfig, ScenarioConfig, TopologyConfig,
};
pub use records::{
    pr_rows, rank_rows, satisfaction_rows, share_rows, PrRow, RankRow, RespondentRow, SatisfactionRow, ShareRow,
};
pub use run::{run_scenario, RunRecord, Scenario, Truth, World};
pub use sweep::{
    sweep_gt_density, sweep_performance_cloud, sweep_xi_mu, users_for_density, CloudPoint, Crossover, DensityRow,
    DensityTable, DensityTag, Summary, XiMuCell,
};
pub use table::{
    emit_results, format_float, parse_table, read_table, render_table, round_float, write_table, Cell, Format,
    Metadata, Row, Tabular,
};
pub use validate::{validate_scenario, Check};

/// Header for tables derived from `config`.
pub fn scenario_metadata(kind: &str, config: &ScenarioConfig) -> Metadata {
    Metadata::new(kind)
        .with("generator", concat!("qoesim ", env!("CARGO_PKG_VERSION")))
        .with("config_hash", config.hash())
        .with("config", config.to_toml().trim_end().to_string())
}
