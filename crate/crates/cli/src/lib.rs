//! Scenario-driven runner for `nfdist`: TOML scenarios in, CSV/JSON
//! artifacts and a run manifest out.

pub mod run;
pub mod scenario;

pub use run::{config_hash, execute, load, Outcome, RunError, RunOptions};
pub use scenario::{Experiment, Scenario, SchemaError};

/// Scenarios shipped with the binary, as `(name, toml)`.
pub const BUNDLED: &[(&str, &str)] = &[
    ("fig3", include_str!("../scenarios/fig3.toml")),
    ("fig4", include_str!("../scenarios/fig4.toml")),
    ("fig5a", include_str!("../scenarios/fig5a.toml")),
    ("fig5b", include_str!("../scenarios/fig5b.toml")),
    ("fig6a", include_str!("../scenarios/fig6a.toml")),
    ("fig7b", include_str!("../scenarios/fig7b.toml")),
    ("fig6-rates", include_str!("../scenarios/fig6-rates.toml")),
    ("fig7-rates", include_str!("../scenarios/fig7-rates.toml")),
    ("fig8", include_str!("../scenarios/fig8.toml")),
    ("calibrate-evm3", include_str!("../scenarios/calibrate-evm3.toml")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}
