//! Scenario-driven batch runner for the topovar curvature library: parse a
//! declarative TOML scenario, execute the named experiment, and write a CSV
//! of the sweep, a JSON summary of fits and assertions, and a TOML echo of
//! the fully resolved configuration.

pub mod runner;
pub mod scenario;
