//! Simulator and toolchain for UAV-supported generation of indoor 3D radio
//! environment maps (REMs).
//!
//! The pipeline mirrors a real measurement campaign: a synthetic radio
//! environment ([`radioenv`]) stands in for the building's Wi-Fi access
//! points, simulated UAVs fly waypoint missions and collect location-annotated
//! beacon samples ([`fleetsim`], [`mission`]), the sample log is preprocessed
//! into a feature matrix ([`dataset`]), RSS estimators are fitted and compared
//! ([`estimators`]), and a voxelized REM is exported ([`evalrem`]).
//!
//! Every stage is deterministic given its seed; stages compose through files
//! (JSONL sample logs, JSON reports, CSV tables) driven by the `remforge` CLI.

pub mod cli;
pub mod core;
pub mod dataset;
pub mod estimators;
pub mod evalrem;
pub mod fleetsim;
pub mod mission;
pub mod radioenv;
