//! Reference reconfiguration scripts shipped with the crate.

/// Installs monitoring with a debug metric and starts the scanner.
pub const MONITORING: &str = include_str!("../scripts/monitoring.mvv");
/// Places a CryptoCOS between the demo emitter and receiver.
pub const INTERPOSE: &str = include_str!("../scripts/interpose.mvv");
/// Removes `connect` from the node's vocabulary.
pub const RESTRICT: &str = include_str!("../scripts/restrict.mvv");
/// Starts the demo topology with a 1 ms send interval.
pub const DEMO: &str = include_str!("../scripts/demo.mvv");
