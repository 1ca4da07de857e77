//! Deterministic discrete-event simulator for TCP congestion-control variants
//! over mobile wireless sensor networks, with optional proxy aggregation.

pub mod app;
pub mod metrics;
pub mod phy_mac;
pub mod routing;
pub mod scenario;
pub mod sim;
pub mod transport;
pub mod world;
