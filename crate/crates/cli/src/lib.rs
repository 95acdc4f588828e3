//! Binary support: configuration, HTTP server and MQTT bridge.

pub mod config;
pub mod mqtt;
pub mod server;
