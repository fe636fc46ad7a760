//! City-scale IoT data hub: feed registry, EEML and Hypercat codecs,
//! time series storage, access policy, REST service and a CSV edge adapter.

pub mod adapter;
pub mod auth;
pub mod cli;
pub mod client;
pub mod eeml;
pub mod egress;
pub mod error;
pub mod fixtures;
pub mod http;
pub mod hub;
pub mod hypercat;
pub mod ingress;
pub mod log;
pub mod model;
pub mod registry;
pub mod store;

pub use error::HubError;
pub use hub::{Hub, HubOptions};
