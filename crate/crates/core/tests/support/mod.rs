//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

pub mod grads;
pub mod metrics;
pub mod resample;
