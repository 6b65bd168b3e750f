//! Command-line and HTTP front ends for the debunking engine, including the
//! blind annotation study and its append-only record log.

pub mod cli;
pub mod config;
pub mod reports;
pub mod service;
pub mod store;
pub mod study;
