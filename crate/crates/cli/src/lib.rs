//! Command-line front end for `rainbow-hedge`: TOML job files, payoff
//! expressions and deterministic output tables.

pub mod config;
pub mod expr;
pub mod run;
