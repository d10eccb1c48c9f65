//! Command-line front end for `uqot`: instance and result files, the
//! subcommands, and the self-test suites.

pub mod commands;
pub mod io;
pub mod oracle;
pub mod random;
pub mod selftest;
