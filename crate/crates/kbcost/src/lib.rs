//! File formats, reports, oracles and commands for the `kbcost` tool.

pub mod cli;
pub mod commands;
pub mod error;
pub mod gen;
pub mod io;
pub mod oracle;
pub mod report;
pub mod verify;
