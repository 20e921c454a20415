//! File formats, reports, maps and the command-line front end.

pub mod cli;
pub mod formats;
pub mod map;
pub mod report;
pub mod results;
