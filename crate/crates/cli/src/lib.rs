//! Library side of the `coupling` command-line tool.

pub mod commands;
pub mod input;
