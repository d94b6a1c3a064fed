//! File formats, simulator adapters and the command-line front end for
//! `gcn-sizer-core`.

pub mod artifacts;
pub mod cli;
pub mod external;
pub mod fomfile;
pub mod netlist;
pub mod report;
pub mod tech;
