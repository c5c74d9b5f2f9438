//! IO, file formats and the command-line front end for the door-feel
//! pipeline. The numerics live in `doorfeel-core`; this crate adds CSV
//! and JSON interchange, a versioned checkpoint format, a worker-pool
//! LOOCV driver and the `doorfeel` binary.

pub mod checkpoint;
pub mod cli;
pub mod csv_io;
pub mod formats;
pub mod runner;
