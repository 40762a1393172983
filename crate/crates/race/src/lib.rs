//! Driver side of the optimizer: the equivalence oracle, reports and the
//! kernels shipped with the crate.

pub mod kernels;
pub mod oracle;
pub mod report;
