pub mod dataset;
pub mod osap;
pub mod sweep;
