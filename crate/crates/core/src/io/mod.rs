//! Dataset ingestion, synthetic ground truth and file exports.

pub mod map_file;
pub mod ply;
pub mod sequence;
pub mod synthetic;
pub mod trajectory;
pub mod tum;
