pub mod dba;
pub mod error;
pub mod eval;
pub mod exec;
pub mod experiments;
pub mod flow;
pub mod frame;
pub mod gaussian_map;
pub mod geometry;
pub mod image;
pub mod io;
pub mod local_graph;
pub mod optimizer;
pub mod pipeline;
pub mod renderer;
