pub mod arc_graph;
pub mod autodiff;
pub mod baselines;
pub mod bench;
pub mod config;
pub mod env;
pub mod error;
pub mod features;
pub mod instance;
pub mod model;
pub mod path_opt;
pub mod shortest_path;
pub mod solution;
pub mod teacher;
pub mod training;

pub use error::{CarpError, Result};
