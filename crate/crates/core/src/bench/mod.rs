//! Synthetic datasets, method dispatch and benchmark reports.

mod generator;
mod report;

pub use generator::{
    dataset_instance, generate_dataset, generate_instance, instances_to_text, parse_instances, relative_neighborhood,
    DatasetSpec,
};
pub use report::{gap_percent, run_benchmark, solve_with, BenchReport, DecodeChoice, Method, MethodRow, SolveSettings};
