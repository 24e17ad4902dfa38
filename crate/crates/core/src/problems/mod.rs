//! Benchmark problems and their data sources.

mod libsvm;
mod quadratic;
mod robust;

pub use libsvm::{
    jl_min_dim, parse_libsvm, parse_libsvm_reader, sparse_random_project, LibsvmDataset,
};
pub use quadratic::QuadraticNCSC;
pub use robust::{biweight, gen_synthetic, RegressionData, RobustRegression};
