pub mod analysis;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod models;
pub mod noise;
pub mod solver;
