pub mod dataset;
pub mod error;
pub mod generator;
pub mod grammar;
pub mod inference;
pub mod learner;
pub mod parallel;
pub mod params;
pub mod rng;
pub mod statistics;
pub mod theory;
