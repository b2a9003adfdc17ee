pub mod geometry;
pub mod baselines;
pub mod episodes;
pub mod fitting;
pub mod grammar;
pub mod harness;
pub mod inference;
pub mod interpreter;
pub mod num;
pub mod token;
pub mod trials;
