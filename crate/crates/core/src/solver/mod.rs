pub mod alternate;
pub mod barrier;
pub mod ipm;
pub mod region;
pub mod simplex;
