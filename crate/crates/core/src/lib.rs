pub mod ergm;
pub mod error;
pub mod network;
pub mod seed;
pub mod stats;
pub mod intervention;
pub mod estimators;
pub mod io;
pub mod simlab;
