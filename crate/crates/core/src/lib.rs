pub mod analysis;
pub mod controls;
pub mod error;
pub mod exec;
pub mod krotov;
pub mod model;
pub mod propagation;
pub mod protocols;
pub mod units;
