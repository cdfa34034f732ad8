pub mod model;
pub mod rate;
pub mod coding;
pub mod sim;
