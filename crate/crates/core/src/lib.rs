pub mod analytics;
pub mod dsl;
pub mod frictions;
pub mod learner;
pub mod optimizer;
pub mod panel;
pub mod portfolio;
pub mod runner;
pub mod stats;
