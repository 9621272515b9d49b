//! Web-agent harness: site crawling, task generation, popup synthesis, the
//! observe-think-act episode loop, model clients, and benchmark scoring.

pub mod agent;
pub mod browser;
pub mod crawler;
pub mod eval;
pub mod geometry;
pub mod imaging;
pub mod model;
pub mod observation;
pub mod popup;
pub mod task;
pub mod taskgen;
