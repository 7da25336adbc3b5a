pub mod cli;
pub mod config;
pub mod eval;
pub mod golden;
pub mod http_backend;
pub mod runner;
pub mod sim_server;
