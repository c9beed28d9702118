//! Stateful, grammar-based fuzzing for service-based core REST APIs.

pub mod checkers;
pub mod clock;
pub mod detect;
pub mod engine;
pub mod grammar;
pub mod http;
pub mod oauth;
pub mod spec;
