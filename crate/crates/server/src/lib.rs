//! JSON search API over a frozen keyframe index.
//!
//! [`service::Service`] does the work and knows nothing about HTTP; [`http`]
//! maps routes onto it. Every failure is an [`api::ApiError`] with a code
//! from a closed set and the HTTP status that code implies.

pub mod api;
pub mod http;
pub mod service;

pub use api::{ApiError, ErrorCode, SearchResponse};
pub use http::{router, serve};
pub use service::{RewriterSettings, Service};
