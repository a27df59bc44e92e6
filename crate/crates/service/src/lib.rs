//! Annotation campaign service.
//!
//! A campaign moves through subject-matter labeling, then severity
//! judgments over best-worst tuples, then closes. Every change is an event in
//! an append-only JSONL log per campaign; state is rebuilt by replaying it.
//! [`http::router`] exposes the service over HTTP/JSON.

pub mod clock;
pub mod config;
pub mod error;
pub mod events;
pub mod http;
pub mod log;
pub mod service;
pub mod state;

pub use clock::{Clock, ManualClock, SystemClock};
pub use config::ServiceConfig;
pub use error::{ExposureScope, ServiceError};
pub use service::{Acknowledgment, Credentials, Invite, Service, TaskAssignment, TaskPayload};
pub use state::{Answer, CampaignStatus};
