//! A q-calculus engine and auditor for quantum Montgomery-type identities and
//! the integral inequalities built on them.

pub mod campaign;
pub mod config;
pub mod corpus;
pub mod error;
pub mod inequalities;
pub mod moments;
pub mod montgomery;
pub mod numfmt;
pub mod qcore;
pub mod qops;
pub mod report;

pub use campaign::{run_audit, AuditRecord, AuditReport};
pub use config::{AuditKind, CampaignConfig, OutputFormat};
pub use error::{QError, Result};
pub use qcore::{Interval, QParam, SeriesResult, TruncationPolicy};
pub use qops::FuncSpec;
pub use report::emit_report;
