//! Kappa-gated study selection for systematic reviews.
//!
//! Two reviewers screen random batches of a study catalog independently.
//! After each batch Cohen's kappa is computed from their verdicts; once it
//! exceeds the threshold the rest of the catalog is split between them.
//!
//! - [`agreement`]: contingency tables, kappa and its companion statistics
//! - [`protocol`]: the review session state machine
//! - [`timing`]: the time-saving model
//! - [`store`]: catalog import, session documents, reports, audit log

pub mod agreement;
pub mod casestudy;
pub mod protocol;
pub mod store;
pub mod timing;
