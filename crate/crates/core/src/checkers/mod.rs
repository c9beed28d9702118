//! Targeted mutation passes. Each is a pure, finite generator; sending the
//! variants is the engine's job.

mod cross_service;
mod malformed;
mod omission;
mod payload;
mod status_mapping;

pub use cross_service::{cross_service_probes, CrossProbe};
pub use malformed::{malformed_variants, MALFORMATIONS};
pub use omission::omission_variants;
pub use payload::payload_variants;
pub use status_mapping::{status_mapping_checker, DeclaredStatuses, StatusFinding, StatusFindingKind};

pub const PAYLOAD_BODY: &str = "payload_body";
pub const OPTIONAL_PARAM_OMISSION: &str = "optional_param_omission";
pub const MALFORMED_VALUE: &str = "malformed_value";
pub const CROSS_SERVICE_TOKEN: &str = "cross_service_token";
pub const STATUS_MAPPING: &str = "status_mapping";
