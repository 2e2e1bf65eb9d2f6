//! Fairness audit of LLM university recommendations: synthetic student
//! profiles, prompt rendering, response ingestion, catalog resolution and
//! the demographic (DRS) and geographic (GRS) representation scores.

pub mod catalog;
pub mod config;
pub mod error;
pub mod geodesy;
pub mod ingest;
pub mod llmclient;
pub mod metrics;
pub mod pipeline;
pub mod profiles;
pub mod report;
pub mod taxonomy;
pub mod text;

pub use catalog::{reputation, Catalog, MatchResult, MatchStatus, University};
pub use config::RunConfig;
pub use error::{Error, ErrorKind, Result};
pub use geodesy::{country_distance, vincenty_distance, CapitalTable, CountryId, Distance, GeoPoint};
pub use ingest::{parse_response, RawResponse, RecommendationRecord, RunLog};
pub use llmclient::{ChatBackend, HttpChatBackend, ModelEndpointConfig};
pub use metrics::{CountryGrsResult, DrsComponents, ScoredRecord};
pub use profiles::{EconomicClass, Gender, PromptInstance, StudentProfile, Variant};
pub use report::{GroupAggregate, GrsScope};
pub use taxonomy::{SubjectTag, TagSet, Tagger};
