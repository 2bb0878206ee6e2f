//! Core of the method-engineering workbench for cloud migration: the
//! metamodel, its seeded catalog, the rule-driven transformation engine,
//! tailoring, conformance checking, XML interchange and the on-disk store.

pub mod catalog;
pub mod conformance;
pub mod engine;
pub mod error;
pub mod interchange;
pub mod metamodel;
pub mod repository;
pub mod tailoring;

pub use catalog::{applicability_of, export_catalog, load_catalog, shipped_catalog};
pub use conformance::{check_conformance, IssueCode, Severity, ValidationIssue};
pub use engine::{explain_inclusion, instantiate, InstantiationError, TransformationRule};
pub use error::{CatalogError, IntegrityViolation, UnknownFragment};
pub use interchange::{export_xml, import_xml, InterchangeError};
pub use metamodel::*;
pub use repository::{RepositoryError, Store};
pub use tailoring::{apply, replay, FragmentSpec, TailoringAction, TailoringError};
