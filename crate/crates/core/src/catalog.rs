//! The seeded metamodel and its structured-text document format.
//!
//! A catalog document is TOML with kebab-case keys: a mandatory
//! `format-version`, the metamodel `version`, then one array-of-tables
//! block per record (`[[fragment]]`, `[[relationship]]`,
//! `[[applicability]]`, `[[technique]]`, `[[rule]]`). Unknown keys are
//! rejected. See `docs/catalog-format.md`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::engine::TransformationRule;
use crate::error::{CatalogError, IntegrityViolation, UnknownFragment};
use crate::metamodel::{
    ApplicabilityEntry, ApplicabilityLevel, FragmentKind, FragmentRelationship, Metamodel, MethodFragment,
    MigrationType, Provenance, TechniqueTarget,
};

pub const FORMAT_VERSION: u32 = 1;

const SHIPPED: &str = include_str!("../data/catalog.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TechniqueRecord {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub definition: String,
    #[serde(default = "catalog", skip_serializing_if = "is_catalog")]
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance_note: Option<String>,
    #[serde(default)]
    pub operationalizes: Vec<String>,
}

fn catalog() -> Provenance {
    Provenance::Catalog
}

fn is_catalog(p: &Provenance) -> bool {
    *p == Provenance::Catalog
}

/// Serialized form of a [`Metamodel`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CatalogDocument {
    pub format_version: u32,
    pub version: u32,
    #[serde(default, rename = "fragment")]
    pub fragments: Vec<MethodFragment>,
    #[serde(default, rename = "relationship")]
    pub relationships: Vec<FragmentRelationship>,
    #[serde(default)]
    pub applicability: Vec<ApplicabilityEntry>,
    #[serde(default, rename = "technique")]
    pub techniques: Vec<TechniqueRecord>,
    #[serde(default, rename = "rule")]
    pub rules: Vec<TransformationRule>,
}

impl CatalogDocument {
    pub fn from_metamodel(metamodel: &Metamodel) -> CatalogDocument {
        let (techniques, fragments): (Vec<_>, Vec<_>) = metamodel
            .fragments()
            .iter()
            .cloned()
            .partition(|f| f.kind == FragmentKind::Technique);
        let techniques = techniques
            .into_iter()
            .map(|f| TechniqueRecord {
                operationalizes: metamodel
                    .technique_targets()
                    .iter()
                    .filter(|t| t.technique == f.id)
                    .map(|t| t.task.clone())
                    .collect(),
                id: f.id,
                name: f.name,
                definition: f.definition,
                provenance: f.provenance,
                parent: f.parent,
                provenance_note: f.provenance_note,
            })
            .collect();
        CatalogDocument {
            format_version: FORMAT_VERSION,
            version: metamodel.version(),
            fragments,
            relationships: metamodel.relationships().to_vec(),
            applicability: metamodel.applicability().to_vec(),
            techniques,
            rules: metamodel.rules().to_vec(),
        }
    }

    pub fn into_metamodel(self) -> Result<Metamodel, CatalogError> {
        if self.format_version != FORMAT_VERSION {
            return Err(CatalogError::Parse(format!(
                "unsupported format-version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let mut violations = Vec::new();
        for f in &self.fragments {
            if f.kind == FragmentKind::Technique {
                violations.push(IntegrityViolation::new(
                    &f.id,
                    "techniques belong in [[technique]] records",
                ));
            }
        }
        if !violations.is_empty() {
            return Err(CatalogError::Integrity(violations));
        }

        let mut fragments = self.fragments;
        let mut targets = Vec::new();
        for t in self.techniques {
            // Techniques follow the phased fragments in catalog order, which
            // is also the order export writes them back in.
            for task in &t.operationalizes {
                targets.push(TechniqueTarget {
                    technique: t.id.clone(),
                    task: task.clone(),
                });
            }
            fragments.push(MethodFragment {
                id: t.id,
                name: t.name,
                kind: FragmentKind::Technique,
                definition: t.definition,
                phase: None,
                provenance: t.provenance,
                parent: t.parent,
                provenance_note: t.provenance_note,
            });
        }
        Metamodel::new(
            self.version,
            fragments,
            self.relationships,
            self.applicability,
            targets,
            self.rules,
        )
        .map_err(CatalogError::Integrity)
    }
}

pub fn parse_document<T: serde::de::DeserializeOwned>(source: &[u8]) -> Result<T, CatalogError> {
    let text = std::str::from_utf8(source).map_err(|e| CatalogError::Parse(format!("not UTF-8: {e}")))?;
    toml::from_str(text).map_err(|e| CatalogError::Parse(e.to_string().trim_end().to_string()))
}

pub fn write_document<T: Serialize>(doc: &T) -> Vec<u8> {
    toml::to_string(doc)
        .expect("catalog records serialize to TOML")
        .into_bytes()
}

/// Parses and checks a catalog document.
pub fn load_catalog(source: &[u8]) -> Result<Metamodel, CatalogError> {
    parse_document::<CatalogDocument>(source)?.into_metamodel()
}

/// Byte-deterministic serialization; `load_catalog` of the output yields a
/// metamodel equal to the input.
pub fn export_catalog(metamodel: &Metamodel) -> Vec<u8> {
    write_document(&CatalogDocument::from_metamodel(metamodel))
}

/// Text of the catalog shipped with the crate.
pub fn shipped_catalog_source() -> &'static str {
    SHIPPED
}

/// The shipped catalog, loaded once.
pub fn shipped_catalog() -> Metamodel {
    static CATALOG: OnceLock<Metamodel> = OnceLock::new();
    CATALOG
        .get_or_init(|| load_catalog(SHIPPED.as_bytes()).expect("shipped catalog is valid"))
        .clone()
}

/// Matrix lookup. Fragments the matrix does not list for `mt` are
/// Situational without a note.
pub fn applicability_of(
    metamodel: &Metamodel,
    fragment: &str,
    mt: MigrationType,
) -> Result<(ApplicabilityLevel, Option<String>), UnknownFragment> {
    if !metamodel.contains(fragment) {
        return Err(UnknownFragment(fragment.to_string()));
    }
    Ok(match metamodel.entry(fragment, mt) {
        Some(e) => (e.level, e.situation_note.clone()),
        None => (ApplicabilityLevel::Situational, None),
    })
}
