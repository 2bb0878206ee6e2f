//! Domain types for the three modeling levels in scope: the metamodel (M2),
//! method models derived from it (M1) and enacted method instances (M0).

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{Action, Guard, TransformationRule};
use crate::error::{IntegrityViolation, ParseValueError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FragmentKind {
    Phase,
    Task,
    WorkProduct,
    Principle,
    Technique,
}

impl FragmentKind {
    pub const ALL: [FragmentKind; 5] = [
        FragmentKind::Phase,
        FragmentKind::Task,
        FragmentKind::WorkProduct,
        FragmentKind::Principle,
        FragmentKind::Technique,
    ];

    /// Tasks, work products and principles live inside a phase; phases and
    /// techniques do not.
    pub fn is_phased(self) -> bool {
        matches!(
            self,
            FragmentKind::Task | FragmentKind::WorkProduct | FragmentKind::Principle
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FragmentKind::Phase => "Phase",
            FragmentKind::Task => "Task",
            FragmentKind::WorkProduct => "WorkProduct",
            FragmentKind::Principle => "Principle",
            FragmentKind::Technique => "Technique",
        }
    }
}

impl fmt::Display for FragmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FragmentKind {
    type Err = ParseValueError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FragmentKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .or(match s.to_ascii_lowercase().as_str() {
                "work-product" | "work_product" => Some(FragmentKind::WorkProduct),
                _ => None,
            })
            .ok_or_else(|| ParseValueError::new("fragment kind", s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Provenance {
    Catalog,
    UserDefined,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Catalog => "Catalog",
            Provenance::UserDefined => "UserDefined",
        }
    }
}

impl FromStr for Provenance {
    type Err = ParseValueError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Catalog" => Ok(Provenance::Catalog),
            "UserDefined" => Ok(Provenance::UserDefined),
            _ => Err(ParseValueError::new("provenance", s)),
        }
    }
}

fn is_catalog(p: &Provenance) -> bool {
    *p == Provenance::Catalog
}

/// A reusable method fragment. Catalog fragments belong to the metamodel;
/// user-defined ones live inside the method model that created them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct MethodFragment {
    pub id: String,
    pub name: String,
    pub kind: FragmentKind,
    pub definition: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<String>,
    #[serde(default = "catalog_provenance", skip_serializing_if = "is_catalog")]
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance_note: Option<String>,
}

fn catalog_provenance() -> Provenance {
    Provenance::Catalog
}

impl MethodFragment {
    pub fn new(id: impl Into<String>, name: impl Into<String>, kind: FragmentKind) -> Self {
        MethodFragment {
            id: id.into(),
            name: name.into(),
            kind,
            definition: String::new(),
            phase: None,
            provenance: Provenance::Catalog,
            parent: None,
            provenance_note: None,
        }
    }

    pub fn with_phase(mut self, phase: impl Into<String>) -> Self {
        self.phase = Some(phase.into());
        self
    }

    pub fn with_definition(mut self, definition: impl Into<String>) -> Self {
        self.definition = definition.into();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationshipType {
    Uses,
    Follows,
    Produces,
    IsAGroupOf,
    IsAKindOf,
}

/// The relationship family a sub-type belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelationshipCategory {
    Association,
    Aggregation,
    Specialization,
}

impl RelationshipType {
    pub const ALL: [RelationshipType; 5] = [
        RelationshipType::Uses,
        RelationshipType::Follows,
        RelationshipType::Produces,
        RelationshipType::IsAGroupOf,
        RelationshipType::IsAKindOf,
    ];

    pub fn category(self) -> RelationshipCategory {
        match self {
            RelationshipType::Uses | RelationshipType::Follows | RelationshipType::Produces => {
                RelationshipCategory::Association
            }
            RelationshipType::IsAGroupOf => RelationshipCategory::Aggregation,
            RelationshipType::IsAKindOf => RelationshipCategory::Specialization,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelationshipType::Uses => "Uses",
            RelationshipType::Follows => "Follows",
            RelationshipType::Produces => "Produces",
            RelationshipType::IsAGroupOf => "IsAGroupOf",
            RelationshipType::IsAKindOf => "IsAKindOf",
        }
    }
}

impl fmt::Display for RelationshipType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationshipType {
    type Err = ParseValueError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RelationshipType::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ParseValueError::new("relationship type", s))
    }
}

/// Where a relationship came from: the literature (L) or the metamodeling
/// steps (M).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KnowledgeSource {
    L,
    M,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FragmentRelationship {
    #[serde(rename = "type")]
    pub rel_type: RelationshipType,
    pub source: String,
    pub target: String,
    pub knowledge_source: KnowledgeSource,
}

impl FragmentRelationship {
    pub fn new(
        rel_type: RelationshipType,
        source: impl Into<String>,
        target: impl Into<String>,
        knowledge_source: KnowledgeSource,
    ) -> Self {
        FragmentRelationship {
            rel_type,
            source: source.into(),
            target: target.into(),
            knowledge_source,
        }
    }
}

impl fmt::Display for FragmentRelationship {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -{}-> {}", self.source, self.rel_type, self.target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MigrationType {
    I,
    II,
    III,
    IV,
    V,
}

impl MigrationType {
    pub const ALL: [MigrationType; 5] = [
        MigrationType::I,
        MigrationType::II,
        MigrationType::III,
        MigrationType::IV,
        MigrationType::V,
    ];

    pub fn description(self) -> &'static str {
        match self {
            MigrationType::I => {
                "deploying business logic of a legacy application on cloud via IaaS service delivery model"
            }
            MigrationType::II => "replacing or reengineering legacy components with SaaS delivery model",
            MigrationType::III => "deploying legacy database components on cloud data storages",
            MigrationType::IV => "converting legacy database components to cloud database solutions",
            MigrationType::V => "deploying whole legacy application stack on cloud via IaaS service delivery model",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MigrationType::I => "I",
            MigrationType::II => "II",
            MigrationType::III => "III",
            MigrationType::IV => "IV",
            MigrationType::V => "V",
        }
    }
}

impl fmt::Display for MigrationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MigrationType {
    type Err = ParseValueError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        MigrationType::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(t))
            .or(match t {
                "1" => Some(MigrationType::I),
                "2" => Some(MigrationType::II),
                "3" => Some(MigrationType::III),
                "4" => Some(MigrationType::IV),
                "5" => Some(MigrationType::V),
                _ => None,
            })
            .ok_or_else(|| ParseValueError::new("migration type", s))
    }
}

/// Parses a comma-separated list such as `II,V`.
pub fn parse_migration_types(s: &str) -> Result<BTreeSet<MigrationType>, ParseValueError> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
}

pub fn format_migration_types<'a>(types: impl IntoIterator<Item = &'a MigrationType>) -> String {
    types.into_iter().map(|t| t.as_str()).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ApplicabilityLevel {
    Mandatory,
    Situational,
    Unnecessary,
}

impl ApplicabilityLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            ApplicabilityLevel::Mandatory => "Mandatory",
            ApplicabilityLevel::Situational => "Situational",
            ApplicabilityLevel::Unnecessary => "Unnecessary",
        }
    }
}

impl fmt::Display for ApplicabilityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ApplicabilityEntry {
    pub fragment: String,
    pub migration_type: MigrationType,
    pub level: ApplicabilityLevel,
    #[serde(default, rename = "note", skip_serializing_if = "Option::is_none")]
    pub situation_note: Option<String>,
}

/// A technique from the library together with a task it can operationalize.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TechniqueTarget {
    pub technique: String,
    pub task: String,
}

/// The M2 artifact. Construct it through [`Metamodel::new`], which enforces
/// referential integrity and the kind constraints.
#[derive(Debug, Clone)]
pub struct Metamodel {
    version: u32,
    fragments: Vec<MethodFragment>,
    relationships: Vec<FragmentRelationship>,
    applicability: Vec<ApplicabilityEntry>,
    technique_targets: Vec<TechniqueTarget>,
    rules: Vec<TransformationRule>,
    index: HashMap<String, usize>,
    matrix: HashMap<(String, MigrationType), usize>,
}

impl PartialEq for Metamodel {
    fn eq(&self, other: &Self) -> bool {
        self.version == other.version
            && self.fragments == other.fragments
            && self.relationships == other.relationships
            && self.applicability == other.applicability
            && self.technique_targets == other.technique_targets
            && self.rules == other.rules
    }
}

impl Eq for Metamodel {}

impl Metamodel {
    pub fn new(
        version: u32,
        fragments: Vec<MethodFragment>,
        relationships: Vec<FragmentRelationship>,
        applicability: Vec<ApplicabilityEntry>,
        technique_targets: Vec<TechniqueTarget>,
        rules: Vec<TransformationRule>,
    ) -> Result<Metamodel, Vec<IntegrityViolation>> {
        let mut violations = Vec::new();
        let mut index = HashMap::new();
        for (i, f) in fragments.iter().enumerate() {
            if index.insert(f.id.clone(), i).is_some() {
                violations.push(IntegrityViolation::new(&f.id, "duplicate fragment id"));
            }
        }
        let kind_of = |id: &str| index.get(id).map(|&i| fragments[i].kind);

        for f in &fragments {
            if f.id.trim().is_empty() {
                violations.push(IntegrityViolation::new(&f.id, "empty fragment id"));
            }
            if f.name.trim().is_empty() {
                violations.push(IntegrityViolation::new(&f.id, "empty fragment name"));
            }
            match (&f.phase, f.kind.is_phased()) {
                (Some(p), true) => match kind_of(p) {
                    Some(FragmentKind::Phase) => {}
                    Some(k) => violations.push(IntegrityViolation::new(
                        &f.id,
                        format!("phase `{p}` is a {k}, not a Phase"),
                    )),
                    None => violations.push(IntegrityViolation::new(
                        p,
                        format!("phase of `{}` does not resolve", f.id),
                    )),
                },
                (None, true) => violations.push(IntegrityViolation::new(
                    &f.id,
                    format!("{} fragment has no phase", f.kind),
                )),
                (Some(_), false) => violations.push(IntegrityViolation::new(
                    &f.id,
                    format!("{} fragment must not have a phase", f.kind),
                )),
                (None, false) => {}
            }
            if let Some(parent) = &f.parent {
                match kind_of(parent) {
                    Some(k) if k == f.kind => {}
                    Some(k) => violations.push(IntegrityViolation::new(
                        &f.id,
                        format!("parent `{parent}` is a {k}, expected {}", f.kind),
                    )),
                    None => violations.push(IntegrityViolation::new(
                        parent,
                        format!("parent of `{}` does not resolve", f.id),
                    )),
                }
            }
        }

        let mut seen_rel = HashSet::new();
        for r in &relationships {
            if r.source == r.target {
                violations.push(IntegrityViolation::new(&r.source, format!("self relationship {r}")));
            }
            if !seen_rel.insert(r) {
                violations.push(IntegrityViolation::new(
                    &r.source,
                    format!("duplicate relationship {r}"),
                ));
            }
            for end in [&r.source, &r.target] {
                if kind_of(end).is_none() {
                    violations.push(IntegrityViolation::new(
                        end,
                        format!("{} relationship {r} references an unknown fragment", r.rel_type),
                    ));
                }
            }
            match (r.rel_type, kind_of(&r.target)) {
                (RelationshipType::IsAGroupOf, Some(k)) if k != FragmentKind::Phase => violations.push(
                    IntegrityViolation::new(&r.target, format!("IsAGroupOf target is a {k}, not a Phase ({r})")),
                ),
                (RelationshipType::Produces, Some(k)) if k != FragmentKind::WorkProduct => violations.push(
                    IntegrityViolation::new(&r.target, format!("Produces target is a {k}, not a WorkProduct ({r})")),
                ),
                _ => {}
            }
        }

        let mut matrix = HashMap::new();
        for (i, e) in applicability.iter().enumerate() {
            if kind_of(&e.fragment).is_none() {
                violations.push(IntegrityViolation::new(
                    &e.fragment,
                    format!(
                        "applicability entry for type {} references an unknown fragment",
                        e.migration_type
                    ),
                ));
            }
            if matrix.insert((e.fragment.clone(), e.migration_type), i).is_some() {
                violations.push(IntegrityViolation::new(
                    &e.fragment,
                    format!("duplicate applicability entry for type {}", e.migration_type),
                ));
            }
            if e.level == ApplicabilityLevel::Situational && e.situation_note.is_none() {
                violations.push(IntegrityViolation::new(
                    &e.fragment,
                    format!("Situational entry for type {} has no situation note", e.migration_type),
                ));
            }
        }

        for t in &technique_targets {
            match kind_of(&t.technique) {
                Some(FragmentKind::Technique) => {}
                Some(k) => violations.push(IntegrityViolation::new(
                    &t.technique,
                    format!("technique target is a {k}, not a Technique"),
                )),
                None => violations.push(IntegrityViolation::new(&t.technique, "technique does not resolve")),
            }
            match kind_of(&t.task) {
                Some(FragmentKind::Task) => {}
                Some(k) => violations.push(IntegrityViolation::new(
                    &t.task,
                    format!("technique `{}` operationalizes a {k}, not a Task", t.technique),
                )),
                None => violations.push(IntegrityViolation::new(
                    &t.task,
                    format!("task operationalized by `{}` does not resolve", t.technique),
                )),
            }
        }

        let mut rule_ids = HashSet::new();
        for rule in &rules {
            if !rule_ids.insert(rule.rule_id.as_str()) {
                violations.push(IntegrityViolation::new(&rule.rule_id, "duplicate rule id"));
            }
            let mut phases = Vec::new();
            if let Guard::PhaseSelected { phase } = &rule.guard {
                phases.push(phase);
            }
            if let Action::IncludeFragments(sel) = &rule.action {
                phases.extend(sel.phase.iter());
            }
            for p in phases {
                if kind_of(p) != Some(FragmentKind::Phase) {
                    violations.push(IntegrityViolation::new(
                        p,
                        format!("rule {} references `{p}`, which is not a Phase", rule.rule_id),
                    ));
                }
            }
        }

        if !violations.is_empty() {
            return Err(violations);
        }
        Ok(Metamodel {
            version,
            fragments,
            relationships,
            applicability,
            technique_targets,
            rules,
            index,
            matrix,
        })
    }

    pub fn empty(version: u32) -> Metamodel {
        Metamodel::new(version, vec![], vec![], vec![], vec![], vec![]).expect("an empty metamodel is consistent")
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn fragments(&self) -> &[MethodFragment] {
        &self.fragments
    }

    pub fn relationships(&self) -> &[FragmentRelationship] {
        &self.relationships
    }

    pub fn applicability(&self) -> &[ApplicabilityEntry] {
        &self.applicability
    }

    pub fn technique_targets(&self) -> &[TechniqueTarget] {
        &self.technique_targets
    }

    pub fn rules(&self) -> &[TransformationRule] {
        &self.rules
    }

    pub fn fragment(&self, id: &str) -> Option<&MethodFragment> {
        self.index.get(id).map(|&i| &self.fragments[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Position of a fragment in catalog order.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn entry(&self, fragment: &str, mt: MigrationType) -> Option<&ApplicabilityEntry> {
        self.matrix
            .get(&(fragment.to_string(), mt))
            .map(|&i| &self.applicability[i])
    }

    /// Phase fragments in catalog order.
    pub fn phases(&self) -> impl Iterator<Item = &MethodFragment> {
        self.fragments.iter().filter(|f| f.kind == FragmentKind::Phase)
    }

    /// Techniques the library suggests for a task.
    pub fn techniques_for(&self, task: &str) -> Vec<&str> {
        self.technique_targets
            .iter()
            .filter(|t| t.task == task)
            .map(|t| t.technique.as_str())
            .collect()
    }

    /// Resolves a phase given either its id or its name (case-insensitive).
    pub fn resolve_phase(&self, key: &str) -> Option<&MethodFragment> {
        let key = key.trim();
        self.fragment(key)
            .filter(|f| f.kind == FragmentKind::Phase)
            .or_else(|| {
                self.phases()
                    .find(|p| p.name.eq_ignore_ascii_case(key) || p.id.eq_ignore_ascii_case(key))
            })
    }
}

/// All relationships of the metamodel, optionally restricted to one type,
/// in catalog order.
pub fn relationship_set(metamodel: &Metamodel, filter: Option<RelationshipType>) -> Vec<FragmentRelationship> {
    metamodel
        .relationships()
        .iter()
        .filter(|r| filter.is_none_or(|t| r.rel_type == t))
        .cloned()
        .collect()
}

/// First character that XML 1.0 documents cannot carry, if any. Method
/// text must avoid these so every stored method stays exportable.
pub fn illegal_xml_char(s: &str) -> Option<char> {
    s.chars()
        .find(|&c| !matches!(c, '\t' | '\n' | '\r' | '\u{20}'..='\u{D7FF}' | '\u{E000}'..='\u{FFFD}' | '\u{10000}'..))
}

/// Stable slug used for fragment and method ids: lowercase ASCII
/// alphanumerics separated by single hyphens.
pub fn slugify(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut pending_dash = false;
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            if pending_dash && !out.is_empty() {
                out.push('-');
            }
            pending_dash = false;
            out.push(c.to_ascii_lowercase());
        } else {
            pending_dash = true;
        }
    }
    out
}

/// A fragment included in a method model, with an optional local definition
/// that shadows the catalog text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FragmentInclusion {
    pub fragment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub definition_override: Option<String>,
    /// Situation note carried over from the applicability matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl FragmentInclusion {
    pub fn new(fragment: impl Into<String>) -> Self {
        FragmentInclusion {
            fragment: fragment.into(),
            definition_override: None,
            note: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SequenceEdge {
    pub from: String,
    pub to: String,
}

impl SequenceEdge {
    pub fn new(from: impl Into<String>, to: impl Into<String>) -> Self {
        SequenceEdge {
            from: from.into(),
            to: to.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TechniqueBinding {
    pub task: String,
    pub technique: String,
}

impl TechniqueBinding {
    pub fn new(task: impl Into<String>, technique: impl Into<String>) -> Self {
        TechniqueBinding {
            task: task.into(),
            technique: technique.into(),
        }
    }
}

/// Justification recorded when a Mandatory fragment is removed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Waiver {
    pub fragment: String,
    pub justification: String,
}

/// An M1 method model.
///
/// Canonical form: `phases` follow catalog order, `members` are sorted by
/// (phase position, fragment id), `user_fragments` by id, `relationships`
/// are the carried-over relationships in sorted order. `sequences` keep
/// the order the engineer gave them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct MethodModel {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub migration_types: BTreeSet<MigrationType>,
    pub phases: Vec<String>,
    #[serde(default)]
    pub members: Vec<FragmentInclusion>,
    #[serde(default)]
    pub user_fragments: Vec<MethodFragment>,
    #[serde(default)]
    pub relationships: Vec<FragmentRelationship>,
    #[serde(default)]
    pub sequences: Vec<SequenceEdge>,
    #[serde(default)]
    pub technique_bindings: BTreeSet<TechniqueBinding>,
    pub metamodel_version: u32,
    #[serde(default)]
    pub waivers: Vec<Waiver>,
}

impl MethodModel {
    pub fn member(&self, id: &str) -> Option<&FragmentInclusion> {
        self.members.iter().find(|m| m.fragment == id)
    }

    pub fn is_member(&self, id: &str) -> bool {
        self.member(id).is_some()
    }

    pub fn user_fragment(&self, id: &str) -> Option<&MethodFragment> {
        self.user_fragments.iter().find(|f| f.id == id)
    }

    pub fn waiver(&self, id: &str) -> Option<&Waiver> {
        self.waivers.iter().find(|w| w.fragment == id)
    }

    /// Looks a fragment up among this model's user fragments, then in the
    /// metamodel.
    pub fn resolve<'a>(&'a self, metamodel: &'a Metamodel, id: &str) -> Option<&'a MethodFragment> {
        self.user_fragment(id).or_else(|| metamodel.fragment(id))
    }

    /// Effective definition of a member: the local override when present.
    pub fn definition_of<'a>(&'a self, metamodel: &'a Metamodel, id: &str) -> Option<&'a str> {
        if let Some(text) = self.member(id).and_then(|m| m.definition_override.as_deref()) {
            return Some(text);
        }
        self.resolve(metamodel, id).map(|f| f.definition.as_str())
    }

    /// Members whose fragment is of the given kind, in canonical order.
    pub fn members_of_kind<'a>(
        &'a self,
        metamodel: &'a Metamodel,
        kind: FragmentKind,
    ) -> impl Iterator<Item = &'a MethodFragment> + 'a {
        self.members
            .iter()
            .filter_map(move |m| self.resolve(metamodel, &m.fragment))
            .filter(move |f| f.kind == kind)
    }

    pub fn bindings_for<'a>(&'a self, task: &'a str) -> impl Iterator<Item = &'a TechniqueBinding> {
        self.technique_bindings.iter().filter(move |b| b.task == task)
    }

    /// Restores canonical ordering of the set-like collections.
    pub fn normalize(&mut self, metamodel: &Metamodel) {
        self.phases
            .sort_by_key(|p| (metamodel.position(p).unwrap_or(usize::MAX), p.clone()));
        self.phases.dedup();
        let phase_rank: HashMap<&str, usize> = self.phases.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
        let user: HashMap<&str, &MethodFragment> = self.user_fragments.iter().map(|f| (f.id.as_str(), f)).collect();
        let rank = |id: &str| {
            user.get(id)
                .copied()
                .or_else(|| metamodel.fragment(id))
                .and_then(|f| f.phase.as_deref())
                .and_then(|p| phase_rank.get(p).copied())
                .unwrap_or(usize::MAX)
        };
        let mut keyed: Vec<(usize, FragmentInclusion)> =
            self.members.drain(..).map(|m| (rank(&m.fragment), m)).collect();
        keyed.sort_by(|a, b| (a.0, &a.1.fragment).cmp(&(b.0, &b.1.fragment)));
        self.members = keyed.into_iter().map(|(_, m)| m).collect();
        self.user_fragments.sort_by(|a, b| a.id.cmp(&b.id));
        self.relationships.sort();
        self.relationships.dedup();
        self.waivers.sort();
    }
}

/// An M0 enactment record: a method bound to the techniques a team chose.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct MethodInstance {
    pub id: String,
    pub method: String,
    #[serde(default)]
    pub chosen_techniques: BTreeSet<TechniqueBinding>,
    #[serde(default)]
    pub enactment_notes: String,
}

#[cfg(test)]
mod tests {
    #[test]
    fn xml_char_ranges() {
        // Oracle: the XML 1.0 Char production, written out by code point.
        let legal = |c: u32| {
            c == 0x9
                || c == 0xA
                || c == 0xD
                || (0x20..=0xD7FF).contains(&c)
                || (0xE000..=0xFFFD).contains(&c)
                || c >= 0x10000
        };
        let probes = (0..0x300)
            .chain(0xD7F0..=0xD7FF)
            .chain(0xE000..0xE010)
            .chain(0xFFF0..=0xFFFF)
            .chain(0x10000..0x10010);
        for cp in probes {
            let c = char::from_u32(cp).unwrap();
            assert_eq!(illegal_xml_char(&c.to_string()).is_none(), legal(cp), "U+{cp:04X}");
        }
        assert_eq!(illegal_xml_char("ok\u{1}\u{2}"), Some('\u{1}'));
    }

    use super::*;

    #[test]
    fn slugs_are_lowercase_and_hyphenated() {
        assert_eq!(
            slugify("Choose cloud platform/provider"),
            "choose-cloud-platform-provider"
        );
        assert_eq!(slugify("Encrypt/decrypt database"), "encrypt-decrypt-database");
        assert_eq!(slugify("Re-factor codes"), "re-factor-codes");
        assert_eq!(slugify("  Plan  "), "plan");
        assert_eq!(slugify("--"), "");
    }

    #[test]
    fn migration_types_parse_in_roman_and_arabic_form() {
        let parsed = parse_migration_types("II, v").unwrap();
        assert_eq!(
            parsed.into_iter().collect::<Vec<_>>(),
            vec![MigrationType::II, MigrationType::V]
        );
        assert_eq!("3".parse::<MigrationType>().unwrap(), MigrationType::III);
        assert!("VI".parse::<MigrationType>().is_err());
    }

    #[test]
    fn type_descriptions_match_matrix_footnote() {
        assert_eq!(
            MigrationType::V.description(),
            "deploying whole legacy application stack on cloud via IaaS service delivery model"
        );
        assert_eq!(
            MigrationType::II.description(),
            "replacing or reengineering legacy components with SaaS delivery model"
        );
    }

    #[test]
    fn relationship_categories() {
        assert_eq!(RelationshipType::Follows.category(), RelationshipCategory::Association);
        assert_eq!(
            RelationshipType::IsAGroupOf.category(),
            RelationshipCategory::Aggregation
        );
        assert_eq!(
            RelationshipType::IsAKindOf.category(),
            RelationshipCategory::Specialization
        );
    }

    fn phase(id: &str) -> MethodFragment {
        MethodFragment::new(id, id, FragmentKind::Phase)
    }

    #[test]
    fn task_without_phase_is_rejected() {
        let err = Metamodel::new(
            1,
            vec![phase("plan"), MethodFragment::new("t", "T", FragmentKind::Task)],
            vec![],
            vec![],
            vec![],
            vec![],
        )
        .unwrap_err();
        assert_eq!(err.len(), 1);
        assert_eq!(err[0].subject, "t");
    }

    #[test]
    fn technique_with_phase_is_rejected() {
        let err = Metamodel::new(
            1,
            vec![
                phase("plan"),
                MethodFragment::new("x", "X", FragmentKind::Technique).with_phase("plan"),
            ],
            vec![],
            vec![],
            vec![],
            vec![],
        )
        .unwrap_err();
        assert_eq!(err[0].subject, "x");
    }

    #[test]
    fn group_edge_must_target_a_phase() {
        let frags = vec![
            phase("plan"),
            MethodFragment::new("a", "A", FragmentKind::Task).with_phase("plan"),
            MethodFragment::new("b", "B", FragmentKind::Task).with_phase("plan"),
        ];
        let err = Metamodel::new(
            1,
            frags,
            vec![FragmentRelationship::new(
                RelationshipType::IsAGroupOf,
                "a",
                "b",
                KnowledgeSource::M,
            )],
            vec![],
            vec![],
            vec![],
        )
        .unwrap_err();
        assert_eq!(err.len(), 1);
        assert_eq!(err[0].subject, "b");
    }

    #[test]
    fn self_relationship_and_duplicate_id_are_rejected() {
        let frags = vec![
            phase("plan"),
            MethodFragment::new("a", "A", FragmentKind::Task).with_phase("plan"),
            MethodFragment::new("a", "A again", FragmentKind::Task).with_phase("plan"),
        ];
        let err = Metamodel::new(
            1,
            frags,
            vec![FragmentRelationship::new(
                RelationshipType::Uses,
                "a",
                "a",
                KnowledgeSource::L,
            )],
            vec![],
            vec![],
            vec![],
        )
        .unwrap_err();
        let reasons: Vec<_> = err.iter().map(|v| v.reason.as_str()).collect();
        assert!(reasons.contains(&"duplicate fragment id"));
        assert!(reasons.iter().any(|r| r.starts_with("self relationship")));
    }

    #[test]
    fn situational_entry_requires_note() {
        let frags = vec![
            phase("plan"),
            MethodFragment::new("a", "A", FragmentKind::Task).with_phase("plan"),
        ];
        let entry = ApplicabilityEntry {
            fragment: "a".into(),
            migration_type: MigrationType::I,
            level: ApplicabilityLevel::Situational,
            situation_note: None,
        };
        let err = Metamodel::new(1, frags, vec![], vec![entry], vec![], vec![]).unwrap_err();
        assert_eq!(err[0].subject, "a");
    }

    #[test]
    fn relationship_set_on_empty_metamodel_is_empty() {
        let mm = Metamodel::empty(1);
        assert!(relationship_set(&mm, Some(RelationshipType::Follows)).is_empty());
        assert!(relationship_set(&mm, None).is_empty());
    }
}
