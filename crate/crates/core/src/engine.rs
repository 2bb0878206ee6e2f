//! Interpreter for the transformation rules that derive a base method model
//! (M1) from the metamodel (M2).
//!
//! Rules are data. Each rule has a guard over the requested migration types
//! and phases and a single action: include the fragments matched by a
//! selector, or carry over relationships of given types between included
//! fragments. The members of a derived method are the union of every fired
//! fragment action; nothing outside the requested phases is ever included.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::applicability_of;
use crate::error::UnknownFragment;
use crate::metamodel::{
    illegal_xml_char, slugify, ApplicabilityLevel, FragmentInclusion, FragmentKind, FragmentRelationship,
    KnowledgeSource, Metamodel, MethodFragment, MethodModel, MigrationType, RelationshipType, SequenceEdge,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "when", rename_all = "kebab-case")]
pub enum Guard {
    Always,
    PhaseSelected {
        phase: String,
    },
    TypeSelected {
        #[serde(rename = "migration-type")]
        migration_type: MigrationType,
    },
}

impl Guard {
    pub fn holds(&self, mts: &BTreeSet<MigrationType>, phases: &[String]) -> bool {
        match self {
            Guard::Always => true,
            Guard::PhaseSelected { phase } => phases.iter().any(|p| p == phase),
            Guard::TypeSelected { migration_type } => mts.contains(migration_type),
        }
    }
}

/// Matches fragments by phase, kind and applicability level. Empty `kinds`
/// matches every kind; an absent `phase` matches every requested phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FragmentSelector {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kinds: Vec<FragmentKind>,
    pub levels: Vec<ApplicabilityLevel>,
}

impl FragmentSelector {
    fn matches_shape(&self, fragment: &MethodFragment) -> bool {
        let Some(phase) = fragment.phase.as_deref() else {
            return false;
        };
        self.phase.as_deref().is_none_or(|p| p == phase)
            && (self.kinds.is_empty() || self.kinds.contains(&fragment.kind))
    }

    fn matches_level(&self, metamodel: &Metamodel, fragment: &MethodFragment, mts: &BTreeSet<MigrationType>) -> bool {
        mts.iter().any(|&t| {
            let level = metamodel
                .entry(&fragment.id, t)
                .map_or(ApplicabilityLevel::Situational, |e| e.level);
            self.levels.contains(&level)
        })
    }
}

/// Relationship types carried into the method; empty means all of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationshipSelector {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub types: Vec<RelationshipType>,
}

impl RelationshipSelector {
    fn matches(&self, t: RelationshipType) -> bool {
        self.types.is_empty() || self.types.contains(&t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "include", rename_all = "kebab-case")]
pub enum Action {
    #[serde(rename = "fragments")]
    IncludeFragments(FragmentSelector),
    #[serde(rename = "relationships")]
    IncludeRelationships(RelationshipSelector),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TransformationRule {
    #[serde(rename = "id")]
    pub rule_id: String,
    pub name: String,
    pub meaning: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub syntax: Option<String>,
    /// Where the encoding departs from the formal rule syntax.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub guard: Guard,
    pub action: Action,
}

/// Orders rule ids like `R01` < `R01.1` < `R04` < `R04.3` < `R10` by
/// comparing the dotted numeric components.
pub fn compare_rule_ids(a: &str, b: &str) -> Ordering {
    fn key(id: &str) -> (String, Vec<u64>, String) {
        let prefix: String = id.chars().take_while(|c| !c.is_ascii_digit()).collect();
        let rest = &id[prefix.len()..];
        let nums = rest.split('.').map(|p| p.parse::<u64>().unwrap_or(u64::MAX)).collect();
        (prefix, nums, id.to_string())
    }
    key(a).cmp(&key(b))
}

pub fn list_rules(metamodel: &Metamodel) -> Vec<&TransformationRule> {
    let mut rules: Vec<_> = metamodel.rules().iter().collect();
    rules.sort_by(|a, b| compare_rule_ids(&a.rule_id, &b.rule_id));
    rules
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstantiationError {
    #[error("empty selection: {0}")]
    EmptySelection(&'static str),
    #[error("unknown phase `{0}`")]
    UnknownPhase(String),
    #[error("method name must not be empty")]
    EmptyName,
    #[error("{field} contains character U+{:04X}, which cannot be stored in a method", *.ch as u32)]
    InvalidText { field: &'static str, ch: char },
}

impl InstantiationError {
    pub fn code(&self) -> &'static str {
        match self {
            InstantiationError::EmptySelection(_) => "EMPTY_SELECTION",
            InstantiationError::UnknownPhase(_) => "UNKNOWN_PHASE",
            InstantiationError::EmptyName => "EMPTY_NAME",
            InstantiationError::InvalidText { .. } => "INVALID_TEXT",
        }
    }
}

/// Rejects method text that could not be exported as XML.
pub fn check_text(field: &'static str, value: &str) -> Result<(), InstantiationError> {
    match illegal_xml_char(value) {
        Some(ch) => Err(InstantiationError::InvalidText { field, ch }),
        None => Ok(()),
    }
}

/// Resolves phase keys (ids, names, or `all`) to phase ids in catalog order.
pub fn resolve_phases<S: AsRef<str>>(metamodel: &Metamodel, phases: &[S]) -> Result<Vec<String>, InstantiationError> {
    let mut ids = Vec::with_capacity(phases.len());
    for key in phases {
        if key.as_ref().eq_ignore_ascii_case("all") {
            ids.extend(metamodel.phases().map(|p| p.id.clone()));
            continue;
        }
        let phase = metamodel
            .resolve_phase(key.as_ref())
            .ok_or_else(|| InstantiationError::UnknownPhase(key.as_ref().to_string()))?;
        ids.push(phase.id.clone());
    }
    ids.sort_by_key(|p| metamodel.position(p));
    ids.dedup();
    Ok(ids)
}

/// Situation note shown next to a member: the matrix note for the first
/// requested type that marks it Situational, unless some requested type
/// makes it Mandatory.
pub fn inclusion_note(metamodel: &Metamodel, mts: &BTreeSet<MigrationType>, fragment: &str) -> Option<String> {
    let entries: Vec<_> = mts.iter().filter_map(|&t| metamodel.entry(fragment, t)).collect();
    if entries.iter().any(|e| e.level == ApplicabilityLevel::Mandatory) {
        return None;
    }
    entries
        .iter()
        .find(|e| e.level == ApplicabilityLevel::Situational)
        .and_then(|e| e.situation_note.clone())
}

/// Catalog fragments selected by the fired fragment rules, in catalog order.
pub fn select_members<'a>(
    metamodel: &'a Metamodel,
    mts: &BTreeSet<MigrationType>,
    phases: &[String],
) -> Vec<&'a MethodFragment> {
    let fired: Vec<&FragmentSelector> = metamodel
        .rules()
        .iter()
        .filter(|r| r.guard.holds(mts, phases))
        .filter_map(|r| match &r.action {
            Action::IncludeFragments(sel) => Some(sel),
            Action::IncludeRelationships(_) => None,
        })
        .collect();
    metamodel
        .fragments()
        .iter()
        .filter(|f| f.phase.as_deref().is_some_and(|p| phases.iter().any(|q| q == p)))
        .filter(|f| {
            fired
                .iter()
                .any(|sel| sel.matches_shape(f) && sel.matches_level(metamodel, f, mts))
        })
        .collect()
}

/// Relationships a method carries: metamodel relationships selected by the
/// fired relationship rules whose endpoints are members (or, for group
/// edges, a selected phase), plus the implicit specialization edge of every
/// user-defined extension.
pub fn carried_relationships(metamodel: &Metamodel, method: &MethodModel) -> Vec<FragmentRelationship> {
    let fired: Vec<&RelationshipSelector> = metamodel
        .rules()
        .iter()
        .filter(|r| r.guard.holds(&method.migration_types, &method.phases))
        .filter_map(|r| match &r.action {
            Action::IncludeRelationships(sel) => Some(sel),
            Action::IncludeFragments(_) => None,
        })
        .collect();
    let members: HashSet<&str> = method.members.iter().map(|m| m.fragment.as_str()).collect();
    let present = |id: &str| members.contains(id) || method.phases.iter().any(|p| p == id);

    let mut out: Vec<FragmentRelationship> = metamodel
        .relationships()
        .iter()
        .filter(|r| fired.iter().any(|sel| sel.matches(r.rel_type)))
        .filter(|r| present(&r.source) && present(&r.target))
        .cloned()
        .collect();
    out.extend(method.user_fragments.iter().filter_map(|f| {
        f.parent.as_ref().map(|parent| {
            FragmentRelationship::new(
                RelationshipType::IsAKindOf,
                f.id.clone(),
                parent.clone(),
                KnowledgeSource::M,
            )
        })
    }));
    out.sort();
    out.dedup();
    out
}

/// Derives a base method model from the metamodel for the given migration
/// types and phases (ids or names).
pub fn instantiate<S: AsRef<str>>(
    metamodel: &Metamodel,
    name: &str,
    mts: &BTreeSet<MigrationType>,
    phases: &[S],
) -> Result<MethodModel, InstantiationError> {
    if mts.is_empty() {
        return Err(InstantiationError::EmptySelection("no migration type selected"));
    }
    if phases.is_empty() {
        return Err(InstantiationError::EmptySelection("no phase selected"));
    }
    let name = name.trim();
    if name.is_empty() {
        return Err(InstantiationError::EmptyName);
    }
    check_text("name", name)?;
    let phases = resolve_phases(metamodel, phases)?;

    let selected = select_members(metamodel, mts, &phases);
    let members = selected
        .iter()
        .map(|f| FragmentInclusion {
            fragment: f.id.clone(),
            definition_override: None,
            note: inclusion_note(metamodel, mts, &f.id),
        })
        .collect::<Vec<_>>();
    let member_ids: HashSet<&str> = selected.iter().map(|f| f.id.as_str()).collect();
    let sequences = metamodel
        .relationships()
        .iter()
        .filter(|r| r.rel_type == RelationshipType::Follows)
        .filter(|r| member_ids.contains(r.source.as_str()) && member_ids.contains(r.target.as_str()))
        .map(|r| SequenceEdge::new(r.source.clone(), r.target.clone()))
        .collect();

    let id = match slugify(name) {
        s if s.is_empty() => "method".to_string(),
        s => s,
    };
    let mut method = MethodModel {
        id,
        name: name.to_string(),
        description: String::new(),
        migration_types: mts.clone(),
        phases,
        members,
        user_fragments: Vec::new(),
        relationships: Vec::new(),
        sequences,
        technique_bindings: BTreeSet::new(),
        metamodel_version: metamodel.version(),
        waivers: Vec::new(),
    };
    method.normalize(metamodel);
    method.relationships = carried_relationships(metamodel, &method);
    Ok(method)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TypeApplicability {
    pub migration_type: MigrationType,
    pub level: ApplicabilityLevel,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// False when the level is the default for a fragment the matrix does
    /// not list.
    pub explicit: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct InclusionExplanation {
    pub fragment: String,
    /// Strongest level across the requested types.
    pub level: ApplicabilityLevel,
    pub per_type: Vec<TypeApplicability>,
    /// The most specific rule that includes the fragment when its phase is
    /// requested; absent when it is Unnecessary for every requested type.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub governing_rule: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub fn explain_inclusion(
    metamodel: &Metamodel,
    mts: &BTreeSet<MigrationType>,
    fragment: &str,
) -> Result<InclusionExplanation, UnknownFragment> {
    let frag = metamodel
        .fragment(fragment)
        .ok_or_else(|| UnknownFragment(fragment.to_string()))?;
    let mut per_type = Vec::with_capacity(mts.len());
    for &t in mts {
        let (level, note) = applicability_of(metamodel, fragment, t)?;
        per_type.push(TypeApplicability {
            migration_type: t,
            level,
            note,
            explicit: metamodel.entry(fragment, t).is_some(),
        });
    }
    // Mandatory < Situational < Unnecessary in declaration order.
    let level = per_type
        .iter()
        .map(|p| p.level)
        .min()
        .unwrap_or(ApplicabilityLevel::Situational);
    let note = per_type.iter().find_map(|p| p.note.clone());

    let assumed_phases: Vec<String> = frag.phase.iter().cloned().collect();
    let governing_rule = metamodel
        .rules()
        .iter()
        .filter(|r| r.guard.holds(mts, &assumed_phases))
        .filter_map(|r| match &r.action {
            Action::IncludeFragments(sel) if sel.matches_shape(frag) && sel.matches_level(metamodel, frag, mts) => {
                Some((r, sel))
            }
            _ => None,
        })
        .min_by(|(ra, a), (rb, b)| {
            let spec = |s: &FragmentSelector| (s.levels.len(), s.phase.is_none(), s.kinds.is_empty());
            spec(a)
                .cmp(&spec(b))
                .then_with(|| compare_rule_ids(&ra.rule_id, &rb.rule_id))
        })
        .map(|(r, _)| r.rule_id.clone());

    Ok(InclusionExplanation {
        fragment: fragment.to_string(),
        level,
        per_type,
        governing_rule,
        note,
    })
}
