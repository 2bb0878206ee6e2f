//! Same-level edits to a method model: adding, extending and removing
//! fragments, sequencing them and binding operationalization techniques.
//!
//! Every edit returns a new model together with a fresh conformance report;
//! the input model is never modified.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{parse_document, write_document, FORMAT_VERSION};
use crate::conformance::{check_conformance, ValidationIssue};
use crate::engine::{carried_relationships, inclusion_note};
use crate::error::CatalogError;
use crate::metamodel::{
    illegal_xml_char, slugify, FragmentInclusion, FragmentKind, Metamodel, MethodFragment, MethodModel, Provenance,
    SequenceEdge, TechniqueBinding, Waiver,
};

/// What to add: an existing catalog fragment, or a new user-defined one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FragmentSpec {
    Catalog {
        id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        definition: Option<String>,
    },
    New {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<String>,
        name: String,
        kind: FragmentKind,
        phase: String,
        #[serde(default)]
        definition: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TailoringAction {
    AddFragment(FragmentSpec),
    ExtendFragment {
        parent: String,
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<String>,
        #[serde(default)]
        definition: String,
    },
    RemoveFragment {
        id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        waiver: Option<String>,
    },
    SetSequence {
        #[serde(default)]
        edges: Vec<SequenceEdge>,
    },
    BindTechnique {
        task: String,
        technique: String,
    },
    UnbindTechnique {
        task: String,
        technique: String,
    },
    EditDefinition {
        id: String,
        definition: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TailoringErrorKind {
    UnknownTarget,
    KindMismatch,
    DuplicateId,
    PhaseNotSelected,
    InvalidSpec,
}

impl TailoringErrorKind {
    pub fn code(self) -> &'static str {
        match self {
            TailoringErrorKind::UnknownTarget => "UNKNOWN_TARGET",
            TailoringErrorKind::KindMismatch => "KIND_MISMATCH",
            TailoringErrorKind::DuplicateId => "DUPLICATE_ID",
            TailoringErrorKind::PhaseNotSelected => "PHASE_NOT_SELECTED",
            TailoringErrorKind::InvalidSpec => "INVALID_SPEC",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}: {message}", kind.code())]
pub struct TailoringError {
    pub kind: TailoringErrorKind,
    pub subject: String,
    pub message: String,
}

impl TailoringError {
    fn new(kind: TailoringErrorKind, subject: &str, message: impl Into<String>) -> Self {
        TailoringError {
            kind,
            subject: subject.to_string(),
            message: message.into(),
        }
    }

    fn unknown(subject: &str, message: impl Into<String>) -> Self {
        Self::new(TailoringErrorKind::UnknownTarget, subject, message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("action {index}: {error}")]
pub struct ReplayError {
    pub index: usize,
    pub error: TailoringError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TailoringResult {
    pub method: MethodModel,
    pub issues: Vec<ValidationIssue>,
}

fn user_id(method: &MethodModel, metamodel: &Metamodel, name: &str) -> String {
    let base = match slugify(name) {
        s if s.is_empty() => "fragment".to_string(),
        s => s,
    };
    (1..)
        .map(|n| format!("{base}-u{n}"))
        .find(|id| !metamodel.contains(id) && method.user_fragment(id).is_none())
        .expect("unbounded suffix search")
}

fn claim_id(
    method: &MethodModel,
    metamodel: &Metamodel,
    explicit: Option<&str>,
    name: &str,
) -> Result<String, TailoringError> {
    match explicit {
        Some(id) if id.trim().is_empty() => Err(TailoringError::new(
            TailoringErrorKind::InvalidSpec,
            id,
            "fragment id must not be empty",
        )),
        Some(id) if metamodel.contains(id) || method.user_fragment(id).is_some() => Err(TailoringError::new(
            TailoringErrorKind::DuplicateId,
            id,
            format!("fragment id `{id}` already exists"),
        )),
        Some(id) => Ok(id.to_string()),
        None => Ok(user_id(method, metamodel, name)),
    }
}

fn require_name(name: &str) -> Result<(), TailoringError> {
    if name.trim().is_empty() {
        Err(TailoringError::new(
            TailoringErrorKind::InvalidSpec,
            name,
            "fragment name must not be empty",
        ))
    } else {
        Ok(())
    }
}

fn require_phase_selected(method: &MethodModel, fragment: &MethodFragment) -> Result<(), TailoringError> {
    match fragment.phase.as_deref() {
        Some(p) if method.phases.iter().any(|q| q == p) => Ok(()),
        Some(p) => Err(TailoringError::new(
            TailoringErrorKind::PhaseNotSelected,
            &fragment.id,
            format!(
                "`{}` belongs to phase `{p}`, which the method does not select",
                fragment.id
            ),
        )),
        None => Err(TailoringError::new(
            TailoringErrorKind::KindMismatch,
            &fragment.id,
            format!("`{}` is a {} and cannot be a member", fragment.id, fragment.kind),
        )),
    }
}

fn add_user_fragment(method: &mut MethodModel, fragment: MethodFragment) {
    method.members.push(FragmentInclusion::new(fragment.id.clone()));
    method.user_fragments.push(fragment);
}

fn remove_member(method: &mut MethodModel, id: &str) {
    // User-defined extensions of a removed user fragment go with it.
    let mut doomed: HashSet<String> = HashSet::from([id.to_string()]);
    loop {
        let before = doomed.len();
        for f in &method.user_fragments {
            if f.parent.as_ref().is_some_and(|p| doomed.contains(p)) {
                doomed.insert(f.id.clone());
            }
        }
        if doomed.len() == before {
            break;
        }
    }
    method.members.retain(|m| !doomed.contains(&m.fragment));
    method.user_fragments.retain(|f| !doomed.contains(&f.id));
    method
        .sequences
        .retain(|e| !doomed.contains(&e.from) && !doomed.contains(&e.to));
    method.technique_bindings.retain(|b| !doomed.contains(&b.task));
}

/// Every free-text and id value an action carries.
fn action_text(action: &TailoringAction) -> Vec<&str> {
    match action {
        TailoringAction::AddFragment(FragmentSpec::Catalog { id, definition }) => {
            std::iter::once(id.as_str()).chain(definition.as_deref()).collect()
        }
        TailoringAction::AddFragment(FragmentSpec::New {
            id,
            name,
            phase,
            definition,
            ..
        }) => [name, phase, definition]
            .map(String::as_str)
            .into_iter()
            .chain(id.as_deref())
            .collect(),
        TailoringAction::ExtendFragment {
            parent,
            name,
            id,
            definition,
        } => [parent, name, definition]
            .map(String::as_str)
            .into_iter()
            .chain(id.as_deref())
            .collect(),
        TailoringAction::RemoveFragment { id, waiver } => {
            std::iter::once(id.as_str()).chain(waiver.as_deref()).collect()
        }
        TailoringAction::SetSequence { edges } => edges.iter().flat_map(|e| [e.from.as_str(), e.to.as_str()]).collect(),
        TailoringAction::BindTechnique { task, technique } | TailoringAction::UnbindTechnique { task, technique } => {
            vec![task, technique]
        }
        TailoringAction::EditDefinition { id, definition } => vec![id, definition],
    }
}

fn edit(method: &mut MethodModel, metamodel: &Metamodel, action: &TailoringAction) -> Result<(), TailoringError> {
    use TailoringErrorKind::*;
    if let Some((text, c)) = action_text(action)
        .into_iter()
        .find_map(|t| illegal_xml_char(t).map(|c| (t, c)))
    {
        return Err(TailoringError::new(
            InvalidSpec,
            text,
            format!("character U+{:04X} cannot be stored in a method", c as u32),
        ));
    }
    match action {
        TailoringAction::AddFragment(FragmentSpec::Catalog { id, definition }) => {
            let f = metamodel
                .fragment(id)
                .ok_or_else(|| TailoringError::unknown(id, format!("no catalog fragment `{id}`")))?;
            if method.is_member(id) {
                return Err(TailoringError::new(
                    DuplicateId,
                    id,
                    format!("`{id}` is already a member"),
                ));
            }
            require_phase_selected(method, f)?;
            method.members.push(FragmentInclusion {
                fragment: id.clone(),
                definition_override: definition.clone().filter(|d| *d != f.definition),
                note: inclusion_note(metamodel, &method.migration_types, id),
            });
            method.waivers.retain(|w| w.fragment != *id);
        }
        TailoringAction::AddFragment(FragmentSpec::New {
            id,
            name,
            kind,
            phase,
            definition,
        }) => {
            require_name(name)?;
            if !kind.is_phased() {
                return Err(TailoringError::new(
                    KindMismatch,
                    name,
                    format!("a {kind} cannot be added to a method; only tasks, work products and principles"),
                ));
            }
            let phase_id = metamodel
                .resolve_phase(phase)
                .map(|p| p.id.clone())
                .ok_or_else(|| TailoringError::unknown(phase, format!("no phase `{phase}`")))?;
            let id = claim_id(method, metamodel, id.as_deref(), name)?;
            let fragment = MethodFragment {
                id,
                name: name.trim().to_string(),
                kind: *kind,
                definition: definition.clone(),
                phase: Some(phase_id),
                provenance: Provenance::UserDefined,
                parent: None,
                provenance_note: None,
            };
            require_phase_selected(method, &fragment)?;
            add_user_fragment(method, fragment);
        }
        TailoringAction::ExtendFragment {
            parent,
            name,
            id,
            definition,
        } => {
            if !method.is_member(parent) {
                return Err(TailoringError::unknown(
                    parent,
                    format!("`{parent}` is not a member of the method"),
                ));
            }
            let parent_fragment = method
                .resolve(metamodel, parent)
                .cloned()
                .ok_or_else(|| TailoringError::unknown(parent, format!("`{parent}` does not resolve")))?;
            if !parent_fragment.kind.is_phased() {
                return Err(TailoringError::new(
                    KindMismatch,
                    parent,
                    format!("a {} cannot be extended", parent_fragment.kind),
                ));
            }
            require_name(name)?;
            let id = claim_id(method, metamodel, id.as_deref(), name)?;
            add_user_fragment(
                method,
                MethodFragment {
                    id,
                    name: name.trim().to_string(),
                    kind: parent_fragment.kind,
                    definition: definition.clone(),
                    phase: parent_fragment.phase.clone(),
                    provenance: Provenance::UserDefined,
                    parent: Some(parent.clone()),
                    provenance_note: None,
                },
            );
        }
        TailoringAction::RemoveFragment { id, waiver } => {
            if !method.is_member(id) {
                return Err(TailoringError::unknown(
                    id,
                    format!("`{id}` is not a member of the method"),
                ));
            }
            if waiver.is_some() && method.user_fragment(id).is_some() {
                return Err(TailoringError::new(
                    InvalidSpec,
                    id,
                    "waivers apply to catalog fragments only",
                ));
            }
            remove_member(method, id);
            if let Some(justification) = waiver {
                method.waivers.retain(|w| w.fragment != *id);
                method.waivers.push(Waiver {
                    fragment: id.clone(),
                    justification: justification.clone(),
                });
            }
        }
        TailoringAction::SetSequence { edges } => {
            for e in edges {
                for end in [&e.from, &e.to] {
                    if !method.is_member(end) {
                        return Err(TailoringError::unknown(
                            end,
                            format!("sequence endpoint `{end}` is not a member"),
                        ));
                    }
                }
            }
            method.sequences = edges.clone();
        }
        TailoringAction::BindTechnique { task, technique } => {
            let task_fragment = method
                .member(task)
                .and_then(|_| method.resolve(metamodel, task))
                .ok_or_else(|| TailoringError::unknown(task, format!("`{task}` is not a member of the method")))?;
            if task_fragment.kind != FragmentKind::Task {
                return Err(TailoringError::new(
                    KindMismatch,
                    task,
                    format!("techniques bind to tasks; `{task}` is a {}", task_fragment.kind),
                ));
            }
            let technique_fragment = metamodel
                .fragment(technique)
                .ok_or_else(|| TailoringError::unknown(technique, format!("no technique `{technique}`")))?;
            if technique_fragment.kind != FragmentKind::Technique {
                return Err(TailoringError::new(
                    KindMismatch,
                    technique,
                    format!("`{technique}` is a {}, not a Technique", technique_fragment.kind),
                ));
            }
            if !method
                .technique_bindings
                .insert(TechniqueBinding::new(task.clone(), technique.clone()))
            {
                return Err(TailoringError::new(
                    DuplicateId,
                    technique,
                    format!("`{technique}` is already bound to `{task}`"),
                ));
            }
        }
        TailoringAction::UnbindTechnique { task, technique } => {
            if !method
                .technique_bindings
                .remove(&TechniqueBinding::new(task.clone(), technique.clone()))
            {
                return Err(TailoringError::unknown(
                    technique,
                    format!("`{technique}` is not bound to `{task}`"),
                ));
            }
        }
        TailoringAction::EditDefinition { id, definition } => {
            if !method.is_member(id) {
                return Err(TailoringError::unknown(
                    id,
                    format!("`{id}` is not a member of the method"),
                ));
            }
            if let Some(f) = method.user_fragments.iter_mut().find(|f| f.id == *id) {
                f.definition = definition.clone();
            } else {
                let catalog_text = metamodel
                    .fragment(id)
                    .map(|f| f.definition.as_str())
                    .ok_or_else(|| TailoringError::unknown(id, format!("`{id}` does not resolve")))?;
                let over = (definition != catalog_text).then(|| definition.clone());
                if let Some(m) = method.members.iter_mut().find(|m| m.fragment == *id) {
                    m.definition_override = over;
                }
            }
        }
    }
    Ok(())
}

fn refresh(method: &mut MethodModel, metamodel: &Metamodel) {
    method.normalize(metamodel);
    method.relationships = carried_relationships(metamodel, method);
}

/// Applies one action to a copy of `method`.
pub fn apply(
    method: &MethodModel,
    metamodel: &Metamodel,
    action: &TailoringAction,
) -> Result<TailoringResult, TailoringError> {
    let mut next = method.clone();
    edit(&mut next, metamodel, action)?;
    refresh(&mut next, metamodel);
    let issues = check_conformance(&next, metamodel);
    Ok(TailoringResult { method: next, issues })
}

/// Applies `actions` in order. The first failing action aborts the replay
/// and is reported with its index.
pub fn replay(
    method: &MethodModel,
    metamodel: &Metamodel,
    actions: &[TailoringAction],
) -> Result<TailoringResult, ReplayError> {
    let mut current = method.clone();
    for (index, action) in actions.iter().enumerate() {
        edit(&mut current, metamodel, action).map_err(|error| ReplayError { index, error })?;
        refresh(&mut current, metamodel);
    }
    let issues = check_conformance(&current, metamodel);
    Ok(TailoringResult {
        method: current,
        issues,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct ActionScript {
    format_version: u32,
    #[serde(default, rename = "action")]
    actions: Vec<TailoringAction>,
}

/// Parses an action script: `format-version` followed by `[[action]]`
/// records, each tagged with `op`.
pub fn parse_action_script(source: &[u8]) -> Result<Vec<TailoringAction>, CatalogError> {
    let script: ActionScript = parse_document(source)?;
    if script.format_version != FORMAT_VERSION {
        return Err(CatalogError::Parse(format!(
            "unsupported format-version {}",
            script.format_version
        )));
    }
    Ok(script.actions)
}

pub fn write_action_script(actions: &[TailoringAction]) -> Vec<u8> {
    write_document(&ActionScript {
        format_version: FORMAT_VERSION,
        actions: actions.to_vec(),
    })
}
