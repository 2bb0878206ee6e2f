//! Plain-text tables and the `records` output mode.

use methodwb_core::engine::{Action, Guard, InclusionExplanation, TransformationRule, TypeApplicability};
use methodwb_core::metamodel::{
    format_migration_types, FragmentRelationship, Metamodel, MethodFragment, MethodInstance, MethodModel,
};
use methodwb_core::{Severity, ValidationIssue};
use serde::Serialize;

/// Left-aligned columns separated by two spaces, trailing blanks trimmed.
pub fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let header: Vec<String> = headers.iter().map(|h| h.to_string()).collect();
    for row in std::iter::once(&header).chain(rows) {
        let mut line = String::new();
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            line.push_str(cell);
            let pad = widths[i].saturating_sub(cell.chars().count());
            line.extend(std::iter::repeat_n(' ', pad));
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// Collapses line breaks so a value stays on one table row.
fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn fragment_rows(fragments: &[&MethodFragment]) -> String {
    let rows: Vec<Vec<String>> = fragments
        .iter()
        .map(|f| {
            vec![
                f.id.clone(),
                f.kind.as_str().to_string(),
                f.phase.clone().unwrap_or_else(|| "-".into()),
                one_line(&f.name),
            ]
        })
        .collect();
    table(&["ID", "KIND", "PHASE", "NAME"], &rows)
}

pub fn applicability_rows(per_type: &[TypeApplicability]) -> String {
    let rows: Vec<Vec<String>> = per_type
        .iter()
        .map(|a| {
            vec![
                a.migration_type.as_str().to_string(),
                a.level.as_str().to_string(),
                if a.explicit { "yes" } else { "default" }.to_string(),
                a.note.as_deref().map(one_line).unwrap_or_default(),
            ]
        })
        .collect();
    table(&["TYPE", "LEVEL", "LISTED", "NOTE"], &rows)
}

pub fn relationship_rows(rels: &[FragmentRelationship]) -> String {
    let rows: Vec<Vec<String>> = rels
        .iter()
        .map(|r| {
            vec![
                r.rel_type.as_str().to_string(),
                r.source.clone(),
                r.target.clone(),
                format!("{:?}", r.knowledge_source),
            ]
        })
        .collect();
    table(&["TYPE", "SOURCE", "TARGET", "KS"], &rows)
}

fn guard_text(g: &Guard) -> String {
    match g {
        Guard::Always => "always".into(),
        Guard::PhaseSelected { phase } => format!("phase {phase}"),
        Guard::TypeSelected { migration_type } => format!("type {migration_type}"),
    }
}

fn action_text(a: &Action) -> String {
    match a {
        Action::IncludeFragments(sel) => {
            let levels: Vec<&str> = sel.levels.iter().map(|l| l.as_str()).collect();
            let kinds = if sel.kinds.is_empty() {
                "fragments".to_string()
            } else {
                sel.kinds.iter().map(|k| k.as_str()).collect::<Vec<_>>().join("/")
            };
            let phase = sel.phase.as_deref().map(|p| format!(" in {p}")).unwrap_or_default();
            format!("{kinds}{phase} at {}", levels.join("/"))
        }
        Action::IncludeRelationships(sel) => {
            if sel.types.is_empty() {
                "relationships".into()
            } else {
                let t: Vec<&str> = sel.types.iter().map(|t| t.as_str()).collect();
                format!("relationships {}", t.join("/"))
            }
        }
    }
}

pub fn rule_rows(rules: &[&TransformationRule]) -> String {
    let rows: Vec<Vec<String>> = rules
        .iter()
        .map(|r| {
            vec![
                r.rule_id.clone(),
                guard_text(&r.guard),
                action_text(&r.action),
                r.name.clone(),
            ]
        })
        .collect();
    table(&["ID", "GUARD", "INCLUDES", "NAME"], &rows)
}

pub fn explanation(e: &InclusionExplanation) -> String {
    let mut out = format!("fragment: {}\nlevel: {}\n", e.fragment, e.level.as_str());
    out.push_str(&format!(
        "governing rule: {}\n",
        e.governing_rule.as_deref().unwrap_or("none")
    ));
    out.push('\n');
    out.push_str(&applicability_rows(&e.per_type));
    out
}

fn plural(n: usize, word: &str) -> String {
    if n == 1 {
        format!("{n} {word}")
    } else {
        format!("{n} {word}s")
    }
}

pub fn summary(issues: &[ValidationIssue]) -> String {
    let errors = issues.iter().filter(|i| i.severity == Severity::Error).count();
    format!(
        "{}, {}\n",
        plural(errors, "error"),
        plural(issues.len() - errors, "warning")
    )
}

pub fn issues(issues: &[ValidationIssue]) -> String {
    let mut out = String::new();
    if !issues.is_empty() {
        let rows: Vec<Vec<String>> = issues
            .iter()
            .map(|i| {
                vec![
                    i.severity.as_str().to_string(),
                    i.code.as_str().to_string(),
                    i.subjects.join(","),
                    one_line(&i.message),
                ]
            })
            .collect();
        out.push_str(&table(&["SEVERITY", "CODE", "SUBJECTS", "MESSAGE"], &rows));
    }
    out.push_str(&summary(issues));
    out
}

pub fn method(m: &MethodModel, mm: &Metamodel) -> String {
    let mut out = format!("method {} \"{}\"\n", m.id, one_line(&m.name));
    if !m.description.is_empty() {
        out.push_str(&format!("description: {}\n", one_line(&m.description)));
    }
    out.push_str(&format!(
        "migration types: {}\n",
        format_migration_types(&m.migration_types)
    ));
    out.push_str(&format!("phases: {}\n", m.phases.join(", ")));
    out.push_str(&format!("metamodel version: {}\n\n", m.metamodel_version));

    let rows: Vec<Vec<String>> = m
        .members
        .iter()
        .map(|inc| {
            let f = m.resolve(mm, &inc.fragment);
            let parent = f.and_then(|f| f.parent.clone());
            vec![
                f.and_then(|f| f.phase.clone()).unwrap_or_else(|| "-".into()),
                f.map_or("?", |f| f.kind.as_str()).to_string(),
                inc.fragment.clone(),
                f.map(|f| one_line(&f.name)).unwrap_or_default(),
                match (f.map(|f| f.provenance.as_str()), parent) {
                    (Some(p), Some(parent)) => format!("{p} < {parent}"),
                    (Some(p), None) => p.to_string(),
                    _ => String::new(),
                },
            ]
        })
        .collect();
    out.push_str(&table(&["PHASE", "KIND", "ID", "NAME", "ORIGIN"], &rows));

    if !m.sequences.is_empty() {
        out.push_str("\nsequences:\n");
        for e in &m.sequences {
            out.push_str(&format!("  {} -> {}\n", e.from, e.to));
        }
    }
    if !m.technique_bindings.is_empty() {
        out.push_str("\ntechniques:\n");
        for b in &m.technique_bindings {
            out.push_str(&format!("  {} <- {}\n", b.task, b.technique));
        }
    }
    if !m.waivers.is_empty() {
        out.push_str("\nwaivers:\n");
        for w in &m.waivers {
            out.push_str(&format!("  {}: {}\n", w.fragment, one_line(&w.justification)));
        }
    }
    out
}

pub fn instance(i: &MethodInstance) -> String {
    let mut out = format!("instance {} of {}\n", i.id, i.method);
    for b in &i.chosen_techniques {
        out.push_str(&format!("  {} <- {}\n", b.task, b.technique));
    }
    if !i.enactment_notes.is_empty() {
        out.push_str(&format!("notes: {}\n", one_line(&i.enactment_notes)));
    }
    out
}

/// Records mode: the same structured-text grammar the catalog and store use.
pub fn records<T: Serialize>(doc: &T) -> String {
    String::from_utf8(methodwb_core::catalog::write_document(doc)).expect("TOML output is UTF-8")
}
