//! Conformance of a method model to the metamodel.
//!
//! Problems are reported as [`ValidationIssue`]s, never raised. The issue
//! list is sorted by severity, code, subjects and message, so two runs over
//! equal inputs produce identical output.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::metamodel::{ApplicabilityLevel, FragmentKind, Metamodel, MethodFragment, MethodModel, RelationshipType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Error => "Error",
            Severity::Warning => "Warning",
        }
    }
}

/// The closed set of issue codes. Variants are declared in code order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IssueCode {
    DanglingRef,
    DuplicateId,
    EmptySelection,
    IllogicalSequence,
    KindMismatch,
    MissingMandatory,
}

impl IssueCode {
    pub fn as_str(self) -> &'static str {
        match self {
            IssueCode::DanglingRef => "DANGLING_REF",
            IssueCode::DuplicateId => "DUPLICATE_ID",
            IssueCode::EmptySelection => "EMPTY_SELECTION",
            IssueCode::IllogicalSequence => "ILLOGICAL_SEQUENCE",
            IssueCode::KindMismatch => "KIND_MISMATCH",
            IssueCode::MissingMandatory => "MISSING_MANDATORY",
        }
    }
}

impl fmt::Display for IssueCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub severity: Severity,
    pub code: IssueCode,
    pub message: String,
    pub subjects: Vec<String>,
}

impl ValidationIssue {
    fn new(severity: Severity, code: IssueCode, message: String, subjects: Vec<String>) -> Self {
        ValidationIssue {
            severity,
            code,
            message,
            subjects,
        }
    }

    fn sort_key(&self) -> (Severity, &'static str, &[String], &str) {
        (self.severity, self.code.as_str(), &self.subjects, &self.message)
    }
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} [{}] {}",
            self.severity.as_str(),
            self.code,
            self.subjects.join(","),
            self.message
        )
    }
}

/// Counts of errors and warnings in an issue list.
pub fn tally(issues: &[ValidationIssue]) -> (usize, usize) {
    let errors = issues.iter().filter(|i| i.severity == Severity::Error).count();
    (errors, issues.len() - errors)
}

pub fn has_errors(issues: &[ValidationIssue]) -> bool {
    issues.iter().any(|i| i.severity == Severity::Error)
}

struct Checker<'a> {
    method: &'a MethodModel,
    metamodel: &'a Metamodel,
    issues: Vec<ValidationIssue>,
}

impl<'a> Checker<'a> {
    fn error(&mut self, code: IssueCode, message: String, subjects: Vec<String>) {
        self.issues
            .push(ValidationIssue::new(Severity::Error, code, message, subjects));
    }

    fn warning(&mut self, code: IssueCode, message: String, subjects: Vec<String>) {
        self.issues
            .push(ValidationIssue::new(Severity::Warning, code, message, subjects));
    }

    fn resolve(&self, id: &str) -> Option<&'a MethodFragment> {
        self.method.resolve(self.metamodel, id)
    }

    fn selection(&mut self) {
        if self.method.migration_types.is_empty() {
            self.error(IssueCode::EmptySelection, "no migration type selected".into(), vec![]);
        }
        if self.method.phases.is_empty() {
            self.error(IssueCode::EmptySelection, "no phase selected".into(), vec![]);
        }
        let mut seen = HashSet::new();
        for p in &self.method.phases {
            if !seen.insert(p.as_str()) {
                self.error(
                    IssueCode::DuplicateId,
                    format!("phase `{p}` selected twice"),
                    vec![p.clone()],
                );
            }
            match self.metamodel.fragment(p).map(|f| f.kind) {
                Some(FragmentKind::Phase) => {}
                Some(k) => self.error(
                    IssueCode::KindMismatch,
                    format!("selected phase `{p}` is a {k}"),
                    vec![p.clone()],
                ),
                None => self.error(
                    IssueCode::DanglingRef,
                    format!("selected phase `{p}` does not resolve"),
                    vec![p.clone()],
                ),
            }
        }
    }

    fn user_fragments(&mut self) {
        let mut seen = HashSet::new();
        for f in &self.method.user_fragments {
            if !seen.insert(f.id.as_str()) {
                self.error(
                    IssueCode::DuplicateId,
                    format!("user fragment `{}` defined twice", f.id),
                    vec![f.id.clone()],
                );
            }
            if self.metamodel.contains(&f.id) {
                self.error(
                    IssueCode::DuplicateId,
                    format!("user fragment `{}` shadows a catalog fragment", f.id),
                    vec![f.id.clone()],
                );
            }
            if !f.kind.is_phased() {
                self.error(
                    IssueCode::KindMismatch,
                    format!(
                        "user fragment `{}` is a {}; only phased kinds can be added",
                        f.id, f.kind
                    ),
                    vec![f.id.clone()],
                );
            }
            match f.phase.as_deref() {
                None if f.kind.is_phased() => self.error(
                    IssueCode::KindMismatch,
                    format!("{} `{}` has no phase", f.kind, f.id),
                    vec![f.id.clone()],
                ),
                None => {}
                Some(p) => match self.metamodel.fragment(p).map(|x| x.kind) {
                    Some(FragmentKind::Phase) => {}
                    Some(k) => self.error(
                        IssueCode::KindMismatch,
                        format!("phase `{p}` of `{}` is a {k}", f.id),
                        vec![f.id.clone()],
                    ),
                    None => self.error(
                        IssueCode::DanglingRef,
                        format!("phase `{p}` of `{}` does not resolve", f.id),
                        vec![f.id.clone(), p.to_string()],
                    ),
                },
            }
            if !self.method.is_member(&f.id) {
                self.error(
                    IssueCode::DanglingRef,
                    format!("user fragment `{}` is not a member", f.id),
                    vec![f.id.clone()],
                );
            }
            if let Some(parent) = f.parent.as_deref() {
                match self.resolve(parent) {
                    Some(pf) if pf.kind == f.kind => {}
                    Some(pf) => self.error(
                        IssueCode::KindMismatch,
                        format!("`{}` is a {} but extends the {} `{parent}`", f.id, f.kind, pf.kind),
                        vec![f.id.clone(), parent.to_string()],
                    ),
                    None => self.error(
                        IssueCode::DanglingRef,
                        format!("parent `{parent}` of `{}` does not resolve", f.id),
                        vec![f.id.clone(), parent.to_string()],
                    ),
                }
            }
        }
    }

    fn members(&mut self) {
        let mut seen = HashSet::new();
        for m in &self.method.members {
            let id = &m.fragment;
            if !seen.insert(id.as_str()) {
                self.error(
                    IssueCode::DuplicateId,
                    format!("`{id}` is included twice"),
                    vec![id.clone()],
                );
                continue;
            }
            let Some(f) = self.resolve(id) else {
                self.error(
                    IssueCode::DanglingRef,
                    format!("member `{id}` is neither a catalog nor a user fragment"),
                    vec![id.clone()],
                );
                continue;
            };
            if !f.kind.is_phased() {
                self.error(
                    IssueCode::KindMismatch,
                    format!(
                        "member `{id}` is a {}; members must be tasks, work products or principles",
                        f.kind
                    ),
                    vec![id.clone()],
                );
            } else if let Some(p) = f.phase.as_deref() {
                if !self.method.phases.iter().any(|q| q == p) {
                    self.error(
                        IssueCode::KindMismatch,
                        format!("member `{id}` belongs to phase `{p}`, which is not selected"),
                        vec![id.clone()],
                    );
                }
            }
        }
    }

    fn sequences(&mut self) {
        let members: HashSet<&str> = self.method.members.iter().map(|m| m.fragment.as_str()).collect();
        let follows: HashSet<(&str, &str)> = self
            .metamodel
            .relationships()
            .iter()
            .filter(|r| r.rel_type == RelationshipType::Follows)
            .map(|r| (r.source.as_str(), r.target.as_str()))
            .collect();
        let mut reported_reversal = HashSet::new();
        for e in &self.method.sequences {
            for end in [&e.from, &e.to] {
                if !members.contains(end.as_str()) {
                    self.error(
                        IssueCode::DanglingRef,
                        format!("sequence {} -> {} references non-member `{end}`", e.from, e.to),
                        vec![end.clone()],
                    );
                }
            }
            if follows.contains(&(e.to.as_str(), e.from.as_str()))
                && reported_reversal.insert((e.from.as_str(), e.to.as_str()))
            {
                self.warning(
                    IssueCode::IllogicalSequence,
                    format!(
                        "`{}` is sequenced before `{}`, but the catalog says `{}` follows `{}`",
                        e.from, e.to, e.from, e.to
                    ),
                    vec![e.from.clone(), e.to.clone()],
                );
            }
        }
        for cycle in sequence_cycles(self.method) {
            self.warning(
                IssueCode::IllogicalSequence,
                format!("sequence cycle through {}", cycle.join(", ")),
                cycle,
            );
        }
    }

    fn techniques(&mut self) {
        for b in &self.method.technique_bindings {
            match self.resolve(&b.task) {
                Some(_) if !self.method.is_member(&b.task) => self.error(
                    IssueCode::DanglingRef,
                    format!("technique `{}` is bound to non-member `{}`", b.technique, b.task),
                    vec![b.task.clone()],
                ),
                Some(f) if f.kind != FragmentKind::Task => self.error(
                    IssueCode::KindMismatch,
                    format!("technique `{}` is bound to the {} `{}`", b.technique, f.kind, b.task),
                    vec![b.task.clone(), b.technique.clone()],
                ),
                Some(_) => {}
                None => self.error(
                    IssueCode::DanglingRef,
                    format!("bound task `{}` does not resolve", b.task),
                    vec![b.task.clone()],
                ),
            }
            match self.metamodel.fragment(&b.technique).map(|f| f.kind) {
                Some(FragmentKind::Technique) => {}
                Some(k) => self.error(
                    IssueCode::KindMismatch,
                    format!("`{}` is a {k}, not a Technique", b.technique),
                    vec![b.technique.clone()],
                ),
                None => self.error(
                    IssueCode::DanglingRef,
                    format!("technique `{}` does not resolve", b.technique),
                    vec![b.technique.clone()],
                ),
            }
        }
    }

    fn relationships(&mut self) {
        for r in &self.method.relationships {
            for end in [&r.source, &r.target] {
                if self.resolve(end).is_none() {
                    self.error(
                        IssueCode::DanglingRef,
                        format!("relationship {r} references unknown `{end}`"),
                        vec![end.clone()],
                    );
                }
            }
        }
        let mut waived = HashSet::new();
        for w in &self.method.waivers {
            if !waived.insert(w.fragment.as_str()) {
                self.error(
                    IssueCode::DuplicateId,
                    format!("`{}` is waived twice", w.fragment),
                    vec![w.fragment.clone()],
                );
            }
            let Some(f) = self.metamodel.fragment(&w.fragment) else {
                self.error(
                    IssueCode::DanglingRef,
                    format!("waiver names unknown catalog fragment `{}`", w.fragment),
                    vec![w.fragment.clone()],
                );
                continue;
            };
            if self.method.is_member(&w.fragment) {
                self.error(
                    IssueCode::DuplicateId,
                    format!("`{}` is both a member and waived", w.fragment),
                    vec![w.fragment.clone()],
                );
            }
            match f.phase.as_deref() {
                Some(p) if self.method.phases.iter().any(|q| q == p) => {}
                _ => self.error(
                    IssueCode::KindMismatch,
                    format!("waived `{}` is not in a selected phase", w.fragment),
                    vec![w.fragment.clone()],
                ),
            }
        }
    }

    fn mandatory(&mut self) {
        let mut missing = BTreeMap::new();
        for f in self.metamodel.fragments() {
            let Some(phase) = f.phase.as_deref() else {
                continue;
            };
            if !self.method.phases.iter().any(|p| p == phase) {
                continue;
            }
            let mandatory_for: Vec<_> = self
                .method
                .migration_types
                .iter()
                .filter(|&&t| {
                    self.metamodel
                        .entry(&f.id, t)
                        .is_some_and(|e| e.level == ApplicabilityLevel::Mandatory)
                })
                .map(|t| t.as_str())
                .collect();
            if mandatory_for.is_empty() || self.method.is_member(&f.id) || self.method.waiver(&f.id).is_some() {
                continue;
            }
            missing.insert(f.id.clone(), (f.name.clone(), mandatory_for.join(",")));
        }
        for (id, (name, types)) in missing {
            self.warning(
                IssueCode::MissingMandatory,
                format!("`{name}` is mandatory for migration type {types} but is neither included nor waived"),
                vec![id],
            );
        }
    }
}

/// Strongly connected groups of the sequence graph that form a cycle
/// (including self loops), each sorted, in sorted order.
fn sequence_cycles(method: &MethodModel) -> Vec<Vec<String>> {
    let mut adj: HashMap<&str, Vec<&str>> = HashMap::new();
    let mut nodes = BTreeSet::new();
    for e in &method.sequences {
        adj.entry(e.from.as_str()).or_default().push(e.to.as_str());
        nodes.insert(e.from.as_str());
        nodes.insert(e.to.as_str());
    }
    let reach = |start: &str| -> HashSet<&str> {
        let mut seen = HashSet::new();
        let mut stack = vec![start];
        while let Some(n) = stack.pop() {
            for &next in adj.get(n).into_iter().flatten() {
                if seen.insert(next) {
                    stack.push(next);
                }
            }
        }
        seen
    };
    let reachable: HashMap<&str, HashSet<&str>> = nodes.iter().map(|&n| (n, reach(n))).collect();
    let mut assigned = HashSet::new();
    let mut cycles = Vec::new();
    for &n in &nodes {
        if assigned.contains(n) || !reachable[n].contains(n) {
            continue;
        }
        let group: Vec<String> = nodes
            .iter()
            .filter(|&&m| reachable[n].contains(m) && reachable[m].contains(n))
            .map(|m| m.to_string())
            .collect();
        for m in &group {
            assigned.insert(m.clone());
        }
        cycles.push(group);
    }
    cycles
}

/// Checks `method` against `metamodel`; an empty result means the method
/// conforms.
pub fn check_conformance(method: &MethodModel, metamodel: &Metamodel) -> Vec<ValidationIssue> {
    let mut c = Checker {
        method,
        metamodel,
        issues: Vec::new(),
    };
    c.selection();
    c.user_fragments();
    c.members();
    c.sequences();
    c.techniques();
    c.relationships();
    c.mandatory();
    let mut issues = c.issues;
    issues.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    issues.dedup();
    issues
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::shipped_catalog;
    use crate::engine::instantiate;
    use crate::metamodel::{FragmentInclusion, MigrationType, SequenceEdge, TechniqueBinding, Waiver};

    fn base(types: &[MigrationType], phases: &[&str]) -> (Metamodel, MethodModel) {
        let mm = shipped_catalog();
        let m = instantiate(&mm, "m", &types.iter().copied().collect(), phases).unwrap();
        (mm, m)
    }

    fn codes(issues: &[ValidationIssue]) -> Vec<&'static str> {
        issues.iter().map(|i| i.code.as_str()).collect()
    }

    #[test]
    fn fresh_method_conforms() {
        let (mm, m) = base(&[MigrationType::V], &["plan"]);
        assert!(check_conformance(&m, &mm).is_empty());
        let (mm, m) = base(&MigrationType::ALL, &["plan", "design", "enable", "maintain"]);
        assert!(check_conformance(&m, &mm).is_empty());
    }

    #[test]
    fn unknown_member_is_dangling() {
        let (mm, mut m) = base(&[MigrationType::V], &["plan"]);
        m.members.push(FragmentInclusion::new("ghost"));
        let issues = check_conformance(&m, &mm);
        assert_eq!(codes(&issues), vec!["DANGLING_REF"]);
        assert_eq!(issues[0].severity, Severity::Error);
        assert_eq!(issues[0].subjects, vec!["ghost".to_string()]);
    }

    #[test]
    fn removed_mandatory_member_warns_unless_waived() {
        let (mm, mut m) = base(&[MigrationType::II], &["plan", "design", "enable", "maintain"]);
        m.members.retain(|x| x.fragment != "isolate-tenant-availability");
        let issues = check_conformance(&m, &mm);
        assert_eq!(codes(&issues), vec!["MISSING_MANDATORY"]);
        assert_eq!(issues[0].subjects, vec!["isolate-tenant-availability".to_string()]);
        m.waivers.push(Waiver {
            fragment: "isolate-tenant-availability".into(),
            justification: "single tenant pilot".into(),
        });
        assert!(check_conformance(&m, &mm).is_empty());
    }

    #[test]
    fn reversed_follows_edge_is_illogical() {
        let (mm, mut m) = base(&[MigrationType::I], &["design"]);
        m.sequences = vec![SequenceEdge::new(
            "identify-incompatibilities",
            "choose-cloud-platform-provider",
        )];
        let issues = check_conformance(&m, &mm);
        assert_eq!(codes(&issues), vec!["ILLOGICAL_SEQUENCE"]);
        assert_eq!(issues[0].severity, Severity::Warning);
    }

    #[test]
    fn cycles_are_flagged() {
        let (mm, mut m) = base(&[MigrationType::V], &["plan"]);
        m.sequences = vec![
            SequenceEdge::new("analyze-context", "define-plan"),
            SequenceEdge::new("define-plan", "analyze-context"),
            SequenceEdge::new(
                "recover-legacy-application-knowledge",
                "recover-legacy-application-knowledge",
            ),
        ];
        let issues = check_conformance(&m, &mm);
        assert_eq!(codes(&issues), vec!["ILLOGICAL_SEQUENCE", "ILLOGICAL_SEQUENCE"]);
        assert_eq!(
            issues[0].subjects,
            vec!["analyze-context".to_string(), "define-plan".to_string()]
        );
    }

    #[test]
    fn technique_on_work_product_is_a_kind_mismatch() {
        let (mm, mut m) = base(&[MigrationType::I], &["design"]);
        m.technique_bindings
            .insert(TechniqueBinding::new("cloud-solution-architecture", "reactive-scaling"));
        assert_eq!(codes(&check_conformance(&m, &mm)), vec!["KIND_MISMATCH"]);
    }

    #[test]
    fn issues_are_sorted_errors_first() {
        let (mm, mut m) = base(&[MigrationType::II], &["enable"]);
        m.members.retain(|x| x.fragment != "handle-transient-faults");
        m.members.push(FragmentInclusion::new("zzz"));
        m.members.push(FragmentInclusion::new("aaa"));
        m.phases.push("nowhere".into());
        let issues = check_conformance(&m, &mm);
        assert_eq!(
            codes(&issues),
            vec!["DANGLING_REF", "DANGLING_REF", "DANGLING_REF", "MISSING_MANDATORY"]
        );
        assert_eq!(issues[0].subjects, vec!["aaa".to_string()]);
        assert_eq!(issues[1].subjects, vec!["nowhere".to_string()]);
        assert_eq!(tally(&issues), (3, 1));
    }

    #[test]
    fn empty_selection_is_an_error() {
        let (mm, mut m) = base(&[MigrationType::V], &["plan"]);
        m.migration_types.clear();
        let issues = check_conformance(&m, &mm);
        assert_eq!(codes(&issues), vec!["EMPTY_SELECTION"]);
    }
}
