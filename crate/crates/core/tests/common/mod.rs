//! Shared test helpers: an independent reading of the shipped catalog and a
//! seeded generator of tailored methods.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use methodwb_core::metamodel::{FragmentKind, Metamodel, MethodModel, MigrationType, SequenceEdge};
use methodwb_core::tailoring::{apply, FragmentSpec, TailoringAction};
use methodwb_core::{check_conformance, instantiate, Severity};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CATALOG_TOML: &str = include_str!("../../data/catalog.toml");
pub const TABLE2: &str = include_str!("../fixtures/table2.tsv");
pub const TABLE3: &str = include_str!("../fixtures/table3.tsv");

pub const PHASES: [&str; 4] = ["plan", "design", "enable", "maintain"];

/// The catalog as raw TOML, read without going through the crate's loader.
pub struct RawCatalog {
    /// fragment id -> (kind, phase)
    pub fragments: BTreeMap<String, (String, Option<String>)>,
    /// (fragment id, migration type) -> level
    pub levels: BTreeMap<(String, String), String>,
}

pub fn raw_catalog() -> RawCatalog {
    let doc: toml::Table = CATALOG_TOML.parse().expect("catalog is TOML");
    let mut fragments = BTreeMap::new();
    for f in doc["fragment"].as_array().unwrap() {
        let id = f["id"].as_str().unwrap().to_string();
        let kind = f["kind"].as_str().unwrap().to_string();
        let phase = f.get("phase").and_then(|p| p.as_str()).map(String::from);
        fragments.insert(id, (kind, phase));
    }
    let mut levels = BTreeMap::new();
    for e in doc["applicability"].as_array().unwrap() {
        levels.insert(
            (
                e["fragment"].as_str().unwrap().to_string(),
                e["migration-type"].as_str().unwrap().to_string(),
            ),
            e["level"].as_str().unwrap().to_string(),
        );
    }
    RawCatalog { fragments, levels }
}

/// Brute-force membership: every non-phase fragment of a selected phase
/// that is Mandatory or Situational for at least one selected type.
/// Unlisted cells default to Situational.
pub fn oracle_members(raw: &RawCatalog, types: &[&str], phases: &[&str]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for (id, (kind, phase)) in &raw.fragments {
        if kind == "Phase" {
            continue;
        }
        let Some(phase) = phase else { continue };
        if !phases.contains(&phase.as_str()) {
            continue;
        }
        let wanted = types.iter().any(|t| {
            let level = raw
                .levels
                .get(&(id.clone(), t.to_string()))
                .map_or("Situational", String::as_str);
            level != "Unnecessary"
        });
        if wanted {
            out.insert(id.clone());
        }
    }
    out
}

/// Rows of a hand-transcribed fixture, comments and blanks skipped.
pub fn fixture_rows(text: &str) -> Vec<Vec<&str>> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| l.split('\t').collect())
        .collect()
}

const ALPHABET: &[char] = &[
    'a', 'b', 'c', 'x', 'y', 'z', 'A', 'Q', '0', '7', ' ', ' ', '-', '_', '.', '&', '<', '>', '"', '\'', '\t', '\n',
    '\r', 'é', 'ß', '中', '→', ';', '#',
];

pub fn random_text(rng: &mut ChaCha8Rng, max: usize) -> String {
    let len = rng.random_range(0..=max);
    (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

fn random_name(rng: &mut ChaCha8Rng) -> String {
    loop {
        let s = random_text(rng, 24);
        if !s.trim().is_empty() {
            return s;
        }
    }
}

fn member_ids(m: &MethodModel) -> Vec<String> {
    m.members.iter().map(|x| x.fragment.clone()).collect()
}

fn random_action(rng: &mut ChaCha8Rng, mm: &Metamodel, m: &MethodModel) -> Option<TailoringAction> {
    let members = member_ids(m);
    let tasks: Vec<String> = m
        .members_of_kind(mm, FragmentKind::Task)
        .map(|f| f.id.clone())
        .collect();
    let techniques: Vec<String> = mm
        .fragments()
        .iter()
        .filter(|f| f.kind == FragmentKind::Technique)
        .map(|f| f.id.clone())
        .collect();
    Some(match rng.random_range(0..8) {
        0 => TailoringAction::ExtendFragment {
            parent: members.choose(rng)?.clone(),
            name: random_name(rng),
            id: None,
            definition: random_text(rng, 40),
        },
        1 => TailoringAction::AddFragment(FragmentSpec::New {
            id: None,
            name: random_name(rng),
            kind: *[FragmentKind::Task, FragmentKind::WorkProduct, FragmentKind::Principle].choose(rng)?,
            phase: m.phases.choose(rng)?.clone(),
            definition: random_text(rng, 40),
        }),
        2 => {
            let candidates: Vec<&str> = mm
                .fragments()
                .iter()
                .filter(|f| {
                    f.phase.as_ref().is_some_and(|p| m.phases.contains(p))
                        && f.kind != FragmentKind::Phase
                        && !m.is_member(&f.id)
                })
                .map(|f| f.id.as_str())
                .collect();
            TailoringAction::AddFragment(FragmentSpec::Catalog {
                id: candidates.choose(rng)?.to_string(),
                definition: rng.random_bool(0.3).then(|| random_text(rng, 30)),
            })
        }
        3 => {
            let id = members.choose(rng)?.clone();
            let waiver = (m.user_fragment(&id).is_none() && rng.random_bool(0.5)).then(|| random_text(rng, 30));
            TailoringAction::RemoveFragment { id, waiver }
        }
        4 => {
            let n = rng.random_range(0..5);
            let edges = (0..n)
                .filter_map(|_| {
                    Some(SequenceEdge::new(
                        members.choose(rng)?.clone(),
                        members.choose(rng)?.clone(),
                    ))
                })
                .collect();
            TailoringAction::SetSequence { edges }
        }
        5 => TailoringAction::BindTechnique {
            task: tasks.choose(rng)?.clone(),
            technique: techniques.choose(rng)?.clone(),
        },
        6 => {
            let b: Vec<_> = m.technique_bindings.iter().collect();
            let b = b.choose(rng)?;
            TailoringAction::UnbindTechnique {
                task: b.task.clone(),
                technique: b.technique.clone(),
            }
        }
        _ => TailoringAction::EditDefinition {
            id: members.choose(rng)?.clone(),
            definition: random_text(rng, 40),
        },
    })
}

/// A method instantiated from random types and phases and then put through
/// up to a dozen random tailoring actions. Failing actions are skipped, so
/// the result is always a value tailoring can produce.
pub fn random_method(seed: u64, mm: &Metamodel) -> MethodModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let types: BTreeSet<MigrationType> = loop {
        let t: BTreeSet<_> = MigrationType::ALL
            .into_iter()
            .filter(|_| rng.random_bool(0.4))
            .collect();
        if !t.is_empty() {
            break t;
        }
    };
    let phases: Vec<&str> = loop {
        let p: Vec<_> = PHASES.into_iter().filter(|_| rng.random_bool(0.5)).collect();
        if !p.is_empty() {
            break p;
        }
    };
    let name = random_name(&mut rng);
    let mut m = instantiate(mm, &name, &types, &phases).expect("nonempty selection");
    if rng.random_bool(0.5) {
        m.description = random_text(&mut rng, 60);
    }
    for _ in 0..rng.random_range(0..12) {
        if let Some(action) = random_action(&mut rng, mm, &m) {
            if let Ok(r) = apply(&m, mm, &action) {
                m = r.method;
            }
        }
    }
    debug_assert!(check_conformance(&m, mm).iter().all(|i| i.severity != Severity::Error));
    m
}
