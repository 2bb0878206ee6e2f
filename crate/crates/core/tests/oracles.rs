mod common;

use std::collections::BTreeSet;

use common::{fixture_rows, oracle_members, raw_catalog, PHASES, TABLE2, TABLE3};
use methodwb_core::metamodel::{relationship_set, ApplicabilityLevel, MigrationType};
use methodwb_core::{applicability_of, instantiate, shipped_catalog};

fn subsets() -> Vec<Vec<&'static str>> {
    (1u32..16)
        .map(|mask| {
            PHASES
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, p)| *p)
                .collect()
        })
        .collect()
}

#[test]
fn engine_matches_brute_force_scan_for_all_75_cases() {
    let mm = shipped_catalog();
    let raw = raw_catalog();
    let mut cases = 0;
    for t in MigrationType::ALL {
        for phases in subsets() {
            let method = instantiate(&mm, "oracle", &[t].into(), &phases).unwrap();
            let got: BTreeSet<String> = method.members.iter().map(|m| m.fragment.clone()).collect();
            let want = oracle_members(&raw, &[t.as_str()], &phases);
            assert_eq!(got, want, "type {t}, phases {phases:?}");
            cases += 1;
        }
    }
    assert_eq!(cases, 75);
}

#[test]
fn engine_matches_oracle_for_type_combinations() {
    let mm = shipped_catalog();
    let raw = raw_catalog();
    for mask in 1u32..32 {
        let types: Vec<MigrationType> = MigrationType::ALL
            .into_iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, t)| t)
            .collect();
        let names: Vec<&str> = types.iter().map(|t| t.as_str()).collect();
        let method = instantiate(&mm, "o", &types.iter().copied().collect(), &PHASES).unwrap();
        let got: BTreeSet<String> = method.members.iter().map(|m| m.fragment.clone()).collect();
        assert_eq!(got, oracle_members(&raw, &names, &PHASES), "types {names:?}");
    }
}

#[test]
fn applicability_matrix_matches_the_transcription() {
    let mm = shipped_catalog();
    let rows = fixture_rows(TABLE2);
    assert_eq!(rows.len(), 11);
    let mut checked = 0;
    for row in rows {
        let (id, glyphs, note) = (row[0], row[1], row[2]);
        for (t, g) in MigrationType::ALL.into_iter().zip(glyphs.chars()) {
            let (level, got_note) = applicability_of(&mm, id, t).unwrap();
            let (want_level, want_note) = match g {
                'M' => (ApplicabilityLevel::Mandatory, Some(note)),
                'S' => (ApplicabilityLevel::Situational, Some(note)),
                _ => (ApplicabilityLevel::Unnecessary, None),
            };
            assert_eq!(level, want_level, "{id} {t}");
            assert_eq!(got_note.as_deref(), want_note, "{id} {t}");
            checked += 1;
        }
    }
    assert_eq!(checked, 55);
}

#[test]
fn relationship_set_matches_the_transcription() {
    let mm = shipped_catalog();
    let want: BTreeSet<String> = fixture_rows(TABLE3).into_iter().map(|r| r.join("\t")).collect();
    assert_eq!(want.len(), 8);
    let got: BTreeSet<String> = relationship_set(&mm, None)
        .iter()
        .map(|r| {
            let kind = |id: &str| mm.fragment(id).unwrap().kind.as_str().to_string();
            [
                format!("{:?}", r.rel_type.category()),
                r.rel_type.as_str().to_string(),
                r.source.clone(),
                kind(&r.source),
                r.target.clone(),
                kind(&r.target),
                format!("{:?}", r.knowledge_source),
            ]
            .join("\t")
        })
        .collect();
    assert_eq!(got, want);
}
