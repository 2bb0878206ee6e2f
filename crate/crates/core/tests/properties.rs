mod common;

use std::collections::BTreeSet;

use common::{random_method, PHASES};
use methodwb_core::interchange::{export_records, import_records};
use methodwb_core::metamodel::{MigrationType, Waiver};
use methodwb_core::repository::Store;
use methodwb_core::tailoring::{apply, replay, FragmentSpec, TailoringAction};
use methodwb_core::{
    check_conformance, export_catalog, export_xml, import_xml, instantiate, load_catalog, shipped_catalog,
    FragmentKind, IssueCode, Severity,
};
use proptest::prelude::*;

fn types_strategy() -> impl Strategy<Value = BTreeSet<MigrationType>> {
    proptest::sample::subsequence(MigrationType::ALL.to_vec(), 1..=5).prop_map(|v| v.into_iter().collect())
}

fn phases_strategy() -> impl Strategy<Value = Vec<&'static str>> {
    proptest::sample::subsequence(PHASES.to_vec(), 1..=4)
}

fn members(m: &methodwb_core::MethodModel) -> BTreeSet<String> {
    m.members.iter().map(|x| x.fragment.clone()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn xml_round_trip(seed in any::<u64>()) {
        let mm = shipped_catalog();
        let m = random_method(seed, &mm);
        let bytes = export_xml(&m, &mm).unwrap();
        let back = import_xml(&bytes, &mm).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(export_xml(&back, &mm).unwrap(), bytes);
    }

    #[test]
    fn records_round_trip(seed in any::<u64>()) {
        let mm = shipped_catalog();
        let m = random_method(seed, &mm);
        prop_assert_eq!(import_records(&export_records(&m)).unwrap(), m);
    }

    #[test]
    fn instantiation_is_deterministic(types in types_strategy(), phases in phases_strategy()) {
        let mm = shipped_catalog();
        let a = instantiate(&mm, "d", &types, &phases).unwrap();
        let b = instantiate(&mm, "d", &types, &phases).unwrap();
        prop_assert_eq!(export_xml(&a, &mm).unwrap(), export_xml(&b, &mm).unwrap());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn more_types_or_phases_never_drop_members(
        types in types_strategy(),
        more_types in types_strategy(),
        phases in phases_strategy(),
        more_phases in phases_strategy(),
    ) {
        let mm = shipped_catalog();
        let base = members(&instantiate(&mm, "m", &types, &phases).unwrap());
        let wider_types: BTreeSet<_> = types.union(&more_types).copied().collect();
        let mut wider_phases = phases.clone();
        wider_phases.extend(more_phases.iter().filter(|p| !phases.contains(p)));
        let wider = members(&instantiate(&mm, "m", &wider_types, &wider_phases).unwrap());
        prop_assert!(base.is_subset(&wider));
    }

    #[test]
    fn fresh_methods_conform(types in types_strategy(), phases in phases_strategy()) {
        let mm = shipped_catalog();
        let m = instantiate(&mm, "fresh", &types, &phases).unwrap();
        prop_assert!(check_conformance(&m, &mm).is_empty());
    }

    #[test]
    fn removal_never_leaves_dangling_references(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let mm = shipped_catalog();
        let m = random_method(seed, &mm);
        prop_assume!(!m.members.is_empty());
        let id = m.members[pick.index(m.members.len())].fragment.clone();
        let r = apply(&m, &mm, &TailoringAction::RemoveFragment { id: id.clone(), waiver: None }).unwrap();
        prop_assert!(!r.issues.iter().any(|i| i.severity == Severity::Error), "{:?}", r.issues);
        prop_assert!(!r.method.is_member(&id));
        prop_assert!(r.method.sequences.iter().all(|e| e.from != id && e.to != id));
        prop_assert!(r.method.technique_bindings.iter().all(|b| b.task != id));
        let untouched = r.method.relationships.iter().all(|rel| rel.source != id && rel.target != id);
        prop_assert!(untouched);
        let orphaned = r.method.user_fragments.iter().any(|u| u.parent.as_deref() == Some(id.as_str()));
        prop_assert!(!orphaned);
    }

    #[test]
    fn issues_are_always_fresh(seed in any::<u64>(), extend_seed in any::<u64>()) {
        let mm = shipped_catalog();
        let m = random_method(seed, &mm);
        let n = random_method(extend_seed, &mm);
        // Replaying the second method's sequence edges onto the first, when
        // legal, must report exactly what check_conformance reports.
        let edges = n.sequences.into_iter().filter(|e| m.is_member(&e.from) && m.is_member(&e.to)).collect();
        let r = apply(&m, &mm, &TailoringAction::SetSequence { edges }).unwrap();
        prop_assert_eq!(r.issues, check_conformance(&r.method, &mm));
    }

    #[test]
    fn add_then_remove_is_identity(seed in any::<u64>(), name in "[a-zA-Z][a-zA-Z ]{0,20}", kind_pick in 0usize..3, phase_pick in any::<prop::sample::Index>()) {
        let mm = shipped_catalog();
        let m = random_method(seed, &mm);
        let kind = [FragmentKind::Task, FragmentKind::WorkProduct, FragmentKind::Principle][kind_pick];
        let phase = m.phases[phase_pick.index(m.phases.len())].clone();
        let added = apply(&m, &mm, &TailoringAction::AddFragment(FragmentSpec::New {
            id: None, name, kind, phase, definition: "d".into(),
        })).unwrap().method;
        let new_id = added.user_fragments.iter().find(|f| m.user_fragment(&f.id).is_none()).unwrap().id.clone();
        let back = apply(&added, &mm, &TailoringAction::RemoveFragment { id: new_id, waiver: None }).unwrap().method;
        prop_assert_eq!(back, m);
    }

    #[test]
    fn tailoring_never_mutates_its_input(seed in any::<u64>()) {
        let mm = shipped_catalog();
        let m = random_method(seed, &mm);
        let snapshot = m.clone();
        let actions: Vec<TailoringAction> = m.members.iter().take(3).map(|x| TailoringAction::EditDefinition {
            id: x.fragment.clone(),
            definition: "changed".into(),
        }).collect();
        let _ = replay(&m, &mm, &actions);
        prop_assert_eq!(m, snapshot);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn repository_round_trip(seeds in proptest::collection::vec(any::<u64>(), 1..6)) {
        let mm = shipped_catalog();
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        store.install_metamodel(&mm, true).unwrap();
        let mut shadow = std::collections::BTreeMap::new();
        for (i, seed) in seeds.iter().enumerate() {
            let mut m = random_method(*seed, &mm);
            // Reuse a small id space so later saves overwrite earlier ones.
            m.id = format!("m{}", i % 3);
            store.save_method(&m).unwrap();
            shadow.insert(m.id.clone(), m);
        }
        let reopened = Store::open(dir.path()).unwrap();
        for (id, m) in &shadow {
            prop_assert_eq!(&reopened.load_method(id).unwrap(), m);
        }
        prop_assert_eq!(reopened.list_methods().unwrap().len(), shadow.len());
        prop_assert!(reopened.verify().unwrap().is_empty());
    }
}

#[test]
fn hundred_save_cycles_match_a_shadow_map() {
    let mm = shipped_catalog();
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    store.install_metamodel(&mm, true).unwrap();
    let mut shadow = std::collections::BTreeMap::new();
    for seed in 0..100u64 {
        let mut m = random_method(seed, &mm);
        m.id = format!("m{}", seed % 7);
        store.save_method(&m).unwrap();
        shadow.insert(m.id.clone(), m);
    }
    for (id, m) in &shadow {
        assert_eq!(&store.load_method(id).unwrap(), m);
    }
    assert_eq!(store.list_methods().unwrap().len(), shadow.len());
}

#[test]
fn catalog_export_round_trips() {
    let mm = shipped_catalog();
    let bytes = export_catalog(&mm);
    assert_eq!(load_catalog(&bytes).unwrap(), mm);
}

#[test]
fn mandatory_removal_warns_exactly_once_until_waived() {
    let mm = shipped_catalog();
    for t in MigrationType::ALL {
        let m = instantiate(&mm, "w", &[t].into(), &PHASES).unwrap();
        for inc in &m.members {
            let mandatory = mm
                .entry(&inc.fragment, t)
                .is_some_and(|e| e.level == methodwb_core::ApplicabilityLevel::Mandatory);
            let r = apply(
                &m,
                &mm,
                &TailoringAction::RemoveFragment {
                    id: inc.fragment.clone(),
                    waiver: None,
                },
            )
            .unwrap();
            let missing = r
                .issues
                .iter()
                .filter(|i| i.code == IssueCode::MissingMandatory)
                .count();
            assert_eq!(missing, usize::from(mandatory), "{} {t}", inc.fragment);
            if mandatory {
                let mut waived = r.method.clone();
                waived.waivers.push(Waiver {
                    fragment: inc.fragment.clone(),
                    justification: "n/a".into(),
                });
                assert!(check_conformance(&waived, &mm).is_empty());
            }
        }
    }
}
