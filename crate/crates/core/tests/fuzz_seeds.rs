//! Runs the fuzz-target bodies over the checked-in corpus and over
//! truncated and byte-flipped variants of each seed, so the parsers get
//! exercised on the stable toolchain too.

use std::path::{Path, PathBuf};

use methodwb_core::repository::{check_table, TableFile};
use methodwb_core::tailoring::{parse_action_script, replay, write_action_script};
use methodwb_core::{
    export_catalog, export_xml, import_xml, instantiate, load_catalog, shipped_catalog, MigrationType,
};

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

/// The seed itself, every prefix at a coarse stride, and single-byte flips.
fn variants(seed: &[u8]) -> Vec<Vec<u8>> {
    let mut out = vec![seed.to_vec()];
    let stride = (seed.len() / 64).max(1);
    out.extend((0..seed.len()).step_by(stride).map(|n| seed[..n].to_vec()));
    for (i, flip) in (0..seed.len())
        .step_by(stride * 3)
        .zip([b'<', b'"', b'=', b'[', 0xFF, b'\n', b'&'].iter().cycle())
    {
        let mut v = seed.to_vec();
        v[i] = *flip;
        out.push(v);
    }
    out
}

#[test]
fn catalog_seeds() {
    for (path, seed) in seeds("catalog") {
        assert!(load_catalog(&seed).is_ok(), "{} should load", path.display());
        for data in variants(&seed) {
            if let Ok(mm) = load_catalog(&data) {
                assert_eq!(load_catalog(&export_catalog(&mm)).unwrap(), mm);
            }
        }
    }
}

#[test]
fn action_script_seeds() {
    let mm = shipped_catalog();
    let base = instantiate(&mm, "fuzz", &MigrationType::ALL.into(), &["all"]).unwrap();
    for (path, seed) in seeds("action_script") {
        assert!(parse_action_script(&seed).is_ok(), "{} should parse", path.display());
        for data in variants(&seed) {
            if let Ok(actions) = parse_action_script(&data) {
                assert_eq!(parse_action_script(&write_action_script(&actions)).unwrap(), actions);
                let _ = replay(&base, &mm, &actions);
            }
        }
    }
}

#[test]
fn xml_import_seeds() {
    let mm = shipped_catalog();
    for (path, seed) in seeds("xml_import") {
        assert!(import_xml(&seed, &mm).is_ok(), "{} should import", path.display());
        for data in variants(&seed) {
            if let Ok(m) = import_xml(&data, &mm) {
                let xml = export_xml(&m, &mm).unwrap();
                assert_eq!(import_xml(&xml, &mm).unwrap(), m);
            }
        }
    }
}

#[test]
fn store_table_seeds() {
    for (path, seed) in seeds("store_tables") {
        let (&pick, body) = seed.split_first().unwrap();
        let table = TableFile::ALL[usize::from(pick) % TableFile::ALL.len()];
        assert!(check_table(table, body).is_ok(), "{} should check", path.display());
        for data in variants(&seed) {
            if let Some((&pick, body)) = data.split_first() {
                let _ = check_table(TableFile::ALL[usize::from(pick) % TableFile::ALL.len()], body);
            }
        }
    }
}
