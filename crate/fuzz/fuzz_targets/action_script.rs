#![no_main]

use libfuzzer_sys::fuzz_target;
use methodwb_core::tailoring::{parse_action_script, replay, write_action_script};
use methodwb_core::{instantiate, shipped_catalog, MigrationType};

fuzz_target!(|data: &[u8]| {
    let Ok(actions) = parse_action_script(data) else { return };
    assert_eq!(parse_action_script(&write_action_script(&actions)).unwrap(), actions);
    let mm = shipped_catalog();
    let base = instantiate(&mm, "fuzz", &MigrationType::ALL.into(), &["all"]).unwrap();
    // Replay may reject an action but must never panic.
    let _ = replay(&base, &mm, &actions);
});
