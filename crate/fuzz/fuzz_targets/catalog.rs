#![no_main]

use libfuzzer_sys::fuzz_target;
use methodwb_core::{export_catalog, load_catalog};

fuzz_target!(|data: &[u8]| {
    // Anything that loads must survive a write/read cycle unchanged.
    if let Ok(mm) = load_catalog(data) {
        let again = load_catalog(&export_catalog(&mm)).expect("exported catalog reloads");
        assert_eq!(again, mm);
    }
});
