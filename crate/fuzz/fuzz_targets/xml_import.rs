#![no_main]

use libfuzzer_sys::fuzz_target;
use methodwb_core::{export_xml, import_xml, shipped_catalog};

fuzz_target!(|data: &[u8]| {
    let mm = shipped_catalog();
    if let Ok(m) = import_xml(data, &mm) {
        let xml = export_xml(&m, &mm).expect("imported method exports");
        assert_eq!(import_xml(&xml, &mm).expect("export re-imports"), m);
    }
});
