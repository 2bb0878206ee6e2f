#![no_main]

use libfuzzer_sys::fuzz_target;
use methodwb_core::repository::{check_table, TableFile};

fuzz_target!(|data: &[u8]| {
    // The first byte picks the table; the rest is the file body.
    let Some((&pick, body)) = data.split_first() else {
        return;
    };
    let table = TableFile::ALL[usize::from(pick) % TableFile::ALL.len()];
    let _ = check_table(table, body);
});
