#![no_main]

use libfuzzer_sys::fuzz_target;

// First byte picks the dimension, the rest is the entry list.
fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else { return };
    if let Ok(text) = std::str::from_utf8(rest) {
        let _ = qsd_cli::parse_operator_entries(text, 1 + n as usize % 8);
    }
});
