#![no_main]

use libfuzzer_sys::fuzz_target;
use room_awareness::harness::{parse_log, write_log};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(records) = parse_log(text) {
        let again = parse_log(&write_log(&records)).expect("written log parses");
        assert_eq!(again.len(), records.len());
    }
});
