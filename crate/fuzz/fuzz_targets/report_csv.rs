#![no_main]

use libfuzzer_sys::fuzz_target;
use room_awareness::harness::ExperimentReport;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(report) = ExperimentReport::from_csv(text) {
        let again = ExperimentReport::from_csv(&report.to_csv()).expect("written report parses");
        assert_eq!(again.rows.len(), report.rows.len());
    }
});
