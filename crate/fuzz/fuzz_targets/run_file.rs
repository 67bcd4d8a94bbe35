//! Run-file parser. Whatever parses must survive a format/parse round trip.

#![no_main]

use infosearch_core::ingest::{format_run, parse_run, parse_run_line};
use infosearch_core::model::Mode;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for (i, line) in text.lines().enumerate() {
        let _ = parse_run_line(line, "fuzz", i + 1);
    }
    for score_from_rank in [false, true] {
        let Ok(lists) = parse_run(text, "fuzz", Mode::Instructed, score_from_rank) else { continue };
        let again = parse_run(&format_run(&lists, "fuzz"), "again", Mode::Instructed, false)
            .expect("formatted run must parse");
        assert_eq!(lists, again);
    }
});
