//! Parsed reports re-render to a fixed point after one pass.

#![no_main]

use infosearch_core::report::{parse_csv, render, Format};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(rows) = parse_csv(text) else { return };
    if rows.is_empty() {
        return;
    }
    let once = render(&rows, Format::Csv).expect("parsed rows render");
    let twice = render(&parse_csv(&once).expect("rendered csv parses"), Format::Csv).unwrap();
    assert_eq!(once, twice);
    let _ = render(&rows, Format::Markdown);
    let _ = render(&rows, Format::Structured);
});
