#![no_main]

use infosearch_core::bm25::tokenize;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    for token in tokenize(&text) {
        assert!(!token.is_empty());
        assert!(!token.chars().any(char::is_whitespace), "{token:?}");
    }
});
