#![no_main]

use infosearch_core::ingest::parse_records;
use infosearch_core::model::{CoreQuery, Document, InstructedQuery};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_records::<Document>(text, "documents.jsonl");
    let _ = parse_records::<CoreQuery>(text, "core_queries.jsonl");
    let _ = parse_records::<InstructedQuery>(text, "instructed_queries.jsonl");
});
