//! First byte picks the candidate count, the rest is the model output.

#![no_main]

use infosearch_core::rerank::parse_listwise_ranking;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&m, rest)) = data.split_first() else { return };
    let m = m as usize % 120;
    let raw = String::from_utf8_lossy(rest);
    if let Ok(perm) = parse_listwise_ranking(&raw, m) {
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        assert!(sorted.iter().copied().eq(1..=m), "not a permutation: {perm:?}");
    }
});
