#![no_main]

use libfuzzer_sys::fuzz_target;
use nma_inconsistency::network::parse_arms;

fuzz_target!(|data: &[u8]| {
    let _ = parse_arms(data);
});
