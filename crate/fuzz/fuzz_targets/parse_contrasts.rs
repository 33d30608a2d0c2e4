#![no_main]

use libfuzzer_sys::fuzz_target;
use nma_inconsistency::network::parse_contrasts;

fuzz_target!(|data: &[u8]| {
    let _ = parse_contrasts(data);
});
