#![no_main]

use libfuzzer_sys::fuzz_target;
use nma_inconsistency::network::EvidenceNetwork;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(net) = EvidenceNetwork::from_canonical_json(text) {
            let again = EvidenceNetwork::from_canonical_json(&net.to_canonical_json()).expect("dump reloads");
            assert_eq!(again, net);
        }
    }
});
