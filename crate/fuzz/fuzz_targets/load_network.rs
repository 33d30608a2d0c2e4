#![no_main]

use libfuzzer_sys::fuzz_target;
use nma_inconsistency::network::load_network_from_str;

// Sections separated by a line holding `---`: contrasts, covariances, arms.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let mut parts = text.split("\n---\n");
    let contrasts = parts.next().unwrap_or("");
    let cov = parts.next().filter(|s| !s.is_empty());
    let arms = parts.next().filter(|s| !s.is_empty());
    if let Ok(net) = load_network_from_str(contrasts, cov, arms, None) {
        let _ = nma_inconsistency::design::build_x(&net);
        let _ = nma_inconsistency::placement::place(&net, nma_inconsistency::placement::PlacementMethod::LuAdes);
    }
});
