#![no_main]

use libfuzzer_sys::fuzz_target;
use replen::policy::PolicyNet;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(net) = PolicyNet::from_json(text) {
        // A loaded model must survive its own serialization.
        PolicyNet::from_json(&net.to_json()).expect("saved model loads");
    }
});
