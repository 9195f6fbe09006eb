#![no_main]

use libfuzzer_sys::fuzz_target;
use rwpt::{build_distribution, DistributionSpec};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = DistributionSpec::from_json(text) {
        if let Ok(d) = build_distribution(&spec) {
            let total: f64 = d.support().iter().map(|e| e.1).sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
        let again = serde_json::to_string(&spec).unwrap();
        assert_eq!(DistributionSpec::from_json(&again).unwrap(), spec);
    }
});
