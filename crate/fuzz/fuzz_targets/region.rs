#![no_main]

use libfuzzer_sys::fuzz_target;
use rwpt::Region;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(region) = serde_json::from_str::<Region>(text) {
        let back: Region = serde_json::from_str(&region.to_json()).unwrap();
        assert_eq!(back, region);
        let _ = region.enumerate_with_budget(10_000);
    }
});
