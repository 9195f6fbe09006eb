#![no_main]

use libfuzzer_sys::fuzz_target;
use rwpt::asymptotic::predict::{FormulaId, ToleranceConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(tol) = ToleranceConfig::from_json(text) {
        for f in FormulaId::ALL {
            assert!(tol.calibration(f) >= 0.0);
        }
    }
});
