#![no_main]

use libfuzzer_sys::fuzz_target;
use rwpt_cli::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::from_json(text) {
        let _ = cfg.validate();
        assert_eq!(cfg.hash(), cfg.clone().hash());
    }
});
