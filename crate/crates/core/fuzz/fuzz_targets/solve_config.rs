#![no_main]

use fb_core::config::parse_solve_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = parse_solve_config(text) {
            assert!(cfg.grid().is_ok());
            assert!(cfg.solver_config().validate().is_ok());
        }
    }
});
