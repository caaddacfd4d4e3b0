#![no_main]

use fb_core::grid::{parse_vfg1, write_vfg1_string};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // Anything that parses must survive a write/parse round trip unchanged.
    if let Ok(field) = parse_vfg1(data) {
        let text = write_vfg1_string(&field);
        let again = parse_vfg1(text.as_bytes()).expect("written VFG1 must parse");
        assert_eq!(again.values, field.values);
        assert_eq!(again.grid, field.grid);
    }
});
