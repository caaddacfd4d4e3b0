#![no_main]

use fb_core::config::{parse_list, parse_point, parse_range, MAX_RANGE_LEN};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = parse_range(text) {
        assert!(!r.is_empty() && r.len() <= MAX_RANGE_LEN);
        assert!(r.windows(2).all(|w| w[0] < w[1]));
    }
    if let Ok(p) = parse_point(text) {
        assert!((2..=3).contains(&p.len()) && p.iter().all(|x| x.is_finite()));
    }
    let _ = parse_list(text);
});
