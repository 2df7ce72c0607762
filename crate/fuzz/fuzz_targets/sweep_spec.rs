//! The --vary grid grammar must reject arbitrary input without panicking,
//! and every accepted spec must satisfy the invariants the sweep loop
//! assumes: finite ends, at least one step, non-empty name.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(spec) = ewkb_cli::parse_vary(data) {
        assert!(!spec.name.is_empty());
        assert!(spec.lo.is_finite() && spec.hi.is_finite());
        assert!(spec.steps >= 1);
    }
});
