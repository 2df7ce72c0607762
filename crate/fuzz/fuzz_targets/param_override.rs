//! The --param override grammar must reject arbitrary input without
//! panicking; accepted overrides carry a non-empty key and a finite value.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok((key, value)) = ewkb_cli::parse_override(data) {
        assert!(!key.is_empty());
        assert!(value.is_finite());
    }
});
