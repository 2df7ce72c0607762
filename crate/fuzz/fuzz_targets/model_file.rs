//! Model-file decoding must reject arbitrary input with typed errors, never
//! a panic. On the rare accepted input, exercise the cheap derived queries
//! that every caller touches immediately after loading.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(model) = ewkb::model::ModelSpec::from_toml_str(data) {
        let _ = model.label();
        let _ = model.sweep_scale();
        let _ = model.evaluate_h(ewkb::C64::new(0.5, 0.25));
        for j in 0..model.dim() {
            for k in 0..model.dim() {
                let _ = model.entry(j, k);
            }
        }
    }
});
