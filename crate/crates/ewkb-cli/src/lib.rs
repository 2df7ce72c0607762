//! Flag grammars of the `ewkb` binary, split out of the binary so fuzz
//! targets can drive them directly: `--param KEY=VALUE` overrides and
//! `--vary PARAM=LO:HI:STEPS` grid specifications.

/// Parse one `--param KEY=VALUE` override.
pub fn parse_override(s: &str) -> Result<(String, f64), String> {
    let (key, value) = s.split_once('=').ok_or("expected KEY=VALUE")?;
    if key.is_empty() {
        return Err("empty parameter name".into());
    }
    let value: f64 = value.parse().map_err(|_| format!("{value:?} is not a number"))?;
    if !value.is_finite() {
        return Err("parameter values must be finite".into());
    }
    Ok((key.to_string(), value))
}

/// One swept parameter: `name=lo:hi:steps` with `steps` grid points and both
/// ends inclusive.
#[derive(Clone, Debug)]
pub struct VarySpec {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

/// Parse one `--vary PARAM=LO:HI:STEPS` grid specification.
pub fn parse_vary(s: &str) -> Result<VarySpec, String> {
    let (name, grid) = s.split_once('=').ok_or("expected PARAM=LO:HI:STEPS")?;
    if name.is_empty() {
        return Err("empty parameter name".into());
    }
    let parts: Vec<&str> = grid.split(':').collect();
    let [lo, hi, steps] = parts[..] else {
        return Err("expected PARAM=LO:HI:STEPS".into());
    };
    let lo: f64 = lo.parse().map_err(|_| format!("{lo:?} is not a number"))?;
    let hi: f64 = hi.parse().map_err(|_| format!("{hi:?} is not a number"))?;
    if !lo.is_finite() || !hi.is_finite() {
        return Err("grid ends must be finite".into());
    }
    let steps: usize = steps.parse().map_err(|_| format!("{steps:?} is not a step count"))?;
    if steps == 0 {
        return Err("step count must be at least 1".into());
    }
    Ok(VarySpec { name: name.to_string(), lo, hi, steps })
}
