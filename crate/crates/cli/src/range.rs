//! `A:STEP:B`, `A:B` and plain-value lists, comma separated.

/// Parses `spec` into an inclusive list of values, each rounded to 1e-9.
///
/// `"0:2:10"` gives 0, 2, ..., 10; `"5:8"` steps by 1; `"1,3,10:5:20"` mixes
/// forms. An empty string gives an empty list.
pub fn parse_list(spec: &str) -> Result<Vec<f64>, String> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for item in spec.split(',') {
        out.extend(parse_item(item.trim())?);
    }
    Ok(out)
}

fn number(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn round9(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

fn parse_item(item: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = item.split(':').collect();
    let (start, step, stop) = match parts.as_slice() {
        [a] => return Ok(vec![round9(number(a)?)]),
        [a, b] => (number(a)?, 1.0, number(b)?),
        [a, s, b] => (number(a)?, number(s)?, number(b)?),
        _ => return Err(format!("`{item}` is not of the form A, A:B or A:STEP:B")),
    };
    if step == 0.0 {
        return Err(format!("`{item}` has a zero step"));
    }
    let span = (stop - start) / step;
    if span < -1e-9 {
        return Err(format!("`{item}` is empty: the step points away from the end value"));
    }
    let count = (span + 1e-9).floor() as usize + 1;
    if count > 100_000 {
        return Err(format!("`{item}` expands to {count} values"));
    }
    Ok((0..count).map(|i| round9(start + i as f64 * step)).collect())
}
