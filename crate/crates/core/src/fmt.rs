//! Numeric formatting shared by the file writers.

/// Shortest decimal that round-trips to the same f64, with a guaranteed
/// decimal point so whole numbers still read back as floats.
pub fn format_float(v: f64) -> String {
    let s = format!("{v}");
    if s.contains(['.', 'e', 'N', 'i']) {
        s
    } else {
        format!("{s}.0")
    }
}
