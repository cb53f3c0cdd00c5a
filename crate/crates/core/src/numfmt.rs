//! Full-precision float formatting for emitted CSV files.

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn f17(x: f64) -> String {
    if x == 0.0 {
        // keeps the sign of -0.0 out of the files
        return "0.0000000000000000e0".to_string();
    }
    format!("{:.16e}", x)
}
