//! Plain CSV emission: `.` decimal separator, `\n` line endings, 9 significant digits.

use std::fmt::Write as _;

/// Formats `x` with 9 significant digits; fixed notation for moderate magnitudes,
/// scientific otherwise.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if x.is_nan() {
        return "NaN".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let exponent = x.abs().log10().floor() as i32;
    if (-5..15).contains(&exponent) {
        let decimals = (8 - exponent).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.8e}")
    }
}

/// Accumulates rows into a CSV document.
#[derive(Debug, Clone)]
pub struct CsvTable {
    columns: usize,
    buf: String,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = header.join(",");
        buf.push('\n');
        Self {
            columns: header.len(),
            buf,
        }
    }

    /// Appends a row of numbers.
    pub fn row(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.columns, "row width does not match header");
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            self.buf.push_str(&fmt_sig9(*v));
        }
        self.buf.push('\n');
    }

    /// Appends a row of preformatted cells.
    pub fn raw_row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.columns, "row width does not match header");
        let _ = writeln!(self.buf, "{}", cells.join(","));
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }

    pub fn into_string(self) -> String {
        self.buf
    }
}
