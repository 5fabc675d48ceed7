use std::path::Path;

use crate::error::Result;
use crate::fsio::write_atomic;

/// Decimal rendering with 9 significant digits; scientific notation for
/// magnitudes outside [1e-5, 1e15).
pub fn fmt_sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let a = v.abs();
    if !(1e-5..1e15).contains(&a) {
        return format!("{v:.8e}");
    }
    let exp = a.log10().floor() as i32;
    // log10 can land one off near powers of ten; let the formatter decide
    let decimals = (8 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    let digits = s.chars().filter(char::is_ascii_digit).skip_while(|&c| c == '0').count();
    if digits > 9 && decimals > 0 {
        let d = decimals - 1;
        format!("{v:.d$}")
    } else {
        s
    }
}

/// Header plus string rows, written as CSV or as aligned text.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: Vec<String>) -> Self {
        CsvTable { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(String::len).collect();
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let line = |cells: &[String]| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c:<w$}"))
                .collect();
            padded.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(&self.header);
        for r in &self.rows {
            out += &line(r);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_sig9(1.0), "1.00000000");
        assert_eq!(fmt_sig9(0.123456789123), "0.123456789");
        assert_eq!(fmt_sig9(-12345.6789012), "-12345.6789");
        assert_eq!(fmt_sig9(9.999999999), "10.0000000");
        assert_eq!(fmt_sig9(123456789012.0), "123456789012");
        assert_eq!(fmt_sig9(0.0), "0");
        assert_eq!(fmt_sig9(1e-7), "1.00000000e-7");
    }

    #[test]
    fn parses_back_within_precision() {
        for v in [std::f64::consts::PI, -0.000123456789987, 7.25e8, 0.5] {
            let back: f64 = fmt_sig9(v).parse().unwrap();
            assert!(((back - v) / v).abs() < 1e-8, "{v}");
        }
    }

    #[test]
    fn text_alignment() {
        let mut t = CsvTable::new(vec!["a".into(), "long".into()]);
        t.push(vec!["xyz".into(), "1".into()]);
        assert_eq!(t.to_text(), "a    long\nxyz  1\n");
        assert_eq!(t.to_csv(), "a,long\nxyz,1\n");
    }
}
