use std::path::Path;

use super::MetricsError;

/// A flat record that can be written as one CSV row.
pub trait CsvRecord {
    fn header() -> &'static [&'static str];
    fn row(&self) -> Vec<String>;
}

/// Formats a number with 10 significant digits, without exponent and without
/// trailing zeros. Non-finite values are written as `NaN`, `inf` or `-inf`.
pub fn format_number(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return "0".into();
    }
    // Round to 10 significant digits first, then pick the matching decimals.
    let sci = format!("{x:.9e}");
    let (_, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let rounded: f64 = sci.parse().expect("round trip");
    let decimals = (9 - exp).max(0) as usize;
    let mut s = format!("{rounded:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

/// Writes a header row and one row per record.
pub fn write_csv<R: CsvRecord>(path: &Path, records: &[R]) -> Result<(), MetricsError> {
    let io = |e: csv::Error| MetricsError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(io)?;
    w.write_record(R::header()).map_err(io)?;
    for r in records {
        let row = r.row();
        if row.len() != R::header().len() {
            return Err(MetricsError::Inconsistent(format!(
                "record has {} fields, header has {}",
                row.len(),
                R::header().len()
            )));
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| MetricsError::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Reads a CSV written by [`write_csv`] back as header plus string rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), MetricsError> {
    let io = |e: csv::Error| MetricsError::Io(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(io)?;
    let header = r.headers().map_err(io)?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(io)?.iter().map(str::to_owned).collect());
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn number_format() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(1.5), "1.5");
        assert_eq!(format_number(-2.0), "-2");
        assert_eq!(format_number(1.0 / 3.0), "0.3333333333");
        assert_eq!(format_number(123456.789012345), "123456.789");
        assert_eq!(format_number(1.2345678901234e-5), "0.0000123456789");
        assert_eq!(format_number(f64::NAN), "NaN");
    }

    proptest! {
        #[test]
        fn ten_significant_digits_survive(x in -1e6..1e6f64) {
            let back: f64 = format_number(x).parse().unwrap();
            prop_assert!((back - x).abs() <= 1e-9 * x.abs().max(1e-300) * 5.0 + 1e-300);
        }
    }
}
