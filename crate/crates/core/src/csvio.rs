//! CSV dialect shared by every output: comma separated, header row, LF line
//! endings, reals with 9 significant digits (`%.9g`).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Formats like C's `%.9g`.
pub fn format_real(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    const PRECISION: i32 = 9;
    let sci = format!("{:.*e}", (PRECISION - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..PRECISION).contains(&exp) {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (PRECISION - 1 - exp) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes `contents` to `path`, refusing to replace an existing file unless
/// `force` is set.
pub fn write_output(path: &Path, contents: &str, force: bool) -> Result<()> {
    if !force && path.exists() {
        return Err(Error::Exists(path.to_path_buf()));
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Reads a headered CSV file into its header and string records.
pub fn read_records(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::format(path, format!("{other:?}")),
        }
    } else {
        Error::format(path, e.to_string())
    }
}

pub fn parse_real(path: &Path, field: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::format(path, format!("not a number: {field:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g9() {
        // Expected strings are what C's printf("%.9g") prints.
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (-1.7, "-1.7"),
            (0.583333333333, "0.583333333"),
            (7.0 / 12.0, "0.583333333"),
            (-0.539004830, "-0.53900483"),
            (5000.0, "5000"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (9.9999999999, "10"),
            (1e-12, "1e-12"),
            (-2.5e20, "-2.5e+20"),
        ];
        for (x, s) in cases {
            assert_eq!(format_real(x), s, "{x}");
        }
    }

    #[test]
    fn refuses_overwrite_without_force() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_output(&p, "x\n", false).unwrap();
        assert!(matches!(
            write_output(&p, "y\n", false),
            Err(Error::Exists(_))
        ));
        write_output(&p, "y\n", true).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "y\n");
    }
}
