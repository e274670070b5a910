//! CSV ingestion of matrices and formatting of complex literals.
//!
//! Matrix files hold one matrix row per line. Entries are decimal reals or
//! complex literals of the form `re+imi` (`1.5-0.25i`, `2i`, `-i`).

use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::CMatrix;

/// Parses a real or complex literal.
pub fn parse_complex(text: &str) -> std::result::Result<Complex64, String> {
    let s: String = text.trim().chars().filter(|c| !c.is_whitespace()).collect();
    let s = s.replace('\u{2212}', "-");
    if s.is_empty() {
        return Err("empty number".into());
    }
    // Bare imaginary units are not accepted by num-complex.
    let normalized = match s.as_str() {
        "i" | "+i" => "1i".to_string(),
        "-i" => "-1i".to_string(),
        _ => {
            if let Some(stem) = s.strip_suffix("+i") {
                format!("{stem}+1i")
            } else if let Some(stem) = s.strip_suffix("-i").filter(|st| !st.ends_with(['e', 'E'])) {
                format!("{stem}-1i")
            } else {
                s.clone()
            }
        }
    };
    let z = Complex64::from_str(&normalized)
        .map_err(|_| format!("cannot parse number '{}'", text.trim()))?;
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(format!("non-finite number '{}'", text.trim()));
    }
    Ok(z)
}

/// Renders `z` so that [`parse_complex`] reads it back exactly.
pub fn format_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else if z.im < 0.0 || (z.im == 0.0 && z.im.is_sign_negative()) {
        format!("{}-{}i", z.re, -z.im)
    } else {
        format!("{}+{}i", z.re, z.im)
    }
}

/// Parses CSV text into a dense complex matrix. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_matrix_csv(text: &str) -> Result<CMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = record
            .iter()
            .map(|f| parse_complex(f).map_err(|message| Error::Parse { line, message }))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("row has {} entries, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "matrix file holds no rows".into(),
        });
    }
    let cols = rows[0].len();
    Ok(CMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn read_matrix_csv(path: &Path) -> Result<CMatrix> {
    parse_matrix_csv(&fs::read_to_string(path)?)
}

/// Reads a matrix whose entries must all be real.
pub fn read_real_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let m = read_matrix_csv(path)?;
    if m.iter().any(|z| z.im != 0.0) {
        return Err(Error::InvalidEntry(format!(
            "{} must hold real entries only",
            path.display()
        )));
    }
    Ok(m.map(|z| z.re))
}
