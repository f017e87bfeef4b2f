use std::path::{Path, PathBuf};

use bifloop_core::continuation::Branch;
use bifloop_core::diagram::PointRecord;
use bifloop_core::problem::SignClass;
use serde::Deserialize;

use crate::error::{CliError, Result};

pub const BRANCH_COLUMNS: [&str; 9] = [
    "branch_id",
    "point_idx",
    "s",
    "lambda",
    "sup_norm",
    "signed_norm",
    "x_proj",
    "sign",
    "newton_iters",
];

/// 17 significant digits, exponent form.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<PathBuf> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Input {
            path: path.to_path_buf(),
            reason: format!("{other:?}"),
        },
    }
}

/// Writes a header and rows of preformatted fields.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

pub fn branch_rows(branches: &[Branch]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (b, br) in branches.iter().enumerate() {
        for (i, pt) in br.points.iter().enumerate() {
            rows.push(vec![
                b.to_string(),
                i.to_string(),
                num(pt.s),
                num(pt.lam),
                num(pt.sup_norm),
                num(pt.signed_norm()),
                num(pt.x_proj),
                pt.sign.as_str().to_string(),
                pt.newton_iters.to_string(),
            ]);
        }
    }
    rows
}

/// The columns the validators need; the rest are checked by name only.
#[derive(Debug, Deserialize)]
struct BranchRow {
    branch_id: usize,
    point_idx: usize,
    lambda: f64,
    sup_norm: f64,
    sign: String,
}

/// Reads `branches.csv` back into validator records.
pub fn read_branch_records(path: &Path) -> Result<Vec<PointRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(BRANCH_COLUMNS) {
        return Err(CliError::Input {
            path: path.to_path_buf(),
            reason: format!("expected columns {}", BRANCH_COLUMNS.join(",")),
        });
    }
    let mut out = Vec::new();
    for row in r.deserialize::<BranchRow>() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let sign = SignClass::parse(&row.sign).ok_or_else(|| CliError::Input {
            path: path.to_path_buf(),
            reason: format!("unknown sign {:?}", row.sign),
        })?;
        if !(row.lambda.is_finite() && row.sup_norm.is_finite()) {
            return Err(CliError::Input {
                path: path.to_path_buf(),
                reason: format!(
                    "non-finite value in branch {} point {}",
                    row.branch_id, row.point_idx
                ),
            });
        }
        out.push(PointRecord {
            branch: row.branch_id,
            index: row.point_idx,
            lam: row.lambda,
            sup_norm: row.sup_norm,
            sign,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_keep_seventeen_digits() {
        assert_eq!(num(1.0), "1.0000000000000000e0");
        assert_eq!(num(-0.1), "-1.0000000000000001e-1");
        for x in [std::f64::consts::PI, 1e-300, -7.25e12, 0.1 + 0.2] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }
}
