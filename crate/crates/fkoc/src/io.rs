//! CSV input and output.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use fkoc_core::linalg::DenseMatrix;
use fkoc_core::ocp::Candidate;
use fkoc_core::{CScalar, GridFunction, TimeGrid};

use crate::error::{CliError, CliResult};

/// A destination: a file, or standard output when no path is given.
pub fn sink(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|source| CliError::Io {
                path: p.to_path_buf(),
                source,
            })?;
            Ok(Box::new(io::BufWriter::new(f)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_error(path: Option<&Path>, source: csv::Error) -> CliError {
    CliError::Csv {
        path: path.map_or_else(|| "<stdout>".into(), Path::to_path_buf),
        source,
    }
}

/// Writes a header and rows of already formatted fields.
pub fn write_csv(
    path: Option<&Path>,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(sink(path)?);
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.map_or_else(|| "<stdout>".into(), Path::to_path_buf),
        source,
    })
}

pub fn write_grid_function(path: Option<&Path>, gf: &GridFunction) -> CliResult<()> {
    let rows = gf
        .grid()
        .nodes()
        .into_iter()
        .zip(gf.values())
        .map(|(t, v)| vec![num(t), num(v.re), num(v.im)]);
    write_csv(path, &["t", "re", "im"], rows)
}

pub fn write_matrix(path: &Path, m: &DenseMatrix) -> CliResult<()> {
    let rows = (0..m.rows())
        .flat_map(|i| (0..m.cols()).map(move |j| (i, j)))
        .map(|(i, j)| {
            vec![
                i.to_string(),
                j.to_string(),
                num(m[(i, j)].re),
                num(m[(i, j)].im),
            ]
        });
    write_csv(Some(path), &["row", "col", "re", "im"], rows)
}

pub fn write_solution(path: Option<&Path>, c: &Candidate) -> CliResult<()> {
    let t = c.grid().nodes();
    let rows = (0..t.len()).map(|i| {
        let (x, l) = (c.x.values()[i], c.lambda.values()[i]);
        let u = if c.missing.contains(&i) {
            f64::NAN
        } else {
            c.u.values()[i].re
        };
        vec![
            num(t[i]),
            num(x.re),
            num(x.im),
            num(u),
            num(l.re),
            num(l.im),
        ]
    });
    write_csv(
        path,
        &["t", "x_re", "x_im", "u", "lambda_re", "lambda_im"],
        rows,
    )
}

/// Shortest round-trip form, with an exponent outside `[1e-4, 1e15)`.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

type Table = (Vec<String>, Vec<Vec<f64>>);

fn read_table(path: &Path) -> CliResult<Table> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(Some(path), e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| csv_error(Some(path), e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(Some(path), e))?;
        let row = rec
            .iter()
            .map(|s| {
                if s.is_empty() {
                    Ok(f64::NAN)
                } else {
                    s.parse::<f64>()
                }
            })
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| CliError::config(format!("{}: row {}: {e}", path.display(), line + 1)))?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn column(path: &Path, table: &Table, name: &str) -> CliResult<Vec<f64>> {
    let idx = table.0.iter().position(|h| h == name);
    let idx = idx
        .ok_or_else(|| CliError::config(format!("{}: missing column {name:?}", path.display())))?;
    Ok(table
        .1
        .iter()
        .map(|r| r.get(idx).copied().unwrap_or(f64::NAN))
        .collect())
}

fn optional_column(table: &Table, name: &str) -> Option<Vec<f64>> {
    let idx = table.0.iter().position(|h| h == name)?;
    Some(
        table
            .1
            .iter()
            .map(|r| r.get(idx).copied().unwrap_or(f64::NAN))
            .collect(),
    )
}

/// Recovers the uniform grid from a `t` column.
fn grid_from_times(path: &Path, t: &[f64]) -> CliResult<TimeGrid> {
    let bad = || {
        CliError::config(format!(
            "{}: t must be a uniform increasing grid",
            path.display()
        ))
    };
    let (Some(&a), Some(&b)) = (t.first(), t.last()) else {
        return Err(bad());
    };
    let grid = TimeGrid::new(a, b, t.len()).map_err(|_| bad())?;
    let tol = 1e-9 * grid.len().max(1.0);
    if t.iter()
        .zip(grid.nodes())
        .any(|(s, g)| (s - g).abs() > tol || (s - g).is_nan())
    {
        return Err(bad());
    }
    Ok(grid)
}

/// Reads columns `t, re[, im]`.
pub fn read_grid_function(path: &Path) -> CliResult<GridFunction> {
    let table = read_table(path)?;
    let grid = grid_from_times(path, &column(path, &table, "t")?)?;
    let re = column(path, &table, "re")?;
    let im = optional_column(&table, "im").unwrap_or_else(|| vec![0.0; re.len()]);
    let values = re
        .iter()
        .zip(&im)
        .map(|(r, i)| CScalar::new(*r, *i))
        .collect();
    Ok(GridFunction::new(grid, values)?)
}

/// Reads a candidate in the solution layout (`x_im`, `lambda_im` optional,
/// `x`/`lambda` accepted for the real parts). Blank or non-finite entries
/// mark the node as missing.
pub fn read_candidate(path: &Path) -> CliResult<Candidate> {
    let table = read_table(path)?;
    let grid = grid_from_times(path, &column(path, &table, "t")?)?;
    let pick = |a: &str, b: &str| -> CliResult<Vec<f64>> {
        optional_column(&table, a).map_or_else(|| column(path, &table, b), Ok)
    };
    let x_re = pick("x_re", "x")?;
    let l_re = pick("lambda_re", "lambda")?;
    let u = column(path, &table, "u")?;
    let n = grid.n();
    let x_im = optional_column(&table, "x_im").unwrap_or_else(|| vec![0.0; n]);
    let l_im = optional_column(&table, "lambda_im").unwrap_or_else(|| vec![0.0; n]);
    let mut missing = Vec::new();
    let mut comp = |re: &[f64], im: &[f64]| -> Vec<CScalar> {
        (0..n)
            .map(|i| {
                let z = CScalar::new(re[i], im[i]);
                if z.re.is_finite() && z.im.is_finite() {
                    z
                } else {
                    missing.push(i);
                    CScalar::new(0.0, 0.0)
                }
            })
            .collect()
    };
    let x = comp(&x_re, &x_im);
    let uu = comp(&u, &vec![0.0; n]);
    let l = comp(&l_re, &l_im);
    Ok(Candidate::with_missing(
        GridFunction::new(grid, x)?,
        GridFunction::new(grid, uu)?,
        GridFunction::new(grid, l)?,
        missing,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_function_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        let grid = TimeGrid::new(0.0, 1.0, 11).unwrap();
        let gf = GridFunction::from_fn(grid, |t| CScalar::new(t * t, -t)).unwrap();
        write_grid_function(Some(&p), &gf).unwrap();
        assert_eq!(read_grid_function(&p).unwrap(), gf);
    }

    #[test]
    fn candidate_blanks_are_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        std::fs::write(&p, "t,x,u,lambda\n0,0,,0\n0.5,1,NaN,0\n1,2,3,0\n").unwrap();
        let c = read_candidate(&p).unwrap();
        assert_eq!(c.missing, vec![0, 1]);
        assert_eq!(c.x.values()[2], CScalar::new(2.0, 0.0));
    }

    #[test]
    fn numbers_round_trip() {
        for v in [
            0.0,
            1.5,
            -3.573974633652157e-12,
            4.765021401730424e12,
            1e300,
            0.1 + 0.2,
        ] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(2.5e-7), "2.5e-7");
        assert_eq!(num(f64::NAN), "NaN");
    }

    #[test]
    fn rejects_non_uniform_times() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        std::fs::write(&p, "t,re\n0,1\n0.3,1\n1,1\n").unwrap();
        assert!(matches!(read_grid_function(&p), Err(CliError::Config(_))));
    }
}
