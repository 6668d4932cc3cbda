//! CSV readers and writers for datasets, scores, covariance matrices and
//! eigen-systems. Layouts are documented in `docs/csv-schemas.md` at the repository root.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::model::{FunctionalDataset, ScoreMatrix, Subject};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// I/O failure tied to a file and, for parse errors, a line.
#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{}: {message}", path.display())]
    Content { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> IoError {
    match e.position() {
        Some(p) => IoError::Parse {
            path: path.to_path_buf(),
            line: p.line(),
            message: e.to_string(),
        },
        None => IoError::Content {
            path: path.to_path_buf(),
            message: e.to_string(),
        },
    }
}

fn writer(path: &Path) -> Result<csv::Writer<File>, IoError> {
    let file = File::create(path).map_err(io_err(path))?;
    Ok(csv::WriterBuilder::new().from_writer(file))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<(), IoError> {
    w.flush().map_err(io_err(path))
}

fn write_row(w: &mut csv::Writer<File>, path: &Path, row: &[String]) -> Result<(), IoError> {
    w.write_record(row).map_err(|e| csv_err(path, e))
}

/// Parsed rows with their 1-based line numbers; the header is checked.
fn read_rows(path: &Path, header: Option<&[&str]>) -> Result<(Vec<String>, Vec<(u64, Vec<f64>)>), IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if let Some(expected) = header {
        if !names.is_empty() && names != expected {
            return Err(IoError::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("header {:?}, expected {:?}", names, expected),
            });
        }
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let vals = rec
            .iter()
            .enumerate()
            .map(|(i, f)| {
                f.parse::<f64>().map_err(|e| IoError::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("column {}: `{f}`: {e}", i + 1),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push((line, vals));
    }
    Ok((names, rows))
}

const DATASET_HEADER: [&str; 4] = ["subject_id", "obs_index", "time", "value"];

pub fn write_dataset(path: &Path, data: &FunctionalDataset) -> Result<(), IoError> {
    let mut w = writer(path)?;
    write_row(&mut w, path, &DATASET_HEADER.map(String::from))?;
    for (i, s) in data.subjects.iter().enumerate() {
        for (j, (t, v)) in s.times.iter().zip(&s.values).enumerate() {
            write_row(&mut w, path, &[i.to_string(), j.to_string(), fmt_f64(*t), fmt_f64(*v)])?;
        }
    }
    finish(w, path)
}

/// Reads a dataset; subjects must be contiguous with consecutive indices.
pub fn read_dataset(path: &Path) -> Result<FunctionalDataset, crate::cli::CliError> {
    let (_, rows) = read_rows(path, Some(&DATASET_HEADER))?;
    if rows.is_empty() {
        return Err(crate::Error::NoObservations.into());
    }
    let bad = |line: u64, message: String| IoError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut subjects: Vec<Subject> = Vec::new();
    for (line, r) in rows {
        if r.len() != 4 {
            return Err(bad(line, format!("{} fields, expected 4", r.len())).into());
        }
        let (id, idx) = (r[0], r[1]);
        if id.fract() != 0.0 || idx.fract() != 0.0 || id < 0.0 || idx < 0.0 {
            return Err(bad(line, "subject_id and obs_index must be non-negative integers".into()).into());
        }
        let (id, idx) = (id as usize, idx as usize);
        if id == subjects.len() {
            subjects.push(Subject {
                times: Vec::new(),
                values: Vec::new(),
            });
        } else if id + 1 != subjects.len() {
            return Err(bad(line, format!("subject_id {id} out of order")).into());
        }
        let s = subjects.last_mut().expect("pushed above");
        if idx != s.times.len() {
            return Err(bad(line, format!("obs_index {idx}, expected {}", s.times.len())).into());
        }
        s.times.push(r[2]);
        s.values.push(r[3]);
    }
    FunctionalDataset::from_subjects(subjects).map_err(|e| {
        IoError::Content {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
        .into()
    })
}

/// Scores sidecar: `subject_id,xi_1..xi_J`.
pub fn write_scores(path: &Path, scores: &ScoreMatrix) -> Result<(), IoError> {
    let mut w = writer(path)?;
    let mut header = vec!["subject_id".to_string()];
    header.extend((1..=scores.terms).map(|k| format!("xi_{k}")));
    write_row(&mut w, path, &header)?;
    for i in 0..scores.n {
        let mut row = vec![i.to_string()];
        row.extend(scores.row(i).iter().map(|&x| fmt_f64(x)));
        write_row(&mut w, path, &row)?;
    }
    finish(w, path)
}

pub fn read_scores(path: &Path) -> Result<ScoreMatrix, IoError> {
    let (names, rows) = read_rows(path, None)?;
    let terms = names.len().saturating_sub(1);
    let mut scores = ScoreMatrix::zeros(rows.len(), terms);
    for (i, (line, r)) in rows.iter().enumerate() {
        if r.len() != terms + 1 || r[0] != i as f64 {
            return Err(IoError::Parse {
                path: path.to_path_buf(),
                line: *line,
                message: format!("expected subject {i} with {terms} scores"),
            });
        }
        for k in 1..=terms {
            scores.set(i, k, r[k]);
        }
    }
    Ok(scores)
}

/// Covariance: header `t,<grid points>`, then one row per grid point
/// beginning with that point.
pub fn write_covariance(path: &Path, grid: &[f64], matrix: &DMatrix<f64>) -> Result<(), IoError> {
    let mut w = writer(path)?;
    let mut header = vec!["t".to_string()];
    header.extend(grid.iter().map(|&t| fmt_f64(t)));
    write_row(&mut w, path, &header)?;
    for (a, &t) in grid.iter().enumerate() {
        let mut row = vec![fmt_f64(t)];
        row.extend(matrix.row(a).iter().map(|&x| fmt_f64(x)));
        write_row(&mut w, path, &row)?;
    }
    finish(w, path)
}

pub fn read_covariance(path: &Path) -> Result<(Vec<f64>, DMatrix<f64>), IoError> {
    let (names, rows) = read_rows(path, None)?;
    let content = |message: String| IoError::Content {
        path: path.to_path_buf(),
        message,
    };
    let grid = names
        .iter()
        .skip(1)
        .map(|s| s.parse::<f64>().map_err(|e| content(format!("grid header `{s}`: {e}"))))
        .collect::<Result<Vec<f64>, _>>()?;
    let g = grid.len();
    if rows.len() != g {
        return Err(content(format!("{} rows for {g} grid points", rows.len())));
    }
    let mut m = DMatrix::zeros(g, g);
    for (a, (line, r)) in rows.iter().enumerate() {
        if r.len() != g + 1 {
            return Err(IoError::Parse {
                path: path.to_path_buf(),
                line: *line,
                message: format!("{} fields, expected {}", r.len(), g + 1),
            });
        }
        for b in 0..g {
            m[(a, b)] = r[b + 1];
        }
    }
    Ok((grid, m))
}

/// Eigenvalues: `index,value`.
pub fn write_eigenvalues(path: &Path, values: &[f64]) -> Result<(), IoError> {
    let mut w = writer(path)?;
    write_row(&mut w, path, &["index".into(), "value".into()])?;
    for (k, &v) in values.iter().enumerate() {
        write_row(&mut w, path, &[(k + 1).to_string(), fmt_f64(v)])?;
    }
    finish(w, path)
}

pub fn read_eigenvalues(path: &Path) -> Result<Vec<f64>, IoError> {
    let (_, rows) = read_rows(path, Some(&["index", "value"]))?;
    rows.into_iter()
        .enumerate()
        .map(|(k, (line, r))| {
            if r.len() == 2 && r[0] == (k + 1) as f64 {
                Ok(r[1])
            } else {
                Err(IoError::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("expected index {}", k + 1),
                })
            }
        })
        .collect()
}

/// Eigenfunctions: header `t,phi_1..phi_K`, one row per grid point.
pub fn write_eigenfunctions(path: &Path, grid: &[f64], functions: &[Vec<f64>]) -> Result<(), IoError> {
    let mut w = writer(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=functions.len()).map(|k| format!("phi_{k}")));
    write_row(&mut w, path, &header)?;
    for (a, &t) in grid.iter().enumerate() {
        let mut row = vec![fmt_f64(t)];
        row.extend(functions.iter().map(|f| fmt_f64(f[a])));
        write_row(&mut w, path, &row)?;
    }
    finish(w, path)
}

/// Returns the grid and the eigenfunction columns.
pub fn read_eigenfunctions(path: &Path) -> Result<(Vec<f64>, Vec<Vec<f64>>), IoError> {
    let (names, rows) = read_rows(path, None)?;
    let k = names.len().saturating_sub(1);
    let mut grid = Vec::with_capacity(rows.len());
    let mut cols = vec![Vec::with_capacity(rows.len()); k];
    for (line, r) in rows {
        if r.len() != k + 1 {
            return Err(IoError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("{} fields, expected {}", r.len(), k + 1),
            });
        }
        grid.push(r[0]);
        for (c, v) in cols.iter_mut().zip(&r[1..]) {
            c.push(*v);
        }
    }
    Ok((grid, cols))
}

/// Writes a header and string rows.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), IoError> {
    let mut w = writer(path)?;
    write_row(&mut w, path, &header.iter().map(|s| s.to_string()).collect::<Vec<_>>())?;
    for r in rows {
        write_row(&mut w, path, r)?;
    }
    finish(w, path)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    let mut f = File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate, ProcessSpec, SamplingDesign};

    #[test]
    fn float_rendering_round_trips() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn dataset_and_scores_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (data, scores) = simulate(&ProcessSpec::default(), &SamplingDesign::new(4, 3, 5)).unwrap();
        let p = dir.path().join("d.csv");
        write_dataset(&p, &data).unwrap();
        let back = read_dataset(&p).unwrap();
        assert_eq!(back.subjects, data.subjects);
        let q = dir.path().join("s.csv");
        write_scores(&q, &scores).unwrap();
        assert_eq!(read_scores(&q).unwrap(), scores);
    }

    #[test]
    fn matrices_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = vec![0.0, 0.5, 1.0];
        let m = DMatrix::from_fn(3, 3, |a, b| (a * 3 + b) as f64 / 7.0);
        let p = dir.path().join("c.csv");
        write_covariance(&p, &grid, &m).unwrap();
        assert_eq!(read_covariance(&p).unwrap(), (grid.clone(), m));
        let p = dir.path().join("v.csv");
        write_eigenvalues(&p, &[0.3, 0.1]).unwrap();
        assert_eq!(read_eigenvalues(&p).unwrap(), vec![0.3, 0.1]);
        let p = dir.path().join("f.csv");
        let f = vec![vec![1.0, 2.0, 3.0], vec![-1.0, 0.25, 1e-9]];
        write_eigenfunctions(&p, &grid, &f).unwrap();
        assert_eq!(read_eigenfunctions(&p).unwrap(), (grid, f));
    }

    #[test]
    fn malformed_rows_name_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "subject_id,obs_index,time,value\n0,0,0.5,1.0\n0,1,abc,2.0\n").unwrap();
        let msg = read_dataset(&p).unwrap_err().to_string();
        assert!(msg.contains("bad.csv:3"), "{msg}");
        let e = dir.path().join("empty.csv");
        std::fs::write(&e, "subject_id,obs_index,time,value\n").unwrap();
        assert!(read_dataset(&e).unwrap_err().to_string().contains("no observations"));
        std::fs::write(&e, "").unwrap();
        assert!(read_dataset(&e).unwrap_err().to_string().contains("no observations"));
    }
}
