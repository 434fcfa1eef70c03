//! On-disk formats for fits and curves.
//!
//! A fit is stored as two files: `ratings.csv`, a parameter × second matrix,
//! and `fit.json`, a sidecar holding the model spec, constraint, rank, degrees
//! of freedom and the SSE curve. Floats are written with Rust's shortest
//! round-trip formatting, so a saved fit reloads bit for bit.
//!
//! Every CSV may begin with `#` comment lines carrying provenance.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::CurveSeries;
use crate::design::ModelSpec;
use crate::solver::{Constraint, FitStats, RatingSet};

pub const RATINGS_FILE: &str = "ratings.csv";
pub const SIDECAR_FILE: &str = "fit.json";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl IoError {
    fn format(path: &Path, message: impl Into<String>) -> IoError {
        IoError::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}

/// Where an output came from: tool version, command, and input digests.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// `(label, sha256 hex)` per input file.
    pub inputs: Vec<(String, String)>,
    pub model: Option<String>,
    pub constraint: Option<String>,
}

impl Provenance {
    pub fn header_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("# {} {}", self.tool, self.version),
            format!("# command: {}", self.command),
        ];
        for (label, digest) in &self.inputs {
            lines.push(format!("# input: {label} sha256={digest}"));
        }
        if let Some(m) = &self.model {
            lines.push(format!("# model: {m}"));
        }
        if let Some(c) = &self.constraint {
            lines.push(format!("# constraint: {c}"));
        }
        lines
    }

    pub fn write_header(&self, w: &mut impl Write) -> std::io::Result<()> {
        for line in self.header_lines() {
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar {
    spec: ModelSpec,
    param_names: Vec<String>,
    constraint: Constraint,
    game_ids: Vec<String>,
    grid_len: usize,
    rank: usize,
    dof_resid: usize,
    unidentified: Vec<usize>,
    alpha_variance: Vec<Option<f64>>,
    total_sse: f64,
    sse: Vec<f64>,
    tss: Vec<f64>,
    #[serde(default)]
    provenance: Option<Provenance>,
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| IoError::File {
            path: path.to_path_buf(),
            source,
        })
}

fn open(path: &Path) -> Result<BufReader<File>, IoError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| IoError::File {
            path: path.to_path_buf(),
            source,
        })
}

fn file_err(path: &Path) -> impl Fn(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `ratings.csv` and `fit.json` into `dir`. Timing counters are not
/// saved so repeated runs produce identical files.
pub fn save_fit(
    dir: &Path,
    fit: &RatingSet,
    provenance: Option<&Provenance>,
) -> Result<(), IoError> {
    let path = dir.join(RATINGS_FILE);
    let mut w = create(&path)?;
    let err = file_err(&path);
    if let Some(p) = provenance {
        p.write_header(&mut w).map_err(&err)?;
    }
    write_matrix(&mut w, &fit.spec.param_names(), &fit.params).map_err(&err)?;
    w.flush().map_err(&err)?;

    let path = dir.join(SIDECAR_FILE);
    let sidecar = Sidecar {
        spec: fit.spec.clone(),
        param_names: fit.spec.param_names(),
        constraint: fit.constraint.clone(),
        game_ids: fit.game_ids.clone(),
        grid_len: fit.grid_len,
        rank: fit.rank,
        dof_resid: fit.dof_resid,
        unidentified: fit.unidentified.clone(),
        alpha_variance: fit.alpha_variance.clone(),
        total_sse: fit.total_sse(),
        sse: fit.sse.clone(),
        tss: fit.tss.clone(),
        provenance: provenance.cloned(),
    };
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &sidecar).map_err(|source| IoError::Json {
        path: path.clone(),
        source,
    })?;
    writeln!(w).and_then(|_| w.flush()).map_err(file_err(&path))
}

fn write_matrix(w: &mut impl Write, names: &[String], rows: &[Vec<f64>]) -> std::io::Result<()> {
    let grid_len = rows.first().map_or(0, Vec::len);
    write!(w, "parameter")?;
    for t in 0..grid_len {
        write!(w, ",{t}")?;
    }
    writeln!(w)?;
    for (name, row) in names.iter().zip(rows) {
        write!(w, "{}", csv_field(name))?;
        for v in row {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(r)
}

/// Reloads a fit written by [`save_fit`].
pub fn load_fit(dir: &Path) -> Result<RatingSet, IoError> {
    let path = dir.join(SIDECAR_FILE);
    let sidecar: Sidecar =
        serde_json::from_reader(open(&path)?).map_err(|source| IoError::Json {
            path: path.clone(),
            source,
        })?;

    let path = dir.join(RATINGS_FILE);
    let mut rdr = csv_reader(open(&path)?);
    let csv_err = |source| IoError::Csv {
        path: path.clone(),
        source,
    };
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.len() != sidecar.grid_len + 1 {
        return Err(IoError::format(
            &path,
            format!(
                "{} seconds in matrix, sidecar says {}",
                header.len().saturating_sub(1),
                sidecar.grid_len
            ),
        ));
    }
    let mut params = Vec::with_capacity(sidecar.param_names.len());
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let expected = sidecar.param_names.get(i).map(String::as_str);
        if expected != record.get(0) {
            return Err(IoError::format(
                &path,
                format!(
                    "row {} is `{}`, expected `{}`",
                    i + 1,
                    &record[0],
                    expected.unwrap_or("")
                ),
            ));
        }
        let row = record
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| IoError::format(&path, format!("row `{}`: {e}", &record[0])))?;
        params.push(row);
    }
    if params.len() != sidecar.param_names.len() {
        return Err(IoError::format(
            &path,
            format!(
                "{} parameter rows, expected {}",
                params.len(),
                sidecar.param_names.len()
            ),
        ));
    }
    Ok(RatingSet {
        spec: sidecar.spec,
        constraint: sidecar.constraint,
        game_ids: sidecar.game_ids,
        grid_len: sidecar.grid_len,
        params,
        sse: sidecar.sse,
        tss: sidecar.tss,
        rank: sidecar.rank,
        dof_resid: sidecar.dof_resid,
        unidentified: sidecar.unidentified,
        alpha_variance: sidecar.alpha_variance,
        stats: FitStats::default(),
    })
}

/// Writes curves side by side as `second,<name>,<name>,...`.
pub fn write_curves(
    w: &mut impl Write,
    curves: &[CurveSeries],
    provenance: Option<&Provenance>,
) -> std::io::Result<()> {
    if let Some(p) = provenance {
        p.write_header(w)?;
    }
    let len = curves.iter().map(CurveSeries::len).max().unwrap_or(0);
    write!(w, "second")?;
    for c in curves {
        write!(w, ",{}", csv_field(&c.name))?;
    }
    writeln!(w)?;
    for t in 0..len {
        write!(w, "{t}")?;
        for c in curves {
            match c.values.get(t) {
                Some(v) => write!(w, ",{v}")?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn save_curves(
    path: &Path,
    curves: &[CurveSeries],
    provenance: Option<&Provenance>,
) -> Result<(), IoError> {
    let mut w = create(path)?;
    write_curves(&mut w, curves, provenance)
        .and_then(|_| w.flush())
        .map_err(file_err(path))
}

/// Reads a curve CSV. The first column must be the second index `0..T`.
pub fn read_curves(r: impl Read, source: &Path) -> Result<Vec<CurveSeries>, IoError> {
    let mut rdr = csv_reader(r);
    let csv_err = |e| IoError::Csv {
        path: source.to_path_buf(),
        source: e,
    };
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.len() < 2 {
        return Err(IoError::format(
            source,
            "need a second column and at least one curve",
        ));
    }
    let mut curves: Vec<CurveSeries> = header
        .iter()
        .skip(1)
        .map(|name| CurveSeries::new(name, Vec::new(), ""))
        .collect();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let line = i + 2;
        let second: usize = record[0].trim().parse().map_err(|_| {
            IoError::format(source, format!("line {line}: bad second `{}`", &record[0]))
        })?;
        if second != i {
            return Err(IoError::format(
                source,
                format!("line {line}: second {second} out of sequence, expected {i}"),
            ));
        }
        for (c, field) in curves.iter_mut().zip(record.iter().skip(1)) {
            let v: f64 = field.trim().parse().map_err(|_| {
                IoError::format(
                    source,
                    format!("line {line}: bad value `{field}` for `{}`", c.name),
                )
            })?;
            c.values.push(v);
        }
    }
    Ok(curves)
}

pub fn load_curves(path: &Path) -> Result<Vec<CurveSeries>, IoError> {
    read_curves(open(path)?, path)
}

/// Reads a two-column `(time_s, weight)` table for custom weights.
pub fn load_weight_table(path: &Path) -> Result<Vec<(f64, f64)>, IoError> {
    let reader = open(path)?;
    let mut table = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(file_err(path))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(IoError::format(
                path,
                format!("line {}: expected `time_s,weight`", i + 1),
            ));
        };
        match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(t), Ok(w)) => table.push((t, w)),
            // header row
            _ if table.is_empty() && i == 0 => continue,
            _ => return Err(IoError::format(path, format!("line {}: bad number", i + 1))),
        }
    }
    Ok(table)
}
