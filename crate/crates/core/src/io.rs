//! File formats: coefficient models, orbit tracks, datasets, expansions,
//! histories and gridded fields.
//!
//! Floating-point values in text files are written with 17 significant
//! digits (`{:.16e}`); JSON uses the shortest representation that parses
//! back to the same bits. Every reader rejects NaN and infinities.
//!
//! Coefficients use the orthonormal harmonics of [`crate::harmonics`].
//! In gfc files `C_{n,m}` becomes `j = -m` and `S_{n,m}` becomes `j = m`;
//! values are not rescaled, so 4π-normalized geodetic coefficients must be
//! multiplied by `√(4π)` beforehand.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::FieldOnGrid;
use crate::forward::{CoefficientModel, DataSet, Sample};
use crate::solver::{Approximation, HistoryRow, Term};
use crate::sphere::{from_cartesian, BallPoint, Direction, Vec3};
use crate::trial::DictionaryElement;

/// Default reference radius for orbit files, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Text layout of a coefficient file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientFormat {
    /// `gfc n m C S [σ_C σ_S]` lines. `C_nm` maps to `j = -m` (cosine
    /// branch) and `S_nm` to `j = +m`; values are taken as given, so they
    /// must already use this crate's orthonormal basis.
    Gfc,
    /// Whitespace-separated `n j value` lines; `#` starts a comment.
    Simple,
}

impl std::str::FromStr for CoefficientFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gfc" => Ok(CoefficientFormat::Gfc),
            "simple" => Ok(CoefficientFormat::Simple),
            other => Err(Error::InvalidArgument(format!("unknown coefficient format {other:?}"))),
        }
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_f64(path: &Path, line: usize, tok: &str) -> Result<f64> {
    // Fortran exponents (1.0D-05) appear in gfc files
    let v: f64 = tok
        .trim()
        .replace(['D', 'd'], "e")
        .parse()
        .map_err(|_| parse_err(path, line, format!("malformed number {tok:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite value {tok:?}")));
    }
    Ok(v)
}

fn parse_int<T: std::str::FromStr>(path: &Path, line: usize, tok: &str) -> Result<T> {
    tok.trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("malformed integer {tok:?}")))
}

pub fn read_coefficients(path: &Path, format: CoefficientFormat) -> Result<CoefficientModel> {
    let reader = BufReader::new(File::open(path)?);
    let mut entries: Vec<(usize, (usize, i64), f64)> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lno = idx + 1;
        let body = match format {
            CoefficientFormat::Simple => line.split('#').next().unwrap_or(""),
            CoefficientFormat::Gfc => line.as_str(),
        };
        let toks: Vec<&str> = body.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        match format {
            CoefficientFormat::Simple => {
                if toks.len() != 3 {
                    return Err(parse_err(path, lno, format!("expected `n j value`, got {} fields", toks.len())));
                }
                let n: usize = parse_int(path, lno, toks[0])?;
                let j: i64 = parse_int(path, lno, toks[1])?;
                if j.unsigned_abs() as usize > n {
                    return Err(parse_err(path, lno, format!("order {j} exceeds degree {n}")));
                }
                entries.push((lno, (n, j), parse_f64(path, lno, toks[2])?));
            }
            CoefficientFormat::Gfc => {
                if toks[0] != "gfc" {
                    continue;
                }
                if toks.len() < 5 {
                    return Err(parse_err(path, lno, "gfc line needs `gfc n m C S`"));
                }
                let n: usize = parse_int(path, lno, toks[1])?;
                let m: usize = parse_int(path, lno, toks[2])?;
                if m > n {
                    return Err(parse_err(path, lno, format!("order {m} exceeds degree {n}")));
                }
                let c = parse_f64(path, lno, toks[3])?;
                let s = parse_f64(path, lno, toks[4])?;
                entries.push((lno, (n, -(m as i64)), c));
                if m > 0 {
                    entries.push((lno, (n, m as i64), s));
                }
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::Schema(format!("{}: no coefficients found", path.display())));
    }
    let mut seen = std::collections::BTreeMap::new();
    for (lno, key, v) in entries {
        if seen.insert(key, v).is_some() {
            warn!("{}:{lno}: duplicate coefficient {key:?}, keeping the later value", path.display());
        }
    }
    CoefficientModel::from_entries(seen.into_iter().map(|((n, j), v)| (n, j, v)))
}

/// Writes a model in the simple format, degree-major.
pub fn write_coefficients(model: &CoefficientModel, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# n j value")?;
    for (&(n, j), v) in &model.coeffs {
        writeln!(w, "{n} {j} {v:.16e}")?;
    }
    w.flush()?;
    Ok(())
}

/// Satellite positions normalized to the unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitTrack {
    pub points: Vec<(f64, Direction)>,
    /// Rows dropped because `σ ≤ 1`.
    pub rejected: usize,
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => parse_err(path, line, format!("{other:?}")),
    }
}

fn header_names(path: &Path, r: &mut csv::Reader<File>) -> Result<Vec<String>> {
    Ok(r.headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect())
}

/// Rows of numeric records with their line numbers.
fn numeric_rows(path: &Path, r: &mut csv::Reader<File>, width: usize) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != width {
            return Err(parse_err(path, line, format!("expected {width} fields, got {}", rec.len())));
        }
        let vals = rec.iter().map(|t| parse_f64(path, line, t)).collect::<Result<Vec<_>>>()?;
        out.push((line, vals));
    }
    Ok(out)
}

fn direction(path: &Path, line: usize, lon: f64, t: f64) -> Result<Direction> {
    if !(-1.0..=1.0).contains(&t) {
        return Err(parse_err(path, line, format!("t = {t} outside [-1, 1]")));
    }
    Ok(Direction::new(lon, t))
}

/// Reads an orbit CSV with header `x,y,z` (Cartesian, same length unit as
/// `reference_radius`), `r,lon,t` (radius in that unit, longitude in
/// radians, `t` the cosine of the co-latitude) or `sigma,lon,t` (already
/// normalized). Rows with `σ ≤ 1` are dropped and counted.
pub fn read_orbit(path: &Path, reference_radius: f64) -> Result<OrbitTrack> {
    if !(reference_radius > 0.0) || !reference_radius.is_finite() {
        return Err(Error::InvalidArgument(format!("reference radius must be positive, got {reference_radius}")));
    }
    let mut r = csv_reader(path)?;
    let header = header_names(path, &mut r)?;
    let kind = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["x", "y", "z"] => 0,
        ["r", "lon", "t"] => 1,
        ["sigma", "lon", "t"] => 2,
        other => return Err(Error::Schema(format!("{}: unsupported orbit header {other:?}", path.display()))),
    };
    let mut points = Vec::new();
    let mut rejected = 0;
    for (line, v) in numeric_rows(path, &mut r, 3)? {
        let (sigma, dir) = match kind {
            0 => {
                let p = Vec3::new(v[0], v[1], v[2]);
                let (norm, dir) = from_cartesian(p).map_err(|_| parse_err(path, line, "position at the origin"))?;
                (norm / reference_radius, dir)
            }
            1 => (v[0] / reference_radius, direction(path, line, v[1], v[2])?),
            _ => (v[0], direction(path, line, v[1], v[2])?),
        };
        if sigma > 1.0 {
            points.push((sigma, dir));
        } else {
            rejected += 1;
        }
    }
    if rejected > 0 {
        warn!("{}: {rejected} rows with sigma <= 1 rejected", path.display());
    }
    if points.is_empty() {
        return Err(Error::Schema(format!("{}: no valid orbit rows", path.display())));
    }
    Ok(OrbitTrack { points, rejected })
}

/// Writes normalized track points as `sigma,lon,t`.
pub fn write_orbit(points: &[(f64, Direction)], path: &Path) -> Result<()> {
    write_csv(
        path,
        &["sigma", "lon", "t"],
        points.iter().map(|(s, d)| vec![fmt(*s), fmt(d.lon), fmt(d.t)]),
    )
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Dataset CSV `sigma,lon,t,y`.
pub fn write_dataset(ds: &DataSet, path: &Path) -> Result<()> {
    write_csv(
        path,
        &["sigma", "lon", "t", "y"],
        ds.samples
            .iter()
            .map(|s| vec![fmt(s.sigma), fmt(s.eta.lon), fmt(s.eta.t), fmt(s.y)]),
    )
}

pub fn read_dataset(path: &Path) -> Result<DataSet> {
    let mut r = csv_reader(path)?;
    let header = header_names(path, &mut r)?;
    if header != ["sigma", "lon", "t", "y"] {
        return Err(Error::Schema(format!("{}: expected header sigma,lon,t,y, got {header:?}", path.display())));
    }
    let mut samples = Vec::new();
    for (line, v) in numeric_rows(path, &mut r, 4)? {
        if !(v[0] > 1.0) {
            return Err(parse_err(path, line, format!("sigma = {} must exceed 1", v[0])));
        }
        samples.push(Sample {
            sigma: v[0],
            eta: direction(path, line, v[1], v[2])?,
            y: v[3],
        });
    }
    DataSet::new(samples)
}

/// Grid CSV `lon,t,value`, one row per grid point in grid order.
pub fn write_grid_csv(f: &FieldOnGrid, path: &Path) -> Result<()> {
    write_csv(
        path,
        &["lon", "t", "value"],
        f.grid
            .points
            .iter()
            .zip(&f.values)
            .map(|(d, v)| vec![fmt(d.lon), fmt(d.t), fmt(*v)]),
    )
}

/// Rows `(lon, t, value)` of a grid CSV.
pub fn read_grid_csv(path: &Path) -> Result<Vec<(f64, f64, f64)>> {
    let mut r = csv_reader(path)?;
    let header = header_names(path, &mut r)?;
    if header != ["lon", "t", "value"] {
        return Err(Error::Schema(format!("{}: expected header lon,t,value, got {header:?}", path.display())));
    }
    Ok(numeric_rows(path, &mut r, 3)?
        .into_iter()
        .map(|(_, v)| (v[0], v[1], v[2]))
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
enum TermJson {
    #[serde(rename = "SH")]
    Sh {
        n: usize,
        j: i64,
        alpha: f64,
        #[serde(flatten)]
        meta: Option<RowMeta>,
    },
    #[serde(rename = "APK")]
    Apk {
        x: [f64; 3],
        alpha: f64,
        #[serde(flatten)]
        meta: Option<RowMeta>,
    },
    #[serde(rename = "APW")]
    Apw {
        x: [f64; 3],
        alpha: f64,
        #[serde(flatten)]
        meta: Option<RowMeta>,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RowMeta {
    iteration: usize,
    objective: f64,
    rde: f64,
    tikhonov: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpansionJson {
    format: String,
    f0_min_degree: usize,
    f0: Vec<(usize, i64, f64)>,
    terms: Vec<TermJson>,
}

const EXPANSION_FORMAT: &str = "lrfmp-expansion-1";

/// Writes the expansion with one JSON object per term. If `history` is
/// given it must align with the terms; its iteration, objective, RDE and
/// Tikhonov value are stored alongside.
pub fn write_expansion(a: &Approximation, history: &[HistoryRow], path: &Path) -> Result<()> {
    if !history.is_empty() && history.len() != a.terms.len() {
        return Err(Error::InvalidArgument(format!(
            "history has {} rows for {} terms",
            history.len(),
            a.terms.len()
        )));
    }
    let terms = a
        .terms
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let meta = history.get(i).map(|h| RowMeta {
                iteration: h.iteration,
                objective: h.objective,
                rde: h.rde,
                tikhonov: h.tikhonov,
            });
            match t.element {
                DictionaryElement::Sh { n, j } => TermJson::Sh { n, j, alpha: t.alpha, meta },
                DictionaryElement::Apk { x } => TermJson::Apk { x: x.cartesian().0, alpha: t.alpha, meta },
                DictionaryElement::Apw { x } => TermJson::Apw { x: x.cartesian().0, alpha: t.alpha, meta },
            }
        })
        .collect();
    let doc = ExpansionJson {
        format: EXPANSION_FORMAT.into(),
        f0_min_degree: a.f0.min_degree,
        f0: a.f0.coeffs.iter().map(|(&(n, j), &v)| (n, j, v)).collect(),
        terms,
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &doc)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_expansion`]; the history is empty if the file
/// carries none.
pub fn read_expansion(path: &Path) -> Result<(Approximation, Vec<HistoryRow>)> {
    let doc: ExpansionJson = serde_json::from_reader(BufReader::new(File::open(path)?))
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    if doc.format != EXPANSION_FORMAT {
        return Err(Error::Schema(format!("{}: unknown format tag {:?}", path.display(), doc.format)));
    }
    let mut f0 = CoefficientModel::from_entries(doc.f0)?;
    if !f0.is_empty() {
        f0.min_degree = doc.f0_min_degree;
    }
    let mut terms = Vec::new();
    let mut history = Vec::new();
    for t in doc.terms {
        let (element, alpha, meta) = match t {
            TermJson::Sh { n, j, alpha, meta } => (DictionaryElement::sh(n, j)?, alpha, meta),
            TermJson::Apk { x, alpha, meta } => (DictionaryElement::Apk { x: BallPoint::new(Vec3(x))? }, alpha, meta),
            TermJson::Apw { x, alpha, meta } => (DictionaryElement::Apw { x: BallPoint::new(Vec3(x))? }, alpha, meta),
        };
        if !alpha.is_finite() {
            return Err(Error::Schema(format!("{}: non-finite weight", path.display())));
        }
        if let Some(m) = meta {
            history.push(HistoryRow {
                iteration: m.iteration,
                element,
                alpha,
                objective: m.objective,
                rde: m.rde,
                tikhonov: m.tikhonov,
            });
        }
        terms.push(Term { alpha, element });
    }
    if !history.is_empty() && history.len() != terms.len() {
        return Err(Error::Schema(format!("{}: history present for only some terms", path.display())));
    }
    Ok((Approximation { f0, terms }, history))
}

/// History CSV `iteration,type,n,j,x,y,z,alpha,objective,rde,tikhonov`;
/// unused parameter columns are empty.
pub fn write_history_csv(history: &[HistoryRow], path: &Path) -> Result<()> {
    write_csv(
        path,
        &["iteration", "type", "n", "j", "x", "y", "z", "alpha", "objective", "rde", "tikhonov"],
        history.iter().map(|h| {
            let (n, j, x) = match h.element {
                DictionaryElement::Sh { n, j } => (n.to_string(), j.to_string(), [String::new(), String::new(), String::new()]),
                DictionaryElement::Apk { x } | DictionaryElement::Apw { x } => {
                    let c = x.cartesian();
                    (String::new(), String::new(), [fmt(c.0[0]), fmt(c.0[1]), fmt(c.0[2])])
                }
            };
            let [x0, x1, x2] = x;
            vec![
                h.iteration.to_string(),
                h.element.type_tag().to_string(),
                n,
                j,
                x0,
                x1,
                x2,
                fmt(h.alpha),
                fmt(h.objective),
                fmt(h.rde),
                fmt(h.tikhonov),
            ]
        }),
    )
}
