//! File formats: controls as columnar text, trajectories and loops as CSV,
//! reports and scenarios as JSON.
//!
//! Control files look like
//!
//! ```text
//! # contact-inclusion control v1
//! d 2
//! k 2.1850969999
//! piece t_start t_end xi sample alpha_1 alpha_2
//! 0 0.0 1.0 0.5 0 0.1 -0.2
//! ...
//! ```
//!
//! Floats are written in shortest round-trip form, so reading a written
//! control gives back the same bits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::controls::{AdmissibleControl, ControlPiece};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::geometry::{Point, SubRiemannianStructure};

pub const SCHEMA_VERSION: u32 = 1;
const CONTROL_MAGIC: &str = "# contact-inclusion control v1";

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad number `{tok}`")))
}

fn parse_usize(tok: &str, line: usize) -> Result<usize> {
    tok.parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad index `{tok}`")))
}

pub fn control_to_string(u: &AdmissibleControl) -> String {
    let d = u.frame_len();
    let mut out = String::new();
    writeln!(out, "{CONTROL_MAGIC}").unwrap();
    writeln!(out, "d {d}").unwrap();
    writeln!(out, "k {:?}", u.k_bound()).unwrap();
    let alpha_cols: Vec<String> = (1..=d).map(|i| format!("alpha_{i}")).collect();
    writeln!(out, "piece t_start t_end xi sample {}", alpha_cols.join(" ")).unwrap();
    for (j, piece) in u.pieces().iter().enumerate() {
        let (a, b) = u.piece_interval(j);
        for (n, alpha) in piece.alpha.iter().enumerate() {
            write!(out, "{j} {a:?} {b:?} {:?} {n}", piece.xi).unwrap();
            for v in alpha.iter() {
                write!(out, " {v:?}").unwrap();
            }
            out.push('\n');
        }
    }
    out
}

pub fn control_from_str(text: &str) -> Result<AdmissibleControl> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, CONTROL_MAGIC)) => {}
        _ => return Err(Error::Parse("missing control header".into())),
    }
    let mut header = |key: &str| -> Result<(usize, String)> {
        let (n, l) = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("missing `{key}` line")))?;
        let rest = l
            .strip_prefix(key)
            .ok_or_else(|| Error::Parse(format!("line {n}: expected `{key}`")))?;
        Ok((n, rest.trim().to_string()))
    };
    let (n, d) = header("d")?;
    let d = parse_usize(&d, n)?;
    let (n, k) = header("k")?;
    let k = parse_f64(&k, n)?;
    header("piece")?;

    let mut breakpoints = vec![];
    let mut pieces: Vec<ControlPiece> = vec![];
    for (n, l) in lines {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 5 + d {
            return Err(Error::Parse(format!("line {n}: expected {} columns, got {}", 5 + d, toks.len())));
        }
        let j = parse_usize(toks[0], n)?;
        let a = parse_f64(toks[1], n)?;
        let b = parse_f64(toks[2], n)?;
        let xi = parse_f64(toks[3], n)?;
        let sample = parse_usize(toks[4], n)?;
        let alpha = toks[5..]
            .iter()
            .map(|t| parse_f64(t, n))
            .collect::<Result<Vec<f64>>>()?;
        if j == pieces.len() {
            if sample != 0 {
                return Err(Error::Parse(format!("line {n}: piece {j} must start at sample 0")));
            }
            if j == 0 {
                breakpoints.push(a);
            } else if breakpoints[j] != a {
                return Err(Error::Parse(format!("line {n}: piece {j} does not start where piece {} ends", j - 1)));
            }
            breakpoints.push(b);
            pieces.push(ControlPiece { xi, alpha: vec![] });
        } else if j + 1 != pieces.len() {
            return Err(Error::Parse(format!("line {n}: piece index {j} out of order")));
        }
        let piece = pieces.last_mut().unwrap();
        if sample != piece.alpha.len() || xi != piece.xi || breakpoints[j] != a || breakpoints[j + 1] != b {
            return Err(Error::Parse(format!("line {n}: inconsistent row for piece {j}")));
        }
        piece.alpha.push(DVector::from_vec(alpha));
    }
    if pieces.is_empty() {
        return Err(Error::Parse("control has no pieces".into()));
    }
    AdmissibleControl::new(breakpoints, pieces, k)
}

pub fn write_control(path: &Path, u: &AdmissibleControl) -> Result<()> {
    Ok(fs::write(path, control_to_string(u))?)
}

pub fn read_control(path: &Path) -> Result<AdmissibleControl> {
    control_from_str(&fs::read_to_string(path)?)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Parse(format!("{other:?}")),
    }
}

fn csv_string(header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).unwrap();
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:?}"))).unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let m = traj.start().len();
    let d = traj.controls.first().map_or(0, |c| c.len() - 1);
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=m).map(|i| format!("x{i}")));
    cols.extend((0..=d).map(|i| format!("u{i}")));
    cols.push("omega_dot".into());
    csv_string(
        &cols,
        (0..traj.len()).map(|i| {
            let mut row = vec![traj.times[i]];
            row.extend(traj.states[i].iter());
            row.extend(traj.controls[i].iter());
            row.push(traj.omega_dot[i]);
            row
        }),
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryMeta {
    pub schema_version: u32,
    pub model: String,
    pub steps_per_piece: usize,
    pub accuracy_tol: f64,
    pub error_estimate: f64,
    pub omega_sup: f64,
    pub lambda_raw: f64,
    pub k: f64,
    pub start: Vec<f64>,
    pub endpoint: Vec<f64>,
}

impl TrajectoryMeta {
    pub fn new(structure: &SubRiemannianStructure, traj: &Trajectory, steps_per_piece: usize, accuracy_tol: f64) -> Result<Self> {
        let c = structure.constants()?;
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            model: structure.name().to_string(),
            steps_per_piece,
            accuracy_tol,
            error_estimate: traj.error_estimate,
            omega_sup: c.omega_sup,
            lambda_raw: c.lambda_raw,
            k: c.k,
            start: traj.start().iter().copied().collect(),
            endpoint: traj.endpoint.iter().copied().collect(),
        })
    }
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn write_trajectory(dir: &Path, stem: &str, traj: &Trajectory, meta: &TrajectoryMeta) -> Result<()> {
    fs::write(dir.join(format!("{stem}.csv")), trajectory_csv(traj))?;
    write_json(&dir.join(format!("{stem}.json")), meta)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(fs::write(path, text)?)
}

/// Wraps a report with the schema version.
#[derive(Debug, Serialize)]
pub struct Versioned<'a, T: Serialize> {
    pub schema_version: u32,
    pub kind: &'a str,
    #[serde(flatten)]
    pub body: &'a T,
}

pub fn versioned<'a, T: Serialize>(kind: &'a str, body: &'a T) -> Versioned<'a, T> {
    Versioned {
        schema_version: SCHEMA_VERSION,
        kind,
        body,
    }
}

/// Loop files: CSV with header `x1,...,xm`, one sample per row, the first
/// row being the base point.
pub fn loop_from_str(text: &str) -> Result<Vec<Point>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_error)?.clone();
    if header.is_empty() || !header.iter().enumerate().all(|(i, c)| c == format!("x{}", i + 1)) {
        return Err(Error::Parse(format!("bad loop header `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    let pts = r
        .records()
        .map(|rec| {
            let rec = rec.map_err(csv_error)?;
            let line = rec.position().map_or(0, |p| p.line());
            let vals = rec
                .iter()
                .map(|t| parse_f64(t, line as usize))
                .collect::<Result<Vec<f64>>>()?;
            Ok(DVector::from_vec(vals))
        })
        .collect::<Result<Vec<Point>>>()?;
    if pts.is_empty() {
        return Err(Error::Parse("loop has no samples".into()));
    }
    Ok(pts)
}

pub fn loop_to_string(points: &[Point]) -> String {
    let m = points.first().map_or(0, |p| p.len());
    let header: Vec<String> = (1..=m).map(|i| format!("x{i}")).collect();
    csv_string(&header, points.iter().map(|p| p.iter().copied().collect()))
}

pub fn read_loop(path: &Path) -> Result<Vec<Point>> {
    loop_from_str(&fs::read_to_string(path)?)
}

/// Base-point homotopy scenarios for `cinc homotopy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioKind {
    /// `h(zeta, s) = points[zeta]`.
    Constant { points: Vec<Vec<f64>> },
    /// Phased circles around `center` in the plane of `axes`.
    Circle {
        center: Vec<f64>,
        radius: f64,
        axes: (usize, usize),
        count: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default = "schema_default")]
    pub schema_version: u32,
    #[serde(flatten)]
    pub kind: ScenarioKind,
    /// Number of `s` intervals on the grid.
    pub s_steps: usize,
    /// `s` values for the continuity table.
    #[serde(default)]
    pub probe: Vec<f64>,
}

fn schema_default() -> u32 {
    SCHEMA_VERSION
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    let s: Scenario = serde_json::from_str(&fs::read_to_string(path)?)?;
    if s.schema_version != SCHEMA_VERSION {
        return Err(Error::Parse(format!("unsupported scenario schema {}", s.schema_version)));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{solve, SolveOptions};
    use crate::models;
    use crate::planner::section;
    use nalgebra::dvector;

    #[test]
    fn control_roundtrip_is_bit_exact() {
        let t = models::torus_contact();
        let u = section(&t, &dvector![0.1, 0.2, 0.3], &dvector![0.13, 0.18, 0.28]).unwrap();
        let text = control_to_string(&u);
        let back = control_from_str(&text).unwrap();
        assert_eq!(back, u);
        assert_eq!(control_to_string(&back), text);
    }

    #[test]
    fn zero_control_roundtrip() {
        let u = AdmissibleControl::zero(2, 5.0);
        assert_eq!(control_from_str(&control_to_string(&u)).unwrap(), u);
    }

    #[test]
    fn malformed_controls_are_parse_errors() {
        let good = control_to_string(&AdmissibleControl::constant(0.5, dvector![0.1, 0.2], 1.0));
        for bad in [
            String::new(),
            good.replace("d 2", "d x"),
            good.replacen("0.1", "zz", 1),
            good.replace("piece t_start", "peace t_start"),
            good.lines().take(4).collect::<Vec<_>>().join("\n"),
        ] {
            assert!(matches!(control_from_str(&bad), Err(Error::Parse(_))), "{bad}");
        }
        let mut short = good.clone();
        short.push_str("0 0.0 1.0 0.5 1 0.1\n");
        assert!(matches!(control_from_str(&short), Err(Error::Parse(_))));
    }

    #[test]
    fn trajectory_csv_columns() {
        let t = models::torus_contact();
        let u = AdmissibleControl::constant(0.5, dvector![0.1, 0.2], t.constants().unwrap().k);
        let traj = solve(&t, &dvector![0.0, 0.0, 0.0], &u, &SolveOptions::with_steps(10)).unwrap();
        let csv = trajectory_csv(&traj);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,x2,x3,u0,u1,u2,omega_dot");
        assert_eq!(lines.count(), traj.len());
    }

    #[test]
    fn loop_roundtrip() {
        let pts = vec![dvector![0.0, 0.25, 0.5], dvector![0.1, 0.25, 0.5]];
        assert_eq!(loop_from_str(&loop_to_string(&pts)).unwrap(), pts);
        assert!(loop_from_str("a,b\n1,2\n").is_err());
        assert!(loop_from_str("x1,x2\n1\n").is_err());
    }

    #[test]
    fn scenario_json() {
        let text = r#"{"kind": "circle", "center": [0.5, 0.5, 0.0], "radius": 0.005,
                       "axes": [1, 2], "count": 8, "s_steps": 16}"#;
        let s: Scenario = serde_json::from_str(text).unwrap();
        assert_eq!(s.schema_version, 1);
        assert!(matches!(s.kind, ScenarioKind::Circle { count: 8, .. }));
        let back: Scenario = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
