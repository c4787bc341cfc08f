//! Plain-text artifact formats: field snapshots and time-series tables.
//!
//! Floats are written in shortest round-trip form, so reading a snapshot
//! back reproduces the field bit for bit and identical runs produce
//! identical bytes.

use std::io::{BufRead, Write};

use crate::energy::EnergyReport;
use crate::error::{Error, Result};
use crate::evolution::{StepDiagnostics, TrajectoryRecord};
use crate::grid::{GridMode, PairField, StripGrid};

pub const SNAPSHOT_META: &str = "# mode,Lx,Ly,nx,ny";
pub const SNAPSHOT_HEADER: &str = "i,j,x,y,u,on_gamma";

/// Writes `u` as a grid CSV: a metadata comment pair, a column header and
/// one row per node.
pub fn write_snapshot(mut w: impl Write, grid: &StripGrid, u: &PairField) -> Result<()> {
    grid.check(u)?;
    writeln!(w, "{SNAPSHOT_META}")?;
    writeln!(
        w,
        "# {},{:e},{:e},{},{}",
        grid.mode(),
        grid.lx(),
        grid.ly(),
        grid.nx(),
        grid.ny()
    )?;
    writeln!(w, "{SNAPSHOT_HEADER}")?;
    for (k, v) in u.values().iter().enumerate() {
        let (i, j) = grid.ij(k);
        writeln!(
            w,
            "{i},{j},{:e},{:e},{:e},{}",
            grid.x(i),
            grid.y(j),
            v,
            u8::from(grid.on_gamma(k))
        )?;
    }
    Ok(())
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn field<T: std::str::FromStr>(line: usize, name: &str, s: Option<&str>) -> Result<T> {
    let s = s.ok_or_else(|| parse_err(line, format!("missing column `{name}`")))?;
    s.trim()
        .parse()
        .map_err(|_| parse_err(line, format!("cannot parse `{name}` from `{s}`")))
}

/// Reads a grid CSV written by [`write_snapshot`], rebuilding the grid from
/// the metadata line and checking every row against it.
pub fn read_snapshot(r: impl BufRead) -> Result<(StripGrid, PairField)> {
    let mut lines = r.lines().enumerate().map(|(n, l)| (n + 1, l));
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, l)) => Ok((n, l?)),
            None => Err(parse_err(0, format!("unexpected end of file, expected {what}"))),
        }
    };
    let (n, meta) = next("metadata header")?;
    if meta.trim() != SNAPSHOT_META {
        return Err(parse_err(n, format!("expected `{SNAPSHOT_META}`")));
    }
    let (n, vals) = next("metadata values")?;
    let vals = vals
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| parse_err(n, "metadata values must start with `#`"))?;
    let mut it = vals.split(',');
    let mode: GridMode = field(n, "mode", it.next())?;
    let lx: f64 = field(n, "Lx", it.next())?;
    let ly: f64 = field(n, "Ly", it.next())?;
    let nx: usize = field(n, "nx", it.next())?;
    let ny: usize = field(n, "ny", it.next())?;
    let grid = StripGrid::new(mode, lx, ly, nx, ny)?;
    let (n, header) = next("column header")?;
    if header.trim() != SNAPSHOT_HEADER {
        return Err(parse_err(n, format!("expected `{SNAPSHOT_HEADER}`")));
    }
    let mut values = vec![f64::NAN; grid.len()];
    let mut seen = vec![false; grid.len()];
    for (n, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split(',');
        let i: usize = field(n, "i", it.next())?;
        let j: usize = field(n, "j", it.next())?;
        let _x: f64 = field(n, "x", it.next())?;
        let _y: f64 = field(n, "y", it.next())?;
        let u: f64 = field(n, "u", it.next())?;
        let flag: u8 = field(n, "on_gamma", it.next())?;
        if i >= grid.nx() || j >= grid.ny() {
            return Err(parse_err(n, format!("node ({i},{j}) outside the grid")));
        }
        let k = grid.idx(i, j);
        if (flag == 1) != grid.on_gamma(k) {
            return Err(parse_err(n, format!("on_gamma flag {flag} wrong for node ({i},{j})")));
        }
        if std::mem::replace(&mut seen[k], true) {
            return Err(parse_err(n, format!("node ({i},{j}) listed twice")));
        }
        values[k] = u;
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        let (i, j) = grid.ij(k);
        return Err(parse_err(0, format!("node ({i},{j}) missing")));
    }
    let u = PairField::from_vec(&grid, values)?;
    Ok((grid, u))
}

pub fn timeseries_header() -> String {
    format!("t,{}", EnergyReport::CSV_HEADER)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:e}")).unwrap_or_default()
}

/// `t` followed by the energy report columns, one row per recorded time.
pub fn write_timeseries(mut w: impl Write, traj: &TrajectoryRecord) -> Result<()> {
    writeln!(w, "{}", timeseries_header())?;
    for (t, rep) in traj.times.iter().zip(&traj.energy_reports) {
        write!(w, "{t:e}")?;
        for v in rep.csv_fields() {
            write!(w, ",{v:e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_diagnostics(mut w: impl Write, rows: &[StepDiagnostics]) -> Result<()> {
    writeln!(w, "{}", StepDiagnostics::CSV_HEADER)?;
    for d in rows {
        writeln!(
            w,
            "{:e},{:e},{:e},{},{},{:e}",
            d.t,
            d.dt,
            d.ut_xnorm,
            fmt_opt(d.x_dist),
            fmt_opt(d.v_dist),
            d.mass_flux_defect
        )?;
    }
    Ok(())
}

/// A numeric CSV table with a header line; blank cells read as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty table"))??;
        let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|c| {
                    let c = c.trim();
                    if c.is_empty() {
                        Ok(f64::NAN)
                    } else {
                        c.parse()
                            .map_err(|_| parse_err(n + 2, format!("cannot parse `{c}`")))
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != columns.len() {
                return Err(parse_err(
                    n + 2,
                    format!("{} cells, header has {}", row.len(), columns.len()),
                ));
            }
            rows.push(row);
        }
        Ok(Self { columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.columns.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r[c]).collect())
    }
}
