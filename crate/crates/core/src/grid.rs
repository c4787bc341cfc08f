//! Discrete geometry: a periodic strip `[0, Lx) x [0, Ly]` with walls at
//! `y = 0` and `y = Ly`, or the interval `[0, Ly]` whose boundary is its two
//! endpoints.
//!
//! Nodes are numbered row-major, `k = j * nx + i`, with `i` running along the
//! periodic direction and `j` from the bottom wall to the top wall. Wall nodes
//! are listed bottom row first, then top row, each in increasing `i`.
//!
//! Bulk quadrature is the periodic rectangle rule in `x` times the trapezoid
//! rule in `y`; every wall node additionally carries an arclength weight
//! (`hx` on a strip, `1` at an interval endpoint). The resulting H-mass is
//! diagonal.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridMode {
    #[serde(rename = "strip2d", alias = "strip")]
    Strip2D,
    #[serde(rename = "interval1d", alias = "interval")]
    Interval1D,
}

impl fmt::Display for GridMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridMode::Strip2D => f.write_str("strip2d"),
            GridMode::Interval1D => f.write_str("interval1d"),
        }
    }
}

impl std::str::FromStr for GridMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "strip2d" | "strip" => Ok(GridMode::Strip2D),
            "interval1d" | "interval" => Ok(GridMode::Interval1D),
            other => Err(Error::param("mode", format!("unknown grid mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StripGrid {
    mode: GridMode,
    lx: f64,
    ly: f64,
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    bulk_weights: Vec<f64>,
    boundary_nodes: Vec<usize>,
    bdry_weights: Vec<f64>,
    // surface weight per node, zero off the walls
    surface_mass: Vec<f64>,
}

/// Minimum node count across the walls: the one-sided normal-derivative
/// and boundary Laplacian stencils reach three nodes into the interior.
pub const MIN_NODES_Y: usize = 4;
pub const MIN_NODES_X: usize = 4;

impl StripGrid {
    /// Build a grid. `lx` and `nx` are ignored in [`GridMode::Interval1D`].
    pub fn new(mode: GridMode, lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(ly > 0.0) || !ly.is_finite() {
            return Err(Error::InvalidGrid(format!("Ly must be positive, got {ly}")));
        }
        if ny < MIN_NODES_Y {
            return Err(Error::InvalidGrid(format!(
                "ny must be at least {MIN_NODES_Y}, got {ny}"
            )));
        }
        let (lx, nx, hx) = match mode {
            GridMode::Strip2D => {
                if !(lx > 0.0) || !lx.is_finite() {
                    return Err(Error::InvalidGrid(format!("Lx must be positive, got {lx}")));
                }
                if nx < MIN_NODES_X {
                    return Err(Error::InvalidGrid(format!(
                        "nx must be at least {MIN_NODES_X}, got {nx}"
                    )));
                }
                (lx, nx, lx / nx as f64)
            }
            // a single column with unit "width" so every weight formula is shared
            GridMode::Interval1D => (1.0, 1, 1.0),
        };
        let hy = ly / (ny - 1) as f64;

        let n = nx * ny;
        let mut bulk_weights = Vec::with_capacity(n);
        for j in 0..ny {
            let wy = if j == 0 || j == ny - 1 { 0.5 * hy } else { hy };
            bulk_weights.extend(std::iter::repeat(hx * wy).take(nx));
        }

        let arc = match mode {
            GridMode::Strip2D => hx,
            GridMode::Interval1D => 1.0,
        };
        let boundary_nodes: Vec<usize> = (0..nx).chain((ny - 1) * nx..ny * nx).collect();
        let bdry_weights = vec![arc; boundary_nodes.len()];
        let mut surface_mass = vec![0.0; n];
        for &k in &boundary_nodes {
            surface_mass[k] = arc;
        }

        Ok(Self {
            mode,
            lx,
            ly,
            nx,
            ny,
            hx,
            hy,
            bulk_weights,
            boundary_nodes,
            bdry_weights,
            surface_mass,
        })
    }

    pub fn strip(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        Self::new(GridMode::Strip2D, lx, ly, nx, ny)
    }

    pub fn interval(ly: f64, ny: usize) -> Result<Self> {
        Self::new(GridMode::Interval1D, 1.0, ly, 1, ny)
    }

    pub fn mode(&self) -> GridMode {
        self.mode
    }
    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn hx(&self) -> f64 {
        self.hx
    }
    pub fn hy(&self) -> f64 {
        self.hy
    }

    /// Number of nodes, wall nodes included.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    pub fn x(&self, i: usize) -> f64 {
        match self.mode {
            GridMode::Strip2D => i as f64 * self.hx,
            GridMode::Interval1D => 0.0,
        }
    }

    pub fn y(&self, j: usize) -> f64 {
        if j == self.ny - 1 {
            self.ly
        } else {
            j as f64 * self.hy
        }
    }

    pub fn on_gamma(&self, k: usize) -> bool {
        self.surface_mass[k] > 0.0
    }

    pub fn is_wall_row(&self, j: usize) -> bool {
        j == 0 || j == self.ny - 1
    }

    pub fn bulk_weights(&self) -> &[f64] {
        &self.bulk_weights
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    /// Arclength weight per wall node, parallel to [`Self::boundary_nodes`].
    pub fn bdry_weights(&self) -> &[f64] {
        &self.bdry_weights
    }

    /// Wall weight expanded to all nodes (zero off the walls).
    pub fn surface_mass(&self) -> &[f64] {
        &self.surface_mass
    }

    /// |Omega|
    pub fn area(&self) -> f64 {
        match self.mode {
            GridMode::Strip2D => self.lx * self.ly,
            GridMode::Interval1D => self.ly,
        }
    }

    /// |Gamma|
    pub fn perimeter(&self) -> f64 {
        match self.mode {
            GridMode::Strip2D => 2.0 * self.lx,
            GridMode::Interval1D => 2.0,
        }
    }

    /// Interior neighbour of a wall node along the inward normal, `steps`
    /// rows in.
    pub fn inward(&self, k: usize, steps: usize) -> usize {
        let (i, j) = self.ij(k);
        if j == 0 {
            self.idx(i, steps)
        } else {
            debug_assert_eq!(j, self.ny - 1);
            self.idx(i, self.ny - 1 - steps)
        }
    }

    #[inline]
    pub fn east(&self, k: usize) -> usize {
        let (i, j) = self.ij(k);
        self.idx((i + 1) % self.nx, j)
    }

    #[inline]
    pub fn west(&self, k: usize) -> usize {
        let (i, j) = self.ij(k);
        self.idx((i + self.nx - 1) % self.nx, j)
    }

    /// Diagonal of the H inner product: bulk weight plus wall weight.
    pub fn h_weights(&self) -> Vec<f64> {
        self.bulk_weights
            .iter()
            .zip(&self.surface_mass)
            .map(|(w, s)| w + s)
            .collect()
    }

    pub fn check(&self, u: &PairField) -> Result<()> {
        if u.nx != self.nx || u.ny != self.ny {
            return Err(Error::GridMismatch {
                expected: self.len(),
                found: u.values.len(),
            });
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &StripGrid) -> bool {
        self.mode == other.mode && self.nx == other.nx && self.ny == other.ny
    }
}

/// A discrete element `U = (u|Omega, u|Gamma)` of H.
///
/// Values are stored once per node; the trace is an index view onto the
/// wall rows, so it can never drift from the bulk values there.
#[derive(Debug, Clone, PartialEq)]
pub struct PairField {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl PairField {
    pub fn zeros(grid: &StripGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &StripGrid, c: f64) -> Self {
        Self {
            nx: grid.nx,
            ny: grid.ny,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: &StripGrid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(f(grid.x(i), grid.y(j)));
            }
        }
        Self {
            nx: grid.nx,
            ny: grid.ny,
            values,
        }
    }

    pub fn from_vec(grid: &StripGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        Ok(Self {
            nx: grid.nx,
            ny: grid.ny,
            values,
        })
    }

    /// Nodal representative of a pair with independent bulk and trace parts.
    ///
    /// Off the walls the value is `bulk(x, y)`. A wall node carries both a
    /// half-cell of bulk and a surface element, so its value is the
    /// H-weighted average `(w_b * bulk + w_s * trace) / (w_b + w_s)`, which
    /// is the H-orthogonal projection of the pair onto nodal fields.
    pub fn from_parts(
        grid: &StripGrid,
        mut bulk: impl FnMut(f64, f64) -> f64,
        mut trace: impl FnMut(f64, f64) -> f64,
    ) -> Self {
        let mut u = Self::from_fn(grid, &mut bulk);
        for &k in grid.boundary_nodes() {
            let (i, j) = grid.ij(k);
            let (x, y) = (grid.x(i), grid.y(j));
            let wb = grid.bulk_weights[k];
            let ws = grid.surface_mass[k];
            u.values[k] = (wb * bulk(x, y) + ws * trace(x, y)) / (wb + ws);
        }
        u
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn trace<'a>(&'a self, grid: &'a StripGrid) -> TraceView<'a> {
        debug_assert_eq!(self.len(), grid.len());
        TraceView {
            values: &self.values,
            nodes: grid.boundary_nodes(),
        }
    }

    /// Same shape, values replaced.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self {
            nx: self.nx,
            ny: self.ny,
            values,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn sub(&self, other: &PairField) -> Self {
        assert_eq!(self.shape(), other.shape());
        self.with_values(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    pub fn add(&self, other: &PairField) -> Self {
        assert_eq!(self.shape(), other.shape());
        self.with_values(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &PairField) {
        assert_eq!(self.shape(), x.shape());
        for (y, xv) in self.values.iter_mut().zip(&x.values) {
            *y += a * xv;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Read-only view of the wall values of a [`PairField`].
#[derive(Debug, Clone, Copy)]
pub struct TraceView<'a> {
    values: &'a [f64],
    nodes: &'a [usize],
}

impl<'a> TraceView<'a> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, m: usize) -> f64 {
        self.values[self.nodes[m]]
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + 'a {
        let values = self.values;
        self.nodes.iter().map(move |&k| values[k])
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.iter().collect()
    }
}

/// `<U, V>_H = sum_bulk w u v + sum_Gamma w_s u v`
pub fn h_inner(grid: &StripGrid, u: &PairField, v: &PairField) -> Result<f64> {
    grid.check(u)?;
    grid.check(v)?;
    Ok(u.values
        .iter()
        .zip(&v.values)
        .zip(grid.bulk_weights.iter().zip(&grid.surface_mass))
        .map(|((a, b), (wb, ws))| (wb + ws) * a * b)
        .sum())
}

pub fn h_norm(grid: &StripGrid, u: &PairField) -> Result<f64> {
    Ok(h_inner(grid, u, u)?.sqrt())
}
