//! Uniform Cartesian grids on square/cubic domains, with scalar and vector
//! fields at cell or node centering.
//!
//! Fields are stored dense even when only a narrow band of values is valid;
//! an optional mask records validity. All 2D structures are represented as
//! degenerate 3D (one point along z) so stencil and norm code is shared.

use std::sync::Arc;

use crate::error::Error;

/// Where field values live relative to the grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Centering {
    /// Values at cell centers: `x_i = origin + (i + 1/2) h`, `n` per axis.
    Cell,
    /// Values at cell corners: `x_i = origin + i h`, `n + 1` per axis.
    Node,
}

/// Uniform Cartesian grid over a square (2D) or cubic (3D) domain.
///
/// `n` is the number of cells per axis; the spacing is `h = extent / n` and is
/// identical on every axis. Centering is a property of fields, not the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub dim: usize,
    pub n: usize,
    pub h: f64,
    pub origin: [f64; 3],
}

impl Grid {
    /// Build a grid with `n` cells per axis over `[lower, upper]^dim`.
    ///
    /// Anisotropic spacing is unsupported: every axis must have the same
    /// extent.
    pub fn new(dim: usize, n: usize, lower: &[f64], upper: &[f64]) -> Result<Grid, Error> {
        if dim != 2 && dim != 3 {
            return Err(Error::Grid(format!("dim must be 2 or 3, got {dim}")));
        }
        if n < 4 {
            return Err(Error::Grid(format!("need n >= 4 points per axis, got {n}")));
        }
        if lower.len() != dim || upper.len() != dim {
            return Err(Error::Grid("lower/upper must have dim entries".into()));
        }
        let extent = upper[0] - lower[0];
        if extent <= 0.0 {
            return Err(Error::Grid("upper must exceed lower".into()));
        }
        for a in 1..dim {
            let e = upper[a] - lower[a];
            if (e - extent).abs() > 1e-12 * extent.abs() {
                return Err(Error::Grid(format!(
                    "non-square domain: extent {e} on axis {a} vs {extent} on axis 0"
                )));
            }
        }
        let mut origin = [0.0; 3];
        origin[..dim].copy_from_slice(lower);
        Ok(Grid { dim, n, h: extent / n as f64, origin })
    }

    /// Number of points along one axis for the given centering.
    #[inline]
    pub fn points_per_axis(&self, c: Centering) -> usize {
        match c {
            Centering::Cell => self.n,
            Centering::Node => self.n + 1,
        }
    }

    /// Grid dimensions `[nx, ny, nz]` for the given centering (`nz = 1` in 2D).
    #[inline]
    pub fn shape(&self, c: Centering) -> [usize; 3] {
        let p = self.points_per_axis(c);
        [p, p, if self.dim == 3 { p } else { 1 }]
    }

    /// Total number of points for the given centering.
    #[inline]
    pub fn len(&self, c: Centering) -> usize {
        let s = self.shape(c);
        s[0] * s[1] * s[2]
    }

    /// Coordinate of the point with index `(i, j, k)`.
    #[inline]
    pub fn coord(&self, c: Centering, i: usize, j: usize, k: usize) -> [f64; 3] {
        let off = match c {
            Centering::Cell => 0.5,
            Centering::Node => 0.0,
        };
        [
            self.origin[0] + (i as f64 + off) * self.h,
            self.origin[1] + (j as f64 + off) * self.h,
            if self.dim == 3 { self.origin[2] + (k as f64 + off) * self.h } else { 0.0 },
        ]
    }

    /// Flat index of `(i, j, k)`; x varies fastest.
    #[inline]
    pub fn idx(&self, c: Centering, i: usize, j: usize, k: usize) -> usize {
        let s = self.shape(c);
        debug_assert!(i < s[0] && j < s[1] && k < s[2]);
        (k * s[1] + j) * s[0] + i
    }

    /// Inverse of [`Grid::idx`].
    #[inline]
    pub fn unidx(&self, c: Centering, idx: usize) -> [usize; 3] {
        let s = self.shape(c);
        let i = idx % s[0];
        let j = (idx / s[0]) % s[1];
        let k = idx / (s[0] * s[1]);
        [i, j, k]
    }

    /// Grid with half as many cells per axis. Fails if `n` is odd.
    pub fn coarsen(&self) -> Result<Grid, Error> {
        if self.n % 2 != 0 || self.n < 8 {
            return Err(Error::Grid(format!("cannot coarsen grid with n = {}", self.n)));
        }
        Ok(Grid { dim: self.dim, n: self.n / 2, h: self.h * 2.0, origin: self.origin })
    }
}

/// Boolean region mask over the points of one grid/centering pair.
#[derive(Debug, Clone)]
pub struct Mask {
    pub grid: Grid,
    pub centering: Centering,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn full(grid: Grid, centering: Centering) -> Mask {
        Mask { grid, centering, bits: vec![true; grid.len(centering)] }
    }

    pub fn empty(grid: Grid, centering: Centering) -> Mask {
        Mask { grid, centering, bits: vec![false; grid.len(centering)] }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    #[inline]
    pub fn contains(&self, idx: usize) -> bool {
        self.bits[idx]
    }
}

/// Scalar values on a grid with a declared centering.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: Grid,
    pub centering: Centering,
    pub data: Vec<f64>,
    /// Band mask gating validity for banded fields; `None` means valid everywhere.
    pub band: Option<Arc<Mask>>,
}

impl ScalarField {
    pub fn zeros(grid: Grid, centering: Centering) -> ScalarField {
        ScalarField { grid, centering, data: vec![0.0; grid.len(centering)], band: None }
    }

    pub fn from_fn(grid: Grid, centering: Centering, f: impl Fn(&[f64; 3]) -> f64) -> ScalarField {
        let mut out = ScalarField::zeros(grid, centering);
        let s = grid.shape(centering);
        for k in 0..s[2] {
            for j in 0..s[1] {
                for i in 0..s[0] {
                    out.data[grid.idx(centering, i, j, k)] = f(&grid.coord(centering, i, j, k));
                }
            }
        }
        out
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.grid.idx(self.centering, i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.grid.idx(self.centering, i, j, k);
        self.data[idx] = v;
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    /// `self += c * other`; fields must share grid and centering.
    pub fn axpy(&mut self, c: f64, other: &ScalarField) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }
}

/// Per-component scalar fields sharing one grid and centering.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub comps: Vec<ScalarField>,
}

impl VectorField {
    pub fn zeros(grid: Grid, centering: Centering) -> VectorField {
        VectorField { comps: (0..grid.dim).map(|_| ScalarField::zeros(grid, centering)).collect() }
    }

    pub fn grid(&self) -> Grid {
        self.comps[0].grid
    }

    pub fn centering(&self) -> Centering {
        self.comps[0].centering
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }
}

fn check_region(field: &ScalarField, region: Option<&Mask>) -> Result<(), Error> {
    if let Some(m) = region {
        if m.centering != field.centering || m.grid.n != field.grid.n {
            return Err(Error::Grid("mask does not match field layout".into()));
        }
        if m.count() == 0 {
            return Err(Error::Grid("empty region mask".into()));
        }
    }
    Ok(())
}

/// Max-norm of `field` over `region` (whole grid when `None`).
pub fn linf_norm(field: &ScalarField, region: Option<&Mask>) -> Result<f64, Error> {
    check_region(field, region)?;
    let mut m = 0.0f64;
    for (idx, &v) in field.data.iter().enumerate() {
        if region.map_or(true, |r| r.contains(idx)) {
            m = m.max(v.abs());
        }
    }
    Ok(m)
}

/// Grid-weighted L2 norm `sqrt(h^dim * sum v^2)` over `region`.
pub fn l2_norm(field: &ScalarField, region: Option<&Mask>) -> Result<f64, Error> {
    check_region(field, region)?;
    let mut s = 0.0f64;
    for (idx, &v) in field.data.iter().enumerate() {
        if region.map_or(true, |r| r.contains(idx)) {
            s += v * v;
        }
    }
    Ok((field.grid.h.powi(field.grid.dim as i32) * s).sqrt())
}

/// Interpolate a fine field (with `n_fine = 2 n_coarse`) at the coarse points.
///
/// Node fields share points across levels, so values are copied exactly. Cell
/// fields use the average of the 2^dim fine cells surrounding each coarse cell
/// center, which is second-order accurate there.
pub fn restrict_to_coarse(fine: &ScalarField, coarse_grid: Grid) -> Result<ScalarField, Error> {
    if fine.grid.n != 2 * coarse_grid.n || fine.grid.dim != coarse_grid.dim {
        return Err(Error::Grid(format!(
            "refinement pair requires n_fine = 2 n_coarse, got {} and {}",
            fine.grid.n, coarse_grid.n
        )));
    }
    let c = fine.centering;
    let mut out = ScalarField::zeros(coarse_grid, c);
    let s = coarse_grid.shape(c);
    let kz = coarse_grid.dim == 3;
    for k in 0..s[2] {
        for j in 0..s[1] {
            for i in 0..s[0] {
                let v = match c {
                    Centering::Node => fine.at(2 * i, 2 * j, if kz { 2 * k } else { 0 }),
                    Centering::Cell => {
                        let mut acc = 0.0;
                        let kk: &[usize] = if kz { &[2 * k, 2 * k + 1] } else { &[0] };
                        for &fk in kk {
                            for fj in [2 * j, 2 * j + 1] {
                                for fi in [2 * i, 2 * i + 1] {
                                    acc += fine.at(fi, fj, fk);
                                }
                            }
                        }
                        acc / (if kz { 8.0 } else { 4.0 })
                    }
                };
                out.set(i, j, k, v);
            }
        }
    }
    Ok(out)
}

/// Max of `|fine_interp - coarse|` over coarse points not excluded by the mask.
pub fn restrict_compare(
    fine: &ScalarField,
    coarse: &ScalarField,
    exclusion: Option<&Mask>,
) -> Result<f64, Error> {
    if fine.centering != coarse.centering {
        return Err(Error::Grid("centering mismatch in restrict_compare".into()));
    }
    let restricted = restrict_to_coarse(fine, coarse.grid)?;
    let mut m = 0.0f64;
    for idx in 0..coarse.data.len() {
        if exclusion.map_or(false, |e| e.contains(idx)) {
            continue;
        }
        m = m.max((restricted.data[idx] - coarse.data[idx]).abs());
    }
    Ok(m)
}
