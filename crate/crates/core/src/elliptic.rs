//! Poisson interface solves: the jump data is folded into the right-hand
//! side through the splice correction, after which standard symmetric
//! solvers apply unchanged. Geometric multigrid (red-black Gauss-Seidel,
//! full weighting, bilinear prolongation) is the default; grids that cannot
//! coarsen degenerate to a conjugate-gradient solve on the finest level.

use std::sync::Arc;
use std::time::Instant;

use crate::error::Error;
use crate::geometry::NarrowBand;
use crate::grid::{Centering, Grid, ScalarField};
use crate::splice::{splice_correction, JumpExtrapolation, SpliceOp};
use crate::stencil::node_weight;

/// Iteration count, final max-norm residual of `A u - b`, and wall time.
#[derive(Debug, Clone, Copy)]
pub struct SolverStats {
    pub iterations: usize,
    pub final_residual: f64,
    pub wall_time_s: f64,
}

/// Boundary condition for the Poisson problems.
pub enum BoundaryCondition<'a> {
    /// Samples of the solution on the domain boundary.
    Dirichlet(&'a dyn Fn(&[f64; 3]) -> f64),
    /// Homogeneous Neumann with the zero-mean gauge (pressure solves).
    NeumannHomogeneous,
}

/// A Poisson interface problem: `lap u = f` away from the interface with
/// prescribed jumps, discretized as a plain 5/7-point solve against the
/// spliced right-hand side.
pub struct PoissonProblem<'a> {
    pub grid: Grid,
    pub boundary: BoundaryCondition<'a>,
    pub f: ScalarField,
    pub extrapolation: Option<&'a JumpExtrapolation>,
    pub band: Option<&'a Arc<NarrowBand>>,
    pub tol: f64,
    pub max_cycles: usize,
}

impl<'a> PoissonProblem<'a> {
    /// `f + lap_h(v H) - (lap_h v) H`: the jumps enter only here.
    pub fn spliced_rhs(&self) -> Result<ScalarField, Error> {
        spliced_rhs(&self.f, self.extrapolation, self.band)
    }

    pub fn solve(&self) -> Result<(ScalarField, SolverStats), Error> {
        let rhs = self.spliced_rhs()?;
        match &self.boundary {
            BoundaryCondition::Dirichlet(g) => solve_dirichlet(&rhs, g, self.tol, self.max_cycles),
            BoundaryCondition::NeumannHomogeneous => {
                solve_neumann_nodal(&rhs, self.tol, self.max_cycles, None)
            }
        }
    }
}

/// Spliced right-hand side of the interface Poisson problem.
pub fn spliced_rhs(
    f: &ScalarField,
    extrapolation: Option<&JumpExtrapolation>,
    band: Option<&Arc<NarrowBand>>,
) -> Result<ScalarField, Error> {
    let mut rhs = f.clone();
    if let (Some(v), Some(band)) = (extrapolation, band) {
        let corr = splice_correction(SpliceOp::Laplacian { p: 2 }, &v.values, band, band)?;
        for idx in 0..rhs.data.len() {
            rhs.data[idx] += corr.data[idx];
        }
    }
    Ok(rhs)
}

// ---------------------------------------------------------------------------
// Node-centered multigrid
// ---------------------------------------------------------------------------

struct NodeLevel {
    n: usize, // cells per axis
    h: f64,
    u: Vec<f64>,
    b: Vec<f64>,
    r: Vec<f64>,
}

impl NodeLevel {
    fn new(dim: usize, n: usize, h: f64) -> NodeLevel {
        let p = n + 1;
        let len = if dim == 3 { p * p * p } else { p * p };
        NodeLevel { n, h, u: vec![0.0; len], b: vec![0.0; len], r: vec![0.0; len] }
    }
}

/// Node-centered Poisson hierarchy with Dirichlet or reflected-ghost
/// (homogeneous Neumann) boundary rows.
pub struct NodePoissonSolver {
    dim: usize,
    neumann: bool,
    levels: Vec<NodeLevel>,
}

#[inline]
fn node_idx(p: usize, dim: usize, i: usize, j: usize, k: usize) -> usize {
    if dim == 3 {
        (k * p + j) * p + i
    } else {
        j * p + i
    }
}

impl NodePoissonSolver {
    pub fn new(grid: Grid, neumann: bool) -> NodePoissonSolver {
        let mut levels = Vec::new();
        let mut n = grid.n;
        let mut h = grid.h;
        loop {
            levels.push(NodeLevel::new(grid.dim, n, h));
            if n % 2 != 0 || n / 2 < 4 || levels.len() >= 24 {
                break;
            }
            n /= 2;
            h *= 2.0;
        }
        NodePoissonSolver { dim: grid.dim, neumann, levels }
    }

    fn smooth(&mut self, level: usize, sweeps: usize) {
        let dim = self.dim;
        let neumann = self.neumann;
        let lvl = &mut self.levels[level];
        let p = lvl.n + 1;
        let h2 = lvl.h * lvl.h;
        let cnt = (2 * dim) as f64;
        let kmax = if dim == 3 { p } else { 1 };
        for _ in 0..sweeps {
            for color in 0..2usize {
                for k in 0..kmax {
                    for j in 0..p {
                        for i in 0..p {
                            if (i + j + k) % 2 != color {
                                continue;
                            }
                            let interior = i > 0
                                && i < p - 1
                                && j > 0
                                && j < p - 1
                                && (dim == 2 || (k > 0 && k < p - 1));
                            if !interior && !neumann {
                                continue; // Dirichlet rows stay fixed
                            }
                            let idx = node_idx(p, dim, i, j, k);
                            let pos = [i, j, k];
                            let mut acc = 0.0;
                            for a in 0..dim {
                                let st = match a {
                                    0 => 1,
                                    1 => p,
                                    _ => p * p,
                                };
                                acc += if pos[a] > 0 { lvl.u[idx - st] } else { lvl.u[idx + st] };
                                acc += if pos[a] < p - 1 {
                                    lvl.u[idx + st]
                                } else {
                                    lvl.u[idx - st]
                                };
                            }
                            lvl.u[idx] = (acc - h2 * lvl.b[idx]) / cnt;
                        }
                    }
                }
            }
        }
    }

    /// Laplacian rows with reflected ghosts at the walls (both variants; the
    /// Dirichlet path never reads the wall rows it produces).
    fn apply_lap(&self, u: &[f64], n: usize, h: f64) -> Vec<f64> {
        let dim = self.dim;
        let p = n + 1;
        let mut out = vec![0.0; u.len()];
        let h2 = h * h;
        let cnt = (2 * dim) as f64;
        let kmax = if dim == 3 { p } else { 1 };
        for k in 0..kmax {
            for j in 0..p {
                for i in 0..p {
                    let idx = node_idx(p, dim, i, j, k);
                    let pos = [i, j, k];
                    let mut acc = 0.0;
                    for a in 0..dim {
                        let st = match a {
                            0 => 1,
                            1 => p,
                            _ => p * p,
                        };
                        acc += if pos[a] > 0 { u[idx - st] } else { u[idx + st] };
                        acc += if pos[a] < p - 1 { u[idx + st] } else { u[idx - st] };
                    }
                    out[idx] = (acc - cnt * u[idx]) / h2;
                }
            }
        }
        out
    }

    /// Residual `b - lap u` on the updatable rows; fixed rows get zero.
    fn residual(&mut self, level: usize) {
        let dim = self.dim;
        let neumann = self.neumann;
        let lap = {
            let lvl = &self.levels[level];
            self.apply_lap(&lvl.u, lvl.n, lvl.h)
        };
        let lvl = &mut self.levels[level];
        let p = lvl.n + 1;
        let kmax = if dim == 3 { p } else { 1 };
        for k in 0..kmax {
            for j in 0..p {
                for i in 0..p {
                    let interior = i > 0
                        && i < p - 1
                        && j > 0
                        && j < p - 1
                        && (dim == 2 || (k > 0 && k < p - 1));
                    let idx = node_idx(p, dim, i, j, k);
                    lvl.r[idx] = if interior || neumann { lvl.b[idx] - lap[idx] } else { 0.0 };
                }
            }
        }
    }

    /// Full-weighting restriction of the residual (reflected clamp at walls).
    fn restrict(&mut self, level: usize) {
        let dim = self.dim;
        let pc = self.levels[level + 1].n + 1;
        let pf = self.levels[level].n + 1;
        let (fine, coarse) = {
            let (a, b) = self.levels.split_at_mut(level + 1);
            (&a[level].r, &mut b[0].b)
        };
        let clamp = |v: isize, p: usize| {
            // mirror across the wall
            if v < 0 {
                (-v) as usize
            } else if v as usize >= p {
                2 * (p - 1) - v as usize
            } else {
                v as usize
            }
        };
        let kmax = if dim == 3 { pc } else { 1 };
        let zoff: &[isize] = if dim == 3 { &[-1, 0, 1] } else { &[0] };
        for kc in 0..kmax {
            for jc in 0..pc {
                for ic in 0..pc {
                    let (fi, fj, fk) = (2 * ic as isize, 2 * jc as isize, 2 * kc as isize);
                    let mut acc = 0.0;
                    for &dk in zoff {
                        for dj in -1isize..=1 {
                            for di in -1isize..=1 {
                                let ii = clamp(fi + di, pf);
                                let jj = clamp(fj + dj, pf);
                                let kk = if dim == 3 { clamp(fk + dk, pf) } else { 0 };
                                let w = (2.0f64)
                                    .powi(-((di.abs() + dj.abs() + dk.abs()) as i32))
                                    / (2.0f64).powi(dim as i32);
                                acc += w * fine[node_idx(pf, dim, ii, jj, kk)];
                            }
                        }
                    }
                    coarse[node_idx(pc, dim, ic, jc, kc)] = acc;
                }
            }
        }
    }

    /// Bilinear/trilinear prolongation, added into the finer solution.
    fn prolong_add(&mut self, level: usize) {
        let dim = self.dim;
        let pc = self.levels[level + 1].n + 1;
        let pf = self.levels[level].n + 1;
        let (fine, coarse) = {
            let (a, b) = self.levels.split_at_mut(level + 1);
            (&mut a[level].u, &b[0].u)
        };
        let kmax = if dim == 3 { pf } else { 1 };
        for k in 0..kmax {
            for j in 0..pf {
                for i in 0..pf {
                    let (ic, ir) = (i / 2, i % 2);
                    let (jc, jr) = (j / 2, j % 2);
                    let (kc, kr) = (k / 2, k % 2);
                    let mut acc = 0.0;
                    let mut wsum = 0.0;
                    let kspan = if dim == 3 { kr } else { 0 };
                    for dk in 0..=kspan {
                        for dj in 0..=jr {
                            for di in 0..=ir {
                                acc += coarse[node_idx(
                                    pc,
                                    dim,
                                    (ic + di).min(pc - 1),
                                    (jc + dj).min(pc - 1),
                                    (kc + dk).min(pc - 1),
                                )];
                                wsum += 1.0;
                            }
                        }
                    }
                    fine[node_idx(pf, dim, i, j, k)] += acc / wsum;
                }
            }
        }
    }

    /// Remove the weighted mean (Neumann gauge) from `b` or `u`.
    fn project_mean(&mut self, level: usize, on_b: bool) {
        let dim = self.dim;
        let lvl = &mut self.levels[level];
        let p = lvl.n + 1;
        let data: &mut Vec<f64> = if on_b { &mut lvl.b } else { &mut lvl.u };
        let mut acc = 0.0;
        let mut tot = 0.0;
        let kmax = if dim == 3 { p } else { 1 };
        for k in 0..kmax {
            for j in 0..p {
                for i in 0..p {
                    let mut w = 1.0;
                    if i == 0 || i == p - 1 {
                        w *= 0.5;
                    }
                    if j == 0 || j == p - 1 {
                        w *= 0.5;
                    }
                    if dim == 3 && (k == 0 || k == p - 1) {
                        w *= 0.5;
                    }
                    acc += w * data[node_idx(p, dim, i, j, k)];
                    tot += w;
                }
            }
        }
        let mean = acc / tot;
        for v in data.iter_mut() {
            *v -= mean;
        }
    }

    fn vcycle(&mut self, level: usize) {
        if level + 1 == self.levels.len() {
            self.coarsest_solve(level);
            return;
        }
        self.smooth(level, 2);
        self.residual(level);
        self.restrict(level);
        if self.neumann {
            self.project_mean(level + 1, true);
        }
        self.levels[level + 1].u.fill(0.0);
        self.vcycle(level + 1);
        self.prolong_add(level);
        self.smooth(level, 2);
    }

    /// Conjugate gradients on the coarsest level (projected when singular).
    fn coarsest_solve(&mut self, level: usize) {
        let neumann = self.neumann;
        let dim = self.dim;
        let (n, h) = (self.levels[level].n, self.levels[level].h);
        let b = self.levels[level].b.clone();
        let mut x = self.levels[level].u.clone();
        let p = n + 1;
        let len = b.len();
        let mask: Vec<bool> = (0..len)
            .map(|idx| {
                if neumann {
                    true
                } else {
                    let i = idx % p;
                    let j = (idx / p) % p;
                    let k = idx / (p * p);
                    i > 0 && i < p - 1 && j > 0 && j < p - 1 && (dim == 2 || (k > 0 && k < p - 1))
                }
            })
            .collect();
        let apply = |x: &[f64]| -> Vec<f64> {
            let lap = self.apply_lap(x, n, h);
            lap.iter().zip(&mask).map(|(&v, &m)| if m { -v } else { 0.0 }).collect()
        };
        let proj = |v: &mut Vec<f64>| {
            if neumann {
                let mean: f64 = v.iter().sum::<f64>() / len as f64;
                for t in v.iter_mut() {
                    *t -= mean;
                }
            }
        };
        let mut rhs: Vec<f64> =
            b.iter().zip(&mask).map(|(&v, &m)| if m { -v } else { 0.0 }).collect();
        proj(&mut rhs);
        let mut r: Vec<f64> = {
            let ax = apply(&x);
            rhs.iter()
                .zip(&ax)
                .zip(&mask)
                .map(|((a, b), &m)| if m { a - b } else { 0.0 })
                .collect()
        };
        proj(&mut r);
        let mut pvec = r.clone();
        let mut rs: f64 = r.iter().map(|v| v * v).sum();
        let tol2 = 1e-28 * (1.0 + rhs.iter().map(|v| v * v).sum::<f64>());
        for _ in 0..10 * len {
            if rs < tol2 {
                break;
            }
            let ap = apply(&pvec);
            let pap: f64 = pvec.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap.abs() < 1e-300 {
                break;
            }
            let alpha = rs / pap;
            for i in 0..len {
                x[i] += alpha * pvec[i];
                r[i] -= alpha * ap[i];
            }
            proj(&mut r);
            let rs_new: f64 = r.iter().map(|v| v * v).sum();
            let beta = rs_new / rs;
            rs = rs_new;
            for i in 0..len {
                pvec[i] = r[i] + beta * pvec[i];
            }
        }
        self.levels[level].u = x;
    }

    /// Iterate V-cycles to `|r|_inf <= tol * |b|_inf`; `u0` carries any warm
    /// start and the fixed Dirichlet boundary values.
    pub fn solve(
        &mut self,
        b: &[f64],
        u0: &[f64],
        tol: f64,
        max_cycles: usize,
    ) -> Result<(Vec<f64>, SolverStats), Error> {
        let start = Instant::now();
        self.levels[0].b.copy_from_slice(b);
        self.levels[0].u.copy_from_slice(u0);
        if self.neumann {
            self.project_mean(0, true);
        }
        let bnorm = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let mut history = Vec::new();
        for cycle in 0..max_cycles {
            self.vcycle(0);
            if self.neumann {
                self.project_mean(0, false);
            }
            self.residual(0);
            let rnorm = self.levels[0].r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            history.push(rnorm);
            if rnorm <= tol * bnorm {
                return Ok((
                    self.levels[0].u.clone(),
                    SolverStats {
                        iterations: cycle + 1,
                        final_residual: rnorm,
                        wall_time_s: start.elapsed().as_secs_f64(),
                    },
                ));
            }
        }
        let tail = &history[history.len().saturating_sub(6)..];
        Err(Error::Solver(format!(
            "multigrid stalled after {max_cycles} cycles; residual history tail {tail:?}"
        )))
    }
}

/// Symmetric weighted Neumann operator `D lap u` (halved/quartered boundary
/// rows): `<A x, y> = <x, A y>` exactly, including the wall rows.
pub fn node_neumann_operator(u: &ScalarField) -> ScalarField {
    assert_eq!(u.centering, Centering::Node);
    let grid = u.grid;
    let solver = NodePoissonSolver::new(grid, true);
    let lap = solver.apply_lap(&u.data, grid.n, grid.h);
    let mut out = ScalarField::zeros(grid, Centering::Node);
    let s = grid.shape(Centering::Node);
    for k in 0..s[2] {
        for j in 0..s[1] {
            for i in 0..s[0] {
                let idx = grid.idx(Centering::Node, i, j, k);
                out.data[idx] = node_weight(&grid, i, j, k) * lap[idx];
            }
        }
    }
    out
}

/// Solve the node-centered Dirichlet Poisson problem `lap u = rhs` with
/// boundary samples from `g`.
pub fn solve_dirichlet(
    rhs: &ScalarField,
    g: &dyn Fn(&[f64; 3]) -> f64,
    tol: f64,
    max_cycles: usize,
) -> Result<(ScalarField, SolverStats), Error> {
    if rhs.centering != Centering::Node {
        return Err(Error::Solver("Dirichlet solve expects a node-centered rhs".into()));
    }
    let grid = rhs.grid;
    let mut u0 = ScalarField::zeros(grid, Centering::Node);
    let s = grid.shape(Centering::Node);
    for k in 0..s[2] {
        for j in 0..s[1] {
            for i in 0..s[0] {
                let boundary = i == 0
                    || i == s[0] - 1
                    || j == 0
                    || j == s[1] - 1
                    || (grid.dim == 3 && (k == 0 || k == s[2] - 1));
                if boundary {
                    let x = grid.coord(Centering::Node, i, j, k);
                    u0.set(i, j, k, g(&x));
                }
            }
        }
    }
    let mut solver = NodePoissonSolver::new(grid, false);
    let (u, stats) = solver.solve(&rhs.data, &u0.data, tol, max_cycles)?;
    Ok((ScalarField { grid, centering: Centering::Node, data: u, band: None }, stats))
}

/// Solve the node-centered homogeneous-Neumann Poisson problem, projecting
/// the incompatible part of the rhs away and gauging the solution to zero
/// weighted mean.
pub fn solve_neumann_nodal(
    rhs: &ScalarField,
    tol: f64,
    max_cycles: usize,
    warm: Option<&ScalarField>,
) -> Result<(ScalarField, SolverStats), Error> {
    if rhs.centering != Centering::Node {
        return Err(Error::Solver("Neumann solve expects a node-centered rhs".into()));
    }
    let grid = rhs.grid;
    let mut solver = NodePoissonSolver::new(grid, true);
    let zeros;
    let u0: &[f64] = match warm {
        Some(w) => &w.data,
        None => {
            zeros = vec![0.0; rhs.data.len()];
            &zeros
        }
    };
    let (u, stats) = solver.solve(&rhs.data, u0, tol, max_cycles)?;
    Ok((ScalarField { grid, centering: Centering::Node, data: u, band: None }, stats))
}

/// Weighted mean of a node field: the compatibility residue of a Neumann
/// right-hand side (reported, never fatal; the solver projects it away).
pub fn neumann_compatibility_residue(rhs: &ScalarField) -> f64 {
    let grid = rhs.grid;
    let s = grid.shape(Centering::Node);
    let mut acc = 0.0;
    let mut tot = 0.0;
    for k in 0..s[2] {
        for j in 0..s[1] {
            for i in 0..s[0] {
                let w = node_weight(&grid, i, j, k);
                acc += w * rhs.data[grid.idx(Centering::Node, i, j, k)];
                tot += w;
            }
        }
    }
    acc / tot
}

// ---------------------------------------------------------------------------
// Cell-centered Helmholtz multigrid: (I - c lap) u = b with u = 0 on the
// walls (linear ghost reflection), for the implicit viscous solve.
// ---------------------------------------------------------------------------

struct CellLevel {
    n: usize,
    h: f64,
    u: Vec<f64>,
    b: Vec<f64>,
    r: Vec<f64>,
}

pub struct CellHelmholtzSolver {
    dim: usize,
    pub c: f64,
    levels: Vec<CellLevel>,
}

impl CellHelmholtzSolver {
    pub fn new(grid: Grid, c: f64) -> CellHelmholtzSolver {
        let mut levels = Vec::new();
        let mut n = grid.n;
        let mut h = grid.h;
        loop {
            let len = if grid.dim == 3 { n * n * n } else { n * n };
            levels.push(CellLevel { n, h, u: vec![0.0; len], b: vec![0.0; len], r: vec![0.0; len] });
            if n % 2 != 0 || n / 2 < 4 || levels.len() >= 24 {
                break;
            }
            n /= 2;
            h *= 2.0;
        }
        CellHelmholtzSolver { dim: grid.dim, c, levels }
    }

    fn cell_idx(dim: usize, n: usize, i: usize, j: usize, k: usize) -> usize {
        if dim == 3 {
            (k * n + j) * n + i
        } else {
            j * n + i
        }
    }

    /// `(I - c lap) u` with wall ghosts `u_ghost = -u_inner`.
    fn apply(&self, u: &[f64], n: usize, h: f64) -> Vec<f64> {
        let dim = self.dim;
        let mut out = vec![0.0; u.len()];
        let ch2 = self.c / (h * h);
        let kmax = if dim == 3 { n } else { 1 };
        for k in 0..kmax {
            for j in 0..n {
                for i in 0..n {
                    let idx = Self::cell_idx(dim, n, i, j, k);
                    let pos = [i, j, k];
                    let mut acc = 0.0;
                    let mut diag = 1.0 + (2 * dim) as f64 * ch2;
                    for a in 0..dim {
                        let st = match a {
                            0 => 1,
                            1 => n,
                            _ => n * n,
                        };
                        if pos[a] > 0 {
                            acc -= ch2 * u[idx - st];
                        } else {
                            diag += ch2;
                        }
                        if pos[a] < n - 1 {
                            acc -= ch2 * u[idx + st];
                        } else {
                            diag += ch2;
                        }
                    }
                    out[idx] = diag * u[idx] + acc;
                }
            }
        }
        out
    }

    fn smooth(&mut self, level: usize, sweeps: usize) {
        let dim = self.dim;
        let c = self.c;
        let lvl = &mut self.levels[level];
        let n = lvl.n;
        let ch2 = c / (lvl.h * lvl.h);
        let kmax = if dim == 3 { n } else { 1 };
        for _ in 0..sweeps {
            for color in 0..2usize {
                for k in 0..kmax {
                    for j in 0..n {
                        for i in 0..n {
                            if (i + j + k) % 2 != color {
                                continue;
                            }
                            let idx = Self::cell_idx(dim, n, i, j, k);
                            let pos = [i, j, k];
                            let mut acc = 0.0;
                            let mut diag = 1.0 + (2 * dim) as f64 * ch2;
                            for a in 0..dim {
                                let st = match a {
                                    0 => 1,
                                    1 => n,
                                    _ => n * n,
                                };
                                if pos[a] > 0 {
                                    acc += ch2 * lvl.u[idx - st];
                                } else {
                                    diag += ch2;
                                }
                                if pos[a] < n - 1 {
                                    acc += ch2 * lvl.u[idx + st];
                                } else {
                                    diag += ch2;
                                }
                            }
                            lvl.u[idx] = (lvl.b[idx] + acc) / diag;
                        }
                    }
                }
            }
        }
    }

    fn vcycle(&mut self, level: usize) {
        if level + 1 == self.levels.len() {
            self.smooth(level, 80);
            return;
        }
        self.smooth(level, 2);
        let res = {
            let lvl = &self.levels[level];
            let au = self.apply(&lvl.u, lvl.n, lvl.h);
            lvl.b.iter().zip(&au).map(|(a, b)| a - b).collect::<Vec<f64>>()
        };
        self.levels[level].r = res;
        let dim = self.dim;
        let nc = self.levels[level + 1].n;
        let nf = self.levels[level].n;
        {
            let (a, b) = self.levels.split_at_mut(level + 1);
            let fine_r = &a[level].r;
            let coarse_b = &mut b[0].b;
            let kmax = if dim == 3 { nc } else { 1 };
            for kc in 0..kmax {
                for jc in 0..nc {
                    for ic in 0..nc {
                        let mut acc = 0.0;
                        let kk: &[usize] = if dim == 3 { &[2 * kc, 2 * kc + 1] } else { &[0] };
                        for &fk in kk {
                            for fj in [2 * jc, 2 * jc + 1] {
                                for fi in [2 * ic, 2 * ic + 1] {
                                    acc += fine_r[Self::cell_idx(dim, nf, fi, fj, fk)];
                                }
                            }
                        }
                        coarse_b[Self::cell_idx(dim, nc, ic, jc, kc)] =
                            acc / (1usize << dim) as f64;
                    }
                }
            }
        }
        self.levels[level + 1].u.fill(0.0);
        self.vcycle(level + 1);
        {
            let (a, b) = self.levels.split_at_mut(level + 1);
            let fine_u = &mut a[level].u;
            let coarse_u = &b[0].u;
            let kmax = if dim == 3 { nf } else { 1 };
            for k in 0..kmax {
                for j in 0..nf {
                    for i in 0..nf {
                        fine_u[Self::cell_idx(dim, nf, i, j, k)] +=
                            coarse_u[Self::cell_idx(dim, nc, i / 2, j / 2, k / 2)];
                    }
                }
            }
        }
        self.smooth(level, 2);
    }

    pub fn solve(
        &mut self,
        b: &[f64],
        warm: Option<&[f64]>,
        tol: f64,
        max_cycles: usize,
    ) -> Result<(Vec<f64>, SolverStats), Error> {
        let start = Instant::now();
        self.levels[0].b.copy_from_slice(b);
        match warm {
            Some(w) => self.levels[0].u.copy_from_slice(w),
            None => self.levels[0].u.fill(0.0),
        }
        let bnorm = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        for cycle in 0..max_cycles {
            self.vcycle(0);
            let r = {
                let lvl = &self.levels[0];
                let au = self.apply(&lvl.u, lvl.n, lvl.h);
                lvl.b.iter().zip(&au).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            };
            if r <= tol * bnorm {
                return Ok((
                    self.levels[0].u.clone(),
                    SolverStats {
                        iterations: cycle + 1,
                        final_residual: r,
                        wall_time_s: start.elapsed().as_secs_f64(),
                    },
                ));
            }
        }
        Err(Error::Solver(format!("Helmholtz multigrid stalled after {max_cycles} cycles")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::linf_norm;

    #[test]
    fn dirichlet_zero_data_gives_zero() {
        let g = Grid::new(2, 32, &[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let rhs = ScalarField::zeros(g, Centering::Node);
        let (u, stats) = solve_dirichlet(&rhs, &|_| 0.0, 1e-10, 200).unwrap();
        assert_eq!(linf_norm(&u, None).unwrap(), 0.0);
        assert!(stats.final_residual <= 1e-10);
    }

    #[test]
    fn dirichlet_manufactured_second_order() {
        let exact = |x: &[f64; 3]| (std::f64::consts::PI * x[0]).sin() * x[1].exp();
        let lap = |x: &[f64; 3]| {
            let pi = std::f64::consts::PI;
            (1.0 - pi * pi) * (pi * x[0]).sin() * x[1].exp()
        };
        let mut errs = vec![];
        for n in [32usize, 64, 128] {
            let g = Grid::new(2, n, &[-1.0, -1.0], &[1.0, 1.0]).unwrap();
            let rhs = ScalarField::from_fn(g, Centering::Node, lap);
            let (u, _) = solve_dirichlet(&rhs, &|x| exact(x), 1e-11, 200).unwrap();
            let ex = ScalarField::from_fn(g, Centering::Node, exact);
            let mut e = 0.0f64;
            for idx in 0..u.data.len() {
                e = e.max((u.data[idx] - ex.data[idx]).abs());
            }
            errs.push(e);
        }
        let r1 = (errs[0] / errs[1]).log2();
        let r2 = (errs[1] / errs[2]).log2();
        assert!(r1 > 1.9 && r2 > 1.9, "rates {r1} {r2}, errs {errs:?}");
    }

    #[test]
    fn dirichlet_3d_quadratic_exact() {
        let exact = |x: &[f64; 3]| x[0] * x[0] - x[1] * x[1] + 0.5 * x[2];
        let g = Grid::new(3, 16, &[-1.0; 3], &[1.0; 3]).unwrap();
        let rhs = ScalarField::zeros(g, Centering::Node);
        let (u, _) = solve_dirichlet(&rhs, &|x| exact(x), 1e-11, 200).unwrap();
        let ex = ScalarField::from_fn(g, Centering::Node, exact);
        let mut e = 0.0f64;
        for idx in 0..u.data.len() {
            e = e.max((u.data[idx] - ex.data[idx]).abs());
        }
        assert!(e < 1e-8, "{e}");
    }

    #[test]
    fn neumann_manufactured_and_gauge() {
        let pi = std::f64::consts::PI;
        let exact = |x: &[f64; 3]| (pi * x[0]).cos() * (pi * x[1]).cos();
        let mut errs = vec![];
        for n in [32usize, 64, 128] {
            let g = Grid::new(2, n, &[-1.0, -1.0], &[1.0, 1.0]).unwrap();
            let rhs = ScalarField::from_fn(g, Centering::Node, |x| -2.0 * pi * pi * exact(x));
            let (u, stats) = solve_neumann_nodal(&rhs, 1e-11, 300, None).unwrap();
            assert!(stats.final_residual.is_finite());
            let ex = ScalarField::from_fn(g, Centering::Node, exact);
            let mut e = 0.0f64;
            for idx in 0..u.data.len() {
                e = e.max((u.data[idx] - ex.data[idx]).abs());
            }
            errs.push(e);
        }
        let r1 = (errs[0] / errs[1]).log2();
        let r2 = (errs[1] / errs[2]).log2();
        assert!(r1 > 1.8 && r2 > 1.8, "rates {r1} {r2}, errs {errs:?}");
        let g = Grid::new(2, 16, &[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let rhs = ScalarField::zeros(g, Centering::Node);
        let (u, _) = solve_neumann_nodal(&rhs, 1e-10, 100, None).unwrap();
        assert!(linf_norm(&u, None).unwrap() < 1e-12);
    }

    #[test]
    fn neumann_operator_is_symmetric() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let g = Grid::new(2, 12, &[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let mut x = ScalarField::zeros(g, Centering::Node);
        let mut y = ScalarField::zeros(g, Centering::Node);
        for v in &mut x.data {
            *v = rng.gen_range(-1.0..1.0);
        }
        for v in &mut y.data {
            *v = rng.gen_range(-1.0..1.0);
        }
        let ax = node_neumann_operator(&x);
        let ay = node_neumann_operator(&y);
        let dot = |a: &ScalarField, b: &ScalarField| {
            a.data.iter().zip(&b.data).map(|(u, v)| u * v).sum::<f64>()
        };
        let lhs = dot(&ax, &y);
        let rhs = dot(&x, &ay);
        assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
    }

    #[test]
    fn helmholtz_identity_limit_and_manufactured() {
        let g = Grid::new(2, 32, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let mut s = CellHelmholtzSolver::new(g, 0.0);
        let b: Vec<f64> = (0..g.len(Centering::Cell)).map(|i| (i % 7) as f64).collect();
        let (u, _) = s.solve(&b, None, 1e-12, 50).unwrap();
        for (a, b) in u.iter().zip(&b) {
            assert!((a - b).abs() < 1e-9);
        }
        let pi = std::f64::consts::PI;
        let c = 0.37;
        let mut errs = vec![];
        for n in [32usize, 64] {
            let g = Grid::new(2, n, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
            let exact =
                ScalarField::from_fn(g, Centering::Cell, |x| (pi * x[0]).sin() * (pi * x[1]).sin());
            let rhs = ScalarField::from_fn(g, Centering::Cell, |x| {
                (1.0 + 2.0 * c * pi * pi) * (pi * x[0]).sin() * (pi * x[1]).sin()
            });
            let mut s = CellHelmholtzSolver::new(g, c);
            let (u, _) = s.solve(&rhs.data, None, 1e-11, 200).unwrap();
            let mut e = 0.0f64;
            for idx in 0..u.len() {
                e = e.max((u[idx] - exact.data[idx]).abs());
            }
            errs.push(e);
        }
        let rate = (errs[0] / errs[1]).log2();
        assert!(rate > 1.8, "rate {rate}, errs {errs:?}");
    }
}
