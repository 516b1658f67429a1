//! Finite-difference kernels: Laplacians, gradients, and the staggered
//! cell/node transfer pair, each carrying its `(p, q, s)` metadata.
//!
//! Interior points use centered stencils. Where a centered window would leave
//! the grid, the window is shifted toward the interior with weights
//! regenerated at the same order of accuracy, so band operations remain valid
//! up against the domain boundary.

use std::sync::OnceLock;

use crate::grid::{Centering, Grid, ScalarField, VectorField};

/// Metadata for a linear finite-difference operator: accuracy order `p`,
/// smoothness requirement `q = p + r - 1` (with `r` the highest derivative),
/// and stencil width `s` in units of `h` (max offset from the evaluation
/// point).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilInfo {
    pub name: &'static str,
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub width_cells: f64,
}

impl StencilInfo {
    pub fn width(&self, h: f64) -> f64 {
        self.width_cells * h
    }
}

/// Fornberg's algorithm: weights of the `m`-th derivative at `z` from samples
/// at `nodes`.
pub fn fd_weights(z: f64, nodes: &[f64], m: usize) -> Vec<f64> {
    let n = nodes.len();
    assert!(n > m, "need more than {m} nodes for derivative order {m}");
    let mut c = vec![vec![0.0f64; m + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|row| row[m]).collect()
}

/// One-axis derivative rule of order `m` and accuracy `p`, with shifted
/// windows near the ends of the axis. Weights are for unit spacing.
#[derive(Debug)]
struct AxisRule {
    m: usize,
    half: usize,      // interior half-width
    len: usize,       // window length (interior and shifted share one length)
    interior: Vec<f64>,
    shifted: Vec<Vec<f64>>, // windows anchored at the left edge, z at 0..half-1; mirrored on the right
}

impl AxisRule {
    fn build(m: usize, p: usize) -> AxisRule {
        let half = p / 2;
        let clen = 2 * half + 1;
        // One-sided second derivatives need an extra point to keep order p.
        let slen = if m == 2 { clen + 1 } else { clen };
        let nodes: Vec<f64> = (0..clen).map(|i| i as f64 - half as f64).collect();
        let interior = fd_weights(0.0, &nodes, m);
        let snodes: Vec<f64> = (0..slen).map(|i| i as f64).collect();
        let shifted = (0..half).map(|z| fd_weights(z as f64, &snodes, m)).collect();
        AxisRule { m, half, len: slen, interior, shifted }
    }
}

fn rule(m: usize, p: usize) -> &'static AxisRule {
    static RULES: OnceLock<[AxisRule; 4]> = OnceLock::new();
    let rules = RULES.get_or_init(|| {
        [AxisRule::build(1, 2), AxisRule::build(2, 2), AxisRule::build(1, 4), AxisRule::build(2, 4)]
    });
    match (m, p) {
        (1, 2) => &rules[0],
        (2, 2) => &rules[1],
        (1, 4) => &rules[2],
        (2, 4) => &rules[3],
        _ => panic!("no rule for derivative order {m} at accuracy {p}"),
    }
}

/// Evaluate the 1D rule at axis position `i` (axis length `n`) for data
/// strided through a flat array. Edge windows mirror the left-edge weights;
/// odd derivatives flip sign under the mirror.
#[inline]
fn axis_apply(data: &[f64], base: usize, stride: usize, i: usize, n: usize, r: &AxisRule, h: f64) -> f64 {
    assert!(n >= r.len, "axis too short ({n} points) for stencil of {} points", r.len);
    let scale = 1.0 / h.powi(r.m as i32);
    let mut acc = 0.0;
    if i >= r.half && i + r.half < n {
        let start = i - r.half;
        for (t, &wt) in r.interior.iter().enumerate() {
            acc += wt * data[base + (start + t) * stride];
        }
    } else if i < r.half {
        for (t, &wt) in r.shifted[i].iter().enumerate() {
            acc += wt * data[base + t * stride];
        }
    } else {
        let sign = if r.m % 2 == 1 { -1.0 } else { 1.0 };
        for (t, &wt) in r.shifted[n - 1 - i].iter().enumerate() {
            acc += sign * wt * data[base + (n - 1 - t) * stride];
        }
    }
    acc * scale
}

fn strides(grid: &Grid, c: Centering) -> [usize; 3] {
    let s = grid.shape(c);
    [1, s[0], s[0] * s[1]]
}

/// Inclusive index range read on one axis by the derivative rule `(m, p)`
/// evaluated at position `i` of an axis with `n` points.
pub fn axis_window_range(m: usize, p: usize, i: usize, n: usize) -> (usize, usize) {
    let r = rule(m, p);
    if i >= r.half && i + r.half < n {
        (i - r.half, i + r.half)
    } else if i < r.half {
        (0, r.len - 1)
    } else {
        (n - r.len, n - 1)
    }
}

/// Weights matching [`axis_window_range`], ordered with ascending index
/// (already sign-flipped for mirrored right-edge windows of odd derivatives).
pub fn axis_weights(m: usize, p: usize, i: usize, n: usize) -> Vec<f64> {
    let r = rule(m, p);
    if i >= r.half && i + r.half < n {
        r.interior.clone()
    } else if i < r.half {
        r.shifted[i].clone()
    } else {
        let sign = if m % 2 == 1 { -1.0 } else { 1.0 };
        r.shifted[n - 1 - i].iter().rev().map(|&w| sign * w).collect()
    }
}

/// Derivative along `axis` at one point of a flat data array.
pub fn eval_deriv_axis(
    data: &[f64],
    grid: &Grid,
    c: Centering,
    axis: usize,
    p: usize,
    idx: usize,
) -> f64 {
    let shape = grid.shape(c);
    let st = strides(grid, c);
    let pos = grid.unidx(c, idx);
    let base = idx - pos[axis] * st[axis];
    axis_apply(data, base, st[axis], pos[axis], shape[axis], rule(1, p), grid.h)
}

/// Laplacian at one point of a flat data array.
pub fn eval_laplacian(data: &[f64], grid: &Grid, c: Centering, p: usize, idx: usize) -> f64 {
    let shape = grid.shape(c);
    let st = strides(grid, c);
    let pos = grid.unidx(c, idx);
    let r = rule(2, p);
    let mut acc = 0.0;
    for a in 0..grid.dim {
        let base = idx - pos[a] * st[a];
        acc += axis_apply(data, base, st[a], pos[a], shape[a], r, grid.h);
    }
    acc
}

/// Derivative along one axis at accuracy `p`, evaluated at the listed points
/// (or everywhere when `at` is `None`).
pub fn deriv_axis(field: &ScalarField, axis: usize, p: usize, at: Option<&[usize]>) -> ScalarField {
    let grid = field.grid;
    let c = field.centering;
    let shape = grid.shape(c);
    let st = strides(&grid, c);
    let r = rule(1, p);
    let mut out = ScalarField::zeros(grid, c);
    let mut eval = |idx: usize| {
        let [i, j, k] = grid.unidx(c, idx);
        let pos = [i, j, k][axis];
        let base = idx - pos * st[axis];
        out.data[idx] = axis_apply(&field.data, base, st[axis], pos, shape[axis], r, grid.h);
    };
    match at {
        Some(list) => list.iter().for_each(|&idx| eval(idx)),
        None => (0..field.data.len()).for_each(eval),
    }
    out
}

/// Laplacian at accuracy `p` (2: 5/7-point; 4: 9/13-point), evaluated at the
/// listed points (or everywhere).
pub fn laplacian(field: &ScalarField, p: usize, at: Option<&[usize]>) -> ScalarField {
    let grid = field.grid;
    let c = field.centering;
    let shape = grid.shape(c);
    let st = strides(&grid, c);
    let r = rule(2, p);
    let mut out = ScalarField::zeros(grid, c);
    let mut eval = |idx: usize| {
        let [i, j, k] = grid.unidx(c, idx);
        let pos = [i, j, k];
        let mut acc = 0.0;
        for a in 0..grid.dim {
            let base = idx - pos[a] * st[a];
            acc += axis_apply(&field.data, base, st[a], pos[a], shape[a], r, grid.h);
        }
        out.data[idx] = acc;
    };
    match at {
        Some(list) => list.iter().for_each(|&idx| eval(idx)),
        None => (0..field.data.len()).for_each(eval),
    }
    out
}

/// Gradient at accuracy `p`, one derivative per axis.
pub fn gradient(field: &ScalarField, p: usize, at: Option<&[usize]>) -> VectorField {
    VectorField { comps: (0..field.grid.dim).map(|a| deriv_axis(field, a, p, at)).collect() }
}

/// 5/7-point Laplacian, `p = 2, q = 3`.
pub fn laplacian5(field: &ScalarField) -> ScalarField {
    laplacian(field, 2, None)
}

/// 9/13-point fourth-order Laplacian, `p = 4, q = 5`.
pub fn laplacian9_4(field: &ScalarField) -> ScalarField {
    laplacian(field, 4, None)
}

pub fn gradient2(field: &ScalarField) -> VectorField {
    gradient(field, 2, None)
}

pub fn gradient4(field: &ScalarField) -> VectorField {
    gradient(field, 4, None)
}

pub const LAPLACIAN_2: StencilInfo =
    StencilInfo { name: "laplacian5", p: 2, q: 3, r: 2, width_cells: 1.0 };
pub const LAPLACIAN_4: StencilInfo =
    StencilInfo { name: "laplacian9_4", p: 4, q: 5, r: 2, width_cells: 2.0 };
pub const GRADIENT_2: StencilInfo =
    StencilInfo { name: "gradient2", p: 2, q: 2, r: 1, width_cells: 1.0 };
pub const GRADIENT_4: StencilInfo =
    StencilInfo { name: "gradient4", p: 4, q: 4, r: 1, width_cells: 2.0 };

/// Heaviside of a level set sample: 1 for `z >= 0`, 0 for `z < 0`.
#[inline]
pub fn heaviside(z: f64) -> f64 {
    if z >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Heaviside applied pointwise to a field.
pub fn heaviside_field(phi: &ScalarField) -> ScalarField {
    let mut out = phi.clone();
    for v in &mut out.data {
        *v = heaviside(*v);
    }
    out
}

// ---------------------------------------------------------------------------
// Staggered transfer pair: gradients of node fields at cell centers, and the
// (negatively) adjoint divergence of cell vectors at nodes. The divergence is
// scaled by the lumped node weights (1, 1/2, 1/4, ... at interior, face,
// edge nodes) so that <grad q, v>_cell = -<q, div v>_node holds exactly in
// the weighted inner product, and exactly in the plain one for
// interior-supported data.
// ---------------------------------------------------------------------------

/// Lumped weight of a node: fraction of adjacent cells present.
#[inline]
pub fn node_weight(grid: &Grid, i: usize, j: usize, k: usize) -> f64 {
    let n = grid.n;
    let mut w = 1.0;
    if i == 0 || i == n {
        w *= 0.5;
    }
    if j == 0 || j == n {
        w *= 0.5;
    }
    if grid.dim == 3 && (k == 0 || k == n) {
        w *= 0.5;
    }
    w
}

/// Second-order gradient of a node field at cell centers.
pub fn grad_node_to_cell(q: &ScalarField) -> VectorField {
    assert_eq!(q.centering, Centering::Node);
    let grid = q.grid;
    let mut out = VectorField::zeros(grid, Centering::Cell);
    let s = grid.shape(Centering::Cell);
    let corners = 1usize << grid.dim;
    let face = (corners / 2) as f64;
    for k in 0..s[2] {
        for j in 0..s[1] {
            for i in 0..s[0] {
                let idx = grid.idx(Centering::Cell, i, j, k);
                for a in 0..grid.dim {
                    let mut acc = 0.0;
                    for c in 0..corners {
                        let di = c & 1;
                        let dj = (c >> 1) & 1;
                        let dk = (c >> 2) & 1;
                        let sgn = if [di, dj, dk][a] == 1 { 1.0 } else { -1.0 };
                        acc += sgn * q.at(i + di, j + dj, if grid.dim == 3 { k + dk } else { 0 });
                    }
                    out.comps[a].data[idx] = acc / (face * grid.h);
                }
            }
        }
    }
    out
}

/// Divergence of a cell vector at nodes, adjoint to [`grad_node_to_cell`].
pub fn div_cell_to_node(v: &VectorField) -> ScalarField {
    assert_eq!(v.centering(), Centering::Cell);
    let grid = v.grid();
    let mut out = ScalarField::zeros(grid, Centering::Node);
    let s = grid.shape(Centering::Node);
    let nc = grid.n;
    let corners = 1usize << grid.dim;
    let face = (corners / 2) as f64;
    for k in 0..s[2] {
        for j in 0..s[1] {
            for i in 0..s[0] {
                let mut acc = 0.0;
                let mut cells = 0usize;
                // cells adjacent to node (i,j,k): offsets -1/0 per axis
                for c in 0..corners {
                    let ci = i as isize - ((c & 1) as isize);
                    let cj = j as isize - (((c >> 1) & 1) as isize);
                    let ck = if grid.dim == 3 { k as isize - (((c >> 2) & 1) as isize) } else { 0 };
                    if ci < 0 || cj < 0 || ck < 0 {
                        continue;
                    }
                    let (ci, cj, ck) = (ci as usize, cj as usize, ck as usize);
                    if ci >= nc || cj >= nc || (grid.dim == 3 && ck >= nc) {
                        continue;
                    }
                    cells += 1;
                    let cidx = grid.idx(Centering::Cell, ci, cj, ck);
                    for a in 0..grid.dim {
                        // offset 0 on axis a: cell sits on the high side of the node
                        let offs = [c & 1, (c >> 1) & 1, (c >> 2) & 1];
                        let sgn = if offs[a] == 0 { 1.0 } else { -1.0 };
                        acc += sgn * v.comps[a].data[cidx];
                    }
                }
                let w = cells as f64 / corners as f64; // lumped node weight
                out.data[grid.idx(Centering::Node, i, j, k)] = acc / (face * grid.h) / w;
            }
        }
    }
    out
}

/// Second-order gradient of a cell field at interior nodes (face-average
/// differences). Boundary nodes clamp to the available cells and are only
/// first-order there; band quantities never evaluate them.
pub fn grad_cell_to_node(q: &ScalarField) -> VectorField {
    assert_eq!(q.centering, Centering::Cell);
    let grid = q.grid;
    let mut out = VectorField::zeros(grid, Centering::Node);
    let s = grid.shape(Centering::Node);
    let nc = grid.n as isize;
    let clamp = |v: isize| v.clamp(0, nc - 1) as usize;
    let kz = grid.dim == 3;
    for k in 0..s[2] {
        for j in 0..s[1] {
            for i in 0..s[0] {
                let idx = grid.idx(Centering::Node, i, j, k);
                for a in 0..grid.dim {
                    let mut hi = 0.0;
                    let mut lo = 0.0;
                    let mut cnt = 0.0;
                    // pairs of cells across the node on axis a, averaged over
                    // the transverse offsets
                    let tcount = 1usize << (grid.dim - 1);
                    for t in 0..tcount {
                        let mut off = [0isize; 3];
                        let mut bit = 0;
                        for b in 0..grid.dim {
                            if b == a {
                                continue;
                            }
                            off[b] = -(((t >> bit) & 1) as isize);
                            bit += 1;
                        }
                        let mut hi_ix = [i as isize + off[0], j as isize + off[1], k as isize + off[2]];
                        let mut lo_ix = hi_ix;
                        hi_ix[a] = [i, j, k][a] as isize;
                        lo_ix[a] = [i, j, k][a] as isize - 1;
                        let h_idx = grid.idx(
                            Centering::Cell,
                            clamp(hi_ix[0]),
                            clamp(hi_ix[1]),
                            if kz { clamp(hi_ix[2]) } else { 0 },
                        );
                        let l_idx = grid.idx(
                            Centering::Cell,
                            clamp(lo_ix[0]),
                            clamp(lo_ix[1]),
                            if kz { clamp(lo_ix[2]) } else { 0 },
                        );
                        hi += q.data[h_idx];
                        lo += q.data[l_idx];
                        cnt += 1.0;
                    }
                    // clamped pairs at the wall coincide; difference degrades
                    // gracefully to zero there
                    out.comps[a].data[idx] = (hi - lo) / (cnt * grid.h);
                }
            }
        }
    }
    out
}

/// Average of the surrounding cells at each node.
pub fn cell_to_node_average(q: &ScalarField) -> ScalarField {
    assert_eq!(q.centering, Centering::Cell);
    let grid = q.grid;
    let mut out = ScalarField::zeros(grid, Centering::Node);
    let s = grid.shape(Centering::Node);
    let nc = grid.n;
    for k in 0..s[2] {
        for j in 0..s[1] {
            for i in 0..s[0] {
                let mut acc = 0.0;
                let mut cnt = 0.0;
                for c in 0..(1usize << grid.dim) {
                    let ci = i as isize - ((c & 1) as isize);
                    let cj = j as isize - (((c >> 1) & 1) as isize);
                    let ck = if grid.dim == 3 { k as isize - (((c >> 2) & 1) as isize) } else { 0 };
                    if ci < 0 || cj < 0 || ck < 0 || ci >= nc as isize || cj >= nc as isize {
                        continue;
                    }
                    if grid.dim == 3 && ck >= nc as isize {
                        continue;
                    }
                    acc += q.at(ci as usize, cj as usize, ck as usize);
                    cnt += 1.0;
                }
                out.set(i, j, k, acc / cnt);
            }
        }
    }
    out
}
