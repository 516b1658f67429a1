use jumpsplice::grid::{Centering, Grid, ScalarField};

// replicate eno_deriv from ns.rs to probe accuracy
fn minmod_abs(a: f64, b: f64) -> f64 { if a.abs() <= b.abs() { a } else { b } }
fn eno_deriv(q: &ScalarField, grid: &Grid, i: usize, j: usize, axis: usize, w: f64) -> f64 {
    let n = grid.n as isize;
    let h = grid.h;
    let at = |s: isize| -> f64 {
        let mut p = [i as isize, j as isize];
        p[axis] += s;
        let c = [p[0].clamp(0, n - 1) as usize, p[1].clamp(0, n - 1) as usize];
        q.data[grid.idx(Centering::Cell, c[0], c[1], 0)]
    };
    let d2 = |c: isize| (at(c + 1) - 2.0 * at(c) + at(c - 1)) / (h * h);
    if w > 0.0 {
        let d1m = (at(0) - at(-1)) / h;
        d1m + 0.5 * h * minmod_abs(d2(-1), d2(0))
    } else if w < 0.0 {
        let d1p = (at(1) - at(0)) / h;
        d1p - 0.5 * h * minmod_abs(d2(0), d2(1))
    } else { 0.0 }
}

fn main() {
    for n in [64usize, 128, 256] {
        let g = Grid::new(2, n, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let q = ScalarField::from_fn(g, Centering::Cell, |x| ((x[0]-0.5)*4.0).sin() * ((x[1]-0.5)*3.0).cos());
        let mut e = 0.0f64;
        for j in 4..n-4 {
            for i in 4..n-4 {
                let x = g.coord(Centering::Cell, i, j, 0);
                let exact = 4.0*((x[0]-0.5)*4.0).cos() * ((x[1]-0.5)*3.0).cos();
                let got = eno_deriv(&q, &g, i, j, 0, 1.0);
                e = e.max((got - exact).abs());
            }
        }
        println!("n={n}: max eno x-deriv err {e:.3e}");
    }
}
