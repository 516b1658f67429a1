use jumpsplice::elliptic::{solve_dirichlet, spliced_rhs};
use jumpsplice::geometry::{band_from_shape, ImplicitShape};
use jumpsplice::grid::{l2_norm, linf_norm, Centering, Grid, ScalarField};
use jumpsplice::splice::*;
use jumpsplice::stencil::{self, heaviside};
use std::sync::Arc;

fn main() {
    println!("spliced Laplacian, ellipse (0.7, 0.3), u = e^x y^2 H:");
    for n in [64usize, 128, 256, 512] {
        let g = Grid::new(2, n, &[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let shape = ImplicitShape::Ellipse { center: [0.0, 0.0], radii: [0.7, 0.3] };
        let band = Arc::new(band_from_shape(&shape, g, Centering::Node, 9.0 * g.h).unwrap());
        let u = {
            let mut u = ScalarField::zeros(g, Centering::Node);
            for idx in 0..u.data.len() {
                let [i, j, k] = g.unidx(Centering::Node, idx);
                let x = g.coord(Centering::Node, i, j, k);
                u.data[idx] = x[0].exp() * x[1] * x[1] * heaviside(band.phi.data[idx]);
            }
            u
        };
        let jumps = JumpSet::from_fns_with_normal(
            &band,
            |x, _| x[0].exp() * x[1] * x[1],
            |x, n| x[0].exp() * x[1] * x[1] * n[0] + 2.0 * x[0].exp() * x[1] * n[1],
            |x, _| x[0].exp() * (2.0 + x[1] * x[1]),
            |x, n| x[0].exp() * (2.0 + x[1] * x[1]) * n[0] + 2.0 * x[0].exp() * x[1] * n[1],
        );
        let v = build_extrapolation(&band, &jumps, 3).unwrap();
        let spliced = spliced_apply(SpliceOp::Laplacian { p: 2 }, stencil::LAPLACIAN_2, &u, &v, &band).unwrap();
        // exact lap on interior points only (boundary rows of lap5 use shifted windows)
        let mut einf = 0.0f64;
        let mut diff = ScalarField::zeros(g, Centering::Node);
        let s = g.shape(Centering::Node);
        for j in 1..s[1] - 1 {
            for i in 1..s[0] - 1 {
                let idx = g.idx(Centering::Node, i, j, 0);
                let x = g.coord(Centering::Node, i, j, 0);
                let exact = x[0].exp() * (2.0 + x[1] * x[1]) * heaviside(band.phi.data[idx]);
                diff.data[idx] = spliced.data[idx] - exact;
                einf = einf.max(diff.data[idx].abs());
            }
        }
        let el2 = l2_norm(&diff, None).unwrap();
        println!("n={n:4}  Linf {einf:.3e}  L2 {el2:.3e}");
    }

    println!("Poisson circle R=0.5, [dn u]=2, u = 1 + log(2|x|)(1-H):");
    for n in [40usize, 80, 160, 320, 640] {
        let g = Grid::new(2, n, &[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let shape = ImplicitShape::Circle { center: [0.0, 0.0], r: 0.5 };
        let band = Arc::new(band_from_shape(&shape, g, Centering::Node, 9.0 * g.h).unwrap());
        let jumps = JumpSet::from_fns(&band, |_| 0.0, |_| 2.0, |_| 0.0, |_| 0.0);
        let v = build_extrapolation(&band, &jumps, 3).unwrap();
        let f = ScalarField::zeros(g, Centering::Node);
        let rhs = spliced_rhs(&f, Some(&v), Some(&band)).unwrap();
        let exact = |x: &[f64; 3]| {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            if r <= 0.5 { 1.0 } else { 1.0 + (2.0 * r).ln() }
        };
        let (u, stats) = solve_dirichlet(&rhs, &exact, 1e-10, 200).unwrap();
        let mut diff = ScalarField::zeros(g, Centering::Node);
        for idx in 0..u.data.len() {
            let [i, j, k] = g.unidx(Centering::Node, idx);
            let x = g.coord(Centering::Node, i, j, k);
            // sign from band for consistency with sampling convention
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            let ex = if band.phi.data[idx] >= 0.0 { 1.0 } else { 1.0 + (2.0 * r).ln() };
            diff.data[idx] = u.data[idx] - ex;
        }
        let einf = linf_norm(&diff, None).unwrap();
        let el2 = l2_norm(&diff, None).unwrap();
        println!("n={n:4}  Linf {einf:.3e}  L2 {el2:.3e}  cycles {}", stats.iterations);
    }
}
