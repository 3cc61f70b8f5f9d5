mod common;

use nalgebra::{DMatrix, DVector};
use platevem::element::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{corpus, mesh_scaled_corpus, Oracle};

const SIGMA: f64 = 0.3;

fn unit_square() -> ElementGeometry {
    ElementGeometry::standalone(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap()
}

#[test]
fn pidelta_of_quadratic_and_constant() {
    let g = unit_square();
    let p = build_projectors(&g, SIGMA).unwrap();
    let o = Oracle::new(&g, SIGMA);
    let c = &p.p_delta * o.dofs_of(3);
    let mut e3 = DVector::zeros(NP);
    e3[3] = 1.0;
    assert!((c - e3).amax() < 1e-12);
    let c = &p.p_delta * o.dofs_of(0);
    let mut e0 = DVector::zeros(NP);
    e0[0] = 1.0;
    assert!((c - e0).amax() < 1e-12);
}

#[test]
fn pidelta_matches_saddle_point_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut cells = vec![unit_square()];
    cells.extend(corpus(5).into_iter().step_by(17));
    for g in &cells {
        let p = build_projectors(g, SIGMA).unwrap();
        let o = Oracle::new(g, SIGMA);
        for _ in 0..3 {
            let d = DVector::from_fn(g.n_dofs(), |_, _| rng.random_range(-1.0..1.0));
            let lib = &p.p_delta * &d;
            let ora = o.pidelta(&d);
            // compare as functions at the vertices and the centroid
            let mut pts = g.vertices.clone();
            pts.push(g.centroid);
            for q in pts {
                let a = g.basis.combine(lib.as_slice(), q);
                let b = o.eval_poly(&ora, q);
                assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()), "cell {}: {a} vs {b}", g.cell);
            }
        }
    }
}

#[test]
fn polynomial_consistency_on_corpus() {
    for g in corpus(1) {
        let p = build_projectors(&g, SIGMA).unwrap();
        let lm = build_local_matrices(&g, &p);
        let o = Oracle::new(&g, SIGMA);
        let nd = g.n_dofs();
        let mut lib_all = [vec![], vec![], vec![]];
        let mut exact = [vec![], vec![], vec![]];
        for a in 0..NP {
            let dq = o.dofs_of(a);
            let kq = lm.k.transpose() * &dq;
            let mq = lm.m.transpose() * &dq;
            let aq = lm.ax.transpose() * &dq;
            for j in 0..nd {
                let mut e = DVector::zeros(nd);
                e[j] = 1.0;
                exact[0].push(o.energy_against(&e, a));
                exact[1].push(o.l2_against(&e, a));
                exact[2].push(o.axial_against(&e, a));
            }
            for (form, v) in [&kq, &mq, &aq].into_iter().enumerate() {
                lib_all[form].extend(v.iter().copied());
            }
        }
        for form in 0..3 {
            let scale = exact[form].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (k, (l, e)) in lib_all[form].iter().zip(&exact[form]).enumerate() {
                assert!((l - e).abs() <= 1e-10 * scale, "cell {} form {form} entry {k}: {l} vs {e}", g.cell);
            }
        }
    }
}

#[test]
fn projector_idempotence() {
    for g in corpus(2).iter().step_by(5) {
        let p = build_projectors(g, SIGMA).unwrap();
        let pdp = &p.p_delta * &p.dof_of_poly * &p.p_delta;
        assert!((pdp - &p.p_delta).amax() < 1e-11 * p.p_delta.amax().max(1.0));
    }
}

#[test]
fn matrices_symmetric_and_definite() {
    for g in corpus(3).iter().step_by(3) {
        let p = build_projectors(g, SIGMA).unwrap();
        let lm = build_local_matrices(g, &p);
        for m in [&lm.k, &lm.m, &lm.ax] {
            assert!((m - m.transpose()).amax() <= 1e-12 * m.amax());
        }
        assert!(lm.m.clone().symmetric_eigen().eigenvalues.min() > 0.0);
        let ek = lm.k.clone().symmetric_eigen().eigenvalues;
        assert!(ek.min() > -1e-10 * ek.amax());
        let ea = lm.ax.clone().symmetric_eigen().eigenvalues;
        assert!(ea.min() > -1e-10 * ea.amax().max(1e-300));
    }
}

#[test]
fn axial_bounded_by_h1_seminorm() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for g in corpus(4).iter().step_by(4) {
        let p = build_projectors(g, SIGMA).unwrap();
        let ax = build_local_ax(&p);
        let o = Oracle::new(g, SIGMA);
        let quad = platevem::quadrature::polygon_quadrature(&g.vertices, 8).unwrap();
        for _ in 0..5 {
            let c: Vec<f64> = (0..NP).map(|_| rng.random_range(-1.0..1.0)).collect();
            let d = (0..NP).fold(DVector::zeros(g.n_dofs()), |acc, a| acc + o.dofs_of(a) * c[a]);
            let grad2 = quad.integrate(|x| {
                let (gx, gy) = (0..NP).fold((0.0, 0.0), |(sx, sy), a| {
                    let gr = o.mono(a, x).1;
                    (sx + c[a] * gr[0], sy + c[a] * gr[1])
                });
                gx * gx + gy * gy
            });
            let axq = d.dot(&(&ax * &d));
            assert!(axq <= grad2 + 1e-11 * (1.0 + grad2));
        }
    }
}

#[test]
fn local_load_against_symbolic_moments() {
    // g = 1 + x - 2xy + y^2 on the unit square; (g, Pi phi_i) from exact monomial integrals
    let g = unit_square();
    let p = build_projectors(&g, SIGMA).unwrap();
    let f = build_local_load(&g, &p, |x| 1.0 + x[0] - 2.0 * x[0] * x[1] + x[1] * x[1]).unwrap();
    let o = Oracle::new(&g, SIGMA);
    // int_[0,1]^2 x^a y^b = 1 / ((a+1)(b+1))
    let mono_int = |a: i32, b: i32| 1.0 / ((a + 1) as f64 * (b + 1) as f64);
    let gterms = [(1.0, 0, 0), (1.0, 1, 0), (-2.0, 1, 1), (1.0, 0, 2)];
    for i in 0..g.n_dofs() {
        let mut e = DVector::zeros(g.n_dofs());
        e[i] = 1.0;
        let pi = o.pidelta(&e);
        // expand Pi phi_i (centred at (1/2, 1/2), h = sqrt 2) in plain monomials by sampling
        let pts: Vec<[f64; 2]> = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [2.0, 0.0], [1.0, 1.0], [0.0, 2.0]];
        let v = DMatrix::from_fn(6, 6, |r, c| {
            let (a, b) = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)][c];
            pts[r][0].powi(a) * pts[r][1].powi(b)
        });
        let rhs = DVector::from_fn(6, |r, _| o.eval_poly(&pi, pts[r]));
        let plain = v.lu().solve(&rhs).unwrap();
        let mut exact = 0.0;
        for (c, (a, b)) in [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)].into_iter().enumerate() {
            for &(k, ga, gb) in &gterms {
                exact += plain[c] * k * mono_int(a + ga, b + gb);
            }
        }
        assert!((f[i] - exact).abs() < 1e-12, "dof {i}: {} vs {exact}", f[i]);
    }
}

#[test]
fn scaling_and_translation() {
    // plate stiffness scales like lambda^-2, mass like lambda^2, axial is invariant
    for g in corpus(6).iter().step_by(11) {
        let lam = 3.7;
        let moved: Vec<_> = g.vertices.iter().map(|p| [lam * p[0] + 1.3, lam * p[1] - 0.4]).collect();
        let g2 = ElementGeometry::new(0, moved, g.scales.iter().map(|s| lam * s).collect()).unwrap();
        let (p1, p2) = (build_projectors(g, SIGMA).unwrap(), build_projectors(&g2, SIGMA).unwrap());
        let (a, b) = (build_local_matrices(g, &p1), build_local_matrices(&g2, &p2));
        assert!((&b.k * (lam * lam) - &a.k).amax() < 1e-9 * a.k.amax());
        assert!((&b.m / (lam * lam) - &a.m).amax() < 1e-9 * a.m.amax());
        assert!((&b.ax - &a.ax).amax() < 1e-9 * a.ax.amax());
    }
}

/// Smallest and largest nonzero eigenvalues of `K` relative to those of its
/// consistency part.
pub fn stability_ratios(g: &ElementGeometry) -> (f64, f64) {
    let p = build_projectors(g, SIGMA).unwrap();
    let k = build_local_stiffness(&p);
    let kc = stiffness_consistency(&p);
    let positive = |m: DMatrix<f64>| {
        let e = m.symmetric_eigen().eigenvalues;
        let max = e.amax();
        let pos: Vec<f64> = e.iter().copied().filter(|&v| v > 1e-10 * max).collect();
        (pos.iter().copied().fold(f64::INFINITY, f64::min), max)
    };
    let (kmin, kmax) = positive(k);
    let (cmin, cmax) = positive(kc);
    (kmin / cmin, kmax / cmax)
}

#[test]
fn stability_sandwich() {
    for g in mesh_scaled_corpus(7) {
        let (a, b) = stability_ratios(&g);
        assert!((0.1..=10.0).contains(&a) && (0.1..=10.0).contains(&b), "cell {}: ratios {a} {b}", g.cell);
    }
}
