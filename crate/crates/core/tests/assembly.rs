use nalgebra::DVector;
use platevem::assembly::{assemble, build_dof_map, ProblemKind};
use platevem::mesh::{generate_distorted_grid, generate_nonconvex_grid, generate_square_grid, generate_voronoi, BoundarySpec, Bounds, PolygonalMesh};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIGMA: f64 = 0.3;

fn meshes() -> Vec<PolygonalMesh> {
    let b = Bounds::unit_square();
    let s = BoundarySpec::AllClamped;
    vec![
        generate_square_grid(4, b, &s).unwrap(),
        generate_distorted_grid(5, b, 0.25, 3, &s).unwrap(),
        generate_nonconvex_grid(3, b, &s).unwrap(),
        generate_voronoi(30, b, 3, 9, &s).unwrap(),
    ]
}

#[test]
fn scatter_matches_elementwise_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for mesh in meshes() {
        let d = build_dof_map(&mesh, ProblemKind::Clamped).unwrap();
        let s = assemble(&mesh, &d, SIGMA, |p| 1.0 + p[0]).unwrap();
        let eta = DVector::from_fn(s.n_free(), |_, _| rng.random_range(-1.0..1.0));
        for (global, pick) in [
            (&s.m, 0usize),
            (&s.m_delta, 1),
            (&s.a, 2),
            (&s.ax, 3),
        ] {
            let mut sum = 0.0;
            for el in &s.elements {
                let x = s.local_dofs(el, &eta);
                let (local, f) = match pick {
                    0 => (&el.matrices.m, 1.0),
                    1 => (&el.matrices.m, el.delta),
                    2 => (&el.matrices.k, 1.0),
                    _ => (&el.matrices.ax, 1.0),
                };
                sum += f * x.dot(&(local * &x));
            }
            let q = global.quad_form(&eta);
            assert!((q - sum).abs() <= 1e-12 * sum.abs().max(1e-300), "{q} vs {sum}");
        }
    }
}

#[test]
fn symmetry_definiteness_and_sparsity() {
    for mesh in meshes() {
        let d = build_dof_map(&mesh, ProblemKind::Clamped).unwrap();
        let s = assemble(&mesh, &d, SIGMA, |_| 1.0).unwrap();
        for m in [&s.m, &s.a, &s.ax] {
            assert!(m.asymmetry() <= 1e-12 * m.max_abs());
        }
        let em = s.m.to_dense().symmetric_eigen().eigenvalues;
        assert!(em.min() > 0.0);
        for m in [&s.a, &s.ax] {
            let e = m.to_dense().symmetric_eigen().eigenvalues;
            assert!(e.min() >= -1e-10 * m.max_abs());
        }
        // locality: row couplings only between vertices that share a cell
        let mut neighbours = vec![std::collections::BTreeSet::new(); mesh.num_vertices()];
        for c in mesh.cells() {
            for &v in &c.vertices {
                neighbours[v].extend(c.vertices.iter().copied());
            }
        }
        for r in 0..s.a.nrows() {
            let v = d.free_to_global()[r] / 3;
            let mut count = 0;
            for (c, _) in s.a.row(r) {
                assert!(neighbours[v].contains(&(d.free_to_global()[c] / 3)));
                count += 1;
            }
            assert!(count <= 3 * neighbours[v].len());
        }
    }
}

#[test]
fn quadratic_patch_energy() {
    // q = 0.7 x^2 - 1.1 xy + 0.4 y^2 + x - 2: hess = [[1.4, -1.1], [-1.1, 0.8]]
    let (hxx, hxy, hyy) = (1.4, -1.1, 0.8);
    let exact = (1.0 - SIGMA) * (hxx * hxx + 2.0 * hxy * hxy + hyy * hyy) + SIGMA * (hxx + hyy) * (hxx + hyy);
    let q = |p: [f64; 2]| {
        let (x, y) = (p[0], p[1]);
        (0.7 * x * x - 1.1 * x * y + 0.4 * y * y + x - 2.0, [1.4 * x - 1.1 * y + 1.0, -1.1 * x + 0.8 * y])
    };
    for mesh in meshes() {
        let d = build_dof_map(&mesh, ProblemKind::Unconstrained).unwrap();
        let s = assemble(&mesh, &d, SIGMA, |_| 1.0).unwrap();
        let eta = s.interpolate(q).unwrap();
        assert!((s.a.quad_form(&eta) - exact).abs() < 1e-10 * exact);
        // the projection of the interpolant reproduces q on every cell
        for el in &s.elements {
            let c = &el.projectors.p_delta * s.local_dofs(el, &eta);
            for &p in &el.geometry.vertices {
                assert!((el.geometry.basis.combine(c.as_slice(), p) - q(p).0).abs() < 1e-11);
            }
        }
    }
}

#[test]
fn load_is_linear_in_amplitude() {
    let mesh = generate_distorted_grid(4, Bounds::unit_square(), 0.2, 1, &BoundarySpec::AllClamped).unwrap();
    let d = build_dof_map(&mesh, ProblemKind::Clamped).unwrap();
    let s = assemble(&mesh, &d, SIGMA, |_| 1.0).unwrap();
    let g0 = |p: [f64; 2]| (p[0] * 3.0).sin() * p[1];
    assert_eq!(s.assemble_load(|_| 0.0).unwrap().amax(), 0.0);
    let f1 = s.assemble_load(g0).unwrap();
    let f2 = s.assemble_load(|p| 2.5 * g0(p)).unwrap();
    assert!((f2 - f1 * 2.5).amax() < 1e-14);
}

#[test]
fn assembly_is_deterministic() {
    let mesh = generate_voronoi(50, Bounds::unit_square(), 2, 4, &BoundarySpec::AllClamped).unwrap();
    let d = build_dof_map(&mesh, ProblemKind::Clamped).unwrap();
    let a = assemble(&mesh, &d, SIGMA, |_| 1.0).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| assemble(&mesh, &d, SIGMA, |_| 1.0).unwrap());
    assert_eq!(a.a, b.a);
    assert_eq!(a.m, b.m);
    assert_eq!(a.ax, b.ax);
}
