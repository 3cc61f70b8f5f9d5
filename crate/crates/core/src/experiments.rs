//! Manufactured-solution convergence study, bridge energy decay, error
//! norms and Jacobian reports.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble, build_dof_map, GlobalSystem, ProblemKind};
use crate::dynamics::{
    estimate_condition, run_simulation, BorderedJacobian, solve_stationary, step_count, NewtonConfig, PhysicalParams, RunOptions, Scheme, Stepper,
    TimeState, Trajectory,
};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::mesh::{
    generate_distorted_grid, generate_nonconvex_grid, generate_regular_polygon_grid, generate_square_grid, generate_voronoi,
    BoundarySpec, Bounds, PolygonalMesh,
};

/// `u = sin(pi t) X(x) X(y)` with `X(s) = (s - s^2)^2` on the unit square,
/// clamped on the whole boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedSolution {
    pub delta: f64,
    pub p: f64,
    pub s: f64,
}

/// `X` and its first four derivatives.
fn profile(s: f64) -> [f64; 5] {
    let q = s - s * s;
    [q * q, 2.0 * s - 6.0 * s * s + 4.0 * s * s * s, 2.0 - 12.0 * s + 12.0 * s * s, -12.0 + 24.0 * s, 24.0]
}

/// `int_0^1 X'(x)^2 dx * int_0^1 X(y)^2 dy = (2/105) (1/630)`.
pub const NONLOCAL_CONSTANT: f64 = 1.0 / 33075.0;

impl ManufacturedSolution {
    pub fn u(&self, p: Point, t: f64) -> f64 {
        (PI * t).sin() * profile(p[0])[0] * profile(p[1])[0]
    }

    pub fn grad(&self, p: Point, t: f64) -> [f64; 2] {
        let (x, y) = (profile(p[0]), profile(p[1]));
        let st = (PI * t).sin();
        [st * x[1] * y[0], st * x[0] * y[1]]
    }

    pub fn u_t(&self, p: Point, t: f64) -> f64 {
        PI * (PI * t).cos() * profile(p[0])[0] * profile(p[1])[0]
    }

    pub fn grad_t(&self, p: Point, t: f64) -> [f64; 2] {
        let (x, y) = (profile(p[0]), profile(p[1]));
        let ct = PI * (PI * t).cos();
        [ct * x[1] * y[0], ct * x[0] * y[1]]
    }

    pub fn u_tt(&self, p: Point, t: f64) -> f64 {
        -PI * PI * self.u(p, t)
    }

    /// `[u_xx, u_xy, u_yy]`.
    pub fn hessian(&self, p: Point, t: f64) -> [f64; 3] {
        let (x, y) = (profile(p[0]), profile(p[1]));
        let st = (PI * t).sin();
        [st * x[2] * y[0], st * x[1] * y[1], st * x[0] * y[2]]
    }

    pub fn bilaplacian(&self, p: Point, t: f64) -> f64 {
        let (x, y) = (profile(p[0]), profile(p[1]));
        (PI * t).sin() * (x[4] * y[0] + 2.0 * x[2] * y[2] + x[0] * y[4])
    }

    /// `int (D_x u)^2` over the unit square.
    pub fn nonlocal(&self, t: f64) -> f64 {
        (PI * t).sin().powi(2) * NONLOCAL_CONSTANT
    }

    /// `g = u_tt + delta u_t + lap^2 u + [P - S int (D_x u)^2] u_xx`.
    pub fn forcing(&self, p: Point, t: f64) -> f64 {
        self.u_tt(p, t) + self.delta * self.u_t(p, t) + self.bilaplacian(p, t) + (self.p - self.s * self.nonlocal(t)) * self.hessian(p, t)[0]
    }
}

/// `E_2 = (sum_E |u - Pi U|_{2,E}^2)^{1/2}` with exact Hessian `[xx, xy, yy]`.
pub fn error_h2(system: &GlobalSystem, exact_hessian: impl Fn(Point) -> [f64; 3] + Sync, eta: &DVector<f64>) -> f64 {
    let total: f64 = system
        .elements
        .par_iter()
        .map(|el| {
            let c = &el.projectors.p_delta * system.local_dofs(el, eta);
            let geom = &el.geometry;
            let hess = geom.basis.eval(geom.centroid, 2) * &c;
            let (hxx, hxy, hyy) = (hess[0], hess[1], hess[2]);
            geom.quadrature.integrate(|p| {
                let e = exact_hessian(p);
                (e[0] - hxx).powi(2) + 2.0 * (e[1] - hxy).powi(2) + (e[2] - hyy).powi(2)
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    total.sqrt()
}

/// `A_h(u_I - U, u_I - U) / A_h(u_I, u_I)`.
pub fn error_rel(system: &GlobalSystem, exact_interpolant: &DVector<f64>, eta: &DVector<f64>) -> Result<f64> {
    let den = system.a.quad_form(exact_interpolant);
    if !(den > 0.0) {
        return Err(Error::Undefined("relative error of a zero-energy reference".into()));
    }
    Ok(system.a.quad_form(&(exact_interpolant - eta)) / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeshFamily {
    Square,
    Distorted { amplitude: f64, seed: u64 },
    Nonconvex,
    Voronoi { lloyd_iterations: usize, seed: u64 },
    RegularPolygon,
}

impl MeshFamily {
    /// Level `n`: `n x n` cells for the grid families, `n^2` seeds for Voronoi.
    pub fn generate(&self, n: usize, bounds: Bounds, boundary: &BoundarySpec) -> Result<PolygonalMesh> {
        match *self {
            MeshFamily::Square => generate_square_grid(n, bounds, boundary),
            MeshFamily::Distorted { amplitude, seed } => generate_distorted_grid(n, bounds, amplitude, seed, boundary),
            MeshFamily::Nonconvex => generate_nonconvex_grid(n, bounds, boundary),
            MeshFamily::Voronoi { lloyd_iterations, seed } => generate_voronoi(n * n, bounds, lloyd_iterations, seed, boundary),
            MeshFamily::RegularPolygon => generate_regular_polygon_grid(n, bounds, boundary),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DtPolicy {
    /// Largest `dt <= h^2` dividing the final time.
    HSquared,
    Fixed { dt: f64 },
}

impl DtPolicy {
    pub fn dt(&self, h: f64, t_final: f64) -> f64 {
        match *self {
            DtPolicy::HSquared => t_final / (t_final / (h * h)).ceil().max(2.0),
            DtPolicy::Fixed { dt } => dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example1Config {
    pub family: MeshFamily,
    pub levels: Vec<usize>,
    pub dt_policy: DtPolicy,
    pub t_final: f64,
    pub delta: f64,
    pub sigma: f64,
    pub p: f64,
    pub s: f64,
    pub scheme: Scheme,
    pub newton: NewtonConfig,
    pub condition_estimate: bool,
}

impl Default for Example1Config {
    fn default() -> Self {
        Example1Config {
            family: MeshFamily::Square,
            levels: vec![4, 8, 16, 32],
            dt_policy: DtPolicy::HSquared,
            t_final: 0.5,
            delta: 1.0,
            sigma: 0.3,
            p: 1e-3,
            s: 1e-5,
            scheme: Scheme::Nonlinear,
            newton: NewtonConfig::default(),
            condition_estimate: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub ndof: usize,
    pub err_h2: f64,
    pub err_rel: f64,
    /// Against the previous row; `None` on the first.
    pub eoc: Option<f64>,
    pub newton_max: usize,
    pub cond_estimate: Option<f64>,
}

/// Result of one Example 1 level.
#[derive(Debug, Clone)]
pub struct Example1Level {
    pub system: GlobalSystem,
    pub trajectory: Trajectory,
    pub dt: f64,
    pub h: f64,
}

/// Assemble and simulate one level of Example 1.
pub fn example1_level(cfg: &Example1Config, n: usize) -> Result<Example1Level> {
    let mesh = cfg.family.generate(n, Bounds::unit_square(), &BoundarySpec::AllClamped)?;
    let h = mesh.h();
    let dofs = build_dof_map(&mesh, ProblemKind::Clamped)?;
    let delta = cfg.delta;
    let system = assemble(&mesh, &dofs, cfg.sigma, |_| delta)?;
    let dt = cfg.dt_policy.dt(h, cfg.t_final);
    let sol = ManufacturedSolution { delta: cfg.delta, p: cfg.p, s: cfg.s };
    let u0 = system.interpolate(|p| (sol.u(p, 0.0), sol.grad(p, 0.0)))?;
    let w0 = system.interpolate(|p| (sol.u_t(p, 0.0), sol.grad_t(p, 0.0)))?;
    let u1 = &u0 + &w0 * dt;
    let forcing = move |p: Point, t: f64| sol.forcing(p, t);
    let opts = RunOptions {
        scheme: cfg.scheme,
        dt,
        n_steps: step_count(dt, cfg.t_final)?,
        newton: cfg.newton,
        load: Some(&forcing),
        keep_states: false,
    };
    let params = PhysicalParams { sigma: cfg.sigma, p: cfg.p, s: cfg.s };
    let trajectory = run_simulation(&system, params, u0, u1, &opts)?;
    Ok(Example1Level { system, trajectory, dt, h })
}

/// Bordered Jacobian condition estimate at a converged state.
pub fn jacobian_condition(system: &GlobalSystem, params: PhysicalParams, state: &TimeState, dt: f64) -> Result<f64> {
    let stepper = Stepper::new(system, params, dt)?;
    let jac = stepper.jacobian(&state.eta, state.xi)?;
    estimate_condition(&jac.factor()?)
}

/// Convergence table; levels run in parallel.
pub fn run_example1(cfg: &Example1Config) -> Result<Vec<ConvergenceRow>> {
    if cfg.levels.len() < 2 {
        return Err(Error::Config("a convergence study needs at least two levels".into()));
    }
    let sol = ManufacturedSolution { delta: cfg.delta, p: cfg.p, s: cfg.s };
    let params = PhysicalParams { sigma: cfg.sigma, p: cfg.p, s: cfg.s };
    let mut rows = cfg
        .levels
        .par_iter()
        .map(|&n| -> Result<ConvergenceRow> {
            let lvl = example1_level(cfg, n)?;
            let st = &lvl.trajectory.final_state;
            let t = st.time;
            let exact = lvl.system.interpolate(|p| (sol.u(p, t), sol.grad(p, t)))?;
            let cond_estimate = if cfg.condition_estimate {
                Some(jacobian_condition(&lvl.system, params, st, lvl.dt)?)
            } else {
                None
            };
            Ok(ConvergenceRow {
                h: lvl.h,
                ndof: lvl.system.n_free(),
                err_h2: error_h2(&lvl.system, |p| sol.hessian(p, t), &st.eta),
                err_rel: error_rel(&lvl.system, &exact, &st.eta)?,
                eoc: None,
                newton_max: lvl.trajectory.records.iter().map(|r| r.newton_iters).max().unwrap_or(0),
                cond_estimate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| b.h.total_cmp(&a.h));
    for i in 1..rows.len() {
        rows[i].eoc = Some((rows[i - 1].err_h2 / rows[i].err_h2).ln() / (rows[i - 1].h / rows[i].h).ln());
    }
    Ok(rows)
}

pub fn write_convergence_csv(rows: &[ConvergenceRow], mut w: impl Write) -> Result<()> {
    writeln!(w, "h,ndof,err_h2,err_rel,eoc,newton_max,cond_estimate")?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
    for r in rows {
        writeln!(w, "{:e},{},{:e},{:e},{},{},{}", r.h, r.ndof, r.err_h2, r.err_rel, opt(r.eoc), r.newton_max, opt(r.cond_estimate))?;
    }
    Ok(())
}

/// Damping coefficient of the bridge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Damping {
    /// `1` on `{x < 10h} u {x > L - 10h} u {|y| > l - 5h}`, `0` elsewhere.
    Strip,
    Constant { value: f64 },
}

impl Damping {
    pub fn coefficient(&self, p: Point, bounds: &Bounds, h: f64) -> f64 {
        match *self {
            Damping::Strip => {
                let half = 0.5 * (bounds.ymax - bounds.ymin);
                let mid = 0.5 * (bounds.ymax + bounds.ymin);
                let frame = p[0] < bounds.xmin + 10.0 * h || p[0] > bounds.xmax - 10.0 * h || (p[1] - mid).abs() > half - 5.0 * h;
                if frame { 1.0 } else { 0.0 }
            }
            Damping::Constant { value } => value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example2Config {
    pub n: usize,
    pub dt: f64,
    pub t_final: f64,
    pub sigma: f64,
    pub p: f64,
    pub s: f64,
    pub damping: Damping,
    pub scheme: Scheme,
    pub newton: NewtonConfig,
    /// Amplitude of the stationary load `a sin(2x)` defining `U0`.
    pub initial_load: f64,
}

impl Default for Example2Config {
    fn default() -> Self {
        Example2Config {
            n: 16,
            dt: 1e-3,
            t_final: 5.0,
            sigma: 0.2,
            p: 1e-3,
            s: 1e-5,
            damping: Damping::Strip,
            scheme: Scheme::Nonlinear,
            newton: NewtonConfig::default(),
            initial_load: 50.0,
        }
    }
}

/// `[0, pi] x [-pi/150, pi/150]`.
pub fn bridge_bounds() -> Bounds {
    Bounds::new(0.0, -PI / 150.0, PI, PI / 150.0).expect("valid rectangle")
}

#[derive(Debug, Clone)]
pub struct Example2Result {
    pub system: GlobalSystem,
    pub initial: DVector<f64>,
    pub trajectory: Trajectory,
    /// Fraction of cells with nonzero damping.
    pub damped_fraction: f64,
}

pub fn run_example2(cfg: &Example2Config) -> Result<Example2Result> {
    let bounds = bridge_bounds();
    let mesh = generate_square_grid(cfg.n, bounds, &BoundarySpec::Bridge)?;
    let h = mesh.h();
    let dofs = build_dof_map(&mesh, ProblemKind::BridgeMixed)?;
    let damping = cfg.damping;
    let system = assemble(&mesh, &dofs, cfg.sigma, |p| damping.coefficient(p, &bounds, h))?;
    let damped_fraction = system.elements.iter().filter(|e| e.delta != 0.0).count() as f64 / system.elements.len() as f64;
    let a = cfg.initial_load;
    let u0 = solve_stationary(&system, |p| a * (2.0 * p[0]).sin())?;
    let opts = RunOptions {
        scheme: cfg.scheme,
        dt: cfg.dt,
        n_steps: step_count(cfg.dt, cfg.t_final)?,
        newton: cfg.newton,
        load: None,
        keep_states: false,
    };
    let params = PhysicalParams { sigma: cfg.sigma, p: cfg.p, s: cfg.s };
    let trajectory = run_simulation(&system, params, u0.clone(), u0.clone(), &opts)?;
    Ok(Example2Result { system, initial: u0, trajectory, damped_fraction })
}

pub fn write_energy_csv(traj: &Trajectory, mut w: impl Write) -> Result<()> {
    writeln!(w, "step,time,energy,xi,newton_iters")?;
    for r in &traj.records {
        writeln!(w, "{},{:e},{:e},{:e},{}", r.step, r.time, r.energy, r.xi, r.newton_iters)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JacobianReport {
    pub n: usize,
    pub nnz_j1: usize,
    pub nnz_bordered: usize,
    /// Pattern of `J1 + J2 J3^T`, the Jacobian after eliminating `xi`.
    pub nnz_full: usize,
    /// `(N + 1)^2`.
    pub dense_augmented: usize,
    pub bordered_fill: f64,
    pub full_fill: f64,
    pub cond_estimate: Option<f64>,
}

impl JacobianReport {
    /// Structural counts of `jac` against the Jacobian obtained by
    /// eliminating `xi`.
    pub fn from_bordered(jac: &BorderedJacobian, cond_estimate: Option<f64>) -> Self {
        let n = jac.j1.nrows();
        let rows: Vec<usize> = (0..n).filter(|&i| jac.j2[i] != 0.0).collect();
        let mut in_cols = vec![false; n];
        let mut n_cols = 0;
        for j in (0..n).filter(|&j| jac.j3[j] != 0.0) {
            in_cols[j] = true;
            n_cols += 1;
        }
        // union of the J1 pattern with the rank-one block rows x cols
        let mut nnz_full = jac.j1.nnz();
        for &i in &rows {
            nnz_full += n_cols - jac.j1.row(i).filter(|&(j, _)| in_cols[j]).count();
        }
        let dense = (n + 1) * (n + 1);
        JacobianReport {
            n,
            nnz_j1: jac.j1.nnz(),
            nnz_bordered: jac.nnz(),
            nnz_full,
            dense_augmented: dense,
            bordered_fill: jac.nnz() as f64 / dense as f64,
            full_fill: nnz_full as f64 / (n * n).max(1) as f64,
            cond_estimate,
        }
    }
}

/// Sparsity and conditioning of the Newton matrix at `state`.
pub fn report_jacobian(system: &GlobalSystem, params: PhysicalParams, state: &TimeState, dt: f64, with_condition: bool) -> Result<JacobianReport> {
    let stepper = Stepper::new(system, params, dt)?;
    let jac = stepper.jacobian(&state.eta, state.xi)?;
    let cond = if with_condition { Some(estimate_condition(&jac.factor()?)?) } else { None };
    Ok(JacobianReport::from_bordered(&jac, cond))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_derivatives() {
        let s = 0.3;
        let x = profile(s);
        let step = 1e-5;
        for k in 0..4 {
            let fd = (profile(s + step)[k] - profile(s - step)[k]) / (2.0 * step);
            assert!((fd - x[k + 1]).abs() < 1e-8, "derivative {k}");
        }
    }

    #[test]
    fn dt_policy() {
        let dt = DtPolicy::HSquared.dt(2f64.sqrt() / 32.0, 0.5);
        assert!((dt - 1.0 / 512.0).abs() < 1e-15);
        assert!(DtPolicy::HSquared.dt(0.37, 0.5) <= 0.37 * 0.37);
    }

    #[test]
    fn strip_covers_thin_bridge() {
        let b = bridge_bounds();
        let h = PI / 16.0;
        assert_eq!(Damping::Strip.coefficient([PI / 2.0, 0.0], &b, h), 1.0);
        // on a plate that is wide compared with 10h the centre is undamped
        let wide = Bounds::new(0.0, -1.0, 4.0, 1.0).unwrap();
        assert_eq!(Damping::Strip.coefficient([2.0, 0.0], &wide, 0.05), 0.0);
        assert_eq!(Damping::Strip.coefficient([0.2, 0.0], &wide, 0.05), 1.0);
        assert_eq!(Damping::Strip.coefficient([2.0, 0.9], &wide, 0.05), 1.0);
    }
}
