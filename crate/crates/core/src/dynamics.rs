//! Implicit time stepping for the damped plate with the nonlocal term.
//!
//! One step solves, for the free DoFs `eta` and the auxiliary scalar `xi`,
//!
//! ```text
//! [M + dt/2 M_d + dt^2 A + dt^2 (S xi - P) Ax] eta
//!     - dt^2 F - 2 M eta_{n-1} + M eta_{n-2} - dt/2 M_d eta_{n-2} = 0
//! eta^T Ax eta - xi = 0
//! ```
//!
//! by Newton on the bordered Jacobian, whose sparse block is factored once
//! per iteration and whose border is eliminated through a scalar Schur
//! complement.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::GlobalSystem;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::sparse::{Factorization, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iterations: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig { abs_tol: 1e-11, rel_tol: 1e-10, max_iterations: 25 }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) || self.max_iterations == 0 {
            return Err(Error::Config(format!("invalid Newton settings {self:?}")));
        }
        Ok(())
    }
}

/// Material and loading constants. Damping is spatial and lives in the
/// assembled `M_delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub sigma: f64,
    /// Pre-stressing constant.
    pub p: f64,
    /// Nonlocal stretching coefficient.
    pub s: f64,
}

impl PhysicalParams {
    /// Errors on inadmissible values. The existence windows for `P` and `S`
    /// depend on constants that are not computed, so only warn about them.
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::Config(format!("Poisson ratio must lie in (0, 1), got {}", self.sigma)));
        }
        if !(self.s >= 0.0) || !self.p.is_finite() || !self.s.is_finite() {
            return Err(Error::Config(format!("need S >= 0 and finite P, got P = {}, S = {}", self.p, self.s)));
        }
        if self.p < 0.0 {
            log::warn!("P = {} is negative; well-posedness is only established for pre-stressing P >= 0", self.p);
        }
        if self.s == 0.0 && self.p > 0.0 {
            log::warn!("S = 0 with P = {} > 0: no nonlinear stiffening, the problem may be ill-posed beyond the buckling load", self.p);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Nonlinear,
    Linearized,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonlinear" => Ok(Scheme::Nonlinear),
            "linearized" => Ok(Scheme::Linearized),
            _ => Err(Error::Config(format!("unknown scheme {s:?} (expected nonlinear or linearized)"))),
        }
    }
}

/// The latest two accepted states.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeState {
    pub eta: DVector<f64>,
    pub eta_prev: DVector<f64>,
    pub xi: f64,
    pub step: usize,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub newton_iters: usize,
    pub xi: f64,
    pub energy: f64,
    pub residual_norm: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    /// `eta_n` for `n = 0..=N` when requested.
    pub states: Vec<DVector<f64>>,
    pub final_state: TimeState,
}

impl Trajectory {
    /// CSV with columns `step,time,newton_iters,xi,energy,residual_norm`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "step,time,newton_iters,xi,energy,residual_norm")?;
        for r in &self.records {
            writeln!(w, "{},{:e},{},{:e},{:e},{:e}", r.step, r.time, r.newton_iters, r.xi, r.energy, r.residual_norm)?;
        }
        Ok(())
    }
}

/// Time-independent pieces of one time level.
pub struct Stepper<'a> {
    pub system: &'a GlobalSystem,
    pub params: PhysicalParams,
    pub dt: f64,
    /// `M + dt/2 M_d + dt^2 A`.
    base: SparseMatrix,
}

fn norm2(v: &DVector<f64>, s: f64) -> f64 {
    (v.norm_squared() + s * s).sqrt()
}

impl<'a> Stepper<'a> {
    pub fn new(system: &'a GlobalSystem, params: PhysicalParams, dt: f64) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        let base = SparseMatrix::linear_combination(&[(&system.m, 1.0), (&system.m_delta, 0.5 * dt), (&system.a, dt * dt)])?;
        Ok(Stepper { system, params, dt, base })
    }

    /// `2 M eta_{n-1} - M eta_{n-2} + dt/2 M_d eta_{n-2} + dt^2 F`.
    pub fn history(&self, state: &TimeState, load: &DVector<f64>) -> DVector<f64> {
        let s = self.system;
        s.m.mul_vec(&state.eta) * 2.0 - s.m.mul_vec(&state.eta_prev) + s.m_delta.mul_vec(&state.eta_prev) * (0.5 * self.dt)
            + load * (self.dt * self.dt)
    }

    fn check_dims(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.system.n_free() {
            return Err(Error::Dimension(format!("vector of length {} for {} free DoFs", v.len(), self.system.n_free())));
        }
        Ok(())
    }

    /// Residual of the augmented system at `(eta, xi)` given `history`.
    pub fn residual(&self, history: &DVector<f64>, eta: &DVector<f64>, xi: f64) -> Result<(DVector<f64>, f64)> {
        self.check_dims(eta)?;
        self.check_dims(history)?;
        let ax_eta = self.system.ax.mul_vec(eta);
        let c = self.dt * self.dt * (self.params.s * xi - self.params.p);
        let r = self.base.mul_vec(eta) + &ax_eta * c - history;
        Ok((r, eta.dot(&ax_eta) - xi))
    }

    /// `J1 = base + dt^2 (S xi - P) Ax`.
    pub fn j1(&self, xi: f64) -> Result<SparseMatrix> {
        let c = self.dt * self.dt * (self.params.s * xi - self.params.p);
        SparseMatrix::linear_combination(&[(&self.base, 1.0), (&self.system.ax, c)])
    }

    /// Bordered Jacobian at `(eta, xi)`.
    pub fn jacobian(&self, eta: &DVector<f64>, xi: f64) -> Result<BorderedJacobian> {
        let ax_eta = self.system.ax.mul_vec(eta);
        Ok(BorderedJacobian {
            j1: self.j1(xi)?,
            j2: &ax_eta * (self.dt * self.dt * self.params.s),
            j3: ax_eta * 2.0,
            j4: -1.0,
        })
    }

    /// Newton on the augmented system, warm-started from the previous state.
    /// After each update `xi` is reset to `eta^T Ax eta`, which keeps the
    /// constraint row exactly satisfied.
    pub fn step_nonlinear(&self, state: &TimeState, load: &DVector<f64>, config: &NewtonConfig) -> Result<(TimeState, usize, f64)> {
        let history = self.history(state, load);
        let mut eta = state.eta.clone();
        let mut xi = state.xi;
        let (mut r, mut rxi) = self.residual(&history, &eta, xi)?;
        let r0 = norm2(&r, rxi);
        let tol = config.abs_tol + config.rel_tol * r0;
        let mut iterations = 0;
        while norm2(&r, rxi) > tol {
            if iterations == config.max_iterations {
                return Err(Error::StepFailed { step: state.step + 1, iterations, residual: norm2(&r, rxi) });
            }
            let jac = self.jacobian(&eta, xi)?;
            // the xi increment only enters through the Schur elimination in
            // d_eta; xi itself is re-projected onto the constraint
            let (d_eta, _) = jac.factor()?.solve(&(-&r), -rxi)?;
            eta += d_eta;
            xi = eta.dot(&self.system.ax.mul_vec(&eta));
            (r, rxi) = self.residual(&history, &eta, xi)?;
            iterations += 1;
            if !norm2(&r, rxi).is_finite() {
                return Err(Error::StepFailed { step: state.step + 1, iterations, residual: f64::NAN });
            }
        }
        let next = TimeState { eta_prev: state.eta.clone(), eta, xi, step: state.step + 1, time: state.time + self.dt };
        Ok((next, iterations, norm2(&r, rxi)))
    }

    /// Linearized scheme: the nonlocal coefficient is frozen at `eta_{n-2}`.
    pub fn step_linearized(&self, state: &TimeState, load: &DVector<f64>) -> Result<TimeState> {
        let history = self.history(state, load);
        let xi_old = state.eta_prev.dot(&self.system.ax.mul_vec(&state.eta_prev));
        let matrix = self.j1(xi_old)?;
        let eta = Factorization::new(&matrix)?.solve(&history)?;
        let xi = eta.dot(&self.system.ax.mul_vec(&eta));
        Ok(TimeState { eta_prev: state.eta.clone(), eta, xi, step: state.step + 1, time: state.time + self.dt })
    }

    pub fn energy(&self, eta: &DVector<f64>, eta_prev: &DVector<f64>) -> f64 {
        compute_energy(self.system, &self.params, eta, eta_prev, self.dt)
    }
}

/// `½ v^T M v + ½ eta^T A eta - P/2 xi + S/4 xi^2` with `v = (eta - eta_prev) / dt`
/// and `xi = eta^T Ax eta`.
pub fn compute_energy(system: &GlobalSystem, params: &PhysicalParams, eta: &DVector<f64>, eta_prev: &DVector<f64>, dt: f64) -> f64 {
    let v = (eta - eta_prev) / dt;
    let xi = system.ax.quad_form(eta);
    0.5 * system.m.quad_form(&v) + 0.5 * system.a.quad_form(eta) - 0.5 * params.p * xi + 0.25 * params.s * xi * xi
}

/// `[[J1, J2], [J3^T, J4]]` with sparse symmetric `J1`.
#[derive(Debug, Clone)]
pub struct BorderedJacobian {
    pub j1: SparseMatrix,
    pub j2: DVector<f64>,
    pub j3: DVector<f64>,
    pub j4: f64,
}

pub struct FactoredJacobian<'a> {
    jac: &'a BorderedJacobian,
    j1: Factorization,
}

impl BorderedJacobian {
    pub fn dim(&self) -> usize {
        self.j1.nrows() + 1
    }

    pub fn factor(&self) -> Result<FactoredJacobian<'_>> {
        Ok(FactoredJacobian { jac: self, j1: Factorization::new(&self.j1)? })
    }

    pub fn apply(&self, x: &DVector<f64>, s: f64) -> (DVector<f64>, f64) {
        (self.j1.mul_vec(x) + &self.j2 * s, self.j3.dot(x) + self.j4 * s)
    }

    pub fn apply_transpose(&self, x: &DVector<f64>, s: f64) -> (DVector<f64>, f64) {
        (self.j1.transpose().mul_vec(x) + &self.j3 * s, self.j2.dot(x) + self.j4 * s)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.j1.nrows();
        let mut d = DMatrix::zeros(n + 1, n + 1);
        d.view_mut((0, 0), (n, n)).copy_from(&self.j1.to_dense());
        for i in 0..n {
            d[(i, n)] = self.j2[i];
            d[(n, i)] = self.j3[i];
        }
        d[(n, n)] = self.j4;
        d
    }

    /// Nonzeros of the bordered matrix.
    pub fn nnz(&self) -> usize {
        self.j1.nnz() + self.j2.iter().filter(|v| **v != 0.0).count() + self.j3.iter().filter(|v| **v != 0.0).count() + (self.j4 != 0.0) as usize
    }
}

impl FactoredJacobian<'_> {
    /// Solve `J [x; s] = [b; c]` by the scalar Schur complement.
    pub fn solve(&self, b: &DVector<f64>, c: f64) -> Result<(DVector<f64>, f64)> {
        let n = b.len();
        let mut rhs = DMatrix::zeros(n, 2);
        rhs.set_column(0, b);
        rhs.set_column(1, &self.jac.j2);
        let w = self.j1.solve_many(&rhs)?;
        let (w1, w2) = (w.column(0).into_owned(), w.column(1).into_owned());
        let schur = self.jac.j4 - self.jac.j3.dot(&w2);
        if schur == 0.0 || !schur.is_finite() {
            return Err(Error::Solver("bordered Jacobian has a singular Schur complement".into()));
        }
        let s = (c - self.jac.j3.dot(&w1)) / schur;
        Ok((w1 - w2 * s, s))
    }

    /// Solve `J^T [x; s] = [b; c]` (`J1` is symmetric).
    pub fn solve_transpose(&self, b: &DVector<f64>, c: f64) -> Result<(DVector<f64>, f64)> {
        let n = b.len();
        let mut rhs = DMatrix::zeros(n, 2);
        rhs.set_column(0, b);
        rhs.set_column(1, &self.jac.j3);
        let w = self.j1.solve_many(&rhs)?;
        let (w1, w2) = (w.column(0).into_owned(), w.column(1).into_owned());
        let schur = self.jac.j4 - self.jac.j2.dot(&w2);
        if schur == 0.0 || !schur.is_finite() {
            return Err(Error::Solver("bordered Jacobian has a singular Schur complement".into()));
        }
        let s = (c - self.jac.j2.dot(&w1)) / schur;
        Ok((w1 - w2 * s, s))
    }
}

/// Square operator with products and solves by itself and its transpose.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;
    fn apply_transpose(&self, x: &DVector<f64>) -> DVector<f64>;
    fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>>;
    fn solve_transpose(&self, b: &DVector<f64>) -> Result<DVector<f64>>;
}

fn split(x: &DVector<f64>) -> (DVector<f64>, f64) {
    let n = x.len() - 1;
    (x.rows(0, n).into_owned(), x[n])
}

fn join(v: DVector<f64>, s: f64) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(n + 1, |i, _| if i < n { v[i] } else { s })
}

impl LinearOperator for FactoredJacobian<'_> {
    fn dim(&self) -> usize {
        self.jac.dim()
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let (v, s) = split(x);
        let (a, b) = self.jac.apply(&v, s);
        join(a, b)
    }
    fn apply_transpose(&self, x: &DVector<f64>) -> DVector<f64> {
        let (v, s) = split(x);
        let (a, b) = self.jac.apply_transpose(&v, s);
        join(a, b)
    }
    fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let (v, s) = split(b);
        let (a, c) = FactoredJacobian::solve(self, &v, s)?;
        Ok(join(a, c))
    }
    fn solve_transpose(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let (v, s) = split(b);
        let (a, c) = FactoredJacobian::solve_transpose(self, &v, s)?;
        Ok(join(a, c))
    }
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self * x
    }
    fn apply_transpose(&self, x: &DVector<f64>) -> DVector<f64> {
        self.tr_mul(x)
    }
    fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.clone().lu().solve(b).ok_or_else(|| Error::Solver("singular matrix".into()))
    }
    fn solve_transpose(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.transpose().lu().solve(b).ok_or_else(|| Error::Solver("singular matrix".into()))
    }
}

const CONDITION_ITERATIONS: usize = 100;
const CONDITION_STAGNATION: f64 = 1e-6;

fn power_iteration(n: usize, mut op: impl FnMut(&DVector<f64>) -> Result<DVector<f64>>) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = DVector::from_fn(n, |_, _| rng.random_range(0.5..1.5));
    x /= x.norm();
    let mut lambda = 0.0;
    for _ in 0..CONDITION_ITERATIONS {
        let y = op(&x)?;
        let next = x.dot(&y);
        let ny = y.norm();
        if ny == 0.0 || !ny.is_finite() {
            return Err(Error::Solver("power iteration broke down".into()));
        }
        x = y / ny;
        let done = (next - lambda).abs() <= CONDITION_STAGNATION * next.abs();
        lambda = next;
        if done {
            break;
        }
    }
    Ok(lambda)
}

/// 2-norm condition estimate: power iteration on `J^T J` and on `(J^T J)^{-1}`.
pub fn estimate_condition(op: &impl LinearOperator) -> Result<f64> {
    let n = op.dim();
    let max = power_iteration(n, |x| Ok(op.apply_transpose(&op.apply(x))))?;
    let inv = power_iteration(n, |x| op.solve(&op.solve_transpose(x)?))?;
    Ok((max * inv).sqrt())
}

const STATIONARY_TOL: f64 = 1e-9;
const STATIONARY_REFINEMENTS: usize = 5;
/// Multiple of `eps |A| |eta|` tolerated on top of the relative tolerance.
const ROUNDING_SLACK: f64 = 64.0;

/// Solve `A eta = F(g0)`. The residual must satisfy
/// `|A eta - F| <= 1e-9 |F| + 64 eps || |A| |eta| ||`; the second term is
/// the floor below which the residual of an ill-conditioned plate (thin
/// strips with anisotropic cells) cannot be evaluated in floating point.
pub fn solve_stationary(system: &GlobalSystem, g0: impl Fn(Point) -> f64 + Sync) -> Result<DVector<f64>> {
    let f = system.assemble_load(g0)?;
    if f.amax() == 0.0 {
        return Ok(f);
    }
    let fac = Factorization::new(&system.a)?;
    let mut eta = fac.solve(&f)?;
    let tol = |eta: &DVector<f64>| STATIONARY_TOL * f.norm() + ROUNDING_SLACK * f64::EPSILON * system.a.abs_mul_vec(eta).norm();
    let mut res = (system.a.mul_vec(&eta) - &f).norm();
    for _ in 0..STATIONARY_REFINEMENTS {
        if res <= tol(&eta) {
            break;
        }
        eta += fac.solve(&(&f - system.a.mul_vec(&eta)))?;
        res = (system.a.mul_vec(&eta) - &f).norm();
    }
    // a singular A lets a huge kernel component through, which inflates the
    // rounding floor but breaks the energy identity eta^T A eta = eta^T F
    let (work, energy) = (eta.dot(&f), system.a.quad_form(&eta));
    if !(res <= tol(&eta)) || !((energy - work).abs() <= 1e-6 * work.abs()) {
        return Err(Error::Solver(format!("stationary solve residual {res:e} (is the plate constrained?)")));
    }
    Ok(eta)
}

/// Load as a function of position and time.
pub type LoadFn<'a> = &'a (dyn Fn(Point, f64) -> f64 + Sync);

#[derive(Clone, Copy)]
pub struct RunOptions<'a> {
    pub scheme: Scheme,
    pub dt: f64,
    pub n_steps: usize,
    pub newton: NewtonConfig,
    pub load: Option<LoadFn<'a>>,
    pub keep_states: bool,
}

/// Number of steps `N` with `N dt = T`.
pub fn step_count(dt: f64, t_final: f64) -> Result<usize> {
    let n = (t_final / dt).round();
    if !(n >= 2.0) || (n * dt - t_final).abs() > 1e-9 * t_final {
        return Err(Error::Config(format!("final time {t_final} is not a multiple N >= 2 of dt = {dt}")));
    }
    Ok(n as usize)
}

/// March from `U0`, `U1` to step `N`; energies are recorded from `n = 1`.
pub fn run_simulation(system: &GlobalSystem, params: PhysicalParams, u0: DVector<f64>, u1: DVector<f64>, opts: &RunOptions) -> Result<Trajectory> {
    opts.newton.validate()?;
    let stepper = Stepper::new(system, params, opts.dt)?;
    stepper.check_dims(&u0)?;
    stepper.check_dims(&u1)?;
    let xi1 = system.ax.quad_form(&u1);
    let mut records = vec![StepRecord {
        step: 1,
        time: opts.dt,
        newton_iters: 0,
        xi: xi1,
        energy: stepper.energy(&u1, &u0),
        residual_norm: 0.0,
    }];
    let mut states = if opts.keep_states { vec![u0.clone(), u1.clone()] } else { Vec::new() };
    let mut state = TimeState { eta: u1, eta_prev: u0, xi: xi1, step: 1, time: opts.dt };
    for n in 2..=opts.n_steps {
        let t = n as f64 * opts.dt;
        let load = match opts.load {
            Some(g) => system.assemble_load(|p| g(p, t))?,
            None => DVector::zeros(system.n_free()),
        };
        let (next, iters, res) = match opts.scheme {
            Scheme::Nonlinear => stepper.step_nonlinear(&state, &load, &opts.newton)?,
            Scheme::Linearized => {
                let next = stepper.step_linearized(&state, &load)?;
                let (r, rxi) = stepper.residual(&stepper.history(&state, &load), &next.eta, next.xi)?;
                (next, 0, norm2(&r, rxi))
            }
        };
        state = TimeState { time: t, ..next };
        records.push(StepRecord {
            step: n,
            time: t,
            newton_iters: iters,
            xi: state.xi,
            energy: stepper.energy(&state.eta, &state.eta_prev),
            residual_norm: res,
        });
        if opts.keep_states {
            states.push(state.eta.clone());
        }
    }
    Ok(Trajectory { records, states, final_state: state })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_of_known_spectra() {
        let id = DMatrix::<f64>::identity(5, 5);
        assert!((estimate_condition(&id).unwrap() - 1.0).abs() < 1e-6);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e6]));
        assert!((estimate_condition(&d).unwrap() / 1e6 - 1.0).abs() < 1e-2);
    }

    #[test]
    fn step_count_checks_divisibility() {
        assert_eq!(step_count(0.001, 5.0).unwrap(), 5000);
        assert_eq!(step_count(1.0 / 1024.0, 0.5).unwrap(), 512);
        assert!(step_count(0.3, 1.0).is_err());
        assert!(step_count(0.5, 0.5).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(PhysicalParams { sigma: 1.0, p: 0.0, s: 0.0 }.validate().is_err());
        assert!(PhysicalParams { sigma: 0.3, p: 0.0, s: -1.0 }.validate().is_err());
        assert!(PhysicalParams { sigma: 0.3, p: 1e-3, s: 1e-5 }.validate().is_ok());
        assert!("linearized".parse::<Scheme>().is_ok());
        assert!("picard".parse::<Scheme>().is_err());
    }
}
