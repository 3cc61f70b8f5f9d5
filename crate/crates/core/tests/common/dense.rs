//! Dense from-scratch evaluation of one time step, eliminating `xi`.

use nalgebra::{DMatrix, DVector};
use platevem::assembly::GlobalSystem;
use platevem::dynamics::PhysicalParams;

pub struct DenseStep {
    pub m: DMatrix<f64>,
    pub md: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub ax: DMatrix<f64>,
    pub params: PhysicalParams,
    pub dt: f64,
}

impl DenseStep {
    pub fn new(system: &GlobalSystem, params: PhysicalParams, dt: f64) -> Self {
        DenseStep { m: system.m.to_dense(), md: system.m_delta.to_dense(), a: system.a.to_dense(), ax: system.ax.to_dense(), params, dt }
    }

    fn lhs(&self) -> DMatrix<f64> {
        &self.m + &self.md * (0.5 * self.dt) + &self.a * (self.dt * self.dt)
    }

    /// Residual of the augmented equations, written out term by term.
    pub fn residual(&self, eta: &DVector<f64>, xi: f64, eta1: &DVector<f64>, eta2: &DVector<f64>, f: &DVector<f64>) -> (DVector<f64>, f64) {
        let dt2 = self.dt * self.dt;
        let r = &self.m * eta + &self.md * eta * (0.5 * self.dt) + &self.a * eta * dt2 + &self.ax * eta * (dt2 * (self.params.s * xi - self.params.p))
            - f * dt2
            - &self.m * eta1 * 2.0
            + &self.m * eta2
            - &self.md * eta2 * (0.5 * self.dt);
        (r, eta.dot(&(&self.ax * eta)) - xi)
    }

    /// Newton on `F(eta) = R(eta, eta^T Ax eta)` with the full dense Jacobian
    /// `L + dt^2 (S q - P) Ax + 2 dt^2 S (Ax eta)(Ax eta)^T`.
    pub fn newton(&self, eta1: &DVector<f64>, eta2: &DVector<f64>, f: &DVector<f64>) -> DVector<f64> {
        let dt2 = self.dt * self.dt;
        let lhs = self.lhs();
        let mut eta = eta1.clone();
        for _ in 0..60 {
            let q = eta.dot(&(&self.ax * &eta));
            let (r, _) = self.residual(&eta, q, eta1, eta2, f);
            let g = &self.ax * &eta;
            let jac = &lhs + &self.ax * (dt2 * (self.params.s * q - self.params.p)) + &g * g.transpose() * (2.0 * dt2 * self.params.s);
            let d = jac.lu().solve(&(-&r)).expect("dense Jacobian is regular");
            eta += &d;
            if d.amax() <= 1e-15 * eta.amax().max(1e-300) {
                break;
            }
        }
        eta
    }
}
