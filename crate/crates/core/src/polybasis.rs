//! Scaled monomials `m_a(x) = ((x - x_E) / h_E)^a` in graded-lexicographic
//! order: `1, X, Y, X^2, XY, Y^2, ...`.

use nalgebra::DMatrix;

use crate::geometry::Point;

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledMonomialBasis {
    center: Point,
    h: f64,
    degree: usize,
    exponents: Vec<(usize, usize)>,
}

/// Number of monomials of total degree at most `k`.
pub const fn poly_dim(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

fn falling(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64).product()
}

impl ScaledMonomialBasis {
    pub fn new(center: Point, h: f64, degree: usize) -> Self {
        let mut exponents = Vec::with_capacity(poly_dim(degree));
        for d in 0..=degree {
            for j in 0..=d {
                exponents.push((d - j, j));
            }
        }
        ScaledMonomialBasis { center, h, degree, exponents }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    pub fn center(&self) -> Point {
        self.center
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn exponents(&self) -> &[(usize, usize)] {
        &self.exponents
    }

    pub fn scaled(&self, p: Point) -> (f64, f64) {
        ((p[0] - self.center[0]) / self.h, (p[1] - self.center[1]) / self.h)
    }

    /// `d^(dx+dy) m_a / dx^dx dy^dy` at `p` for every monomial.
    pub fn partial(&self, p: Point, dx: usize, dy: usize) -> Vec<f64> {
        let (xi, eta) = self.scaled(p);
        let s = self.h.powi(-((dx + dy) as i32));
        self.exponents
            .iter()
            .map(|&(a, b)| {
                if a < dx || b < dy {
                    0.0
                } else {
                    falling(a, dx) * falling(b, dy) * xi.powi((a - dx) as i32) * eta.powi((b - dy) as i32) * s
                }
            })
            .collect()
    }

    pub fn values(&self, p: Point) -> Vec<f64> {
        self.partial(p, 0, 0)
    }

    /// All derivatives of order `order` (0..=3). Row `j` holds
    /// `d^order / dx^(order-j) dy^j` of every basis function.
    pub fn eval(&self, p: Point, order: usize) -> DMatrix<f64> {
        assert!(order <= 3, "derivatives above third order are not supported");
        let mut out = DMatrix::zeros(order + 1, self.dim());
        for j in 0..=order {
            for (c, v) in self.partial(p, order - j, j).into_iter().enumerate() {
                out[(j, c)] = v;
            }
        }
        out
    }

    /// Evaluate the polynomial with the given coefficients.
    pub fn combine(&self, coeffs: &[f64], p: Point) -> f64 {
        self.values(p).iter().zip(coeffs).map(|(m, c)| m * c).sum()
    }
}
