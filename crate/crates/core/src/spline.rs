//! Periodic cubic splines on an equispaced mesh of `[0, 2π)`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THETA_MESH: usize = 256;

/// θ-mesh size from `PATCHY_THETA_MESH`, falling back to the default.
pub fn theta_mesh_from_env() -> usize {
    std::env::var("PATCHY_THETA_MESH")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 4)
        .unwrap_or(DEFAULT_THETA_MESH)
}

/// Equispaced nodes `2π i / n`, `i = 0..n`.
pub fn theta_nodes(n: usize) -> Vec<f64> {
    (0..n).map(|i| TAU * i as f64 / n as f64).collect()
}

/// Vector-valued C² periodic interpolant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicSpline {
    nodes: usize,
    dim: usize,
    /// Node values, node-major.
    values: Vec<f64>,
    /// Second derivatives at the nodes, node-major.
    #[serde(skip)]
    curvature: Vec<f64>,
}

/// Solves the cyclic system `x_{i-1} + 4 x_i + x_{i+1} = rhs_i`.
fn cyclic_solve(rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    if n == 1 {
        return vec![rhs[0] / 6.0];
    }
    if n == 2 {
        // 4x0 + 2x1 = r0, 2x0 + 4x1 = r1
        let det = 12.0;
        return vec![
            (4.0 * rhs[0] - 2.0 * rhs[1]) / det,
            (4.0 * rhs[1] - 2.0 * rhs[0]) / det,
        ];
    }
    // Sherman–Morrison on the tridiagonal part with corners removed.
    let gamma = -4.0;
    let mut diag = vec![4.0; n];
    diag[0] -= gamma;
    diag[n - 1] -= 1.0 / gamma;
    let thomas = |d: &[f64], r: &[f64]| -> Vec<f64> {
        let mut c = vec![0.0; n];
        let mut x = vec![0.0; n];
        c[0] = 1.0 / d[0];
        x[0] = r[0] / d[0];
        for i in 1..n {
            let m = d[i] - c[i - 1];
            c[i] = 1.0 / m;
            x[i] = (r[i] - x[i - 1]) / m;
        }
        for i in (0..n - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        x
    };
    let y = thomas(&diag, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = 1.0;
    let z = thomas(&diag, &u);
    let fact = (y[0] + y[n - 1] / gamma) / (1.0 + z[0] + z[n - 1] / gamma);
    y.iter().zip(&z).map(|(a, b)| a - fact * b).collect()
}

impl PeriodicSpline {
    /// From node-major samples at [`theta_nodes`]`(nodes)`.
    pub fn new(nodes: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if nodes < 3 || values.len() != nodes * dim {
            return Err(Error::Validation(format!(
                "spline needs at least 3 nodes and {} values",
                nodes * dim
            )));
        }
        let mut s = PeriodicSpline {
            nodes,
            dim,
            values,
            curvature: Vec::new(),
        };
        s.rebuild();
        Ok(s)
    }

    pub fn from_fn(nodes: usize, dim: usize, mut f: impl FnMut(f64) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(nodes * dim);
        for t in theta_nodes(nodes) {
            values.extend(f(t));
        }
        Self::new(nodes, dim, values)
    }

    /// Recomputes the curvature table (needed after deserialization).
    pub fn rebuild(&mut self) {
        let n = self.nodes;
        let h = TAU / n as f64;
        let mut curv = vec![0.0; n * self.dim];
        let mut rhs = vec![0.0; n];
        for d in 0..self.dim {
            for i in 0..n {
                let ym = self.values[((i + n - 1) % n) * self.dim + d];
                let y0 = self.values[i * self.dim + d];
                let yp = self.values[((i + 1) % n) * self.dim + d];
                rhs[i] = 6.0 * (yp - 2.0 * y0 + ym) / (h * h);
            }
            let m = cyclic_solve(&rhs);
            for i in 0..n {
                curv[i * self.dim + d] = m[i];
            }
        }
        self.curvature = curv;
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval_into(&self, theta: f64, out: &mut [f64]) {
        let n = self.nodes;
        let h = TAU / n as f64;
        let t = theta.rem_euclid(TAU);
        let mut i = (t / h).floor() as usize;
        if i >= n {
            i = n - 1;
        }
        let j = (i + 1) % n;
        let a = (t - i as f64 * h) / h;
        let b = 1.0 - a;
        let h2 = h * h / 6.0;
        for d in 0..self.dim {
            let y0 = self.values[i * self.dim + d];
            let y1 = self.values[j * self.dim + d];
            let m0 = self.curvature[i * self.dim + d];
            let m1 = self.curvature[j * self.dim + d];
            out[d] = b * y0 + a * y1 + h2 * ((b * b * b - b) * m0 + (a * a * a - a) * m1);
        }
    }

    pub fn eval(&self, theta: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(theta, &mut out);
        out
    }

    pub fn eval_scalar(&self, theta: f64) -> f64 {
        let mut out = [0.0];
        self.eval_into(theta, &mut out);
        out[0]
    }

    /// Componentwise minimum over the nodes of `self − other`.
    pub fn min_gap(&self, other: &PeriodicSpline) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .fold(f64::INFINITY, f64::min)
    }
}
