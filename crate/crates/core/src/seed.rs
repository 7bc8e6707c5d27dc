//! Inner-disk Taylor seed of the center manifold, computed degree by degree
//! in Cartesian coordinates.
//!
//! At degree `d` the homogeneous block `φ_d` solves
//! `∂φ_d/∂w · ωJw − Bφ_d = [Z̄(w, φ_{<d}) − ∂φ_{<d}/∂w · N(w)]_d`, where
//! `N = s − ωJ` is the nonlinear part of the exosystem. The right-hand side
//! is read off jets of the lower-degree solution.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jets::{shape, Jet};
use crate::linalg;
use crate::systems::CartesianCenterSystem;

pub const MAX_SEED_ORDER: usize = 30;
const RESIDUAL_TOL: f64 = 1e-10;

/// `φ^N(w) = Σ_d Σ_m c_{d,m} w₁^{d−m} w₂^m` with `c_{d,m} ∈ ℝⁿ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedPolynomial {
    order: usize,
    dim: usize,
    /// Orientation of the reduced angle: `w = r (cos θ, o sin θ)`.
    orientation: f64,
    /// `blocks[d-1][m][i]`
    blocks: Vec<Vec<Vec<f64>>>,
}

impl SeedPolynomial {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    /// Coefficient vector of `w₁^{d−m} w₂^m`.
    pub fn coefficient(&self, d: usize, m: usize) -> Option<&[f64]> {
        if d == 0 || d > self.order || m > d {
            return None;
        }
        Some(&self.blocks[d - 1][m])
    }

    pub fn blocks(&self) -> &[Vec<Vec<f64>>] {
        &self.blocks
    }

    /// Highest degree with a nonzero coefficient (0 if identically zero).
    pub fn effective_degree(&self) -> usize {
        (1..=self.order)
            .rev()
            .find(|&d| self.blocks[d - 1].iter().flatten().any(|&c| c != 0.0))
            .unwrap_or(0)
    }

    pub fn eval(&self, w: [f64; 2]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for d in 1..=self.order {
            for m in 0..=d {
                let mono = w[0].powi((d - m) as i32) * w[1].powi(m as i32);
                for (o, c) in out.iter_mut().zip(&self.blocks[d - 1][m]) {
                    *o += c * mono;
                }
            }
        }
        out
    }

    /// `{"w1^a*w2^b": [c₁, …, cₙ], …}` over every stored monomial.
    pub fn monomial_table(
        &self,
        names: &[String; 2],
    ) -> serde_json::Map<String, serde_json::Value> {
        let mut map = serde_json::Map::new();
        for d in 1..=self.order {
            for m in 0..=d {
                map.insert(
                    format!("{}^{}*{}^{}", names[0], d - m, names[1], m),
                    serde_json::Value::from(self.blocks[d - 1][m].clone()),
                );
            }
        }
        map
    }

    /// Evaluation on jets of `w`.
    pub fn eval_jet(&self, w: &[Jet]) -> Result<Vec<Jet>> {
        let like = &w[0];
        let mut p1 = vec![like.constant_like(1.0)];
        let mut p2 = vec![like.constant_like(1.0)];
        for d in 1..=self.order {
            p1.push(p1[d - 1].try_mul(&w[0])?);
            p2.push(p2[d - 1].try_mul(&w[1])?);
        }
        let mut out = vec![like.zero_like(); self.dim];
        for d in 1..=self.order {
            for m in 0..=d {
                let coeffs = &self.blocks[d - 1][m];
                if coeffs.iter().all(|&c| c == 0.0) {
                    continue;
                }
                let mono = p1[d - m].try_mul(&p2[m])?;
                for (o, &c) in out.iter_mut().zip(coeffs) {
                    if c != 0.0 {
                        o.axpy(c, &mono)?;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Angular coefficients `e_d(θ)` with `ψ⁰(θ, r) = Σ_d e_d(θ) r^d`.
    fn angular(&self, theta: f64) -> Vec<Vec<f64>> {
        let c = theta.cos();
        let s = self.orientation * theta.sin();
        let mut e = vec![vec![0.0; self.dim]; self.order + 1];
        for d in 1..=self.order {
            for m in 0..=d {
                let mono = c.powi((d - m) as i32) * s.powi(m as i32);
                for (o, coef) in e[d].iter_mut().zip(&self.blocks[d - 1][m]) {
                    *o += coef * mono;
                }
            }
        }
        e
    }

    /// Radial Taylor coefficients `(1/k!) ∂^kψ⁰/∂r^k (θ, r)`, `k = 0..=kmax`.
    pub fn radial_taylor(&self, theta: f64, r: f64, kmax: usize) -> Vec<Vec<f64>> {
        let e = self.angular(theta);
        let mut out = vec![vec![0.0; self.dim]; kmax + 1];
        for (k, ok) in out.iter_mut().enumerate() {
            for (d, ed) in e.iter().enumerate().skip(k.max(1)) {
                // binomial(d, k) r^{d-k}
                let mut b = 1.0;
                for j in 0..k {
                    b = b * (d - j) as f64 / (j + 1) as f64;
                }
                let f = b * r.powi((d - k) as i32);
                for (o, v) in ok.iter_mut().zip(ed) {
                    *o += f * v;
                }
            }
        }
        out
    }
}

/// Value and radial derivatives `∂^kψ⁰/∂r^k`, `k = 0..=kmax`.
pub fn eval_seed_polar(
    poly: &SeedPolynomial,
    theta: f64,
    r: f64,
    kmax: usize,
) -> Result<Vec<Vec<f64>>> {
    if kmax > poly.order {
        return Err(Error::JetRange(format!(
            "radial derivative order {kmax} exceeds seed degree {}",
            poly.order
        )));
    }
    let mut t = poly.radial_taylor(theta, r, kmax);
    let mut fact = 1.0;
    for (k, row) in t.iter_mut().enumerate() {
        if k > 0 {
            fact *= k as f64;
        }
        for v in row.iter_mut() {
            *v *= fact;
        }
    }
    Ok(t)
}

/// `∂φ/∂w · s(w) − Bφ − Z̄(w, φ)` as jets about `w = 0`, to degree `order`.
fn pde_residual_jets(
    sys: &CartesianCenterSystem,
    poly: &SeedPolynomial,
    order: usize,
) -> Result<Vec<Jet>> {
    let w = [
        Jet::variable(0, 0.0, order, 2)?,
        Jet::variable(1, 0.0, order, 2)?,
    ];
    let phi = poly.eval_jet(&w)?;
    let s = sys.exosystem().eval_jet(&w)?;
    let f = sys.f_jet(&w, &phi)?;
    let mut out = Vec::with_capacity(phi.len());
    for (p, fi) in phi.iter().zip(&f) {
        if order == 0 {
            out.push(p.try_sub(fi)?);
            continue;
        }
        let d0 = p.differentiate(0)?.lift(2, order)?;
        let d1 = p.differentiate(1)?.lift(2, order)?;
        let lhs = d0.try_mul(&s[0])?.try_add(&d1.try_mul(&s[1])?)?;
        out.push(lhs.try_sub(fi)?);
    }
    Ok(out)
}

pub fn compute_seed(sys: &CartesianCenterSystem, order: usize) -> Result<SeedPolynomial> {
    if order == 0 || order > MAX_SEED_ORDER {
        return Err(Error::Validation(format!(
            "seed order must be in 1..={MAX_SEED_ORDER}, got {order}"
        )));
    }
    let n = sys.dim();
    let omega = sys.exosystem().omega();
    let b = sys.b();
    let mut poly = SeedPolynomial {
        order,
        dim: n,
        orientation: omega,
        blocks: (1..=order).map(|d| vec![vec![0.0; n]; d + 1]).collect(),
    };
    for d in 1..=order {
        // known part: Z̄(w, φ_{<d}) − ∂φ_{<d}/∂w · N(w), degree-d block
        let w = [Jet::variable(0, 0.0, d, 2)?, Jet::variable(1, 0.0, d, 2)?];
        let phi = poly.eval_jet(&w)?;
        let zbar = sys.zbar_jet(&w, &phi)?;
        let nl = sys.exosystem().nonlinear_jet(&w)?;
        let sh = shape(d, 2)?;
        let mut rhs = DVector::zeros(n * (d + 1));
        for i in 0..n {
            let mut g = zbar[i].clone();
            let d0 = phi[i].differentiate(0)?.lift(2, d)?;
            let d1 = phi[i].differentiate(1)?.lift(2, d)?;
            g = g.try_sub(&d0.try_mul(&nl[0])?.try_add(&d1.try_mul(&nl[1])?)?)?;
            for m in 0..=d {
                let k = sh.position(&[d - m, m]).expect("monomial in range");
                rhs[m * n + i] = g.coeffs()[k];
            }
        }
        // L_d = D_d ⊗ I − I ⊗ B over the monomials (d−m, m)
        let dim = n * (d + 1);
        let mut l = DMatrix::zeros(dim, dim);
        for m in 0..=d {
            for i in 0..n {
                for j in 0..n {
                    l[(m * n + i, m * n + j)] -= b[(i, j)];
                }
                let a = (d - m) as f64;
                if m < d {
                    l[((m + 1) * n + i, m * n + i)] += -omega * a;
                }
                if m > 0 {
                    l[((m - 1) * n + i, m * n + i)] += omega * m as f64;
                }
            }
        }
        let x = linalg::solve(&l, &rhs, &format!("degree-{d} homological operator"))?;
        for m in 0..=d {
            for i in 0..n {
                poly.blocks[d - 1][m][i] = x[m * n + i];
            }
        }
    }
    let residual = pde_residual_jets(sys, &poly, order)?;
    let scale = poly
        .blocks
        .iter()
        .flatten()
        .flatten()
        .fold(1.0f64, |a, c| a.max(c.abs()));
    let worst = residual
        .iter()
        .flat_map(|j| j.coeffs().iter())
        .fold(0.0f64, |a, c| a.max(c.abs()));
    if worst > RESIDUAL_TOL * scale {
        return Err(Error::Singular(format!(
            "seed residual {worst:e} exceeds tolerance (coefficient scale {scale:e})"
        )));
    }
    Ok(poly)
}

/// Pointwise residual `DΦ(w)·s(w) − F(w, Φ(w))` of the seed.
pub fn seed_residual_at(
    sys: &CartesianCenterSystem,
    poly: &SeedPolynomial,
    w: [f64; 2],
) -> Result<Vec<f64>> {
    let wj = [Jet::variable(0, w[0], 1, 2)?, Jet::variable(1, w[1], 1, 2)?];
    let phi = poly.eval_jet(&wj)?;
    let values: Vec<f64> = phi.iter().map(|p| p.coeffs()[0]).collect();
    let s = sys.exosystem().eval(w);
    let f = sys.f_f64(w, &values)?;
    Ok(phi
        .iter()
        .zip(&f)
        .map(|(p, fi)| p.coeffs()[1] * s[0] + p.coeffs()[2] * s[1] - fi)
        .collect())
}

/// Residual coefficients of the truncated PDE for a computed seed.
pub fn seed_residual(sys: &CartesianCenterSystem, poly: &SeedPolynomial) -> Result<f64> {
    let res = pde_residual_jets(sys, poly, poly.order)?;
    Ok(res
        .iter()
        .flat_map(|j| j.coeffs().iter())
        .fold(0.0f64, |a, c| a.max(c.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::CenterSystemSpec;
    use approx::assert_relative_eq;
    use std::collections::HashMap;

    fn example1() -> CartesianCenterSystem {
        CartesianCenterSystem::from_spec(
            &CenterSystemSpec {
                z_names: vec!["z1".into(), "z2".into(), "z3".into()],
                w_names: ["w1".into(), "w2".into()],
                b: DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0]),
                zbar: vec![
                    "0.5*w1 + 0.5*w2".into(),
                    "w1/3 + 2*w2/3".into(),
                    "-0.5*w1 + 0.5*w2".into(),
                ],
                p: "0".into(),
                q: "0".into(),
                rotation: 1.0,
                params: HashMap::new(),
            },
            1e-6,
        )
        .unwrap()
    }

    #[test]
    fn linear_manifold_is_exact() {
        let seed = compute_seed(&example1(), 3).unwrap();
        let expect = [[-1.0 / 3.0, -0.5, -0.5], [0.0, -1.0 / 6.0, -1.0 / 6.0]];
        for m in 0..2 {
            for i in 0..3 {
                assert_relative_eq!(
                    seed.coefficient(1, m).unwrap()[i],
                    expect[m][i],
                    epsilon = 1e-14
                );
            }
        }
        assert_eq!(seed.effective_degree(), 1);
        let v = eval_seed_polar(&seed, 0.0, 1.0, 0).unwrap();
        assert_relative_eq!(v[0][0], -1.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(v[0][1], -0.5, epsilon = 1e-14);
        let zero = eval_seed_polar(&seed, 1.3, 0.0, 0).unwrap();
        assert!(zero[0].iter().all(|&c| c == 0.0));
    }

    #[test]
    fn order_bounds() {
        assert!(compute_seed(&example1(), 0).is_err());
        assert!(compute_seed(&example1(), 31).is_err());
        let seed = compute_seed(&example1(), 1).unwrap();
        assert!(eval_seed_polar(&seed, 0.0, 1.0, 2).is_err());
    }
}
