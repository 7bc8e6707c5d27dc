//! State-feedback regulator `u = κ(w) − K (x − π(w))` built from a patchy
//! center-manifold solution, with LQR gain synthesis and closed-loop
//! simulation.

use std::f64::consts::TAU;
use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::odebvp::{integrate_with, IvpOptions};
use crate::patchy::PatchySolution;
use crate::systems::PlantNormalForm;

const NK_MAX_ITER: usize = 100;
const CARE_TOL: f64 = 1e-8;
pub const HURWITZ_MARGIN: f64 = 1e-6;

/// `AᵀP + PA − P B R⁻¹ Bᵀ P + Q`
pub fn care_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let rinv_bt = linalg::solve_matrix(r, &b.transpose(), "input weight R")?;
    Ok(a.transpose() * p + p * a - p * b * rinv_bt * p + q)
}

/// Solution of the LQR problem for `ẋ = A x + B u`.
#[derive(Debug, Clone)]
pub struct LqrSolution {
    /// `K = R⁻¹ Bᵀ P`, so that `A − B K` is Hurwitz.
    pub gain: DMatrix<f64>,
    pub riccati: DMatrix<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub closed_loop_abscissa: f64,
}

/// Stabilizing gain from a shifted Lyapunov equation:
/// `(A + βI) P + P (A + βI)ᵀ = 2 B Bᵀ`, `K₀ = Bᵀ P⁻¹`.
fn bass_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let beta = a.norm() + 1.0;
    let shifted = -(a + DMatrix::identity(n, n) * beta);
    let p = linalg::lyapunov(&shifted, &(b * b.transpose() * -2.0))?;
    let pinv = p
        .clone()
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Stabilizability("controllability Gramian is singular".into()))?;
    let k = b.transpose() * pinv;
    let abscissa = linalg::spectral_abscissa(&(a - b * &k))?;
    if !(abscissa < 0.0) {
        return Err(Error::Stabilizability(format!(
            "bootstrap gain leaves spectral abscissa {abscissa}"
        )));
    }
    Ok(k)
}

/// Newton–Kleinman iteration on the continuous algebraic Riccati equation.
pub fn lqr(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<LqrSolution> {
    let n = a.nrows();
    let m = b.ncols();
    if !a.is_square() || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::Validation("inconsistent LQR dimensions".into()));
    }
    if linalg::eigenvalues(r)?.iter().any(|l| !(l.re > 0.0)) {
        return Err(Error::Validation("R must be positive definite".into()));
    }
    if linalg::eigenvalues(&((q + q.transpose()) * 0.5))?
        .iter()
        .any(|l| l.re < -1e-12 * q.norm().max(1.0))
    {
        return Err(Error::Validation("Q must be positive semidefinite".into()));
    }
    let mut k = if linalg::spectral_abscissa(a)? < 0.0 {
        DMatrix::zeros(m, n)
    } else {
        bass_gain(a, b)?
    };
    // relative to ‖Q‖; absolute when there is no state cost
    let tol = CARE_TOL * if q.norm() > 0.0 { q.norm() } else { 1.0 };
    let mut p = DMatrix::zeros(n, n);
    let mut residual = f64::INFINITY;
    for it in 1..=NK_MAX_ITER {
        let ak = a - b * &k;
        let rhs = -(q + k.transpose() * r * &k);
        let p_new = linalg::lyapunov(&ak.transpose(), &rhs)?;
        let step = (&p_new - &p).norm();
        p = p_new;
        k = linalg::solve_matrix(r, &(b.transpose() * &p), "input weight R")?;
        residual = care_residual(a, b, q, r, &p)?.norm();
        if residual <= tol {
            let abscissa = linalg::spectral_abscissa(&(a - b * &k))?;
            if !(abscissa <= -HURWITZ_MARGIN) {
                return Err(Error::Stabilizability(format!(
                    "closed-loop spectral abscissa {abscissa}"
                )));
            }
            return Ok(LqrSolution {
                gain: k,
                riccati: p,
                residual,
                iterations: it,
                closed_loop_abscissa: abscissa,
            });
        }
        if step <= 1e-15 * p.norm() {
            break;
        }
    }
    Err(Error::RiccatiStall(residual))
}

/// LQR gain `K` with `A − B K` Hurwitz.
pub fn lqr_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    Ok(lqr(a, b, q, r)?.gain)
}

/// `α(x, w) = κ(w) − K (x − π(w))` in `(z, ξ)` coordinates.
#[derive(Debug, Clone)]
pub struct Regulator {
    plant: PlantNormalForm,
    solution: PatchySolution,
    gain: Vec<f64>,
}

impl Regulator {
    pub fn new(
        plant: PlantNormalForm,
        solution: PatchySolution,
        gain: &DMatrix<f64>,
    ) -> Result<Self> {
        if gain.nrows() != 1 || gain.ncols() != plant.state_dim() {
            return Err(Error::Validation(format!(
                "gain must be 1x{}, got {}x{}",
                plant.state_dim(),
                gain.nrows(),
                gain.ncols()
            )));
        }
        if solution.dim() != plant.z_dim() {
            return Err(Error::Validation(format!(
                "solution has {} components, plant has {} zero-dynamics states",
                solution.dim(),
                plant.z_dim()
            )));
        }
        if solution.orientation() != plant.exosystem().omega() {
            return Err(Error::Validation(
                "solution orientation differs from the plant's exosystem".into(),
            ));
        }
        let gain = gain.iter().copied().collect();
        Ok(Regulator {
            plant,
            solution,
            gain,
        })
    }

    pub fn plant(&self) -> &PlantNormalForm {
        &self.plant
    }

    pub fn solution(&self) -> &PatchySolution {
        &self.solution
    }

    pub fn gain(&self) -> &[f64] {
        &self.gain
    }

    /// `π(w) = (φ̃(w), ϕ(w))`
    pub fn pi(&self, w: [f64; 2]) -> Result<Vec<f64>> {
        let mut x = self.solution.evaluate_cartesian(w)?;
        x.extend(self.plant.varphi(w)?);
        Ok(x)
    }

    /// `κ(w) = u_e(π(w), w)`
    pub fn kappa(&self, w: [f64; 2]) -> Result<f64> {
        self.plant.feedforward_ue(&self.pi(w)?, w)
    }

    pub fn alpha(&self, x: &[f64], w: [f64; 2]) -> Result<f64> {
        let pi = self.pi(w)?;
        let kappa = self.plant.feedforward_ue(&pi, w)?;
        let feedback: f64 = self
            .gain
            .iter()
            .zip(x.iter().zip(&pi))
            .map(|(k, (xi, pii))| k * (xi - pii))
            .sum();
        Ok(kappa - feedback)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimulationOptions {
    pub horizon: f64,
    pub tol: f64,
    /// Output sampling interval.
    pub dt: f64,
    /// Band for the settling time `|e| ≤ band`.
    pub band: f64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            horizon: 30.0,
            tol: 1e-9,
            dt: 0.01,
            band: 1e-2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClosedLoopResult {
    pub state_names: Vec<String>,
    pub w_names: [String; 2],
    pub t: Vec<f64>,
    /// Plant states `(z, ξ)`, one row per sample.
    pub x: Vec<Vec<f64>>,
    pub w: Vec<[f64; 2]>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub y_ref: Vec<f64>,
    pub e: Vec<f64>,
    /// `sup |e|` over the final third of the horizon.
    pub transient_sup: f64,
    /// Last sample time with `|e|` above the band (0 if never).
    pub settling_time: f64,
    /// `max |e|` over each completed exosystem period.
    pub period_maxima: Vec<f64>,
}

impl ClosedLoopResult {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Running maximum of `|e|` over periods after the first is non-increasing.
    pub fn envelope_non_increasing(&self, slack: f64) -> bool {
        self.period_maxima
            .windows(2)
            .skip(1)
            .all(|p| p[1] <= p[0] + slack)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut header: Vec<String> = vec!["t".into()];
        header.extend(self.state_names.iter().cloned());
        header.extend(self.w_names.iter().cloned());
        header.extend(["u", "y", "y_ref", "e"].map(String::from));
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.t.len() {
            let mut row = vec![self.t[k]];
            row.extend(&self.x[k]);
            row.extend(self.w[k]);
            row.extend([self.u[k], self.y[k], self.y_ref[k], self.e[k]]);
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Integrates plant and exosystem under `u = α(x, w)` from `(x0, w0)`.
pub fn simulate_closed_loop(
    reg: &Regulator,
    x0: &[f64],
    w0: [f64; 2],
    opts: &SimulationOptions,
) -> Result<ClosedLoopResult> {
    let plant = reg.plant();
    let dim = plant.state_dim();
    if x0.len() != dim {
        return Err(Error::Validation(format!(
            "initial state has {} entries, plant has {dim}",
            x0.len()
        )));
    }
    if !(opts.horizon > 0.0) || !(opts.dt > 0.0) {
        return Err(Error::Validation(
            "horizon and sampling interval must be positive".into(),
        ));
    }
    reg.alpha(x0, w0).map_err(|e| Error::Simulation {
        t: 0.0,
        source: Box::new(e),
    })?;
    let exo = plant.exosystem();
    let mut y0 = x0.to_vec();
    y0.extend(w0);
    let traj = integrate_with(
        |t: f64, s: &[f64], ds: &mut [f64]| -> Result<()> {
            let (x, w) = s.split_at(dim);
            let w = [w[0], w[1]];
            let u = reg.alpha(x, w).map_err(|e| Error::Simulation {
                t,
                source: Box::new(e),
            })?;
            ds[..dim].copy_from_slice(&plant.dynamics(x, u));
            let sw = exo.eval(w);
            ds[dim] = sw[0];
            ds[dim + 1] = sw[1];
            Ok(())
        },
        [0.0, opts.horizon],
        &y0,
        IvpOptions {
            tol: opts.tol,
            max_steps: 2_000_000,
            ..IvpOptions::default()
        },
    )?;

    let samples = (opts.horizon / opts.dt).round().max(1.0) as usize;
    let n = plant.z_dim();
    let mut res = ClosedLoopResult {
        state_names: plant
            .z_names()
            .iter()
            .chain(plant.xi_names())
            .cloned()
            .collect(),
        w_names: exo.names().clone(),
        t: Vec::with_capacity(samples + 1),
        x: Vec::with_capacity(samples + 1),
        w: Vec::with_capacity(samples + 1),
        u: Vec::with_capacity(samples + 1),
        y: Vec::with_capacity(samples + 1),
        y_ref: Vec::with_capacity(samples + 1),
        e: Vec::with_capacity(samples + 1),
        transient_sup: 0.0,
        settling_time: 0.0,
        period_maxima: Vec::new(),
    };
    let mut buf = vec![0.0; dim + 2];
    for k in 0..=samples {
        let t = if k == samples {
            opts.horizon
        } else {
            k as f64 * opts.horizon / samples as f64
        };
        traj.eval_into(t, &mut buf);
        let x = buf[..dim].to_vec();
        let w = [buf[dim], buf[dim + 1]];
        let u = reg.alpha(&x, w).map_err(|e| Error::Simulation {
            t,
            source: Box::new(e),
        })?;
        let p = plant.p(w)?;
        let y = x[n];
        res.t.push(t);
        res.x.push(x);
        res.w.push(w);
        res.u.push(u);
        res.y.push(y);
        res.y_ref.push(-p);
        res.e.push(y + p);
    }

    let window = 2.0 * opts.horizon / 3.0;
    res.transient_sup = res
        .t
        .iter()
        .zip(&res.e)
        .filter(|(t, _)| **t >= window)
        .fold(0.0f64, |a, (_, e)| a.max(e.abs()));
    res.settling_time = res
        .t
        .iter()
        .zip(&res.e)
        .filter(|(_, e)| e.abs() > opts.band)
        .map(|(t, _)| *t)
        .fold(0.0, f64::max);

    // periods from the unwrapped reduced angle of the exosystem
    let o = exo.omega();
    let angle = |w: [f64; 2]| (o * w[1]).atan2(w[0]);
    let mut unwrapped = angle(res.w[0]);
    let start = unwrapped;
    let mut prev = unwrapped;
    let mut current = 0.0f64;
    let mut period = 0usize;
    for (k, e) in res.e.iter().enumerate() {
        let a = angle(res.w[k]);
        let mut d = a - prev;
        d -= TAU * (d / TAU).round();
        unwrapped += d;
        prev = a;
        let p = ((unwrapped - start) / TAU).floor().max(0.0) as usize;
        if p > period {
            res.period_maxima.push(current);
            current = 0.0;
            period = p;
        }
        current = current.max(e.abs());
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn double_integrator() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let sol = lqr(&a, &b, &DMatrix::identity(2, 2), &DMatrix::identity(1, 1)).unwrap();
        assert_relative_eq!(sol.gain[(0, 0)], 1.0, epsilon = 1e-9);
        assert_relative_eq!(sol.gain[(0, 1)], 3f64.sqrt(), epsilon = 1e-9);
        assert!(sol.residual <= 1e-8);
        assert!(sol.closed_loop_abscissa <= -HURWITZ_MARGIN);
    }

    #[test]
    fn hurwitz_without_state_cost() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let k = lqr_gain(&a, &b, &DMatrix::zeros(2, 2), &DMatrix::identity(1, 1)).unwrap();
        assert!(k.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unstabilizable_is_rejected() {
        // unstable mode not reached by the input
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(matches!(
            lqr_gain(&a, &b, &DMatrix::identity(2, 2), &DMatrix::identity(1, 1)),
            Err(Error::Stabilizability(_))
        ));
    }
}
