//! Dormand–Prince 5(4) integration with dense output, and periodic
//! boundary-value solvers on `[0, 2π]`.
//!
//! Both periodic solvers use multiple shooting over equal θ-segments. The
//! linear solver assembles the cyclic block system `y_{k+1} = Φ_k y_k + p_k`
//! from per-segment fundamental matrices; the nonlinear one runs damped
//! Newton on the segment matching conditions with Jacobians from the
//! variational equations.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Right-hand side `ẏ = f(t, y)` written into `dy`.
pub trait Rhs {
    fn eval(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;
}

impl<F> Rhs for F
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    fn eval(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        self(t, y, dy)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IvpOptions {
    /// Mixed absolute/relative local error target.
    pub tol: f64,
    pub max_steps: usize,
    pub h_max: f64,
}

impl Default for IvpOptions {
    fn default() -> Self {
        IvpOptions {
            tol: 1e-10,
            max_steps: 200_000,
            h_max: f64::INFINITY,
        }
    }
}

/// Solution samples on an adaptive mesh with fourth-order continuous
/// extension on each step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    t: Vec<f64>,
    y: Vec<f64>,
    dense: Vec<f64>,
    tol: f64,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mesh(&self) -> &[f64] {
        &self.t
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn t_start(&self) -> f64 {
        self.t[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.t.last().expect("nonempty mesh")
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.y[i * self.dim..(i + 1) * self.dim]
    }

    pub fn first(&self) -> &[f64] {
        self.sample(0)
    }

    pub fn last(&self) -> &[f64] {
        self.sample(self.t.len() - 1)
    }

    pub fn steps(&self) -> usize {
        self.t.len() - 1
    }

    fn interval(&self, t: f64) -> usize {
        let n = self.t.len();
        let forward = self.t[n - 1] >= self.t[0];
        // index i with t in [t_i, t_{i+1}]
        let pos = if forward {
            self.t.partition_point(|&x| x <= t)
        } else {
            self.t.partition_point(|&x| x >= t)
        };
        pos.saturating_sub(1).min(n - 2)
    }

    /// State at `t`; mesh points return the stored samples exactly. Values
    /// slightly outside the span are extrapolated from the end intervals.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let m = self.dim;
        if self.t.len() == 1 {
            out.copy_from_slice(self.sample(0));
            return;
        }
        let i = self.interval(t);
        if t == self.t[i] {
            out.copy_from_slice(self.sample(i));
            return;
        }
        if t == self.t[i + 1] {
            out.copy_from_slice(self.sample(i + 1));
            return;
        }
        let h = self.t[i + 1] - self.t[i];
        let s = (t - self.t[i]) / h;
        let s1 = 1.0 - s;
        let r = &self.dense[i * 5 * m..(i + 1) * 5 * m];
        for k in 0..m {
            out[k] = r[k]
                + s * (r[m + k] + s1 * (r[2 * m + k] + s * (r[3 * m + k] + s1 * r[4 * m + k])));
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    /// Joins trajectories whose spans abut end to start.
    pub fn concat(parts: Vec<Trajectory>) -> Trajectory {
        let mut iter = parts.into_iter();
        let mut acc = iter.next().expect("at least one trajectory");
        for p in iter {
            debug_assert_eq!(p.dim, acc.dim);
            acc.t.extend_from_slice(&p.t[1..]);
            acc.y.extend_from_slice(&p.y[p.dim..]);
            acc.dense.extend_from_slice(&p.dense);
            acc.tol = acc.tol.max(p.tol);
        }
        acc
    }

    /// Replaces the final sample, used to close periodic orbits after
    /// verifying the defect; keeps dense output continuous up to that defect.
    fn set_last(&mut self, y: &[f64]) {
        let n = self.t.len();
        let m = self.dim;
        self.y[(n - 1) * m..n * m].copy_from_slice(y);
    }
}

fn rms_error(err: &[f64], y0: &[f64], y1: &[f64], tol: f64) -> f64 {
    let m = err.len();
    let mut acc = 0.0;
    for i in 0..m {
        let sc = tol + tol * y0[i].abs().max(y1[i].abs());
        let e = err[i] / sc;
        acc += e * e;
    }
    (acc / m as f64).sqrt()
}

fn initial_step<R: Rhs>(
    rhs: &mut R,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    dir: f64,
    tol: f64,
    h_max: f64,
) -> Result<f64> {
    let m = y0.len();
    let sc: Vec<f64> = y0.iter().map(|y| tol + tol * y.abs()).collect();
    let norm = |v: &[f64]| -> f64 {
        (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / m as f64).sqrt()
    };
    let d0 = norm(y0);
    let d1 = norm(f0);
    let mut h = if d0 < 1e-10 || d1 < 1e-10 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h = h.min(h_max);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + dir * h * f).collect();
    let mut f1 = vec![0.0; m];
    rhs.eval(t0 + dir * h, &y1, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff) / h;
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 {
        (1e-6f64).max(h * 1e-3)
    } else {
        (0.01 / dm).powf(0.2)
    };
    Ok((100.0 * h).min(h1).min(h_max))
}

/// Adaptive Dormand–Prince integration from `t0` to `t1` (either direction).
pub fn integrate<R: Rhs>(rhs: R, span: [f64; 2], y0: &[f64], tol: f64) -> Result<Trajectory> {
    integrate_with(
        rhs,
        span,
        y0,
        IvpOptions {
            tol,
            ..IvpOptions::default()
        },
    )
}

pub fn integrate_with<R: Rhs>(
    mut rhs: R,
    span: [f64; 2],
    y0: &[f64],
    opts: IvpOptions,
) -> Result<Trajectory> {
    let [t0, t1] = span;
    if t1 == t0 {
        return Err(Error::Validation("integration span has zero length".into()));
    }
    let m = y0.len();
    let dir = (t1 - t0).signum();
    let tol = opts.tol;
    let mut traj = Trajectory {
        dim: m,
        t: vec![t0],
        y: y0.to_vec(),
        dense: Vec::new(),
        tol,
    };
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { t: t0 });
    }
    let mut k1 = vec![0.0; m];
    let mut k2 = vec![0.0; m];
    let mut k3 = vec![0.0; m];
    let mut k4 = vec![0.0; m];
    let mut k5 = vec![0.0; m];
    let mut k6 = vec![0.0; m];
    let mut k7 = vec![0.0; m];
    let mut ys = vec![0.0; m];
    let mut ynew = vec![0.0; m];
    let mut err = vec![0.0; m];
    let mut y = y0.to_vec();
    rhs.eval(t0, &y, &mut k1)?;
    let mut h = initial_step(
        &mut rhs,
        t0,
        &y,
        &k1,
        dir,
        tol,
        opts.h_max.min((t1 - t0).abs()),
    )?;
    let mut t = t0;
    let mut err_old: f64 = 1e-4;
    let mut rejected_last = false;
    let span_len = (t1 - t0).abs();
    for _ in 0..opts.max_steps {
        let remaining = (t1 - t).abs();
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        if h <= 1e-14 * span_len.max(t.abs()).max(1.0) && !last {
            return Err(Error::StepUnderflow { t, h });
        }
        let hs = dir * h;
        for i in 0..m {
            ys[i] = y[i] + hs * A21 * k1[i];
        }
        rhs.eval(t + C2 * hs, &ys, &mut k2)?;
        for i in 0..m {
            ys[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs.eval(t + C3 * hs, &ys, &mut k3)?;
        for i in 0..m {
            ys[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs.eval(t + C4 * hs, &ys, &mut k4)?;
        for i in 0..m {
            ys[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs.eval(t + C5 * hs, &ys, &mut k5)?;
        for i in 0..m {
            ys[i] =
                y[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if last { t1 } else { t + hs };
        rhs.eval(t + hs, &ys, &mut k6)?;
        for i in 0..m {
            ynew[i] =
                y[i] + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs.eval(t_new, &ynew, &mut k7)?;
        for i in 0..m {
            err[i] =
                hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let e = rms_error(&err, &y, &ynew, tol);
        if !e.is_finite() || ynew.iter().any(|v| !v.is_finite()) {
            if h <= 1e-14 * span_len.max(1.0) {
                return Err(Error::NonFinite { t });
            }
            h *= 0.2;
            rejected_last = true;
            continue;
        }
        if e <= 1.0 {
            // dense output coefficients
            let base = traj.dense.len();
            traj.dense.resize(base + 5 * m, 0.0);
            let r = &mut traj.dense[base..];
            for i in 0..m {
                let dy = ynew[i] - y[i];
                let bspl = hs * k1[i] - dy;
                r[i] = y[i];
                r[m + i] = dy;
                r[2 * m + i] = bspl;
                r[3 * m + i] = dy - hs * k7[i] - bspl;
                r[4 * m + i] = hs
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            t = t_new;
            y.copy_from_slice(&ynew);
            k1.copy_from_slice(&k7);
            traj.t.push(t);
            traj.y.extend_from_slice(&y);
            if last {
                return Ok(traj);
            }
            let en = e.max(1e-10);
            let mut fac = 0.9 * en.powf(-0.7 / 5.0) * err_old.powf(0.4 / 5.0);
            fac = fac.clamp(0.2, 10.0);
            if rejected_last {
                fac = fac.min(1.0);
            }
            h = (h * fac).min(opts.h_max);
            err_old = en;
            rejected_last = false;
        } else {
            let fac = (0.9 * e.powf(-0.2)).clamp(0.2, 1.0);
            h *= fac;
            rejected_last = true;
        }
    }
    Err(Error::StepLimit { t })
}

/// Fixed-step Dormand–Prince (fifth-order solution, no error control),
/// returning the final state.
pub fn integrate_fixed<R: Rhs>(
    mut rhs: R,
    span: [f64; 2],
    y0: &[f64],
    steps: usize,
) -> Result<Vec<f64>> {
    let m = y0.len();
    let hs = (span[1] - span[0]) / steps as f64;
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; m]; 6];
    let mut ys = vec![0.0; m];
    for s in 0..steps {
        let t = span[0] + s as f64 * hs;
        rhs.eval(t, &y, &mut k[0])?;
        let stages: [(f64, &[f64]); 5] = [
            (C2, &[A21]),
            (C3, &[A31, A32]),
            (C4, &[A41, A42, A43]),
            (C5, &[A51, A52, A53, A54]),
            (1.0, &[A61, A62, A63, A64, A65]),
        ];
        for (j, (c, a)) in stages.iter().enumerate() {
            for i in 0..m {
                ys[i] = y[i]
                    + hs * a
                        .iter()
                        .enumerate()
                        .map(|(l, al)| al * k[l][i])
                        .sum::<f64>();
            }
            let (_, tail) = k.split_at_mut(j + 1);
            rhs.eval(t + c * hs, &ys, &mut tail[0])?;
        }
        for i in 0..m {
            y[i] += hs
                * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
        }
    }
    Ok(y)
}

/// Vector field with Jacobian, for Newton shooting.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;
    /// `dy = f(t, y)` and row-major `jac = ∂f/∂y`.
    fn eval_jac(&self, t: f64, y: &[f64], dy: &mut [f64], jac: &mut [f64]) -> Result<()>;
}

#[derive(Debug, Clone, Copy)]
pub struct BvpOptions {
    /// Local error target for every IVP sweep.
    pub ivp_tol: f64,
    /// Newton stopping threshold on the matching residual (max norm).
    pub bvp_tol: f64,
    /// Allowed `‖y(2π) − y(0)‖` for pinned solves.
    pub periodicity_tol: f64,
    pub max_newton: usize,
    pub segments: usize,
}

impl Default for BvpOptions {
    fn default() -> Self {
        BvpOptions {
            ivp_tol: 1e-11,
            bvp_tol: 1e-9,
            periodicity_tol: 1e-7,
            max_newton: 25,
            segments: 8,
        }
    }
}

/// Outcome of a periodic solve.
#[derive(Debug, Clone)]
pub struct PeriodicSolution {
    pub trajectory: Trajectory,
    pub newton_iterations: usize,
    /// `‖y(2π) − y(0)‖∞` before closing the orbit.
    pub defect: f64,
}

fn segment_nodes(segments: usize) -> Vec<f64> {
    (0..=segments)
        .map(|k| {
            if k == segments {
                TAU
            } else {
                TAU * k as f64 / segments as f64
            }
        })
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn shoot_segment<V: VectorField>(
    field: &V,
    span: [f64; 2],
    y0: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let m = field.dim();
    let mut aug = vec![0.0; m + m * m];
    aug[..m].copy_from_slice(y0);
    for i in 0..m {
        aug[m + i * m + i] = 1.0;
    }
    let mut jac = vec![0.0; m * m];
    let traj = integrate(
        |t: f64, y: &[f64], dy: &mut [f64]| {
            let (ys, phi) = y.split_at(m);
            let (dys, dphi) = dy.split_at_mut(m);
            field.eval_jac(t, ys, dys, &mut jac)?;
            // dΦ/dt = J Φ, Φ row-major
            for i in 0..m {
                for j in 0..m {
                    let mut acc = 0.0;
                    for l in 0..m {
                        acc += jac[i * m + l] * phi[l * m + j];
                    }
                    dphi[i * m + j] = acc;
                }
            }
            Ok(())
        },
        span,
        &aug,
        tol,
    )?;
    let end = traj.last();
    let phi = DMatrix::from_row_slice(m, m, &end[m..]);
    Ok((end[..m].to_vec(), phi))
}

fn state_only<V: VectorField>(
    field: &V,
    span: [f64; 2],
    y0: &[f64],
    tol: f64,
) -> Result<Trajectory> {
    integrate(
        |t: f64, y: &[f64], dy: &mut [f64]| field.eval(t, y, dy),
        span,
        y0,
        tol,
    )
}

/// Periodic solution of `y′ = f(θ, y)` on `[0, 2π]`.
///
/// With `pinned`, integrates from the given value and only verifies
/// periodicity; otherwise solves the multiple-shooting conditions by damped
/// Newton from `guess`.
pub fn solve_periodic_nonlinear<V: VectorField>(
    field: &V,
    guess: &dyn Fn(f64) -> Vec<f64>,
    pinned: Option<&[f64]>,
    opts: &BvpOptions,
) -> Result<PeriodicSolution> {
    let m = field.dim();
    if let Some(y0) = pinned {
        let mut traj = state_only(field, [0.0, TAU], y0, opts.ivp_tol)?;
        let defect = traj
            .last()
            .iter()
            .zip(traj.first())
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        if !(defect <= opts.periodicity_tol) {
            return Err(Error::Periodicity {
                defect,
                tol: opts.periodicity_tol,
            });
        }
        let first = traj.first().to_vec();
        traj.set_last(&first);
        return Ok(PeriodicSolution {
            trajectory: traj,
            newton_iterations: 0,
            defect,
        });
    }

    let s = opts.segments.max(1);
    let nodes = segment_nodes(s);
    let mut ys: Vec<Vec<f64>> = nodes[..s].iter().map(|&t| guess(t)).collect();
    for y in &ys {
        if y.len() != m {
            return Err(Error::Validation("guess has wrong dimension".into()));
        }
    }
    let residual = |ys: &[Vec<f64>]| -> Result<(Vec<f64>, Vec<DMatrix<f64>>)> {
        let mut g = vec![0.0; s * m];
        let mut mats = Vec::with_capacity(s);
        for k in 0..s {
            let (end, phi) = shoot_segment(field, [nodes[k], nodes[k + 1]], &ys[k], opts.ivp_tol)?;
            let next = &ys[(k + 1) % s];
            for i in 0..m {
                g[k * m + i] = end[i] - next[i];
            }
            mats.push(phi);
        }
        Ok((g, mats))
    };
    let (mut g, mut mats) = residual(&ys)?;
    let mut norm = max_abs(&g);
    let mut iterations = 0;
    while norm > opts.bvp_tol {
        if iterations >= opts.max_newton {
            return Err(Error::NewtonDivergence {
                iterations,
                residual: norm,
            });
        }
        iterations += 1;
        let dim = s * m;
        let mut jmat = DMatrix::zeros(dim, dim);
        for k in 0..s {
            let nk = (k + 1) % s;
            for i in 0..m {
                for j in 0..m {
                    jmat[(k * m + i, k * m + j)] += mats[k][(i, j)];
                }
                jmat[(k * m + i, nk * m + i)] -= 1.0;
            }
        }
        let rhs = -DVector::from_column_slice(&g);
        let delta = linalg::solve(&jmat, &rhs, "shooting Jacobian")?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let trial: Vec<Vec<f64>> = (0..s)
                .map(|k| {
                    (0..m)
                        .map(|i| ys[k][i] + lambda * delta[k * m + i])
                        .collect()
                })
                .collect();
            match residual(&trial) {
                Ok((g_new, mats_new)) => {
                    let n_new = max_abs(&g_new);
                    if n_new < norm || n_new <= opts.bvp_tol {
                        ys = trial;
                        g = g_new;
                        mats = mats_new;
                        norm = n_new;
                        accepted = true;
                        break;
                    }
                }
                Err(e) if e.is_domain() => return Err(e),
                Err(_) => {}
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonDivergence {
                iterations,
                residual: norm,
            });
        }
    }
    let parts = (0..s)
        .map(|k| state_only(field, [nodes[k], nodes[k + 1]], &ys[k], opts.ivp_tol))
        .collect::<Result<Vec<_>>>()?;
    let mut traj = Trajectory::concat(parts);
    let defect = traj
        .last()
        .iter()
        .zip(traj.first())
        .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    let tol = opts.bvp_tol.max(opts.periodicity_tol);
    if !(defect <= tol) {
        return Err(Error::Periodicity { defect, tol });
    }
    let first = traj.first().to_vec();
    traj.set_last(&first);
    Ok(PeriodicSolution {
        trajectory: traj,
        newton_iterations: iterations,
        defect,
    })
}

/// Coefficients `A(θ)` (row-major) and `g(θ)` of `y′ = A y + g`.
pub trait LinearField {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, a: &mut [f64], g: &mut [f64]) -> Result<()>;
}

/// Adapts closures to [`LinearField`].
pub struct LinearFn<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> LinearField for LinearFn<F>
where
    F: Fn(f64, &mut [f64], &mut [f64]) -> Result<()>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, a: &mut [f64], g: &mut [f64]) -> Result<()> {
        (self.f)(t, a, g)
    }
}

fn linear_segment<L: LinearField>(
    field: &L,
    span: [f64; 2],
    tol: f64,
    with_forcing: bool,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let m = field.dim();
    let mut aug = vec![0.0; m * m + m];
    for i in 0..m {
        aug[i * m + i] = 1.0;
    }
    let mut a = vec![0.0; m * m];
    let mut g = vec![0.0; m];
    let traj = integrate(
        |t: f64, y: &[f64], dy: &mut [f64]| {
            field.eval(t, &mut a, &mut g)?;
            let (phi, p) = y.split_at(m * m);
            let (dphi, dp) = dy.split_at_mut(m * m);
            for i in 0..m {
                for j in 0..m {
                    let mut acc = 0.0;
                    for l in 0..m {
                        acc += a[i * m + l] * phi[l * m + j];
                    }
                    dphi[i * m + j] = acc;
                }
                let mut acc = if with_forcing { g[i] } else { 0.0 };
                for l in 0..m {
                    acc += a[i * m + l] * p[l];
                }
                dp[i] = acc;
            }
            Ok(())
        },
        span,
        &aug,
        tol,
    )?;
    let end = traj.last();
    Ok((
        DMatrix::from_row_slice(m, m, &end[..m * m]),
        end[m * m..].to_vec(),
    ))
}

/// Monodromy matrix of `y′ = A(θ) y` over `[0, 2π]`, as the ordered product
/// of segment fundamental matrices.
pub fn monodromy<L: LinearField>(field: &L, opts: &BvpOptions) -> Result<DMatrix<f64>> {
    let s = opts.segments.max(1);
    let nodes = segment_nodes(s);
    let m = field.dim();
    let mut acc = DMatrix::identity(m, m);
    for k in 0..s {
        let (phi, _) = linear_segment(field, [nodes[k], nodes[k + 1]], opts.ivp_tol, false)?;
        acc = phi * acc;
    }
    Ok(acc)
}

/// Unique periodic solution of `y′ = A(θ) y + g(θ)`.
pub fn solve_periodic_linear<L: LinearField>(
    field: &L,
    opts: &BvpOptions,
) -> Result<PeriodicSolution> {
    let m = field.dim();
    let s = opts.segments.max(1);
    let nodes = segment_nodes(s);
    let mut phis = Vec::with_capacity(s);
    let mut ps = Vec::with_capacity(s);
    for k in 0..s {
        let (phi, p) = linear_segment(field, [nodes[k], nodes[k + 1]], opts.ivp_tol, true)?;
        phis.push(phi);
        ps.push(p);
    }
    let mut mono = DMatrix::identity(m, m);
    for phi in &phis {
        mono = phi * mono;
    }
    for mu in linalg::eigenvalues(&mono)? {
        if (mu - 1.0).norm() <= 1e-9 * mu.norm().max(1.0) {
            return Err(Error::Singular(format!(
                "Floquet multiplier {mu} is too close to 1"
            )));
        }
    }
    // block-cyclic system: Φ_k y_k − y_{k+1} = −p_k
    let dim = s * m;
    let mut jmat = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for k in 0..s {
        let nk = (k + 1) % s;
        for i in 0..m {
            for j in 0..m {
                jmat[(k * m + i, k * m + j)] += phis[k][(i, j)];
            }
            jmat[(k * m + i, nk * m + i)] -= 1.0;
            rhs[k * m + i] = -ps[k][i];
        }
    }
    let y = linalg::solve(&jmat, &rhs, "periodic linear system")?;
    let mut a = vec![0.0; m * m];
    let mut g = vec![0.0; m];
    let parts = (0..s)
        .map(|k| {
            let y0: Vec<f64> = y.as_slice()[k * m..(k + 1) * m].to_vec();
            integrate(
                |t: f64, yy: &[f64], dy: &mut [f64]| {
                    field.eval(t, &mut a, &mut g)?;
                    for i in 0..m {
                        let mut acc = g[i];
                        for l in 0..m {
                            acc += a[i * m + l] * yy[l];
                        }
                        dy[i] = acc;
                    }
                    Ok(())
                },
                [nodes[k], nodes[k + 1]],
                &y0,
                opts.ivp_tol,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut traj = Trajectory::concat(parts);
    let y0n = max_abs(traj.first());
    let defect = traj
        .last()
        .iter()
        .zip(traj.first())
        .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
    let tol = 1e-8 * (1.0 + y0n);
    if !(defect <= tol) {
        return Err(Error::Periodicity { defect, tol });
    }
    let first = traj.first().to_vec();
    traj.set_last(&first);
    Ok(PeriodicSolution {
        trajectory: traj,
        newton_iterations: 0,
        defect,
    })
}
