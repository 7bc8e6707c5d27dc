mod common;

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use approx::assert_relative_eq;
use nalgebra::DMatrix;
use patchy_core::odebvp::{
    integrate, monodromy, solve_periodic_linear, solve_periodic_nonlinear, BvpOptions, LinearFn,
    VectorField,
};
use patchy_core::patchy::compute_radial_curve;
use patchy_core::systems::polar_reduce;
use patchy_core::Error;

#[test]
fn forced_scalar_periodic_solution() {
    let field = LinearFn {
        dim: 1,
        f: |t: f64, a: &mut [f64], g: &mut [f64]| {
            a[0] = -1.0;
            g[0] = t.cos();
            Ok(())
        },
    };
    let sol = solve_periodic_linear(&field, &BvpOptions::default()).unwrap();
    for k in 0..=200 {
        let t = TAU * k as f64 / 200.0;
        let exact = 0.5 * (t.cos() + t.sin());
        assert!((sol.trajectory.eval(t)[0] - exact).abs() <= 1e-8, "t = {t}");
    }
}

#[test]
fn constant_monodromy_is_matrix_exponential() {
    // upper-triangular A has a closed-form exponential
    let (a, b, c) = (-0.3, 0.8, 0.1);
    let field = LinearFn {
        dim: 2,
        f: move |_t: f64, out: &mut [f64], g: &mut [f64]| {
            out.copy_from_slice(&[a, b, 0.0, c]);
            g.fill(0.0);
            Ok(())
        },
    };
    let mono = monodromy(&field, &BvpOptions::default()).unwrap();
    let (ea, ec) = ((TAU * a).exp(), (TAU * c).exp());
    let exact = DMatrix::from_row_slice(2, 2, &[ea, b * (ec - ea) / (c - a), 0.0, ec]);
    assert!((&mono - &exact).amax() <= 1e-8, "{mono} vs {exact}");
    // general 3×3 against nalgebra's Padé exponential
    let a3 = DMatrix::from_row_slice(3, 3, &[-0.2, 0.5, 0.0, -0.5, -0.2, 0.3, 0.1, 0.0, -0.4]);
    let entries: Vec<f64> = a3.transpose().iter().copied().collect();
    let field3 = LinearFn {
        dim: 3,
        f: move |_t: f64, out: &mut [f64], g: &mut [f64]| {
            out.copy_from_slice(&entries);
            g.fill(0.0);
            Ok(())
        },
    };
    let mono3 = monodromy(&field3, &BvpOptions::default()).unwrap();
    let exact3 = (&a3 * TAU).exp();
    assert!((&mono3 - &exact3).amax() <= 1e-8);
}

#[test]
fn resonant_linear_problem_is_rejected() {
    let field = LinearFn {
        dim: 1,
        f: |_t: f64, a: &mut [f64], g: &mut [f64]| {
            a[0] = 0.0;
            g[0] = 1.0;
            Ok(())
        },
    };
    assert!(matches!(
        solve_periodic_linear(&field, &BvpOptions::default()),
        Err(Error::Singular(_))
    ));
}

struct Cubic;

impl VectorField for Cubic {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> patchy_core::Result<()> {
        dy[0] = -y[0] - y[0].powi(3) + t.sin();
        Ok(())
    }
    fn eval_jac(
        &self,
        t: f64,
        y: &[f64],
        dy: &mut [f64],
        jac: &mut [f64],
    ) -> patchy_core::Result<()> {
        self.eval(t, y, dy)?;
        jac[0] = -1.0 - 3.0 * y[0] * y[0];
        Ok(())
    }
}

#[test]
fn nonlinear_periodic_orbit_closes() {
    let opts = BvpOptions::default();
    let sol = solve_periodic_nonlinear(&Cubic, &|_| vec![0.0], None, &opts).unwrap();
    let y0 = sol.trajectory.eval(0.0)[0];
    assert_relative_eq!(sol.trajectory.eval(TAU)[0], y0, epsilon = 1e-9);
    // independent check: the orbit from y0 returns to y0
    let again = integrate(
        |t: f64, y: &[f64], dy: &mut [f64]| Cubic.eval(t, y, dy),
        [0.0, TAU],
        &[y0],
        1e-12,
    )
    .unwrap();
    assert_relative_eq!(again.last()[0], y0, epsilon = 1e-8);
}

#[test]
fn duffing_curve_conserves_energy() {
    let a = 0.25;
    let sys = polar_reduce(&common::duffing_scalar(a));
    let curve = compute_radial_curve(&sys, 1.0, 0, 256, &BvpOptions::default()).unwrap();
    let traj = curve.trajectory().unwrap();
    assert_relative_eq!(traj.eval(FRAC_PI_2)[0], 1.0606602, epsilon = 1e-6);
    assert_relative_eq!(traj.eval(PI)[0], 1.0, epsilon = 1e-6);
    let h0 = common::duffing_energy(a, [1.0, 0.0]);
    let mut drift = 0.0f64;
    for k in 0..=1000 {
        let t = TAU * k as f64 / 1000.0;
        let w = sys.to_cartesian(t, traj.eval(t)[0]);
        drift = drift.max((common::duffing_energy(a, w) - h0).abs() / h0);
    }
    assert!(drift <= 1e-8, "relative energy drift {drift:e}");
    for k in 0..64 {
        let t = TAU * k as f64 / 64.0;
        assert_relative_eq!(curve.radius(t), curve.radius(t + TAU), epsilon = 1e-12);
    }
}

#[test]
fn duffing_time_orbit_conserves_energy() {
    let a = 0.25;
    let traj = integrate(
        |_t: f64, w: &[f64], dw: &mut [f64]| {
            dw[0] = w[1];
            dw[1] = -w[0] - a * w[0].powi(3);
            Ok(())
        },
        [0.0, 10.0],
        &[1.0, 0.0],
        1e-12,
    )
    .unwrap();
    let h0 = common::duffing_energy(a, [1.0, 0.0]);
    for i in 0..=traj.steps() {
        let w = traj.sample(i);
        assert!((common::duffing_energy(a, [w[0], w[1]]) - h0).abs() <= 1e-8 * h0);
    }
}
