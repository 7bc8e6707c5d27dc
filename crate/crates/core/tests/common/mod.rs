#![allow(dead_code)]

use std::collections::HashMap;

use nalgebra::DMatrix;
use patchy_core::systems::{CartesianCenterSystem, CenterSystemSpec};

/// `ż = Bz + Z̄(w, z)` obtained from a linear system by the change of
/// coordinates whose center manifold is `z = (w₁, w₂, ρ(w₁, w₂))`.
/// `rho`, `rho1`, `rho2` are expressions in `z1, z2`.
pub fn graph_system(rho: &str, rho1: &str, rho2: &str) -> CartesianCenterSystem {
    let z1dot = "(1.5*z1 + 0.5*z2 - 1.5*w1 - 1.5*w2)";
    let z2dot = format!("(-1.5*z1 - 0.5*z2 - 6*z3 + 6*{rho} + 2.5*w1 + 0.5*w2)");
    CartesianCenterSystem::from_spec(
        &CenterSystemSpec {
            z_names: vec!["z1".into(), "z2".into(), "z3".into()],
            w_names: ["w1".into(), "w2".into()],
            b: DMatrix::from_row_slice(
                3,
                3,
                &[1.5, 0.5, 0.0, -1.5, -0.5, -6.0, 5.0 / 6.0, 1.0 / 6.0, -1.0],
            ),
            zbar: vec![
                "-1.5*w1 - 1.5*w2".into(),
                format!("6*{rho} + 2.5*w1 + 0.5*w2"),
                format!("{rho} - 5/6*w1 - w2/6 + {rho1}*{z1dot} + {rho2}*{z2dot}"),
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

pub fn eggcarton() -> CartesianCenterSystem {
    graph_system(
        "(sin(z1)*sin(z2))",
        "(cos(z1)*sin(z2))",
        "(sin(z1)*cos(z2))",
    )
}

pub fn eggcarton_true(w: [f64; 2]) -> [f64; 3] {
    [w[0], w[1], w[0].sin() * w[1].sin()]
}

pub fn volcano() -> CartesianCenterSystem {
    let q = "(z1^2 + z2^2)";
    let d = format!("(2*(cos({q}) - sin({q}))*exp(1 - {q}))");
    graph_system(
        &format!("(sin({q})*exp(1 - {q}))"),
        &format!("(z1*{d})"),
        &format!("(z2*{d})"),
    )
}

pub fn volcano_true(w: [f64; 2]) -> [f64; 3] {
    let q = w[0] * w[0] + w[1] * w[1];
    [w[0], w[1], q.sin() * (1.0 - q).exp()]
}

/// Scalar `ż = −z + w₁²` driven by the Duffing exosystem
/// `ẇ₁ = w₂, ẇ₂ = −w₁ − a w₁³`.
pub fn duffing_scalar(a: f64) -> CartesianCenterSystem {
    CartesianCenterSystem::from_spec(
        &CenterSystemSpec {
            z_names: vec!["z".into()],
            w_names: ["w1".into(), "w2".into()],
            b: DMatrix::from_element(1, 1, -1.0),
            zbar: vec!["w1^2".into()],
            p: "0".into(),
            q: "-a*w1^3".into(),
            rotation: -1.0,
            params: HashMap::from([("a".to_string(), a)]),
        },
        1e-6,
    )
    .unwrap()
}

pub fn duffing_energy(a: f64, w: [f64; 2]) -> f64 {
    0.5 * w[1] * w[1] + 0.5 * w[0] * w[0] + 0.25 * a * w[0].powi(4)
}

/// Linear benchmark with center manifold
/// `z = (−w₁/3, −w₁/2 − w₂/6, −w₁/2 − w₂/6)`.
pub fn linear_example() -> CartesianCenterSystem {
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

pub fn linear_example_true(w: [f64; 2]) -> [f64; 3] {
    let b = -w[0] / 2.0 - w[1] / 6.0;
    [-w[0] / 3.0, b, b]
}

/// Cart–pendulum in normal coordinates tracking the Duffing oscillator,
/// `y = ξ₁ + p(w)` with `p = −w₁`.
pub fn pendulum_spec() -> patchy_core::systems::PlantSpec {
    patchy_core::systems::PlantSpec {
        z_names: vec!["z1".into(), "z2".into()],
        xi_names: vec!["xi1".into(), "xi2".into()],
        w_names: ["w1".into(), "w2".into()],
        f0: vec![
            "z2 - xi2/l*cos(z1)".into(),
            "g/l*sin(z1) - xi2/l*sin(z1)*(z2 - xi2/l*cos(z1))".into(),
        ],
        a: "1".into(),
        b: "0".into(),
        s: ["w2".into(), "-w1 - a*w1^3".into()],
        p: "-w1".into(),
        params: HashMap::from([
            ("g".to_string(), 10.0),
            ("l".to_string(), 1.0 / 3.0),
            ("a".to_string(), 0.25),
        ]),
    }
}
