mod common;

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, TAU};
use std::sync::OnceLock;

use patchy_core::jets::Jet;
use patchy_core::odebvp::BvpOptions;
use patchy_core::patchy::{
    build_patchy, compute_patch, compute_radial_curve, uniform_schedule, AnnulusPatch, PatchGuess,
    PatchyOptions, PatchySolution, Region, DEFAULT_FD_STEP,
};
use patchy_core::seed::compute_seed;
use patchy_core::systems::{polar_reduce, PolarReducedSystem};
use patchy_core::Error;
use rand::{rngs::StdRng, Rng, SeedableRng};

/// Sup-error of the reference configuration (N = 2, k = 10, ε = 0.5) over
/// the solved part of the [−5, 5]² grid.
const PINNED_SUP_ERROR: f64 = 2.74e-2;

fn system() -> &'static PolarReducedSystem {
    static SYS: OnceLock<PolarReducedSystem> = OnceLock::new();
    SYS.get_or_init(|| polar_reduce(&common::eggcarton()))
}

fn solution() -> &'static PatchySolution {
    static SOL: OnceLock<PatchySolution> = OnceLock::new();
    SOL.get_or_init(|| {
        let sys = system();
        let seed = compute_seed(sys.base(), 2).unwrap();
        build_patchy(
            sys,
            &seed,
            &uniform_schedule(10, 0.5),
            &PatchyOptions::default(),
        )
        .unwrap()
    })
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Midpoint residual of `dc₀/dθ = F(θ, r(θ), c₀)` with central differences.
fn c0_ode_residual(sys: &PolarReducedSystem, p: &AnnulusPatch, mesh: usize) -> f64 {
    let h = 1e-4;
    (0..mesh)
        .map(|k| {
            let t = TAU * (k as f64 + 0.5) / mesh as f64;
            let d: Vec<f64> = p
                .eval_sigma(t + h, 0.0)
                .iter()
                .zip(p.eval_sigma(t - h, 0.0))
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect();
            let f = sys
                .f_f64(t, p.inner().radius(t), &p.eval_sigma(t, 0.0))
                .unwrap();
            sup_diff(&d, &f)
        })
        .fold(0.0, f64::max)
}

#[test]
fn base_coefficient_follows_true_manifold() {
    let sol = solution();
    let c0 = sol.patches()[1].eval_sigma(FRAC_PI_2, 0.0);
    assert!(sup_diff(&c0, &[0.0, 1.0, 0.0]) <= 1e-8, "{c0:?}");
    for p in sol.patches() {
        for k in 0..16 {
            let t = TAU * k as f64 / 16.0;
            let w = system().to_cartesian(t, p.inner().radius(t));
            let tr = common::eggcarton_true(w);
            assert!(sup_diff(&p.eval_sigma(t, 0.0), &tr) <= 1e-7);
        }
    }
}

#[test]
fn evaluation_matches_true_manifold() {
    let sol = solution();
    let tol = 2.0 * PINNED_SUP_ERROR;
    let z = sol.evaluate(FRAC_PI_3, 2.0).unwrap();
    let s3 = 3f64.sqrt();
    assert!(sup_diff(&z, &[1.0, s3, 1f64.sin() * s3.sin()]) <= tol);
    let z = sol.evaluate_cartesian([1.0, 0.0]).unwrap();
    assert!(sup_diff(&z, &[1.0, 0.0, 0.0]) <= tol);
    assert_eq!(sol.evaluate(0.7, 0.0).unwrap(), vec![0.0; 3]);
    assert_eq!(sol.evaluate_cartesian([0.0, 0.0]).unwrap(), vec![0.0; 3]);
    assert!(
        sol.pde_residual(system(), 0.4, 0.0, DEFAULT_FD_STEP)
            .unwrap()
            <= 1e-10
    );
    let a = sol.evaluate(0.3, 3.3).unwrap();
    let b = sol.evaluate(0.3 + TAU, 3.3).unwrap();
    assert!(sup_diff(&a, &b) <= 1e-12);
    assert!(matches!(
        sol.evaluate(0.0, 6.0),
        Err(Error::OutsideDomain { .. })
    ));
}

#[test]
fn residual_within_truncation_estimate() {
    let sol = solution();
    let sys = system();
    let theta = 1.0;
    let inner = sol.patches()[3].inner().radius(theta);
    // C = sup over the annulus of |∂³ψ/∂r³| / 2!, from jets of the true manifold
    let c = (0..=50)
        .map(|k| {
            let r = Jet::variable(0, inner + 0.5 * k as f64 / 50.0, 3, 1).unwrap();
            let w1 = r.scale(theta.cos());
            let w2 = r.scale(theta.sin());
            let psi = w1.sin().try_mul(&w2.sin()).unwrap();
            psi.derivative(&[3]).unwrap().abs() / 2.0
        })
        .fold(0.0, f64::max);
    for sigma in [0.05, 0.1, 0.2, 0.3, 0.45] {
        let res = sol
            .pde_residual(sys, theta, inner + sigma, DEFAULT_FD_STEP)
            .unwrap();
        assert!(res <= 10.0 * c * sigma * sigma, "sigma {sigma}: {res:e}");
    }
    let edge = sol.patches()[4].inner().radius(theta);
    assert!(matches!(
        sol.pde_residual(sys, theta, edge, DEFAULT_FD_STEP),
        Err(Error::Seam { .. })
    ));
}

#[test]
fn base_coefficient_solves_its_ode() {
    let sol = solution();
    let sys = system();
    for j in 0..5 {
        let res = c0_ode_residual(sys, &sol.patches()[j], 256);
        assert!(res <= 1e-6, "patch {j}: {res:e}");
    }
    // the spline derivative error grows like r⁴ h³; refine the mesh at r = 5
    let mesh = 1024;
    let curve = compute_radial_curve(sys, 5.0, 9, mesh, &BvpOptions::default()).unwrap();
    let p = compute_patch(
        sys,
        &curve,
        2,
        PatchGuess::Patch(&sol.patches()[8]),
        mesh,
        &BvpOptions::default(),
    )
    .unwrap();
    let res = c0_ode_residual(sys, &p, mesh);
    assert!(res <= 1e-6, "refined outer patch: {res:e}");
}

#[test]
fn regions_tile_the_domain() {
    let sol = solution();
    let mut rng = StdRng::seed_from_u64(7);
    for _ in 0..1000 {
        let t = rng.gen_range(0.0..TAU);
        let outer = sol.outer_radius(t).unwrap();
        let r = rng.gen_range(0.0..outer);
        let regions = sol.regions_containing(t, r);
        assert_eq!(regions.len(), 1, "theta {t}, r {r}: {regions:?}");
        assert_eq!(sol.locate(t, r).unwrap(), regions[0]);
    }
    assert_eq!(sol.locate(1.0, 0.2).unwrap(), Region::Seed);
    assert_eq!(sol.locate(1.0, 5.2).unwrap(), Region::Patch(9));
}

#[test]
fn serialization_is_lossless() {
    let sol = solution();
    let text = sol.to_json().unwrap();
    let back = PatchySolution::from_json(&text).unwrap();
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..100 {
        let t = rng.gen_range(-TAU..2.0 * TAU);
        let r = rng.gen_range(0.0..5.4);
        let a = sol.evaluate(t, r).unwrap();
        let b = back.evaluate(t, r).unwrap();
        assert!(
            a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()),
            "theta {t}, r {r}"
        );
    }
    assert_eq!(back.to_json().unwrap(), text);
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["schema_version"] = 2.into();
    let bumped = doc.to_string();
    assert!(matches!(
        PatchySolution::from_json(&bumped),
        Err(Error::SchemaVersion { found: 2, .. })
    ));
    assert!(PatchySolution::from_json("{\"schema_version\": 1}").is_err());
}

#[test]
fn truncation_error_has_expected_order() {
    let sys = system();
    let seed = compute_seed(sys.base(), 2).unwrap();
    let sol = build_patchy(sys, &seed, &[0.5, 1.0, 2.0, 3.0], &PatchyOptions::default()).unwrap();
    let p = &sol.patches()[2];
    let depths = [0.025, 0.05, 0.1, 0.2, 0.4];
    let pts: Vec<(f64, f64)> = depths
        .iter()
        .map(|&s| {
            let e = (0..64)
                .map(|k| {
                    let t = TAU * k as f64 / 64.0;
                    let r = p.inner().radius(t) + s;
                    let tr = common::eggcarton_true(sys.to_cartesian(t, r));
                    sup_diff(&p.eval_sigma(t, s), &tr)
                })
                .fold(0.0, f64::max);
            (s.ln(), e.ln())
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!(slope >= 2.5, "log-log slope {slope}");
}

#[test]
fn warm_starts_improve_with_thinner_annuli() {
    let sys = system();
    let seed = compute_seed(sys.base(), 2).unwrap();
    let jump = |eps: f64| {
        let k = (2.0 / eps).round() as usize;
        let sol = build_patchy(
            sys,
            &seed,
            &uniform_schedule(k, eps),
            &PatchyOptions::default(),
        )
        .unwrap();
        let ps = sol.patches();
        (1..ps.len())
            .map(|j| {
                (0..32)
                    .map(|m| {
                        let t = TAU * m as f64 / 32.0;
                        sup_diff(&ps[j].eval_sigma(t, 0.0), &ps[j - 1].eval_sigma(t, 0.0))
                    })
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    };
    let coarse = jump(0.5);
    let fine = jump(0.25);
    assert!(fine < 0.75 * coarse, "coarse {coarse:e}, fine {fine:e}");
}

#[test]
fn oversized_first_annulus_is_reported() {
    let sys = system();
    let seed = compute_seed(sys.base(), 2).unwrap();
    let err = build_patchy(sys, &seed, &[4.0, 5.0], &PatchyOptions::default()).unwrap_err();
    assert_eq!(err.failed_index, 0);
    assert!(err.solution.patches().is_empty());
    assert!(matches!(err.error, Error::SeedDefect { .. }));
}
