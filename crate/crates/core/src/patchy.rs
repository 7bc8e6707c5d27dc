//! Annular patchy solutions of the polar center-manifold PDE.
//!
//! Radial curves `r_j(θ)` are periodic orbits of `dr/dθ = r R(θ, r)`. Patch
//! `j` expands the manifold in the offset `σ = r − r_j(θ)`:
//! `Ψ_j(θ, σ) = Σ_i c_i(θ) σ^i`. Since `r_j` is itself an orbit, `Ψ_j`
//! satisfies `∂_θΨ = F(θ, r_j + σ, Ψ) − ∂_σΨ · G(θ, σ)` with
//! `G(θ, σ) = (r_j + σ) R(θ, r_j + σ) − r_j R(θ, r_j)`; the coefficients
//! follow order by order from periodic boundary value problems.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jets::Jet;
use crate::odebvp::{
    solve_periodic_linear, solve_periodic_nonlinear, BvpOptions, LinearFn, Trajectory, VectorField,
};
use crate::seed::{seed_residual_at, SeedPolynomial};
use crate::spline::{PeriodicSpline, DEFAULT_THETA_MESH};
use crate::systems::PolarReducedSystem;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_FD_STEP: f64 = 1e-4;
const SEAM_TOL: f64 = 1e-9;

/// A periodic orbit `θ ↦ r_j(θ)` of the radial equation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialCurve {
    index: usize,
    launch: f64,
    spline: PeriodicSpline,
    #[serde(skip)]
    trajectory: Option<Trajectory>,
}

impl RadialCurve {
    pub fn index(&self) -> usize {
        self.index
    }

    /// `r_j(0)`
    pub fn launch_radius(&self) -> f64 {
        self.launch
    }

    pub fn spline(&self) -> &PeriodicSpline {
        &self.spline
    }

    /// Dense solver output, available on freshly computed curves.
    pub fn trajectory(&self) -> Option<&Trajectory> {
        self.trajectory.as_ref()
    }

    /// Interpolated `r_j(θ)`.
    pub fn radius(&self, theta: f64) -> f64 {
        self.spline.eval_scalar(theta)
    }

    /// `r_j(θ)` from the dense output when present.
    fn radius_exact(&self, theta: f64) -> f64 {
        match &self.trajectory {
            Some(t) => {
                let mut out = [0.0];
                t.eval_into(theta.rem_euclid(TAU).min(t.t_end()), &mut out);
                out[0]
            }
            None => self.radius(theta),
        }
    }

    pub fn min_radius(&self) -> f64 {
        self.spline
            .values()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_radius(&self) -> f64 {
        self.spline
            .values()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn rebuild(&mut self) {
        self.spline.rebuild();
    }
}

/// Solves the radial equation from `r(0) = r_init` and checks periodicity.
pub fn compute_radial_curve(
    sys: &PolarReducedSystem,
    r_init: f64,
    index: usize,
    theta_mesh: usize,
    opts: &BvpOptions,
) -> Result<RadialCurve> {
    if !(r_init > 0.0) || !r_init.is_finite() {
        return Err(Error::Validation(format!(
            "launch radius must be positive, got {r_init}"
        )));
    }
    let field = RadialField { sys };
    let sol = solve_periodic_nonlinear(&field, &|_| vec![r_init], Some(&[r_init]), opts).map_err(
        |e| Error::Curve {
            index,
            source: Box::new(e),
        },
    )?;
    let traj = sol.trajectory;
    let spline = PeriodicSpline::from_fn(theta_mesh, 1, |t| traj.eval(t))?;
    let curve = RadialCurve {
        index,
        launch: r_init,
        spline,
        trajectory: Some(traj),
    };
    if !(curve.min_radius() > 0.0) {
        return Err(Error::Curve {
            index,
            source: Box::new(Error::Validation("radial curve reaches the origin".into())),
        });
    }
    Ok(curve)
}

struct RadialField<'a> {
    sys: &'a PolarReducedSystem,
}

impl VectorField for RadialField<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        dy[0] = self.sys.radial_rhs(t, y[0])?;
        Ok(())
    }

    fn eval_jac(&self, t: f64, y: &[f64], dy: &mut [f64], jac: &mut [f64]) -> Result<()> {
        let j = self.sys.radial_rhs_jet(t, &Jet::variable(0, y[0], 1, 1)?)?;
        dy[0] = j.value();
        jac[0] = j.coeffs()[1];
        Ok(())
    }
}

/// One annulus: Taylor coefficients in `σ = r − r_j(θ)` about its inner curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnulusPatch {
    inner: RadialCurve,
    /// `c_i(θ) = (1/i!) ∂^iΨ/∂σ^i (θ, 0)`, `i = 0..=N`.
    coeffs: Vec<PeriodicSpline>,
    /// Newton iterations of the zeroth-order solve.
    #[serde(default)]
    newton_iterations: usize,
}

impl AnnulusPatch {
    pub fn inner(&self) -> &RadialCurve {
        &self.inner
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coefficients(&self) -> &[PeriodicSpline] {
        &self.coeffs
    }

    pub fn newton_iterations(&self) -> usize {
        self.newton_iterations
    }

    pub fn dim(&self) -> usize {
        self.coeffs[0].dim()
    }

    /// `Σ_i c_i(θ) σ^i`
    pub fn eval_sigma(&self, theta: f64, sigma: f64) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        let mut buf = vec![0.0; n];
        for c in self.coeffs.iter().rev() {
            c.eval_into(theta, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o = *o * sigma + b;
            }
        }
        out
    }

    /// `∂_σ Σ_i c_i(θ) σ^i`
    fn eval_sigma_derivative(&self, theta: f64, sigma: f64) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        let mut buf = vec![0.0; n];
        for (i, c) in self.coeffs.iter().enumerate().skip(1).rev() {
            c.eval_into(theta, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o = *o * sigma + i as f64 * b;
            }
        }
        out
    }

    fn rebuild(&mut self) {
        self.inner.rebuild();
        for c in &mut self.coeffs {
            c.rebuild();
        }
    }
}

/// Warm start for the zeroth-order solve of a patch.
#[derive(Debug, Clone, Copy)]
pub enum PatchGuess<'a> {
    Seed(&'a SeedPolynomial),
    Patch(&'a AnnulusPatch),
}

impl PatchGuess<'_> {
    fn eval(&self, theta: f64, r: f64) -> Vec<f64> {
        match self {
            PatchGuess::Seed(seed) => seed.radial_taylor(theta, r, 0).swap_remove(0),
            PatchGuess::Patch(prev) => prev.eval_sigma(theta, r - prev.inner.radius_exact(theta)),
        }
    }
}

/// Zeroth-order field `dz/dθ = F(θ, r_j(θ), z)`.
struct ZeroOrderField<'a> {
    sys: &'a PolarReducedSystem,
    inner: &'a RadialCurve,
}

impl VectorField for ZeroOrderField<'_> {
    fn dim(&self) -> usize {
        self.sys.dim()
    }

    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let f = self.sys.f_f64(t, self.inner.radius_exact(t), y)?;
        dy.copy_from_slice(&f);
        Ok(())
    }

    fn eval_jac(&self, t: f64, y: &[f64], dy: &mut [f64], jac: &mut [f64]) -> Result<()> {
        let (f, j) = self.sys.f_with_jacobian(t, self.inner.radius_exact(t), y)?;
        dy.copy_from_slice(&f);
        jac.copy_from_slice(&j);
        Ok(())
    }
}

/// Order-`i` data at one angle: `A(θ) − i G₁(θ) I` and `g_i(θ)`.
fn order_coefficients(
    sys: &PolarReducedSystem,
    theta: f64,
    rho: f64,
    lower: &[Vec<f64>],
    i: usize,
    a: &mut [f64],
    g: &mut [f64],
) -> Result<()> {
    let n = sys.dim();
    let (_, jac) = sys.f_with_jacobian(theta, rho, &lower[0])?;
    let sigma = Jet::variable(0, 0.0, i, 1)?;
    let r = sigma.add_scalar(rho);
    let transport = sys
        .radial_rhs_jet(theta, &r)?
        .add_scalar(-sys.radial_rhs(theta, rho)?);
    let g1 = transport.coeffs()[1];
    a.copy_from_slice(&jac);
    for k in 0..n {
        a[k * n + k] -= i as f64 * g1;
    }
    let psi: Vec<Jet> = (0..n)
        .map(|k| {
            let mut c = vec![0.0; i + 1];
            for (m, cm) in lower.iter().enumerate() {
                c[m] = cm[k];
            }
            Jet::from_coeffs(i, 1, c)
        })
        .collect::<Result<_>>()?;
    let f = sys.f_jet(theta, &r, &psi)?;
    for k in 0..n {
        let dpsi = psi[k].differentiate(0)?.lift(1, i)?;
        let rhs = f[k].try_sub(&dpsi.try_mul(&transport)?)?;
        g[k] = rhs.coeffs()[i];
    }
    Ok(())
}

/// Computes the Taylor coefficients `c_0..c_N` of the patch on `inner`.
pub fn compute_patch(
    sys: &PolarReducedSystem,
    inner: &RadialCurve,
    order: usize,
    guess: PatchGuess<'_>,
    theta_mesh: usize,
    opts: &BvpOptions,
) -> Result<AnnulusPatch> {
    let n = sys.dim();
    let annotate = |k: usize| {
        move |e: Error| Error::Patch {
            patch: inner.index,
            order: k,
            source: Box::new(e),
        }
    };
    let field = ZeroOrderField { sys, inner };
    let guess_fn = |t: f64| guess.eval(t, inner.radius_exact(t));
    let zero = solve_periodic_nonlinear(&field, &guess_fn, None, opts).map_err(annotate(0))?;
    let newton_iterations = zero.newton_iterations;
    let mut trajs: Vec<Trajectory> = vec![zero.trajectory];
    for i in 1..=order {
        let lower_trajs = &trajs;
        let lin = LinearFn {
            dim: n,
            f: |t: f64, a: &mut [f64], g: &mut [f64]| -> Result<()> {
                let lower: Vec<Vec<f64>> = lower_trajs.iter().map(|tr| tr.eval(t)).collect();
                order_coefficients(sys, t, inner.radius_exact(t), &lower, i, a, g)
            },
        };
        let sol = solve_periodic_linear(&lin, opts).map_err(annotate(i))?;
        trajs.push(sol.trajectory);
    }
    let coeffs = trajs
        .iter()
        .map(|tr| PeriodicSpline::from_fn(theta_mesh, n, |t| tr.eval(t)))
        .collect::<Result<Vec<_>>>()?;
    Ok(AnnulusPatch {
        inner: inner.clone(),
        coeffs,
        newton_iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub ivp: f64,
    pub bvp: f64,
    pub periodicity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    /// Patch order `N`.
    pub order: usize,
    pub seed_order: usize,
    pub theta_mesh: usize,
    pub orientation: f64,
    pub schedule: Vec<f64>,
    /// Radial extent of the outermost patch beyond its inner curve.
    pub outer_slack: f64,
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
}

/// Which piece of a patchy solution owns a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Seed,
    Patch(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchySolution {
    metadata: Metadata,
    seed: SeedPolynomial,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    patches: Vec<AnnulusPatch>,
}

#[derive(Serialize)]
struct DocumentRef<'a> {
    schema_version: u32,
    #[serde(flatten)]
    solution: &'a PatchySolution,
}

#[derive(Deserialize)]
struct Document {
    schema_version: u32,
    #[serde(flatten)]
    solution: PatchySolution,
}

/// Build options shared by every patch.
#[derive(Debug, Clone, Copy)]
pub struct PatchyOptions {
    pub order: usize,
    pub theta_mesh: usize,
    pub bvp: BvpOptions,
    /// Largest accepted relative seed residual on the inner disc and relative
    /// jump between a new patch and the expansion it continues. `None`
    /// disables both checks.
    pub max_defect: Option<f64>,
}

impl Default for PatchyOptions {
    fn default() -> Self {
        PatchyOptions {
            order: 2,
            theta_mesh: DEFAULT_THETA_MESH,
            bvp: BvpOptions::default(),
            max_defect: Some(DEFAULT_MAX_DEFECT),
        }
    }
}

pub const DEFAULT_MAX_DEFECT: f64 = 0.5;

/// Sup of the seed's pointwise PDE residual over the disc inside `curve`,
/// relative to `max(1, sup |Φ|)`.
pub fn seed_defect(
    sys: &PolarReducedSystem,
    seed: &SeedPolynomial,
    curve: &RadialCurve,
    theta_mesh: usize,
) -> Result<f64> {
    let mut defect = 0.0f64;
    let mut scale = 1.0f64;
    for k in 0..theta_mesh {
        let theta = TAU * k as f64 / theta_mesh as f64;
        let rmax = curve.radius(theta);
        for frac in [0.25, 0.5, 0.75, 1.0] {
            let w = sys.to_cartesian(theta, frac * rmax);
            let res = seed_residual_at(sys.base(), seed, w)?;
            defect = res.iter().fold(defect, |m, x| m.max(x.abs()));
            scale = seed.eval(w).iter().fold(scale, |m, x| m.max(x.abs()));
        }
    }
    Ok(defect / scale)
}

/// Sup over the θ-mesh of the jump between `patch` and the expansion inside
/// it, relative to `max(1, sup |c_0|)`.
pub fn seam_jump(
    sys: &PolarReducedSystem,
    seed: &SeedPolynomial,
    previous: Option<&AnnulusPatch>,
    patch: &AnnulusPatch,
    theta_mesh: usize,
) -> f64 {
    let o = sys.orientation();
    let mut jump = 0.0f64;
    let mut scale = 1.0f64;
    for k in 0..theta_mesh {
        let theta = TAU * k as f64 / theta_mesh as f64;
        let r = patch.inner.radius(theta);
        let outer = patch.eval_sigma(theta, 0.0);
        let inner = match previous {
            Some(p) => p.eval_sigma(theta, r - p.inner.radius(theta)),
            None => seed.eval([r * theta.cos(), o * r * theta.sin()]),
        };
        for (a, b) in outer.iter().zip(&inner) {
            jump = jump.max((a - b).abs());
            scale = scale.max(a.abs());
        }
    }
    jump / scale
}
pub fn uniform_schedule(annuli: usize, thickness: f64) -> Vec<f64> {
    (1..=annuli).map(|j| j as f64 * thickness).collect()
}

/// A build that stopped early, with every completed patch retained.
#[derive(Debug)]
pub struct PartialBuild {
    pub solution: PatchySolution,
    /// Index in the schedule of the annulus that failed.
    pub failed_index: usize,
    pub error: Error,
}

impl std::fmt::Display for PartialBuild {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "annulus {} failed after {} completed patches: {}",
            self.failed_index,
            self.solution.patches.len(),
            self.error
        )
    }
}

impl std::error::Error for PartialBuild {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Runs the full pipeline over `schedule` (launch radii `r_j(0)`).
pub fn build_patchy(
    sys: &PolarReducedSystem,
    seed: &SeedPolynomial,
    schedule: &[f64],
    opts: &PatchyOptions,
) -> std::result::Result<PatchySolution, Box<PartialBuild>> {
    let metadata = |schedule: &[f64]| Metadata {
        order: opts.order,
        seed_order: seed.order(),
        theta_mesh: opts.theta_mesh,
        orientation: sys.orientation(),
        schedule: schedule.to_vec(),
        outer_slack: match schedule.len() {
            0 => 0.0,
            1 => schedule[0],
            k => schedule[k - 1] - schedule[k - 2],
        },
        tolerances: Tolerances {
            ivp: opts.bvp.ivp_tol,
            bvp: opts.bvp.bvp_tol,
            periodicity: opts.bvp.periodicity_tol,
        },
        system: None,
    };
    let fail = |patches: Vec<AnnulusPatch>, j: usize, error: Error| {
        Box::new(PartialBuild {
            solution: PatchySolution {
                metadata: metadata(&schedule[..j]),
                seed: seed.clone(),
                patches,
            },
            failed_index: j,
            error,
        })
    };
    if seed.dim() != sys.dim() || (seed.orientation() - sys.orientation()).abs() > 0.0 {
        return Err(fail(
            Vec::new(),
            0,
            Error::Validation("seed does not belong to this system".into()),
        ));
    }
    for (j, w) in schedule.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(fail(
                Vec::new(),
                j + 1,
                Error::Validation(format!(
                    "schedule is not strictly increasing at entry {}",
                    j + 1
                )),
            ));
        }
    }
    let mut patches: Vec<AnnulusPatch> = Vec::with_capacity(schedule.len());
    for (j, &launch) in schedule.iter().enumerate() {
        let curve = match compute_radial_curve(sys, launch, j, opts.theta_mesh, &opts.bvp) {
            Ok(c) => c,
            Err(e) => return Err(fail(patches, j, e)),
        };
        if let Some(prev) = patches.last() {
            let gap = curve.spline.min_gap(&prev.inner.spline);
            if !(gap > 0.0) {
                return Err(fail(
                    patches,
                    j,
                    Error::Curve {
                        index: j,
                        source: Box::new(Error::Validation(format!(
                            "radial curve is not nested outside its predecessor (gap {gap:e})"
                        ))),
                    },
                ));
            }
        }
        if j == 0 {
            match seed_defect(sys, seed, &curve, opts.theta_mesh) {
                Ok(d) => {
                    log::info!("seed residual on the inner disc {d:.2e}");
                    if let Some(limit) = opts.max_defect {
                        if !(d <= limit) {
                            return Err(fail(patches, 0, Error::SeedDefect { defect: d, limit }));
                        }
                    }
                }
                Err(e) => return Err(fail(patches, 0, e)),
            }
        }
        let guess = match patches.last() {
            Some(p) => PatchGuess::Patch(p),
            None => PatchGuess::Seed(seed),
        };
        match compute_patch(sys, &curve, opts.order, guess, opts.theta_mesh, &opts.bvp) {
            Ok(p) => {
                let jump = seam_jump(sys, seed, patches.last(), &p, opts.theta_mesh);
                log::info!(
                    "annulus {j}: r(0) = {launch}, Newton iterations {}, seam jump {jump:.2e}",
                    p.newton_iterations
                );
                if let Some(limit) = opts.max_defect {
                    if !(jump <= limit) {
                        return Err(fail(
                            patches,
                            j,
                            Error::SeamJump {
                                patch: j,
                                jump,
                                limit,
                            },
                        ));
                    }
                }
                patches.push(p);
            }
            Err(e) => return Err(fail(patches, j, e)),
        }
    }
    Ok(PatchySolution {
        metadata: metadata(schedule),
        seed: seed.clone(),
        patches,
    })
}

impl PatchySolution {
    /// Solution made of the seed alone.
    pub fn seed_only(seed: SeedPolynomial, order: usize) -> Self {
        PatchySolution {
            metadata: Metadata {
                order,
                seed_order: seed.order(),
                theta_mesh: DEFAULT_THETA_MESH,
                orientation: seed.orientation(),
                schedule: Vec::new(),
                outer_slack: 0.0,
                tolerances: Tolerances {
                    ivp: BvpOptions::default().ivp_tol,
                    bvp: BvpOptions::default().bvp_tol,
                    periodicity: BvpOptions::default().periodicity_tol,
                },
                system: None,
            },
            seed,
            patches: Vec::new(),
        }
    }

    pub fn metadata(&self) -> &Metadata {
        &self.metadata
    }

    pub fn set_system_label(&mut self, label: impl Into<String>) {
        self.metadata.system = Some(label.into());
    }

    pub fn seed(&self) -> &SeedPolynomial {
        &self.seed
    }

    pub fn patches(&self) -> &[AnnulusPatch] {
        &self.patches
    }

    pub fn dim(&self) -> usize {
        self.seed.dim()
    }

    pub fn orientation(&self) -> f64 {
        self.metadata.orientation
    }

    /// Outer edge of region `j` at angle `θ` (`None` for the unbounded seed).
    fn outer_edge(&self, region: Region, theta: f64) -> Option<f64> {
        match region {
            Region::Seed => self.patches.first().map(|p| p.inner.radius(theta)),
            Region::Patch(j) => Some(match self.patches.get(j + 1) {
                Some(next) => next.inner.radius(theta),
                None => self.patches[j].inner.radius(theta) + self.metadata.outer_slack,
            }),
        }
    }

    /// Outer boundary of the solved domain at `θ`.
    pub fn outer_radius(&self, theta: f64) -> Option<f64> {
        match self.patches.len() {
            0 => None,
            k => self.outer_edge(Region::Patch(k - 1), theta),
        }
    }

    /// Does `region` claim `(θ, r)` by its own domain predicate?
    fn claims(&self, region: Region, theta: f64, r: f64) -> bool {
        let inner = match region {
            Region::Seed => 0.0,
            Region::Patch(j) => self.patches[j].inner.radius(theta),
        };
        let last = matches!(region, Region::Patch(j) if j + 1 == self.patches.len());
        r >= inner
            && match self.outer_edge(region, theta) {
                None => true,
                Some(o) if last => r <= o,
                Some(o) => r < o,
            }
    }

    /// Every region whose domain contains `(θ, r)`.
    pub fn regions_containing(&self, theta: f64, r: f64) -> Vec<Region> {
        std::iter::once(Region::Seed)
            .chain((0..self.patches.len()).map(Region::Patch))
            .filter(|&g| self.claims(g, theta, r))
            .collect()
    }

    /// Region owning `(θ, r)`.
    pub fn locate(&self, theta: f64, r: f64) -> Result<Region> {
        if !(r >= 0.0) || !theta.is_finite() {
            return Err(Error::Validation(format!(
                "invalid polar point ({theta}, {r})"
            )));
        }
        let k = self.patches.len();
        if k == 0 || r < self.patches[0].inner.radius(theta) {
            return Ok(Region::Seed);
        }
        // first patch whose inner curve lies above r, minus one
        let above = self.patches.partition_point(|p| p.inner.radius(theta) <= r);
        let j = above - 1;
        if j + 1 == k {
            let outer = self
                .outer_edge(Region::Patch(j), theta)
                .unwrap_or(f64::INFINITY);
            if r > outer {
                return Err(Error::OutsideDomain { theta, r, outer });
            }
        }
        Ok(Region::Patch(j))
    }

    /// `ψ̃(θ, r)`
    pub fn evaluate(&self, theta: f64, r: f64) -> Result<Vec<f64>> {
        let theta = theta.rem_euclid(TAU);
        Ok(match self.locate(theta, r)? {
            Region::Seed => self.seed.radial_taylor(theta, r, 0).swap_remove(0),
            Region::Patch(j) => {
                let p = &self.patches[j];
                p.eval_sigma(theta, r - p.inner.radius(theta))
            }
        })
    }

    pub fn to_polar(&self, w: [f64; 2]) -> (f64, f64) {
        let r = w[0].hypot(w[1]);
        ((self.orientation() * w[1]).atan2(w[0]).rem_euclid(TAU), r)
    }

    /// `φ̃(w)` through the polar chart of the solution's orientation.
    pub fn evaluate_cartesian(&self, w: [f64; 2]) -> Result<Vec<f64>> {
        if w == [0.0, 0.0] {
            return Ok(vec![0.0; self.dim()]);
        }
        let (theta, r) = self.to_polar(w);
        self.evaluate(theta, r)
    }

    /// Violation of the polar PDE at `(θ, r)`, with `∂_θ` by central
    /// differences of step `h` in the owning region's parametrization.
    pub fn pde_residual(
        &self,
        sys: &PolarReducedSystem,
        theta: f64,
        r: f64,
        h: f64,
    ) -> Result<f64> {
        let theta = theta.rem_euclid(TAU);
        let region = self.locate(theta, r)?;
        let seam = SEAM_TOL * r.max(1.0);
        let on_edge = |edge: Option<f64>| edge.is_some_and(|e| (r - e).abs() < seam);
        let inner_edge = match region {
            Region::Seed => None,
            Region::Patch(j) => Some(self.patches[j].inner.radius(theta)),
        };
        if on_edge(inner_edge) || on_edge(self.outer_edge(region, theta)) {
            return Err(Error::Seam { theta, r });
        }
        let transport_r = if r > 0.0 {
            sys.radial_rhs(theta, r)?
        } else {
            0.0
        };
        let (value, d_theta, d_radial, transport) = match region {
            Region::Seed => {
                let t = self.seed.radial_taylor(theta, r, 1);
                let plus = self.seed.radial_taylor(theta + h, r, 0).swap_remove(0);
                let minus = self.seed.radial_taylor(theta - h, r, 0).swap_remove(0);
                let dt: Vec<f64> = plus
                    .iter()
                    .zip(&minus)
                    .map(|(a, b)| (a - b) / (2.0 * h))
                    .collect();
                (t[0].clone(), dt, t[1].clone(), transport_r)
            }
            Region::Patch(j) => {
                let p = &self.patches[j];
                let rho = p.inner.radius(theta);
                let sigma = r - rho;
                let plus = p.eval_sigma(theta + h, sigma);
                let minus = p.eval_sigma(theta - h, sigma);
                let dt: Vec<f64> = plus
                    .iter()
                    .zip(&minus)
                    .map(|(a, b)| (a - b) / (2.0 * h))
                    .collect();
                let transport = transport_r - sys.radial_rhs(theta, rho)?;
                (
                    p.eval_sigma(theta, sigma),
                    dt,
                    p.eval_sigma_derivative(theta, sigma),
                    transport,
                )
            }
        };
        let f = sys.f_f64(theta, r, &value)?;
        Ok(d_theta
            .iter()
            .zip(&d_radial)
            .zip(&f)
            .map(|((dt, dr), fk)| dt + dr * transport - fk)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(&DocumentRef {
            schema_version: SCHEMA_VERSION,
            solution: self,
        })
        .map_err(|e| Error::Corrupted(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Corrupted(e.to_string()))?;
        let found = value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Corrupted("missing schema_version".into()))?;
        if found != u64::from(SCHEMA_VERSION) {
            return Err(Error::SchemaVersion {
                found: u32::try_from(found).unwrap_or(u32::MAX),
                expected: SCHEMA_VERSION,
            });
        }
        let doc: Document =
            serde_json::from_value(value).map_err(|e| Error::Corrupted(e.to_string()))?;
        debug_assert_eq!(doc.schema_version, SCHEMA_VERSION);
        let mut sol = doc.solution;
        sol.validate()?;
        for p in &mut sol.patches {
            p.rebuild();
        }
        Ok(sol)
    }

    fn validate(&self) -> Result<()> {
        let n = self.seed.dim();
        for (j, p) in self.patches.iter().enumerate() {
            if p.coeffs.is_empty()
                || p.coeffs.iter().any(|c| c.dim() != n)
                || p.inner.spline.dim() != 1
            {
                return Err(Error::Corrupted(format!(
                    "patch {j} has inconsistent dimensions"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::compute_seed;
    use crate::systems::{polar_reduce, CartesianCenterSystem, CenterSystemSpec};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use std::collections::HashMap;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn scalar_system(zbar: &str, q: &str, rotation: f64) -> CartesianCenterSystem {
        CartesianCenterSystem::from_spec(
            &CenterSystemSpec {
                z_names: vec!["z".into()],
                w_names: ["w1".into(), "w2".into()],
                b: DMatrix::from_element(1, 1, -1.0),
                zbar: vec![zbar.into()],
                p: "0".into(),
                q: q.into(),
                rotation,
                params: [("a".to_string(), 0.25)]
                    .into_iter()
                    .collect::<HashMap<_, _>>(),
            },
            1e-6,
        )
        .unwrap()
    }

    fn quick() -> PatchyOptions {
        PatchyOptions {
            order: 2,
            theta_mesh: 64,
            bvp: BvpOptions::default(),
            max_defect: Some(DEFAULT_MAX_DEFECT),
        }
    }

    #[test]
    fn constant_coefficient_patch() {
        // F(θ, r, z) = −z + r² on circles
        let sys = polar_reduce(&scalar_system("w1^2 + w2^2", "0", 1.0));
        let opts = quick();
        let curve = compute_radial_curve(&sys, 0.5, 0, 64, &opts.bvp).unwrap();
        assert_relative_eq!(curve.radius(1.234), 0.5, epsilon = 1e-12);
        let seed = compute_seed(sys.base(), 2).unwrap();
        let patch = compute_patch(&sys, &curve, 2, PatchGuess::Seed(&seed), 64, &opts.bvp).unwrap();
        for &t in &[0.0, 1.0, 4.0] {
            assert_relative_eq!(patch.coefficients()[0].eval_scalar(t), 0.25, epsilon = 1e-8);
            assert_relative_eq!(patch.coefficients()[1].eval_scalar(t), 1.0, epsilon = 1e-8);
            assert_relative_eq!(patch.coefficients()[2].eval_scalar(t), 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn duffing_radial_curve() {
        let sys = polar_reduce(&scalar_system("w1^2", "-a*w1^3", -1.0));
        let curve = compute_radial_curve(&sys, 1.0, 0, 256, &BvpOptions::default()).unwrap();
        let traj = curve.trajectory().unwrap();
        assert_relative_eq!(traj.eval(FRAC_PI_2)[0], 1.0606602, epsilon = 1e-6);
        assert_relative_eq!(traj.eval(PI)[0], 1.0, epsilon = 1e-6);
        assert_relative_eq!(curve.radius(2.0 * PI), curve.radius(0.0), epsilon = 1e-12);
    }

    #[test]
    fn seed_only_and_tiling() {
        let sys = polar_reduce(&scalar_system("w1^2 + w2^2", "0", 1.0));
        let seed = compute_seed(sys.base(), 2).unwrap();
        let empty = build_patchy(&sys, &seed, &[], &quick()).unwrap();
        assert!(empty.patches().is_empty());
        assert_relative_eq!(empty.evaluate(0.3, 7.0).unwrap()[0], 49.0, epsilon = 1e-12);
        assert!(!empty.to_json().unwrap().contains("patches"));

        let sol = build_patchy(&sys, &seed, &uniform_schedule(3, 0.5), &quick()).unwrap();
        assert_eq!(sol.evaluate(1.0, 0.0).unwrap(), vec![0.0]);
        for &(t, r) in &[(0.2, 0.3), (1.0, 0.75), (3.0, 1.4), (5.0, 1.9)] {
            assert_eq!(sol.regions_containing(t, r).len(), 1);
            assert_relative_eq!(sol.evaluate(t, r).unwrap()[0], r * r, epsilon = 1e-8);
            assert!(sol.pde_residual(&sys, t, r, DEFAULT_FD_STEP).unwrap() < 1e-6);
        }
        assert_relative_eq!(
            sol.evaluate(0.3, 1.2).unwrap()[0],
            sol.evaluate(0.3 + TAU, 1.2).unwrap()[0],
            epsilon = 1e-12
        );
        assert!(matches!(
            sol.evaluate(0.0, 2.1),
            Err(Error::OutsideDomain { .. })
        ));
        assert!(matches!(
            sol.pde_residual(&sys, 0.0, 1.0, DEFAULT_FD_STEP),
            Err(Error::Seam { .. })
        ));
        let back = PatchySolution::from_json(&sol.to_json().unwrap()).unwrap();
        for &(t, r) in &[(0.2, 0.3), (1.0, 0.75), (3.0, 1.4)] {
            assert_eq!(back.evaluate(t, r).unwrap(), sol.evaluate(t, r).unwrap());
        }
        let bad = sol
            .to_json()
            .unwrap()
            .replace("\"schema_version\":1", "\"schema_version\":9");
        assert!(matches!(
            PatchySolution::from_json(&bad),
            Err(Error::SchemaVersion { found: 9, .. })
        ));
    }
}
