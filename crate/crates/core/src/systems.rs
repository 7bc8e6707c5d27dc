//! System models: the Cartesian center-manifold form, plants in normal form,
//! the polar time-eliminated reduction, and the Lie-derivative machinery for
//! the output-zeroing map and feedforward.

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::TAU;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expr::{parse, CompiledExpr, Expr};
use crate::jets::Jet;
use crate::linalg::check_hyperbolic;

pub const DEFAULT_RATE_FLOOR: f64 = 1e-1;
const VANISH_TOL: f64 = 1e-9;
/// Below this radius the `1/r` factors of the polar reduction are
/// removed through a power series in `r` instead of jet division.
const SERIES_RADIUS: f64 = 1e-2;
const SERIES_EXTRA: usize = 16;

fn check_names(what: &str, ast: &Expr, vars: &[&str], params: &HashMap<String, f64>) -> Result<()> {
    for name in ast.free_names() {
        if !vars.contains(&name.as_str()) && !params.contains_key(&name) && name != "pi" {
            return Err(Error::Validation(format!(
                "{what}: name `{name}` is neither a declared variable nor a parameter"
            )));
        }
    }
    Ok(())
}

fn compile_checked(
    what: &str,
    src: &str,
    vars: &[&str],
    params: &HashMap<String, f64>,
) -> Result<CompiledExpr> {
    let ast = parse(src)?;
    check_names(what, &ast, vars, params)?;
    CompiledExpr::compile(&ast, vars, params)
}

fn distinct_names(groups: &[&[String]], params: &HashMap<String, f64>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for name in groups.iter().flat_map(|g| g.iter()) {
        if !seen.insert(name.clone()) {
            return Err(Error::Validation(format!(
                "variable `{name}` declared twice"
            )));
        }
        if params.contains_key(name) {
            return Err(Error::Validation(format!(
                "`{name}` is declared both as a variable and a parameter"
            )));
        }
    }
    Ok(())
}

fn jet_args(values: &[f64], order: usize) -> Result<Vec<Jet>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| Jet::variable(i, v, order, values.len()))
        .collect()
}

/// Planar exosystem `ẇ = s(w)` whose linear part is `ω J w` with
/// `J w = (−w₂, w₁)` and `ω = ±1`.
#[derive(Debug, Clone)]
pub struct Exosystem {
    omega: f64,
    s: [CompiledExpr; 2],
    names: [String; 2],
}

impl Exosystem {
    /// From the full vector field; the rotation sign is read off the
    /// linearization at the origin.
    pub fn from_vector_field(
        s: [&str; 2],
        names: [String; 2],
        params: &HashMap<String, f64>,
    ) -> Result<Self> {
        let vars = [names[0].as_str(), names[1].as_str()];
        let s = [
            compile_checked("s[0]", s[0], &vars, params)?,
            compile_checked("s[1]", s[1], &vars, params)?,
        ];
        let x = jet_args(&[0.0, 0.0], 1)?;
        let s0 = s[0].eval_jet(&x)?;
        let s1 = s[1].eval_jet(&x)?;
        let (a, b, c, d) = (
            s0.coeffs()[1],
            s0.coeffs()[2],
            s1.coeffs()[1],
            s1.coeffs()[2],
        );
        if s0.value().abs() > VANISH_TOL || s1.value().abs() > VANISH_TOL {
            return Err(Error::Validation(
                "exosystem does not vanish at w = 0".into(),
            ));
        }
        let omega = c;
        let rotation_ok = a.abs() <= VANISH_TOL
            && d.abs() <= VANISH_TOL
            && (b + omega).abs() <= VANISH_TOL
            && (omega.abs() - 1.0).abs() <= VANISH_TOL;
        if !rotation_ok {
            return Err(Error::Validation(format!(
                "exosystem linear part [[{a}, {b}], [{c}, {d}]] is not a unit rotation"
            )));
        }
        Ok(Exosystem {
            omega: omega.signum(),
            s,
            names,
        })
    }

    /// From the nonlinear parts: `ẇ₁ = −ω w₂ + P`, `ẇ₂ = ω w₁ + Q`.
    pub fn from_rotation(
        omega: f64,
        p: &str,
        q: &str,
        names: [String; 2],
        params: &HashMap<String, f64>,
    ) -> Result<Self> {
        if (omega.abs() - 1.0).abs() > 0.0 {
            return Err(Error::Validation(format!(
                "exosystem rotation must be +1 or -1, got {omega}"
            )));
        }
        let vars = [names[0].as_str(), names[1].as_str()];
        for (what, src) in [("P", p), ("Q", q)] {
            let ast = parse(src)?;
            check_names(what, &ast, &vars, params)?;
            let c = CompiledExpr::compile(&ast, &vars, params)?;
            let j = c.eval_jet(&jet_args(&[0.0, 0.0], 1)?)?;
            if j.coeffs().iter().any(|v| v.abs() > VANISH_TOL) {
                return Err(Error::Validation(format!(
                    "{what} must vanish with its first derivatives at w = 0"
                )));
            }
        }
        let s1 = format!("{} * {} + ({p})", -omega, names[1]);
        let s2 = format!("{} * {} + ({q})", omega, names[0]);
        Self::from_vector_field([&s1, &s2], names, params)
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn names(&self) -> &[String; 2] {
        &self.names
    }

    pub fn eval(&self, w: [f64; 2]) -> [f64; 2] {
        [self.s[0].eval_f64(&w), self.s[1].eval_f64(&w)]
    }

    pub fn eval_jet(&self, w: &[Jet]) -> Result<[Jet; 2]> {
        Ok([self.s[0].eval_jet(w)?, self.s[1].eval_jet(w)?])
    }

    /// `s(w) − ω J w`
    pub fn nonlinear_jet(&self, w: &[Jet]) -> Result<[Jet; 2]> {
        let [a, b] = self.eval_jet(w)?;
        Ok([
            a.try_add(&w[1].scale(self.omega))?,
            b.try_sub(&w[0].scale(self.omega))?,
        ])
    }

    pub(crate) fn fields(&self) -> &[CompiledExpr; 2] {
        &self.s
    }
}

/// Iterated Lie derivatives `L_s^k p` of a scalar function along the
/// exosystem, evaluated exactly on jet arguments.
#[derive(Debug, Clone)]
pub struct LieChain {
    s: [CompiledExpr; 2],
    p: CompiledExpr,
}

impl LieChain {
    pub fn new(exo: &Exosystem, p: CompiledExpr) -> Self {
        LieChain {
            s: exo.fields().clone(),
            p,
        }
    }

    /// `[L_s^0 p, …, L_s^kmax p]` composed with the jets `w`.
    ///
    /// Each level is expanded about the base point `w.value()` to the order
    /// it needs, differentiated there, and finally substituted with the
    /// perturbation part of `w`.
    pub fn levels_jet(&self, w: &[Jet], kmax: usize) -> Result<Vec<Jet>> {
        if w.len() != 2 {
            return Err(Error::JetRange("Lie chain needs two arguments".into()));
        }
        let k = w[0].order();
        let base = [w[0].value(), w[1].value()];
        let x = jet_args(&base, k + kmax)?;
        let s = [self.s[0].eval_jet(&x)?, self.s[1].eval_jet(&x)?];
        let mut level = self.p.eval_jet(&x)?;
        let mut out = Vec::with_capacity(kmax + 1);
        for i in 0..=kmax {
            out.push(level.truncate(k)?.compose(w)?);
            if i == kmax {
                break;
            }
            let d0 = level.differentiate(0)?;
            let d1 = level.differentiate(1)?;
            let ord = d0.order();
            level = d0
                .try_mul(&s[0].truncate(ord)?)?
                .try_add(&d1.try_mul(&s[1].truncate(ord)?)?)?;
        }
        Ok(out)
    }

    pub fn levels_at(&self, w: [f64; 2], kmax: usize) -> Result<Vec<f64>> {
        let x = [Jet::constant(w[0], 0, 1)?, Jet::constant(w[1], 0, 1)?];
        Ok(self
            .levels_jet(&x, kmax)?
            .into_iter()
            .map(|j| j.value())
            .collect())
    }

    /// `L_s^k p(w)`
    pub fn eval(&self, w: [f64; 2], k: usize) -> Result<f64> {
        Ok(self.levels_at(w, k)?[k])
    }
}

/// `L_s^k p` as a standalone evaluator.
pub fn lie_derivative_chain(
    s: [&str; 2],
    p: &str,
    names: [String; 2],
    params: &HashMap<String, f64>,
) -> Result<LieChain> {
    let exo = Exosystem::from_vector_field(s, names.clone(), params)?;
    let vars = [names[0].as_str(), names[1].as_str()];
    let p = compile_checked("p", p, &vars, params)?;
    Ok(LieChain::new(&exo, p))
}

/// Definition data for a system already in center-manifold form.
#[derive(Debug, Clone)]
pub struct CenterSystemSpec {
    pub z_names: Vec<String>,
    pub w_names: [String; 2],
    pub b: DMatrix<f64>,
    pub zbar: Vec<String>,
    pub p: String,
    pub q: String,
    pub rotation: f64,
    pub params: HashMap<String, f64>,
}

/// Definition data for a plant in normal form with relative degree
/// `xi_names.len()`: `ξ̇ᵢ = ξᵢ₊₁`, `ξ̇_r = b + a u`, `ż = f₀(z, ξ)`.
#[derive(Debug, Clone)]
pub struct PlantSpec {
    pub z_names: Vec<String>,
    pub xi_names: Vec<String>,
    pub w_names: [String; 2],
    pub f0: Vec<String>,
    pub a: String,
    pub b: String,
    pub s: [String; 2],
    pub p: String,
    pub params: HashMap<String, f64>,
}

#[derive(Debug, Clone)]
enum ZModel {
    /// Z̄ over slots `(w₁, w₂, z…)`
    Direct(Vec<CompiledExpr>),
    /// f₀ over slots `(z…, ξ…)` with `ξ = φ(w)`
    ZeroDynamics {
        f0: Vec<CompiledExpr>,
        chain: LieChain,
        r: usize,
    },
}

/// `ż = Bz + Z̄(w, z)` coupled to a planar exosystem.
#[derive(Debug, Clone)]
pub struct CartesianCenterSystem {
    n: usize,
    b: DMatrix<f64>,
    model: ZModel,
    exo: Exosystem,
    z_names: Vec<String>,
    hyperbolicity: f64,
}

impl CartesianCenterSystem {
    pub fn from_spec(spec: &CenterSystemSpec, hyperbolicity_tol: f64) -> Result<Self> {
        let n = spec.z_names.len();
        if n == 0 {
            return Err(Error::Validation(
                "at least one z variable is required".into(),
            ));
        }
        distinct_names(&[&spec.z_names, &spec.w_names[..]], &spec.params)?;
        if spec.b.nrows() != n || spec.b.ncols() != n {
            return Err(Error::Validation(format!(
                "B is {}x{} but {n} z variables are declared",
                spec.b.nrows(),
                spec.b.ncols()
            )));
        }
        if spec.zbar.len() != n {
            return Err(Error::Validation(format!(
                "{} Zbar expressions for {n} z variables",
                spec.zbar.len()
            )));
        }
        let exo = Exosystem::from_rotation(
            spec.rotation,
            &spec.p,
            &spec.q,
            spec.w_names.clone(),
            &spec.params,
        )?;
        let mut vars: Vec<&str> = spec.w_names.iter().map(String::as_str).collect();
        vars.extend(spec.z_names.iter().map(String::as_str));
        let zbar = spec
            .zbar
            .iter()
            .enumerate()
            .map(|(i, src)| compile_checked(&format!("Zbar[{i}]"), src, &vars, &spec.params))
            .collect::<Result<Vec<_>>>()?;
        let sys = Self::assemble(
            n,
            spec.b.clone(),
            ZModel::Direct(zbar),
            exo,
            spec.z_names.clone(),
            hyperbolicity_tol,
        )?;
        // Z̄ must vanish with vanishing z-derivatives at the origin
        let x = jet_args(&vec![0.0; 2 + n], 1)?;
        if let ZModel::Direct(zbar) = &sys.model {
            for (i, e) in zbar.iter().enumerate() {
                let j = e.eval_jet(&x)?;
                let bad = j.value().abs() > VANISH_TOL
                    || j.coeffs()[3..].iter().any(|c| c.abs() > VANISH_TOL);
                if bad {
                    return Err(Error::Validation(format!(
                        "Zbar[{i}] must vanish with vanishing z-derivatives at the origin"
                    )));
                }
            }
        }
        Ok(sys)
    }

    fn assemble(
        n: usize,
        b: DMatrix<f64>,
        model: ZModel,
        exo: Exosystem,
        z_names: Vec<String>,
        hyperbolicity_tol: f64,
    ) -> Result<Self> {
        let hyperbolicity = check_hyperbolic(&b, hyperbolicity_tol)?;
        Ok(CartesianCenterSystem {
            n,
            b,
            model,
            exo,
            z_names,
            hyperbolicity,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn exosystem(&self) -> &Exosystem {
        &self.exo
    }

    pub fn z_names(&self) -> &[String] {
        &self.z_names
    }

    /// Minimum |Re λ(B)| found during validation.
    pub fn hyperbolicity_margin(&self) -> f64 {
        self.hyperbolicity
    }

    /// `Bz + Z̄(w, z)` on jets of one shape.
    pub fn f_jet(&self, w: &[Jet], z: &[Jet]) -> Result<Vec<Jet>> {
        match &self.model {
            ZModel::Direct(zbar) => {
                let mut args: Vec<Jet> = Vec::with_capacity(2 + self.n);
                args.extend_from_slice(w);
                args.extend_from_slice(z);
                let mut out = Vec::with_capacity(self.n);
                for (i, e) in zbar.iter().enumerate() {
                    let mut v = e.eval_jet(&args)?;
                    for (j, zj) in z.iter().enumerate() {
                        let bij = self.b[(i, j)];
                        if bij != 0.0 {
                            v.axpy(bij, zj)?;
                        }
                    }
                    out.push(v);
                }
                Ok(out)
            }
            ZModel::ZeroDynamics { f0, chain, r } => {
                let levels = chain.levels_jet(w, r - 1)?;
                let mut args: Vec<Jet> = z.to_vec();
                args.extend(levels.into_iter().map(|l| l.neg()));
                f0.iter().map(|e| e.eval_jet(&args)).collect()
            }
        }
    }

    /// `Z̄(w, z)`
    pub fn zbar_jet(&self, w: &[Jet], z: &[Jet]) -> Result<Vec<Jet>> {
        let mut f = self.f_jet(w, z)?;
        for (i, fi) in f.iter_mut().enumerate() {
            for (j, zj) in z.iter().enumerate() {
                let bij = self.b[(i, j)];
                if bij != 0.0 {
                    fi.axpy(-bij, zj)?;
                }
            }
        }
        Ok(f)
    }

    pub fn f_f64(&self, w: [f64; 2], z: &[f64]) -> Result<Vec<f64>> {
        match &self.model {
            ZModel::Direct(zbar) => {
                let mut args = Vec::with_capacity(2 + self.n);
                args.extend_from_slice(&w);
                args.extend_from_slice(z);
                Ok((0..self.n)
                    .map(|i| {
                        let mut v = zbar[i].eval_f64(&args);
                        for (j, zj) in z.iter().enumerate() {
                            v += self.b[(i, j)] * zj;
                        }
                        v
                    })
                    .collect())
            }
            ZModel::ZeroDynamics { f0, chain, r } => {
                let levels = chain.levels_at(w, r - 1)?;
                let mut args = z.to_vec();
                args.extend(levels.into_iter().map(|l| -l));
                Ok(f0.iter().map(|e| e.eval_f64(&args)).collect())
            }
        }
    }
}

/// Plant in normal form with a planar exosystem and output offset `p(w)`.
#[derive(Debug, Clone)]
pub struct PlantNormalForm {
    z_names: Vec<String>,
    xi_names: Vec<String>,
    f0: Vec<CompiledExpr>,
    a: CompiledExpr,
    b: CompiledExpr,
    exo: Exosystem,
    chain: LieChain,
}

impl PlantNormalForm {
    pub fn from_spec(spec: &PlantSpec) -> Result<Self> {
        let r = spec.xi_names.len();
        if r == 0 {
            return Err(Error::Validation("relative degree must be positive".into()));
        }
        if spec.f0.len() != spec.z_names.len() {
            return Err(Error::Validation(format!(
                "{} f0 expressions for {} z variables",
                spec.f0.len(),
                spec.z_names.len()
            )));
        }
        distinct_names(
            &[&spec.z_names, &spec.xi_names, &spec.w_names[..]],
            &spec.params,
        )?;
        let exo = Exosystem::from_vector_field(
            [&spec.s[0], &spec.s[1]],
            spec.w_names.clone(),
            &spec.params,
        )?;
        let wv: Vec<&str> = spec.w_names.iter().map(String::as_str).collect();
        let p = compile_checked("p", &spec.p, &wv, &spec.params)?;
        if p.eval_f64(&[0.0, 0.0]).abs() > VANISH_TOL {
            return Err(Error::Validation("p must vanish at w = 0".into()));
        }
        let mut zx: Vec<&str> = spec.z_names.iter().map(String::as_str).collect();
        zx.extend(spec.xi_names.iter().map(String::as_str));
        let f0 = spec
            .f0
            .iter()
            .enumerate()
            .map(|(i, src)| compile_checked(&format!("f0[{i}]"), src, &zx, &spec.params))
            .collect::<Result<Vec<_>>>()?;
        let a = compile_checked("a", &spec.a, &zx, &spec.params)?;
        let b = compile_checked("b", &spec.b, &zx, &spec.params)?;
        let origin = vec![0.0; zx.len()];
        let a0 = a.eval_f64(&origin);
        if a0.abs() <= VANISH_TOL || !a0.is_finite() {
            return Err(Error::InputDegeneracy(a0));
        }
        if f0.iter().any(|e| e.eval_f64(&origin).abs() > VANISH_TOL)
            || b.eval_f64(&origin).abs() > VANISH_TOL
        {
            return Err(Error::Validation(
                "f0 and b must vanish at the origin".into(),
            ));
        }
        Ok(PlantNormalForm {
            z_names: spec.z_names.clone(),
            xi_names: spec.xi_names.clone(),
            f0,
            a,
            b,
            chain: LieChain::new(&exo, p),
            exo,
        })
    }

    pub fn relative_degree(&self) -> usize {
        self.xi_names.len()
    }

    pub fn z_dim(&self) -> usize {
        self.z_names.len()
    }

    /// Dimension of the full `(z, ξ)` state.
    pub fn state_dim(&self) -> usize {
        self.z_names.len() + self.xi_names.len()
    }

    pub fn z_names(&self) -> &[String] {
        &self.z_names
    }

    pub fn xi_names(&self) -> &[String] {
        &self.xi_names
    }

    pub fn exosystem(&self) -> &Exosystem {
        &self.exo
    }

    pub fn chain(&self) -> &LieChain {
        &self.chain
    }

    pub fn p(&self, w: [f64; 2]) -> Result<f64> {
        self.chain.eval(w, 0)
    }

    /// Zero-dynamics center system `ż = f₀(z, φ(w))`.
    pub fn center_system(&self, hyperbolicity_tol: f64) -> Result<CartesianCenterSystem> {
        let n = self.z_dim();
        let r = self.relative_degree();
        let mut vals = vec![0.0; n + r];
        vals.truncate(n + r);
        let x = jet_args(&vals, 1)?;
        let mut bmat = DMatrix::zeros(n, n);
        for (i, e) in self.f0.iter().enumerate() {
            let j = e.eval_jet(&x)?;
            for k in 0..n {
                bmat[(i, k)] = j.coeffs()[1 + k];
            }
        }
        CartesianCenterSystem::assemble(
            n,
            bmat,
            ZModel::ZeroDynamics {
                f0: self.f0.clone(),
                chain: self.chain.clone(),
                r,
            },
            self.exo.clone(),
            self.z_names.clone(),
            hyperbolicity_tol,
        )
    }

    /// `φ(w) = (−L_s^0 p, …, −L_s^{r−1} p)`
    pub fn varphi(&self, w: [f64; 2]) -> Result<Vec<f64>> {
        Ok(self
            .chain
            .levels_at(w, self.relative_degree() - 1)?
            .into_iter()
            .map(|v| -v)
            .collect())
    }

    /// Right-hand side of the `(z, ξ)` plant for input `u`.
    pub fn dynamics(&self, state: &[f64], u: f64) -> Vec<f64> {
        let n = self.z_dim();
        let r = self.relative_degree();
        let mut out: Vec<f64> = self.f0.iter().map(|e| e.eval_f64(state)).collect();
        for i in 0..r - 1 {
            out.push(state[n + i + 1]);
        }
        out.push(self.b.eval_f64(state) + self.a.eval_f64(state) * u);
        out
    }

    /// Linearization `(A, B)` of the `(z, ξ)` plant at the origin.
    pub fn linearization(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let n = self.z_dim();
        let r = self.relative_degree();
        let dim = n + r;
        let x = jet_args(&vec![0.0; dim], 1)?;
        let mut a = DMatrix::zeros(dim, dim);
        for (i, e) in self.f0.iter().enumerate() {
            let j = e.eval_jet(&x)?;
            for k in 0..dim {
                a[(i, k)] = j.coeffs()[1 + k];
            }
        }
        for i in 0..r - 1 {
            a[(n + i, n + i + 1)] = 1.0;
        }
        let bj = self.b.eval_jet(&x)?;
        for k in 0..dim {
            a[(dim - 1, k)] = bj.coeffs()[1 + k];
        }
        let mut bin = DMatrix::zeros(dim, 1);
        bin[(dim - 1, 0)] = self.a.eval_f64(&vec![0.0; dim]);
        Ok((a, bin))
    }

    /// `u_e = −(b(z,ξ) + L_s^r p(w)) / a(z,ξ)`
    pub fn feedforward_ue(&self, state: &[f64], w: [f64; 2]) -> Result<f64> {
        let a = self.a.eval_f64(state);
        if a.abs() <= 1e-12 || !a.is_finite() {
            return Err(Error::InputDegeneracy(a));
        }
        let lr = self.chain.eval(w, self.relative_degree())?;
        Ok(-(self.b.eval_f64(state) + lr) / a)
    }
}

/// Time-eliminated polar form `dr/dθ = r R(θ, r)`, `dz/dθ = f(θ, r, z)`.
///
/// With rotation sign `o`, points are `w = r (cos θ, o sin θ)` so that the
/// reduced angle always advances.
#[derive(Debug, Clone)]
pub struct PolarReducedSystem {
    base: CartesianCenterSystem,
    orientation: f64,
    rate_floor: f64,
}

/// Numerator pieces of the polar rates for one `(θ, r)` jet.
struct Rates {
    rhat: Jet,
    thetahat: Jet,
}

pub fn polar_reduce(sys: &CartesianCenterSystem) -> PolarReducedSystem {
    PolarReducedSystem {
        orientation: sys.exosystem().omega(),
        base: sys.clone(),
        rate_floor: DEFAULT_RATE_FLOOR,
    }
}

impl PolarReducedSystem {
    pub fn with_rate_floor(mut self, floor: f64) -> Self {
        self.rate_floor = floor;
        self
    }

    pub fn base(&self) -> &CartesianCenterSystem {
        &self.base
    }

    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn rate_floor(&self) -> f64 {
        self.rate_floor
    }

    pub fn to_cartesian(&self, theta: f64, r: f64) -> [f64; 2] {
        [r * theta.cos(), self.orientation * r * theta.sin()]
    }

    /// Reduced angle in `[0, 2π)` and radius of a Cartesian point.
    pub fn to_polar(&self, w: [f64; 2]) -> (f64, f64) {
        let r = w[0].hypot(w[1]);
        let phi = (self.orientation * w[1]).atan2(w[0]);
        (phi.rem_euclid(TAU), r)
    }

    fn w_jets(&self, theta: f64, r: &Jet) -> [Jet; 2] {
        [
            r.scale(theta.cos()),
            r.scale(self.orientation * theta.sin()),
        ]
    }

    fn rates(&self, theta: f64, r: &Jet) -> Result<Rates> {
        let (c, s) = (theta.cos(), theta.sin());
        let o = self.orientation;
        let numerators = |rho: &Jet| -> Result<(Jet, Jet)> {
            let w = self.w_jets(theta, rho);
            let [n1, n2] = self.base.exo.nonlinear_jet(&w)?;
            let num_t = n2.scale(o * c).try_sub(&n1.scale(s))?;
            let num_r = n1.scale(c).try_add(&n2.scale(o * s))?;
            Ok((num_t, num_r))
        };
        let (thetahat, rhat) = if r.value().abs() >= SERIES_RADIUS {
            let (num_t, num_r) = numerators(r)?;
            (num_t.try_div(r)?, num_r.try_div(r)?)
        } else {
            let order = r.order() + 1 + SERIES_EXTRA;
            let rho = Jet::variable(0, 0.0, order, 1)?;
            let (num_t, num_r) = numerators(&rho)?;
            let t = Jet::horner(&num_t.coeffs()[1..], r);
            let q = Jet::horner(&num_r.coeffs()[1..], r);
            (t, q)
        };
        let rate = 1.0 + thetahat.value();
        if !(rate >= self.rate_floor) {
            return Err(Error::ThetaRate {
                theta,
                r: r.value(),
                rate,
            });
        }
        Ok(Rates { rhat, thetahat })
    }

    /// `(R̂, Θ̂)` at a point: `ṙ = r R̂` and `θ̇ = 1 + Θ̂`.
    pub fn polar_rates(&self, theta: f64, r: f64) -> Result<(f64, f64)> {
        let rates = self.rates(theta, &Jet::constant(r, 0, 1)?)?;
        Ok((rates.rhat.value(), rates.thetahat.value()))
    }

    /// `R(θ, r) = R̂ / (1 + Θ̂)`
    pub fn radial_factor(&self, theta: f64, r: f64) -> Result<f64> {
        let (rh, th) = self.polar_rates(theta, r)?;
        Ok(rh / (1.0 + th))
    }

    /// `r R(θ, r)` on a jet in `r`.
    pub fn radial_rhs_jet(&self, theta: f64, r: &Jet) -> Result<Jet> {
        let rates = self.rates(theta, r)?;
        r.try_mul(&rates.rhat)?
            .try_div(&rates.thetahat.add_scalar(1.0))
    }

    pub fn radial_rhs(&self, theta: f64, r: f64) -> Result<f64> {
        Ok(self
            .radial_rhs_jet(theta, &Jet::constant(r, 0, 1)?)?
            .value())
    }

    /// `f(θ, r, z) = (Bz + Z̄(w, z)) / (1 + Θ̂)`; `r` and `z` share a shape.
    pub fn f_jet(&self, theta: f64, r: &Jet, z: &[Jet]) -> Result<Vec<Jet>> {
        let rates = self.rates(theta, r)?;
        let w = self.w_jets(theta, r);
        let rate = rates.thetahat.add_scalar(1.0);
        self.base
            .f_jet(&w, z)?
            .into_iter()
            .map(|fi| fi.try_div(&rate))
            .collect()
    }

    pub fn f_f64(&self, theta: f64, r: f64, z: &[f64]) -> Result<Vec<f64>> {
        let (_, th) = self.polar_rates(theta, r)?;
        let w = self.to_cartesian(theta, r);
        let mut f = self.base.f_f64(w, z)?;
        for v in &mut f {
            *v /= 1.0 + th;
        }
        Ok(f)
    }

    /// `f` together with `∂f/∂z` (row-major `n×n`) at a point.
    pub fn f_with_jacobian(&self, theta: f64, r: f64, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.dim();
        let zj = jet_args(z, 1)?;
        let rj = Jet::constant(r, 1, n)?;
        let f = self.f_jet(theta, &rj, &zj)?;
        let mut jac = vec![0.0; n * n];
        for (i, fi) in f.iter().enumerate() {
            jac[i * n..(i + 1) * n].copy_from_slice(&fi.coeffs()[1..=n]);
        }
        Ok((f.iter().map(Jet::value).collect(), jac))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn names() -> [String; 2] {
        ["w1".to_string(), "w2".to_string()]
    }

    fn duffing_params() -> HashMap<String, f64> {
        [("a".to_string(), 0.25)].into()
    }

    fn duffing_center() -> CartesianCenterSystem {
        CartesianCenterSystem::from_spec(
            &CenterSystemSpec {
                z_names: vec!["z1".into()],
                w_names: names(),
                b: DMatrix::from_element(1, 1, -1.0),
                zbar: vec!["w1^2".into()],
                p: "0".into(),
                q: "-a*w1^3".into(),
                rotation: -1.0,
                params: duffing_params(),
            },
            1e-6,
        )
        .unwrap()
    }

    #[test]
    fn lie_chain_examples() {
        let chain = lie_derivative_chain(["w2", "-w1 - a*w1^3"], "-w1", names(), &duffing_params())
            .unwrap();
        assert_relative_eq!(chain.eval([0.3, 0.7], 1).unwrap(), -0.7, epsilon = 1e-15);
        assert_relative_eq!(chain.eval([1.0, 0.0], 2).unwrap(), 1.25, epsilon = 1e-15);
        assert_relative_eq!(chain.eval([0.4, -2.0], 0).unwrap(), -0.4);
    }

    #[test]
    fn lie_chain_on_jets_matches_values() {
        let chain = lie_derivative_chain(["w2", "-w1 - a*w1^3"], "-w1", names(), &duffing_params())
            .unwrap();
        // L_s^2 p = w1 + a w1^3 along w = (0.5 + σ, 0.2 - σ²)
        let s = Jet::variable(0, 0.0, 3, 1).unwrap();
        let w = [s.add_scalar(0.5), s.powi(2).neg().add_scalar(0.2)];
        let l = chain.levels_jet(&w, 2).unwrap();
        let expect = w[0].try_add(&w[0].powi(3).scale(0.25)).unwrap();
        for (a, b) in l[2].coeffs().iter().zip(expect.coeffs()) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn duffing_polar_rates() {
        let sys = polar_reduce(&duffing_center());
        assert_eq!(sys.orientation(), -1.0);
        for &(theta, r) in &[(0.3, 0.8), (1.9, 1.4), (4.0, 0.005), (5.5, 0.0)] {
            let (rh, th) = sys.polar_rates(theta, r).unwrap();
            let (c, s) = (f64::cos(theta), f64::sin(theta));
            assert_relative_eq!(th, 0.25 * r * r * c.powi(4), epsilon = 1e-12);
            assert_relative_eq!(rh, 0.25 * r * r * c.powi(3) * s, epsilon = 1e-12);
            let rr = sys.radial_factor(theta, r).unwrap();
            assert_relative_eq!(rr, rh / (1.0 + th), epsilon = 1e-15);
        }
        // geometric angle π/4 is reduced angle −π/4
        let (rh, _) = sys.polar_rates(-std::f64::consts::FRAC_PI_4, 1.0).unwrap();
        assert_relative_eq!(rh, -1.0 / 16.0, epsilon = 1e-14);
    }

    #[test]
    fn harmonic_has_no_radial_motion() {
        let sys = CartesianCenterSystem::from_spec(
            &CenterSystemSpec {
                z_names: vec!["z".into()],
                w_names: names(),
                b: DMatrix::from_element(1, 1, -1.0),
                zbar: vec!["0".into()],
                p: "0".into(),
                q: "0".into(),
                rotation: 1.0,
                params: HashMap::new(),
            },
            1e-6,
        )
        .unwrap();
        let pr = polar_reduce(&sys);
        let (rh, th) = pr.polar_rates(1.0, 2.0).unwrap();
        assert_eq!((rh, th), (0.0, 0.0));
    }

    #[test]
    fn validation_failures() {
        let mut spec = CenterSystemSpec {
            z_names: vec!["z1".into()],
            w_names: names(),
            b: DMatrix::from_element(1, 1, -1.0),
            zbar: vec!["z1^2 + unknown".into()],
            p: "0".into(),
            q: "0".into(),
            rotation: 1.0,
            params: HashMap::new(),
        };
        assert!(matches!(
            CartesianCenterSystem::from_spec(&spec, 1e-6),
            Err(Error::Validation(_))
        ));
        spec.zbar = vec!["0.5*z1".into()];
        assert!(CartesianCenterSystem::from_spec(&spec, 1e-6).is_err());
        spec.zbar = vec!["w1".into()];
        spec.q = "w1".into();
        assert!(CartesianCenterSystem::from_spec(&spec, 1e-6).is_err());
        spec.q = "0".into();
        spec.b = DMatrix::from_element(1, 1, 0.0);
        assert!(matches!(
            CartesianCenterSystem::from_spec(&spec, 1e-6),
            Err(Error::Hyperbolicity { .. })
        ));
        assert!(Exosystem::from_vector_field(["w2", "2*w1"], names(), &HashMap::new()).is_err());
    }
}
