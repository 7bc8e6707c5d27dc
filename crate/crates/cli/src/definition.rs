//! System definition files.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Deserialize;

use patchy_core::expr::{parse, CompiledExpr};
use patchy_core::linalg::DEFAULT_HYPERBOLICITY_TOL;
use patchy_core::systems::{CartesianCenterSystem, CenterSystemSpec, PlantNormalForm, PlantSpec};

use crate::error::CliError;

pub const DEFINITION_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    CenterSystem,
    PlantNormalForm,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variables {
    pub z: Vec<String>,
    pub w: [String; 2],
    #[serde(default)]
    pub xi: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateMap {
    /// Names of the original state variables.
    pub x: Vec<String>,
    /// `(z, ξ)` as expressions in `x`.
    pub to_normal: Vec<String>,
    /// `x` as expressions in `(z, ξ)`.
    pub from_normal: Vec<String>,
}

/// Per-fixture defaults for command-line options.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Defaults {
    pub order: Option<usize>,
    pub seed_order: Option<usize>,
    pub annuli: Option<usize>,
    pub thickness: Option<f64>,
    pub w1: Option<[f64; 2]>,
    pub w2: Option<[f64; 2]>,
    pub samples: Option<usize>,
    pub degrees: Option<Vec<usize>>,
    pub x0: Option<Vec<f64>>,
    pub w0: Option<[f64; 2]>,
    pub horizon: Option<f64>,
    pub lqr_q: Option<Vec<f64>>,
    pub lqr_r: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDefinition {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: Option<String>,
    pub kind: Kind,
    pub variables: Variables,
    #[serde(default)]
    pub parameters: HashMap<String, f64>,
    #[serde(rename = "B", default)]
    pub b_matrix: Option<Vec<Vec<f64>>>,
    #[serde(rename = "Zbar", default)]
    pub zbar: Option<Vec<String>>,
    #[serde(rename = "P", default)]
    pub p_rot: Option<String>,
    #[serde(rename = "Q", default)]
    pub q_rot: Option<String>,
    #[serde(default)]
    pub rotation: Option<f64>,
    #[serde(default)]
    pub f0: Option<Vec<String>>,
    #[serde(default)]
    pub a: Option<String>,
    #[serde(default)]
    pub b: Option<String>,
    #[serde(default)]
    pub s: Option<[String; 2]>,
    #[serde(default)]
    pub p: Option<String>,
    #[serde(default)]
    pub state_map: Option<StateMap>,
    /// Known manifold `z = ψ(w)`, one expression in `w` per z component.
    #[serde(default)]
    pub reference: Option<Vec<String>>,
    #[serde(default)]
    pub defaults: Defaults,
    #[serde(skip)]
    pub path: PathBuf,
}

fn required<'a, T>(v: &'a Option<T>, field: &str, kind: &str) -> Result<&'a T, CliError> {
    v.as_ref()
        .ok_or_else(|| CliError::Input(format!("field `{field}` is required for kind {kind}")))
}

/// Compiled reference manifold.
pub struct Reference {
    exprs: Vec<CompiledExpr>,
}

impl Reference {
    pub fn eval(&self, w: [f64; 2]) -> Vec<f64> {
        self.exprs.iter().map(|e| e.eval_f64(&w)).collect()
    }
}

/// Compiled maps between original and normal coordinates.
pub struct CoordinateMap {
    pub x_names: Vec<String>,
    to_normal: Vec<CompiledExpr>,
    from_normal: Vec<CompiledExpr>,
}

impl CoordinateMap {
    pub fn to_normal(&self, x: &[f64]) -> Vec<f64> {
        self.to_normal.iter().map(|e| e.eval_f64(x)).collect()
    }

    pub fn from_normal(&self, state: &[f64]) -> Vec<f64> {
        self.from_normal.iter().map(|e| e.eval_f64(state)).collect()
    }
}

impl SystemDefinition {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Self::from_str(&text, path)
    }

    pub fn from_str(text: &str, path: &Path) -> Result<Self, CliError> {
        let mut def: SystemDefinition = serde_json::from_str(text).map_err(|e| {
            CliError::Input(format!(
                "{}:{}:{}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })?;
        def.path = path.to_path_buf();
        def.check_syntax(text)?;
        if def.schema_version != DEFINITION_SCHEMA_VERSION {
            return Err(CliError::Input(format!(
                "{}: unsupported schema_version {} (expected {DEFINITION_SCHEMA_VERSION})",
                path.display(),
                def.schema_version
            )));
        }
        Ok(def)
    }

    /// Every expression field with its label.
    fn expressions(&self) -> Vec<(String, &str)> {
        fn list<'a>(out: &mut Vec<(String, &'a str)>, label: &str, v: &'a [String]) {
            for (i, e) in v.iter().enumerate() {
                out.push((format!("{label}[{i}]"), e.as_str()));
            }
        }
        let mut out = Vec::new();
        list(&mut out, "Zbar", self.zbar.as_deref().unwrap_or_default());
        list(&mut out, "f0", self.f0.as_deref().unwrap_or_default());
        list(
            &mut out,
            "s",
            self.s.as_ref().map(|s| &s[..]).unwrap_or_default(),
        );
        list(
            &mut out,
            "reference",
            self.reference.as_deref().unwrap_or_default(),
        );
        if let Some(m) = &self.state_map {
            list(&mut out, "state_map.to_normal", &m.to_normal);
            list(&mut out, "state_map.from_normal", &m.from_normal);
        }
        for (label, v) in [
            ("P", &self.p_rot),
            ("Q", &self.q_rot),
            ("a", &self.a),
            ("b", &self.b),
            ("p", &self.p),
        ] {
            if let Some(e) = v {
                out.push((label.to_string(), e.as_str()));
            }
        }
        out
    }

    /// Parses every expression, reporting failures at their line and column
    /// in the source text.
    fn check_syntax(&self, text: &str) -> Result<(), CliError> {
        for (label, src) in self.expressions() {
            let Err(e) = parse(src) else { continue };
            let offset = match &e {
                patchy_core::Error::Syntax { offset, .. }
                | patchy_core::Error::UnknownFunction { offset, .. } => *offset,
                _ => 0,
            };
            let literal = serde_json::to_string(src).unwrap_or_default();
            let location = match text.find(&literal) {
                Some(start) => {
                    let before = &text[..start];
                    let line = before.matches('\n').count() + 1;
                    let col = start - before.rfind('\n').map_or(0, |i| i + 1) + 2 + offset;
                    format!("{}:{line}:{col}", self.path.display())
                }
                None => self.path.display().to_string(),
            };
            return Err(CliError::Input(format!("{location}: {label}: {e}")));
        }
        Ok(())
    }

    fn context<E: std::fmt::Display>(&self, e: E) -> String {
        format!("{}: {e}", self.path.display())
    }

    fn core_err(&self, stage: &str) -> impl Fn(patchy_core::Error) -> CliError + '_ {
        let stage = stage.to_string();
        move |e| CliError::Core {
            stage: format!("{}: {stage}", self.path.display()),
            source: e,
        }
    }

    pub fn plant(&self) -> Result<PlantNormalForm, CliError> {
        if self.kind != Kind::PlantNormalForm {
            return Err(CliError::Input(
                self.context("a plant-normal-form definition is required"),
            ));
        }
        let kind = "plant-normal-form";
        let spec = PlantSpec {
            z_names: self.variables.z.clone(),
            xi_names: self.variables.xi.clone(),
            w_names: self.variables.w.clone(),
            f0: required(&self.f0, "f0", kind)?.clone(),
            a: required(&self.a, "a", kind)?.clone(),
            b: required(&self.b, "b", kind)?.clone(),
            s: required(&self.s, "s", kind)?.clone(),
            p: required(&self.p, "p", kind)?.clone(),
            params: self.parameters.clone(),
        };
        PlantNormalForm::from_spec(&spec).map_err(self.core_err("plant validation"))
    }

    /// The center-manifold system, directly or from the plant's zero dynamics.
    pub fn center_system(&self) -> Result<CartesianCenterSystem, CliError> {
        match self.kind {
            Kind::PlantNormalForm => self
                .plant()?
                .center_system(DEFAULT_HYPERBOLICITY_TOL)
                .map_err(self.core_err("zero-dynamics validation")),
            Kind::CenterSystem => {
                let kind = "center-system";
                let rows = required(&self.b_matrix, "B", kind)?;
                let n = self.variables.z.len();
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(CliError::Input(self.context(format!(
                        "B must be {n}x{n} to match the declared z variables"
                    ))));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                let spec = CenterSystemSpec {
                    z_names: self.variables.z.clone(),
                    w_names: self.variables.w.clone(),
                    b: DMatrix::from_row_slice(n, n, &flat),
                    zbar: required(&self.zbar, "Zbar", kind)?.clone(),
                    p: self.p_rot.clone().unwrap_or_else(|| "0".into()),
                    q: self.q_rot.clone().unwrap_or_else(|| "0".into()),
                    rotation: *required(&self.rotation, "rotation", kind)?,
                    params: self.parameters.clone(),
                };
                CartesianCenterSystem::from_spec(&spec, DEFAULT_HYPERBOLICITY_TOL)
                    .map_err(self.core_err("system validation"))
            }
        }
    }

    fn compile_list(
        &self,
        what: &str,
        exprs: &[String],
        vars: &[&str],
    ) -> Result<Vec<CompiledExpr>, CliError> {
        exprs
            .iter()
            .enumerate()
            .map(|(i, src)| {
                CompiledExpr::from_source(src, vars, &self.parameters)
                    .map_err(self.core_err(&format!("{what}[{i}]")))
            })
            .collect()
    }

    pub fn reference(&self) -> Result<Option<Reference>, CliError> {
        let Some(exprs) = &self.reference else {
            return Ok(None);
        };
        if exprs.len() != self.variables.z.len() {
            return Err(CliError::Input(self.context(format!(
                "reference has {} expressions for {} z variables",
                exprs.len(),
                self.variables.z.len()
            ))));
        }
        let vars: Vec<&str> = self.variables.w.iter().map(String::as_str).collect();
        Ok(Some(Reference {
            exprs: self.compile_list("reference", exprs, &vars)?,
        }))
    }

    pub fn coordinate_map(&self) -> Result<Option<CoordinateMap>, CliError> {
        let Some(map) = &self.state_map else {
            return Ok(None);
        };
        let dim = self.variables.z.len() + self.variables.xi.len();
        if map.x.len() != dim || map.to_normal.len() != dim || map.from_normal.len() != dim {
            return Err(CliError::Input(self.context(format!(
                "state_map must have {dim} variables and {dim} expressions each way"
            ))));
        }
        let xv: Vec<&str> = map.x.iter().map(String::as_str).collect();
        let nv: Vec<&str> = self
            .variables
            .z
            .iter()
            .chain(&self.variables.xi)
            .map(String::as_str)
            .collect();
        Ok(Some(CoordinateMap {
            x_names: map.x.clone(),
            to_normal: self.compile_list("state_map.to_normal", &map.to_normal, &xv)?,
            from_normal: self.compile_list("state_map.from_normal", &map.from_normal, &nv)?,
        }))
    }
}
