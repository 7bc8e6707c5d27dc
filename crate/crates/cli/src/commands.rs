//! Subcommands of the `patchy` binary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rayon::prelude::*;

use patchy_core::odebvp::BvpOptions;
use patchy_core::patchy::{
    build_patchy, uniform_schedule, PatchyOptions, PatchySolution, DEFAULT_MAX_DEFECT,
};
use patchy_core::regulator::{lqr, simulate_closed_loop, Regulator, SimulationOptions};
use patchy_core::seed::{compute_seed, SeedPolynomial, MAX_SEED_ORDER};
use patchy_core::spline::theta_mesh_from_env;
use patchy_core::systems::polar_reduce;

use crate::definition::SystemDefinition;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "patchy",
    version,
    about = "Patchy center-manifold solver and regulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Taylor seed of the center manifold about the origin.
    Seed(SeedArgs),
    /// Patchy solution over a schedule of annuli.
    Solve(SolveArgs),
    /// Evaluate a solution on a Cartesian grid.
    Grid(GridArgs),
    /// Sup-errors of Taylor seeds against a patchy solution.
    ComparePoly(ComparePolyArgs),
    /// Closed-loop tracking simulation with an LQR gain.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct SeedArgs {
    pub definition: PathBuf,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub definition: PathBuf,
    /// Radial Taylor order N of each patch.
    #[arg(long)]
    pub order: Option<usize>,
    /// Degree of the inner seed polynomial (defaults to the patch order).
    #[arg(long)]
    pub seed_order: Option<usize>,
    #[arg(long, conflicts_with = "schedule")]
    pub annuli: Option<usize>,
    #[arg(long, conflicts_with = "schedule")]
    pub thickness: Option<f64>,
    /// Launch radii r_j(0), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub schedule: Option<Vec<f64>>,
    #[arg(long)]
    pub theta_mesh: Option<usize>,
    /// Local error tolerance of every IVP sweep.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Largest relative seed residual and seam jump accepted (`inf` disables).
    #[arg(long, default_value_t = DEFAULT_MAX_DEFECT)]
    pub max_defect: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct GridSpec {
    /// w1 range `lo,hi`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub w1: Option<Vec<f64>>,
    /// w2 range `lo,hi`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub w2: Option<Vec<f64>>,
    /// Samples per axis, `m` or `m1xm2`.
    #[arg(long)]
    pub samples: Option<String>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    pub solution: PathBuf,
    #[command(flatten)]
    pub grid: GridSpec,
    /// Definition whose reference expressions give true-solution and error columns.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ComparePolyArgs {
    pub definition: PathBuf,
    #[arg(long)]
    pub solution: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub degrees: Option<Vec<usize>>,
    #[command(flatten)]
    pub grid: GridSpec,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub definition: PathBuf,
    #[arg(long)]
    pub solution: PathBuf,
    /// Initial plant state (original coordinates when the definition has a state map).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub w0: Option<Vec<f64>>,
    /// Start on the manifold, x0 = π(w0).
    #[arg(long)]
    pub start_on_manifold: bool,
    /// Interpret x0 in normal coordinates (z, ξ).
    #[arg(long)]
    pub normal_coordinates: bool,
    #[arg(long = "T", alias = "horizon")]
    pub horizon: Option<f64>,
    /// Diagonal of the LQR state weight.
    #[arg(long, value_delimiter = ',')]
    pub lqr_q: Option<Vec<f64>>,
    #[arg(long)]
    pub lqr_r: Option<f64>,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Output sampling interval.
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn load_solution(path: &Path) -> Result<PatchySolution, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    PatchySolution::from_json(&text).map_err(CliError::core(path.display().to_string()))
}

fn check_order(order: usize, what: &str) -> Result<usize, CliError> {
    if order == 0 || order > MAX_SEED_ORDER {
        return Err(CliError::Usage(format!(
            "{what} must be in 1..={MAX_SEED_ORDER}, got {order}"
        )));
    }
    Ok(order)
}

pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Seed(a) => cmd_seed(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Grid(a) => cmd_grid(&a),
        Command::ComparePoly(a) => cmd_compare_poly(&a),
        Command::Simulate(a) => cmd_simulate(&a),
    }
}

pub fn seed_document(def: &SystemDefinition, seed: &SeedPolynomial) -> serde_json::Value {
    serde_json::json!({
        "schema_version": 1,
        "system": def.name,
        "order": seed.order(),
        "orientation": seed.orientation(),
        "z": def.variables.z,
        "coefficients": seed.monomial_table(&def.variables.w),
    })
}

pub fn cmd_seed(a: &SeedArgs) -> Result<(), CliError> {
    let def = SystemDefinition::load(&a.definition)?;
    let order = check_order(a.order.or(def.defaults.seed_order).unwrap_or(1), "--order")?;
    let sys = def.center_system()?;
    let seed = compute_seed(&sys, order).map_err(CliError::core("seed"))?;
    let mut out = output(&a.out)?;
    serde_json::to_writer_pretty(&mut out, &seed_document(&def, &seed))
        .map_err(|e| CliError::Input(e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    log::info!("seed of degree {order} for {}", def.name);
    Ok(())
}

pub fn cmd_solve(a: &SolveArgs) -> Result<(), CliError> {
    let def = SystemDefinition::load(&a.definition)?;
    let order = check_order(a.order.or(def.defaults.order).unwrap_or(2), "--order")?;
    let seed_order = check_order(
        a.seed_order.or(def.defaults.seed_order).unwrap_or(order),
        "--seed-order",
    )?;
    let schedule = match &a.schedule {
        Some(s) => s.clone(),
        None => {
            let k = a.annuli.or(def.defaults.annuli);
            let eps = a.thickness.or(def.defaults.thickness);
            match (k, eps) {
                (Some(k), Some(eps)) if eps > 0.0 => uniform_schedule(k, eps),
                (Some(_), Some(eps)) => {
                    return Err(CliError::Usage(format!(
                        "--thickness must be positive, got {eps}"
                    )))
                }
                _ => {
                    return Err(CliError::Usage(
                        "give --schedule or both --annuli and --thickness".into(),
                    ))
                }
            }
        }
    };
    if schedule.iter().any(|r| !(*r > 0.0)) {
        return Err(CliError::Usage("schedule radii must be positive".into()));
    }
    let theta_mesh = a.theta_mesh.unwrap_or_else(theta_mesh_from_env);
    if theta_mesh < 8 {
        return Err(CliError::Usage("--theta-mesh must be at least 8".into()));
    }
    let mut bvp = BvpOptions::default();
    if let Some(t) = a.tol {
        if !(t > 0.0) {
            return Err(CliError::Usage("--tol must be positive".into()));
        }
        bvp.ivp_tol = t;
    }
    let sys = polar_reduce(&def.center_system()?);
    let seed = compute_seed(sys.base(), seed_order).map_err(CliError::core("seed"))?;
    let opts = PatchyOptions {
        order,
        theta_mesh,
        bvp,
        max_defect: Some(a.max_defect),
    };
    let write = |sol: &PatchySolution| -> Result<(), CliError> {
        let text = sol.to_json().map_err(CliError::core("serialize"))?;
        std::fs::write(&a.out, text)
            .map_err(|e| CliError::Input(format!("{}: {e}", a.out.display())))
    };
    match build_patchy(&sys, &seed, &schedule, &opts) {
        Ok(mut sol) => {
            sol.set_system_label(&def.name);
            write(&sol)?;
            eprintln!(
                "solved {} annuli of order {order} for {}; outer radius at theta=0: {:.6}",
                sol.patches().len(),
                def.name,
                sol.outer_radius(0.0).unwrap_or(0.0)
            );
            Ok(())
        }
        Err(partial) => {
            let mut sol = partial.solution;
            sol.set_system_label(&def.name);
            write(&sol)?;
            eprintln!(
                "wrote {} completed annuli to {}; reduce the thickness near r = {}",
                sol.patches().len(),
                a.out.display(),
                schedule[partial.failed_index]
            );
            Err(CliError::Core {
                stage: format!("annulus {}", partial.failed_index),
                source: partial.error,
            })
        }
    }
}

/// Uniform grid points, row-major in `w1` then `w2`.
pub fn grid_points(
    spec: &GridSpec,
    def: Option<&SystemDefinition>,
) -> Result<Vec<[f64; 2]>, CliError> {
    let range = |given: &Option<Vec<f64>>, fallback: Option<[f64; 2]>, name: &str| match (
        given, fallback,
    ) {
        (Some(v), _) if v.len() == 2 => Ok([v[0], v[1]]),
        (Some(_), _) => Err(CliError::Usage(format!("--{name} takes lo,hi"))),
        (None, Some(r)) => Ok(r),
        (None, None) => Err(CliError::Usage(format!("--{name} range is required"))),
    };
    let dflt = def.map(|d| &d.defaults);
    let r1 = range(&spec.w1, dflt.and_then(|d| d.w1), "w1")?;
    let r2 = range(&spec.w2, dflt.and_then(|d| d.w2), "w2")?;
    let (m1, m2) = match &spec.samples {
        Some(s) => {
            let parse = |t: &str| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::Usage(format!("bad --samples value `{s}`")))
            };
            match s.split_once(['x', 'X']) {
                Some((a, b)) => (parse(a)?, parse(b)?),
                None => {
                    let m = parse(s)?;
                    (m, m)
                }
            }
        }
        None => {
            let m = dflt.and_then(|d| d.samples).unwrap_or(101);
            (m, m)
        }
    };
    if m1 == 0 || m2 == 0 {
        return Err(CliError::Usage("--samples must be positive".into()));
    }
    let axis = |r: [f64; 2], m: usize| -> Vec<f64> {
        if m == 1 {
            vec![0.5 * (r[0] + r[1])]
        } else {
            (0..m)
                .map(|i| r[0] + (r[1] - r[0]) * i as f64 / (m - 1) as f64)
                .collect()
        }
    };
    let a1 = axis(r1, m1);
    let a2 = axis(r2, m2);
    Ok(a1
        .iter()
        .flat_map(|&x| a2.iter().map(move |&y| [x, y]))
        .collect())
}

pub fn cmd_grid(a: &GridArgs) -> Result<(), CliError> {
    let sol = load_solution(&a.solution)?;
    let def = a
        .reference
        .as_ref()
        .map(|p| SystemDefinition::load(p))
        .transpose()?;
    let reference = match &def {
        Some(d) => Some(d.reference()?.ok_or_else(|| {
            CliError::Input(format!(
                "{}: no reference expressions in definition",
                d.path.display()
            ))
        })?),
        None => None,
    };
    let points = grid_points(&a.grid, def.as_ref())?;
    let n = sol.dim();
    let values: Vec<Option<Vec<f64>>> = points
        .par_iter()
        .map(|&w| sol.evaluate_cartesian(w).ok())
        .collect();
    let mut out = output(&a.out)?;
    let mut header = vec!["w1".to_string(), "w2".to_string()];
    header.extend((1..=n).map(|i| format!("z{i}")));
    if reference.is_some() {
        header.extend((1..=n).map(|i| format!("ref_z{i}")));
        header.extend((1..=n).map(|i| format!("err_z{i}")));
    }
    writeln!(out, "{}", header.join(","))?;
    let inside = values.iter().filter(|v| v.is_some()).count();
    let mut max_err = 0.0f64;
    if inside > 0 {
        for (w, v) in points.iter().zip(&values) {
            let mut cells = vec![fmt_num(w[0]), fmt_num(w[1])];
            match v {
                Some(z) => {
                    cells.extend(z.iter().map(|&x| fmt_num(x)));
                    if let Some(r) = &reference {
                        let t = r.eval(*w);
                        cells.extend(t.iter().map(|&x| fmt_num(x)));
                        for (zi, ti) in z.iter().zip(&t) {
                            let e = zi - ti;
                            max_err = max_err.max(e.abs());
                            cells.push(fmt_num(e));
                        }
                    }
                }
                None => {
                    let blanks = if reference.is_some() { 3 * n } else { n };
                    cells.extend(std::iter::repeat_n(String::new(), blanks));
                }
            }
            writeln!(out, "{}", cells.join(","))?;
        }
    }
    out.flush()?;
    let outside = points.len() - inside;
    if inside == 0 {
        log::warn!("no grid point lies inside the solved domain");
    }
    let mut summary = format!(
        "grid: {} points, {outside} outside the solved domain",
        points.len()
    );
    if reference.is_some() {
        summary.push_str(&format!(", max |error| {}", fmt_num(max_err)));
    }
    eprintln!("{summary}");
    Ok(())
}

/// One row of the polynomial comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub method: String,
    pub degree: usize,
    /// Sup-error over grid points inside the patchy domain.
    pub sup_domain: f64,
    /// Sup-error over the full grid (`None` where the method is undefined).
    pub sup_grid: Option<f64>,
}

pub fn compare_poly(
    def: &SystemDefinition,
    sol: &PatchySolution,
    degrees: &[usize],
    points: &[[f64; 2]],
) -> Result<Vec<ComparisonRow>, CliError> {
    let reference = def.reference()?.ok_or_else(|| {
        CliError::Input(format!(
            "{}: compare-poly needs reference expressions",
            def.path.display()
        ))
    })?;
    let sys = def.center_system()?;
    let truth: Vec<Vec<f64>> = points.par_iter().map(|&w| reference.eval(w)).collect();
    let patchy: Vec<Option<Vec<f64>>> = points
        .par_iter()
        .map(|&w| sol.evaluate_cartesian(w).ok())
        .collect();
    let err = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    };
    let mut rows = Vec::new();
    let sup_patchy = patchy
        .iter()
        .zip(&truth)
        .filter_map(|(p, t)| p.as_ref().map(|p| err(p, t)))
        .fold(0.0f64, f64::max);
    rows.push(ComparisonRow {
        method: "patchy".into(),
        degree: sol.metadata().order,
        sup_domain: sup_patchy,
        sup_grid: None,
    });
    for &d in degrees {
        let d = check_order(d, "--degrees entry")?;
        let seed = compute_seed(&sys, d).map_err(CliError::core(format!("seed of degree {d}")))?;
        let errs: Vec<f64> = points
            .par_iter()
            .zip(&truth)
            .map(|(&w, t)| err(&seed.eval(w), t))
            .collect();
        let sup_domain = errs
            .iter()
            .zip(&patchy)
            .filter(|(_, p)| p.is_some())
            .fold(0.0f64, |m, (e, _)| m.max(*e));
        let sup_grid = errs.iter().copied().fold(0.0f64, f64::max);
        rows.push(ComparisonRow {
            method: "taylor".into(),
            degree: d,
            sup_domain,
            sup_grid: Some(sup_grid),
        });
    }
    Ok(rows)
}

pub fn cmd_compare_poly(a: &ComparePolyArgs) -> Result<(), CliError> {
    let def = SystemDefinition::load(&a.definition)?;
    let sol = load_solution(&a.solution)?;
    let degrees = a
        .degrees
        .clone()
        .or_else(|| def.defaults.degrees.clone())
        .ok_or_else(|| CliError::Usage("--degrees is required".into()))?;
    let points = grid_points(&a.grid, Some(&def))?;
    let rows = compare_poly(&def, &sol, &degrees, &points)?;
    let mut out = output(&a.out)?;
    writeln!(out, "method,degree,sup_error_domain,sup_error_grid")?;
    for r in &rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.method,
            r.degree,
            fmt_num(r.sup_domain),
            r.sup_grid.map(fmt_num).unwrap_or_default()
        )?;
    }
    out.flush()?;
    for r in &rows {
        eprintln!(
            "{} degree {}: sup-error {:.3e} on the patchy domain",
            r.method, r.degree, r.sup_domain
        );
    }
    Ok(())
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let def = SystemDefinition::load(&a.definition)?;
    let plant = def.plant()?;
    let sol = load_solution(&a.solution)?;
    let map = def.coordinate_map()?;
    let dim = plant.state_dim();
    let d = &def.defaults;
    let w0 =
        a.w0.clone()
            .or_else(|| d.w0.map(Vec::from))
            .ok_or_else(|| CliError::Usage("--w0 is required".into()))?;
    if w0.len() != 2 {
        return Err(CliError::Usage("--w0 takes two values".into()));
    }
    let w0 = [w0[0], w0[1]];
    let qd = a
        .lqr_q
        .clone()
        .or_else(|| d.lqr_q.clone())
        .unwrap_or_else(|| vec![1.0; dim]);
    if qd.len() != dim {
        return Err(CliError::Usage(format!("--lqr-q takes {dim} values")));
    }
    let r = a.lqr_r.or(d.lqr_r).unwrap_or(1.0);
    let horizon = a.horizon.or(d.horizon).unwrap_or(30.0);
    let (alin, blin) = plant
        .linearization()
        .map_err(CliError::core("linearization"))?;
    let q = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(qd));
    let lqr_sol =
        lqr(&alin, &blin, &q, &DMatrix::from_element(1, 1, r)).map_err(CliError::core("LQR"))?;
    let reg = Regulator::new(plant, sol, &lqr_sol.gain).map_err(CliError::core("regulator"))?;
    let x0 = if a.start_on_manifold {
        reg.pi(w0).map_err(|e| CliError::Core {
            stage: "simulation".into(),
            source: patchy_core::Error::Simulation {
                t: 0.0,
                source: Box::new(e),
            },
        })?
    } else {
        let x =
            a.x0.clone()
                .or_else(|| d.x0.clone())
                .ok_or_else(|| CliError::Usage("--x0 is required".into()))?;
        if x.len() != dim {
            return Err(CliError::Usage(format!("--x0 takes {dim} values")));
        }
        match (&map, a.normal_coordinates) {
            (Some(m), false) => m.to_normal(&x),
            _ => x,
        }
    };
    let opts = SimulationOptions {
        horizon,
        tol: a.tol,
        dt: a.dt,
        ..SimulationOptions::default()
    };
    let res = simulate_closed_loop(&reg, &x0, w0, &opts).map_err(CliError::core("simulation"))?;
    let mut out = output(&a.out)?;
    res.write_csv(&mut out)?;
    out.flush()?;
    let gain: Vec<String> = lqr_sol.gain.iter().map(|k| format!("{k:.6}")).collect();
    eprintln!(
        "LQR gain [{}], CARE residual {:.2e}; sup |e| over final third {:.3e}; settling time {:.2}; per-period max |e| {:?}",
        gain.join(", "),
        lqr_sol.residual,
        res.transient_sup,
        res.settling_time,
        res.period_maxima
            .iter()
            .map(|v| format!("{v:.3e}"))
            .collect::<Vec<_>>()
    );
    Ok(())
}
