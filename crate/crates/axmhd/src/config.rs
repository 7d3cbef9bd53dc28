//! Run configuration and orchestration: parse a flat key=value config,
//! build the coupled plasma/vacuum system, advance it, and emit
//! diagnostics; also hosts the operator-identity and conservation
//! verification suites used by the command-line front end.

use crate::diagnostics::{
    balance_rates, chord_average, conserved_quantities, energy_brackets, place_probe,
    probe_signal, Chord, ChordField, DiagnosticsError, Probe, ProbeChannel, TimeSeriesWriter,
    write_snapshot,
};
use crate::mesh::{
    compute_geometry, generate_rect_mesh, split_domain, Mesh, MeshError, WallGeometry,
};
use crate::mhd::{
    BoundaryConditions, CorrectionModel, InterfaceBc, MhdError, Model, PhysicsCoefficients,
    PlasmaState, PsiBc, Scheme, VelocityBc, stability_dt,
};
use crate::ops::{build_operators, divergence, Flavor, OpsError};
use crate::scenario::{
    boundary_table_from_csv, CoilDrive, FluxIntegrator, FormationDrive, ScenarioError, Waveform,
    initial_density,
};
use crate::sparse::{dot, max_abs};
use crate::vacuum::{
    couple_step, flux_constant_fi, wall_inductance, VacuumError, VacuumSolver,
};
use crate::QE;
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: {msg}")]
    BadValue { key: String, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Ops(#[from] OpsError),
    #[error("timestep {step} (t = {t:.6e} s): {source}")]
    Step {
        step: usize,
        t: f64,
        #[source]
        source: MhdError,
    },
    #[error("timestep {step} (t = {t:.6e} s), vacuum coupling: {source}")]
    Coupling {
        step: usize,
        t: f64,
        #[source]
        source: VacuumError,
    },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Vacuum(#[from] VacuumError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Simulate,
    VerifyOperators,
    VerifyConservation,
}

/// Plasma/insulator domain split parameters.
#[derive(Debug, Clone)]
pub struct CouplingConfig {
    pub interface_r: f64,
    pub wall_h_i: f64,
    pub wall_r_out: f64,
}

/// Gun-voltage drive for toroidal-flux injection.
#[derive(Debug, Clone)]
pub struct FormationConfig {
    pub v_gun_csv: PathBuf,
    pub v_form_scale: f64,
    pub tau_lr: f64,
    pub m_slope: f64,
}

/// Coil-driven boundary flux tables.
#[derive(Debug, Clone)]
pub struct CoilConfig {
    pub psi_main_csv: Option<PathBuf>,
    pub i_main_scale: f64,
    pub psi_lev_csv: Option<PathBuf>,
    pub i_lev_csv: Option<PathBuf>,
    pub psi_comp_csv: Option<PathBuf>,
    pub i_comp_csv: Option<PathBuf>,
    pub t_comp: f64,
}

/// Initial-condition parameters.
#[derive(Debug, Clone)]
pub struct InitConfig {
    pub n_high: f64,
    pub n_low: f64,
    pub sigma_n2: f64,
    pub z_gp: f64,
    pub init_ti_ev: f64,
    pub init_te_ev: f64,
}

#[derive(Debug)]
pub struct RunConfig {
    pub mesh_path: PathBuf,
    pub mode: Mode,
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub output_dt: f64,
    pub output_dir: PathBuf,
    pub coeffs: PhysicsCoefficients,
    pub velocity_bc: VelocityBc,
    /// Pin boundary pressures to the wall temperature; `false` leaves the
    /// natural conditions of the diffusive operators.
    pub pressure_bc_wall: bool,
    pub t_wall_ev: f64,
    pub coupling: Option<CouplingConfig>,
    pub formation: Option<FormationConfig>,
    pub coils: Option<CoilConfig>,
    pub init: InitConfig,
    /// (label, r, z, channel)
    pub probes: Vec<(String, f64, f64, ProbeChannel)>,
    /// (label, p1, p2, field)
    pub chords: Vec<(String, [f64; 2], [f64; 2], ChordField)>,
}

fn parse_f64(map: &HashMap<String, String>, key: &str, default: f64) -> Result<f64, ConfigError> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| ConfigError::BadValue {
            key: key.into(),
            msg: format!("not a number: {v:?}"),
        }),
    }
}

fn parse_f64_req(map: &HashMap<String, String>, key: &str) -> Result<f64, ConfigError> {
    match map.get(key) {
        None => Err(ConfigError::MissingKey(key.into())),
        Some(v) => v.parse().map_err(|_| ConfigError::BadValue {
            key: key.into(),
            msg: format!("not a number: {v:?}"),
        }),
    }
}

fn parse_floats(key: &str, v: &str, n: usize) -> Result<Vec<f64>, ConfigError> {
    let parts: Result<Vec<f64>, _> = v.split(',').map(|p| p.trim().parse()).collect();
    let parts = parts.map_err(|_| ConfigError::BadValue {
        key: key.into(),
        msg: format!("expected {n} comma-separated numbers, got {v:?}"),
    })?;
    if parts.len() != n {
        return Err(ConfigError::BadValue {
            key: key.into(),
            msg: format!("expected {n} comma-separated numbers, got {}", parts.len()),
        });
    }
    Ok(parts)
}

const KNOWN_KEYS: &[&str] = &[
    "mesh", "mode", "dt", "t_end", "scheme", "output_dt", "output_dir",
    "mu_i", "z", "gamma", "zeta", "nu_num", "nu_phys", "n0",
    "chi_par_e", "chi_par_i", "chi_perp_e", "chi_perp_i", "eta_max",
    "correction_model", "velocity_bc", "pressure_bc", "t_wall_ev",
    "interface_r", "wall_h_i", "wall_r_out",
    "v_gun_csv", "v_form_scale", "tau_lr", "m_slope",
    "psi_main_csv", "i_main_scale", "psi_lev_csv", "i_lev_csv",
    "psi_comp_csv", "i_comp_csv", "t_comp",
    "n_high", "n_low", "sigma_n2", "z_gp", "init_ti_ev", "init_te_ev",
    "probe_pol", "probe_tor", "chord_ne", "chord_ti",
];

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut map = HashMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Parse {
                    line: no + 1,
                    msg: format!("expected `key = value`, got {line:?}"),
                });
            };
            let key = k.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey(key));
            }
            map.insert(key, v.trim().to_string());
        }

        let path_of = |v: &str| -> PathBuf {
            let p = PathBuf::from(v);
            if p.is_absolute() { p } else { base_dir.join(p) }
        };

        let mesh_path = map
            .get("mesh")
            .map(|v| path_of(v))
            .ok_or_else(|| ConfigError::MissingKey("mesh".into()))?;
        let mode = match map.get("mode").map(String::as_str).unwrap_or("simulate") {
            "simulate" => Mode::Simulate,
            "verify-operators" => Mode::VerifyOperators,
            "verify-conservation" => Mode::VerifyConservation,
            other => {
                return Err(ConfigError::BadValue {
                    key: "mode".into(),
                    msg: format!("unknown mode {other:?}"),
                })
            }
        };
        let dt = parse_f64_req(&map, "dt")?;
        let t_end = parse_f64_req(&map, "t_end")?;
        if dt <= 0.0 {
            return Err(ConfigError::Invalid(format!("dt = {dt} must be positive")));
        }
        if t_end <= dt {
            return Err(ConfigError::Invalid(format!(
                "t_end = {t_end} must exceed dt = {dt}"
            )));
        }
        let scheme: Scheme = map
            .get("scheme")
            .map(String::as_str)
            .unwrap_or("rk2")
            .parse()
            .map_err(|msg| ConfigError::BadValue { key: "scheme".into(), msg })?;
        let output_dt = parse_f64(&map, "output_dt", 10.0 * dt)?;
        let output_dir = map
            .get("output_dir")
            .map(|v| path_of(v))
            .unwrap_or_else(|| base_dir.join("out"));

        let d = PhysicsCoefficients::default();
        let correction_model = match map.get("correction_model").map(String::as_str).unwrap_or("1")
        {
            "1" => CorrectionModel::Model1,
            "2" => CorrectionModel::Model2,
            other => {
                return Err(ConfigError::BadValue {
                    key: "correction_model".into(),
                    msg: format!("expected 1 or 2, got {other:?}"),
                })
            }
        };
        let coeffs = PhysicsCoefficients {
            mu_i: parse_f64(&map, "mu_i", d.mu_i)?,
            z: parse_f64(&map, "z", d.z)?,
            gamma: parse_f64(&map, "gamma", d.gamma)?,
            zeta: parse_f64(&map, "zeta", d.zeta)?,
            nu_num: parse_f64(&map, "nu_num", d.nu_num)?,
            nu_phys: parse_f64(&map, "nu_phys", d.nu_phys)?,
            n0: parse_f64(&map, "n0", d.n0)?,
            chi_par_e: parse_f64(&map, "chi_par_e", d.chi_par_e)?,
            chi_par_i: parse_f64(&map, "chi_par_i", d.chi_par_i)?,
            chi_perp_e: parse_f64(&map, "chi_perp_e", d.chi_perp_e)?,
            chi_perp_i: parse_f64(&map, "chi_perp_i", d.chi_perp_i)?,
            eta_max: parse_f64(&map, "eta_max", d.eta_max)?,
            correction_model,
        };

        let velocity_bc = match map.get("velocity_bc").map(String::as_str).unwrap_or("all-zero") {
            "all-zero" => VelocityBc::AllZero,
            "poloidal-zero" => VelocityBc::PoloidalZero,
            "normal-zero" => VelocityBc::NormalZero,
            other => {
                return Err(ConfigError::BadValue {
                    key: "velocity_bc".into(),
                    msg: format!("expected all-zero|poloidal-zero|normal-zero, got {other:?}"),
                })
            }
        };
        let pressure_bc_wall = match map.get("pressure_bc").map(String::as_str).unwrap_or("wall") {
            "wall" => true,
            "natural" => false,
            other => {
                return Err(ConfigError::BadValue {
                    key: "pressure_bc".into(),
                    msg: format!("expected wall|natural, got {other:?}"),
                })
            }
        };
        let t_wall_ev = parse_f64(&map, "t_wall_ev", 0.02)?;

        let coupling = if map.contains_key("interface_r") {
            Some(CouplingConfig {
                interface_r: parse_f64_req(&map, "interface_r")?,
                wall_h_i: parse_f64_req(&map, "wall_h_i")?,
                wall_r_out: parse_f64_req(&map, "wall_r_out")?,
            })
        } else {
            None
        };
        let formation = if map.contains_key("v_gun_csv") {
            Some(FormationConfig {
                v_gun_csv: path_of(map.get("v_gun_csv").unwrap()),
                v_form_scale: parse_f64(&map, "v_form_scale", 1.0)?,
                tau_lr: parse_f64(&map, "tau_lr", 90e-6)?,
                m_slope: parse_f64(&map, "m_slope", 40.0)?,
            })
        } else {
            None
        };
        let coils = if ["psi_main_csv", "psi_lev_csv", "psi_comp_csv"]
            .iter()
            .any(|k| map.contains_key(*k))
        {
            Some(CoilConfig {
                psi_main_csv: map.get("psi_main_csv").map(|v| path_of(v)),
                i_main_scale: parse_f64(&map, "i_main_scale", 1.0)?,
                psi_lev_csv: map.get("psi_lev_csv").map(|v| path_of(v)),
                i_lev_csv: map.get("i_lev_csv").map(|v| path_of(v)),
                psi_comp_csv: map.get("psi_comp_csv").map(|v| path_of(v)),
                i_comp_csv: map.get("i_comp_csv").map(|v| path_of(v)),
                t_comp: parse_f64(&map, "t_comp", 45e-6)?,
            })
        } else {
            None
        };
        let init = InitConfig {
            n_high: parse_f64(&map, "n_high", 10.0)?,
            n_low: parse_f64(&map, "n_low", 0.1)?,
            sigma_n2: parse_f64(&map, "sigma_n2", 0.005)?,
            z_gp: parse_f64(&map, "z_gp", -0.43)?,
            init_ti_ev: parse_f64(&map, "init_ti_ev", 1.0)?,
            init_te_ev: parse_f64(&map, "init_te_ev", 1.0)?,
        };

        let mut probes = Vec::new();
        if let Some(v) = map.get("probe_pol") {
            let p = parse_floats("probe_pol", v, 2)?;
            probes.push(("probe_pol".to_string(), p[0], p[1], ProbeChannel::Poloidal));
        }
        if let Some(v) = map.get("probe_tor") {
            let p = parse_floats("probe_tor", v, 2)?;
            probes.push(("probe_tor".to_string(), p[0], p[1], ProbeChannel::Toroidal));
        }
        let mut chords = Vec::new();
        if let Some(v) = map.get("chord_ne") {
            let p = parse_floats("chord_ne", v, 4)?;
            chords.push((
                "chord_ne".to_string(),
                [p[0], p[1]],
                [p[2], p[3]],
                ChordField::ElectronDensity,
            ));
        }
        if let Some(v) = map.get("chord_ti") {
            let p = parse_floats("chord_ti", v, 4)?;
            chords.push((
                "chord_ti".to_string(),
                [p[0], p[1]],
                [p[2], p[3]],
                ChordField::IonTemperatureEv,
            ));
        }

        Ok(RunConfig {
            mesh_path,
            mode,
            dt,
            t_end,
            scheme,
            output_dt,
            output_dir,
            coeffs,
            velocity_bc,
            pressure_bc_wall,
            t_wall_ev,
            coupling,
            formation,
            coils,
            init,
            probes,
            chords,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::parse(&text, base)
    }
}

/// One row of a verification report.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub name: String,
    pub residual: f64,
    pub threshold: f64,
    pub passed: bool,
    pub note: String,
}

impl ReportRow {
    fn new(name: impl Into<String>, residual: f64, threshold: f64) -> Self {
        ReportRow {
            name: name.into(),
            residual,
            threshold,
            passed: residual.abs() <= threshold,
            note: String::new(),
        }
    }
    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

pub fn print_report(title: &str, rows: &[ReportRow]) -> bool {
    println!("== {title} ==");
    let mut all = true;
    for r in rows {
        let status = if r.passed { "pass" } else { "FAIL" };
        let note = if r.note.is_empty() { String::new() } else { format!("  [{}]", r.note) };
        println!(
            "  {:<42} {:>12.3e}  (tol {:>9.1e})  {status}{note}",
            r.name, r.residual, r.threshold
        );
        all &= r.passed;
    }
    all
}

/// Operator identity suite on one mesh: annihilation, adjointness, the
/// volume-average identity, interior antisymmetries, and exactness on
/// linear fields, all over `n_fields` random nodal/element fields.
pub fn operator_identity_rows(mesh: &Mesh, n_fields: usize, seed: u64) -> Result<Vec<ReportRow>, OpsError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let geom = compute_geometry(mesh);
    let ops = build_operators(mesh, &geom)?;
    let nn = mesh.n_nodes();
    let ne = mesh.n_elements();
    let dv = &geom.dv_n;
    let dv_e = &geom.dv_e;

    let mut worst: HashMap<&'static str, f64> = HashMap::new();
    let mut track = |name: &'static str, rel: f64| {
        let w = worst.entry(name).or_insert(0.0);
        if rel > *w {
            *w = rel;
        }
    };

    for _ in 0..n_fields {
        let u: Vec<f64> = (0..nn).map(|_| rng.gen::<f64>() - 0.5).collect();
        let q: Vec<f64> = (0..nn).map(|_| rng.gen::<f64>() - 0.5).collect();
        let pr: Vec<f64> = (0..nn).map(|_| rng.gen::<f64>() - 0.5).collect();
        let pz: Vec<f64> = (0..nn).map(|_| rng.gen::<f64>() - 0.5).collect();
        let per: Vec<f64> = (0..ne).map(|_| rng.gen::<f64>() - 0.5).collect();
        let pez: Vec<f64> = (0..ne).map(|_| rng.gen::<f64>() - 0.5).collect();
        let ue: Vec<f64> = (0..ne).map(|_| rng.gen::<f64>() - 0.5).collect();

        // annihilation: dV^T (element-to-node divergence) = 0
        {
            let d = divergence(&ops, &geom, &per, &pez, Flavor::ElementToNode);
            let gross: f64 = d.iter().zip(dv).map(|(a, b)| (a * b).abs()).sum();
            track("annihilation: div_en", dot(dv, &d).abs() / gross.max(1e-300));
        }
        // annihilation: dV^T (Laplacian u) = 0
        {
            let d = ops.lap.matvec(&u);
            let gross: f64 = d.iter().zip(dv).map(|(a, b)| (a * b).abs()).sum();
            track("annihilation: laplacian", dot(dv, &d).abs() / gross.max(1e-300));
        }
        // annihilation: dV^T ((GS operator psi) / r^2) = 0
        {
            let d = ops.delta_star.matvec(&u);
            let w: Vec<f64> = d
                .iter()
                .zip(&geom.r_n)
                .map(|(a, r)| a / (r * r))
                .collect();
            let gross: f64 = w.iter().zip(dv).map(|(a, b)| (a * b).abs()).sum();
            track("annihilation: gs-operator", dot(dv, &w).abs() / gross.max(1e-300));
        }
        // adjointness 1: dV^T [P . grad_n U^e] + dVe^T [U^e (div^e P)] = 0
        {
            let gr = ops.drn.matvec(&ue);
            let gz = ops.dzn.matvec(&ue);
            let a: f64 = (0..nn).map(|i| dv[i] * (pr[i] * gr[i] + pz[i] * gz[i])).sum();
            let d = divergence(&ops, &geom, &pr, &pz, Flavor::NodeToElement);
            let b: f64 = (0..ne).map(|e| dv_e[e] * ue[e] * d[e]).sum();
            let gross: f64 = (0..nn)
                .map(|i| (dv[i] * (pr[i] * gr[i] + pz[i] * gz[i])).abs())
                .sum::<f64>()
                + (0..ne).map(|e| (dv_e[e] * ue[e] * d[e]).abs()).sum::<f64>();
            track("adjointness: node-grad pair", (a + b).abs() / gross.max(1e-300));
        }
        // adjointness 2: dV^T [U (div_n P^e)] + dVe^T [P^e . grad^e U] = 0
        {
            let d = divergence(&ops, &geom, &per, &pez, Flavor::ElementToNode);
            let a: f64 = (0..nn).map(|i| dv[i] * u[i] * d[i]).sum();
            let gr = ops.dre.matvec(&u);
            let gz = ops.dze.matvec(&u);
            let b: f64 = (0..ne)
                .map(|e| dv_e[e] * (per[e] * gr[e] + pez[e] * gz[e]))
                .sum();
            let gross: f64 = (0..nn).map(|i| (dv[i] * u[i] * d[i]).abs()).sum::<f64>()
                + (0..ne)
                    .map(|e| (dv_e[e] * (per[e] * gr[e] + pez[e] * gz[e])).abs())
                    .sum::<f64>();
            track("adjointness: elem-grad pair", (a + b).abs() / gross.max(1e-300));
        }
        // volume-average identity: dV^T (Q o Wn u_e) = dVe^T (Q_e o u_e)
        {
            let w = ops.wn.matvec(&ue);
            let a: f64 = (0..nn).map(|i| dv[i] * q[i] * w[i]).sum();
            let qe = crate::ops::node_to_element_average(&geom, &q);
            let b: f64 = (0..ne).map(|e| dv_e[e] * qe[e] * ue[e]).sum();
            let gross: f64 = (0..nn).map(|i| (dv[i] * q[i] * w[i]).abs()).sum::<f64>()
                + (0..ne).map(|e| (dv_e[e] * qe[e] * ue[e]).abs()).sum::<f64>();
            track("volume-average identity", (a - b).abs() / gross.max(1e-300));
        }
    }

    let mut rows: Vec<ReportRow> = worst
        .into_iter()
        .map(|(name, rel)| ReportRow::new(name, rel, 1e-12))
        .collect();
    rows.sort_by(|a, b| a.name.cmp(&b.name));

    // interior antisymmetry of the node-to-node first derivatives
    {
        let cross = ops
            .dze
            .transpose()
            .scale_cols(&geom.s_e)
            .matmul(&ops.dre)
            .add_scaled(&ops.dre.transpose().scale_cols(&geom.s_e).matmul(&ops.dze), -1.0);
        let sdr = ops.dr.scale_rows(&geom.s_n);
        let sym = sdr.add_scaled(&sdr.transpose(), 1.0);
        let max_entry_cross = cross.max_abs().max(1e-300);
        let max_entry_sym = sym.max_abs().max(1e-300);
        let mut worst_cross = 0.0f64;
        let mut worst_sym = 0.0f64;
        for i in 0..nn {
            if !ops.interior[i] {
                continue;
            }
            let (cols, vals) = cross.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if ops.interior[j] {
                    worst_cross = worst_cross.max(v.abs() / max_entry_cross);
                }
            }
            let (cols, vals) = sym.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if ops.interior[j] {
                    worst_sym = worst_sym.max(v.abs() / max_entry_sym);
                }
            }
        }
        rows.push(ReportRow::new("antisymmetry: cross-derivative", worst_cross, 1e-13));
        rows.push(ReportRow::new("antisymmetry: radial-derivative", worst_sym, 1e-13));
    }

    // exactness on linear fields a + b r + c z
    {
        let lin: Vec<f64> = mesh.nodes.iter().map(|p| 0.7 - 1.3 * p[0] + 2.1 * p[1]).collect();
        let mut worst_lin = 0.0f64;
        for (g, expect) in [
            (ops.dre.matvec(&lin), -1.3),
            (ops.dze.matvec(&lin), 2.1),
        ] {
            for v in &g {
                worst_lin = worst_lin.max((v - expect).abs() / 2.1);
            }
        }
        for (g, expect, interior_only) in [
            (ops.dr.matvec(&lin), -1.3, true),
            (ops.dz.matvec(&lin), 2.1, true),
        ] {
            for (i, v) in g.iter().enumerate() {
                if !interior_only || ops.interior[i] {
                    worst_lin = worst_lin.max((v - expect).abs() / 2.1);
                }
            }
        }
        rows.push(ReportRow::new("exactness on linears", worst_lin, 1e-13));

        let ones = vec![1.0; nn];
        let lap1 = max_abs(&ops.lap.matvec(&ones));
        let ds1 = max_abs(&ops.delta_star.matvec(&ones));
        let scale = ops.lap.max_abs().max(ops.delta_star.max_abs());
        rows.push(ReportRow::new("derivatives of constants", (lap1 + ds1) / scale, 1e-13));
    }

    Ok(rows)
}

/// Identity suite with pass/fail table on one mesh (CLI entry).
pub fn verify_operators(mesh: &Mesh) -> Result<bool, RunError> {
    let rows = operator_identity_rows(mesh, 100, 0x5eed)?;
    Ok(print_report("operator identities", &rows))
}

/// Deterministic smooth magnetized state with psi and the poloidal
/// velocity vanishing on the rectangle boundary; used by the
/// conservation suites.
pub fn smooth_magnetized_state(model: &Model) -> PlasmaState {
    let nn = model.mesh.n_nodes();
    let (mut rmin, mut rmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut zmin, mut zmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in &model.mesh.nodes {
        rmin = rmin.min(p[0]);
        rmax = rmax.max(p[0]);
        zmin = zmin.min(p[1]);
        zmax = zmax.max(p[1]);
    }
    let mut s = PlasmaState::zeros(nn);
    for i in 0..nn {
        let [r, z] = model.mesh.nodes[i];
        let x = (r - rmin) / (rmax - rmin);
        let y = (z - zmin) / (zmax - zmin);
        let bump = (x * (1.0 - x) * y * (1.0 - y)).powi(2) * 256.0;
        s.n[i] = 1e20 * (1.0 + 0.5 * bump);
        s.vr[i] = 3e3 * bump * (y - 0.5);
        s.vz[i] = 3e3 * bump * (0.5 - x);
        s.vphi[i] = 2e3 * bump;
        s.pi[i] = 200.0 * (1.0 + bump);
        s.pe[i] = model.coeffs.z * 200.0 * (1.0 + bump);
        s.psi[i] = 4e-3 * bump;
        s.f[i] = 0.05 * r * r * (1.0 + 0.1 * y);
    }
    model.apply_boundary_conditions(&mut s).expect("static boundary data");
    s
}

/// Summary of a conservation run.
#[derive(Debug)]
pub struct ConservationReport {
    pub rows: Vec<ReportRow>,
    pub passed: bool,
}

/// Particle / toroidal-flux / angular-momentum suite: advance the smooth
/// magnetized state with {psi=0 on the boundary, poloidal velocity zeroed,
/// v_phi and f free, zeta = 0} and report the relative drifts.
pub fn conservation_suite_momentum(
    mesh: Mesh,
    mut coeffs: PhysicsCoefficients,
    dt: f64,
    n_steps: usize,
    scheme: Scheme,
) -> Result<ConservationReport, RunError> {
    coeffs.zeta = 0.0;
    let note_zeta = String::new();
    let bc = BoundaryConditions {
        velocity: VelocityBc::PoloidalZero,
        psi: PsiBc::Zero,
        ..Default::default()
    };
    let model = Model::new(mesh, coeffs, bc).map_err(|e| RunError::Step { step: 0, t: 0.0, source: e })?;
    let mut s = smooth_magnetized_state(&model);
    let first = conserved_quantities(&model.geom, &model.ops, &model.coeffs, &s);
    for step in 0..n_steps {
        s = model
            .step(&s, dt, scheme)
            .map_err(|e| RunError::Step { step, t: s.t, source: e })?;
    }
    let last = conserved_quantities(&model.geom, &model.ops, &model.coeffs, &s);
    let p_scale = {
        // angular-momentum scale: rho r |v| integrated
        let m_i = model.coeffs.m_i();
        let first_abs: f64 = (0..model.mesh.n_nodes())
            .map(|i| {
                model.geom.dv_n[i]
                    * m_i
                    * 1e20
                    * model.geom.r_n[i]
                    * 2e3
            })
            .sum();
        first_abs
    };
    let rows = vec![
        ReportRow::new("particle drift |dN|/N", (last.n - first.n) / first.n, 1e-12)
            .with_note(note_zeta.clone()),
        ReportRow::new("flux drift |dPhi|/|Phi|", (last.phi - first.phi) / first.phi, 1e-12),
        ReportRow::new("angular momentum drift (scaled)", (last.p_phi - first.p_phi) / p_scale, 1e-9),
    ];
    let passed = rows.iter().all(|r| r.passed);
    Ok(ConservationReport { rows, passed })
}

/// Energy suite: same state with nu_phys forced equal to nu_num, the
/// symmetrized density corrections active, and all velocity components
/// zeroed on the boundary; reports the per-step semi-discrete energy
/// residual, the integrated drift, and the bracket residuals.
pub fn conservation_suite_energy(
    mesh: Mesh,
    mut coeffs: PhysicsCoefficients,
    dt: f64,
    n_steps: usize,
    scheme: Scheme,
) -> Result<ConservationReport, RunError> {
    coeffs.nu_phys = coeffs.nu_num;
    coeffs.correction_model = CorrectionModel::Model2;
    let zeta = coeffs.zeta;
    let model_note = if zeta > 0.0 { "model 2" } else { "zeta = 0" };
    let bc = BoundaryConditions {
        velocity: VelocityBc::AllZero,
        psi: PsiBc::Zero,
        ..Default::default()
    };
    let model = Model::new(mesh, coeffs, bc).map_err(|e| RunError::Step { step: 0, t: 0.0, source: e })?;
    let mut s = smooth_magnetized_state(&model);
    let first = conserved_quantities(&model.geom, &model.ops, &model.coeffs, &s);
    let mut worst_residual = 0.0f64;
    for step in 0..n_steps {
        let rate = model
            .rhs(&s)
            .map_err(|e| RunError::Step { step, t: s.t, source: e })?;
        let rates = balance_rates(&model.geom, &model.ops, &model.coeffs, &s, &rate);
        let gross: f64 = rates.u_k_rate.abs() + rates.u_th_rate.abs() + rates.u_m_rate.abs();
        worst_residual = worst_residual.max(rates.u_rate.abs() / gross.max(1e-300));
        s = model
            .step(&s, dt, scheme)
            .map_err(|e| RunError::Step { step, t: s.t, source: e })?;
    }
    let last = conserved_quantities(&model.geom, &model.ops, &model.coeffs, &s);
    let brackets = energy_brackets(&model, &s)
        .map_err(|e| RunError::Step { step: n_steps, t: s.t, source: e })?;

    let mut rows = vec![
        ReportRow::new("per-step energy residual (rel)", worst_residual, 1e-11)
            .with_note(model_note),
        ReportRow::new(
            "integrated energy drift |dU|/U",
            (last.u_total - first.u_total) / first.u_total,
            1e-9,
        ),
    ];
    for b in &brackets {
        rows.push(ReportRow::new(
            format!("bracket: {}", b.name),
            b.residual / b.gross.max(1e-300),
            1e-11,
        ));
    }
    if zeta > 0.0 {
        rows.push(
            ReportRow::new("angular momentum", 0.0, f64::INFINITY)
                .with_note("not conserved (model 2)"),
        );
    }
    let passed = rows.iter().all(|r| r.passed);
    Ok(ConservationReport { rows, passed })
}

pub fn verify_conservation(cfg: &RunConfig) -> Result<bool, RunError> {
    let mesh = Mesh::load(&cfg.mesh_path)?;
    let n_steps = ((cfg.t_end / cfg.dt).round() as usize).max(1);
    let rep_m = conservation_suite_momentum(mesh.clone(), cfg.coeffs.clone(), cfg.dt, n_steps, cfg.scheme)?;
    let ok_m = print_report("particle / flux / angular momentum conservation", &rep_m.rows);
    let rep_e = conservation_suite_energy(mesh, cfg.coeffs.clone(), cfg.dt, n_steps, cfg.scheme)?;
    let ok_e = print_report("energy conservation", &rep_e.rows);
    Ok(ok_m && ok_e)
}

/// Write a rectangle mesh to `path` (CLI `mesh-rect`).
pub fn generate_mesh_file(
    r0: f64,
    r1: f64,
    z0: f64,
    z1: f64,
    h: f64,
    path: &Path,
) -> Result<(), RunError> {
    let mesh = generate_rect_mesh((r0, r1), (z0, z1), h)?;
    mesh.save(path)?;
    println!(
        "wrote {} nodes / {} elements to {}",
        mesh.n_nodes(),
        mesh.n_elements(),
        path.display()
    );
    Ok(())
}

struct CoilTables {
    /// Per combined-mesh boundary node.
    drive: CoilDrive,
}

fn load_coils(mesh: &Mesh, cfg: &CoilConfig) -> Result<CoilTables, RunError> {
    let nb = mesh.boundary_nodes.len();
    let zeros = vec![0.0; nb];
    let mut psi_main = match &cfg.psi_main_csv {
        Some(p) => boundary_table_from_csv(mesh, p)?,
        None => zeros.clone(),
    };
    for v in &mut psi_main {
        *v *= cfg.i_main_scale;
    }
    let psi_lev = match &cfg.psi_lev_csv {
        Some(p) => boundary_table_from_csv(mesh, p)?,
        None => zeros.clone(),
    };
    let psi_comp = match &cfg.psi_comp_csv {
        Some(p) => boundary_table_from_csv(mesh, p)?,
        None => zeros,
    };
    let far = 1.0; // waveform support horizon [s], far beyond any run
    let i_lev = match &cfg.i_lev_csv {
        Some(p) => Waveform::from_csv(p)?,
        None => Waveform::constant(1.0, 0.0, far),
    };
    let i_comp = match &cfg.i_comp_csv {
        Some(p) => Waveform::from_csv(p)?,
        None => Waveform::constant(0.0, 0.0, far),
    };
    Ok(CoilTables {
        drive: CoilDrive {
            psi_main,
            psi_lev,
            psi_comp,
            i_lev,
            i_comp,
            t_comp: cfg.t_comp,
        },
    })
}

/// Map each boundary node of `sub` to the combined-mesh boundary table
/// position at identical coordinates; `None` where the node is not on the
/// combined boundary (i.e. the interface column).
fn boundary_lookup(sub: &Mesh, combined: &Mesh) -> Vec<Option<usize>> {
    sub.boundary_nodes
        .iter()
        .map(|&i| {
            let p = sub.nodes[i];
            combined
                .boundary_nodes
                .iter()
                .position(|&j| {
                    let q = combined.nodes[j];
                    (p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12
                })
        })
        .collect()
}

/// Transfer a combined-mesh nodal field to a submesh by coordinate match.
fn restrict_field(sub: &Mesh, combined: &Mesh, field: &[f64]) -> Vec<f64> {
    sub.nodes
        .iter()
        .map(|p| {
            let j = combined
                .nodes
                .iter()
                .position(|q| (p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12)
                .expect("submesh node exists in combined mesh");
            field[j]
        })
        .collect()
}

/// Full simulation driver (CLI `run`, simulate mode).
pub fn run_simulation(cfg: &RunConfig) -> Result<(), RunError> {
    let combined = Mesh::load(&cfg.mesh_path)?;
    std::fs::create_dir_all(&cfg.output_dir)?;

    // domain split and vacuum machinery
    let (plasma_mesh, split, vac) = match &cfg.coupling {
        Some(cc) => {
            let wall = WallGeometry {
                h_i: cc.wall_h_i,
                r_in: cc.interface_r,
                r_out: cc.wall_r_out,
            };
            let split = split_domain(&combined, cc.interface_r, wall)?;
            let vac = VacuumSolver::new(&split.insulator)?;
            (split.plasma.clone(), Some(split), Some(vac))
        }
        None => (combined.clone(), None, None),
    };

    // coil tables on the combined mesh; initial psi from a whole-domain
    // vacuum solve with the t = 0 boundary values
    let coils = match &cfg.coils {
        Some(c) => Some(load_coils(&combined, c)?),
        None => None,
    };
    let initial_psi_combined = match &coils {
        Some(ct) => {
            let bvals = ct.drive.boundary_psi(0.0)?;
            let solver = VacuumSolver::new(&combined)?;
            let mut data = vec![0.0; combined.n_nodes()];
            for (k, &nidx) in combined.boundary_nodes.iter().enumerate() {
                data[nidx] = bvals[k];
            }
            solver.solve(&data)?
        }
        None => vec![0.0; combined.n_nodes()],
    };

    // interface bookkeeping
    let interface_nodes: Vec<usize> = split
        .as_ref()
        .map(|sp| sp.interface_map.iter().map(|&(p, _)| p).collect())
        .unwrap_or_default();
    let l_ins = split.as_ref().map(|sp| wall_inductance(&sp.wall)).unwrap_or(0.0);

    let bc = BoundaryConditions {
        velocity: cfg.velocity_bc,
        psi: PsiBc::Fixed(vec![0.0; plasma_mesh.boundary_nodes.len()]),
        t_wall_ev: cfg.pressure_bc_wall.then_some(cfg.t_wall_ev),
        f_interface: (!interface_nodes.is_empty()).then(|| InterfaceBc {
            nodes: interface_nodes.clone(),
            values: vec![0.0; interface_nodes.len()],
        }),
        psi_free: interface_nodes.clone(),
    };
    let mut model = Model::new(plasma_mesh, cfg.coeffs.clone(), bc)
        .map_err(|e| RunError::Step { step: 0, t: 0.0, source: e })?;

    // boundary value plumbing between combined tables and submeshes
    let plasma_lookup = boundary_lookup(&model.mesh, &combined);
    let insulator_lookup = split
        .as_ref()
        .map(|sp| boundary_lookup(&sp.insulator, &combined));

    // initial state
    let nn = model.mesh.n_nodes();
    let mut s = PlasmaState::zeros(nn);
    s.n = initial_density(
        &model.mesh,
        cfg.coeffs.n0,
        cfg.init.sigma_n2,
        cfg.init.n_high,
        cfg.init.n_low,
        cfg.init.z_gp,
    )?;
    for i in 0..nn {
        s.pi[i] = s.n[i] * cfg.init.init_ti_ev * QE;
        s.pe[i] = cfg.coeffs.z * s.n[i] * cfg.init.init_te_ev * QE;
    }
    s.psi = restrict_field(&model.mesh, &combined, &initial_psi_combined);

    // formation drive
    let formation = match &cfg.formation {
        Some(fc) => {
            let mut w = Waveform::from_csv(&fc.v_gun_csv)?;
            if fc.v_form_scale != 1.0 {
                let (t0, t1) = w.support();
                let samples: Vec<f64> = (0..=200)
                    .map(|k| t0 + (t1 - t0) * k as f64 / 200.0)
                    .collect();
                let vals: Result<Vec<f64>, _> =
                    samples.iter().map(|&t| w.eval(t).map(|v| v * fc.v_form_scale)).collect();
                w = Waveform::new(samples, vals?)?;
            }
            let drive = FormationDrive::new(
                &model.mesh,
                &model.geom,
                w,
                fc.tau_lr,
                fc.m_slope,
                cfg.init.z_gp,
            );
            Some((drive, FluxIntegrator::new(fc.tau_lr)))
        }
        None => None,
    };
    let mut formation = formation;

    // diagnostics plumbing
    let probes: Vec<(String, Probe)> = cfg
        .probes
        .iter()
        .map(|(label, r, z, ch)| (label.clone(), place_probe(&model.mesh, *r, *z, *ch)))
        .collect();
    let probe_labels: Vec<String> = probes.iter().map(|(l, _)| l.clone()).collect();
    let chord_labels: Vec<String> = cfg.chords.iter().map(|(l, ..)| l.clone()).collect();
    let mut series = TimeSeriesWriter::create(
        &cfg.output_dir.join("timeseries.csv"),
        &probe_labels,
        &chord_labels,
    )?;
    let mut flux_file = std::fs::File::create(cfg.output_dir.join("flux_accounting.csv"))?;
    {
        use std::io::Write;
        writeln!(flux_file, "t,phi_form,phi_plasma,f_i,phi_wall,phi_total,residual")?;
    }

    // stability advisory
    {
        let h_e = model
            .geom
            .s_e
            .iter()
            .map(|s| (2.0 * s).sqrt())
            .fold(f64::INFINITY, f64::min);
        let diffusivities = [
            cfg.coeffs.zeta,
            cfg.coeffs.nu_num,
            cfg.coeffs.nu_phys,
            cfg.coeffs.chi_par_e,
            cfg.coeffs.chi_par_i,
            cfg.coeffs.chi_perp_e,
            cfg.coeffs.chi_perp_i,
            cfg.coeffs.eta_max,
        ];
        let d_min = diffusivities.iter().copied().filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min);
        let d_max = diffusivities.iter().copied().fold(0.0f64, f64::max);
        let v_max = 1e5; // conservative Alfvenic scale for the advisory
        let b = stability_dt(d_min, d_max, v_max, h_e, 0.5);
        if cfg.dt > b.dt {
            eprintln!(
                "warning: dt = {:.3e} s exceeds advisory bound {:.3e} s (advective {:.3e}, diffusive {:.3e})",
                cfg.dt, b.dt, b.advective, b.diffusive
            );
        }
    }

    let mut phi_form_prev = 0.0f64;
    let mut fi_current = 0.0f64;
    let n_steps = (cfg.t_end / cfg.dt).round() as usize;
    let mut next_output = 0.0f64;

    let emit = |s: &PlasmaState,
                    model: &Model,
                    fi: f64,
                    phi_form: f64,
                    series: &mut TimeSeriesWriter,
                    flux_file: &mut std::fs::File|
     -> Result<(), RunError> {
        let rec = conserved_quantities(&model.geom, &model.ops, &model.coeffs, s);
        let probe_vals: Vec<f64> = probes
            .iter()
            .map(|(_, p)| probe_signal(&model.geom, &model.ops, &model.frame, s, p))
            .collect();
        let chord_vals: Vec<f64> = cfg
            .chords
            .iter()
            .map(|(_, p1, p2, field)| {
                chord_average(&model.mesh, &model.coeffs, s, &Chord { p1: *p1, p2: *p2, field: *field })
            })
            .collect::<Result<_, _>>()?;
        series.write_row(&rec, &probe_vals, &chord_vals)?;

        // flux accounting: plasma + wall total against the injected flux
        let phi_plasma: f64 = (0..s.f.len())
            .map(|i| s.f[i] * model.geom.s_n[i] / (3.0 * model.geom.r_n[i]))
            .sum();
        let phi_wall = fi * l_ins;
        let total = phi_plasma + phi_wall;
        use std::io::Write;
        writeln!(
            flux_file,
            "{},{},{},{},{},{},{}",
            s.t,
            phi_form,
            phi_plasma,
            fi,
            phi_wall,
            total,
            total - phi_form
        )?;
        Ok(())
    };

    // initial boundary values and record
    update_psi_bc(&mut model, &coils, &plasma_lookup, 0.0, &s)?;
    model
        .apply_boundary_conditions(&mut s)
        .map_err(|e| RunError::Step { step: 0, t: 0.0, source: e })?;
    emit(&s, &model, fi_current, 0.0, &mut series, &mut flux_file)?;
    next_output += cfg.output_dt;

    for step in 0..n_steps {
        let t_new = s.t + cfg.dt;

        // 1. inject formation flux
        let mut f_form_new: Option<Vec<f64>> = None;
        if let Some((drive, acc)) = &mut formation {
            let f_old = drive.field_for_flux(phi_form_prev);
            let phi_new = acc.advance(&drive.v_gun.clone(), cfg.dt)?;
            let f_new = drive.field_for_flux(phi_new);
            for i in 0..nn {
                s.f[i] += f_new[i] - f_old[i];
            }
            phi_form_prev = phi_new;
            f_form_new = Some(f_new);
        }

        // 2. advance the plasma; boundary psi is held at the step-target
        // time, interface values at their last coupled values
        update_psi_bc(&mut model, &coils, &plasma_lookup, t_new, &s)?;
        s = model
            .step(&s, cfg.dt, cfg.scheme)
            .map_err(|e| RunError::Step { step, t: t_new, source: e })?;

        // 3. vacuum coupling
        if let (Some(sp), Some(vs), Some(il)) = (&split, &vac, &insulator_lookup) {
            let plasma_bc = boundary_values(&coils, &plasma_lookup, t_new)?;
            let insulator_bc = boundary_values(&coils, il, t_new)?;
            couple_step(&mut s.psi, vs, sp, &plasma_bc, &insulator_bc)
                .map_err(|e| RunError::Coupling { step, t: t_new, source: e })?;

            // 4. wall flux constant on the conserving share of f
            let f_p: Vec<f64> = match &f_form_new {
                Some(ff) => s.f.iter().zip(ff).map(|(a, b)| a - b).collect(),
                None => s.f.clone(),
            };
            fi_current = flux_constant_fi(
                &f_p,
                &model.geom.s_n,
                &model.geom.r_n,
                &interface_nodes,
                l_ins,
            );
            let values: Vec<f64> = interface_nodes
                .iter()
                .map(|&i| fi_current + f_form_new.as_ref().map_or(0.0, |ff| ff[i]))
                .collect();
            for (&i, &v) in interface_nodes.iter().zip(&values) {
                s.f[i] = v;
            }
            if let Some(ib) = &mut model.bc.f_interface {
                ib.values = values;
            }
        }

        // 5. diagnostics cadence (simulated time, not step count)
        if s.t + 1e-12 * cfg.dt >= next_output || step + 1 == n_steps {
            emit(&s, &model, fi_current, phi_form_prev, &mut series, &mut flux_file)?;
            while next_output <= s.t + 1e-12 * cfg.dt {
                next_output += cfg.output_dt;
            }
        }
    }

    // final snapshot
    write_snapshot(
        &cfg.output_dir,
        "final",
        s.t,
        &[
            ("n", &s.n[..]),
            ("vr", &s.vr[..]),
            ("vphi", &s.vphi[..]),
            ("vz", &s.vz[..]),
            ("pi", &s.pi[..]),
            ("pe", &s.pe[..]),
            ("psi", &s.psi[..]),
            ("f", &s.f[..]),
        ],
    )?;
    Ok(())
}

fn boundary_values(
    coils: &Option<CoilTables>,
    lookup: &[Option<usize>],
    t: f64,
) -> Result<Vec<Option<f64>>, RunError> {
    let vals = match coils {
        Some(ct) => Some(ct.drive.boundary_psi(t)?),
        None => None,
    };
    Ok(lookup
        .iter()
        .map(|pos| match (pos, &vals) {
            (Some(k), Some(v)) => Some(v[*k]),
            (Some(_), None) => Some(0.0),
            (None, _) => None,
        })
        .collect())
}

fn update_psi_bc(
    model: &mut Model,
    coils: &Option<CoilTables>,
    plasma_lookup: &[Option<usize>],
    t: f64,
    s: &PlasmaState,
) -> Result<(), RunError> {
    let outer = boundary_values(coils, plasma_lookup, t)?;
    let fixed: Vec<f64> = model
        .mesh
        .boundary_nodes
        .iter()
        .zip(&outer)
        .map(|(&node, v)| v.unwrap_or(s.psi[node]))
        .collect();
    model.bc.psi = PsiBc::Fixed(fixed);
    Ok(())
}

/// Top-level dispatch used by the CLI.
pub fn run(cfg: &RunConfig) -> Result<bool, RunError> {
    match cfg.mode {
        Mode::Simulate => {
            run_simulation(cfg)?;
            Ok(true)
        }
        Mode::VerifyOperators => {
            let mesh = Mesh::load(&cfg.mesh_path)?;
            verify_operators(&mesh)
        }
        Mode::VerifyConservation => verify_conservation(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_minimal_config() {
        let cfg = RunConfig::parse(
            "mesh = m.mesh\ndt = 1e-8\nt_end = 1e-6\n# comment\nscheme = rk4\n",
            Path::new("/tmp"),
        )
        .unwrap();
        assert_eq!(cfg.mesh_path, PathBuf::from("/tmp/m.mesh"));
        assert_eq!(cfg.scheme, Scheme::Rk4);
        assert_eq!(cfg.mode, Mode::Simulate);
        assert!(cfg.coupling.is_none());
        assert_eq!(cfg.coeffs.zeta, 50.0);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let base = Path::new(".");
        assert!(matches!(
            RunConfig::parse("dt = 1e-8\nt_end = 1e-6\n", base),
            Err(ConfigError::MissingKey(_))
        ));
        assert!(matches!(
            RunConfig::parse("mesh = m\ndt = 1e-8\nt_end = 1e-9\n", base),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            RunConfig::parse("mesh = m\ndt = 1e-8\nt_end = 1e-6\nbogus = 1\n", base),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            RunConfig::parse("mesh = m\ndt = 1e-8\nt_end = 1e-6\nzeta = soup\n", base),
            Err(ConfigError::BadValue { .. })
        ));
    }

    #[test]
    fn identity_suite_passes_on_small_meshes() {
        let mesh = crate::mesh::two_element_mesh();
        let rows = operator_identity_rows(&mesh, 20, 1).unwrap();
        for r in &rows {
            assert!(r.passed, "{}: {:.3e}", r.name, r.residual);
        }
        let mesh = generate_rect_mesh((0.5, 1.5), (0.0, 1.0), 0.25).unwrap();
        let rows = operator_identity_rows(&mesh, 20, 2).unwrap();
        for r in &rows {
            assert!(r.passed, "{}: {:.3e}", r.name, r.residual);
        }
    }

    #[test]
    fn conservation_suites_pass_briefly() {
        let mesh = generate_rect_mesh((0.3, 1.3), (0.0, 1.0), 0.125).unwrap();
        let coeffs = PhysicsCoefficients { z: 1.0, ..PhysicsCoefficients::default() };
        let rep = conservation_suite_momentum(mesh.clone(), coeffs.clone(), 1e-9, 20, Scheme::Rk2)
            .unwrap();
        assert!(rep.passed, "{:#?}", rep.rows);
        // tighter dt: the integrated-drift tolerance budgets for the
        // O(dt^3) per-step energy error of the two-stage scheme
        let rep = conservation_suite_energy(mesh, coeffs, 1e-10, 20, Scheme::Rk2).unwrap();
        assert!(rep.passed, "{:#?}", rep.rows);
    }
}
