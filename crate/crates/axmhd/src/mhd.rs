//! Two-temperature visco-resistive Hall-free MHD in axisymmetric flux
//! variables (psi, f = r B_phi), discretized with the mimetic operator
//! set from [`crate::ops`].
//!
//! Everything here is written so that the semi-discrete conservation
//! identities hold to rounding: advective divergences use the node-to-node
//! operators, diffusive fluxes use element-to-node divergences of
//! element-valued fluxes, and the viscous force / viscous heating pair is
//! built from the same element quantities so their volume integrals cancel
//! exactly.

use crate::mesh::{
    boundary_frame, compute_geometry, BoundaryFrame, GeometryTables, Mesh,
};
use crate::ops::{
    build_operators, divergence, node_to_element_average, Flavor, OperatorSet, OpsError,
};
use crate::scenario::ScenarioError;
use crate::sparse::{axpy, div, had, max_abs, scale};
use crate::{M_PROTON, MU0, QE};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MhdError {
    #[error("non-positive density n = {value:.6e} at node {node}")]
    NonPositiveDensity { node: usize, value: f64 },
    #[error("non-positive electron temperature at node {node}")]
    NonPositiveTemperature { node: usize },
    #[error("negative {species} pressure {value:.6e} at node {node} (below -1e-12 of field scale)")]
    NegativePressure { species: &'static str, node: usize, value: f64 },
    #[error("boundary psi table has {got} entries, boundary has {want} nodes")]
    BoundaryLengthMismatch { got: usize, want: usize },
    #[error("boundary waveform: {0}")]
    Waveform(#[from] ScenarioError),
    #[error(transparent)]
    Ops(#[from] OpsError),
}

/// Nodal state vector of the eight evolved fields.
#[derive(Debug, Clone, PartialEq)]
pub struct PlasmaState {
    /// Ion number density [1/m^3].
    pub n: Vec<f64>,
    pub vr: Vec<f64>,
    pub vphi: Vec<f64>,
    pub vz: Vec<f64>,
    /// Ion pressure [Pa].
    pub pi: Vec<f64>,
    /// Electron pressure [Pa].
    pub pe: Vec<f64>,
    /// Poloidal flux function [Wb/rad].
    pub psi: Vec<f64>,
    /// f = r B_phi [T m].
    pub f: Vec<f64>,
    /// Simulation time [s].
    pub t: f64,
}

/// Time derivative of a [`PlasmaState`].
#[derive(Debug, Clone)]
pub struct StateRate {
    pub n: Vec<f64>,
    pub vr: Vec<f64>,
    pub vphi: Vec<f64>,
    pub vz: Vec<f64>,
    pub pi: Vec<f64>,
    pub pe: Vec<f64>,
    pub psi: Vec<f64>,
    pub f: Vec<f64>,
}

macro_rules! for_each_field {
    ($m:ident) => {
        $m!(n);
        $m!(vr);
        $m!(vphi);
        $m!(vz);
        $m!(pi);
        $m!(pe);
        $m!(psi);
        $m!(f);
    };
}

impl PlasmaState {
    pub fn zeros(n_nodes: usize) -> Self {
        let z = vec![0.0; n_nodes];
        PlasmaState {
            n: z.clone(),
            vr: z.clone(),
            vphi: z.clone(),
            vz: z.clone(),
            pi: z.clone(),
            pe: z.clone(),
            psi: z.clone(),
            f: z,
            t: 0.0,
        }
    }

    /// self + sum_k c_k * rate_k, stamped with time `t_new`.
    pub fn advanced(&self, terms: &[(&StateRate, f64)], t_new: f64) -> PlasmaState {
        let mut out = self.clone();
        out.t = t_new;
        macro_rules! acc {
            ($f:ident) => {
                for (rate, c) in terms {
                    for (o, k) in out.$f.iter_mut().zip(&rate.$f) {
                        *o += c * k;
                    }
                }
            };
        }
        for_each_field!(acc);
        out
    }
}

/// How the two density-correction models enter the momentum and ion
/// pressure equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionModel {
    /// Local source model: f_zeta = -m_i v zeta_n, Q_zeta = m_i v^2 zeta_n / 2.
    Model1,
    /// Symmetrized model (constant zeta only): per-component momentum and
    /// energy injections cancel in the volume integral; Q_zeta = 0.
    Model2,
}

/// Physical and numerical coefficients. Temperatures handed to closures are
/// in eV; everything else SI.
#[derive(Debug, Clone)]
pub struct PhysicsCoefficients {
    /// Ion mass in proton masses.
    pub mu_i: f64,
    /// Effective charge state.
    pub z: f64,
    /// Adiabatic index.
    pub gamma: f64,
    /// Density diffusivity [m^2/s].
    pub zeta: f64,
    /// Numerical kinematic viscosity entering the viscous force [m^2/s].
    pub nu_num: f64,
    /// Physical kinematic viscosity entering viscous heating [m^2/s].
    pub nu_phys: f64,
    /// Reference density for viscosity and conductivity scaling [1/m^3].
    pub n0: f64,
    /// Thermal diffusivities [m^2/s].
    pub chi_par_e: f64,
    pub chi_par_i: f64,
    pub chi_perp_e: f64,
    pub chi_perp_i: f64,
    /// Ceiling on the Spitzer resistive diffusivity [m^2/s].
    pub eta_max: f64,
    pub correction_model: CorrectionModel,
}

impl Default for PhysicsCoefficients {
    fn default() -> Self {
        PhysicsCoefficients {
            mu_i: 4.0,
            z: 1.3,
            gamma: 5.0 / 3.0,
            zeta: 50.0,
            nu_num: 700.0,
            nu_phys: 410.0,
            n0: 9e20,
            chi_par_e: 16000.0,
            chi_par_i: 5000.0,
            chi_perp_e: 240.0,
            chi_perp_i: 120.0,
            eta_max: 5000.0,
            correction_model: CorrectionModel::Model1,
        }
    }
}

impl PhysicsCoefficients {
    /// Ion mass [kg].
    pub fn m_i(&self) -> f64 {
        self.mu_i * M_PROTON
    }
}

/// Spitzer resistive diffusivity eta = 418 Z T_e^{-3/2} [m^2/s] with T_e in
/// eV, clamped to `eta_max` node by node (before any element averaging).
pub fn spitzer_eta(te_ev: &[f64], z: f64, eta_max: f64) -> Result<Vec<f64>, MhdError> {
    te_ev
        .iter()
        .enumerate()
        .map(|(node, &te)| {
            if te <= 0.0 {
                return Err(MhdError::NonPositiveTemperature { node });
            }
            Ok((418.0 * z * te.powf(-1.5)).min(eta_max))
        })
        .collect()
}

/// Ion-electron temperature equilibration power density [W/m^3]:
/// Q_ie = 7.6e-33 Z^3 (T_e - T_i) T_e^{-3/2} n^2 / mu_i, temperatures in eV.
pub fn heat_exchange_qie(
    n: &[f64],
    te_ev: &[f64],
    ti_ev: &[f64],
    z: f64,
    mu_i: f64,
) -> Vec<f64> {
    n.iter()
        .zip(te_ev)
        .zip(ti_ev)
        .map(|((&ni, &te), &ti)| 7.6e-33 * z.powi(3) * (te - ti) * te.powf(-1.5) * ni * ni / mu_i)
        .collect()
}

/// Velocity boundary treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityBc {
    /// v_r = v_phi = v_z = 0 on the boundary.
    AllZero,
    /// v_r = v_z = 0 on the boundary, v_phi free.
    PoloidalZero,
    /// Project out the component along the nodal boundary normal.
    NormalZero,
}

/// Poloidal-flux boundary values.
pub enum PsiBc {
    Zero,
    /// Parallel to `mesh.boundary_nodes`.
    Fixed(Vec<f64>),
    /// Evaluated at the state's time; parallel to `mesh.boundary_nodes`.
    TimeDependent(Box<dyn Fn(f64) -> Result<Vec<f64>, ScenarioError> + Send + Sync>),
}

impl std::fmt::Debug for PsiBc {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PsiBc::Zero => write!(fm, "Zero"),
            PsiBc::Fixed(v) => write!(fm, "Fixed({} values)", v.len()),
            PsiBc::TimeDependent(_) => write!(fm, "TimeDependent(..)"),
        }
    }
}

/// Toroidal-field values pinned on the insulator interface nodes
/// (the wall flux constant, plus any formation-field share at the node).
#[derive(Debug, Clone)]
pub struct InterfaceBc {
    pub nodes: Vec<usize>,
    /// Parallel to `nodes`.
    pub values: Vec<f64>,
}

/// Boundary conditions applied after every stage of every step. Pressure
/// and f conditions are optional so the natural (zero normal gradient)
/// behavior of the diffusive operators can be left untouched.
#[derive(Debug)]
pub struct BoundaryConditions {
    pub velocity: VelocityBc,
    pub psi: PsiBc,
    /// If set, boundary pressures are pinned to the wall temperature [eV]
    /// using the *current* boundary density: p_i = n T_w, p_e = Z n T_w.
    pub t_wall_ev: Option<f64>,
    pub f_interface: Option<InterfaceBc>,
    /// Boundary nodes where psi is *not* held to prescribed data and
    /// instead evolves through the one-sided interior operator — the
    /// insulator-interface column in coupled runs. Empty by default.
    pub psi_free: Vec<usize>,
}

impl Default for BoundaryConditions {
    fn default() -> Self {
        BoundaryConditions {
            velocity: VelocityBc::AllZero,
            psi: PsiBc::Zero,
            t_wall_ev: None,
            f_interface: None,
            psi_free: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    Rk2,
    Rk4,
}

impl std::str::FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "euler" => Ok(Scheme::Euler),
            "rk2" => Ok(Scheme::Rk2),
            "rk4" => Ok(Scheme::Rk4),
            other => Err(format!("unknown scheme {other:?} (euler|rk2|rk4)")),
        }
    }
}

/// Explicit-timestep advisory bounds.
#[derive(Debug, Clone, Copy)]
pub struct StabilityBounds {
    /// D_min / v_max^2 [s].
    pub advective: f64,
    /// h_e^2 / D_max [s].
    pub diffusive: f64,
    /// safety * min(advective, diffusive).
    pub dt: f64,
}

pub fn stability_dt(
    d_min: f64,
    d_max: f64,
    v_max: f64,
    h_e: f64,
    safety: f64,
) -> StabilityBounds {
    let advective = if v_max > 0.0 && d_min > 0.0 {
        d_min / (v_max * v_max)
    } else {
        f64::INFINITY
    };
    let diffusive = if d_max > 0.0 { h_e * h_e / d_max } else { f64::INFINITY };
    StabilityBounds { advective, diffusive, dt: safety * advective.min(diffusive) }
}

/// Poloidal field per element: (B_r, B_z)^e = (-Dze psi, Dre psi) / r^e.
pub fn b_theta_elements(
    ops: &OperatorSet,
    geom: &GeometryTables,
    psi: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let br = div(&scale(&ops.dze.matvec(psi), -1.0), &geom.r_e);
    let bz = div(&ops.dre.matvec(psi), &geom.r_e);
    (br, bz)
}

/// Density-correction contributions: momentum force densities [N/m^3] and
/// the ion heating [W/m^3].
#[derive(Debug, Clone)]
pub struct Corrections {
    pub fr: Vec<f64>,
    pub fphi: Vec<f64>,
    pub fz: Vec<f64>,
    pub q_zeta: Vec<f64>,
}

/// Mesh plus operators plus physics: everything needed to evaluate the
/// semi-discrete right-hand side and advance it.
#[derive(Debug)]
pub struct Model {
    pub mesh: Mesh,
    pub geom: GeometryTables,
    pub ops: OperatorSet,
    pub frame: BoundaryFrame,
    pub coeffs: PhysicsCoefficients,
    pub bc: BoundaryConditions,
}

impl Model {
    pub fn new(
        mesh: Mesh,
        coeffs: PhysicsCoefficients,
        bc: BoundaryConditions,
    ) -> Result<Self, MhdError> {
        let geom = compute_geometry(&mesh);
        let ops = build_operators(&mesh, &geom)?;
        let frame = boundary_frame(&mesh);
        Ok(Model { mesh, geom, ops, frame, coeffs, bc })
    }

    /// v . grad X with the node-to-node gradient.
    fn advect(&self, vr: &[f64], vz: &[f64], x: &[f64]) -> Vec<f64> {
        let gx = self.ops.dr.matvec(x);
        let gz = self.ops.dz.matvec(x);
        axpy(&had(vr, &gx), &had(vz, &gz), 1.0)
    }

    /// Viscous force density (Pi_r, Pi_phi, Pi_z) [N/m^3] built with the
    /// numerical viscosity mu = m_i n0 nu_num.
    pub fn viscous_force(
        &self,
        vr: &[f64],
        vphi: &[f64],
        vz: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let c = &self.coeffs;
        let mu = c.m_i() * c.n0 * c.nu_num;
        let (ops, geom) = (&self.ops, &self.geom);
        let r_n = &geom.r_n;
        let r_e = &geom.r_e;

        let dre_vr = ops.dre.matvec(vr);
        let dze_vr = ops.dze.matvec(vr);
        let dre_vz = ops.dre.matvec(vz);
        let dze_vz = ops.dze.matvec(vz);
        let shear = axpy(&dre_vz, &dze_vr, 1.0);
        let div_e = divergence(ops, geom, vr, vz, Flavor::NodeToElement);

        // Pi_r = [-2 Drn(mu r_e Dre vr) - Dzn(mu r_e (Dre vz + Dze vr))]/r
        //        + (2/3) Drn(mu div_e v) + 2 mu vr / r^2
        let mut pir = axpy(
            &ops.drn.matvec(&scale(&had(r_e, &dre_vr), -2.0 * mu)),
            &ops.dzn.matvec(&scale(&had(r_e, &shear), -mu)),
            1.0,
        );
        pir = div(&pir, r_n);
        pir = axpy(&pir, &ops.drn.matvec(&scale(&div_e, mu)), 2.0 / 3.0);
        for (p, (v, r)) in pir.iter_mut().zip(vr.iter().zip(r_n)) {
            *p += 2.0 * mu * v / (r * r);
        }

        // Pi_phi = -[div_n(mu r_e^2 grad^e omega)] / r, omega = vphi / r
        let omega = div(vphi, r_n);
        let w_r: Vec<f64> = ops
            .dre
            .matvec(&omega)
            .iter()
            .zip(r_e)
            .map(|(g, r)| mu * r * r * g)
            .collect();
        let w_z: Vec<f64> = ops
            .dze
            .matvec(&omega)
            .iter()
            .zip(r_e)
            .map(|(g, r)| mu * r * r * g)
            .collect();
        let piphi = scale(
            &div(&divergence(ops, geom, &w_r, &w_z, Flavor::ElementToNode), r_n),
            -1.0,
        );

        // Pi_z = [-2 Dzn(mu r_e Dze vz) - Drn(mu r_e (Dre vz + Dze vr))]/r
        //        + (2/3) Dzn(mu div_e v)
        let mut piz = axpy(
            &ops.dzn.matvec(&scale(&had(r_e, &dze_vz), -2.0 * mu)),
            &ops.drn.matvec(&scale(&had(r_e, &shear), -mu)),
            1.0,
        );
        piz = div(&piz, r_n);
        piz = axpy(&piz, &ops.dzn.matvec(&scale(&div_e, mu)), 2.0 / 3.0);

        (pir, piphi, piz)
    }

    /// Viscous heating Q_pi [W/m^3] with the physical viscosity
    /// mu = m_i n0 nu_phys; its volume integral equals that of v . Pi when
    /// nu_phys = nu_num, term by term.
    pub fn viscous_heating(&self, vr: &[f64], vphi: &[f64], vz: &[f64]) -> Vec<f64> {
        let c = &self.coeffs;
        let mu = c.m_i() * c.n0 * c.nu_phys;
        let (ops, geom) = (&self.ops, &self.geom);

        let dre_vr = ops.dre.matvec(vr);
        let dze_vr = ops.dze.matvec(vr);
        let dre_vz = ops.dre.matvec(vz);
        let dze_vz = ops.dze.matvec(vz);
        let div_e = divergence(ops, geom, vr, vz, Flavor::NodeToElement);
        let omega = div(vphi, &geom.r_n);
        let dre_w = ops.dre.matvec(&omega);
        let dze_w = ops.dze.matvec(&omega);

        let mut q_e = vec![0.0; self.mesh.n_elements()];
        for e in 0..q_e.len() {
            let r = geom.r_e[e];
            let sh = dre_vz[e] + dze_vr[e];
            q_e[e] = mu
                * (2.0 * dre_vr[e] * dre_vr[e]
                    + 2.0 * dze_vz[e] * dze_vz[e]
                    + r * r * (dre_w[e] * dre_w[e] + dze_w[e] * dze_w[e])
                    + sh * sh
                    - (2.0 / 3.0) * div_e[e] * div_e[e]);
        }
        let mut q = ops.wn.matvec(&q_e);
        for (qi, (v, r)) in q.iter_mut().zip(vr.iter().zip(&geom.r_n)) {
            let w = v / r;
            *qi += 2.0 * mu * w * w;
        }
        q
    }

    /// Anisotropic element heat flux
    /// q^e = -[(k_par - k_perp) B (B . grad T)/B^2 + k_perp grad T],
    /// with T in joules and conductivities in 1/(m s).
    pub fn heat_flux(
        &self,
        t_joule: &[f64],
        k_par: f64,
        k_perp: f64,
        b_r: &[f64],
        b_z: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let gtr = self.ops.dre.matvec(t_joule);
        let gtz = self.ops.dze.matvec(t_joule);
        let ne = gtr.len();
        let mut qr = vec![0.0; ne];
        let mut qz = vec![0.0; ne];
        for e in 0..ne {
            let b2 = b_r[e] * b_r[e] + b_z[e] * b_z[e];
            let (mut fr, mut fz) = (k_perp * gtr[e], k_perp * gtz[e]);
            if b2 > 0.0 {
                let bdg = (b_r[e] * gtr[e] + b_z[e] * gtz[e]) / b2;
                fr += (k_par - k_perp) * b_r[e] * bdg;
                fz += (k_par - k_perp) * b_z[e] * bdg;
            }
            qr[e] = -fr;
            qz[e] = -fz;
        }
        (qr, qz)
    }

    /// Momentum and heating corrections compensating the density
    /// diffusion term.
    pub fn density_corrections(&self, s: &PlasmaState) -> Corrections {
        let c = &self.coeffs;
        let (ops, geom) = (&self.ops, &self.geom);
        let m_i = c.m_i();
        let zeta = c.zeta;
        let lap_n = scale(&ops.lap.matvec(&s.n), zeta);
        match c.correction_model {
            CorrectionModel::Model1 => {
                let mut q_zeta = vec![0.0; s.n.len()];
                let v2: Vec<f64> = s
                    .vr
                    .iter()
                    .zip(&s.vphi)
                    .zip(&s.vz)
                    .map(|((a, b), cc)| a * a + b * b + cc * cc)
                    .collect();
                for (q, (v2i, l)) in q_zeta.iter_mut().zip(v2.iter().zip(&lap_n)) {
                    *q = 0.5 * m_i * v2i * l;
                }
                let force = |v: &[f64]| -> Vec<f64> {
                    v.iter().zip(&lap_n).map(|(vi, l)| -m_i * vi * l).collect()
                };
                Corrections {
                    fr: force(&s.vr),
                    fphi: force(&s.vphi),
                    fz: force(&s.vz),
                    q_zeta,
                }
            }
            CorrectionModel::Model2 => {
                let gn_r = ops.dre.matvec(&s.n);
                let gn_z = ops.dze.matvec(&s.n);
                let force = |v: &[f64]| -> Vec<f64> {
                    let gv_r = ops.dre.matvec(v);
                    let gv_z = ops.dze.matvec(v);
                    let gg: Vec<f64> = gn_r
                        .iter()
                        .zip(&gn_z)
                        .zip(gv_r.iter().zip(&gv_z))
                        .map(|((a, b), (cc, d))| a * cc + b * d)
                        .collect();
                    let t1 = ops.wn.matvec(&gg);
                    let v_e = node_to_element_average(geom, v);
                    let t2 = divergence(
                        ops,
                        geom,
                        &had(&v_e, &gn_r),
                        &had(&v_e, &gn_z),
                        Flavor::ElementToNode,
                    );
                    let lap_raw = ops.lap.matvec(&s.n);
                    t1.iter()
                        .zip(&t2)
                        .zip(v.iter().zip(&lap_raw))
                        .map(|((a, b), (vi, l))| 0.5 * m_i * zeta * (a + b - vi * l))
                        .collect()
                };
                Corrections {
                    fr: force(&s.vr),
                    fphi: force(&s.vphi),
                    fz: force(&s.vz),
                    q_zeta: vec![0.0; s.n.len()],
                }
            }
        }
    }

    /// Semi-discrete right-hand side of the eight evolution equations.
    pub fn rhs(&self, s: &PlasmaState) -> Result<StateRate, MhdError> {
        let c = &self.coeffs;
        let (ops, geom) = (&self.ops, &self.geom);
        let r_n = &geom.r_n;
        let r_e = &geom.r_e;
        let n_n = self.mesh.n_nodes();

        for (node, &ni) in s.n.iter().enumerate() {
            if ni <= 0.0 {
                return Err(MhdError::NonPositiveDensity { node, value: ni });
            }
        }

        let m_i = c.m_i();
        let rho: Vec<f64> = s.n.iter().map(|ni| m_i * ni).collect();
        let p_tot = axpy(&s.pi, &s.pe, 1.0);
        let ti_j = div(&s.pi, &s.n); // T_i [J]
        let te_j: Vec<f64> = s.pe.iter().zip(&s.n).map(|(p, ni)| p / (c.z * ni)).collect();
        let te_ev = scale(&te_j, 1.0 / QE);
        let ti_ev = scale(&ti_j, 1.0 / QE);

        let eta = spitzer_eta(&te_ev, c.z, c.eta_max)?;
        let eta_e = node_to_element_average(geom, &eta);
        let q_ie = heat_exchange_qie(&s.n, &te_ev, &ti_ev, c.z, c.mu_i);

        // --- continuity ---
        let ndot = {
            let adv = divergence(ops, geom, &had(&s.n, &s.vr), &had(&s.n, &s.vz), Flavor::NodeToNode);
            axpy(&scale(&adv, -1.0), &ops.lap.matvec(&s.n), c.zeta)
        };

        // --- shared kinematics ---
        let div_v = divergence(ops, geom, &s.vr, &s.vz, Flavor::NodeToNode);
        let v2: Vec<f64> = s
            .vr
            .iter()
            .zip(&s.vphi)
            .zip(&s.vz)
            .map(|((a, b), cc)| a * a + b * b + cc * cc)
            .collect();
        let half_v2 = scale(&v2, 0.5);
        let curl_phi = axpy(&ops.dz.matvec(&s.vr), &ops.dr.matvec(&s.vz), -1.0);
        let rvphi = had(r_n, &s.vphi);
        let dr_rvphi = self.ops.dr.matvec(&rvphi);
        let dz_rvphi = self.ops.dz.matvec(&rvphi);

        let (pir, piphi, piz) = self.viscous_force(&s.vr, &s.vphi, &s.vz);
        let corr = self.density_corrections(s);

        let psi_evolves = {
            let mut v = ops.interior.clone();
            for &i in &self.bc.psi_free {
                v[i] = true;
            }
            v
        };
        let delta_star_psi = ops.delta_star.matvec(&s.psi);
        let (b_r, b_z) = b_theta_elements(ops, geom, &s.psi);
        let dre_f = ops.dre.matvec(&s.f);
        let dze_f = ops.dze.matvec(&s.f);

        // --- radial momentum ---
        let mut vrdot = scale(&self.ops.dr.matvec(&half_v2), -1.0);
        {
            let dr_p = ops.dr.matvec(&p_tot);
            let dr_psi = ops.dr.matvec(&s.psi);
            let dr_f = ops.dr.matvec(&s.f);
            for i in 0..n_n {
                let r = r_n[i];
                vrdot[i] += s.vz[i] * curl_phi[i] + s.vphi[i] * dr_rvphi[i] / r
                    - dr_p[i] / rho[i]
                    - pir[i] / rho[i]
                    + (-dr_psi[i] * delta_star_psi[i] - s.f[i] * dr_f[i])
                        / (MU0 * r * r * rho[i])
                    + corr.fr[i] / rho[i];
            }
        }

        // --- toroidal momentum ---
        let mut vphidot = vec![0.0; n_n];
        {
            let bgf: Vec<f64> = b_r
                .iter()
                .zip(&b_z)
                .zip(dre_f.iter().zip(&dze_f))
                .map(|((br, bz), (fr, fz))| br * fr + bz * fz)
                .collect();
            let wn_bgf = ops.wn.matvec(&bgf);
            for i in 0..n_n {
                let r = r_n[i];
                vphidot[i] = -(s.vr[i] * dr_rvphi[i] + s.vz[i] * dz_rvphi[i]) / r
                    - piphi[i] / rho[i]
                    + wn_bgf[i] / (MU0 * r * rho[i])
                    + corr.fphi[i] / rho[i];
            }
        }

        // --- axial momentum ---
        let mut vzdot = scale(&self.ops.dz.matvec(&half_v2), -1.0);
        {
            let dz_p = ops.dz.matvec(&p_tot);
            let dz_psi = ops.dz.matvec(&s.psi);
            let dz_f = ops.dz.matvec(&s.f);
            for i in 0..n_n {
                let r = r_n[i];
                vzdot[i] += -s.vr[i] * curl_phi[i] + s.vphi[i] * dz_rvphi[i] / r
                    - dz_p[i] / rho[i]
                    - piz[i] / rho[i]
                    + (-dz_psi[i] * delta_star_psi[i] - s.f[i] * dz_f[i])
                        / (MU0 * r * r * rho[i])
                    + corr.fz[i] / rho[i];
            }
        }

        // --- ion pressure ---
        let pidot = {
            let adv = self.advect(&s.vr, &s.vz, &s.pi);
            let (qr, qz) = self.heat_flux(&ti_j, c.n0 * c.chi_par_i, c.n0 * c.chi_perp_i, &b_r, &b_z);
            let div_q = divergence(ops, geom, &qr, &qz, Flavor::ElementToNode);
            let q_pi = self.viscous_heating(&s.vr, &s.vphi, &s.vz);
            let mut out = vec![0.0; n_n];
            for i in 0..n_n {
                out[i] = -adv[i] - c.gamma * s.pi[i] * div_v[i]
                    + (c.gamma - 1.0)
                        * (-div_q[i] + q_ie[i] + q_pi[i] + corr.q_zeta[i]);
            }
            out
        };

        // --- electron pressure ---
        let pedot = {
            let adv = self.advect(&s.vr, &s.vz, &s.pe);
            let (qr, qz) = self.heat_flux(&te_j, c.n0 * c.chi_par_e, c.n0 * c.chi_perp_e, &b_r, &b_z);
            let div_q = divergence(ops, geom, &qr, &qz, Flavor::ElementToNode);
            // toroidal-current ohmic heating, nodal; boundary nodes where
            // psi is held carry no evolving current, so they get none of
            // the heating either — this keeps the resistive energy
            // exchange with the poloidal field exact
            let mut ohm = vec![0.0; n_n];
            for i in 0..n_n {
                if !psi_evolves[i] {
                    continue;
                }
                let j = delta_star_psi[i] / r_n[i];
                ohm[i] = eta[i] / MU0 * j * j;
            }
            // poloidal-current ohmic heating, element then volume-averaged
            let pol_e: Vec<f64> = eta_e
                .iter()
                .zip(dre_f.iter().zip(&dze_f))
                .zip(r_e)
                .map(|((et, (fr, fz)), r)| et / MU0 * (fr * fr + fz * fz) / (r * r))
                .collect();
            let pol = ops.wn.matvec(&pol_e);
            let mut out = vec![0.0; n_n];
            for i in 0..n_n {
                out[i] = -adv[i] - c.gamma * s.pe[i] * div_v[i]
                    + (c.gamma - 1.0) * (-div_q[i] - q_ie[i] + ohm[i] + pol[i]);
            }
            out
        };

        // --- poloidal flux ---
        let psidot = {
            // held boundary rows stay zero: prescribed psi never gets a
            // rate from the interior dynamics
            let adv = self.advect(&s.vr, &s.vz, &s.psi);
            let mut out = vec![0.0; n_n];
            for i in 0..n_n {
                if psi_evolves[i] {
                    out[i] = -adv[i] + eta[i] * delta_star_psi[i];
                }
            }
            out
        };

        // --- toroidal field ---
        let fdot = {
            let fr: Vec<f64> = s
                .f
                .iter()
                .zip(&s.vr)
                .zip(r_n)
                .map(|((fi, v), r)| fi * v / (r * r))
                .collect();
            let fz: Vec<f64> = s
                .f
                .iter()
                .zip(&s.vz)
                .zip(r_n)
                .map(|((fi, v), r)| fi * v / (r * r))
                .collect();
            let adv = divergence(ops, geom, &fr, &fz, Flavor::NodeToNode);
            let omega = div(&s.vphi, r_n);
            let omega_e = node_to_element_average(geom, &omega);
            let dynamo = divergence(
                ops,
                geom,
                &had(&b_r, &omega_e),
                &had(&b_z, &omega_e),
                Flavor::ElementToNode,
            );
            let diff_r: Vec<f64> = eta_e
                .iter()
                .zip(&dre_f)
                .zip(r_e)
                .map(|((et, g), r)| et * g / (r * r))
                .collect();
            let diff_z: Vec<f64> = eta_e
                .iter()
                .zip(&dze_f)
                .zip(r_e)
                .map(|((et, g), r)| et * g / (r * r))
                .collect();
            let diff = divergence(ops, geom, &diff_r, &diff_z, Flavor::ElementToNode);
            let mut out = vec![0.0; n_n];
            for i in 0..n_n {
                out[i] = r_n[i] * r_n[i] * (-adv[i] + dynamo[i] + diff[i]);
            }
            out
        };

        Ok(StateRate {
            n: ndot,
            vr: vrdot,
            vphi: vphidot,
            vz: vzdot,
            pi: pidot,
            pe: pedot,
            psi: psidot,
            f: fdot,
        })
    }

    /// Overwrite boundary values per the configured conditions, using the
    /// state's own time for time-dependent psi tables.
    pub fn apply_boundary_conditions(&self, s: &mut PlasmaState) -> Result<(), MhdError> {
        let bnodes = &self.mesh.boundary_nodes;
        match self.bc.velocity {
            VelocityBc::AllZero => {
                for &i in bnodes {
                    s.vr[i] = 0.0;
                    s.vphi[i] = 0.0;
                    s.vz[i] = 0.0;
                }
            }
            VelocityBc::PoloidalZero => {
                for &i in bnodes {
                    s.vr[i] = 0.0;
                    s.vz[i] = 0.0;
                }
            }
            VelocityBc::NormalZero => {
                for (k, &i) in bnodes.iter().enumerate() {
                    let nvec = self.frame.normal[k];
                    let vn = s.vr[i] * nvec[0] + s.vz[i] * nvec[1];
                    s.vr[i] -= vn * nvec[0];
                    s.vz[i] -= vn * nvec[1];
                }
            }
        }
        // psi_free nodes (the insulator interface) keep their evolved
        // values; every other boundary node takes the prescribed data
        let held = |i: usize| !self.bc.psi_free.contains(&i);
        match &self.bc.psi {
            PsiBc::Zero => {
                for &i in bnodes {
                    if held(i) {
                        s.psi[i] = 0.0;
                    }
                }
            }
            PsiBc::Fixed(vals) => {
                if vals.len() != bnodes.len() {
                    return Err(MhdError::BoundaryLengthMismatch {
                        got: vals.len(),
                        want: bnodes.len(),
                    });
                }
                for (k, &i) in bnodes.iter().enumerate() {
                    if held(i) {
                        s.psi[i] = vals[k];
                    }
                }
            }
            PsiBc::TimeDependent(f) => {
                let vals = f(s.t)?;
                if vals.len() != bnodes.len() {
                    return Err(MhdError::BoundaryLengthMismatch {
                        got: vals.len(),
                        want: bnodes.len(),
                    });
                }
                for (k, &i) in bnodes.iter().enumerate() {
                    if held(i) {
                        s.psi[i] = vals[k];
                    }
                }
            }
        }
        if let Some(tw) = self.bc.t_wall_ev {
            let tj = tw * QE;
            for &i in bnodes {
                s.pi[i] = s.n[i] * tj;
                s.pe[i] = self.coeffs.z * s.n[i] * tj;
            }
        }
        if let Some(ib) = &self.bc.f_interface {
            for (&i, &v) in ib.nodes.iter().zip(&ib.values) {
                s.f[i] = v;
            }
        }
        Ok(())
    }

    /// Advance one step; boundary conditions are re-applied after every
    /// stage, and the result is checked for negative pressures.
    pub fn step(&self, s: &PlasmaState, dt: f64, scheme: Scheme) -> Result<PlasmaState, MhdError> {
        let t0 = s.t;
        let out = match scheme {
            Scheme::Euler => {
                let k1 = self.rhs(s)?;
                let mut s1 = s.advanced(&[(&k1, dt)], t0 + dt);
                self.apply_boundary_conditions(&mut s1)?;
                s1
            }
            Scheme::Rk2 => {
                let k1 = self.rhs(s)?;
                let mut mid = s.advanced(&[(&k1, dt)], t0 + dt);
                self.apply_boundary_conditions(&mut mid)?;
                let k2 = self.rhs(&mid)?;
                let mut s1 = s.advanced(&[(&k1, 0.5 * dt), (&k2, 0.5 * dt)], t0 + dt);
                self.apply_boundary_conditions(&mut s1)?;
                s1
            }
            Scheme::Rk4 => {
                let k1 = self.rhs(s)?;
                let mut a = s.advanced(&[(&k1, 0.5 * dt)], t0 + 0.5 * dt);
                self.apply_boundary_conditions(&mut a)?;
                let k2 = self.rhs(&a)?;
                let mut b = s.advanced(&[(&k2, 0.5 * dt)], t0 + 0.5 * dt);
                self.apply_boundary_conditions(&mut b)?;
                let k3 = self.rhs(&b)?;
                let mut cst = s.advanced(&[(&k3, dt)], t0 + dt);
                self.apply_boundary_conditions(&mut cst)?;
                let k4 = self.rhs(&cst)?;
                let sixth = dt / 6.0;
                let mut s1 = s.advanced(
                    &[
                        (&k1, sixth),
                        (&k2, 2.0 * sixth),
                        (&k3, 2.0 * sixth),
                        (&k4, sixth),
                    ],
                    t0 + dt,
                );
                self.apply_boundary_conditions(&mut s1)?;
                s1
            }
        };
        for (species, field) in [("ion", &out.pi), ("electron", &out.pe)] {
            let tol = 1e-12 * max_abs(field);
            if let Some((node, &value)) =
                field.iter().enumerate().find(|(_, &p)| p < -tol)
            {
                return Err(MhdError::NegativePressure { species, node, value });
            }
        }
        Ok(out)
    }
}
