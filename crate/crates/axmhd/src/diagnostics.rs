//! Conserved-quantity monitors, semi-discrete balance residuals, and
//! synthetic probe / interferometer-chord diagnostics.
//!
//! The balance residuals are the primary test surface of the whole
//! discretization: the rate of change of total energy expands into nine
//! bracketed pairs, each of which cancels to rounding under the right
//! boundary conditions. Evaluating every pair independently localizes any
//! conservation defect to a specific term.

use crate::mesh::{BoundaryFrame, GeometryTables, Mesh};
use crate::mhd::{
    b_theta_elements, spitzer_eta, MhdError, Model, PhysicsCoefficients, PlasmaState, StateRate,
};
use crate::ops::{divergence, node_to_element_average, Flavor, OperatorSet};
use crate::sparse::{div, dot, had};
use crate::{MU0, QE};
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("chord ({r1},{z1})-({r2},{z2}) leaves the mesh: covered {covered:.6e} of {length:.6e} m")]
    ChordOutsideMesh { r1: f64, z1: f64, r2: f64, z2: f64, covered: f64, length: f64 },
    #[error("degenerate chord of zero length")]
    ZeroLengthChord,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Snapshot of the globally conserved quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservedRecord {
    pub t: f64,
    /// Total ion count.
    pub n: f64,
    /// Toroidal flux [Wb].
    pub phi: f64,
    /// Angular momentum [kg m^2/s].
    pub p_phi: f64,
    pub u_k: f64,
    pub u_th: f64,
    pub u_m: f64,
    pub u_total: f64,
}

pub fn conserved_quantities(
    geom: &GeometryTables,
    ops: &OperatorSet,
    coeffs: &PhysicsCoefficients,
    s: &PlasmaState,
) -> ConservedRecord {
    let dv = &geom.dv_n;
    let r_n = &geom.r_n;
    let m_i = coeffs.m_i();
    let nn = s.n.len();

    let n_total = dot(dv, &s.n);
    let f_over_r2: Vec<f64> = s.f.iter().zip(r_n).map(|(f, r)| f / (r * r)).collect();
    let phi = dot(dv, &f_over_r2) / (2.0 * std::f64::consts::PI);
    let p_phi: f64 = (0..nn)
        .map(|i| dv[i] * m_i * s.n[i] * r_n[i] * s.vphi[i])
        .sum();
    let u_k: f64 = (0..nn)
        .map(|i| {
            let v2 = s.vr[i] * s.vr[i] + s.vphi[i] * s.vphi[i] + s.vz[i] * s.vz[i];
            dv[i] * 0.5 * m_i * s.n[i] * v2
        })
        .sum();
    let u_th: f64 = (0..nn)
        .map(|i| dv[i] * (s.pi[i] + s.pe[i]) / (coeffs.gamma - 1.0))
        .sum();
    let u_m_tor: f64 = (0..nn)
        .map(|i| dv[i] * s.f[i] * s.f[i] / (r_n[i] * r_n[i]))
        .sum::<f64>()
        / (2.0 * MU0);
    let gpsi_r = ops.dre.matvec(&s.psi);
    let gpsi_z = ops.dze.matvec(&s.psi);
    let u_m_pol: f64 = (0..gpsi_r.len())
        .map(|e| {
            geom.dv_e[e] * (gpsi_r[e] * gpsi_r[e] + gpsi_z[e] * gpsi_z[e])
                / (geom.r_e[e] * geom.r_e[e])
        })
        .sum::<f64>()
        / (2.0 * MU0);
    let u_m = u_m_tor + u_m_pol;

    ConservedRecord {
        t: s.t,
        n: n_total,
        phi,
        p_phi,
        u_k,
        u_th,
        u_m,
        u_total: u_k + u_th + u_m,
    }
}

/// Instantaneous rates of the conserved quantities implied by a given
/// right-hand side evaluation.
#[derive(Debug, Clone, Copy)]
pub struct BalanceRates {
    pub n_rate: f64,
    pub phi_rate: f64,
    pub p_phi_rate: f64,
    pub u_k_rate: f64,
    pub u_th_rate: f64,
    pub u_m_rate: f64,
    pub u_rate: f64,
}

pub fn balance_rates(
    geom: &GeometryTables,
    ops: &OperatorSet,
    coeffs: &PhysicsCoefficients,
    s: &PlasmaState,
    rate: &StateRate,
) -> BalanceRates {
    let dv = &geom.dv_n;
    let r_n = &geom.r_n;
    let m_i = coeffs.m_i();
    let nn = s.n.len();

    let n_rate = dot(dv, &rate.n);
    let phi_rate: f64 = (0..nn)
        .map(|i| dv[i] * rate.f[i] / (r_n[i] * r_n[i]))
        .sum::<f64>()
        / (2.0 * std::f64::consts::PI);
    let p_phi_rate: f64 = (0..nn)
        .map(|i| dv[i] * m_i * r_n[i] * (s.vphi[i] * rate.n[i] + s.n[i] * rate.vphi[i]))
        .sum();
    let u_k_rate: f64 = (0..nn)
        .map(|i| {
            let v2 = s.vr[i] * s.vr[i] + s.vphi[i] * s.vphi[i] + s.vz[i] * s.vz[i];
            let vdot = s.vr[i] * rate.vr[i] + s.vphi[i] * rate.vphi[i] + s.vz[i] * rate.vz[i];
            dv[i] * (0.5 * m_i * rate.n[i] * v2 + m_i * s.n[i] * vdot)
        })
        .sum();
    let u_th_rate: f64 = (0..nn)
        .map(|i| dv[i] * (rate.pi[i] + rate.pe[i]) / (coeffs.gamma - 1.0))
        .sum();
    let u_m_tor_rate: f64 = (0..nn)
        .map(|i| dv[i] * s.f[i] * rate.f[i] / (r_n[i] * r_n[i]))
        .sum::<f64>()
        / MU0;
    let gpsi_r = ops.dre.matvec(&s.psi);
    let gpsi_z = ops.dze.matvec(&s.psi);
    let gdot_r = ops.dre.matvec(&rate.psi);
    let gdot_z = ops.dze.matvec(&rate.psi);
    let u_m_pol_rate: f64 = (0..gpsi_r.len())
        .map(|e| {
            geom.dv_e[e] * (gpsi_r[e] * gdot_r[e] + gpsi_z[e] * gdot_z[e])
                / (geom.r_e[e] * geom.r_e[e])
        })
        .sum::<f64>()
        / MU0;
    let u_m_rate = u_m_tor_rate + u_m_pol_rate;

    BalanceRates {
        n_rate,
        phi_rate,
        p_phi_rate,
        u_k_rate,
        u_th_rate,
        u_m_rate,
        u_rate: u_k_rate + u_th_rate + u_m_rate,
    }
}

/// One bracketed pair of the total-energy rate expansion: `residual` is
/// the pair sum (zero under the right conditions), `gross` the magnitude
/// of the individual pieces for relative comparison.
#[derive(Debug, Clone, Copy)]
pub struct Bracket {
    pub name: &'static str,
    pub residual: f64,
    pub gross: f64,
}

/// Evaluate all nine bracket pairs of the energy-rate expansion
/// independently.
pub fn energy_brackets(model: &Model, s: &PlasmaState) -> Result<Vec<Bracket>, MhdError> {
    let c = &model.coeffs;
    let (ops, geom) = (&model.ops, &model.geom);
    let dv = &geom.dv_n;
    let dv_e = &geom.dv_e;
    let r_n = &geom.r_n;
    let r_e = &geom.r_e;
    let nn = s.n.len();
    let ne = r_e.len();
    let m_i = c.m_i();

    let rho: Vec<f64> = s.n.iter().map(|ni| m_i * ni).collect();
    let v2: Vec<f64> = (0..nn)
        .map(|i| s.vr[i] * s.vr[i] + s.vphi[i] * s.vphi[i] + s.vz[i] * s.vz[i])
        .collect();
    let p_tot: Vec<f64> = s.pi.iter().zip(&s.pe).map(|(a, b)| a + b).collect();
    let te_ev: Vec<f64> = s
        .pe
        .iter()
        .zip(&s.n)
        .map(|(p, ni)| p / (c.z * ni) / QE)
        .collect();
    let eta = spitzer_eta(&te_ev, c.z, c.eta_max)?;
    let eta_e = node_to_element_average(geom, &eta);
    let delta_star_psi = ops.delta_star.matvec(&s.psi);
    let gpsi_r = ops.dre.matvec(&s.psi);
    let gpsi_z = ops.dze.matvec(&s.psi);
    let (b_r, b_z) = b_theta_elements(ops, geom, &s.psi);
    let gf_r = ops.dre.matvec(&s.f);
    let gf_z = ops.dze.matvec(&s.f);
    let omega = div(&s.vphi, r_n);
    let omega_e = node_to_element_average(geom, &omega);

    let pair = |name: &'static str, a: f64, b: f64| Bracket {
        name,
        residual: a + b,
        gross: a.abs() + b.abs(),
    };
    let mut out = Vec::with_capacity(9);

    // 1: kinetic-energy advection
    {
        let divp = divergence(
            ops,
            geom,
            &had(&rho, &s.vr),
            &had(&rho, &s.vz),
            Flavor::NodeToNode,
        );
        let a: f64 = (0..nn).map(|i| dv[i] * 0.5 * v2[i] * divp[i]).sum();
        let gr = ops.dr.matvec(&v2);
        let gz = ops.dz.matvec(&v2);
        let b: f64 = (0..nn)
            .map(|i| dv[i] * 0.5 * rho[i] * (s.vr[i] * gr[i] + s.vz[i] * gz[i]))
            .sum();
        out.push(pair("ke-advection", a, b));
    }

    // 2: compressional heating
    {
        let gp_r = ops.dr.matvec(&p_tot);
        let gp_z = ops.dz.matvec(&p_tot);
        let div_v = divergence(ops, geom, &s.vr, &s.vz, Flavor::NodeToNode);
        let vgp: f64 = (0..nn)
            .map(|i| dv[i] * (s.vr[i] * gp_r[i] + s.vz[i] * gp_z[i]))
            .sum();
        let pdv: f64 = (0..nn).map(|i| dv[i] * p_tot[i] * div_v[i]).sum();
        let a = vgp;
        let b = (vgp + c.gamma * pdv) / (c.gamma - 1.0);
        out.push(pair("compression", a, b));
    }

    // 3: poloidal-field ideal exchange
    {
        let u: Vec<f64> = {
            let gr = ops.dr.matvec(&s.psi);
            let gz = ops.dz.matvec(&s.psi);
            (0..nn).map(|i| s.vr[i] * gr[i] + s.vz[i] * gz[i]).collect()
        };
        let a: f64 = (0..nn)
            .map(|i| dv[i] * u[i] * delta_star_psi[i] / (r_n[i] * r_n[i]))
            .sum::<f64>()
            / MU0;
        let gu_r = ops.dre.matvec(&u);
        let gu_z = ops.dze.matvec(&u);
        let b: f64 = (0..ne)
            .map(|e| {
                dv_e[e] * (gpsi_r[e] * gu_r[e] + gpsi_z[e] * gu_z[e]) / (r_e[e] * r_e[e])
            })
            .sum::<f64>()
            / MU0;
        out.push(pair("poloidal-ideal", a, b));
    }

    // 4: toroidal-field advection
    {
        let pr: Vec<f64> = (0..nn).map(|i| s.f[i] * s.vr[i] / (r_n[i] * r_n[i])).collect();
        let pz: Vec<f64> = (0..nn).map(|i| s.f[i] * s.vz[i] / (r_n[i] * r_n[i])).collect();
        let gf_rn = ops.dr.matvec(&s.f);
        let gf_zn = ops.dz.matvec(&s.f);
        let a: f64 = (0..nn)
            .map(|i| dv[i] * (pr[i] * gf_rn[i] + pz[i] * gf_zn[i]))
            .sum::<f64>()
            / MU0;
        let divp = divergence(ops, geom, &pr, &pz, Flavor::NodeToNode);
        let b: f64 = (0..nn).map(|i| dv[i] * s.f[i] * divp[i]).sum::<f64>() / MU0;
        out.push(pair("toroidal-advection", a, b));
    }

    // 5: dynamo exchange
    {
        let bgf: Vec<f64> = (0..ne).map(|e| b_r[e] * gf_r[e] + b_z[e] * gf_z[e]).collect();
        let wn_bgf = ops.wn.matvec(&bgf);
        let a: f64 = (0..nn).map(|i| dv[i] * omega[i] * wn_bgf[i]).sum::<f64>() / MU0;
        let dyn_div = divergence(
            ops,
            geom,
            &had(&b_r, &omega_e),
            &had(&b_z, &omega_e),
            Flavor::ElementToNode,
        );
        let b: f64 = (0..nn).map(|i| dv[i] * s.f[i] * dyn_div[i]).sum::<f64>() / MU0;
        out.push(pair("dynamo", a, b));
    }

    // 6: toroidal-current ohmic heating vs poloidal-field decay
    {
        let a: f64 = (0..nn)
            .map(|i| {
                let j = delta_star_psi[i] / r_n[i];
                dv[i] * eta[i] * j * j
            })
            .sum::<f64>()
            / MU0;
        let u = had(&eta, &delta_star_psi);
        let gu_r = ops.dre.matvec(&u);
        let gu_z = ops.dze.matvec(&u);
        let b: f64 = (0..ne)
            .map(|e| {
                dv_e[e] * (gpsi_r[e] * gu_r[e] + gpsi_z[e] * gu_z[e]) / (r_e[e] * r_e[e])
            })
            .sum::<f64>()
            / MU0;
        out.push(pair("toroidal-ohmic", a, b));
    }

    // 7: poloidal-current ohmic heating vs toroidal-field decay
    {
        let pr: Vec<f64> = (0..ne).map(|e| eta_e[e] * gf_r[e] / (r_e[e] * r_e[e])).collect();
        let pz: Vec<f64> = (0..ne).map(|e| eta_e[e] * gf_z[e] / (r_e[e] * r_e[e])).collect();
        let heat_e: Vec<f64> = (0..ne).map(|e| pr[e] * gf_r[e] + pz[e] * gf_z[e]).collect();
        let wn_heat = ops.wn.matvec(&heat_e);
        let a: f64 = (0..nn).map(|i| dv[i] * wn_heat[i]).sum::<f64>() / MU0;
        let divp = divergence(ops, geom, &pr, &pz, Flavor::ElementToNode);
        let b: f64 = (0..nn).map(|i| dv[i] * s.f[i] * divp[i]).sum::<f64>() / MU0;
        out.push(pair("poloidal-ohmic", a, b));
    }

    // 8: heat-flux divergence (annihilated unconditionally)
    {
        let ti_j = div(&s.pi, &s.n);
        let te_j: Vec<f64> = s.pe.iter().zip(&s.n).map(|(p, ni)| p / (c.z * ni)).collect();
        let (qir, qiz) =
            model.heat_flux(&ti_j, c.n0 * c.chi_par_i, c.n0 * c.chi_perp_i, &b_r, &b_z);
        let (qer, qez) =
            model.heat_flux(&te_j, c.n0 * c.chi_par_e, c.n0 * c.chi_perp_e, &b_r, &b_z);
        let qr: Vec<f64> = qir.iter().zip(&qer).map(|(a, b)| a + b).collect();
        let qz: Vec<f64> = qiz.iter().zip(&qez).map(|(a, b)| a + b).collect();
        let divq = divergence(ops, geom, &qr, &qz, Flavor::ElementToNode);
        let a = dot(dv, &divq);
        let gross: f64 = (0..nn).map(|i| (dv[i] * divq[i]).abs()).sum();
        out.push(Bracket { name: "heat-flux", residual: a, gross });
    }

    // 9: viscous work vs viscous heating
    {
        let (pir, piphi, piz) = model.viscous_force(&s.vr, &s.vphi, &s.vz);
        let q = model.viscous_heating(&s.vr, &s.vphi, &s.vz);
        let work: f64 = (0..nn)
            .map(|i| dv[i] * (s.vr[i] * pir[i] + s.vphi[i] * piphi[i] + s.vz[i] * piz[i]))
            .sum();
        let heat = dot(dv, &q);
        out.push(Bracket {
            name: "viscous",
            residual: work - heat,
            gross: work.abs() + heat.abs(),
        });
    }

    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeChannel {
    Poloidal,
    Toroidal,
}

/// Magnetic probe snapped to the nearest boundary node.
#[derive(Debug, Clone)]
pub struct Probe {
    pub channel: ProbeChannel,
    /// Node index the probe snapped to.
    pub node: usize,
    /// Position of that node in `mesh.boundary_nodes` (for the tangent).
    pub boundary_pos: usize,
    pub snap_distance: f64,
}

pub fn place_probe(mesh: &Mesh, r: f64, z: f64, channel: ProbeChannel) -> Probe {
    let (boundary_pos, node, snap_distance) = mesh
        .boundary_nodes
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let [pr, pz] = mesh.nodes[i];
            (k, i, ((pr - r).powi(2) + (pz - z).powi(2)).sqrt())
        })
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .expect("mesh has boundary nodes");
    Probe { channel, node, boundary_pos, snap_distance }
}

/// Probe reading: poloidal channel t_r B_r + t_z B_z with nodal B from
/// volume-averaged element fields; toroidal channel f/r at the node.
pub fn probe_signal(
    geom: &GeometryTables,
    ops: &OperatorSet,
    frame: &BoundaryFrame,
    s: &PlasmaState,
    probe: &Probe,
) -> f64 {
    match probe.channel {
        ProbeChannel::Toroidal => s.f[probe.node] / geom.r_n[probe.node],
        ProbeChannel::Poloidal => {
            let (b_r_e, b_z_e) = b_theta_elements(ops, geom, &s.psi);
            let b_r = ops.wn.matvec(&b_r_e);
            let b_z = ops.wn.matvec(&b_z_e);
            let t = frame.tangent[probe.boundary_pos];
            t[0] * b_r[probe.node] + t[1] * b_z[probe.node]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChordField {
    /// Z n, line-averaged [1/m^3].
    ElectronDensity,
    /// p_i / n in eV, line-averaged.
    IonTemperatureEv,
}

#[derive(Debug, Clone, Copy)]
pub struct Chord {
    pub p1: [f64; 2],
    pub p2: [f64; 2],
    pub field: ChordField,
}

/// Line average (1/L) of a nodal field along a chord, integrating the
/// piecewise-linear interpolant exactly on each crossed element.
pub fn chord_average_field(
    mesh: &Mesh,
    chord_p1: [f64; 2],
    chord_p2: [f64; 2],
    field: &[f64],
) -> Result<f64, DiagnosticsError> {
    let dx = chord_p2[0] - chord_p1[0];
    let dy = chord_p2[1] - chord_p1[1];
    let length = (dx * dx + dy * dy).sqrt();
    if length == 0.0 {
        return Err(DiagnosticsError::ZeroLengthChord);
    }
    let mut integral = 0.0;
    let mut covered = 0.0;
    // chords lying exactly on shared element edges are visited by both
    // neighbors; that double-counts numerator and denominator consistently,
    // but the inside-the-mesh check must use the interval union
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    for e in &mesh.elements {
        let pts = [mesh.nodes[e[0]], mesh.nodes[e[1]], mesh.nodes[e[2]]];
        // intersect the parameter interval [0,1] with the three CCW
        // half-plane constraints, each linear in t
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        let mut empty = false;
        for k in 0..3 {
            let a = pts[k];
            let b = pts[(k + 1) % 3];
            let er = b[0] - a[0];
            let ez = b[1] - a[1];
            // cross(edge, p(t) - a) >= 0 inside
            let s0 = er * (chord_p1[1] - a[1]) - ez * (chord_p1[0] - a[0]);
            let s1 = er * (chord_p2[1] - a[1]) - ez * (chord_p2[0] - a[0]);
            let slope = s1 - s0;
            if slope.abs() < 1e-300 {
                if s0 < 0.0 {
                    empty = true;
                    break;
                }
            } else {
                let tc = -s0 / slope;
                if slope > 0.0 {
                    t0 = t0.max(tc);
                } else {
                    t1 = t1.min(tc);
                }
            }
        }
        if empty || t1 <= t0 {
            continue;
        }
        // linear interpolation via barycentric coordinates at both ends
        let value_at = |t: f64| -> f64 {
            let p = [chord_p1[0] + t * dx, chord_p1[1] + t * dy];
            let area2 = |a: [f64; 2], b: [f64; 2], cpt: [f64; 2]| {
                (b[0] - a[0]) * (cpt[1] - a[1]) - (b[1] - a[1]) * (cpt[0] - a[0])
            };
            let total = area2(pts[0], pts[1], pts[2]);
            let w0 = area2(pts[1], pts[2], p) / total;
            let w1 = area2(pts[2], pts[0], p) / total;
            let w2 = 1.0 - w0 - w1;
            w0 * field[e[0]] + w1 * field[e[1]] + w2 * field[e[2]]
        };
        let seg_len = (t1 - t0) * length;
        integral += seg_len * 0.5 * (value_at(t0) + value_at(t1));
        covered += seg_len;
        intervals.push((t0, t1));
    }
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut union_len = 0.0;
    let mut reach = 0.0f64;
    for &(a, b) in &intervals {
        let lo = a.max(reach);
        if b > lo {
            union_len += b - lo;
            reach = b;
        }
    }
    if union_len * length < (1.0 - 1e-8) * length {
        return Err(DiagnosticsError::ChordOutsideMesh {
            r1: chord_p1[0],
            z1: chord_p1[1],
            r2: chord_p2[0],
            z2: chord_p2[1],
            covered: union_len * length,
            length,
        });
    }
    Ok(integral / covered)
}

pub fn chord_average(
    mesh: &Mesh,
    coeffs: &PhysicsCoefficients,
    s: &PlasmaState,
    chord: &Chord,
) -> Result<f64, DiagnosticsError> {
    let field: Vec<f64> = match chord.field {
        ChordField::ElectronDensity => s.n.iter().map(|ni| coeffs.z * ni).collect(),
        ChordField::IonTemperatureEv => s
            .pi
            .iter()
            .zip(&s.n)
            .map(|(p, ni)| p / ni / QE)
            .collect(),
    };
    chord_average_field(mesh, chord.p1, chord.p2, &field)
}

/// Writes the run time series: one row per output step with the conserved
/// quantities followed by the probe and chord channels.
#[derive(Debug)]
pub struct TimeSeriesWriter {
    file: std::fs::File,
}

impl TimeSeriesWriter {
    pub fn create(
        path: &Path,
        probe_labels: &[String],
        chord_labels: &[String],
    ) -> Result<Self, DiagnosticsError> {
        let mut file = std::fs::File::create(path)?;
        let mut header = String::from("t,N,Phi,P_phi,U_K,U_Th,U_M,U_total");
        for l in probe_labels.iter().chain(chord_labels) {
            header.push(',');
            header.push_str(l);
        }
        writeln!(file, "{header}")?;
        Ok(TimeSeriesWriter { file })
    }

    pub fn write_row(
        &mut self,
        rec: &ConservedRecord,
        probe_values: &[f64],
        chord_values: &[f64],
    ) -> Result<(), DiagnosticsError> {
        let mut row = format!(
            "{},{},{},{},{},{},{},{}",
            rec.t, rec.n, rec.phi, rec.p_phi, rec.u_k, rec.u_th, rec.u_m, rec.u_total
        );
        for v in probe_values.iter().chain(chord_values) {
            row.push(',');
            row.push_str(&v.to_string());
        }
        writeln!(self.file, "{row}")?;
        Ok(())
    }
}

/// Write per-field `node_index,value` snapshot CSVs plus a manifest
/// listing the snapshot time and the field file names.
pub fn write_snapshot(
    dir: &Path,
    label: &str,
    t: f64,
    fields: &[(&str, &[f64])],
) -> Result<PathBuf, DiagnosticsError> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    manifest.push_str(&format!("t,{t}\n"));
    for (name, values) in fields {
        let fname = format!("{label}_{name}.csv");
        let mut text = String::from("node_index,value\n");
        for (i, v) in values.iter().enumerate() {
            text.push_str(&format!("{i},{v}\n"));
        }
        std::fs::write(dir.join(&fname), text)?;
        manifest.push_str(&format!("field,{name},{fname}\n"));
    }
    let mpath = dir.join(format!("{label}_manifest.csv"));
    std::fs::write(&mpath, manifest)?;
    Ok(mpath)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{boundary_frame, compute_geometry, generate_rect_mesh};
    use crate::mhd::{BoundaryConditions, VelocityBc};
    use crate::ops::build_operators;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn coeffs_z1() -> PhysicsCoefficients {
        PhysicsCoefficients { z: 1.0, ..PhysicsCoefficients::default() }
    }

    #[test]
    fn conserved_quantities_hand_values() {
        let mesh = crate::mesh::two_element_mesh();
        let geom = compute_geometry(&mesh);
        let ops = build_operators(&mesh, &geom).unwrap();
        let c = coeffs_z1();
        let mut s = PlasmaState::zeros(mesh.n_nodes());
        let rec = conserved_quantities(&geom, &ops, &c, &s);
        assert_eq!(rec.n, 0.0);
        assert_eq!(rec.u_total, 0.0);

        // uniform density: N = n0 (2pi/3) sum(s_n r_n) = n0 (2pi/3) 4.5
        let n0 = 9e20;
        s.n = vec![n0; mesh.n_nodes()];
        let rec = conserved_quantities(&geom, &ops, &c, &s);
        let expect = n0 * (2.0 * std::f64::consts::PI / 3.0) * 4.5;
        assert!((rec.n - expect).abs() <= 1e-12 * expect);

        // f = r^2 so f/r^2 = 1: Phi = total volume / 2pi
        s.f = mesh.nodes.iter().map(|p| p[0] * p[0]).collect();
        let rec = conserved_quantities(&geom, &ops, &c, &s);
        let volume: f64 = geom.dv_n.iter().sum();
        assert!(
            (rec.phi - volume / (2.0 * std::f64::consts::PI)).abs()
                <= 1e-12 * rec.phi.abs()
        );

        // linearity in n and f
        let mut s2 = s.clone();
        for v in &mut s2.n {
            *v *= 2.0;
        }
        for v in &mut s2.f {
            *v *= 2.0;
        }
        let rec2 = conserved_quantities(&geom, &ops, &c, &s2);
        assert_eq!(rec2.n, 2.0 * rec.n);
        assert_eq!(rec2.phi, 2.0 * rec.phi);
    }

    fn random_conserving_state(model: &Model, seed: u64) -> PlasmaState {
        let nn = model.mesh.n_nodes();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = PlasmaState::zeros(nn);
        let bump = |r: f64, z: f64| {
            let x = (r - 0.3) / 1.0;
            (x * (1.0 - x) * z * (1.0 - z)).powi(2) * 256.0
        };
        for i in 0..nn {
            let [r, z] = model.mesh.nodes[i];
            s.n[i] = 1e20 * (1.0 + 0.3 * rng.gen::<f64>());
            s.vr[i] = 2e3 * bump(r, z) * (rng.gen::<f64>() - 0.5);
            s.vphi[i] = 2e3 * bump(r, z) * (rng.gen::<f64>() - 0.5);
            s.vz[i] = 2e3 * bump(r, z) * (rng.gen::<f64>() - 0.5);
            s.pi[i] = 150.0 + 50.0 * bump(r, z);
            s.pe[i] = 150.0 + 50.0 * bump(r, z);
            s.psi[i] = 5e-3 * bump(r, z);
            s.f[i] = 0.05 * r * r * (1.0 + 0.2 * z);
        }
        let mut s = s;
        model.apply_boundary_conditions(&mut s).unwrap();
        s
    }

    #[test]
    fn all_brackets_cancel_with_conserving_bcs() {
        let mesh = generate_rect_mesh((0.3, 1.3), (0.0, 1.0), 0.1).unwrap();
        let coeffs = PhysicsCoefficients { nu_phys: 700.0, ..coeffs_z1() };
        let bc = BoundaryConditions { velocity: VelocityBc::AllZero, ..Default::default() };
        let model = Model::new(mesh, coeffs, bc).unwrap();
        let s = random_conserving_state(&model, 3);
        for b in energy_brackets(&model, &s).unwrap() {
            assert!(
                b.residual.abs() <= 1e-11 * b.gross.max(1e-300),
                "bracket {}: residual {:.3e} vs gross {:.3e}",
                b.name,
                b.residual,
                b.gross
            );
        }
    }

    #[test]
    fn viscous_bracket_with_unequal_viscosities_is_a_sink() {
        let mesh = generate_rect_mesh((0.3, 1.3), (0.0, 1.0), 0.1).unwrap();
        // nu_num > nu_phys: dissipation exceeds heating, net energy sink
        let coeffs = PhysicsCoefficients { nu_num: 700.0, nu_phys: 410.0, ..coeffs_z1() };
        let model = Model::new(mesh, coeffs, BoundaryConditions::default()).unwrap();
        let s = random_conserving_state(&model, 5);
        let brackets = energy_brackets(&model, &s).unwrap();
        let visc = brackets.iter().find(|b| b.name == "viscous").unwrap();
        assert!(
            visc.residual > 1e-6 * visc.gross,
            "expected positive residual, got {:.3e}",
            visc.residual
        );
        // the mismatch scales with (nu_num - nu_phys)
        let expected_ratio = (700.0 - 410.0) / 700.0;
        let rel = visc.residual / visc.gross * 2.0; // gross ~ 2x work scale
        assert!((rel - expected_ratio).abs() < 0.5, "ratio {rel}");
    }

    #[test]
    fn balance_rates_match_conserved_finite_difference() {
        // deliberately non-conserving state (velocities not zeroed on the
        // boundary) so the rates sit far above finite-difference noise
        let mesh = generate_rect_mesh((0.3, 1.3), (0.0, 1.0), 0.125).unwrap();
        let coeffs = PhysicsCoefficients { nu_phys: 700.0, ..coeffs_z1() };
        let model = Model::new(mesh, coeffs, BoundaryConditions::default()).unwrap();
        let nn = model.mesh.n_nodes();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut s = PlasmaState::zeros(nn);
        for i in 0..nn {
            let [r, z] = model.mesh.nodes[i];
            s.n[i] = 1e20 * (1.0 + 0.3 * rng.gen::<f64>());
            s.vr[i] = 2e3 * (rng.gen::<f64>() - 0.5);
            s.vphi[i] = 2e3 * (rng.gen::<f64>() - 0.5);
            s.vz[i] = 2e3 * (rng.gen::<f64>() - 0.5);
            s.pi[i] = 200.0 + 50.0 * rng.gen::<f64>();
            s.pe[i] = 200.0 + 50.0 * rng.gen::<f64>();
            s.psi[i] = 5e-3 * (r - 0.3) * (1.3 - r) * z * (1.0 - z);
            s.f[i] = 0.05 * r * r * (1.0 + 0.2 * z);
        }
        let rate = model.rhs(&s).unwrap();
        let rates = balance_rates(&model.geom, &model.ops, &model.coeffs, &s, &rate);
        // central difference of the conserved quantities along the rate
        let dt = 1e-10;
        let plus = s.advanced(&[(&rate, dt)], s.t + dt);
        let minus = s.advanced(&[(&rate, -dt)], s.t - dt);
        let rp = conserved_quantities(&model.geom, &model.ops, &model.coeffs, &plus);
        let rm = conserved_quantities(&model.geom, &model.ops, &model.coeffs, &minus);
        for (name, analytic, fd) in [
            ("N", rates.n_rate, (rp.n - rm.n) / (2.0 * dt)),
            ("Phi", rates.phi_rate, (rp.phi - rm.phi) / (2.0 * dt)),
            ("P_phi", rates.p_phi_rate, (rp.p_phi - rm.p_phi) / (2.0 * dt)),
            ("U", rates.u_rate, (rp.u_total - rm.u_total) / (2.0 * dt)),
        ] {
            assert!(
                (analytic - fd).abs() <= 1e-4 * analytic.abs().max(fd.abs()),
                "{name} rate {analytic:.6e} vs fd {fd:.6e}"
            );
        }
    }

    #[test]
    fn probe_reads_uniform_bz() {
        let mesh = generate_rect_mesh((1.0, 2.0), (0.0, 1.0), 0.05).unwrap();
        let geom = compute_geometry(&mesh);
        let ops = build_operators(&mesh, &geom).unwrap();
        let frame = boundary_frame(&mesh);
        let mut s = PlasmaState::zeros(mesh.n_nodes());
        // psi = r^2/2 -> B_z = 1 T, B_r = 0
        s.psi = mesh.nodes.iter().map(|p| 0.5 * p[0] * p[0]).collect();
        // right vertical edge midpoint: tangent (0, 1) traversing CCW
        let probe = place_probe(&mesh, 2.0, 0.5, ProbeChannel::Poloidal);
        assert!(probe.snap_distance <= 0.05);
        let sig = probe_signal(&geom, &ops, &frame, &s, &probe);
        assert!((sig - 1.0).abs() < 0.1, "B_theta = {sig}");
        // toroidal channel of f = 0 is 0
        let probe_t = place_probe(&mesh, 2.0, 0.5, ProbeChannel::Toroidal);
        assert_eq!(probe_signal(&geom, &ops, &frame, &s, &probe_t), 0.0);
    }

    #[test]
    fn chord_averages() {
        let mesh = generate_rect_mesh((1.0, 2.0), (0.0, 1.0), 0.1).unwrap();
        // uniform field -> same constant
        let uni = vec![4.25; mesh.n_nodes()];
        let avg = chord_average_field(&mesh, [1.2, 0.1], [1.8, 0.9], &uni).unwrap();
        assert!((avg - 4.25).abs() < 1e-12);
        // field = z on a vertical chord spanning z in [0,1] -> 1/2
        let zf: Vec<f64> = mesh.nodes.iter().map(|p| p[1]).collect();
        let avg = chord_average_field(&mesh, [1.5, 0.0], [1.5, 1.0], &zf).unwrap();
        assert!((avg - 0.5).abs() < 1e-12, "{avg}");
        // chord leaving the mesh errors
        let err = chord_average_field(&mesh, [1.5, 0.5], [2.5, 0.5], &uni);
        assert!(matches!(err, Err(DiagnosticsError::ChordOutsideMesh { .. })));
    }

    #[test]
    fn time_series_and_snapshot_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        let mut w = TimeSeriesWriter::create(
            &path,
            &["probe_pol".into()],
            &["chord_ne".into()],
        )
        .unwrap();
        let rec = ConservedRecord {
            t: 0.0,
            n: 1.0,
            phi: 2.0,
            p_phi: 3.0,
            u_k: 4.0,
            u_th: 5.0,
            u_m: 6.0,
            u_total: 15.0,
        };
        w.write_row(&rec, &[0.5], &[1e20]).unwrap();
        drop(w);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "t,N,Phi,P_phi,U_K,U_Th,U_M,U_total,probe_pol,chord_ne"
        );
        assert!(text.lines().nth(1).unwrap().starts_with("0,1,2,3,4,5,6,15,0.5,"));

        let mpath =
            write_snapshot(dir.path(), "snap0", 1.5e-5, &[("n", &[1.0, 2.0][..])]).unwrap();
        let manifest = std::fs::read_to_string(mpath).unwrap();
        assert!(manifest.contains("field,n,snap0_n.csv"));
        let field = std::fs::read_to_string(dir.path().join("snap0_n.csv")).unwrap();
        assert_eq!(field, "node_index,value\n0,1\n1,2\n");
    }
}
