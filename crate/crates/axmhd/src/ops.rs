//! The mimetic sparse operator set.
//!
//! Node-to-element first derivatives `Dre`/`Dze` come from the inverse of
//! each element's vertex matrix (rows (1, r_i, z_i)); everything else is
//! derived from them by the support-operator construction:
//!
//! ```text
//! Drn = -3 S^-1 Dre^T Ŝ              (element-to-node, adjoint up to volume weights)
//! Dr  =  S^-1 Me^T Ŝ Dre             (node-to-node, area-weighted average)
//! Wn  =  R^-1 S^-1 Me^T Ŝ R̂          (element-to-node volume average)
//! Δ   =  R^-1 (Drn R̂ Dre + Dzn R̂ Dze)
//! Δ*  =  R (Drn R̂^-1 Dre + Dzn R̂^-1 Dze)
//! ```
//!
//! with S = diag(s_n), Ŝ = diag(s^e), R = diag(r_n), R̂ = diag(r^e).
//! These definitions make the discrete product rule and divergence theorem
//! exact, which is what the conservation properties downstream rest on.
//! All matrices are materialized (sparse products), so the identity tests
//! are direct matrix comparisons and repeated application is plain matvec.

use crate::mesh::{GeometryTables, Mesh};
use crate::sparse::{div, had, Csr};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OpsError {
    #[error("element {element} is singular: |2s^e| = {two_s:.3e} < 1e-14 m^2")]
    SingularElement { element: usize, two_s: f64 },
}

/// Which index set a derivative maps between.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    /// Nodal field -> per-element derivative (exact on linears).
    NodeToElement,
    /// Element field -> nodal field; valid at boundary nodes only under the
    /// natural condition (the caller owns boundary handling).
    ElementToNode,
    /// Nodal -> nodal, area-weighted average of the elemental derivatives.
    NodeToNode,
}

#[derive(Debug, Clone)]
pub struct OperatorSet {
    /// [N_e x N_n], 1/m.
    pub dre: Csr,
    /// [N_e x N_n], 1/m.
    pub dze: Csr,
    /// [N_n x N_e], 1/m.
    pub drn: Csr,
    /// [N_n x N_e], 1/m.
    pub dzn: Csr,
    /// [N_n x N_n], 1/m.
    pub dr: Csr,
    /// [N_n x N_n], 1/m.
    pub dz: Csr,
    /// Element-to-node volume average [N_n x N_e], dimensionless.
    pub wn: Csr,
    /// Laplacian [N_n x N_n], 1/m^2.
    pub lap: Csr,
    /// Grad-Shafranov elliptic operator [N_n x N_n], 1/m^2.
    pub delta_star: Csr,
    /// Boundary-identity variant of `delta_star`.
    pub delta_star0: Csr,
    /// true for non-boundary nodes.
    pub interior: Vec<bool>,
}

pub fn build_operators(mesh: &Mesh, geom: &GeometryTables) -> Result<OperatorSet, OpsError> {
    let n_n = mesh.n_nodes();
    let n_e = mesh.n_elements();
    let mut tr = Vec::with_capacity(3 * n_e);
    let mut tz = Vec::with_capacity(3 * n_e);
    for (ei, e) in mesh.elements.iter().enumerate() {
        let [i, j, k] = *e;
        let (r1, z1) = (mesh.nodes[i][0], mesh.nodes[i][1]);
        let (r2, z2) = (mesh.nodes[j][0], mesh.nodes[j][1]);
        let (r3, z3) = (mesh.nodes[k][0], mesh.nodes[k][1]);
        let two_s = (r1 - r3) * (z2 - z3) - (r2 - r3) * (z1 - z3);
        if two_s.abs() < 1e-14 {
            return Err(OpsError::SingularElement { element: ei, two_s });
        }
        // b/c coefficients of the inverse vertex matrix: d/dr and d/dz of
        // the linear basis on this element
        tr.push((ei, i, (z2 - z3) / two_s));
        tr.push((ei, j, (z3 - z1) / two_s));
        tr.push((ei, k, (z1 - z2) / two_s));
        tz.push((ei, i, (r3 - r2) / two_s));
        tz.push((ei, j, (r1 - r3) / two_s));
        tz.push((ei, k, (r2 - r1) / two_s));
    }
    let dre = Csr::from_triplets(n_e, n_n, &tr);
    let dze = Csr::from_triplets(n_e, n_n, &tz);

    let inv_sn: Vec<f64> = geom.s_n.iter().map(|s| 1.0 / s).collect();
    let neg3_inv_sn: Vec<f64> = inv_sn.iter().map(|s| -3.0 * s).collect();
    let drn = dre.transpose().scale_rows(&neg3_inv_sn).scale_cols(&geom.s_e);
    let dzn = dze.transpose().scale_rows(&neg3_inv_sn).scale_cols(&geom.s_e);

    let met = geom.me.transpose();
    let met_s = met.scale_rows(&inv_sn).scale_cols(&geom.s_e);
    let dr = met_s.matmul(&dre);
    let dz = met_s.matmul(&dze);

    let inv_rn_sn: Vec<f64> = inv_sn.iter().zip(&geom.r_n).map(|(s, r)| s / r).collect();
    let se_re = had(&geom.s_e, &geom.r_e);
    let wn = met.scale_rows(&inv_rn_sn).scale_cols(&se_re);

    let inv_rn: Vec<f64> = geom.r_n.iter().map(|r| 1.0 / r).collect();
    let inv_re: Vec<f64> = geom.r_e.iter().map(|r| 1.0 / r).collect();
    let lap = drn
        .scale_cols(&geom.r_e)
        .matmul(&dre)
        .add_scaled(&dzn.scale_cols(&geom.r_e).matmul(&dze), 1.0)
        .scale_rows(&inv_rn);
    let delta_star = drn
        .scale_cols(&inv_re)
        .matmul(&dre)
        .add_scaled(&dzn.scale_cols(&inv_re).matmul(&dze), 1.0)
        .scale_rows(&geom.r_n);

    let interior = mesh.is_boundary().iter().map(|b| !b).collect::<Vec<_>>();
    let delta_star0 = build_delta_star0(&delta_star, &interior);

    Ok(OperatorSet {
        dre,
        dze,
        drn,
        dzn,
        dr,
        dz,
        wn,
        lap,
        delta_star,
        delta_star0,
        interior,
    })
}

/// Boundary-identity variant: boundary rows and columns zeroed, unit
/// diagonal on boundary rows, interior rows unchanged.
pub fn build_delta_star0(delta_star: &Csr, interior: &[bool]) -> Csr {
    let n = delta_star.nrows();
    let mut t = Vec::with_capacity(delta_star.nnz() + n);
    for i in 0..n {
        if !interior[i] {
            t.push((i, i, 1.0));
            continue;
        }
        let (cols, vals) = delta_star.row(i);
        for (c, v) in cols.iter().zip(vals) {
            if interior[*c] {
                t.push((i, *c, *v));
            }
        }
    }
    Csr::from_triplets(n, n, &t)
}

/// <u>^e: per-element mean of the three vertex values.
pub fn node_to_element_average(geom: &GeometryTables, u: &[f64]) -> Vec<f64> {
    let mut out = geom.me.matvec(u);
    for v in &mut out {
        *v /= 3.0;
    }
    out
}

/// Wn u_e: volume-consistent element-to-node map; satisfies
/// dV^T (Q ∘ Wn u_e) = dV_e^T (Q_e ∘ u_e) for any nodal Q.
pub fn volume_average_to_nodes(ops: &OperatorSet, u_e: &[f64]) -> Vec<f64> {
    ops.wn.matvec(u_e)
}

/// (D_r u, D_z u) with the flavor's matrices.
pub fn gradient(ops: &OperatorSet, u: &[f64], flavor: Flavor) -> (Vec<f64>, Vec<f64>) {
    match flavor {
        Flavor::NodeToElement => (ops.dre.matvec(u), ops.dze.matvec(u)),
        Flavor::ElementToNode => (ops.drn.matvec(u), ops.dzn.matvec(u)),
        Flavor::NodeToNode => (ops.dr.matvec(u), ops.dz.matvec(u)),
    }
}

/// Cylindrical divergence (D_r(r ∘ P_r) + D_z(r ∘ P_z)) ⊘ r with the
/// flavor's matrices and the matching source/target radii.
pub fn divergence(
    ops: &OperatorSet,
    geom: &GeometryTables,
    p_r: &[f64],
    p_z: &[f64],
    flavor: Flavor,
) -> Vec<f64> {
    match flavor {
        Flavor::NodeToElement => {
            let num = crate::sparse::axpy(
                &ops.dre.matvec(&had(&geom.r_n, p_r)),
                &ops.dze.matvec(&had(&geom.r_n, p_z)),
                1.0,
            );
            div(&num, &geom.r_e)
        }
        Flavor::ElementToNode => {
            let num = crate::sparse::axpy(
                &ops.drn.matvec(&had(&geom.r_e, p_r)),
                &ops.dzn.matvec(&had(&geom.r_e, p_z)),
                1.0,
            );
            div(&num, &geom.r_n)
        }
        Flavor::NodeToNode => {
            let num = crate::sparse::axpy(
                &ops.dr.matvec(&had(&geom.r_n, p_r)),
                &ops.dz.matvec(&had(&geom.r_n, p_z)),
                1.0,
            );
            div(&num, &geom.r_n)
        }
    }
}

/// Δu = ∇_n · (∇^e u); annihilates constants, and dV^T (Δu) = 0 exactly.
pub fn apply_laplacian(ops: &OperatorSet, u: &[f64]) -> Vec<f64> {
    ops.lap.matvec(u)
}

/// Δ*ψ = r² ∘ ∇_n · ((∇^e ψ) ⊘ r_e²); dV^T [(Δ*ψ) ⊘ r²] = 0 exactly.
pub fn apply_delta_star(ops: &OperatorSet, psi: &[f64]) -> Vec<f64> {
    ops.delta_star.matvec(psi)
}

impl OperatorSet {
    /// Dump every assembled operator in matrix-market form, for
    /// cross-implementation diffing. Files are named `<prefix><op>.mtx`.
    pub fn dump(&self, dir: &Path, prefix: &str) -> std::io::Result<()> {
        let ops: [(&str, &Csr); 10] = [
            ("dre", &self.dre),
            ("dze", &self.dze),
            ("drn", &self.drn),
            ("dzn", &self.dzn),
            ("dr", &self.dr),
            ("dz", &self.dz),
            ("wn", &self.wn),
            ("lap", &self.lap),
            ("delta_star", &self.delta_star),
            ("delta_star0", &self.delta_star0),
        ];
        for (name, m) in ops {
            let mut f = std::fs::File::create(dir.join(format!("{prefix}{name}.mtx")))?;
            m.write_matrix_market(&mut f)?;
        }
        Ok(())
    }
}
