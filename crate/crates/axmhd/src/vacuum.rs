//! Vacuum field in the insulator region and its per-step coupling to the
//! plasma domain.
//!
//! No current flows in the insulator, so psi_v there satisfies the
//! homogeneous Grad-Shafranov problem with Dirichlet data assembled from
//! the coil-driven outer boundary and the plasma solution on the shared
//! interface column. The toroidal field on the insulating wall is a single
//! flux constant f_I chosen so the total discrete toroidal flux of the
//! plasma + wall system is conserved.

use crate::mesh::{compute_geometry, DomainSplit, GeometryTables, Mesh, WallGeometry};
use crate::ops::{build_delta_star0, build_operators, OperatorSet};
use crate::solver::{LinearSolver, SolverError};
use crate::sparse::Csr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VacuumError {
    #[error("boundary values array has {got} entries, insulator boundary has {want}")]
    BoundaryLengthMismatch { got: usize, want: usize },
    #[error("plasma boundary mask has {got} entries, boundary has {want}")]
    PlasmaMaskMismatch { got: usize, want: usize },
    #[error("vacuum solve failed: {0}")]
    Solve(#[from] SolverError),
    #[error(transparent)]
    Ops(#[from] crate::ops::OpsError),
}

/// Cached insulator-mesh operators and factorization. The matrix never
/// changes between steps; only the right-hand side does.
#[derive(Debug)]
pub struct VacuumSolver {
    pub geom: GeometryTables,
    pub ops: OperatorSet,
    delta_star: Csr,
    solver: LinearSolver,
    is_boundary: Vec<bool>,
    n_nodes: usize,
}

impl VacuumSolver {
    pub fn new(insulator: &Mesh) -> Result<Self, VacuumError> {
        let geom = compute_geometry(insulator);
        let ops = build_operators(insulator, &geom)?;
        let ds0 = build_delta_star0(&ops.delta_star, &ops.interior);
        let solver = LinearSolver::new(ds0);
        Ok(VacuumSolver {
            delta_star: ops.delta_star.clone(),
            solver,
            is_boundary: insulator.is_boundary(),
            n_nodes: insulator.n_nodes(),
            geom,
            ops,
        })
    }

    /// Solve the interior vacuum problem for the given nodal field whose
    /// boundary entries hold the Dirichlet data (interior entries are
    /// ignored). Returns the full nodal psi_v.
    pub fn solve(&self, boundary_data: &[f64]) -> Result<Vec<f64>, VacuumError> {
        if boundary_data.len() != self.n_nodes {
            return Err(VacuumError::BoundaryLengthMismatch {
                got: boundary_data.len(),
                want: self.n_nodes,
            });
        }
        // lift: psi_G = boundary data on the boundary, zero inside
        let mut psi_g = vec![0.0; self.n_nodes];
        for i in 0..self.n_nodes {
            if self.is_boundary[i] {
                psi_g[i] = boundary_data[i];
            }
        }
        let mut rhs = self.delta_star.matvec(&psi_g);
        for v in &mut rhs {
            *v = -*v;
        }
        for i in 0..self.n_nodes {
            if self.is_boundary[i] {
                rhs[i] = psi_g[i];
            }
        }
        Ok(self.solver.solve(&rhs, 1e-12)?)
    }
}

/// Geometric inductance factor of the insulating wall,
/// L_ins = h_I ln(r_out / r_in) — the closed form of the wall integral
/// of 1/r, used instead of quadrature.
pub fn wall_inductance(wall: &WallGeometry) -> f64 {
    wall.h_i * (wall.r_out / wall.r_in).ln()
}

/// Discrete interface inductance L_int = sum_j s_j / (3 r_j) over the
/// plasma-side interface nodes.
pub fn interface_inductance(geom: &GeometryTables, interface_nodes: &[usize]) -> f64 {
    interface_nodes
        .iter()
        .map(|&j| geom.s_n[j] / (3.0 * geom.r_n[j]))
        .sum()
}

/// Toroidal-flux constant pinned on the interface nodes:
/// f_I = -[sum_i f_i s_i/(3 r_i), interface values zeroed] / (L_ins + L_int).
/// Applying f_I on the interface makes the total discrete flux of the
/// plasma + wall system vanish against the wall term f_I L_ins.
pub fn flux_constant_fi(
    f: &[f64],
    s_n: &[f64],
    r_n: &[f64],
    interface_nodes: &[usize],
    l_ins: f64,
) -> f64 {
    let on_interface = {
        let mut m = vec![false; f.len()];
        for &j in interface_nodes {
            m[j] = true;
        }
        m
    };
    let numerator: f64 = (0..f.len())
        .filter(|&i| !on_interface[i])
        .map(|i| f[i] * s_n[i] / (3.0 * r_n[i]))
        .sum();
    let l_int: f64 = interface_nodes
        .iter()
        .map(|&j| s_n[j] / (3.0 * r_n[j]))
        .sum();
    -numerator / (l_ins + l_int)
}

/// One plasma/vacuum coupling pass, executed once per full timestep:
/// 1. apply the driven boundary psi to both meshes' outer boundaries
///    (entries given as `Some`; interface positions must be `None`),
/// 2. copy the plasma interface values onto the insulator interface,
/// 3. solve the insulator vacuum problem,
/// 4. copy psi_v back onto the plasma interface nodes.
///
/// Returns the insulator nodal psi_v.
pub fn couple_step(
    plasma_psi: &mut [f64],
    solver: &VacuumSolver,
    split: &DomainSplit,
    plasma_bc: &[Option<f64>],
    insulator_bc: &[Option<f64>],
) -> Result<Vec<f64>, VacuumError> {
    let pb = &split.plasma.boundary_nodes;
    let ib = &split.insulator.boundary_nodes;
    if plasma_bc.len() != pb.len() {
        return Err(VacuumError::PlasmaMaskMismatch { got: plasma_bc.len(), want: pb.len() });
    }
    if insulator_bc.len() != ib.len() {
        return Err(VacuumError::BoundaryLengthMismatch {
            got: insulator_bc.len(),
            want: ib.len(),
        });
    }

    // step 1: driven outer-boundary values on both meshes
    for (k, &node) in pb.iter().enumerate() {
        if let Some(v) = plasma_bc[k] {
            plasma_psi[node] = v;
        }
    }
    let mut vac_data = vec![0.0; split.insulator.n_nodes()];
    for (k, &node) in ib.iter().enumerate() {
        if let Some(v) = insulator_bc[k] {
            vac_data[node] = v;
        }
    }

    // step 2: plasma solution drives the insulator interface
    for &(p, i) in &split.interface_map {
        vac_data[i] = plasma_psi[p];
    }

    // step 3
    let psi_v = solver.solve(&vac_data)?;

    // step 4: vacuum solution closes the plasma boundary
    for &(p, i) in &split.interface_map {
        plasma_psi[p] = psi_v[i];
    }
    Ok(psi_v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_rect_mesh, split_domain};
    use crate::sparse::max_abs;

    fn vac_error_for_h(h: f64) -> f64 {
        // psi = r^2 z is an exact vacuum field; the discrete solve should
        // approach it under refinement
        let mesh = generate_rect_mesh((1.0, 2.0), (0.0, 1.0), h).unwrap();
        let solver = VacuumSolver::new(&mesh).unwrap();
        let exact: Vec<f64> = mesh.nodes.iter().map(|p| p[0] * p[0] * p[1]).collect();
        let psi = solver.solve(&exact).unwrap();
        let diff: Vec<f64> = psi.iter().zip(&exact).map(|(a, b)| a - b).collect();
        max_abs(&diff) / max_abs(&exact)
    }

    #[test]
    fn constant_boundary_gives_constant_field() {
        let mesh = generate_rect_mesh((1.0, 2.0), (0.0, 1.0), 0.25).unwrap();
        let solver = VacuumSolver::new(&mesh).unwrap();
        let psi = solver.solve(&vec![3.5; mesh.n_nodes()]).unwrap();
        for v in &psi {
            assert!((v - 3.5).abs() < 1e-10);
        }
    }

    #[test]
    fn analytic_vacuum_field_converges() {
        let coarse = vac_error_for_h(0.2);
        let fine = vac_error_for_h(0.1);
        assert!(fine < coarse / 1.5, "coarse {coarse:.3e}, fine {fine:.3e}");
        assert!(fine < 5e-3, "fine error {fine:.3e}");
    }

    #[test]
    fn wall_inductance_closed_form() {
        let w = WallGeometry { h_i: 0.5, r_in: 1.7, r_out: 1.8 };
        let expect = 0.5 * (1.8f64 / 1.7).ln();
        assert_eq!(wall_inductance(&w), expect);
    }

    #[test]
    fn flux_constant_toy_oracle() {
        // one non-interface node with f = 1 and s/(3r) = 0.01,
        // total inductance 0.1 -> f_I = -0.1
        let f = vec![1.0];
        let s = vec![0.03];
        let r = vec![1.0];
        let fi = flux_constant_fi(&f, &s, &r, &[], 0.1);
        assert!((fi + 0.1).abs() < 1e-15);
        // f supported only on interface nodes -> numerator zero
        let fi = flux_constant_fi(&[7.0], &s, &r, &[0], 0.1);
        assert_eq!(fi, 0.0);
        assert_eq!(flux_constant_fi(&[0.0], &s, &r, &[], 0.1), 0.0);
    }

    #[test]
    fn flux_closure_after_applying_fi() {
        let mesh = generate_rect_mesh((0.5, 1.7), (0.0, 1.0), 0.1).unwrap();
        let geom = compute_geometry(&mesh);
        // right-edge nodes stand in for the interface column
        let interface: Vec<usize> = (0..mesh.n_nodes())
            .filter(|&i| (mesh.nodes[i][0] - 1.7).abs() < 1e-12)
            .collect();
        assert!(!interface.is_empty());
        let wall = WallGeometry { h_i: 1.0, r_in: 1.7, r_out: 1.8 };
        let l_ins = wall_inductance(&wall);
        let mut f: Vec<f64> = mesh.nodes.iter().map(|p| 0.1 * p[0] * (1.0 + p[1])).collect();
        let fi = flux_constant_fi(&f, &geom.s_n, &geom.r_n, &interface, l_ins);
        for &j in &interface {
            f[j] = fi;
        }
        let total: f64 = (0..f.len())
            .map(|i| f[i] * geom.s_n[i] / (3.0 * geom.r_n[i]))
            .sum::<f64>()
            + fi * l_ins;
        let gross: f64 = (0..f.len())
            .map(|i| (f[i] * geom.s_n[i] / (3.0 * geom.r_n[i])).abs())
            .sum::<f64>()
            + (fi * l_ins).abs();
        assert!(total.abs() <= 1e-12 * gross, "{total:.3e} vs {gross:.3e}");
    }

    #[test]
    fn couple_step_fixed_point() {
        let combined = generate_rect_mesh((0.5, 1.9), (0.0, 1.0), 0.1).unwrap();
        let wall = WallGeometry { h_i: 1.0, r_in: 1.7, r_out: 1.9 };
        let split = split_domain(&combined, 1.7, wall).unwrap();
        let solver = VacuumSolver::new(&split.insulator).unwrap();

        // uniform-B_z field psi = r^2 / 2 everywhere, consistent BCs
        let analytic = |p: &[f64; 2]| 0.5 * p[0] * p[0];
        let mut plasma_psi: Vec<f64> = split.plasma.nodes.iter().map(analytic).collect();
        let on_interface_p: Vec<bool> = {
            let mut m = vec![false; split.plasma.n_nodes()];
            for &(p, _) in &split.interface_map {
                m[p] = true;
            }
            m
        };
        let on_interface_i: Vec<bool> = {
            let mut m = vec![false; split.insulator.n_nodes()];
            for &(_, i) in &split.interface_map {
                m[i] = true;
            }
            m
        };
        let plasma_bc: Vec<Option<f64>> = split
            .plasma
            .boundary_nodes
            .iter()
            .map(|&n| (!on_interface_p[n]).then(|| analytic(&split.plasma.nodes[n])))
            .collect();
        let insulator_bc: Vec<Option<f64>> = split
            .insulator
            .boundary_nodes
            .iter()
            .map(|&n| (!on_interface_i[n]).then(|| analytic(&split.insulator.nodes[n])))
            .collect();

        let v1 = couple_step(&mut plasma_psi, &solver, &split, &plasma_bc, &insulator_bc)
            .unwrap();
        let snapshot = plasma_psi.clone();
        let v2 = couple_step(&mut plasma_psi, &solver, &split, &plasma_bc, &insulator_bc)
            .unwrap();
        for (a, b) in plasma_psi.iter().zip(&snapshot) {
            assert!((a - b).abs() < 1e-11, "plasma boundary drifted");
        }
        for (a, b) in v1.iter().zip(&v2) {
            assert!((a - b).abs() < 1e-11, "vacuum field drifted");
        }
    }
}
