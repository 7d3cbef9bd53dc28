//! Advance a smooth magnetized state and report the drifts of the
//! discretely conserved quantities, then repeat with the symmetrized
//! density-diffusion corrections and report the energy balance.

use axmhd::config::{conservation_suite_energy, conservation_suite_momentum, print_report};
use axmhd::mesh::generate_rect_mesh;
use axmhd::mhd::{PhysicsCoefficients, Scheme};

fn main() {
    let mesh = generate_rect_mesh((0.3, 1.3), (0.0, 1.0), 0.1).unwrap();
    let coeffs = PhysicsCoefficients::default();

    let rep = conservation_suite_momentum(mesh.clone(), coeffs.clone(), 1e-9, 200, Scheme::Rk2)
        .unwrap();
    let mut ok = print_report("particles / toroidal flux / angular momentum", &rep.rows);

    let rep = conservation_suite_energy(mesh, coeffs, 1e-10, 200, Scheme::Rk2).unwrap();
    ok &= print_report("energy balance", &rep.rows);

    std::process::exit(if ok { 0 } else { 1 });
}
