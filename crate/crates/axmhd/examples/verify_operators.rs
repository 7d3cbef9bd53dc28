//! Check the discrete operator identities on a structured mesh and on a
//! perturbed copy of it.

use axmhd::config::{operator_identity_rows, print_report};
use axmhd::mesh::generate_rect_mesh;

fn main() {
    let mesh = generate_rect_mesh((0.3, 1.3), (0.0, 1.0), 0.05).unwrap();
    let rows = operator_identity_rows(&mesh, 100, 7).unwrap();
    let mut ok = print_report("structured mesh", &rows);

    // jitter the interior nodes; the identities are mesh-independent
    let mut perturbed = mesh.clone();
    let boundary = perturbed.is_boundary();
    for (i, p) in perturbed.nodes.iter_mut().enumerate() {
        if !boundary[i] {
            p[0] += 0.012 * ((i * 7919 % 13) as f64 / 13.0 - 0.5);
            p[1] += 0.012 * ((i * 104729 % 17) as f64 / 17.0 - 0.5);
        }
    }
    let rows = operator_identity_rows(&perturbed, 100, 8).unwrap();
    ok &= print_report("perturbed mesh", &rows);

    std::process::exit(if ok { 0 } else { 1 });
}
