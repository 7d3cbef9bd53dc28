//! Synthetic-diagnostic sampling: wall-mounted magnetic probes and
//! line-averaged interferometer / Doppler chords evaluated on a smooth
//! magnetized state.

use axmhd::config::smooth_magnetized_state;
use axmhd::diagnostics::{
    chord_average, conserved_quantities, place_probe, probe_signal, Chord, ChordField,
    ProbeChannel,
};
use axmhd::mesh::generate_rect_mesh;
use axmhd::mhd::{BoundaryConditions, Model, PhysicsCoefficients};

fn main() {
    let mesh = generate_rect_mesh((0.3, 1.3), (0.0, 1.0), 0.05).unwrap();
    let model = Model::new(mesh, PhysicsCoefficients::default(), BoundaryConditions::default())
        .unwrap();
    let s = smooth_magnetized_state(&model);

    let rec = conserved_quantities(&model.geom, &model.ops, &model.coeffs, &s);
    println!("N = {:.4e}  Phi = {:.4e} Wb  U = {:.4e} J", rec.n, rec.phi, rec.u_total);

    for (r, z, ch, label) in [
        (0.8, 1.0, ProbeChannel::Poloidal, "B_pol @ top wall"),
        (0.8, 0.0, ProbeChannel::Poloidal, "B_pol @ bottom wall"),
        (1.3, 0.5, ProbeChannel::Toroidal, "B_tor @ outer wall"),
    ] {
        let probe = place_probe(&model.mesh, r, z, ch);
        let sig = probe_signal(&model.geom, &model.ops, &model.frame, &s, &probe);
        println!("{label:<22} ({r:.2}, {z:.2}) -> {sig:+.6e} T");
    }

    for (p1, p2, field, label) in [
        ([0.35, 0.5], [1.25, 0.5], ChordField::ElectronDensity, "n_e chord (midplane)"),
        ([0.8, 0.05], [0.8, 0.95], ChordField::IonTemperatureEv, "T_i chord (vertical)"),
    ] {
        let v = chord_average(&model.mesh, &model.coeffs, &s, &Chord { p1, p2, field }).unwrap();
        println!("{label:<22} -> {v:.6e}");
    }
}
