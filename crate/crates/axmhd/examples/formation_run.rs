//! End-to-end coaxial-gun formation run: build the combined
//! plasma/insulator mesh, synthesize the gun-voltage and coil-flux input
//! tables, write a config file, and drive the full simulation loop.
//! Afterwards print the flux-accounting tail: the total toroidal flux in
//! plasma plus wall must track the injected flux to round-off.

use axmhd::mesh::generate_rect_mesh;
use std::fs;
use std::io::Write;
use std::path::Path;

fn main() {
    let dir = std::env::temp_dir().join("axmhd_formation_example");
    fs::create_dir_all(&dir).unwrap();

    // combined domain: plasma r in [0.1, 0.4], insulating wall shell out
    // to r = 0.5, gun throat at the bottom of z in [-0.6, 0.2]
    let combined = generate_rect_mesh((0.1, 0.5), (-0.6, 0.2), 0.05).unwrap();
    combined.save(&dir.join("combined.mesh")).unwrap();

    // stuffing flux on the outer boundary; the initial interior field is the
    // harmonic-style extension of these wall values
    {
        let mut f = fs::File::create(dir.join("psi_main.csv")).unwrap();
        writeln!(f, "node_index,psi_value").unwrap();
        for &i in &combined.boundary_nodes {
            let r = combined.nodes[i][0];
            writeln!(f, "{},{}", i, 0.02 * r * r).unwrap();
        }
    }
    // gun voltage: 40 V pulse that decays over the run
    {
        let mut f = fs::File::create(dir.join("vgun.csv")).unwrap();
        writeln!(f, "t_seconds,value").unwrap();
        for k in 0..=100 {
            let t = 1e-6 * k as f64;
            writeln!(f, "{},{}", t, -40.0 * (-t / 30e-6).exp()).unwrap();
        }
    }

    let config = format!(
        "mesh = combined.mesh\n\
         dt = 5e-10\n\
         t_end = 2e-7\n\
         output_dt = 2e-8\n\
         output_dir = out\n\
         interface_r = 0.4\n\
         wall_h_i = 0.01\n\
         wall_r_out = 0.5\n\
         v_gun_csv = vgun.csv\n\
         psi_main_csv = psi_main.csv\n\
         init_ti_ev = 3\n\
         init_te_ev = 3\n\
         probe_pol = 0.25,0.2\n\
         probe_tor = 0.25,-0.6\n\
         chord_ne = 0.12,0.0,0.38,0.0\n\
         chord_ti = 0.12,-0.4,0.38,-0.4\n"
    );
    let cfg_path = dir.join("run.cfg");
    fs::write(&cfg_path, config).unwrap();

    let cfg = axmhd::config::RunConfig::load(&cfg_path).unwrap();
    axmhd::config::run_simulation(&cfg).unwrap();

    print_tail(&dir.join("out/flux_accounting.csv"), 4);
    print_tail(&dir.join("out/timeseries.csv"), 2);
    println!("outputs in {}", dir.join("out").display());
}

fn print_tail(path: &Path, n: usize) {
    let text = fs::read_to_string(path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    println!("--- {} ---", path.file_name().unwrap().to_string_lossy());
    println!("{}", lines[0]);
    for l in lines.iter().skip(lines.len().saturating_sub(n)) {
        println!("{l}");
    }
}
