//! Unstructured triangular meshes in the (r, z) half-plane: ingestion,
//! validation, geometry tables, boundary frames, and plasma/insulator
//! domain splitting.
//!
//! Conventions baked in everywhere downstream:
//! - element vertices are counter-clockwise, 2s^e = (r_i−r_k)(z_j−z_k) − (r_j−r_k)(z_i−z_k) > 0;
//! - the domain is annular: every node radius is strictly positive
//!   (minimum 1e-6 m), so the axis singularity never appears;
//! - the boundary is a single closed loop, reconstructed from edge
//!   incidence (an edge on exactly one element is a boundary edge) —
//!   node tags in mesh files are advisory only.

use crate::sparse::Csr;
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;

pub const MIN_RADIUS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("element {element} is not counter-clockwise (2s^e = {two_s:.3e} <= 0)")]
    NonCcwElement { element: usize, two_s: f64 },
    #[error("node {node} belongs to no element")]
    DanglingNode { node: usize },
    #[error("boundary is not a single closed manifold loop")]
    NonManifoldBoundary,
    #[error("node {node} has non-positive radius r = {r:.3e} (minimum {MIN_RADIUS:.0e} m)")]
    NonPositiveRadius { node: usize, r: f64 },
    #[error("degenerate coordinate range: {0}")]
    DegenerateRange(String),
    #[error("no node column within 1e-9 m of interface radius {0}")]
    InterfaceNotFound(f64),
    #[error("interface node columns cannot be paired one-to-one")]
    UnpairedInterfaceNode,
    #[error("element {element} references node {node} out of range")]
    NodeIndexOutOfRange { element: usize, node: usize },
    #[error("mesh file parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Triangular mesh. `boundary_nodes` traces the boundary loop
/// counter-clockwise, starting from the lowest-index boundary node.
#[derive(Debug, Clone)]
pub struct Mesh {
    /// (r, z) coordinates in meters.
    pub nodes: Vec<[f64; 2]>,
    /// CCW vertex index triples.
    pub elements: Vec<[usize; 3]>,
    pub boundary_nodes: Vec<usize>,
    /// Advisory per-node labels (empty string = untagged).
    pub node_tags: Vec<String>,
}

/// Twice the signed area of element (i, j, k).
pub fn two_s(nodes: &[[f64; 2]], e: &[usize; 3]) -> f64 {
    let [i, j, k] = *e;
    (nodes[i][0] - nodes[k][0]) * (nodes[j][1] - nodes[k][1])
        - (nodes[j][0] - nodes[k][0]) * (nodes[i][1] - nodes[k][1])
}

impl Mesh {
    /// Validate element orientation, node usage, radii, and reconstruct the
    /// boundary loop from edge incidence.
    pub fn new(
        nodes: Vec<[f64; 2]>,
        elements: Vec<[usize; 3]>,
        node_tags: Vec<String>,
    ) -> Result<Self, MeshError> {
        let mut mesh = Mesh { nodes, elements, boundary_nodes: Vec::new(), node_tags };
        if mesh.node_tags.len() != mesh.nodes.len() {
            mesh.node_tags = vec![String::new(); mesh.nodes.len()];
        }
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&mut self) -> Result<(), MeshError> {
        let n_n = self.nodes.len();
        for (ei, e) in self.elements.iter().enumerate() {
            for &v in e {
                if v >= n_n {
                    return Err(MeshError::NodeIndexOutOfRange { element: ei, node: v });
                }
            }
            let ts = two_s(&self.nodes, e);
            if ts <= 0.0 {
                return Err(MeshError::NonCcwElement { element: ei, two_s: ts });
            }
        }
        for (ni, p) in self.nodes.iter().enumerate() {
            if p[0] < MIN_RADIUS {
                return Err(MeshError::NonPositiveRadius { node: ni, r: p[0] });
            }
        }
        let mut used = vec![false; n_n];
        for e in &self.elements {
            for &v in e {
                used[v] = true;
            }
        }
        if let Some(node) = used.iter().position(|u| !u) {
            return Err(MeshError::DanglingNode { node });
        }
        self.boundary_nodes = self.reconstruct_boundary()?;
        Ok(())
    }

    /// Boundary edges appear on exactly one element; because elements are
    /// CCW, those directed edges already trace the loop counter-clockwise.
    fn reconstruct_boundary(&self) -> Result<Vec<usize>, MeshError> {
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for e in &self.elements {
            for (a, b) in [(e[0], e[1]), (e[1], e[2]), (e[2], e[0])] {
                let key = (a.min(b), a.max(b));
                *count.entry(key).or_insert(0) += 1;
            }
        }
        let mut next: HashMap<usize, usize> = HashMap::new();
        for e in &self.elements {
            for (a, b) in [(e[0], e[1]), (e[1], e[2]), (e[2], e[0])] {
                if count[&(a.min(b), a.max(b))] == 1 {
                    if next.insert(a, b).is_some() {
                        return Err(MeshError::NonManifoldBoundary);
                    }
                }
            }
        }
        if next.is_empty() {
            return Err(MeshError::NonManifoldBoundary);
        }
        let start = *next.keys().min().unwrap();
        let mut loop_nodes = vec![start];
        let mut cur = start;
        loop {
            let Some(&nxt) = next.get(&cur) else {
                return Err(MeshError::NonManifoldBoundary);
            };
            if nxt == start {
                break;
            }
            if loop_nodes.len() > next.len() {
                return Err(MeshError::NonManifoldBoundary);
            }
            loop_nodes.push(nxt);
            cur = nxt;
        }
        if loop_nodes.len() != next.len() {
            // leftover boundary edges => more than one loop
            return Err(MeshError::NonManifoldBoundary);
        }
        Ok(loop_nodes)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn is_boundary(&self) -> Vec<bool> {
        let mut b = vec![false; self.n_nodes()];
        for &i in &self.boundary_nodes {
            b[i] = true;
        }
        b
    }

    /// Parse the plain-text mesh format:
    /// line 1 `N_n N_e`; N_n lines `r z tag`; N_e lines `i j k` (1-based).
    /// `#` starts a comment; blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self, MeshError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(no, l)| (no + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hdr_no, hdr) = lines
            .next()
            .ok_or(MeshError::Parse { line: 0, msg: "empty file".into() })?;
        let mut it = hdr.split_whitespace();
        let n_n: usize = parse_tok(&mut it, hdr_no, "node count")?;
        let n_e: usize = parse_tok(&mut it, hdr_no, "element count")?;
        let mut nodes = Vec::with_capacity(n_n);
        let mut tags = Vec::with_capacity(n_n);
        for _ in 0..n_n {
            let (no, l) = lines
                .next()
                .ok_or(MeshError::Parse { line: 0, msg: "truncated node list".into() })?;
            let mut it = l.split_whitespace();
            let r: f64 = parse_tok(&mut it, no, "r coordinate")?;
            let z: f64 = parse_tok(&mut it, no, "z coordinate")?;
            tags.push(it.next().unwrap_or("").to_string());
            nodes.push([r, z]);
        }
        let mut elements = Vec::with_capacity(n_e);
        for _ in 0..n_e {
            let (no, l) = lines
                .next()
                .ok_or(MeshError::Parse { line: 0, msg: "truncated element list".into() })?;
            let mut it = l.split_whitespace();
            let i: usize = parse_tok(&mut it, no, "vertex i")?;
            let j: usize = parse_tok(&mut it, no, "vertex j")?;
            let k: usize = parse_tok(&mut it, no, "vertex k")?;
            if i == 0 || j == 0 || k == 0 {
                return Err(MeshError::Parse { line: no, msg: "vertex indices are 1-based".into() });
            }
            elements.push([i - 1, j - 1, k - 1]);
        }
        Mesh::new(nodes, elements, tags)
    }

    pub fn load(path: &Path) -> Result<Self, MeshError> {
        Mesh::parse(&std::fs::read_to_string(path)?)
    }

    /// Serialize in the same format `parse` reads. Coordinates use Rust's
    /// shortest round-trip float formatting, so save/load is lossless.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("{} {}\n", self.n_nodes(), self.n_elements()));
        for (p, tag) in self.nodes.iter().zip(&self.node_tags) {
            if tag.is_empty() {
                s.push_str(&format!("{} {}\n", p[0], p[1]));
            } else {
                s.push_str(&format!("{} {} {}\n", p[0], p[1], tag));
            }
        }
        for e in &self.elements {
            s.push_str(&format!("{} {} {}\n", e[0] + 1, e[1] + 1, e[2] + 1));
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), MeshError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn parse_tok<'a, T: std::str::FromStr>(
    it: &mut impl Iterator<Item = &'a str>,
    line: usize,
    what: &str,
) -> Result<T, MeshError> {
    let tok = it
        .next()
        .ok_or_else(|| MeshError::Parse { line, msg: format!("missing {what}") })?;
    tok.parse()
        .map_err(|_| MeshError::Parse { line, msg: format!("bad {what}: {tok:?}") })
}

/// Structured rectangle mesh on [r0,r1] x [z0,z1] with target edge length
/// `h_e`; each grid cell is split into two CCW triangles. Deterministic
/// node ordering: index = iz*(nr+1) + ir, r fastest.
pub fn generate_rect_mesh(
    r_range: (f64, f64),
    z_range: (f64, f64),
    h_e: f64,
) -> Result<Mesh, MeshError> {
    let (r0, r1) = r_range;
    let (z0, z1) = z_range;
    if !(h_e > 0.0) {
        return Err(MeshError::DegenerateRange(format!("h_e = {h_e} must be > 0")));
    }
    if r0 < MIN_RADIUS {
        return Err(MeshError::DegenerateRange(format!(
            "r range starts at {r0}; the domain is annular, r > 0 required"
        )));
    }
    if r1 <= r0 || z1 <= z0 {
        return Err(MeshError::DegenerateRange(format!(
            "empty range r [{r0},{r1}], z [{z0},{z1}]"
        )));
    }
    let nr = (((r1 - r0) / h_e).round().max(1.0)) as usize;
    let nz = (((z1 - z0) / h_e).round().max(1.0)) as usize;
    let mut nodes = Vec::with_capacity((nr + 1) * (nz + 1));
    for iz in 0..=nz {
        for ir in 0..=nr {
            let r = r0 + (r1 - r0) * ir as f64 / nr as f64;
            let z = z0 + (z1 - z0) * iz as f64 / nz as f64;
            nodes.push([r, z]);
        }
    }
    let at = |ir: usize, iz: usize| iz * (nr + 1) + ir;
    let mut elements = Vec::with_capacity(2 * nr * nz);
    for iz in 0..nz {
        for ir in 0..nr {
            let (n00, n10) = (at(ir, iz), at(ir + 1, iz));
            let (n01, n11) = (at(ir, iz + 1), at(ir + 1, iz + 1));
            elements.push([n00, n10, n11]);
            elements.push([n00, n11, n01]);
        }
    }
    Mesh::new(nodes, elements, Vec::new())
}

/// Per-mesh geometry: areas, centroids, volume weights and the
/// element-to-node connectivity matrix M_e (three unit entries per row).
#[derive(Debug, Clone)]
pub struct GeometryTables {
    /// Element areas s^e [m^2].
    pub s_e: Vec<f64>,
    /// Element centroid radii [m].
    pub r_e: Vec<f64>,
    /// Element centroid heights [m].
    pub z_e: Vec<f64>,
    /// Node support areas s_n = M_e^T s_e [m^2].
    pub s_n: Vec<f64>,
    /// Node volume weights (2π/3) s_n r_n [m^3].
    pub dv_n: Vec<f64>,
    /// Element volumes 2π s_e r_e [m^3].
    pub dv_e: Vec<f64>,
    /// Element×node connectivity [N_e x N_n].
    pub me: Csr,
    /// Node radii, cached from the mesh [m].
    pub r_n: Vec<f64>,
}

pub fn compute_geometry(mesh: &Mesh) -> GeometryTables {
    let n_n = mesh.n_nodes();
    let n_e = mesh.n_elements();
    let mut s_e = Vec::with_capacity(n_e);
    let mut r_e = Vec::with_capacity(n_e);
    let mut z_e = Vec::with_capacity(n_e);
    let mut triplets = Vec::with_capacity(3 * n_e);
    for (ei, e) in mesh.elements.iter().enumerate() {
        s_e.push(0.5 * two_s(&mesh.nodes, e));
        r_e.push((mesh.nodes[e[0]][0] + mesh.nodes[e[1]][0] + mesh.nodes[e[2]][0]) / 3.0);
        z_e.push((mesh.nodes[e[0]][1] + mesh.nodes[e[1]][1] + mesh.nodes[e[2]][1]) / 3.0);
        for &v in e {
            triplets.push((ei, v, 1.0));
        }
    }
    let me = Csr::from_triplets(n_e, n_n, &triplets);
    let s_n = me.transpose().matvec(&s_e);
    let r_n: Vec<f64> = mesh.nodes.iter().map(|p| p[0]).collect();
    let two_pi_3 = 2.0 * std::f64::consts::PI / 3.0;
    let dv_n: Vec<f64> = s_n.iter().zip(&r_n).map(|(s, r)| two_pi_3 * s * r).collect();
    let dv_e: Vec<f64> = s_e
        .iter()
        .zip(&r_e)
        .map(|(s, r)| 2.0 * std::f64::consts::PI * s * r)
        .collect();
    GeometryTables { s_e, r_e, z_e, s_n, dv_n, dv_e, me, r_n }
}

/// Unit tangents/outward normals at boundary nodes. Tangents follow the
/// CCW boundary loop; at corners the tangent is the normalized average of
/// the two adjacent edge directions. The outward normal is the tangent
/// rotated -90 degrees.
#[derive(Debug, Clone)]
pub struct BoundaryFrame {
    /// Parallel to `mesh.boundary_nodes`: (t_r, t_z).
    pub tangent: Vec<[f64; 2]>,
    /// Parallel to `mesh.boundary_nodes`: (n_r, n_z).
    pub normal: Vec<[f64; 2]>,
}

pub fn boundary_frame(mesh: &Mesh) -> BoundaryFrame {
    let loop_nodes = &mesh.boundary_nodes;
    let nb = loop_nodes.len();
    let mut tangent = Vec::with_capacity(nb);
    let mut normal = Vec::with_capacity(nb);
    for i in 0..nb {
        let prev = mesh.nodes[loop_nodes[(i + nb - 1) % nb]];
        let here = mesh.nodes[loop_nodes[i]];
        let next = mesh.nodes[loop_nodes[(i + 1) % nb]];
        let e1 = normalize([here[0] - prev[0], here[1] - prev[1]]);
        let e2 = normalize([next[0] - here[0], next[1] - here[1]]);
        let sum = [e1[0] + e2[0], e1[1] + e2[1]];
        let t = if sum[0].hypot(sum[1]) > 1e-12 { normalize(sum) } else { e2 };
        tangent.push(t);
        normal.push([t[1], -t[0]]);
    }
    BoundaryFrame { tangent, normal }
}

fn normalize(v: [f64; 2]) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    [v[0] / n, v[1] / n]
}

/// Insulating-wall cross-section geometry.
#[derive(Debug, Clone, Copy)]
pub struct WallGeometry {
    /// Wall height [m].
    pub h_i: f64,
    /// Inner wall radius [m].
    pub r_in: f64,
    /// Outer wall radius [m].
    pub r_out: f64,
}

/// Plasma/insulator split of a combined mesh along a shared vertical node
/// column.
#[derive(Debug, Clone)]
pub struct DomainSplit {
    pub plasma: Mesh,
    pub insulator: Mesh,
    /// (plasma node index, insulator node index) pairs for the shared
    /// interface column, sorted by z.
    pub interface_map: Vec<(usize, usize)>,
    pub wall: WallGeometry,
}

/// Split `combined` into plasma (r < interface_r side) and insulator
/// (r > interface_r side) meshes. Nodes on the interface column are
/// duplicated so each mesh carries its own copy; meshes that already hold
/// coincident duplicate columns are handled by the same side-incidence
/// classification.
pub fn split_domain(
    combined: &Mesh,
    interface_r: f64,
    wall: WallGeometry,
) -> Result<DomainSplit, MeshError> {
    if wall.r_in >= wall.r_out {
        return Err(MeshError::DegenerateRange(format!(
            "wall radii r_in {} >= r_out {}",
            wall.r_in, wall.r_out
        )));
    }
    let on_col: Vec<bool> = combined
        .nodes
        .iter()
        .map(|p| (p[0] - interface_r).abs() <= 1e-9)
        .collect();
    if !on_col.iter().any(|&b| b) {
        return Err(MeshError::InterfaceNotFound(interface_r));
    }
    let submesh = |take_left: bool| -> Result<(Mesh, Vec<usize>), MeshError> {
        let mut global_to_local: HashMap<usize, usize> = HashMap::new();
        let mut nodes = Vec::new();
        let mut tags = Vec::new();
        let mut elements = Vec::new();
        for e in &combined.elements {
            let cen_r = (combined.nodes[e[0]][0]
                + combined.nodes[e[1]][0]
                + combined.nodes[e[2]][0])
                / 3.0;
            if (cen_r < interface_r) != take_left {
                continue;
            }
            let mut local = [0usize; 3];
            for (slot, &v) in local.iter_mut().zip(e) {
                let idx = *global_to_local.entry(v).or_insert_with(|| {
                    nodes.push(combined.nodes[v]);
                    tags.push(combined.node_tags.get(v).cloned().unwrap_or_default());
                    nodes.len() - 1
                });
                *slot = idx;
            }
            elements.push(local);
        }
        let iface: Vec<usize> = nodes
            .iter()
            .enumerate()
            .filter(|(_, p)| (p[0] - interface_r).abs() <= 1e-9)
            .map(|(i, _)| i)
            .collect();
        Ok((Mesh::new(nodes, elements, tags)?, iface))
    };
    let (plasma, mut p_iface) = submesh(true)?;
    let (insulator, mut i_iface) = submesh(false)?;
    if p_iface.len() != i_iface.len() || p_iface.is_empty() {
        return Err(MeshError::UnpairedInterfaceNode);
    }
    p_iface.sort_by(|a, b| plasma.nodes[*a][1].total_cmp(&plasma.nodes[*b][1]));
    i_iface.sort_by(|a, b| insulator.nodes[*a][1].total_cmp(&insulator.nodes[*b][1]));
    let mut interface_map = Vec::with_capacity(p_iface.len());
    for (&p, &i) in p_iface.iter().zip(&i_iface) {
        let (pp, ip) = (plasma.nodes[p], insulator.nodes[i]);
        if (pp[0] - ip[0]).abs() > 1e-12 || (pp[1] - ip[1]).abs() > 1e-12 {
            return Err(MeshError::UnpairedInterfaceNode);
        }
        interface_map.push((p, i));
    }
    Ok(DomainSplit { plasma, insulator, interface_map, wall })
}

/// 4-node / 2-element rectangle on [1,2]x[0,1]:
/// nodes (1,0),(2,0),(2,1),(1,1); elements (1,2,3),(1,3,4).
#[cfg(test)]
pub(crate) fn two_element_mesh() -> Mesh {
    Mesh::parse("# hand rectangle\n4 2\n1 0\n2 0\n2 1\n1 1\n1 2 3\n1 3 4\n").unwrap()
}
