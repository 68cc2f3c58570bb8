//! Tetrahedral volume meshes, their oriented boundary surfaces and incidence tables.
//!
//! Edges carry a global orientation from the lower to the higher node index. Every
//! sign table in the crate (Nédélec, Raviart–Thomas, topological gradient) derives
//! from that convention.

mod boundary;
pub mod generate;
mod msh;

use std::collections::{BTreeMap, HashMap};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use boundary::SurfaceMesh;
pub use msh::{load_msh, parse_msh, write_msh};

pub type Point = Vector3<f64>;

/// Local edges of a tetrahedron as pairs of local vertex indices.
pub const TET_EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Local faces of a tetrahedron; face `k` is opposite vertex `k`.
pub const TET_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

/// Material data attached to a region tag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub mu_r: f64,
    /// Prescribed magnetization in A/m.
    pub magnetization: [f64; 3],
}

impl Default for Material {
    fn default() -> Self {
        Self {
            mu_r: 1.0,
            magnetization: [0.0; 3],
        }
    }
}

/// Volume discretization of the solid parts.
#[derive(Debug, Clone)]
pub struct TetMesh {
    pub nodes: Vec<Point>,
    /// Node indices, positively oriented.
    pub tets: Vec<[usize; 4]>,
    pub region: Vec<i64>,
    /// Connected component of each tet, numbered by first appearance.
    pub component: Vec<usize>,
    pub n_components: usize,
    pub materials: BTreeMap<i64, Material>,
    /// Optional per-tet constant current density in A/m².
    pub current_density: Option<Vec<Point>>,
    edges: Vec<[usize; 2]>,
    tet_edges: Vec<[usize; 6]>,
    tet_edge_signs: Vec<[f64; 6]>,
}

impl TetMesh {
    /// Builds a mesh, reordering tets to positive orientation and deriving edges and components.
    pub fn new(nodes: Vec<Point>, mut tets: Vec<[usize; 4]>, region: Vec<i64>) -> Result<Self> {
        if region.len() != tets.len() {
            return Err(Error::Dimension(format!(
                "{} region tags for {} tets",
                region.len(),
                tets.len()
            )));
        }
        for (i, t) in tets.iter_mut().enumerate() {
            if t.iter().any(|&n| n >= nodes.len()) {
                return Err(Error::Dimension(format!("tet {i} references a missing node")));
            }
            let v = signed_volume(&nodes, t);
            let scale = (nodes[t[1]] - nodes[t[0]]).norm().powi(3);
            if v.abs() <= 1e-14 * scale || !v.is_finite() {
                return Err(Error::DegenerateTet(i));
            }
            if v < 0.0 {
                t.swap(2, 3);
            }
        }

        let mut edge_set: Vec<[usize; 2]> = tets
            .iter()
            .flat_map(|t| TET_EDGES.iter().map(move |&(a, b)| sorted2(t[a], t[b])))
            .collect();
        edge_set.sort_unstable();
        edge_set.dedup();
        let lookup: HashMap<[usize; 2], usize> =
            edge_set.iter().enumerate().map(|(i, e)| (*e, i)).collect();
        let mut tet_edges = Vec::with_capacity(tets.len());
        let mut tet_edge_signs = Vec::with_capacity(tets.len());
        for t in &tets {
            let mut ids = [0; 6];
            let mut signs = [0.0; 6];
            for (k, &(a, b)) in TET_EDGES.iter().enumerate() {
                ids[k] = lookup[&sorted2(t[a], t[b])];
                signs[k] = if t[a] < t[b] { 1.0 } else { -1.0 };
            }
            tet_edges.push(ids);
            tet_edge_signs.push(signs);
        }

        let (component, n_components) = connected_components(nodes.len(), &tets);
        let mut materials = BTreeMap::new();
        for &r in &region {
            materials.entry(r).or_insert_with(Material::default);
        }

        Ok(Self {
            nodes,
            tets,
            region,
            component,
            n_components,
            materials,
            current_density: None,
            edges: edge_set,
            tet_edges,
            tet_edge_signs,
        })
    }

    /// Replaces the material table; every region tag of the mesh must be covered.
    pub fn with_materials(mut self, materials: BTreeMap<i64, Material>) -> Result<Self> {
        for &r in &self.region {
            match materials.get(&r) {
                None => return Err(Error::MissingMaterial(r)),
                Some(m) if !(m.mu_r > 0.0 && m.mu_r.is_finite()) => {
                    return Err(Error::InvalidMaterial {
                        tag: r,
                        msg: format!("mu_r must be positive, got {}", m.mu_r),
                    })
                }
                Some(_) => {}
            }
        }
        self.materials = materials;
        Ok(self)
    }

    pub fn set_material(&mut self, tag: i64, material: Material) {
        self.materials.insert(tag, material);
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn tet_edges(&self, t: usize) -> &[usize; 6] {
        &self.tet_edges[t]
    }

    pub fn tet_edge_signs(&self, t: usize) -> &[f64; 6] {
        &self.tet_edge_signs[t]
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.edges.binary_search(&sorted2(a, b)).ok()
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        signed_volume(&self.nodes, &self.tets[t])
    }

    pub fn volume(&self) -> f64 {
        (0..self.tets.len()).map(|t| self.tet_volume(t)).sum()
    }

    pub fn tet_points(&self, t: usize) -> [Point; 4] {
        let n = &self.tets[t];
        [self.nodes[n[0]], self.nodes[n[1]], self.nodes[n[2]], self.nodes[n[3]]]
    }

    pub fn tet_centroid(&self, t: usize) -> Point {
        let p = self.tet_points(t);
        (p[0] + p[1] + p[2] + p[3]) / 4.0
    }

    /// Longest edge of a tet.
    pub fn tet_diameter(&self, t: usize) -> f64 {
        let p = self.tet_points(t);
        TET_EDGES
            .iter()
            .map(|&(a, b)| (p[a] - p[b]).norm())
            .fold(0.0, f64::max)
    }

    /// Mean edge length, used as the nominal mesh size.
    pub fn mesh_size(&self) -> f64 {
        let total: f64 = self
            .edges
            .iter()
            .map(|e| (self.nodes[e[0]] - self.nodes[e[1]]).norm())
            .sum();
        total / self.edges.len().max(1) as f64
    }

    pub fn material(&self, t: usize) -> Material {
        self.materials
            .get(&self.region[t])
            .copied()
            .unwrap_or_default()
    }

    /// Node set touched by each component.
    pub fn component_nodes(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_components];
        let mut seen = vec![usize::MAX; self.nodes.len()];
        for (t, tet) in self.tets.iter().enumerate() {
            let c = self.component[t];
            for &n in tet {
                if seen[n] != c {
                    seen[n] = c;
                    out[c].push(n);
                }
            }
        }
        for v in &mut out {
            v.sort_unstable();
            v.dedup();
        }
        out
    }

    /// Gradient of barycentric coordinates of tet `t`.
    pub fn barycentric_gradients(&self, t: usize) -> [Point; 4] {
        let p = self.tet_points(t);
        let vol6 = (p[1] - p[0]).dot(&(p[2] - p[0]).cross(&(p[3] - p[0])));
        let mut g = [Point::zeros(); 4];
        for (k, face) in TET_FACES.iter().enumerate() {
            let [a, b, c] = *face;
            let n = (p[b] - p[a]).cross(&(p[c] - p[a]));
            // Orient towards vertex k.
            let s = if n.dot(&(p[k] - p[a])) > 0.0 { 1.0 } else { -1.0 };
            g[k] = s * n / vol6.abs();
        }
        g
    }
}

pub(crate) fn sorted2(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

pub(crate) fn signed_volume(nodes: &[Point], t: &[usize; 4]) -> f64 {
    let a = nodes[t[0]];
    (nodes[t[1]] - a).dot(&(nodes[t[2]] - a).cross(&(nodes[t[3]] - a))) / 6.0
}

fn connected_components(n_nodes: usize, tets: &[[usize; 4]]) -> (Vec<usize>, usize) {
    let mut parent: Vec<usize> = (0..n_nodes).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for t in tets {
        let r0 = find(&mut parent, t[0]);
        for &n in &t[1..] {
            let r = find(&mut parent, n);
            if r != r0 {
                parent[r] = r0;
            }
        }
    }
    let mut label: HashMap<usize, usize> = HashMap::new();
    let mut comp = Vec::with_capacity(tets.len());
    for t in tets {
        let r = find(&mut parent, t[0]);
        let next = label.len();
        comp.push(*label.entry(r).or_insert(next));
    }
    let n = label.len();
    (comp, n)
}
