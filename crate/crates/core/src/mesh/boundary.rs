use std::collections::HashMap;

use super::{sorted2, Point, TetMesh, TET_FACES};
use crate::error::{Error, Result};

/// Oriented boundary triangulation of a [`TetMesh`].
///
/// Surface vertices, edges and triangles are numbered component by component.
/// Triangles are counter-clockwise when seen from outside. Local edge `k` of a
/// triangle is opposite local vertex `k` and runs from vertex `k+1` to `k+2`.
/// Edges are stored as `(low, high)` in surface vertex numbering, which agrees
/// with the volume orientation because the renumbering is monotone per component.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    /// Coordinates per surface vertex.
    pub points: Vec<Point>,
    /// Volume node index of each surface vertex.
    pub vertex_nodes: Vec<usize>,
    /// Triangles as surface vertex indices.
    pub triangles: Vec<[usize; 3]>,
    pub normals: Vec<Point>,
    pub areas: Vec<f64>,
    /// Volume tet adjacent to each triangle.
    pub triangle_tets: Vec<usize>,
    pub edges: Vec<[usize; 2]>,
    pub triangle_edges: Vec<[usize; 3]>,
    pub triangle_edge_signs: Vec<[f64; 3]>,
    /// Adjacent triangles of each edge as `(triangle, local edge)`.
    pub edge_triangles: Vec<[(usize, usize); 2]>,
    pub n_components: usize,
    pub triangle_component: Vec<usize>,
    pub vertex_offsets: Vec<usize>,
    pub edge_offsets: Vec<usize>,
    pub triangle_offsets: Vec<usize>,
    /// V − E + F per component.
    pub euler: Vec<i64>,
}

impl SurfaceMesh {
    /// Collects faces with one adjacent tet and orients them outward.
    pub fn extract(mesh: &TetMesh) -> Result<Self> {
        let mut faces: HashMap<[usize; 3], (usize, usize, usize)> = HashMap::new();
        for (t, tet) in mesh.tets.iter().enumerate() {
            for (k, f) in TET_FACES.iter().enumerate() {
                let mut key = [tet[f[0]], tet[f[1]], tet[f[2]]];
                key.sort_unstable();
                let e = faces.entry(key).or_insert((0, t, k));
                e.0 += 1;
                if e.0 > 2 {
                    return Err(Error::NonManifold {
                        nodes: key,
                        count: e.0,
                    });
                }
            }
        }

        let mut bfaces: Vec<(usize, [usize; 3], usize)> = faces
            .into_values()
            .filter(|v| v.0 == 1)
            .map(|(_, t, k)| {
                let tet = mesh.tets[t];
                let f = TET_FACES[k];
                let mut tri = [tet[f[0]], tet[f[1]], tet[f[2]]];
                let p = |i: usize| mesh.nodes[i];
                let n = (p(tri[1]) - p(tri[0])).cross(&(p(tri[2]) - p(tri[0])));
                if n.dot(&(mesh.tet_centroid(t) - p(tri[0]))) > 0.0 {
                    tri.swap(1, 2);
                }
                (mesh.component[t], tri, t)
            })
            .collect();
        bfaces.sort_unstable_by_key(|&(c, tri, _)| {
            let mut s = tri;
            s.sort_unstable();
            (c, s)
        });
        let n_components = mesh.n_components;

        // Surface vertices ordered by (component, node).
        let mut vkeys: Vec<(usize, usize)> = bfaces
            .iter()
            .flat_map(|&(c, tri, _)| tri.into_iter().map(move |n| (c, n)))
            .collect();
        vkeys.sort_unstable();
        vkeys.dedup();
        let vertex_of: HashMap<usize, usize> =
            vkeys.iter().enumerate().map(|(i, &(_, n))| (n, i)).collect();
        let vertex_nodes: Vec<usize> = vkeys.iter().map(|&(_, n)| n).collect();
        let points: Vec<Point> = vertex_nodes.iter().map(|&n| mesh.nodes[n]).collect();

        let triangles: Vec<[usize; 3]> = bfaces
            .iter()
            .map(|&(_, tri, _)| tri.map(|n| vertex_of[&n]))
            .collect();
        let triangle_tets: Vec<usize> = bfaces.iter().map(|&(_, _, t)| t).collect();
        let triangle_component: Vec<usize> = bfaces.iter().map(|&(c, _, _)| c).collect();

        let mut normals = Vec::with_capacity(triangles.len());
        let mut areas = Vec::with_capacity(triangles.len());
        for (i, tri) in triangles.iter().enumerate() {
            let n = (points[tri[1]] - points[tri[0]]).cross(&(points[tri[2]] - points[tri[0]]));
            let a = 0.5 * n.norm();
            let scale = (points[tri[1]] - points[tri[0]]).norm_squared();
            if a <= 1e-14 * scale || !a.is_finite() {
                return Err(Error::DegenerateTriangle(i));
            }
            normals.push(n / (2.0 * a));
            areas.push(a);
        }

        let mut edges: Vec<[usize; 2]> = triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| sorted2(t[(k + 1) % 3], t[(k + 2) % 3])))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        let edge_of: HashMap<[usize; 2], usize> =
            edges.iter().enumerate().map(|(i, e)| (*e, i)).collect();

        let mut triangle_edges = Vec::with_capacity(triangles.len());
        let mut triangle_edge_signs = Vec::with_capacity(triangles.len());
        let mut adj: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); edges.len()];
        for (i, t) in triangles.iter().enumerate() {
            let mut ids = [0; 3];
            let mut signs = [0.0; 3];
            for k in 0..3 {
                let (a, b) = (t[(k + 1) % 3], t[(k + 2) % 3]);
                ids[k] = edge_of[&sorted2(a, b)];
                signs[k] = if a < b { 1.0 } else { -1.0 };
                adj[ids[k]].push((i, k, signs[k]));
            }
            triangle_edges.push(ids);
            triangle_edge_signs.push(signs);
        }
        let mut edge_triangles = Vec::with_capacity(edges.len());
        for (e, a) in adj.iter().enumerate() {
            if a.len() != 2 || a[0].2 == a[1].2 {
                let [u, v] = edges[e];
                return Err(Error::NonManifoldEdge {
                    nodes: [vertex_nodes[u], vertex_nodes[v]],
                    count: a.len(),
                });
            }
            edge_triangles.push([(a[0].0, a[0].1), (a[1].0, a[1].1)]);
        }

        let offsets = |keys: &mut dyn Iterator<Item = usize>| {
            let mut off = vec![0usize; n_components + 1];
            for c in keys {
                off[c + 1] += 1;
            }
            for c in 0..n_components {
                off[c + 1] += off[c];
            }
            off
        };
        let vertex_offsets = offsets(&mut vkeys.iter().map(|&(c, _)| c));
        let triangle_offsets = offsets(&mut triangle_component.iter().copied());
        let edge_offsets = offsets(&mut adj.iter().map(|a| triangle_component[a[0].0]));

        let euler = (0..n_components)
            .map(|c| {
                (vertex_offsets[c + 1] - vertex_offsets[c]) as i64
                    - (edge_offsets[c + 1] - edge_offsets[c]) as i64
                    + (triangle_offsets[c + 1] - triangle_offsets[c]) as i64
            })
            .collect();

        Ok(Self {
            points,
            vertex_nodes,
            triangles,
            normals,
            areas,
            triangle_tets,
            edges,
            triangle_edges,
            triangle_edge_signs,
            edge_triangles,
            n_components,
            triangle_component,
            vertex_offsets,
            edge_offsets,
            triangle_offsets,
            euler,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.points.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.points[a], self.points[b], self.points[c]]
    }

    pub fn centroid(&self, t: usize) -> Point {
        let p = self.triangle_points(t);
        (p[0] + p[1] + p[2]) / 3.0
    }

    /// Longest edge of triangle `t`.
    pub fn diameter(&self, t: usize) -> f64 {
        let p = self.triangle_points(t);
        (p[0] - p[1])
            .norm()
            .max((p[1] - p[2]).norm())
            .max((p[2] - p[0]).norm())
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Component owning a surface edge.
    pub fn edge_component(&self, e: usize) -> usize {
        self.triangle_component[self.edge_triangles[e][0].0]
    }

    pub fn vertex_component(&self, v: usize) -> usize {
        self.vertex_offsets.partition_point(|&o| o <= v) - 1
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.edges.binary_search(&sorted2(a, b)).ok()
    }

    /// Surface vertex of a volume node, if it lies on the boundary.
    pub fn vertex_of_node(&self, node: usize) -> Option<usize> {
        // Vertices are sorted by node within each component.
        (0..self.n_components).find_map(|c| {
            let r = self.vertex_offsets[c]..self.vertex_offsets[c + 1];
            self.vertex_nodes[r.clone()]
                .binary_search(&node)
                .ok()
                .map(|i| r.start + i)
        })
    }

    /// Surface gradients of the three barycentric coordinates of triangle `t`.
    pub fn barycentric_gradients(&self, t: usize) -> [Point; 3] {
        let p = self.triangle_points(t);
        let n = self.normals[t];
        let s = 1.0 / (2.0 * self.areas[t]);
        [
            n.cross(&(p[2] - p[1])) * s,
            n.cross(&(p[0] - p[2])) * s,
            n.cross(&(p[1] - p[0])) * s,
        ]
    }

    /// Applies a rigid motion to the vertices of one component.
    pub fn transform_component(
        &mut self,
        component: usize,
        rotation: &nalgebra::Matrix3<f64>,
        translation: &Point,
    ) {
        for v in self.vertex_offsets[component]..self.vertex_offsets[component + 1] {
            self.points[v] = rotation * self.points[v] + translation;
        }
        for t in self.triangle_offsets[component]..self.triangle_offsets[component + 1] {
            self.normals[t] = rotation * self.normals[t];
        }
    }
}
