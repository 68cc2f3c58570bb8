//! Divergence-free current sheets along closed surface cycles.

use std::collections::HashMap;

use crate::bem::assemble_topological_gradient;
use crate::error::{Error, Result};
use crate::fem::pcg;
use crate::mesh::SurfaceMesh;
use crate::sparse::norm;

/// RT field with unit flux across every closed curve that crosses its cycle once.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentSheet {
    /// Cycle as surface vertex ids; the closing edge runs from the last back to the first.
    pub cycle: Vec<usize>,
    /// RT coefficients; integers in {−1, 0, 1}.
    pub eta: Vec<f64>,
    pub jump: f64,
}

/// Builds the sheet of a closed cycle given by volume node ids.
///
/// The sheet is the surface gradient of the function that is 1 on the left bank of the
/// cut along the cycle and 0 elsewhere, restricted to edges leaving the cycle to the left.
pub fn build_current_sheet(surf: &SurfaceMesh, cycle_nodes: &[usize]) -> Result<CurrentSheet> {
    let mut nodes = cycle_nodes.to_vec();
    if nodes.len() > 1 && nodes.first() == nodes.last() {
        nodes.pop();
    }
    if nodes.len() < 3 {
        return Err(Error::InvalidCycle("a cycle needs at least three vertices".into()));
    }
    let cycle: Vec<usize> = nodes
        .iter()
        .map(|&n| {
            surf.vertex_of_node(n)
                .ok_or_else(|| Error::InvalidCycle(format!("node {n} is not on the surface")))
        })
        .collect::<Result<_>>()?;
    let mut seen = HashMap::new();
    for (k, &v) in cycle.iter().enumerate() {
        if seen.insert(v, k).is_some() {
            return Err(Error::InvalidCycle(format!("vertex of node {} repeats", nodes[k])));
        }
    }
    let comp = surf.vertex_component(cycle[0]);
    if cycle.iter().any(|&v| surf.vertex_component(v) != comp) {
        return Err(Error::InvalidCycle("cycle spans several surface components".into()));
    }
    let m = cycle.len();
    for k in 0..m {
        let (a, b) = (cycle[k], cycle[(k + 1) % m]);
        if surf.edge_index(a, b).is_none() {
            let what = if k + 1 == m { "open path: no closing edge" } else { "consecutive vertices are not joined by an edge" };
            return Err(Error::InvalidCycle(format!(
                "{what} ({}, {})",
                surf.vertex_nodes[a], surf.vertex_nodes[b]
            )));
        }
    }

    // Counter-clockwise successor of each neighbour around each cycle vertex.
    let mut fan: HashMap<(usize, usize), usize> = HashMap::new();
    for t in &surf.triangles {
        for k in 0..3 {
            if seen.contains_key(&t[k]) {
                fan.insert((t[k], t[(k + 1) % 3]), t[(k + 2) % 3]);
            }
        }
    }
    let g = assemble_topological_gradient(surf);
    let mut eta = vec![0.0; surf.n_edges()];
    for k in 0..m {
        let v = cycle[k];
        let next = cycle[(k + 1) % m];
        let prev = cycle[(k + m - 1) % m];
        let mut cur = next;
        let mut steps = 0;
        loop {
            cur = *fan
                .get(&(v, cur))
                .ok_or_else(|| Error::InvalidCycle("surface is not a closed manifold around the cycle".into()))?;
            if cur == prev {
                break;
            }
            steps += 1;
            if steps > surf.n_vertices() {
                return Err(Error::InvalidCycle("neighbour fan does not close".into()));
            }
            if !seen.contains_key(&cur) {
                let e = surf.edge_index(v, cur).expect("fan neighbours share an edge");
                eta[e] = g.get(e, v);
            }
        }
    }
    let sheet = CurrentSheet { cycle, eta, jump: 1.0 };
    if homology_residual(surf, &sheet.eta) < 1e-8 {
        return Err(Error::TrivialHomology);
    }
    Ok(sheet)
}

/// Relative residual of the least-squares fit `G c ≈ η`; near zero when `η` is a surface curl.
pub fn homology_residual(surf: &SurfaceMesh, eta: &[f64]) -> f64 {
    let g = assemble_topological_gradient(surf);
    let lap = g.gram(None);
    let c = pcg(&lap, &g.tr_matvec(eta), 1e-14, 20 * surf.n_vertices() + 100);
    let gc = g.matvec(&c);
    let r: Vec<f64> = eta.iter().zip(&gc).map(|(a, b)| a - b).collect();
    norm(&r) / norm(eta).max(f64::MIN_POSITIVE)
}

/// Flux of an RT field across a closed edge path of surface vertices: `Σ ± η_ℓ`, with `+`
/// when the path runs from the lower to the higher vertex of edge `ℓ`.
pub fn dual_circulation(surf: &SurfaceMesh, eta: &[f64], path: &[usize]) -> Result<f64> {
    let m = path.len();
    let mut total = 0.0;
    for k in 0..m {
        let (a, b) = (path[k], path[(k + 1) % m]);
        if a == b {
            continue;
        }
        let e = surf
            .edge_index(a, b)
            .ok_or_else(|| Error::InvalidCycle(format!("no edge between vertices {a} and {b}")))?;
        total += if a < b { eta[e] } else { -eta[e] };
    }
    Ok(total)
}
