//! Writes the Gmsh files referenced by the configs in `cases/`.

use std::path::Path;

use fembem::mesh::{generate, write_msh, Point, TetMesh};

fn retag(mesh: TetMesh, split: usize, tags: (i64, i64)) -> TetMesh {
    let region = (0..mesh.n_tets()).map(|t| if t < split { tags.0 } else { tags.1 }).collect();
    TetMesh::new(mesh.nodes, mesh.tets, region).expect("valid mesh")
}

fn main() -> fembem::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "cases".into());
    let dir = Path::new(&dir);
    std::fs::create_dir_all(dir)?;
    for (k, n) in [4, 8, 16].into_iter().enumerate() {
        write_msh(&generate::ball(n, 1.0, Point::zeros()), dir.join(format!("sphere_L{}.msh", k + 1)))?;
    }
    for (k, (nc, na, nb)) in [(1, 16, 2), (2, 24, 4), (4, 48, 8)].into_iter().enumerate() {
        let torus = generate::square_torus(1.0, 0.25, nc, na);
        let nt = torus.n_tets();
        let mesh = generate::merge(&[torus, generate::ball(nb, 0.5, Point::zeros())]);
        write_msh(&retag(mesh, nt, (1, 2)), dir.join(format!("torus_core_L{}.msh", k + 1)))?;
        let cycle: Vec<String> = generate::square_torus_cycle(nc, na).iter().map(|v| v.to_string()).collect();
        println!("torus_core_L{} cycle [{}]", k + 1, cycle.join(", "));
    }
    let a = generate::ball(4, 0.5, Point::new(0.0, 0.0, -0.6));
    let na = a.n_tets();
    let b = generate::ball(4, 0.5, Point::new(0.0, 0.0, 0.6));
    write_msh(&retag(generate::merge(&[a, b]), na, (1, 2)), dir.join("two_spheres.msh"))?;
    Ok(())
}
