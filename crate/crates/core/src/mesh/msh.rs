//! Gmsh MSH 2.2 ASCII subset: `$MeshFormat`, `$Nodes`, `$Elements`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{Point, TetMesh};
use crate::error::{Error, Result};

const TET: i64 = 4;
/// Lower-dimensional entities that gmsh writes alongside the volume: points, lines, triangles.
const IGNORED: [i64; 3] = [15, 1, 2];

pub fn load_msh(path: impl AsRef<Path>) -> Result<TetMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_msh(&text, path)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    path: PathBuf,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn next(&mut self) -> Result<&'a str> {
        loop {
            match self.inner.next() {
                Some((i, l)) => {
                    self.line = i + 1;
                    let l = l.trim();
                    if !l.is_empty() {
                        return Ok(l);
                    }
                }
                None => return Err(self.err("unexpected end of file")),
            }
        }
    }

    fn expect(&mut self, tag: &str) -> Result<()> {
        let l = self.next()?;
        if l == tag {
            Ok(())
        } else {
            Err(self.err(format!("expected {tag}, found {l:?}")))
        }
    }

    fn count(&mut self) -> Result<usize> {
        let l = self.next()?;
        l.parse().map_err(|_| self.err(format!("invalid count {l:?}")))
    }

    fn fields<T: std::str::FromStr>(&self, l: &str) -> Result<Vec<T>> {
        l.split_whitespace()
            .map(|t| t.parse().map_err(|_| self.err(format!("invalid field {t:?}"))))
            .collect()
    }
}

/// Parses MSH 2.2 text; `path` only labels error messages.
pub fn parse_msh(text: &str, path: impl AsRef<Path>) -> Result<TetMesh> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        path: path.as_ref().to_path_buf(),
        line: 0,
    };
    let mut node_ids: HashMap<i64, usize> = HashMap::new();
    let mut nodes: Vec<Point> = Vec::new();
    let mut tets: Vec<[usize; 4]> = Vec::new();
    let mut region: Vec<i64> = Vec::new();
    let mut seen_format = false;
    let mut seen_nodes = false;
    let mut seen_elements = false;

    while let Some((i, raw)) = lines.inner.next() {
        lines.line = i + 1;
        let l = raw.trim();
        match l {
            "" => continue,
            "$MeshFormat" => {
                let f = lines.next()?;
                let version = f.split_whitespace().next().unwrap_or("");
                let file_type = f.split_whitespace().nth(1).unwrap_or("");
                if !version.starts_with("2.") {
                    return Err(lines.err(format!("unsupported MSH version {version}")));
                }
                if file_type != "0" {
                    return Err(lines.err("binary MSH files are not supported"));
                }
                lines.expect("$EndMeshFormat")?;
                seen_format = true;
            }
            "$Nodes" => {
                let n = lines.count()?;
                nodes.reserve(n);
                for _ in 0..n {
                    let l = lines.next()?;
                    let mut it = l.split_whitespace();
                    let id: i64 = it
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| lines.err("invalid node id"))?;
                    let xyz: Vec<f64> = lines.fields(&it.collect::<Vec<_>>().join(" "))?;
                    if xyz.len() != 3 {
                        return Err(lines.err("node needs three coordinates"));
                    }
                    if node_ids.insert(id, nodes.len()).is_some() {
                        return Err(lines.err(format!("duplicate node id {id}")));
                    }
                    nodes.push(Point::new(xyz[0], xyz[1], xyz[2]));
                }
                lines.expect("$EndNodes")?;
                seen_nodes = true;
            }
            "$Elements" => {
                let n = lines.count()?;
                for _ in 0..n {
                    let l = lines.next()?;
                    let f: Vec<i64> = lines.fields(l)?;
                    if f.len() < 3 {
                        return Err(lines.err("truncated element record"));
                    }
                    let (ty, ntags) = (f[1], f[2] as usize);
                    if IGNORED.contains(&ty) {
                        continue;
                    }
                    if ty != TET {
                        return Err(Error::UnsupportedElement(ty));
                    }
                    if f.len() != 3 + ntags + 4 {
                        return Err(lines.err("tetrahedron record has wrong length"));
                    }
                    let tag = if ntags > 0 { f[3] } else { 0 };
                    let mut t = [0usize; 4];
                    for (k, id) in f[3 + ntags..].iter().enumerate() {
                        t[k] = *node_ids
                            .get(id)
                            .ok_or_else(|| lines.err(format!("unknown node id {id}")))?;
                    }
                    tets.push(t);
                    region.push(tag);
                }
                lines.expect("$EndElements")?;
                seen_elements = true;
            }
            s if s.starts_with('$') && !s.starts_with("$End") => {
                let end = format!("$End{}", &s[1..]);
                loop {
                    if lines.next()? == end {
                        break;
                    }
                }
            }
            other => return Err(lines.err(format!("unexpected line {other:?}"))),
        }
    }
    if !(seen_format && seen_nodes && seen_elements) {
        return Err(lines.err("missing $MeshFormat, $Nodes or $Elements section"));
    }
    if tets.is_empty() {
        return Err(lines.err("no tetrahedra"));
    }
    TetMesh::new(nodes, tets, region)
}

/// Serializes a mesh as MSH 2.2 ASCII with 1-based ids; coordinates round-trip exactly.
pub fn write_msh(mesh: &TetMesh, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_msh_string(mesh))?;
    Ok(())
}

pub(crate) fn to_msh_string(mesh: &TetMesh) -> String {
    let mut s = String::new();
    s.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n");
    let _ = writeln!(s, "{}", mesh.nodes.len());
    for (i, p) in mesh.nodes.iter().enumerate() {
        let _ = writeln!(s, "{} {:?} {:?} {:?}", i + 1, p.x, p.y, p.z);
    }
    let _ = writeln!(s, "$EndNodes\n$Elements\n{}", mesh.tets.len());
    for (i, t) in mesh.tets.iter().enumerate() {
        let r = mesh.region[i];
        let _ = writeln!(
            s,
            "{} 4 2 {} {} {} {} {} {}",
            i + 1,
            r,
            r,
            t[0] + 1,
            t[1] + 1,
            t[2] + 1,
            t[3] + 1
        );
    }
    s.push_str("$EndElements\n");
    s
}
