//! TOML case configuration.
//!
//! Relative mesh paths resolve against the directory of the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coupling::{RigidMotion, SystemOptions};
use crate::error::{Error, Result};
use crate::fem::LoopCoil;
use crate::mesh::{generate, load_msh, Material, Point, TetMesh};
use crate::solver::SolverConfig;

/// Structured fixture generated in place of a mesh file; every tet gets region tag 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    Ball {
        n: usize,
        radius: f64,
        #[serde(default)]
        center: [f64; 3],
    },
    SquareTorus {
        major: f64,
        half: f64,
        n_cross: usize,
        n_around: usize,
    },
    KuhnCube {
        n: usize,
        #[serde(default)]
        origin: [f64; 3],
        size: f64,
    },
}

impl Generator {
    pub fn build(&self) -> Result<TetMesh> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("generator {what} must be positive, got {v}")))
            }
        };
        let cells = |n: usize| {
            if n == 0 {
                Err(Error::Config("generator needs at least one cell per side".into()))
            } else {
                Ok(())
            }
        };
        Ok(match *self {
            Generator::Ball { n, radius, center } => {
                cells(n)?;
                positive(radius, "radius")?;
                generate::ball(n, radius, Point::from(center))
            }
            Generator::SquareTorus {
                major,
                half,
                n_cross,
                n_around,
            } => {
                cells(n_cross)?;
                positive(half, "half")?;
                if major <= half || n_around < 3 {
                    return Err(Error::Config("square torus needs major > half and n_around >= 3".into()));
                }
                generate::square_torus(major, half, n_cross, n_around)
            }
            Generator::KuhnCube { n, origin, size } => {
                cells(n)?;
                positive(size, "size")?;
                generate::kuhn_cube(n, Point::from(origin), size)
            }
        })
    }
}

/// One mesh level: a Gmsh file or a generator, with the current-sheet cycles on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<Generator>,
    /// Closed node paths on the boundary, one per current sheet.
    #[serde(default)]
    pub cycles: Vec<Vec<usize>>,
}

/// Material and source data of one region tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub mu_r: f64,
    /// A/m.
    #[serde(default)]
    pub magnetization: [f64; 3],
    /// Constant current density in A/m².
    #[serde(default)]
    pub current_density: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Periodicity {
    pub sectors: usize,
    pub axis: [f64; 3],
}

/// Rigid step: rotation by `angle_deg` about `axis` through the origin, then translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionStep {
    pub component: usize,
    #[serde(default = "z_axis")]
    pub axis: [f64; 3],
    #[serde(default)]
    pub angle_deg: f64,
    #[serde(default)]
    pub translation: [f64; 3],
}

fn z_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

impl MotionStep {
    pub fn to_motion(&self) -> Result<RigidMotion> {
        let axis = Point::from(self.axis);
        if !(axis.norm() > 0.0) || !self.angle_deg.is_finite() {
            return Err(Error::InvalidMotion(format!("bad rotation in step {self:?}")));
        }
        let rot = generate::rotation_axis(&axis, self.angle_deg.to_radians());
        RigidMotion::new(self.component, rot, Point::from(self.translation))
    }
}

/// Circular Ampère loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopConfig {
    pub center: [f64; 3],
    pub axis: [f64; 3],
    pub radius: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    128
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub vtk: bool,
    pub csv: bool,
    /// Wall times in the CSV `seconds` column; off keeps the CSV byte-reproducible.
    pub timings: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            vtk: true,
            csv: true,
            timings: false,
        }
    }
}

/// Closed-form field used for the `l2_error` column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Analytic {
    MagnetizedBall { radius: f64, magnetization: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuSweep {
    pub region: i64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic: Option<Analytic>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_sweep: Option<MuSweep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    #[serde(default = "default_name")]
    pub name: String,
    /// `run` uses the first level; `study` uses all of them, coarse to fine.
    pub meshes: Vec<MeshConfig>,
    /// Keyed by the region tag written as a string.
    #[serde(default)]
    pub regions: BTreeMap<String, RegionConfig>,
    #[serde(default)]
    pub coils: Vec<LoopCoil>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periodicity: Option<Periodicity>,
    #[serde(default)]
    pub motion: Vec<MotionStep>,
    /// Exterior points where `B` is reported.
    #[serde(default)]
    pub probes: Vec<[f64; 3]>,
    #[serde(default)]
    pub loops: Vec<LoopConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub system: SystemOptions,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub study: StudyConfig,
    /// Directory that relative paths resolve against; set by [`CaseConfig::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_name() -> String {
    "case".into()
}

impl CaseConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: CaseConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Checks that do not need the mesh.
    pub fn validate(&self) -> Result<()> {
        if self.meshes.is_empty() {
            return Err(Error::Config("no mesh given".into()));
        }
        for (k, m) in self.meshes.iter().enumerate() {
            if m.path.is_some() == m.generate.is_some() {
                return Err(Error::Config(format!("mesh {k}: give exactly one of `path` and `generate`")));
            }
        }
        for (tag, r) in &self.regions {
            let t = parse_tag(tag)?;
            if !(r.mu_r > 0.0 && r.mu_r.is_finite()) {
                return Err(Error::InvalidMaterial {
                    tag: t,
                    msg: format!("mu_r must be positive, got {}", r.mu_r),
                });
            }
            if !r.magnetization.iter().chain(&r.current_density).all(|v| v.is_finite()) {
                return Err(Error::InvalidMaterial {
                    tag: t,
                    msg: "non-finite magnetization or current".into(),
                });
            }
        }
        for c in &self.coils {
            c.validate()?;
        }
        if let Some(p) = &self.periodicity {
            if p.sectors < 1 || !(Point::from(p.axis).norm() > 0.0) {
                return Err(Error::Config("periodicity needs sectors >= 1 and a nonzero axis".into()));
            }
        }
        for s in &self.motion {
            s.to_motion()?;
        }
        for l in &self.loops {
            if !(l.radius > 0.0) || !(Point::from(l.axis).norm() > 0.0) {
                return Err(Error::Config("loop needs a positive radius and a nonzero axis".into()));
            }
            if l.samples < crate::post::MIN_LOOP_SAMPLES {
                return Err(Error::Config(format!(
                    "loop has {} samples; at least {} are required",
                    l.samples,
                    crate::post::MIN_LOOP_SAMPLES
                )));
            }
        }
        if let Some(s) = &self.study.mu_sweep {
            if s.values.is_empty() || s.values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::Config("mu_sweep needs positive values".into()));
            }
        }
        self.solver.validate()
    }

    /// Material table keyed by integer tag.
    pub fn materials(&self) -> Result<BTreeMap<i64, Material>> {
        self.regions
            .iter()
            .map(|(tag, r)| {
                Ok((
                    parse_tag(tag)?,
                    Material {
                        mu_r: r.mu_r,
                        magnetization: r.magnetization,
                    },
                ))
            })
            .collect()
    }

    /// Loads or generates level `k` and attaches materials and per-region currents.
    pub fn build_mesh(&self, k: usize) -> Result<TetMesh> {
        let m = self
            .meshes
            .get(k)
            .ok_or_else(|| Error::Config(format!("mesh level {k} does not exist")))?;
        let mesh = match (&m.path, &m.generate) {
            (Some(p), None) => load_msh(self.base_dir.join(p))?,
            (None, Some(g)) => g.build()?,
            _ => return Err(Error::Config(format!("mesh {k}: give exactly one of `path` and `generate`"))),
        };
        let materials = self.materials()?;
        let mut mesh = mesh.with_materials(materials)?;
        let currents: BTreeMap<i64, Point> = self
            .regions
            .iter()
            .map(|(t, r)| Ok((parse_tag(t)?, Point::from(r.current_density))))
            .collect::<Result<_>>()?;
        if currents.values().any(|j| *j != Point::zeros()) {
            mesh.current_density = Some(mesh.region.iter().map(|r| currents[r]).collect());
        }
        Ok(mesh)
    }

    /// Sum of the analytic coil densities.
    pub fn coil_density(&self, x: &Point) -> Point {
        self.coils.iter().fold(Point::zeros(), |acc, c| acc + c.density(x))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.base_dir.join(&self.output.directory)
    }
}

fn parse_tag(tag: &str) -> Result<i64> {
    tag.trim()
        .parse()
        .map_err(|_| Error::Config(format!("region key `{tag}` is not an integer tag")))
}
