//! Scene files: a spacetime, a time function, a grid and optional queries.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::grid::{BoxRegion, CausalGrid, StencilSpec};
use crate::spacetime::{builtin, Spacetime};
use crate::time::{affine_time, coordinate_time, cubed_time, TimeFunction};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub params: Map<String, Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub h: f64,
    #[serde(default = "default_radius")]
    pub stencil_radius: u32,
}

fn default_radius() -> u32 {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallQuery {
    pub center: Vec<f64>,
    pub radius: f64,
    #[serde(default = "default_dirs")]
    pub n_dirs: usize,
}

fn default_dirs() -> usize {
    16
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SenseSpec {
    Future,
    Past,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartQuery {
    pub center: Vec<f64>,
    pub sense: SenseSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Queries {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<[Vec<f64>; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub balls: Vec<BallQuery>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub charts: Vec<ChartQuery>,
}

impl Queries {
    fn is_empty(&self) -> bool {
        self.pairs.is_empty() && self.balls.is_empty() && self.charts.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub json: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
}

impl Outputs {
    fn is_empty(&self) -> bool {
        self.json.is_none() && self.csv.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub schema: u32,
    pub spacetime: NamedSpec,
    pub dim: usize,
    #[serde(default = "default_time")]
    pub time: NamedSpec,
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Queries::is_empty")]
    pub queries: Queries,
    #[serde(default, skip_serializing_if = "Outputs::is_empty")]
    pub outputs: Outputs,
}

fn default_time() -> NamedSpec {
    NamedSpec {
        name: "coordinate".into(),
        params: Map::new(),
    }
}

impl Scene {
    /// Parses and validates. Syntax errors keep serde's line and column.
    pub fn parse(text: &str) -> std::result::Result<Scene, SceneError> {
        let scene: Scene = serde_json::from_str(text).map_err(SceneError::Syntax)?;
        scene.validate().map_err(SceneError::Invalid)?;
        Ok(scene)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::InvalidParam(format!(
                "unsupported schema {}, expected {SCHEMA_VERSION}",
                self.schema
            )));
        }
        let d = self.dim;
        for (what, len) in [
            ("grid.lo", self.grid.lo.len()),
            ("grid.hi", self.grid.hi.len()),
        ] {
            if len != d {
                return Err(Error::InvalidParam(format!(
                    "{what} has {len} entries, dim is {d}"
                )));
            }
        }
        if !(self.grid.h > 0.0) {
            return Err(Error::InvalidParam("grid.h must be positive".into()));
        }
        if self.grid.stencil_radius == 0 {
            return Err(Error::InvalidParam(
                "grid.stencil_radius must be at least 1".into(),
            ));
        }
        if self
            .grid
            .lo
            .iter()
            .zip(&self.grid.hi)
            .any(|(a, b)| !(a <= b))
        {
            return Err(Error::InvalidParam(
                "grid.lo must not exceed grid.hi".into(),
            ));
        }
        let points = self
            .queries
            .pairs
            .iter()
            .flat_map(|p| p.iter())
            .chain(self.queries.balls.iter().map(|b| &b.center))
            .chain(self.queries.charts.iter().map(|c| &c.center))
            .chain(self.queries.charts.iter().flat_map(|c| c.points.iter()));
        for p in points {
            if p.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.len(),
                });
            }
        }
        let st = self.spacetime()?;
        self.time_function(&st)?;
        Ok(())
    }

    pub fn spacetime(&self) -> Result<Spacetime> {
        builtin(&self.spacetime.name, self.dim, &self.spacetime.params)
    }

    pub fn time_function(&self, st: &Spacetime) -> Result<TimeFunction> {
        time_from_spec(&self.time, st)
    }

    pub fn region(&self) -> BoxRegion {
        BoxRegion::new(self.grid.lo.clone(), self.grid.hi.clone())
    }

    pub fn stencil(&self) -> StencilSpec {
        StencilSpec::with_radius(self.grid.stencil_radius)
    }

    /// Builds the grid, optionally overriding `h` and the stencil radius.
    pub fn build_grid(
        &self,
        h: Option<f64>,
        radius: Option<u32>,
    ) -> Result<(Spacetime, TimeFunction, CausalGrid)> {
        let st = self.spacetime()?;
        let tau = self.time_function(&st)?;
        let stencil = radius.map_or(self.stencil(), StencilSpec::with_radius);
        let grid = CausalGrid::build(&st, &tau, &self.region(), h.unwrap_or(self.grid.h), stencil)?;
        Ok((st, tau, grid))
    }
}

fn param(params: &Map<String, Value>, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_f64()
            .ok_or_else(|| Error::InvalidParam(format!("time parameter `{key}` must be a number"))),
    }
}

/// Time function by name: `coordinate`, `cubed`, or `affine` with `scale`, `offset`.
pub fn time_from_spec(spec: &NamedSpec, st: &Spacetime) -> Result<TimeFunction> {
    let allowed: &[&str] = match spec.name.as_str() {
        "coordinate" | "cubed" => &[],
        "affine" => &["scale", "offset"],
        other => return Err(Error::UnknownName(other.to_string())),
    };
    if let Some(k) = spec.params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::InvalidParam(format!("unknown time parameter `{k}`")));
    }
    Ok(match spec.name.as_str() {
        "coordinate" => coordinate_time(st),
        "cubed" => cubed_time(st),
        _ => affine_time(
            st,
            param(&spec.params, "scale", 1.0)?,
            param(&spec.params, "offset", 0.0)?,
        ),
    })
}

#[derive(Debug)]
pub enum SceneError {
    Syntax(serde_json::Error),
    Invalid(Error),
}

impl std::fmt::Display for SceneError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SceneError::Syntax(e) => write!(f, "line {}, column {}: {e}", e.line(), e.column()),
            SceneError::Invalid(e) => write!(f, "invalid scene: {e}"),
        }
    }
}

impl std::error::Error for SceneError {}
