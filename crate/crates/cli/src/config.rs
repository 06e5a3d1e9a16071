//! Run configuration: a TOML file with named sections. Coefficient and data
//! fields are numbers or expression strings in `x` and `t` (see
//! `carlab::expr` for the grammar).

use std::fmt;
use std::path::Path;

use carlab::carleman::QuadratureKind;
use carlab::expr::Expr;
use carlab::forward::{BoundaryData, ForwardProblem, SolverSettings};
use carlab::grid::{Grid1D, Side, SpaceTimeField, TimeGrid};
use carlab::inverse::{self, Perturbation};
use carlab::model::{CouplingMatrix, PotentialSet, SourcePair};
use carlab::weights::{self, Observation, Quadratic, WeightFunction};
use serde::Deserialize;
use sha2::{Digest, Sha256};

/// A configuration problem, anchored to a line of the file when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {}", self.path, l, self.message),
            None => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

#[derive(Deserialize, Debug, Clone, PartialEq)]
#[serde(untagged)]
pub enum Field {
    Number(f64),
    Text(String),
}

impl Field {
    fn zero() -> Self {
        Field::Number(0.0)
    }
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub length: f64,
    pub nx: usize,
    pub horizon: f64,
    pub nt: usize,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub a11: Field,
    pub a12: Field,
    pub a21: Field,
    pub a22: Field,
    #[serde(default = "Field::zero")]
    pub a: Field,
    #[serde(default = "Field::zero")]
    pub b: Field,
    #[serde(default = "Field::zero")]
    pub c: Field,
    #[serde(default = "Field::zero")]
    pub d: Field,
    pub y10: Field,
    pub y20: Field,
    pub r: Option<f64>,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    #[serde(default = "Field::zero")]
    pub left_y1: Field,
    #[serde(default = "Field::zero")]
    pub left_y2: Field,
    #[serde(default = "Field::zero")]
    pub right_y1: Field,
    #[serde(default = "Field::zero")]
    pub right_y2: Field,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    #[serde(default = "Field::zero")]
    pub f1: Field,
    #[serde(default = "Field::zero")]
    pub f2: Field,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// Growth factor for the instability guard; `0` disables it.
    pub growth_limit: Option<f64>,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct WeightSection {
    pub mode: String,
    pub omega: Option<[f64; 2]>,
    pub side: Option<String>,
    pub delta: Option<f64>,
    pub k: Option<f64>,
    /// Coefficients `[c0, c1, c2]` of `ψ = c0 + c1 x + c2 x²`, replacing the
    /// built-in construction.
    pub psi: Option<[f64; 3]>,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub s: Vec<f64>,
    pub lambda: Vec<f64>,
    pub quadrature: Option<String>,
    pub fields: Option<Vec<String>>,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub label: String,
    pub delta: Field,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct InverseSection {
    pub omega: Option<[f64; 2]>,
    pub side: Option<String>,
    pub perturbation: Option<Vec<PerturbationSpec>>,
    pub truth: Option<Field>,
    pub init: Option<Field>,
    pub observation: Option<String>,
    #[serde(default)]
    pub alpha: f64,
    pub noise: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub max_iterations: Option<usize>,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub geometry: Geometry,
    pub model: Option<ModelSection>,
    pub boundary: Option<BoundarySection>,
    pub sources: Option<SourceSection>,
    pub solver: Option<SolverSection>,
    pub weight: Option<WeightSection>,
    pub sweep: Option<SweepSection>,
    pub inverse: Option<InverseSection>,
    pub output: Option<OutputSection>,
}

/// Parsed configuration together with its source text for diagnostics.
pub struct RunConfig {
    pub raw: RawConfig,
    pub path: String,
    text: String,
    pub sha256: String,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let name = path.display().to_string();
        let bytes = std::fs::read(path).map_err(|e| ConfigError { path: name.clone(), line: None, message: e.to_string() })?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|e| ConfigError { path: name.clone(), line: None, message: format!("not UTF-8: {e}") })?;
        Self::parse(&name, &text)
    }

    pub fn parse(path: &str, text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            ConfigError { path: path.into(), line, message: e.message().trim().to_string() }
        })?;
        let sha256 = hex::encode(Sha256::digest(text.as_bytes()));
        Ok(Self { raw, path: path.into(), text: text.into(), sha256 })
    }

    /// Error anchored at `key` inside `[section]`, or at the section header.
    pub fn error(&self, section: &str, key: Option<&str>, message: impl Into<String>) -> ConfigError {
        ConfigError { path: self.path.clone(), line: self.locate(section, key), message: message.into() }
    }

    fn locate(&self, section: &str, key: Option<&str>) -> Option<usize> {
        let mut current = String::new();
        let mut header = None;
        for (i, line) in self.text.lines().enumerate() {
            let l = line.trim();
            if l.starts_with('[') {
                current = l.trim_matches(|c| c == '[' || c == ']').trim().to_string();
                if current == section && header.is_none() {
                    header = Some(i + 1);
                }
                continue;
            }
            if current == section {
                if let Some(k) = key {
                    if let Some(rest) = l.strip_prefix(k) {
                        if rest.trim_start().starts_with('=') {
                            return Some(i + 1);
                        }
                    }
                }
            }
        }
        header
    }

    fn section<'a, T>(&self, value: &'a Option<T>, name: &str) -> Result<&'a T, ConfigError> {
        value.as_ref().ok_or_else(|| ConfigError { path: self.path.clone(), line: None, message: format!("missing section [{name}]") })
    }

    pub fn grids(&self) -> Result<(Grid1D, TimeGrid), ConfigError> {
        let g = &self.raw.geometry;
        let grid = Grid1D::new(g.length, g.nx).map_err(|e| self.error("geometry", Some("nx"), e.to_string()))?;
        let time = TimeGrid::new(g.horizon, g.nt).map_err(|e| self.error("geometry", Some("nt"), e.to_string()))?;
        Ok((grid, time))
    }

    fn expr(&self, section: &str, key: &str, field: &Field) -> Result<Expr, ConfigError> {
        match field {
            Field::Number(v) => Ok(Expr::constant(*v)),
            Field::Text(s) => Expr::parse(s).map_err(|e| self.error(section, Some(key), format!("`{key}`: {e}"))),
        }
    }

    /// Real field of `x` only.
    fn real_fn(&self, section: &str, key: &str, field: &Field, grid: &Grid1D) -> Result<Expr, ConfigError> {
        let e = self.expr(section, key, field)?;
        if e.depends_on_t() {
            return Err(self.error(section, Some(key), format!("`{key}` must not depend on t")));
        }
        for x in grid.coordinates() {
            if e.eval_real(x, 0.0).is_none_or(|v| !v.is_finite()) {
                return Err(self.error(section, Some(key), format!("`{key}` is not real and finite at x = {x}")));
            }
        }
        Ok(e)
    }

    pub fn problem(&self) -> Result<ForwardProblem, ConfigError> {
        let (grid, time) = self.grids()?;
        let m = self.section(&self.raw.model, "model")?;
        let s = "model";
        let aij = [
            self.real_fn(s, "a11", &m.a11, &grid)?,
            self.real_fn(s, "a12", &m.a12, &grid)?,
            self.real_fn(s, "a21", &m.a21, &grid)?,
            self.real_fn(s, "a22", &m.a22, &grid)?,
        ];
        let re = |e: &Expr, x: f64| e.eval(x, 0.0).re;
        let at = |x: f64| [[re(&aij[0], x), re(&aij[1], x)], [re(&aij[2], x), re(&aij[3], x)]];
        let coupling = if aij.iter().any(Expr::depends_on_x) {
            CouplingMatrix::from_fn(grid, at)
        } else {
            CouplingMatrix::constant(grid, at(0.0))
        };
        let pots = [
            self.real_fn(s, "a", &m.a, &grid)?,
            self.real_fn(s, "b", &m.b, &grid)?,
            self.real_fn(s, "c", &m.c, &grid)?,
            self.real_fn(s, "d", &m.d, &grid)?,
        ];
        let y10 = self.expr(s, "y10", &m.y10)?;
        let y20 = self.expr(s, "y20", &m.y20)?;
        let mut potentials = PotentialSet::new(
            grid,
            |x| [re(&pots[0], x), re(&pots[1], x), re(&pots[2], x), re(&pots[3], x)],
            |x| y10.eval(x, 0.0),
            |x| y20.eval(x, 0.0),
        );
        if let Some(r) = m.r {
            potentials = potentials.with_lower_bound(r);
        }
        let mut p = ForwardProblem::new(coupling, potentials, time).map_err(|e| self.error("model", None, e.to_string()))?;
        if let Some(b) = &self.raw.boundary {
            let s = "boundary";
            let e = [
                self.expr(s, "left_y1", &b.left_y1)?,
                self.expr(s, "left_y2", &b.left_y2)?,
                self.expr(s, "right_y1", &b.right_y1)?,
                self.expr(s, "right_y2", &b.right_y2)?,
            ];
            let l = grid.length();
            let data = BoundaryData::from_fn(&time, |side, t| match side {
                Side::Left => [e[0].eval(0.0, t), e[1].eval(0.0, t)],
                Side::Right => [e[2].eval(l, t), e[3].eval(l, t)],
            });
            p = p.with_boundary(data).map_err(|e| self.error("boundary", None, e.to_string()))?;
        }
        if let Some(src) = &self.raw.sources {
            let f1 = self.expr("sources", "f1", &src.f1)?;
            let f2 = self.expr("sources", "f2", &src.f2)?;
            let pair = SourcePair::new(
                SpaceTimeField::from_fn(grid, time, |x, t| f1.eval(x, t)),
                SpaceTimeField::from_fn(grid, time, |x, t| f2.eval(x, t)),
            )
            .map_err(|e| self.error("sources", None, e.to_string()))?;
            p = p.with_sources(pair).map_err(|e| self.error("sources", None, e.to_string()))?;
        }
        if let Some(solver) = &self.raw.solver {
            let limit = match solver.growth_limit {
                Some(v) if v == 0.0 => None,
                Some(v) if v > 0.0 => Some(v),
                Some(_) => return Err(self.error("solver", Some("growth_limit"), "growth_limit must be nonnegative")),
                None => SolverSettings::default().growth_limit,
            };
            p = p.with_settings(SolverSettings { growth_limit: limit, ..SolverSettings::default() });
        }
        Ok(p)
    }

    fn side(&self, section: &str, value: Option<&String>) -> Result<Side, ConfigError> {
        let v = value.ok_or_else(|| self.error(section, None, "missing `side`"))?;
        v.parse().map_err(|_| self.error(section, Some("side"), format!("unknown side `{v}` (expected left or right)")))
    }

    fn omega(&self, section: &str, value: Option<[f64; 2]>) -> Result<(f64, f64), ConfigError> {
        let [lo, hi] = value.ok_or_else(|| self.error(section, None, "missing `omega`"))?;
        Ok((lo, hi))
    }

    pub fn weight(&self) -> Result<WeightFunction, ConfigError> {
        let (grid, _) = self.grids()?;
        let w = self.section(&self.raw.weight, "weight")?;
        let s = "weight";
        let built = match w.mode.as_str() {
            "internal" => {
                let (lo, hi) = self.omega(s, w.omega)?;
                match w.psi {
                    Some([c0, c1, c2]) => Observation::internal(&grid, lo, hi)
                        .map(|obs| WeightFunction::new(grid, Quadratic::new(c0, c1, c2), obs)),
                    None => weights::build_internal_psi(grid, lo, hi, w.k),
                }
            }
            "boundary" => {
                let side = self.side(s, w.side.as_ref())?;
                match w.psi {
                    Some([c0, c1, c2]) => Ok(WeightFunction::new(grid, Quadratic::new(c0, c1, c2), Observation::Boundary(side))),
                    None => weights::build_boundary_psi(grid, side, w.delta.unwrap_or(0.5), w.k),
                }
            }
            other => return Err(self.error(s, Some("mode"), format!("unknown mode `{other}` (expected internal or boundary)"))),
        };
        built.map_err(|e| self.error(s, None, e.to_string()))
    }

    pub fn sweep(&self) -> Result<(Vec<f64>, Vec<f64>, QuadratureKind, Vec<String>), ConfigError> {
        let sw = self.section(&self.raw.sweep, "sweep")?;
        if sw.s.is_empty() {
            return Err(self.error("sweep", Some("s"), "sweep list `s` is empty"));
        }
        if sw.lambda.is_empty() {
            return Err(self.error("sweep", Some("lambda"), "sweep list `lambda` is empty"));
        }
        for (key, list) in [("s", &sw.s), ("lambda", &sw.lambda)] {
            if list.iter().any(|v| !(*v >= 1.0) || !v.is_finite()) {
                return Err(self.error("sweep", Some(key), format!("`{key}` values must be finite and >= 1")));
            }
        }
        let kind = match &sw.quadrature {
            Some(q) => q.parse().map_err(|_| self.error("sweep", Some("quadrature"), format!("unknown quadrature `{q}`")))?,
            None => QuadratureKind::Resolved,
        };
        let fields = sw.fields.clone().unwrap_or_else(|| ["slow", "fast", "mix", "manufactured"].map(String::from).to_vec());
        if fields.is_empty() {
            return Err(self.error("sweep", Some("fields"), "field list is empty"));
        }
        Ok((sw.s.clone(), sw.lambda.clone(), kind, fields))
    }

    pub fn inverse(&self) -> Result<&InverseSection, ConfigError> {
        self.section(&self.raw.inverse, "inverse")
    }

    pub fn inverse_omega(&self) -> Result<(f64, f64), ConfigError> {
        self.omega("inverse", self.inverse()?.omega)
    }

    pub fn inverse_side(&self) -> Result<Side, ConfigError> {
        self.side("inverse", self.inverse()?.side.as_ref())
    }

    pub fn family(&self) -> Result<Vec<Perturbation>, ConfigError> {
        let (grid, _) = self.grids()?;
        match &self.inverse()?.perturbation {
            None => Ok(inverse::default_family(&grid)),
            Some(list) if list.is_empty() => Err(self.error("inverse", None, "perturbation list is empty")),
            Some(list) => list
                .iter()
                .map(|p| {
                    let e = self.expr("inverse.perturbation", "delta", &p.delta)?;
                    for x in grid.coordinates() {
                        if e.eval_real(x, 0.0).is_none() || e.depends_on_t() {
                            return Err(self.error("inverse.perturbation", Some("delta"), format!("perturbation `{}` must be a real field of x", p.label)));
                        }
                    }
                    Ok(Perturbation::from_fn(p.label.clone(), &grid, |x| e.eval(x, 0.0).re))
                })
                .collect(),
        }
    }

    /// Nodal values of a real field in `[inverse]`.
    pub fn inverse_field(&self, key: &str, field: &Field) -> Result<Vec<f64>, ConfigError> {
        let (grid, _) = self.grids()?;
        let e = self.real_fn("inverse", key, field, &grid)?;
        Ok(grid.coordinates().into_iter().map(|x| e.eval(x, 0.0).re).collect())
    }

    /// Noise levels and the seed, which is mandatory once any level is nonzero.
    pub fn noise(&self, seed_override: Option<u64>) -> Result<(Vec<f64>, u64), ConfigError> {
        let inv = self.inverse()?;
        let levels = inv.noise.clone().unwrap_or_else(|| vec![0.0]);
        if levels.is_empty() {
            return Err(self.error("inverse", Some("noise"), "noise list is empty"));
        }
        if levels.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(self.error("inverse", Some("noise"), "noise levels must be finite and nonnegative"));
        }
        let seed = seed_override.or(inv.seed);
        match seed {
            Some(s) => Ok((levels, s)),
            None if levels.iter().all(|v| *v == 0.0) => Ok((levels, 0)),
            None => Err(self.error("inverse", Some("noise"), "a seed is mandatory when noise > 0")),
        }
    }

    pub fn output_dir(&self) -> Option<String> {
        self.raw.output.as_ref().and_then(|o| o.dir.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[geometry]\nlength = 1.0\nnx = 7\nhorizon = 1.0\nnt = 8\n";

    #[test]
    fn syntax_errors_are_line_anchored() {
        let text = format!("{MINIMAL}[model]\na11 = 2\na12 = = 1\n");
        let err = RunConfig::parse("c.toml", &text).err().unwrap();
        assert_eq!(err.line, Some(8));
        assert!(err.to_string().starts_with("c.toml:8:"));
    }

    #[test]
    fn semantic_errors_point_at_the_key() {
        let text = format!("{MINIMAL}[sweep]\ns = []\nlambda = [2.0]\n");
        let cfg = RunConfig::parse("c.toml", &text).unwrap();
        let err = cfg.sweep().err().unwrap();
        assert_eq!(err.line, Some(7));
        let text = format!("{MINIMAL}[model]\na11 = 2\na12 = 1\na21 = 1\na22 = 2\ny10 = \"1 +\"\ny20 = 0\n");
        let err = RunConfig::parse("c.toml", &text).unwrap().problem().err().unwrap();
        assert_eq!(err.line, Some(11));
    }

    #[test]
    fn noise_requires_seed() {
        let text = format!("{MINIMAL}[inverse]\nnoise = [0.0, 0.01]\n");
        let cfg = RunConfig::parse("c.toml", &text).unwrap();
        assert!(cfg.noise(None).is_err());
        assert_eq!(cfg.noise(Some(3)).unwrap().1, 3);
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::parse("c", MINIMAL).unwrap();
        let b = RunConfig::parse("c", &format!("{MINIMAL}# note\n")).unwrap();
        assert_ne!(a.sha256, b.sha256);
        assert_eq!(a.sha256.len(), 64);
    }
}
