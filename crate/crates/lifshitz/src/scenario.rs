//! Scenario files: strict JSON configuration for the command-line front end.
//!
//! The schema rejects unknown keys and reports the offending path. Physical
//! quantities have no defaults — every length and frequency must be written
//! out; only numerical controls (quadrature, grids) may be omitted.
//!
//! All lengths are in units of `c / omega_ref`, all frequencies in units of
//! `omega_ref`, as declared in the `units` section.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::exact_planar::PlanarScenario;
use crate::layered::LayeredScenario;
use crate::materials::{DielectricModel, Tabulated};
use crate::quadrature::QuadratureSpec;
use crate::rough::{HeightMap, RoughScenario};

/// Top-level scenario document.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub units: UnitsSection,
    pub materials: Vec<MaterialSpec>,
    pub geometry: GeometrySection,
    #[serde(default)]
    pub quadrature: QuadratureSection,
    #[serde(default)]
    pub run: RunSection,
    /// Directory against which relative table/heightmap paths resolve;
    /// set by [`ScenarioFile::load`].
    #[serde(skip)]
    base_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitsSection {
    /// Reference angular frequency in rad/s; lengths are `c / omega_ref`.
    /// The library works in dimensionless internal units throughout, so
    /// this only scales reported output when a caller converts.
    pub omega_ref: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    pub name: String,
    pub kind: MaterialKind,
    #[serde(default)]
    pub omega_p: Option<f64>,
    #[serde(default)]
    pub omega_0: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub table_path: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialKind {
    Vacuum,
    DrudeLorentz,
    Constant,
    Tabulated,
    PerfectConductor,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    #[serde(rename = "type")]
    pub kind: GeometryKind,
    pub material_1: String,
    pub material_2: String,
    /// Separation in units of `c / omega_ref`.
    #[serde(rename = "H", default)]
    pub h: Option<f64>,
    /// Multiple separations for table-producing commands.
    #[serde(rename = "H_values", default)]
    pub h_values: Option<Vec<f64>>,
    /// Layered-engine body truncation depth (numerical control).
    #[serde(rename = "body_depth_L", default)]
    pub body_depth_l: Option<f64>,
    /// Layered-engine grid spacing (numerical control).
    #[serde(default)]
    pub dz: Option<f64>,
    /// Layered-engine adaptive spacing divisor (numerical control).
    #[serde(default)]
    pub dz_factor: Option<f64>,
    /// Layered-engine cap on grid nodes per body (numerical control).
    #[serde(default)]
    pub node_cap: Option<usize>,
    /// Height-map CSV for body 1 (rough geometry).
    #[serde(default)]
    pub heightmap_1: Option<String>,
    /// Height-map CSV for body 2 (rough geometry).
    #[serde(default)]
    pub heightmap_2: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    Planar,
    Layered,
    Rough,
}

/// Optional overrides of the numerical-control defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    #[serde(default)]
    pub rel_tol: Option<f64>,
    #[serde(default)]
    pub abs_tol: Option<f64>,
    #[serde(default)]
    pub max_panels: Option<usize>,
    #[serde(default)]
    pub panel_order: Option<usize>,
}

/// Command-specific parameters; all numerical controls with defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Truncation orders for `series`/`figure2` (default `[2, 4, 6]`).
    #[serde(default)]
    pub orders: Option<Vec<u32>>,
    /// Logarithmic `H / lambda_p` grid for `figure2`.
    #[serde(default)]
    pub h_over_lambda_p_min: Option<f64>,
    #[serde(default)]
    pub h_over_lambda_p_max: Option<f64>,
    #[serde(default)]
    pub n_points: Option<usize>,
}

impl ScenarioFile {
    /// Parse a scenario document, rejecting unknown keys with the offending
    /// path (for example `geometry.separation`).
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Scenario(format!("at {path}: {}", e.inner()))
        })?;
        file.validate()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut file = Self::from_json_str(&text)?;
        file.base_dir = path.parent().map(Path::to_path_buf);
        Ok(file)
    }

    fn validate(&self) -> Result<()> {
        if !(self.units.omega_ref > 0.0) {
            return Err(Error::Scenario("units.omega_ref must be > 0".into()));
        }
        let mut names = BTreeSet::new();
        for m in &self.materials {
            if !names.insert(m.name.as_str()) {
                return Err(Error::Scenario(format!(
                    "duplicate material name \"{}\"",
                    m.name
                )));
            }
            m.validate()?;
        }
        self.geometry.validate()?;
        for name in [&self.geometry.material_1, &self.geometry.material_2] {
            if !names.contains(name.as_str()) {
                return Err(Error::Scenario(format!(
                    "geometry references undeclared material \"{name}\""
                )));
            }
        }
        if let Some(rt) = self.quadrature.rel_tol {
            if !(rt > 0.0) {
                return Err(Error::Scenario("quadrature.rel_tol must be > 0".into()));
            }
        }
        if let Some(at) = self.quadrature.abs_tol {
            if !(at > 0.0) {
                return Err(Error::Scenario("quadrature.abs_tol must be > 0".into()));
            }
        }
        if let Some(orders) = &self.run.orders {
            if orders.iter().any(|&n| !(2..=8).contains(&n)) {
                return Err(Error::Scenario(
                    "run.orders entries must lie in [2, 8]".into(),
                ));
            }
        }
        Ok(())
    }

    fn resolve_path(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            return p.to_path_buf();
        }
        match &self.base_dir {
            Some(dir) => dir.join(p),
            None => p.to_path_buf(),
        }
    }

    /// Build the dielectric model for a declared material, reading table
    /// CSVs relative to the scenario file.
    pub fn material(&self, name: &str) -> Result<DielectricModel> {
        let spec = self
            .materials
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| Error::Scenario(format!("no material named \"{name}\"")))?;
        match spec.kind {
            MaterialKind::Vacuum => Ok(DielectricModel::Vacuum),
            MaterialKind::PerfectConductor => Ok(DielectricModel::PerfectConductor),
            MaterialKind::Constant => Ok(DielectricModel::Constant {
                epsilon: spec.epsilon.unwrap(),
            }),
            MaterialKind::DrudeLorentz => DielectricModel::drude_lorentz(
                spec.omega_p.unwrap(),
                spec.omega_0.unwrap(),
                spec.gamma.unwrap(),
            ),
            MaterialKind::Tabulated => {
                let path = self.resolve_path(spec.table_path.as_ref().unwrap());
                let text = fs::read_to_string(&path)?;
                let samples = parse_material_table(&text)?;
                Ok(DielectricModel::Tabulated(Tabulated::new(&samples)?))
            }
        }
    }

    /// Quadrature controls with scenario overrides applied.
    pub fn quadrature_spec(&self) -> QuadratureSpec {
        let mut spec = QuadratureSpec::default();
        if let Some(v) = self.quadrature.rel_tol {
            spec.rel_tol = v;
        }
        if let Some(v) = self.quadrature.abs_tol {
            spec.abs_tol = v;
        }
        if let Some(v) = self.quadrature.max_panels {
            spec.max_panels = v;
        }
        if let Some(v) = self.quadrature.panel_order {
            spec.panel_order = v;
        }
        spec
    }

    /// All requested separations: `H_values` if present, else the single `H`.
    pub fn separations(&self) -> Result<Vec<f64>> {
        if let Some(hs) = &self.geometry.h_values {
            return Ok(hs.clone());
        }
        match self.geometry.h {
            Some(h) => Ok(vec![h]),
            None => Err(Error::Scenario(
                "geometry requires H or H_values".into(),
            )),
        }
    }

    pub fn planar_scenario(&self, h: f64) -> Result<PlanarScenario> {
        if self.geometry.kind == GeometryKind::Rough {
            return Err(Error::Scenario(
                "this command requires planar or layered geometry".into(),
            ));
        }
        PlanarScenario::new(
            self.material(&self.geometry.material_1)?,
            self.material(&self.geometry.material_2)?,
            h,
        )
    }

    pub fn layered_scenario(&self, h: f64) -> Result<LayeredScenario> {
        if self.geometry.kind == GeometryKind::Rough {
            return Err(Error::Scenario(
                "this command requires planar or layered geometry".into(),
            ));
        }
        let mut s = LayeredScenario::two_half_spaces(
            self.material(&self.geometry.material_1)?,
            self.material(&self.geometry.material_2)?,
            h,
        )?;
        s.grid_spacing_dz = self.geometry.dz;
        s.body_depth_l = self.geometry.body_depth_l;
        if let Some(f) = self.geometry.dz_factor {
            s.dz_factor = f;
        }
        if let Some(cap) = self.geometry.node_cap {
            s.node_cap_per_body = cap;
        }
        Ok(s)
    }

    pub fn rough_scenario(&self) -> Result<RoughScenario> {
        if self.geometry.kind != GeometryKind::Rough {
            return Err(Error::Scenario("this command requires rough geometry".into()));
        }
        let h = self.geometry.h.ok_or_else(|| {
            Error::Scenario("rough geometry requires a single H".into())
        })?;
        let path_1 = self.geometry.heightmap_1.as_ref().ok_or_else(|| {
            Error::Scenario("rough geometry requires geometry.heightmap_1".into())
        })?;
        let path_2 = self.geometry.heightmap_2.as_ref().ok_or_else(|| {
            Error::Scenario("rough geometry requires geometry.heightmap_2".into())
        })?;
        let h1 = HeightMap::read_csv(&self.resolve_path(path_1), 1)?;
        let h2 = HeightMap::read_csv(&self.resolve_path(path_2), 2)?;
        RoughScenario::new(
            self.material(&self.geometry.material_1)?,
            self.material(&self.geometry.material_2)?,
            h1,
            h2,
            h,
        )
    }
}

impl MaterialSpec {
    fn validate(&self) -> Result<()> {
        let forbid = |field: Option<()>, what: &str| -> Result<()> {
            if field.is_some() {
                return Err(Error::Scenario(format!(
                    "material \"{}\": {what} is not a parameter of kind {:?}",
                    self.name, self.kind
                )));
            }
            Ok(())
        };
        let require = |present: bool, what: &str| -> Result<()> {
            if !present {
                return Err(Error::Scenario(format!(
                    "material \"{}\": kind {:?} requires {what}",
                    self.name, self.kind
                )));
            }
            Ok(())
        };
        let op = self.omega_p.map(|_| ());
        let o0 = self.omega_0.map(|_| ());
        let ga = self.gamma.map(|_| ());
        let ep = self.epsilon.map(|_| ());
        let tp = self.table_path.as_ref().map(|_| ());
        match self.kind {
            MaterialKind::Vacuum | MaterialKind::PerfectConductor => {
                forbid(op, "omega_p")?;
                forbid(o0, "omega_0")?;
                forbid(ga, "gamma")?;
                forbid(ep, "epsilon")?;
                forbid(tp, "table_path")?;
            }
            MaterialKind::DrudeLorentz => {
                require(op.is_some(), "omega_p")?;
                require(o0.is_some(), "omega_0")?;
                require(ga.is_some(), "gamma")?;
                forbid(ep, "epsilon")?;
                forbid(tp, "table_path")?;
            }
            MaterialKind::Constant => {
                require(ep.is_some(), "epsilon")?;
                if let Some(e) = self.epsilon {
                    if !(e >= 1.0) {
                        return Err(Error::Scenario(format!(
                            "material \"{}\": epsilon must be >= 1",
                            self.name
                        )));
                    }
                }
                forbid(op, "omega_p")?;
                forbid(o0, "omega_0")?;
                forbid(ga, "gamma")?;
                forbid(tp, "table_path")?;
            }
            MaterialKind::Tabulated => {
                require(tp.is_some(), "table_path")?;
                forbid(op, "omega_p")?;
                forbid(o0, "omega_0")?;
                forbid(ga, "gamma")?;
                forbid(ep, "epsilon")?;
            }
        }
        Ok(())
    }
}

impl GeometrySection {
    fn validate(&self) -> Result<()> {
        if self.h.is_none() && self.h_values.is_none() {
            return Err(Error::Scenario("geometry requires H or H_values".into()));
        }
        if let Some(h) = self.h {
            if !(h > 0.0) {
                return Err(Error::Scenario("geometry.H must be > 0".into()));
            }
        }
        if let Some(hs) = &self.h_values {
            if hs.is_empty() || hs.iter().any(|&h| !(h > 0.0)) {
                return Err(Error::Scenario(
                    "geometry.H_values must be non-empty and all > 0".into(),
                ));
            }
        }
        match self.kind {
            GeometryKind::Rough => {}
            _ => {
                if self.heightmap_1.is_some() || self.heightmap_2.is_some() {
                    return Err(Error::Scenario(
                        "heightmaps are only valid for rough geometry".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Parse a two-column material table: one `zeta,epsilon` pair per line,
/// `zeta` in units of `omega_ref`, `epsilon` dimensionless. Blank lines and
/// `#` comment lines are skipped.
pub fn parse_material_table(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut samples = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(',');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Scenario(format!(
                "material table line {}: expected two comma-separated columns",
                idx + 1
            )));
        };
        let zeta: f64 = a.trim().parse().map_err(|_| {
            Error::Scenario(format!("material table line {}: bad zeta value", idx + 1))
        })?;
        let eps: f64 = b.trim().parse().map_err(|_| {
            Error::Scenario(format!(
                "material table line {}: bad epsilon value",
                idx + 1
            ))
        })?;
        if !zeta.is_finite() || !eps.is_finite() {
            return Err(Error::Scenario(format!(
                "material table line {}: non-finite value",
                idx + 1
            )));
        }
        samples.push((zeta, eps));
    }
    if samples.len() < 2 {
        return Err(Error::Scenario(
            "material table needs at least two samples".into(),
        ));
    }
    Ok(samples)
}
