//! Flat key/value run configuration with dotted keys, one per line,
//! `#` comments.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use extremal_core::continuation::ContinuationSettings;
use extremal_core::{
    make_grid, AdvectionField, Grading, Grid, Nonlinearity, NonlinearityKind, ProblemSpec,
    RadialFn, RiemannianModel, SpaceForm,
};

#[derive(Debug, Clone)]
pub struct RunConfig {
    keys: BTreeMap<String, String>,
    base_dir: PathBuf,
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut keys = BTreeMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(k) => &raw[..k],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected `key = value`", ln + 1))?;
            keys.insert(k.trim().to_string(), v.trim().to_string());
        }
        let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let seed = keys
            .get("seed")
            .map(|v| v.parse::<u64>())
            .transpose()
            .context("seed must be a nonnegative integer")?
            .unwrap_or(0);
        Ok(RunConfig { keys, base_dir, seed })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.keys.get(key).map(|s| s.as_str())
    }

    /// Raw string value of a key, if present.
    pub fn raw(&self, key: &str) -> Option<&str> {
        self.get(key)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            Some(v) => v
                .parse::<f64>()
                .with_context(|| format!("config key {key}: bad number `{v}`")),
            None => Ok(default),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            Some(v) => v
                .parse::<usize>()
                .with_context(|| format!("config key {key}: bad integer `{v}`")),
            None => Ok(default),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            Some(v) => match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                other => bail!("config key {key}: bad boolean `{other}`"),
            },
            None => Ok(default),
        }
    }

    fn radial_fn(&self, key: &str) -> Result<RadialFn> {
        match self.get(key) {
            None => Ok(RadialFn::Zero),
            Some(v) if v.ends_with(".csv") => {
                let path = self.base_dir.join(v);
                let data = std::fs::read_to_string(&path).with_context(|| {
                    format!("config key {key}: cannot read table {}", path.display())
                })?;
                RadialFn::from_csv_str(&data)
                    .map_err(|e| anyhow!("config key {key}: {e}"))
            }
            Some(v) => RadialFn::parse(v).map_err(|e| anyhow!("config key {key}: {e}")),
        }
    }

    pub fn problem(&self) -> Result<Arc<ProblemSpec>> {
        let kind = match self.get("model.kind").unwrap_or("euclidean") {
            "euclidean" => SpaceForm::Euclidean,
            "hyperbolic" => SpaceForm::Hyperbolic,
            "spherical" => SpaceForm::Spherical,
            "custom" => SpaceForm::Custom,
            other => bail!("model.kind: unknown space form `{other}`"),
        };
        let dimension = self.usize_or("model.dimension", 2)? as u32;
        let radius = self.f64_or("model.radius", 1.0)?;
        let model = if kind == SpaceForm::Custom {
            let psi = self
                .get("model.psi")
                .ok_or_else(|| anyhow!("model.kind = custom needs model.psi"))?;
            RiemannianModel::custom(dimension, radius, RadialFn::parse(psi)?)?
        } else {
            RiemannianModel::new(kind, dimension, radius)?
        };
        let nonlinearity = match self.get("nonlinearity.kind").unwrap_or("gelfand") {
            "gelfand" => Nonlinearity::gelfand(),
            "mems" => Nonlinearity::mems(),
            "power" => Nonlinearity::power(self.f64_or("nonlinearity.m", 2.0)?)?,
            other => bail!("nonlinearity.kind: unknown `{other}`"),
        };
        let advection = AdvectionField::new(
            self.radial_fn("advection.a")?,
            self.radial_fn("advection.C")?,
        );
        Ok(Arc::new(ProblemSpec::new(model, nonlinearity, advection)?))
    }

    pub fn grading(&self, spec: &ProblemSpec) -> Result<Grading> {
        match self.get("grid.grading") {
            Some("uniform") => Ok(Grading::Uniform),
            Some("boundary-refined") => Ok(Grading::BoundaryRefined),
            Some(other) => bail!("grid.grading: unknown `{other}`"),
            // default: refined grading for the singular nonlinearity
            None => Ok(if spec.nonlinearity.kind == NonlinearityKind::Mems {
                Grading::BoundaryRefined
            } else {
                Grading::Uniform
            }),
        }
    }

    pub fn grid(&self, spec: &ProblemSpec) -> Result<Arc<Grid>> {
        let m = self.usize_or("grid.points", 1024)?;
        Ok(Arc::new(make_grid(spec.radius(), m, self.grading(spec)?)?))
    }

    pub fn settings(&self, spec: &ProblemSpec) -> Result<ContinuationSettings> {
        let mut s = ContinuationSettings::for_spec(spec);
        s.ds = self.f64_or("continuation.ds", s.ds)?;
        s.max_steps = self.usize_or("continuation.max_steps", s.max_steps)?;
        s.u0_ceiling = self.f64_or("continuation.u0_ceiling", s.u0_ceiling)?;
        s.tol = self.f64_or("tol.residual", s.tol)?;
        s.tol_eig_rel = self.f64_or("tol.eig", s.tol_eig_rel)?;
        Ok(s)
    }

    pub fn dims(&self) -> Result<Vec<u32>> {
        match self.get("sweep.dimensions") {
            Some(v) => parse_dims(v),
            None => Ok(Vec::new()),
        }
    }
}

/// Parse `2..9` or `2,3,4` style dimension lists.
pub fn parse_dims(text: &str) -> Result<Vec<u32>> {
    let text = text.trim();
    if let Some((a, b)) = text.split_once("..") {
        let lo: u32 = a.trim().parse().context("bad sweep range start")?;
        let hi: u32 = b.trim().trim_start_matches('=').parse().context("bad sweep range end")?;
        if hi < lo {
            bail!("empty sweep range `{text}`");
        }
        return Ok((lo..=hi).collect());
    }
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        out.push(part.parse::<u32>().with_context(|| format!("bad dimension `{part}`"))?);
    }
    Ok(out)
}
