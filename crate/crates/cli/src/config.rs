//! Experiment configuration: structured text (TOML) with a model section
//! and per-command numeric parameters.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use crlab::geometry::{GraphManifold, ModelSpec};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize, Default)]
pub struct ExperimentConfig {
    /// optional command echo; must match the subcommand when present
    pub command: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub params: Params,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ModelSection {
    /// "quadric" | "hyperplane" | "file"
    pub kind: String,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub sigma: Option<Vec<f64>>,
    pub half: Option<f64>,
    pub nodes: Option<usize>,
    pub path: Option<PathBuf>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            kind: "quadric".into(),
            n: Some(3),
            m: Some(1),
            sigma: Some(vec![1.0, -1.0]),
            half: Some(0.4),
            nodes: Some(3),
            path: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct Params {
    pub q: usize,
    pub theta_count: usize,
    pub samples: usize,
    pub outer_radius: f64,
    pub shell_max: f64,
    pub c_min: f64,
    pub eps_ladder: Vec<f64>,
    pub excl_radius: f64,
    pub radial_segments: usize,
    pub sphere_nodes: usize,
    pub simplex_per_axis: usize,
    pub kohn_weight: f64,
    pub kappa_sq: f64,
    pub rungs: usize,
    pub base_amplitude: f64,
    pub k: usize,
    pub s: usize,
    pub c_const: f64,
    pub p_degree: f64,
    pub t0: f64,
    pub eps: Option<f64>,
    pub max_iterations: usize,
    pub target_delta: f64,
    pub delta0: f64,
    pub grid: usize,
    pub coupling: f64,
    pub horizon: usize,
    pub cutoffs: Vec<f64>,
    pub mock_sets: usize,
    pub trials: usize,
    pub tolerance: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            q: 1,
            theta_count: 2,
            samples: 2000,
            outer_radius: 0.2,
            shell_max: 0.05,
            c_min: 1e-3,
            eps_ladder: vec![0.02, 0.01, 0.005, 0.0025],
            excl_radius: 1e-4,
            radial_segments: 22,
            sphere_nodes: 220,
            simplex_per_axis: 3,
            kohn_weight: 1.0,
            kappa_sq: 2.0,
            rungs: 4,
            base_amplitude: 0.02,
            k: 17,
            s: 13,
            c_const: 10.0,
            p_degree: 1.0,
            t0: 2.0,
            eps: None,
            max_iterations: 20,
            target_delta: 1e-8,
            delta0: 1e-3,
            grid: 64,
            coupling: 0.25,
            horizon: 200,
            cutoffs: vec![2.0, 4.0, 8.0],
            mock_sets: 3,
            trials: 50,
            tolerance: 1e-12,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&PathBuf>) -> Result<Self> {
        match path {
            None => Ok(ExperimentConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config {}", p.display()))?;
                let cfg: ExperimentConfig =
                    toml::from_str(&text).with_context(|| format!("cannot parse {}", p.display()))?;
                Ok(cfg)
            }
        }
    }

    /// Build the manifold, validating genericity.
    pub fn build_model(&self) -> Result<GraphManifold> {
        let m = &self.model;
        let man = match m.kind.as_str() {
            "quadric" => {
                let n = m.n.unwrap_or(3);
                let sigma = m.sigma.clone().unwrap_or_else(|| vec![1.0, -1.0]);
                if sigma.len() != n - 1 {
                    bail!("sigma must list n-1 signs");
                }
                GraphManifold::signature_quadric(n, &sigma, m.half.unwrap_or(0.4), m.nodes.unwrap_or(3))
            }
            "hyperplane" => GraphManifold::hyperplane(
                m.n.unwrap_or(2),
                m.m.unwrap_or(1),
                m.half.unwrap_or(0.4),
                m.nodes.unwrap_or(3),
            ),
            "file" => {
                let path = m.path.as_ref().context("model.kind = \"file\" requires model.path")?;
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read model {}", path.display()))?;
                let spec: ModelSpec = toml::from_str(&text)
                    .with_context(|| format!("cannot parse model {}", path.display()))?;
                GraphManifold::from_spec(&spec).context("invalid model definition")?
            }
            other => bail!("unknown model kind {other:?}"),
        };
        man.check_genericity(1e-8).context("model fails the genericity check on its grid")?;
        Ok(man)
    }
}
