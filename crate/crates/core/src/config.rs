//! TOML schemas for problem configs, policy files and noise sampler files.
//!
//! Matrices are nested row-major arrays. Time-varying data is a list with one matrix per
//! step; a single-element list is broadcast across the horizon.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibrium::EquilibriumOptions;
use crate::model::ControlProblem;
use crate::policy::{LinearPolicy, NoiseMoments};
use crate::sim_eval::{NoiseSampler, SamplerKind};
use crate::worst_case::{AmbiguitySpec, SolverOptions, WorstCaseSolution};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Invalid {
        path: PathBuf,
        source: crate::error::Error,
    },
}

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub horizon: usize,
    pub matrices: MatricesConfig,
    pub x0: Vec<f64>,
    pub reference: ReferenceConfig,
    pub radii: RadiiConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatricesConfig {
    #[serde(rename = "A")]
    pub a: Vec<Rows>,
    #[serde(rename = "B")]
    pub b: Vec<Rows>,
    #[serde(rename = "C")]
    pub c: Vec<Rows>,
    /// One entry (broadcast to all `T + 1` steps) or `T + 1` entries.
    #[serde(rename = "Q")]
    pub q: Vec<Rows>,
    #[serde(rename = "R")]
    pub r: Vec<Rows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub cov_v: Rows,
    pub cov_w: Rows,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiiConfig {
    pub rho_v: f64,
    pub rho_w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iter: usize,
    pub max_rounds: usize,
    pub bracket_expansion: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverOptions::default();
        SolverConfig {
            tolerance: s.tolerance,
            max_iter: s.max_iter,
            max_rounds: EquilibriumOptions::default().max_rounds,
            bracket_expansion: s.bracket_expansion,
        }
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string().trim_end().to_string(),
    })
}

fn matrix(rows: &Rows, what: &str) -> crate::Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(crate::Error::InvalidParameter(format!(
            "{what}: row {i} has {} entries, row 0 has {ncols}",
            row.len()
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Adding zero turns `-0.0` into `0.0` so files do not carry signed zeros.
fn rows_of(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|x| x + 0.0).collect())
        .collect()
}

fn flat(v: &DVector<f64>) -> Vec<f64> {
    v.iter().map(|x| x + 0.0).collect()
}

fn sequence(list: &[Rows], len: usize, what: &str) -> crate::Result<Vec<DMatrix<f64>>> {
    match list.len() {
        1 => Ok(vec![matrix(&list[0], what)?; len]),
        k if k == len => list
            .iter()
            .enumerate()
            .map(|(t, rows)| matrix(rows, &format!("{what}[{t}]")))
            .collect(),
        k => Err(crate::Error::InvalidParameter(format!(
            "{what} has {k} entries; expected 1 (broadcast) or {len}"
        ))),
    }
}

impl ProblemConfig {
    pub fn from_str(path: &Path, text: &str) -> Result<Self, ConfigError> {
        parse(path, text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_str(path, &read(path)?)
    }

    pub fn problem(&self) -> crate::Result<ControlProblem<f64>> {
        let t = self.horizon;
        let m = &self.matrices;
        ControlProblem::new(
            t,
            sequence(&m.a, t, "A")?,
            sequence(&m.b, t, "B")?,
            sequence(&m.c, t, "C")?,
            sequence(&m.q, t + 1, "Q")?,
            sequence(&m.r, t, "R")?,
            DVector::from_vec(self.x0.clone()),
        )
    }

    pub fn ambiguity(&self) -> crate::Result<AmbiguitySpec<f64>> {
        AmbiguitySpec::new(
            matrix(&self.reference.cov_v, "reference.cov_v")?,
            matrix(&self.reference.cov_w, "reference.cov_w")?,
            self.radii.rho_v,
            self.radii.rho_w,
        )
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tolerance: self.solver.tolerance,
            max_iter: self.solver.max_iter,
            bracket_expansion: self.solver.bracket_expansion,
        }
    }

    pub fn equilibrium_options(&self) -> EquilibriumOptions {
        EquilibriumOptions {
            solver: self.solver_options(),
            max_rounds: self.solver.max_rounds,
            seed: self.seed,
            ..Default::default()
        }
    }

    /// Parsed and validated problem plus ambiguity set; errors carry the file path.
    pub fn build(
        &self,
        path: &Path,
    ) -> Result<(ControlProblem<f64>, AmbiguitySpec<f64>), ConfigError> {
        let invalid = |source| ConfigError::Invalid {
            path: path.to_path_buf(),
            source,
        };
        let problem = self.problem().map_err(invalid)?;
        let amb = self.ambiguity().map_err(invalid)?;
        Ok((problem, amb))
    }
}

/// Policy file: `u = U eta + q` with `U` written in full, zero blocks included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyFile {
    pub horizon: usize,
    pub inputs: usize,
    pub outputs: usize,
    #[serde(rename = "U")]
    pub u: Rows,
    pub q: Vec<f64>,
}

impl PolicyFile {
    pub fn from_policy(policy: &LinearPolicy<f64>) -> Self {
        PolicyFile {
            horizon: policy.horizon(),
            inputs: policy.input_dim(),
            outputs: policy.output_dim(),
            u: rows_of(policy.gain()),
            q: flat(policy.offset()),
        }
    }

    pub fn policy(&self) -> crate::Result<LinearPolicy<f64>> {
        LinearPolicy::new(
            self.horizon,
            self.inputs,
            self.outputs,
            matrix(&self.u, "U")?,
            DVector::from_vec(self.q.clone()),
        )
    }

    pub fn load(path: &Path) -> Result<LinearPolicy<f64>, ConfigError> {
        let file: PolicyFile = parse(path, &read(path)?)?;
        file.policy().map_err(|source| ConfigError::Invalid {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("policy serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SamplerConfig {
    Gaussian {
        mean: Vec<f64>,
        cov: Rows,
    },
    Dirac {
        mean: Vec<f64>,
    },
    Bimodal {
        mean1: Vec<f64>,
        mean2: Vec<f64>,
        cov: Rows,
        #[serde(default = "half")]
        weight: f64,
    },
}

fn half() -> f64 {
    0.5
}

impl SamplerConfig {
    pub fn gaussian(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Self {
        SamplerConfig::Gaussian {
            mean: flat(mean),
            cov: rows_of(cov),
        }
    }

    pub fn from_sampler(sampler: &NoiseSampler<f64>) -> Self {
        match sampler.kind() {
            SamplerKind::Gaussian { mean, cov } => Self::gaussian(mean, cov),
            SamplerKind::Dirac { mean } => SamplerConfig::Dirac { mean: flat(mean) },
            SamplerKind::Bimodal {
                mean1,
                mean2,
                cov,
                weight,
            } => SamplerConfig::Bimodal {
                mean1: flat(mean1),
                mean2: flat(mean2),
                cov: rows_of(cov),
                weight: *weight,
            },
        }
    }

    pub fn sampler(&self) -> crate::Result<NoiseSampler<f64>> {
        let vec = |x: &Vec<f64>| DVector::from_vec(x.clone());
        match self {
            SamplerConfig::Gaussian { mean, cov } => {
                NoiseSampler::gaussian(vec(mean), matrix(cov, "cov")?)
            }
            SamplerConfig::Dirac { mean } => Ok(NoiseSampler::dirac(vec(mean))),
            SamplerConfig::Bimodal {
                mean1,
                mean2,
                cov,
                weight,
            } => NoiseSampler::bimodal(vec(mean1), vec(mean2), matrix(cov, "cov")?, *weight),
        }
    }
}

/// Process (`v`) and measurement (`w`) noise samplers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerFile {
    pub v: SamplerConfig,
    pub w: SamplerConfig,
}

impl SamplerFile {
    pub fn from_moments(moments: &NoiseMoments<f64>) -> Self {
        SamplerFile {
            v: SamplerConfig::gaussian(&moments.mean_v, &moments.cov_v),
            w: SamplerConfig::gaussian(&moments.mean_w, &moments.cov_w),
        }
    }

    pub fn load(path: &Path) -> Result<(NoiseSampler<f64>, NoiseSampler<f64>), ConfigError> {
        let file: SamplerFile = parse(path, &read(path)?)?;
        let invalid = |source| ConfigError::Invalid {
            path: path.to_path_buf(),
            source,
        };
        Ok((
            file.v.sampler().map_err(invalid)?,
            file.w.sampler().map_err(invalid)?,
        ))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("samplers serialize")
    }
}

/// Worst-case report; the `[v]`/`[w]` tables double as a sampler file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseFile {
    pub cost: f64,
    pub cost_core: f64,
    pub lambda_v: f64,
    pub lambda_w: f64,
    pub status_v: String,
    pub status_w: String,
    pub residual_radius_v: f64,
    pub residual_radius_w: f64,
    pub residual_mean_system: f64,
    pub iterations: usize,
    pub v: SamplerConfig,
    pub w: SamplerConfig,
}

impl WorstCaseFile {
    pub fn from_solution(sol: &WorstCaseSolution<f64>) -> Self {
        WorstCaseFile {
            cost: sol.cost,
            cost_core: sol.cost_core,
            lambda_v: sol.lambda_v,
            lambda_w: sol.lambda_w,
            status_v: format!("{:?}", sol.status_v).to_lowercase(),
            status_w: format!("{:?}", sol.status_w).to_lowercase(),
            residual_radius_v: sol.residuals.radius_v,
            residual_radius_w: sol.residuals.radius_w,
            residual_mean_system: sol.residuals.mean_system,
            iterations: sol.iterations,
            v: SamplerConfig::gaussian(&sol.mean_v, &sol.cov_v),
            w: SamplerConfig::gaussian(&sol.mean_w, &sol.cov_w),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCALAR: &str = r#"
horizon = 2
x0 = [0.0]
seed = 7

[matrices]
A = [[[-1.0]]]
B = [[[1.0]]]
C = [[[1.0]]]
Q = [[[0.0]], [[0.0]], [[1.0]]]
R = [[[0.5]]]

[reference]
cov_v = [[1.0]]
cov_w = [[0.1]]

[radii]
rho_v = 0.5
rho_w = 0.2
"#;

    fn p() -> &'static Path {
        Path::new("test.toml")
    }

    #[test]
    fn scalar_config_builds() {
        let cfg = ProblemConfig::from_str(p(), SCALAR).unwrap();
        let (problem, amb) = cfg.build(p()).unwrap();
        assert_eq!(problem.horizon, 2);
        assert_eq!(problem.q[2][(0, 0)], 1.0);
        assert_eq!(amb.rho_w, 0.2);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.solver, SolverConfig::default());
    }

    #[test]
    fn missing_section_is_named() {
        let text = SCALAR.replace("[radii]\nrho_v = 0.5\nrho_w = 0.2\n", "");
        let err = ProblemConfig::from_str(p(), &text).unwrap_err().to_string();
        assert!(err.contains("radii"), "{err}");
    }

    #[test]
    fn unknown_field_is_rejected() {
        let text = SCALAR.replace("seed = 7", "seed = 7\nsede = 3");
        let err = ProblemConfig::from_str(p(), &text).unwrap_err().to_string();
        assert!(err.contains("sede"), "{err}");
    }

    #[test]
    fn wrong_sequence_length() {
        let text = SCALAR.replace("Q = [[[0.0]], [[0.0]], [[1.0]]]", "Q = [[[0.0]], [[1.0]]]");
        let cfg = ProblemConfig::from_str(p(), &text).unwrap();
        assert!(cfg.build(p()).unwrap_err().to_string().contains('Q'));
    }

    #[test]
    fn policy_round_trip_is_exact() {
        let policy = LinearPolicy::new(
            2,
            1,
            1,
            DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 1.0 / 3.0, 2.0 / 3.0]),
            DVector::from_vec(vec![-0.25, 1e-17]),
        )
        .unwrap();
        let text = PolicyFile::from_policy(&policy).to_toml();
        let back: PolicyFile = toml::from_str(&text).unwrap();
        assert_eq!(back.policy().unwrap(), policy);
    }

    #[test]
    fn acausal_policy_file_names_block() {
        let file = PolicyFile {
            horizon: 2,
            inputs: 1,
            outputs: 1,
            u: vec![vec![0.0, 0.5], vec![0.0, 0.0]],
            q: vec![0.0, 0.0],
        };
        assert_eq!(
            file.policy().unwrap_err(),
            crate::Error::Causality { row: 0, col: 1 }
        );
    }

    #[test]
    fn sampler_kinds_parse() {
        let text = r#"
[v]
kind = "bimodal"
mean1 = [1.0]
mean2 = [-1.0]
cov = [[0.5]]

[w]
kind = "dirac"
mean = [0.0]
"#;
        let file: SamplerFile = toml::from_str(text).unwrap();
        let v = file.v.sampler().unwrap();
        assert_eq!(v.moments().1[(0, 0)], 1.5);
        let bad = text.replace("dirac", "uniform");
        assert!(toml::from_str::<SamplerFile>(&bad).is_err());
    }
}
