//! JSON experiment configuration shared by the CLI and the browser demo.
//!
//! A config names a graph, which nodes misbehave, the observation prior, the
//! misbehavior intensities, the protocol(s) under test and the experiment
//! parameters. Every command is deterministic given `(config, seed)`.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{MisbehaviorModel, PriorSpec, Protocol};
use crate::error::{Error, Result};
use crate::graphs::{GraphSpec, Network};
use crate::netdesign::{AttackerPolicy, KPolicy, ObjectiveKind, SweepFamily};
use crate::numerics::{Matrix, Vector};

/// Which nodes misbehave: an explicit id list, or `random` nodes drawn under the
/// experiment seed. Empty means an all-regular (nominal) network.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MisbehavingSelect {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ids: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<usize>,
}

impl MisbehavingSelect {
    pub fn apply(&self, net: &Network, seed: u64) -> Result<Network> {
        match (self.ids.is_empty(), self.random) {
            (true, None) => Ok(net.clone()),
            (false, None) => net.mark_misbehaving(&self.ids),
            (true, Some(m)) => {
                if m == 0 || m >= net.n() {
                    return Err(Error::Config(format!(
                        "random misbehaving count {m} infeasible for n = {}",
                        net.n()
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d69_7362_6568_6176);
                let ids: Vec<usize> = rand::seq::index::sample(&mut rng, net.n(), m)
                    .into_iter()
                    .map(|i| i + 1)
                    .collect();
                net.mark_misbehaving(&ids)
            }
            (false, Some(_)) => Err(Error::Config(
                "misbehaving: give either explicit ids or a random count, not both".into(),
            )),
        }
    }
}

/// Misbehavior intensities: scalar `d`/`q` (giving `V = d·I`, `Q = q·I`) or
/// explicit covariance matrices, plus an optional fixed bias (verbatim vector or
/// a uniform range sampled once under the experiment seed).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MisbehaviorSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_cov: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_cov: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_bias: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_range: Option<[f64; 2]>,
}

fn parse_cov(rows: &[Vec<f64>], m: usize, what: &str) -> Result<Matrix> {
    if rows.len() != m || rows.iter().any(|r| r.len() != m) {
        return Err(Error::Config(format!("{what} must be {m}x{m}")));
    }
    Ok(Matrix::from_fn(m, m, |i, j| rows[i][j]))
}

impl MisbehaviorSpec {
    /// Builds the model for `m` misbehaving nodes. Bias-range draws use a stream
    /// derived from `seed`, once per experiment.
    pub fn build(&self, m: usize, seed: u64) -> Result<MisbehaviorModel> {
        if self.d.is_some() && self.v_cov.is_some() {
            return Err(Error::Config("give either d or v_cov, not both".into()));
        }
        if self.q.is_some() && self.q_cov.is_some() {
            return Err(Error::Config("give either q or q_cov, not both".into()));
        }
        if self.fixed_bias.is_some() && self.bias_range.is_some() {
            return Err(Error::Config(
                "give either fixed_bias or bias_range, not both".into(),
            ));
        }
        let v = match &self.v_cov {
            Some(rows) => parse_cov(rows, m, "v_cov")?,
            None => Matrix::identity(m, m) * self.d.unwrap_or(0.0),
        };
        let q = match &self.q_cov {
            Some(rows) => parse_cov(rows, m, "q_cov")?,
            None => Matrix::identity(m, m) * self.q.unwrap_or(0.0),
        };
        let bias = if let Some(b) = &self.fixed_bias {
            if b.len() != m {
                return Err(Error::Config(format!(
                    "fixed_bias has {} entries for {m} misbehaving nodes",
                    b.len()
                )));
            }
            Some(Vector::from_row_slice(b))
        } else if let Some([lo, hi]) = self.bias_range {
            if !(hi >= lo) {
                return Err(Error::Config(format!("bad bias_range [{lo}, {hi}]")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6269_6173_5f72_6e67);
            Some(Vector::from_fn(m, |_, _| rng.random_range(lo..=hi)))
        } else {
            None
        };
        let model = MisbehaviorModel::new(v, q, None)?;
        match bias {
            Some(b) => model.with_fixed_bias(b),
            None => Ok(model),
        }
    }
}

/// `lambda` in a protocol spec: a number, or `"auto"` to use the minimizer of
/// the theoretical error under the design misbehavior model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSpec {
    Fixed(f64),
    Named(String),
}

impl LambdaSpec {
    pub fn is_auto(&self) -> Result<bool> {
        match self {
            LambdaSpec::Fixed(v) => {
                if !(0.0..=1.0).contains(v) {
                    return Err(Error::Config(format!("lambda {v} outside [0, 1]")));
                }
                Ok(false)
            }
            LambdaSpec::Named(s) if s == "auto" => Ok(true),
            LambdaSpec::Named(s) => Err(Error::Config(format!(
                "lambda must be a number or \"auto\", got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProtocolSpec {
    Consensus,
    Fj { lambda: LambdaSpec },
    Wmsr { f: usize },
    Saba,
}

impl ProtocolSpec {
    /// Resolves to a runnable protocol; `auto` λ is supplied by the caller.
    pub fn resolve(&self, auto_lambda: Option<f64>) -> Result<Protocol> {
        Ok(match self {
            ProtocolSpec::Consensus => Protocol::Consensus,
            ProtocolSpec::Wmsr { f } => Protocol::Wmsr { f: *f },
            ProtocolSpec::Saba => Protocol::Saba,
            ProtocolSpec::Fj { lambda } => match lambda {
                LambdaSpec::Fixed(v) => Protocol::Fj { lambda: *v },
                LambdaSpec::Named(_) => Protocol::Fj {
                    lambda: auto_lambda.ok_or_else(|| {
                        Error::Config("auto lambda requested but not resolved".into())
                    })?,
                },
            },
        })
    }

    pub fn needs_auto_lambda(&self) -> bool {
        matches!(
            self,
            ProtocolSpec::Fj {
                lambda: LambdaSpec::Named(_)
            }
        )
    }

    pub fn validate(&self) -> Result<()> {
        if let ProtocolSpec::Fj { lambda } = self {
            lambda.is_auto()?;
        }
        Ok(())
    }
}

/// Sweep axis for the error-curve command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveAxis {
    D,
    Q,
    M,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: CurveAxis,
    pub values: Vec<f64>,
}

/// Parameters of the network-design studies (`sweep`, `gramian`, `prune`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub kind: ObjectiveKind,
    /// Evaluation competition; the paper's sweeps fix 0.1, pruning uses 0.2/0.7.
    #[serde(default = "default_study_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub d: f64,
    #[serde(default)]
    pub q: f64,
    #[serde(default)]
    pub k_policy: KPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<SweepFamily>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub densities: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<AttackerPolicy>,
    #[serde(default = "default_study_seeds")]
    pub seeds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_removals: Option<usize>,
}

fn default_study_lambda() -> f64 {
    0.1
}

fn default_study_seeds() -> usize {
    100
}

fn default_design_v() -> f64 {
    5.0
}

fn default_trials() -> usize {
    200
}

fn default_lambda_grid() -> usize {
    256
}

/// Top-level experiment configuration (JSON document).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSpec,
    #[serde(default)]
    pub misbehaving: MisbehavingSelect,
    pub prior: PriorSpec,
    #[serde(default)]
    pub misbehavior: MisbehaviorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocols: Option<Vec<ProtocolSpec>>,
    /// Design bias intensity backing `"auto"` λ (the design model is `V = design_v·I`, `Q = 0`).
    #[serde(default = "default_design_v")]
    pub design_v: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: usize,
    /// λ evaluation points for `mc-validate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid < 32 {
            return Err(Error::Config("lambda_grid must be at least 32".into()));
        }
        if self.trials < 2 {
            return Err(Error::Config("trials must be at least 2".into()));
        }
        if let Some(p) = &self.protocol {
            p.validate()?;
        }
        if let Some(ps) = &self.protocols {
            for p in ps {
                p.validate()?;
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::Config("sweep.values must be nonempty".into()));
            }
            if matches!(sweep.axis, CurveAxis::M)
                && sweep.values.iter().any(|v| v.fract() != 0.0 || *v < 1.0)
            {
                return Err(Error::Config(
                    "sweep over m needs positive integer values".into(),
                ));
            }
        }
        Ok(())
    }

    /// Generates the graph and applies the misbehaving selection.
    pub fn build_network(&self) -> Result<Network> {
        let net = crate::graphs::generate(&self.graph)?;
        self.misbehaving.apply(&net, self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "graph": {"kind": "k_regular", "degree": 3, "n": 12, "seed": 7},
        "misbehaving": {"ids": [4]},
        "prior": {"kind": "identity", "var": 0.1},
        "misbehavior": {"d": 5.0, "q": 1.0},
        "protocol": {"kind": "fj", "lambda": "auto"},
        "trials": 100,
        "seed": 3
    }"#;

    #[test]
    fn parses_minimal_config() {
        let config = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(config.design_v, 5.0);
        assert_eq!(config.lambda_grid, 256);
        assert!(config.protocol.as_ref().unwrap().needs_auto_lambda());
        let net = config.build_network().unwrap();
        assert_eq!(net.n_misbehaving(), 1);
        assert_eq!(net.misbehaving_ids(), &[4]);
        let mis = config.misbehavior.build(1, config.seed).unwrap();
        assert_eq!(mis.v_cov()[(0, 0)], 5.0);
    }

    #[test]
    fn rejects_unknown_fields_and_bad_lambda() {
        assert!(ExperimentConfig::from_json(r#"{"graph": {"kind": "k_regular", "degree": 3, "n": 12}, "prior": {"kind": "identity", "var": 1.0}, "typo_field": 1}"#).is_err());
        let bad_lambda = MINIMAL.replace("\"auto\"", "\"automatic\"");
        assert!(ExperimentConfig::from_json(&bad_lambda).is_err());
        let out_of_range = MINIMAL.replace("\"auto\"", "1.5");
        assert!(ExperimentConfig::from_json(&out_of_range).is_err());
    }

    #[test]
    fn random_selection_is_seed_deterministic() {
        let mut config = ExperimentConfig::from_json(MINIMAL).unwrap();
        config.misbehaving = MisbehavingSelect {
            ids: vec![],
            random: Some(3),
        };
        let a = config.build_network().unwrap();
        let b = config.build_network().unwrap();
        assert_eq!(a.misbehaving_ids(), b.misbehaving_ids());
        assert_eq!(a.n_misbehaving(), 3);
    }

    #[test]
    fn bias_range_draws_fixed_biases_once() {
        let spec = MisbehaviorSpec {
            bias_range: Some([2.0, 6.0]),
            ..Default::default()
        };
        let a = spec.build(6, 11).unwrap();
        let b = spec.build(6, 11).unwrap();
        let bias_a = a.fixed_bias().unwrap();
        assert_eq!(bias_a, b.fixed_bias().unwrap());
        assert!(bias_a.iter().all(|v| (2.0..=6.0).contains(v)));
        let c = spec.build(6, 12).unwrap();
        assert_ne!(bias_a, c.fixed_bias().unwrap());
    }

    #[test]
    fn misbehavior_spec_rejects_conflicts() {
        let both = MisbehaviorSpec {
            d: Some(1.0),
            v_cov: Some(vec![vec![1.0]]),
            ..Default::default()
        };
        assert!(both.build(1, 0).is_err());
    }
}
