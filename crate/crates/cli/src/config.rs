//! Experiment configuration: one JSON file per experiment, all randomness
//! derived from a single seed.

use pwrelu::dynamics::{GDConfig, GFConfig, InitSampler, Integrator};
use pwrelu::pwfun::PiecewisePoly;
use pwrelu::scalar::Rat;
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    /// Shallow width; mutually exclusive with `layers`.
    pub width: Option<usize>,
    /// Deep layer widths `l_0, ..., l_L`.
    pub layers: Option<Vec<usize>>,
    /// Widths for the `widthscan` command.
    pub widths: Option<Vec<usize>>,
    pub dynamics: Option<DynamicsSpec>,
    pub gradcheck: Option<GradcheckSpec>,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub target: serde_json::Value,
    pub density: serde_json::Value,
}

impl ProblemSpec {
    pub fn parse_f64(&self) -> anyhow::Result<(PiecewisePoly<f64>, PiecewisePoly<f64>)> {
        let t: PiecewisePoly<f64> = serde_json::from_value(self.target.clone())?;
        let d: PiecewisePoly<f64> = serde_json::from_value(self.density.clone())?;
        Ok((t, d))
    }

    pub fn parse_rational(&self) -> anyhow::Result<(PiecewisePoly<Rat>, PiecewisePoly<Rat>)> {
        let t: PiecewisePoly<Rat> = serde_json::from_value(self.target.clone())?;
        let d: PiecewisePoly<Rat> = serde_json::from_value(self.density.clone())?;
        Ok((t, d))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DynamicsSpec {
    Gd {
        gamma: f64,
        steps: usize,
        #[serde(default = "one")]
        inits: usize,
        #[serde(default = "default_c")]
        c: f64,
        /// Heavy-tailed Cauchy initialization instead of uniform.
        #[serde(default)]
        cauchy: bool,
        #[serde(default = "one")]
        stride: usize,
    },
    Gf {
        step: f64,
        horizon: f64,
        #[serde(default = "default_integrator")]
        integrator: String,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default = "default_energy_tol")]
        energy_tol_factor: f64,
    },
}

fn one() -> usize {
    1
}
fn default_c() -> f64 {
    2.0
}
fn default_integrator() -> String {
    "rk4".into()
}
fn default_energy_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckSpec {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_tol")]
    pub tolerance: f64,
    #[serde(default = "default_fd")]
    pub fd_step: f64,
}

fn default_samples() -> usize {
    100
}
fn default_tol() -> f64 {
    1e-4
}
fn default_fd() -> f64 {
    1e-6
}

impl DynamicsSpec {
    pub fn gd_config(&self, seed: u64) -> anyhow::Result<GDConfig> {
        match self {
            DynamicsSpec::Gd {
                gamma,
                steps,
                inits,
                c,
                cauchy,
                stride,
            } => {
                anyhow::ensure!(*gamma > 0.0, "learning rate must be positive");
                anyhow::ensure!(*inits >= 1, "need at least one initialization");
                anyhow::ensure!(*c > 0.0, "init radius must be positive");
                Ok(GDConfig {
                    gamma: *gamma,
                    steps: *steps,
                    inits: *inits,
                    sampler: if *cauchy {
                        InitSampler::Cauchy { scale: *c }
                    } else {
                        InitSampler::Uniform { c: *c }
                    },
                    master_seed: seed,
                    stride: *stride,
                })
            }
            DynamicsSpec::Gf { .. } => anyhow::bail!("expected a GD dynamics block"),
        }
    }

    pub fn gf_config(&self) -> anyhow::Result<GFConfig> {
        match self {
            DynamicsSpec::Gf {
                step,
                horizon,
                integrator,
                stride,
                energy_tol_factor,
            } => {
                anyhow::ensure!(
                    *step > 0.0 && *horizon >= 0.0,
                    "need step > 0 and horizon >= 0"
                );
                let integrator = match integrator.as_str() {
                    "euler" => Integrator::Euler,
                    "rk4" => Integrator::Rk4,
                    other => anyhow::bail!("unknown integrator {other:?}"),
                };
                Ok(GFConfig {
                    step: *step,
                    horizon: *horizon,
                    integrator,
                    energy_tol_factor: *energy_tol_factor,
                    max_retries: 6,
                    stride: *stride,
                })
            }
            DynamicsSpec::Gd { .. } => anyhow::bail!("expected a GF dynamics block"),
        }
    }
}
