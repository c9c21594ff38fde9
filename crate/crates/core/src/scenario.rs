//! Scenario files and the built-in example networks.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arrivals::ArrivalSpec;
use crate::error::{check_dim, Error, Result};
use crate::jf::{gamma_serde, Jump};
use crate::network::{Network, NetworkFile};

/// Default ε for analysis commands.
pub const DEFAULT_EPSILON: f64 = 0.05;

/// One jump in a scenario file; `queue` is 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpSpec {
    pub t: f64,
    pub queue: usize,
    pub size: f64,
}

/// On-disk scenario. Queue indices are 1-based; `gamma` accepts `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub network: Option<NetworkFile>,
    /// Path to a network file, relative to the scenario file.
    #[serde(default)]
    pub network_file: Option<String>,
    pub lambda_star: Vec<f64>,
    #[serde(with = "gamma_serde")]
    pub gamma: Vec<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub queue: usize,
    #[serde(default)]
    pub arrivals: Option<Vec<ArrivalSpec>>,
    #[serde(default)]
    pub init: Option<Vec<f64>>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub jumps: Vec<JumpSpec>,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

/// A validated scenario with 0-based queue indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub network: Network,
    pub lambda_star: Vec<f64>,
    pub gamma: Vec<f64>,
    pub epsilon: f64,
    pub queue: usize,
    /// Per-queue laws for simulation; derived from `λ*` and `γ` if absent.
    pub arrivals: Option<Vec<ArrivalSpec>>,
    pub init: Option<Vec<f64>>,
    pub horizon: Option<f64>,
    pub jumps: Vec<Jump>,
    pub seed: Option<u64>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let ell = self.network.ell();
        check_dim(ell, self.lambda_star.len())?;
        check_dim(ell, self.gamma.len())?;
        if self.gamma.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::InvalidArgument("gamma entries must lie in (0, inf]".into()));
        }
        if self.lambda_star.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::InvalidArgument("lambda_star must be nonnegative".into()));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidArgument("epsilon must be nonnegative".into()));
        }
        if self.queue >= ell {
            return Err(Error::InvalidArgument(format!("queue {} out of range 1..={ell}", self.queue + 1)));
        }
        if let Some(a) = &self.arrivals {
            check_dim(ell, a.len())?;
        }
        if let Some(x) = &self.init {
            check_dim(ell, x.len())?;
        }
        if self.jumps.iter().any(|j| j.queue >= ell) {
            return Err(Error::InvalidArgument("jump queue out of range".into()));
        }
        Ok(())
    }

    pub fn from_file_struct(file: ScenarioFile, base: Option<&Path>) -> Result<Self> {
        let network = match (&file.network, &file.network_file) {
            (Some(n), None) => Network::from_file(n)?,
            (None, Some(p)) => {
                let path = base.map_or_else(|| Path::new(p).to_path_buf(), |b| b.join(p));
                Network::load(path)?
            }
            _ => {
                return Err(Error::InvalidArgument("scenario needs exactly one of network, network_file".into()))
            }
        };
        if file.queue == 0 {
            return Err(Error::InvalidArgument("queue is 1-based".into()));
        }
        let jumps = file
            .jumps
            .iter()
            .map(|j| {
                if j.queue == 0 {
                    return Err(Error::InvalidArgument("jump queue is 1-based".into()));
                }
                Ok(Jump { t: j.t, queue: j.queue - 1, size: j.size })
            })
            .collect::<Result<_>>()?;
        let s = Self {
            name: file.name.unwrap_or_else(|| "scenario".into()),
            network,
            lambda_star: file.lambda_star,
            gamma: file.gamma,
            epsilon: file.epsilon,
            queue: file.queue - 1,
            arrivals: file.arrivals,
            init: file.init,
            horizon: file.horizon,
            jumps,
            seed: file.seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file: ScenarioFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_file_struct(file, path.parent())
    }

    pub fn to_file(&self) -> ScenarioFile {
        ScenarioFile {
            name: Some(self.name.clone()),
            network: Some(self.network.to_file()),
            network_file: None,
            lambda_star: self.lambda_star.clone(),
            gamma: self.gamma.clone(),
            epsilon: self.epsilon,
            queue: self.queue + 1,
            arrivals: self.arrivals.clone(),
            init: self.init.clone(),
            horizon: self.horizon,
            jumps: self.jumps.iter().map(|j| JumpSpec { t: j.t, queue: j.queue + 1, size: j.size }).collect(),
            seed: self.seed,
        }
    }

    /// The simulation law per queue: the explicit specs if given, else a
    /// Pareto mixture (scale 1) with mean `λ*_j` for finite `γ_j` and
    /// deterministic `λ*_j` otherwise.
    pub fn arrival_specs(&self) -> Vec<ArrivalSpec> {
        self.arrivals.clone().unwrap_or_else(|| {
            self.lambda_star
                .iter()
                .zip(&self.gamma)
                .map(|(&mean, &gamma)| {
                    if gamma.is_finite() && mean > 0.0 {
                        ArrivalSpec::ParetoMixture { gamma, mean, x_min: 1.0 }
                    } else {
                        ArrivalSpec::Deterministic { rate: mean }
                    }
                })
                .collect()
        })
    }
}

/// Three queues, any two served together at rate 1.
pub fn three_queue_network() -> Network {
    Network::new(3, vec![vec![1.0, 1.0, 0.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]])
        .expect("valid built-in network")
}

/// Three-queue cases: 1 is `γ = 0.6, λ₃ = 0.75`, 2 is `γ = 0.8, λ₃ = 0.25`,
/// 3 is `γ = 0.4, λ₃ = 0.25`; queues 1 and 2 heavy with rate 0.5, queue 3
/// light and targeted.
pub fn three_queue(case: u8) -> Result<Scenario> {
    let (g, l3) = match case {
        1 => (0.6, 0.75),
        2 => (0.8, 0.25),
        3 => (0.4, 0.25),
        _ => return Err(Error::InvalidArgument(format!("three-queue has cases 1-3, got {case}"))),
    };
    Ok(Scenario {
        name: format!("three-queue case {case}"),
        network: three_queue_network(),
        lambda_star: vec![0.5, 0.5, l3],
        gamma: vec![g, g, f64::INFINITY],
        epsilon: DEFAULT_EPSILON,
        queue: 2,
        arrivals: None,
        init: None,
        horizon: None,
        jumps: Vec::new(),
        seed: None,
    })
}

/// Reconstructed service set for the jump-timing example: reproduces the
/// breakpoints (27,0,0,0), (6,6,0,0), (0,2,2,0), 0 and the 5/8 : 3/8 split.
pub fn four_queue_timing_network() -> Network {
    Network::new(
        4,
        vec![vec![8.0, 0.0, 1.0, 1.0], vec![4.0, 4.0, 0.0, 2.0], vec![6.0, 0.0, 4.0, 0.0]],
    )
    .expect("valid built-in network")
}

/// `λ* = (1,2,1,1)`, `γ₁ = 1/2`, a jump of 27 at queue 1 at time 0; target
/// queue 4. Pass `second_jump` to add the jump of 2 at time 5.
pub fn four_queue_timing(second_jump: bool) -> Scenario {
    let mut jumps = vec![Jump { t: 0.0, queue: 0, size: 27.0 }];
    if second_jump {
        jumps.push(Jump { t: 5.0, queue: 0, size: 2.0 });
    }
    Scenario {
        name: "four-queue-timing".into(),
        network: four_queue_timing_network(),
        lambda_star: vec![1.0, 2.0, 1.0, 1.0],
        gamma: vec![0.5, f64::INFINITY, f64::INFINITY, f64::INFINITY],
        epsilon: 0.0,
        queue: 3,
        arrivals: None,
        init: None,
        horizon: Some(10.0),
        jumps,
        seed: None,
    }
}
