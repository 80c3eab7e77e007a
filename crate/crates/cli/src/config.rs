//! Per-command parameters. A `--config` JSON file supplies a base that
//! explicit flags override; missing fields take the defaults below.

use std::path::Path;

use latvol::energy::Mat3;
use latvol::equilibrium::CONVERGENCE_GRADIENT;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::commands::CliError;
use crate::{BondvolArgs, ConvergeArgs, PatchtestArgs, SelftestArgs, StabilityArgs};

const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BondvolConfig {
    pub tet: Option<[[i64; 3]; 4]>,
    pub dir: Option<[i64; 3]>,
    pub oracle: bool,
    pub budget: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatchtestConfig {
    pub n: i64,
    pub k: i64,
    pub f: Mat3,
    pub cauchy_born: bool,
}

impl Default for PatchtestConfig {
    fn default() -> Self {
        PatchtestConfig { n: 4, k: 2, f: IDENTITY, cauchy_born: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeConfig {
    pub n: Vec<i64>,
    pub k: Vec<i64>,
    pub f: Mat3,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub w1inf_slope_bound: f64,
    pub energy_slope_bound: f64,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        ConvergeConfig {
            n: vec![4, 6, 8],
            k: (2..8).collect(),
            f: CONVERGENCE_GRADIENT,
            tolerance: 1e-10,
            max_iterations: 30,
            w1inf_slope_bound: -0.7,
            energy_slope_bound: -1.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub n: i64,
    pub k: i64,
    pub t_range: [f64; 2],
    pub s_range: [f64; 2],
    pub step: f64,
    pub k_grid: usize,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig { n: 6, k: 3, t_range: [-0.2, 0.2], s_range: [-0.2, 0.2], step: 0.02, k_grid: 32 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelftestConfig {
    pub seed: u64,
    pub tets: usize,
}

impl Default for SelftestConfig {
    fn default() -> Self {
        SelftestConfig { seed: 20240601, tets: 10 }
    }
}

fn load<T: DeserializeOwned + Default>(file: Option<&Path>) -> Result<T, CliError> {
    match file {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))
        }
    }
}

fn matrix(v: &[f64]) -> Result<Mat3, CliError> {
    if v.len() != 9 {
        return Err(CliError::Invalid(format!("--f takes 9 values, got {}", v.len())));
    }
    Ok(std::array::from_fn(|i| std::array::from_fn(|j| v[3 * i + j])))
}

pub fn bondvol(a: &BondvolArgs, file: Option<&Path>) -> Result<BondvolConfig, CliError> {
    let mut c: BondvolConfig = load(file)?;
    if c.budget == 0 {
        c.budget = latvol::bond_volume::DEFAULT_BRUTEFORCE_BUDGET;
    }
    if let Some(t) = &a.tet {
        if t.len() != 12 {
            return Err(CliError::Invalid(format!("--tet takes 12 integers, got {}", t.len())));
        }
        c.tet = Some(std::array::from_fn(|i| std::array::from_fn(|j| t[3 * i + j])));
    }
    if let Some(d) = &a.dir {
        if d.len() != 3 {
            return Err(CliError::Invalid(format!("--dir takes 3 integers, got {}", d.len())));
        }
        c.dir = Some([d[0], d[1], d[2]]);
    }
    c.oracle |= a.oracle;
    if let Some(b) = a.budget {
        c.budget = b;
    }
    Ok(c)
}

pub fn patchtest(a: &PatchtestArgs, file: Option<&Path>) -> Result<PatchtestConfig, CliError> {
    let mut c: PatchtestConfig = load(file)?;
    c.n = a.n.unwrap_or(c.n);
    c.k = a.k.unwrap_or(c.k);
    if let Some(f) = &a.f {
        c.f = matrix(f)?;
    }
    c.cauchy_born |= a.cauchy_born;
    Ok(c)
}

pub fn converge(a: &ConvergeArgs, file: Option<&Path>) -> Result<ConvergeConfig, CliError> {
    let mut c: ConvergeConfig = load(file)?;
    if let Some(n) = &a.n {
        c.n = n.clone();
    }
    if let Some(k) = &a.k {
        c.k = k.clone();
    }
    if let Some(f) = &a.f {
        c.f = matrix(f)?;
    }
    c.tolerance = a.tolerance.unwrap_or(c.tolerance);
    Ok(c)
}

pub fn stability(a: &StabilityArgs, file: Option<&Path>) -> Result<StabilityConfig, CliError> {
    let mut c: StabilityConfig = load(file)?;
    c.n = a.n.unwrap_or(c.n);
    c.k = a.k.unwrap_or(c.k);
    c.step = a.step.unwrap_or(c.step);
    c.k_grid = a.k_grid.unwrap_or(c.k_grid);
    Ok(c)
}

pub fn selftest(a: &SelftestArgs, file: Option<&Path>) -> Result<SelftestConfig, CliError> {
    let mut c: SelftestConfig = load(file)?;
    c.seed = a.seed.unwrap_or(c.seed);
    c.tets = a.tets.unwrap_or(c.tets);
    Ok(c)
}
