//! CMA-ES with an externally controlled step size.
//!
//! The strategy is (μ/μ_w, λ) with rank-one and rank-μ covariance updates.
//! Cumulative step-size adaptation is removed: σ is the agent's action.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::bbob::BbobFunction;
use super::{ActionSpace, CmdpEnv, Transition};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, SymmetricEigen};
use crate::rng::{derive_rng_stream, RngStream};
use crate::types::{Instance, InstanceKind, InstanceSet, SetRole};

pub const DEFAULT_BUDGET: usize = 2000;
pub const DEFAULT_DIMENSION: usize = 10;
pub const SIGMA_MIN: f64 = 1e-10;
pub const SIGMA_MAX: f64 = 10.0;
pub const INITIAL_SIGMA: f64 = 0.5;
/// `[λ, σ, remaining_evaluations, function_id, bbob_instance_id]`
pub const STATE_DIM: usize = 5;
pub const TARGET_PRECISION: f64 = 1e-8;
pub const MIN_VARIANCE: f64 = 1e-24;
const EIGEN_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CmaesInstance {
    /// 1..=10, see [`super::bbob::FUNCTION_NAMES`].
    pub function_id: u32,
    pub bbob_instance_id: u32,
    pub dimension: usize,
}

impl CmaesInstance {
    pub fn validate(&self) -> Result<()> {
        if !(1..=10).contains(&self.function_id) {
            return Err(Error::arg(format!("unknown BBOB function {}", self.function_id)));
        }
        if self.bbob_instance_id < 1 {
            return Err(Error::arg("BBOB instance ids start at 1"));
        }
        if self.dimension < 2 {
            return Err(Error::arg("CMA-ES dimension must be at least 2"));
        }
        Ok(())
    }
}

/// Train set: every function with BBOB instances 1..=4.
pub fn cmaes_train_set(dimension: usize) -> Result<InstanceSet> {
    cmaes_grid(1..=4, 0, dimension, SetRole::Train)
}

/// Test set: every function with BBOB instance 5.
pub fn cmaes_test_set(dimension: usize) -> Result<InstanceSet> {
    cmaes_grid(5..=5, 1000, dimension, SetRole::Test)
}

fn cmaes_grid(
    bbob_instances: core::ops::RangeInclusive<u32>,
    first_id: u32,
    dimension: usize,
    role: SetRole,
) -> Result<InstanceSet> {
    let mut out = Vec::new();
    for function_id in 1..=10 {
        for bbob_instance_id in bbob_instances.clone() {
            let params = CmaesInstance { function_id, bbob_instance_id, dimension };
            params.validate()?;
            out.push(Instance::cmaes(first_id + out.len() as u32, params));
        }
    }
    InstanceSet::new(role, out)
}

/// Population size and recombination constants for dimension `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CmaesParams {
    pub lambda: usize,
    pub mu: usize,
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
}

impl CmaesParams {
    pub fn new(n: usize) -> Self {
        let nf = n as f64;
        let lambda = 4 + libm::floor(3.0 * libm::log(nf)) as usize;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu).map(|i| libm::log(mu as f64 + 0.5) - libm::log(i as f64)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3) * (nf + 1.3) + mu_eff);
        let c_mu = f64::min(1.0 - c_1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0) * (nf + 2.0) + mu_eff));
        CmaesParams { lambda, mu, weights, mu_eff, c_c, c_1, c_mu }
    }
}

#[derive(Debug, Clone)]
pub struct CmaesState {
    pub mean: Vec<f64>,
    pub covariance: Matrix,
    pub sigma: f64,
    /// Rank-one evolution path `p_c`.
    pub path: Vec<f64>,
    pub best_f: f64,
    pub evaluations: usize,
    /// Number of times the covariance had to be floored back to PD.
    pub repairs: usize,
    eigen: SymmetricEigen,
}

impl CmaesState {
    pub fn new(mean: Vec<f64>, sigma: f64) -> Self {
        let n = mean.len();
        let covariance = Matrix::identity(n);
        let eigen = SymmetricEigen::new(&covariance);
        CmaesState {
            mean,
            covariance,
            sigma,
            path: vec![0.0; n],
            best_f: f64::INFINITY,
            evaluations: 0,
            repairs: 0,
            eigen,
        }
    }

    /// Largest eigenvalue of `σ² C`.
    pub fn max_variance(&self) -> f64 {
        self.sigma * self.sigma * self.eigen.max_value()
    }

    pub fn eigen(&self) -> &SymmetricEigen {
        &self.eigen
    }
}

/// One generation with step size `sigma`. Returns the best f of the new
/// offspring.
pub fn cma_generation<R: Rng + ?Sized>(
    state: &mut CmaesState,
    sigma: f64,
    params: &CmaesParams,
    function: &BbobFunction,
    rng: &mut R,
) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::arg(format!("step size must be positive, got {sigma}")));
    }
    let n = state.mean.len();
    if function.dimension() != n {
        return Err(Error::arg("function dimension does not match the CMA-ES state"));
    }
    state.sigma = sigma;

    // offspring x_k = m + σ · B·D·z_k with C = B·D²·Bᵀ
    let sqrt_eig: Vec<f64> = state.eigen.values.iter().map(|v| libm::sqrt(*v)).collect();
    let mut offspring: Vec<(f64, Vec<f64>)> = Vec::with_capacity(params.lambda);
    for _ in 0..params.lambda {
        let z: Vec<f64> = (0..n).map(|i| sqrt_eig[i] * rng.sample::<f64, _>(StandardNormal)).collect();
        let y = state.eigen.vectors.mul_vec(&z);
        let x: Vec<f64> = state.mean.iter().zip(&y).map(|(m, yi)| m + sigma * yi).collect();
        let f = function.eval(&x)?;
        offspring.push((f, y));
    }
    state.evaluations += params.lambda;
    offspring.sort_by(|a, b| a.0.total_cmp(&b.0));
    let generation_best = offspring[0].0;
    if generation_best < state.best_f {
        state.best_f = generation_best;
    }

    let mut y_w = vec![0.0; n];
    for (w, (_, y)) in params.weights.iter().zip(&offspring) {
        y_w.iter_mut().zip(y).for_each(|(a, b)| *a += w * b);
    }
    state.mean.iter_mut().zip(&y_w).for_each(|(m, y)| *m += sigma * y);

    let path_coef = libm::sqrt(params.c_c * (2.0 - params.c_c) * params.mu_eff);
    state.path.iter_mut().zip(&y_w).for_each(|(p, y)| *p = (1.0 - params.c_c) * *p + path_coef * y);

    let keep = 1.0 - params.c_1 - params.c_mu;
    let mut c = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let rank_mu: f64 = params.weights.iter().zip(&offspring).map(|(w, (_, y))| w * y[i] * y[j]).sum();
            c[(i, j)] =
                keep * state.covariance[(i, j)] + params.c_1 * state.path[i] * state.path[j] + params.c_mu * rank_mu;
        }
    }
    c.symmetrize();
    state.eigen = SymmetricEigen::new(&c);
    state.covariance = c;
    repair_covariance(state);
    Ok(generation_best)
}

fn repair_covariance(state: &mut CmaesState) {
    let needs_repair =
        !state.covariance.is_finite() || state.eigen.values.iter().any(|v| !(*v > EIGEN_FLOOR) || !v.is_finite());
    if !needs_repair {
        return;
    }
    log::warn!("covariance lost positive definiteness; flooring eigenvalues at {EIGEN_FLOOR:e}");
    state.repairs += 1;
    if !state.covariance.is_finite() {
        state.covariance = Matrix::identity(state.mean.len());
        state.eigen = SymmetricEigen::new(&state.covariance);
        return;
    }
    for v in state.eigen.values.iter_mut() {
        if !(*v > EIGEN_FLOOR) {
            *v = EIGEN_FLOOR;
        }
    }
    state.covariance = state.eigen.reconstruct();
    state.covariance.symmetrize();
}

/// Step-size control environment.
#[derive(Debug, Clone)]
pub struct CmaesEnv {
    budget: usize,
    episode: Option<Episode>,
}

#[derive(Debug, Clone)]
struct Episode {
    instance: CmaesInstance,
    function: BbobFunction,
    params: CmaesParams,
    state: CmaesState,
    rng: RngStream,
    done: bool,
}

impl CmaesEnv {
    pub fn new(budget: usize) -> Self {
        CmaesEnv { budget, episode: None }
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    /// Internal state of the running episode.
    pub fn state(&self) -> Option<&CmaesState> {
        self.episode.as_ref().map(|e| &e.state)
    }

    pub fn function(&self) -> Option<&BbobFunction> {
        self.episode.as_ref().map(|e| &e.function)
    }

    fn observation(&self, ep: &Episode) -> Vec<f64> {
        vec![
            ep.params.lambda as f64,
            ep.state.sigma,
            self.budget.saturating_sub(ep.state.evaluations) as f64,
            ep.instance.function_id as f64,
            ep.instance.bbob_instance_id as f64,
        ]
    }
}

/// σ actually applied for a raw agent action.
pub fn clamp_sigma(action: f64) -> f64 {
    if action.is_nan() {
        SIGMA_MIN
    } else {
        action.clamp(SIGMA_MIN, SIGMA_MAX)
    }
}

impl CmdpEnv for CmaesEnv {
    fn reset(&mut self, instance: &Instance, seed: u64) -> Result<Vec<f64>> {
        let InstanceKind::Cmaes(params) = &instance.kind else {
            return Err(Error::arg("CMA-ES environment needs a CMA-ES instance"));
        };
        let function = BbobFunction::new(params)?;
        let strategy = CmaesParams::new(params.dimension);
        if strategy.lambda > self.budget {
            return Err(Error::arg("evaluation budget is smaller than one generation"));
        }
        let mut rng = derive_rng_stream(seed, "cmaes-episode");
        let mean = (0..params.dimension).map(|_| rng.random_range(-4.0..=4.0)).collect();
        let ep = Episode {
            instance: *params,
            function,
            params: strategy,
            state: CmaesState::new(mean, INITIAL_SIGMA),
            rng,
            done: false,
        };
        let obs = self.observation(&ep);
        self.episode = Some(ep);
        Ok(obs)
    }

    fn step(&mut self, action: &[f64]) -> Result<Transition> {
        let budget = self.budget;
        let Some(ep) = self.episode.as_mut() else {
            return Err(Error::Usage("step before reset".into()));
        };
        if ep.done {
            return Err(Error::Usage("step after episode end".into()));
        }
        if action.len() != 1 {
            return Err(Error::arg(format!("CMA-ES action has {} dimensions, expected 1", action.len())));
        }
        let sigma = clamp_sigma(action[0]);
        cma_generation(&mut ep.state, sigma, &ep.params, &ep.function, &mut ep.rng)?;
        let reward = -ep.state.best_f;
        ep.done = ep.state.evaluations + ep.params.lambda > budget
            || ep.state.best_f - ep.function.f_opt() <= TARGET_PRECISION
            || ep.state.max_variance() < MIN_VARIANCE;
        let done = ep.done;
        let ep = self.episode.as_ref().expect("episode present");
        Ok(Transition { state: self.observation(ep), reward, done })
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous { low: vec![0.0], high: vec![SIGMA_MAX] }
    }

    fn state_dim(&self) -> usize {
        STATE_DIM
    }

    fn max_horizon(&self) -> usize {
        let lambda =
            self.episode.as_ref().map_or_else(|| CmaesParams::new(DEFAULT_DIMENSION).lambda, |e| e.params.lambda);
        self.budget / lambda
    }
}
