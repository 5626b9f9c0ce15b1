//! Agent process dynamics, deterministic predictors with reset on
//! communication, estimation errors, and distributed linear state feedback.
//!
//! All operations are pure functions of their inputs; noise is sampled by
//! the caller and passed in, which keeps runs replayable.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Discrete-time LTI dynamics of one agent: `x+ = A x + B u + w` with
/// `w ~ N(0, sigma_w)`.
#[derive(Debug, Clone)]
pub struct AgentModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    sigma_w: DMatrix<f64>,
    /// Factor L with L L^T = sigma_w, computed once at construction.
    noise_factor: DMatrix<f64>,
}

impl AgentModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, sigma_w: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::config("state matrix A must be square"));
        }
        let n_x = a.nrows();
        if b.nrows() != n_x {
            return Err(Error::config(format!(
                "input matrix B has {} rows, expected {}",
                b.nrows(),
                n_x
            )));
        }
        if sigma_w.nrows() != n_x || sigma_w.ncols() != n_x {
            return Err(Error::config("noise covariance must be n_x by n_x"));
        }
        if !linalg::is_symmetric(&sigma_w, 1e-9) {
            return Err(Error::config("noise covariance must be symmetric"));
        }
        if linalg::min_symmetric_eigenvalue(&sigma_w) < -1e-10 {
            return Err(Error::config("noise covariance must be positive semi-definite"));
        }
        if a.iter().chain(b.iter()).chain(sigma_w.iter()).any(|v| !v.is_finite()) {
            return Err(Error::config("model matrices must be finite"));
        }
        let noise_factor = linalg::covariance_sqrt(&sigma_w)?;
        Ok(Self {
            a,
            b,
            sigma_w,
            noise_factor,
        })
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn sigma_w(&self) -> &DMatrix<f64> {
        &self.sigma_w
    }

    /// One process-noise draw `w ~ N(0, sigma_w)`.
    pub fn sample_noise<R: rand::Rng>(&self, rng: &mut R) -> DVector<f64> {
        &self.noise_factor * linalg::standard_normal_vector(self.n_x(), rng)
    }
}

/// What one agent knows at a time step: its true state, the shared
/// prediction of its own state, and the predictions it holds of the agents
/// it subscribes to.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub x: DVector<f64>,
    pub x_hat_self: DVector<f64>,
    pub x_hat_others: BTreeMap<usize, DVector<f64>>,
}

/// Static distributed feedback: `u = F_self x_hat_self + sum_j F_j x_hat_j`.
#[derive(Debug, Clone)]
pub struct FeedbackLaw {
    pub f_self: DMatrix<f64>,
    pub f_others: BTreeMap<usize, DMatrix<f64>>,
}

impl FeedbackLaw {
    pub fn validate(&self, model: &AgentModel) -> Result<()> {
        let (n_u, n_x) = (model.n_u(), model.n_x());
        if self.f_self.nrows() != n_u || self.f_self.ncols() != n_x {
            return Err(Error::config(format!(
                "feedback gain is {}x{}, expected {}x{}",
                self.f_self.nrows(),
                self.f_self.ncols(),
                n_u,
                n_x
            )));
        }
        for (id, f) in &self.f_others {
            if f.nrows() != n_u || f.ncols() != n_x {
                return Err(Error::config(format!("gain for agent {id} has inconsistent dimensions")));
            }
        }
        Ok(())
    }
}

/// Estimation error `z = x - x_hat` together with its Euclidean norm.
#[derive(Debug, Clone)]
pub struct EstimationError {
    pub z: DVector<f64>,
    pub norm: f64,
}

/// Advances the true process one step: `A x + B u + noise`.
pub fn step_process(
    model: &AgentModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    noise: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dim("state", x.len(), model.n_x())?;
    check_dim("input", u.len(), model.n_u())?;
    check_dim("noise", noise.len(), model.n_x())?;
    Ok(&model.a * x + &model.b * u + noise)
}

/// Advances a predictor one step. Without a communicated state this is the
/// noiseless process `A x_hat + B u`; a communicated state replaces the
/// prediction verbatim (reset).
pub fn step_predictor(
    model: &AgentModel,
    x_hat: &DVector<f64>,
    u: &DVector<f64>,
    communicated: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    check_dim("prediction", x_hat.len(), model.n_x())?;
    check_dim("input", u.len(), model.n_u())?;
    if let Some(received) = communicated {
        check_dim("communicated state", received.len(), model.n_x())?;
        return Ok(received.clone());
    }
    Ok(&model.a * x_hat + &model.b * u)
}

/// Distributed control input `F_self x_hat_self + sum_j F_j x_hat_j`.
pub fn control_input(law: &FeedbackLaw, state: &AgentState) -> Result<DVector<f64>> {
    let mut u = &law.f_self * &state.x_hat_self;
    for (id, gain) in &law.f_others {
        let pred = state
            .x_hat_others
            .get(id)
            .ok_or_else(|| Error::config(format!("no prediction available for agent {id}")))?;
        u += gain * pred;
    }
    Ok(u)
}

/// Estimation error between a true state and its prediction.
pub fn estimation_error(x: &DVector<f64>, x_hat: &DVector<f64>) -> Result<EstimationError> {
    if x.len() != x_hat.len() {
        return Err(Error::config(format!(
            "state dimension {} does not match prediction dimension {}",
            x.len(),
            x_hat.len()
        )));
    }
    let z = x - x_hat;
    let norm = z.norm();
    Ok(EstimationError { z, norm })
}

fn check_dim(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::config(format!(
            "{what} has dimension {got}, expected {expected}"
        )));
    }
    Ok(())
}
