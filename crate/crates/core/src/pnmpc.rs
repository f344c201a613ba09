//! Linear prediction of the tank response: free response plus a
//! forward-difference Jacobian of the nonlinear rollout around zero future
//! inputs, recomputed from the current state every scheduling period.

use crate::tes::{TesError, TesModel, TesState};
use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PnmpcError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite Jacobian column for input index {index}")]
    NonFiniteColumn { index: usize },
    #[error(transparent)]
    Tes(#[from] TesError),
}

/// Per-step power references `(q_tes, q_tes_sec)` over the horizon, W.
#[derive(Debug, Clone, PartialEq)]
pub struct InputTrajectory {
    pub steps: Vec<(f64, f64)>,
}

impl InputTrajectory {
    pub fn zeros(ph: usize) -> Self {
        InputTrajectory {
            steps: vec![(0.0, 0.0); ph],
        }
    }

    /// Stacked layout `[q_tes(1), q_tes_sec(1), q_tes(2), ...]`.
    pub fn stacked(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.steps.len());
        for &(a, b) in &self.steps {
            v.push(a);
            v.push(b);
        }
        v
    }

    pub fn from_stacked(u: &[f64]) -> Self {
        assert_eq!(u.len() % 2, 0);
        InputTrajectory {
            steps: u.chunks(2).map(|c| (c[0], c[1])).collect(),
        }
    }
}

/// Predicted output increments and the reconstructed cumulative paths.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputTrajectory {
    /// Charge-ratio increment per step.
    pub d_gamma: Vec<f64>,
    /// Intermediate-fluid temperature increment per step, K.
    pub d_t_int: Vec<f64>,
    /// Cumulative charge ratio after each step.
    pub gamma: Vec<f64>,
    /// Cumulative fluid temperature after each step, °C.
    pub t_int: Vec<f64>,
}

impl OutputTrajectory {
    pub fn from_increments(d_gamma: Vec<f64>, d_t_int: Vec<f64>, gamma0: f64, t0: f64) -> Self {
        let mut gamma = Vec::with_capacity(d_gamma.len());
        let mut t_int = Vec::with_capacity(d_t_int.len());
        let mut g = gamma0;
        let mut t = t0;
        for (&dg, &dt) in d_gamma.iter().zip(&d_t_int) {
            g += dg;
            t += dt;
            gamma.push(g);
            t_int.push(t);
        }
        OutputTrajectory {
            d_gamma,
            d_t_int,
            gamma,
            t_int,
        }
    }

    /// Stacked layout `[d_gamma(1), d_t_int(1), d_gamma(2), ...]`.
    pub fn stacked_increments(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.d_gamma.len());
        for (&dg, &dt) in self.d_gamma.iter().zip(&self.d_t_int) {
            v.push(dg);
            v.push(dt);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.d_gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_gamma.is_empty()
    }
}

/// Free response and input-to-output Jacobian around zero future inputs.
#[derive(Debug, Clone)]
pub struct LinearPrediction {
    pub y_free: OutputTrajectory,
    /// Dense `(2 PH) x (2 PH)` map from stacked inputs to stacked output
    /// increments; lower block triangular in 2x2 blocks.
    pub g: DMatrix<f64>,
    /// State snapshot the prediction was linearized at.
    pub x0: TesState,
    pub gamma0: f64,
    pub ph: usize,
    pub dt: f64,
}

/// Simulate the horizon under the given inputs and report per-step output
/// increments. `t_surr` must cover all `PH` steps.
pub fn rollout(
    model: &TesModel,
    x0: &TesState,
    u: &InputTrajectory,
    t_surr: &[f64],
    dt: f64,
    n_sub: usize,
) -> Result<OutputTrajectory, PnmpcError> {
    let ph = u.steps.len();
    if t_surr.len() != ph {
        return Err(PnmpcError::Dimension(format!(
            "t_surr has {} entries for horizon {ph}",
            t_surr.len()
        )));
    }
    let mut state = x0.clone();
    let mut gamma_prev = model.charge_ratio(&state);
    let mut d_gamma = Vec::with_capacity(ph);
    let mut d_t_int = Vec::with_capacity(ph);
    for (k, &(q_tes, q_tes_sec)) in u.steps.iter().enumerate() {
        let out = model.simulate_step(&state, q_tes, q_tes_sec, t_surr[k], dt, n_sub)?;
        let gamma = model.charge_ratio(&out.state);
        d_gamma.push(gamma - gamma_prev);
        d_t_int.push(out.state.t_int - state.t_int);
        gamma_prev = gamma;
        state = out.state;
    }
    Ok(OutputTrajectory::from_increments(
        d_gamma,
        d_t_int,
        model.charge_ratio(x0),
        x0.t_int,
    ))
}

/// Rollout with all future inputs at zero.
pub fn free_response(
    model: &TesModel,
    x0: &TesState,
    t_surr: &[f64],
    ph: usize,
    dt: f64,
    n_sub: usize,
) -> Result<OutputTrajectory, PnmpcError> {
    rollout(model, x0, &InputTrajectory::zeros(ph), t_surr, dt, n_sub)
}

/// Forward-difference linearization: column `j` of `G` is
/// `(rollout(e_j eps) - rollout(0)) / eps`. Columns are independent rollouts
/// and may run on the rayon pool; results are identical either way.
pub fn jacobian(
    model: &TesModel,
    x0: &TesState,
    t_surr: &[f64],
    ph: usize,
    dt: f64,
    eps: f64,
    n_sub: usize,
    parallel: bool,
) -> Result<LinearPrediction, PnmpcError> {
    if eps <= 0.0 || !eps.is_finite() {
        return Err(PnmpcError::Dimension("eps must be positive".into()));
    }
    let y_free = free_response(model, x0, t_surr, ph, dt, n_sub)?;
    let free_stacked = y_free.stacked_increments();
    let dim = 2 * ph;

    let column = |j: usize| -> Result<Vec<f64>, PnmpcError> {
        let mut u = InputTrajectory::zeros(ph);
        if j % 2 == 0 {
            u.steps[j / 2].0 = eps;
        } else {
            u.steps[j / 2].1 = eps;
        }
        let pert = rollout(model, x0, &u, t_surr, dt, n_sub)?;
        let pert_stacked = pert.stacked_increments();
        let col: Vec<f64> = pert_stacked
            .iter()
            .zip(&free_stacked)
            .map(|(p, f)| (p - f) / eps)
            .collect();
        if col.iter().any(|v| !v.is_finite()) {
            return Err(PnmpcError::NonFiniteColumn { index: j });
        }
        Ok(col)
    };

    let columns: Vec<Result<Vec<f64>, PnmpcError>> = if parallel {
        (0..dim).into_par_iter().map(column).collect()
    } else {
        (0..dim).map(column).collect()
    };

    let mut g = DMatrix::zeros(dim, dim);
    for (j, col) in columns.into_iter().enumerate() {
        let col = col?;
        for (i, v) in col.into_iter().enumerate() {
            g[(i, j)] = v;
        }
    }

    Ok(LinearPrediction {
        gamma0: model.charge_ratio(x0),
        y_free,
        g,
        x0: x0.clone(),
        ph,
        dt,
    })
}

/// Evaluate the linear model: `y = y_free + G u`, with the cumulative paths
/// rebuilt from the linearization point.
pub fn predict(pred: &LinearPrediction, u: &InputTrajectory) -> Result<OutputTrajectory, PnmpcError> {
    if u.steps.len() != pred.ph {
        return Err(PnmpcError::Dimension(format!(
            "input covers {} steps, prediction horizon is {}",
            u.steps.len(),
            pred.ph
        )));
    }
    let stacked_u = u.stacked();
    let free = pred.y_free.stacked_increments();
    let dim = 2 * pred.ph;
    let mut y = free.clone();
    for (i, yi) in y.iter_mut().enumerate().take(dim) {
        let mut acc = 0.0;
        for j in 0..dim {
            acc += pred.g[(i, j)] * stacked_u[j];
        }
        *yi += acc;
    }
    let d_gamma: Vec<f64> = y.iter().step_by(2).copied().collect();
    let d_t_int: Vec<f64> = y.iter().skip(1).step_by(2).copied().collect();
    Ok(OutputTrajectory::from_increments(
        d_gamma,
        d_t_int,
        pred.gamma0,
        pred.x0.t_int,
    ))
}
