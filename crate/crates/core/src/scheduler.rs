//! Client-side deployment scheduler.
//!
//! Each window of `w` paired train/validation losses is reduced to `sigma_w`,
//! the standard deviation of their absolute differences, and compared with the
//! last stable value `sigma_s`:
//!
//! 1. `sigma_w > sigma_s * alpha` marks the model unstable;
//! 2. else `sigma_w < sigma_s * (1 - beta)` lowers `sigma_s` to `sigma_w`;
//! 3. else `sigma_w < sigma_s * (1 + beta)` on an unstable model clears the
//!    flag and deploys;
//! 4. otherwise nothing changes.
//!
//! All comparisons are strict, so a value equal to a threshold falls through.

use crate::error::{FlareError, Result};
use crate::stats::LossWindow;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityState {
    sigma_s: f64,
    unstable: bool,
    alpha: f64,
    beta: f64,
    window_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchedulerAction {
    ContinueTraining,
    DeployModel,
}

/// Which rule of the chain fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    MarkUnstable,
    LowerBaseline,
    Stabilize,
    NoChange,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulerDecision {
    pub action: SchedulerAction,
    pub branch: Branch,
    pub sigma_w: f64,
}

/// Checks `alpha >= 0` and `0 <= beta <= alpha`.
pub fn validate_coefficients(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(FlareError::config(format!(
            "alpha = {alpha} violates the constraint alpha >= 0"
        )));
    }
    if !(beta.is_finite() && beta >= 0.0 && beta <= alpha) {
        return Err(FlareError::config(format!(
            "beta = {beta} violates the constraint 0 <= beta <= alpha (alpha = {alpha})"
        )));
    }
    Ok(())
}

pub fn initial_state(alpha: f64, beta: f64, window_len: usize) -> Result<StabilityState> {
    StabilityState::new(alpha, beta, window_len)
}

impl StabilityState {
    pub fn new(alpha: f64, beta: f64, window_len: usize) -> Result<Self> {
        validate_coefficients(alpha, beta)?;
        if window_len < 2 {
            return Err(FlareError::config(format!(
                "window length w = {window_len} must be at least 2"
            )));
        }
        Ok(Self {
            sigma_s: 0.0,
            unstable: false,
            alpha,
            beta,
            window_len,
        })
    }

    pub fn sigma_s(&self) -> f64 {
        self.sigma_s
    }

    pub fn is_unstable(&self) -> bool {
        self.unstable
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    /// Replaces the stable baseline and clears the unstable flag.
    ///
    /// The chain never raises `sigma_s` on its own, so starting from zero it
    /// can only ever mark the model unstable. The simulator calls this once,
    /// at the forced initial deployment, with the latest window's `sigma_w`.
    pub fn rebase(&mut self, sigma_s: f64) {
        self.sigma_s = sigma_s.max(0.0);
        self.unstable = false;
    }

    /// Runs the branch chain on an already computed `sigma_w`.
    pub fn observe_sigma(&mut self, sigma_w: f64) -> SchedulerDecision {
        let (action, branch) = if sigma_w > self.sigma_s * self.alpha {
            self.unstable = true;
            (SchedulerAction::ContinueTraining, Branch::MarkUnstable)
        } else if sigma_w < self.sigma_s * (1.0 - self.beta) {
            self.sigma_s = sigma_w;
            (SchedulerAction::ContinueTraining, Branch::LowerBaseline)
        } else if sigma_w < self.sigma_s * (1.0 + self.beta) && self.unstable {
            self.unstable = false;
            (SchedulerAction::DeployModel, Branch::Stabilize)
        } else {
            (SchedulerAction::ContinueTraining, Branch::NoChange)
        };
        SchedulerDecision {
            action,
            branch,
            sigma_w,
        }
    }

    pub fn observe_window(&mut self, train_losses: &[f64], val_losses: &[f64]) -> Result<SchedulerDecision> {
        if train_losses.len() != self.window_len || val_losses.len() != self.window_len {
            return Err(FlareError::contract(format!(
                "expected {} losses per window, got {} train / {} validation",
                self.window_len,
                train_losses.len(),
                val_losses.len()
            )));
        }
        let window = LossWindow::new(train_losses.to_vec(), val_losses.to_vec())?;
        Ok(self.observe_sigma(window.sigma()))
    }
}
