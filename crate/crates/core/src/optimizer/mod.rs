//! Alternating optimization of the BS precoder and the surface profile,
//! the exhaustive oracle for small discrete instances, and the static
//! (two-timescale) profile.

mod ao;
mod objective;
mod oracle;
mod precoder;
mod profile;

pub use ao::{alternating_optimize, two_timescale_optimize, EnsembleReport};
pub use oracle::{exhaustive_oracle, OracleResult, ORACLE_BUDGET};
pub use precoder::optimize_precoder;
pub use profile::{optimize_profile, rate_gradient};

/// Profile block algorithm.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfileMethod {
    /// Element-wise lattice search then gradient refinement on discrete
    /// sets, gradient only on continuous ones.
    Auto,
    Gradient,
    /// One element at a time over its lattice (a 16-point phase grid when
    /// phases are continuous).
    ElementWise,
}

impl ProfileMethod {
    pub fn key(self) -> &'static str {
        match self {
            ProfileMethod::Auto => "auto",
            ProfileMethod::Gradient => "gradient",
            ProfileMethod::ElementWise => "element-wise",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        [
            ProfileMethod::Auto,
            ProfileMethod::Gradient,
            ProfileMethod::ElementWise,
        ]
        .into_iter()
        .find(|m| m.key() == key)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub max_outer_iters: usize,
    /// Relative objective improvement that ends the outer loop.
    pub tol: f64,
    pub inner_precoder_iters: usize,
    /// Accepted gradient steps per profile block.
    pub inner_profile_iters: usize,
    /// Initial step, as a fraction of the largest feasible profile norm.
    pub profile_step_init: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    /// BS share of the total power tried for amplifying surfaces.
    pub power_split_grid: Vec<f64>,
    pub restarts: usize,
    pub profile_method: ProfileMethod,
    /// Grid size for the time-switching fraction.
    pub ts_lambda_grid: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_outer_iters: 100,
            tol: 1e-4,
            inner_precoder_iters: 30,
            inner_profile_iters: 15,
            profile_step_init: 0.1,
            backtrack_factor: 0.5,
            max_backtracks: 30,
            power_split_grid: vec![0.5, 0.6, 0.7, 0.8, 0.9],
            restarts: 3,
            profile_method: ProfileMethod::Auto,
            ts_lambda_grid: 101,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> crate::Result<()> {
        let bad = |key: &str, msg: &str| {
            Err(crate::Error::Config {
                key: format!("options.{key}"),
                msg: msg.to_string(),
            })
        };
        if self.max_outer_iters == 0 {
            return bad("max_outer_iters", "must be positive");
        }
        if !(self.tol > 0.0) {
            return bad("tol", "must be positive");
        }
        if self.inner_precoder_iters == 0 {
            return bad("inner_precoder_iters", "must be positive");
        }
        if self.inner_profile_iters == 0 {
            return bad("inner_profile_iters", "must be positive");
        }
        if !(self.profile_step_init > 0.0 && self.profile_step_init.is_finite()) {
            return bad("profile_step_init", "must be positive");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack_factor", "must lie in (0, 1)");
        }
        if self.max_backtracks == 0 {
            return bad("max_backtracks", "must be positive");
        }
        if self.power_split_grid.is_empty()
            || self.power_split_grid.iter().any(|f| !(*f > 0.0 && *f < 1.0))
        {
            return bad("power_split_grid", "fractions must lie in (0, 1)");
        }
        if self.restarts == 0 {
            return bad("restarts", "must be positive");
        }
        if self.ts_lambda_grid < 2 {
            return bad("ts_lambda_grid", "needs at least 2 points");
        }
        Ok(())
    }
}
