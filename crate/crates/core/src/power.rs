//! Downlink power allocation at the edge server.
//!
//! With `x_i = ln(1 + P_i κ_i)` the downlink delay of offloader `i` is
//! `s / x_i` where `s = B |V_o| ln 2 / W_s`. The risk-sensitive server
//! minimizes `Σ exp(θ / x_i)` with `θ = ρ s`; the average-based server
//! minimizes `Σ s / x_i`. Both are convex in `P_i`, so the optimum is the
//! KKT point where every VUE's marginal decrease equals a common multiplier
//! `ν`, with `ν` chosen to spend the budget exactly.
//!
//! The marginal decrease is strictly decreasing in `P_i`, which gives two
//! nested monotone root-finding problems: for a given `ν` each `P_i` is
//! recovered independently, and `Σ P_i(ν)` is monotone in `ν`. Both levels
//! run bracketed Newton iterations in the log domain (`ln ν` and `x_i`),
//! falling back to bisection whenever a Newton step leaves the bracket.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::PhysicalParams;

/// Arguments of `exp` above this are clamped when evaluating the objective.
pub const EXP_CLAMP: f64 = 700.0;

/// Allocations below this are reported as boundary-hugging.
pub const BOUNDARY_WARN_W: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ServerObjective {
    /// Minimize `Σ exp(ρ T_i^DL)`.
    RiskSensitive { rho: f64 },
    /// Minimize `Σ T_i^DL`.
    Average,
}

/// One power allocation instance over the current offloaders.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem {
    objective: ServerObjective,
    delay_scale: f64,
    kappas: Vec<f64>,
    budget_w: f64,
}

impl AllocationProblem {
    /// `delay_scale` is `B |V_o| ln 2 / W_s`, `kappas[i]` is
    /// `h_si |V_o| / (W_s N0)`.
    pub fn new(objective: ServerObjective, delay_scale: f64, kappas: Vec<f64>, budget_w: f64) -> Result<Self> {
        if kappas.is_empty() {
            return Err(Error::EmptyProblem);
        }
        if let ServerObjective::RiskSensitive { rho } = objective {
            if !(rho > 0.0 && rho.is_finite()) {
                return Err(Error::domain("rho", rho));
            }
        }
        if !(delay_scale > 0.0 && delay_scale.is_finite()) {
            return Err(Error::domain("delay scale", delay_scale));
        }
        if !(budget_w > 0.0 && budget_w.is_finite()) {
            return Err(Error::domain("power budget", budget_w));
        }
        if let Some(&k) = kappas.iter().find(|k| !(**k > 0.0 && k.is_finite())) {
            return Err(Error::domain("kappa", k));
        }
        Ok(Self {
            objective,
            delay_scale,
            kappas,
            budget_w,
        })
    }

    /// Builds the problem from the offloaders' server-link gains.
    pub fn from_gains(params: &PhysicalParams, objective: ServerObjective, server_gains: &[f64]) -> Result<Self> {
        if server_gains.is_empty() {
            return Err(Error::EmptyProblem);
        }
        let n = server_gains.len() as f64;
        let delay_scale = params.synthesized_bits * n * std::f64::consts::LN_2 / params.server_bandwidth_hz;
        let kappas = server_gains
            .iter()
            .map(|h| h * n / (params.server_bandwidth_hz * params.noise_psd_w_per_hz))
            .collect();
        Self::new(objective, delay_scale, kappas, params.server_power_budget_w)
    }

    pub fn objective(&self) -> ServerObjective {
        self.objective
    }

    pub fn kappas(&self) -> &[f64] {
        &self.kappas
    }

    pub fn budget_w(&self) -> f64 {
        self.budget_w
    }

    pub fn delay_scale(&self) -> f64 {
        self.delay_scale
    }

    pub fn len(&self) -> usize {
        self.kappas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappas.is_empty()
    }

    /// `θ = ρ B |V_o| ln 2 / W_s`, only for the risk-sensitive objective.
    pub fn theta(&self) -> Option<f64> {
        match self.objective {
            ServerObjective::RiskSensitive { rho } => Some(rho * self.delay_scale),
            ServerObjective::Average => None,
        }
    }

    /// Downlink delay of VUE `i` at power `p`.
    pub fn downlink_delay(&self, i: usize, p: f64) -> f64 {
        self.delay_scale / (p * self.kappas[i]).ln_1p()
    }

    /// VUE `i`'s contribution to the objective at power `p`.
    pub fn term(&self, i: usize, p: f64) -> f64 {
        let x = (p * self.kappas[i]).ln_1p();
        match self.theta() {
            Some(theta) => clamped_exp(theta / x),
            None => self.delay_scale / x,
        }
    }

    // ln of the marginal objective decrease, as a function of x = ln(1 + Pκ):
    // ln(a κ) + b / x - x - 2 ln x.
    fn log_marginal(&self) -> LogMarginal {
        match self.theta() {
            Some(theta) => LogMarginal {
                coef: theta,
                exponent: theta,
            },
            None => LogMarginal {
                coef: self.delay_scale,
                exponent: 0.0,
            },
        }
    }
}

#[derive(Clone, Copy)]
struct LogMarginal {
    coef: f64,
    exponent: f64,
}

impl LogMarginal {
    fn at(&self, log_coef_kappa: f64, x: f64) -> f64 {
        log_coef_kappa + self.exponent / x - x - 2.0 * x.ln()
    }

    fn slope(&self, x: f64) -> f64 {
        -self.exponent / (x * x) - 1.0 - 2.0 / x
    }
}

fn clamped_exp(arg: f64) -> f64 {
    if arg > EXP_CLAMP {
        log::warn!("exponent {arg} clamped to {EXP_CLAMP}");
        EXP_CLAMP.exp()
    } else {
        arg.exp()
    }
}

/// Marginal decrease of `exp(θ / ln(1 + Pκ))` in `P`:
/// `θ κ exp(θ / ln(1+Pκ)) / ((1+Pκ) ln²(1+Pκ))`.
pub fn stationarity_lhs(p: f64, kappa: f64, theta: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::domain("power", p));
    }
    let x = (p * kappa).ln_1p();
    Ok(theta * kappa * clamped_exp(theta / x) / ((1.0 + p * kappa) * x * x))
}

/// Marginal decrease of `s / ln(1 + Pκ)` in `P`.
pub fn average_stationarity_lhs(p: f64, kappa: f64, delay_scale: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::domain("power", p));
    }
    let x = (p * kappa).ln_1p();
    Ok(delay_scale * kappa / ((1.0 + p * kappa) * x * x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Relative tolerance on `|Σ P_i - P_max| / P_max`.
    pub budget_tol: f64,
    /// Relative step tolerance on each `x_i`.
    pub inner_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            budget_tol: 1e-12,
            inner_tol: 1e-14,
            max_outer: 200,
            max_inner: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub powers_w: Vec<f64>,
    /// Lagrange multiplier of the budget constraint.
    pub multiplier: f64,
    /// Largest `|LHS_i(P_i) / ν - 1|`.
    pub kkt_residual: f64,
    /// `|Σ P_i - P_max| / P_max`.
    pub budget_residual: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// Some `P_i` fell below [`BOUNDARY_WARN_W`].
    pub boundary_warning: bool,
}

pub fn solve(problem: &AllocationProblem) -> Result<PowerAllocation> {
    solve_with(problem, &SolverSettings::default())
}

pub fn solve_with(problem: &AllocationProblem, settings: &SolverSettings) -> Result<PowerAllocation> {
    let marginal = problem.log_marginal();
    let log_ck: Vec<f64> = problem.kappas.iter().map(|k| (marginal.coef * k).ln()).collect();
    let budget = problem.budget_w;
    let n = problem.len();

    if n == 1 {
        let x = (budget * problem.kappas[0]).ln_1p();
        return Ok(PowerAllocation {
            powers_w: vec![budget],
            multiplier: marginal.at(log_ck[0], x).exp(),
            kkt_residual: 0.0,
            budget_residual: 0.0,
            outer_iterations: 0,
            inner_iterations: 0,
            boundary_warning: false,
        });
    }

    let mut inner_total = 0usize;
    let mut xs: Vec<f64> = problem.kappas.iter().map(|k| (budget / n as f64 * k).ln_1p()).collect();

    // Evaluates Σ P_i(λ) - P_max and its derivative in λ, updating xs.
    let excess = |lambda: f64, xs: &mut [f64], inner_total: &mut usize| -> Result<(f64, f64)> {
        let mut sum = 0.0;
        let mut slope = 0.0;
        for i in 0..n {
            let (x, iters) = invert_marginal(marginal, log_ck[i], lambda, xs[i], settings)?;
            *inner_total += iters;
            xs[i] = x;
            let dp_dx = x.exp() / problem.kappas[i];
            sum += x.exp_m1() / problem.kappas[i];
            slope += dp_dx / marginal.slope(x);
        }
        Ok((sum - budget, slope))
    };

    // Bracket from the per-VUE marginals at P_max and at P_max / (1e6 n).
    let at_power = |i: usize, p: f64| marginal.at(log_ck[i], (p * problem.kappas[i]).ln_1p());
    let mut lo = (0..n).map(|i| at_power(i, budget)).fold(f64::INFINITY, f64::min);
    let mut hi = (0..n)
        .map(|i| at_power(i, budget / (1e6 * n as f64)))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut widen = 1.0;
    loop {
        let (f_lo, _) = excess(lo, &mut xs, &mut inner_total)?;
        if f_lo >= 0.0 {
            break;
        }
        lo -= widen;
        widen *= 2.0;
        if widen > 1e6 {
            return Err(Error::SolverFailure {
                residual: f_lo.abs() / budget,
            });
        }
    }
    widen = 1.0;
    loop {
        let (f_hi, _) = excess(hi, &mut xs, &mut inner_total)?;
        if f_hi <= 0.0 {
            break;
        }
        hi += widen;
        widen *= 2.0;
        if widen > 1e6 {
            return Err(Error::SolverFailure {
                residual: f_hi.abs() / budget,
            });
        }
    }

    let mut lambda = 0.5 * (lo + hi);
    let mut best = f64::INFINITY;
    let mut converged = false;
    let mut outer = 0;
    while outer < settings.max_outer {
        outer += 1;
        let (f, slope) = excess(lambda, &mut xs, &mut inner_total)?;
        best = best.min(f.abs() / budget);
        if f.abs() <= settings.budget_tol * budget {
            converged = true;
            break;
        }
        if f > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        let newton = lambda - f / slope;
        let next = if newton > lo && newton < hi && slope < 0.0 {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == lambda || hi - lo <= f64::EPSILON * lambda.abs().max(1.0) {
            // Bracket collapsed to machine precision.
            converged = best <= settings.budget_tol.max(1e-9);
            break;
        }
        lambda = next;
    }
    if !converged {
        return Err(Error::SolverFailure { residual: best });
    }

    let powers_w: Vec<f64> = xs.iter().zip(&problem.kappas).map(|(x, k)| x.exp_m1() / k).collect();
    let kkt_residual = powers_w
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let x = (p * problem.kappas[i]).ln_1p();
            (marginal.at(log_ck[i], x) - lambda).exp_m1().abs()
        })
        .fold(0.0, f64::max);
    let total: f64 = powers_w.iter().sum();
    let boundary_warning = powers_w.iter().any(|&p| p < BOUNDARY_WARN_W);
    if boundary_warning {
        log::warn!(
            "power allocation hugs the boundary: min power {:e} W",
            powers_w.iter().cloned().fold(f64::INFINITY, f64::min)
        );
    }
    Ok(PowerAllocation {
        powers_w,
        multiplier: lambda.exp(),
        kkt_residual,
        budget_residual: (total - budget).abs() / budget,
        outer_iterations: outer,
        inner_iterations: inner_total,
        boundary_warning,
    })
}

// Solves ln(aκ) + b/x - x - 2 ln x = λ for x > 0, starting from `guess`.
fn invert_marginal(
    marginal: LogMarginal,
    log_ck: f64,
    lambda: f64,
    guess: f64,
    settings: &SolverSettings,
) -> Result<(f64, usize)> {
    let g = |x: f64| marginal.at(log_ck, x) - lambda;
    let start = if guess.is_finite() && guess > 0.0 { guess } else { 1.0 };
    let (mut lo, mut hi) = (start, start);
    let mut iters = 0;
    while g(lo) < 0.0 {
        lo *= 0.5;
        iters += 1;
        if iters > settings.max_inner || lo < f64::MIN_POSITIVE {
            return Err(Error::SolverFailure { residual: g(lo).abs() });
        }
    }
    while g(hi) > 0.0 {
        hi *= 2.0;
        iters += 1;
        if iters > settings.max_inner || !hi.is_finite() {
            return Err(Error::SolverFailure { residual: g(hi).abs() });
        }
    }
    let mut x = start.clamp(lo, hi);
    for _ in 0..settings.max_inner {
        iters += 1;
        let f = g(x);
        if f == 0.0 {
            return Ok((x, iters));
        }
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - f / marginal.slope(x);
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= settings.inner_tol * x || hi - lo <= settings.inner_tol * lo {
            return Ok((next, iters));
        }
        x = next;
    }
    Err(Error::SolverFailure { residual: g(x).abs() })
}

/// Objective value of an allocation.
pub fn objective_value(problem: &AllocationProblem, powers_w: &[f64]) -> f64 {
    powers_w.iter().enumerate().map(|(i, &p)| problem.term(i, p)).sum()
}
