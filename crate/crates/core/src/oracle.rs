//! Independent references for the cost-free limit and for the
//! no-transaction equation.

use libm::erfc;

use crate::error::{Error, Result};
use crate::localization::DomainSpec;
use crate::model::{ModelParams, Scenario};
use crate::solver::{solve_scenario, GridSpec, SolverOptions};

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Inputs of the Black-Scholes call formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsInputs {
    pub spot: f64,
    pub strike: f64,
    pub rate: f64,
    pub sigma: f64,
    /// Time to maturity in years.
    pub tau: f64,
}

impl BsInputs {
    pub fn new(spot: f64, strike: f64, rate: f64, sigma: f64, tau: f64) -> Self {
        Self {
            spot,
            strike,
            rate,
            sigma,
            tau,
        }
    }

    /// Call on `spot` at time `t` under the market of `params`.
    pub fn from_model(params: &ModelParams, spot: f64, t: f64) -> Self {
        Self::new(
            spot,
            params.strike,
            params.r,
            params.sigma,
            params.maturity - t,
        )
    }

    fn validate(&self) -> Result<()> {
        if !(self.spot > 0.0 && self.spot.is_finite()) {
            return Err(Error::param(
                "spot",
                format!("must be positive, got {}", self.spot),
            ));
        }
        if !(self.strike > 0.0 && self.strike.is_finite()) {
            return Err(Error::param(
                "strike",
                format!("must be positive, got {}", self.strike),
            ));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param(
                "sigma",
                format!("must be positive, got {}", self.sigma),
            ));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::param(
                "tau",
                format!("must be non-negative, got {}", self.tau),
            ));
        }
        if !self.rate.is_finite() {
            return Err(Error::param("rate", "must be finite"));
        }
        Ok(())
    }

    fn d1_d2(&self) -> (f64, f64) {
        let vol = self.sigma * self.tau.sqrt();
        let d1 = ((self.spot / self.strike).ln()
            + (self.rate + 0.5 * self.sigma * self.sigma) * self.tau)
            / vol;
        (d1, d1 - vol)
    }
}

pub fn black_scholes_call(inputs: &BsInputs) -> Result<f64> {
    inputs.validate()?;
    if inputs.tau == 0.0 {
        return Ok((inputs.spot - inputs.strike).max(0.0));
    }
    let (d1, d2) = inputs.d1_d2();
    let df = (-inputs.rate * inputs.tau).exp();
    Ok(inputs.spot * norm_cdf(d1) - inputs.strike * df * norm_cdf(d2))
}

/// Black-Scholes delta `N(d1)`.
pub fn black_scholes_delta(inputs: &BsInputs) -> Result<f64> {
    inputs.validate()?;
    if inputs.tau == 0.0 {
        return Ok(if inputs.spot >= inputs.strike {
            1.0
        } else {
            0.0
        });
    }
    Ok(norm_cdf(inputs.d1_d2().0))
}

fn require_no_costs(params: &ModelParams) -> Result<()> {
    if params.lambda != 0.0 || params.mu != 0.0 {
        return Err(Error::param(
            "lambda/mu",
            "cost-free references need lambda = mu = 0",
        ));
    }
    Ok(())
}

/// Exact `H(t, 0, xhat)` without transaction costs.
///
/// Without frictions the investor's value depends on total wealth only, the
/// optimal stock investment is the Merton amount, and the written call is
/// priced by replication, so
/// `H_1 = -(alpha - r)^2 (T - t) / (2 sigma^2)` and
/// `H_w = H_1 + gamma * BS(t, S) / delta(T, t)`.
pub fn no_cost_h(params: &ModelParams, scenario: Scenario, t: f64, xhat: f64) -> Result<f64> {
    require_no_costs(params)?;
    let excess = params.alpha - params.r;
    let base = -excess * excess * (params.maturity - t) / (2.0 * params.sigma * params.sigma);
    match scenario {
        Scenario::One => Ok(base),
        Scenario::Writer => {
            let bs = black_scholes_call(&BsInputs::from_model(params, xhat.exp(), t))?;
            Ok(base + params.gamma * bs / params.discount(t)?)
        }
    }
}

/// Exact optimal holding (in shares) without transaction costs: the Merton
/// position, plus the replicating delta for the writer.
pub fn no_cost_holding(params: &ModelParams, scenario: Scenario, t: f64, xhat: f64) -> Result<f64> {
    require_no_costs(params)?;
    let s = xhat.exp();
    let merton = (params.alpha - params.r) * params.discount(t)?
        / (params.gamma * params.sigma * params.sigma * s);
    match scenario {
        Scenario::One => Ok(merton),
        Scenario::Writer => Ok(merton + black_scholes_delta(&BsInputs::from_model(params, s, t))?),
    }
}

/// Buy frontier at `t = 0` on the mesh of a fine reference run, as
/// `(xhat, y)` pairs.
pub fn no_cost_frontier_reference(
    params: &ModelParams,
    scenario: Scenario,
    reference_grid: &GridSpec,
) -> Result<Vec<(f64, f64)>> {
    require_no_costs(params)?;
    let sol = solve_scenario(scenario, params, reference_grid, &SolverOptions::default())?;
    let f = sol
        .frontier(0)
        .ok_or_else(|| Error::Config("reference run kept no frontier at t = 0".into()))?;
    Ok((0..=reference_grid.n_xhat)
        .map(|k| (reference_grid.xhat(k), f.buy_y(k, reference_grid)))
        .collect())
}

/// Exact solution of the no-transaction equation
/// `u_tau = a u_x + b u_xx + b u_x^2` (`a = alpha - sigma^2/2`,
/// `b = sigma^2/2`) through the logarithmic substitution: `exp(u)` solves
/// the linear equation, so `u` is the log of a Gaussian average of the
/// terminal data.
pub fn log_heat_kernel(
    terminal: impl Fn(f64) -> f64,
    xhat: f64,
    tau: f64,
    alpha: f64,
    sigma: f64,
) -> f64 {
    if tau <= 0.0 {
        return terminal(xhat);
    }
    let drift = (alpha - 0.5 * sigma * sigma) * tau;
    let spread = sigma * tau.sqrt();
    let nodes = 4000;
    let z_max = 12.0;
    let h = 2.0 * z_max / nodes as f64;
    let samples: Vec<(f64, f64)> = (0..=nodes)
        .map(|i| {
            let z = -z_max + i as f64 * h;
            let w = if i == 0 || i == nodes { 0.5 } else { 1.0 };
            (terminal(xhat + drift + spread * z) - 0.5 * z * z, w)
        })
        .collect();
    let top = samples
        .iter()
        .map(|s| s.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = samples.iter().map(|(v, w)| w * (v - top).exp()).sum();
    top + (sum * h / (2.0 * std::f64::consts::PI).sqrt()).ln()
}

/// Crank-Nicolson finite differences for the no-transaction equation on the
/// computational domain itself (no periodic extension).
///
/// `terminal` is sampled on the `n_xhat + 1` mesh nodes of `domain`. The
/// quadratic term is evaluated at the time midpoint through fixed-point
/// iterations. Boundary values follow the terminal profile advected by the
/// drift, exact for locally linear data. Second order in space and time on
/// smooth data.
pub fn fd_reference(
    terminal: &[f64],
    params: &ModelParams,
    domain: &DomainSpec,
    n_t: usize,
    n_xhat: usize,
) -> Result<Vec<f64>> {
    if terminal.len() != n_xhat + 1 {
        return Err(Error::LengthMismatch {
            expected: n_xhat + 1,
            actual: terminal.len(),
        });
    }
    if n_t == 0 || n_xhat < 2 {
        return Err(Error::param("n_t/n_xhat", "need n_t >= 1 and n_xhat >= 2"));
    }
    domain.validate()?;
    let n = n_xhat;
    let h = domain.width() / n as f64;
    let dt = params.maturity / n_t as f64;
    let a = params.alpha - 0.5 * params.sigma * params.sigma;
    let b = 0.5 * params.sigma * params.sigma;

    let slope_left = (terminal[1] - terminal[0]) / h;
    let slope_right = (terminal[n] - terminal[n - 1]) / h;
    let profile = |x: f64| -> f64 {
        let pos = (x - domain.xhat_min) / h;
        if pos <= 0.0 {
            terminal[0] + slope_left * pos * h
        } else if pos >= n as f64 {
            terminal[n] + slope_right * (pos - n as f64) * h
        } else {
            let k = (pos.floor() as usize).min(n - 1);
            let w = pos - k as f64;
            (1.0 - w) * terminal[k] + w * terminal[k + 1]
        }
    };
    let boundary = |tau: f64| -> (f64, f64) {
        (
            profile(domain.xhat_min + a * tau) + b * slope_left * slope_left * tau,
            profile(domain.xhat_max + a * tau) + b * slope_right * slope_right * tau,
        )
    };

    let lo = b / (h * h) - a / (2.0 * h);
    let di = -2.0 * b / (h * h);
    let up = b / (h * h) + a / (2.0 * h);
    let m = n - 1;
    let sub = vec![-0.5 * dt * lo; m];
    let diag = vec![1.0 - 0.5 * dt * di; m];
    let sup = vec![-0.5 * dt * up; m];

    let mut u = terminal.to_vec();
    let mut next = u.clone();
    let mut rhs = vec![0.0; m];
    for step in 0..n_t {
        let tau_next = (step + 1) as f64 * dt;
        let (left, right) = boundary(tau_next);
        next.copy_from_slice(&u);
        next[0] = left;
        next[n] = right;
        for _ in 0..4 {
            for i in 1..n {
                let lu = lo * u[i - 1] + di * u[i] + up * u[i + 1];
                let grad = 0.5 * ((u[i + 1] - u[i - 1]) + (next[i + 1] - next[i - 1])) / (2.0 * h);
                rhs[i - 1] = u[i] + 0.5 * dt * lu + dt * b * grad * grad;
            }
            rhs[0] += 0.5 * dt * lo * left;
            rhs[m - 1] += 0.5 * dt * up * right;
            let sol = solve_tridiagonal(&sub, &diag, &sup, &rhs);
            next[1..n].copy_from_slice(&sol);
        }
        std::mem::swap(&mut u, &mut next);
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                level: n_t - step - 1,
                row: 0,
            });
        }
    }
    Ok(u)
}

/// Thomas algorithm; `sub[0]` and `sup[n-1]` are ignored.
fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / denom;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}
