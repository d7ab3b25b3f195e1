//! Market, cost and utility constants together with the terminal conditions
//! of the log-transformed value functions.
//!
//! With exponential utility the value function of an investor holding `X` in
//! cash and `y` shares factors as `V = 1 - exp(-gamma X / delta) Q(t, y, S)`.
//! The solver works with `H = log Q` in log-price `xhat = log S`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constant market, transaction-cost and risk-aversion parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Risk-free rate.
    pub r: f64,
    /// Expected return of the stock.
    pub alpha: f64,
    /// Volatility.
    pub sigma: f64,
    /// Absolute risk aversion of the exponential utility.
    pub gamma: f64,
    /// Proportional cost on purchases.
    pub lambda: f64,
    /// Proportional cost on sales.
    pub mu: f64,
    /// Strike of the written call.
    pub strike: f64,
    /// Maturity in years.
    pub maturity: f64,
}

impl Default for ModelParams {
    /// The reference configuration used by the convergence experiments:
    /// ATM strike `e^2`, half a year to maturity, no transaction costs.
    fn default() -> Self {
        Self {
            r: 0.085,
            alpha: 0.1,
            sigma: 0.1,
            gamma: 1.0,
            lambda: 0.0,
            mu: 0.0,
            strike: 2.0f64.exp(),
            maturity: 0.5,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("r", self.r),
            ("alpha", self.alpha),
            ("sigma", self.sigma),
            ("gamma", self.gamma),
            ("lambda", self.lambda),
            ("mu", self.mu),
            ("strike", self.strike),
            ("maturity", self.maturity),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        if self.sigma <= 0.0 {
            return Err(Error::param("sigma", "must be positive"));
        }
        if self.gamma <= 0.0 {
            return Err(Error::param("gamma", "must be positive"));
        }
        if self.lambda < 0.0 {
            return Err(Error::param("lambda", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.mu) {
            return Err(Error::param("mu", "must lie in [0, 1)"));
        }
        if self.strike <= 0.0 {
            return Err(Error::param("strike", "must be positive"));
        }
        if self.maturity <= 0.0 {
            return Err(Error::param("maturity", "must be positive"));
        }
        Ok(())
    }

    pub fn with_costs(mut self, lambda: f64, mu: f64) -> Self {
        self.lambda = lambda;
        self.mu = mu;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn log_strike(&self) -> f64 {
        self.strike.ln()
    }

    /// Cash obtained by closing a position of `y` shares at price `s`.
    pub fn liquidated_cash(&self, y: f64, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::param(
                "S",
                format!("price must be positive, got {s}"),
            ));
        }
        Ok(self.liquidate(y, s))
    }

    #[inline]
    pub(crate) fn liquidate(&self, y: f64, s: f64) -> f64 {
        if y >= 0.0 {
            (1.0 - self.mu) * s * y
        } else {
            (1.0 + self.lambda) * s * y
        }
    }

    /// Discount factor `exp(-r (T - t))` from maturity back to `t`.
    pub fn discount(&self, t: f64) -> Result<f64> {
        // Accept a few ulps of slack so mesh times `m * T / N` at m = N pass.
        let slack = 8.0 * f64::EPSILON * self.maturity.max(1.0);
        if !(t >= -slack && t <= self.maturity + slack) {
            return Err(Error::OutOfRange {
                value: t,
                lo: 0.0,
                hi: self.maturity,
            });
        }
        Ok(self.discount_unchecked(t))
    }

    #[inline]
    pub(crate) fn discount_unchecked(&self, t: f64) -> f64 {
        (-self.r * (self.maturity - t).max(0.0)).exp()
    }

    /// Exponential utility `1 - exp(-gamma w)`.
    pub fn utility(&self, w: f64) -> f64 {
        -(-self.gamma * w).exp_m1()
    }

    /// Terminal value of `H = log Q` for a position of `y` shares and no cash.
    pub fn terminal_h(&self, scenario: Scenario, y: f64, xhat: f64) -> f64 {
        let s = xhat.exp();
        let wealth = match scenario {
            Scenario::One => self.liquidate(y, s),
            Scenario::Writer => {
                if s < self.strike {
                    self.liquidate(y, s)
                } else {
                    self.liquidate(y - 1.0, s) + self.strike
                }
            }
        };
        -self.gamma * wealth
    }
}

/// Which optimisation problem is being solved: plain investment, or
/// investment after having written one call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    One,
    Writer,
}

impl Scenario {
    pub const BOTH: [Scenario; 2] = [Scenario::One, Scenario::Writer];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::One => "one",
            Scenario::Writer => "writer",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn costly() -> ModelParams {
        ModelParams::default().with_costs(0.002, 0.002)
    }

    #[test]
    fn liquidation_formulas() {
        let p = costly();
        assert_eq!(p.liquidated_cash(0.0, 100.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            p.liquidated_cash(1.0, 100.0).unwrap(),
            99.8,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            p.liquidated_cash(-1.0, 100.0).unwrap(),
            -100.2,
            epsilon = 1e-12
        );
        assert!(p.liquidated_cash(1.0, 0.0).is_err());
        assert!(p.liquidated_cash(1.0, -3.0).is_err());
    }

    #[test]
    fn liquidation_continuous_at_zero_and_homogeneous() {
        let p = costly();
        let eps = 1e-12;
        assert!(p.liquidate(eps, 50.0).abs() < 1e-9);
        assert!(p.liquidate(-eps, 50.0).abs() < 1e-9);
        for &y in &[-2.0, -0.5, 0.3, 1.7] {
            let a = p.liquidate(y, 10.0);
            let b = p.liquidate(y, 30.0);
            assert_abs_diff_eq!(3.0 * a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn discount_values() {
        let p = ModelParams::default();
        assert_eq!(p.discount(p.maturity).unwrap(), 1.0);
        assert_abs_diff_eq!(p.discount(0.0).unwrap(), 0.958_390_5, epsilon = 1e-6);
        assert_abs_diff_eq!(
            p.discount(0.0).unwrap(),
            (-0.0425f64).exp(),
            epsilon = 1e-15
        );
        let zero_rate = ModelParams { r: 0.0, ..p };
        assert_eq!(zero_rate.discount(0.13).unwrap(), 1.0);
        assert!(p.discount(-0.1).is_err());
        assert!(p.discount(0.6).is_err());
    }

    #[test]
    fn terminal_values() {
        let p = costly();
        let k = p.strike;
        assert_eq!(p.terminal_h(Scenario::One, 0.0, 1.3), 0.0);
        assert_eq!(p.terminal_h(Scenario::Writer, 0.0, k.ln() - 0.5), 0.0);
        // c(0, S) + K = K
        let x_itm = k.ln() + 0.4;
        assert_abs_diff_eq!(
            p.terminal_h(Scenario::Writer, 1.0, x_itm),
            -k,
            epsilon = 1e-12
        );
        // c(-1, S) = -(1 + lambda) S
        let s = x_itm.exp();
        assert_abs_diff_eq!(
            p.terminal_h(Scenario::Writer, 0.0, x_itm),
            1.002 * s - k,
            epsilon = 1e-12
        );
        // scenario one is -gamma times the liquidated value
        assert_abs_diff_eq!(
            p.terminal_h(Scenario::One, 1.5, 0.7),
            -p.gamma * 1.5 * 0.998 * 0.7f64.exp(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn terminal_price_is_call_payoff_without_costs() {
        let p = ModelParams::default();
        for i in 0..40 {
            let x = 1.0 + i as f64 * 0.05;
            let payoff = (x.exp() - p.strike).max(0.0);
            let diff = p.terminal_h(Scenario::Writer, 0.0, x) - p.terminal_h(Scenario::One, 0.0, x);
            assert_abs_diff_eq!(diff / p.gamma, payoff, epsilon = 1e-12);
        }
    }

    #[test]
    fn utility_shape() {
        let p = ModelParams::default();
        assert_eq!(p.utility(0.0), 0.0);
        assert_abs_diff_eq!(p.utility(1.0), 1.0 - (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(p.utility(1.0), 0.632_121, epsilon = 1e-6);
        assert!(p.utility(1e3) <= 1.0 && p.utility(1e3) > 0.999_999);
        // strictly increasing, concave
        let ws: Vec<f64> = (-20..20).map(|i| i as f64 * 0.25).collect();
        for w in ws.windows(3) {
            let (a, b, c) = (p.utility(w[0]), p.utility(w[1]), p.utility(w[2]));
            assert!(a < b && b < c);
            assert!(b - a > c - b);
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(ModelParams::default().validate().is_ok());
        let bad = [
            ModelParams {
                sigma: 0.0,
                ..Default::default()
            },
            ModelParams {
                gamma: -1.0,
                ..Default::default()
            },
            ModelParams {
                lambda: -0.1,
                ..Default::default()
            },
            ModelParams {
                mu: 1.0,
                ..Default::default()
            },
            ModelParams {
                strike: 0.0,
                ..Default::default()
            },
            ModelParams {
                maturity: 0.0,
                ..Default::default()
            },
            ModelParams {
                r: f64::NAN,
                ..Default::default()
            },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }
}
