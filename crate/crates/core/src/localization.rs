//! Odd-even periodic extension of a slice from the computational domain
//! `I1 = [xmin, xmax]` onto the period `[xmin, 4 xmax - 3 xmin)`, and the
//! affine map of that period onto `[0, 2pi)`.
//!
//! On `I2 = [xmax, 2 xmax - xmin]` the slice is reflected oddly about its
//! right endpoint, and `I3` mirrors `I1 u I2` evenly, so the cyclic sequence
//! closes continuously at `xmin`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Approximation domain `[l_min, l_max]` nested in the computational domain
/// `[xhat_min, xhat_max]`, all in log-price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub l_min: f64,
    pub l_max: f64,
    pub xhat_min: f64,
    pub xhat_max: f64,
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self {
            l_min: 1.0,
            l_max: 3.0,
            xhat_min: -5.0,
            xhat_max: 5.0,
        }
    }
}

impl DomainSpec {
    pub fn new(l_min: f64, l_max: f64, xhat_min: f64, xhat_max: f64) -> Result<Self> {
        let d = Self {
            l_min,
            l_max,
            xhat_min,
            xhat_max,
        };
        d.validate()?;
        Ok(d)
    }

    /// Computational domain `[l_min - margin, l_max + margin]`.
    pub fn with_margin(l_min: f64, l_max: f64, margin: f64) -> Result<Self> {
        Self::new(l_min, l_max, l_min - margin, l_max + margin)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.l_min, self.l_max, self.xhat_min, self.xhat_max]
            .iter()
            .all(|v| v.is_finite())
            && self.xhat_min < self.l_min
            && self.l_min < self.l_max
            && self.l_max < self.xhat_max;
        if !ok {
            return Err(Error::param(
                "domain",
                format!(
                    "need xhat_min < l_min < l_max < xhat_max, got [{}, {}] in [{}, {}]",
                    self.l_min, self.l_max, self.xhat_min, self.xhat_max
                ),
            ));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.xhat_max - self.xhat_min
    }

    /// Length of the extended period, `4 (xhat_max - xhat_min)`.
    pub fn period(&self) -> f64 {
        4.0 * self.width()
    }

    pub fn period_end(&self) -> f64 {
        self.xhat_min + self.period()
    }

    pub fn xhat_to_circle(&self, xhat: f64) -> Result<f64> {
        if !(xhat >= self.xhat_min && xhat < self.period_end()) {
            return Err(Error::OutOfRange {
                value: xhat,
                lo: self.xhat_min,
                hi: self.period_end(),
            });
        }
        Ok(2.0 * PI * (xhat - self.xhat_min) / self.period())
    }

    pub fn circle_to_xhat(&self, x: f64) -> Result<f64> {
        if !(0.0..2.0 * PI).contains(&x) {
            return Err(Error::OutOfRange {
                value: x,
                lo: 0.0,
                hi: 2.0 * PI,
            });
        }
        Ok(self.xhat_min + x * self.period() / (2.0 * PI))
    }
}

/// Extends `values` sampled on `xhat_min + k dx`, `k = 0..=n`, to the `4n`
/// samples of the period mesh (right endpoint excluded).
pub fn extend(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::LengthMismatch {
            expected: 2,
            actual: values.len(),
        });
    }
    let mut out = vec![0.0; 4 * (values.len() - 1)];
    extend_into(values, &mut out)?;
    Ok(out)
}

/// In-place variant of [`extend`]; `out` must hold `4 (values.len() - 1)`.
pub fn extend_into(values: &[f64], out: &mut [f64]) -> Result<()> {
    let n = values.len().saturating_sub(1);
    if n == 0 || out.len() != 4 * n {
        return Err(Error::LengthMismatch {
            expected: 4 * n,
            actual: out.len(),
        });
    }
    out[..=n].copy_from_slice(values);
    let top = 2.0 * values[n];
    for s in n + 1..=2 * n {
        out[s] = top - values[2 * n - s];
    }
    for s in 2 * n + 1..4 * n {
        out[s] = out[4 * n - s];
    }
    Ok(())
}

/// Picks the computational-domain samples (indices `0..=n`) back out of a
/// period of `4n` samples.
pub fn restrict(period_values: &[f64]) -> Result<Vec<f64>> {
    let len = period_values.len();
    if len < 4 || !len.is_multiple_of(4) {
        return Err(Error::LengthMismatch {
            expected: 4 * (len / 4).max(1),
            actual: len,
        });
    }
    Ok(period_values[..=len / 4].to_vec())
}
