//! Fourier collocation on `[0, 2pi)`.
//!
//! Nodal values live on `x_j = j pi / N`, `j = 0..2N`. Mode vectors hold the
//! discrete Fourier coefficients `u_k = (1/2N) sum_j u(x_j) exp(-i k x_j)` for
//! `k = -N..N`, stored in FFT order (non-negative wavenumbers first).
//!
//! The periodic problem is advanced in backward time `tau = T - t`:
//!
//! ```text
//! u_tau = diff * u_xx + adv * u_x + nl * (u_x)^2
//! ```
//!
//! The linear part is treated with Crank-Nicolson and the quadratic term with
//! a two-level explicit extrapolation (linearly implicit midpoint rule).
//!
//! Odd derivatives annihilate the Nyquist mode `k = -N` so that real nodal
//! data stay real.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Tolerance on the imaginary residue of nodal values that should be real.
pub const REAL_TOLERANCE: f64 = 1e-8;

/// `2N` equispaced collocation nodes on `[0, 2pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpectralGrid {
    half: usize,
}

impl SpectralGrid {
    pub fn new(half: usize) -> Result<Self> {
        if half < 2 {
            return Err(Error::param(
                "N",
                format!("need at least 2 modes, got {half}"),
            ));
        }
        Ok(Self { half })
    }

    /// Grid with `points` nodes; `points` must be even.
    pub fn with_points(points: usize) -> Result<Self> {
        if !points.is_multiple_of(2) {
            return Err(Error::param(
                "points",
                format!("node count must be even, got {points}"),
            ));
        }
        Self::new(points / 2)
    }

    /// Half mode count `N`.
    pub fn half(&self) -> usize {
        self.half
    }

    /// Number of nodes `2N`.
    pub fn len(&self) -> usize {
        2 * self.half
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 * PI / self.half as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.node(j)).collect()
    }

    /// Wavenumber stored at FFT index `i`.
    #[inline]
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i < self.half {
            i as i64
        } else {
            i as i64 - 2 * self.half as i64
        }
    }

    #[inline]
    fn index(&self, k: i64) -> Option<usize> {
        let n = self.half as i64;
        if k >= 0 && k < n {
            Some(k as usize)
        } else if k >= -n && k < 0 {
            Some((k + 2 * n) as usize)
        } else {
            None
        }
    }

    /// Multiplier of the `order`-th spectral derivative at FFT index `i`.
    #[inline]
    fn derivative_factor(&self, i: usize, order: u32) -> Complex64 {
        let k = self.wavenumber(i);
        if order % 2 == 1 && k == -(self.half as i64) {
            return Complex64::new(0.0, 0.0);
        }
        (I * k as f64).powu(order)
    }
}

/// Discrete Fourier coefficients of a trigonometric polynomial in `S_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeVector {
    grid: SpectralGrid,
    coeffs: Vec<Complex64>,
}

impl ModeVector {
    pub fn zeros(grid: SpectralGrid) -> Self {
        Self {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Builds a vector from coefficients in FFT order.
    pub fn from_fft_order(grid: SpectralGrid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                actual: coeffs.len(),
            });
        }
        Ok(Self { grid, coeffs })
    }

    pub fn grid(&self) -> SpectralGrid {
        self.grid
    }

    /// Coefficient of wavenumber `k`; zero outside `-N..N`.
    pub fn get(&self, k: i64) -> Complex64 {
        self.grid
            .index(k)
            .map_or(Complex64::new(0.0, 0.0), |i| self.coeffs[i])
    }

    pub fn set(&mut self, k: i64, value: Complex64) {
        let i = self
            .grid
            .index(k)
            .unwrap_or_else(|| panic!("wavenumber {k} outside the grid"));
        self.coeffs[i] = value;
    }

    pub fn as_fft_order(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficients ordered `k = -N, ..., N-1`.
    pub fn ordered(&self) -> Vec<Complex64> {
        let n = self.grid.half as i64;
        (-n..n).map(|k| self.get(k)).collect()
    }

    /// Discrete L2 norm of the represented nodal values (Parseval).
    pub fn nodal_l2(&self) -> f64 {
        let sum: f64 = self.coeffs.iter().map(|c| c.norm_sqr()).sum();
        (sum * self.grid.len() as f64).sqrt()
    }

    fn check_grid(&self, other: &ModeVector) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::LengthMismatch {
                expected: self.grid.len(),
                actual: other.grid.len(),
            });
        }
        Ok(())
    }

    fn combine(&self, a: f64, other: &ModeVector, b: f64) -> ModeVector {
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(x, y)| x * a + y * b)
            .collect();
        ModeVector {
            grid: self.grid,
            coeffs,
        }
    }
}

/// Forward/inverse DFT with plans cached for one grid size.
#[derive(Clone)]
pub struct Transform {
    grid: SpectralGrid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Transform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transform")
            .field("grid", &self.grid)
            .finish()
    }
}

impl Transform {
    pub fn new(grid: SpectralGrid) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid,
            forward: planner.plan_fft_forward(grid.len()),
            inverse: planner.plan_fft_inverse(grid.len()),
        }
    }

    pub fn grid(&self) -> SpectralGrid {
        self.grid
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.grid.len() {
            return Err(Error::LengthMismatch {
                expected: self.grid.len(),
                actual: len,
            });
        }
        Ok(())
    }

    pub fn dft(&self, values: &[f64]) -> Result<ModeVector> {
        self.check_len(values.len())?;
        let buf = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Ok(self.dft_complex_owned(buf))
    }

    pub fn dft_complex(&self, values: &[Complex64]) -> Result<ModeVector> {
        self.check_len(values.len())?;
        Ok(self.dft_complex_owned(values.to_vec()))
    }

    fn dft_complex_owned(&self, mut buf: Vec<Complex64>) -> ModeVector {
        self.forward.process(&mut buf);
        let scale = 1.0 / self.grid.len() as f64;
        for c in &mut buf {
            *c *= scale;
        }
        ModeVector {
            grid: self.grid,
            coeffs: buf,
        }
    }

    /// Nodal values of the interpolant.
    pub fn idft(&self, modes: &ModeVector) -> Result<Vec<Complex64>> {
        self.check_len(modes.coeffs.len())?;
        let mut buf = modes.coeffs.clone();
        self.inverse.process(&mut buf);
        Ok(buf)
    }

    /// Nodal values, asserting that their imaginary parts are negligible.
    pub fn idft_real(&self, modes: &ModeVector) -> Result<Vec<f64>> {
        let vals = self.idft(modes)?;
        let scale = vals.iter().fold(1.0f64, |m, c| m.max(c.re.abs()));
        vals.iter()
            .map(|c| {
                if c.im.abs() > REAL_TOLERANCE * scale {
                    Err(Error::Config(format!(
                        "nodal value has imaginary residue {:.3e}",
                        c.im
                    )))
                } else {
                    Ok(c.re)
                }
            })
            .collect()
    }
}

/// Multiplies mode `k` by `(ik)^order`.
pub fn spectral_derivative(modes: &ModeVector, order: u32) -> ModeVector {
    let grid = modes.grid;
    let coeffs = modes
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| c * grid.derivative_factor(i, order))
        .collect();
    ModeVector { grid, coeffs }
}

/// Evaluates `sum_k u_k exp(i k x)` and returns the real part.
pub fn eval_polynomial(modes: &ModeVector, x: f64) -> f64 {
    modes
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let k = modes.grid.wavenumber(i) as f64;
            let (s, co) = (k * x).sin_cos();
            c.re * co - c.im * s
        })
        .sum()
}

/// Coefficients of the periodic problem on `[0, 2pi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeCoefficients {
    pub adv: f64,
    pub diff: f64,
    pub nl: f64,
}

impl PdeCoefficients {
    /// Rescales the log-price equation onto `[0, 2pi)` for a period of
    /// length `period` (in log-price units).
    pub fn from_market(alpha: f64, sigma: f64, period: f64) -> Self {
        let scale = 2.0 * PI / period;
        let half_var = 0.5 * sigma * sigma;
        Self {
            adv: scale * (alpha - half_var),
            diff: scale * scale * half_var,
            nl: scale * scale * half_var,
        }
    }

    /// Eigenvalue of the linear operator on wavenumber `k` of a grid with
    /// half mode count `half`.
    #[inline]
    pub fn eigenvalue(&self, k: i64, half: usize) -> Complex64 {
        let kf = k as f64;
        let adv = if k == -(half as i64) || k == half as i64 {
            0.0
        } else {
            self.adv * kf
        };
        Complex64::new(-self.diff * kf * kf, adv)
    }
}

/// 2/3-rule mask: true for retained modes.
#[inline]
fn retained(k: i64, half: usize) -> bool {
    3 * k.unsigned_abs() as usize <= 2 * half
}

pub fn apply_l(modes: &ModeVector, coeffs: &PdeCoefficients) -> ModeVector {
    let grid = modes.grid;
    let out = modes
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| c * coeffs.eigenvalue(grid.wavenumber(i), grid.half))
        .collect();
    ModeVector { grid, coeffs: out }
}

/// `nl * F((F^-1 ik u)^2)`, optionally with 2/3-rule truncation.
pub fn apply_nl(
    transform: &Transform,
    modes: &ModeVector,
    coeffs: &PdeCoefficients,
    dealias: bool,
) -> Result<ModeVector> {
    let grid = modes.grid;
    let mut deriv = spectral_derivative(modes, 1);
    if dealias {
        truncate(&mut deriv);
    }
    let nodal = transform.idft(&deriv)?;
    let squared: Vec<Complex64> = nodal.iter().map(|v| v * v).collect();
    let mut out = transform.dft_complex(&squared)?;
    if dealias {
        truncate(&mut out);
    }
    for c in &mut out.coeffs {
        *c *= coeffs.nl;
    }
    debug_assert_eq!(out.grid, grid);
    Ok(out)
}

fn truncate(modes: &mut ModeVector) {
    let grid = modes.grid;
    for (i, c) in modes.coeffs.iter_mut().enumerate() {
        if !retained(grid.wavenumber(i), grid.half) {
            *c = Complex64::new(0.0, 0.0);
        }
    }
}

/// How the extrapolated nonlinearity is formed on the very first step, when
/// no earlier level exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Startup {
    /// Reuse the current level as the previous one.
    #[default]
    Lagged,
    /// Evaluate the nonlinearity at an explicit Euler half step.
    EulerPredictor,
}

/// One linearly implicit midpoint step from `current` (with `previous` the
/// level before it).
pub fn step_limm(
    transform: &Transform,
    current: &ModeVector,
    previous: &ModeVector,
    dt: f64,
    coeffs: &PdeCoefficients,
    dealias: bool,
) -> Result<ModeVector> {
    current.check_grid(previous)?;
    let extrapolant = current.combine(1.5, previous, -0.5);
    step_with_nl_point(transform, current, &extrapolant, dt, coeffs, dealias)
}

/// Crank-Nicolson on the linear part with the nonlinearity evaluated at an
/// arbitrary point `nl_point`.
pub fn step_with_nl_point(
    transform: &Transform,
    current: &ModeVector,
    nl_point: &ModeVector,
    dt: f64,
    coeffs: &PdeCoefficients,
    dealias: bool,
) -> Result<ModeVector> {
    if !(dt > 0.0) {
        return Err(Error::param(
            "dt",
            format!("time step must be positive, got {dt}"),
        ));
    }
    current.check_grid(nl_point)?;
    let grid = current.grid;
    let nl = apply_nl(transform, nl_point, coeffs, dealias)?;
    let out = current
        .coeffs
        .iter()
        .zip(&nl.coeffs)
        .enumerate()
        .map(|(i, (c, n))| {
            let half_step = coeffs.eigenvalue(grid.wavenumber(i), grid.half) * (0.5 * dt);
            ((1.0 + half_step) * c + n * dt) / (1.0 - half_step)
        })
        .collect();
    Ok(ModeVector { grid, coeffs: out })
}

/// Euler half-step predictor point used by [`Startup::EulerPredictor`].
pub fn euler_half_step(
    transform: &Transform,
    current: &ModeVector,
    dt: f64,
    coeffs: &PdeCoefficients,
    dealias: bool,
) -> Result<ModeVector> {
    let l = apply_l(current, coeffs);
    let nl = apply_nl(transform, current, coeffs, dealias)?;
    let mut out = current.clone();
    for ((o, a), b) in out.coeffs.iter_mut().zip(&l.coeffs).zip(&nl.coeffs) {
        *o += (a + b) * (0.5 * dt);
    }
    Ok(out)
}

/// Half-spectrum stepper for real nodal data.
///
/// Produces the same result as [`step_limm`] on real input, using real FFTs
/// and precomputed Crank-Nicolson factors. Holds scratch space, so each
/// worker thread should own a clone.
#[derive(Clone)]
pub struct RealStepper {
    points: usize,
    half: usize,
    coeffs: PdeCoefficients,
    dt: f64,
    dealias: bool,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    deriv_factor: Vec<Complex64>,
    explicit_factor: Vec<Complex64>,
    implicit_inv: Vec<Complex64>,
    spec_buf: Vec<Complex64>,
    real_buf: Vec<f64>,
    r2c_scratch: Vec<Complex64>,
    c2r_scratch: Vec<Complex64>,
}

impl std::fmt::Debug for RealStepper {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RealStepper")
            .field("points", &self.points)
            .field("coeffs", &self.coeffs)
            .field("dt", &self.dt)
            .field("dealias", &self.dealias)
            .finish()
    }
}

impl RealStepper {
    pub fn new(
        grid: SpectralGrid,
        coeffs: PdeCoefficients,
        dt: f64,
        dealias: bool,
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::param(
                "dt",
                format!("time step must be positive, got {dt}"),
            ));
        }
        let points = grid.len();
        let half = grid.half();
        let mut planner = RealFftPlanner::<f64>::new();
        let r2c = planner.plan_fft_forward(points);
        let c2r = planner.plan_fft_inverse(points);
        let mut deriv_factor = Vec::with_capacity(half + 1);
        let mut explicit_factor = Vec::with_capacity(half + 1);
        let mut implicit_inv = Vec::with_capacity(half + 1);
        for k in 0..=half {
            let d = if k == half || (dealias && !retained(k as i64, half)) {
                Complex64::new(0.0, 0.0)
            } else {
                I * k as f64
            };
            deriv_factor.push(d);
            let hs = coeffs.eigenvalue(k as i64, half) * (0.5 * dt);
            explicit_factor.push(1.0 + hs);
            implicit_inv.push(1.0 / (1.0 - hs));
        }
        Ok(Self {
            points,
            half,
            coeffs,
            dt,
            dealias,
            spec_buf: r2c.make_output_vec(),
            real_buf: r2c.make_input_vec(),
            r2c_scratch: r2c.make_scratch_vec(),
            c2r_scratch: c2r.make_scratch_vec(),
            r2c,
            c2r,
            deriv_factor,
            explicit_factor,
            implicit_inv,
        })
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// Length of a half spectrum, `N + 1`.
    pub fn spectrum_len(&self) -> usize {
        self.half + 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn make_spectrum(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.half + 1]
    }

    /// Scaled half spectrum (`k = 0..=N`) of real nodal values.
    pub fn forward(&mut self, values: &[f64], out: &mut [Complex64]) {
        assert_eq!(values.len(), self.points);
        assert_eq!(out.len(), self.half + 1);
        self.real_buf.copy_from_slice(values);
        self.r2c
            .process_with_scratch(&mut self.real_buf, out, &mut self.r2c_scratch)
            .expect("real fft buffers sized by the planner");
        let scale = 1.0 / self.points as f64;
        for c in out.iter_mut() {
            *c *= scale;
        }
    }

    /// Nodal values of a half spectrum.
    pub fn inverse(&mut self, spectrum: &[Complex64], out: &mut [f64]) {
        assert_eq!(spectrum.len(), self.half + 1);
        assert_eq!(out.len(), self.points);
        self.spec_buf.copy_from_slice(spectrum);
        self.spec_buf[0].im = 0.0;
        self.spec_buf[self.half].im = 0.0;
        self.c2r
            .process_with_scratch(&mut self.spec_buf, out, &mut self.c2r_scratch)
            .expect("real fft buffers sized by the planner");
    }

    /// Advances `current` one step with the nonlinearity evaluated at
    /// `nl_point`, writing the new spectrum into `out`.
    pub fn step_at(
        &mut self,
        current: &[Complex64],
        nl_point: &[Complex64],
        out: &mut [Complex64],
    ) {
        let len = self.half + 1;
        assert!(current.len() == len && nl_point.len() == len && out.len() == len);
        for k in 0..len {
            self.spec_buf[k] = nl_point[k] * self.deriv_factor[k];
        }
        self.spec_buf[0].im = 0.0;
        self.spec_buf[self.half].im = 0.0;
        self.c2r
            .process_with_scratch(
                &mut self.spec_buf,
                &mut self.real_buf,
                &mut self.c2r_scratch,
            )
            .expect("real fft buffers sized by the planner");
        for v in self.real_buf.iter_mut() {
            *v *= *v;
        }
        self.r2c
            .process_with_scratch(
                &mut self.real_buf,
                &mut self.spec_buf,
                &mut self.r2c_scratch,
            )
            .expect("real fft buffers sized by the planner");
        let nl_scale = self.coeffs.nl * self.dt / self.points as f64;
        for k in 0..len {
            let mut nl = self.spec_buf[k] * nl_scale;
            if self.dealias && !retained(k as i64, self.half) {
                nl = Complex64::new(0.0, 0.0);
            }
            out[k] = (self.explicit_factor[k] * current[k] + nl) * self.implicit_inv[k];
        }
    }

    /// Linearly implicit midpoint step from `current` with `previous` the
    /// level before it.
    pub fn step(&mut self, current: &[Complex64], previous: &[Complex64], out: &mut [Complex64]) {
        let extrapolant: Vec<Complex64> = current
            .iter()
            .zip(previous)
            .map(|(c, p)| c * 1.5 - p * 0.5)
            .collect();
        self.step_at(current, &extrapolant, out);
    }

    /// Explicit Euler half step, the predictor for the first level.
    pub fn euler_half_step(&mut self, current: &[Complex64], out: &mut [Complex64]) {
        let len = self.half + 1;
        for k in 0..len {
            self.spec_buf[k] = current[k] * self.deriv_factor[k];
        }
        self.spec_buf[0].im = 0.0;
        self.spec_buf[self.half].im = 0.0;
        self.c2r
            .process_with_scratch(
                &mut self.spec_buf,
                &mut self.real_buf,
                &mut self.c2r_scratch,
            )
            .expect("real fft buffers sized by the planner");
        for v in self.real_buf.iter_mut() {
            *v *= *v;
        }
        self.r2c
            .process_with_scratch(
                &mut self.real_buf,
                &mut self.spec_buf,
                &mut self.r2c_scratch,
            )
            .expect("real fft buffers sized by the planner");
        let nl_scale = self.coeffs.nl / self.points as f64;
        for k in 0..len {
            let mut nl = self.spec_buf[k] * nl_scale;
            if self.dealias && !retained(k as i64, self.half) {
                nl = Complex64::new(0.0, 0.0);
            }
            let lin = self.coeffs.eigenvalue(k as i64, self.half) * current[k];
            out[k] = current[k] + (lin + nl) * (0.5 * self.dt);
        }
    }
}
