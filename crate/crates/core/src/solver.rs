//! Backward-in-time solver for the three-region free-boundary problem.
//!
//! Each macro step from `t_m` to `t_{m-1}`:
//!
//! 1. advances every share row through the no-transaction PDE on the
//!    odd-even extended period (pseudospectral, linearly implicit midpoint);
//! 2. locates the buy and sell frontiers column by column on the share mesh;
//! 3. overwrites the buying and selling regions with the explicit
//!    linear-in-`y` formulas anchored at the frontiers.
//!
//! The indifference price follows from the `y = 0` rows of both scenarios.

use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localization::{extend_into, DomainSpec};
use crate::model::{ModelParams, Scenario};
use crate::spectral::{
    eval_polynomial, PdeCoefficients, RealStepper, SpectralGrid, Startup, Transform,
};

/// Domains and resolutions of the `(t, y, xhat)` mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub domain: DomainSpec,
    pub y_min: f64,
    pub y_max: f64,
    pub n_t: usize,
    pub n_y: usize,
    pub n_xhat: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            domain: DomainSpec::default(),
            y_min: 0.0,
            y_max: 2.0,
            n_t: 250,
            n_y: 100,
            n_xhat: 200,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        for (name, n) in [
            ("n_t", self.n_t),
            ("n_y", self.n_y),
            ("n_xhat", self.n_xhat),
        ] {
            if n < 2 {
                return Err(Error::param(
                    name,
                    format!("resolution must be at least 2, got {n}"),
                ));
            }
        }
        if !(self.y_min.is_finite() && self.y_max.is_finite() && self.y_min < self.y_max) {
            return Err(Error::param(
                "y range",
                format!("need y_min < y_max, got [{}, {}]", self.y_min, self.y_max),
            ));
        }
        Ok(())
    }

    pub fn with_resolution(mut self, n_t: usize, n_y: usize, n_xhat: usize) -> Self {
        self.n_t = n_t;
        self.n_y = n_y;
        self.n_xhat = n_xhat;
        self
    }

    pub fn dt(&self, maturity: f64) -> f64 {
        maturity / self.n_t as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / self.n_y as f64
    }

    pub fn dxhat(&self) -> f64 {
        self.domain.width() / self.n_xhat as f64
    }

    pub fn y(&self, l: usize) -> f64 {
        self.y_min + l as f64 * self.dy()
    }

    pub fn xhat(&self, k: usize) -> f64 {
        self.domain.xhat_min + k as f64 * self.dxhat()
    }

    pub fn xhats(&self) -> Vec<f64> {
        (0..=self.n_xhat).map(|k| self.xhat(k)).collect()
    }

    pub fn time(&self, m: usize, maturity: f64) -> f64 {
        if m == self.n_t {
            maturity
        } else {
            m as f64 * self.dt(maturity)
        }
    }

    /// Index of the share row holding `y = 0`.
    pub fn zero_row(&self) -> Result<usize> {
        let pos = -self.y_min / self.dy();
        let l = pos.round();
        if self.y_min > 0.0 || self.y_max < 0.0 || (pos - l).abs() > 1e-9 || l as usize > self.n_y {
            return Err(Error::Config(format!(
                "y = 0 is not a node of the share mesh [{}, {}] with {} intervals",
                self.y_min, self.y_max, self.n_y
            )));
        }
        Ok(l as usize)
    }

    /// Index of the mesh node at `xhat`, if `xhat` is one.
    pub fn node_of(&self, xhat: f64) -> Option<usize> {
        let pos = (xhat - self.domain.xhat_min) / self.dxhat();
        let k = pos.round();
        ((pos - k).abs() < 1e-7 && k >= 0.0 && k as usize <= self.n_xhat).then_some(k as usize)
    }
}

/// `H` on the `(y, xhat)` mesh at one time level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSurface {
    pub scenario: Scenario,
    pub level: usize,
    pub time: f64,
    n_y: usize,
    n_xhat: usize,
    values: Vec<f64>,
}

impl ValueSurface {
    pub fn from_fn(
        scenario: Scenario,
        level: usize,
        time: f64,
        grid: &GridSpec,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let width = grid.n_xhat + 1;
        let mut values = Vec::with_capacity((grid.n_y + 1) * width);
        for l in 0..=grid.n_y {
            for k in 0..width {
                values.push(f(l, k));
            }
        }
        Self {
            scenario,
            level,
            time,
            n_y: grid.n_y,
            n_xhat: grid.n_xhat,
            values,
        }
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn n_xhat(&self) -> usize {
        self.n_xhat
    }

    #[inline]
    pub fn get(&self, l: usize, k: usize) -> f64 {
        self.values[l * (self.n_xhat + 1) + k]
    }

    #[inline]
    pub fn set(&mut self, l: usize, k: usize, v: f64) {
        self.values[l * (self.n_xhat + 1) + k] = v;
    }

    pub fn row(&self, l: usize) -> &[f64] {
        let w = self.n_xhat + 1;
        &self.values[l * w..(l + 1) * w]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..=self.n_y).map(|l| self.get(l, k)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Odd-even periodic extension of row `l`.
    pub fn extended_row(&self, l: usize) -> Vec<f64> {
        let mut out = vec![0.0; 4 * self.n_xhat];
        extend_into(self.row(l), &mut out).expect("row length matches the mesh");
        out
    }

    /// Value of row `l` at `xhat`: the nodal value on mesh points, the
    /// trigonometric interpolant of the extended row elsewhere.
    pub fn value_at(&self, l: usize, xhat: f64, grid: &GridSpec) -> Result<f64> {
        if let Some(k) = grid.node_of(xhat) {
            return Ok(self.get(l, k));
        }
        if !(xhat >= grid.domain.xhat_min && xhat <= grid.domain.xhat_max) {
            return Err(Error::OutOfRange {
                value: xhat,
                lo: grid.domain.xhat_min,
                hi: grid.domain.xhat_max,
            });
        }
        let sgrid = SpectralGrid::with_points(4 * self.n_xhat)?;
        let modes = Transform::new(sgrid).dft(&self.extended_row(l))?;
        Ok(eval_polynomial(&modes, grid.domain.xhat_to_circle(xhat)?))
    }
}

/// Discrete buy/sell frontiers at one time level, as share-mesh indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierSet {
    pub level: usize,
    pub time: f64,
    pub buy: Vec<usize>,
    pub sell: Vec<usize>,
    /// Buying is optimal on the whole share mesh.
    pub buy_clamped: Vec<bool>,
    /// Selling is optimal on the whole share mesh.
    pub sell_clamped: Vec<bool>,
}

impl FrontierSet {
    pub fn buy_y(&self, k: usize, grid: &GridSpec) -> f64 {
        grid.y(self.buy[k])
    }

    pub fn sell_y(&self, k: usize, grid: &GridSpec) -> f64 {
        grid.y(self.sell[k])
    }

    pub fn clamped_count(&self) -> usize {
        self.buy_clamped
            .iter()
            .zip(&self.sell_clamped)
            .filter(|(b, s)| **b || **s)
            .count()
    }

    /// Columns where both frontiers are interior and the buy frontier lies
    /// above the sell frontier.
    pub fn crossed_count(&self) -> usize {
        (0..self.buy.len())
            .filter(|&k| {
                !self.buy_clamped[k] && !self.sell_clamped[k] && self.buy[k] > self.sell[k]
            })
            .count()
    }

    /// Buy frontier in shares, linearly interpolated between mesh columns.
    pub fn buy_y_at(&self, xhat: f64, grid: &GridSpec) -> Result<f64> {
        let pos = (xhat - grid.domain.xhat_min) / grid.dxhat();
        if !(pos >= -1e-9 && pos <= grid.n_xhat as f64 + 1e-9) {
            return Err(Error::OutOfRange {
                value: xhat,
                lo: grid.domain.xhat_min,
                hi: grid.domain.xhat_max,
            });
        }
        if let Some(k) = grid.node_of(xhat) {
            return Ok(self.buy_y(k, grid));
        }
        let k = (pos.floor() as usize).min(grid.n_xhat - 1);
        let w = pos - k as f64;
        Ok((1.0 - w) * self.buy_y(k, grid) + w * self.buy_y(k + 1, grid))
    }
}

/// Counts of frontier truncations over a whole run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrontierStats {
    pub buy_clamped: usize,
    pub sell_clamped: usize,
    pub crossed: usize,
}

impl FrontierStats {
    fn absorb(&mut self, f: &FrontierSet) {
        self.buy_clamped += f.buy_clamped.iter().filter(|c| **c).count();
        self.sell_clamped += f.sell_clamped.iter().filter(|c| **c).count();
        self.crossed += f.crossed_count();
    }
}

/// Knobs of the solver beyond the mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Integrator steps per macro time level.
    pub substeps: usize,
    pub startup: Startup,
    /// 2/3-rule truncation of the quadratic term.
    pub dealias: bool,
    /// Order of an exponential filter applied to the terminal spectrum.
    pub terminal_filter: Option<u32>,
    /// Time levels `m` whose surfaces and frontiers are kept; level 0 and the
    /// terminal level are always kept.
    pub record_levels: Vec<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            substeps: 1,
            startup: Startup::Lagged,
            dealias: false,
            terminal_filter: None,
            record_levels: Vec::new(),
        }
    }
}

/// Output of one scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSolution {
    pub scenario: Scenario,
    /// Recorded surfaces, ordered by decreasing level.
    pub surfaces: Vec<ValueSurface>,
    /// Frontiers at the recorded levels below maturity.
    pub frontiers: Vec<FrontierSet>,
    pub stats: FrontierStats,
}

impl ScenarioSolution {
    pub fn surface(&self, level: usize) -> Option<&ValueSurface> {
        self.surfaces.iter().find(|s| s.level == level)
    }

    pub fn frontier(&self, level: usize) -> Option<&FrontierSet> {
        self.frontiers.iter().find(|f| f.level == level)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Solution {
    pub params: ModelParams,
    pub grid: GridSpec,
    pub one: ScenarioSolution,
    pub writer: ScenarioSolution,
    pub wall_seconds: f64,
}

impl Solution {
    pub fn scenario(&self, scenario: Scenario) -> &ScenarioSolution {
        match scenario {
            Scenario::One => &self.one,
            Scenario::Writer => &self.writer,
        }
    }

    /// Indifference prices on the `xhat` mesh at level `m`.
    pub fn price_curve(&self, level: usize) -> Result<Vec<f64>> {
        price_curve(self, level)
    }

    /// Indifference price at an arbitrary `xhat` at level `m`.
    pub fn price_at(&self, level: usize, xhat: f64) -> Result<f64> {
        let l0 = self.grid.zero_row()?;
        let (hw, h1) = self.surfaces_at(level)?;
        let scale = self
            .params
            .discount_unchecked(self.grid.time(level, self.params.maturity))
            / self.params.gamma;
        Ok(scale * (hw.value_at(l0, xhat, &self.grid)? - h1.value_at(l0, xhat, &self.grid)?))
    }

    fn surfaces_at(&self, level: usize) -> Result<(&ValueSurface, &ValueSurface)> {
        let missing = || Error::Config(format!("time level {level} was not recorded"));
        Ok((
            self.writer.surface(level).ok_or_else(missing)?,
            self.one.surface(level).ok_or_else(missing)?,
        ))
    }
}

/// Terminal surface `H(T, y_l, xhat_k)`.
pub fn init_terminal(scenario: Scenario, grid: &GridSpec, params: &ModelParams) -> ValueSurface {
    ValueSurface::from_fn(scenario, grid.n_t, params.maturity, grid, |l, k| {
        params.terminal_h(scenario, grid.y(l), grid.xhat(k))
    })
}

/// Spectra of the previous level's rows, feeding the extrapolated
/// nonlinearity.
#[derive(Debug, Clone, Default)]
pub struct PdeHistory {
    rows: Option<Vec<Vec<Complex64>>>,
    gap: f64,
}

impl PdeHistory {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Step-1 machinery shared across time levels.
#[derive(Debug, Clone)]
pub struct PdeStepper {
    stepper: RealStepper,
    substeps: usize,
    startup: Startup,
    filter: Option<Vec<f64>>,
}

impl PdeStepper {
    pub fn new(params: &ModelParams, grid: &GridSpec, options: &SolverOptions) -> Result<Self> {
        if options.substeps == 0 {
            return Err(Error::param("substeps", "must be at least 1"));
        }
        let sgrid = SpectralGrid::with_points(4 * grid.n_xhat)?;
        let coeffs = PdeCoefficients::from_market(params.alpha, params.sigma, grid.domain.period());
        let dt = grid.dt(params.maturity) / options.substeps as f64;
        let stepper = RealStepper::new(sgrid, coeffs, dt, options.dealias)?;
        let filter = options.terminal_filter.map(|order| {
            let half = sgrid.half() as f64;
            (0..=sgrid.half())
                .map(|k| (-36.0 * (k as f64 / half).powi(order as i32)).exp())
                .collect()
        });
        Ok(Self {
            stepper,
            substeps: options.substeps,
            startup: options.startup,
            filter,
        })
    }

    /// Macro step length.
    pub fn dt(&self) -> f64 {
        self.stepper.dt() * self.substeps as f64
    }

    /// Advances every row of `surface` by one macro step through the
    /// no-transaction equation, returning `H^p` at the next (earlier) level.
    pub fn step(&self, surface: &ValueSurface, history: &mut PdeHistory) -> Result<ValueSurface> {
        let n_y = surface.n_y;
        let width = surface.n_xhat + 1;
        let period = 4 * surface.n_xhat;
        let first = history.rows.is_none();
        let prev_rows = history.rows.take();
        let gap = history.gap;
        let dt_sub = self.stepper.dt();

        let results: Vec<(Vec<f64>, Vec<Complex64>)> = (0..=n_y)
            .into_par_iter()
            .map_init(
                || (self.stepper.clone(), vec![0.0; period]),
                |(st, ext), l| {
                    extend_into(surface.row(l), ext).expect("row length matches the mesh");
                    let mut cur = st.make_spectrum();
                    st.forward(ext, &mut cur);
                    if first {
                        if let Some(f) = &self.filter {
                            for (c, w) in cur.iter_mut().zip(f) {
                                *c *= *w;
                            }
                        }
                    }
                    let level_modes = cur.clone();
                    let mut point = st.make_spectrum();
                    let mut next = st.make_spectrum();
                    let mut prev: Option<(Vec<Complex64>, f64)> =
                        prev_rows.as_ref().map(|rows| (rows[l].clone(), gap));
                    for _ in 0..self.substeps {
                        match &prev {
                            Some((p, g)) => {
                                let theta = dt_sub / (2.0 * g);
                                for ((o, c), q) in point.iter_mut().zip(&cur).zip(p) {
                                    *o = c + (c - q) * theta;
                                }
                            }
                            None => match self.startup {
                                Startup::Lagged => point.copy_from_slice(&cur),
                                Startup::EulerPredictor => st.euler_half_step(&cur, &mut point),
                            },
                        }
                        st.step_at(&cur, &point, &mut next);
                        prev = Some((std::mem::replace(&mut cur, next.clone()), dt_sub));
                    }
                    st.inverse(&cur, ext);
                    (ext[..width].to_vec(), level_modes)
                },
            )
            .collect();

        let mut values = Vec::with_capacity((n_y + 1) * width);
        let mut modes = Vec::with_capacity(n_y + 1);
        for (l, (row, m)) in results.into_iter().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    level: surface.level.saturating_sub(1),
                    row: l,
                });
            }
            values.extend_from_slice(&row);
            modes.push(m);
        }
        history.rows = Some(modes);
        history.gap = self.dt();
        Ok(ValueSurface {
            scenario: surface.scenario,
            level: surface.level.saturating_sub(1),
            time: f64::NAN,
            n_y,
            n_xhat: surface.n_xhat,
            values,
        })
    }
}

/// Step 1 on its own: one macro step of the no-transaction equation.
pub fn pde_step(
    surface: &ValueSurface,
    params: &ModelParams,
    grid: &GridSpec,
    options: &SolverOptions,
    history: &mut PdeHistory,
) -> Result<ValueSurface> {
    let stepper = PdeStepper::new(params, grid, options)?;
    let mut out = stepper.step(surface, history)?;
    out.time = grid.time(out.level, params.maturity);
    Ok(out)
}

/// Proportional-cost increments of `H` per share-mesh step at `xhat`:
/// `(buy, sell)`.
#[inline]
fn cost_steps(params: &ModelParams, xhat: f64, discount: f64, dy: f64) -> (f64, f64) {
    let base = params.gamma * xhat.exp() / discount * dy;
    ((1.0 + params.lambda) * base, (1.0 - params.mu) * base)
}

/// Step 2: discrete frontiers of the no-transaction surface `hp` at time `t`.
pub fn find_frontiers(
    hp: &ValueSurface,
    t: f64,
    params: &ModelParams,
    grid: &GridSpec,
) -> FrontierSet {
    let discount = params.discount_unchecked(t);
    let dy = grid.dy();
    let n_y = grid.n_y;
    let cols: Vec<(usize, usize, bool, bool)> = (0..=grid.n_xhat)
        .into_par_iter()
        .map(|k| {
            let (cb, cs) = cost_steps(params, grid.xhat(k), discount, dy);
            let buy = (0..n_y).find(|&l| cb + hp.get(l + 1, k) - hp.get(l, k) > 0.0);
            let sell = (1..=n_y)
                .rev()
                .find(|&l| -cs + hp.get(l - 1, k) - hp.get(l, k) > 0.0);
            (
                buy.unwrap_or(n_y),
                sell.unwrap_or(0),
                buy.is_none(),
                sell.is_none(),
            )
        })
        .collect();
    let mut f = FrontierSet {
        level: hp.level,
        time: t,
        buy: Vec::with_capacity(cols.len()),
        sell: Vec::with_capacity(cols.len()),
        buy_clamped: Vec::with_capacity(cols.len()),
        sell_clamped: Vec::with_capacity(cols.len()),
    };
    for (b, s, bc, sc) in cols {
        f.buy.push(b);
        f.sell.push(s);
        f.buy_clamped.push(bc);
        f.sell_clamped.push(sc);
    }
    f
}

/// Step 3: rebuilds the buying and selling regions of `hp` from the
/// frontiers. Where the frontiers cross, the selling region starts at the
/// buy frontier.
pub fn reconstruct(
    hp: &ValueSurface,
    frontiers: &FrontierSet,
    t: f64,
    params: &ModelParams,
    grid: &GridSpec,
) -> ValueSurface {
    let discount = params.discount_unchecked(t);
    let dy = grid.dy();
    let steps: Vec<(f64, f64)> = (0..=grid.n_xhat)
        .map(|k| cost_steps(params, grid.xhat(k), discount, dy))
        .collect();
    let mut out = hp.clone();
    out.time = t;
    let width = grid.n_xhat + 1;
    out.values
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(l, row)| {
            for (k, v) in row.iter_mut().enumerate() {
                let b = frontiers.buy[k];
                let s = frontiers.sell[k].max(b);
                let (cb, cs) = steps[k];
                if l < b {
                    *v = hp.get(b, k) + (b - l) as f64 * cb;
                } else if l > s {
                    *v = hp.get(s, k) - (l - s) as f64 * cs;
                }
            }
        });
    out
}

/// Runs Steps 0-4 for one scenario.
pub fn solve_scenario(
    scenario: Scenario,
    params: &ModelParams,
    grid: &GridSpec,
    options: &SolverOptions,
) -> Result<ScenarioSolution> {
    params.validate()?;
    grid.validate()?;
    solve_scenario_from(init_terminal(scenario, grid, params), params, grid, options)
}

/// Steps 1-4 from an arbitrary terminal surface.
pub fn solve_scenario_from(
    terminal: ValueSurface,
    params: &ModelParams,
    grid: &GridSpec,
    options: &SolverOptions,
) -> Result<ScenarioSolution> {
    params.validate()?;
    grid.validate()?;
    if terminal.n_y != grid.n_y || terminal.n_xhat != grid.n_xhat {
        return Err(Error::LengthMismatch {
            expected: (grid.n_y + 1) * (grid.n_xhat + 1),
            actual: terminal.values.len(),
        });
    }
    let stepper = PdeStepper::new(params, grid, options)?;
    let keep = |m: usize| m == 0 || m == grid.n_t || options.record_levels.contains(&m);

    let scenario = terminal.scenario;
    let mut surface = terminal;
    surface.level = grid.n_t;
    surface.time = params.maturity;
    let mut out = ScenarioSolution {
        scenario,
        surfaces: vec![surface.clone()],
        frontiers: Vec::new(),
        stats: FrontierStats::default(),
    };
    let mut history = PdeHistory::new();
    for m in (1..=grid.n_t).rev() {
        let t = grid.time(m - 1, params.maturity);
        let mut hp = stepper.step(&surface, &mut history)?;
        hp.time = t;
        let frontiers = find_frontiers(&hp, t, params, grid);
        out.stats.absorb(&frontiers);
        surface = reconstruct(&hp, &frontiers, t, params, grid);
        if let Some(pos) = surface.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                level: m - 1,
                row: pos / (grid.n_xhat + 1),
            });
        }
        if keep(m - 1) {
            out.surfaces.push(surface.clone());
            out.frontiers.push(frontiers);
        }
    }
    Ok(out)
}

/// Solves both scenarios.
pub fn solve(params: &ModelParams, grid: &GridSpec, options: &SolverOptions) -> Result<Solution> {
    let start = Instant::now();
    let one = solve_scenario(Scenario::One, params, grid, options)?;
    let writer = solve_scenario(Scenario::Writer, params, grid, options)?;
    Ok(Solution {
        params: *params,
        grid: *grid,
        one,
        writer,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// `delta(T, t_m) / gamma * (H_w - H_1)` along the `y = 0` row.
pub fn price_curve(solution: &Solution, level: usize) -> Result<Vec<f64>> {
    let grid = &solution.grid;
    let params = &solution.params;
    let l0 = grid.zero_row()?;
    let (hw, h1) = solution.surfaces_at(level)?;
    let scale = params.discount_unchecked(grid.time(level, params.maturity)) / params.gamma;
    Ok(hw
        .row(l0)
        .iter()
        .zip(h1.row(l0))
        .map(|(w, o)| scale * (w - o))
        .collect())
}
