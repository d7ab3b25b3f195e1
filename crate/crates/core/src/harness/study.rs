//! Study runners. Every runner reads a resolved [`ExperimentConfig`] and
//! nothing else, so a report can be regenerated from its config echo.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Reference, StudyKind};
use super::fit::{loglog_fit, ols, prefix_slopes, rmse, LineFit};
use crate::error::{Error, Result};
use crate::localization::DomainSpec;
use crate::model::{ModelParams, Scenario};
use crate::oracle::{black_scholes_call, no_cost_h, no_cost_holding, norm_cdf, BsInputs};
use crate::solver::{solve, FrontierStats, GridSpec, Solution, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub n_t: usize,
    pub n_y: usize,
    pub n_xhat: usize,
}

impl From<&GridSpec> for Resolution {
    fn from(g: &GridSpec) -> Self {
        Self {
            n_t: g.n_t,
            n_y: g.n_y,
            n_xhat: g.n_xhat,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricePoint {
    pub xhat: f64,
    pub spot: f64,
    pub price: f64,
    pub bs: f64,
    pub abs_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceReport {
    pub points: Vec<PricePoint>,
    /// RMSE of the price against Black-Scholes over the test points.
    pub rmse: f64,
    pub resolution: Resolution,
    pub wall_seconds: f64,
    pub frontier_one: FrontierStats,
    pub frontier_writer: FrontierStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Abscissa of the fits: the resolution, or `P(M)` for localization.
    pub value: f64,
    /// The configured sweep entry.
    pub parameter: f64,
    pub resolution: Resolution,
    pub rmse_h1: Option<f64>,
    pub rmse_hw: Option<f64>,
    /// Writer buy frontier.
    pub rmse_frontier: Option<f64>,
    pub rmse_frontier_one: Option<f64>,
    /// Gaussian mass of the log-price increment beyond the margin over the
    /// whole horizon (localization only).
    pub tail_mass: Option<f64>,
    pub wall_seconds: f64,
    pub clamped: usize,
    pub is_reference: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesSlopes {
    pub h1: Vec<Option<f64>>,
    pub hw: Vec<Option<f64>>,
    pub frontier: Vec<Option<f64>>,
    pub frontier_one: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub kind: StudyKind,
    pub reference: Reference,
    pub rows: Vec<SweepRow>,
    /// Slope over each leading prefix, aligned with `rows`.
    pub prefix_slopes: SeriesSlopes,
    pub fit_prefix: usize,
    pub slope_h1: Option<f64>,
    pub slope_hw: Option<f64>,
    pub slope_frontier: Option<f64>,
    pub slope_frontier_one: Option<f64>,
    /// Oracle RMSE of `H_w` for the reference run (localization, no costs).
    pub floor_hw: Option<f64>,
}

impl SweepReport {
    /// Rows that enter the fits.
    pub fn measured(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows
            .iter()
            .filter(|r| !r.is_reference && r.error.is_none())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffRow {
    /// Risk aversion or maturity, depending on the study.
    pub parameter: f64,
    pub xhat: f64,
    pub spot: f64,
    pub price: f64,
    pub bs: f64,
    pub diff: f64,
    /// `diff / (lambda S)`, absent when `lambda S = 0`.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffRun {
    pub parameter: f64,
    pub resolution: Resolution,
    pub wall_seconds: f64,
    pub min_diff: Option<f64>,
    pub ratio_at_l_max: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceDiffReport {
    pub kind: StudyKind,
    pub rows: Vec<DiffRow>,
    pub runs: Vec<DiffRun>,
    /// Smallest pointwise increase of the difference between consecutive
    /// sweep values (risk-aversion sweeps only).
    pub min_increment: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvershootRow {
    pub gamma: f64,
    pub log_gamma: f64,
    pub xhat: f64,
    pub spot: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvershootReport {
    pub rows: Vec<OvershootRow>,
    pub xhat_eval: f64,
    /// `(gamma, OR)` at `xhat_eval`.
    pub eval: Vec<(f64, f64)>,
    /// OR at `xhat_eval` against `ln gamma`.
    pub fit: Option<LineFit>,
    pub runs: Vec<DiffRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Report {
    Price(PriceReport),
    Sweep(SweepReport),
    PriceDifference(PriceDiffReport),
    Overshoot(OvershootReport),
}

impl Report {
    pub fn resolutions(&self) -> Vec<Resolution> {
        match self {
            Report::Price(r) => vec![r.resolution],
            Report::Sweep(r) => r.rows.iter().map(|x| x.resolution).collect(),
            Report::PriceDifference(r) => r.runs.iter().map(|x| x.resolution).collect(),
            Report::Overshoot(r) => r.runs.iter().map(|x| x.resolution).collect(),
        }
    }
}

/// Runs the study named by `config.study.kind`.
pub fn run(config: &ExperimentConfig) -> Result<Report> {
    let c = config.resolve(None, false)?;
    Ok(match c.kind() {
        StudyKind::Price => Report::Price(run_price(&c)?),
        StudyKind::Spatial | StudyKind::Temporal | StudyKind::Shares => {
            Report::Sweep(run_convergence(&c)?)
        }
        StudyKind::Localization => Report::Sweep(run_localization(&c)?),
        StudyKind::PriceDiffVsT | StudyKind::PriceDiffVsS => {
            Report::PriceDifference(run_price_difference(&c)?)
        }
        StudyKind::Overshoot => Report::Overshoot(run_overshoot(&c)?),
    })
}

fn bs_at(params: &ModelParams, spot: f64) -> Result<f64> {
    black_scholes_call(&BsInputs::from_model(params, spot, 0.0))
}

pub fn run_price(c: &ExperimentConfig) -> Result<PriceReport> {
    let grid = c.grid.spec()?;
    let sol = solve(&c.model, &grid, &c.solver_options())?;
    let mut points = Vec::new();
    for x in c.test_points()? {
        let spot = x.exp();
        let price = sol.price_at(0, x)?;
        let bs = bs_at(&c.model, spot)?;
        points.push(PricePoint {
            xhat: x,
            spot,
            price,
            bs,
            abs_err: (price - bs).abs(),
        });
    }
    let p: Vec<f64> = points.iter().map(|q| q.price).collect();
    let b: Vec<f64> = points.iter().map(|q| q.bs).collect();
    Ok(PriceReport {
        rmse: rmse(&p, &b)?,
        points,
        resolution: (&grid).into(),
        wall_seconds: sol.wall_seconds,
        frontier_one: sol.one.stats,
        frontier_writer: sol.writer.stats,
    })
}

/// `H_1`, `H_w` on the `y = 0` row and both buy frontiers at the test points.
#[derive(Debug, Clone)]
struct Sample {
    h1: Vec<f64>,
    hw: Vec<f64>,
    fw: Vec<f64>,
    f1: Vec<f64>,
}

impl Sample {
    fn from_solution(sol: &Solution, points: &[f64]) -> Result<Self> {
        let g = &sol.grid;
        let l0 = g.zero_row()?;
        let missing = || Error::Config("level 0 was not recorded".into());
        let (s1, sw) = (
            sol.one.surface(0).ok_or_else(missing)?,
            sol.writer.surface(0).ok_or_else(missing)?,
        );
        let (b1, bw) = (
            sol.one.frontier(0).ok_or_else(missing)?,
            sol.writer.frontier(0).ok_or_else(missing)?,
        );
        let mut s = Sample {
            h1: Vec::new(),
            hw: Vec::new(),
            fw: Vec::new(),
            f1: Vec::new(),
        };
        for &x in points {
            s.h1.push(s1.value_at(l0, x, g)?);
            s.hw.push(sw.value_at(l0, x, g)?);
            s.f1.push(b1.buy_y_at(x, g)?);
            s.fw.push(bw.buy_y_at(x, g)?);
        }
        Ok(s)
    }

    fn oracle(params: &ModelParams, points: &[f64]) -> Result<Self> {
        let mut s = Sample {
            h1: Vec::new(),
            hw: Vec::new(),
            fw: Vec::new(),
            f1: Vec::new(),
        };
        for &x in points {
            s.h1.push(no_cost_h(params, Scenario::One, 0.0, x)?);
            s.hw.push(no_cost_h(params, Scenario::Writer, 0.0, x)?);
            s.f1.push(no_cost_holding(params, Scenario::One, 0.0, x)?);
            s.fw.push(no_cost_holding(params, Scenario::Writer, 0.0, x)?);
        }
        Ok(s)
    }
}

struct Run {
    grid: GridSpec,
    sample: Result<Sample>,
    wall_seconds: f64,
    clamped: usize,
}

fn run_one(params: &ModelParams, grid: GridSpec, options: &SolverOptions, points: &[f64]) -> Run {
    match solve(params, &grid, options) {
        Ok(sol) => Run {
            grid,
            sample: Sample::from_solution(&sol, points),
            wall_seconds: sol.wall_seconds,
            clamped: sol.one.stats.buy_clamped
                + sol.one.stats.sell_clamped
                + sol.writer.stats.buy_clamped
                + sol.writer.stats.sell_clamped,
        },
        Err(e) => Run {
            grid,
            sample: Err(e),
            wall_seconds: 0.0,
            clamped: 0,
        },
    }
}

fn map_entries<T, R, F>(parallel: bool, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    if parallel {
        items.into_par_iter().map(f).collect()
    } else {
        items.into_iter().map(f).collect()
    }
}

fn no_costs(p: &ModelParams) -> bool {
    p.lambda == 0.0 && p.mu == 0.0
}

/// The reference actually used for `kind`.
pub fn effective_reference(c: &ExperimentConfig) -> Reference {
    match c.study.reference.unwrap_or_default() {
        Reference::Auto => {
            if c.kind() != StudyKind::Temporal
                && c.kind() != StudyKind::Localization
                && no_costs(&c.model)
            {
                Reference::Oracle
            } else {
                Reference::Finest
            }
        }
        r => r,
    }
}

fn rows_against(
    runs: &[Run],
    values: &[f64],
    parameters: &[f64],
    target: &Sample,
    reference_index: Option<usize>,
) -> Vec<SweepRow> {
    runs.iter()
        .enumerate()
        .map(|(i, run)| {
            let mut row = SweepRow {
                value: values[i],
                parameter: parameters[i],
                resolution: (&run.grid).into(),
                rmse_h1: None,
                rmse_hw: None,
                rmse_frontier: None,
                rmse_frontier_one: None,
                tail_mass: None,
                wall_seconds: run.wall_seconds,
                clamped: run.clamped,
                is_reference: reference_index == Some(i),
                error: None,
            };
            match &run.sample {
                Err(e) => row.error = Some(e.to_string()),
                Ok(_) if row.is_reference => {}
                Ok(s) => {
                    row.rmse_h1 = rmse(&s.h1, &target.h1).ok();
                    row.rmse_hw = rmse(&s.hw, &target.hw).ok();
                    row.rmse_frontier = rmse(&s.fw, &target.fw).ok();
                    row.rmse_frontier_one = rmse(&s.f1, &target.f1).ok();
                }
            }
            row
        })
        .collect()
}

fn finish_sweep(
    kind: StudyKind,
    reference: Reference,
    rows: Vec<SweepRow>,
    prefix: Option<usize>,
    floor_hw: Option<f64>,
) -> SweepReport {
    let used: Vec<usize> = (0..rows.len())
        .filter(|&i| !rows[i].is_reference && rows[i].error.is_none())
        .collect();
    let xs: Vec<f64> = used.iter().map(|&i| rows[i].value).collect();
    let series = |get: fn(&SweepRow) -> Option<f64>| -> (Vec<Option<f64>>, Option<f64>) {
        let ys: Vec<f64> = used
            .iter()
            .map(|&i| get(&rows[i]).unwrap_or(f64::NAN))
            .collect();
        let per = prefix_slopes(&xs, &ys);
        let mut aligned = vec![None; rows.len()];
        for (j, &i) in used.iter().enumerate() {
            aligned[i] = per[j];
        }
        let n = prefix.unwrap_or(xs.len()).min(xs.len());
        (aligned, loglog_fit(&xs[..n], &ys[..n]).map(|f| f.slope))
    };
    let (h1, slope_h1) = series(|r| r.rmse_h1);
    let (hw, slope_hw) = series(|r| r.rmse_hw);
    let (frontier, slope_frontier) = series(|r| r.rmse_frontier);
    let (frontier_one, slope_frontier_one) = series(|r| r.rmse_frontier_one);
    SweepReport {
        kind,
        reference,
        fit_prefix: prefix.unwrap_or(used.len()).min(used.len()),
        rows,
        prefix_slopes: SeriesSlopes {
            h1,
            hw,
            frontier,
            frontier_one,
        },
        slope_h1,
        slope_hw,
        slope_frontier,
        slope_frontier_one,
        floor_hw,
    }
}

/// Spatial, temporal or shares sweep. In oracle mode errors are taken
/// against the closed-form no-cost values, otherwise against the run at the
/// largest sweep value.
pub fn run_convergence(c: &ExperimentConfig) -> Result<SweepReport> {
    let kind = c.kind();
    if !kind.is_resolution_sweep() {
        return Err(Error::Config(format!(
            "`{kind}` is not a convergence study"
        )));
    }
    let base = c.grid.spec()?;
    let values = c.values().to_vec();
    let grids: Vec<GridSpec> = values
        .iter()
        .map(|&v| {
            let n = v as usize;
            match kind {
                StudyKind::Spatial => GridSpec { n_xhat: n, ..base },
                StudyKind::Temporal => GridSpec { n_t: n, ..base },
                _ => GridSpec { n_y: n, ..base },
            }
        })
        .collect();
    let reference = effective_reference(c);
    if reference == Reference::Oracle && !no_costs(&c.model) {
        return Err(Error::Config(
            "oracle reference needs lambda = mu = 0".into(),
        ));
    }
    let points = c.test_points()?;
    let options = c.solver_options();
    let runs = map_entries(c.study.parallel.unwrap_or(false), grids, |g| {
        run_one(&c.model, g, &options, &points)
    });
    let (target, reference_index) = match reference {
        Reference::Oracle => (Sample::oracle(&c.model, &points)?, None),
        _ => {
            let last = runs.len() - 1;
            match &runs[last].sample {
                Ok(s) => (s.clone(), Some(last)),
                Err(e) => return Err(Error::Config(format!("reference run failed: {e}"))),
            }
        }
    };
    let rows = rows_against(&runs, &values, &values, &target, reference_index);
    Ok(finish_sweep(kind, reference, rows, c.study.prefix, None))
}

/// `P(M) = (l_max - l_min + 2M) / (l_max - l_min)`.
pub fn localization_ratio(domain: &DomainSpec, margin: f64) -> f64 {
    (domain.l_max - domain.l_min + 2.0 * margin) / (domain.l_max - domain.l_min)
}

/// Two-sided probability that the log-price increment over `tau` moves more
/// than `distance`, ignoring the drift.
pub fn gaussian_tail_mass(distance: f64, sigma: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        return if distance > 0.0 { 0.0 } else { 1.0 };
    }
    2.0 * norm_cdf(-distance / (sigma * tau.sqrt()))
}

/// Margin sweep at the mesh width of the configured grid. Errors are taken
/// against the largest margin.
pub fn run_localization(c: &ExperimentConfig) -> Result<SweepReport> {
    let base = c.grid.spec()?;
    let dx = base.dxhat();
    let margins = c.values().to_vec();
    let mut grids = Vec::new();
    for &m in &margins {
        let domain = DomainSpec::with_margin(base.domain.l_min, base.domain.l_max, m)?;
        let n_xhat = (domain.width() / dx).round().max(2.0) as usize;
        grids.push(GridSpec {
            domain,
            n_xhat,
            ..base
        });
    }
    let points = c.test_points()?;
    let options = c.solver_options();
    let runs = map_entries(c.study.parallel.unwrap_or(false), grids, |g| {
        run_one(&c.model, g, &options, &points)
    });
    let last = runs.len() - 1;
    let target = match &runs[last].sample {
        Ok(s) => s.clone(),
        Err(e) => return Err(Error::Config(format!("reference run failed: {e}"))),
    };
    let floor_hw = if no_costs(&c.model) {
        let exact = Sample::oracle(&c.model, &points)?;
        Some(rmse(&target.hw, &exact.hw)?)
    } else {
        None
    };
    let ratios: Vec<f64> = margins
        .iter()
        .map(|&m| localization_ratio(&base.domain, m))
        .collect();
    let mut rows = rows_against(&runs, &ratios, &margins, &target, Some(last));
    for (row, &m) in rows.iter_mut().zip(&margins) {
        row.tail_mass = Some(gaussian_tail_mass(m, c.model.sigma, c.model.maturity));
    }
    Ok(finish_sweep(
        StudyKind::Localization,
        Reference::Finest,
        rows,
        c.study.prefix,
        floor_hw,
    ))
}

/// Price minus Black-Scholes at the test points for each maturity or each
/// risk aversion in the sweep.
pub fn run_price_difference(c: &ExperimentConfig) -> Result<PriceDiffReport> {
    let kind = c.kind();
    let grid = c.grid.spec()?;
    let points = c.test_points()?;
    let options = c.solver_options();
    let params: Vec<ModelParams> = c
        .values()
        .iter()
        .map(|&v| match kind {
            StudyKind::PriceDiffVsT => ModelParams {
                maturity: v,
                ..c.model
            },
            StudyKind::PriceDiffVsS => c.model.with_gamma(v),
            _ => c.model,
        })
        .collect();
    if !matches!(kind, StudyKind::PriceDiffVsT | StudyKind::PriceDiffVsS) {
        return Err(Error::Config(format!(
            "`{kind}` is not a price-difference study"
        )));
    }
    let values = c.values().to_vec();
    let outcomes = map_entries(c.study.parallel.unwrap_or(false), params, |p| {
        diff_rows(&p, &grid, &options, &points)
    });
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    let mut curves: Vec<Option<Vec<f64>>> = Vec::new();
    for (&v, out) in values.iter().zip(outcomes) {
        match out {
            Ok((mut r, wall)) => {
                for row in &mut r {
                    row.parameter = v;
                }
                runs.push(DiffRun {
                    parameter: v,
                    resolution: (&grid).into(),
                    wall_seconds: wall,
                    min_diff: r.iter().map(|x| x.diff).reduce(f64::min),
                    ratio_at_l_max: r.last().and_then(|x| x.ratio),
                    error: None,
                });
                curves.push(Some(r.iter().map(|x| x.diff).collect()));
                rows.extend(r);
            }
            Err(e) => {
                runs.push(DiffRun {
                    parameter: v,
                    resolution: (&grid).into(),
                    wall_seconds: 0.0,
                    min_diff: None,
                    ratio_at_l_max: None,
                    error: Some(e.to_string()),
                });
                curves.push(None);
            }
        }
    }
    let min_increment = if kind == StudyKind::PriceDiffVsS {
        curves
            .windows(2)
            .filter_map(|w| match (&w[0], &w[1]) {
                (Some(a), Some(b)) => a.iter().zip(b).map(|(x, y)| y - x).reduce(f64::min),
                _ => None,
            })
            .reduce(f64::min)
    } else {
        None
    };
    Ok(PriceDiffReport {
        kind,
        rows,
        runs,
        min_increment,
    })
}

fn diff_rows(
    params: &ModelParams,
    grid: &GridSpec,
    options: &SolverOptions,
    points: &[f64],
) -> Result<(Vec<DiffRow>, f64)> {
    let sol = solve(params, grid, options)?;
    let mut rows = Vec::new();
    for &x in points {
        let spot = x.exp();
        let price = sol.price_at(0, x)?;
        let bs = bs_at(params, spot)?;
        let diff = price - bs;
        let cost = params.lambda * spot;
        rows.push(DiffRow {
            parameter: 0.0,
            xhat: x,
            spot,
            price,
            bs,
            diff,
            ratio: (cost > 0.0).then(|| diff / cost),
        });
    }
    Ok((rows, sol.wall_seconds))
}

/// `((p - BS) - lambda S) / (lambda S)`.
pub fn overshoot_ratio(diff: f64, lambda: f64, spot: f64) -> Result<f64> {
    let cost = lambda * spot;
    if !(cost > 0.0) {
        return Err(Error::param(
            "lambda",
            "the overshoot ratio needs lambda S > 0",
        ));
    }
    Ok((diff - cost) / cost)
}

/// Overshoot ratio at the test points for each risk aversion, and its
/// regression on `ln gamma` at `xhat_eval`.
pub fn run_overshoot(c: &ExperimentConfig) -> Result<OvershootReport> {
    if !(c.model.lambda > 0.0) {
        return Err(Error::param(
            "lambda",
            "the overshoot ratio needs a positive purchase cost",
        ));
    }
    let grid = c.grid.spec()?;
    let points = c.test_points()?;
    let options = c.solver_options();
    let xhat_eval = c.study.xhat_eval.unwrap_or_else(|| c.model.log_strike());
    let gammas = c.values().to_vec();
    let outcomes = map_entries(c.study.parallel.unwrap_or(false), gammas.clone(), |g| {
        let p = c.model.with_gamma(g);
        solve(&p, &grid, &options).and_then(|sol| {
            let mut out = Vec::new();
            for &x in points.iter().chain(std::iter::once(&xhat_eval)) {
                let spot = x.exp();
                let diff = sol.price_at(0, x)? - bs_at(&p, spot)?;
                out.push((x, spot, overshoot_ratio(diff, p.lambda, spot)?));
            }
            Ok((out, sol.wall_seconds))
        })
    });
    let mut rows = Vec::new();
    let mut eval = Vec::new();
    let mut runs = Vec::new();
    for (&g, out) in gammas.iter().zip(outcomes) {
        match out {
            Ok((mut v, wall)) => {
                let (_, _, at_eval) = v.pop().expect("evaluation point appended");
                eval.push((g, at_eval));
                for (x, spot, ratio) in v {
                    rows.push(OvershootRow {
                        gamma: g,
                        log_gamma: g.ln(),
                        xhat: x,
                        spot,
                        ratio,
                    });
                }
                runs.push(DiffRun {
                    parameter: g,
                    resolution: (&grid).into(),
                    wall_seconds: wall,
                    min_diff: None,
                    ratio_at_l_max: None,
                    error: None,
                });
            }
            Err(e) => runs.push(DiffRun {
                parameter: g,
                resolution: (&grid).into(),
                wall_seconds: 0.0,
                min_diff: None,
                ratio_at_l_max: None,
                error: Some(e.to_string()),
            }),
        }
    }
    let lx: Vec<f64> = eval.iter().map(|(g, _)| g.ln()).collect();
    let ly: Vec<f64> = eval.iter().map(|(_, r)| *r).collect();
    Ok(OvershootReport {
        rows,
        xhat_eval,
        fit: ols(&lx, &ly),
        eval,
        runs,
    })
}
