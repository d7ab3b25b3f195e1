//! Experiment configuration: a TOML file with `[model]`, `[grid]` and
//! `[study]` tables. Every field is optional; [`ExperimentConfig::resolve`]
//! fills the study-specific defaults so the resolved config describes a run
//! completely.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localization::DomainSpec;
use crate::model::ModelParams;
use crate::solver::{GridSpec, SolverOptions};
use crate::spectral::Startup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StudyKind {
    #[serde(rename = "price")]
    Price,
    #[serde(rename = "spatial")]
    Spatial,
    #[serde(rename = "temporal")]
    Temporal,
    #[serde(rename = "shares")]
    Shares,
    #[serde(rename = "localization")]
    Localization,
    #[serde(rename = "price_diff_vs_T")]
    PriceDiffVsT,
    #[serde(rename = "price_diff_vs_S")]
    PriceDiffVsS,
    #[serde(rename = "overshoot")]
    Overshoot,
}

impl StudyKind {
    pub const STUDIES: [StudyKind; 7] = [
        StudyKind::Spatial,
        StudyKind::Temporal,
        StudyKind::Shares,
        StudyKind::Localization,
        StudyKind::PriceDiffVsT,
        StudyKind::PriceDiffVsS,
        StudyKind::Overshoot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Price => "price",
            StudyKind::Spatial => "spatial",
            StudyKind::Temporal => "temporal",
            StudyKind::Shares => "shares",
            StudyKind::Localization => "localization",
            StudyKind::PriceDiffVsT => "price_diff_vs_T",
            StudyKind::PriceDiffVsS => "price_diff_vs_S",
            StudyKind::Overshoot => "overshoot",
        }
    }

    /// Studies whose sweep values are mesh resolutions.
    pub fn is_resolution_sweep(self) -> bool {
        matches!(
            self,
            StudyKind::Spatial | StudyKind::Temporal | StudyKind::Shares
        )
    }

    fn default_values(self) -> Vec<f64> {
        let v: &[f64] = match self {
            StudyKind::Price => &[],
            StudyKind::Spatial => &[50.0, 100.0, 200.0, 400.0],
            StudyKind::Temporal => &[4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0],
            StudyKind::Shares => &[16.0, 32.0, 64.0, 128.0, 256.0],
            StudyKind::Localization => &[1.0, 2.0, 3.0, 4.0],
            StudyKind::PriceDiffVsT => &[0.1, 0.25, 0.5, 1.0],
            StudyKind::PriceDiffVsS => &[0.5, 1.0, 2.0],
            StudyKind::Overshoot => &[0.5, 1.0, 2.0, 4.0, 8.0],
        };
        v.to_vec()
    }

    /// Desk-scale `(n_t, n_y, n_xhat)`; the swept coordinate is overwritten
    /// per run.
    fn desk_resolution(self) -> (usize, usize, usize) {
        match self {
            StudyKind::Price => (1000, 200, 200),
            StudyKind::Spatial => (500, 400, 200),
            StudyKind::Temporal => (512, 200, 200),
            StudyKind::Shares => (500, 256, 200),
            StudyKind::Localization => (250, 100, 200),
            StudyKind::PriceDiffVsT | StudyKind::PriceDiffVsS | StudyKind::Overshoot => {
                (500, 200, 200)
            }
        }
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StudyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        std::iter::once(StudyKind::Price)
            .chain(StudyKind::STUDIES)
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown study kind `{s}`")))
    }
}

/// What the sweep errors are measured against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// Closed-form no-cost values when the costs vanish, the finest run
    /// otherwise. Temporal sweeps always use the finest run.
    #[default]
    Auto,
    Oracle,
    Finest,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(Error::Config(format!("unknown report format `{s}`"))),
        }
    }
}

/// The `[grid]` table, flattened.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n_t: Option<usize>,
    pub n_y: Option<usize>,
    pub n_xhat: Option<usize>,
    pub y_min: Option<f64>,
    pub y_max: Option<f64>,
    pub l_min: Option<f64>,
    pub l_max: Option<f64>,
    pub xhat_min: Option<f64>,
    pub xhat_max: Option<f64>,
}

impl GridConfig {
    /// The mesh described by this table; unset fields take the library
    /// defaults.
    pub fn spec(&self) -> Result<GridSpec> {
        let d = GridSpec::default();
        let dom = DomainSpec::default();
        let grid = GridSpec {
            domain: DomainSpec::new(
                self.l_min.unwrap_or(dom.l_min),
                self.l_max.unwrap_or(dom.l_max),
                self.xhat_min.unwrap_or(dom.xhat_min),
                self.xhat_max.unwrap_or(dom.xhat_max),
            )?,
            y_min: self.y_min.unwrap_or(d.y_min),
            y_max: self.y_max.unwrap_or(d.y_max),
            n_t: self.n_t.unwrap_or(d.n_t),
            n_y: self.n_y.unwrap_or(d.n_y),
            n_xhat: self.n_xhat.unwrap_or(d.n_xhat),
        };
        grid.validate()?;
        Ok(grid)
    }

    fn fill(&mut self, resolution: (usize, usize, usize)) {
        let d = GridSpec::default();
        self.n_t.get_or_insert(resolution.0);
        self.n_y.get_or_insert(resolution.1);
        self.n_xhat.get_or_insert(resolution.2);
        self.y_min.get_or_insert(d.y_min);
        self.y_max.get_or_insert(d.y_max);
        self.l_min.get_or_insert(d.domain.l_min);
        self.l_max.get_or_insert(d.domain.l_max);
        self.xhat_min.get_or_insert(d.domain.xhat_min);
        self.xhat_max.get_or_insert(d.domain.xhat_max);
    }
}

/// The `[study]` table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub kind: Option<StudyKind>,
    /// Sweep values: resolutions for spatial/temporal/shares, margins `M`
    /// for localization, maturities for `price_diff_vs_T`, risk aversions
    /// for `price_diff_vs_S` and overshoot.
    pub values: Option<Vec<f64>>,
    /// Number of test-point intervals on `[l_min, l_max]`.
    pub n_p: Option<usize>,
    /// Leading points used by the headline slope fit; all when unset.
    pub prefix: Option<usize>,
    pub reference: Option<Reference>,
    pub substeps: Option<usize>,
    pub startup: Option<Startup>,
    /// Log-price at which the overshoot ratio is regressed on `log gamma`.
    pub xhat_eval: Option<f64>,
    pub parallel: Option<bool>,
    pub out: Option<PathBuf>,
    pub format: Option<ReportFormat>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelParams,
    pub grid: GridConfig,
    pub study: StudyConfig,
}

/// Paper-scale mesh: `dt = 5e-5` at `T = 0.5`, `dy = 1.25e-3` on `[0, 2]`.
pub const PAPER_RESOLUTION: (usize, usize, usize) = (10_000, 1600, 1600);

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fills every unset field for `kind` (which overrides `study.kind`) and
    /// validates the result.
    pub fn resolve(&self, kind: Option<StudyKind>, paper_scale: bool) -> Result<Self> {
        let mut c = self.clone();
        let kind = kind.or(c.study.kind).unwrap_or(StudyKind::Price);
        c.study.kind = Some(kind);
        c.grid.fill(if paper_scale {
            PAPER_RESOLUTION
        } else {
            kind.desk_resolution()
        });
        if kind != StudyKind::Price {
            c.study.values.get_or_insert_with(|| kind.default_values());
        }
        c.study.n_p.get_or_insert(10);
        c.study.reference.get_or_insert(Reference::Auto);
        c.study
            .substeps
            .get_or_insert(if kind == StudyKind::Temporal { 4 } else { 1 });
        c.study.startup.get_or_insert(Startup::default());
        c.study.parallel.get_or_insert(false);
        c.study.format.get_or_insert(ReportFormat::Csv);
        if kind == StudyKind::Overshoot {
            c.study.xhat_eval.get_or_insert(c.model.log_strike());
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let grid = self.grid.spec()?;
        let s = &self.study;
        let kind = s.kind.unwrap_or(StudyKind::Price);
        if s.n_p.is_some_and(|n| n < 2) {
            return Err(Error::param("n_p", "need at least 2 test-point intervals"));
        }
        if s.substeps == Some(0) {
            return Err(Error::param("substeps", "must be at least 1"));
        }
        if s.prefix.is_some_and(|p| p < 2) {
            return Err(Error::param("prefix", "a slope needs at least 2 points"));
        }
        if kind == StudyKind::Price {
            return Ok(());
        }
        let values = s.values.as_deref().unwrap_or(&[]);
        if values.is_empty() {
            return Err(Error::param("values", "sweep list must not be empty"));
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param(
                "values",
                "sweep list must be strictly increasing",
            ));
        }
        if kind.is_resolution_sweep() && values.iter().any(|&v| v < 2.0 || v.fract() != 0.0) {
            return Err(Error::param("values", "resolutions must be integers >= 2"));
        }
        if values[0] <= 0.0 {
            return Err(Error::param("values", "sweep values must be positive"));
        }
        if kind == StudyKind::Overshoot && self.model.lambda <= 0.0 {
            return Err(Error::param(
                "lambda",
                "the overshoot ratio needs a positive purchase cost",
            ));
        }
        if let Some(x) = s.xhat_eval {
            if !(x >= grid.domain.xhat_min && x <= grid.domain.xhat_max) {
                return Err(Error::OutOfRange {
                    value: x,
                    lo: grid.domain.xhat_min,
                    hi: grid.domain.xhat_max,
                });
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> StudyKind {
        self.study.kind.unwrap_or(StudyKind::Price)
    }

    pub fn values(&self) -> &[f64] {
        self.study.values.as_deref().unwrap_or(&[])
    }

    pub fn n_p(&self) -> usize {
        self.study.n_p.unwrap_or(10)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            substeps: self.study.substeps.unwrap_or(1),
            startup: self.study.startup.unwrap_or_default(),
            ..SolverOptions::default()
        }
    }

    /// Uniform partition of `[l_min, l_max]` into `n_p` intervals.
    pub fn test_points(&self) -> Result<Vec<f64>> {
        let d = self.grid.spec()?.domain;
        let n = self.n_p();
        Ok((0..=n)
            .map(|i| d.l_min + (d.l_max - d.l_min) * i as f64 / n as f64)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_partial_tables() {
        let c = ExperimentConfig::from_toml_str(
            "[model]\nlambda = 0.002\nmu = 0.002\n[grid]\nn_xhat = 64\n[study]\nkind = \"price_diff_vs_S\"\n",
        )
        .unwrap();
        assert_eq!(c.model.lambda, 0.002);
        assert_eq!(c.model.sigma, 0.1);
        assert_eq!(c.grid.n_xhat, Some(64));
        assert_eq!(c.study.kind, Some(StudyKind::PriceDiffVsS));
        let r = c.resolve(None, false).unwrap();
        assert_eq!(r.values(), &[0.5, 1.0, 2.0]);
        assert_eq!(r.grid.spec().unwrap().n_xhat, 64);
        assert_eq!(r.grid.n_t, Some(500));
    }

    #[test]
    fn rejects_unknown_keys() {
        for text in [
            "[model]\nvolatility = 0.2\n",
            "[grid]\nnx = 10\n",
            "[study]\nsweep = [1, 2]\n",
            "[solver]\nsubsteps = 2\n",
        ] {
            assert!(ExperimentConfig::from_toml_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn sweep_validation() {
        let bad = [
            "[study]\nkind = \"spatial\"\nvalues = []\n",
            "[study]\nkind = \"spatial\"\nvalues = [100, 50]\n",
            "[study]\nkind = \"spatial\"\nvalues = [50, 50]\n",
            "[study]\nkind = \"shares\"\nvalues = [16.5, 32]\n",
            "[study]\nkind = \"spatial\"\nn_p = 1\n",
            "[study]\nkind = \"overshoot\"\n",
        ];
        for text in bad {
            let c = ExperimentConfig::from_toml_str(text).unwrap();
            assert!(c.resolve(None, false).is_err(), "{text}");
        }
    }

    #[test]
    fn resolution_round_trips_through_toml() {
        let c = ExperimentConfig::default()
            .resolve(Some(StudyKind::Temporal), false)
            .unwrap();
        assert_eq!(c.study.substeps, Some(4));
        let text = c.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.resolve(None, false).unwrap(), c);
    }

    #[test]
    fn kind_names() {
        for k in StudyKind::STUDIES {
            assert_eq!(k.name().parse::<StudyKind>().unwrap(), k);
        }
        assert!("nope".parse::<StudyKind>().is_err());
        assert_eq!("JSON".parse::<ReportFormat>().unwrap(), ReportFormat::Json);
    }

    #[test]
    fn test_points_partition() {
        let c = ExperimentConfig::default().resolve(None, false).unwrap();
        let p = c.test_points().unwrap();
        assert_eq!(p.len(), 11);
        assert_eq!(p[0], 1.0);
        assert_eq!(p[10], 3.0);
        assert!((p[3] - 1.6).abs() < 1e-15);
    }

    #[test]
    fn paper_scale_grid() {
        let c = ExperimentConfig::default().resolve(None, true).unwrap();
        let g = c.grid.spec().unwrap();
        assert_eq!((g.n_t, g.n_y, g.n_xhat), PAPER_RESOLUTION);
        assert!((g.dt(0.5) - 5e-5).abs() < 1e-18);
        assert!((g.dy() - 1.25e-3).abs() < 1e-15);
    }
}
