//! Model selection for one distribution or a whole dataset.
//!
//! The cascade is fixed: monotone targets go to the closed-form solver; the
//! rest are handed to the activation-rate optimizer; targets it cannot match
//! within budget are replaced by a fitted monotone surrogate and solved in
//! closed form. Every solution is checked with one simulation run.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvefit::{self, CurveFitResult};
use crate::distributions::{
    classify, mae, wasserstein_of_values, AgeDistribution, ModelKind, ModelParams, Shape,
};
use crate::error::{Error, Result};
use crate::io::{self, ParamsFile};
use crate::model1::{self, FreeParam};
use crate::model2::{self, DEConfig};
use crate::simulator::{self, SimConfig};

/// Mean curve-fit Wasserstein distance reported for the reference dataset;
/// fits above it are flagged.
pub const DEFAULT_WASSERSTEIN_WARNING: f64 = 0.0055;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Route {
    Model1,
    Model2,
    CurveFit,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub de: DEConfig,
    pub sim: SimConfig,
    pub free_param: FreeParam,
    pub wasserstein_warning: f64,
    /// Run one validation simulation per solved entry.
    pub validate: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            de: DEConfig::default(),
            sim: SimConfig::default(),
            free_param: FreeParam::Midpoint,
            wasserstein_warning: DEFAULT_WASSERSTEIN_WARNING,
            validate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub mae_vs_analytic: f64,
    pub mae_vs_target: f64,
    pub total_deaths: u64,
    pub steady_estimate: Vec<f64>,
}

/// Outcome of the cascade for one distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solved {
    pub route: Route,
    pub original: AgeDistribution,
    /// Distribution the parameters reproduce: the original, or the fitted
    /// surrogate on the curve-fit route.
    pub target: Option<AgeDistribution>,
    pub params: Option<ModelParams>,
    pub curve_fit: Option<CurveFitResult>,
    pub validation: Option<Validation>,
    pub failure: Option<String>,
    /// Curve fit further from the original than the warning threshold.
    pub poor_fit: bool,
}

impl Solved {
    /// Parameter file for this entry, when it was solved.
    pub fn params_file(&self, country: Option<String>, config: &PipelineConfig) -> Option<ParamsFile> {
        let params = self.params.clone()?;
        let target = self.target.clone()?;
        let mut file = ParamsFile::new(country, target, params);
        file.curve = self.curve_fit.as_ref().map(|c| c.params);
        if self.route == Route::CurveFit {
            file.original = Some(self.original.clone());
        }
        match self.route {
            Route::Model2 => file.de_config = Some(config.de.clone()),
            Route::Model1 | Route::CurveFit => file.free_param_choice = Some(config.free_param),
            Route::Failed => {}
        }
        Some(file)
    }
}

fn model1_params(target: &AgeDistribution, kind: ModelKind, choice: FreeParam) -> Result<ModelParams> {
    let survival = model1::solve(target, choice)?;
    let state = model1::steady_state(&survival)?;
    let mut params = ModelParams::new(kind, survival, None)?;
    params
        .diagnostics
        .insert("mae".into(), mae(state.proportions(), target.proportions())?);
    params
        .provenance
        .insert("free_param".into(), choice.describe());
    Ok(params)
}

fn analytic_state(params: &ModelParams) -> Result<AgeDistribution> {
    match &params.activation {
        Some(alpha) => model2::steady_state2(&params.survival, alpha),
        None => model1::steady_state(&params.survival),
    }
}

fn validate_by_simulation(
    target: &AgeDistribution,
    params: &mut ModelParams,
    sim: &SimConfig,
) -> Result<Validation> {
    let analytic = analytic_state(params)?;
    let result = simulator::run(target, params, sim)?;
    let validation = Validation {
        mae_vs_analytic: mae(&result.steady_estimate, analytic.proportions())?,
        mae_vs_target: mae(&result.steady_estimate, target.proportions())?,
        total_deaths: result.total_deaths,
        steady_estimate: result.steady_estimate,
    };
    params
        .diagnostics
        .insert("sim_mae_vs_analytic".into(), validation.mae_vs_analytic);
    params
        .provenance
        .insert("sim_seed".into(), sim.seed.to_string());
    Ok(validation)
}

fn cascade(dist: &AgeDistribution, config: &PipelineConfig) -> Result<Solved> {
    let mut solved = Solved {
        route: Route::Failed,
        original: dist.clone(),
        target: None,
        params: None,
        curve_fit: None,
        validation: None,
        failure: None,
        poor_fit: false,
    };

    let (route, target, mut params) = if classify(dist) == Shape::MonotoneNonIncreasing {
        let params = model1_params(dist, ModelKind::Model1, config.free_param)?;
        (Route::Model1, dist.clone(), params)
    } else {
        let solution = model2::optimize(dist, &config.de)?;
        if solution.converged {
            let mut params =
                ModelParams::new(ModelKind::Model2, solution.survival, Some(solution.activation))?;
            params.diagnostics.insert("mae".into(), solution.mae);
            params
                .diagnostics
                .insert("iterations_used".into(), solution.iterations_used as f64);
            params.provenance.insert("free_param".into(), "searched".into());
            params
                .provenance
                .insert("de_seed".into(), config.de.seed.to_string());
            (Route::Model2, dist.clone(), params)
        } else {
            let fit = match curvefit::fit(dist) {
                Ok(fit) => fit,
                Err(e) => {
                    solved.failure = Some(e.to_string());
                    return Ok(solved);
                }
            };
            let mut params = model1_params(&fit.fitted, ModelKind::Model1OnFitted, config.free_param)?;
            params
                .diagnostics
                .insert("wasserstein_to_original".into(), fit.wasserstein_to_original);
            params.diagnostics.insert(
                "wasserstein_of_values".into(),
                wasserstein_of_values(fit.fitted.proportions(), dist.proportions())?,
            );
            params.diagnostics.insert("model2_mae".into(), solution.mae);
            params
                .diagnostics
                .insert("iterations_used".into(), solution.iterations_used as f64);
            params
                .provenance
                .insert("curve_k".into(), fit.params.k.to_string());
            solved.poor_fit = fit.wasserstein_to_original > config.wasserstein_warning;
            let target = fit.fitted.clone();
            solved.curve_fit = Some(fit);
            (Route::CurveFit, target, params)
        }
    };

    if config.validate {
        solved.validation = Some(validate_by_simulation(&target, &mut params, &config.sim)?);
    }
    solved.route = route;
    solved.target = Some(target);
    solved.params = Some(params);
    Ok(solved)
}

/// Runs the model-selection cascade on one distribution.
///
/// Failures inside the cascade are reported as [`Route::Failed`] with a reason.
pub fn select_and_solve(dist: &AgeDistribution, config: &PipelineConfig) -> Solved {
    cascade(dist, config).unwrap_or_else(|e| Solved {
        route: Route::Failed,
        original: dist.clone(),
        target: None,
        params: None,
        curve_fit: None,
        validation: None,
        failure: Some(e.to_string()),
        poor_fit: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub route_counts: BTreeMap<Route, usize>,
    /// Curve-fit Wasserstein distances by country.
    pub wasserstein: Vec<(String, f64)>,
    pub mean_wasserstein: Option<f64>,
    pub below_mean_wasserstein: usize,
    pub histogram: Vec<HistogramBin>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    /// Entries sorted by name.
    pub entries: Vec<(String, Solved)>,
    pub summary: Summary,
}

/// Equal-width histogram over `[0, max]`.
pub fn histogram(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    let max = values.iter().cloned().fold(0.0f64, f64::max);
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let width = if max > 0.0 { max / bins as f64 } else { 1.0 };
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            lower: i as f64 * width,
            upper: (i + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for &v in values {
        let index = ((v / width) as usize).min(bins - 1);
        out[index].count += 1;
    }
    out
}

fn summarize(entries: &[(String, Solved)]) -> Summary {
    let mut route_counts: BTreeMap<Route, usize> =
        [Route::Model1, Route::Model2, Route::CurveFit, Route::Failed]
            .into_iter()
            .map(|r| (r, 0))
            .collect();
    let mut wasserstein = Vec::new();
    for (name, solved) in entries {
        *route_counts.entry(solved.route).or_default() += 1;
        if let Some(fit) = &solved.curve_fit {
            if solved.route == Route::CurveFit {
                wasserstein.push((name.clone(), fit.wasserstein_to_original));
            }
        }
    }
    let values: Vec<f64> = wasserstein.iter().map(|(_, w)| *w).collect();
    let mean_wasserstein =
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
    let below_mean_wasserstein = mean_wasserstein
        .map_or(0, |m| values.iter().filter(|&&w| w < m).count());
    Summary {
        total: entries.len(),
        route_counts,
        histogram: histogram(&values, 20),
        wasserstein,
        mean_wasserstein,
        below_mean_wasserstein,
    }
}

/// Runs the cascade over every entry (in parallel) and aggregates the routes.
pub fn run_dataset(
    dataset: &[(String, AgeDistribution)],
    config: &PipelineConfig,
) -> Result<PipelineReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut entries: Vec<(String, Solved)> = dataset
        .par_iter()
        .map(|(name, dist)| (name.clone(), select_and_solve(dist, config)))
        .collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    let summary = summarize(&entries);
    Ok(PipelineReport { entries, summary })
}

/// File-system-safe stem for a country name.
pub fn file_stem(name: &str) -> String {
    let stem: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    if stem.is_empty() {
        "_".into()
    } else {
        stem
    }
}

#[derive(Serialize)]
struct CountryLine<'a> {
    country: &'a str,
    route: Route,
    n: usize,
    mae: Option<f64>,
    wasserstein_to_original: Option<f64>,
    sim_mae_vs_analytic: Option<f64>,
    poor_fit: bool,
    failure: Option<&'a str>,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    library_version: &'static str,
    config: &'a PipelineConfig,
    summary: &'a Summary,
    countries: Vec<CountryLine<'a>>,
}

/// Writes parameter files, `summary.json`, and plot-data CSVs under `dir`.
pub fn write_report(report: &PipelineReport, config: &PipelineConfig, dir: &Path) -> Result<()> {
    let params_dir = dir.join("params");
    let plots_dir = dir.join("plots");
    std::fs::create_dir_all(&params_dir)?;
    std::fs::create_dir_all(&plots_dir)?;

    let mut countries = Vec::new();
    for (name, solved) in &report.entries {
        let stem = file_stem(name);
        if let Some(file) = solved.params_file(Some(name.clone()), config) {
            io::emit_params(&file, &params_dir.join(format!("{stem}.json")))?;
        }
        let original = solved.original.proportions();
        let mut series: Vec<(&str, Vec<f64>)> = vec![("original", original.to_vec())];
        if let Some(target) = &solved.target {
            if solved.route == Route::CurveFit {
                series.push(("fitted", target.proportions().to_vec()));
            }
        }
        if let Some(params) = &solved.params {
            if let Ok(state) = analytic_state(params) {
                series.push(("analytic_steady_state", state.proportions().to_vec()));
            }
        }
        if let Some(v) = &solved.validation {
            series.push(("simulated", v.steady_estimate.clone()));
        }
        let borrowed: Vec<(&str, &[f64])> = series.iter().map(|(n, v)| (*n, v.as_slice())).collect();
        io::write_overlay(
            &plots_dir.join(format!("overlay_{stem}.csv")),
            solved.original.labels(),
            &borrowed,
        )?;

        let diag = |key: &str| solved.params.as_ref().and_then(|p| p.diagnostics.get(key).copied());
        countries.push(CountryLine {
            country: name,
            route: solved.route,
            n: solved.original.n(),
            mae: diag("mae"),
            wasserstein_to_original: diag("wasserstein_to_original"),
            sim_mae_vs_analytic: diag("sim_mae_vs_analytic"),
            poor_fit: solved.poor_fit,
            failure: solved.failure.as_deref(),
        });
    }

    let mut w = csv::Writer::from_path(plots_dir.join("wasserstein.csv"))?;
    w.write_record(["country", "wasserstein"])?;
    for (name, value) in &report.summary.wasserstein {
        w.write_record([name.as_str(), &io::format_sig(*value)])?;
    }
    w.flush()?;

    let mut h = csv::Writer::from_path(plots_dir.join("wasserstein_histogram.csv"))?;
    h.write_record(["lower", "upper", "count"])?;
    for bin in &report.summary.histogram {
        h.write_record([io::format_sig(bin.lower), io::format_sig(bin.upper), bin.count.to_string()])?;
    }
    h.flush()?;

    io::write_json(
        &dir.join("summary.json"),
        &SummaryFile {
            library_version: env!("CARGO_PKG_VERSION"),
            config,
            summary: &report.summary,
            countries,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config() -> PipelineConfig {
        PipelineConfig {
            sim: SimConfig {
                num_agents: 2000,
                num_steps: 120,
                burn_in: 80,
                ..SimConfig::default()
            },
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn monotone_goes_to_model1() {
        let d = AgeDistribution::from_weights(&[0.5, 0.3, 0.2]).unwrap();
        let solved = select_and_solve(&d, &quick_config());
        assert_eq!(solved.route, Route::Model1);
        let params = solved.params.unwrap();
        assert_eq!(params.kind, ModelKind::Model1);
        assert!(params.diagnostics["mae"] < 1e-15);
        assert!(params.diagnostics.contains_key("sim_mae_vs_analytic"));
    }

    #[test]
    fn hump_goes_to_model2() {
        let d = AgeDistribution::from_weights(&[0.3, 0.4, 0.3]).unwrap();
        let solved = select_and_solve(&d, &quick_config());
        assert_eq!(solved.route, Route::Model2);
        assert!(solved.params.unwrap().diagnostics["mae"] < 1e-4);
    }

    #[test]
    fn exhausted_budget_goes_to_curve_fit() {
        let d = AgeDistribution::from_weights(&[0.2, 0.25, 0.2, 0.15, 0.12, 0.08]).unwrap();
        let mut config = quick_config();
        config.de.max_iterations = 1;
        config.de.derive_survival = false;
        let solved = select_and_solve(&d, &config);
        assert_eq!(solved.route, Route::CurveFit);
        let params = solved.params.unwrap();
        assert_eq!(params.kind, ModelKind::Model1OnFitted);
        assert!(params.diagnostics["wasserstein_to_original"] > 0.0);
        assert!(params.diagnostics["mae"] < 1e-12);
    }

    #[test]
    fn empty_dataset() {
        assert_eq!(
            run_dataset(&[], &quick_config()).unwrap_err(),
            Error::EmptyDataset
        );
    }

    #[test]
    fn histogram_bins() {
        let bins = histogram(&[0.0, 0.5, 1.0], 2);
        assert_eq!(bins.iter().map(|b| b.count).collect::<Vec<_>>(), vec![1, 2]);
        assert!(histogram(&[], 3).is_empty());
    }

    #[test]
    fn file_stems() {
        assert_eq!(file_stem("Côte d'Ivoire"), "C_te_d_Ivoire");
        assert_eq!(file_stem("Egypt"), "Egypt");
    }
}
