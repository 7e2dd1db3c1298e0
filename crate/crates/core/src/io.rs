//! File formats: long-format population CSVs in, parameter files and
//! plot-data CSVs out.
//!
//! Input CSVs have one row per (country, age group) with a header row. The
//! default column names are `country`, `age_group` and `population`; other
//! exports can be read by remapping them with [`ColumnMapping`].
//!
//! Parameter files are pretty-printed JSON documents tagged with a schema
//! name and version. Floats are written in shortest round-trip form, so a
//! load after an emit reproduces every value bit for bit.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curvefit::{BreakpointFit, CurveParams};
use crate::distributions::{normalize, AgeDistribution, ModelParams};
use crate::error::{Error, Result};
use crate::model1::FreeParam;
use crate::model2::DEConfig;
use crate::simulator::SimConfig;

pub const PARAMS_SCHEMA: &str = "agedist.params";
pub const PARAMS_SCHEMA_VERSION: u32 = 1;

/// Formats a value with 10 significant digits.
pub fn format_sig(value: f64) -> String {
    format!("{value:.9e}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMapping {
    pub country: String,
    pub age_group: String,
    pub population: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            country: "country".into(),
            age_group: "age_group".into(),
            population: "population".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IngestReport {
    /// Valid countries in order of first appearance.
    pub distributions: Vec<(String, AgeDistribution)>,
    /// Countries rejected during validation, with the reason.
    pub skipped: Vec<(String, String)>,
}

impl IngestReport {
    pub fn get(&self, country: &str) -> Option<&AgeDistribution> {
        self.distributions
            .iter()
            .find(|(name, _)| name == country)
            .map(|(_, d)| d)
    }
}

/// Leading integer of a label such as `"0-4"`, `"100+"` or `"18"`.
fn label_start(label: &str) -> Option<u32> {
    let digits: String = label.trim().chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

/// `(start, end)` of a closed range label like `"5-9"`.
fn label_range(label: &str) -> Option<(u32, u32)> {
    let (lo, hi) = label.trim().split_once('-')?;
    Some((lo.trim().parse().ok()?, hi.trim().parse().ok()?))
}

/// Sorts a country's rows by age and checks that ranges tile without gaps.
///
/// Labels without a leading number keep their file order.
fn order_groups(mut rows: Vec<(String, f64)>) -> std::result::Result<Vec<(String, f64)>, String> {
    let mut seen = std::collections::HashSet::new();
    for (label, _) in &rows {
        if !seen.insert(label.clone()) {
            return Err(format!("duplicate age group {label:?}"));
        }
    }
    if rows.iter().all(|(label, _)| label_start(label).is_some()) {
        rows.sort_by_key(|(label, _)| label_start(label));
        for pair in rows.windows(2) {
            if let Some((_, end)) = label_range(&pair[0].0) {
                let next = label_start(&pair[1].0).expect("checked above");
                if next != end + 1 {
                    return Err(format!(
                        "age groups {:?} and {:?} are not contiguous",
                        pair[0].0, pair[1].0
                    ));
                }
            }
        }
    }
    Ok(rows)
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Config(format!("column {name:?} not found in header")))
}

/// Reads a long-format CSV into one distribution per country.
pub fn read_dataset<R: std::io::Read>(reader: R, mapping: &ColumnMapping) -> Result<IngestReport> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers()?.clone();
    let country_col = column_index(&headers, &mapping.country)?;
    let age_col = column_index(&headers, &mapping.age_group)?;
    let pop_col = column_index(&headers, &mapping.population)?;

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(String, f64)>> = HashMap::new();
    for record in csv.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| {
            record
                .get(i)
                .ok_or_else(|| Error::Csv(format!("line {line}: missing column {i}")))
        };
        let country = field(country_col)?.to_string();
        let label = field(age_col)?.to_string();
        let raw = field(pop_col)?;
        let population: f64 = raw
            .parse()
            .map_err(|_| Error::Csv(format!("line {line}: invalid population {raw:?}")))?;
        if !rows.contains_key(&country) {
            order.push(country.clone());
        }
        rows.entry(country).or_default().push((label, population));
    }

    let mut report = IngestReport::default();
    for country in order {
        let groups = rows.remove(&country).expect("recorded above");
        let result = order_groups(groups).and_then(|groups| {
            let (labels, counts): (Vec<String>, Vec<f64>) = groups.into_iter().unzip();
            normalize(&counts, &labels).map_err(|e| e.to_string())
        });
        match result {
            Ok(dist) => report.distributions.push((country, dist)),
            Err(reason) => {
                log::warn!("skipping {country}: {reason}");
                report.skipped.push((country, reason));
            }
        }
    }
    Ok(report)
}

pub fn ingest_csv(path: &Path, mapping: &ColumnMapping) -> Result<IngestReport> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_dataset(file, mapping)
}

/// Writes distributions in the canonical long format (full precision).
pub fn write_dataset<W: Write>(writer: W, dataset: &[(String, AgeDistribution)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["country", "age_group", "population"])?;
    for (country, dist) in dataset {
        for (label, p) in dist.labels().iter().zip(dist.proportions()) {
            out.write_record([country.as_str(), label.as_str(), &p.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// A self-contained description of one solved parameterisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub schema: String,
    pub schema_version: u32,
    pub library_version: String,
    pub country: Option<String>,
    /// Distribution the parameters reproduce in steady state.
    pub target: AgeDistribution,
    /// Observed distribution when `target` is a fitted surrogate.
    pub original: Option<AgeDistribution>,
    pub params: ModelParams,
    pub curve: Option<CurveParams>,
    pub free_param_choice: Option<FreeParam>,
    pub de_config: Option<DEConfig>,
}

impl ParamsFile {
    pub fn new(country: Option<String>, target: AgeDistribution, params: ModelParams) -> Self {
        Self {
            schema: PARAMS_SCHEMA.into(),
            schema_version: PARAMS_SCHEMA_VERSION,
            library_version: env!("CARGO_PKG_VERSION").into(),
            country,
            target,
            original: None,
            params,
            curve: None,
            free_param_choice: None,
            de_config: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.params.n() != self.target.n() {
            return Err(Error::Schema(format!(
                "parameters have {} groups but the target has {}",
                self.params.n(),
                self.target.n()
            )));
        }
        if self.params.diagnostics.values().any(|v| !v.is_finite()) {
            return Err(Error::Schema("diagnostics must be finite".into()));
        }
        Ok(())
    }
}

pub fn params_to_string(file: &ParamsFile) -> Result<String> {
    file.validate()?;
    let mut text = serde_json::to_string_pretty(file).map_err(|e| Error::Schema(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn params_from_str(text: &str) -> Result<ParamsFile> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("invalid JSON: {e}")))?;
    match value.get("schema").and_then(|s| s.as_str()) {
        Some(PARAMS_SCHEMA) => {}
        other => {
            return Err(Error::Schema(format!(
                "expected schema {PARAMS_SCHEMA:?}, found {other:?}"
            )))
        }
    }
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == PARAMS_SCHEMA_VERSION as u64 => {}
        other => {
            return Err(Error::Schema(format!(
                "unsupported schema_version {other:?} (this build reads {PARAMS_SCHEMA_VERSION})"
            )))
        }
    }
    let file: ParamsFile =
        serde_json::from_value(value).map_err(|e| Error::Schema(format!("invalid parameters: {e}")))?;
    file.validate()?;
    Ok(file)
}

pub fn emit_params(file: &ParamsFile, path: &Path) -> Result<()> {
    std::fs::write(path, params_to_string(file)?)?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<ParamsFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    params_from_str(&text)
}

/// Writes any serializable report as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Schema(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Simulation output file: the result plus the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationFile {
    pub library_version: String,
    pub config: SimConfig,
    pub mae_vs_target: f64,
    pub result: crate::simulator::SimResult,
}

/// Per-breakpoint fit table as CSV.
pub fn write_fit_report(path: &Path, table: &[BreakpointFit]) -> Result<()> {
    let mut out = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    out.write_record(["k", "sse", "wasserstein", "a", "b", "c", "iterations"])?;
    for row in table {
        let (a, b, c) = row
            .params
            .map_or((f64::NAN, f64::NAN, f64::NAN), |p| (p.a, p.b, p.c));
        out.write_record([
            row.k.to_string(),
            format_sig(row.sse),
            format_sig(row.wasserstein),
            format_sig(a),
            format_sig(b),
            format_sig(c),
            row.iterations.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Overlay series for one country: named columns of per-group values.
pub fn write_overlay(path: &Path, labels: &[String], series: &[(&str, &[f64])]) -> Result<()> {
    let mut out = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header = vec!["group".to_string(), "label".to_string()];
    header.extend(series.iter().map(|(name, _)| name.to_string()));
    out.write_record(&header)?;
    for (i, label) in labels.iter().enumerate() {
        let mut record = vec![(i + 1).to_string(), label.clone()];
        record.extend(series.iter().map(|(_, values)| format_sig(values[i])));
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}
