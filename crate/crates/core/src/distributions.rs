//! Age distributions, the per-group parameter vectors, and the distance
//! metrics used to compare distributions.
//!
//! An [`AgeDistribution`] always holds normalized, strictly positive
//! proportions over at least three ordered groups. The slice-level metric
//! functions ([`wasserstein_1d`], [`mae`]) accept arbitrary non-negative
//! vectors, so intermediate results with empty groups can still be scored.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible activation rate.
pub const ALPHA_MIN: f64 = 1e-3;

/// Largest admissible survival probability for the last group.
pub const P_LAST_MAX: f64 = 1.0 - 1e-9;

/// Allowed deviation of `sum(proportions)` from one.
pub const SUM_TOLERANCE: f64 = 1e-12;

const MIN_GROUPS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution")]
pub struct AgeDistribution {
    labels: Vec<String>,
    proportions: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDistribution {
    labels: Vec<String>,
    proportions: Vec<f64>,
}

impl TryFrom<RawDistribution> for AgeDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        AgeDistribution::new(raw.labels, raw.proportions)
    }
}

impl AgeDistribution {
    /// Builds a distribution from proportions that already sum to one.
    ///
    /// Use [`normalize`] for raw counts.
    pub fn new(labels: Vec<String>, proportions: Vec<f64>) -> Result<Self> {
        if labels.len() != proportions.len() {
            return Err(Error::LengthMismatch {
                what: "labels vs proportions",
                expected: proportions.len(),
                got: labels.len(),
            });
        }
        if proportions.len() < MIN_GROUPS {
            return Err(Error::TooFewGroups {
                got: proportions.len(),
            });
        }
        for (index, &value) in proportions.iter().enumerate() {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::InvalidValue {
                    index,
                    value,
                    reason: "proportions must be finite and strictly positive",
                });
            }
        }
        let sum: f64 = proportions.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidValue {
                index: 0,
                value: sum,
                reason: "proportions must sum to 1",
            });
        }
        Ok(Self {
            labels,
            proportions,
        })
    }

    /// Normalizes strictly positive weights, labelling groups `1..=n`.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        normalize(weights, &index_labels(weights.len()))
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn proportions(&self) -> &[f64] {
        &self.proportions
    }

    pub fn n(&self) -> usize {
        self.proportions.len()
    }

    /// Replaces the labels, keeping the proportions.
    pub fn with_labels(mut self, labels: &[String]) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::LengthMismatch {
                what: "labels",
                expected: self.n(),
                got: labels.len(),
            });
        }
        self.labels = labels.to_vec();
        Ok(self)
    }

    pub fn shape(&self) -> Shape {
        classify(self)
    }
}

/// Labels `"1"`, `"2"`, ... for distributions with no natural group names.
pub fn index_labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| i.to_string()).collect()
}

/// Turns raw group counts into a distribution.
///
/// Trailing empty groups are dropped together with their labels. An empty
/// group followed by a populated one is rejected.
pub fn normalize(raw_counts: &[f64], labels: &[String]) -> Result<AgeDistribution> {
    if raw_counts.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "labels vs counts",
            expected: raw_counts.len(),
            got: labels.len(),
        });
    }
    for (index, &value) in raw_counts.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidValue {
                index,
                value,
                reason: "counts must be finite and non-negative",
            });
        }
    }
    let kept = match raw_counts.iter().rposition(|&c| c > 0.0) {
        Some(last) => last + 1,
        None => return Err(Error::EmptyPopulation),
    };
    if kept < raw_counts.len() {
        log::info!(
            "dropping {} trailing empty age group(s) starting at {:?}",
            raw_counts.len() - kept,
            labels[kept]
        );
    }
    let counts = &raw_counts[..kept];
    if let Some(index) = counts.iter().position(|&c| c == 0.0) {
        return Err(Error::InteriorZeroGroup { index });
    }
    if kept < MIN_GROUPS {
        return Err(Error::TooFewGroups { got: kept });
    }
    let total: f64 = counts.iter().sum();
    // already-normalized input passes through unchanged, so normalizing is idempotent
    let proportions = if (total - 1.0).abs() <= SUM_TOLERANCE {
        counts.to_vec()
    } else {
        counts.iter().map(|c| c / total).collect()
    };
    AgeDistribution::new(labels[..kept].to_vec(), proportions)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    MonotoneNonIncreasing,
    NonMonotone,
}

/// Indices (0-based) of groups `1..n-1` that are larger than their predecessor.
///
/// The last group is never reported: its size is balanced by the free
/// survival parameter.
pub fn monotonicity_violations(proportions: &[f64]) -> Vec<usize> {
    let n = proportions.len();
    (1..n.saturating_sub(1))
        .filter(|&i| proportions[i] > proportions[i - 1])
        .collect()
}

pub fn classify(dist: &AgeDistribution) -> Shape {
    if monotonicity_violations(dist.proportions()).is_empty() {
        Shape::MonotoneNonIncreasing
    } else {
        Shape::NonMonotone
    }
}

/// Wasserstein-1 distance between two histograms on a unit-spaced grid.
///
/// Computed as the sum of absolute differences of the cumulative sums. The
/// inputs may contain zeros but must have equal length.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Incomparable(format!(
            "lengths {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    let mut cdf_a = 0.0;
    let mut cdf_b = 0.0;
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b) {
        cdf_a += x;
        cdf_b += y;
        total += (cdf_a - cdf_b).abs();
    }
    Ok(total)
}

pub fn wasserstein(a: &AgeDistribution, b: &AgeDistribution) -> Result<f64> {
    if a.labels() != b.labels() {
        return Err(Error::Incomparable(
            "age-group labels differ".to_string(),
        ));
    }
    wasserstein_1d(a.proportions(), b.proportions())
}

/// Wasserstein-1 distance between the two vectors read as samples of values
/// (the groups' positions play no role).
///
/// Only reported next to [`wasserstein_1d`] to compare against figures
/// computed that way; it is not used for selection.
pub fn wasserstein_of_values(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Incomparable(format!(
            "lengths {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    mae(&sa, &sb)
}

/// Mean absolute difference of two equal-length vectors.
pub fn mae(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Incomparable(format!(
            "lengths {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / a.len() as f64)
}

pub fn mean_absolute_error(a: &AgeDistribution, b: &AgeDistribution) -> Result<f64> {
    mae(a.proportions(), b.proportions())
}

/// Per-group survival probabilities `p_1..p_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SurvivalVector(Vec<f64>);

impl SurvivalVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if let Some(&last) = p.last() {
            if last >= 1.0 {
                return Err(Error::DegenerateLastGroup(last));
            }
        }
        if p.len() < MIN_GROUPS {
            return Err(Error::TooFewGroups { got: p.len() });
        }
        for (index, &value) in p.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidValue {
                    index,
                    value,
                    reason: "survival probabilities must lie in [0, 1]",
                });
            }
        }
        Ok(Self(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> f64 {
        self.0[self.0.len() - 1]
    }
}

impl TryFrom<Vec<f64>> for SurvivalVector {
    type Error = Error;
    fn try_from(p: Vec<f64>) -> Result<Self> {
        Self::new(p)
    }
}

impl From<SurvivalVector> for Vec<f64> {
    fn from(p: SurvivalVector) -> Self {
        p.0
    }
}

/// Per-group activation rates `alpha_1..alpha_n`, each in `[ALPHA_MIN, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ActivationVector(Vec<f64>);

impl ActivationVector {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < MIN_GROUPS {
            return Err(Error::TooFewGroups { got: alpha.len() });
        }
        for (index, &value) in alpha.iter().enumerate() {
            if value.is_nan() || value < ALPHA_MIN {
                return Err(Error::ActivationTooSmall {
                    index,
                    value,
                    min: ALPHA_MIN,
                });
            }
            if value > 1.0 {
                return Err(Error::InvalidValue {
                    index,
                    value,
                    reason: "activation rates must not exceed 1",
                });
            }
        }
        Ok(Self(alpha))
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ActivationVector {
    type Error = Error;
    fn try_from(alpha: Vec<f64>) -> Result<Self> {
        Self::new(alpha)
    }
}

impl From<ActivationVector> for Vec<f64> {
    fn from(alpha: ActivationVector) -> Self {
        alpha.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Model1,
    Model2,
    Model1OnFitted,
}

/// A solved parameterisation together with how it was obtained.
///
/// `diagnostics` holds numeric metrics (`mae`, `wasserstein_to_original`,
/// `iterations_used`, ...); `provenance` holds how the free parameter and any
/// seeds were chosen, kept as strings so 64-bit seeds survive serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModelParams")]
pub struct ModelParams {
    pub kind: ModelKind,
    pub survival: SurvivalVector,
    pub activation: Option<ActivationVector>,
    pub free_param: f64,
    #[serde(default)]
    pub diagnostics: BTreeMap<String, f64>,
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct RawModelParams {
    kind: ModelKind,
    survival: SurvivalVector,
    activation: Option<ActivationVector>,
    free_param: f64,
    #[serde(default)]
    diagnostics: BTreeMap<String, f64>,
    #[serde(default)]
    provenance: BTreeMap<String, String>,
}

impl TryFrom<RawModelParams> for ModelParams {
    type Error = Error;
    fn try_from(raw: RawModelParams) -> Result<Self> {
        let params = ModelParams {
            kind: raw.kind,
            survival: raw.survival,
            activation: raw.activation,
            free_param: raw.free_param,
            diagnostics: raw.diagnostics,
            provenance: raw.provenance,
        };
        params.validate()?;
        Ok(params)
    }
}

impl ModelParams {
    pub fn new(
        kind: ModelKind,
        survival: SurvivalVector,
        activation: Option<ActivationVector>,
    ) -> Result<Self> {
        let params = ModelParams {
            kind,
            free_param: survival.last(),
            survival,
            activation,
            diagnostics: BTreeMap::new(),
            provenance: BTreeMap::new(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.free_param.to_bits() != self.survival.last().to_bits() {
            return Err(Error::Schema(format!(
                "free_param {} does not match the last survival probability {}",
                self.free_param,
                self.survival.last()
            )));
        }
        match (&self.kind, &self.activation) {
            (ModelKind::Model2, Some(alpha)) => {
                if alpha.len() != self.survival.len() {
                    return Err(Error::LengthMismatch {
                        what: "activation",
                        expected: self.survival.len(),
                        got: alpha.len(),
                    });
                }
            }
            (ModelKind::Model2, None) => {
                return Err(Error::Schema(
                    "Model2 parameters require an activation vector".into(),
                ))
            }
            (_, Some(_)) => {
                return Err(Error::Schema(
                    "only Model2 parameters carry an activation vector".into(),
                ))
            }
            (_, None) => {}
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.survival.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        index_labels(n)
    }

    fn dist(p: &[f64]) -> AgeDistribution {
        AgeDistribution::from_weights(p).unwrap()
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(&dist(&[0.5, 0.3, 0.2])), Shape::MonotoneNonIncreasing);
        assert_eq!(classify(&dist(&[0.3, 0.4, 0.3])), Shape::NonMonotone);
        assert_eq!(
            classify(&dist(&[0.25, 0.25, 0.25, 0.25])),
            Shape::MonotoneNonIncreasing
        );
        // last group may exceed its predecessor
        assert_eq!(classify(&dist(&[0.4, 0.2, 0.4])), Shape::MonotoneNonIncreasing);
    }

    #[test]
    fn wasserstein_examples() {
        let d = dist(&[0.5, 0.3, 0.2]);
        assert_eq!(wasserstein(&d, &d).unwrap(), 0.0);
        assert_eq!(wasserstein_1d(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(
            wasserstein_1d(&[0.5, 0.5, 0.0], &[0.0, 0.5, 0.5]).unwrap(),
            1.0
        );
    }

    #[test]
    fn wasserstein_rejects_mismatch() {
        let a = dist(&[0.5, 0.3, 0.2]);
        let b = dist(&[0.4, 0.3, 0.2, 0.1]);
        assert!(matches!(wasserstein(&a, &b), Err(Error::Incomparable(_))));
        let c = AgeDistribution::new(
            vec!["x".into(), "y".into(), "z".into()],
            a.proportions().to_vec(),
        )
        .unwrap();
        assert!(matches!(wasserstein(&a, &c), Err(Error::Incomparable(_))));
    }

    #[test]
    fn wasserstein_of_values_ignores_order() {
        let w = wasserstein_of_values(&[0.5, 0.3, 0.2], &[0.2, 0.5, 0.3]).unwrap();
        assert_eq!(w, 0.0);
        let w = wasserstein_of_values(&[0.1, 0.2], &[0.2, 0.3]).unwrap();
        assert!((w - 0.1).abs() < 1e-15);
    }

    #[test]
    fn mae_examples() {
        let d = dist(&[0.5, 0.3, 0.2]);
        assert_eq!(mean_absolute_error(&d, &d).unwrap(), 0.0);
        assert!((mae(&[0.5, 0.5], &[0.4, 0.6]).unwrap() - 0.1).abs() < 1e-15);
        assert!(
            (mae(&[0.5, 0.3, 0.2], &[0.47, 0.32, 0.21]).unwrap() - 0.02).abs() < 1e-15
        );
        assert!(mae(&[0.5, 0.5], &[1.0]).is_err());
    }

    #[test]
    fn normalize_examples() {
        let d = normalize(&[50.0, 30.0, 20.0], &labels(3)).unwrap();
        assert_eq!(d.proportions(), &[0.5, 0.3, 0.2]);

        let d = normalize(&[50.0, 30.0, 20.0, 0.0, 0.0], &labels(5)).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.labels(), &labels(3)[..]);
        assert_eq!(d.proportions(), &[0.5, 0.3, 0.2]);

        assert_eq!(
            normalize(&[50.0, 0.0, 20.0], &labels(3)),
            Err(Error::InteriorZeroGroup { index: 1 })
        );
        assert_eq!(
            normalize(&[0.0, 0.0, 0.0], &labels(3)),
            Err(Error::EmptyPopulation)
        );
        assert_eq!(
            normalize(&[5.0, 1.0, 0.0], &labels(3)),
            Err(Error::TooFewGroups { got: 2 })
        );
        assert!(normalize(&[5.0, -1.0, 2.0], &labels(3)).is_err());
    }

    #[test]
    fn new_enforces_invariants() {
        assert!(AgeDistribution::new(labels(3), vec![0.5, 0.3, 0.3]).is_err());
        assert!(AgeDistribution::new(labels(3), vec![0.7, 0.3, 0.0]).is_err());
        assert!(AgeDistribution::new(labels(2), vec![0.5, 0.5]).is_err());
        assert!(AgeDistribution::new(labels(2), vec![0.5, 0.3, 0.2]).is_err());
    }

    #[test]
    fn survival_vector_checks() {
        assert!(SurvivalVector::new(vec![0.6, 0.4, 0.4]).is_ok());
        assert_eq!(
            SurvivalVector::new(vec![0.5, 1.0]),
            Err(Error::DegenerateLastGroup(1.0))
        );
        assert_eq!(
            SurvivalVector::new(vec![0.5, 0.5, 1.0]),
            Err(Error::DegenerateLastGroup(1.0))
        );
        assert!(SurvivalVector::new(vec![1.2, 0.5, 0.5]).is_err());
        assert!(SurvivalVector::new(vec![f64::NAN, 0.5, 0.5]).is_err());
    }

    #[test]
    fn activation_vector_checks() {
        assert!(ActivationVector::new(vec![1.0, 0.6, 0.4]).is_ok());
        assert!(matches!(
            ActivationVector::new(vec![1.0, 0.0, 0.4]),
            Err(Error::ActivationTooSmall { index: 1, .. })
        ));
        assert!(ActivationVector::new(vec![1.0, 1.5, 0.4]).is_err());
    }

    #[test]
    fn model_params_consistency() {
        let p = SurvivalVector::new(vec![0.6, 0.4, 0.4]).unwrap();
        let params = ModelParams::new(ModelKind::Model1, p.clone(), None).unwrap();
        assert_eq!(params.free_param, 0.4);
        assert!(ModelParams::new(ModelKind::Model2, p.clone(), None).is_err());
        assert!(ModelParams::new(
            ModelKind::Model1,
            p.clone(),
            Some(ActivationVector::ones(3))
        )
        .is_err());
        assert!(ModelParams::new(
            ModelKind::Model2,
            p,
            Some(ActivationVector::ones(4))
        )
        .is_err());
    }
}
