//! Basis-function dictionaries and storage-function estimates.
//!
//! A storage candidate is a linear combination `S(x) = theta . phi(x)` of
//! features drawn from a closed set of kinds. Every kind vanishes at the
//! origin and has a closed-form gradient, which is what the damping
//! controller and the Lie-derivative estimator consume.
//!
//! New feature kinds go in [`Feature`]; the compiler then points at every
//! match that needs a value, a gradient and a display name.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identify::{Diagnostics, SupplyKind};

/// One scalar basis function of the state. Indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "FeatureRepr", into = "FeatureRepr")]
pub enum Feature {
    /// `x_i^2`
    Square(usize),
    /// `x_i * x_j`
    Cross(usize, usize),
    /// `(exp(x_i) - 1)^2`
    ExpSq(usize),
    /// `sin(x_i)^2`
    SinSq(usize),
    /// `1 - cos(x_i)`
    OneMinusCos(usize),
}

#[derive(Serialize, Deserialize)]
struct FeatureRepr {
    kind: String,
    indices: Vec<usize>,
}

impl From<Feature> for FeatureRepr {
    fn from(f: Feature) -> Self {
        let (kind, indices) = match f {
            Feature::Square(i) => ("square", vec![i]),
            Feature::Cross(i, j) => ("cross", vec![i, j]),
            Feature::ExpSq(i) => ("exp_sq", vec![i]),
            Feature::SinSq(i) => ("sin_sq", vec![i]),
            Feature::OneMinusCos(i) => ("one_minus_cos", vec![i]),
        };
        FeatureRepr { kind: kind.to_string(), indices }
    }
}

impl TryFrom<FeatureRepr> for Feature {
    type Error = String;

    fn try_from(r: FeatureRepr) -> std::result::Result<Self, String> {
        match (r.kind.as_str(), r.indices.as_slice()) {
            ("square", &[i]) => Ok(Feature::Square(i)),
            ("cross", &[i, j]) => Ok(Feature::Cross(i, j)),
            ("exp_sq", &[i]) => Ok(Feature::ExpSq(i)),
            ("sin_sq", &[i]) => Ok(Feature::SinSq(i)),
            ("one_minus_cos", &[i]) => Ok(Feature::OneMinusCos(i)),
            (kind, idx) => Err(format!("unknown feature {kind:?} with indices {idx:?}")),
        }
    }
}

impl Feature {
    fn max_index(&self) -> usize {
        match *self {
            Feature::Square(i)
            | Feature::ExpSq(i)
            | Feature::SinSq(i)
            | Feature::OneMinusCos(i) => i,
            Feature::Cross(i, j) => i.max(j),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match *self {
            Feature::Square(i) => x[i] * x[i],
            Feature::Cross(i, j) => x[i] * x[j],
            Feature::ExpSq(i) => x[i].exp_m1().powi(2),
            Feature::SinSq(i) => x[i].sin().powi(2),
            Feature::OneMinusCos(i) => 2.0 * (0.5 * x[i]).sin().powi(2),
        }
    }

    /// Writes the gradient into `out` (length = state dimension).
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        match *self {
            Feature::Square(i) => out[i] = 2.0 * x[i],
            Feature::Cross(i, j) => {
                out[i] += x[j];
                out[j] += x[i];
            }
            Feature::ExpSq(i) => out[i] = 2.0 * x[i].exp_m1() * x[i].exp(),
            Feature::SinSq(i) => out[i] = (2.0 * x[i]).sin(),
            Feature::OneMinusCos(i) => out[i] = x[i].sin(),
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Feature::Square(i) => write!(f, "x{}^2", i + 1),
            Feature::Cross(i, j) => write!(f, "x{}*x{}", i + 1, j + 1),
            Feature::ExpSq(i) => write!(f, "(exp(x{})-1)^2", i + 1),
            Feature::SinSq(i) => write!(f, "sin^2(x{})", i + 1),
            Feature::OneMinusCos(i) => write!(f, "1-cos(x{})", i + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    features: Vec<Feature>,
    state_dim: usize,
}

impl Dictionary {
    pub fn new(features: Vec<Feature>, state_dim: usize) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::arg("dictionary needs at least one feature"));
        }
        if let Some(f) = features.iter().find(|f| f.max_index() >= state_dim) {
            return Err(Error::arg(format!(
                "feature {f} refers to a state index beyond dimension {state_dim}"
            )));
        }
        Ok(Self { features, state_dim })
    }

    /// The nine-feature pendulum dictionary:
    /// `x1^2, x1*x2, x2^2, (e^x1-1)^2, (e^x2-1)^2, sin^2 x1, sin^2 x2, 1-cos x1, 1-cos x2`.
    pub fn pendulum() -> Self {
        use Feature::*;
        Self {
            features: vec![
                Square(0),
                Cross(0, 1),
                Square(1),
                ExpSq(0),
                ExpSq(1),
                SinSq(0),
                SinSq(1),
                OneMinusCos(0),
                OneMinusCos(1),
            ],
            state_dim: 2,
        }
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn eval_features(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_features_into(x, &mut out);
        out
    }

    pub fn eval_features_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.state_dim);
        for (o, f) in out.iter_mut().zip(&self.features) {
            *o = f.value(x);
        }
    }

    /// `d x n` row-major matrix; row `i` is the gradient of feature `i`.
    pub fn eval_feature_gradients(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.features
            .iter()
            .map(|f| {
                let mut row = vec![0.0; self.state_dim];
                f.gradient_into(x, &mut row);
                row
            })
            .collect()
    }

    /// `theta . phi(x)`.
    pub fn eval(&self, theta: &[f64], x: &[f64]) -> f64 {
        self.features.iter().zip(theta).map(|(f, t)| t * f.value(x)).sum()
    }

    /// Gradient of `theta . phi(x)`.
    pub fn gradient(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_dim];
        let mut row = vec![0.0; self.state_dim];
        for (f, &t) in self.features.iter().zip(theta) {
            if t == 0.0 {
                continue;
            }
            f.gradient_into(x, &mut row);
            for (o, r) in out.iter_mut().zip(&row) {
                *o += t * r;
            }
        }
        out
    }
}

/// An identified (or hand-written) storage function together with its
/// passivity margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageEstimate {
    pub dictionary: Dictionary,
    pub theta: Vec<f64>,
    /// `rho` for OFP, `nu` for IFP, zero for plain passivity.
    pub margin: f64,
    pub supply_kind: SupplyKind,
    /// `Some` once [`StorageEstimate::prune`] has run; `true` marks a kept term.
    #[serde(default)]
    pub pruned_mask: Option<Vec<bool>>,
    #[serde(default)]
    pub diagnostics: Diagnostics,
}

impl StorageEstimate {
    pub fn new(dictionary: Dictionary, theta: Vec<f64>, margin: f64, supply_kind: SupplyKind) -> Result<Self> {
        if theta.len() != dictionary.len() {
            return Err(Error::arg(format!(
                "theta has {} entries for a dictionary of {}",
                theta.len(),
                dictionary.len()
            )));
        }
        Ok(Self {
            dictionary,
            theta,
            margin,
            supply_kind,
            pruned_mask: None,
            diagnostics: Diagnostics::default(),
        })
    }

    /// `0.5 x2^2 + b1 (1 - cos x1)` in the pendulum dictionary, with margin `b2`.
    pub fn pendulum_analytic(b1: f64, b2: f64) -> Self {
        let mut theta = vec![0.0; 9];
        theta[2] = 0.5;
        theta[7] = b1;
        Self::new(Dictionary::pendulum(), theta, b2, SupplyKind::Ofp).expect("nine coefficients")
    }

    /// Coefficients actually used when `use_pruned` is set and a mask exists.
    pub fn active_theta(&self, use_pruned: bool) -> Vec<f64> {
        match (&self.pruned_mask, use_pruned) {
            (Some(mask), true) => self
                .theta
                .iter()
                .zip(mask)
                .map(|(&t, &keep)| if keep { t } else { 0.0 })
                .collect(),
            _ => self.theta.clone(),
        }
    }

    pub fn eval_storage(&self, x: &[f64], use_pruned: bool) -> f64 {
        match (&self.pruned_mask, use_pruned) {
            (Some(mask), true) => self
                .dictionary
                .features()
                .iter()
                .zip(&self.theta)
                .zip(mask)
                .filter(|(_, &keep)| keep)
                .map(|((f, t), _)| t * f.value(x))
                .sum(),
            _ => self.dictionary.eval(&self.theta, x),
        }
    }

    pub fn storage_gradient(&self, x: &[f64], use_pruned: bool) -> Vec<f64> {
        self.dictionary.gradient(&self.active_theta(use_pruned), x)
    }

    /// Keeps the terms with `|theta_i| >= rel_threshold * max_j |theta_j|`.
    /// Coefficients are not refitted.
    pub fn prune(&self, rel_threshold: f64) -> Result<Self> {
        let largest = self.theta.iter().fold(0.0_f64, |m, t| m.max(t.abs()));
        if !(largest > 0.0) {
            return Err(Error::DegenerateEstimate("all coefficients are zero".into()));
        }
        if !(rel_threshold >= 0.0) {
            return Err(Error::arg("pruning threshold must be nonnegative"));
        }
        let cutoff = rel_threshold * largest;
        let mut out = self.clone();
        out.pruned_mask = Some(self.theta.iter().map(|t| t.abs() >= cutoff).collect());
        Ok(out)
    }

    /// Kept features with their coefficients; all features before pruning.
    pub fn kept_terms(&self) -> Vec<(Feature, f64)> {
        let feats = self.dictionary.features();
        match &self.pruned_mask {
            Some(mask) => feats
                .iter()
                .zip(&self.theta)
                .zip(mask)
                .filter(|(_, &k)| k)
                .map(|((f, &t), _)| (*f, t))
                .collect(),
            None => feats.iter().copied().zip(self.theta.iter().copied()).collect(),
        }
    }

    /// Human-readable sum such as `0.4940*x2^2 + 7.6700*(1-cos(x1))`.
    pub fn formula(&self) -> String {
        let mut out = String::new();
        for (i, (f, t)) in self.kept_terms().iter().enumerate() {
            let name = f.to_string();
            let name = if name.contains('-') && !name.starts_with('(') { format!("({name})") } else { name };
            match (i, *t < 0.0) {
                (0, _) => out.push_str(&format!("{t:.4}*{name}")),
                (_, true) => out.push_str(&format!(" - {:.4}*{name}", -t)),
                (_, false) => out.push_str(&format!(" + {t:.4}*{name}")),
            }
        }
        out
    }
}
