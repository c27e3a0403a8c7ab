//! Probabilistic forecasts over a finite label set.

use std::fmt;

use crate::error::{Error, Result};

/// Tolerance on the sum of a categorical forecast.
pub const SIMPLEX_TOLERANCE: f64 = 1e-12;

/// A forecast for one observation.
///
/// `Binary(p)` is the probability of label 1 on the label set {0, 1}.
/// `Categorical(v)` assigns `v[y]` to label `y` for `y` in `0..v.len()`.
#[derive(Clone, Debug, PartialEq)]
pub enum Forecast {
    Binary(f64),
    Categorical(Vec<f64>),
}

impl Forecast {
    pub fn binary(p: f64) -> Result<Self> {
        check_probability(p)?;
        Ok(Forecast::Binary(p))
    }

    pub fn categorical(components: Vec<f64>) -> Result<Self> {
        check_simplex(&components)?;
        Ok(Forecast::Categorical(components))
    }

    /// Number of labels.
    pub fn arity(&self) -> usize {
        match self {
            Forecast::Binary(_) => 2,
            Forecast::Categorical(v) => v.len(),
        }
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, Forecast::Binary(_))
    }

    /// Probability assigned to `label`, i.e. `B_p({label})`.
    pub fn prob_of(&self, label: usize) -> f64 {
        match self {
            Forecast::Binary(p) => {
                if label == 1 {
                    *p
                } else {
                    1.0 - p
                }
            }
            Forecast::Categorical(v) => v[label],
        }
    }

    pub fn check_label(&self, label: usize) -> Result<()> {
        if label < self.arity() {
            Ok(())
        } else {
            Err(Error::InvalidLabel {
                label,
                arity: self.arity(),
            })
        }
    }

    /// Most probable label. Binary ties at exactly 0.5 go to label 1;
    /// categorical ties go to the lowest label.
    pub fn predicted_label(&self) -> usize {
        match self {
            Forecast::Binary(p) => usize::from(*p >= 0.5),
            Forecast::Categorical(v) => {
                let mut best = 0;
                for (y, &q) in v.iter().enumerate().skip(1) {
                    if q > v[best] {
                        best = y;
                    }
                }
                best
            }
        }
    }

    /// Probability of label 1, the score used for ROC analysis.
    pub fn positive_score(&self) -> f64 {
        self.prob_of(1)
    }

    /// All label probabilities as a vector of length `arity()`.
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Forecast::Binary(p) => vec![1.0 - p, *p],
            Forecast::Categorical(v) => v.clone(),
        }
    }

    /// Components written to CSV: `[p]` for binary, the full vector otherwise.
    pub fn columns(&self) -> &[f64] {
        match self {
            Forecast::Binary(p) => std::slice::from_ref(p),
            Forecast::Categorical(v) => v,
        }
    }
}

impl fmt::Display for Forecast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Forecast::Binary(p) => write!(f, "{p}"),
            Forecast::Categorical(v) => {
                write!(f, "(")?;
                for (i, q) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{q}")?;
                }
                write!(f, ")")
            }
        }
    }
}

pub(crate) fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidProbability(format!("{p} is outside [0, 1]")))
    }
}

pub(crate) fn check_simplex(v: &[f64]) -> Result<()> {
    if v.len() < 2 {
        return Err(Error::InvalidProbability(format!(
            "categorical forecast needs at least 2 components, got {}",
            v.len()
        )));
    }
    if let Some(q) = v.iter().find(|q| !(**q >= 0.0 && q.is_finite())) {
        return Err(Error::InvalidProbability(format!(
            "negative or non-finite component {q}"
        )));
    }
    let total: f64 = v.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(Error::InvalidProbability(format!(
            "components sum to {total}, not 1"
        )));
    }
    Ok(())
}
