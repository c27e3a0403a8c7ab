//! Log-loss accounting and truncation of forecasts away from 0 and 1.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::forecast::Forecast;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LogBase {
    /// Natural logarithm; the unit of all bound checks.
    #[default]
    Natural,
    Decimal,
}

impl LogBase {
    /// Converts a quantity in nats to this base.
    pub fn from_nats(self, nats: f64) -> f64 {
        match self {
            LogBase::Natural => nats,
            LogBase::Decimal => nats / std::f64::consts::LN_10,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LogBase::Natural => "e",
            LogBase::Decimal => "10",
        }
    }
}

impl fmt::Display for LogBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for LogBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "e" | "ln" | "natural" => Ok(LogBase::Natural),
            "10" | "log10" | "decimal" => Ok(LogBase::Decimal),
            other => Err(Error::Config(format!(
                "unknown log base `{other}` (use e or 10)"
            ))),
        }
    }
}

/// `-log` of the probability `p` assigns to `label`.
///
/// A zero probability on the realized label is reported as
/// [`Error::InfiniteLoss`] rather than returned as infinity.
pub fn log_loss(label: usize, p: &Forecast, base: LogBase) -> Result<f64> {
    p.check_label(label)?;
    let q = p.prob_of(label);
    if q <= 0.0 {
        return Err(Error::InfiniteLoss { count: 1 });
    }
    Ok(base.from_nats(-q.ln()))
}

/// Clamps a probability of label 1 into `[eps, 1 - eps]`.
pub fn truncate_binary(p: f64, eps: f64) -> f64 {
    if p <= eps {
        eps
    } else if p >= 1.0 - eps {
        1.0 - eps
    } else {
        p
    }
}

/// Raises every component to at least `eps` and renormalises.
pub fn truncate_multiclass(p: &[f64], eps: f64) -> Vec<f64> {
    let raised: Vec<f64> = p.iter().map(|&q| q.max(eps)).collect();
    let total: f64 = raised.iter().sum();
    raised.into_iter().map(|q| q / total).collect()
}

/// Validates a truncation level for forecasts with `arity` labels.
pub fn check_epsilon(eps: f64, arity: usize) -> Result<()> {
    let upper = if arity <= 2 { 0.5 } else { 1.0 / arity as f64 };
    if eps > 0.0 && eps < upper {
        Ok(())
    } else {
        Err(Error::ParameterDomain(format!(
            "truncation level {eps} must lie in (0, {upper})"
        )))
    }
}

/// Applies the truncation rule matching the forecast's shape.
pub fn truncate(p: &Forecast, eps: f64) -> Forecast {
    match p {
        Forecast::Binary(q) => Forecast::Binary(truncate_binary(*q, eps)),
        Forecast::Categorical(v) => Forecast::Categorical(truncate_multiclass(v, eps)),
    }
}

/// Compensated running sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Cumulative log loss of one predictor, kept in nats.
///
/// Observations on which the predictor assigned zero probability to the
/// realized label are counted separately; [`LossLedger::total`] is then
/// infinite while [`LossLedger::total_finite`] ignores them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossLedger {
    sum: KahanSum,
    infinite: usize,
    steps: usize,
    increments: Option<Vec<f64>>,
}

impl LossLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Ledger that also keeps every per-step increment (in nats; infinite
    /// steps are stored as `f64::INFINITY`).
    pub fn with_increments() -> Self {
        LossLedger {
            increments: Some(Vec::new()),
            ..Self::default()
        }
    }

    /// Records one observation and returns its loss in nats.
    pub fn record(&mut self, label: usize, p: &Forecast) -> Result<f64> {
        let loss = match log_loss(label, p, LogBase::Natural) {
            Ok(loss) => {
                self.sum.add(loss);
                loss
            }
            Err(Error::InfiniteLoss { .. }) => {
                self.infinite += 1;
                f64::INFINITY
            }
            Err(e) => return Err(e),
        };
        self.steps += 1;
        if let Some(inc) = &mut self.increments {
            inc.push(loss);
        }
        Ok(loss)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn infinite_count(&self) -> usize {
        self.infinite
    }

    /// Total loss in `base`; infinite if any observation had infinite loss.
    pub fn total(&self, base: LogBase) -> f64 {
        if self.infinite > 0 {
            f64::INFINITY
        } else {
            base.from_nats(self.sum.value())
        }
    }

    /// Total loss in `base`, or the infinite-loss signal with its count.
    pub fn checked_total(&self, base: LogBase) -> Result<f64> {
        if self.infinite > 0 {
            Err(Error::InfiniteLoss {
                count: self.infinite,
            })
        } else {
            Ok(base.from_nats(self.sum.value()))
        }
    }

    /// Total loss in `base` over the observations with finite loss.
    pub fn total_finite(&self, base: LogBase) -> f64 {
        base.from_nats(self.sum.value())
    }

    pub fn increments(&self) -> Option<&[f64]> {
        self.increments.as_deref()
    }

    /// Adds another ledger's totals (for sharded streams).
    pub fn merge(&mut self, other: &LossLedger) {
        self.sum.add(other.sum.value());
        self.infinite += other.infinite;
        self.steps += other.steps;
        if let (Some(mine), Some(theirs)) = (&mut self.increments, &other.increments) {
            mine.extend_from_slice(theirs);
        }
    }
}
