//! Protected-stream records and the protection report.

use std::io::Write;

use crate::error::Result;
use crate::forecast::Forecast;
use crate::loss::{LogBase, LossLedger};
use crate::predictor::MixingPolicy;

#[derive(Clone, Debug, PartialEq)]
pub struct ProtectedRecord {
    pub step: u64,
    pub label: usize,
    pub base: Forecast,
    pub protected: Forecast,
    pub fed_back: bool,
}

/// Writes `step,label,base_p...,protected_p...,fed_back`.
///
/// Binary streams use single `base_p`/`protected_p` columns (probability of
/// label 1); categorical streams use `base_p_1..base_p_K` and
/// `protected_p_1..protected_p_K`.
pub fn write_protected_csv<W: Write>(records: &[ProtectedRecord], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let columns = records.first().map_or(1, |r| r.base.columns().len());
    let mut header = vec!["step".to_string(), "label".to_string()];
    if columns == 1 {
        header.push("base_p".into());
        header.push("protected_p".into());
    } else {
        header.extend((1..=columns).map(|i| format!("base_p_{i}")));
        header.extend((1..=columns).map(|i| format!("protected_p_{i}")));
    }
    header.push("fed_back".into());
    out.write_record(&header)?;
    for r in records {
        let mut row = vec![r.step.to_string(), r.label.to_string()];
        row.extend(r.base.columns().iter().map(f64::to_string));
        row.extend(r.protected.columns().iter().map(f64::to_string));
        row.push(u8::from(r.fed_back).to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Summary of one protection run.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtectionReport {
    pub n: usize,
    pub arity: usize,
    pub family: String,
    pub rates: Vec<f64>,
    pub passive_weight: f64,
    pub feedback_every: usize,
    pub mixing: MixingPolicy,
    pub feedback_steps: usize,
    pub epsilon: Option<f64>,
    pub base_loss: LossLedger,
    pub protected_loss: LossLedger,
    pub base_errors: usize,
    pub protected_errors: usize,
    pub base_auc: Option<f64>,
    pub protected_auc: Option<f64>,
    /// Final `log10` of the Composite Jumper martingale, when it was run.
    pub log10_martingale: Option<f64>,
}

impl ProtectionReport {
    /// `Loss(base) - Loss(protected)` in `base`, over finite-loss steps.
    pub fn loss_reduction(&self, base: LogBase) -> f64 {
        self.base_loss.total(base) - self.protected_loss.total(base)
    }

    /// Line-oriented `key=value` output. The first lines record the
    /// protocol: feedback cadence and when jump mixing was applied.
    pub fn write_key_values<W: Write>(&self, mut w: W, base: LogBase) -> Result<()> {
        let opt = |v: Option<f64>| v.map_or_else(|| "na".to_string(), |x| x.to_string());
        writeln!(w, "# mixing={}", self.mixing.name())?;
        writeln!(w, "# feedback_every={}", self.feedback_every)?;
        writeln!(w, "n={}", self.n)?;
        writeln!(w, "arity={}", self.arity)?;
        writeln!(w, "family={}", self.family)?;
        writeln!(
            w,
            "jumps={}",
            self.rates
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(",")
        )?;
        writeln!(w, "pi={}", self.passive_weight)?;
        writeln!(w, "epsilon={}", opt(self.epsilon))?;
        writeln!(w, "feedback_steps={}", self.feedback_steps)?;
        writeln!(w, "log_base={base}")?;
        writeln!(w, "base_loss={}", self.base_loss.total(base))?;
        writeln!(w, "protected_loss={}", self.protected_loss.total(base))?;
        writeln!(w, "base_infinite={}", self.base_loss.infinite_count())?;
        writeln!(
            w,
            "protected_infinite={}",
            self.protected_loss.infinite_count()
        )?;
        writeln!(w, "base_loss_finite={}", self.base_loss.total_finite(base))?;
        writeln!(
            w,
            "protected_loss_finite={}",
            self.protected_loss.total_finite(base)
        )?;
        writeln!(w, "loss_reduction={}", self.loss_reduction(base))?;
        writeln!(w, "base_errors={}", self.base_errors)?;
        writeln!(w, "protected_errors={}", self.protected_errors)?;
        writeln!(w, "base_auc={}", opt(self.base_auc))?;
        writeln!(w, "protected_auc={}", opt(self.protected_auc))?;
        writeln!(w, "log10_martingale={}", opt(self.log10_martingale))?;
        Ok(())
    }
}
