//! The Composite Jumper predictor: Bayesian mixing of the base forecast
//! (the passive expert) with jump-switching calibrated forecasts.
//!
//! Posterior weights are `P` for the passive expert and `A^J_θ` for the
//! active experts with jumping rate `J` currently in state `θ`; after every
//! update `P + Σ A^J_θ = 1`. Internally each rate's block is stored as a
//! log-mass plus normalised in-block weights so that neither `P` nor a block
//! underflows on long streams.
//!
//! One step of full-feedback operation is `predict` followed by `update`.
//! `predict` first applies the jump mixing `A^J_θ := (1-J) A^J_θ + J/|Θ| A^J`
//! and then returns `P p + Σ_{J,θ} A^J_θ f_θ(p)`; `update` multiplies every
//! weight by the likelihood its expert gave the realized label and
//! renormalises.

use crate::calibration::CalibratorFamily;
use crate::error::{Error, Result};
use crate::forecast::Forecast;
use crate::loss::LossLedger;
use crate::martingale::JumperConfig;
use crate::metrics::{error_count, roc_auc};
use crate::report::{ProtectedRecord, ProtectionReport};

/// When jump mixing is applied to the weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MixingPolicy {
    /// Mix before every prediction, with or without feedback.
    #[default]
    EveryPrediction,
    /// Mix once after each update; predictions between two updates use
    /// identical weights.
    AfterFeedback,
}

impl MixingPolicy {
    pub fn name(self) -> &'static str {
        match self {
            MixingPolicy::EveryPrediction => "every-prediction",
            MixingPolicy::AfterFeedback => "after-feedback",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtectedPrediction {
    pub step: u64,
    pub base: Forecast,
    pub protected: Forecast,
}

#[derive(Clone, Debug)]
struct Block {
    rate: f64,
    ln_mass: f64,
    weights: Vec<f64>,
}

#[derive(Clone, Debug)]
struct Pending {
    base: Forecast,
    calibrated: Vec<Forecast>,
}

/// Sequential predictor state for one stream.
#[derive(Clone, Debug)]
pub struct Predictor {
    family: CalibratorFamily,
    ln_passive: f64,
    blocks: Vec<Block>,
    step: u64,
    mixing: MixingPolicy,
    strict: bool,
    mixed_since_update: bool,
    pending: Option<Pending>,
    last_ln_normalizer: f64,
}

impl Predictor {
    /// Full-feedback predictor: every `predict` must be followed by `update`.
    pub fn new(config: &JumperConfig) -> Result<Self> {
        config.validate()?;
        let m = config.family.len();
        let neutral = config.family.neutral_index();
        let share = (1.0 - config.passive_weight) / config.rates.len() as f64;
        let blocks = config
            .rates
            .iter()
            .map(|&rate| {
                let mut weights = vec![0.0; m];
                weights[neutral] = 1.0;
                Block {
                    rate,
                    ln_mass: share.ln(),
                    weights,
                }
            })
            .collect();
        Ok(Predictor {
            family: config.family.clone(),
            ln_passive: config.passive_weight.ln(),
            blocks,
            step: 0,
            mixing: MixingPolicy::EveryPrediction,
            strict: true,
            mixed_since_update: false,
            pending: None,
            last_ln_normalizer: 0.0,
        })
    }

    /// Predictor that accepts any number of predictions between updates.
    pub fn limited_feedback(config: &JumperConfig, mixing: MixingPolicy) -> Result<Self> {
        let mut predictor = Self::new(config)?;
        predictor.strict = false;
        predictor.mixing = mixing;
        Ok(predictor)
    }

    pub fn mixing_policy(&self) -> MixingPolicy {
        self.mixing
    }

    /// Number of predictions made so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Posterior weight `P` of the passive expert.
    pub fn passive_weight(&self) -> f64 {
        self.ln_passive.exp()
    }

    /// Posterior weights `A^J_θ` for the rate at position `rate_index`.
    pub fn active_weights(&self, rate_index: usize) -> Vec<f64> {
        let block = &self.blocks[rate_index];
        let mass = block.ln_mass.exp();
        block.weights.iter().map(|w| w * mass).collect()
    }

    /// `P + Σ A^J_θ`.
    pub fn total_weight(&self) -> f64 {
        self.passive_weight()
            + (0..self.blocks.len())
                .map(|j| self.active_weights(j).iter().sum::<f64>())
                .sum::<f64>()
    }

    /// `ln C` from the most recent update; with full feedback this is the
    /// log of the probability the protected forecast gave the label.
    pub fn last_ln_normalizer(&self) -> f64 {
        self.last_ln_normalizer
    }

    fn mix(&mut self) {
        let m = self.family.len() as f64;
        for block in &mut self.blocks {
            let jump = block.rate / m;
            let stay = 1.0 - block.rate;
            for w in &mut block.weights {
                *w = stay * *w + jump;
            }
        }
    }

    /// Mixing step, then the weighted-average forecast.
    pub fn predict(&mut self, p: &Forecast) -> Result<ProtectedPrediction> {
        if self.strict && self.pending.is_some() {
            return Err(Error::Sequencing(format!(
                "predict called twice without update at step {}",
                self.step + 1
            )));
        }
        let calibrated = self.family.calibrate_all(p)?;
        let mix_now = match self.mixing {
            MixingPolicy::EveryPrediction => true,
            MixingPolicy::AfterFeedback => !self.mixed_since_update,
        };
        if mix_now {
            self.mix();
            self.mixed_since_update = true;
        }

        // normalised weights (they need not be normalised in log space
        // before the first update, so normalise explicitly)
        let ln_total = self.ln_total();
        let passive = (self.ln_passive - ln_total).exp();
        let mut per_member = vec![0.0; self.family.len()];
        for block in &self.blocks {
            let mass = (block.ln_mass - ln_total).exp();
            for (acc, w) in per_member.iter_mut().zip(&block.weights) {
                *acc += mass * w;
            }
        }
        let protected = match p {
            Forecast::Binary(q) => {
                let mut value = passive * q;
                for (w, f) in per_member.iter().zip(&calibrated) {
                    value += w * f.prob_of(1);
                }
                Forecast::Binary(value.clamp(0.0, 1.0))
            }
            Forecast::Categorical(v) => {
                let mut value: Vec<f64> = v.iter().map(|q| passive * q).collect();
                for (w, f) in per_member.iter().zip(&calibrated) {
                    for (acc, q) in value.iter_mut().zip(f.columns()) {
                        *acc += w * q;
                    }
                }
                Forecast::Categorical(value)
            }
        };
        self.step += 1;
        self.pending = Some(Pending {
            base: p.clone(),
            calibrated,
        });
        Ok(ProtectedPrediction {
            step: self.step,
            base: p.clone(),
            protected,
        })
    }

    /// Bayesian reweighting on the realized label of the forecast passed to
    /// the preceding `predict`.
    pub fn update(&mut self, p: &Forecast, label: usize) -> Result<()> {
        let pending = self.pending.take().ok_or_else(|| {
            Error::Sequencing(format!(
                "update without a preceding predict at step {}",
                self.step
            ))
        })?;
        if pending.base != *p {
            self.pending = Some(pending);
            return Err(Error::Sequencing(format!(
                "update forecast differs from the one predicted at step {}",
                self.step
            )));
        }
        if let Err(e) = p.check_label(label) {
            self.pending = Some(pending);
            return Err(e);
        }
        let likelihoods: Vec<f64> = pending
            .calibrated
            .iter()
            .map(|f| f.prob_of(label))
            .collect();

        self.ln_passive += p.prob_of(label).ln();
        for block in &mut self.blocks {
            let mut s = 0.0;
            for (w, l) in block.weights.iter_mut().zip(&likelihoods) {
                *w *= l;
                s += *w;
            }
            if s > 0.0 {
                for w in &mut block.weights {
                    *w /= s;
                }
                block.ln_mass += s.ln();
            } else {
                block.ln_mass = f64::NEG_INFINITY;
                block
                    .weights
                    .iter_mut()
                    .for_each(|w| *w = 1.0 / likelihoods.len() as f64);
            }
        }
        let ln_c = self.ln_total();
        if ln_c == f64::NEG_INFINITY || ln_c.is_nan() {
            return Err(Error::ParameterDomain(format!(
                "total posterior weight is zero at step {}",
                self.step
            )));
        }
        self.ln_passive -= ln_c;
        for block in &mut self.blocks {
            block.ln_mass -= ln_c;
        }
        self.last_ln_normalizer = ln_c;
        self.mixed_since_update = false;
        Ok(())
    }

    /// Drops the pending forecast of a step that receives no feedback.
    pub fn skip_update(&mut self) {
        self.pending = None;
    }

    fn ln_total(&self) -> f64 {
        let shift = self
            .blocks
            .iter()
            .map(|b| b.ln_mass)
            .fold(self.ln_passive, f64::max);
        if shift == f64::NEG_INFINITY {
            return shift;
        }
        let mut acc = (self.ln_passive - shift).exp();
        for b in &self.blocks {
            acc += (b.ln_mass - shift).exp();
        }
        shift + acc.ln()
    }
}

/// Protects a stream. Every observation gets a prediction; weights are
/// updated only on observations `feedback_every`, `2 feedback_every`, ...
/// (1-based), so with `feedback_every = 1` this is full feedback.
///
/// Losses, error counts and AUCs in the report cover every observation.
pub fn run_protect<'a, I>(
    config: &JumperConfig,
    observations: I,
    feedback_every: usize,
    mixing: MixingPolicy,
) -> Result<(Vec<ProtectedRecord>, ProtectionReport)>
where
    I: IntoIterator<Item = (&'a Forecast, usize)>,
{
    if feedback_every == 0 {
        return Err(Error::Config("feedback_every must be at least 1".into()));
    }
    let mut predictor = if feedback_every == 1 {
        Predictor::new(config)?
    } else {
        Predictor::limited_feedback(config, mixing)?
    };
    let mut base_loss = LossLedger::with_increments();
    let mut protected_loss = LossLedger::with_increments();
    let mut records = Vec::new();
    let mut arity = config.family.arity();
    for (p, label) in observations {
        let prediction = predictor.predict(p)?;
        let fed_back = prediction.step % feedback_every as u64 == 0;
        if fed_back {
            predictor.update(p, label)?;
        } else {
            p.check_label(label)?;
            predictor.skip_update();
        }
        base_loss.record(label, p)?;
        protected_loss.record(label, &prediction.protected)?;
        arity = p.arity();
        records.push(ProtectedRecord {
            step: prediction.step,
            label,
            base: prediction.base,
            protected: prediction.protected,
            fed_back,
        });
    }

    let labels: Vec<usize> = records.iter().map(|r| r.label).collect();
    let bases: Vec<Forecast> = records.iter().map(|r| r.base.clone()).collect();
    let protecteds: Vec<Forecast> = records.iter().map(|r| r.protected.clone()).collect();
    let auc = |forecasts: &[Forecast]| -> Option<f64> {
        if !config.family.is_binary() {
            return None;
        }
        let scores: Vec<(f64, usize)> = forecasts
            .iter()
            .zip(&labels)
            .map(|(f, &y)| (f.positive_score(), y))
            .collect();
        roc_auc(&scores).ok().map(|roc| roc.auc)
    };
    let report = ProtectionReport {
        n: records.len(),
        arity,
        family: config.family.to_string(),
        rates: config.rates.clone(),
        passive_weight: config.passive_weight,
        feedback_every,
        mixing: predictor.mixing_policy(),
        feedback_steps: records.iter().filter(|r| r.fed_back).count(),
        epsilon: None,
        base_errors: error_count(&bases, &labels)?,
        protected_errors: error_count(&protecteds, &labels)?,
        base_auc: auc(&bases),
        protected_auc: auc(&protecteds),
        base_loss,
        protected_loss,
        log10_martingale: None,
    };
    Ok((records, report))
}
