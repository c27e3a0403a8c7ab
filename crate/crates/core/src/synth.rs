//! Synthetic drifting streams and the shuffled-objects transformation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::calibration::cox_binary;
use crate::error::{Error, Result};
use crate::forecast::Forecast;
use crate::stream::{PredictionStream, StreamMetadata};

/// Distribution of the base forecasts `p`.
#[derive(Clone, Debug, PartialEq)]
pub enum BaseDistribution {
    Uniform {
        low: f64,
        high: f64,
    },
    Constant(f64),
    /// Mixture of Beta distributions, `(weight, a, b)`.
    BetaMixture(Vec<(f64, f64, f64)>),
}

impl Default for BaseDistribution {
    /// Imbalanced forecasts with mean 0.12: mostly small probabilities
    /// and a minority component around one half.
    fn default() -> Self {
        BaseDistribution::BetaMixture(vec![(0.9, 1.5, 18.5), (0.1, 5.25, 4.75)])
    }
}

impl BaseDistribution {
    pub fn mean(&self) -> f64 {
        match self {
            BaseDistribution::Uniform { low, high } => (low + high) / 2.0,
            BaseDistribution::Constant(p) => *p,
            BaseDistribution::BetaMixture(parts) => {
                let total: f64 = parts.iter().map(|(w, _, _)| w).sum();
                parts.iter().map(|(w, a, b)| w * a / (a + b)).sum::<f64>() / total
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            BaseDistribution::Uniform { low, high } => 0.0 <= *low && low <= high && *high <= 1.0,
            BaseDistribution::Constant(p) => (0.0..=1.0).contains(p),
            BaseDistribution::BetaMixture(parts) => {
                !parts.is_empty()
                    && parts
                        .iter()
                        .all(|(w, a, b)| *w > 0.0 && *a > 0.0 && *b > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid base distribution {self:?}")))
        }
    }

    fn sampler(&self) -> Result<Sampler> {
        self.validate()?;
        Ok(match self {
            BaseDistribution::Uniform { low, high } => Sampler::Uniform(*low, *high),
            BaseDistribution::Constant(p) => Sampler::Constant(*p),
            BaseDistribution::BetaMixture(parts) => {
                let total: f64 = parts.iter().map(|(w, _, _)| w).sum();
                let mut cumulative = 0.0;
                let mut comps = Vec::with_capacity(parts.len());
                for (w, a, b) in parts {
                    cumulative += w / total;
                    let beta = Beta::new(*a, *b)
                        .map_err(|e| Error::Config(format!("beta({a}, {b}): {e}")))?;
                    comps.push((cumulative, beta));
                }
                Sampler::Mixture(comps)
            }
        })
    }
}

enum Sampler {
    Uniform(f64, f64),
    Constant(f64),
    Mixture(Vec<(f64, Beta<f64>)>),
}

impl Sampler {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Uniform(low, high) => low + (high - low) * rng.random::<f64>(),
            Sampler::Constant(p) => *p,
            Sampler::Mixture(comps) => {
                let u: f64 = rng.random();
                let (_, beta) = comps
                    .iter()
                    .find(|(c, _)| u < *c)
                    .unwrap_or_else(|| comps.last().expect("non-empty mixture"));
                beta.sample(rng)
            }
        }
    }
}

/// How the true probability of label 1 relates to the base forecast.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LabelModel {
    /// Labels are drawn with probability `p`: the base is calibrated.
    Calibrated,
    /// Labels are drawn with probability `f_{α,β}(p)`.
    Cox { alpha: f64, beta: f64 },
}

impl LabelModel {
    pub fn true_probability(self, p: f64) -> f64 {
        match self {
            LabelModel::Calibrated => p,
            LabelModel::Cox { alpha, beta } => cox_binary(alpha, beta, p),
        }
    }
}

/// A binary stream whose labels follow `pre` before `changepoint` and
/// `post` from observation `changepoint` on (1-based).
#[derive(Clone, Debug, PartialEq)]
pub struct DriftScenario {
    pub length: usize,
    pub changepoint: usize,
    pub pre: LabelModel,
    pub post: LabelModel,
    pub base: BaseDistribution,
    /// Base forecasts are clamped into `[clamp, 1 - clamp]` when drawn.
    pub clamp: f64,
    pub seed: u64,
}

impl DriftScenario {
    /// Calibrated until the middle of the stream, Cox-miscalibrated after.
    pub fn midpoint(length: usize, alpha: f64, beta: f64, seed: u64) -> Self {
        DriftScenario {
            length,
            changepoint: length / 2 + 1,
            pre: LabelModel::Calibrated,
            post: LabelModel::Cox { alpha, beta },
            base: BaseDistribution::default(),
            clamp: 0.01,
            seed,
        }
    }

    pub fn calibrated(length: usize, seed: u64) -> Self {
        DriftScenario {
            length,
            changepoint: length.max(1),
            pre: LabelModel::Calibrated,
            post: LabelModel::Calibrated,
            base: BaseDistribution::default(),
            clamp: 0.01,
            seed,
        }
    }

    pub fn label_model_at(&self, index: usize) -> LabelModel {
        if index < self.changepoint {
            self.pre
        } else {
            self.post
        }
    }

    fn validate(&self) -> Result<()> {
        if self.length > 0 && !(1..=self.length).contains(&self.changepoint) {
            return Err(Error::Config(format!(
                "changepoint {} is outside [1, {}]",
                self.changepoint, self.length
            )));
        }
        if !(0.0..0.5).contains(&self.clamp) {
            return Err(Error::Config(format!(
                "clamp {} is outside [0, 0.5)",
                self.clamp
            )));
        }
        Ok(())
    }
}

/// Generates the scenario's stream; identical for identical scenarios.
pub fn synth_drift(scenario: &DriftScenario) -> Result<PredictionStream> {
    scenario.validate()?;
    let sampler = scenario.base.sampler()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut observations = Vec::with_capacity(scenario.length);
    for index in 1..=scenario.length {
        let raw = sampler.sample(&mut rng);
        let p = raw.clamp(scenario.clamp, 1.0 - scenario.clamp);
        let truth = scenario.label_model_at(index).true_probability(p);
        let label = usize::from(rng.random::<f64>() < truth);
        observations.push((Forecast::Binary(p), label));
    }
    let mut stream = PredictionStream::from_observations(observations)?;
    stream.metadata = StreamMetadata {
        dataset: Some(format!("synthetic-seed-{}", scenario.seed)),
        model: None,
        training_cut: None,
    };
    Ok(stream)
}

/// Applies `permutation` to the forecasts: record `i` receives the
/// forecast of record `permutation[i]`. Labels stay in place.
pub fn permute_objects(
    stream: &PredictionStream,
    permutation: &[usize],
) -> Result<PredictionStream> {
    let n = stream.len();
    let mut seen = vec![false; n];
    if permutation.len() != n
        || permutation
            .iter()
            .any(|&j| j >= n || std::mem::replace(&mut seen[j], true))
    {
        return Err(Error::Config(
            "not a permutation of the stream positions".into(),
        ));
    }
    let forecasts = permutation
        .iter()
        .map(|&j| stream.records()[j].forecast.clone())
        .collect();
    Ok(stream.with_forecasts(forecasts))
}

/// Uniformly random [`permute_objects`], seeded.
pub fn shuffle_objects(stream: &PredictionStream, seed: u64) -> Result<PredictionStream> {
    let mut permutation: Vec<usize> = (0..stream.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    permutation.shuffle(&mut rng);
    permute_objects(stream, &permutation)
}
