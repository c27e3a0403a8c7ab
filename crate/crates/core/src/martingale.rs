//! Test martingales that bet against the base forecasts.
//!
//! A [`SimpleJumper`] averages the elementary likelihood-ratio martingales
//! `Π f_θi(p_i)(y_i) / p_i(y_i)` over the Markov chain on the family that
//! starts at the neutral member and, at every step, jumps to a uniformly
//! chosen member with probability `J`. A [`CompositeJumper`] mixes several
//! jumping rates with the constant martingale 1:
//!
//! ```text
//! S_n = π + (1 - π) / |𝐉| · Σ_J S_n^J
//! ```
//!
//! Values are kept on a log scale: weights are renormalised after every
//! step and the normaliser is accumulated in `log_scale`, so values far
//! beyond the range of `f64` remain representable.

use std::io::Write;

use crate::calibration::CalibratorFamily;
use crate::error::{Error, Result};
use crate::forecast::Forecast;

const LN_10: f64 = std::f64::consts::LN_10;

/// Parameters shared by the test martingale and the protected predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct JumperConfig {
    pub family: CalibratorFamily,
    pub rates: Vec<f64>,
    pub passive_weight: f64,
}

impl JumperConfig {
    pub fn new(family: CalibratorFamily, rates: Vec<f64>, passive_weight: f64) -> Result<Self> {
        let config = JumperConfig {
            family,
            rates,
            passive_weight,
        };
        config.validate()?;
        Ok(config)
    }

    /// `π = 0.5`, `𝐉 = {1e-2, 1e-3, 1e-4}` over `family`.
    pub fn with_default_rates(family: CalibratorFamily) -> Self {
        JumperConfig {
            family,
            rates: vec![1e-2, 1e-3, 1e-4],
            passive_weight: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() {
            return Err(Error::Config(
                "at least one jumping rate is required".into(),
            ));
        }
        for (i, &rate) in self.rates.iter().enumerate() {
            if !(rate > 0.0 && rate <= 1.0) {
                return Err(Error::Config(format!(
                    "jumping rate {rate} is not in (0, 1]"
                )));
            }
            if self.rates[..i].contains(&rate) {
                return Err(Error::Config(format!("jumping rate {rate} listed twice")));
            }
        }
        if !(self.passive_weight > 0.0 && self.passive_weight < 1.0) {
            return Err(Error::Config(format!(
                "passive weight {} is not in (0, 1)",
                self.passive_weight
            )));
        }
        Ok(())
    }
}

/// `B_{f_θ(p)}({y}) / B_p({y})` for every member of the family.
pub fn likelihood_ratios(
    family: &CalibratorFamily,
    p: &Forecast,
    label: usize,
    step: u64,
) -> Result<Vec<f64>> {
    let likelihoods = family.label_likelihoods(p, label)?;
    let base = p.prob_of(label);
    if base <= 0.0 {
        return Err(Error::ZeroLikelihood { label, step });
    }
    Ok(likelihoods.into_iter().map(|q| q / base).collect())
}

/// State of one Simple Jumper martingale.
#[derive(Clone, Debug, PartialEq)]
pub struct SimpleJumper {
    rate: f64,
    weights: Vec<f64>,
    log_scale: f64,
    step: u64,
}

impl SimpleJumper {
    /// Fresh state: all mass on the neutral member, `S_0 = 1`.
    pub fn new(family: &CalibratorFamily, rate: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::ParameterDomain(format!(
                "jumping rate {rate} is not in [0, 1]"
            )));
        }
        let mut weights = vec![0.0; family.len()];
        weights[family.neutral_index()] = 1.0;
        Ok(SimpleJumper {
            rate,
            weights,
            log_scale: 0.0,
            step: 0,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Normalised weights `C_θ / C`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// `ln S_n`.
    pub fn ln_value(&self) -> f64 {
        self.log_scale
    }

    pub fn log10_value(&self) -> f64 {
        self.log_scale / LN_10
    }

    /// Processes one observation.
    pub fn step(&mut self, family: &CalibratorFamily, p: &Forecast, label: usize) -> Result<()> {
        let ratios = likelihood_ratios(family, p, label, self.step + 1)?;
        self.step_with_ratios(&ratios)
    }

    /// Processes one observation given its likelihood ratios, so that
    /// several jumpers over the same family can share them.
    pub fn step_with_ratios(&mut self, ratios: &[f64]) -> Result<()> {
        if ratios.len() != self.weights.len() {
            return Err(Error::ArityMismatch {
                expected: self.weights.len(),
                found: ratios.len(),
            });
        }
        // weights sum to 1, so the jump term is J / |Θ| times the total
        let jump = self.rate / self.weights.len() as f64;
        let stay = 1.0 - self.rate;
        let mut total = 0.0;
        for (w, r) in self.weights.iter_mut().zip(ratios) {
            *w = (stay * *w + jump) * r;
            total += *w;
        }
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::ParameterDomain(format!(
                "martingale factor {total} at step {}",
                self.step + 1
            )));
        }
        for w in &mut self.weights {
            *w /= total;
        }
        self.log_scale += total.ln();
        self.step += 1;
        Ok(())
    }
}

/// `ln(π + (1 - π)/|𝐉| · Σ_J exp(ln_values[J]))`, evaluated with a max shift.
pub fn composite_ln_value(ln_values: &[f64], passive_weight: f64) -> f64 {
    let shift = ln_values.iter().copied().fold(0.0, f64::max);
    let mean = ln_values.iter().map(|l| (l - shift).exp()).sum::<f64>() / ln_values.len() as f64;
    let scaled = passive_weight * (-shift).exp() + (1.0 - passive_weight) * mean;
    shift + scaled.ln()
}

/// The Composite Jumper martingale: one Simple Jumper per jumping rate.
#[derive(Clone, Debug)]
pub struct CompositeJumper {
    config: JumperConfig,
    jumpers: Vec<SimpleJumper>,
    step: u64,
}

impl CompositeJumper {
    pub fn new(config: JumperConfig) -> Result<Self> {
        config.validate()?;
        let jumpers = config
            .rates
            .iter()
            .map(|&rate| SimpleJumper::new(&config.family, rate))
            .collect::<Result<_>>()?;
        Ok(CompositeJumper {
            config,
            jumpers,
            step: 0,
        })
    }

    pub fn config(&self) -> &JumperConfig {
        &self.config
    }

    pub fn components(&self) -> &[SimpleJumper] {
        &self.jumpers
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, p: &Forecast, label: usize) -> Result<()> {
        let ratios = likelihood_ratios(&self.config.family, p, label, self.step + 1)?;
        for jumper in &mut self.jumpers {
            jumper.step_with_ratios(&ratios)?;
        }
        self.step += 1;
        Ok(())
    }

    /// `ln S_n` of the composite.
    pub fn ln_value(&self) -> f64 {
        let ln_values: Vec<f64> = self.jumpers.iter().map(SimpleJumper::ln_value).collect();
        composite_ln_value(&ln_values, self.config.passive_weight)
    }
}

/// One row of a martingale trajectory (all values `log10`).
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryPoint {
    pub step: u64,
    pub log10_composite: f64,
    pub log10_components: Vec<f64>,
}

/// Per-step `log10 S_n` for the composite and for every jumping rate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MartingaleTrajectory {
    pub rates: Vec<f64>,
    pub points: Vec<TrajectoryPoint>,
}

impl MartingaleTrajectory {
    pub fn final_log10(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.log10_composite)
    }

    pub fn final_components_log10(&self) -> Vec<f64> {
        self.points.last().map_or_else(
            || vec![0.0; self.rates.len()],
            |p| p.log10_components.clone(),
        )
    }

    /// Writes `step,log10_composite,log10_J=<rate>,...`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["step".to_string(), "log10_composite".to_string()];
        header.extend(self.rates.iter().map(|r| format!("log10_J={r}")));
        out.write_record(&header)?;
        for point in &self.points {
            let mut row = vec![point.step.to_string(), point.log10_composite.to_string()];
            row.extend(point.log10_components.iter().map(f64::to_string));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs the Composite Jumper over a stream of (truncated) forecasts and
/// labels, recording the trajectory.
pub fn run_test<'a, I>(config: &JumperConfig, observations: I) -> Result<MartingaleTrajectory>
where
    I: IntoIterator<Item = (&'a Forecast, usize)>,
{
    let mut composite = CompositeJumper::new(config.clone())?;
    let mut trajectory = MartingaleTrajectory {
        rates: config.rates.clone(),
        points: Vec::new(),
    };
    for (p, label) in observations {
        composite.step(p, label)?;
        trajectory.points.push(TrajectoryPoint {
            step: composite.step_count(),
            log10_composite: composite.ln_value() / LN_10,
            log10_components: composite
                .components()
                .iter()
                .map(SimpleJumper::log10_value)
                .collect(),
        });
    }
    Ok(trajectory)
}

/// Largest number of member sequences [`brute_force_mixture`] will enumerate.
pub const BRUTE_FORCE_LIMIT: usize = 1_000_000;

/// Simple Jumper value by explicit enumeration of every member sequence
/// `θ_1..θ_n`, weighting each elementary martingale by the probability of
/// the sequence under the jump chain started at the neutral member.
///
/// Exponential in the stream length; a reference for small instances.
pub fn brute_force_mixture(
    family: &CalibratorFamily,
    rate: f64,
    observations: &[(Forecast, usize)],
) -> Result<f64> {
    let m = family.len();
    let n = observations.len();
    let count = (0..n).try_fold(1usize, |acc, _| {
        acc.checked_mul(m).filter(|c| *c <= BRUTE_FORCE_LIMIT)
    });
    let Some(count) = count else {
        return Err(Error::TooLarge(format!(
            "{m}^{n} member sequences exceed {BRUTE_FORCE_LIMIT}"
        )));
    };
    // ratio[i][θ], straight from each member's formula
    let mut ratio = Vec::with_capacity(n);
    for (i, (p, y)) in observations.iter().enumerate() {
        p.check_label(*y)?;
        let base = p.prob_of(*y);
        if base <= 0.0 {
            return Err(Error::ZeroLikelihood {
                label: *y,
                step: i as u64 + 1,
            });
        }
        let row = family
            .members()
            .iter()
            .map(|f| Ok(f.apply(p)?.prob_of(*y) / base))
            .collect::<Result<Vec<f64>>>()?;
        ratio.push(row);
    }
    let transition = |from: usize, to: usize| {
        let jump = rate / m as f64;
        if from == to {
            1.0 - rate + jump
        } else {
            jump
        }
    };
    let mut sequence = vec![0usize; n];
    let mut total = 0.0;
    for _ in 0..count {
        let mut weight = 1.0;
        let mut prev = family.neutral_index();
        for (i, &theta) in sequence.iter().enumerate() {
            weight *= transition(prev, theta) * ratio[i][theta];
            prev = theta;
        }
        total += weight;
        // odometer increment
        for digit in sequence.iter_mut().rev() {
            *digit += 1;
            if *digit < m {
                break;
            }
            *digit = 0;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad3() -> CalibratorFamily {
        CalibratorFamily::quadratic(&[-1.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn neutral_only_family_stays_at_one() {
        let fam = CalibratorFamily::quadratic(&[0.0]).unwrap();
        let mut sj = SimpleJumper::new(&fam, 0.3).unwrap();
        for i in 0..100 {
            let p = Forecast::Binary(0.1 + 0.008 * i as f64);
            sj.step(&fam, &p, i % 2).unwrap();
            assert_eq!(sj.ln_value(), 0.0);
        }
    }

    #[test]
    fn zero_rate_never_leaves_neutral() {
        let fam = CalibratorFamily::default_binary();
        let mut sj = SimpleJumper::new(&fam, 0.0).unwrap();
        for i in 0..100 {
            let p = Forecast::Binary(0.05 + 0.009 * i as f64);
            sj.step(&fam, &p, (i * 7) % 3 % 2).unwrap();
            assert_eq!(sj.ln_value(), 0.0);
        }
    }

    #[test]
    fn matches_enumeration_on_three_steps() {
        let fam = quad3();
        let stream = vec![
            (Forecast::Binary(0.2), 1),
            (Forecast::Binary(0.7), 0),
            (Forecast::Binary(0.4), 1),
        ];
        let mut sj = SimpleJumper::new(&fam, 0.5).unwrap();
        for (p, y) in &stream {
            sj.step(&fam, p, *y).unwrap();
        }
        let oracle = brute_force_mixture(&fam, 0.5, &stream).unwrap();
        assert!((sj.ln_value().exp() - oracle).abs() < 1e-12 * oracle);
    }

    #[test]
    fn brute_force_edge_cases() {
        assert_eq!(brute_force_mixture(&quad3(), 0.5, &[]).unwrap(), 1.0);
        let fam = CalibratorFamily::quadratic(&[0.0]).unwrap();
        assert_eq!(
            brute_force_mixture(&fam, 0.5, &[(Forecast::Binary(0.3), 1)]).unwrap(),
            1.0
        );
        let long = vec![(Forecast::Binary(0.3), 1); 13];
        assert!(matches!(
            brute_force_mixture(&quad3(), 0.5, &long),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn composite_examples() {
        assert_eq!(composite_ln_value(&[0.0, 0.0, 0.0], 0.5), 0.0);
        let v = composite_ln_value(&[3f64.ln()], 0.5).exp();
        assert!((v - 2.0).abs() < 1e-15);
        assert!(composite_ln_value(&[-1e6, -1e6], 0.3) >= 0.3f64.ln() - 1e-14);
        // far beyond f64 range
        let big = composite_ln_value(&[7000.0, 7440.0], 0.5);
        assert!((big - (7440.0 + 0.25f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn zero_probability_on_label_is_an_error() {
        let fam = quad3();
        let mut sj = SimpleJumper::new(&fam, 0.1).unwrap();
        assert!(matches!(
            sj.step(&fam, &Forecast::Binary(0.0), 1),
            Err(Error::ZeroLikelihood { label: 1, step: 1 })
        ));
    }

    #[test]
    fn config_validation() {
        let fam = CalibratorFamily::default_binary();
        assert!(JumperConfig::new(fam.clone(), vec![0.01], 0.5).is_ok());
        assert!(JumperConfig::new(fam.clone(), vec![], 0.5).is_err());
        assert!(JumperConfig::new(fam.clone(), vec![0.0], 0.5).is_err());
        assert!(JumperConfig::new(fam.clone(), vec![0.1, 0.1], 0.5).is_err());
        assert!(JumperConfig::new(fam.clone(), vec![0.01], 1.0).is_err());
        assert!(JumperConfig::new(fam, vec![0.01], 0.0).is_err());
    }

    #[test]
    fn neutral_family_gives_flat_trajectory() {
        let fam = CalibratorFamily::cox(&[0.0], &[1.0]).unwrap();
        let config = JumperConfig::with_default_rates(fam);
        let stream: Vec<(Forecast, usize)> =
            (0..50).map(|i| (Forecast::Binary(0.3), i % 2)).collect();
        let traj = run_test(&config, stream.iter().map(|(p, y)| (p, *y))).unwrap();
        assert_eq!(traj.points.len(), 50);
        assert!(traj.points.iter().all(|p| p.log10_composite == 0.0));
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "step,log10_composite,log10_J=0.01,log10_J=0.001,log10_J=0.0001\n1,0,0,0,0\n"
        ));
    }
}
