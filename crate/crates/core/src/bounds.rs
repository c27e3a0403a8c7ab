//! Worst-case guarantees of the protected predictor, as checkable numbers.
//!
//! For any comparator sequence `θ_1..θ_n` of family members and any rate
//! `J ∈ 𝐉`, the protected log loss (in nats) satisfies
//!
//! ```text
//! Loss(p') ≤ Loss(f_θ1(p_1), ..., f_θn(p_n))
//!          + ln 1/(1-π) + ln |𝐉| + k ln(|Θ|-1) + k ln 1/J' + (n-k-1) ln 1/(1-J')
//! ```
//!
//! where `k` counts switches (with `θ_0` the neutral member) and
//! `J' = (|Θ|-1)/|Θ| · J`. The excess over the base loss never exceeds
//! `ln 1/π`.
//!
//! The chain that produces `θ_1..θ_n` takes `n` transitions from the
//! neutral start, so a path with `k` switches has prior weight
//! `(J'/(|Θ|-1))^k (1-J')^(n-k)`. [`path_regret`] uses that exponent and is
//! what [`certify_run`] checks; [`regret_bound`] evaluates the formula above
//! with `n-k-1`, which can be smaller than the true regret by up to
//! `ln 1/(1-J')`.

use std::fmt;

use crate::calibration::CalibratorFamily;
use crate::error::{Error, Result};
use crate::forecast::Forecast;
use crate::martingale::JumperConfig;

/// Tolerance on certificate slack, in nats.
pub const SLACK_TOLERANCE: f64 = 1e-9;

/// `ln 1/π`, the most the protected predictor can lose to the base one.
pub fn price_of_protection(passive_weight: f64) -> f64 {
    -passive_weight.ln()
}

/// `J' = (|Θ| - 1)/|Θ| · J`, the probability that the chain's state
/// actually changes in one step.
pub fn effective_jump_rate(rate: f64, theta_count: usize) -> Result<f64> {
    if theta_count < 2 {
        return Err(Error::ParameterDomain(format!(
            "effective jumping rate needs at least 2 members, got {theta_count}"
        )));
    }
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::ParameterDomain(format!(
            "jumping rate {rate} is not in [0, 1]"
        )));
    }
    Ok((theta_count - 1) as f64 / theta_count as f64 * rate)
}

/// Number of positions where the sequence changes member, starting from
/// the neutral member.
pub fn switch_count(sequence: &[usize], neutral: usize) -> usize {
    let mut prev = neutral;
    let mut count = 0;
    for &theta in sequence {
        if theta != prev {
            count += 1;
        }
        prev = theta;
    }
    count
}

fn regret_terms(
    k: usize,
    effective: f64,
    passive_weight: f64,
    theta_count: usize,
    jump_count: usize,
) -> f64 {
    let mut sum = -(1.0 - passive_weight).ln() + (jump_count as f64).ln();
    if k > 0 {
        sum += k as f64 * ((theta_count - 1) as f64).ln() - k as f64 * effective.ln();
    }
    sum
}

fn check_regret_inputs(rate: f64, passive_weight: f64, theta_count: usize) -> Result<f64> {
    let effective = effective_jump_rate(rate, theta_count)?;
    if !(effective > 0.0 && effective < 1.0) {
        return Err(Error::ParameterDomain(format!(
            "effective jumping rate {effective} is not in (0, 1)"
        )));
    }
    if !(0.0..1.0).contains(&passive_weight) {
        return Err(Error::ParameterDomain(format!(
            "passive weight {passive_weight} is not in [0, 1)"
        )));
    }
    Ok(effective)
}

/// The regret term as stated with exponent `n - k - 1`; requires
/// `k ≤ n - 1`.
pub fn regret_bound(
    n: usize,
    k: usize,
    rate: f64,
    passive_weight: f64,
    theta_count: usize,
    jump_count: usize,
) -> Result<f64> {
    let effective = check_regret_inputs(rate, passive_weight, theta_count)?;
    if n == 0 || k > n - 1 {
        return Err(Error::ParameterDomain(format!(
            "switch count {k} is not admissible for n = {n} (needs k ≤ n - 1)"
        )));
    }
    Ok(
        regret_terms(k, effective, passive_weight, theta_count, jump_count)
            - (n - k - 1) as f64 * (1.0 - effective).ln(),
    )
}

/// `-ln` of the prior weight of one comparator path: the regret term with
/// exponent `n - k`, valid for every `k ≤ n`.
pub fn path_regret(
    n: usize,
    k: usize,
    rate: f64,
    passive_weight: f64,
    theta_count: usize,
    jump_count: usize,
) -> Result<f64> {
    let effective = check_regret_inputs(rate, passive_weight, theta_count)?;
    if k > n {
        return Err(Error::ParameterDomain(format!(
            "switch count {k} exceeds n = {n}"
        )));
    }
    Ok(
        regret_terms(k, effective, passive_weight, theta_count, jump_count)
            - (n - k) as f64 * (1.0 - effective).ln(),
    )
}

/// Outcome of checking the regret inequality on one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RegretCertificate {
    pub n: usize,
    pub switches: usize,
    pub rate: f64,
    pub effective_rate: f64,
    pub passive_weight: f64,
    pub theta_count: usize,
    pub jump_count: usize,
    /// Protected loss, nats.
    pub protected_loss: f64,
    /// Loss of the comparator sequence, nats.
    pub comparator_loss: f64,
    pub regret: f64,
    /// `comparator_loss + regret - protected_loss`.
    pub slack: f64,
    /// Slack against [`regret_bound`], when `k ≤ n - 1`.
    pub stated_slack: Option<f64>,
}

impl RegretCertificate {
    pub fn holds(&self) -> bool {
        self.slack >= -SLACK_TOLERANCE
    }

    /// Builds the certificate for `comparator` against a protected run whose
    /// per-step losses (nats) are `protected_losses`.
    pub fn compute(
        protected_losses: &[f64],
        comparator: &[usize],
        observations: &[(Forecast, usize)],
        config: &JumperConfig,
        rate: f64,
    ) -> Result<Self> {
        let n = observations.len();
        if protected_losses.len() != n || comparator.len() != n {
            return Err(Error::ArityMismatch {
                expected: n,
                found: if protected_losses.len() != n {
                    protected_losses.len()
                } else {
                    comparator.len()
                },
            });
        }
        if !config.rates.contains(&rate) {
            return Err(Error::Config(format!(
                "rate {rate} is not one of the configured rates"
            )));
        }
        let family = &config.family;
        let comparator_loss = comparator_loss(family, comparator, observations)?;
        let protected_loss: f64 = protected_losses.iter().sum();
        let theta_count = family.len();
        let jump_count = config.rates.len();
        let switches = switch_count(comparator, family.neutral_index());
        let regret = path_regret(
            n,
            switches,
            rate,
            config.passive_weight,
            theta_count,
            jump_count,
        )?;
        let stated_slack = regret_bound(
            n,
            switches,
            rate,
            config.passive_weight,
            theta_count,
            jump_count,
        )
        .ok()
        .map(|r| comparator_loss + r - protected_loss);
        Ok(RegretCertificate {
            n,
            switches,
            rate,
            effective_rate: effective_jump_rate(rate, theta_count)?,
            passive_weight: config.passive_weight,
            theta_count,
            jump_count,
            protected_loss,
            comparator_loss,
            regret,
            slack: comparator_loss + regret - protected_loss,
            stated_slack,
        })
    }
}

impl fmt::Display for RegretCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n={}", self.n)?;
        writeln!(f, "k={}", self.switches)?;
        writeln!(f, "J={}", self.rate)?;
        writeln!(f, "J_effective={}", self.effective_rate)?;
        writeln!(f, "pi={}", self.passive_weight)?;
        writeln!(f, "theta_count={}", self.theta_count)?;
        writeln!(f, "jump_count={}", self.jump_count)?;
        writeln!(f, "lhs={}", self.protected_loss)?;
        writeln!(f, "comparator_loss={}", self.comparator_loss)?;
        writeln!(f, "regret={}", self.regret)?;
        writeln!(f, "rhs={}", self.comparator_loss + self.regret)?;
        writeln!(f, "slack={}", self.slack)?;
        match self.stated_slack {
            Some(s) => writeln!(f, "stated_slack={s}")?,
            None => writeln!(f, "stated_slack=na")?,
        }
        write!(f, "holds={}", self.holds())
    }
}

/// Log loss (nats) of the forecasts `f_θi(p_i)`.
pub fn comparator_loss(
    family: &CalibratorFamily,
    comparator: &[usize],
    observations: &[(Forecast, usize)],
) -> Result<f64> {
    let mut total = 0.0;
    for (&theta, (p, y)) in comparator.iter().zip(observations) {
        if theta >= family.len() {
            return Err(Error::Config(format!(
                "comparator index {theta} outside a family of {}",
                family.len()
            )));
        }
        let q = family.calibrate(theta, p)?.prob_of(*y);
        total -= q.ln();
    }
    Ok(total)
}

/// Computes the certificate and fails if the inequality is violated.
pub fn certify_run(
    protected_losses: &[f64],
    comparator: &[usize],
    observations: &[(Forecast, usize)],
    config: &JumperConfig,
    rate: f64,
) -> Result<RegretCertificate> {
    let cert =
        RegretCertificate::compute(protected_losses, comparator, observations, config, rate)?;
    if cert.holds() {
        Ok(cert)
    } else {
        Err(Error::BoundViolation { slack: cert.slack })
    }
}
