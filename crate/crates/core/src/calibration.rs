//! Calibrating functions and finite calibrator families.
//!
//! A family is an indexed list of calibrators `f_θ` with one distinguished
//! neutral member that maps every forecast to itself. Everything downstream
//! refers to a calibrator by its index in the family.
//!
//! Supported shapes:
//!
//! | kind           | map                                                  | neutral       |
//! |----------------|------------------------------------------------------|---------------|
//! | quadratic      | `p + θ p (1 - p)`, `θ ∈ [-1, 1]`                     | `θ = 0`       |
//! | cubic          | `p + a p (p - b) (p - 1)`                            | `a = 0`       |
//! | cox            | `p^β e^α / (p^β e^α + (1 - p)^β)`                    | `α = 0, β = 1`|
//! | cox-beta       | cox with `α = 0`                                     | `β = 1`       |
//! | cox-alpha      | cox with `β = 1`                                     | `α = 0`       |
//! | cox-multi      | `p_y^β e^{α(y)} / Σ_y' p_y'^β e^{α(y')}`             | `α = 0, β = 1`|
//!
//! Families can be written as strings, e.g. `cox:alpha=-1,0,1;beta=0.5,1,2`
//! or `cox-multi:k=3;beta=0.5,1,2` (see [`CalibratorFamily::from_str`]).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::forecast::Forecast;

/// Number of probe points used when validating a binary family.
const PROBE_POINTS: usize = 1001;
const IDENTITY_TOLERANCE: f64 = 1e-15;
const RANGE_TOLERANCE: f64 = 1e-12;

/// Quadratic calibrator `p + θ p (1 - p)`.
pub fn quadratic(theta: f64, p: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&theta) {
        return Err(Error::ParameterDomain(format!(
            "quadratic parameter {theta} is outside [-1, 1]"
        )));
    }
    Ok(p + theta * p * (1.0 - p))
}

/// Cubic calibrator `p + a p (p - b) (p - 1)`.
///
/// Whether the image stays inside [0, 1] depends on `(a, b)`; that is
/// checked once when a family is built, see [`cubic_stays_in_unit_interval`].
pub fn cubic(a: f64, b: f64, p: f64) -> f64 {
    p + a * p * (p - b) * (p - 1.0)
}

/// Checks the cubic at its endpoints and interior critical points.
pub fn cubic_stays_in_unit_interval(a: f64, b: f64) -> bool {
    let inside = |v: f64| (-RANGE_TOLERANCE..=1.0 + RANGE_TOLERANCE).contains(&v);
    if !inside(cubic(a, b, 0.0)) || !inside(cubic(a, b, 1.0)) {
        return false;
    }
    // derivative: 1 + a (3p^2 - 2(1 + b) p + b)
    let qa = 3.0 * a;
    let qb = -2.0 * a * (1.0 + b);
    let qc = 1.0 + a * b;
    let mut critical = Vec::with_capacity(2);
    if qa == 0.0 {
        if qb != 0.0 {
            critical.push(-qc / qb);
        }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let root = disc.sqrt();
            critical.push((-qb - root) / (2.0 * qa));
            critical.push((-qb + root) / (2.0 * qa));
        }
    }
    critical
        .into_iter()
        .filter(|p| (0.0..=1.0).contains(p))
        .all(|p| inside(cubic(a, b, p)))
}

/// Cox's two-parameter calibrator, linear in log odds:
/// `logit f(p) = α + β logit p`.
///
/// At `p ∈ {0, 1}` the continuous limit is used: for `β > 0` the endpoints
/// are fixed, for `β = 0` every input maps to `e^α / (e^α + 1)`, and for
/// `β < 0` the endpoints are swapped.
pub fn cox_binary(alpha: f64, beta: f64, p: f64) -> f64 {
    if p == 0.0 || p == 1.0 {
        if beta == 0.0 {
            return 1.0 / (1.0 + (-alpha).exp());
        }
        let at_one = (p == 1.0) == (beta > 0.0);
        return if at_one { 1.0 } else { 0.0 };
    }
    let num = p.powf(beta) * alpha.exp();
    let den = num + (1.0 - p).powf(beta);
    num / den
}

/// Multiclass Cox calibrator.
///
/// Adding the same constant to every `alpha[y]` leaves the output unchanged;
/// the exponentials are shifted by `max alpha` before evaluation.
pub fn cox_multiclass(alpha: &[f64], beta: f64, p: &[f64]) -> Result<Vec<f64>> {
    if alpha.len() != p.len() {
        return Err(Error::ArityMismatch {
            expected: alpha.len(),
            found: p.len(),
        });
    }
    if beta <= 0.0 {
        if let Some(y) = p.iter().position(|&q| q <= 0.0) {
            return Err(Error::ParameterDomain(format!(
                "component {y} is zero and beta = {beta} is not positive"
            )));
        }
    }
    let shift = alpha.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = p
        .iter()
        .zip(alpha)
        .map(|(&q, &a)| q.powf(beta) * (a - shift).exp())
        .collect();
    let total: f64 = out.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::ParameterDomain(format!(
            "multiclass normaliser is {total}"
        )));
    }
    for v in &mut out {
        *v /= total;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FamilyKind {
    Quadratic,
    Cubic,
    CoxBinary,
    CoxBeta,
    CoxAlpha,
    CoxMulticlass,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Quadratic => "quadratic",
            FamilyKind::Cubic => "cubic",
            FamilyKind::CoxBinary => "cox",
            FamilyKind::CoxBeta => "cox-beta",
            FamilyKind::CoxAlpha => "cox-alpha",
            FamilyKind::CoxMulticlass => "cox-multi",
        }
    }
}

/// One member of a family.
#[derive(Clone, Debug, PartialEq)]
pub enum Calibrator {
    Quadratic { theta: f64 },
    Cubic { a: f64, b: f64 },
    Cox { alpha: f64, beta: f64 },
    CoxMulticlass { alpha: Vec<f64>, beta: f64 },
}

impl Calibrator {
    /// Evaluates the calibrator's formula on `p`.
    pub fn apply(&self, p: &Forecast) -> Result<Forecast> {
        match (self, p) {
            (Calibrator::Quadratic { theta }, Forecast::Binary(q)) => {
                Ok(Forecast::Binary(quadratic(*theta, *q)?))
            }
            (Calibrator::Cubic { a, b }, Forecast::Binary(q)) => {
                Ok(Forecast::Binary(cubic(*a, *b, *q)))
            }
            (Calibrator::Cox { alpha, beta }, Forecast::Binary(q)) => {
                Ok(Forecast::Binary(cox_binary(*alpha, *beta, *q)))
            }
            (Calibrator::CoxMulticlass { alpha, beta }, Forecast::Categorical(v)) => {
                Ok(Forecast::Categorical(cox_multiclass(alpha, *beta, v)?))
            }
            (Calibrator::CoxMulticlass { alpha, .. }, Forecast::Binary(_)) => {
                Err(Error::ArityMismatch {
                    expected: alpha.len(),
                    found: 2,
                })
            }
            (_, Forecast::Categorical(v)) => Err(Error::ArityMismatch {
                expected: 2,
                found: v.len(),
            }),
        }
    }

    fn is_neutral(&self) -> bool {
        match self {
            Calibrator::Quadratic { theta } => *theta == 0.0,
            Calibrator::Cubic { a, .. } => *a == 0.0,
            Calibrator::Cox { alpha, beta } => *alpha == 0.0 && *beta == 1.0,
            Calibrator::CoxMulticlass { alpha, beta } => {
                *beta == 1.0 && alpha.iter().all(|a| *a == 0.0)
            }
        }
    }
}

impl fmt::Display for Calibrator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Calibrator::Quadratic { theta } => write!(f, "theta={theta}"),
            Calibrator::Cubic { a, b } => write!(f, "a={a},b={b}"),
            Calibrator::Cox { alpha, beta } => write!(f, "alpha={alpha},beta={beta}"),
            Calibrator::CoxMulticlass { alpha, beta } => {
                write!(f, "alpha={},beta={beta}", join(alpha, "/"))
            }
        }
    }
}

/// A finite, non-empty, duplicate-free family of calibrators with a neutral
/// member.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibratorFamily {
    kind: FamilyKind,
    members: Vec<Calibrator>,
    neutral: usize,
    arity: usize,
}

impl CalibratorFamily {
    pub fn quadratic(thetas: &[f64]) -> Result<Self> {
        for &theta in thetas {
            quadratic(theta, 0.5)?;
        }
        let members = thetas
            .iter()
            .map(|&theta| Calibrator::Quadratic { theta })
            .collect();
        Self::build(FamilyKind::Quadratic, members, 2)
    }

    /// Cartesian product of `a` and `b` grids. The neutral member is the
    /// first one with `a = 0`.
    pub fn cubic(a_grid: &[f64], b_grid: &[f64]) -> Result<Self> {
        let mut members = Vec::with_capacity(a_grid.len() * b_grid.len());
        for &a in a_grid {
            for &b in b_grid {
                if !cubic_stays_in_unit_interval(a, b) {
                    return Err(Error::ParameterDomain(format!(
                        "cubic with a={a}, b={b} leaves [0, 1]"
                    )));
                }
                members.push(Calibrator::Cubic { a, b });
            }
        }
        Self::build(FamilyKind::Cubic, members, 2)
    }

    /// Cartesian product of `alphas` and `betas`, alpha-major.
    pub fn cox(alphas: &[f64], betas: &[f64]) -> Result<Self> {
        let members = alphas
            .iter()
            .flat_map(|&alpha| {
                betas
                    .iter()
                    .map(move |&beta| Calibrator::Cox { alpha, beta })
            })
            .collect();
        Self::build(FamilyKind::CoxBinary, members, 2)
    }

    pub fn cox_beta(betas: &[f64]) -> Result<Self> {
        let members = betas
            .iter()
            .map(|&beta| Calibrator::Cox { alpha: 0.0, beta })
            .collect();
        Self::build(FamilyKind::CoxBeta, members, 2)
    }

    pub fn cox_alpha(alphas: &[f64]) -> Result<Self> {
        let members = alphas
            .iter()
            .map(|&alpha| Calibrator::Cox { alpha, beta: 1.0 })
            .collect();
        Self::build(FamilyKind::CoxAlpha, members, 2)
    }

    /// Cartesian product of alpha vectors and betas, alpha-major.
    pub fn cox_multiclass(alphas: &[Vec<f64>], betas: &[f64]) -> Result<Self> {
        let arity = alphas
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Family("empty alpha grid".into()))?;
        if arity < 2 {
            return Err(Error::Family(
                "multiclass family needs at least 2 labels".into(),
            ));
        }
        if alphas.iter().any(|a| a.len() != arity) {
            return Err(Error::Family("alpha vectors differ in length".into()));
        }
        let members = alphas
            .iter()
            .flat_map(|alpha| {
                betas.iter().map(move |&beta| Calibrator::CoxMulticlass {
                    alpha: alpha.clone(),
                    beta,
                })
            })
            .collect();
        Self::build(FamilyKind::CoxMulticlass, members, arity)
    }

    /// All 0/1 vectors of length `k` except the all-ones vector, which
    /// calibrates identically to the all-zeros one. Ordered by binary value.
    pub fn binary_alpha_vectors(k: usize) -> Vec<Vec<f64>> {
        (0..(1usize << k) - 1)
            .map(|bits| {
                (0..k)
                    .map(|i| {
                        if bits >> (k - 1 - i) & 1 == 1 {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Cox family with α ∈ {-1, 0, 1} and β ∈ {0.5, 1, 2}.
    pub fn default_binary() -> Self {
        Self::cox(&[-1.0, 0.0, 1.0], &[0.5, 1.0, 2.0]).expect("default binary family is valid")
    }

    /// Multiclass Cox family over the binary alpha vectors and β ∈ {0.5, 1, 2}.
    pub fn default_multiclass(k: usize) -> Result<Self> {
        Self::cox_multiclass(&Self::binary_alpha_vectors(k), &[0.5, 1.0, 2.0])
    }

    fn build(kind: FamilyKind, members: Vec<Calibrator>, arity: usize) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Family(format!(
                "{} family has an empty grid",
                kind.name()
            )));
        }
        for (i, m) in members.iter().enumerate() {
            if members[..i].contains(m) {
                return Err(Error::Family(format!("duplicate grid member {m}")));
            }
        }
        let neutral = members
            .iter()
            .position(Calibrator::is_neutral)
            .ok_or_else(|| {
                Error::Family(format!(
                    "{} grid does not contain the neutral element",
                    kind.name()
                ))
            })?;
        let family = CalibratorFamily {
            kind,
            members,
            neutral,
            arity,
        };
        family.validate()?;
        Ok(family)
    }

    /// Probes the formulas: the neutral member must be the identity and
    /// every member must keep binary forecasts inside [0, 1].
    fn validate(&self) -> Result<()> {
        if self.kind == FamilyKind::CoxMulticlass {
            return self.validate_multiclass();
        }
        let neutral = &self.members[self.neutral];
        for i in 0..PROBE_POINTS {
            let p = i as f64 / (PROBE_POINTS - 1) as f64;
            let input = Forecast::Binary(p);
            match neutral.apply(&input)? {
                Forecast::Binary(q) if (q - p).abs() <= IDENTITY_TOLERANCE => {}
                other => {
                    return Err(Error::Family(format!(
                        "neutral member maps {p} to {other}, not the identity"
                    )))
                }
            }
            for m in &self.members {
                if let Forecast::Binary(q) = m.apply(&input)? {
                    if !(-RANGE_TOLERANCE..=1.0 + RANGE_TOLERANCE).contains(&q) {
                        return Err(Error::ParameterDomain(format!("{m} maps {p} to {q}")));
                    }
                }
            }
        }
        Ok(())
    }

    fn validate_multiclass(&self) -> Result<()> {
        let k = self.arity;
        // uniform, a skewed interior point, and near-vertex points
        let mut probes = vec![vec![1.0 / k as f64; k]];
        let mut skew: Vec<f64> = (1..=k).map(|i| i as f64).collect();
        let s: f64 = skew.iter().sum();
        skew.iter_mut().for_each(|v| *v /= s);
        probes.push(skew);
        for y in 0..k {
            let mut v = vec![1e-3; k];
            v[y] = 1.0 - 1e-3 * (k - 1) as f64;
            probes.push(v);
        }
        for p in probes {
            let input = Forecast::Categorical(p.clone());
            if let Forecast::Categorical(q) = self.members[self.neutral].apply(&input)? {
                if q.iter()
                    .zip(&p)
                    .any(|(a, b)| (a - b).abs() > IDENTITY_TOLERANCE)
                {
                    return Err(Error::Family("neutral member is not the identity".into()));
                }
            }
            for m in &self.members {
                if let Forecast::Categorical(q) = m.apply(&input)? {
                    let total: f64 = q.iter().sum();
                    if q.iter().any(|v| *v < 0.0) || (total - 1.0).abs() > RANGE_TOLERANCE {
                        return Err(Error::ParameterDomain(format!("{m} leaves the simplex")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn neutral_index(&self) -> usize {
        self.neutral
    }

    /// Number of labels the family's forecasts range over.
    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn is_binary(&self) -> bool {
        self.kind != FamilyKind::CoxMulticlass
    }

    pub fn members(&self) -> &[Calibrator] {
        &self.members
    }

    pub fn member(&self, index: usize) -> &Calibrator {
        &self.members[index]
    }

    /// Checks that `p` has the shape this family operates on.
    pub fn check_forecast(&self, p: &Forecast) -> Result<()> {
        if p.is_binary() == self.is_binary() && p.arity() == self.arity {
            Ok(())
        } else {
            Err(Error::ArityMismatch {
                expected: self.arity,
                found: p.arity(),
            })
        }
    }

    /// `f_θ(p)` for the member at `index`. The neutral member returns `p`
    /// unchanged.
    pub fn calibrate(&self, index: usize, p: &Forecast) -> Result<Forecast> {
        if index == self.neutral {
            self.check_forecast(p)?;
            return Ok(p.clone());
        }
        self.members[index].apply(p)
    }

    /// `f_θ(p)` for every member, in grid order.
    pub fn calibrate_all(&self, p: &Forecast) -> Result<Vec<Forecast>> {
        self.check_forecast(p)?;
        (0..self.len()).map(|i| self.calibrate(i, p)).collect()
    }

    /// `B_{f_θ(p)}({label})` for every member, in grid order.
    pub fn label_likelihoods(&self, p: &Forecast, label: usize) -> Result<Vec<f64>> {
        p.check_label(label)?;
        Ok(self
            .calibrate_all(p)?
            .iter()
            .map(|q| q.prob_of(label))
            .collect())
    }
}

impl fmt::Display for CalibratorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut alphas = Vec::new();
        let mut betas = Vec::new();
        let push = |list: &mut Vec<String>, v: String| {
            if !list.contains(&v) {
                list.push(v);
            }
        };
        match self.kind {
            FamilyKind::Quadratic => {
                for m in &self.members {
                    if let Calibrator::Quadratic { theta } = m {
                        push(&mut alphas, theta.to_string());
                    }
                }
                write!(f, "quadratic:theta={}", alphas.join(","))
            }
            FamilyKind::Cubic => {
                for m in &self.members {
                    if let Calibrator::Cubic { a, b } = m {
                        push(&mut alphas, a.to_string());
                        push(&mut betas, b.to_string());
                    }
                }
                write!(f, "cubic:a={};b={}", alphas.join(","), betas.join(","))
            }
            FamilyKind::CoxBinary | FamilyKind::CoxBeta | FamilyKind::CoxAlpha => {
                for m in &self.members {
                    if let Calibrator::Cox { alpha, beta } = m {
                        push(&mut alphas, alpha.to_string());
                        push(&mut betas, beta.to_string());
                    }
                }
                match self.kind {
                    FamilyKind::CoxBeta => write!(f, "cox-beta:beta={}", betas.join(",")),
                    FamilyKind::CoxAlpha => write!(f, "cox-alpha:alpha={}", alphas.join(",")),
                    _ => write!(f, "cox:alpha={};beta={}", alphas.join(","), betas.join(",")),
                }
            }
            FamilyKind::CoxMulticlass => {
                for m in &self.members {
                    if let Calibrator::CoxMulticlass { alpha, beta } = m {
                        push(&mut alphas, join(alpha, "/"));
                        push(&mut betas, beta.to_string());
                    }
                }
                write!(
                    f,
                    "cox-multi:alpha={};beta={}",
                    alphas.join(","),
                    betas.join(",")
                )
            }
        }
    }
}

/// Parses `kind:key=v1,v2,...;key=...`.
///
/// ```text
/// quadratic:theta=-1,0,1
/// cubic:a=0,1.5;b=0.5
/// cox:alpha=-1,0,1;beta=0.5,1,2
/// cox-beta:beta=0.5,1,2
/// cox-alpha:alpha=-1,0,1
/// cox-multi:k=3;beta=0.5,1,2                 (binary alpha vectors)
/// cox-multi:alpha=0/0/0,1/0/0,0/1/0;beta=1
/// ```
impl FromStr for CalibratorFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut params: Vec<(&str, &str)> = Vec::new();
        for part in rest.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Family(format!("expected key=values, got `{part}`")))?;
            params.push((key.trim(), value.trim()));
        }
        let get = |key: &str| params.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
        let list = |key: &str| -> Result<Vec<f64>> {
            let value = get(key).ok_or_else(|| Error::Family(format!("missing `{key}`")))?;
            parse_list(value)
        };
        let allow = |keys: &[&str]| -> Result<()> {
            match params.iter().find(|(k, _)| !keys.contains(k)) {
                Some((k, _)) => Err(Error::Family(format!("unknown key `{k}` for {kind}"))),
                None => Ok(()),
            }
        };
        match kind.trim() {
            "quadratic" => {
                allow(&["theta"])?;
                Self::quadratic(&list("theta")?)
            }
            "cubic" => {
                allow(&["a", "b"])?;
                Self::cubic(&list("a")?, &list("b")?)
            }
            "cox" => {
                allow(&["alpha", "beta"])?;
                Self::cox(&list("alpha")?, &list("beta")?)
            }
            "cox-beta" => {
                allow(&["beta"])?;
                Self::cox_beta(&list("beta")?)
            }
            "cox-alpha" => {
                allow(&["alpha"])?;
                Self::cox_alpha(&list("alpha")?)
            }
            "cox-multi" => {
                allow(&["alpha", "beta", "k"])?;
                let alphas = match (get("alpha"), get("k")) {
                    (Some(value), None) => value
                        .split(',')
                        .map(|v| parse_list_sep(v, '/'))
                        .collect::<Result<Vec<_>>>()?,
                    (None, Some(k)) => {
                        let k: usize = k
                            .parse()
                            .map_err(|_| Error::Family(format!("bad label count `{k}`")))?;
                        if !(2..=16).contains(&k) {
                            return Err(Error::Family(format!("label count {k} out of range")));
                        }
                        Self::binary_alpha_vectors(k)
                    }
                    _ => {
                        return Err(Error::Family(
                            "cox-multi needs exactly one of `alpha`, `k`".into(),
                        ))
                    }
                };
                let betas = match get("beta") {
                    Some(value) => parse_list(value)?,
                    None => vec![0.5, 1.0, 2.0],
                };
                Self::cox_multiclass(&alphas, &betas)
            }
            other => Err(Error::Family(format!("unknown family kind `{other}`"))),
        }
    }
}

fn parse_list(value: &str) -> Result<Vec<f64>> {
    parse_list_sep(value, ',')
}

fn parse_list_sep(value: &str, sep: char) -> Result<Vec<f64>> {
    value
        .split(sep)
        .map(|v| {
            let v = v.trim();
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Family(format!("bad number `{v}`")))
        })
        .collect()
}

fn join(values: &[f64], sep: &str) -> String {
    values
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(sep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> impl Iterator<Item = f64> {
        (0..n).map(move |i| i as f64 / (n - 1) as f64)
    }

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    #[test]
    fn quadratic_examples() {
        assert_eq!(quadratic(0.0, 0.3).unwrap(), 0.3);
        assert_eq!(quadratic(1.0, 0.5).unwrap(), 0.75);
        assert_eq!(quadratic(-1.0, 1.0).unwrap(), 1.0);
        assert!(matches!(
            quadratic(1.5, 0.5),
            Err(Error::ParameterDomain(_))
        ));
    }

    #[test]
    fn cubic_examples() {
        assert_eq!(cubic(0.0, 0.5, 0.9), 0.9);
        assert_eq!(cubic(1.5, 0.5, 0.5), 0.5);
        assert!((cubic(1.5, 0.5, 0.9) - 0.846).abs() < 1e-15);
    }

    #[test]
    fn cubic_family_rejects_escaping_parameters() {
        assert!(cubic_stays_in_unit_interval(1.5, 0.5));
        // a = -5, b = 0.5 overshoots above 1 near p = 0.8
        assert!(!cubic_stays_in_unit_interval(-5.0, 0.5));
        assert!(CalibratorFamily::cubic(&[0.0, -5.0], &[0.5]).is_err());
        let fam = CalibratorFamily::cubic(&[0.0, 1.5], &[0.5]).unwrap();
        assert_eq!(fam.len(), 2);
        assert_eq!(fam.neutral_index(), 0);
    }

    #[test]
    fn cox_binary_examples() {
        assert_eq!(cox_binary(0.0, 1.0, 0.7), 0.7);
        assert_eq!(cox_binary(0.0, 0.0, 0.13), 0.5);
        assert_eq!(cox_binary(0.0, 2.0, 0.5), 0.5);
    }

    #[test]
    fn cox_binary_endpoint_limits() {
        assert_eq!(cox_binary(1.0, 2.0, 0.0), 0.0);
        assert_eq!(cox_binary(-1.0, 0.5, 1.0), 1.0);
        assert_eq!(cox_binary(0.0, 0.0, 0.0), 0.5);
        assert_eq!(cox_binary(0.0, 0.0, 1.0), 0.5);
        assert_eq!(cox_binary(0.0, -1.0, 0.0), 1.0);
        assert_eq!(cox_binary(0.0, -1.0, 1.0), 0.0);
    }

    #[test]
    fn cox_log_odds_linearity() {
        for &alpha in &[-1.0, 0.0, 1.0] {
            for &beta in &[0.5, 1.0, 2.0] {
                for i in 1..999 {
                    let p = 0.001 + 0.998 * i as f64 / 999.0;
                    let f = cox_binary(alpha, beta, p);
                    let resid = logit(f) - alpha - beta * logit(p);
                    assert!(
                        resid.abs() < 1e-10,
                        "alpha={alpha} beta={beta} p={p}: {resid}"
                    );
                }
            }
        }
    }

    #[test]
    fn cox_binary_increasing_for_positive_beta() {
        for &beta in &[0.5, 1.0, 2.0] {
            let mut prev = 0.0;
            for p in grid(1001).skip(1).take(999) {
                let f = cox_binary(1.0, beta, p);
                assert!(f > prev);
                prev = f;
            }
        }
    }

    #[test]
    fn cox_multiclass_examples() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(cox_multiclass(&[0.0; 3], 1.0, &p).unwrap(), p.to_vec());

        let base = cox_multiclass(&[0.0, 1.0, -0.5], 2.0, &p).unwrap();
        let shifted = cox_multiclass(&[3.7, 4.7, 3.2], 2.0, &p).unwrap();
        for (a, b) in base.iter().zip(&shifted) {
            assert!((a - b).abs() < 1e-12);
        }

        // (0.5, 0.5, 0) truncated at 0.01 is (0.5, 0.5, 0.01) / 1.01
        let t = [0.5 / 1.01, 0.5 / 1.01, 0.01 / 1.01];
        let out = cox_multiclass(&[0.0; 3], 2.0, &t).unwrap();
        let expect = [0.25 / 0.5001, 0.25 / 0.5001, 0.0001 / 0.5001];
        for (a, b) in out.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn cox_multiclass_zero_component_needs_positive_beta() {
        assert!(cox_multiclass(&[0.0; 3], 0.0, &[0.5, 0.5, 0.0]).is_err());
        assert!(cox_multiclass(&[0.0; 3], -1.0, &[0.5, 0.5, 0.0]).is_err());
        assert!(cox_multiclass(&[0.0; 3], 1.0, &[0.5, 0.5, 0.0]).is_ok());
        assert!(cox_multiclass(&[0.0; 2], 1.0, &[0.5, 0.3, 0.2]).is_err());
    }

    #[test]
    fn family_sizes_and_neutral() {
        let cox = CalibratorFamily::default_binary();
        assert_eq!(cox.len(), 9);
        assert_eq!(
            cox.member(cox.neutral_index()),
            &Calibrator::Cox {
                alpha: 0.0,
                beta: 1.0
            }
        );

        let quad = CalibratorFamily::quadratic(&[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(quad.len(), 3);
        assert_eq!(quad.neutral_index(), 1);

        let multi = CalibratorFamily::default_multiclass(3).unwrap();
        assert_eq!(multi.len(), 21);
        assert_eq!(multi.arity(), 3);
        assert_eq!(
            multi.member(multi.neutral_index()),
            &Calibrator::CoxMulticlass {
                alpha: vec![0.0; 3],
                beta: 1.0
            }
        );
        assert!(!CalibratorFamily::binary_alpha_vectors(3).contains(&vec![1.0, 1.0, 1.0]));
    }

    #[test]
    fn family_construction_errors() {
        assert!(CalibratorFamily::quadratic(&[-1.0, 1.0]).is_err());
        assert!(CalibratorFamily::quadratic(&[]).is_err());
        assert!(CalibratorFamily::quadratic(&[0.0, 0.0]).is_err());
        assert!(CalibratorFamily::cox(&[-1.0, 1.0], &[1.0]).is_err());
        assert!(CalibratorFamily::cox_beta(&[0.5, 2.0]).is_err());
        assert!(CalibratorFamily::cox_multiclass(&[vec![1.0, 0.0]], &[1.0]).is_err());
    }

    #[test]
    fn neutral_identity_on_dense_grid() {
        let families = [
            CalibratorFamily::quadratic(&[-1.0, 0.0, 1.0]).unwrap(),
            CalibratorFamily::cubic(&[0.0, 1.5], &[0.5]).unwrap(),
            CalibratorFamily::default_binary(),
            CalibratorFamily::cox_beta(&[0.5, 1.0, 2.0]).unwrap(),
            CalibratorFamily::cox_alpha(&[-1.0, 0.0, 1.0]).unwrap(),
        ];
        for fam in &families {
            let neutral = fam.member(fam.neutral_index());
            for p in grid(1001) {
                let q = neutral.apply(&Forecast::Binary(p)).unwrap();
                assert!((q.prob_of(1) - p).abs() <= 1e-15, "{fam}: {p}");
            }
        }
    }

    #[test]
    fn range_preserved_for_every_member() {
        let families = [
            CalibratorFamily::quadratic(&[-1.0, -0.5, 0.0, 0.5, 1.0]).unwrap(),
            CalibratorFamily::cubic(&[0.0, 1.0, 1.5], &[0.25, 0.5, 0.75]).unwrap(),
            CalibratorFamily::cox(&[-2.0, -1.0, 0.0, 1.0, 2.0], &[0.0, 0.5, 1.0, 2.0]).unwrap(),
        ];
        for fam in &families {
            for p in grid(10_001) {
                for q in fam.calibrate_all(&Forecast::Binary(p)).unwrap() {
                    let q = q.prob_of(1);
                    assert!((0.0..=1.0).contains(&q), "{fam}: f({p}) = {q}");
                }
            }
        }
        let multi = CalibratorFamily::default_multiclass(3).unwrap();
        for i in 1..40 {
            for j in 1..(40 - i) {
                let p = vec![i as f64 / 40.0, j as f64 / 40.0, (40 - i - j) as f64 / 40.0];
                for q in multi.calibrate_all(&Forecast::Categorical(p)).unwrap() {
                    crate::forecast::check_simplex(q.columns()).unwrap();
                }
            }
        }
    }

    #[test]
    fn parse_and_display_round_trip() {
        let specs = [
            "quadratic:theta=-1,0,1",
            "cubic:a=0,1.5;b=0.5",
            "cox:alpha=-1,0,1;beta=0.5,1,2",
            "cox-beta:beta=0.5,1,2",
            "cox-alpha:alpha=-1,0,1",
            "cox-multi:alpha=0/0/0,1/0/0;beta=0.5,1",
        ];
        for spec in specs {
            let fam: CalibratorFamily = spec.parse().unwrap();
            assert_eq!(fam.to_string(), spec);
            let again: CalibratorFamily = fam.to_string().parse().unwrap();
            assert_eq!(again, fam);
        }
        let fam: CalibratorFamily = "cox:alpha=-1,0,1;beta=0.5,1,2".parse().unwrap();
        assert_eq!(fam, CalibratorFamily::default_binary());
        let multi: CalibratorFamily = "cox-multi:k=3;beta=0.5,1,2".parse().unwrap();
        assert_eq!(multi, CalibratorFamily::default_multiclass(3).unwrap());
    }

    #[test]
    fn parse_errors() {
        for bad in [
            "cox",
            "cox:alpha=-1,0,1",
            "cox:alpha=-1,x;beta=1",
            "quadratic:theta=0;beta=1",
            "sigmoid:theta=0",
            "cox-multi:k=3;alpha=0/0/0",
        ] {
            assert!(bad.parse::<CalibratorFamily>().is_err(), "{bad}");
        }
    }

    #[test]
    fn neutral_calibrate_is_exact_identity() {
        let fam = CalibratorFamily::default_binary();
        let p = Forecast::Binary(0.123_456_789);
        assert_eq!(fam.calibrate(fam.neutral_index(), &p).unwrap(), p);
        assert!(fam
            .calibrate_all(&Forecast::Categorical(vec![0.5, 0.5]))
            .is_err());
    }
}
