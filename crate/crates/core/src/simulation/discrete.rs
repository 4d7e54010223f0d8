//! Finite joint laws of decisions and outcomes with exact expectations.
//!
//! Probabilities and outcome values are rationals, so expectations such as
//! `E[Y | Z = 20] = 10/9` come out exactly; conversion to `f64` happens only
//! when data are sampled.

use std::io::Read;
use std::str::FromStr;

use num_rational::Ratio;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::ObservationalDataset;
use crate::error::{Error, Result};
use crate::problem::{PotentialCurves, RewardSpec, Sample};

pub type Rational = Ratio<i64>;

fn r(n: i64, d: i64) -> Rational {
    Ratio::new(n, d)
}

fn int(n: i64) -> Rational {
    Ratio::from_integer(n)
}

/// One support point of the joint law.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    /// Optional discrete covariate.
    pub x: Option<Rational>,
    pub z: Rational,
    /// Potential outcomes `Y(d)` for each of the instance's decisions, when known.
    pub potential: Option<Vec<Rational>>,
    /// Observed outcome `Y = Y(z)`.
    pub y: Rational,
    pub prob: Rational,
}

/// A finite distribution over `(x, z, y)` and, optionally, full
/// potential-outcome vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteInstance {
    pub decisions: Vec<Rational>,
    pub atoms: Vec<Atom>,
}

/// Exact expectations at one decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscreteRow {
    #[serde(serialize_with = "ser_ratio")]
    pub z: Rational,
    /// `y(z) = E[Y(z)]`; needs potential outcomes.
    #[serde(serialize_with = "ser_opt_ratio")]
    pub mean: Option<Rational>,
    /// `ỹ(z) = E[Y | Z = z]`; absent when `P(Z = z) = 0`.
    #[serde(serialize_with = "ser_opt_ratio")]
    pub predictive: Option<Rational>,
    #[serde(serialize_with = "ser_opt_ratio")]
    pub reward: Option<Rational>,
    #[serde(serialize_with = "ser_opt_ratio")]
    pub predictive_reward: Option<Rational>,
}

fn ser_ratio<S: serde::Serializer>(v: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

fn ser_opt_ratio<S: serde::Serializer>(v: &Option<Rational>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => s.serialize_str(&v.to_string()),
        None => s.serialize_none(),
    }
}

pub fn to_f64(v: Rational) -> f64 {
    *v.numer() as f64 / *v.denom() as f64
}

impl DiscreteInstance {
    /// Validates the law. With `normalize`, probabilities are rescaled to
    /// sum to one; otherwise they must already sum to exactly one.
    pub fn new(decisions: Vec<Rational>, mut atoms: Vec<Atom>, normalize: bool) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidInput("discrete law needs at least one atom".into()));
        }
        let mut total = int(0);
        for (i, a) in atoms.iter().enumerate() {
            if a.prob < int(0) {
                return Err(Error::InvalidInput(format!("atom {i} has negative probability {}", a.prob)));
            }
            if let Some(p) = &a.potential {
                if p.len() != decisions.len() {
                    return Err(Error::DimensionMismatch { expected: decisions.len(), got: p.len() });
                }
                let m = decisions.iter().position(|d| *d == a.z).ok_or_else(|| {
                    Error::InvalidInput(format!("atom {i} decision {} is not among the potential-outcome decisions", a.z))
                })?;
                if p[m] != a.y {
                    return Err(Error::InvalidInput(format!("atom {i}: observed outcome differs from Y({})", a.z)));
                }
            }
            total += a.prob;
        }
        if total == int(0) {
            return Err(Error::InvalidInput("probabilities sum to zero".into()));
        }
        if normalize {
            for a in &mut atoms {
                a.prob /= total;
            }
        } else if total != int(1) {
            return Err(Error::InvalidInput(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { decisions, atoms })
    }

    fn observed(atoms: &[(i64, i64, Rational)]) -> Result<Self> {
        let mut decisions: Vec<Rational> = atoms.iter().map(|a| int(a.0)).collect();
        decisions.sort();
        decisions.dedup();
        let atoms = atoms
            .iter()
            .map(|&(z, y, prob)| Atom { x: None, z: int(z), potential: None, y: int(y), prob })
            .collect();
        Self::new(decisions, atoms, false)
    }

    /// Potential-outcome atoms `(z, [Y(20), Y(28)], p)`.
    fn two_price(atoms: &[(i64, [i64; 2], Rational)]) -> Result<Self> {
        let decisions = vec![int(20), int(28)];
        let atoms = atoms
            .iter()
            .map(|&(z, ys, prob)| {
                let y = if z == 20 { ys[0] } else { ys[1] };
                Atom { x: None, z: int(z), potential: Some(vec![int(ys[0]), int(ys[1])]), y: int(y), prob }
            })
            .collect();
        Self::new(decisions, atoms, false)
    }

    /// Six equally likely days of prices 20/28 with both potential demands.
    pub fn intro_table() -> Self {
        let sixth = r(1, 6);
        Self::two_price(&[
            (20, [1, 0], sixth),
            (28, [1, 0], sixth),
            (28, [1, 1], sixth),
            (20, [2, 0], sixth),
            (20, [1, 0], sixth),
            (28, [1, 0], sixth),
        ])
        .expect("valid table")
    }

    /// Observed joint law of price and demand.
    pub fn observed_two_price() -> Self {
        Self::observed(&[
            (20, 0, int(0)),
            (20, 1, r(8, 18)),
            (20, 2, r(1, 18)),
            (28, 0, r(8, 18)),
            (28, 1, r(1, 18)),
            (28, 2, int(0)),
        ])
        .expect("valid table")
    }

    /// A potential-outcome model consistent with [`Self::observed_two_price`]
    /// under which the low price is optimal at cost 19.
    pub fn alice() -> Self {
        let mut atoms = Vec::new();
        for z in [20, 28] {
            atoms.push((z, [1, 0], r(32, 81)));
            atoms.push((z, [1, 1], r(4, 81)));
            atoms.push((z, [2, 0], r(4, 81)));
            atoms.push((z, [2, 1], r(1, 162)));
        }
        Self::two_price(&atoms).expect("valid table")
    }

    /// A second model with the same observed law under which the high
    /// price is optimal at cost 19.
    pub fn bob() -> Self {
        Self::two_price(&[
            (20, [1, 0], r(40, 99)),
            (20, [1, 1], r(4, 99)),
            (20, [2, 0], int(0)),
            (20, [2, 1], r(1, 18)),
            (28, [1, 0], r(4, 9)),
            (28, [1, 1], r(2, 45)),
            (28, [2, 0], int(0)),
            (28, [2, 1], r(1, 90)),
        ])
        .expect("valid table")
    }

    /// Observed law with a binary covariate `x` (1 on event days).
    pub fn with_event_covariate() -> Self {
        let rows = [
            (0, 20, 1, r(4, 9)),
            (0, 28, 0, r(4, 9)),
            (0, 28, 1, r(2, 45)),
            (1, 28, 1, r(1, 90)),
            (1, 20, 2, r(1, 18)),
        ];
        let atoms = rows
            .iter()
            .map(|&(x, z, y, prob)| Atom { x: Some(int(x)), z: int(z), potential: None, y: int(y), prob })
            .collect();
        Self::new(vec![int(20), int(28)], atoms, false).expect("valid table")
    }

    pub fn has_potential_outcomes(&self) -> bool {
        self.atoms.iter().all(|a| a.potential.is_some())
    }

    pub fn has_covariate(&self) -> bool {
        self.atoms.iter().all(|a| a.x.is_some())
    }

    /// `P(Z = z)`.
    pub fn decision_probability(&self, z: Rational) -> Rational {
        self.atoms.iter().filter(|a| a.z == z).map(|a| a.prob).sum()
    }

    /// `y(z) = Σ P·Y(z)`, when potential outcomes are known.
    pub fn mean_response(&self, z: Rational) -> Option<Rational> {
        let m = self.decisions.iter().position(|d| *d == z)?;
        self.atoms
            .iter()
            .map(|a| a.potential.as_ref().map(|p| a.prob * p[m]))
            .sum()
    }

    /// `ỹ(z) = E[Y | Z = z]`.
    pub fn predictive_response(&self, z: Rational) -> Option<Rational> {
        let pz = self.decision_probability(z);
        if pz == int(0) {
            return None;
        }
        Some(self.atoms.iter().filter(|a| a.z == z).map(|a| a.prob * a.y).sum::<Rational>() / pz)
    }

    /// `E[Y(z) − y(z) | Z = z]`, computed from the potential outcomes of the
    /// atoms at `z` rather than as a difference of the two curves.
    pub fn confounding_error(&self, z: Rational) -> Option<Rational> {
        let m = self.decisions.iter().position(|d| *d == z)?;
        let mean = self.mean_response(z)?;
        let pz = self.decision_probability(z);
        if pz == int(0) {
            return None;
        }
        let mut acc = int(0);
        for a in self.atoms.iter().filter(|a| a.z == z) {
            acc += a.prob * (a.potential.as_ref()?[m] - mean);
        }
        Some(acc / pz)
    }

    /// Marginal observed law `P(Z = z, Y = y)`, summing out the covariate.
    pub fn observed_law(&self) -> Vec<(Rational, Rational, Rational)> {
        let mut out: Vec<(Rational, Rational, Rational)> = Vec::new();
        for a in &self.atoms {
            match out.iter_mut().find(|(z, y, _)| *z == a.z && *y == a.y) {
                Some(entry) => entry.2 += a.prob,
                None => out.push((a.z, a.y, a.prob)),
            }
        }
        out.sort();
        out
    }

    /// `P(X = x)`.
    pub fn covariate_probability(&self, x: Rational) -> Rational {
        self.atoms.iter().filter(|a| a.x == Some(x)).map(|a| a.prob).sum()
    }

    /// Reads `z,y,p` (observed) or `z,y@<d1>,...,y@<dm>,p` (potential
    /// outcomes), with an optional `x` column. Values are integers,
    /// fractions `a/b` or decimals, all kept exact.
    pub fn read_csv<R: Read>(reader: R, normalize: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Csv { line: 1, message: e.to_string() })?.clone();
        let (mut z_col, mut y_col, mut p_col, mut x_col) = (None, None, None, None);
        let mut potential_cols = Vec::new();
        for (pos, name) in headers.iter().enumerate() {
            match name.trim() {
                "z" => z_col = Some(pos),
                "y" => y_col = Some(pos),
                "p" | "prob" | "probability" => p_col = Some(pos),
                "x" => x_col = Some(pos),
                other => {
                    let d = other
                        .strip_prefix("y@")
                        .and_then(|d| parse_rational(d).ok())
                        .ok_or_else(|| Error::Csv { line: 1, message: format!("unexpected column `{other}`") })?;
                    potential_cols.push((d, pos));
                }
            }
        }
        let missing = |c: &str| Error::Csv { line: 1, message: format!("missing column `{c}`") };
        let z_col = z_col.ok_or_else(|| missing("z"))?;
        let p_col = p_col.ok_or_else(|| missing("p"))?;
        if y_col.is_none() && potential_cols.is_empty() {
            return Err(missing("y"));
        }
        let decisions: Vec<Rational> = potential_cols.iter().map(|(d, _)| *d).collect();
        let mut atoms = Vec::new();
        let mut observed_decisions = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| Error::Csv { line: e.position().map_or(0, |p| p.line()), message: e.to_string() })?;
            let line = record.position().map_or(0, |p| p.line());
            let field = |pos: usize| -> Result<Rational> {
                let raw = record.get(pos).unwrap_or("").trim();
                parse_rational(raw).map_err(|m| Error::Csv { line, message: m })
            };
            let z = field(z_col)?;
            let potential = if potential_cols.is_empty() {
                None
            } else {
                Some(potential_cols.iter().map(|&(_, pos)| field(pos)).collect::<Result<Vec<_>>>()?)
            };
            let y = match (y_col, &potential) {
                (Some(c), _) => field(c)?,
                (None, Some(p)) => {
                    let m = decisions.iter().position(|d| *d == z).ok_or_else(|| Error::Csv {
                        line,
                        message: format!("decision {z} has no potential-outcome column"),
                    })?;
                    p[m]
                }
                (None, None) => unreachable!(),
            };
            let x = x_col.map(field).transpose()?;
            observed_decisions.push(z);
            atoms.push(Atom { x, z, potential, y, prob: field(p_col)? });
        }
        let decisions = if decisions.is_empty() {
            observed_decisions.sort();
            observed_decisions.dedup();
            observed_decisions
        } else {
            decisions
        };
        Self::new(decisions, atoms, normalize)
    }
}

/// Parses `7`, `-3/4` or `0.125` exactly.
pub fn parse_rational(s: &str) -> std::result::Result<Rational, String> {
    let s = s.trim();
    if let Ok(v) = Rational::from_str(s) {
        return Ok(v);
    }
    let bad = || format!("cannot parse `{s}` as an exact number");
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s),
    };
    let (whole, frac) = body.split_once('.').ok_or_else(bad)?;
    if frac.is_empty() || frac.len() > 15 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let whole: i64 = if whole.is_empty() { 0 } else { whole.parse().map_err(|_| bad())? };
    let den = 10i64.pow(frac.len() as u32);
    let num = whole.checked_mul(den).and_then(|w| w.checked_add(frac.parse::<i64>().ok()?)).ok_or_else(bad)?;
    Ok(Ratio::new(if neg { -num } else { num }, den))
}

fn exact_reward(reward: &RewardSpec) -> Result<(Rational, bool)> {
    match *reward {
        RewardSpec::Unit => Ok((int(0), false)),
        RewardSpec::Margin { cost } => {
            let c = Rational::approximate_float(cost)
                .filter(|c| to_f64(*c) == cost)
                .ok_or_else(|| Error::InvalidInput(format!("cost {cost} has no exact rational form")))?;
            Ok((c, true))
        }
    }
}

/// `(z, y(z), ỹ(z), R(z), R̃(z))` for each decision of the instance.
pub fn discrete_expectations(instance: &DiscreteInstance, reward: &RewardSpec) -> Result<Vec<DiscreteRow>> {
    let (cost, margin) = exact_reward(reward)?;
    let rz = |z: Rational| if margin { z - cost } else { int(1) };
    Ok(instance
        .decisions
        .iter()
        .map(|&z| {
            let mean = instance.mean_response(z);
            let predictive = instance.predictive_response(z);
            DiscreteRow {
                z,
                mean,
                predictive,
                reward: mean.map(|m| rz(z) * m),
                predictive_reward: predictive.map(|p| rz(z) * p),
            }
        })
        .collect())
}

/// `n` iid draws of `(x, z, y)`; potential outcomes are returned alongside.
pub fn gen_discrete(instance: &DiscreteInstance, n: usize, seed: u64) -> Result<Sample> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    let weights: Vec<f64> = instance.atoms.iter().map(|a| to_f64(a.prob)).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let with_x = instance.has_covariate();
    let with_potential = instance.has_potential_outcomes();
    let (mut x, mut z, mut y, mut pot) = (Vec::new(), Vec::with_capacity(n), Vec::with_capacity(n), Vec::new());
    for _ in 0..n {
        let a = &instance.atoms[dist.sample(&mut rng)];
        z.push(to_f64(a.z));
        y.push(to_f64(a.y));
        if with_x {
            x.push(to_f64(a.x.expect("covariate present")));
        }
        if with_potential {
            pot.push(a.potential.as_ref().expect("potential present").iter().map(|v| to_f64(*v)).collect());
        }
    }
    let k = usize::from(with_x);
    Ok(Sample {
        data: ObservationalDataset::new(x, k, z, y)?,
        potential: with_potential.then(|| PotentialCurves::Tabulated {
            decisions: instance.decisions.iter().map(|d| to_f64(*d)).collect(),
            values: pot,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn margin19() -> RewardSpec {
        RewardSpec::margin(19.0).unwrap()
    }

    fn row(rows: &[DiscreteRow], z: i64) -> DiscreteRow {
        *rows.iter().find(|r| r.z == int(z)).unwrap()
    }

    #[test]
    fn intro_table_values() {
        let t = DiscreteInstance::intro_table();
        assert_eq!(t.predictive_response(int(20)), Some(r(4, 3)));
        assert_eq!(t.mean_response(int(20)), Some(r(7, 6)));
        assert_eq!(t.predictive_response(int(28)), Some(r(1, 3)));
        assert_eq!(t.mean_response(int(28)), Some(r(1, 6)));
        let rows = discrete_expectations(&t, &margin19()).unwrap();
        assert_eq!(row(&rows, 20).predictive_reward, Some(r(4, 3)));
        assert_eq!(row(&rows, 28).predictive_reward, Some(int(3)));
    }

    #[test]
    fn two_models_one_observed_law() {
        let obs = DiscreteInstance::observed_two_price().observed_law();
        let nonzero = |law: Vec<(Rational, Rational, Rational)>| law.into_iter().filter(|e| e.2 != int(0)).collect::<Vec<_>>();
        assert_eq!(nonzero(DiscreteInstance::alice().observed_law()), nonzero(obs.clone()));
        assert_eq!(nonzero(DiscreteInstance::bob().observed_law()), nonzero(obs));

        let alice = discrete_expectations(&DiscreteInstance::alice(), &margin19()).unwrap();
        assert_eq!(row(&alice, 20).reward, Some(r(10, 9)));
        assert_eq!(row(&alice, 28).reward, Some(int(1)));
        let bob = discrete_expectations(&DiscreteInstance::bob(), &margin19()).unwrap();
        assert_eq!(row(&bob, 20).reward, Some(r(16, 15)));
        assert_eq!(row(&bob, 28).reward, Some(r(15, 11)));
    }

    #[test]
    fn observed_conditional_means() {
        let t = DiscreteInstance::observed_two_price();
        assert_eq!(t.predictive_response(int(20)), Some(r(10, 9)));
        assert_eq!(t.predictive_response(int(28)), Some(r(1, 9)));
        assert_eq!(t.mean_response(int(20)), None);
    }

    #[test]
    fn confounding_identity() {
        for t in [DiscreteInstance::intro_table(), DiscreteInstance::alice(), DiscreteInstance::bob()] {
            for &z in &t.decisions {
                let direct = t.confounding_error(z).unwrap();
                assert_eq!(direct, t.predictive_response(z).unwrap() - t.mean_response(z).unwrap());
            }
        }
    }

    #[test]
    fn covariate_law_marginalizes() {
        let t = DiscreteInstance::with_event_covariate();
        assert_eq!(t.covariate_probability(int(1)), r(2, 30));
        let nonzero: Vec<_> = DiscreteInstance::observed_two_price().observed_law().into_iter().filter(|e| e.2 != int(0)).collect();
        assert_eq!(t.observed_law(), nonzero);
    }

    #[test]
    fn rational_parsing() {
        assert_eq!(parse_rational("8/18").unwrap(), r(4, 9));
        assert_eq!(parse_rational("0.125").unwrap(), r(1, 8));
        assert_eq!(parse_rational("-2.5").unwrap(), r(-5, 2));
        assert_eq!(parse_rational("3").unwrap(), int(3));
        assert!(parse_rational("abc").is_err());
    }

    #[test]
    fn csv_loading() {
        let text = "z,y@20,y@28,p\n20,1,0,1/2\n28,1,1,1/2\n";
        let t = DiscreteInstance::read_csv(text.as_bytes(), false).unwrap();
        assert_eq!(t.mean_response(int(28)), Some(r(1, 2)));
        assert_eq!(t.predictive_response(int(28)), Some(int(1)));
        let bad = "z,y,p\n20,1,0.3\n28,0,0.3\n";
        assert!(DiscreteInstance::read_csv(bad.as_bytes(), false).is_err());
        let t = DiscreteInstance::read_csv(bad.as_bytes(), true).unwrap();
        assert_eq!(t.decision_probability(int(20)), r(1, 2));
    }

    #[test]
    fn sampling() {
        let t = DiscreteInstance::observed_two_price();
        let a = gen_discrete(&t, 200, 5).unwrap();
        assert_eq!(a.data, gen_discrete(&t, 200, 5).unwrap().data);
        let degenerate = DiscreteInstance::observed(&[(20, 1, int(1)), (28, 0, int(0))]).unwrap();
        let d = gen_discrete(&degenerate, 50, 1).unwrap().data;
        assert!(d.z().iter().all(|&z| z == 20.0) && d.y().iter().all(|&y| y == 1.0));
    }
}
