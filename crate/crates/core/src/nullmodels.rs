//! Null models over contingency tables and the engines computing null
//! moments of an index: closed forms, exact enumeration, and Monte Carlo.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::Zero;
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::combinatorics::Factorials;
use crate::error::{Error, Result};
use crate::indices::{Builtin, Index};
use crate::scalar::{Rational, Scalar};
use crate::tables::{enumerate_fixed_margins, ContingencyTable, TableSet, DEFAULT_BUDGET};

/// Default number of Monte Carlo draws.
pub const DEFAULT_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NullModel {
    /// Uniformly random permutation of the second labeling; fixes both margins.
    Perm,
    /// Independent draws of each labeling from its own observed proportions.
    Ind2,
    /// Independent draws of both labelings from the pooled proportions.
    Ind1,
    /// Each label uniform over its categories, independent of the data.
    FixedUniform,
}

impl NullModel {
    pub const ALL: [NullModel; 4] = [
        NullModel::Perm,
        NullModel::Ind2,
        NullModel::Ind1,
        NullModel::FixedUniform,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NullModel::Perm => "perm",
            NullModel::Ind2 => "ind2",
            NullModel::Ind1 => "ind1",
            NullModel::FixedUniform => "fixed_uniform",
        }
    }

    /// Which observed properties the model conditions on.
    pub fn conditioning(self) -> &'static str {
        match self {
            NullModel::Perm => "row and column margins (u, v) fixed exactly",
            NullModel::Ind2 => "margin proportions u/N and v/N; only N fixed",
            NullModel::Ind1 => "pooled proportions (u+v)/(2N); only N fixed",
            NullModel::FixedUniform => "nothing beyond N and the table shape",
        }
    }

    /// True when the model's distribution depends on the observed table.
    pub fn is_data_driven(self) -> bool {
        !matches!(self, NullModel::FixedUniform)
    }

    fn check_shape(self, t: &ContingencyTable) -> Result<()> {
        if self == NullModel::Ind1 && !t.is_square() {
            return Err(Error::shape(format!(
                "ind1 pools margins positionally and needs I = J, got {}x{}",
                t.nrows(),
                t.ncols()
            )));
        }
        Ok(())
    }

    /// Pooled category weights `u_i + v_i`.
    fn pooled(t: &ContingencyTable) -> Vec<u64> {
        t.row_sums().iter().zip(t.col_sums()).map(|(a, b)| a + b).collect()
    }

    /// Tables receiving positive probability given the observed table.
    pub fn support(self, t: &ContingencyTable) -> Result<TableSet> {
        self.check_shape(t)?;
        let n = t.total();
        match self {
            NullModel::Perm => enumerate_fixed_margins(t.row_sums(), t.col_sums()),
            NullModel::Ind2 => TableSet::restricted(
                n,
                t.row_sums().iter().map(|&c| c > 0).collect(),
                t.col_sums().iter().map(|&c| c > 0).collect(),
            ),
            NullModel::Ind1 => {
                let w = Self::pooled(t);
                let active: Vec<bool> = w.iter().map(|&c| c > 0).collect();
                TableSet::restricted(n, active.clone(), active)
            }
            NullModel::FixedUniform => {
                TableSet::restricted(n, vec![true; t.nrows()], vec![true; t.ncols()])
            }
        }
    }

    /// Exact probability of `candidate` under the model conditioned on `t`.
    pub fn probability(
        self,
        t: &ContingencyTable,
        candidate: &ContingencyTable,
        fact: &Factorials,
    ) -> Result<Rational> {
        self.check_shape(t)?;
        if candidate.nrows() != t.nrows()
            || candidate.ncols() != t.ncols()
            || candidate.total() != t.total()
        {
            return Ok(Rational::zero());
        }
        let n = t.total();
        let cells_factorial: BigInt = candidate.counts().iter().map(|&c| fact.get(c)).product();
        let multinomial = || fact.get(n) / &cells_factorial;
        let weighted = |row_w: &[u64], col_w: &[u64], denom: u64| {
            let mut num = multinomial();
            for i in 0..candidate.nrows() {
                for j in 0..candidate.ncols() {
                    let c = candidate.get(i, j) as usize;
                    if c > 0 {
                        num *= num_traits::pow(BigInt::from(row_w[i] * col_w[j]), c);
                    }
                }
            }
            Rational::new(num, num_traits::pow(BigInt::from(denom), 2 * n as usize))
        };
        Ok(match self {
            NullModel::Perm => {
                if candidate.row_sums() != t.row_sums() || candidate.col_sums() != t.col_sums() {
                    return Ok(Rational::zero());
                }
                let margins: BigInt = t
                    .row_sums()
                    .iter()
                    .chain(t.col_sums())
                    .map(|&c| fact.get(c))
                    .product();
                Rational::new(margins, fact.get(n) * &cells_factorial)
            }
            NullModel::Ind2 => weighted(t.row_sums(), t.col_sums(), n),
            NullModel::Ind1 => {
                let w = Self::pooled(t);
                weighted(&w, &w, 2 * n)
            }
            NullModel::FixedUniform => {
                let cells = (t.nrows() * t.ncols()) as u64;
                Rational::new(multinomial(), num_traits::pow(BigInt::from(cells), n as usize))
            }
        })
    }

    /// Support tables paired with their exact probabilities, in support order.
    pub fn weighted_support<S: Scalar>(
        self,
        t: &ContingencyTable,
        budget: usize,
    ) -> Result<Vec<(ContingencyTable, S)>> {
        let tables = self.support(t)?.collect_within(budget)?;
        let fact = Factorials::up_to(t.total());
        tables
            .into_iter()
            .map(|c| {
                let p = self.probability(t, &c, &fact)?;
                Ok((c, S::from_rational(&p)))
            })
            .collect()
    }

    /// Draws `count` tables from the model conditioned on `t`. Deterministic
    /// in `(model, t, seed, count)`.
    pub fn sample(self, t: &ContingencyTable, seed: u64, count: usize) -> Result<Vec<ContingencyTable>> {
        if count == 0 {
            return Err(Error::input("sample count must be at least 1"));
        }
        let mut sampler = Sampler::new(self, t)?;
        let mut rng = stream_rng(seed, 0);
        (0..count).map(|_| sampler.draw(&mut rng)).collect()
    }
}

impl fmt::Display for NullModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NullModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NullModel::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::input(format!(
                    "unknown model '{s}'; expected one of perm, ind2, ind1, fixed_uniform"
                ))
            })
    }
}

/// Independent random stream `stream` derived from a root seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

enum Draw {
    Permute { x: Vec<usize>, y: Vec<usize> },
    Independent {
        rows: WeightedIndex<u64>,
        cols: WeightedIndex<u64>,
    },
    Uniform,
}

struct Sampler {
    n: usize,
    rows: usize,
    cols: usize,
    draw: Draw,
}

impl Sampler {
    fn new(model: NullModel, t: &ContingencyTable) -> Result<Self> {
        model.check_shape(t)?;
        let weights = |w: &[u64]| {
            WeightedIndex::new(w.to_vec())
                .map_err(|e| Error::input(format!("invalid sampling weights {w:?}: {e}")))
        };
        let draw = match model {
            NullModel::Perm => {
                let (x, y) = t.observations();
                Draw::Permute { x, y }
            }
            NullModel::Ind2 => Draw::Independent {
                rows: weights(t.row_sums())?,
                cols: weights(t.col_sums())?,
            },
            NullModel::Ind1 => {
                let w = NullModel::pooled(t);
                Draw::Independent {
                    rows: weights(&w)?,
                    cols: weights(&w)?,
                }
            }
            NullModel::FixedUniform => Draw::Uniform,
        };
        Ok(Sampler {
            n: t.total() as usize,
            rows: t.nrows(),
            cols: t.ncols(),
            draw,
        })
    }

    fn draw<R: Rng>(&mut self, rng: &mut R) -> Result<ContingencyTable> {
        let mut counts = vec![0u64; self.rows * self.cols];
        match &mut self.draw {
            Draw::Permute { x, y } => {
                y.shuffle(rng);
                for (&i, &j) in x.iter().zip(y.iter()) {
                    counts[i * self.cols + j] += 1;
                }
            }
            Draw::Independent { rows, cols } => {
                for _ in 0..self.n {
                    let i = rows.sample(rng);
                    let j = cols.sample(rng);
                    counts[i * self.cols + j] += 1;
                }
            }
            Draw::Uniform => {
                for _ in 0..self.n {
                    let i = rng.gen_range(0..self.rows);
                    let j = rng.gen_range(0..self.cols);
                    counts[i * self.cols + j] += 1;
                }
            }
        }
        ContingencyTable::from_flat(self.rows, self.cols, counts)
    }
}

/// How a null moment is (to be) computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Closed form if registered, else enumeration within budget, else
    /// Monte Carlo when configured.
    Auto,
    ClosedForm,
    Enumeration,
    MonteCarlo,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Auto => "auto",
            Method::ClosedForm => "closed_form",
            Method::Enumeration => "enumeration",
            Method::MonteCarlo => "monte_carlo",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "auto" => Ok(Method::Auto),
            "closed_form" => Ok(Method::ClosedForm),
            "enumeration" => Ok(Method::Enumeration),
            "monte_carlo" => Ok(Method::MonteCarlo),
            _ => Err(Error::input(format!(
                "unknown method '{s}'; expected auto, closed_form, enumeration or monte_carlo"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
    pub streams: usize,
}

impl McConfig {
    pub fn new(seed: u64) -> Self {
        McConfig {
            samples: DEFAULT_SAMPLES,
            seed,
            streams: 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EstimateConfig {
    pub method: Method,
    pub mc: Option<McConfig>,
    pub budget: usize,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            method: Method::Auto,
            mc: None,
            budget: DEFAULT_BUDGET,
        }
    }
}

impl EstimateConfig {
    pub fn with_method(method: Method) -> Self {
        EstimateConfig {
            method,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult<S> {
    pub value: S,
    pub method: Method,
    /// Present exactly when `method` is Monte Carlo.
    pub mc_std_error: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
}

impl<S: Scalar> EstimateResult<S> {
    fn exact(value: S, method: Method) -> Self {
        EstimateResult {
            value,
            method,
            mc_std_error: None,
            samples: None,
            seed: None,
        }
    }

    /// Same provenance, different value.
    pub fn with_value(&self, value: S) -> Self {
        EstimateResult {
            value,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Moment {
    Mean,
    Variance,
}

/// Registered closed-form null moments, as `(model, index, moment)`.
pub const CLOSED_FORMS: [(NullModel, Builtin, &str); 6] = [
    (NullModel::Perm, Builtin::P, "mean"),
    (NullModel::Perm, Builtin::QJoint, "mean"),
    (NullModel::Ind1, Builtin::P, "mean"),
    (NullModel::Ind2, Builtin::ToyU1, "mean"),
    (NullModel::Ind2, Builtin::ToyU1, "variance"),
    (NullModel::Ind2, Builtin::ToyU1Squared, "mean"),
];

fn closed_form<S: Scalar>(
    model: NullModel,
    index: Builtin,
    moment: Moment,
    t: &ContingencyTable,
) -> Option<Result<S>> {
    let n = t.total() as i128;
    let u1 = t.row_sums()[0] as i128;
    let (u, v) = (t.row_sums(), t.col_sums());
    let square = || -> Result<()> {
        if t.is_square() {
            Ok(())
        } else {
            Err(Error::shape("p needs a square table (I = J)"))
        }
    };
    match (model, index, moment) {
        (NullModel::Perm, Builtin::P, Moment::Mean) => Some(square().map(|_| {
            let s: i128 = u.iter().zip(v).map(|(&a, &b)| (a * b) as i128).sum();
            S::from_ratio(s, n * n)
        })),
        (NullModel::Perm, Builtin::QJoint, Moment::Mean) => Some((|| {
            let qu: S = crate::indices::pair_agreement_q(u, t.total())?;
            let qv: S = crate::indices::pair_agreement_q(v, t.total())?;
            Ok(qu * qv)
        })()),
        (NullModel::Ind1, Builtin::P, Moment::Mean) => Some(square().map(|_| {
            let s: i128 = u.iter().zip(v).map(|(&a, &b)| ((a + b) * (a + b)) as i128).sum();
            S::from_ratio(s, 4 * n * n)
        })),
        (NullModel::Ind2, Builtin::ToyU1, Moment::Mean) => Some(Ok(S::from_int(u1))),
        (NullModel::Ind2, Builtin::ToyU1, Moment::Variance) => {
            Some(Ok(S::from_ratio(u1 * (n - u1), n)))
        }
        (NullModel::Ind2, Builtin::ToyU1Squared, Moment::Mean) => {
            Some(Ok(S::from_int(u1) + S::from_ratio((n - 1) * u1 * u1, n)))
        }
        _ => None,
    }
}

fn closed_form_for<S: Scalar>(
    model: NullModel,
    index: &dyn Index,
    moment: Moment,
    t: &ContingencyTable,
) -> Option<Result<S>> {
    let builtin = index.builtin()?;
    if let Err(e) = model.check_shape(t) {
        return Some(Err(e));
    }
    closed_form(model, builtin, moment, t)
}

/// Exact mean and population variance over the model's support.
pub fn enumerate_moments<S: Scalar>(
    model: NullModel,
    t: &ContingencyTable,
    index: &dyn Index,
    budget: usize,
) -> Result<(S, S)> {
    let support = model.weighted_support::<S>(t, budget)?;
    let values = support
        .iter()
        .map(|(c, p)| Ok((S::evaluate(index, c)?, p.clone())))
        .collect::<Result<Vec<_>>>()?;
    let mean = values
        .iter()
        .fold(S::zero(), |acc, (s, p)| acc + s.clone() * p.clone());
    let variance = values.iter().fold(S::zero(), |acc, (s, p)| {
        let d = s.clone() - mean.clone();
        acc + d.clone() * d * p.clone()
    });
    Ok((mean, variance))
}

/// Welford accumulator.
#[derive(Debug, Clone, Copy, Default)]
struct Running {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Running {
    fn over(values: &[f64]) -> Self {
        let mut r = Running::default();
        for &x in values {
            r.count += 1.0;
            let delta = x - r.mean;
            r.mean += delta / r.count;
            r.m2 += delta * (x - r.mean);
        }
        r
    }

    fn sample_variance(&self) -> f64 {
        if self.count > 1.0 {
            self.m2 / (self.count - 1.0)
        } else {
            0.0
        }
    }
}

/// Draws `mc.samples` tables split across `mc.streams` independent streams
/// and applies `visit` to each; streams run in parallel, results are returned
/// in stream order.
fn mc_streams<T: Send>(
    model: NullModel,
    t: &ContingencyTable,
    mc: &McConfig,
    visit: impl Fn(&mut Vec<T>, &ContingencyTable) -> Result<()> + Sync,
) -> Result<Vec<Vec<T>>> {
    if mc.samples == 0 || mc.streams == 0 {
        return Err(Error::input("Monte Carlo needs at least one sample and one stream"));
    }
    Sampler::new(model, t)?;
    let streams = mc.streams.min(mc.samples);
    (0..streams)
        .into_par_iter()
        .map(|s| {
            let share = mc.samples / streams + usize::from(s < mc.samples % streams);
            let mut sampler = Sampler::new(model, t)?;
            let mut rng = stream_rng(mc.seed, s as u64);
            let mut out = Vec::with_capacity(share);
            for _ in 0..share {
                let drawn = sampler.draw(&mut rng)?;
                visit(&mut out, &drawn)?;
            }
            Ok(out)
        })
        .collect()
}

fn mc_values(
    model: NullModel,
    t: &ContingencyTable,
    index: &dyn Index,
    mc: &McConfig,
) -> Result<Vec<f64>> {
    let per_stream = mc_streams(model, t, mc, |out, drawn| {
        out.push(index.eval_f64(drawn)?);
        Ok(())
    })?;
    Ok(per_stream.into_iter().flatten().collect())
}

fn mc_mean(values: &[f64]) -> (f64, f64) {
    let r = Running::over(values);
    (r.mean, (r.sample_variance() / r.count).sqrt())
}

/// Unbiased variance with the large-sample standard error
/// `sqrt((m4 - m2^2) / n)`.
fn mc_variance(values: &[f64]) -> (f64, f64) {
    let r = Running::over(values);
    let n = r.count;
    let pop_var = r.m2 / n;
    let m4 = values.iter().map(|x| (x - r.mean).powi(4)).sum::<f64>() / n;
    (r.sample_variance(), ((m4 - pop_var * pop_var).max(0.0) / n).sqrt())
}

fn estimate<S: Scalar>(
    model: NullModel,
    t: &ContingencyTable,
    index: &dyn Index,
    cfg: &EstimateConfig,
    moment: Moment,
) -> Result<EstimateResult<S>> {
    let monte_carlo = || -> Result<EstimateResult<S>> {
        if S::EXACT {
            return Err(Error::capability(
                "Monte Carlo estimates are not available in exact rational mode",
            ));
        }
        let mc = cfg.mc.ok_or_else(|| {
            Error::input("Monte Carlo needs an explicit seed (and optionally sample count)")
        })?;
        let values = mc_values(model, t, index, &mc)?;
        let (value, stderr) = match moment {
            Moment::Mean => mc_mean(&values),
            Moment::Variance => mc_variance(&values),
        };
        Ok(EstimateResult {
            value: S::from_f64(value)?,
            method: Method::MonteCarlo,
            mc_std_error: Some(stderr),
            samples: Some(values.len()),
            seed: Some(mc.seed),
        })
    };
    let enumerate = || -> Result<EstimateResult<S>> {
        let (mean, var) = enumerate_moments::<S>(model, t, index, cfg.budget)?;
        let value = match moment {
            Moment::Mean => mean,
            Moment::Variance => var,
        };
        Ok(EstimateResult::exact(value, Method::Enumeration))
    };
    match cfg.method {
        Method::ClosedForm => match closed_form_for::<S>(model, index, moment, t) {
            Some(v) => Ok(EstimateResult::exact(v?, Method::ClosedForm)),
            None => Err(Error::capability(format!(
                "no closed form registered for the {} of '{}' under {model}",
                if moment == Moment::Mean { "expectation" } else { "variance" },
                index.id()
            ))),
        },
        Method::Enumeration => enumerate(),
        Method::MonteCarlo => monte_carlo(),
        Method::Auto => {
            if let Some(v) = closed_form_for::<S>(model, index, moment, t) {
                return Ok(EstimateResult::exact(v?, Method::ClosedForm));
            }
            match enumerate() {
                Err(Error::Budget { .. }) if cfg.mc.is_some() && !S::EXACT => monte_carlo(),
                other => other,
            }
        }
    }
}

/// Null expectation of `index` under the model conditioned on `t`.
pub fn expectation<S: Scalar>(
    model: NullModel,
    t: &ContingencyTable,
    index: &dyn Index,
    cfg: &EstimateConfig,
) -> Result<EstimateResult<S>> {
    estimate(model, t, index, cfg, Moment::Mean)
}

/// Null (population) variance of `index` under the model conditioned on `t`.
pub fn variance<S: Scalar>(
    model: NullModel,
    t: &ContingencyTable,
    index: &dyn Index,
    cfg: &EstimateConfig,
) -> Result<EstimateResult<S>> {
    estimate(model, t, index, cfg, Moment::Variance)
}

/// Sample of index values under the model, for callers that need more than
/// the first two moments. Uses the same stream layout as [`expectation`].
pub fn sample_values(
    model: NullModel,
    t: &ContingencyTable,
    index: &dyn Index,
    mc: &McConfig,
) -> Result<Vec<f64>> {
    mc_values(model, t, index, mc)
}

/// Largest index value over Monte Carlo draws; a lower bound on the true
/// support maximum.
pub fn sampled_max(
    model: NullModel,
    t: &ContingencyTable,
    index: &dyn Index,
    mc: &McConfig,
) -> Result<f64> {
    let values = mc_values(model, t, index, mc)?;
    Ok(values.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Sums support probabilities; equals one for every valid model.
pub fn total_probability(model: NullModel, t: &ContingencyTable, budget: usize) -> Result<Rational> {
    let support = model.weighted_support::<Rational>(t, budget)?;
    Ok(support.into_iter().fold(Rational::zero(), |acc, (_, p)| acc + p))
}
