//! The adjustment operator
//! `AS(n) = (S(n) - E[S]) / (S_max - E[S])`
//! with pluggable maxima, the zero-denominator convention, and the named
//! measures built from it (kappa, Scott's pi, ARI and friends).

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::indices::{Builtin, Index, IndexRef};
use crate::nullmodels::{
    expectation, sampled_max, variance, EstimateConfig, EstimateResult, McConfig, NullModel,
};
use crate::scalar::{Rational, Scalar};
use crate::tables::{enumerate_domain, ContingencyTable};

/// Rule producing the normalizing value `S_max` for a table.
#[derive(Debug, Clone, PartialEq)]
pub enum MaxSpec {
    /// Maximum of the index over every table with the same `N` and shape.
    DomainMax,
    /// Maximum over the support of the null distribution given the table.
    ModelMax,
    /// `(q(u) + q(v)) / 2`.
    PairMean,
    /// `min(q(u), q(v))`.
    PairMin,
    /// Null mean plus null standard deviation.
    Standardize,
    Fixed(Rational),
}

impl MaxSpec {
    pub fn id(&self) -> String {
        match self {
            MaxSpec::DomainMax => "domain_max".into(),
            MaxSpec::ModelMax => "model_max".into(),
            MaxSpec::PairMean => "pair_mean".into(),
            MaxSpec::PairMin => "pair_min".into(),
            MaxSpec::Standardize => "standardize".into(),
            MaxSpec::Fixed(v) => format!("fixed({})", v.render()),
        }
    }
}

impl fmt::Display for MaxSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for MaxSpec {
    type Err = Error;

    /// Accepts `domain`, `model`, `pair-mean`, `pair-min`, `standardize`,
    /// `fixed:V` or `fixed(V)` (underscores and `_max` suffixes tolerated).
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().replace('-', "_");
        if let Some(rest) = norm.strip_prefix("fixed") {
            let value = rest
                .strip_prefix(':')
                .or_else(|| rest.strip_prefix('(').and_then(|r| r.strip_suffix(')')))
                .ok_or_else(|| Error::input(format!("fixed maximum needs a value, e.g. fixed:4 (got '{s}')")))?;
            return Ok(MaxSpec::Fixed(crate::scalar::parse_rational(value)?));
        }
        match norm.strip_suffix("_max").unwrap_or(&norm) {
            "domain" => Ok(MaxSpec::DomainMax),
            "model" => Ok(MaxSpec::ModelMax),
            "pair_mean" => Ok(MaxSpec::PairMean),
            "pair_min" => Ok(MaxSpec::PairMin),
            "standardize" => Ok(MaxSpec::Standardize),
            _ => Err(Error::input(format!(
                "unknown maximum '{s}'; expected domain, model, pair-mean, pair-min, standardize or fixed:V"
            ))),
        }
    }
}

/// Model, maximum rule, convention and estimation settings for one
/// adjustment.
#[derive(Debug, Clone)]
pub struct Adjustment {
    pub model: NullModel,
    pub max: MaxSpec,
    /// Value assigned when the maximum equals the expectation.
    pub convention: Rational,
    pub estimate: EstimateConfig,
    /// Allow domain/model maxima to fall back to a sampled lower bound when
    /// enumeration exceeds the budget.
    pub max_fallback: bool,
}

impl Adjustment {
    pub fn new(model: NullModel, max: MaxSpec) -> Self {
        Adjustment {
            model,
            max,
            convention: Rational::zero(),
            estimate: EstimateConfig::default(),
            max_fallback: false,
        }
    }

    pub fn convention(mut self, c: Rational) -> Self {
        self.convention = c;
        self
    }

    pub fn estimate(mut self, cfg: EstimateConfig) -> Self {
        self.estimate = cfg;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjustmentResult<S> {
    pub index: String,
    pub model: NullModel,
    pub max_spec: String,
    pub raw: S,
    pub expected: EstimateResult<S>,
    pub max_value: S,
    pub adjusted: S,
    pub degenerate: bool,
    pub convention_c: S,
    /// Warnings about approximations, e.g. a sampled maximum.
    pub notes: Vec<String>,
}

fn fallback_mc(adj: &Adjustment, what: &str) -> Result<McConfig> {
    adj.estimate.mc.ok_or_else(|| {
        Error::input(format!("{what} fallback to sampling needs a Monte Carlo seed"))
    })
}

/// Largest index value over a table list.
fn max_over<S: Scalar>(index: &dyn Index, tables: impl IntoIterator<Item = ContingencyTable>) -> Result<S> {
    let mut best: Option<S> = None;
    for t in tables {
        let v = S::evaluate(index, &t)?;
        best = Some(match best {
            Some(b) => S::max_of(b, v),
            None => v,
        });
    }
    best.ok_or_else(|| Error::domain("maximum over an empty table set"))
}

/// Resolves `S_max` for `t`. `expected` is reused by the standardize rule.
pub fn resolve_max<S: Scalar>(
    index: &dyn Index,
    adj: &Adjustment,
    t: &ContingencyTable,
    expected: Option<&EstimateResult<S>>,
    notes: &mut Vec<String>,
) -> Result<S> {
    let n = t.total();
    match &adj.max {
        MaxSpec::Fixed(v) => Ok(S::from_rational(v)),
        MaxSpec::PairMean => {
            let qu: S = Builtin::QRow.value(t)?;
            let qv: S = Builtin::QCol.value(t)?;
            Ok((qu + qv) / S::from_int(2))
        }
        MaxSpec::PairMin => {
            let qu: S = Builtin::QRow.value(t)?;
            let qv: S = Builtin::QCol.value(t)?;
            Ok(if qu < qv { qu } else { qv })
        }
        MaxSpec::Standardize => {
            let mean = match expected {
                Some(e) => e.value.clone(),
                None => expectation::<S>(adj.model, t, index, &adj.estimate)?.value,
            };
            let var = variance::<S>(adj.model, t, index, &adj.estimate)?;
            let var = if var.value.is_negative() { S::zero() } else { var.value };
            Ok(mean + var.sqrt()?)
        }
        MaxSpec::DomainMax => {
            let domain = enumerate_domain(n, t.nrows(), t.ncols())?;
            match domain.collect_within(adj.estimate.budget) {
                Ok(tables) => max_over(index, tables),
                Err(Error::Budget { .. }) if adj.max_fallback && !S::EXACT => {
                    let mc = fallback_mc(adj, "domain maximum")?;
                    notes.push(format!(
                        "domain maximum is a Monte Carlo lower bound from {} uniform draws",
                        mc.samples
                    ));
                    S::from_f64(sampled_max(NullModel::FixedUniform, t, index, &mc)?)
                }
                Err(e) => Err(e),
            }
        }
        MaxSpec::ModelMax => match adj.model.support(t)?.collect_within(adj.estimate.budget) {
            Ok(tables) => max_over(index, tables),
            Err(Error::Budget { .. }) if adj.max_fallback && !S::EXACT => {
                let mc = fallback_mc(adj, "model maximum")?;
                notes.push(format!(
                    "model maximum is a Monte Carlo lower bound from {} null draws",
                    mc.samples
                ));
                S::from_f64(sampled_max(adj.model, t, index, &mc)?)
            }
            Err(e) => Err(e),
        },
    }
}

/// Applies the adjustment once `S_max` is known.
pub fn adjust_with_max<S: Scalar>(
    index: &dyn Index,
    adj: &Adjustment,
    t: &ContingencyTable,
    expected: EstimateResult<S>,
    max_value: S,
    notes: Vec<String>,
) -> Result<AdjustmentResult<S>> {
    let raw = S::evaluate(index, t)?;
    let c = S::from_rational(&adj.convention);
    let degenerate = max_value.coincides(&expected.value);
    let adjusted = if degenerate {
        c.clone()
    } else {
        (raw.clone() - expected.value.clone()) / (max_value.clone() - expected.value.clone())
    };
    Ok(AdjustmentResult {
        index: index.id(),
        model: adj.model,
        max_spec: adj.max.id(),
        raw,
        expected,
        max_value,
        adjusted,
        degenerate,
        convention_c: c,
        notes,
    })
}

pub fn adjust<S: Scalar>(
    index: &dyn Index,
    adj: &Adjustment,
    t: &ContingencyTable,
) -> Result<AdjustmentResult<S>> {
    let expected = expectation::<S>(adj.model, t, index, &adj.estimate)?;
    let mut notes = Vec::new();
    let max_value = resolve_max(index, adj, t, Some(&expected), &mut notes)?;
    adjust_with_max(index, adj, t, expected, max_value, notes)
}

/// The adjusted version of an index, usable anywhere an index is expected
/// (for instance to adjust it a second time).
#[derive(Debug, Clone)]
pub struct AdjustedIndex {
    pub base: IndexRef,
    pub adjustment: Adjustment,
}

impl AdjustedIndex {
    pub fn new(base: IndexRef, adjustment: Adjustment) -> Self {
        AdjustedIndex { base, adjustment }
    }
}

impl Index for AdjustedIndex {
    fn id(&self) -> String {
        format!(
            "A[{}; {}, {}]",
            self.base.id(),
            self.adjustment.model,
            self.adjustment.max
        )
    }

    fn eval_f64(&self, t: &ContingencyTable) -> Result<f64> {
        Ok(adjust::<f64>(self.base.as_ref(), &self.adjustment, t)?.adjusted)
    }

    fn eval_exact(&self, t: &ContingencyTable) -> Result<Rational> {
        Ok(adjust::<Rational>(self.base.as_ref(), &self.adjustment, t)?.adjusted)
    }
}

/// Null expectation of an index as a function of the conditioning table,
/// `n -> E_{M^n}[S]`.
#[derive(Debug, Clone)]
pub struct ConditionalExpectation {
    pub base: IndexRef,
    pub model: NullModel,
    pub estimate: EstimateConfig,
}

impl Index for ConditionalExpectation {
    fn id(&self) -> String {
        format!("E_{}[{}]", self.model, self.base.id())
    }

    fn eval_f64(&self, t: &ContingencyTable) -> Result<f64> {
        Ok(expectation::<f64>(self.model, t, self.base.as_ref(), &self.estimate)?.value)
    }

    fn eval_exact(&self, t: &ContingencyTable) -> Result<Rational> {
        Ok(expectation::<Rational>(self.model, t, self.base.as_ref(), &self.estimate)?.value)
    }
}

/// Adjusted measures from the literature, each a fixed
/// (index, model, maximum) binding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NamedMeasure {
    CohenKappa,
    KappaOverKappaM,
    ScottPi,
    Ari,
    Hari,
    Standardized(Builtin),
}

impl NamedMeasure {
    pub const ALL: [NamedMeasure; 7] = [
        NamedMeasure::CohenKappa,
        NamedMeasure::KappaOverKappaM,
        NamedMeasure::ScottPi,
        NamedMeasure::Ari,
        NamedMeasure::Hari,
        NamedMeasure::Standardized(Builtin::QJoint),
        NamedMeasure::Standardized(Builtin::P),
    ];

    pub fn id(self) -> String {
        match self {
            NamedMeasure::CohenKappa => "cohen_kappa".into(),
            NamedMeasure::KappaOverKappaM => "kappa_over_kappa_m".into(),
            NamedMeasure::ScottPi => "scott_pi".into(),
            NamedMeasure::Ari => "ari".into(),
            NamedMeasure::Hari => "hari".into(),
            NamedMeasure::Standardized(Builtin::QJoint) => "standardized_q".into(),
            NamedMeasure::Standardized(b) => format!("standardized_{b}"),
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            NamedMeasure::CohenKappa => "Cohen's kappa: p under perm, domain maximum",
            NamedMeasure::KappaOverKappaM => {
                "Cohen's kappa/kappa_m: p under perm, model maximum (best agreement given margins)"
            }
            NamedMeasure::ScottPi => "Scott's pi: p under ind1 (pooled proportions), domain maximum",
            NamedMeasure::Ari => {
                "Hubert & Arabie adjusted Rand index: q_joint under perm, pair-mean maximum"
            }
            NamedMeasure::Hari => {
                "hierarchical adjusted Rand index: q_joint under perm, pair-min maximum"
            }
            NamedMeasure::Standardized(_) => "statistical standardization under perm",
        }
    }

    pub fn binding(self) -> (Builtin, NullModel, MaxSpec) {
        match self {
            NamedMeasure::CohenKappa => (Builtin::P, NullModel::Perm, MaxSpec::DomainMax),
            NamedMeasure::KappaOverKappaM => (Builtin::P, NullModel::Perm, MaxSpec::ModelMax),
            NamedMeasure::ScottPi => (Builtin::P, NullModel::Ind1, MaxSpec::DomainMax),
            NamedMeasure::Ari => (Builtin::QJoint, NullModel::Perm, MaxSpec::PairMean),
            NamedMeasure::Hari => (Builtin::QJoint, NullModel::Perm, MaxSpec::PairMin),
            NamedMeasure::Standardized(b) => (b, NullModel::Perm, MaxSpec::Standardize),
        }
    }
}

impl FromStr for NamedMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        NamedMeasure::ALL
            .into_iter()
            .find(|m| m.id() == norm)
            .or(match norm.as_str() {
                "standardized_q_joint" => Some(NamedMeasure::Standardized(Builtin::QJoint)),
                _ => None,
            })
            .ok_or_else(|| {
                let known: Vec<_> = NamedMeasure::ALL.iter().map(|m| m.id()).collect();
                Error::input(format!("unknown measure '{s}'; expected one of {}", known.join(", ")))
            })
    }
}

/// Evaluates a named measure with default estimation settings.
pub fn named_measure<S: Scalar>(
    name: NamedMeasure,
    t: &ContingencyTable,
    convention: Rational,
    estimate: EstimateConfig,
) -> Result<AdjustmentResult<S>> {
    let (index, model, max) = name.binding();
    let adj = Adjustment::new(model, max)
        .convention(convention)
        .estimate(estimate);
    let mut result = adjust::<S>(&index, &adj, t)?;
    result.index = name.id();
    Ok(result)
}

/// Convenience handle for a built-in index.
pub fn builtin(b: Builtin) -> IndexRef {
    Arc::new(b)
}
