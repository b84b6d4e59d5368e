//! Checks of the properties an adjusted index is meant to have: constancy of
//! the null expectation and maximum over each null support, mean zero,
//! variance one after standardization, idempotency, collapse of nested
//! expectations, and equivalence across a linear family.
//!
//! Every check returns a [`PropertyReport`]. In exact mode equality is exact;
//! in double precision a fixed absolute tolerance is used. Checks that rely
//! on Monte Carlo can refute a property but never certify it.

use serde::Serialize;

use crate::adjust::{adjust, adjust_with_max, resolve_max, AdjustedIndex, Adjustment, ConditionalExpectation, MaxSpec};
use crate::error::{Error, Result};
use crate::indices::{Index, IndexRef, LinearMember};
use crate::nullmodels::{expectation, variance, EstimateResult, Method};
use crate::scalar::Scalar;
use crate::tables::ContingencyTable;

/// Absolute tolerance for double-precision enumeration checks.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Width of the Monte Carlo band, in standard errors.
pub const MC_BAND: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Violated,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct Quantity {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
}

impl Quantity {
    pub fn of<S: Scalar>(name: &str, v: &S) -> Self {
        Quantity {
            name: name.to_string(),
            value: v.to_f64(),
            exact: S::EXACT.then(|| v.render()),
            stderr: None,
        }
    }

    fn estimate<S: Scalar>(name: &str, e: &EstimateResult<S>) -> Self {
        Quantity {
            stderr: e.mc_std_error,
            ..Self::of(name, &e.value)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub table: ContingencyTable,
    pub values: Vec<Quantity>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyReport {
    pub property: String,
    pub verdict: Verdict,
    /// Tables and values demonstrating a violation (or the checked values).
    pub witnesses: Vec<Witness>,
    /// Zero in exact mode.
    pub tolerance: f64,
    pub exact: bool,
    /// `(quantity, method)` pairs.
    pub methods: Vec<(String, String)>,
    pub notes: Vec<String>,
}

impl PropertyReport {
    fn new<S: Scalar>(property: &str, tolerance: f64) -> Self {
        PropertyReport {
            property: property.to_string(),
            verdict: Verdict::Holds,
            witnesses: Vec::new(),
            tolerance: if S::EXACT { 0.0 } else { tolerance },
            exact: S::EXACT,
            methods: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn method<S>(&mut self, quantity: &str, e: &EstimateResult<S>) {
        self.methods.push((quantity.to_string(), e.method.as_str().to_string()));
    }

    fn used_monte_carlo(&self) -> bool {
        self.methods.iter().any(|(_, m)| m == Method::MonteCarlo.as_str())
    }

    /// Sampling cannot certify an identity.
    fn finish(mut self) -> Self {
        if self.verdict == Verdict::Holds && self.used_monte_carlo() {
            self.verdict = Verdict::Inconclusive;
            self.notes
                .push("Monte Carlo estimates can refute but not certify this property".into());
        }
        self
    }

    pub fn holds(&self) -> bool {
        self.verdict == Verdict::Holds
    }
}

/// Settings shared by all checks.
#[derive(Debug, Clone)]
pub struct CheckConfig {
    pub tolerance: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

/// `|a - b| <= tol`, exact equality in exact mode, widened by the Monte Carlo
/// band when standard errors are supplied.
fn agrees<S: Scalar>(a: &S, b: &S, tol: f64, stderr: f64) -> bool {
    if S::EXACT && stderr == 0.0 {
        return a == b;
    }
    (a.clone() - b.clone()).abs().to_f64() <= tol + MC_BAND * stderr
}

fn stderr_of<S>(e: &EstimateResult<S>) -> f64 {
    e.mc_std_error.unwrap_or(0.0)
}

/// Tables to range over: the enumerated support of the model at `t`, or
/// Monte Carlo draws when the support exceeds the budget and sampling is
/// configured.
fn support_tables(adj: &Adjustment, t: &ContingencyTable, report: &mut PropertyReport) -> Result<Vec<ContingencyTable>> {
    match adj.model.support(t)?.collect_within(adj.estimate.budget) {
        Ok(tables) => Ok(tables),
        Err(Error::Budget { budget, .. }) if adj.estimate.mc.is_some() => {
            let mc = adj.estimate.mc.unwrap_or_else(|| unreachable!());
            report.notes.push(format!(
                "support exceeds the enumeration budget of {budget}; checked {} sampled tables",
                mc.samples
            ));
            report
                .methods
                .push(("support".into(), Method::MonteCarlo.as_str().into()));
            let mut tables = adj.model.sample(t, mc.seed, mc.samples)?;
            tables.sort_by(|a, b| a.counts().cmp(b.counts()));
            tables.dedup();
            Ok(tables)
        }
        Err(e) => Err(e),
    }
}

/// Null expectation and maximum are constant on the support of `M^t`.
pub fn check_constancy<S: Scalar>(
    index: &dyn Index,
    adj: &Adjustment,
    t: &ContingencyTable,
    cfg: &CheckConfig,
) -> Result<PropertyReport> {
    let mut report = PropertyReport::new::<S>("constancy", cfg.tolerance);
    let e0 = expectation::<S>(adj.model, t, index, &adj.estimate)?;
    let mut notes = Vec::new();
    let m0 = resolve_max(index, adj, t, Some(&e0), &mut notes)?;
    report.method("expectation", &e0);
    report.notes.extend(notes);
    for other in support_tables(adj, t, &mut report)? {
        let e = expectation::<S>(adj.model, &other, index, &adj.estimate)?;
        let m = resolve_max(index, adj, &other, Some(&e), &mut Vec::new())?;
        let stderr = stderr_of(&e) + stderr_of(&e0);
        if !agrees(&e.value, &e0.value, cfg.tolerance, stderr) || !agrees(&m, &m0, cfg.tolerance, 0.0) {
            report.verdict = Verdict::Violated;
            report.witnesses.push(Witness {
                table: t.clone(),
                values: vec![Quantity::estimate("expectation", &e0), Quantity::of("max", &m0)],
            });
            report.witnesses.push(Witness {
                table: other,
                values: vec![Quantity::estimate("expectation", &e), Quantity::of("max", &m)],
            });
            break;
        }
    }
    Ok(report.finish())
}

/// Null mean of the adjusted index, each support table adjusted with its own
/// null distribution.
pub fn check_mean_zero<S: Scalar>(
    index: IndexRef,
    adj: &Adjustment,
    t: &ContingencyTable,
    cfg: &CheckConfig,
) -> Result<PropertyReport> {
    let mut report = PropertyReport::new::<S>("mean-zero", cfg.tolerance);
    let adjusted = AdjustedIndex::new(index, adj.clone());
    let mean = expectation::<S>(adj.model, t, &adjusted, &adj.estimate)?;
    report.method("null mean of adjusted index", &mean);
    if !agrees(&mean.value, &S::zero(), cfg.tolerance, stderr_of(&mean)) {
        report.verdict = Verdict::Violated;
    }
    report.witnesses.push(Witness {
        table: t.clone(),
        values: vec![Quantity::estimate("mean_adjusted", &mean)],
    });
    Ok(report.finish())
}

/// Standardized index has null mean 0 and variance 1.
pub fn check_variance_one<S: Scalar>(
    index: IndexRef,
    adj: &Adjustment,
    t: &ContingencyTable,
    cfg: &CheckConfig,
) -> Result<PropertyReport> {
    let mut report = PropertyReport::new::<S>("variance-one", cfg.tolerance);
    let adj = Adjustment {
        max: MaxSpec::Standardize,
        ..adj.clone()
    };
    let sigma2 = variance::<S>(adj.model, t, index.as_ref(), &adj.estimate)?;
    report.method("null variance of index", &sigma2);
    if sigma2.value.coincides(&S::zero()) {
        report.verdict = Verdict::Inconclusive;
        report.notes.push(format!(
            "null standard deviation of '{}' is zero at the observed table; standardization is degenerate",
            index.id()
        ));
        report.witnesses.push(Witness {
            table: t.clone(),
            values: vec![Quantity::estimate("null_variance", &sigma2)],
        });
        return Ok(report);
    }
    let standardized = AdjustedIndex::new(index, adj.clone());
    let mean = expectation::<S>(adj.model, t, &standardized, &adj.estimate)?;
    let var = variance::<S>(adj.model, t, &standardized, &adj.estimate)?;
    report.method("null mean of standardized index", &mean);
    report.method("null variance of standardized index", &var);
    let ok_mean = agrees(&mean.value, &S::zero(), cfg.tolerance, stderr_of(&mean));
    let ok_var = agrees(&var.value, &S::one(), cfg.tolerance, stderr_of(&var));
    if !(ok_mean && ok_var) {
        report.verdict = Verdict::Violated;
    }
    report.witnesses.push(Witness {
        table: t.clone(),
        values: vec![
            Quantity::estimate("mean_standardized", &mean),
            Quantity::estimate("variance_standardized", &var),
        ],
    });
    Ok(report.finish())
}

/// Maximum used for the second adjustment in an idempotency check.
#[derive(Debug, Clone, PartialEq)]
pub enum SecondMax {
    /// The affine image of the first maximum under the first adjustment,
    /// which is 1 (or the convention when the first stage is degenerate).
    Derived,
    Spec(MaxSpec),
}

impl std::str::FromStr for SecondMax {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "derived" | "linear" => Ok(SecondMax::Derived),
            other => Ok(SecondMax::Spec(other.parse()?)),
        }
    }
}

/// Outcome of adjusting twice at one table.
#[derive(Debug, Clone)]
pub struct DoubleAdjustment<S> {
    pub once: S,
    pub twice: S,
    pub mean_once: EstimateResult<S>,
    pub second_max: S,
    pub degenerate_twice: bool,
}

/// Computes `AS(t)` and `A^2 S(t)`.
pub fn adjust_twice<S: Scalar>(
    index: IndexRef,
    first: &Adjustment,
    second: &SecondMax,
    t: &ContingencyTable,
) -> Result<DoubleAdjustment<S>> {
    let once = adjust::<S>(index.as_ref(), first, t)?;
    let adjusted = AdjustedIndex::new(index, first.clone());
    let mean_once = expectation::<S>(first.model, t, &adjusted, &first.estimate)?;
    let (second_adj, second_max) = match second {
        SecondMax::Derived => {
            let max = if once.degenerate {
                S::from_rational(&first.convention)
            } else {
                S::one()
            };
            (first.clone(), max)
        }
        SecondMax::Spec(spec) => {
            let adj = Adjustment {
                max: spec.clone(),
                ..first.clone()
            };
            let max = resolve_max(&adjusted, &adj, t, Some(&mean_once), &mut Vec::new())?;
            (adj, max)
        }
    };
    let twice = adjust_with_max(&adjusted, &second_adj, t, mean_once.clone(), second_max.clone(), Vec::new())?;
    Ok(DoubleAdjustment {
        once: once.adjusted,
        twice: twice.adjusted,
        mean_once,
        second_max,
        degenerate_twice: twice.degenerate,
    })
}

/// `A^2 S(t) = A S(t)`.
pub fn check_idempotency<S: Scalar>(
    index: IndexRef,
    first: &Adjustment,
    second: &SecondMax,
    t: &ContingencyTable,
    cfg: &CheckConfig,
) -> Result<PropertyReport> {
    let mut report = PropertyReport::new::<S>("idempotent", cfg.tolerance);
    let d = adjust_twice::<S>(index, first, second, t)?;
    report.method("null mean of adjusted index", &d.mean_once);
    if let SecondMax::Derived = second {
        report.notes.push("second maximum derived affinely from the first".into());
    }
    if !agrees(&d.once, &d.twice, cfg.tolerance, 0.0) {
        report.verdict = Verdict::Violated;
    }
    report.witnesses.push(Witness {
        table: t.clone(),
        values: vec![
            Quantity::of("adjusted", &d.once),
            Quantity::of("adjusted_twice", &d.twice),
            Quantity::estimate("mean_adjusted", &d.mean_once),
            Quantity::of("second_max", &d.second_max),
        ],
    });
    Ok(report.finish())
}

/// Single null expectation against the nested expectation
/// `E_{M^t}[ E_{M^n}[S] ]`.
pub fn check_nested_collapse<S: Scalar>(
    index: IndexRef,
    adj: &Adjustment,
    t: &ContingencyTable,
    cfg: &CheckConfig,
) -> Result<PropertyReport> {
    let mut report = PropertyReport::new::<S>("nested-collapse", cfg.tolerance);
    let single = expectation::<S>(adj.model, t, index.as_ref(), &adj.estimate)?;
    let inner = ConditionalExpectation {
        base: index,
        model: adj.model,
        estimate: adj.estimate,
    };
    let nested = expectation::<S>(adj.model, t, &inner, &adj.estimate)?;
    report.method("expectation", &single);
    report.method("nested expectation", &nested);
    if nested.method == Method::MonteCarlo {
        report
            .notes
            .push("nested Monte Carlo: the outer standard error ignores inner sampling noise".into());
    }
    if !agrees(&single.value, &nested.value, cfg.tolerance, stderr_of(&single) + stderr_of(&nested)) {
        report.verdict = Verdict::Violated;
    }
    report.witnesses.push(Witness {
        table: t.clone(),
        values: vec![
            Quantity::estimate("expectation", &single),
            Quantity::estimate("nested_expectation", &nested),
        ],
    });
    Ok(report.finish())
}

/// Adjusting `T = alpha + beta S` (with `T_max = alpha + beta S_max`) gives the
/// same value as adjusting `S`; under standardization `AT = sgn(beta) AS`.
pub fn check_linear_equivalence<S: Scalar>(
    member: &LinearMember,
    adj: &Adjustment,
    t: &ContingencyTable,
    cfg: &CheckConfig,
) -> Result<PropertyReport> {
    let mut report = PropertyReport::new::<S>("linear-equiv", cfg.tolerance);
    let alpha: S = member.alpha_at(t)?;
    let beta: S = member.beta_at(t)?;

    for other in support_tables(adj, t, &mut report)? {
        let a: S = member.alpha_at(&other)?;
        let b: S = member.beta_at(&other)?;
        if !agrees(&a, &alpha, cfg.tolerance, 0.0) || !agrees(&b, &beta, cfg.tolerance, 0.0) {
            report.verdict = Verdict::Violated;
            report
                .notes
                .push("coefficients vary on the null support: not a member of the linear family".into());
            for (table, a, b) in [(t.clone(), alpha.clone(), beta.clone()), (other, a, b)] {
                report.witnesses.push(Witness {
                    table,
                    values: vec![Quantity::of("alpha", &a), Quantity::of("beta", &b)],
                });
            }
            return Ok(report.finish());
        }
    }

    let base = adjust::<S>(member.base.as_ref(), adj, t)?;
    report.method("expectation of base", &base.expected);
    let (target, member_value) = if adj.max == MaxSpec::Standardize {
        let at = adjust::<S>(member, adj, t)?;
        report.method("expectation of member", &at.expected);
        let sign = if beta.is_negative() { -S::one() } else { S::one() };
        (sign * base.adjusted.clone(), at.adjusted)
    } else {
        let expected = expectation::<S>(adj.model, t, member, &adj.estimate)?;
        report.method("expectation of member", &expected);
        let t_max = alpha + beta * base.max_value.clone();
        let at = adjust_with_max(member, adj, t, expected, t_max, Vec::new())?;
        (base.adjusted.clone(), at.adjusted)
    };
    if !agrees(&target, &member_value, cfg.tolerance, 0.0) {
        report.verdict = Verdict::Violated;
    }
    report.witnesses.push(Witness {
        table: t.clone(),
        values: vec![
            Quantity::of("adjusted_base", &base.adjusted),
            Quantity::of("adjusted_member", &member_value),
        ],
    });
    Ok(report.finish())
}
