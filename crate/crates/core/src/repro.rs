//! Closed-form counterexamples for the toy indices `u_1^2` and `u_1` under
//! the two-population independence model, where the first row margin is
//! Binomial(N, u_1/N) and the null expectation moves with the data.
//!
//! With `S = u_1^2`, `S_max = N^2` and `AS = c` whenever `u_1 = N`:
//!
//! * `E[S] = u_1 + (N-1)/N u_1^2`, nested `(2N-1)/N u_1 + ((N-1)/N)^2 u_1^2`
//! * `AS = f(u_1, N) = -u_1 / (N^2 + (N-1) u_1)` for `u_1 < N`
//! * `E[AS] = c (u_1/N)^N + g(u_1, N)`, `g = sum_{k<N} f(k,N) Binom(k; N, u_1/N)`
//! * `A^2 S = (AS - E[AS]) / (max(0,c) - E[AS])`
//!
//! The generic [`Scalar`] evaluators use exact binomial coefficients; the
//! grid uses log-gamma accumulation so that it scales to `N = 100` and beyond.

use num_bigint::BigInt;
use rayon::prelude::*;
use serde::Serialize;

use crate::combinatorics::{binomial_pmf, choose};
use crate::error::{Error, Result};
use crate::properties::Quantity;
use crate::scalar::{Rational, Scalar};

/// `|AS - A^2 S|` below this is reported with the sentinel exponent.
pub const UNDERFLOW_THRESHOLD: f64 = 1e-300;
pub const UNDERFLOW_SENTINEL: f64 = 300.0;

fn check_range(u1: u64, n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::input("N must be at least 1"));
    }
    if u1 > n {
        return Err(Error::input(format!("u1 = {u1} must lie in 0..=N = {n}")));
    }
    Ok(())
}

/// `f(k, N) = -k / (N^2 + (N-1) k)`.
pub fn f_value<S: Scalar>(k: u64, n: u64) -> S {
    let (k, n) = (k as i128, n as i128);
    S::from_ratio(-k, n * n + (n - 1) * k)
}

/// `P(u~_1 = k)` for `u~_1 ~ Binomial(N, u_1/N)`, exactly.
pub fn binomial_prob<S: Scalar>(u1: u64, k: u64, n: u64) -> S {
    let num = choose(n, k)
        * num_traits::pow(BigInt::from(u1), k as usize)
        * num_traits::pow(BigInt::from(n - u1), (n - k) as usize);
    let den = num_traits::pow(BigInt::from(n), n as usize);
    S::from_rational(&Rational::new(num, den))
}

pub fn expectation_u1_squared<S: Scalar>(u1: u64, n: u64) -> S {
    let (u, n) = (u1 as i128, n as i128);
    S::from_int(u) + S::from_ratio((n - 1) * u * u, n)
}

pub fn nested_expectation_u1_squared<S: Scalar>(u1: u64, n: u64) -> S {
    let (u, n) = (u1 as i128, n as i128);
    S::from_ratio((2 * n - 1) * u, n) + S::from_ratio((n - 1) * (n - 1) * u * u, n * n)
}

/// Adjusted `u_1^2` at a table with first margin `u1`.
pub fn adjusted<S: Scalar>(u1: u64, n: u64, c: &S) -> S {
    if u1 == n {
        c.clone()
    } else {
        f_value(u1, n)
    }
}

/// `E[AS]` by exact summation over the binomial support.
pub fn mean_adjusted<S: Scalar>(u1: u64, n: u64, c: &S) -> S {
    (0..=n).fold(S::zero(), |acc, k| {
        acc + adjusted(k, n, c) * binomial_prob::<S>(u1, k, n)
    })
}

/// Second adjustment against the domain maximum `max(0, c)` of `AS`.
pub fn adjusted_twice<S: Scalar>(once: &S, mean: &S, c: &S) -> S {
    let max = S::max_of(S::zero(), c.clone());
    if max.coincides(mean) {
        c.clone()
    } else {
        (once.clone() - mean.clone()) / (max - mean.clone())
    }
}

/// `g(u_1, N)` accumulated in log space.
pub fn g_float(u1: u64, n: u64) -> f64 {
    let p = u1 as f64 / n as f64;
    (0..n)
        .map(|k| f_value::<f64>(k, n) * binomial_pmf(n, k, p))
        .sum()
}

/// `E[AS] = c (u_1/N)^N + g(u_1, N)` in double precision.
pub fn mean_adjusted_float(u1: u64, n: u64, c: f64) -> f64 {
    let p = u1 as f64 / n as f64;
    c * binomial_pmf(n, n, p) + g_float(u1, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Part {
    /// Nested expectations do not collapse.
    NestedCollapse = 1,
    /// The adjusted index is not affine in the original index.
    NotInFamily = 2,
    /// The adjusted index does not have null mean zero.
    MeanZero = 3,
    /// Adjusting twice changes the value.
    Idempotency = 4,
    /// Standardization is identically zero.
    Standardization = 5,
}

impl Part {
    pub fn from_number(k: u8) -> Result<Self> {
        Ok(match k {
            1 => Part::NestedCollapse,
            2 => Part::NotInFamily,
            3 => Part::MeanZero,
            4 => Part::Idempotency,
            5 => Part::Standardization,
            _ => return Err(Error::input(format!("part must be 1..=5, got {k}"))),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleRecord {
    pub part: u8,
    pub u1: u64,
    pub n: u64,
    pub c: Quantity,
    pub quantities: Vec<Quantity>,
    /// True when the property fails at this `(u1, N, c)`.
    pub violated: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Least-squares fit `y ~ a + b x` and the largest absolute residual.
fn affine_fit_residual(points: &[(f64, f64)]) -> f64 {
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    points
        .iter()
        .map(|&(x, y)| (y - (my + slope * (x - mx))).abs())
        .fold(0.0, f64::max)
}

/// Residual tolerance for the affine-fit check.
pub const AFFINE_FIT_TOLERANCE: f64 = 1e-12;

pub fn prop1_record<S: Scalar>(part: Part, u1: u64, n: u64, c: &S) -> Result<CounterexampleRecord> {
    check_range(u1, n)?;
    let mut record = CounterexampleRecord {
        part: part as u8,
        u1,
        n,
        c: Quantity::of("c", c),
        quantities: Vec::new(),
        violated: false,
        notes: Vec::new(),
    };
    match part {
        Part::NestedCollapse => {
            let e: S = expectation_u1_squared(u1, n);
            let nested: S = nested_expectation_u1_squared(u1, n);
            record.violated = e != nested;
            record.quantities = vec![
                Quantity::of("expectation", &e),
                Quantity::of("nested_expectation", &nested),
            ];
        }
        Part::NotInFamily => {
            let points: Vec<(f64, f64)> = (1..n)
                .map(|k| ((k * k) as f64, f_value::<f64>(k, n)))
                .collect();
            let residual = if points.len() >= 3 {
                affine_fit_residual(&points)
            } else {
                record
                    .notes
                    .push("fewer than three interior points; any two points fit an affine map".into());
                0.0
            };
            record.violated = residual > AFFINE_FIT_TOLERANCE;
            record.quantities = vec![
                Quantity::of("adjusted", &adjusted(u1, n, c)),
                Quantity::of::<f64>("affine_fit_residual", &residual),
            ];
            record.notes.push(format!(
                "least-squares fit of AS against u1^2 over 0 < u1 < N, tolerance {AFFINE_FIT_TOLERANCE:e}"
            ));
        }
        Part::MeanZero => {
            let mean = mean_adjusted(u1, n, c);
            record.violated = !mean.is_zero();
            record.quantities = vec![
                Quantity::of("adjusted", &adjusted(u1, n, c)),
                Quantity::of("mean_adjusted", &mean),
            ];
        }
        Part::Idempotency => {
            let once = adjusted(u1, n, c);
            let mean = mean_adjusted(u1, n, c);
            let twice = adjusted_twice(&once, &mean, c);
            record.violated = once != twice;
            record.quantities = vec![
                Quantity::of("adjusted", &once),
                Quantity::of("mean_adjusted", &mean),
                Quantity::of("adjusted_twice", &twice),
            ];
        }
        Part::Standardization => {
            // Standardized u1 is 0 whenever 0 < u1 < N and c at the endpoints.
            let at = |k: u64| if k == 0 || k == n { c.clone() } else { S::zero() };
            let endpoints = binomial_prob::<S>(u1, 0, n) + binomial_prob::<S>(u1, n, n);
            let mean = c.clone() * endpoints.clone();
            let var = c.clone() * c.clone() * endpoints.clone() * (S::one() - endpoints);
            record.violated = !(mean.is_zero() && var.is_one());
            record.quantities = vec![
                Quantity::of("standardized", &at(u1)),
                Quantity::of("mean_standardized", &mean),
                Quantity::of("variance_standardized", &var),
            ];
        }
    }
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridCell {
    pub c: f64,
    pub n: u64,
    pub u1: u64,
    pub as_value: f64,
    pub a2s_value: f64,
    pub neg_log10_diff: f64,
    /// Set when `|AS - A^2 S|` fell below the underflow threshold and
    /// `neg_log10_diff` holds the sentinel.
    pub underflow: bool,
}

impl GridCell {
    pub fn abs_diff(&self) -> f64 {
        (self.as_value - self.a2s_value).abs()
    }
}

pub fn grid_cell(c: f64, n: u64, u1: u64) -> GridCell {
    let once = adjusted(u1, n, &c);
    let mean = mean_adjusted_float(u1, n, c);
    let twice = adjusted_twice(&once, &mean, &c);
    let diff = (once - twice).abs();
    let underflow = diff < UNDERFLOW_THRESHOLD;
    GridCell {
        c,
        n,
        u1,
        as_value: once,
        a2s_value: twice,
        neg_log10_diff: if underflow { UNDERFLOW_SENTINEL } else { -diff.log10() },
        underflow,
    }
}

/// One cell per `(c, N, u1)` with `2 <= N <= n_max`, `1 <= u1 < N`, ordered
/// by `c` (as given), then `N`, then `u1`.
pub fn figure1_grid(n_max: u64, c_values: &[f64]) -> Result<Vec<GridCell>> {
    if n_max < 2 {
        return Err(Error::input(format!("n_max must be at least 2, got {n_max}")));
    }
    if c_values.is_empty() {
        return Err(Error::input("at least one convention value c is required"));
    }
    if let Some(c) = c_values.iter().find(|c| !c.is_finite()) {
        return Err(Error::input(format!("convention c must be finite, got {c}")));
    }
    let keys: Vec<(f64, u64)> = c_values
        .iter()
        .flat_map(|&c| (2..=n_max).map(move |n| (c, n)))
        .collect();
    Ok(keys
        .par_iter()
        .map(|&(c, n)| (1..n).map(|u1| grid_cell(c, n, u1)).collect::<Vec<_>>())
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect())
}

pub fn write_grid_csv<W: std::io::Write>(cells: &[GridCell], out: W) -> Result<()> {
    let io = |e: csv::Error| Error::Io {
        path: "grid csv".into(),
        source: std::io::Error::other(e),
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["c", "N", "u1", "AS", "A2S", "neg_log10_diff", "underflow"])
        .map_err(io)?;
    for cell in cells {
        w.write_record([
            crate::report::fmt_float(cell.c),
            cell.n.to_string(),
            cell.u1.to_string(),
            crate::report::fmt_float(cell.as_value),
            crate::report::fmt_float(cell.a2s_value),
            crate::report::fmt_float(cell.neg_log10_diff),
            cell.underflow.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "grid csv".into(),
        source: e,
    })
}

/// Matplotlib script drawing one heatmap per `c` from the grid CSV.
pub fn plot_script(csv_path: &str) -> String {
    format!(
        r#"# Heatmaps of -log10|AS - A2S| over (u1, N), one panel per convention c.
import csv
from collections import defaultdict

import matplotlib.pyplot as plt
import numpy as np

panels = defaultdict(list)
with open({csv_path:?}) as fh:
    for row in csv.DictReader(fh):
        panels[float(row["c"])].append((int(row["N"]), int(row["u1"]), float(row["neg_log10_diff"])))

fig, axes = plt.subplots(1, len(panels), figsize=(5 * len(panels), 4), squeeze=False)
for ax, (c, cells) in zip(axes[0], panels.items()):
    n_max = max(n for n, _, _ in cells)
    img = np.full((n_max + 1, n_max + 1), np.nan)
    for n, u1, v in cells:
        img[n, u1] = v
    im = ax.imshow(img, origin="lower", aspect="auto")
    ax.set_xlabel("u1")
    ax.set_ylabel("N")
    ax.set_title(f"c = {{c:g}}")
    fig.colorbar(im, ax=ax)
fig.tight_layout()
fig.savefig("figure1.png", dpi=150)
"#
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticResult {
    pub j: u64,
    pub c: f64,
    pub n: u64,
    /// `(1/N) A^2 S / AS` at `u1 = N - j`.
    pub ratio: f64,
    /// `2 / (e^j 1(c > 0) - 1)`.
    pub limit: f64,
}

pub fn asymptotic_limit(j: u64, c: f64) -> f64 {
    let indicator = if c > 0.0 { 1.0 } else { 0.0 };
    2.0 / ((j as f64).exp() * indicator - 1.0)
}

pub fn asymptotic_check(j: u64, c: f64, n: u64) -> Result<AsymptoticResult> {
    if c == 0.0 {
        return Err(Error::Unsupported(
            "c = 0 has no finite limit here; the A^2 S != AS gap at c = 0 is covered by part 4".into(),
        ));
    }
    if !c.is_finite() {
        return Err(Error::input(format!("c must be finite, got {c}")));
    }
    if j == 0 || n <= j {
        return Err(Error::input(format!("need N > j >= 1, got j = {j}, N = {n}")));
    }
    let u1 = n - j;
    let once = f_value::<f64>(u1, n);
    let mean = mean_adjusted_float(u1, n, c);
    let twice = adjusted_twice(&once, &mean, &c);
    Ok(AsymptoticResult {
        j,
        c,
        n,
        ratio: twice / once / n as f64,
        limit: asymptotic_limit(j, c),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i128, d: i128) -> Rational {
        Rational::from_ratio(n, d)
    }

    /// `E[E[u~~^2 | u~]]` by a double sum over exact binomial masses.
    fn nested_by_double_sum(u1: u64, n: u64) -> Rational {
        let mut total = r(0, 1);
        for k in 0..=n {
            let inner: Rational = (0..=n)
                .map(|m| binomial_prob::<Rational>(k, m, n) * Rational::from_int((m * m) as i128))
                .sum();
            total += binomial_prob::<Rational>(u1, k, n) * inner;
        }
        total
    }

    #[test]
    fn part1_values() {
        let rec = prop1_record(Part::NestedCollapse, 1, 2, &r(0, 1)).unwrap();
        assert_eq!(rec.quantities[0].exact.as_deref(), Some("3/2"));
        assert_eq!(rec.quantities[1].exact.as_deref(), Some("7/4"));
        assert!(rec.violated);
        for n in 1..=8 {
            for u1 in 0..=n {
                let single: Rational = (0..=n)
                    .map(|m| binomial_prob::<Rational>(u1, m, n) * Rational::from_int((m * m) as i128))
                    .sum();
                assert_eq!(expectation_u1_squared::<Rational>(u1, n), single);
                assert_eq!(nested_expectation_u1_squared::<Rational>(u1, n), nested_by_double_sum(u1, n));
            }
        }
    }

    #[test]
    fn part4_golden_values() {
        let rec = prop1_record(Part::Idempotency, 1, 2, &r(0, 1)).unwrap();
        let get = |name: &str| rec.quantities.iter().find(|q| q.name == name).unwrap().exact.clone().unwrap();
        assert_eq!(get("adjusted"), "-1/5");
        assert_eq!(get("mean_adjusted"), "-1/10");
        assert_eq!(get("adjusted_twice"), "-1");
        assert!(rec.violated);
    }

    #[test]
    fn part3_mean_is_negative_for_interior_margins() {
        for n in 2..=10 {
            for u1 in 1..n {
                let rec = prop1_record(Part::MeanZero, u1, n, &r(0, 1)).unwrap();
                assert!(rec.violated);
                assert!(rec.quantities[1].value < 0.0);
            }
        }
    }

    #[test]
    fn part5_standardized_is_zero() {
        for n in 2..=12 {
            for u1 in 1..n {
                let rec = prop1_record(Part::Standardization, u1, n, &r(0, 1)).unwrap();
                assert_eq!(rec.quantities[0].value, 0.0);
                assert_eq!(rec.quantities[2].value, 0.0);
                assert!(rec.violated);
            }
        }
    }

    #[test]
    fn part2_affine_fit_fails_for_larger_n() {
        let rec = prop1_record(Part::NotInFamily, 2, 10, &0.0f64).unwrap();
        assert!(rec.violated);
        assert!(rec.quantities[1].value > 1e-6);
        let small = prop1_record(Part::NotInFamily, 1, 3, &0.0f64).unwrap();
        assert!(!small.violated);
    }

    #[test]
    fn record_rejects_out_of_range() {
        assert!(prop1_record(Part::MeanZero, 3, 2, &0.0f64).is_err());
        assert!(prop1_record(Part::MeanZero, 0, 0, &0.0f64).is_err());
        assert!(Part::from_number(6).is_err());
    }

    #[test]
    fn float_series_matches_exact_sum() {
        for c in [r(0, 1), r(1, 1), r(-1, 1), r(1, 2)] {
            let cf = Scalar::to_f64(&c);
            for n in 1..=30 {
                for u1 in 0..=n {
                    let exact = Scalar::to_f64(&mean_adjusted::<Rational>(u1, n, &c));
                    let float = mean_adjusted_float(u1, n, cf);
                    assert!((exact - float).abs() < 1e-13, "c={cf} N={n} u1={u1}: {exact} vs {float}");
                }
            }
        }
    }

    #[test]
    fn degenerate_endpoints_sum_exactly() {
        // u1 = 0 puts all mass on k = 0 (AS = 0); u1 = N on k = N (AS = c).
        for n in 1..=10 {
            assert_eq!(mean_adjusted::<Rational>(0, n, &r(0, 1)), r(0, 1));
            assert_eq!(mean_adjusted::<Rational>(n, n, &r(3, 2)), r(3, 2));
        }
    }

    #[test]
    fn g_respects_envelope() {
        for n in 2..=60u64 {
            let nf = n as f64;
            for u1 in 1..n {
                let g = g_float(u1, n);
                assert!(g > -1.0 / nf && g < -1.0 / (4.0 * nf * nf), "N={n} u1={u1} g={g}");
            }
        }
    }

    #[test]
    fn grid_shape_and_first_cell() {
        let cells = figure1_grid(100, &[0.0]).unwrap();
        assert_eq!(cells.len(), 4950);
        let first = cells[0];
        assert_eq!((first.n, first.u1), (2, 1));
        assert!((first.abs_diff() - 0.8).abs() < 1e-12);
        assert!((first.neg_log10_diff - 0.09691001300805639).abs() < 1e-12);
        assert!(cells.iter().all(|c| c.abs_diff() > 0.0 && c.neg_log10_diff.is_finite()));
        assert!(figure1_grid(1, &[0.0]).is_err());
    }

    #[test]
    fn grid_is_sorted() {
        let cells = figure1_grid(6, &[0.0, 1.0]).unwrap();
        let keys: Vec<_> = cells.iter().map(|c| (c.c != 0.0, c.n, c.u1)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn asymptotic_examples() {
        let res = asymptotic_check(1, 1.0, 1000).unwrap();
        let target = 2.0 / (std::f64::consts::E - 1.0);
        assert!((res.limit - target).abs() < 1e-15);
        assert!((res.ratio - target).abs() / target < 0.05);
        assert!((asymptotic_limit(2, 1.0) - 0.3130352854993313).abs() < 1e-12);
        let neg = asymptotic_check(1, -1.0, 1000).unwrap();
        assert_eq!(neg.limit, -2.0);
        assert!((neg.ratio + 2.0).abs() < 0.1, "{neg:?}");
        assert!(matches!(asymptotic_check(1, 0.0, 10), Err(Error::Unsupported(_))));
        assert!(asymptotic_check(5, 1.0, 5).is_err());
    }
}
