//! Raw similarity indices and affine combinations of them.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::combinatorics::pairs;
use crate::error::{Error, Result};
use crate::scalar::{Rational, Scalar};
use crate::tables::ContingencyTable;

/// A real-valued function of a contingency table.
///
/// Implementations provide a double-precision evaluation and, where the value
/// is rational, an exact one. Evaluation must be deterministic.
pub trait Index: Send + Sync + fmt::Debug {
    /// Stable identifier used in reports.
    fn id(&self) -> String;

    fn eval_f64(&self, t: &ContingencyTable) -> Result<f64>;

    fn eval_exact(&self, t: &ContingencyTable) -> Result<Rational> {
        let _ = t;
        Err(Error::capability(format!(
            "index '{}' has no exact evaluation",
            self.id()
        )))
    }

    /// The built-in index this is, if any; used for closed-form lookups.
    fn builtin(&self) -> Option<Builtin> {
        None
    }
}

/// Shared handle to an index.
pub type IndexRef = Arc<dyn Index>;

/// Built-in indices with stable identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    /// Raw agreement: share of observations on the diagonal.
    P,
    /// Pair agreement of the joint count (flattened cells).
    QJoint,
    /// Pair agreement of the row margin.
    QRow,
    /// Pair agreement of the column margin.
    QCol,
    /// Rand index `1 - q(u) - q(v) + 2 q(n)`.
    Rand,
    /// First row margin `u_1`.
    ToyU1,
    /// Squared first row margin `u_1^2`.
    ToyU1Squared,
}

impl Builtin {
    pub const ALL: [Builtin; 7] = [
        Builtin::P,
        Builtin::QJoint,
        Builtin::QRow,
        Builtin::QCol,
        Builtin::Rand,
        Builtin::ToyU1,
        Builtin::ToyU1Squared,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Builtin::P => "p",
            Builtin::QJoint => "q_joint",
            Builtin::QRow => "q_row",
            Builtin::QCol => "q_col",
            Builtin::Rand => "rand",
            Builtin::ToyU1 => "toy_u1",
            Builtin::ToyU1Squared => "toy_u1_squared",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Builtin::P => "raw agreement p(n) = sum_i n_ii / N (requires I = J)",
            Builtin::QJoint => "pair agreement q(n) of the joint count, cells flattened",
            Builtin::QRow => "pair agreement q(u) of the row margin",
            Builtin::QCol => "pair agreement q(v) of the column margin",
            Builtin::Rand => "Rand index 1 - q(u) - q(v) + 2 q(n)",
            Builtin::ToyU1 => "toy index u_1 (first row margin)",
            Builtin::ToyU1Squared => "toy index u_1^2",
        }
    }

    pub fn value<S: Scalar>(self, t: &ContingencyTable) -> Result<S> {
        let n = t.total();
        match self {
            Builtin::P => raw_agreement_p(t),
            Builtin::QJoint => pair_agreement_q(t.counts(), n),
            Builtin::QRow => pair_agreement_q(t.row_sums(), n),
            Builtin::QCol => pair_agreement_q(t.col_sums(), n),
            Builtin::Rand => rand_index(t),
            Builtin::ToyU1 => toy_index(ToyKind::U1, t),
            Builtin::ToyU1Squared => toy_index(ToyKind::U1Squared, t),
        }
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Builtin::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Builtin::ALL.iter().map(|b| b.as_str()).collect();
                Error::input(format!("unknown index '{s}'; expected one of {}", known.join(", ")))
            })
    }
}

impl Index for Builtin {
    fn id(&self) -> String {
        self.as_str().to_string()
    }

    fn eval_f64(&self, t: &ContingencyTable) -> Result<f64> {
        self.value(t)
    }

    fn eval_exact(&self, t: &ContingencyTable) -> Result<Rational> {
        self.value(t)
    }

    fn builtin(&self) -> Option<Builtin> {
        Some(*self)
    }
}

pub fn raw_agreement_p<S: Scalar>(t: &ContingencyTable) -> Result<S> {
    if !t.is_square() {
        return Err(Error::shape(format!(
            "p needs a square table (I = J), got {}x{}",
            t.nrows(),
            t.ncols()
        )));
    }
    let diagonal: u64 = (0..t.nrows()).map(|i| t.get(i, i)).sum();
    Ok(S::from_ratio(diagonal as i128, t.total() as i128))
}

/// Share of the `C(N,2)` observation pairs that fall in a common cell of `w`.
pub fn pair_agreement_q<S: Scalar>(w: &[u64], n: u64) -> Result<S> {
    if n < 2 {
        return Err(Error::domain(format!("pair agreement needs N >= 2, got N = {n}")));
    }
    let sum: u64 = w.iter().sum();
    if sum != n {
        return Err(Error::input(format!("counts sum to {sum}, expected N = {n}")));
    }
    let together: u128 = w.iter().map(|&c| pairs(c)).sum();
    Ok(S::from_ratio(together as i128, pairs(n) as i128))
}

pub fn rand_index<S: Scalar>(t: &ContingencyTable) -> Result<S> {
    let n = t.total();
    let qn: S = pair_agreement_q(t.counts(), n)?;
    let qu: S = pair_agreement_q(t.row_sums(), n)?;
    let qv: S = pair_agreement_q(t.col_sums(), n)?;
    Ok(S::one() - qu - qv + S::from_int(2) * qn)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyKind {
    U1,
    U1Squared,
}

pub fn toy_index<S: Scalar>(kind: ToyKind, t: &ContingencyTable) -> Result<S> {
    let u1 = t.row_sums()[0] as i128;
    Ok(match kind {
        ToyKind::U1 => S::from_int(u1),
        ToyKind::U1Squared => S::from_int(u1 * u1),
    })
}

/// An index that takes the same value on every table.
#[derive(Debug, Clone)]
pub struct Constant(pub Rational);

impl Index for Constant {
    fn id(&self) -> String {
        self.0.render()
    }

    fn eval_f64(&self, _t: &ContingencyTable) -> Result<f64> {
        Ok(Scalar::to_f64(&self.0))
    }

    fn eval_exact(&self, _t: &ContingencyTable) -> Result<Rational> {
        Ok(self.0.clone())
    }
}

/// `constant + sum_k weight_k * index_k` with rational weights.
#[derive(Debug, Clone)]
pub struct Combination {
    pub constant: Rational,
    pub terms: Vec<(Rational, IndexRef)>,
}

impl Combination {
    fn value<S: Scalar>(&self, t: &ContingencyTable) -> Result<S> {
        let mut acc = S::from_rational(&self.constant);
        for (w, idx) in &self.terms {
            acc = acc + S::from_rational(w) * S::evaluate(idx.as_ref(), t)?;
        }
        Ok(acc)
    }
}

impl Index for Combination {
    fn id(&self) -> String {
        let mut s = self.constant.render();
        for (w, idx) in &self.terms {
            s.push_str(&format!(" + {}*{}", w.render(), idx.id()));
        }
        s
    }

    fn eval_f64(&self, t: &ContingencyTable) -> Result<f64> {
        self.value(t)
    }

    fn eval_exact(&self, t: &ContingencyTable) -> Result<Rational> {
        self.value(t)
    }
}

/// `T(n) = alpha(n) + beta(n) * S(n)` for a base index `S`.
///
/// Whether the coefficients are constant on each null support (membership in
/// the linear family of `S`) is checked in [`crate::properties`].
#[derive(Debug, Clone)]
pub struct LinearMember {
    pub base: IndexRef,
    pub alpha: IndexRef,
    pub beta: IndexRef,
}

pub fn linear_member(base: IndexRef, alpha: IndexRef, beta: IndexRef) -> LinearMember {
    LinearMember { base, alpha, beta }
}

impl LinearMember {
    /// The Rand index written as a member over `q_joint`.
    pub fn rand_over_q() -> Self {
        let one = Rational::from_int(1);
        LinearMember {
            base: Arc::new(Builtin::QJoint),
            alpha: Arc::new(Combination {
                constant: one.clone(),
                terms: vec![
                    (-one.clone(), Arc::new(Builtin::QRow) as IndexRef),
                    (-one, Arc::new(Builtin::QCol) as IndexRef),
                ],
            }),
            beta: Arc::new(Constant(Rational::from_int(2))),
        }
    }

    /// `alpha + beta * base` with constant coefficients.
    pub fn affine(base: IndexRef, alpha: Rational, beta: Rational) -> Self {
        LinearMember {
            base,
            alpha: Arc::new(Constant(alpha)),
            beta: Arc::new(Constant(beta)),
        }
    }

    pub fn alpha_at<S: Scalar>(&self, t: &ContingencyTable) -> Result<S> {
        S::evaluate(self.alpha.as_ref(), t)
    }

    pub fn beta_at<S: Scalar>(&self, t: &ContingencyTable) -> Result<S> {
        let beta = S::evaluate(self.beta.as_ref(), t)?;
        if beta.is_zero() {
            return Err(Error::Contract(format!(
                "beta of linear member '{}' is zero on table {t}",
                self.id()
            )));
        }
        Ok(beta)
    }

    fn value<S: Scalar>(&self, t: &ContingencyTable) -> Result<S> {
        let beta: S = self.beta_at(t)?;
        Ok(self.alpha_at::<S>(t)? + beta * S::evaluate(self.base.as_ref(), t)?)
    }
}

impl Index for LinearMember {
    fn id(&self) -> String {
        format!("({}) + ({})*{}", self.alpha.id(), self.beta.id(), self.base.id())
    }

    fn eval_f64(&self, t: &ContingencyTable) -> Result<f64> {
        self.value(t)
    }

    fn eval_exact(&self, t: &ContingencyTable) -> Result<Rational> {
        self.value(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tables::enumerate_domain;

    fn t(rows: Vec<Vec<u64>>) -> ContingencyTable {
        ContingencyTable::new(rows).unwrap()
    }

    fn r(n: i128, d: i128) -> Rational {
        Rational::from_ratio(n, d)
    }

    #[test]
    fn raw_agreement_examples() {
        assert_eq!(raw_agreement_p::<Rational>(&t(vec![vec![2, 0], vec![0, 2]])).unwrap(), r(1, 1));
        assert_eq!(raw_agreement_p::<Rational>(&t(vec![vec![1, 1], vec![1, 1]])).unwrap(), r(1, 2));
        assert_eq!(raw_agreement_p::<f64>(&t(vec![vec![1, 1], vec![0, 2]])).unwrap(), 0.75);
        assert!(matches!(
            raw_agreement_p::<f64>(&t(vec![vec![1, 1, 0], vec![0, 2, 0]])),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn pair_agreement_examples() {
        assert_eq!(pair_agreement_q::<Rational>(&[2, 2], 4).unwrap(), r(1, 3));
        assert_eq!(pair_agreement_q::<Rational>(&[1, 1, 1, 1], 4).unwrap(), r(0, 1));
        assert_eq!(pair_agreement_q::<Rational>(&[4], 4).unwrap(), r(1, 1));
        assert!(matches!(pair_agreement_q::<f64>(&[1], 1), Err(Error::Domain(_))));
        assert!(matches!(pair_agreement_q::<f64>(&[1, 2], 4), Err(Error::Input(_))));
    }

    #[test]
    fn rand_index_examples() {
        assert_eq!(rand_index::<Rational>(&t(vec![vec![2, 0], vec![0, 2]])).unwrap(), r(1, 1));
        assert_eq!(rand_index::<Rational>(&t(vec![vec![1, 1], vec![1, 1]])).unwrap(), r(1, 3));
        assert_eq!(rand_index::<Rational>(&t(vec![vec![4]])).unwrap(), r(1, 1));
        assert!(rand_index::<f64>(&t(vec![vec![1]])).is_err());
    }

    /// Share of concordant pairs counted directly over observation pairs.
    fn rand_by_pairs(table: &ContingencyTable) -> Rational {
        let (x, y) = table.observations();
        let mut agree = 0i128;
        let mut total = 0i128;
        for a in 0..x.len() {
            for b in a + 1..x.len() {
                total += 1;
                if (x[a] == x[b]) == (y[a] == y[b]) {
                    agree += 1;
                }
            }
        }
        r(agree, total)
    }

    #[test]
    fn rand_index_counts_concordant_pairs() {
        for n in 2..=5 {
            for table in enumerate_domain(n, 2, 3).unwrap().iter() {
                assert_eq!(rand_index::<Rational>(&table).unwrap(), rand_by_pairs(&table));
            }
        }
    }

    #[test]
    fn toy_examples() {
        let a = t(vec![vec![1], vec![1]]);
        assert_eq!(toy_index::<Rational>(ToyKind::U1Squared, &a).unwrap(), r(1, 1));
        let b = t(vec![vec![1, 1], vec![2, 0]]);
        assert_eq!(toy_index::<f64>(ToyKind::U1, &b).unwrap(), 2.0);
        let c = t(vec![vec![0, 0], vec![2, 2]]);
        assert_eq!(toy_index::<f64>(ToyKind::U1Squared, &c).unwrap(), 0.0);
    }

    #[test]
    fn q_joint_bounded_by_margins() {
        for n in 2..=6 {
            for table in enumerate_domain(n, 3, 3).unwrap().iter() {
                let qn: Rational = Builtin::QJoint.value(&table).unwrap();
                let qu: Rational = Builtin::QRow.value(&table).unwrap();
                let qv: Rational = Builtin::QCol.value(&table).unwrap();
                assert!(qn <= qu.clone().min(qv.clone()));
                assert!(qn <= (qu + qv) / r(2, 1));
            }
        }
    }

    #[test]
    fn rand_as_linear_member_of_q() {
        let member = LinearMember::rand_over_q();
        for n in 2..=5 {
            for table in enumerate_domain(n, 2, 2).unwrap().iter() {
                assert_eq!(
                    member.eval_exact(&table).unwrap(),
                    Builtin::Rand.eval_exact(&table).unwrap()
                );
            }
        }
    }

    #[test]
    fn identity_and_sign_flipped_members() {
        let identity = LinearMember::affine(Arc::new(Builtin::P), r(0, 1), r(1, 1));
        let table = t(vec![vec![1, 1], vec![0, 2]]);
        assert_eq!(identity.eval_exact(&table).unwrap(), r(3, 4));
        let flipped = LinearMember::affine(Arc::new(Builtin::QJoint), r(0, 1), r(-1, 1));
        assert_eq!(
            flipped.eval_exact(&t(vec![vec![2, 0], vec![0, 2]])).unwrap(),
            r(-1, 3)
        );
        let zero = LinearMember::affine(Arc::new(Builtin::P), r(0, 1), r(0, 1));
        assert!(matches!(zero.eval_f64(&table), Err(Error::Contract(_))));
    }

    #[test]
    fn parses_identifiers() {
        for b in Builtin::ALL {
            assert_eq!(b.as_str().parse::<Builtin>().unwrap(), b);
        }
        assert!("kappa".parse::<Builtin>().is_err());
    }
}
