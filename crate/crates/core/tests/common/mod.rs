//! Brute-force oracles shared by the integration tests. Nothing here calls
//! the library's engines: indices are counted from observation pairs,
//! supports are built by filtering every table, and probabilities come from
//! textbook formulas.

#![allow(dead_code)]

use std::collections::HashMap;

use num_bigint::BigInt;
use num_traits::{One, Zero};

pub type Q = num_rational::BigRational;
pub type Rows = Vec<Vec<u64>>;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn qi(n: u64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn to_f64(x: &Q) -> f64 {
    num_traits::ToPrimitive::to_f64(x).unwrap()
}

pub fn fact(n: u64) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * k)
}

/// Every vector of `parts` non-negative integers summing to `n`.
pub fn compositions(n: u64, parts: usize) -> Vec<Vec<u64>> {
    if parts == 0 {
        return if n == 0 { vec![vec![]] } else { vec![] };
    }
    if parts == 1 {
        return vec![vec![n]];
    }
    let mut out = Vec::new();
    for first in (0..=n).rev() {
        for mut rest in compositions(n - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

pub fn all_tables(n: u64, r: usize, c: usize) -> Vec<Rows> {
    compositions(n, r * c)
        .into_iter()
        .map(|flat| flat.chunks(c).map(|row| row.to_vec()).collect())
        .collect()
}

pub fn margins(t: &Rows) -> (Vec<u64>, Vec<u64>) {
    let u = t.iter().map(|r| r.iter().sum()).collect();
    let v = (0..t[0].len()).map(|j| t.iter().map(|r| r[j]).sum()).collect();
    (u, v)
}

pub fn total(t: &Rows) -> u64 {
    t.iter().flatten().sum()
}

/// Observation list `(x_k, y_k)` realizing the table.
pub fn observations(t: &Rows) -> Vec<(usize, usize)> {
    let mut obs = Vec::new();
    for (i, row) in t.iter().enumerate() {
        for (j, &n) in row.iter().enumerate() {
            obs.extend(std::iter::repeat_n((i, j), n as usize));
        }
    }
    obs
}

/// Pair counts `(same x and same y, same x, same y, total pairs)`.
pub fn pair_counts(t: &Rows) -> (u64, u64, u64, u64) {
    let obs = observations(t);
    let (mut both, mut sx, mut sy, mut all) = (0, 0, 0, 0);
    for a in 0..obs.len() {
        for b in a + 1..obs.len() {
            let x = obs[a].0 == obs[b].0;
            let y = obs[a].1 == obs[b].1;
            both += (x && y) as u64;
            sx += x as u64;
            sy += y as u64;
            all += 1;
        }
    }
    (both, sx, sy, all)
}

pub fn q_joint(t: &Rows) -> Q {
    let (both, _, _, all) = pair_counts(t);
    q(both as i64, all as i64)
}

pub fn q_row(t: &Rows) -> Q {
    let (_, sx, _, all) = pair_counts(t);
    q(sx as i64, all as i64)
}

pub fn q_col(t: &Rows) -> Q {
    let (_, _, sy, all) = pair_counts(t);
    q(sy as i64, all as i64)
}

/// Fraction of pairs on which the two partitions agree.
pub fn rand(t: &Rows) -> Q {
    let obs = observations(t);
    let (mut agree, mut all) = (0i64, 0i64);
    for a in 0..obs.len() {
        for b in a + 1..obs.len() {
            agree += ((obs[a].0 == obs[b].0) == (obs[a].1 == obs[b].1)) as i64;
            all += 1;
        }
    }
    q(agree, all)
}

pub fn p(t: &Rows) -> Q {
    let diag: u64 = (0..t.len().min(t[0].len())).map(|i| t[i][i]).sum();
    q(diag as i64, total(t) as i64)
}

/// Hubert-Arabie ARI from pair counts; zero-denominator maps to 0.
pub fn ari(t: &Rows) -> Q {
    let (both, sx, sy, all) = pair_counts(t);
    let expected = q((sx * sy) as i64, all as i64);
    let num = qi(both) - &expected;
    let den = q((sx + sy) as i64, 2) - &expected;
    if den.is_zero() {
        Q::zero()
    } else {
        num / den
    }
}

/// Hypergeometric support of the table, built by filtering every table.
pub fn perm_support(t: &Rows) -> Vec<(Rows, Q)> {
    let (u, v) = margins(t);
    let n = total(t);
    let mut num_const = BigInt::one();
    for &x in u.iter().chain(&v) {
        num_const *= fact(x);
    }
    all_tables(n, u.len(), v.len())
        .into_iter()
        .filter(|s| margins(s) == (u.clone(), v.clone()))
        .map(|s| {
            let den = s.iter().flatten().fold(fact(n), |acc, &c| acc * fact(c));
            let pr = Q::new(num_const.clone(), den);
            (s, pr)
        })
        .collect()
}

/// Multinomial support over all `r x c` tables with cell probabilities.
pub fn multinomial_support(n: u64, r: usize, c: usize, cell: impl Fn(usize, usize) -> Q) -> Vec<(Rows, Q)> {
    all_tables(n, r, c)
        .into_iter()
        .map(|s| {
            let mut pr = Q::from_integer(fact(n));
            for (i, row) in s.iter().enumerate() {
                for (j, &k) in row.iter().enumerate() {
                    pr = pr * num_traits::pow(cell(i, j), k as usize) / Q::from_integer(fact(k));
                }
            }
            (s, pr)
        })
        .filter(|(_, pr)| !pr.is_zero())
        .collect()
}

pub fn uniform_support(n: u64, r: usize, c: usize) -> Vec<(Rows, Q)> {
    let cells = (r * c) as i64;
    multinomial_support(n, r, c, |_, _| q(1, cells))
}

pub fn ind1_support(t: &Rows) -> Vec<(Rows, Q)> {
    let (u, v) = margins(t);
    let n = total(t);
    let w: Vec<u64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
    let two_n = (2 * n) as i64;
    multinomial_support(n, u.len(), v.len(), |i, j| q(w[i] as i64, two_n) * q(w[j] as i64, two_n))
}

pub fn ind2_support(t: &Rows) -> Vec<(Rows, Q)> {
    let (u, v) = margins(t);
    let n = total(t) as i64;
    multinomial_support(n as u64, u.len(), v.len(), |i, j| q(u[i] as i64, n) * q(v[j] as i64, n))
}

pub fn mean(support: &[(Rows, Q)], f: impl Fn(&Rows) -> Q) -> Q {
    support.iter().fold(Q::zero(), |acc, (s, pr)| acc + pr * f(s))
}

/// Expectations of `p` (square tables only) and `q_joint` under the
/// permutation model, averaged over all N! orderings of the second labels.
/// Results are cached by margins since the model only sees margins.
pub struct PermutationOracle {
    cache: HashMap<(Vec<u64>, Vec<u64>), (Q, Q)>,
}

impl PermutationOracle {
    pub fn new() -> Self {
        PermutationOracle { cache: HashMap::new() }
    }

    pub fn expectations(&mut self, t: &Rows) -> (Q, Q) {
        let key = margins(t);
        if let Some(hit) = self.cache.get(&key) {
            return hit.clone();
        }
        let res = permutation_average(&key.0, &key.1);
        self.cache.insert(key, res.clone());
        res
    }
}

fn permutation_average(u: &[u64], v: &[u64]) -> (Q, Q) {
    let x: Vec<usize> = u.iter().enumerate().flat_map(|(i, &k)| std::iter::repeat_n(i, k as usize)).collect();
    let mut y: Vec<usize> = v.iter().enumerate().flat_map(|(j, &k)| std::iter::repeat_n(j, k as usize)).collect();
    let n = x.len();
    let (r, c) = (u.len(), v.len());
    let mut counts = vec![0u64; r * c];
    let (mut diag_sum, mut pair_sum, mut perms) = (0u128, 0u128, 0u128);
    let mut visit = |y: &[usize]| {
        counts.iter_mut().for_each(|k| *k = 0);
        let mut diag = 0u64;
        for k in 0..n {
            counts[x[k] * c + y[k]] += 1;
            diag += (x[k] == y[k]) as u64;
        }
        diag_sum += diag as u128;
        pair_sum += counts.iter().map(|&k| (k * k.saturating_sub(1) / 2) as u128).sum::<u128>();
        perms += 1;
    };
    // Heap's algorithm, iterative.
    let mut stack = vec![0usize; n];
    visit(&y);
    let mut i = 1;
    while i < n {
        if stack[i] < i {
            if i % 2 == 0 {
                y.swap(0, i);
            } else {
                y.swap(stack[i], i);
            }
            visit(&y);
            stack[i] += 1;
            i = 1;
        } else {
            stack[i] = 0;
            i += 1;
        }
    }
    let nn = n as u128;
    let ep = Q::new(BigInt::from(diag_sum), BigInt::from(perms * nn.max(1)));
    let pairs = (nn * nn.saturating_sub(1) / 2).max(1);
    let eq = Q::new(BigInt::from(pair_sum), BigInt::from(perms * pairs));
    (ep, eq)
}
