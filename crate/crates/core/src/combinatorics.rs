//! Factorials and binomial coefficients, exact and in log space.

use num_bigint::BigInt;
use num_traits::One;

/// Largest `n` for which binomial coefficients are computed exactly; above it
/// callers should use [`ln_choose`].
pub const EXACT_BINOMIAL_LIMIT: u64 = 10_000;

/// Cached table of `0!, 1!, ..., n!`.
#[derive(Debug, Clone)]
pub struct Factorials {
    table: Vec<BigInt>,
}

impl Factorials {
    pub fn up_to(n: u64) -> Self {
        let mut table = Vec::with_capacity(n as usize + 1);
        let mut acc = BigInt::one();
        table.push(acc.clone());
        for k in 1..=n {
            acc *= k;
            table.push(acc.clone());
        }
        Factorials { table }
    }

    pub fn get(&self, k: u64) -> &BigInt {
        &self.table[k as usize]
    }

    pub fn choose(&self, n: u64, k: u64) -> BigInt {
        if k > n {
            return BigInt::default();
        }
        self.get(n) / (self.get(k) * self.get(n - k))
    }
}

/// Exact `C(n, k)` by the multiplicative formula.
pub fn choose(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::default();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// Number of unordered pairs among `n` items.
pub fn pairs(n: u64) -> u128 {
    let n = n as u128;
    n * n.saturating_sub(1) / 2
}

pub fn ln_factorial(n: u64) -> f64 {
    libm::lgamma(n as f64 + 1.0)
}

pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Binomial probability mass `C(n,k) p^k (1-p)^(n-k)` accumulated in log space.
pub fn binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let log = ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p();
    log.exp()
}

/// Number of weak compositions of `n` into `parts` nonnegative parts.
pub fn weak_compositions(n: u64, parts: u64) -> BigInt {
    if parts == 0 {
        return if n == 0 { BigInt::one() } else { BigInt::default() };
    }
    choose(n + parts - 1, parts - 1)
}
