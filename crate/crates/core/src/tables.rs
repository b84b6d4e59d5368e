//! Contingency tables, pair tables, and enumeration of table sets.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;

use num_traits::ToPrimitive;
use serde::{Serialize, Serializer};

use crate::combinatorics::{pairs, weak_compositions};
use crate::error::{Error, Result};

/// Default cap on the number of tables any enumeration may yield.
pub const DEFAULT_BUDGET: usize = 5_000_000;

/// Joint count matrix of two categorical variables observed on the same
/// `N` observations, together with its margins.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ContingencyTable {
    rows: usize,
    cols: usize,
    counts: Vec<u64>,
    row_sums: Vec<u64>,
    col_sums: Vec<u64>,
    total: u64,
    row_labels: Option<Vec<String>>,
    col_labels: Option<Vec<String>>,
}

impl ContingencyTable {
    /// Builds a table from row vectors of counts.
    pub fn new(rows: Vec<Vec<u64>>) -> Result<Self> {
        let nrows = rows.len();
        if nrows == 0 {
            return Err(Error::input("table must have at least one row"));
        }
        let ncols = rows[0].len();
        if ncols == 0 {
            return Err(Error::input("table must have at least one column"));
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
            return Err(Error::input(format!(
                "ragged table: row {} has {} columns, expected {ncols}",
                i + 1,
                r.len()
            )));
        }
        Self::from_flat(nrows, ncols, rows.into_iter().flatten().collect())
    }

    /// Builds a table from row-major counts.
    pub fn from_flat(rows: usize, cols: usize, counts: Vec<u64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::input("table dimensions must be positive"));
        }
        if counts.len() != rows * cols {
            return Err(Error::input(format!(
                "expected {} counts for a {rows}x{cols} table, got {}",
                rows * cols,
                counts.len()
            )));
        }
        let mut row_sums = vec![0u64; rows];
        let mut col_sums = vec![0u64; cols];
        for i in 0..rows {
            for j in 0..cols {
                let c = counts[i * cols + j];
                row_sums[i] += c;
                col_sums[j] += c;
            }
        }
        let total = row_sums.iter().sum();
        if total == 0 {
            return Err(Error::input("table total N must be positive"));
        }
        Ok(ContingencyTable {
            rows,
            cols,
            counts,
            row_sums,
            col_sums,
            total,
            row_labels: None,
            col_labels: None,
        })
    }

    /// Two-row, one-column table `[[u1],[n-u1]]`; the smallest table whose
    /// first row margin is `u1`.
    pub fn first_margin(u1: u64, n: u64) -> Result<Self> {
        if u1 > n {
            return Err(Error::input(format!("u1 = {u1} exceeds N = {n}")));
        }
        Self::from_flat(2, 1, vec![u1, n - u1])
    }

    /// Pads with empty rows/columns up to the declared number of categories.
    pub fn with_shape(self, rows: usize, cols: usize) -> Result<Self> {
        if rows < self.rows || cols < self.cols {
            return Err(Error::shape(format!(
                "declared shape {rows}x{cols} is smaller than observed {}x{}",
                self.rows, self.cols
            )));
        }
        let mut counts = vec![0u64; rows * cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                counts[i * cols + j] = self.get(i, j);
            }
        }
        let pad = |labels: Option<Vec<String>>, len: usize| {
            labels.map(|mut l| {
                let start = l.len();
                l.extend((start..len).map(|k| format!("<empty {}>", k + 1)));
                l
            })
        };
        let mut out = Self::from_flat(rows, cols, counts)?;
        out.row_labels = pad(self.row_labels, rows);
        out.col_labels = pad(self.col_labels, cols);
        Ok(out)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.cols + j]
    }

    /// Row-major cell counts.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Row margins `u`.
    pub fn row_sums(&self) -> &[u64] {
        &self.row_sums
    }

    /// Column margins `v`.
    pub fn col_sums(&self) -> &[u64] {
        &self.col_sums
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.cols).map(<[u64]>::to_vec).collect()
    }

    pub fn row_labels(&self) -> Option<&[String]> {
        self.row_labels.as_deref()
    }

    pub fn col_labels(&self) -> Option<&[String]> {
        self.col_labels.as_deref()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Expands the table back into one `(row, col)` label pair per observation.
    pub fn observations(&self) -> (Vec<usize>, Vec<usize>) {
        let mut x = Vec::with_capacity(self.total as usize);
        let mut y = Vec::with_capacity(self.total as usize);
        for i in 0..self.rows {
            for j in 0..self.cols {
                for _ in 0..self.get(i, j) {
                    x.push(i);
                    y.push(j);
                }
            }
        }
        (x, y)
    }
}

impl fmt::Debug for ContingencyTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.to_rows())
    }
}

impl fmt::Display for ContingencyTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = self
            .counts
            .chunks(self.cols)
            .map(|r| r.iter().map(u64::to_string).collect::<Vec<_>>().join(","))
            .collect();
        write!(f, "[[{}]]", rows.join("],["))
    }
}

impl Serialize for ContingencyTable {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

/// Tallies two label sequences into a joint count table. Categories are
/// indexed in order of first appearance and the original labels are kept.
pub fn table_from_labels<T>(x: &[T], y: &[T]) -> Result<ContingencyTable>
where
    T: Eq + Hash + Clone + fmt::Display,
{
    if x.len() != y.len() {
        return Err(Error::input(format!(
            "label sequences differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::input("label sequences are empty"));
    }
    fn index_labels<T: Eq + Hash + Clone + fmt::Display>(
        labels: &[T],
    ) -> (Vec<usize>, Vec<String>) {
        let mut seen: HashMap<&T, usize> = HashMap::new();
        let mut names = Vec::new();
        let idx = labels
            .iter()
            .map(|l| {
                *seen.entry(l).or_insert_with(|| {
                    names.push(l.to_string());
                    names.len() - 1
                })
            })
            .collect();
        (idx, names)
    }
    let (xi, row_names) = index_labels(x);
    let (yi, col_names) = index_labels(y);
    let (rows, cols) = (row_names.len(), col_names.len());
    let mut counts = vec![0u64; rows * cols];
    for (&i, &j) in xi.iter().zip(&yi) {
        counts[i * cols + j] += 1;
    }
    let mut t = ContingencyTable::from_flat(rows, cols, counts)?;
    t.row_labels = Some(row_names);
    t.col_labels = Some(col_names);
    Ok(t)
}

/// Counts of observation pairs by same/different assignment under each
/// labeling. Cells sum to `C(N,2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PairTable {
    pub same_same: u128,
    pub same_diff: u128,
    pub diff_same: u128,
    pub diff_diff: u128,
}

impl PairTable {
    pub fn total(&self) -> u128 {
        self.same_same + self.same_diff + self.diff_same + self.diff_diff
    }
}

pub fn pair_table(t: &ContingencyTable) -> Result<PairTable> {
    if t.total() < 2 {
        return Err(Error::domain("pair table needs N >= 2"));
    }
    let joint: u128 = t.counts().iter().map(|&c| pairs(c)).sum();
    let row: u128 = t.row_sums().iter().map(|&c| pairs(c)).sum();
    let col: u128 = t.col_sums().iter().map(|&c| pairs(c)).sum();
    let all = pairs(t.total());
    Ok(PairTable {
        same_same: joint,
        same_diff: row - joint,
        diff_same: col - joint,
        diff_diff: all + joint - row - col,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Constraint {
    /// Every table of the given shape with total `n`, restricted to cells
    /// whose row and column are both active.
    Total {
        n: u64,
        rows: usize,
        cols: usize,
        active_rows: Vec<bool>,
        active_cols: Vec<bool>,
    },
    /// Every table with the given margins.
    Margins { u: Vec<u64>, v: Vec<u64> },
}

/// A lazily enumerable set of tables sharing a total (and optionally margins).
/// Iteration order is fixed and each call to [`TableSet::iter`] restarts it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableSet {
    constraint: Constraint,
}

impl TableSet {
    /// Tables of shape `rows x cols` summing to `n` whose nonzero cells lie in
    /// active rows and columns.
    pub fn restricted(n: u64, active_rows: Vec<bool>, active_cols: Vec<bool>) -> Result<Self> {
        if n == 0 {
            return Err(Error::input("N must be positive"));
        }
        if !active_rows.iter().any(|&a| a) || !active_cols.iter().any(|&a| a) {
            return Err(Error::input("at least one row and one column must be active"));
        }
        Ok(TableSet {
            constraint: Constraint::Total {
                n,
                rows: active_rows.len(),
                cols: active_cols.len(),
                active_rows,
                active_cols,
            },
        })
    }

    /// Upper bound on the number of members, when cheaply known.
    pub fn size_hint(&self) -> Option<u128> {
        match &self.constraint {
            Constraint::Total {
                n,
                active_rows,
                active_cols,
                ..
            } => {
                let cells = active_rows.iter().filter(|&&a| a).count()
                    * active_cols.iter().filter(|&&a| a).count();
                weak_compositions(*n, cells as u64).to_u128()
            }
            Constraint::Margins { .. } => None,
        }
    }

    pub fn iter(&self) -> TableIter {
        match &self.constraint {
            Constraint::Total {
                n,
                rows,
                cols,
                active_rows,
                active_cols,
            } => {
                let cells: Vec<usize> = (0..*rows)
                    .filter(|&i| active_rows[i])
                    .flat_map(|i| {
                        (0..*cols)
                            .filter(|&j| active_cols[j])
                            .map(move |j| i * cols + j)
                    })
                    .collect();
                TableIter::Compositions(CompositionIter::new(*n, *rows, *cols, cells))
            }
            Constraint::Margins { u, v } => TableIter::Margins(MarginIter::new(u.clone(), v.clone())),
        }
    }

    /// Materializes the set, failing once more than `budget` tables are seen.
    pub fn collect_within(&self, budget: usize) -> Result<Vec<ContingencyTable>> {
        if let Some(size) = self.size_hint() {
            if size > budget as u128 {
                return Err(self.budget_error(budget));
            }
        }
        let mut out = Vec::new();
        for t in self.iter() {
            if out.len() == budget {
                return Err(self.budget_error(budget));
            }
            out.push(t);
        }
        Ok(out)
    }

    fn budget_error(&self, budget: usize) -> Error {
        let context = match &self.constraint {
            Constraint::Total { n, rows, cols, .. } => {
                format!("tables of shape {rows}x{cols} with total {n}")
            }
            Constraint::Margins { u, v } => format!("tables with margins u={u:?}, v={v:?}"),
        };
        Error::Budget { budget, context }
    }
}

/// Every nonnegative `rows x cols` table summing to `n` (the index domain).
pub fn enumerate_domain(n: u64, rows: usize, cols: usize) -> Result<TableSet> {
    if rows == 0 || cols == 0 {
        return Err(Error::input("table dimensions must be positive"));
    }
    TableSet::restricted(n, vec![true; rows], vec![true; cols])
}

/// Every nonnegative table with row sums `u` and column sums `v`.
pub fn enumerate_fixed_margins(u: &[u64], v: &[u64]) -> Result<TableSet> {
    if u.is_empty() || v.is_empty() {
        return Err(Error::input("margins must be non-empty"));
    }
    let (su, sv): (u64, u64) = (u.iter().sum(), v.iter().sum());
    if su != sv {
        return Err(Error::input(format!(
            "margin totals differ: sum(u) = {su}, sum(v) = {sv}"
        )));
    }
    if su == 0 {
        return Err(Error::input("margin total must be positive"));
    }
    Ok(TableSet {
        constraint: Constraint::Margins {
            u: u.to_vec(),
            v: v.to_vec(),
        },
    })
}

pub enum TableIter {
    Compositions(CompositionIter),
    Margins(MarginIter),
}

impl Iterator for TableIter {
    type Item = ContingencyTable;

    fn next(&mut self) -> Option<ContingencyTable> {
        match self {
            TableIter::Compositions(it) => it.next(),
            TableIter::Margins(it) => it.next(),
        }
    }
}

/// Weak compositions of `n` spread over a fixed list of cells.
pub struct CompositionIter {
    rows: usize,
    cols: usize,
    cells: Vec<usize>,
    parts: Vec<u64>,
    done: bool,
}

impl CompositionIter {
    fn new(n: u64, rows: usize, cols: usize, cells: Vec<usize>) -> Self {
        let mut parts = vec![0; cells.len()];
        parts[0] = n;
        CompositionIter {
            rows,
            cols,
            cells,
            parts,
            done: false,
        }
    }

    fn advance(&mut self) {
        let k = self.parts.len();
        if k == 1 {
            self.done = true;
            return;
        }
        let last = self.parts[k - 1];
        self.parts[k - 1] = 0;
        match (0..k - 1).rev().find(|&i| self.parts[i] > 0) {
            Some(i) => {
                self.parts[i] -= 1;
                self.parts[i + 1] = last + 1;
            }
            None => self.done = true,
        }
    }
}

impl Iterator for CompositionIter {
    type Item = ContingencyTable;

    fn next(&mut self) -> Option<ContingencyTable> {
        if self.done {
            return None;
        }
        let mut counts = vec![0u64; self.rows * self.cols];
        for (&cell, &p) in self.cells.iter().zip(&self.parts) {
            counts[cell] = p;
        }
        self.advance();
        ContingencyTable::from_flat(self.rows, self.cols, counts).ok()
    }
}

/// Tables with fixed margins, filled cell by cell in row-major order. Each
/// cell ranges over the values that keep the remaining problem feasible.
pub struct MarginIter {
    u: Vec<u64>,
    v: Vec<u64>,
    values: Vec<u64>,
    upper: Vec<u64>,
    done: bool,
}

impl MarginIter {
    fn new(u: Vec<u64>, v: Vec<u64>) -> Self {
        let cells = u.len() * v.len();
        let mut it = MarginIter {
            u,
            v,
            values: vec![0; cells],
            upper: vec![0; cells],
            done: false,
        };
        it.fill_from(0);
        it
    }

    /// Sets cells `start..` to their smallest feasible values given the
    /// prefix `..start`.
    fn fill_from(&mut self, start: usize) {
        let cols = self.v.len();
        let mut row_rem = self.u.clone();
        let mut col_rem = self.v.clone();
        for k in 0..start {
            row_rem[k / cols] -= self.values[k];
            col_rem[k % cols] -= self.values[k];
        }
        for k in start..self.values.len() {
            let (i, j) = (k / cols, k % cols);
            let later_cols: u64 = col_rem[j + 1..].iter().sum();
            let later_rows: u64 = self.u[i + 1..].iter().sum();
            let lo = row_rem[i]
                .saturating_sub(later_cols)
                .max(col_rem[j].saturating_sub(later_rows));
            let hi = row_rem[i].min(col_rem[j]);
            self.values[k] = lo;
            self.upper[k] = hi;
            row_rem[i] -= lo;
            col_rem[j] -= lo;
        }
    }
}

impl Iterator for MarginIter {
    type Item = ContingencyTable;

    fn next(&mut self) -> Option<ContingencyTable> {
        if self.done {
            return None;
        }
        let current =
            ContingencyTable::from_flat(self.u.len(), self.v.len(), self.values.clone()).ok();
        match (0..self.values.len()).rev().find(|&k| self.values[k] < self.upper[k]) {
            Some(k) => {
                self.values[k] += 1;
                self.fill_from(k + 1);
            }
            None => self.done = true,
        }
        current
    }
}
