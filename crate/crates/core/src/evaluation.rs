//! Hungarian-matched clustering accuracy with All/Known/New splits.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Optimal one-to-one cluster→class matching.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// Samples whose cluster is matched to their true class.
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    /// cluster id → class id
    pub permutation: BTreeMap<usize, usize>,
}

/// Square min-cost assignment (Kuhn–Munkres with potentials), O(n³).
/// Returns `row_to_col`.
pub fn solve_assignment(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays, column 0 is the virtual start.
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if col_owner[j] > 0 {
            row_to_col[col_owner[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// `K × C` contingency counts.
pub fn contingency(assignment: &[usize], truth: &[usize], k: usize, c: usize) -> Result<Vec<Vec<usize>>> {
    if assignment.len() != truth.len() {
        return Err(Error::shape("assignment vs truth", truth.len(), assignment.len()));
    }
    let mut m = vec![vec![0usize; c]; k];
    for (i, (&a, &t)) in assignment.iter().zip(truth).enumerate() {
        if a >= k || t >= c {
            return Err(Error::LabelOutOfRange {
                offset: i,
                label: if a >= k { a as i64 } else { t as i64 },
            });
        }
        m[a][t] += 1;
    }
    Ok(m)
}

fn match_contingency(table: &[Vec<usize>], k: usize, c: usize) -> BTreeMap<usize, usize> {
    let size = k.max(c);
    let max_w = table.iter().flatten().copied().max().unwrap_or(0) as i64;
    let cost: Vec<Vec<i64>> = (0..size)
        .map(|r| {
            (0..size)
                .map(|col| {
                    let w = if r < k && col < c { table[r][col] as i64 } else { 0 };
                    max_w - w
                })
                .collect()
        })
        .collect();
    solve_assignment(&cost)
        .into_iter()
        .enumerate()
        .filter(|&(r, col)| r < k && col < c)
        .collect()
}

pub fn hungarian_accuracy(assignment: &[usize], truth: &[usize], k: usize, c: usize) -> Result<Matching> {
    if assignment.is_empty() {
        return Err(Error::EmptyInput("hungarian_accuracy".into()));
    }
    let table = contingency(assignment, truth, k, c)?;
    let permutation = match_contingency(&table, k, c);
    let correct = permutation.iter().map(|(&r, &col)| table[r][col]).sum();
    Ok(Matching {
        correct,
        total: assignment.len(),
        accuracy: correct as f64 / assignment.len() as f64,
        permutation,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub acc_all: f64,
    /// `None` when no sample has a known class.
    pub acc_known: Option<f64>,
    /// `None` when no sample has a novel class.
    pub acc_new: Option<f64>,
    pub permutation: BTreeMap<usize, usize>,
    /// `K × C` counts.
    pub confusion: Vec<Vec<usize>>,
    pub known_class_count: usize,
    pub samples: usize,
}

/// One matching over all samples, reused for the Known/New splits.
pub fn split_accuracy(assignment: &[usize], truth: &[usize], known_class_count: usize) -> Result<EvalReport> {
    if assignment.is_empty() {
        return Err(Error::EmptyInput("split_accuracy".into()));
    }
    let k = assignment.iter().max().map_or(0, |m| m + 1);
    let c = truth.iter().max().map_or(0, |m| m + 1);
    let matching = hungarian_accuracy(assignment, truth, k, c)?;
    let hit = |i: usize| matching.permutation.get(&assignment[i]) == Some(&truth[i]);
    let split = |known: bool| {
        let idx: Vec<usize> = (0..truth.len())
            .filter(|&i| (truth[i] < known_class_count) == known)
            .collect();
        if idx.is_empty() {
            None
        } else {
            Some(idx.iter().filter(|&&i| hit(i)).count() as f64 / idx.len() as f64)
        }
    };
    Ok(EvalReport {
        acc_all: matching.accuracy,
        acc_known: split(true),
        acc_new: split(false),
        permutation: matching.permutation,
        confusion: contingency(assignment, truth, k, c)?,
        known_class_count,
        samples: assignment.len(),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |a| format!("{a:.4}"))
}

impl EvalReport {
    /// Accuracies in [0,1], injective matching, and `acc_all` between the
    /// two split accuracies when both exist.
    pub fn check_invariants(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        for (name, v) in [
            ("acc_all", Some(self.acc_all)),
            ("acc_known", self.acc_known),
            ("acc_new", self.acc_new),
        ] {
            if let Some(v) = v {
                if !in_unit(v) {
                    return Err(Error::Invariant(format!("{name}={v} outside [0,1]")));
                }
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in self.permutation.values() {
            if !seen.insert(*c) {
                return Err(Error::Invariant(format!("class {c} matched twice")));
            }
        }
        if let (Some(a), Some(b)) = (self.acc_known, self.acc_new) {
            let (lo, hi) = (a.min(b), a.max(b));
            if self.acc_all < lo - 1e-12 || self.acc_all > hi + 1e-12 {
                return Err(Error::Invariant(format!(
                    "acc_all={} outside [{lo}, {hi}]",
                    self.acc_all
                )));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "samples: {}", self.samples);
        let _ = writeln!(s, "known_class_count: {}", self.known_class_count);
        let _ = writeln!(s, "acc_all: {:.4}", self.acc_all);
        let _ = writeln!(s, "acc_known: {}", fmt_opt(self.acc_known));
        let _ = writeln!(s, "acc_new: {}", fmt_opt(self.acc_new));
        let pairs: Vec<String> = self.permutation.iter().map(|(k, v)| format!("{k}->{v}")).collect();
        let _ = writeln!(s, "permutation: {}", pairs.join(" "));
        let _ = writeln!(s, "confusion:");
        for row in &self.confusion {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "  {}", cells.join(","));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        format!(
            "metric,value\nacc_all,{:.4}\nacc_known,{}\nacc_new,{}\n",
            self.acc_all,
            fmt_opt(self.acc_known),
            fmt_opt(self.acc_new)
        )
    }
}
