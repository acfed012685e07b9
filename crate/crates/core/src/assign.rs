//! Linear assignment for the unary (stage-1) model.
//!
//! [`solve_lap`] maximises the total score of an injective map from rows to
//! columns with `rows <= cols`. The shortest-augmenting-path Hungarian method
//! runs directly on the rectangular matrix. Among optimal assignments the
//! lexicographically smallest is returned: the dual potentials identify
//! which entries can appear in any optimum, and only rows with a tight entry
//! left of their current column are re-solved.

use crate::error::{Error, Result};
use crate::features::collapse_unary;
use crate::learn::loss::NodeLoss;
use crate::types::{Assignment, Scene, TemplateShape};

/// Dense score matrix (to be maximised), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("cost matrix entries must be finite".into()));
        }
        Ok(CostMatrix { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidConfig("ragged cost matrix".into()));
        }
        CostMatrix::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Total score of `assignment`, summed in row order.
    pub fn score(&self, assignment: &Assignment) -> f64 {
        assignment
            .as_slice()
            .iter()
            .enumerate()
            .map(|(r, &c)| self.get(r, c))
            .sum()
    }
}

struct Solution {
    row_to_col: Vec<usize>,
    u: Vec<f64>,
    v: Vec<f64>,
}

/// Minimum-cost Hungarian method on `n x m` costs with `n <= m`.
/// Potentials satisfy `u[i] + v[j] <= cost(i, j)` with equality on the
/// matching, and `v[j] = 0` on unmatched columns.
fn hungarian(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Solution {
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut matched = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![inf; m + 1];
    let mut used = vec![false; m + 1];

    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = inf);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    for j in 1..=m {
        if matched[j] > 0 {
            row_to_col[matched[j] - 1] = j - 1;
        }
    }
    Solution {
        row_to_col,
        u: u[1..].to_vec(),
        v: v[1..].to_vec(),
    }
}

/// Best completion of rows `fixed.len()..` given the first rows fixed.
fn solve_with_prefix(costs: &CostMatrix, fixed: &[usize]) -> Vec<usize> {
    let n = costs.rows;
    let mut used = vec![false; costs.cols];
    for &c in fixed {
        used[c] = true;
    }
    let free_cols: Vec<usize> = (0..costs.cols).filter(|&c| !used[c]).collect();
    let free_rows = n - fixed.len();
    let mut out = fixed.to_vec();
    if free_rows > 0 {
        let base = fixed.len();
        let sol = hungarian(free_rows, free_cols.len(), |r, c| {
            -costs.get(base + r, free_cols[c])
        });
        out.extend(sol.row_to_col.iter().map(|&c| free_cols[c]));
    }
    out
}

/// Maximum-score injective assignment of rows to columns, lexicographically
/// smallest among ties.
pub fn solve_lap(costs: &CostMatrix) -> Result<Assignment> {
    let (n, m) = (costs.rows, costs.cols);
    if n > m {
        return Err(Error::InvalidConfig(format!(
            "cannot assign {n} rows injectively to {m} columns"
        )));
    }
    if n == 0 {
        return Ok(Assignment::from_vec_unchecked(Vec::new()));
    }
    let sol = hungarian(n, m, |r, c| -costs.get(r, c));
    let scale = 1.0 + costs.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let entry_tol = 1e-9 * scale;
    let total_tol = 1e-9 * scale * n as f64;

    let tight = |r: usize, c: usize| (-costs.get(r, c) - sol.u[r] - sol.v[c]).abs() <= entry_tol;
    let mut current = sol.row_to_col.clone();
    let best = costs.score(&Assignment::from_vec_unchecked(current.clone()));

    for r in 0..n {
        let mut taken = vec![false; m];
        for &c in &current[..r] {
            taken[c] = true;
        }
        for c in 0..current[r] {
            if taken[c] || !tight(r, c) {
                continue;
            }
            let mut prefix = current[..r].to_vec();
            prefix.push(c);
            let candidate = solve_with_prefix(costs, &prefix);
            let value = costs.score(&Assignment::from_vec_unchecked(candidate.clone()));
            if value >= best - total_tol {
                current = candidate;
                break;
            }
        }
    }
    Ok(Assignment::from_vec_unchecked(current))
}

/// Stage-1 scores: entry `(i, u)` is `-<theta0, phi0(s_i, u)>`, plus the
/// node loss when augmenting.
pub fn unary_scores(
    template: &TemplateShape,
    target: &Scene,
    theta0: &[f64],
    augment: Option<&NodeLoss<'_>>,
) -> Result<CostMatrix> {
    let n = template.len();
    let m = target.len();
    let mut values = Vec::with_capacity(n * m);
    for i in 0..n {
        let s = template.descriptor(i)?;
        for u in 0..m {
            let mut v = -collapse_unary(theta0, s, target.require_descriptor(u)?)?;
            if let Some(loss) = augment {
                v += loss.node(i, u);
            }
            values.push(v);
        }
    }
    CostMatrix::new(n, m, values)
}
