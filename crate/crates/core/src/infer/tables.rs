use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::CliqueContext;
use crate::learn::loss::NodeLoss;
use crate::types::{Assignment, Scene, TemplateShape};

/// Per-template-point candidate target indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSets {
    lists: Vec<Vec<usize>>,
}

impl CandidateSets {
    pub fn new(lists: Vec<Vec<usize>>) -> Result<Self> {
        for (i, list) in lists.iter().enumerate() {
            if list.is_empty() {
                return Err(Error::InvalidConfig(format!("node {i} has no candidates")));
            }
            let mut sorted = list.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidConfig(format!("node {i} has duplicate candidates")));
            }
        }
        Ok(CandidateSets { lists })
    }

    /// Every target index `0..m` for each of `n` nodes.
    pub fn full(n: usize, m: usize) -> Self {
        CandidateSets {
            lists: vec![(0..m).collect(); n],
        }
    }

    /// `0..sizes[i]` for node `i`; used for tables that are not tied to a
    /// scene.
    pub fn ranges(sizes: &[usize]) -> Result<Self> {
        CandidateSets::new(sizes.iter().map(|&s| (0..s).collect()).collect())
    }

    pub fn n(&self) -> usize {
        self.lists.len()
    }

    pub fn list(&self, i: usize) -> &[usize] {
        &self.lists[i]
    }

    pub fn len_of(&self, i: usize) -> usize {
        self.lists[i].len()
    }

    pub fn lists(&self) -> &[Vec<usize>] {
        &self.lists
    }

    /// Ensures `gt[i]` is a candidate of node `i`, replacing the last-ranked
    /// candidate when it is missing.
    pub fn inject(&mut self, gt: &Assignment) {
        for (list, &truth) in self.lists.iter_mut().zip(gt.as_slice()) {
            if !list.contains(&truth) {
                *list.last_mut().expect("nonempty") = truth;
            }
        }
    }

    /// Fraction of nodes whose ground-truth target is a candidate.
    pub fn recall(&self, gt: &Assignment) -> f64 {
        let hits = self
            .lists
            .iter()
            .zip(gt.as_slice())
            .filter(|(l, t)| l.contains(t))
            .count();
        hits as f64 / self.lists.len().max(1) as f64
    }

    pub fn contains(&self, gt: &Assignment) -> bool {
        self.recall(gt) == 1.0
    }

    /// Candidate positions of `assignment`, if every entry is a candidate.
    pub fn positions_of(&self, assignment: &Assignment) -> Option<Vec<usize>> {
        self.lists
            .iter()
            .zip(assignment.as_slice())
            .map(|(l, u)| l.iter().position(|c| c == u))
            .collect()
    }

    pub fn to_assignment(&self, positions: &[usize]) -> Assignment {
        Assignment::from_vec_unchecked(
            positions
                .iter()
                .enumerate()
                .map(|(i, &k)| self.lists[i][k])
                .collect(),
        )
    }
}

/// Clique log-potentials over candidate positions. Table `i` is indexed by
/// the candidates of nodes `(i, i+1, i+2)` (cyclic), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CliqueTableSet {
    candidates: CandidateSets,
    tables: Vec<Vec<f64>>,
}

impl CliqueTableSet {
    pub fn new(candidates: CandidateSets, tables: Vec<Vec<f64>>) -> Result<Self> {
        let n = candidates.n();
        if n < 3 {
            return Err(Error::InvalidConfig(format!("need at least 3 nodes, got {n}")));
        }
        if tables.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: tables.len(),
            });
        }
        for (i, t) in tables.iter().enumerate() {
            let want = candidates.len_of(i)
                * candidates.len_of((i + 1) % n)
                * candidates.len_of((i + 2) % n);
            if t.len() != want {
                return Err(Error::DimensionMismatch {
                    expected: want,
                    found: t.len(),
                });
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!("table {i} has a non-finite entry")));
            }
        }
        Ok(CliqueTableSet { candidates, tables })
    }

    pub fn n(&self) -> usize {
        self.tables.len()
    }

    pub fn candidates(&self) -> &CandidateSets {
        &self.candidates
    }

    pub fn table(&self, i: usize) -> &[f64] {
        &self.tables[i]
    }

    /// Candidate counts of the three nodes of clique `i`.
    pub fn dims(&self, i: usize) -> (usize, usize, usize) {
        let n = self.n();
        (
            self.candidates.len_of(i),
            self.candidates.len_of((i + 1) % n),
            self.candidates.len_of((i + 2) % n),
        )
    }

    pub fn entry(&self, i: usize, a: usize, b: usize, c: usize) -> f64 {
        let (_, nb, nc) = self.dims(i);
        self.tables[i][(a * nb + b) * nc + c]
    }

    /// Sum of table entries along a full assignment of candidate positions,
    /// accumulated in clique order.
    pub fn score(&self, positions: &[usize]) -> f64 {
        let n = self.n();
        (0..n)
            .map(|i| self.entry(i, positions[i], positions[(i + 1) % n], positions[(i + 2) % n]))
            .sum()
    }

    /// Number of joint assignments.
    pub fn state_count(&self) -> f64 {
        self.candidates
            .lists()
            .iter()
            .map(|l| l.len() as f64)
            .product()
    }

    /// Adds `kappa` to every entry.
    pub fn shifted(&self, kappa: f64) -> CliqueTableSet {
        CliqueTableSet {
            candidates: self.candidates.clone(),
            tables: self
                .tables
                .iter()
                .map(|t| t.iter().map(|v| v + kappa).collect())
                .collect(),
        }
    }

    /// Largest absolute entry.
    pub fn magnitude(&self) -> f64 {
        self.tables
            .iter()
            .flatten()
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }
}

/// For each template point, the `p` targets with the smallest
/// `<theta0, phi0>`; ties go to the lower target index.
pub fn prune_candidates(
    template: &TemplateShape,
    target: &Scene,
    theta0: &[f64],
    p: usize,
) -> Result<CandidateSets> {
    if p == 0 {
        return Err(Error::InvalidConfig("p must be at least 1".into()));
    }
    let unary = crate::features::collapsed_unary_matrix(template, target, theta0)?;
    Ok(prune_from_matrix(&unary, template.len(), target.len(), p))
}

pub(crate) fn prune_from_matrix(unary: &[f64], n: usize, m: usize, p: usize) -> CandidateSets {
    let lists = (0..n)
        .map(|i| {
            let row = &unary[i * m..(i + 1) * m];
            let mut idx: Vec<usize> = (0..m).collect();
            idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
            idx.truncate(p);
            idx
        })
        .collect();
    CandidateSets { lists }
}

/// Builds `table_i[a][b][c] = -<theta, phi(clique i; a, b, c)>` over the
/// candidates, adding node `i`'s loss term when augmenting. `theta` and
/// `scale_factors` are indexed by the context's active groups.
pub fn build_tables(
    ctx: &CliqueContext<'_>,
    theta: &[f64],
    scale_factors: &[f64],
    candidates: &CandidateSets,
    augment: Option<&NodeLoss<'_>>,
) -> Result<CliqueTableSet> {
    let g = ctx.groups().len();
    if theta.len() != g || scale_factors.len() != g {
        return Err(Error::DimensionMismatch {
            expected: g,
            found: theta.len().min(scale_factors.len()),
        });
    }
    let n = ctx.n();
    if candidates.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: candidates.n(),
        });
    }
    let m = ctx.target().len();
    if candidates.lists().iter().flatten().any(|&u| u >= m) {
        return Err(Error::InvalidConfig("candidate index out of range".into()));
    }
    let weights: Vec<f64> = theta.iter().zip(scale_factors).map(|(t, s)| t * s).collect();

    let tables: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let la = candidates.list(i);
            let lb = candidates.list((i + 1) % n);
            let lc = candidates.list((i + 2) % n);
            let mut table = Vec::with_capacity(la.len() * lb.len() * lc.len());
            let mut raw = vec![0.0; g];
            for &a in la {
                let loss = augment.map_or(0.0, |l| l.node(i, a));
                for &b in lb {
                    for &c in lc {
                        ctx.raw_into(i, a, b, c, &mut raw);
                        let dot: f64 = raw.iter().zip(&weights).map(|(r, w)| r * w).sum();
                        table.push(loss - dot);
                    }
                }
            }
            table
        })
        .collect();
    CliqueTableSet::new(candidates.clone(), tables)
}
