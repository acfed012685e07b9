//! Exact MAP solvers that do not rely on message convergence.

use crate::error::{Error, Result};
use crate::infer::{CliqueTableSet, InferenceResult};

/// Largest joint state count [`map_bruteforce`] will enumerate.
pub const BRUTEFORCE_LIMIT: f64 = 1e7;

/// Exhaustive enumeration in lexicographic order of candidate positions; the
/// first maximiser wins ties.
pub fn map_bruteforce(tables: &CliqueTableSet) -> Result<InferenceResult> {
    let count = tables.state_count();
    if count > BRUTEFORCE_LIMIT {
        return Err(Error::TooLarge(count));
    }
    let n = tables.n();
    let sizes: Vec<usize> = (0..n).map(|i| tables.candidates().len_of(i)).collect();
    let mut cur = vec![0usize; n];
    let mut best = cur.clone();
    let mut best_score = tables.score(&cur);
    'outer: loop {
        // Odometer increment, last node fastest.
        let mut k = n;
        loop {
            if k == 0 {
                break 'outer;
            }
            k -= 1;
            cur[k] += 1;
            if cur[k] < sizes[k] {
                break;
            }
            cur[k] = 0;
        }
        let s = tables.score(&cur);
        if s > best_score {
            best_score = s;
            best.copy_from_slice(&cur);
        }
    }
    Ok(InferenceResult::from_positions(tables, best, 0, true, false))
}

/// Exact MAP by conditioning on the states of nodes 0 and 1, which turns the
/// loop into a chain solved by dynamic programming. `O(n p^5)`.
pub fn map_conditioned(tables: &CliqueTableSet) -> InferenceResult {
    let (n0, n1, _) = tables.dims(0);
    let mut best: Option<(f64, usize, usize)> = None;
    for x0 in 0..n0 {
        for x1 in 0..n1 {
            let (value, _) = chain(tables, x0, x1, false);
            if best.map_or(true, |(b, _, _)| value > b) {
                best = Some((value, x0, x1));
            }
        }
    }
    let (_, x0, x1) = best.expect("at least one candidate per node");
    let (_, positions) = chain(tables, x0, x1, true);
    InferenceResult::from_positions(tables, positions.expect("traced"), 0, true, false)
}

/// Best total with nodes 0 and 1 fixed; optionally traces the maximiser.
fn chain(t: &CliqueTableSet, x0: usize, x1: usize, trace: bool) -> (f64, Option<Vec<usize>>) {
    let n = t.n();
    // w holds the best partial score over (node i+1, node i+2) after clique i.
    let (_, n1, nc) = t.dims(0);
    let mut w = vec![f64::NEG_INFINITY; n1 * nc];
    for c in 0..nc {
        w[x1 * nc + c] = t.entry(0, x0, x1, c);
    }
    let mut back: Vec<Vec<usize>> = Vec::new();
    for i in 1..n - 2 {
        let (na, nb, nc) = t.dims(i);
        let table = t.table(i);
        let mut next = vec![f64::NEG_INFINITY; nb * nc];
        let mut arg = if trace { vec![0usize; nb * nc] } else { Vec::new() };
        for a in 0..na {
            for b in 0..nb {
                let base = w[a * nb + b];
                if base == f64::NEG_INFINITY {
                    continue;
                }
                let row = &table[(a * nb + b) * nc..(a * nb + b + 1) * nc];
                for c in 0..nc {
                    let v = base + row[c];
                    if v > next[b * nc + c] {
                        next[b * nc + c] = v;
                        if trace {
                            arg[b * nc + c] = a;
                        }
                    }
                }
            }
        }
        w = next;
        if trace {
            back.push(arg);
        }
    }
    // Close the loop with cliques n-2 = (n-2, n-1, 0) and n-1 = (n-1, 0, 1).
    let (na, nb, _) = t.dims(n - 2);
    let mut best = f64::NEG_INFINITY;
    let mut best_ab = (0, 0);
    for a in 0..na {
        for b in 0..nb {
            let base = w[a * nb + b];
            if base == f64::NEG_INFINITY {
                continue;
            }
            let v = base + t.entry(n - 2, a, b, x0) + t.entry(n - 1, b, x0, x1);
            if v > best {
                best = v;
                best_ab = (a, b);
            }
        }
    }
    if !trace {
        return (best, None);
    }
    let mut pos = vec![0usize; n];
    pos[0] = x0;
    pos[1] = x1;
    pos[n - 2] = best_ab.0;
    pos[n - 1] = best_ab.1;
    // back[k] belongs to clique k+1 and maps (node k+2, node k+3) to node k+1.
    for k in (0..back.len()).rev() {
        let (_, _, nc) = t.dims(k + 1);
        pos[k + 1] = back[k][pos[k + 2] * nc + pos[k + 3]];
    }
    (best, Some(pos))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::infer::CandidateSets;

    fn random_tables(rng: &mut ChaCha8Rng, n: usize, pmax: usize) -> CliqueTableSet {
        let sizes: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=pmax)).collect();
        let c = CandidateSets::ranges(&sizes).unwrap();
        let tables = (0..n)
            .map(|i| {
                let len = sizes[i] * sizes[(i + 1) % n] * sizes[(i + 2) % n];
                (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
            })
            .collect();
        CliqueTableSet::new(c, tables).unwrap()
    }

    #[test]
    fn conditioned_matches_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let n = rng.gen_range(3..=7);
            let t = random_tables(&mut rng, n, 4);
            let a = map_bruteforce(&t).unwrap();
            let b = map_conditioned(&t);
            assert_eq!(a.positions, b.positions);
            assert_eq!(a.objective, b.objective);
        }
    }

    #[test]
    fn single_assignment() {
        let c = CandidateSets::ranges(&[1, 1, 1, 1]).unwrap();
        let t = CliqueTableSet::new(c, vec![vec![0.5]; 4]).unwrap();
        let r = map_bruteforce(&t).unwrap();
        assert_eq!(r.positions, vec![0, 0, 0, 0]);
        assert_eq!(r.objective, 2.0);
    }

    #[test]
    fn bruteforce_guard() {
        let c = CandidateSets::ranges(&[10; 8]).unwrap();
        let t = CliqueTableSet::new(c, vec![vec![0.0; 1000]; 8]).unwrap();
        assert!(matches!(map_bruteforce(&t), Err(Error::TooLarge(_))));
    }
}
