//! Max-sum message passing around the clique loop.
//!
//! Clique `i` sends `f_i(b, c) = max_a T_i(a, b, c) + f_{i-1}(a, b)` forward
//! over the separator (nodes `i+1, i+2`) and `g_i(a, b) = max_c T_i(a, b, c) +
//! g_{i+1}(b, c)` backward over nodes `(i, i+1)`. Every message is shifted so
//! its maximum is zero.
//!
//! The forward shifts summed over one sweep, plus the largest increase of
//! the message that closes the loop, bound the max-plus eigenvalue of the
//! loop operator, and that eigenvalue bounds the MAP score from above. A
//! decoded assignment reaching the bound is therefore optimal; otherwise
//! the exact conditioned solver takes over.

use crate::infer::exact::{map_bruteforce, map_conditioned, BRUTEFORCE_LIMIT};
use crate::infer::{CliqueTableSet, InferenceResult};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopyOptions {
    pub max_iters: usize,
    /// Stop once no message entry moves by `tol` or more in a sweep.
    pub tol: f64,
    /// Fall back to [`map_conditioned`] when the decode cannot be certified.
    pub fallback: bool,
    /// Also stop as soon as the decode after a sweep is certified optimal.
    pub stop_when_certified: bool,
}

impl Default for LoopyOptions {
    fn default() -> Self {
        LoopyOptions {
            max_iters: 20,
            tol: 1e-9,
            fallback: true,
            stop_when_certified: true,
        }
    }
}

/// Message state for one table set. Exposed so callers can time sweeps.
#[derive(Debug, Clone)]
pub struct MessagePassing<'a> {
    tables: &'a CliqueTableSet,
    fwd: Vec<Vec<f64>>,
    bwd: Vec<Vec<f64>>,
    /// Sum of forward shifts in the last sweep.
    shift: f64,
    /// Largest increase of the loop-closing forward message in the last sweep.
    closing_rise: f64,
}

impl<'a> MessagePassing<'a> {
    pub fn new(tables: &'a CliqueTableSet) -> Self {
        let n = tables.n();
        let fwd = (0..n)
            .map(|i| {
                let (_, nb, nc) = tables.dims(i);
                vec![0.0; nb * nc]
            })
            .collect();
        let bwd = (0..n)
            .map(|i| {
                let (na, nb, _) = tables.dims(i);
                vec![0.0; na * nb]
            })
            .collect();
        MessagePassing {
            tables,
            fwd,
            bwd,
            shift: 0.0,
            closing_rise: f64::INFINITY,
        }
    }

    /// One forward and one backward pass. Returns the largest absolute
    /// change of any message entry.
    pub fn sweep(&mut self) -> f64 {
        let t = self.tables;
        let n = t.n();
        let mut change = 0.0f64;
        let mut shift = 0.0;

        for i in 0..n {
            let (na, nb, nc) = t.dims(i);
            let table = t.table(i);
            let prev = &self.fwd[(i + n - 1) % n];
            let mut out = vec![f64::NEG_INFINITY; nb * nc];
            for a in 0..na {
                for b in 0..nb {
                    let base = prev[a * nb + b];
                    let row = &table[(a * nb + b) * nc..(a * nb + b + 1) * nc];
                    let dst = &mut out[b * nc..(b + 1) * nc];
                    for (d, r) in dst.iter_mut().zip(row) {
                        let v = base + r;
                        if v > *d {
                            *d = v;
                        }
                    }
                }
            }
            let top = normalise(&mut out);
            shift += top;
            let old = &self.fwd[i];
            if i == n - 1 {
                self.closing_rise = out
                    .iter()
                    .zip(old)
                    .fold(f64::NEG_INFINITY, |acc, (x, y)| acc.max(x - y));
            }
            change = change.max(max_abs_diff(&out, old));
            self.fwd[i] = out;
        }

        for i in (0..n).rev() {
            let (na, nb, nc) = t.dims(i);
            let table = t.table(i);
            let next = &self.bwd[(i + 1) % n];
            let mut out = vec![f64::NEG_INFINITY; na * nb];
            for a in 0..na {
                for b in 0..nb {
                    let row = &table[(a * nb + b) * nc..(a * nb + b + 1) * nc];
                    let msg = &next[b * nc..(b + 1) * nc];
                    let best = row
                        .iter()
                        .zip(msg)
                        .fold(f64::NEG_INFINITY, |acc, (r, m)| acc.max(r + m));
                    out[a * nb + b] = best;
                }
            }
            normalise(&mut out);
            change = change.max(max_abs_diff(&out, &self.bwd[i]));
            self.bwd[i] = out;
        }

        self.shift = shift;
        change
    }

    /// Upper bound on the best total score implied by the last sweep.
    pub fn upper_bound(&self) -> f64 {
        self.shift + self.closing_rise
    }

    /// Per-clique belief maximisation, lowest index first on ties. Node `i`
    /// takes the value chosen by clique `i`; the flag reports whether every
    /// clique agrees with those values on its other two nodes.
    pub fn decode(&self) -> (Vec<usize>, bool) {
        let t = self.tables;
        let n = t.n();
        let mut picks = Vec::with_capacity(n);
        for i in 0..n {
            let (na, nb, nc) = t.dims(i);
            let table = t.table(i);
            let fin = &self.fwd[(i + n - 1) % n];
            let bin = &self.bwd[(i + 1) % n];
            let mut best = f64::NEG_INFINITY;
            let mut arg = (0, 0, 0);
            for a in 0..na {
                for b in 0..nb {
                    let base = fin[a * nb + b];
                    for c in 0..nc {
                        let v = table[(a * nb + b) * nc + c] + base + bin[b * nc + c];
                        if v > best {
                            best = v;
                            arg = (a, b, c);
                        }
                    }
                }
            }
            picks.push(arg);
        }
        let positions: Vec<usize> = picks.iter().map(|p| p.0).collect();
        let consistent = picks
            .iter()
            .enumerate()
            .all(|(i, p)| p.1 == positions[(i + 1) % n] && p.2 == positions[(i + 2) % n]);
        (positions, consistent)
    }
}

fn normalise(v: &mut [f64]) -> f64 {
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    v.iter_mut().for_each(|x| *x -= top);
    top
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// MAP assignment by loopy max-sum with an optimality check. With
/// `fallback` set the result is always exact.
pub fn map_loopy(tables: &CliqueTableSet, opts: &LoopyOptions) -> InferenceResult {
    if tables.n() < 4 {
        return if tables.state_count() <= BRUTEFORCE_LIMIT {
            map_bruteforce(tables).expect("within the enumeration limit")
        } else {
            map_conditioned(tables)
        };
    }
    let slack = 1e-12 * tables.n() as f64 * (1.0 + tables.magnitude());
    let mut mp = MessagePassing::new(tables);
    let mut iterations = 0;
    let mut converged = false;
    let mut decoded = None;
    while iterations < opts.max_iters {
        let change = mp.sweep();
        iterations += 1;
        if change < opts.tol {
            converged = true;
            break;
        }
        if opts.stop_when_certified {
            let (positions, consistent) = mp.decode();
            let objective = tables.score(&positions);
            if consistent && objective >= mp.upper_bound() - slack {
                decoded = Some((positions, objective, true));
                converged = true;
                break;
            }
        }
    }

    let (positions, objective, certified) = decoded.unwrap_or_else(|| {
        let (positions, consistent) = mp.decode();
        let objective = tables.score(&positions);
        let certified = iterations > 0 && consistent && objective >= mp.upper_bound() - slack;
        (positions, objective, certified)
    });
    if certified || !opts.fallback {
        return InferenceResult {
            assignment: tables.candidates().to_assignment(&positions),
            positions,
            objective,
            iterations,
            converged,
            fallback: false,
        };
    }
    let mut r = map_conditioned(tables);
    r.iterations = iterations;
    r.converged = converged;
    r.fallback = true;
    r
}
