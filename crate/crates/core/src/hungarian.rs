//! Minimum-cost bipartite assignment via the potentials / augmenting-path method.
//!
//! Solves `min Σ cost[i][j]` over all maximum-cardinality matchings of an
//! `M×K` cost matrix in `O(min² · max)` time. Entries of `+∞` mark forbidden
//! pairs: internally they are clamped to a large finite sentinel so the solver
//! still produces a complete matching, and any pair whose cost reaches the
//! sentinel range is dropped from the public result.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Internal sentinel replacing `+∞` costs so potentials stay finite.
const BIG: f64 = 1e15;

/// Pairs with an input cost at or above this threshold are treated as forbidden.
pub const FORBIDDEN_THRESHOLD: f64 = BIG / 2.0;

/// Validates and clamps a cost matrix: `+∞` becomes [`BIG`], other non-finite
/// values are rejected.
fn clamped(cost: &Array2<f64>) -> Result<Array2<f64>> {
    let mut out = cost.clone();
    for value in out.iter_mut() {
        if value.is_nan() || *value == f64::NEG_INFINITY {
            return Err(Error::Invalid(
                "assignment cost matrix entries must be finite or +inf".into(),
            ));
        }
        if *value > BIG {
            *value = BIG;
        }
    }
    Ok(out)
}

/// Core solver for a matrix with `rows ≤ cols`; returns `(row, col)` pairs for
/// every row, sorted by row index.
fn solve_wide(a: &Array2<f64>) -> Vec<(usize, usize)> {
    let n = a.nrows();
    let m = a.ncols();
    debug_assert!(n <= m);
    // Potentials u (rows) and v (columns); p[j] is the 1-based row matched to
    // column j (0 = unmatched). Index 0 is a virtual slot used while growing
    // the alternating tree.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a[[i0 - 1, j - 1]] - u[i0] - v[j];
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
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        // Augment along the path recorded in `way`.
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| p[j] != 0)
        .map(|j| (p[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Complete minimum-cost matching of size `min(M, K)`, including pairs that
/// land on forbidden (`+∞`) entries. Sorted by row index.
pub fn hungarian_full(cost: &Array2<f64>) -> Result<Vec<(usize, usize)>> {
    if cost.nrows() == 0 || cost.ncols() == 0 {
        return Ok(Vec::new());
    }
    let a = clamped(cost)?;
    if a.nrows() <= a.ncols() {
        Ok(solve_wide(&a))
    } else {
        let mut pairs: Vec<(usize, usize)> = solve_wide(&a.t().to_owned())
            .into_iter()
            .map(|(j, i)| (i, j))
            .collect();
        pairs.sort_unstable();
        Ok(pairs)
    }
}

/// Minimum-cost matching with forbidden pairs removed: pairs whose input cost
/// is at least [`FORBIDDEN_THRESHOLD`] do not appear in the result. Sorted by
/// row index; deterministic for a given matrix.
pub fn hungarian(cost: &Array2<f64>) -> Result<Vec<(usize, usize)>> {
    let pairs = hungarian_full(cost)?;
    Ok(pairs
        .into_iter()
        .filter(|&(i, j)| cost[[i, j]] < FORBIDDEN_THRESHOLD)
        .collect())
}

/// Total clamped cost of a set of pairs, using the same `+∞ → sentinel`
/// clamping as the solver. Used by tests and diagnostics.
pub fn matching_cost(cost: &Array2<f64>, pairs: &[(usize, usize)]) -> f64 {
    pairs
        .iter()
        .map(|&(i, j)| cost[[i, j]].min(BIG))
        .sum()
}
