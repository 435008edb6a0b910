//! Exact rectangular assignment (shortest augmenting path Hungarian method)
//! and the maximum-weight partial matching built on it.

use std::ops::{Add, Sub};

/// Cost type for [`min_cost_assignment`]: an ordered additive group.
pub trait AssignmentCost: Copy + PartialOrd + Add<Output = Self> + Sub<Output = Self> {
    const ZERO: Self;
    const INFINITY: Self;
}

impl AssignmentCost for f64 {
    const ZERO: Self = 0.0;
    const INFINITY: Self = f64::INFINITY;
}

/// Two costs compared lexicographically, added componentwise.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Lex(pub f64, pub f64);

impl Add for Lex {
    type Output = Lex;
    fn add(self, rhs: Lex) -> Lex {
        Lex(self.0 + rhs.0, self.1 + rhs.1)
    }
}

impl Sub for Lex {
    type Output = Lex;
    fn sub(self, rhs: Lex) -> Lex {
        Lex(self.0 - rhs.0, self.1 - rhs.1)
    }
}

impl AssignmentCost for Lex {
    const ZERO: Self = Lex(0.0, 0.0);
    const INFINITY: Self = Lex(f64::INFINITY, f64::INFINITY);
}

/// Minimum-cost assignment of every row to a distinct column; requires
/// `rows <= cols`. Returns the column of each row.
pub fn min_cost_assignment<C: AssignmentCost>(cost: &[Vec<C>], cols: usize) -> Vec<usize> {
    let n = cost.len();
    assert!(n <= cols, "min_cost_assignment needs rows <= cols");
    let m = cols;
    let mut u = vec![C::ZERO; n + 1];
    let mut v = vec![C::ZERO; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![C::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = C::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
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
            for j in 0..=m {
                if used[j] {
                    u[p[j]] = u[p[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// (row, column) pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    /// Sum of matched weights, accumulated in row order.
    pub total: f64,
}

/// Maximum-weight one-to-one partial matching over non-negative weights;
/// zero-weight pairs are excluded.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> Matching {
    max_weight_assignment_with_tiebreak(weights, None)
}

/// As [`max_weight_assignment`]; among optimal matchings, prefers the one with
/// the smallest total `secondary` (e.g. date distance).
pub fn max_weight_assignment_with_tiebreak(weights: &[Vec<f64>], secondary: Option<&[Vec<f64>]>) -> Matching {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Matching { pairs: Vec::new(), total: 0.0 };
    }
    debug_assert!(weights.iter().all(|r| r.len() == cols));
    let second = |i: usize, j: usize| secondary.map_or(0.0, |s| s[i][j]);
    let transpose = rows > cols;
    let (n, m) = if transpose { (cols, rows) } else { (rows, cols) };
    let cost: Vec<Vec<Lex>> = (0..n)
        .map(|a| {
            (0..m)
                .map(|b| {
                    let (i, j) = if transpose { (b, a) } else { (a, b) };
                    Lex(-weights[i][j], second(i, j))
                })
                .collect()
        })
        .collect();
    let assignment = min_cost_assignment(&cost, m);
    let mut pairs: Vec<(usize, usize)> = assignment
        .iter()
        .enumerate()
        .map(|(a, &b)| if transpose { (b, a) } else { (a, b) })
        .filter(|&(i, j)| weights[i][j] > 0.0)
        .collect();
    pairs.sort_unstable();
    let total = pairs.iter().map(|&(i, j)| weights[i][j]).sum();
    Matching { pairs, total }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Best total over every partial matching, by recursion over rows.
    fn brute_force(w: &[Vec<f64>]) -> f64 {
        fn go(w: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64) -> f64 {
            if row == w.len() {
                return acc;
            }
            let mut best = go(w, row + 1, used, acc);
            for j in 0..used.len() {
                if !used[j] && w[row][j] > 0.0 {
                    used[j] = true;
                    best = best.max(go(w, row + 1, used, acc + w[row][j]));
                    used[j] = false;
                }
            }
            best
        }
        let cols = w.first().map_or(0, Vec::len);
        go(w, 0, &mut vec![false; cols], 0.0)
    }

    #[test]
    fn one_by_one() {
        let m = max_weight_assignment(&[vec![0.5]]);
        assert_eq!(m.pairs, [(0, 0)]);
        assert_eq!(m.total, 0.5);
    }

    #[test]
    fn zero_matrix_gives_empty_matching() {
        let m = max_weight_assignment(&[vec![0.0, 0.0], vec![0.0, 0.0]]);
        assert!(m.pairs.is_empty());
        assert_eq!(m.total, 0.0);
    }

    #[test]
    fn empty_inputs() {
        assert!(max_weight_assignment(&[]).pairs.is_empty());
        assert!(max_weight_assignment(&[vec![], vec![]]).pairs.is_empty());
    }

    #[test]
    fn greedy_trap() {
        // Greedy takes 0.9 and is left with 0.1; optimum is 0.8 + 0.8.
        let m = max_weight_assignment(&[vec![0.9, 0.8], vec![0.8, 0.1]]);
        assert_eq!(m.pairs, [(0, 1), (1, 0)]);
        assert!((m.total - 1.6).abs() < 1e-12);
    }

    #[test]
    fn tiebreak_prefers_smaller_secondary() {
        let w = vec![vec![1.0, 1.0]];
        let s = vec![vec![5.0, 1.0]];
        assert_eq!(max_weight_assignment_with_tiebreak(&w, Some(&s)).pairs, [(0, 1)]);
        let s = vec![vec![1.0, 5.0]];
        assert_eq!(max_weight_assignment_with_tiebreak(&w, Some(&s)).pairs, [(0, 0)]);
    }

    #[test]
    fn matches_brute_force_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let r = rng.gen_range(1..=6);
            let c = rng.gen_range(1..=6);
            let w: Vec<Vec<f64>> = (0..r)
                .map(|_| {
                    (0..c)
                        .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen::<f64>() })
                        .collect()
                })
                .collect();
            let m = max_weight_assignment(&w);
            assert_eq!(m.total, brute_force(&w), "{w:?}");
            let mut rows: Vec<_> = m.pairs.iter().map(|p| p.0).collect();
            let mut cols: Vec<_> = m.pairs.iter().map(|p| p.1).collect();
            rows.dedup();
            cols.sort_unstable();
            cols.dedup();
            assert_eq!(rows.len(), m.pairs.len());
            assert_eq!(cols.len(), m.pairs.len());
        }
    }
}
