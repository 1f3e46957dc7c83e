//! Maximum-weight one-to-one assignment on a dense rectangular matrix
//! (Hungarian method with potentials, O(n²m)).

/// For each row, the column it is assigned to, or `None` when there are
/// more rows than columns and the row is left out. Maximizes the sum of
/// `weights[row][col]` over assigned pairs.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    if rows > cols {
        let transposed: Vec<Vec<f64>> = (0..cols).map(|c| (0..rows).map(|r| weights[r][c]).collect()).collect();
        let by_col = max_weight_assignment(&transposed);
        let mut out = vec![None; rows];
        for (c, r) in by_col.into_iter().enumerate() {
            if let Some(r) = r {
                out[r] = Some(c);
            }
        }
        return out;
    }

    // 1-based arrays; column 0 is a virtual source.
    let cost = |r: usize, c: usize| -weights[r - 1][c - 1];
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for r in 1..=rows {
        owner[0] = r;
        let mut c0 = 0;
        let mut min_to = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[c0] = true;
            let r0 = owner[c0];
            let mut delta = f64::INFINITY;
            let mut c1 = 0;
            for c in 1..=cols {
                if used[c] {
                    continue;
                }
                let reduced = cost(r0, c) - u[r0] - v[c];
                if reduced < min_to[c] {
                    min_to[c] = reduced;
                    way[c] = c0;
                }
                if min_to[c] < delta {
                    delta = min_to[c];
                    c1 = c;
                }
            }
            for c in 0..=cols {
                if used[c] {
                    u[owner[c]] += delta;
                    v[c] -= delta;
                } else {
                    min_to[c] -= delta;
                }
            }
            c0 = c1;
            if owner[c0] == 0 {
                break;
            }
        }
        loop {
            let c1 = way[c0];
            owner[c0] = owner[c1];
            c0 = c1;
            if c0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; rows];
    for c in 1..=cols {
        if owner[c] != 0 {
            out[owner[c] - 1] = Some(c - 1);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn total(w: &[Vec<f64>], a: &[Option<usize>]) -> f64 {
        a.iter().enumerate().filter_map(|(r, c)| c.map(|c| w[r][c])).sum()
    }

    /// Exhaustive maximum over injective maps from the smaller side.
    fn brute(w: &[Vec<f64>]) -> f64 {
        fn go(w: &[Vec<f64>], r: usize, used: &mut Vec<bool>) -> f64 {
            if r == w.len() {
                return 0.0;
            }
            let mut best = go(w, r + 1, used);
            for c in 0..used.len() {
                if !used[c] {
                    used[c] = true;
                    best = best.max(w[r][c] + go(w, r + 1, used));
                    used[c] = false;
                }
            }
            best
        }
        let cols = w.first().map_or(0, Vec::len);
        go(w, 0, &mut vec![false; cols])
    }

    #[test]
    fn small_square() {
        let w = vec![vec![1.0, 2.0], vec![3.0, 1.0]];
        assert_eq!(max_weight_assignment(&w), vec![Some(1), Some(0)]);
    }

    #[test]
    fn rectangular_both_ways() {
        let w = vec![vec![0.1, 0.9, 0.3]];
        assert_eq!(max_weight_assignment(&w), vec![Some(1)]);
        let w = vec![vec![0.1], vec![0.9], vec![0.3]];
        assert_eq!(max_weight_assignment(&w), vec![None, Some(0), None]);
    }

    #[test]
    fn empty() {
        assert!(max_weight_assignment(&[]).is_empty());
        assert_eq!(max_weight_assignment(&[vec![], vec![]]), vec![None, None]);
    }

    proptest! {
        #[test]
        fn equals_brute_force(rows in 1usize..=6, cols in 1usize..=6, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let w: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
            let a = max_weight_assignment(&w);
            let mut cols_used: Vec<usize> = a.iter().flatten().copied().collect();
            prop_assert_eq!(cols_used.len(), rows.min(cols));
            cols_used.sort_unstable();
            cols_used.dedup();
            prop_assert_eq!(cols_used.len(), rows.min(cols));
            prop_assert!((total(&w, &a) - brute(&w)).abs() < 1e-9);
        }
    }
}
