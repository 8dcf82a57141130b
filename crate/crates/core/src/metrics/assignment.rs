//! Maximum-weight bipartite matching (Hungarian method) for mapping
//! hypothesis speakers onto reference speakers.

/// Assignment maximizing the summed `weights[i][j]` over a rectangular
/// matrix. Returns, for every row, the matched column (if any). Each column
/// is used at most once.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    debug_assert!(weights.iter().all(|r| r.len() == cols));

    // pad to a square cost matrix; padded cells carry zero weight
    let n = rows.max(cols);
    let top = weights.iter().flatten().copied().fold(0.0f64, f64::max);
    let cost = |i: usize, j: usize| -> f64 {
        let w = if i < rows && j < cols { weights[i][j] } else { 0.0 };
        top - w
    };

    let inf = f64::INFINITY;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
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
            for j in 0..=n {
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
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut out = vec![None; rows];
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i <= rows && j <= cols {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total(w: &[Vec<f64>], m: &[Option<usize>]) -> f64 {
        m.iter().enumerate().filter_map(|(i, j)| j.map(|j| w[i][j])).sum()
    }

    fn brute(w: &[Vec<f64>]) -> f64 {
        fn go(w: &[Vec<f64>], i: usize, used: &mut Vec<bool>) -> f64 {
            if i == w.len() {
                return 0.0;
            }
            let mut best = go(w, i + 1, used);
            for j in 0..used.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.max(w[i][j] + go(w, i + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        let cols = w.first().map_or(0, Vec::len);
        go(w, 0, &mut vec![false; cols])
    }

    #[test]
    fn square_case() {
        let w = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let m = max_weight_assignment(&w);
        assert_eq!(total(&w, &m), brute(&w));
    }

    #[test]
    fn rectangular_cases() {
        let wide = vec![vec![1.0, 9.0, 2.0, 7.0], vec![8.0, 9.0, 0.5, 0.0]];
        assert_eq!(total(&wide, &max_weight_assignment(&wide)), 17.0);
        let tall = vec![vec![1.0], vec![5.0], vec![3.0]];
        let m = max_weight_assignment(&tall);
        assert_eq!(m, vec![None, Some(0), None]);
    }

    #[test]
    fn empty_inputs() {
        assert!(max_weight_assignment(&[]).is_empty());
        assert_eq!(max_weight_assignment(&[vec![], vec![]]), vec![None, None]);
    }

    #[test]
    fn matches_brute_force_on_pseudo_random_matrices() {
        let mut state = 0x2545_f491_4f6c_dd1du64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 1000) as f64 / 10.0
        };
        for rows in 1..=4 {
            for cols in 1..=4 {
                for _ in 0..20 {
                    let w: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| next()).collect()).collect();
                    let got = total(&w, &max_weight_assignment(&w));
                    assert!((got - brute(&w)).abs() < 1e-9, "{w:?}");
                }
            }
        }
    }
}
