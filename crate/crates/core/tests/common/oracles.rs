//! Slow, obviously-correct reference computations.

/// Heap's algorithm over index permutations.
fn permutations(m: usize, mut visit: impl FnMut(&[usize])) {
    let mut p: Vec<usize> = (0..m).collect();
    let mut c = vec![0usize; m];
    visit(&p);
    let mut i = 0;
    while i < m {
        if c[i] < i {
            if i % 2 == 0 {
                p.swap(0, i);
            } else {
                p.swap(c[i], i);
            }
            visit(&p);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// W1 between equal-size uniform samples as the cheapest of all `m!` matchings.
pub fn w1_all_assignments(cost: &[Vec<f64>]) -> f64 {
    let m = cost.len();
    let mut best = f64::INFINITY;
    permutations(m, |p| {
        let total: f64 = p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        best = best.min(total);
    });
    best / m as f64
}

pub fn abs_cost(a: &[f64], b: &[f64]) -> Vec<Vec<f64>> {
    a.iter().map(|x| b.iter().map(|y| (x - y).abs()).collect()).collect()
}

pub fn euclidean_cost(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|x| {
            b.iter()
                .map(|y| x.iter().zip(y).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt())
                .collect()
        })
        .collect()
}

/// Minimum-cost perfect matching (Hungarian method with potentials), mean cost per row.
pub fn hungarian_w1(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let inf = f64::INFINITY;
    // 1-based arrays as in the classical formulation
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
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
    let total: f64 = (1..=n).map(|j| cost[p[j] - 1][j - 1]).sum();
    total / n as f64
}

fn gauss(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

/// Unbiased squared MMD by the textbook double sums.
pub fn mmd_unbiased_direct(a: &[Vec<f64>], b: &[Vec<f64>], sigma: f64) -> f64 {
    let (m, n) = (a.len(), b.len());
    let mut xx = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                xx += gauss(&a[i], &a[j], sigma);
            }
        }
    }
    let mut yy = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                yy += gauss(&b[i], &b[j], sigma);
            }
        }
    }
    let mut xy = 0.0;
    for x in a {
        for y in b {
            xy += gauss(x, y, sigma);
        }
    }
    xx / (m * (m - 1)) as f64 + yy / (n * (n - 1)) as f64 - 2.0 * xy / (m * n) as f64
}

/// `E |sum of n Rademacher signs|` from the binomial distribution.
pub fn expected_abs_sign_sum(n: usize) -> f64 {
    let mut total = 0.0;
    let mut log_choose = 0.0f64;
    for k in 0..=n {
        if k > 0 {
            log_choose += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        let p = (log_choose - n as f64 * std::f64::consts::LN_2).exp();
        total += p * (2.0 * k as f64 - n as f64).abs();
    }
    total
}

/// Soft-thresholding `sign(z) max(|z| - t, 0)`.
pub fn soft(z: f64, t: f64) -> f64 {
    z.signum() * (z.abs() - t).max(0.0)
}
