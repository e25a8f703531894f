//! Exact oracles for tiny one-dimensional boxes, written independently of the
//! library's sampler and estimators.

#![allow(dead_code)]

/// Edge probabilities of the box `[-n, n]` in one dimension, indexed by `x + n`.
pub fn edge_matrix(alpha: f64, amplitude: f64, beta: f64, n: i64) -> Vec<Vec<f64>> {
    let v = (2 * n + 1) as usize;
    let mut p = vec![vec![0.0; v]; v];
    for i in 0..v {
        for j in 0..v {
            if i != j {
                let r = (i as f64 - j as f64).abs();
                p[i][j] = 1.0 - (-beta * amplitude * r.powf(-1.0 - alpha)).exp();
            }
        }
    }
    p
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    r
}

/// Expected window observables, by summing over every edge subset.
pub struct ExactWindow {
    /// Expected translation-averaged `tau(k)` for `k = 0..=m`.
    pub tau: Vec<f64>,
    /// `1 + 2 * sum_{k >= 1} tau(k)`.
    pub chi: f64,
    /// `(t, P(|K(u)| >= t))` averaged over window vertices.
    pub tail: Vec<(u64, f64)>,
    /// Connection probability for every vertex pair.
    pub connect: Vec<Vec<f64>>,
}

pub fn enumerate_window(alpha: f64, beta: f64, n: i64, m: i64, thresholds: &[u64]) -> ExactWindow {
    let p = edge_matrix(alpha, 1.0, beta, n);
    let v = p.len();
    let pairs: Vec<(usize, usize)> = (0..v).flat_map(|i| (i + 1..v).map(move |j| (i, j))).collect();
    let e = pairs.len();
    assert!(e <= 20, "too many edges to enumerate");
    let mut connect = vec![vec![0.0; v]; v];
    let mut size_tail = vec![vec![0.0; thresholds.len()]; v];
    for mask in 0u64..(1 << e) {
        let mut weight = 1.0;
        let mut parent: Vec<usize> = (0..v).collect();
        for (bit, &(i, j)) in pairs.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                weight *= p[i][j];
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            } else {
                weight *= 1.0 - p[i][j];
            }
        }
        let roots: Vec<usize> = (0..v).map(|x| find(&mut parent, x)).collect();
        for i in 0..v {
            let size = roots.iter().filter(|&&r| r == roots[i]).count() as u64;
            for (k, &t) in thresholds.iter().enumerate() {
                if size >= t {
                    size_tail[i][k] += weight;
                }
            }
            for j in 0..v {
                if roots[i] == roots[j] {
                    connect[i][j] += weight;
                }
            }
        }
    }
    let window: Vec<usize> = ((n - m) as usize..=(n + m) as usize).collect();
    let mut tau = vec![1.0];
    for k in 1..=m as usize {
        let starts: Vec<usize> = window.iter().copied().filter(|&u| u + k <= (n + m) as usize).collect();
        tau.push(starts.iter().map(|&u| connect[u][u + k]).sum::<f64>() / starts.len() as f64);
    }
    let chi = 1.0 + 2.0 * tau[1..].iter().sum::<f64>();
    let tail = thresholds
        .iter()
        .enumerate()
        .map(|(k, &t)| (t, window.iter().map(|&u| size_tail[u][k]).sum::<f64>() / window.len() as f64))
        .collect();
    ExactWindow { tau, chi, tail, connect }
}

/// `P(a <-> b)` on the vertex set of `p` by the connected-subset recursion:
/// `conn(S) = 1 - sum_{T < S, min(S) in T} conn(T) * cut(T, S \ T)` and
/// `P(C(a) = S) = conn(S) * cut(S, V \ S)`.
pub fn connection_by_subsets(p: &[Vec<f64>], a: usize, b: usize) -> f64 {
    let v = p.len();
    assert!(v <= 16);
    let full = (1usize << v) - 1;
    let cut = |s: usize, t: usize| -> f64 {
        let mut prod = 1.0;
        for i in 0..v {
            if s >> i & 1 == 1 {
                for j in 0..v {
                    if t >> j & 1 == 1 {
                        prod *= 1.0 - p[i][j];
                    }
                }
            }
        }
        prod
    };
    let mut conn = vec![0.0; 1 << v];
    for s in 1..=full {
        let low = s & s.wrapping_neg();
        if s == low {
            conn[s] = 1.0;
            continue;
        }
        let rest = s ^ low;
        let mut total = 0.0;
        // Proper subsets T of S containing the lowest vertex.
        let mut sub = rest;
        loop {
            let t = sub | low;
            if t != s {
                total += conn[t] * cut(t, s ^ t);
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
        conn[s] = 1.0 - total;
    }
    (1..=full)
        .filter(|&s| s >> a & 1 == 1 && s >> b & 1 == 1)
        .map(|s| conn[s] * cut(s, full ^ s))
        .sum()
}
