//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rewire_core::{MemberGraph, MemberId, PanelRow};

pub fn graph(n: usize, edges: &[(u32, u32, f64)]) -> MemberGraph {
    let nodes = (0..n).map(|i| MemberId::new(format!("n{i:03}"))).collect();
    MemberGraph::new(nodes, edges.to_vec()).unwrap()
}

/// Erdős–Rényi graph with uniform (0, 1] weights.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<(u32, u32, f64)> {
    let mut edges = Vec::new();
    for u in 0..n as u32 {
        for v in u + 1..n as u32 {
            if rng.random_bool(p) {
                edges.push((u, v, 1.0 - rng.random::<f64>()));
            }
        }
    }
    edges
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Σ_ij [A_ij − k_i k_j / 2m] δ(c_i, c_j) / 2m by the full double sum.
pub fn naive_modularity(n: usize, edges: &[(u32, u32, f64)], labels: &[usize], weighted: bool) -> f64 {
    let mut a = vec![vec![0.0; n]; n];
    for &(u, v, w) in edges {
        let w = if weighted { w } else { 1.0 };
        a[u as usize][v as usize] += w;
        a[v as usize][u as usize] += w;
    }
    let k: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                q += a[i][j] - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

/// Maximum modularity over every partition, enumerated as restricted
/// growth strings.
pub fn brute_force_q_max(n: usize, edges: &[(u32, u32, f64)], weighted: bool) -> f64 {
    let mut labels = vec![0usize; n];
    let mut best = f64::NEG_INFINITY;
    fn rec(i: usize, max_label: usize, labels: &mut [usize], f: &mut dyn FnMut(&[usize])) {
        if i == labels.len() {
            f(labels);
            return;
        }
        for c in 0..=max_label + 1 {
            labels[i] = c;
            rec(i + 1, max_label.max(c), labels, f);
        }
    }
    if n == 0 {
        return 0.0;
    }
    labels[0] = 0;
    rec(1, 0, &mut labels, &mut |l: &[usize]| {
        best = best.max(naive_modularity(n, edges, l, weighted));
    });
    best
}

/// Gauss–Jordan inverse with partial pivoting.
pub fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        assert!(p.abs() > 1e-14, "singular matrix");
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub struct LsdvFit {
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
}

/// OLS on the regressors plus one dummy per member (no intercept), with an
/// HC1 sandwich covariance. Members with a single row are dropped first.
pub fn lsdv_oracle(rows: &[PanelRow]) -> LsdvFit {
    let mut counts = std::collections::BTreeMap::new();
    for r in rows {
        *counts.entry(r.member.clone()).or_insert(0usize) += 1;
    }
    let members: Vec<MemberId> = counts.iter().filter(|(_, &c)| c >= 2).map(|(m, _)| m.clone()).collect();
    let kept: Vec<&PanelRow> = rows.iter().filter(|r| members.contains(&r.member)).collect();
    let p = 4;
    let k = p + members.len();
    let design: Vec<Vec<f64>> = kept
        .iter()
        .map(|r| {
            let mut x = vec![r.year as f64, r.novelty, r.log_events, r.log_connections];
            x.extend(members.iter().map(|m| if *m == r.member { 1.0 } else { 0.0 }));
            x
        })
        .collect();
    let y: Vec<f64> = kept.iter().map(|r| r.specialization).collect();
    let n = design.len();

    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for (x, &yi) in design.iter().zip(&y) {
        for a in 0..k {
            xty[a] += x[a] * yi;
            for b in 0..k {
                xtx[a][b] += x[a] * x[b];
            }
        }
    }
    let bread = invert(&xtx);
    let beta: Vec<f64> = (0..k).map(|a| (0..k).map(|b| bread[a][b] * xty[b]).sum()).collect();
    let resid: Vec<f64> = design
        .iter()
        .zip(&y)
        .map(|(x, &yi)| yi - x.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let mut meat = vec![vec![0.0; k]; k];
    for (x, e) in design.iter().zip(&resid) {
        for a in 0..k {
            for b in 0..k {
                meat[a][b] += x[a] * x[b] * e * e;
            }
        }
    }
    let mul = |l: &[Vec<f64>], r: &[Vec<f64>]| -> Vec<Vec<f64>> {
        (0..k)
            .map(|a| (0..k).map(|b| (0..k).map(|c| l[a][c] * r[c][b]).sum()).collect())
            .collect()
    };
    let cov = mul(&mul(&bread, &meat), &bread);
    let hc1 = n as f64 / (n - k) as f64;
    LsdvFit {
        beta: beta[..p].to_vec(),
        se: (0..p).map(|j| (cov[j][j] * hc1).sqrt()).collect(),
    }
}

/// A 200-row unbalanced panel: members with 2 to 6 years each, plus two
/// singleton members, heteroskedastic noise and member effects.
pub fn oracle_panel(seed: u64) -> Vec<PanelRow> {
    let mut rng = rng(seed);
    let mut rows = Vec::new();
    let mut m = 0;
    while rows.len() < 198 {
        let left = 198 - rows.len();
        let len = if left <= 6 {
            left
        } else {
            rng.random_range(2..=6.min(left - 2))
        };
        let alpha = rng.random_range(-1.0..1.0);
        let start = 2005 + rng.random_range(0..4);
        for t in 0..len {
            let novelty: f64 = rng.random();
            let log_events = (1.0 + rng.random_range(1..40) as f64).ln();
            let log_connections = (1.0 + rng.random_range(0..200) as f64).ln();
            let scale = 0.05 + 0.2 * novelty;
            let noise = scale * (rng.random::<f64>() - 0.5);
            rows.push(PanelRow {
                member: MemberId::new(format!("p{m:03}")),
                year: start + t as i32,
                specialization: alpha - 0.3 * novelty + 0.02 * log_events - 0.05 * log_connections
                    + 0.01 * t as f64
                    + noise,
                novelty,
                log_events,
                log_connections,
            });
        }
        m += 1;
    }
    for s in 0..2 {
        rows.push(PanelRow {
            member: MemberId::new(format!("single{s}")),
            year: 2010,
            specialization: 0.5,
            novelty: 0.5,
            log_events: 1.0,
            log_connections: 1.0,
        });
    }
    rows
}
