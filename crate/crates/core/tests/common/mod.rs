//! Reference implementations used by the integration tests. They follow the
//! update and solve rules literally, share no code with the engine, and favor
//! clarity over speed.

#![allow(dead_code)]

use std::collections::BTreeMap;

use der_core::{ExperienceParams, ExperienceState, FeedbackEvent, TrustGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Solves `(I - d A) x = (1 - d)/n * 1` by Gaussian elimination with partial
/// pivoting. `a` is dense and row-major.
pub fn dense_solve(a: &[Vec<f64>], d: f64) -> Vec<f64> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n)
                .map(|j| if i == j { 1.0 } else { 0.0 } - d * a[i][j])
                .collect();
            row.push((1.0 - d) / n as f64);
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            let pivot_row = m[col].clone();
            for (v, p) in m[row].iter_mut().zip(&pivot_row).skip(col) {
                *v -= f * p;
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| m[i][k] * x[k]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    x
}

/// Dense positive and negative transition matrices: entry `(i, j)` is the
/// share of `j`'s outgoing positive (negative) experience that points at `i`.
pub fn dense_transitions(
    n: usize,
    edges: &[(usize, usize, f64)],
    theta: f64,
) -> [Vec<Vec<f64>>; 2] {
    let mut pe = vec![vec![0.0; n]; n];
    let mut ne = vec![vec![0.0; n]; n];
    for &(f, t, e) in edges {
        if e >= theta {
            pe[f][t] += e;
        } else if e > 0.0 {
            ne[f][t] += 1.0 - e;
        }
    }
    let column = |m: &Vec<Vec<f64>>| {
        let mut a = vec![vec![0.0; n]; n];
        for j in 0..n {
            let total: f64 = m[j].iter().sum();
            if total > 0.0 {
                for i in 0..n {
                    a[i][j] = m[j][i] / total;
                }
            }
        }
        a
    };
    [column(&pe), column(&ne)]
}

/// Random graph on `n` nodes: every ordered pair is an edge with
/// probability `p`, experience uniform on `(0, 1)`.
pub fn random_edges(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for f in 0..n {
        for t in 0..n {
            if f != t && rng.random_bool(p) {
                let w: f64 = rng.random_range(0.001..1.0);
                edges.push((f, t, w));
            }
        }
    }
    edges
}

pub fn graph_from_edges(n: usize, edges: &[(usize, usize, f64)]) -> TrustGraph {
    graph_with_theta(n, edges, 0.5)
}

pub fn graph_with_theta(n: usize, edges: &[(usize, usize, f64)], theta: f64) -> TrustGraph {
    let mut g = TrustGraph::new(theta).unwrap();
    for i in 0..n {
        g.intern(&format!("v{i}"));
    }
    for &(f, t, e) in edges {
        let state = ExperienceState {
            current: e,
            previous: e,
            last_update_block: 0,
        };
        g.upsert_edge_at(f, t, state).unwrap();
    }
    g
}

/// One feedback step in the plain algebraic form.
pub fn oracle_step(cur: f64, prev: f64, s: f64, p: &ExperienceParams) -> f64 {
    if s >= p.theta_co {
        cur + s * p.alpha * (1.0 - cur / p.max_exp)
    } else if s > 0.0 && s <= p.theta_unco {
        (cur - p.beta * (1.0 - s) * p.alpha * (1.0 - cur / p.max_exp)).max(p.min_exp)
    } else {
        oracle_decay(cur, prev, p)
    }
}

pub fn oracle_decay(cur: f64, prev: f64, p: &ExperienceParams) -> f64 {
    (cur - p.delta * (1.0 + p.gamma - prev / p.max_exp)).max(p.min_exp)
}

/// Edge values after replaying `events` up to block `end`: per edge, whole
/// decay epochs elapsed since its last event are applied before each new
/// event and once more at `end`.
pub fn oracle_replay(
    events: &[FeedbackEvent],
    p: &ExperienceParams,
    decay_epoch: u64,
    end: u64,
) -> BTreeMap<(String, String), (f64, f64)> {
    // (current, previous, anchor block)
    let mut edges: BTreeMap<(String, String), (f64, f64, u64)> = BTreeMap::new();
    let catch_up = |e: &mut (f64, f64, u64), block: u64| {
        let n = (block - e.2) / decay_epoch;
        for _ in 0..n {
            let next = oracle_decay(e.0, e.1, p);
            e.1 = e.0;
            e.0 = next;
        }
        e.2 += n * decay_epoch;
    };
    for ev in events.iter().filter(|e| e.block <= end) {
        let e = edges
            .entry((ev.from.clone(), ev.to.clone()))
            .or_insert((p.exp0, p.exp0, ev.block));
        catch_up(e, ev.block);
        let next = oracle_step(e.0, e.1, ev.score, p);
        *e = (next, e.0, ev.block);
    }
    edges
        .into_iter()
        .map(|(k, mut e)| {
            catch_up(&mut e, end);
            (k, (e.0, e.1))
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
