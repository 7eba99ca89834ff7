//! Solver convergence benchmark over seeded random graphs.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::experience::ExperienceState;
use crate::format::sig12;
use crate::graph::{build_transition_matrices, TrustGraph};
use crate::solver::{self, ReputationParams, SolverError};

/// Directed Erdős–Rényi graph with uniform `(0, 1)` edge weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub seed: u64,
    /// Expected out-degree of every node.
    pub out_degree: f64,
    pub theta: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            out_degree: 10.0,
            theta: crate::graph::DEFAULT_THETA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Stopping error after each iteration.
    pub residuals: Vec<f64>,
}

/// Builds a graph on `n` users named `n0..n{n-1}` (interned in that order).
/// Each node draws its out-degree from `Binomial(n - 1, out_degree / (n - 1))`
/// and then distinct targets uniformly.
pub fn random_graph(n: usize, spec: &GeneratorSpec, stream: u64) -> Result<TrustGraph, SimError> {
    let mut graph =
        TrustGraph::new(spec.theta).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
    for i in 0..n {
        graph.intern(&format!("n{i}"));
    }
    if n < 2 {
        return Ok(graph);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let p = (spec.out_degree / (n - 1) as f64).clamp(0.0, 1.0);
    let degree =
        Binomial::new((n - 1) as u64, p).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
    for from in 0..n {
        let k = degree.sample(&mut rng) as usize;
        let picks = rand::seq::index::sample(&mut rng, n - 1, k);
        let mut targets: Vec<usize> = picks
            .into_iter()
            .map(|t| if t >= from { t + 1 } else { t })
            .collect();
        targets.sort_unstable();
        for to in targets {
            // open interval: reject an exact zero
            let w = loop {
                let w: f64 = rng.random();
                if w > 0.0 {
                    break w;
                }
            };
            let state = ExperienceState {
                current: w,
                previous: w,
                last_update_block: 0,
            };
            graph
                .upsert_edge_at(from, to, state)
                .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        }
    }
    Ok(graph)
}

/// Solver iterations to `params.tol` for a random graph of each size.
pub fn convergence_bench(
    sizes: &[usize],
    spec: &GeneratorSpec,
    params: &ReputationParams,
) -> Result<Vec<BenchRow>, SimError> {
    let mut rows = Vec::with_capacity(sizes.len());
    for (k, &n) in sizes.iter().enumerate() {
        if n == 0 {
            return Err(SimError::InvalidScenario(
                "benchmark sizes must be positive".into(),
            ));
        }
        let graph = random_graph(n, spec, k as u64)?;
        let t = build_transition_matrices(&graph.split());
        let mut residuals = Vec::new();
        let result = solver::solve_observed(&t.a_pos, &t.a_neg, params, None, |_, err| {
            residuals.push(err)
        });
        let (iterations, converged) = match result {
            Ok(v) => (v.iterations, true),
            Err(SolverError::NotConverged { best }) => (best.iterations, false),
            Err(e) => return Err(e.into()),
        };
        rows.push(BenchRow {
            n,
            iterations,
            converged,
            residuals,
        });
    }
    Ok(rows)
}

/// `N,iteration,residual`, one row per solver iteration.
pub fn write_convergence_csv<W: Write>(mut out: W, rows: &[BenchRow]) -> io::Result<()> {
    writeln!(out, "N,iteration,residual")?;
    for row in rows {
        for (k, r) in row.residuals.iter().enumerate() {
            writeln!(out, "{},{},{}", row.n, k + 1, sig12(*r))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_shape() {
        let spec = GeneratorSpec::default();
        let g = random_graph(2000, &spec, 0).unwrap();
        assert_eq!(g.len(), 2000);
        let mean = g.edge_count() as f64 / 2000.0;
        assert!((mean - 10.0).abs() < 0.5, "mean out-degree {mean}");
        assert!(g
            .edges()
            .all(|((f, t), s)| f != t && s.current > 0.0 && s.current < 1.0));
        assert_eq!(random_graph(2000, &spec, 0).unwrap(), g);
        assert_ne!(random_graph(2000, &spec, 1).unwrap(), g);
    }

    #[test]
    fn single_node_converges_immediately() {
        let rows = convergence_bench(
            &[1],
            &GeneratorSpec::default(),
            &ReputationParams::default(),
        )
        .unwrap();
        assert!(rows[0].iterations <= 2);
        assert!(rows[0].converged);
    }

    #[test]
    fn csv_rows() {
        let rows = vec![BenchRow {
            n: 3,
            iterations: 2,
            converged: true,
            residuals: vec![0.5, 0.0],
        }];
        let mut buf = Vec::new();
        write_convergence_csv(&mut buf, &rows).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "N,iteration,residual\n3,1,0.5\n3,2,0\n"
        );
    }
}
