//! Dense comparison methods under the same harness: D-PSGD with a static,
//! dynamic or partial mixing network, and DFedAvgM (local momentum SGD plus
//! gossip averaging).

use rand::Rng;

use crate::config::{Algorithm, ExperimentConfig};
use crate::error::{Error, Result};
use crate::privacy::{clip_gradient, effective_variance, sample_noise};
use crate::rng::{substream, SimRng, Stream};
use crate::simulator::{run_ceps_in, Environment, MetricsTrace, Recorder, RunStatus, variant_label};
use crate::sparse::Matrix;
use crate::topology::{select_for_node, MixingMatrix, TopologyGraph};

/// Metropolis–Hastings weights `1 / (1 + max(deg_i, deg_j))` on the edges of
/// `graph`, with the remainder on the diagonal.
pub fn metropolis_mixing(graph: &TopologyGraph) -> MixingMatrix {
    metropolis_from_edges(graph.num_nodes(), &graph.edges())
}

/// Same rule on an arbitrary undirected edge set; isolated nodes keep
/// their own model.
pub fn metropolis_from_edges(m: usize, edges: &[(usize, usize)]) -> MixingMatrix {
    let mut deg = vec![0usize; m];
    for &(i, j) in edges {
        deg[i] += 1;
        deg[j] += 1;
    }
    let mut w = Matrix::zeros(m, m);
    for &(i, j) in edges {
        let x = 1.0 / (1 + deg[i].max(deg[j])) as f64;
        w.set(i, j, x);
        w.set(j, i, x);
    }
    for i in 0..m {
        let off: f64 = (0..m).filter(|&j| j != i).map(|j| w.get(i, j)).sum();
        w.set(i, i, 1.0 - off);
    }
    MixingMatrix(w)
}

/// `w_i <- sum_j M_ij w_j` for every node. Returns the number of
/// neighbour-to-node transfers (nonzero off-diagonal weights).
pub fn mix(models: &mut [Vec<f64>], weights: &Matrix) -> usize {
    let m = models.len();
    let mut transfers = 0;
    let mixed: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut out = vec![0.0; models[i].len()];
            for (j, wj) in models.iter().enumerate() {
                let a = weights.get(i, j);
                if a == 0.0 {
                    continue;
                }
                if j != i {
                    transfers += 1;
                }
                out.iter_mut().zip(wj).for_each(|(o, x)| *o += a * x);
            }
            out
        })
        .collect();
    models.iter_mut().zip(mixed).for_each(|(w, x)| *w = x);
    transfers
}

/// Rows of `base` restricted to each node's selected set and renormalised.
pub fn restrict_rows(base: &Matrix, sets: &[Vec<usize>]) -> Matrix {
    let m = base.rows();
    let mut out = Matrix::zeros(m, m);
    for (i, set) in sets.iter().enumerate() {
        let total: f64 = set.iter().map(|&j| base.get(i, j)).sum();
        for &j in set {
            out.set(i, j, base.get(i, j) / total);
        }
    }
    out
}

/// Step size actually used: the configured one or `1 / (2 l)`.
pub fn step_size(cfg: &ExperimentConfig, env: &Environment) -> f64 {
    cfg.baseline.eta.unwrap_or_else(|| {
        let l = env.lipschitz();
        if l > 0.0 {
            0.5 / l
        } else {
            1.0
        }
    })
}

/// Runs whichever algorithm `cfg` names.
pub fn run_algorithm(cfg: &ExperimentConfig, env: &Environment) -> Result<MetricsTrace> {
    match cfg.algorithm {
        Algorithm::Ceps => run_ceps_in(cfg, env),
        _ => run_baseline_in(cfg, env),
    }
}

pub fn run_dpsgd(cfg: &ExperimentConfig) -> Result<MetricsTrace> {
    run_baseline_in(cfg, &Environment::build(cfg)?)
}

/// Shared loop: every tick each node takes a (noised, clipped) gradient step
/// — with momentum for DFedAvgM — and every `local_steps` ticks the nodes
/// average with their neighbours.
pub fn run_baseline_in(cfg: &ExperimentConfig, env: &Environment) -> Result<MetricsTrace> {
    cfg.validate()?;
    let algo = cfg.algorithm;
    if algo == Algorithm::Ceps {
        return Err(Error::Config("run_baseline called with algorithm ceps".into()));
    }
    let m = env.num_nodes();
    let n = env.n;
    let eta = step_size(cfg, env);
    let beta = if algo == Algorithm::Dfedavgm { cfg.baseline.momentum } else { 0.0 };
    let variance = effective_variance(&cfg.privacy.params()?);
    let clip = cfg.privacy.enabled && cfg.privacy.clip;
    let local_steps = cfg.baseline.local_steps;

    let base = metropolis_mixing(&env.graph).0;
    let node_rngs = |stream| -> Vec<SimRng> { (0..m).map(|i| substream(cfg.seed, stream, i as u64)).collect() };
    let mut noise_rngs = node_rngs(Stream::Noise);
    let mut selection_rngs = node_rngs(Stream::Selection);
    let mut edge_rng = substream(cfg.seed, Stream::Baseline, 0);

    let mut models = vec![vec![0.0; n]; m];
    let mut velocity = vec![vec![0.0; n]; m];
    let mut rec = Recorder::new(env, cfg, variant_label(cfg))?;
    rec.start(&models.iter().map(Vec::as_slice).collect::<Vec<_>>())?;
    let mut status = RunStatus::MaxTicks;
    let mut rounds = 0u64;

    for k in 0..cfg.termination.max_ticks {
        for i in 0..m {
            let mut g = env.spec.gradient(&models[i], &env.nodes[i])?;
            if clip {
                let (c, hit) = clip_gradient(&g, cfg.privacy.sensitivity);
                g = c;
                rec.clips += u64::from(hit);
            }
            let noise = sample_noise(variance, n, &mut noise_rngs[i]);
            let v = &mut velocity[i];
            for ((vt, gt), xt) in v.iter_mut().zip(&g).zip(&noise) {
                *vt = beta * *vt + gt + xt;
            }
            for (wt, vt) in models[i].iter_mut().zip(v.iter()) {
                *wt -= eta * vt;
            }
        }

        if (k + 1) % local_steps == 0 {
            let weights = match algo {
                Algorithm::Dpsgd => base.clone(),
                Algorithm::DpsgdDn => {
                    let kept: Vec<(usize, usize)> = env
                        .graph
                        .edges()
                        .into_iter()
                        .filter(|_| edge_rng.random::<f64>() < cfg.baseline.dn_keep_prob)
                        .collect();
                    metropolis_from_edges(m, &kept).0
                }
                Algorithm::DpsgdPc | Algorithm::Dfedavgm => {
                    let sets: Vec<Vec<usize>> = (0..m)
                        .map(|i| select_for_node(&env.graph, i, cfg.topology.r, &mut selection_rngs[i]))
                        .collect();
                    restrict_rows(&base, &sets)
                }
                Algorithm::Ceps => unreachable!(),
            };
            let transfers = mix(&mut models, &weights);
            for _ in 0..transfers {
                rec.dtv.record_dense(n);
            }
            rounds += 1;
        }

        let ws: Vec<&[f64]> = models.iter().map(Vec::as_slice).collect();
        let projection_error = 0.0;
        if let Some(done) = rec.record(k, rounds, &ws, projection_error)? {
            status = done;
            break;
        }
    }
    Ok(rec.finish(status, models, Some(eta)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metropolis_examples() {
        let two = metropolis_mixing(&TopologyGraph::complete(2));
        assert!(two.matrix().data().iter().all(|&x| x == 0.5));

        let path = TopologyGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let w = metropolis_mixing(&path).0;
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(w.get(i, j), w.get(j, i));
                assert!(w.get(i, j) >= 0.0);
            }
        }
        for s in w.row_sums() {
            assert!((s - 1.0).abs() < 1e-15);
        }
        assert_eq!(w.get(0, 1), 1.0 / 3.0);
        assert_eq!(w.get(0, 2), 0.0);
    }

    #[test]
    fn uniform_mixing_on_complete_graph_averages() {
        let g = TopologyGraph::complete(3);
        let uniform = Matrix::new(3, 3, vec![1.0 / 3.0; 9]).unwrap();
        let mut models = vec![vec![3.0, 0.0], vec![0.0, 3.0], vec![0.0, 0.0]];
        let transfers = mix(&mut models, &uniform);
        assert_eq!(transfers, 6);
        for w in &models {
            assert!((w[0] - 1.0).abs() < 1e-15 && (w[1] - 1.0).abs() < 1e-15);
        }
        let _ = g;
    }

    #[test]
    fn restricted_rows_are_stochastic() {
        let g = TopologyGraph::complete(4);
        let base = metropolis_mixing(&g).0;
        let sets = vec![vec![0, 1], vec![1], vec![0, 2, 3], vec![0, 1, 2, 3]];
        let r = restrict_rows(&base, &sets);
        for s in r.row_sums() {
            assert!((s - 1.0).abs() < 1e-15);
        }
        assert_eq!(r.get(1, 1), 1.0);
        assert_eq!(r.get(0, 2), 0.0);
    }
}
