//! Per-node CEPS state: initialisation, the noised communication step and
//! the proximal local step.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{encode, EncodedMessage, EncodingMatrix};
use crate::error::{Error, Result};
use crate::objectives::{NodeDataset, ObjectiveSpec};
use crate::privacy::clip_gradient;
use crate::rng::{derive_seed, substream, Stream};
use crate::sparse::{hard_threshold, squared_distance, SparsityBudget};
use crate::topology::TopologyGraph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Proximal weight of the local step.
    pub mu: f64,
    pub s: SparsityBudget,
    pub gamma: f64,
    pub kappa_min: u64,
    pub kappa_max: u64,
}

impl HyperParams {
    pub fn new(s: SparsityBudget) -> Self {
        HyperParams {
            mu: 0.1,
            s,
            gamma: 5.0,
            kappa_min: 10,
            kappa_max: 15,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::invalid("mu", "must be positive"));
        }
        if !(self.gamma > 1.0 && self.gamma.is_finite()) {
            return Err(Error::invalid("gamma", "must exceed 1"));
        }
        if self.kappa_min == 0 || self.kappa_min > self.kappa_max {
            return Err(Error::invalid(
                "kappa",
                format!("bad range [{}, {}]", self.kappa_min, self.kappa_max),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub id: usize,
    pub w: Vec<f64>,
    /// Surrogate `u_i`, refreshed only at communication steps.
    pub u: Vec<f64>,
    /// Size of the last averaging set (`|N_i|` before the first exchange).
    pub m_k: usize,
    pub sigma: f64,
    pub kappa: u64,
    pub gamma: f64,
    pub phi_seed: u64,
    /// Last successfully decoded model of each neighbour.
    pub cache: BTreeMap<usize, Vec<f64>>,
    pub comm_steps: u64,
}

/// `w = 0`, `u = -grad f_i(0)`, `m = |N_i|`, `kappa` uniform on the
/// configured range.
pub fn init_node(
    i: usize,
    spec: &ObjectiveSpec,
    data: &NodeDataset,
    graph: &TopologyGraph,
    hp: &HyperParams,
    sigma: f64,
    seed: u64,
) -> Result<NodeState> {
    hp.validate()?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("sigma", format!("node {i}: sigma = {sigma}")));
    }
    let n = data.dim();
    let w = vec![0.0; n];
    let u: Vec<f64> = spec.gradient(&w, data)?.into_iter().map(|g| -g).collect();
    let mut rng = substream(seed, Stream::NodeInit, i as u64);
    Ok(NodeState {
        id: i,
        w,
        u,
        m_k: graph.neighborhood(i).len(),
        sigma,
        kappa: rng.random_range(hp.kappa_min..=hp.kappa_max),
        gamma: hp.gamma,
        phi_seed: derive_seed(seed, Stream::Encoding, i as u64),
        cache: BTreeMap::new(),
        comm_steps: 0,
    })
}

/// What a neighbour's message turned into on the receiving side.
#[derive(Debug, Clone, Copy)]
pub enum Incoming<'a> {
    Decoded(&'a [f64]),
    Failed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepOutcome {
    pub clipped: bool,
    /// Neighbours whose message could not be decoded this step.
    pub failures: usize,
    /// `||P(x) - x_ref||^2`, the projection perturbation entering `e_inf`.
    pub projection_error: f64,
}

impl NodeState {
    pub fn communicates_at(&self, k: u64) -> bool {
        k > 0 && k % self.kappa == 0
    }

    /// Averages `{w_i} ∪ {z_j}`, refreshes `u_i` from the gradient at the
    /// average and sets `w_i = P((u_i + xi) / (sigma m))`.
    ///
    /// A failed decode falls back to the cached model of that neighbour;
    /// without one the neighbour is left out of the average. `clip` is the
    /// sensitivity `u_i`; gradients are then clipped to norm `u_i / 2`.
    pub fn communication_step(
        &mut self,
        spec: &ObjectiveSpec,
        data: &NodeDataset,
        incoming: &[(usize, Incoming<'_>)],
        noise: &[f64],
        s: SparsityBudget,
        clip: Option<f64>,
    ) -> Result<StepOutcome> {
        let n = self.w.len();
        if !noise.is_empty() && noise.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: noise.len(),
            });
        }
        let mut outcome = StepOutcome::default();
        let mut avg = self.w.clone();
        let mut count = 1usize;
        for &(j, msg) in incoming {
            if j == self.id {
                continue;
            }
            match msg {
                Incoming::Decoded(z) => {
                    if z.len() != n {
                        return Err(Error::DimensionMismatch {
                            expected: n,
                            actual: z.len(),
                        });
                    }
                    self.cache.insert(j, z.to_vec());
                }
                Incoming::Failed => outcome.failures += 1,
            }
            if let Some(z) = self.cache.get(&j) {
                avg.iter_mut().zip(z).for_each(|(a, b)| *a += b);
                count += 1;
            }
        }
        let inv = 1.0 / count as f64;
        avg.iter_mut().for_each(|a| *a *= inv);

        let mut g = spec.gradient(&avg, data)?;
        if let Some(u) = clip {
            let (clipped, hit) = clip_gradient(&g, u);
            g = clipped;
            outcome.clipped = hit;
        }
        self.m_k = count;
        let scale = self.sigma * count as f64;
        self.u = avg.iter().zip(&g).map(|(a, g)| scale * a - g).collect();

        let perturbed: Vec<f64> = if noise.is_empty() {
            self.u.clone()
        } else {
            self.u.iter().zip(noise).map(|(u, x)| u + x).collect()
        };
        outcome.projection_error = squared_distance(&hard_threshold(&perturbed, s), &self.u);
        let target: Vec<f64> = perturbed.iter().map(|x| x / scale).collect();
        self.w = hard_threshold(&target, s);
        self.comm_steps += 1;
        Ok(outcome)
    }

    /// `w_i = P((u_i + mu w_i) / (sigma m + mu))`; `u_i` and `m` stay fixed.
    pub fn local_step(&mut self, mu: f64, s: SparsityBudget) -> f64 {
        let x: Vec<f64> = self.u.iter().zip(&self.w).map(|(u, w)| u + mu * w).collect();
        let err = squared_distance(&hard_threshold(&x, s), &x);
        let denom = self.sigma * self.m_k as f64 + mu;
        let target: Vec<f64> = x.iter().map(|v| v / denom).collect();
        self.w = hard_threshold(&target, s);
        err
    }

    /// One-bit message for the current model; the zero model is sent as the
    /// designated zero message.
    pub fn build_outgoing(&self, phi: &EncodingMatrix) -> Result<EncodedMessage> {
        if self.w.iter().all(|&x| x == 0.0) {
            return Ok(EncodedMessage::zero());
        }
        encode(&self.w, phi, self.gamma)
    }
}

/// `(1/m) sum_i w_i`
pub fn average_point(ws: &[&[f64]]) -> Result<Vec<f64>> {
    let Some(first) = ws.first() else {
        return Err(Error::invalid("W", "no node vectors"));
    };
    let n = first.len();
    let mut avg = vec![0.0; n];
    for w in ws {
        if w.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: w.len(),
            });
        }
        avg.iter_mut().zip(*w).for_each(|(a, b)| *a += b);
    }
    let inv = 1.0 / ws.len() as f64;
    avg.iter_mut().for_each(|a| *a *= inv);
    Ok(avg)
}

/// `(1/(s m)) ||W - (avg, ..., avg)||^2`
pub fn consensus_residual(ws: &[&[f64]], s: usize) -> Result<f64> {
    let avg = average_point(ws)?;
    let total: f64 = ws.iter().map(|w| squared_distance(w, &avg)).sum();
    Ok(total / (s as f64 * ws.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{decode, DecoderOptions};
    use crate::objectives::{generate_linreg_problem, linreg_grad, LinregGenerator};
    use crate::sparse::Matrix;

    fn budget(s: usize) -> SparsityBudget {
        SparsityBudget::new(s).unwrap()
    }

    fn bare(w: Vec<f64>, sigma: f64) -> NodeState {
        let n = w.len();
        NodeState {
            id: 0,
            w,
            u: vec![0.0; n],
            m_k: 1,
            sigma,
            kappa: 10,
            gamma: 5.0,
            phi_seed: 1,
            cache: BTreeMap::new(),
            comm_steps: 0,
        }
    }

    fn toy_problem() -> (ObjectiveSpec, NodeDataset) {
        let g = LinregGenerator {
            samples_min: 30,
            samples_max: 30,
            ..LinregGenerator::new(12, 3, 1)
        };
        let p = generate_linreg_problem(&g, 5).unwrap();
        (ObjectiveSpec::linear(), p.nodes[0].clone())
    }

    #[test]
    fn init_matches_closed_form() {
        let (spec, data) = toy_problem();
        let g = TopologyGraph::complete(1);
        let hp = HyperParams::new(budget(3));
        let st = init_node(0, &spec, &data, &g, &hp, 0.7, 11).unwrap();
        let m_i = data.num_samples() as f64;
        let expected: Vec<f64> = data.features().matvec_t(data.labels()).iter().map(|x| x / m_i).collect();
        for (a, b) in st.u.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(st.w.iter().all(|&x| x == 0.0));
        assert_eq!(st.m_k, 1);
        assert!((10..=15).contains(&st.kappa));
        assert_eq!(init_node(0, &spec, &data, &g, &hp, 0.7, 11).unwrap(), st);
    }

    #[test]
    fn logistic_zero_features_start_at_zero_surrogate() {
        let data = NodeDataset::new(Matrix::zeros(4, 3), vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let spec = ObjectiveSpec::logistic(0.0).unwrap();
        let st = init_node(0, &spec, &data, &TopologyGraph::complete(1), &HyperParams::new(budget(1)), 1.0, 0).unwrap();
        assert!(st.u.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_node_step_is_projected_gradient() {
        let (spec, data) = toy_problem();
        let mut st = bare(vec![0.3; 12], 2.0);
        let w0 = st.w.clone();
        st.communication_step(&spec, &data, &[], &[], budget(3), None).unwrap();
        let grad = linreg_grad(&w0, &data).unwrap();
        let expect = hard_threshold(
            &w0.iter().zip(&grad).map(|(w, g)| w - g / 2.0).collect::<Vec<_>>(),
            budget(3),
        );
        for (a, b) in st.w.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn worked_communication_example() {
        // A = sqrt(2) I over two samples: grad f(w) = w - (0.8, 0), i.e.
        // (0.2, 0) at (1, 0).
        let spec = ObjectiveSpec::linear();
        let scaled = NodeDataset::new(
            Matrix::from_rows(&[vec![2f64.sqrt(), 0.0], vec![0.0, 2f64.sqrt()]]).unwrap(),
            vec![0.8 * 2f64.sqrt(), 0.0],
        )
        .unwrap();
        let mut st = bare(vec![1.0, 0.0], 1.0);
        let z = [1.0, 0.0];
        st.communication_step(&spec, &scaled, &[(1, Incoming::Decoded(&z))], &[], budget(2), None)
            .unwrap();
        assert_eq!(st.m_k, 2);
        assert!((st.w[0] - 0.9).abs() < 1e-12 && st.w[1] == 0.0, "{:?}", st.w);
    }

    #[test]
    fn stationary_point_is_fixed() {
        let data = NodeDataset::new(Matrix::identity(3), vec![1.0, 0.0, 0.0]).unwrap();
        let spec = ObjectiveSpec::linear();
        let w = vec![1.0, 0.0, 0.0];
        let mut st = bare(w.clone(), 0.5);
        st.communication_step(
            &spec,
            &data,
            &[(1, Incoming::Decoded(&w)), (2, Incoming::Decoded(&w))],
            &[],
            budget(1),
            None,
        )
        .unwrap();
        assert_eq!(st.w, w);
    }

    #[test]
    fn decode_failures_use_cache_or_drop() {
        let data = NodeDataset::new(Matrix::identity(2), vec![0.0, 0.0]).unwrap();
        let spec = ObjectiveSpec::linear();
        let mut st = bare(vec![1.0, 0.0], 1.0);
        let out = st
            .communication_step(&spec, &data, &[(1, Incoming::Failed)], &[], budget(2), None)
            .unwrap();
        assert_eq!((out.failures, st.m_k), (1, 1));
        let z = [3.0, 0.0];
        st.communication_step(&spec, &data, &[(1, Incoming::Decoded(&z))], &[], budget(2), None)
            .unwrap();
        st.communication_step(&spec, &data, &[(1, Incoming::Failed)], &[], budget(2), None)
            .unwrap();
        assert_eq!(st.m_k, 2);
        assert_eq!(st.cache[&1], z.to_vec());
    }

    #[test]
    fn clipping_is_reported() {
        let data = NodeDataset::new(Matrix::identity(2), vec![5.0, 0.0]).unwrap();
        let spec = ObjectiveSpec::linear();
        let mut st = bare(vec![0.0, 0.0], 1.0);
        let out = st
            .communication_step(&spec, &data, &[], &[], budget(2), Some(0.1))
            .unwrap();
        assert!(out.clipped);
        assert!((st.w[0] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn local_step_examples() {
        let mut st = bare(vec![1.0, -2.0, 0.5], 2.0);
        st.u = vec![0.4, 0.1, -0.3];
        st.m_k = 3;
        let before = st.u.clone();
        st.local_step(0.1, budget(3));
        let expect = [(0.4 + 0.1) / 6.1, (0.1 - 0.2) / 6.1, (-0.3 + 0.05) / 6.1];
        for (a, b) in st.w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(st.u, before);

        // u = sigma m w is a fixed point.
        let mut st = bare(vec![1.0, 0.0, 0.25], 2.0);
        st.m_k = 3;
        st.u = st.w.iter().map(|w| 6.0 * w).collect();
        let err = st.local_step(0.1, budget(2));
        assert_eq!(err, 0.0);
        for (a, b) in st.w.iter().zip([1.0, 0.0, 0.25]) {
            assert!((a - b).abs() < 1e-15);
        }

        // A dominant proximal term leaves P(w).
        let mut st = bare(vec![1.0, 0.2, -3.0], 1.0);
        st.u = vec![5.0, 5.0, 5.0];
        st.local_step(1e12, budget(2));
        assert!((st.w[0] - 1.0).abs() < 1e-9 && st.w[1] == 0.0 && (st.w[2] + 3.0).abs() < 1e-9);
    }

    #[test]
    fn outgoing_messages() {
        let phi = EncodingMatrix::generate(3, 8, 16, 1.0).unwrap();
        let st = bare(vec![0.0; 16], 1.0);
        let msg = st.build_outgoing(&phi).unwrap();
        assert!(msg.is_zero());
        assert_eq!(crate::codec::message_size_bits(&msg), 64);

        let mut w = vec![0.0; 16];
        w[3] = 1.5;
        let st = bare(w, 1.0);
        let a = st.build_outgoing(&phi).unwrap();
        assert_eq!(a.d(), 8);
        assert_eq!(a.to_bytes(), st.build_outgoing(&phi).unwrap().to_bytes());
        let z = decode(&a, &phi, 5.0, budget(1), &DecoderOptions::default()).unwrap();
        assert!((z.norm() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn residual_examples() {
        let a = [1.0, 0.0];
        let b = [-1.0, 0.0];
        assert_eq!(average_point(&[&a, &b]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(consensus_residual(&[&a, &b], 1).unwrap(), 1.0);
        assert_eq!(consensus_residual(&[&a, &a], 1).unwrap(), 0.0);
        let a2 = [2.0, 0.0];
        let b2 = [-2.0, 0.0];
        assert_eq!(consensus_residual(&[&a2, &b2], 1).unwrap(), 4.0);
        assert!(average_point(&[]).is_err());
    }
}
