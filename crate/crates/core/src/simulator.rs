//! Tick-based orchestration of CEPS over a simulated network, with metric
//! collection and convergence diagnostics.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::codec::{
    decode, dense_size_bits, framed_size_bits, message_size_bits, EncodedMessage, EncodingMatrix,
};
use crate::config::{Algorithm, ExperimentConfig, SelectionRule};
use crate::error::{Error, Result};
use crate::node::{consensus_residual, init_node, average_point, Incoming, NodeState};
use crate::objectives::{
    gram_lambda_max, generate_linreg_problem, load_libsvm, partition, sigma_from_lambda, LinregGenerator,
    NodeDataset, ObjectiveKind, ObjectiveSpec, PowerEstimate,
};
use crate::privacy::{effective_variance, sample_noise, PrivacyAccountant};
use crate::rng::{substream, SimRng, Stream};
use crate::sparse::{euclidean_norm, nnz, squared_distance, squared_norm, Matrix, SparsityBudget};
use crate::topology::{
    generate_random_graph, responder_count, responders_for_node, sample_latency_row, select_for_node,
    theory_constants, window_connectivity_probability_bound, TheoryConstants, TopologyGraph,
};

/// Objective values above this (or non-finite) count as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;
/// Window length (in communication rounds) used for the theory diagnostics.
pub const DIAGNOSTIC_WINDOW: usize = 20;

/// Data, graph and per-node spectral constants shared by every algorithm
/// run on the same problem.
#[derive(Debug, Clone)]
pub struct Environment {
    pub spec: ObjectiveSpec,
    pub nodes: Vec<NodeDataset>,
    pub graph: TopologyGraph,
    pub n: usize,
    pub s: SparsityBudget,
    pub w_star: Option<Vec<f64>>,
    /// `lambda_max(A_i^T A_i)` per node.
    pub gram: Vec<PowerEstimate>,
}

impl Environment {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let p = &cfg.problem;
        let (nodes, w_star) = match (&p.data, p.objective) {
            (Some(path), _) => {
                let data = load_libsvm(path)?;
                let mut rng = substream(cfg.seed, Stream::Partition, 0);
                (partition(&data, p.m, &mut rng)?, None)
            }
            (None, ObjectiveKind::LinearRegression) => {
                let gen = LinregGenerator {
                    n: p.n.expect("validated"),
                    s: p.s,
                    m: p.m,
                    samples_min: p.samples_min,
                    samples_max: p.samples_max,
                    noise_scale: p.noise_scale,
                };
                let prob = generate_linreg_problem(&gen, cfg.seed)?;
                (prob.nodes, Some(prob.w_star))
            }
            (None, ObjectiveKind::LogisticRegression) => {
                return Err(Error::Config("logistic problems need a data file".into()))
            }
        };
        let graph = if p.m == 1 {
            TopologyGraph::complete(1)
        } else {
            generate_random_graph(p.m, cfg.topology.edge_prob, &mut substream(cfg.seed, Stream::Graph, 0))?
        };
        Self::from_parts(p.objective_spec(), nodes, graph, p.s, w_star)
    }

    pub fn from_parts(
        spec: ObjectiveSpec,
        nodes: Vec<NodeDataset>,
        graph: TopologyGraph,
        s: usize,
        w_star: Option<Vec<f64>>,
    ) -> Result<Self> {
        let Some(first) = nodes.first() else {
            return Err(Error::EmptyDataset("no nodes".into()));
        };
        let n = first.dim();
        if nodes.iter().any(|d| d.dim() != n) {
            return Err(Error::invalid("nodes", "all nodes must share the feature dimension"));
        }
        if graph.num_nodes() != nodes.len() {
            return Err(Error::DimensionMismatch {
                expected: nodes.len(),
                actual: graph.num_nodes(),
            });
        }
        let s = SparsityBudget::for_dimension(s, n)?;
        let gram = nodes.iter().map(|d| gram_lambda_max(d.features())).collect();
        Ok(Environment {
            spec,
            nodes,
            graph,
            n,
            s,
            w_star,
            gram,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Gradient Lipschitz constant of node `i`.
    pub fn lipschitz_i(&self, i: usize) -> f64 {
        let m_i = self.nodes[i].num_samples() as f64;
        match self.spec.kind {
            ObjectiveKind::LinearRegression => self.gram[i].value / m_i,
            ObjectiveKind::LogisticRegression => self.gram[i].value / (4.0 * m_i) + self.spec.lambda,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        (0..self.num_nodes()).map(|i| self.lipschitz_i(i)).fold(0.0, f64::max)
    }

    /// `(1/m) sum_i f_i(w)`
    pub fn global_objective(&self, w: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for d in &self.nodes {
            total += self.spec.value(w, d)?;
        }
        Ok(total / self.num_nodes() as f64)
    }

    fn node_gradients(&self, w: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.nodes.iter().map(|d| self.spec.gradient(w, d)).collect()
    }

    pub fn global_gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        let grads = self.node_gradients(w)?;
        let refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
        average_point(&refs)
    }

    /// `(1/m) sum_i ||grad f_i(w) - grad f(w)||^2`
    pub fn gradient_dispersion(&self, w: &[f64]) -> Result<f64> {
        let grads = self.node_gradients(w)?;
        let refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
        let mean = average_point(&refs)?;
        Ok(refs.iter().map(|g| squared_distance(g, &mean)).sum::<f64>() / refs.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    /// Hit the tick budget with the residual still above tolerance.
    MaxTicks,
    /// Objective exceeded the divergence threshold or became NaN.
    Diverged,
}

/// One snapshot per executed tick.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub tick: u64,
    pub comm_round: u64,
    pub objective: f64,
    pub consensus_residual: f64,
    pub dtv_bits_ideal: u64,
    pub dtv_bits_framed: u64,
    pub eps_total: f64,
    pub delta_total_raw: f64,
    pub delta_total_capped: f64,
    pub decode_failures: u64,
    pub clip_count: u64,
    pub e_inf_proxy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsTrace {
    pub label: String,
    pub algorithm: Algorithm,
    pub rows: Vec<MetricsRow>,
    /// Cumulative compute time per row; kept apart from the rows so traces
    /// stay reproducible.
    pub wall_ms: Vec<f64>,
    pub status: RunStatus,
    pub tol: f64,
    /// `||grad f(avg)||^2` at the start and after every completed
    /// communication round.
    pub round_grad_sq: Vec<f64>,
    pub final_models: Vec<Vec<f64>>,
    /// Baseline step size, when one was used.
    pub eta: Option<f64>,
}

impl MetricsTrace {
    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    pub fn converged(&self) -> bool {
        self.status == RunStatus::Converged
    }

    pub fn diverged(&self) -> bool {
        self.status != RunStatus::Converged
    }

    pub fn final_objective(&self) -> f64 {
        self.last().map_or(f64::NAN, |r| r.objective)
    }

    pub fn comm_rounds(&self) -> u64 {
        self.last().map_or(0, |r| r.comm_round)
    }

    pub fn ticks(&self) -> u64 {
        self.rows.len() as u64
    }

    pub fn summary(&self, env: &Environment) -> RunSummary {
        let last = self.last().cloned();
        let avg = if self.final_models.is_empty() {
            None
        } else {
            let refs: Vec<&[f64]> = self.final_models.iter().map(Vec::as_slice).collect();
            average_point(&refs).ok()
        };
        let distance_to_truth = match (&env.w_star, &avg) {
            (Some(t), Some(a)) => Some(euclidean_norm(
                &t.iter().zip(a).map(|(x, y)| x - y).collect::<Vec<_>>(),
            )),
            _ => None,
        };
        RunSummary {
            label: self.label.clone(),
            algorithm: self.algorithm,
            status: self.status,
            ticks: self.ticks(),
            comm_rounds: self.comm_rounds(),
            final_objective: self.final_objective(),
            final_residual: last.as_ref().map_or(f64::NAN, |r| r.consensus_residual),
            tol: self.tol,
            dtv_bits_ideal: last.as_ref().map_or(0, |r| r.dtv_bits_ideal),
            dtv_bits_framed: last.as_ref().map_or(0, |r| r.dtv_bits_framed),
            eps_total: last.as_ref().map_or(0.0, |r| r.eps_total),
            delta_total_raw: last.as_ref().map_or(0.0, |r| r.delta_total_raw),
            delta_total_capped: last.as_ref().map_or(0.0, |r| r.delta_total_capped),
            decode_failures: last.as_ref().map_or(0, |r| r.decode_failures),
            clip_count: last.as_ref().map_or(0, |r| r.clip_count),
            e_inf_proxy: last.as_ref().map_or(0.0, |r| r.e_inf_proxy),
            max_model_nnz: self.final_models.iter().map(|w| nnz(w)).max().unwrap_or(0),
            distance_to_truth,
            eta: self.eta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub label: String,
    pub algorithm: Algorithm,
    pub status: RunStatus,
    pub ticks: u64,
    pub comm_rounds: u64,
    pub final_objective: f64,
    pub final_residual: f64,
    pub tol: f64,
    pub dtv_bits_ideal: u64,
    pub dtv_bits_framed: u64,
    pub eps_total: f64,
    pub delta_total_raw: f64,
    pub delta_total_capped: f64,
    pub decode_failures: u64,
    pub clip_count: u64,
    pub e_inf_proxy: f64,
    pub max_model_nnz: usize,
    pub distance_to_truth: Option<f64>,
    pub eta: Option<f64>,
}

/// Milliseconds since construction; always zero where no monotonic clock
/// is available (wasm).
pub(crate) struct Clock {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Clock {
    pub(crate) fn start() -> Self {
        Clock {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    pub(crate) fn elapsed_ms(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64() * 1e3
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}

/// Cumulative transmitted volume.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DtvCounter {
    pub ideal_bits: u64,
    pub framed_bits: u64,
}

impl DtvCounter {
    /// One neighbour-to-node transfer of a one-bit message.
    pub fn record_message(&mut self, msg: &EncodedMessage) {
        self.ideal_bits += message_size_bits(msg);
        self.framed_bits += framed_size_bits(msg);
    }

    /// One transfer of a dense `n`-vector of doubles.
    pub fn record_dense(&mut self, n: usize) {
        self.ideal_bits += dense_size_bits(n);
        self.framed_bits += dense_size_bits(n);
    }
}

/// Shared bookkeeping for CEPS and the baselines.
pub(crate) struct Recorder<'a> {
    env: &'a Environment,
    label: String,
    algorithm: Algorithm,
    tol: f64,
    min_comm_rounds: u64,
    accountant: PrivacyAccountant,
    clock: Clock,
    rows: Vec<MetricsRow>,
    wall_ms: Vec<f64>,
    round_grad_sq: Vec<f64>,
    last_round: u64,
    pub dtv: DtvCounter,
    pub failures: u64,
    pub clips: u64,
    e_inf: f64,
}

impl<'a> Recorder<'a> {
    pub(crate) fn new(env: &'a Environment, cfg: &ExperimentConfig, label: String) -> Result<Self> {
        Ok(Recorder {
            env,
            label,
            algorithm: cfg.algorithm,
            tol: cfg.effective_tol(),
            min_comm_rounds: cfg.termination.min_comm_rounds,
            accountant: PrivacyAccountant::new(cfg.privacy.params()?),
            clock: Clock::start(),
            rows: Vec::new(),
            wall_ms: Vec::new(),
            round_grad_sq: Vec::new(),
            last_round: 0,
            dtv: DtvCounter::default(),
            failures: 0,
            clips: 0,
            e_inf: 0.0,
        })
    }

    pub(crate) fn start(&mut self, ws: &[&[f64]]) -> Result<()> {
        let avg = average_point(ws)?;
        self.round_grad_sq.push(squared_norm(&self.env.global_gradient(&avg)?));
        Ok(())
    }

    /// Appends the snapshot after tick `tick`; returns the status if the run
    /// should stop.
    pub(crate) fn record(
        &mut self,
        tick: u64,
        comm_round: u64,
        ws: &[&[f64]],
        projection_error: f64,
    ) -> Result<Option<RunStatus>> {
        let avg = average_point(ws)?;
        let objective = self.env.global_objective(&avg)?;
        let residual = consensus_residual(ws, self.env.s.get())?;
        self.e_inf = self.e_inf.max(projection_error);
        self.accountant.set_rounds(comm_round);
        let spend = self.accountant.spend();
        while self.last_round < comm_round {
            self.last_round += 1;
            self.round_grad_sq.push(squared_norm(&self.env.global_gradient(&avg)?));
        }
        self.rows.push(MetricsRow {
            tick,
            comm_round,
            objective,
            consensus_residual: residual,
            dtv_bits_ideal: self.dtv.ideal_bits,
            dtv_bits_framed: self.dtv.framed_bits,
            eps_total: spend.epsilon_total,
            delta_total_raw: spend.delta_total_raw,
            delta_total_capped: spend.delta_total_capped,
            decode_failures: self.failures,
            clip_count: self.clips,
            e_inf_proxy: self.e_inf,
        });
        self.wall_ms.push(self.clock.elapsed_ms());
        if !objective.is_finite() || objective > DIVERGENCE_THRESHOLD || !residual.is_finite() {
            return Ok(Some(RunStatus::Diverged));
        }
        if comm_round >= self.min_comm_rounds && residual <= self.tol {
            return Ok(Some(RunStatus::Converged));
        }
        Ok(None)
    }

    pub(crate) fn finish(self, status: RunStatus, final_models: Vec<Vec<f64>>, eta: Option<f64>) -> MetricsTrace {
        MetricsTrace {
            label: self.label,
            algorithm: self.algorithm,
            rows: self.rows,
            wall_ms: self.wall_ms,
            status,
            tol: self.tol,
            round_grad_sq: self.round_grad_sq,
            final_models,
            eta,
        }
    }
}

/// Trace label such as `ceps-dp-1bcs` or `dpsgd-nodp`.
pub fn variant_label(cfg: &ExperimentConfig) -> String {
    let dp = if cfg.privacy.enabled { "dp" } else { "nodp" };
    match cfg.algorithm {
        Algorithm::Ceps => {
            let comm = if cfg.codec.perfect_comm { "perf" } else { "1bcs" };
            format!("ceps-{dp}-{comm}")
        }
        other => format!("{}-{dp}", other.tag()),
    }
}

pub fn run_ceps(cfg: &ExperimentConfig) -> Result<MetricsTrace> {
    let env = Environment::build(cfg)?;
    run_ceps_in(cfg, &env)
}

/// Per-node CEPS states as initialised for `cfg` on `env`.
pub fn init_states(cfg: &ExperimentConfig, env: &Environment) -> Result<Vec<NodeState>> {
    let hp = cfg.hyper_params()?;
    let m = env.num_nodes();
    let d = cfg.codec_dim(env.n);
    (0..m)
        .map(|i| {
            let sigma = sigma_from_lambda(env.gram[i].value, m, cfg.topology.r, d, cfg.ceps.sigma_scale);
            init_node(i, &env.spec, &env.nodes[i], &env.graph, &hp, sigma, cfg.seed)
        })
        .collect()
}

/// Runs CEPS on a prepared environment. Every random choice is drawn from a
/// per-node substream, so the result does not depend on update order.
pub fn run_ceps_in(cfg: &ExperimentConfig, env: &Environment) -> Result<MetricsTrace> {
    cfg.validate()?;
    if cfg.algorithm != Algorithm::Ceps {
        return Err(Error::Config(format!("run_ceps called with algorithm {}", cfg.algorithm)));
    }
    let m = env.num_nodes();
    let n = env.n;
    let s = env.s;
    let mu = cfg.ceps.mu;
    let d = cfg.codec_dim(n);
    let r = cfg.topology.r;
    let variance = effective_variance(&cfg.privacy.params()?);
    let clip = (cfg.privacy.enabled && cfg.privacy.clip).then_some(cfg.privacy.sensitivity);

    let mut states = init_states(cfg, env)?;
    let mut phis: Vec<Option<EncodingMatrix>> = vec![None; m];
    let node_rngs = |stream| -> Vec<SimRng> { (0..m).map(|i| substream(cfg.seed, stream, i as u64)).collect() };
    let mut selection_rngs = node_rngs(Stream::Selection);
    let mut latency_rngs = node_rngs(Stream::Latency);
    let mut noise_rngs = node_rngs(Stream::Noise);

    let mut rec = Recorder::new(env, cfg, variant_label(cfg))?;
    rec.start(&states.iter().map(|st| st.w.as_slice()).collect::<Vec<_>>())?;
    let mut status = RunStatus::MaxTicks;

    for k in 0..cfg.termination.max_ticks {
        // Who talks to whom this tick.
        let mut selections: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in (0..m).filter(|&i| states[i].communicates_at(k)) {
            let set = match cfg.topology.selection {
                SelectionRule::Uniform => select_for_node(&env.graph, i, r, &mut selection_rngs[i]),
                SelectionRule::Stragglers => {
                    let row = sample_latency_row(&env.graph, i, cfg.topology.latency_rate, &mut latency_rngs[i]);
                    let lat = Matrix::new(1, m, row)?;
                    responders_for_node_row(&env.graph, i, &lat, responder_count(&env.graph, i, r))
                }
            };
            selections.insert(i, set);
        }

        // Each requested sender encodes once; every receiver decodes the
        // same bits with the same matrix, so one decode serves all of them.
        let senders: BTreeSet<usize> = selections
            .iter()
            .flat_map(|(&i, set)| set.iter().copied().filter(move |&j| j != i))
            .collect();
        let mut delivered: BTreeMap<usize, (Option<Vec<f64>>, Option<EncodedMessage>)> = BTreeMap::new();
        for j in senders {
            if cfg.codec.perfect_comm {
                delivered.insert(j, (Some(states[j].w.clone()), None));
                continue;
            }
            let phi = phis[j].get_or_insert_with(|| {
                EncodingMatrix::generate(states[j].phi_seed, d, n, cfg.codec.density)
                    .expect("codec dimensions validated")
            });
            let msg = states[j].build_outgoing(phi)?;
            let wire = EncodedMessage::from_bytes(&msg.to_bytes())?;
            let z = match decode(&wire, phi, states[j].gamma, s, &cfg.codec.decoder) {
                Ok(z) => Some(z.into_inner()),
                Err(Error::DecodeFailure) => None,
                Err(e) => return Err(e),
            };
            delivered.insert(j, (z, Some(msg)));
        }

        let mut projection_error = 0.0;
        for (i, st) in states.iter_mut().enumerate() {
            let Some(set) = selections.get(&i) else {
                projection_error += st.local_step(mu, s);
                continue;
            };
            let mut incoming = Vec::with_capacity(set.len());
            for &j in set.iter().filter(|&&j| j != i) {
                let (z, msg) = &delivered[&j];
                match msg {
                    Some(msg) => rec.dtv.record_message(msg),
                    None => rec.dtv.record_dense(n),
                }
                incoming.push((j, z.as_deref().map_or(Incoming::Failed, Incoming::Decoded)));
            }
            let noise = sample_noise(variance, n, &mut noise_rngs[i]);
            let out = st.communication_step(&env.spec, &env.nodes[i], &incoming, &noise, s, clip)?;
            projection_error += out.projection_error;
            rec.failures += out.failures as u64;
            rec.clips += u64::from(out.clipped);
        }

        let comm_round = states.iter().map(|st| st.comm_steps).min().unwrap_or(0);
        let ws: Vec<&[f64]> = states.iter().map(|st| st.w.as_slice()).collect();
        if let Some(done) = rec.record(k, comm_round, &ws, projection_error)? {
            status = done;
            break;
        }
    }
    let models = states.into_iter().map(|st| st.w).collect();
    Ok(rec.finish(status, models, None))
}

/// Straggler selection from a single latency row (`lat` is `1 x m`).
fn responders_for_node_row(g: &TopologyGraph, i: usize, lat: &Matrix, t: usize) -> Vec<usize> {
    let m = g.num_nodes();
    let mut full = Matrix::zeros(m, m);
    for j in 0..m {
        full.set(i, j, lat.get(0, j));
    }
    responders_for_node(g, i, &full, t)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Running mean of `||grad f(avg)||^2` over communication rounds.
    pub running_avg_grad_sq: Vec<f64>,
    pub first_quarter_grad_sq: f64,
    pub last_quarter_grad_sq: f64,
    pub e_inf_proxy: f64,
    /// Gradient dispersion at the final average point.
    pub zeta_sq: f64,
    pub lipschitz: f64,
    pub window: usize,
    pub theory: Option<TheoryConstants>,
    pub window_connectivity_bound: f64,
}

pub fn diagnostics(trace: &MetricsTrace, env: &Environment, cfg: &ExperimentConfig) -> Result<Diagnostics> {
    if trace.rows.is_empty() || trace.final_models.is_empty() {
        return Err(Error::invalid("trace", "empty trace"));
    }
    let g = &trace.round_grad_sq;
    let mut running = Vec::with_capacity(g.len());
    let mut acc = 0.0;
    for (k, x) in g.iter().enumerate() {
        acc += x;
        running.push(acc / (k + 1) as f64);
    }
    let (first, last) = quarter_means(g);
    let refs: Vec<&[f64]> = trace.final_models.iter().map(Vec::as_slice).collect();
    let avg = average_point(&refs)?;
    let m = env.num_nodes();
    let lipschitz = env.lipschitz();
    let t: Vec<usize> = (0..m).map(|i| responder_count(&env.graph, i, cfg.topology.r)).collect();
    Ok(Diagnostics {
        running_avg_grad_sq: running,
        first_quarter_grad_sq: first,
        last_quarter_grad_sq: last,
        e_inf_proxy: trace.last().map_or(0.0, |r| r.e_inf_proxy),
        zeta_sq: env.gradient_dispersion(&avg)?,
        lipschitz,
        window: DIAGNOSTIC_WINDOW,
        theory: if m >= 2 && lipschitz > 0.0 {
            Some(theory_constants(m, DIAGNOSTIC_WINDOW, lipschitz)?)
        } else {
            None
        },
        window_connectivity_bound: window_connectivity_probability_bound(&t, DIAGNOSTIC_WINDOW),
    })
}

/// Means over the first and last quarter (at least one element each).
pub fn quarter_means(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let q = (xs.len() / 4).max(1);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    (mean(&xs[..q]), mean(&xs[xs.len() - q..]))
}
