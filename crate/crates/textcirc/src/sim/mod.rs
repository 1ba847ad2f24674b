//! Exact evaluation of question-answering circuits and adjoint-mode
//! gradients.
//!
//! `evaluate` picks an engine per circuit:
//!
//! 1. pure statevector over all qubits (ancillas included) when the total
//!    fits the qubit limit — the fast path, and the only one that supports
//!    gradients;
//! 2. the wire-density channel engine when the noun wires fit the density
//!    limit — memory 2^(2 wires), independent of how many ancilla-carrying
//!    boxes the story has;
//! 3. branch-tree evaluation otherwise, bounded by the live width.
//!
//! All three agree to 1e-10 on overlapping instances (cross-checked in the
//! test suites); results are deterministic, including under batch
//! parallelism.

pub mod branching;
pub mod statevector;
pub mod superop;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{Circuit, CircuitError, Gate, ParamStore};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{engine} engine needs {qubits} qubits, limit is {limit}")]
    Resource { qubits: usize, limit: usize, engine: &'static str },
    #[error("cannot apply a non-unitary gate here")]
    NonUnitaryGate,
    #[error("statevector norm drifted to {0}")]
    NormDrift(f64),
    #[error("unsupported circuit for this engine: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SimConfig {
    /// Pure-statevector limit (total qubits including ancillas).
    pub qubit_limit: usize,
    /// Wire-density engine limit (noun-wire qubits; memory is 2^(2w) * 16 B).
    pub density_wire_limit: usize,
    /// Assert norm preservation after every gate (slow; for tests).
    pub check_norms: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { qubit_limit: 26, density_wire_limit: 14, check_norms: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub p_pos: f64,
    pub p_neg: f64,
    pub answer: bool,
    /// Pre-softmax scores, i.e. the two projector expectations.
    pub logits: (f64, f64),
    pub softmax: (f64, f64),
}

/// Softmax over the two projector expectations; the answer is positive iff
/// its softmax weight is at least one half (ties resolve to positive).
pub fn answer(p_pos: f64, p_neg: f64) -> (bool, (f64, f64)) {
    let m = p_pos.max(p_neg);
    let (e1, e2) = ((p_pos - m).exp(), (p_neg - m).exp());
    let s1 = e1 / (e1 + e2);
    (s1 >= 0.5, (s1, 1.0 - s1))
}

fn wire_qubit_count(circuit: &Circuit) -> usize {
    let mut q: Vec<usize> = circuit.wire_qubits.iter().flatten().copied().collect();
    q.sort_unstable();
    q.dedup();
    q.len()
}

fn has_reset(circuit: &Circuit) -> bool {
    circuit.gates.iter().any(|g| matches!(g, Gate::Reset { .. }))
}

/// Probability of the all-zeros outcome on the measured qubits, marginalised
/// over discarded qubits. Engine chosen per the config limits.
pub fn evaluate(circuit: &Circuit, params: &ParamStore, config: &SimConfig) -> Result<f64, SimError> {
    if has_reset(circuit) {
        // reset is a channel: only the density engine evaluates it exactly
        if circuit.num_qubits <= config.density_wire_limit {
            return superop::evaluate_density_full(circuit, params);
        }
        return Err(SimError::Resource {
            qubits: circuit.num_qubits,
            limit: config.density_wire_limit,
            engine: "density (reset circuits)",
        });
    }
    if circuit.num_qubits <= config.qubit_limit {
        return statevector::evaluate_pure(circuit, params, config.check_norms);
    }
    if wire_qubit_count(circuit) <= config.density_wire_limit {
        match superop::compile_channels(circuit, params) {
            Ok(prog) => return Ok(prog.evaluate()),
            Err(SimError::Unsupported(_)) => {}
            Err(e) => return Err(e),
        }
    }
    branching::evaluate_branching(circuit, params, config.qubit_limit)
}

/// Evaluate the positive and negative circuits of one instance, sharing the
/// text-state evolution where the engine allows it.
pub fn evaluate_pair(
    pos: &Circuit,
    neg: &Circuit,
    params: &ParamStore,
    config: &SimConfig,
) -> Result<EvalResult, SimError> {
    let (p_pos, p_neg) = if !has_reset(pos) && pos.num_qubits <= config.qubit_limit {
        let prefix = pos.common_prefix_len(neg);
        let mut psi = statevector::Statevector::zero_state(pos.num_qubits);
        for g in pos.gates[..prefix].iter().filter(|g| g.is_unitary()) {
            psi.apply_gate(g, params)?;
        }
        let mut psi_neg = psi.clone();
        for g in pos.gates[prefix..].iter().filter(|g| g.is_unitary()) {
            psi.apply_gate(g, params)?;
        }
        for g in neg.gates[prefix..].iter().filter(|g| g.is_unitary()) {
            psi_neg.apply_gate(g, params)?;
        }
        (psi.prob_all_zero(&pos.measured), psi_neg.prob_all_zero(&neg.measured))
    } else if !has_reset(pos) && wire_qubit_count(pos) <= config.density_wire_limit {
        match (
            superop::compile_channels(pos, params),
            superop::compile_channels(neg, params),
        ) {
            (Ok(a), Ok(b)) => superop::ChannelProgram::evaluate_pair(&a, &b)?,
            _ => (evaluate(pos, params, config)?, evaluate(neg, params, config)?),
        }
    } else {
        (evaluate(pos, params, config)?, evaluate(neg, params, config)?)
    };
    let (ans, softmax) = answer(p_pos, p_neg);
    Ok(EvalResult { p_pos, p_neg, answer: ans, logits: (p_pos, p_neg), softmax })
}

#[derive(Clone, Debug)]
pub struct GradResult {
    pub loss: f64,
    pub result: EvalResult,
    /// d loss / d theta per word parameter (same shape as the store).
    pub grads: ParamStore,
    /// Set when the loss needed the log-argument clamp.
    pub clamped: bool,
}

const LOG_CLAMP: f64 = 1e-12;

/// Binary cross-entropy of the softmax answer against the label, with
/// adjoint-mode gradients accumulated across every occurrence of each shared
/// word in both circuits.
pub fn gradient(
    pos: &Circuit,
    neg: &Circuit,
    params: &ParamStore,
    label: bool,
) -> Result<GradResult, SimError> {
    if pos.num_qubits > SimConfig::default().qubit_limit {
        return Err(SimError::Resource {
            qubits: pos.num_qubits,
            limit: SimConfig::default().qubit_limit,
            engine: "adjoint (pure statevector)",
        });
    }
    let (p_pos, grads_pos) = statevector::adjoint_gradient(pos, params)?;
    let (p_neg, grads_neg) = statevector::adjoint_gradient(neg, params)?;
    let (ans, (s1, s2)) = answer(p_pos, p_neg);

    let y = if label { 1.0 } else { 0.0 };
    let mut clamped = false;
    let mut ln = |x: f64| {
        if x < LOG_CLAMP {
            clamped = true;
            LOG_CLAMP.ln()
        } else {
            x.ln()
        }
    };
    let loss = -(y * ln(s1) + (1.0 - y) * ln(s2));
    // d loss / d p_pos = s1 - y and d loss / d p_neg = -(s1 - y)
    let coeff = s1 - y;
    let mut grads = ParamStore::zeros(params.dialect);
    for ((w, g), (_, gp)) in grads.words_mut().zip(grads_pos.words()) {
        let gn = grads_neg.get(w).expect("same vocabulary");
        for i in 0..g.len() {
            g[i] = coeff * (gp[i] - gn[i]);
        }
    }
    Ok(GradResult {
        loss,
        result: EvalResult {
            p_pos,
            p_neg,
            answer: ans,
            logits: (p_pos, p_neg),
            softmax: (s1, s2),
        },
        grads,
        clamped,
    })
}

/// Evaluate many instances; failures are per-instance and do not abort the
/// batch. With `parallelism > 1` the work is farmed out, but results are
/// positionally identical to the sequential run.
pub fn batch_evaluate(
    instances: &[(Circuit, Circuit)],
    params: &ParamStore,
    config: &SimConfig,
    parallelism: usize,
) -> Vec<Result<EvalResult, SimError>> {
    if parallelism <= 1 {
        instances.iter().map(|(p, n)| evaluate_pair(p, n, params, config)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .expect("thread pool");
        pool.install(|| {
            instances
                .par_iter()
                .map(|(p, n)| evaluate_pair(p, n, params, config))
                .collect()
        })
    }
}

/// Gradient accumulation over a batch with a fixed (sequential) reduction
/// order; per-instance gradients may be computed in parallel.
pub fn batch_gradient(
    instances: &[(Circuit, Circuit, bool)],
    params: &ParamStore,
    parallelism: usize,
) -> Result<(f64, ParamStore, Vec<EvalResult>), SimError> {
    let results: Vec<Result<GradResult, SimError>> = if parallelism <= 1 {
        instances.iter().map(|(p, n, y)| gradient(p, n, params, *y)).collect()
    } else {
        instances
            .par_iter()
            .map(|(p, n, y)| gradient(p, n, params, *y))
            .collect()
    };
    let mut total_loss = 0.0;
    let mut acc = ParamStore::zeros(params.dialect);
    let mut evals = Vec::with_capacity(instances.len());
    let m = instances.len().max(1) as f64;
    for r in results {
        let r = r?;
        total_loss += r.loss / m;
        for ((_, a), (_, g)) in acc.words_mut().zip(r.grads.words()) {
            for i in 0..a.len() {
                a[i] += g[i] / m;
            }
        }
        evals.push(r.result);
    }
    Ok((total_loss, acc, evals))
}

/// Per-word squared gradient norm, for diagnostics.
pub fn grad_norm(grads: &ParamStore) -> f64 {
    grads.words().map(|(_, v)| v.iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt()
}

pub use statevector::adjoint_gradient;

#[allow(unused_imports)]
pub(crate) use superop::compile_channels;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{functor_apply, gates_to_matrix, Angle, FunctorConfig};
    use crate::diagram::{apply_rewrites, parse_story, Dialect};
    use crate::story::{generate_simple, DepthPolicy, Story};
    use rand::Rng;

    /// Dense matrix-chain oracle for the projector expectation.
    fn dense_oracle(circuit: &Circuit, params: &ParamStore) -> f64 {
        let unitaries: Vec<Gate> =
            circuit.gates.iter().copied().filter(Gate::is_unitary).collect();
        let u = gates_to_matrix(&unitaries, params, circuit.num_qubits).unwrap();
        let dim = 1usize << circuit.num_qubits;
        let mut psi = vec![crate::linalg::ZERO; dim];
        psi[0] = crate::linalg::ONE;
        let psi = u.apply(&psi);
        let mask = circuit.measured.iter().fold(0usize, |m, &q| m | (1 << q));
        psi.iter()
            .enumerate()
            .filter(|(i, _)| i & mask == 0)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    fn random_circuit(num_qubits: usize, gates: usize, seed: u64) -> Circuit {
        let mut rng = crate::rngs::stream_rng(seed, 0, 0xC1C);
        let mut gs = Vec::new();
        for _ in 0..gates {
            let q = rng.gen_range(0..num_qubits);
            let t = (q + rng.gen_range(1..num_qubits.max(2))) % num_qubits;
            gs.push(match rng.gen_range(0..5) {
                0 => Gate::Rx { qubit: q, angle: Angle::Lit(rng.gen_range(-3.0..3.0)) },
                1 => Gate::Rz { qubit: q, angle: Angle::Lit(rng.gen_range(-3.0..3.0)) },
                2 => Gate::H { qubit: q },
                3 if t != q => {
                    Gate::Crx { control: q, target: t, angle: Angle::Lit(rng.gen_range(-3.0..3.0)) }
                }
                _ if t != q => {
                    Gate::Rzz { a: q, b: t, angle: Angle::Lit(rng.gen_range(-3.0..3.0)) }
                }
                _ => Gate::H { qubit: q },
            });
        }
        let measured = vec![0];
        gs.push(Gate::ProjectZeroMeasure { qubit: 0 });
        Circuit {
            num_qubits,
            gates: gs,
            discarded: (1..num_qubits).collect(),
            measured,
            wire_qubits: (0..num_qubits).map(|q| vec![q]).collect(),
        }
    }

    #[test]
    fn single_rx_pi_gives_zero() {
        let params = ParamStore::zeros(Dialect::TwoDir);
        let c = Circuit {
            num_qubits: 1,
            gates: vec![
                Gate::Rx { qubit: 0, angle: Angle::Lit(std::f64::consts::PI) },
                Gate::ProjectZeroMeasure { qubit: 0 },
            ],
            discarded: vec![],
            measured: vec![0],
            wire_qubits: vec![vec![0]],
        };
        let p = evaluate(&c, &params, &SimConfig::default()).unwrap();
        assert!(p.abs() < 1e-12);
    }

    #[test]
    fn random_circuits_match_dense_oracle() {
        let params = ParamStore::zeros(Dialect::TwoDir);
        for seed in 0..20 {
            let c = random_circuit(3, 25, seed);
            let p = evaluate(&c, &params, &SimConfig::default()).unwrap();
            let oracle = dense_oracle(&c, &params);
            assert!((p - oracle).abs() < 1e-10, "seed {seed}: {p} vs {oracle}");
        }
    }

    #[test]
    fn answer_softmax_values() {
        let (ans, (s1, s2)) = answer(1.0, 0.0);
        assert!(ans);
        assert!((s1 - 0.7310585786300049).abs() < 1e-12);
        assert!((s2 - 0.2689414213699951).abs() < 1e-12);
        let (ans_tie, (t1, _)) = answer(0.4, 0.4);
        assert!(ans_tie);
        assert!((t1 - 0.5).abs() < 1e-15);
        let (ans_neg, _) = answer(0.0, 1.0);
        assert!(!ans_neg);
    }

    fn story_instances(
        dialect: Dialect,
        widths: std::ops::RangeInclusive<usize>,
        count: usize,
        seed: u64,
        params: &ParamStore,
    ) -> Vec<(Circuit, Circuit, Story)> {
        let stories = generate_simple(dialect, widths, DepthPolicy::Simple, count, seed).unwrap();
        stories
            .into_iter()
            .map(|s| {
                let d = apply_rewrites(&parse_story(&s), s.dialect);
                let (p, n) = functor_apply(&d, params, &FunctorConfig::default()).unwrap();
                (p, n, s)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let params = ParamStore::random(Dialect::TwoDir, 11);
        let cfg = SimConfig::default();
        let instances = story_instances(Dialect::TwoDir, 2..=3, 4, 5, &params);
        let h = 1e-5;
        for (pos, neg, story) in &instances {
            let g = gradient(pos, neg, &params, story.label).unwrap();
            let flat = params.to_flat();
            let grad_flat = g.grads.to_flat();
            for k in 0..flat.len() {
                let mut up = flat.clone();
                up[k] += h;
                let mut dn = flat.clone();
                dn[k] -= h;
                let loss_at = |p: &ParamStore| {
                    let r = evaluate_pair(pos, neg, p, &cfg).unwrap();
                    let y = if story.label { 1.0 } else { 0.0 };
                    -(y * r.softmax.0.ln() + (1.0 - y) * r.softmax.1.ln())
                };
                let fd = (loss_at(&params.from_flat(&up)) - loss_at(&params.from_flat(&dn)))
                    / (2.0 * h);
                let denom = fd.abs().max(grad_flat[k].abs()).max(1e-4);
                assert!(
                    (fd - grad_flat[k]).abs() / denom < 1e-5,
                    "param {k}: adjoint {} vs fd {}",
                    grad_flat[k],
                    fd
                );
            }
        }
    }

    #[test]
    fn gradient_of_unused_word_is_zero() {
        let params = ParamStore::random(Dialect::FourDir, 2);
        // two-actor story with no east/west/left words
        let instances = story_instances(Dialect::FourDir, 2..=2, 6, 8, &params);
        for (pos, neg, story) in &instances {
            let used: std::collections::HashSet<crate::circuit::Word> = pos
                .gates
                .iter()
                .chain(&neg.gates)
                .filter_map(|g| g.angle().and_then(|a| a.reference()).map(|(w, _, _)| w))
                .collect();
            let g = gradient(pos, neg, &params, story.label).unwrap();
            for (w, v) in g.grads.words() {
                if !used.contains(&w) {
                    assert!(v.iter().all(|x| *x == 0.0), "unused {w:?} got gradient");
                }
            }
        }
    }

    #[test]
    fn gradient_finite_at_zero_params() {
        let params = ParamStore::zeros(Dialect::TwoDir);
        let instances = story_instances(Dialect::TwoDir, 2..=2, 1, 9, &params);
        let (pos, neg, _) = &instances[0];
        let g = gradient(pos, neg, &params, true).unwrap();
        assert!(g.loss.is_finite());
        assert!(g.grads.to_flat().iter().all(|x| x.is_finite()));
        assert!(!g.clamped);
    }

    #[test]
    fn batch_matches_sequential_and_any_parallelism() {
        let params = ParamStore::random(Dialect::TwoDir, 15);
        let instances: Vec<(Circuit, Circuit)> =
            story_instances(Dialect::TwoDir, 2..=4, 12, 3, &params)
                .into_iter()
                .map(|(p, n, _)| (p, n))
                .collect();
        let cfg = SimConfig::default();
        let seq = batch_evaluate(&instances, &params, &cfg, 1);
        let par = batch_evaluate(&instances, &params, &cfg, 4);
        for (a, b) in seq.iter().zip(&par) {
            assert_eq!(a.as_ref().unwrap(), b.as_ref().unwrap());
        }
    }

    #[test]
    fn qubit_limit_is_reported() {
        let params = ParamStore::random(Dialect::TwoDir, 1);
        let instances = story_instances(Dialect::TwoDir, 4..=4, 1, 2, &params);
        let (pos, _, _) = &instances[0];
        let tight = SimConfig { qubit_limit: 2, density_wire_limit: 2, check_norms: false };
        let err = evaluate(pos, &params, &tight).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("limit is 2"), "{text}");
    }

    #[test]
    fn discard_marginalisation_matches_density_oracle() {
        // circuits with ancillas: pure marginalisation vs full density engine
        let params = ParamStore::random(Dialect::TwoDir, 21);
        let instances = story_instances(Dialect::TwoDir, 2..=2, 6, 14, &params);
        for (pos, _, _) in &instances {
            if pos.num_qubits > 6 {
                continue;
            }
            let pure = statevector::evaluate_pure(pos, &params, false).unwrap();
            let dm = superop::evaluate_density_full(pos, &params).unwrap();
            assert!((pure - dm).abs() < 1e-10);
        }
    }
}
