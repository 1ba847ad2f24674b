//! Angle-dependent two-qubit depolarising noise with Monte-Carlo trajectory
//! sampling.
//!
//! Only the native RZZ gates acquire noise. After each RZZ(theta) the
//! channel fires with probability P2q(theta) = (a |theta|/pi^c + b) s p0,
//! read as a (|theta|/pi)^c + b with angles normalised to [-pi, pi); when it
//! fires, one of the fifteen non-identity two-qubit Paulis is applied
//! (identity with weight 1 - 15p/16, each other pair p/16). Trajectories
//! are pure-state runs whose average is the noisy channel, so estimates are
//! unbiased; each (instance, trajectory) pair draws from its own counter
//! seeded RNG stream and sweeps parallelise reproducibly.

use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{Circuit, Gate, ParamStore};
use crate::compile::{lower, reuse_qubits, LoweredCircuit};
use crate::linalg::CMat;
use crate::rngs::stream_rng;
use crate::sim::statevector::Statevector;
use crate::sim::{answer, evaluate_pair, SimConfig, SimError};
use crate::stats::{accuracy_cell, AccuracyCell};
use crate::story::Story;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("invalid shot plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Two-qubit depolarising strength specification; `s` scales the baseline
/// error rate `p0` (s = 1 models the reference device).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub p0: f64,
    pub s: f64,
}

impl NoiseModel {
    pub fn device_baseline(s: f64) -> Self {
        NoiseModel { a: 1.651, b: 0.175, c: 1.0, p0: 1.38e-3, s }
    }

    pub fn p(&self) -> f64 {
        self.s * self.p0
    }
}

/// Normalise an angle into [-pi, pi).
pub fn normalize_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let x = (theta + std::f64::consts::PI).rem_euclid(two_pi);
    x - std::f64::consts::PI
}

/// Error probability of an RZZ(theta) gate under the model; clamped to 1
/// (with a warning) for extreme scaling factors.
pub fn p2q(theta: f64, model: &NoiseModel) -> f64 {
    let t = normalize_angle(theta).abs() / std::f64::consts::PI;
    let p = (model.a * t.powf(model.c) + model.b) * model.p();
    if p > 1.0 {
        log::warn!("P2q({theta}) = {p} clamped to 1 (s = {})", model.s);
        return 1.0;
    }
    p
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

/// Draw a two-qubit Pauli from the depolarising Kraus weights: identity
/// with probability 1 - 15p/16, each of the other fifteen pairs p/16.
pub fn sample_pauli_pair(p: f64, rng: &mut impl Rng) -> (Pauli, Pauli) {
    let u: f64 = rng.gen();
    if u >= 15.0 * p / 16.0 {
        return (Pauli::I, Pauli::I);
    }
    // u is uniform on [0, 15p/16): index the 15 non-identity pairs
    let k = ((u * 16.0 / p) as usize).min(14) + 1;
    const TABLE: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
    (TABLE[k / 4], TABLE[k % 4])
}

fn apply_pauli(state: &mut Statevector, qubit: usize, pauli: Pauli) {
    let stride = 1usize << qubit;
    match pauli {
        Pauli::I => {}
        Pauli::X => {
            for i in 0..state.amps.len() {
                if i & stride == 0 {
                    state.amps.swap(i, i | stride);
                }
            }
        }
        Pauli::Y => {
            let (mi, pi) = (C64::new(0.0, -1.0), C64::new(0.0, 1.0));
            for i in 0..state.amps.len() {
                if i & stride == 0 {
                    let (a0, a1) = (state.amps[i], state.amps[i | stride]);
                    state.amps[i] = mi * a1;
                    state.amps[i | stride] = pi * a0;
                }
            }
        }
        Pauli::Z => {
            for (i, a) in state.amps.iter_mut().enumerate() {
                if i & stride != 0 {
                    *a = -*a;
                }
            }
        }
    }
}

/// How a trajectory turns into an estimate: averaging the projector
/// expectation per trajectory (lower variance, used for sweeps) or sampling
/// one bit per trajectory like hardware shots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimationMode {
    Expectation,
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotPlan {
    pub shots: usize,
    pub seed: u64,
    pub mode: EstimationMode,
}

impl ShotPlan {
    pub fn expectation(shots: usize, seed: u64) -> Self {
        ShotPlan { shots, seed, mode: EstimationMode::Expectation }
    }

    pub fn sampled(shots: usize, seed: u64) -> Self {
        ShotPlan { shots, seed, mode: EstimationMode::Sampled }
    }
}

/// Run one noisy trajectory of a lowered circuit, returning the final pure
/// state. Reset collapses the qubit with the measured-outcome probability.
fn run_trajectory(
    circuit: &Circuit,
    params: &ParamStore,
    model: &NoiseModel,
    rng: &mut impl Rng,
) -> Result<Statevector, SimError> {
    let mut psi = Statevector::zero_state(circuit.num_qubits);
    for gate in &circuit.gates {
        match gate {
            Gate::DiscardMark { .. } | Gate::ProjectZeroMeasure { .. } => {}
            Gate::Reset { qubit } => {
                let stride = 1usize << qubit;
                let p1: f64 = psi
                    .amps
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| i & stride != 0)
                    .map(|(_, a)| a.norm_sqr())
                    .sum();
                let outcome_one = rng.gen::<f64>() < p1;
                let keep_norm = if outcome_one { p1 } else { 1.0 - p1 };
                let scale = C64::new(1.0 / keep_norm.max(1e-300).sqrt(), 0.0);
                for i in 0..psi.amps.len() {
                    if i & stride == 0 {
                        let src = i | stride;
                        let kept = if outcome_one { psi.amps[src] } else { psi.amps[i] };
                        psi.amps[i] = kept * scale;
                        psi.amps[src] = C64::new(0.0, 0.0);
                    }
                }
            }
            g => {
                psi.apply_gate(g, params)?;
                if let Gate::Rzz { a, b, angle } = g {
                    let theta = angle.bind(params)?;
                    let (pa, pb) = sample_pauli_pair(p2q(theta, model), rng);
                    apply_pauli(&mut psi, *a, pa);
                    apply_pauli(&mut psi, *b, pb);
                }
            }
        }
    }
    Ok(psi)
}

/// Shot-estimated all-zeros probability of one lowered circuit.
///
/// Trajectories use counter-based RNG streams keyed by
/// (plan seed, instance id, trajectory index, salt).
pub fn noisy_evaluate(
    lowered: &LoweredCircuit,
    params: &ParamStore,
    model: &NoiseModel,
    plan: &ShotPlan,
    instance_id: u64,
    salt: u64,
) -> Result<f64, NoiseError> {
    if plan.shots == 0 {
        return Err(NoiseError::InvalidPlan("shots must be at least 1".into()));
    }
    let circuit = &lowered.circuit;
    let per_trajectory: Vec<f64> = (0..plan.shots)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(plan.seed, instance_id, (t as u64) << 8 | salt);
            let psi = run_trajectory(circuit, params, model, &mut rng)?;
            let p = psi.prob_all_zero(&circuit.measured);
            Ok(match plan.mode {
                EstimationMode::Expectation => p,
                EstimationMode::Sampled => f64::from(rng.gen::<f64>() < p),
            })
        })
        .collect::<Result<_, SimError>>()?;
    Ok(per_trajectory.iter().sum::<f64>() / plan.shots as f64)
}

/// Noisy estimate of the answer of one instance (positive and negative
/// lowered circuits share the plan but draw independent streams).
pub fn noisy_answer(
    pos: &LoweredCircuit,
    neg: &LoweredCircuit,
    params: &ParamStore,
    model: &NoiseModel,
    plan: &ShotPlan,
    instance_id: u64,
) -> Result<(f64, f64, bool), NoiseError> {
    let p_pos = noisy_evaluate(pos, params, model, plan, instance_id, 0)?;
    let p_neg = noisy_evaluate(neg, params, model, plan, instance_id, 1)?;
    let (ans, _) = answer(p_pos, p_neg);
    Ok((p_pos, p_neg, ans))
}

/// Trajectory-averaged density matrix of a small lowered circuit; used to
/// cross-check the sampler against the analytic depolarising channel.
pub fn trajectory_mean_density(
    lowered: &LoweredCircuit,
    params: &ParamStore,
    model: &NoiseModel,
    trajectories: usize,
    seed: u64,
) -> Result<CMat, NoiseError> {
    let n = lowered.circuit.num_qubits;
    let dim = 1usize << n;
    let partials: Vec<CMat> = (0..trajectories)
        .into_par_iter()
        .fold(
            || CMat::zeros(dim),
            |mut acc, t| {
                let mut rng = stream_rng(seed, 0, t as u64);
                let psi = run_trajectory(&lowered.circuit, params, model, &mut rng)
                    .expect("trajectory");
                for i in 0..dim {
                    for j in 0..dim {
                        acc[(i, j)] += psi.amps[i] * psi.amps[j].conj();
                    }
                }
                acc
            },
        )
        .collect();
    let mut sum = CMat::zeros(dim);
    for p in partials {
        sum = sum.add(&p);
    }
    Ok(sum.scale(C64::new(1.0 / trajectories as f64, 0.0)))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub s: f64,
    pub cell: AccuracyCell,
}

/// Accuracy-vs-width table per noise scaling factor. Stories are compiled
/// through the trained functor, lowered, and passed through the qubit-reuse
/// pass (matching how hardware would run them) before trajectory sampling.
/// The s = 0 entry routes through the exact engine, so it is identical to
/// the noiseless accuracy table.
pub fn noise_sweep(
    stories: &[Story],
    params: &ParamStore,
    s_list: &[f64],
    plan: &ShotPlan,
    sim: &SimConfig,
) -> Result<Vec<SweepRow>, NoiseError> {
    use std::collections::BTreeMap;
    let config = crate::circuit::FunctorConfig::default();
    // compile once, reuse across noise levels
    let mut compiled = Vec::with_capacity(stories.len());
    for story in stories {
        let d = crate::diagram::apply_rewrites(&crate::diagram::parse_story(story), story.dialect);
        let (pos, neg) = crate::circuit::functor_apply(&d, params, &config)
            .map_err(SimError::Circuit)?;
        let (low_pos, _) = reuse_qubits(&lower(&pos, params)?);
        let (low_neg, _) = reuse_qubits(&lower(&neg, params)?);
        compiled.push((story, pos, neg, low_pos, low_neg));
    }
    let mut rows = Vec::new();
    for &s in s_list {
        let model = NoiseModel::device_baseline(s);
        let mut strata: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for (idx, (story, pos, neg, low_pos, low_neg)) in compiled.iter().enumerate() {
            let predicted = if s == 0.0 {
                evaluate_pair(pos, neg, params, sim)?.answer
            } else {
                noisy_answer(low_pos, low_neg, params, &model, plan, idx as u64)?.2
            };
            let e = strata.entry(story.width).or_default();
            e.0 += (predicted == story.label) as usize;
            e.1 += 1;
        }
        for (width, (ok, n)) in strata {
            rows.push(SweepRow { s, cell: accuracy_cell(width, ok, n) });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Angle;
    use crate::diagram::Dialect;
    use crate::linalg::trace_distance;

    #[test]
    fn p2q_reference_values() {
        let m = NoiseModel::device_baseline(1.0);
        assert!((p2q(0.0, &m) - 2.415e-4).abs() / 2.415e-4 < 1e-9);
        // theta = pi normalises to -pi: full-angle error rate
        assert!((p2q(std::f64::consts::PI, &m) - 2.51988e-3).abs() / 2.51988e-3 < 1e-9);
        let zero = NoiseModel::device_baseline(0.0);
        assert_eq!(p2q(1.0, &zero), 0.0);
    }

    #[test]
    fn angle_normalisation() {
        let pi = std::f64::consts::PI;
        assert!((normalize_angle(pi) - (-pi)).abs() < 1e-12);
        assert!((normalize_angle(3.0 * pi) - (-pi)).abs() < 1e-12);
        assert!(normalize_angle(0.3) - 0.3 < 1e-12);
        assert!((normalize_angle(-pi) - (-pi)).abs() < 1e-12);
    }

    #[test]
    fn pauli_pair_distribution() {
        // empirical frequencies at p = 0.5 within 3 sigma over 10^5 draws
        let p = 0.5;
        let n = 100_000usize;
        let mut rng = stream_rng(5, 0, 0);
        let mut counts = std::collections::HashMap::new();
        for _ in 0..n {
            *counts.entry(sample_pauli_pair(p, &mut rng)).or_insert(0usize) += 1;
        }
        let p_ii = 1.0 - 15.0 * p / 16.0;
        let expect_ii = n as f64 * p_ii;
        let sd_ii = (n as f64 * p_ii * (1.0 - p_ii)).sqrt();
        let ii = counts[&(Pauli::I, Pauli::I)] as f64;
        assert!((ii - expect_ii).abs() < 3.0 * sd_ii, "II count {ii} vs {expect_ii}");
        let p_other = p / 16.0;
        let sd = (n as f64 * p_other * (1.0 - p_other)).sqrt();
        for (pair, c) in &counts {
            if *pair == (Pauli::I, Pauli::I) {
                continue;
            }
            let diff = (*c as f64 - n as f64 * p_other).abs();
            assert!(diff < 3.5 * sd, "{pair:?}: {c}");
        }
        assert_eq!(counts.len(), 16);
    }

    #[test]
    fn zero_probability_always_identity() {
        let mut rng = stream_rng(1, 0, 0);
        for _ in 0..100 {
            assert_eq!(sample_pauli_pair(0.0, &mut rng), (Pauli::I, Pauli::I));
        }
    }

    fn single_rzz_test_circuit(theta: f64) -> Circuit {
        Circuit {
            num_qubits: 2,
            gates: vec![
                Gate::H { qubit: 0 },
                Gate::H { qubit: 1 },
                Gate::Rzz { a: 0, b: 1, angle: Angle::Lit(theta) },
                Gate::ProjectZeroMeasure { qubit: 0 },
                Gate::ProjectZeroMeasure { qubit: 1 },
            ],
            discarded: vec![],
            measured: vec![0, 1],
            wire_qubits: vec![vec![0], vec![1]],
        }
    }

    #[test]
    fn trajectory_average_matches_analytic_channel() {
        // D(sigma) = (1 - P) sigma + P I/4 with P = p2q(theta)
        let theta = 1.3;
        let model = NoiseModel::device_baseline(40.0); // strong noise: visible effect
        let params = ParamStore::zeros(Dialect::TwoDir);
        let c = single_rzz_test_circuit(theta);
        let lowered = LoweredCircuit { circuit: c.clone() };
        let rho_hat =
            trajectory_mean_density(&lowered, &params, &model, 100_000, 7).unwrap();

        // analytic: ideal output state, then the depolarising channel
        let ideal = crate::circuit::gates_to_matrix(
            &c.gates[..3].to_vec(),
            &params,
            2,
        )
        .unwrap();
        let mut psi0 = vec![crate::linalg::ZERO; 4];
        psi0[0] = crate::linalg::ONE;
        let psi = ideal.apply(&psi0);
        let mut sigma = CMat::zeros(4);
        for i in 0..4 {
            for j in 0..4 {
                sigma[(i, j)] = psi[i] * psi[j].conj();
            }
        }
        let p = p2q(theta, &model);
        let mut analytic = sigma.scale(C64::new(1.0 - p, 0.0));
        for i in 0..4 {
            analytic[(i, i)] += C64::new(p / 4.0, 0.0);
        }
        let dist = trace_distance(&rho_hat, &analytic);
        assert!(dist < 0.01, "trace distance {dist}");
    }

    #[test]
    fn noiseless_limit_matches_exact_evaluation() {
        let params = ParamStore::zeros(Dialect::TwoDir);
        let c = single_rzz_test_circuit(0.9);
        let exact = crate::sim::evaluate(&c, &params, &SimConfig::default()).unwrap();
        let lowered = LoweredCircuit { circuit: c };
        let model = NoiseModel::device_baseline(0.0);
        let plan = ShotPlan::expectation(64, 3);
        let p = noisy_evaluate(&lowered, &params, &model, &plan, 0, 0).unwrap();
        assert!((p - exact).abs() < 1e-12, "{p} vs {exact}");
    }

    #[test]
    fn zero_shots_is_an_invalid_plan() {
        let params = ParamStore::zeros(Dialect::TwoDir);
        let lowered = LoweredCircuit { circuit: single_rzz_test_circuit(0.4) };
        let model = NoiseModel::device_baseline(1.0);
        let plan = ShotPlan::expectation(0, 1);
        assert!(matches!(
            noisy_evaluate(&lowered, &params, &model, &plan, 0, 0),
            Err(NoiseError::InvalidPlan(_))
        ));
    }

    #[test]
    fn noisy_estimates_are_reproducible() {
        let params = ParamStore::zeros(Dialect::TwoDir);
        let lowered = LoweredCircuit { circuit: single_rzz_test_circuit(0.9) };
        let model = NoiseModel::device_baseline(25.0);
        let plan = ShotPlan::sampled(50, 11);
        let a = noisy_evaluate(&lowered, &params, &model, &plan, 3, 0).unwrap();
        let b = noisy_evaluate(&lowered, &params, &model, &plan, 3, 0).unwrap();
        assert_eq!(a, b);
        let c = noisy_evaluate(&lowered, &params, &model, &plan, 4, 0).unwrap();
        assert_ne!(a, c); // different instance stream
    }
}
