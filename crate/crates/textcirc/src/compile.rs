//! Hardware-style compilation: lower circuits to the native gate set
//! {H, RZ, RZZ} with literal angles, and reduce physical width with a greedy
//! qubit-reuse pass that recycles qubits whose lifetime has ended through
//! mid-circuit reset.
//!
//! Lowering identities (exact, no global phase):
//!   RX(t)        = H RZ(t) H
//!   CRX(t, c, v) = H(v) RZ(t/2, v) RZZ(-t/2, c, v) H(v)
//! with RZ(t) = exp(-i t Z/2) and RZZ(t) = exp(-i t ZZ/2).

use serde::{Deserialize, Serialize};

use crate::circuit::{Angle, Circuit, Gate, ParamStore};
use crate::sim::SimError;

/// A circuit whose gates all lie in the native set with literal angles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoweredCircuit {
    pub circuit: Circuit,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub width: usize,
    pub two_qubit_count: usize,
    pub two_qubit_depth: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReuseReport {
    pub qubits_before: usize,
    pub qubits_after: usize,
    pub depth2q_before: usize,
    pub depth2q_after: usize,
    pub resets_inserted: usize,
}

/// Bind every parameter and rewrite RX/CRX onto the native gate set.
pub fn lower(circuit: &Circuit, params: &ParamStore) -> Result<LoweredCircuit, SimError> {
    let mut gates = Vec::with_capacity(circuit.gates.len() * 2);
    for g in &circuit.gates {
        match *g {
            Gate::Rx { qubit, angle } => {
                let t = angle.bind(params)?;
                gates.push(Gate::H { qubit });
                gates.push(Gate::Rz { qubit, angle: Angle::Lit(t) });
                gates.push(Gate::H { qubit });
            }
            Gate::Rz { qubit, angle } => {
                gates.push(Gate::Rz { qubit, angle: Angle::Lit(angle.bind(params)?) });
            }
            Gate::Crx { control, target, angle } => {
                let t = angle.bind(params)?;
                gates.push(Gate::H { qubit: target });
                gates.push(Gate::Rz { qubit: target, angle: Angle::Lit(t / 2.0) });
                gates.push(Gate::Rzz { a: control, b: target, angle: Angle::Lit(-t / 2.0) });
                gates.push(Gate::H { qubit: target });
            }
            Gate::Rzz { a, b, angle } => {
                gates.push(Gate::Rzz { a, b, angle: Angle::Lit(angle.bind(params)?) });
            }
            other => gates.push(other),
        }
    }
    Ok(LoweredCircuit { circuit: Circuit { gates, ..circuit.clone() } })
}

/// Two-qubit gate count, depth (longest chain of overlapping two-qubit
/// gates) and width.
pub fn depth_metrics(circuit: &Circuit) -> DepthMetrics {
    let mut per_qubit = vec![0usize; circuit.num_qubits];
    let mut count = 0usize;
    let mut depth = 0usize;
    for g in &circuit.gates {
        let qs = g.qubits();
        if g.is_unitary() && qs.len() == 2 {
            count += 1;
            let d = per_qubit[qs[0]].max(per_qubit[qs[1]]) + 1;
            per_qubit[qs[0]] = d;
            per_qubit[qs[1]] = d;
            depth = depth.max(d);
        }
    }
    DepthMetrics { width: circuit.num_qubits, two_qubit_count: count, two_qubit_depth: depth }
}

/// Re-linearise the circuit DAG so qubits die as early as possible.
///
/// Per-qubit gate order (the true dependency structure) is preserved; the
/// scheduler repeatedly picks the discard whose unscheduled causal cone
/// opens the fewest new qubits, emits that cone, and frees the qubit. The
/// remaining gates (the question block and terminal measures) follow at the
/// end. Emitting a predecessor-closed set in original-index order is a valid
/// topological order because dependencies only point forward in the stream.
fn schedule_stream(circuit: &Circuit) -> Vec<Gate> {
    // deterministic randomized restarts: salted tie-breaks, keep the
    // schedule with the smallest peak live width
    let (mut best, mut best_peak) = schedule_once(circuit, 0);
    for salt in 1..8u64 {
        let (s, peak) = schedule_once(circuit, salt);
        if peak < best_peak {
            best = s;
            best_peak = peak;
        }
    }
    best
}

fn schedule_once(circuit: &Circuit, salt: u64) -> (Vec<Gate>, usize) {
    let gates = &circuit.gates;
    let n = circuit.num_qubits;
    // predecessor per (gate, qubit): the previous gate index on that qubit
    let mut last_on: Vec<Option<usize>> = vec![None; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); gates.len()];
    for (i, g) in gates.iter().enumerate() {
        for q in g.qubits() {
            if let Some(p) = last_on[q] {
                preds[i].push(p);
            }
            last_on[q] = Some(i);
        }
    }
    let discards: Vec<usize> = gates
        .iter()
        .enumerate()
        .filter(|(_, g)| matches!(g, Gate::DiscardMark { .. }))
        .map(|(i, _)| i)
        .collect();

    let mut scheduled = vec![false; gates.len()];
    let mut live = vec![false; n];
    let mut peak = 0usize;
    let mut out: Vec<Gate> = Vec::with_capacity(gates.len());

    let cone_of = |target: usize, scheduled: &[bool]| -> Vec<usize> {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![target];
        while let Some(i) = stack.pop() {
            if scheduled[i] || !seen.insert(i) {
                continue;
            }
            stack.extend(preds[i].iter().copied());
        }
        let mut cone: Vec<usize> = seen.into_iter().collect();
        cone.sort_unstable();
        cone
    };

    let mut pending: Vec<usize> = discards;
    while !pending.is_empty() {
        let mut best: Option<((usize, usize, u64), Vec<usize>, usize)> = None;
        for (pi, &d) in pending.iter().enumerate() {
            let cone = cone_of(d, &scheduled);
            let mut newq = std::collections::HashSet::new();
            for &i in &cone {
                if matches!(gates[i], Gate::DiscardMark { .. }) {
                    continue;
                }
                for q in gates[i].qubits() {
                    if !live[q] {
                        newq.insert(q);
                    }
                }
            }
            let tie = if salt == 0 { d as u64 } else { crate::rngs::mix(d as u64 ^ (salt << 56)) };
            let key = (newq.len(), cone.len(), tie);
            if best.as_ref().map_or(true, |(bk, _, _)| key < *bk) {
                best = Some((key, cone, pi));
            }
        }
        let (_, cone, pi) = best.expect("pending discards remain");
        pending.swap_remove(pi);
        for i in cone {
            scheduled[i] = true;
            match gates[i] {
                Gate::DiscardMark { qubit } => live[qubit] = false,
                g => {
                    for q in g.qubits() {
                        live[q] = true;
                    }
                }
            }
            let live_now = live.iter().filter(|&&l| l).count();
            peak = peak.max(live_now);
            out.push(gates[i]);
        }
    }
    for (i, g) in gates.iter().enumerate() {
        if !scheduled[i] {
            for q in g.qubits() {
                if !matches!(g, Gate::DiscardMark { .. }) && !live[q] {
                    live[q] = true;
                }
            }
            peak = peak.max(live.iter().filter(|&&l| l).count());
            out.push(*g);
        }
    }
    (out, peak)
}

/// Greedy qubit reuse: scan the scheduled gate stream; a logical qubit
/// takes a physical slot at its first gate, preferring the slot that was
/// freed earliest, with a reset inserted; a discard frees the slot. Semantics are preserved (verified against the
/// unreused circuit on small instances); the two-qubit depth may increase.
pub fn reuse_qubits(lowered: &LoweredCircuit) -> (LoweredCircuit, ReuseReport) {
    let circuit = &lowered.circuit;
    let stream = schedule_stream(circuit);
    let before = depth_metrics(circuit);

    let mut phys_of: Vec<Option<usize>> = vec![None; circuit.num_qubits];
    let mut free: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    let mut next_phys = 0usize;
    let mut resets = 0usize;
    let mut gates = Vec::with_capacity(stream.len());
    for g in &stream {
        if let Gate::DiscardMark { qubit } = g {
            if phys_of[*qubit].is_none() {
                continue; // discarding an untouched |0> wire needs no slot
            }
        }
        for q in g.qubits() {
            if phys_of[q].is_none() {
                let p = if let Some(p) = free.pop_front() {
                    gates.push(Gate::Reset { qubit: p });
                    resets += 1;
                    p
                } else {
                    let p = next_phys;
                    next_phys += 1;
                    p
                };
                phys_of[q] = Some(p);
            }
        }
        let mapped = g.remap(|q| phys_of[q].expect("allocated above"));
        gates.push(mapped);
        if let Gate::DiscardMark { qubit } = g {
            free.push_back(phys_of[*qubit].expect("discarded qubit was live"));
        }
    }
    let map = |q: usize| phys_of[q].unwrap_or(usize::MAX);
    let reused = Circuit {
        num_qubits: next_phys,
        gates,
        discarded: circuit.discarded.iter().map(|&q| map(q)).collect(),
        measured: circuit.measured.iter().map(|&q| map(q)).collect(),
        wire_qubits: circuit
            .wire_qubits
            .iter()
            .map(|ws| ws.iter().map(|&q| map(q)).collect())
            .collect(),
    };
    let after = depth_metrics(&reused);
    let report = ReuseReport {
        qubits_before: circuit.num_qubits,
        qubits_after: next_phys,
        depth2q_before: before.two_qubit_depth,
        depth2q_after: after.two_qubit_depth,
        resets_inserted: resets,
    };
    (LoweredCircuit { circuit: reused }, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{functor_apply, gates_to_matrix, ParamStore};
    use crate::diagram::{apply_rewrites, parse_story, Dialect};
    use crate::linalg::CMat;
    use crate::sim::{evaluate, superop::evaluate_density_full, SimConfig};
    use crate::story::{generate_simple, DepthPolicy};
    use rand::Rng;

    fn dense_up_to_phase(a: &[Gate], b: &[Gate], n: usize, params: &ParamStore) -> f64 {
        let ua = gates_to_matrix(a, params, n).unwrap();
        let ub = gates_to_matrix(b, params, n).unwrap();
        ua.max_abs_diff_up_to_phase(&ub)
    }

    #[test]
    fn crx_zero_lowers_to_identity() {
        let params = ParamStore::zeros(Dialect::TwoDir);
        let crx = Gate::Crx { control: 0, target: 1, angle: Angle::Lit(0.0) };
        let c = Circuit {
            num_qubits: 2,
            gates: vec![crx],
            discarded: vec![],
            measured: vec![0, 1],
            wire_qubits: vec![vec![0], vec![1]],
        };
        let low = lower(&c, &params).unwrap();
        let u = gates_to_matrix(&low.circuit.gates, &params, 2).unwrap();
        assert!(u.max_abs_diff_up_to_phase(&CMat::identity(4)) < 1e-12);
    }

    #[test]
    fn crx_pi_lowers_to_cx_pattern() {
        let params = ParamStore::zeros(Dialect::TwoDir);
        let crx = [Gate::Crx { control: 0, target: 1, angle: Angle::Lit(std::f64::consts::PI) }];
        let c = Circuit {
            num_qubits: 2,
            gates: crx.to_vec(),
            discarded: vec![],
            measured: vec![0, 1],
            wire_qubits: vec![vec![0], vec![1]],
        };
        let low = lower(&c, &params).unwrap();
        assert!(dense_up_to_phase(&crx, &low.circuit.gates, 2, &params) < 1e-12);
        // |CRX(pi)| is the CX permutation (control = qubit 0, little-endian)
        let u = gates_to_matrix(&low.circuit.gates, &params, 2).unwrap();
        for (r, c_) in [(0usize, 0usize), (2, 2), (1, 3), (3, 1)] {
            assert!((u[(r, c_)].norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lowering_preserves_unitaries_on_random_circuits() {
        let params = ParamStore::zeros(Dialect::TwoDir);
        let mut rng = crate::rngs::stream_rng(5, 0, 0x10);
        for _ in 0..20 {
            let n = rng.gen_range(2..=4);
            let mut gates = Vec::new();
            for _ in 0..15 {
                let q = rng.gen_range(0..n);
                let t = (q + rng.gen_range(1..n)) % n;
                gates.push(match rng.gen_range(0..4) {
                    0 => Gate::Rx { qubit: q, angle: Angle::Lit(rng.gen_range(-3.1..3.1)) },
                    1 => Gate::Rz { qubit: q, angle: Angle::Lit(rng.gen_range(-3.1..3.1)) },
                    2 => Gate::H { qubit: q },
                    _ => Gate::Crx { control: q, target: t, angle: Angle::Lit(rng.gen_range(-3.1..3.1)) },
                });
            }
            let c = Circuit {
                num_qubits: n,
                gates: gates.clone(),
                discarded: vec![],
                measured: vec![0],
                wire_qubits: (0..n).map(|q| vec![q]).collect(),
            };
            let low = lower(&c, &params).unwrap();
            assert!(dense_up_to_phase(&gates, &low.circuit.gates, n, &params) < 1e-10);
            assert!(low.circuit.gates.iter().all(|g| matches!(
                g,
                Gate::H { .. }
                    | Gate::Rz { .. }
                    | Gate::Rzz { .. }
                    | Gate::Reset { .. }
                    | Gate::DiscardMark { .. }
                    | Gate::ProjectZeroMeasure { .. }
            )));
        }
    }

    #[test]
    fn lowering_rejects_unbound_symbols() {
        // walks_east is absent from the two-directional store
        let params = ParamStore::zeros(Dialect::TwoDir);
        let c = Circuit {
            num_qubits: 1,
            gates: vec![Gate::Rx {
                qubit: 0,
                angle: Angle::Ref(crate::diagram::Word::WalksEast, 0),
            }],
            discarded: vec![],
            measured: vec![0],
            wire_qubits: vec![vec![0]],
        };
        assert!(lower(&c, &params).is_err());
    }

    #[test]
    fn depth_metrics_examples() {
        let mk = |gates: Vec<Gate>, n: usize| Circuit {
            num_qubits: n,
            gates,
            discarded: vec![],
            measured: vec![0],
            wire_qubits: (0..n).map(|q| vec![q]).collect(),
        };
        // no 2q gates
        let c = mk(vec![Gate::H { qubit: 0 }], 2);
        assert_eq!(depth_metrics(&c).two_qubit_depth, 0);
        // serial chain of 3 on the same pair
        let z = |a, b| Gate::Rzz { a, b, angle: Angle::Lit(0.3) };
        let c = mk(vec![z(0, 1), z(0, 1), z(0, 1)], 2);
        assert_eq!(depth_metrics(&c).two_qubit_depth, 3);
        assert_eq!(depth_metrics(&c).two_qubit_count, 3);
        // parallel on disjoint pairs
        let c = mk(vec![z(0, 1), z(2, 3)], 4);
        assert_eq!(depth_metrics(&c).two_qubit_depth, 1);
    }

    #[test]
    fn reuse_is_identity_when_lifetimes_overlap() {
        let params = ParamStore::zeros(Dialect::TwoDir);
        let z = |a, b| Gate::Rzz { a, b, angle: Angle::Lit(0.3) };
        let c = Circuit {
            num_qubits: 3,
            gates: vec![
                z(0, 1),
                z(1, 2),
                z(0, 2),
                Gate::ProjectZeroMeasure { qubit: 0 },
                Gate::ProjectZeroMeasure { qubit: 1 },
                Gate::ProjectZeroMeasure { qubit: 2 },
            ],
            discarded: vec![],
            measured: vec![0, 1, 2],
            wire_qubits: (0..3).map(|q| vec![q]).collect(),
        };
        let low = lower(&c, &params).unwrap();
        let (reused, report) = reuse_qubits(&low);
        assert_eq!(report.qubits_after, 3);
        assert_eq!(report.resets_inserted, 0);
        assert_eq!(reused.circuit.num_qubits, 3);
    }

    #[test]
    fn disjoint_lifetimes_share_one_qubit() {
        let params = ParamStore::zeros(Dialect::TwoDir);
        let c = Circuit {
            num_qubits: 2,
            gates: vec![
                Gate::Rx { qubit: 0, angle: Angle::Lit(1.0) },
                Gate::DiscardMark { qubit: 0 },
                Gate::Rx { qubit: 1, angle: Angle::Lit(0.5) },
                Gate::ProjectZeroMeasure { qubit: 1 },
            ],
            discarded: vec![0],
            measured: vec![1],
            wire_qubits: vec![vec![0], vec![1]],
        };
        let low = lower(&c, &params).unwrap();
        let (reused, report) = reuse_qubits(&low);
        assert_eq!(report.qubits_after, 1);
        assert_eq!(report.resets_inserted, 1);
        assert_eq!(reused.circuit.num_qubits, 1);
    }

    #[test]
    fn reuse_preserves_output_probabilities() {
        // functor circuits with ancilla discards, evaluated before and after
        let params = ParamStore::random(Dialect::TwoDir, 33);
        let stories = generate_simple(Dialect::TwoDir, 2..=3, DepthPolicy::Simple, 15, 6).unwrap();
        let sim = SimConfig::default();
        for s in &stories {
            let d = apply_rewrites(&parse_story(s), s.dialect);
            let (pos, _) = functor_apply(&d, &params, &Default::default()).unwrap();
            if pos.num_qubits > 7 {
                continue;
            }
            let low = lower(&pos, &params).unwrap();
            let p_before = evaluate(&low.circuit, &params, &sim).unwrap();
            let (reused, report) = reuse_qubits(&low);
            assert!(report.qubits_after <= report.qubits_before);
            let p_after = evaluate_density_full(&reused.circuit, &params).unwrap();
            assert!(
                (p_before - p_after).abs() < 1e-10,
                "story {}: {p_before} vs {p_after}",
                s.id
            );
        }
    }
}
