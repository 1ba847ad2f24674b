//! Density-matrix evaluation via in-place superoperators.
//!
//! Two entry points:
//!
//! - [`evaluate_density_full`] keeps every circuit qubit and applies one
//!   superoperator per gate. It supports `Reset` and mid-circuit discards
//!   exactly, at 2^(2q) memory, so it is the reference engine for small
//!   circuits (qubit-reuse verification, channel oracles).
//! - [`compile_channels`] + [`ChannelProgram::evaluate`] handle functor
//!   circuits whose ancillas are each confined to one box: the box block is
//!   contracted with the ancilla's |0> in/out legs into a two-qubit Kraus
//!   pair, so the density matrix only ever spans the noun wires. The final
//!   question block is pulled into an effect vector, which also lets the
//!   positive and negative questions share one evolution.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::circuit::{gates_to_matrix, Circuit, Gate, ParamStore};
use crate::linalg::CMat;
use crate::sim::SimError;

const Z: C64 = C64::new(0.0, 0.0);

/// 4x4 superoperator of a single-qubit map given its Kraus operators.
fn super1_of_kraus(kraus: &[[C64; 4]]) -> [C64; 16] {
    // local density index L = 2*ket + bra
    let mut m = [Z; 16];
    for k in kraus {
        for ko in 0..2 {
            for bo in 0..2 {
                for ki in 0..2 {
                    for bi in 0..2 {
                        m[(ko * 2 + bo) * 4 + (ki * 2 + bi)] +=
                            k[ko * 2 + ki] * k[bo * 2 + bi].conj();
                    }
                }
            }
        }
    }
    m
}

fn reset_super1() -> [C64; 16] {
    // rho' = |0><0| rho(0,0)+rho(1,1): Kraus |0><0| and |0><1|
    let k0 = [C64::new(1.0, 0.0), Z, Z, Z];
    let k1 = [Z, C64::new(1.0, 0.0), Z, Z];
    super1_of_kraus(&[k0, k1])
}

/// 16x16 superoperator of a two-qubit map given 4x4 Kraus matrices
/// (local ket index k = bit0 q0 + 2 bit1 q1).
fn super2_of_kraus(kraus: &[CMat]) -> Vec<C64> {
    let mut m = vec![Z; 256];
    for k in kraus {
        assert_eq!(k.dim, 4);
        for ko in 0..4 {
            for bo in 0..4 {
                for ki in 0..4 {
                    for bi in 0..4 {
                        m[(ko * 4 + bo) * 16 + (ki * 4 + bi)] += k[(ko, ki)] * k[(bo, bi)].conj();
                    }
                }
            }
        }
    }
    m
}

#[derive(Clone, Debug, PartialEq)]
pub enum DensityOp {
    Super1 { qubit: usize, m: Box<[C64; 16]> },
    Super2 { q0: usize, q1: usize, m: Vec<C64> },
}

/// Density matrix over n qubits, flat row-major: index = row * 2^n + col.
pub struct DensityState {
    pub n: usize,
    pub data: Vec<C64>,
}

struct SendPtr(*mut C64);
unsafe impl Send for SendPtr {}
unsafe impl Sync for SendPtr {}

impl SendPtr {
    fn get(&self) -> *mut C64 {
        self.0
    }
}

impl DensityState {
    pub fn zero_state(n: usize) -> Self {
        let mut data = vec![Z; 1usize << (2 * n)];
        data[0] = C64::new(1.0, 0.0);
        DensityState { n, data }
    }

    pub fn trace(&self) -> C64 {
        let n = self.n;
        (0..1usize << n).map(|r| self.data[(r << n) | r]).sum()
    }

    fn scatter2(mut g: usize, lo: usize, hi: usize) -> usize {
        g = ((g >> lo) << (lo + 1)) | (g & ((1 << lo) - 1));
        ((g >> hi) << (hi + 1)) | (g & ((1 << hi) - 1))
    }

    /// In-place single-qubit superoperator. Groups of 4 entries indexed by
    /// (ket bit at n+q, bra bit at q) map onto themselves.
    pub fn apply_super1(&mut self, q: usize, m: &[C64; 16]) {
        let (lo, hi) = (q, self.n + q);
        let groups = self.data.len() >> 2;
        let ptr = SendPtr(self.data.as_mut_ptr());
        let apply = |g: usize| {
            let base = Self::scatter2(g, lo, hi);
            let idx = |k: usize, b: usize| base | (k << hi) | (b << lo);
            unsafe {
                let p = ptr.get();
                let v = [
                    *p.add(idx(0, 0)),
                    *p.add(idx(0, 1)),
                    *p.add(idx(1, 0)),
                    *p.add(idx(1, 1)),
                ];
                for lout in 0..4 {
                    let mut acc = Z;
                    for (lin, vi) in v.iter().enumerate() {
                        acc += m[lout * 4 + lin] * vi;
                    }
                    *p.add(idx(lout >> 1, lout & 1)) = acc;
                }
            }
        };
        if self.data.len() >= (1 << 22) {
            (0..groups).into_par_iter().for_each(apply);
        } else {
            (0..groups).for_each(apply);
        }
    }

    /// In-place two-qubit superoperator over (q0, q1).
    pub fn apply_super2(&mut self, q0: usize, q1: usize, m: &[C64]) {
        assert_eq!(m.len(), 256);
        assert_ne!(q0, q1);
        let n = self.n;
        // bit positions, sorted for scattering
        let mut bits = [q0, q1, n + q0, n + q1];
        bits.sort_unstable();
        let groups = self.data.len() >> 4;
        let ptr = SendPtr(self.data.as_mut_ptr());
        let apply = |g: usize| {
            let mut base = g;
            for &b in &bits {
                base = ((base >> b) << (b + 1)) | (base & ((1 << b) - 1));
            }
            // local L = ket*4 + bra, ket = k0 + 2 k1 (bit0 = q0)
            let idx = |l: usize| {
                let (k, b) = (l >> 2, l & 3);
                base
                    | (((k) & 1) << (n + q0))
                    | (((k >> 1) & 1) << (n + q1))
                    | ((b & 1) << q0)
                    | (((b >> 1) & 1) << q1)
            };
            unsafe {
                let p = ptr.get();
                let mut v = [Z; 16];
                for (l, vi) in v.iter_mut().enumerate() {
                    *vi = *p.add(idx(l));
                }
                for lout in 0..16 {
                    let mut acc = Z;
                    for (lin, vi) in v.iter().enumerate() {
                        acc += m[lout * 16 + lin] * vi;
                    }
                    *p.add(idx(lout)) = acc;
                }
            }
        };
        if self.data.len() >= (1 << 22) {
            (0..groups).into_par_iter().for_each(apply);
        } else {
            (0..groups).for_each(apply);
        }
    }

    pub fn apply(&mut self, op: &DensityOp) {
        match op {
            DensityOp::Super1 { qubit, m } => self.apply_super1(*qubit, m),
            DensityOp::Super2 { q0, q1, m } => self.apply_super2(*q0, *q1, m),
        }
    }

    /// Reduced density matrix on (qa, qb), qa = local bit 0.
    pub fn reduced_pair(&self, qa: usize, qb: usize) -> CMat {
        let n = self.n;
        let mut out = CMat::zeros(4);
        let (lo, hi) = (qa.min(qb), qa.max(qb));
        let rests = 1usize << (n - 2);
        for g in 0..rests {
            let rest = Self::scatter2(g, lo, hi);
            for k in 0..4 {
                let row = rest | ((k & 1) << qa) | ((k >> 1) << qb);
                for b in 0..4 {
                    let col = rest | ((b & 1) << qa) | ((b >> 1) << qb);
                    out[(k, b)] += self.data[(row << n) | col];
                }
            }
        }
        out
    }

    /// Probability that every `measured` qubit reads zero (diagonal sum).
    pub fn prob_all_zero(&self, measured: &[usize]) -> f64 {
        let n = self.n;
        let mask = measured.iter().fold(0usize, |m, &q| m | (1 << q));
        (0..1usize << n)
            .filter(|r| r & mask == 0)
            .map(|r| self.data[(r << n) | r].re)
            .sum()
    }
}

fn gate_super_op(gate: &Gate, params: &ParamStore) -> Result<DensityOp, SimError> {
    match *gate {
        Gate::Rx { qubit, .. } | Gate::Rz { qubit, .. } | Gate::H { qubit } => {
            let u = gates_to_matrix(&[gate.remap(|_| 0)], params, 1)?;
            let k = [u[(0, 0)], u[(0, 1)], u[(1, 0)], u[(1, 1)]];
            Ok(DensityOp::Super1 { qubit, m: Box::new(super1_of_kraus(&[k])) })
        }
        Gate::Reset { qubit } => Ok(DensityOp::Super1 { qubit, m: Box::new(reset_super1()) }),
        Gate::Crx { control, target, .. } => {
            let local = gate.remap(|q| if q == control { 0 } else { 1 });
            let u = gates_to_matrix(&[local], params, 2)?;
            Ok(DensityOp::Super2 { q0: control, q1: target, m: super2_of_kraus(&[u]) })
        }
        Gate::Rzz { a, b, .. } => {
            let local = gate.remap(|q| if q == a { 0 } else { 1 });
            let u = gates_to_matrix(&[local], params, 2)?;
            Ok(DensityOp::Super2 { q0: a, q1: b, m: super2_of_kraus(&[u]) })
        }
        _ => Err(SimError::NonUnitaryGate),
    }
}

/// Reference density-matrix evaluation keeping every qubit. Exact for any
/// circuit in the gate set, including `Reset` and mid-circuit discards.
pub fn evaluate_density_full(circuit: &Circuit, params: &ParamStore) -> Result<f64, SimError> {
    let mut rho = DensityState::zero_state(circuit.num_qubits);
    for gate in &circuit.gates {
        match gate {
            Gate::DiscardMark { .. } | Gate::ProjectZeroMeasure { .. } => {}
            g => rho.apply(&gate_super_op(g, params)?),
        }
    }
    Ok(rho.prob_all_zero(&circuit.measured))
}

// ---------------------------------------------------------------------------
// Channel compilation for functor circuits
// ---------------------------------------------------------------------------

/// A functor circuit folded onto its noun wires: ancilla boxes became Kraus
/// superoperators, the question block became an effect vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelProgram {
    /// Number of persistent (wire) qubits after re-indexing.
    pub n: usize,
    pub ops: Vec<DensityOp>,
    /// Re-indexed question qubits (local bit order of `effect`: question.0 first).
    pub question: (usize, usize),
    /// Effect vector v with p = <v| rho_q |v>.
    pub effect: [C64; 4],
}

impl ChannelProgram {
    pub fn evaluate(&self) -> f64 {
        let mut rho = DensityState::zero_state(self.n);
        for op in &self.ops {
            rho.apply(op);
        }
        self.expectation(&rho)
    }

    fn expectation(&self, rho: &DensityState) -> f64 {
        let rq = rho.reduced_pair(self.question.0, self.question.1);
        let v = &self.effect;
        let mut acc = Z;
        for k in 0..4 {
            for b in 0..4 {
                acc += v[k].conj() * rq[(k, b)] * v[b];
            }
        }
        acc.re
    }

    /// Evaluate two programs sharing the same text ops with one evolution.
    pub fn evaluate_pair(a: &ChannelProgram, b: &ChannelProgram) -> Result<(f64, f64), SimError> {
        if a.n != b.n || a.ops != b.ops || a.question != b.question {
            return Err(SimError::Unsupported(
                "channel programs do not share a text state".into(),
            ));
        }
        let mut rho = DensityState::zero_state(a.n);
        for op in &a.ops {
            rho.apply(op);
        }
        Ok((a.expectation(&rho), b.expectation(&rho)))
    }
}

/// Fold a functor circuit onto its persistent wire qubits.
///
/// Requirements (met by construction in `functor_apply` output): every
/// non-wire qubit is allocated inside one box, touches at most two wire
/// qubits, and is discarded at the end of its box; the circuit ends with a
/// unitary block on the two measured qubits followed by the projective
/// markers.
pub fn compile_channels(
    circuit: &Circuit,
    params: &ParamStore,
) -> Result<ChannelProgram, SimError> {
    let persistent: Vec<usize> = {
        let mut p: Vec<usize> = circuit.wire_qubits.iter().flatten().copied().collect();
        p.sort_unstable();
        p.dedup();
        p
    };
    let local = |q: usize| -> Option<usize> { persistent.binary_search(&q).ok() };
    let n = persistent.len();
    if circuit.measured.len() != 2 {
        return Err(SimError::Unsupported("expected a two-qubit measurement".into()));
    }
    let (qa, qb) = (circuit.measured[0], circuit.measured[1]);
    let (la, lb) = match (local(qa), local(qb)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(SimError::Unsupported("measured qubit is not a wire".into())),
    };

    // Peel the trailing unitary block acting only on the measured pair.
    let gates = &circuit.gates;
    let mut tail_start = gates.len();
    while tail_start > 0 {
        let g = &gates[tail_start - 1];
        let on_pair = g.qubits().iter().all(|&q| q == qa || q == qb);
        match g {
            Gate::ProjectZeroMeasure { .. } => tail_start -= 1,
            Gate::DiscardMark { .. } => break,
            _ if g.is_unitary() && on_pair => tail_start -= 1,
            _ => break,
        }
    }
    let tail: Vec<Gate> = gates[tail_start..]
        .iter()
        .filter(|g| g.is_unitary())
        .map(|g| g.remap(|q| usize::from(q == qb)))
        .collect();
    let t = gates_to_matrix(&tail, params, 2)?;
    let effect = [t[(0, 0)].conj(), t[(0, 1)].conj(), t[(0, 2)].conj(), t[(0, 3)].conj()];

    let mut ops: Vec<DensityOp> = Vec::new();
    let mut pending: Vec<Option<CMat>> = vec![None; n];
    let flush = |ops: &mut Vec<DensityOp>, pending: &mut Vec<Option<CMat>>, l: usize| {
        if let Some(u) = pending[l].take() {
            let k = [u[(0, 0)], u[(0, 1)], u[(1, 0)], u[(1, 1)]];
            ops.push(DensityOp::Super1 { qubit: l, m: Box::new(super1_of_kraus(&[k])) });
        }
    };

    let mut i = 0usize;
    while i < tail_start {
        let g = &gates[i];
        let qs = g.qubits();
        let transient: Vec<usize> = qs.iter().copied().filter(|q| local(*q).is_none()).collect();
        if !transient.is_empty() {
            // collect the ancilla block up to the ancilla's discard
            let anc = transient[0];
            let mut block: Vec<Gate> = Vec::new();
            let mut partners: Vec<usize> = Vec::new();
            let mut j = i;
            let mut closed = false;
            while j < tail_start {
                let h = &gates[j];
                if let Gate::DiscardMark { qubit } = h {
                    if *qubit == anc {
                        closed = true;
                        j += 1;
                        break;
                    }
                }
                if h.is_unitary() {
                    for q in h.qubits() {
                        if q != anc {
                            match local(q) {
                                Some(_) if !partners.contains(&q) => partners.push(q),
                                Some(_) => {}
                                None => {
                                    return Err(SimError::Unsupported(
                                        "nested ancilla block".into(),
                                    ))
                                }
                            }
                        }
                    }
                    block.push(*h);
                } else {
                    return Err(SimError::Unsupported("marker inside ancilla block".into()));
                }
                j += 1;
            }
            if !closed || partners.len() != 2 {
                return Err(SimError::Unsupported(
                    "ancilla is not confined to a two-wire box".into(),
                ));
            }
            let (s, o) = (partners[0], partners[1]);
            for &q in &[s, o] {
                flush(&mut ops, &mut pending, local(q).unwrap());
            }
            // local order (s, o, anc): contract the ancilla legs with |0>
            let remapped: Vec<Gate> = block
                .iter()
                .map(|h| h.remap(|q| if q == s { 0 } else if q == o { 1 } else { 2 }))
                .collect();
            let u = gates_to_matrix(&remapped, params, 3)?;
            let mut kraus = Vec::with_capacity(2);
            for k in 0..2 {
                let mut km = CMat::zeros(4);
                for r in 0..4 {
                    for c in 0..4 {
                        km[(r, c)] = u[(r | (k << 2), c)];
                    }
                }
                kraus.push(km);
            }
            ops.push(DensityOp::Super2 {
                q0: local(s).unwrap(),
                q1: local(o).unwrap(),
                m: super2_of_kraus(&kraus),
            });
            i = j;
            continue;
        }
        match g {
            Gate::DiscardMark { .. } | Gate::ProjectZeroMeasure { .. } => {}
            Gate::Reset { qubit } => {
                let l = local(*qubit).unwrap();
                flush(&mut ops, &mut pending, l);
                ops.push(DensityOp::Super1 { qubit: l, m: Box::new(reset_super1()) });
            }
            g if g.qubits().len() == 1 => {
                let l = local(g.qubits()[0]).unwrap();
                let u = gates_to_matrix(&[g.remap(|_| 0)], params, 1)?;
                pending[l] = Some(match pending[l].take() {
                    Some(prev) => u.mul(&prev),
                    None => u,
                });
            }
            g => {
                // two persistent qubits (question-block CRX before the peel point)
                let (a, b) = (g.qubits()[0], g.qubits()[1]);
                let (la2, lb2) = (local(a).unwrap(), local(b).unwrap());
                flush(&mut ops, &mut pending, la2);
                flush(&mut ops, &mut pending, lb2);
                let u = gates_to_matrix(&[g.remap(|q| usize::from(q == b))], params, 2)?;
                ops.push(DensityOp::Super2 { q0: la2, q1: lb2, m: super2_of_kraus(&[u]) });
            }
        }
        i += 1;
    }
    for l in 0..n {
        flush(&mut ops, &mut pending, l);
    }
    Ok(ChannelProgram { n, ops, question: (la, lb), effect })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{functor_apply, ParamStore};
    use crate::diagram::{apply_rewrites, parse_story, Dialect};
    use crate::sim::statevector::evaluate_pure;
    use crate::story::{generate_simple, DepthPolicy};

    #[test]
    fn channel_engine_matches_pure_engine() {
        let stories =
            generate_simple(Dialect::FourDir, 3..=5, DepthPolicy::Simple, 12, 21).unwrap();
        let params = ParamStore::random(Dialect::FourDir, 3);
        for s in &stories {
            let d = apply_rewrites(&parse_story(s), s.dialect);
            let (pos, neg) = functor_apply(&d, &params, &Default::default()).unwrap();
            for c in [&pos, &neg] {
                let exact = evaluate_pure(c, &params, true).unwrap();
                let prog = compile_channels(c, &params).unwrap();
                assert!((prog.evaluate() - exact).abs() < 1e-10, "story {}", s.id);
            }
            let pp = compile_channels(&pos, &params).unwrap();
            let pn = compile_channels(&neg, &params).unwrap();
            let (a, b) = ChannelProgram::evaluate_pair(&pp, &pn).unwrap();
            assert!((a - evaluate_pure(&pos, &params, false).unwrap()).abs() < 1e-10);
            assert!((b - evaluate_pure(&neg, &params, false).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn full_density_matches_pure_on_discard_circuits() {
        let stories =
            generate_simple(Dialect::TwoDir, 2..=4, DepthPolicy::Simple, 8, 5).unwrap();
        let params = ParamStore::random(Dialect::TwoDir, 9);
        for s in &stories {
            let d = apply_rewrites(&parse_story(s), s.dialect);
            let (pos, _) = functor_apply(&d, &params, &Default::default()).unwrap();
            if pos.num_qubits > 7 {
                continue;
            }
            let exact = evaluate_pure(&pos, &params, false).unwrap();
            let dm = evaluate_density_full(&pos, &params).unwrap();
            assert!((dm - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn reset_superop_resets() {
        use crate::circuit::{Angle, Gate};
        let params = ParamStore::zeros(Dialect::TwoDir);
        let c = Circuit {
            num_qubits: 1,
            gates: vec![
                Gate::Rx { qubit: 0, angle: Angle::Lit(1.234) },
                Gate::Reset { qubit: 0 },
                Gate::ProjectZeroMeasure { qubit: 0 },
            ],
            discarded: vec![],
            measured: vec![0],
            wire_qubits: vec![vec![0]],
        };
        let p = evaluate_density_full(&c, &params).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }
}
