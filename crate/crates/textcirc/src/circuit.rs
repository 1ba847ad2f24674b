//! Semantic functor: maps text diagrams to parameterised quantum circuits.
//!
//! Every wire carries one qubit. Noun states are prepared by an Euler chain
//! `RX(t1) RZ(t2) RX(t3)` from |0>; single-wire boxes are three alternating
//! `RX`/`RZ` layers; `follows` is three layers of the hardware-efficient
//! ladder ansatz on (subject, object, fresh ancilla) with the ancilla
//! discarded afterwards; question effects are the adjoint of the two-qubit
//! ladder ansatz followed by an all-zeros projective measurement. All
//! occurrences of a word, in every circuit, share that word's parameters.
//!
//! Conventions fixed here and recorded in checkpoint metadata: the
//! controlled-RX ladder runs control i -> target i+1, the `follows` ancilla
//! is the last qubit of its block, and `turns right` is the adjoint of the
//! `turns left` gate sequence.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagram::GeneratorKind;
pub use crate::diagram::{Dialect, TextDiagram, Word};
use crate::linalg::{embed, CMat, C64};
use crate::rngs::stream_rng;

#[derive(Debug, Error, PartialEq)]
pub enum CircuitError {
    #[error("unknown word {0:?} (not in the parameter store)")]
    UnknownWord(Word),
    #[error("word {word:?} has {actual} parameters, expected {expected}")]
    ParamArity { word: Word, expected: usize, actual: usize },
    #[error("parameter slice of length {actual} does not match {expected}")]
    SliceArity { expected: usize, actual: usize },
    #[error("diagram is invalid: {0} violations")]
    InvalidDiagram(usize),
    #[error("diagram contains {0:?}; apply the semantic rewrites first")]
    UnrewrittenWord(Word),
    #[error("unsupported functor configuration: {0}")]
    Unsupported(String),
    #[error("angle is symbolic; bind parameters first")]
    UnboundAngle,
}

/// Symbolic or literal rotation angle. `Ref` points into the [`ParamStore`];
/// `NegRef` is its negation, used by adjoint blocks so that gradients flow
/// with the right sign.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Angle {
    Lit(f64),
    Ref(Word, usize),
    NegRef(Word, usize),
}

impl Angle {
    pub fn negated(self) -> Angle {
        match self {
            Angle::Lit(x) => Angle::Lit(-x),
            Angle::Ref(w, i) => Angle::NegRef(w, i),
            Angle::NegRef(w, i) => Angle::Ref(w, i),
        }
    }

    pub fn bind(self, params: &ParamStore) -> Result<f64, CircuitError> {
        match self {
            Angle::Lit(x) => Ok(x),
            Angle::Ref(w, i) => params.value(w, i),
            Angle::NegRef(w, i) => params.value(w, i).map(|x| -x),
        }
    }

    /// Which parameter this angle reads, with the chain-rule sign.
    pub fn reference(self) -> Option<(Word, usize, f64)> {
        match self {
            Angle::Lit(_) => None,
            Angle::Ref(w, i) => Some((w, i, 1.0)),
            Angle::NegRef(w, i) => Some((w, i, -1.0)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    Rx { qubit: usize, angle: Angle },
    Rz { qubit: usize, angle: Angle },
    Crx { control: usize, target: usize, angle: Angle },
    H { qubit: usize },
    /// exp(-i angle Z.Z / 2); literal angles only appear post-lowering.
    Rzz { a: usize, b: usize, angle: Angle },
    Reset { qubit: usize },
    DiscardMark { qubit: usize },
    ProjectZeroMeasure { qubit: usize },
}

impl Gate {
    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::Rx { qubit, .. }
            | Gate::Rz { qubit, .. }
            | Gate::H { qubit }
            | Gate::Reset { qubit }
            | Gate::DiscardMark { qubit }
            | Gate::ProjectZeroMeasure { qubit } => vec![qubit],
            Gate::Crx { control, target, .. } => vec![control, target],
            Gate::Rzz { a, b, .. } => vec![a, b],
        }
    }

    pub fn angle(&self) -> Option<Angle> {
        match *self {
            Gate::Rx { angle, .. }
            | Gate::Rz { angle, .. }
            | Gate::Crx { angle, .. }
            | Gate::Rzz { angle, .. } => Some(angle),
            _ => None,
        }
    }

    pub fn is_unitary(&self) -> bool {
        !matches!(self, Gate::Reset { .. } | Gate::DiscardMark { .. } | Gate::ProjectZeroMeasure { .. })
    }

    pub fn remap(&self, f: impl Fn(usize) -> usize) -> Gate {
        match *self {
            Gate::Rx { qubit, angle } => Gate::Rx { qubit: f(qubit), angle },
            Gate::Rz { qubit, angle } => Gate::Rz { qubit: f(qubit), angle },
            Gate::Crx { control, target, angle } => {
                Gate::Crx { control: f(control), target: f(target), angle }
            }
            Gate::H { qubit } => Gate::H { qubit: f(qubit) },
            Gate::Rzz { a, b, angle } => Gate::Rzz { a: f(a), b: f(b), angle },
            Gate::Reset { qubit } => Gate::Reset { qubit: f(qubit) },
            Gate::DiscardMark { qubit } => Gate::DiscardMark { qubit: f(qubit) },
            Gate::ProjectZeroMeasure { qubit } => Gate::ProjectZeroMeasure { qubit: f(qubit) },
        }
    }

    pub fn adjoint(&self) -> Gate {
        match *self {
            Gate::Rx { qubit, angle } => Gate::Rx { qubit, angle: angle.negated() },
            Gate::Rz { qubit, angle } => Gate::Rz { qubit, angle: angle.negated() },
            Gate::Crx { control, target, angle } => {
                Gate::Crx { control, target, angle: angle.negated() }
            }
            Gate::Rzz { a, b, angle } => Gate::Rzz { a, b, angle: angle.negated() },
            Gate::H { qubit } => Gate::H { qubit },
            other => other,
        }
    }
}

/// Reverse a unitary gate sequence and negate every angle.
pub fn adjoint_block(gates: &[Gate]) -> Vec<Gate> {
    gates.iter().rev().map(Gate::adjoint).collect()
}

// ---------------------------------------------------------------------------
// Parameter store
// ---------------------------------------------------------------------------

/// Expected parameter vector length per word: 3 for the Euler person state,
/// 2 per layer for single-qubit boxes, 3n-1 per layer for the n-qubit ladder.
pub fn param_len(word: Word, layers: usize) -> usize {
    match word {
        Word::Person => 3,
        Word::WalksNorth | Word::WalksSouth | Word::WalksEast | Word::WalksWest => 2 * layers,
        Word::TurnsLeft | Word::TurnsAround => 2 * layers,
        Word::Follows => (3 * 3 - 1) * layers,
        Word::SameDir | Word::NotSameDir => (3 * 2 - 1) * layers,
        // realised as the adjoint of turns_left / rewritten away
        Word::TurnsRight | Word::OppositeDirectionOf => 0,
    }
}

/// Words that own parameters in each dialect, in canonical order.
pub fn vocabulary(dialect: Dialect) -> &'static [Word] {
    match dialect {
        Dialect::TwoDir => &[
            Word::Person,
            Word::WalksNorth,
            Word::WalksSouth,
            Word::TurnsAround,
            Word::Follows,
            Word::SameDir,
            Word::NotSameDir,
        ],
        Dialect::FourDir => &[
            Word::Person,
            Word::WalksNorth,
            Word::WalksSouth,
            Word::WalksEast,
            Word::WalksWest,
            Word::TurnsLeft,
            Word::Follows,
            Word::SameDir,
            Word::NotSameDir,
        ],
    }
}

/// Named parameter vectors, one per vocabulary word, shared across all
/// circuit instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    pub dialect: Dialect,
    pub layers: usize,
    words: BTreeMap<Word, Vec<f64>>,
}

impl ParamStore {
    pub fn zeros(dialect: Dialect) -> Self {
        Self::build(dialect, |_, len| vec![0.0; len])
    }

    /// Uniform random angles in [0, 2 pi), deterministic in the seed.
    pub fn random(dialect: Dialect, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 0, 0x1217);
        Self::build(dialect, |_, len| (0..len).map(|_| rng.gen_range(0.0..2.0 * PI)).collect())
    }

    fn build(dialect: Dialect, mut f: impl FnMut(Word, usize) -> Vec<f64>) -> Self {
        let layers = 3;
        let words = vocabulary(dialect)
            .iter()
            .map(|&w| (w, f(w, param_len(w, layers))))
            .collect();
        ParamStore { dialect, layers, words }
    }

    pub fn get(&self, word: Word) -> Result<&[f64], CircuitError> {
        self.words.get(&word).map(|v| v.as_slice()).ok_or(CircuitError::UnknownWord(word))
    }

    pub fn value(&self, word: Word, idx: usize) -> Result<f64, CircuitError> {
        let v = self.get(word)?;
        v.get(idx).copied().ok_or(CircuitError::ParamArity {
            word,
            expected: idx + 1,
            actual: v.len(),
        })
    }

    pub fn words(&self) -> impl Iterator<Item = (Word, &[f64])> {
        self.words.iter().map(|(w, v)| (*w, v.as_slice()))
    }

    pub fn words_mut(&mut self) -> impl Iterator<Item = (Word, &mut Vec<f64>)> {
        self.words.iter_mut().map(|(w, v)| (*w, v))
    }

    pub fn accumulate(&mut self, word: Word, idx: usize, delta: f64) {
        if let Some(v) = self.words.get_mut(&word) {
            v[idx] += delta;
        }
    }

    pub fn num_params(&self) -> usize {
        self.words.values().map(Vec::len).sum()
    }

    /// Flatten in canonical word order; the inverse of [`ParamStore::from_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        self.words.values().flatten().copied().collect()
    }

    pub fn from_flat(&self, flat: &[f64]) -> ParamStore {
        assert_eq!(flat.len(), self.num_params());
        let mut out = self.clone();
        let mut k = 0;
        for (_, v) in out.words.iter_mut() {
            let len = v.len();
            v.copy_from_slice(&flat[k..k + len]);
            k += len;
        }
        out
    }

    /// Verify the arity invariants (3 / 6 / 24 / 15 entries per word kind).
    pub fn check_arities(&self) -> Result<(), CircuitError> {
        for (w, v) in &self.words {
            let expected = param_len(*w, self.layers);
            if v.len() != expected {
                return Err(CircuitError::ParamArity { word: *w, expected, actual: v.len() });
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Circuits
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ansatz {
    Circuit4,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctorConfig {
    pub qubits_per_wire: usize,
    pub layers: usize,
    pub ansatz: Ansatz,
}

impl Default for FunctorConfig {
    fn default() -> Self {
        FunctorConfig { qubits_per_wire: 1, layers: 3, ansatz: Ansatz::Circuit4 }
    }
}

impl FunctorConfig {
    /// Ansatz conventions embedded in checkpoints so they stay self-describing.
    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "qubits_per_wire": self.qubits_per_wire,
            "layers": self.layers,
            "ansatz": "circuit4",
            "crx_ladder": "control i -> target i+1",
            "follows_ancilla": "last qubit of the block",
            "turns_right": "adjoint of turns_left",
            "euler_state": "RX(t1) RZ(t2) RX(t3) |0>",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub num_qubits: usize,
    pub gates: Vec<Gate>,
    /// Qubits that end in a discard (ancillas and non-question wires).
    pub discarded: Vec<usize>,
    /// Qubits projected onto |0> at the end (the question wires, in order).
    pub measured: Vec<usize>,
    /// Qubits assigned to each diagram wire.
    pub wire_qubits: Vec<Vec<usize>>,
}

impl Circuit {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("circuit serialises")
    }

    /// Number of gates carrying a parameter reference.
    pub fn param_gate_count(&self) -> usize {
        self.gates
            .iter()
            .filter(|g| matches!(g.angle(), Some(Angle::Ref(..)) | Some(Angle::NegRef(..))))
            .count()
    }

    /// Length of the shared prefix of two circuits (used to evaluate the
    /// positive and negative question against one text state).
    pub fn common_prefix_len(&self, other: &Circuit) -> usize {
        self.gates
            .iter()
            .zip(&other.gates)
            .take_while(|(a, b)| a == b)
            .count()
    }
}

/// One n-qubit layer stack of the ladder ansatz: per layer, RX on every
/// qubit, RZ on every qubit, then CRX(control i -> target i+1) down the
/// ladder. A single qubit degenerates to alternating RX/RZ. Consumes exactly
/// `layers * (3n - 1)` angles for n >= 2, or `layers * 2` for n = 1.
pub fn circuit4_block(
    qubits: &[usize],
    layers: usize,
    angles: &[Angle],
) -> Result<Vec<Gate>, CircuitError> {
    let n = qubits.len();
    let per_layer = if n == 1 { 2 } else { 3 * n - 1 };
    let expected = layers * per_layer;
    if angles.len() != expected {
        return Err(CircuitError::SliceArity { expected, actual: angles.len() });
    }
    let mut gates = Vec::with_capacity(expected);
    let mut next = angles.iter().copied();
    for _ in 0..layers {
        for &q in qubits {
            gates.push(Gate::Rx { qubit: q, angle: next.next().unwrap() });
        }
        for &q in qubits {
            gates.push(Gate::Rz { qubit: q, angle: next.next().unwrap() });
        }
        if n >= 2 {
            for i in 0..n - 1 {
                gates.push(Gate::Crx {
                    control: qubits[i],
                    target: qubits[i + 1],
                    angle: next.next().unwrap(),
                });
            }
        }
    }
    Ok(gates)
}

fn word_angles(word: Word, layers: usize) -> Vec<Angle> {
    (0..param_len(word, layers)).map(|i| Angle::Ref(word, i)).collect()
}

/// Gate sequence of a word's block on the given qubits (states and boxes in
/// prep orientation; effects are adjointed by the caller).
pub fn word_block(
    word: Word,
    qubits: &[usize],
    config: &FunctorConfig,
) -> Result<Vec<Gate>, CircuitError> {
    let layers = config.layers;
    match word {
        Word::Person => {
            let q = qubits[0];
            Ok(vec![
                Gate::Rx { qubit: q, angle: Angle::Ref(word, 0) },
                Gate::Rz { qubit: q, angle: Angle::Ref(word, 1) },
                Gate::Rx { qubit: q, angle: Angle::Ref(word, 2) },
            ])
        }
        Word::TurnsRight => {
            let left = circuit4_block(qubits, layers, &word_angles(Word::TurnsLeft, layers))?;
            Ok(adjoint_block(&left))
        }
        Word::OppositeDirectionOf => Err(CircuitError::UnrewrittenWord(word)),
        w => circuit4_block(qubits, layers, &word_angles(w, layers)),
    }
}

/// Apply the semantic functor to a rewritten diagram, yielding the circuits
/// for the positive and the negative answer. The two circuits differ only in
/// the question word of the final effect block.
pub fn functor_apply(
    diagram: &TextDiagram,
    params: &ParamStore,
    config: &FunctorConfig,
) -> Result<(Circuit, Circuit), CircuitError> {
    if config.qubits_per_wire != 1 {
        return Err(CircuitError::Unsupported(format!(
            "qubits_per_wire = {} (only 1 is implemented)",
            config.qubits_per_wire
        )));
    }
    let violations = diagram.validate();
    if !violations.is_empty() {
        return Err(CircuitError::InvalidDiagram(violations.len()));
    }
    params.check_arities()?;

    let n_wires = diagram.num_wires();
    let mut wire_qubit: Vec<usize> = (0..n_wires).collect();
    let mut num_qubits = n_wires;
    let mut gates: Vec<Gate> = Vec::new();
    let mut discarded: Vec<usize> = Vec::new();
    let mut effect: Option<(Word, usize, usize)> = None;

    let check_word = |w: Word| -> Result<(), CircuitError> {
        if param_len(w, config.layers) == 0 {
            // turns_right borrows the turns_left parameters
            if w == Word::TurnsRight {
                params.get(Word::TurnsLeft).map(|_| ())
            } else {
                Err(CircuitError::UnrewrittenWord(w))
            }
        } else {
            params.get(w).map(|_| ())
        }
    };

    for g in &diagram.layers {
        match &g.kind {
            GeneratorKind::State(w) => {
                check_word(*w)?;
                gates.extend(word_block(*w, &[wire_qubit[g.wires[0]]], config)?);
            }
            GeneratorKind::Box(w) => {
                check_word(*w)?;
                match w.arity() {
                    1 => gates.extend(word_block(*w, &[wire_qubit[g.wires[0]]], config)?),
                    _ => {
                        // two-wire box: subject, object, fresh ancilla (discarded)
                        let ancilla = num_qubits;
                        num_qubits += 1;
                        let qs =
                            [wire_qubit[g.wires[0]], wire_qubit[g.wires[1]], ancilla];
                        gates.extend(word_block(*w, &qs, config)?);
                        gates.push(Gate::DiscardMark { qubit: ancilla });
                        discarded.push(ancilla);
                    }
                }
            }
            GeneratorKind::Effect(w) => {
                check_word(*w)?;
                effect = Some((*w, wire_qubit[g.wires[0]], wire_qubit[g.wires[1]]));
            }
            GeneratorKind::Discard => {
                let q = wire_qubit[g.wires[0]];
                gates.push(Gate::DiscardMark { qubit: q });
                discarded.push(q);
            }
            GeneratorKind::Identity => {}
            GeneratorKind::Swap => {
                wire_qubit.swap(g.wires[0], g.wires[1]);
            }
        }
    }

    let (posed, qa, qb) = effect.ok_or(CircuitError::InvalidDiagram(1))?;
    let opposite = if posed == Word::SameDir { Word::NotSameDir } else { Word::SameDir };
    check_word(opposite)?;

    let build = |question: Word, gates: &[Gate]| -> Result<Circuit, CircuitError> {
        let mut gates = gates.to_vec();
        let prep = word_block(question, &[qa, qb], config)?;
        gates.extend(adjoint_block(&prep));
        gates.push(Gate::ProjectZeroMeasure { qubit: qa });
        gates.push(Gate::ProjectZeroMeasure { qubit: qb });
        Ok(Circuit {
            num_qubits,
            gates,
            discarded: discarded.clone(),
            measured: vec![qa, qb],
            wire_qubits: wire_qubit.iter().map(|&q| vec![q]).collect(),
        })
    };
    Ok((build(posed, &gates)?, build(opposite, &gates)?))
}

// ---------------------------------------------------------------------------
// Dense matrices
// ---------------------------------------------------------------------------

fn rx_matrix(theta: f64) -> CMat {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    CMat::from_rows(&[
        &[C64::new(c, 0.0), C64::new(0.0, -s)],
        &[C64::new(0.0, -s), C64::new(c, 0.0)],
    ])
}

fn rz_matrix(theta: f64) -> CMat {
    CMat::from_rows(&[
        &[C64::from_polar(1.0, -theta / 2.0), C64::new(0.0, 0.0)],
        &[C64::new(0.0, 0.0), C64::from_polar(1.0, theta / 2.0)],
    ])
}

fn h_matrix() -> CMat {
    let x = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    CMat::from_rows(&[&[x, x], &[x, -x]])
}

/// Dense matrix of a bound gate within a `num_qubits` register.
pub fn gate_matrix(
    gate: &Gate,
    params: &ParamStore,
    num_qubits: usize,
) -> Result<CMat, CircuitError> {
    let m = match *gate {
        Gate::Rx { qubit, angle } => embed(&rx_matrix(angle.bind(params)?), &[qubit], num_qubits),
        Gate::Rz { qubit, angle } => embed(&rz_matrix(angle.bind(params)?), &[qubit], num_qubits),
        Gate::H { qubit } => embed(&h_matrix(), &[qubit], num_qubits),
        Gate::Crx { control, target, angle } => {
            // local little-endian index: bit 0 = control, bit 1 = target;
            // the control=1 subspace (indices 1, 3) carries RX(theta).
            let rx = rx_matrix(angle.bind(params)?);
            let mut c = CMat::identity(4);
            c[(1, 1)] = rx[(0, 0)];
            c[(1, 3)] = rx[(0, 1)];
            c[(3, 1)] = rx[(1, 0)];
            c[(3, 3)] = rx[(1, 1)];
            embed(&c, &[control, target], num_qubits)
        }
        Gate::Rzz { a, b, angle } => {
            let th = angle.bind(params)?;
            let aligned = C64::from_polar(1.0, -th / 2.0);
            let anti = C64::from_polar(1.0, th / 2.0);
            let mut m = CMat::zeros(4);
            m[(0, 0)] = aligned;
            m[(1, 1)] = anti;
            m[(2, 2)] = anti;
            m[(3, 3)] = aligned;
            embed(&m, &[a, b], num_qubits)
        }
        _ => return Err(CircuitError::Unsupported("non-unitary gate has no matrix".into())),
    };
    Ok(m)
}

/// Dense unitary of a word's block with the given parameters (2^k x 2^k,
/// ancilla not traced out). Effect words are returned in prep orientation:
/// the caller applies the adjoint to use them as tests.
pub fn unitary_of(
    word: Word,
    params: &ParamStore,
    config: &FunctorConfig,
) -> Result<CMat, CircuitError> {
    let k = match word {
        Word::Follows => 3,
        Word::SameDir | Word::NotSameDir => 2,
        _ => 1,
    };
    let qubits: Vec<usize> = (0..k).collect();
    let gates = word_block(word, &qubits, config)?;
    gates_to_matrix(&gates, params, k)
}

/// Dense product of a unitary gate list on `num_qubits` qubits.
pub fn gates_to_matrix(
    gates: &[Gate],
    params: &ParamStore,
    num_qubits: usize,
) -> Result<CMat, CircuitError> {
    let mut u = CMat::identity(1 << num_qubits);
    for g in gates {
        u = gate_matrix(g, params, num_qubits)?.mul(&u);
    }
    Ok(u)
}
