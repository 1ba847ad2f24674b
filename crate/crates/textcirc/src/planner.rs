//! Tensor-network contraction planning: extract a closed (scalar) network
//! from a circuit and estimate the FLOPs and memory of its exact contraction
//! with a randomized greedy path search.
//!
//! Circuits with discards are doubled (ket and bra copies of every gate);
//! a discard contracts the wire's final ket index with its bra twin, a
//! measured qubit caps both with <0|. All bond dimensions are 2. The scalar
//! value of the network is the all-zeros outcome probability, which gives a
//! cross-engine oracle for small instances.

use std::collections::HashMap;
use std::path::PathBuf;

use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::circuit::{gates_to_matrix, Circuit, Gate, ParamStore};
use crate::linalg::{ONE, ZERO};
use crate::rngs::stream_rng;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("unsupported gate for tensor extraction: {0}")]
    Unsupported(String),
    #[error("contraction path does not cover the network")]
    BadPath,
    #[error(transparent)]
    Circuit(#[from] crate::circuit::CircuitError),
    #[error("path cache i/o: {0}")]
    Cache(#[from] std::io::Error),
}

/// One node: index labels (each label appears at most twice in the network)
/// plus the dense data in row-major order over the labels (dim 2 each).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensorNode {
    pub indices: Vec<usize>,
    pub data: Vec<C64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensorNetwork {
    pub tensors: Vec<TensorNode>,
    pub num_indices: usize,
}

impl TensorNetwork {
    pub fn num_edges(&self) -> usize {
        let mut seen: HashMap<usize, usize> = HashMap::new();
        for t in &self.tensors {
            for &i in &t.indices {
                *seen.entry(i).or_default() += 1;
            }
        }
        seen.values().filter(|&&c| c == 2).count()
    }

    /// Structural hash for the on-disk path cache.
    pub fn structure_hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tensors {
            h.update((t.indices.len() as u64).to_le_bytes());
            for &i in &t.indices {
                h.update((i as u64).to_le_bytes());
            }
        }
        hex_string(&h.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Extract the doubled (ket x bra) scalar network of a circuit: gate tensors
/// of rank 2 x arity, |0> caps at the start, <0| caps on measured qubits,
/// and ket-bra contraction on discarded qubits.
pub fn to_tensor_network(
    circuit: &Circuit,
    params: &ParamStore,
) -> Result<TensorNetwork, PlannerError> {
    let n = circuit.num_qubits;
    let mut next_index = 0usize;
    let mut fresh = || {
        next_index += 1;
        next_index - 1
    };
    let mut ket: Vec<usize> = (0..n).map(|_| fresh()).collect();
    let mut bra: Vec<usize> = (0..n).map(|_| fresh()).collect();
    let mut tensors: Vec<TensorNode> = Vec::new();
    let zero_cap = vec![ONE, ZERO];
    for q in 0..n {
        tensors.push(TensorNode { indices: vec![ket[q]], data: zero_cap.clone() });
        tensors.push(TensorNode { indices: vec![bra[q]], data: zero_cap.clone() });
    }

    let mut discarded_at_end: Vec<usize> = Vec::new();
    for gate in &circuit.gates {
        match gate {
            Gate::Reset { .. } => {
                return Err(PlannerError::Unsupported("reset".into()));
            }
            Gate::ProjectZeroMeasure { .. } => {}
            Gate::DiscardMark { qubit } => discarded_at_end.push(*qubit),
            g => {
                let qs = g.qubits();
                let k = qs.len();
                let local = g.remap(|q| qs.iter().position(|&x| x == q).unwrap());
                let u = gates_to_matrix(&[local], params, k)?;
                let dim = 1usize << k;
                // data laid out over (out..., in...) little-endian
                let mut data = vec![ZERO; dim * dim];
                let mut conj = vec![ZERO; dim * dim];
                for o in 0..dim {
                    for i in 0..dim {
                        data[o + dim * i] = u[(o, i)];
                        conj[o + dim * i] = u[(o, i)].conj();
                    }
                }
                let outs_k: Vec<usize> = (0..k).map(|_| fresh()).collect();
                let ins_k: Vec<usize> = qs.iter().map(|&q| ket[q]).collect();
                let mut idx = outs_k.clone();
                idx.extend(&ins_k);
                tensors.push(TensorNode { indices: idx, data: data.clone() });
                let outs_b: Vec<usize> = (0..k).map(|_| fresh()).collect();
                let ins_b: Vec<usize> = qs.iter().map(|&q| bra[q]).collect();
                let mut idx = outs_b.clone();
                idx.extend(&ins_b);
                tensors.push(TensorNode { indices: idx, data: conj });
                for (j, &q) in qs.iter().enumerate() {
                    ket[q] = outs_k[j];
                    bra[q] = outs_b[j];
                }
            }
        }
    }

    // terminal caps: measured qubits project on <0| (both copies); discarded
    // qubits contract ket against bra (the trace), via index unification
    let mut remap: HashMap<usize, usize> = HashMap::new();
    for q in 0..n {
        if circuit.measured.contains(&q) {
            tensors.push(TensorNode { indices: vec![ket[q]], data: zero_cap.clone() });
            tensors.push(TensorNode { indices: vec![bra[q]], data: zero_cap.clone() });
        } else {
            remap.insert(bra[q], ket[q]);
        }
    }
    for t in &mut tensors {
        for i in &mut t.indices {
            if let Some(&to) = remap.get(i) {
                *i = to;
            }
        }
    }
    Ok(TensorNetwork { tensors, num_indices: next_index })
}

// ---------------------------------------------------------------------------
// Path search
// ---------------------------------------------------------------------------

/// A full pairwise contraction tree in SSA form: contracting (a, b) appends
/// the result as the next id (inputs are 0..t, intermediates t, t+1, ...).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionPath {
    pub pairs: Vec<(usize, usize)>,
    /// Sum over the tree of 2 * product of the distinct index dimensions
    /// involved in each pairwise contraction.
    pub total_flops: f64,
    /// Largest intermediate tensor, in bytes of complex128.
    pub peak_memory_bytes: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathSearchConfig {
    pub repeats: usize,
    /// Boltzmann temperature in units of the cheapest candidate: a move of
    /// twice the minimum cost is accepted with relative probability e^-1/kt.
    pub kt: f64,
    pub seed: u64,
    /// Candidates producing intermediates above this many bytes are avoided
    /// while alternatives exist (the statevector baseline is a natural cap).
    pub memory_cap_bytes: Option<f64>,
    /// Directory for the disk cache keyed by network structure hash.
    pub cache_dir: Option<PathBuf>,
}

impl Default for PathSearchConfig {
    fn default() -> Self {
        PathSearchConfig {
            repeats: 128,
            kt: 1.0,
            seed: 0,
            memory_cap_bytes: None,
            cache_dir: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathSearchResult {
    pub best: ContractionPath,
    /// Best FLOPs seen after each repeat (non-increasing).
    pub best_curve: Vec<f64>,
    pub from_cache: bool,
}

struct LiveTensor {
    id: usize,
    indices: Vec<usize>,
}

fn contraction_cost(a: &[usize], b: &[usize]) -> (f64, Vec<usize>) {
    let mut union: Vec<usize> = a.to_vec();
    let mut free: Vec<usize> = Vec::with_capacity(a.len() + b.len());
    for &i in b {
        if !union.contains(&i) {
            union.push(i);
        }
    }
    for &i in &union {
        let in_a = a.contains(&i);
        let in_b = b.contains(&i);
        if !(in_a && in_b) {
            free.push(i);
        }
    }
    let flops = 2.0 * (union.len() as f64).exp2();
    (flops, free)
}

fn greedy_once(
    network: &TensorNetwork,
    kt: f64,
    memory_cap: Option<f64>,
    rng: &mut impl Rng,
) -> ContractionPath {
    let mut live: Vec<LiveTensor> = network
        .tensors
        .iter()
        .enumerate()
        .map(|(id, t)| LiveTensor { id, indices: t.indices.clone() })
        .collect();
    let mut next_id = live.len();
    let mut pairs = Vec::with_capacity(live.len().saturating_sub(1));
    let mut total = 0.0;
    let mut peak: f64 = 16.0;
    while live.len() > 1 {
        // candidate pairs sharing an index; fall back to any pair (outer products)
        let mut cands: Vec<(usize, usize, f64, usize)> = Vec::new();
        for i in 0..live.len() {
            for j in (i + 1)..live.len() {
                if live[i].indices.iter().any(|x| live[j].indices.contains(x)) {
                    let (flops, free) = contraction_cost(&live[i].indices, &live[j].indices);
                    cands.push((i, j, flops, free.len()));
                }
            }
        }
        if cands.is_empty() {
            let (flops, free) = contraction_cost(&live[0].indices, &live[1].indices);
            cands.push((0, 1, flops, free.len()));
        }
        if let Some(cap) = memory_cap {
            let within: Vec<_> = cands
                .iter()
                .copied()
                .filter(|c| 16.0 * (c.3 as f64).exp2() <= cap)
                .collect();
            if !within.is_empty() {
                cands = within;
            }
        }
        let min_cost = cands.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
        let choice = if kt <= 0.0 {
            // zero temperature: the cheapest candidate, first found
            cands.iter().position(|c| c.2 == min_cost).unwrap()
        } else {
            let weights: Vec<f64> =
                cands.iter().map(|c| (-(c.2 / min_cost - 1.0) / kt).exp()).collect();
            let total_w: f64 = weights.iter().sum();
            let mut u = rng.gen::<f64>() * total_w;
            let mut pick = 0;
            for (k, w) in weights.iter().enumerate() {
                u -= w;
                if u <= 0.0 {
                    pick = k;
                    break;
                }
            }
            pick
        };
        let (i, j, flops, _) = cands[choice];
        let (_, free) = contraction_cost(&live[i].indices, &live[j].indices);
        total += flops;
        peak = peak.max(16.0 * (free.len() as f64).exp2());
        pairs.push((live[i].id, live[j].id));
        let merged = LiveTensor { id: next_id, indices: free };
        next_id += 1;
        // remove j first (j > i)
        live.swap_remove(j);
        live.swap_remove(i);
        live.push(merged);
    }
    ContractionPath { pairs, total_flops: total, peak_memory_bytes: peak }
}

/// Randomized greedy search: `repeats` independent Boltzmann-greedy passes,
/// keeping the path with the fewest FLOPs. Deterministic in the seed; the
/// result can be cached on disk keyed by the network's structure hash.
pub fn random_greedy_path(
    network: &TensorNetwork,
    config: &PathSearchConfig,
) -> Result<PathSearchResult, PlannerError> {
    let cache_file = config.cache_dir.as_ref().map(|d| {
        d.join(format!("path-{}-r{}-kt{}.json", network.structure_hash(), config.repeats, config.kt))
    });
    if let Some(f) = &cache_file {
        if f.exists() {
            let text = std::fs::read_to_string(f)?;
            if let Ok(mut cached) = serde_json::from_str::<PathSearchResult>(&text) {
                cached.from_cache = true;
                return Ok(cached);
            }
        }
    }
    let paths: Vec<ContractionPath> = (0..config.repeats.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(config.seed, r as u64, 0x9A7);
            greedy_once(network, config.kt, config.memory_cap_bytes, &mut rng)
        })
        .collect();
    let mut best_curve = Vec::with_capacity(paths.len());
    let mut best: Option<ContractionPath> = None;
    for p in paths {
        let better = best.as_ref().map_or(true, |b| p.total_flops < b.total_flops);
        if better {
            best = Some(p);
        }
        best_curve.push(best.as_ref().unwrap().total_flops);
    }
    let result =
        PathSearchResult { best: best.expect("at least one repeat"), best_curve, from_cache: false };
    if let Some(f) = &cache_file {
        std::fs::create_dir_all(f.parent().unwrap())?;
        std::fs::write(f, serde_json::to_string(&result).expect("serialises"))?;
    }
    Ok(result)
}

/// Reference contractor: execute a path on the dense tensors, returning the
/// scalar. Intended for small cross-checks against the simulator.
pub fn contract(network: &TensorNetwork, path: &ContractionPath) -> Result<C64, PlannerError> {
    let mut store: HashMap<usize, TensorNode> = network
        .tensors
        .iter()
        .cloned()
        .enumerate()
        .collect();
    let mut next_id = network.tensors.len();
    for &(a, b) in &path.pairs {
        let ta = store.remove(&a).ok_or(PlannerError::BadPath)?;
        let tb = store.remove(&b).ok_or(PlannerError::BadPath)?;
        store.insert(next_id, pairwise_contract(&ta, &tb));
        next_id += 1;
    }
    if store.len() != 1 {
        return Err(PlannerError::BadPath);
    }
    let last = store.into_values().next().unwrap();
    if !last.indices.is_empty() {
        return Err(PlannerError::BadPath);
    }
    Ok(last.data[0])
}

fn pairwise_contract(a: &TensorNode, b: &TensorNode) -> TensorNode {
    let shared: Vec<usize> =
        a.indices.iter().copied().filter(|i| b.indices.contains(i)).collect();
    let free_a: Vec<usize> =
        a.indices.iter().copied().filter(|i| !shared.contains(i)).collect();
    let free_b: Vec<usize> =
        b.indices.iter().copied().filter(|i| !shared.contains(i)).collect();
    let mut out_indices = free_a.clone();
    out_indices.extend(&free_b);
    let (na, nb, ns) = (free_a.len(), free_b.len(), shared.len());
    let mut data = vec![ZERO; 1 << (na + nb)];
    // position of each label within a tensor's little-endian flat index
    let pos = |labels: &[usize], l: usize| labels.iter().position(|&x| x == l).unwrap();
    for fa in 0..1usize << na {
        for fb in 0..1usize << nb {
            let mut acc = ZERO;
            for s in 0..1usize << ns {
                let mut ia = 0usize;
                for (k, &l) in free_a.iter().enumerate() {
                    ia |= ((fa >> k) & 1) << pos(&a.indices, l);
                }
                for (k, &l) in shared.iter().enumerate() {
                    ia |= ((s >> k) & 1) << pos(&a.indices, l);
                }
                let mut ib = 0usize;
                for (k, &l) in free_b.iter().enumerate() {
                    ib |= ((fb >> k) & 1) << pos(&b.indices, l);
                }
                for (k, &l) in shared.iter().enumerate() {
                    ib |= ((s >> k) & 1) << pos(&b.indices, l);
                }
                acc += a.data[ia] * b.data[ib];
            }
            data[fa | (fb << na)] = acc;
        }
    }
    TensorNode { indices: out_indices, data }
}

/// Recompute a path's FLOPs and peak memory from the network structure;
/// used as the self-consistency oracle for the search's accounting.
pub fn recompute_cost(network: &TensorNetwork, path: &ContractionPath) -> (f64, f64) {
    let mut shapes: HashMap<usize, Vec<usize>> = network
        .tensors
        .iter()
        .enumerate()
        .map(|(i, t)| (i, t.indices.clone()))
        .collect();
    let mut next_id = network.tensors.len();
    let mut total = 0.0;
    let mut peak: f64 = 16.0;
    for &(a, b) in &path.pairs {
        let ta = shapes.remove(&a).expect("path covers network");
        let tb = shapes.remove(&b).expect("path covers network");
        let (flops, free) = contraction_cost(&ta, &tb);
        total += flops;
        peak = peak.max(16.0 * (free.len() as f64).exp2());
        shapes.insert(next_id, free);
        next_id += 1;
    }
    (total, peak)
}

// ---------------------------------------------------------------------------
// Resource estimation
// ---------------------------------------------------------------------------

/// Memory of the statevector route: one qubit per actor plus one reused
/// ancilla, doubled because discards force a density-style evaluation.
pub fn statevector_baseline_bytes(actors: usize) -> f64 {
    (2.0f64).powi(2 * (actors as i32 + 1)) * 16.0
}

/// 512 GB reference machine, for contextualising the tables.
pub const REFERENCE_MEMORY_BYTES: f64 = 512e9;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResourceRow {
    pub id: String,
    pub width: usize,
    pub depth: usize,
    pub edges: usize,
    pub flops: f64,
    pub memory_bytes: f64,
    pub sv_baseline_bytes: f64,
    pub path_seconds: f64,
}

/// Per-instance contraction cost estimates for a set of stories under a
/// trained or reference parameter store.
pub fn estimate_resources(
    stories: &[crate::story::Story],
    params: &ParamStore,
    config: &PathSearchConfig,
) -> Result<Vec<ResourceRow>, PlannerError> {
    let fc = crate::circuit::FunctorConfig::default();
    let mut rows = Vec::with_capacity(stories.len());
    for story in stories {
        let d = crate::diagram::apply_rewrites(&crate::diagram::parse_story(story), story.dialect);
        let (pos, _) = crate::circuit::functor_apply(&d, params, &fc)?;
        let network = to_tensor_network(&pos, params)?;
        let mut cfg = config.clone();
        if cfg.memory_cap_bytes.is_none() {
            cfg.memory_cap_bytes = Some(statevector_baseline_bytes(story.width));
        }
        let t0 = std::time::Instant::now();
        let found = random_greedy_path(&network, &cfg)?;
        rows.push(ResourceRow {
            id: story.id.clone(),
            width: story.width,
            depth: story.sentences.len(),
            edges: network.num_edges(),
            flops: found.best.total_flops,
            memory_bytes: found.best.peak_memory_bytes,
            sv_baseline_bytes: statevector_baseline_bytes(story.width),
            path_seconds: t0.elapsed().as_secs_f64(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{functor_apply, FunctorConfig, ParamStore};
    use crate::diagram::{apply_rewrites, parse_story, Dialect};
    use crate::sim::{evaluate, SimConfig};
    use crate::story::{generate_simple, DepthPolicy};

    fn chain_network(len: usize) -> TensorNetwork {
        // v - M1 - ... - Mlen - w, all bonds dim 2
        let mut tensors = vec![TensorNode { indices: vec![0], data: vec![ONE, ZERO] }];
        for k in 0..len {
            tensors.push(TensorNode {
                indices: vec![k, k + 1],
                data: vec![ONE, ZERO, ZERO, ONE],
            });
        }
        tensors.push(TensorNode { indices: vec![len], data: vec![ONE, ZERO] });
        TensorNetwork { tensors, num_indices: len + 1 }
    }

    #[test]
    fn greedy_chain_is_optimal_at_zero_temperature() {
        let net = chain_network(4);
        let cfg = PathSearchConfig { repeats: 1, kt: 0.0, seed: 0, ..Default::default() };
        let found = random_greedy_path(&net, &cfg).unwrap();
        // four vector-matrix products at 2 * 2^2, one final vector-vector at 2 * 2
        assert_eq!(found.best.total_flops, 8.0 * 4.0 + 4.0);
        assert_eq!(found.best.peak_memory_bytes, 32.0);
        let value = contract(&net, &found.best).unwrap();
        assert!((value.re - 1.0).abs() < 1e-12); // identity chain on <0|0>
    }

    #[test]
    fn best_flops_non_increasing_in_repeats() {
        let params = ParamStore::random(Dialect::TwoDir, 3);
        let stories = generate_simple(Dialect::TwoDir, 4..=4, DepthPolicy::Simple, 3, 5).unwrap();
        for s in &stories {
            let d = apply_rewrites(&parse_story(s), s.dialect);
            let (pos, _) = functor_apply(&d, &params, &FunctorConfig::default()).unwrap();
            let net = to_tensor_network(&pos, &params).unwrap();
            let cfg = PathSearchConfig { repeats: 24, kt: 1.0, seed: 11, ..Default::default() };
            let found = random_greedy_path(&net, &cfg).unwrap();
            for w in found.best_curve.windows(2) {
                assert!(w[1] <= w[0]);
            }
            let more = random_greedy_path(
                &net,
                &PathSearchConfig { repeats: 1, kt: 1.0, seed: 11, ..Default::default() },
            )
            .unwrap();
            assert!(found.best.total_flops <= more.best.total_flops);
        }
    }

    #[test]
    fn contraction_matches_simulator() {
        let params = ParamStore::random(Dialect::TwoDir, 9);
        let stories = generate_simple(Dialect::TwoDir, 2..=3, DepthPolicy::Simple, 10, 21).unwrap();
        let sim = SimConfig::default();
        for s in &stories {
            let d = apply_rewrites(&parse_story(s), s.dialect);
            let (pos, _) = functor_apply(&d, &params, &FunctorConfig::default()).unwrap();
            if pos.num_qubits > 5 {
                continue;
            }
            let net = to_tensor_network(&pos, &params).unwrap();
            let cfg = PathSearchConfig { repeats: 8, kt: 1.0, seed: 2, ..Default::default() };
            let found = random_greedy_path(&net, &cfg).unwrap();
            let scalar = contract(&net, &found.best).unwrap();
            let exact = evaluate(&pos, &params, &sim).unwrap();
            assert!((scalar.re - exact).abs() < 1e-10, "story {}: {} vs {exact}", s.id, scalar.re);
            assert!(scalar.im.abs() < 1e-10);
        }
    }

    #[test]
    fn cost_accounting_is_self_consistent() {
        let params = ParamStore::random(Dialect::TwoDir, 4);
        let stories = generate_simple(Dialect::TwoDir, 3..=4, DepthPolicy::Simple, 4, 8).unwrap();
        for s in &stories {
            let d = apply_rewrites(&parse_story(s), s.dialect);
            let (pos, _) = functor_apply(&d, &params, &FunctorConfig::default()).unwrap();
            let net = to_tensor_network(&pos, &params).unwrap();
            let found = random_greedy_path(
                &net,
                &PathSearchConfig { repeats: 4, seed: 3, ..Default::default() },
            )
            .unwrap();
            let (flops, mem) = recompute_cost(&net, &found.best);
            assert_eq!(flops, found.best.total_flops);
            assert_eq!(mem, found.best.peak_memory_bytes);
        }
    }

    #[test]
    fn doubling_only_when_discards_present() {
        // a 2-wire story has one discarded ancilla per follows; the network
        // always closes to a scalar and single-qubit circuits stay tiny
        let params = ParamStore::random(Dialect::TwoDir, 6);
        let stories = generate_simple(Dialect::TwoDir, 2..=2, DepthPolicy::Fixed(2), 1, 1).unwrap();
        let d = apply_rewrites(&parse_story(&stories[0]), Dialect::TwoDir);
        let (pos, _) = functor_apply(&d, &params, &FunctorConfig::default()).unwrap();
        let net = to_tensor_network(&pos, &params).unwrap();
        // 2 qubits * 2 caps * 2 sides + gates doubled + 4 terminal caps
        let gate_count = pos.gates.iter().filter(|g| g.is_unitary()).count();
        assert_eq!(net.tensors.len(), 4 + 2 * gate_count + 4);
    }

    #[test]
    fn memory_stays_under_statevector_baseline() {
        let params = ParamStore::random(Dialect::TwoDir, 10);
        let stories = generate_simple(Dialect::TwoDir, 5..=5, DepthPolicy::Deeper, 3, 7).unwrap();
        for s in &stories {
            let rows = estimate_resources(
                std::slice::from_ref(s),
                &params,
                &PathSearchConfig { repeats: 16, seed: 5, ..Default::default() },
            )
            .unwrap();
            assert!(rows[0].memory_bytes <= rows[0].sv_baseline_bytes);
        }
    }

    #[test]
    fn path_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let net = chain_network(6);
        let cfg = PathSearchConfig {
            repeats: 4,
            seed: 9,
            cache_dir: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        let first = random_greedy_path(&net, &cfg).unwrap();
        assert!(!first.from_cache);
        let second = random_greedy_path(&net, &cfg).unwrap();
        assert!(second.from_cache);
        assert_eq!(first.best, second.best);
    }
}
