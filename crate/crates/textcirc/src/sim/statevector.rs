//! Pure statevector engine. Keeps every qubit (ancillas included); discards
//! are resolved at readout by marginalising over the discarded qubits, which
//! is exact because the only terminal effect is a projector that is diagonal
//! on them. Also hosts the adjoint-mode differentiation of the projector
//! expectation.

use num_complex::Complex64 as C64;

use crate::circuit::{Circuit, Gate, ParamStore, Word};
use crate::sim::SimError;

#[derive(Clone, Debug)]
pub struct Statevector {
    pub num_qubits: usize,
    pub amps: Vec<C64>,
}

impl Statevector {
    pub fn zero_state(num_qubits: usize) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); 1 << num_qubits];
        amps[0] = C64::new(1.0, 0.0);
        Statevector { num_qubits, amps }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Apply a 2x2 matrix [[m00, m01], [m10, m11]] to `qubit`.
    pub fn apply_1q(&mut self, qubit: usize, m: &[C64; 4]) {
        let stride = 1usize << qubit;
        let half = self.amps.len() >> 1;
        for g in 0..half {
            let i0 = ((g >> qubit) << (qubit + 1)) | (g & (stride - 1));
            let i1 = i0 | stride;
            let (a0, a1) = (self.amps[i0], self.amps[i1]);
            self.amps[i0] = m[0] * a0 + m[1] * a1;
            self.amps[i1] = m[2] * a0 + m[3] * a1;
        }
    }

    /// Apply a 2x2 matrix to `target` on the subspace where `control` is 1.
    pub fn apply_controlled_1q(&mut self, control: usize, target: usize, m: &[C64; 4]) {
        let tstride = 1usize << target;
        let cstride = 1usize << control;
        let quarter = self.amps.len() >> 2;
        for g in 0..quarter {
            // scatter g into the indices with bits (control, target) cleared
            let (lo, hi) = (control.min(target), control.max(target));
            let mut i = g;
            i = ((i >> lo) << (lo + 1)) | (i & ((1 << lo) - 1));
            i = ((i >> hi) << (hi + 1)) | (i & ((1 << hi) - 1));
            let i0 = i | cstride;
            let i1 = i0 | tstride;
            let (a0, a1) = (self.amps[i0], self.amps[i1]);
            self.amps[i0] = m[0] * a0 + m[1] * a1;
            self.amps[i1] = m[2] * a0 + m[3] * a1;
        }
    }

    pub fn apply_phase_rz(&mut self, qubit: usize, theta: f64) {
        let (p0, p1) = (C64::from_polar(1.0, -theta / 2.0), C64::from_polar(1.0, theta / 2.0));
        let stride = 1usize << qubit;
        for (i, a) in self.amps.iter_mut().enumerate() {
            *a *= if i & stride == 0 { p0 } else { p1 };
        }
    }

    pub fn apply_rzz(&mut self, qa: usize, qb: usize, theta: f64) {
        let aligned = C64::from_polar(1.0, -theta / 2.0);
        let anti = C64::from_polar(1.0, theta / 2.0);
        let (sa, sb) = (1usize << qa, 1usize << qb);
        for (i, a) in self.amps.iter_mut().enumerate() {
            *a *= if ((i & sa == 0) as u8) == ((i & sb == 0) as u8) { aligned } else { anti };
        }
    }

    /// Apply a unitary gate with bound parameters. Markers are rejected.
    pub fn apply_gate(&mut self, gate: &Gate, params: &ParamStore) -> Result<(), SimError> {
        match *gate {
            Gate::Rx { qubit, angle } => {
                self.apply_1q(qubit, &rx_kernel(angle.bind(params)?));
            }
            Gate::Rz { qubit, angle } => self.apply_phase_rz(qubit, angle.bind(params)?),
            Gate::H { qubit } => self.apply_1q(qubit, &h_kernel()),
            Gate::Crx { control, target, angle } => {
                self.apply_controlled_1q(control, target, &rx_kernel(angle.bind(params)?));
            }
            Gate::Rzz { a, b, angle } => self.apply_rzz(a, b, angle.bind(params)?),
            _ => return Err(SimError::NonUnitaryGate),
        }
        Ok(())
    }

    pub fn apply_gate_adjoint(&mut self, gate: &Gate, params: &ParamStore) -> Result<(), SimError> {
        self.apply_gate(&gate.adjoint(), params)
    }

    /// Probability that every qubit in `measured` reads 0, marginalising
    /// over all remaining qubits.
    pub fn prob_all_zero(&self, measured: &[usize]) -> f64 {
        let mask = measured.iter().fold(0usize, |m, &q| m | (1 << q));
        self.amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask == 0)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Zero out every amplitude where some `measured` qubit reads 1.
    pub fn project_all_zero(&mut self, measured: &[usize]) {
        let mask = measured.iter().fold(0usize, |m, &q| m | (1 << q));
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & mask != 0 {
                *a = C64::new(0.0, 0.0);
            }
        }
    }
}

pub fn rx_kernel(theta: f64) -> [C64; 4] {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    [C64::new(c, 0.0), C64::new(0.0, -s), C64::new(0.0, -s), C64::new(c, 0.0)]
}

pub fn h_kernel() -> [C64; 4] {
    let x = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    [x, x, x, -x]
}

/// Run the unitary part of a circuit on |0..0>, optionally asserting norm
/// preservation after every gate.
pub fn run_circuit(
    circuit: &Circuit,
    params: &ParamStore,
    check_norms: bool,
) -> Result<Statevector, SimError> {
    let mut psi = Statevector::zero_state(circuit.num_qubits);
    for gate in &circuit.gates {
        if !gate.is_unitary() {
            if matches!(gate, Gate::Reset { .. }) {
                return Err(SimError::NonUnitaryGate);
            }
            continue; // discard / measure markers are resolved at readout
        }
        psi.apply_gate(gate, params)?;
        if check_norms {
            let n = psi.norm_sqr();
            if (n - 1.0).abs() > 1e-10 {
                return Err(SimError::NormDrift(n));
            }
        }
    }
    Ok(psi)
}

/// Exact projector expectation of a functor circuit: evolve, then marginalise.
pub fn evaluate_pure(
    circuit: &Circuit,
    params: &ParamStore,
    check_norms: bool,
) -> Result<f64, SimError> {
    let psi = run_circuit(circuit, params, check_norms)?;
    Ok(psi.prob_all_zero(&circuit.measured))
}

// ---------------------------------------------------------------------------
// Adjoint differentiation
// ---------------------------------------------------------------------------

/// <phi| G |psi> where G is the generator of the gate scaled by d/dtheta,
/// i.e. dU/dtheta = G U;  the gradient contribution is 2 Re<phi|G|psi> with
/// |psi> the post-gate state. For rotation gates G = -i/2 times a Pauli
/// (possibly projected on the control), so 2 Re<phi|G|psi> = Im sum.
fn generator_grad(gate: &Gate, phi: &Statevector, psi: &Statevector) -> f64 {
    match *gate {
        Gate::Rx { qubit, .. } => {
            let stride = 1usize << qubit;
            let dot: C64 = phi
                .amps
                .iter()
                .enumerate()
                .map(|(i, p)| p.conj() * psi.amps[i ^ stride])
                .sum();
            dot.im
        }
        Gate::Rz { qubit, .. } => {
            let stride = 1usize << qubit;
            let dot: C64 = phi
                .amps
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let sign = if i & stride == 0 { 1.0 } else { -1.0 };
                    p.conj() * psi.amps[i] * sign
                })
                .sum();
            dot.im
        }
        Gate::Crx { control, target, .. } => {
            let (cs, ts) = (1usize << control, 1usize << target);
            let dot: C64 = phi
                .amps
                .iter()
                .enumerate()
                .filter(|(i, _)| i & cs != 0)
                .map(|(i, p)| p.conj() * psi.amps[i ^ ts])
                .sum();
            dot.im
        }
        Gate::Rzz { a, b, .. } => {
            let (sa, sb) = (1usize << a, 1usize << b);
            let dot: C64 = phi
                .amps
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let za = if i & sa == 0 { 1.0 } else { -1.0 };
                    let zb = if i & sb == 0 { 1.0 } else { -1.0 };
                    p.conj() * psi.amps[i] * (za * zb)
                })
                .sum();
            dot.im
        }
        _ => 0.0,
    }
}

/// Adjoint-mode gradient of the projector expectation p = <psi|P|psi> with
/// respect to every referenced parameter. Returns (p, d p / d theta_w,i).
///
/// Single backward sweep: phi starts as P|psi_N>; at each gate (last first)
/// the contribution 2 Re<phi|G|psi> is accumulated into the referenced
/// parameter slot with the reference's chain sign, then both states are
/// pulled back through the adjoint gate.
pub fn adjoint_gradient(
    circuit: &Circuit,
    params: &ParamStore,
) -> Result<(f64, ParamStore), SimError> {
    let mut psi = run_circuit(circuit, params, false)?;
    let p = psi.prob_all_zero(&circuit.measured);
    let mut phi = psi.clone();
    phi.project_all_zero(&circuit.measured);

    let mut grads = ParamStore::zeros(params.dialect);
    let mut grad_map: std::collections::BTreeMap<Word, Vec<f64>> = grads
        .words()
        .map(|(w, v)| (w, vec![0.0; v.len()]))
        .collect();

    for gate in circuit.gates.iter().rev() {
        if !gate.is_unitary() {
            continue;
        }
        if let Some(angle) = gate.angle() {
            if let Some((word, idx, sign)) = angle.reference() {
                let g = generator_grad(gate, &phi, &psi);
                grad_map.get_mut(&word).expect("vocabulary word")[idx] += sign * g;
            }
        }
        psi.apply_gate_adjoint(gate, params)?;
        phi.apply_gate_adjoint(gate, params)?;
    }
    for (w, v) in grads.words_mut() {
        v.copy_from_slice(&grad_map[&w]);
    }
    Ok((p, grads))
}
