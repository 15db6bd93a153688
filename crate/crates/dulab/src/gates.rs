//! Two-qudit operator algebra: index rearrangements, operator entanglement,
//! entangling power, Haar sampling and the dual-unitary generator families.
//!
//! A gate is a `q² × q²` matrix over the composite index `(i, j) ↦ i·q + j`,
//! with `U_{ijkl} = ⟨ij|U|kl⟩`.

use faer::{c64, Mat, MatRef};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, CMat, ONE, ZERO};
use crate::rng::Rng;

/// Max-abs residual accepted as unitary or dual-unitary.
pub const UNITARY_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct TwoQuditGate {
    q: usize,
    matrix: CMat,
}

impl TwoQuditGate {
    /// Wraps a matrix after checking shape and unitarity.
    pub fn new(q: usize, matrix: CMat) -> Result<Self> {
        if q < 2 {
            return invalid(format!("local dimension q = {q} must be at least 2"));
        }
        let d = q * q;
        if matrix.nrows() != d || matrix.ncols() != d {
            return invalid(format!(
                "gate must be {d}x{d} for q = {q}, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            ));
        }
        let res = linalg::unitarity_residual(matrix.as_ref());
        if !(res <= UNITARY_TOL) {
            return invalid(format!("gate is not unitary (residual {res:.3e})"));
        }
        Ok(Self { q, matrix })
    }

    pub(crate) fn from_unitary_unchecked(q: usize, matrix: CMat) -> Self {
        debug_assert_eq!(matrix.nrows(), q * q);
        Self { q, matrix }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn matrix(&self) -> MatRef<'_, c64> {
        self.matrix.as_ref()
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    /// `⟨ij|U|kl⟩`.
    pub fn element(&self, i: usize, j: usize, k: usize, l: usize) -> c64 {
        let q = self.q;
        self.matrix[(i * q + j, k * q + l)]
    }

    pub fn swap(q: usize) -> Self {
        Self::from_unitary_unchecked(q, swap_matrix(q))
    }

    pub fn identity(q: usize) -> Self {
        Self::from_unitary_unchecked(q, linalg::identity(q * q))
    }

    /// `U · S`.
    pub fn times_swap(&self) -> Self {
        Self::from_unitary_unchecked(self.q, &self.matrix * swap_matrix(self.q))
    }

    pub fn rearrange(&self, kind: Rearrangement) -> CMat {
        rearrange(self.q, self.matrix.as_ref(), kind)
    }

    pub fn entangling_power(&self) -> f64 {
        entangling_power(self)
    }

    pub fn raw_entangling_power(&self) -> f64 {
        raw_entangling_power(self)
    }

    pub fn to_json(&self) -> GateJson {
        let d = self.q * self.q;
        let mut rows = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                let z = self.matrix[(i, j)];
                rows.push([z.re, z.im]);
            }
        }
        GateJson { q: self.q, rows }
    }

    pub fn from_json(g: &GateJson) -> Result<Self> {
        let d = g.q * g.q;
        if g.rows.len() != d * d {
            return invalid(format!(
                "gate file lists {} entries, expected {} for q = {}",
                g.rows.len(),
                d * d,
                g.q
            ));
        }
        let m = Mat::from_fn(d, d, |i, j| {
            let [re, im] = g.rows[i * d + j];
            c64::new(re, im)
        });
        Self::new(g.q, m)
    }
}

/// Serialized gate: `q` and the `q⁴` entries as `[re, im]` in row-major order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateJson {
    pub q: usize,
    pub rows: Vec<[f64; 2]>,
}

pub fn swap_matrix(q: usize) -> CMat {
    let d = q * q;
    Mat::from_fn(d, d, |r, c| {
        let (i, j) = (r / q, r % q);
        let (k, l) = (c / q, c % q);
        if i == l && j == k {
            ONE
        } else {
            ZERO
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rearrangement {
    R1,
    R2,
    T1,
    T2,
}

impl std::str::FromStr for Rearrangement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "R1" => Ok(Self::R1),
            "R2" => Ok(Self::R2),
            "T1" => Ok(Self::T1),
            "T2" => Ok(Self::T2),
            other => invalid(format!("unknown rearrangement kind {other:?}")),
        }
    }
}

/// Index exchange of a `q² × q²` matrix, written as an explicit 4-index map.
///
/// * R1: `⟨ij|U|kl⟩ = ⟨lj|U^R1|ki⟩`
/// * R2: `⟨ij|U|kl⟩ = ⟨ik|U^R2|jl⟩`
/// * T1: `⟨ij|U|kl⟩ = ⟨kj|U^T1|il⟩`
/// * T2: `⟨ij|U|kl⟩ = ⟨il|U^T2|kj⟩`
pub fn rearrange(q: usize, u: MatRef<'_, c64>, kind: Rearrangement) -> CMat {
    let d = q * q;
    assert_eq!((u.nrows(), u.ncols()), (d, d), "rearrange: shape mismatch");
    let mut out = Mat::<c64>::zeros(d, d);
    for i in 0..q {
        for j in 0..q {
            for k in 0..q {
                for l in 0..q {
                    let v = u[(i * q + j, k * q + l)];
                    let (r, c) = match kind {
                        Rearrangement::R1 => (l * q + j, k * q + i),
                        Rearrangement::R2 => (i * q + k, j * q + l),
                        Rearrangement::T1 => (k * q + j, i * q + l),
                        Rearrangement::T2 => (i * q + l, k * q + j),
                    };
                    out[(r, c)] = v;
                }
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateKind {
    GenericUnitary,
    DualUnitary,
    TwoUnitary,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateClass {
    pub kind: GateKind,
    pub r_residual: f64,
    pub t_residual: f64,
}

pub fn classify_gate(u: &TwoQuditGate, tol: f64) -> Result<GateClass> {
    let ures = linalg::unitarity_residual(u.matrix());
    if !(ures <= tol) {
        return invalid(format!("gate is not unitary (residual {ures:.3e})"));
    }
    let r_residual = linalg::unitarity_residual(u.rearrange(Rearrangement::R1).as_ref());
    let t_residual = linalg::unitarity_residual(u.rearrange(Rearrangement::T2).as_ref());
    let kind = if r_residual <= tol && t_residual <= tol {
        GateKind::TwoUnitary
    } else if r_residual <= tol {
        GateKind::DualUnitary
    } else {
        GateKind::GenericUnitary
    };
    Ok(GateClass {
        kind,
        r_residual,
        t_residual,
    })
}

/// `1 − tr[(X X†)²]/q⁴` for a rearranged gate `X`.
fn linear_entropy_of(x: MatRef<'_, c64>, q: usize) -> f64 {
    let q4 = (q * q * q * q) as f64;
    1.0 - linalg::gram_purity(x) / q4
}

/// Operator entanglement of a unitary `q² × q²` matrix.
pub fn operator_entanglement(q: usize, u: MatRef<'_, c64>) -> f64 {
    linear_entropy_of(rearrange(q, u, Rearrangement::R1).as_ref(), q)
}

/// `(E(U), E(US))`.
pub fn gate_entanglement(u: &TwoQuditGate) -> (f64, f64) {
    let q = u.q();
    let e = linear_entropy_of(u.rearrange(Rearrangement::R1).as_ref(), q);
    let es = linear_entropy_of(u.rearrange(Rearrangement::T2).as_ref(), q);
    (e, es)
}

pub fn raw_entangling_power(u: &TwoQuditGate) -> f64 {
    let q = u.q() as f64;
    let (e, es) = gate_entanglement(u);
    let e_swap = 1.0 - 1.0 / (q * q);
    q * q / ((q + 1.0) * (q + 1.0)) * (e + es - e_swap)
}

/// Entangling power normalized by its maximum `(q−1)/(q+1)`.
pub fn entangling_power(u: &TwoQuditGate) -> f64 {
    let q = u.q() as f64;
    raw_entangling_power(u) * (q + 1.0) / (q - 1.0)
}

/// Haar-distributed `q × q` unitary: Gaussian matrix, QR, phase fix on `diag(R)`.
pub fn haar_unitary(q: usize, rng: &mut Rng) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let z = Mat::from_fn(q, q, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c64::new(re * s, im * s)
    });
    let qr = z.qr();
    let mut qm = qr.compute_Q();
    let r = qr.R();
    for k in 0..q {
        let d = r[(k, k)];
        let n = d.norm();
        let phase = if n > 0.0 { d / n } else { ONE };
        for i in 0..q {
            qm[(i, k)] *= phase;
        }
    }
    qm
}

#[derive(Clone, Debug)]
pub struct LocalDressing {
    pub u1: CMat,
    pub u2: CMat,
    pub v1: CMat,
    pub v2: CMat,
}

impl LocalDressing {
    pub fn identity(q: usize) -> Self {
        let e = linalg::identity(q);
        Self {
            u1: e.clone(),
            u2: e.clone(),
            v1: e.clone(),
            v2: e,
        }
    }

    pub fn haar(q: usize, rng: &mut Rng) -> Self {
        Self {
            u1: haar_unitary(q, rng),
            u2: haar_unitary(q, rng),
            v1: haar_unitary(q, rng),
            v2: haar_unitary(q, rng),
        }
    }

    fn dim(&self) -> usize {
        self.u1.nrows()
    }
}

/// `U′ = (u₁⊗u₂) U (v₁⊗v₂)`.
pub fn dress_local(u: &TwoQuditGate, d: &LocalDressing) -> Result<TwoQuditGate> {
    let q = u.q();
    for (name, f) in [("u1", &d.u1), ("u2", &d.u2), ("v1", &d.v1), ("v2", &d.v2)] {
        if f.nrows() != q || f.ncols() != q {
            return invalid(format!("dressing factor {name} is not {q}x{q}"));
        }
        let r = linalg::unitarity_residual(f.as_ref());
        if !(r <= UNITARY_TOL) {
            return invalid(format!("dressing factor {name} not unitary (residual {r:.3e})"));
        }
    }
    debug_assert_eq!(d.dim(), q);
    let left = linalg::kron(d.u1.as_ref(), d.u2.as_ref());
    let right = linalg::kron(d.v1.as_ref(), d.v2.as_ref());
    let m = &left * u.matrix() * &right;
    Ok(TwoQuditGate::from_unitary_unchecked(q, m))
}

#[derive(Clone, Debug)]
pub struct CartanParams {
    pub j3: f64,
    pub phi: f64,
    /// `(u₊, u₋, v₊, v₋)` applied as `(u₊⊗u₋) · S D(J) · (v₊⊗v₋)`.
    pub locals: Option<LocalDressing>,
}

impl CartanParams {
    pub fn bare(j3: f64) -> Self {
        Self {
            j3,
            phi: 0.0,
            locals: None,
        }
    }
}

/// Qubit dual-unitary `e^{iφ} (u₊⊗u₋) S D(J₃) (v₊⊗v₋)`.
pub fn cartan_du(p: &CartanParams) -> Result<TwoQuditGate> {
    let quarter = std::f64::consts::FRAC_PI_4;
    if !(0.0..=quarter + 1e-15).contains(&p.j3) {
        return invalid(format!("J3 = {} outside [0, pi/4]", p.j3));
    }
    let j = p.j3;
    let a = c64::from_polar(1.0, -j);
    let b = c64::new(0.0, -1.0) * c64::from_polar(1.0, j);
    let diag = [a, b, b, a];
    let phase = c64::from_polar(1.0, p.phi);
    let s = swap_matrix(2);
    let sd = Mat::from_fn(4, 4, |r, c| s[(r, c)] * diag[c] * phase);
    let g = TwoQuditGate::from_unitary_unchecked(2, sd);
    match &p.locals {
        None => Ok(g),
        Some(d) => dress_local(&g, d),
    }
}

/// Closed form of the normalized entangling power of the Cartan family.
pub fn cartan_entangling_power(j3: f64) -> f64 {
    let c = (2.0 * j3).cos();
    2.0 / 3.0 * c * c
}

#[derive(Clone, Debug)]
pub struct MrTrace {
    pub gate: TwoQuditGate,
    /// Dual-unitarity residual of each iterate.
    pub residuals: Vec<f64>,
    pub operator_entanglement: f64,
}

/// Iterates `U ↦ polar(U^R2)`, returning the last iterate and its residual trace.
pub fn mr_generate(q: usize, seed: MatRef<'_, c64>, iterations: usize) -> Result<MrTrace> {
    if iterations == 0 {
        return invalid("mr_generate needs at least one iteration");
    }
    let mut u = TwoQuditGate::new(q, seed.to_owned())?;
    let mut residuals = Vec::with_capacity(iterations);
    for it in 0..iterations {
        let r = u.rearrange(Rearrangement::R2);
        let w = linalg::polar_unitary(r.as_ref())
            .map_err(|e| Error::Numerical(format!("M_R iteration {it}: {e}")))?;
        if w.as_ref().squared_norm_l2().is_nan() {
            return Err(Error::Numerical(format!("M_R iteration {it}: degenerate realignment")));
        }
        u = TwoQuditGate::from_unitary_unchecked(q, w);
        residuals.push(linalg::unitarity_residual(u.rearrange(Rearrangement::R1).as_ref()));
    }
    let operator_entanglement = gate_entanglement(&u).0;
    Ok(MrTrace {
        gate: u,
        residuals,
        operator_entanglement,
    })
}

/// Runs the map from fresh Haar seeds until an iterate is dual-unitary to
/// `UNITARY_TOL / 10`; seeds that stall after `max_iter` steps are redrawn.
pub fn mr_dual_unitary(q: usize, rng: &mut Rng, max_iter: usize) -> Result<TwoQuditGate> {
    for _ in 0..64 {
        let seed = haar_unitary(q * q, rng);
        let mut u = TwoQuditGate::from_unitary_unchecked(q, seed);
        for _ in 0..max_iter {
            let w = linalg::polar_unitary(u.rearrange(Rearrangement::R2).as_ref())?;
            u = TwoQuditGate::from_unitary_unchecked(q, w);
            let r = linalg::unitarity_residual(u.rearrange(Rearrangement::R1).as_ref());
            if r <= UNITARY_TOL * 0.1 {
                return Ok(u);
            }
        }
    }
    Err(Error::Numerical("M_R map failed to converge from 64 seeds".into()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationSpec {
    /// Entries in `1..=q`.
    pub k: Vec<Vec<usize>>,
    pub l: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PermutationReport {
    /// Rows of `K` holding a repeated entry.
    pub k_rows_repeating: Vec<usize>,
    /// Columns of `L` holding a repeated entry.
    pub l_cols_repeating: Vec<usize>,
    pub k_latin: bool,
    pub l_latin: bool,
}

impl PermutationReport {
    pub fn dual_unitary(&self) -> bool {
        self.k_rows_repeating.is_empty() && self.l_cols_repeating.is_empty()
    }

    /// Both Latin; orthogonality is implied by the map being a bijection.
    pub fn two_unitary(&self) -> bool {
        self.k_latin && self.l_latin
    }
}

fn has_repeat(vals: impl Iterator<Item = usize>, q: usize) -> bool {
    let mut seen = vec![false; q + 1];
    for v in vals {
        if seen[v] {
            return true;
        }
        seen[v] = true;
    }
    false
}

/// Checks the spec, returning the uniqueness report (violations are reported,
/// not rejected; only a non-bijective map is an error).
pub fn validate_permutation(spec: &PermutationSpec) -> Result<PermutationReport> {
    let q = spec.k.len();
    if q < 2 || spec.l.len() != q || spec.k.iter().chain(&spec.l).any(|r| r.len() != q) {
        return invalid("K and L must both be q x q with q >= 2");
    }
    if spec.k.iter().chain(&spec.l).flatten().any(|&v| v == 0 || v > q) {
        return invalid(format!("K and L entries must lie in 1..={q}"));
    }
    let mut hit = vec![false; q * q];
    for i in 0..q {
        for j in 0..q {
            let t = (spec.k[i][j] - 1) * q + (spec.l[i][j] - 1);
            if hit[t] {
                return invalid(format!(
                    "(K, L) is not a permutation: output pair ({}, {}) repeats at ({i}, {j})",
                    spec.k[i][j], spec.l[i][j]
                ));
            }
            hit[t] = true;
        }
    }
    let k_rows_repeating = (0..q)
        .filter(|&i| has_repeat(spec.k[i].iter().copied(), q))
        .collect::<Vec<_>>();
    let l_cols_repeating = (0..q)
        .filter(|&j| has_repeat((0..q).map(|i| spec.l[i][j]), q))
        .collect::<Vec<_>>();
    let latin = |m: &Vec<Vec<usize>>| {
        (0..q).all(|i| !has_repeat(m[i].iter().copied(), q))
            && (0..q).all(|j| !has_repeat((0..q).map(|i| m[i][j]), q))
    };
    Ok(PermutationReport {
        k_latin: latin(&spec.k),
        l_latin: latin(&spec.l),
        k_rows_repeating,
        l_cols_repeating,
    })
}

/// `P = Σ |k_ij⟩|l_ij⟩⟨i|⟨j|` with its validation report.
pub fn permutation_gate(spec: &PermutationSpec) -> Result<(TwoQuditGate, PermutationReport)> {
    let report = validate_permutation(spec)?;
    let q = spec.k.len();
    let d = q * q;
    let mut m = Mat::<c64>::zeros(d, d);
    for i in 0..q {
        for j in 0..q {
            let row = (spec.k[i][j] - 1) * q + (spec.l[i][j] - 1);
            m[(row, i * q + j)] = ONE;
        }
    }
    Ok((TwoQuditGate::from_unitary_unchecked(q, m), report))
}

/// Normalized four-party state `ψ_{PQRS} = U_{(PQ),(RS)}/q`, indexed `P·q³+Q·q²+R·q+S`.
pub fn choi_state(u: &TwoQuditGate) -> Vec<c64> {
    let q = u.q();
    let d = q * q;
    let inv = 1.0 / q as f64;
    let mut psi = Vec::with_capacity(d * d);
    for r in 0..d {
        for c in 0..d {
            psi.push(u.matrix()[(r, c)] * inv);
        }
    }
    psi
}

/// Reduced purities of the Choi state across `PQ|RS`, `PR|QS` and `PS|QR`.
pub fn choi_purities(u: &TwoQuditGate) -> [f64; 3] {
    let q = u.q();
    let q2 = (q * q) as f64;
    let pq = linalg::gram_purity(u.matrix()) / (q2 * q2);
    let pr = linalg::gram_purity(u.rearrange(Rearrangement::R2).as_ref()) / (q2 * q2);
    let ps = linalg::gram_purity(u.rearrange(Rearrangement::T2).as_ref()) / (q2 * q2);
    [pq, pr, ps]
}

/// Two orthogonal Latin squares of order 3 giving a 2-unitary permutation.
pub fn ols_q3() -> PermutationSpec {
    PermutationSpec {
        k: vec![vec![1, 2, 3], vec![2, 3, 1], vec![3, 1, 2]],
        l: vec![vec![1, 2, 3], vec![3, 1, 2], vec![2, 3, 1]],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn haar_gate(q: usize, rng: &mut Rng) -> TwoQuditGate {
        TwoQuditGate::new(q, haar_unitary(q * q, rng)).unwrap()
    }

    #[test]
    fn rearrangements_are_involutions() {
        let mut rng = seeded(1);
        for q in [2, 3] {
            let u = haar_gate(q, &mut rng);
            for kind in [Rearrangement::R1, Rearrangement::R2, Rearrangement::T1, Rearrangement::T2] {
                let twice = rearrange(q, u.rearrange(kind).as_ref(), kind);
                assert_eq!(linalg::max_abs_diff(twice.as_ref(), u.matrix()), 0.0);
            }
        }
    }

    #[test]
    fn swap_is_fixed_by_r1_and_identity_is_not() {
        for q in [2, 3] {
            let s = TwoQuditGate::swap(q);
            let r = s.rearrange(Rearrangement::R1);
            assert_eq!(linalg::max_abs_diff(r.as_ref(), s.matrix()), 0.0);
            let id = TwoQuditGate::identity(q).rearrange(Rearrangement::R1);
            // q times the projector onto the maximally entangled pair.
            for a in 0..q * q {
                for b in 0..q * q {
                    let want = if a % (q + 1) == 0 && b % (q + 1) == 0 { 1.0 } else { 0.0 };
                    assert_eq!(id[(a, b)].re, want);
                }
            }
        }
    }

    #[test]
    fn element_follows_index_convention() {
        let s = TwoQuditGate::swap(3);
        assert_eq!(s.element(1, 2, 2, 1), ONE);
        assert_eq!(s.element(1, 2, 1, 2), ZERO);
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_gate(&TwoQuditGate::swap(2), UNITARY_TOL).unwrap().kind, GateKind::DualUnitary);
        assert_eq!(classify_gate(&TwoQuditGate::identity(2), UNITARY_TOL).unwrap().kind, GateKind::GenericUnitary);
        let (p, _) = permutation_gate(&ols_q3()).unwrap();
        assert_eq!(classify_gate(&p, UNITARY_TOL).unwrap().kind, GateKind::TwoUnitary);
        let bad = Mat::from_fn(4, 4, |i, j| if i == j { c64::new(2.0, 0.0) } else { ZERO });
        assert!(TwoQuditGate::new(2, bad).is_err());
    }

    #[test]
    fn entanglement_of_du_gates_is_maximal() {
        let mut rng = seeded(3);
        for j3 in [0.0, 0.3, 0.7] {
            let p = CartanParams { j3, phi: 0.4, locals: Some(LocalDressing::haar(2, &mut rng)) };
            let (e, _) = gate_entanglement(&cartan_du(&p).unwrap());
            assert!((e - 0.75).abs() < 1e-12);
        }
        let (e, es) = gate_entanglement(&TwoQuditGate::identity(3));
        assert!(e.abs() < 1e-14);
        assert!((es - 8.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn operator_entanglement_matches_schmidt_spectrum() {
        let mut rng = seeded(5);
        let u = haar_gate(2, &mut rng);
        // Schmidt coefficients of U/q over the operator Hilbert-Schmidt basis.
        let r = u.rearrange(Rearrangement::R2);
        let sv = r.as_ref().singular_values().unwrap();
        let purity: f64 = sv.iter().map(|s| (s * s / 4.0).powi(2)).sum();
        assert!((gate_entanglement(&u).0 - (1.0 - purity)).abs() < 1e-12);
    }

    #[test]
    fn e_us_is_entanglement_of_u_times_swap() {
        let mut rng = seeded(6);
        for q in [2, 3] {
            let u = haar_gate(q, &mut rng);
            let (_, es) = gate_entanglement(&u);
            let direct = gate_entanglement(&u.times_swap()).0;
            assert!((es - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn entangling_power_examples() {
        assert!(entangling_power(&TwoQuditGate::swap(2)).abs() < 1e-14);
        let u0 = cartan_du(&CartanParams::bare(0.0)).unwrap();
        assert!((entangling_power(&u0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((raw_entangling_power(&u0) - 2.0 / 9.0).abs() < 1e-12);
        let u8 = cartan_du(&CartanParams::bare(std::f64::consts::PI / 8.0)).unwrap();
        assert!((entangling_power(&u8) - 1.0 / 3.0).abs() < 1e-12);
        assert!((raw_entangling_power(&u8) - 1.0 / 9.0).abs() < 1e-12);
        let (p, _) = permutation_gate(&ols_q3()).unwrap();
        assert!((entangling_power(&p) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cartan_rejects_out_of_range() {
        assert!(cartan_du(&CartanParams::bare(-0.1)).is_err());
        assert!(cartan_du(&CartanParams::bare(1.0)).is_err());
    }

    #[test]
    fn haar_is_unitary_and_deterministic() {
        let a = haar_unitary(3, &mut seeded(11));
        let b = haar_unitary(3, &mut seeded(11));
        assert!(linalg::unitarity_residual(a.as_ref()) < 1e-12);
        assert_eq!(linalg::max_abs_diff(a.as_ref(), b.as_ref()), 0.0);
    }

    #[test]
    fn haar_second_moment() {
        // E|u_ij|² = 1/q; 10⁵ draws of a q = 3 unitary.
        let mut rng = seeded(12);
        let n = 100_000;
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let u = haar_unitary(3, &mut rng);
            let v = u[(0, 1)].norm_sqr();
            sum += v;
            sum2 += v * v;
        }
        let mean = sum / n as f64;
        let sd = ((sum2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - 1.0 / 3.0).abs() < 3.0 * sd, "mean {mean} sd {sd}");
    }

    #[test]
    fn dressing_identity_and_invariance() {
        let mut rng = seeded(13);
        let u = cartan_du(&CartanParams::bare(0.2)).unwrap();
        let same = dress_local(&u, &LocalDressing::identity(2)).unwrap();
        assert!(linalg::max_abs_diff(same.matrix(), u.matrix()) < 1e-15);
        let ep = entangling_power(&u);
        for _ in 0..1000 {
            let d = dress_local(&u, &LocalDressing::haar(2, &mut rng)).unwrap();
            assert!((entangling_power(&d) - ep).abs() < 1e-10);
            let class = classify_gate(&d, UNITARY_TOL).unwrap();
            assert_eq!(class.kind, GateKind::DualUnitary);
        }
        let bad = LocalDressing { u1: linalg::identity(3), ..LocalDressing::identity(2) };
        assert!(dress_local(&u, &bad).is_err());
    }

    #[test]
    fn mr_keeps_du_seeds_dual_unitary() {
        let mut rng = seeded(14);
        let p = CartanParams { j3: 0.3, phi: 0.0, locals: Some(LocalDressing::haar(2, &mut rng)) };
        let u = cartan_du(&p).unwrap();
        let tr = mr_generate(2, u.matrix(), 20).unwrap();
        assert!(tr.residuals.iter().all(|&r| r <= UNITARY_TOL));
    }

    #[test]
    fn mr_converges_from_haar_seed() {
        let mut rng = seeded(15);
        let seed = haar_unitary(9, &mut rng);
        let tr = mr_generate(3, seed.as_ref(), 100).unwrap();
        assert!(tr.residuals[99] < tr.residuals[0]);
        assert!(linalg::unitarity_residual(tr.gate.matrix()) < 1e-12);
        assert!((tr.operator_entanglement - 8.0 / 9.0).abs() < 1e-4);
        let du = mr_dual_unitary(3, &mut rng, 5000).unwrap();
        assert!(classify_gate(&du, UNITARY_TOL).unwrap().kind != GateKind::GenericUnitary);
        assert!(mr_generate(3, seed.as_ref(), 0).is_err());
    }

    #[test]
    fn worked_permutation_example_is_dual_unitary() {
        let spec = PermutationSpec {
            k: vec![vec![1, 2, 3], vec![3, 1, 2], vec![3, 2, 1]],
            l: vec![vec![1, 3, 1], vec![3, 2, 2], vec![2, 1, 3]],
        };
        let (p, rep) = permutation_gate(&spec).unwrap();
        assert!(rep.dual_unitary());
        assert!(!rep.two_unitary());
        let class = classify_gate(&p, UNITARY_TOL).unwrap();
        assert_eq!(class.kind, GateKind::DualUnitary);
    }

    #[test]
    fn identity_permutation_fails_row_uniqueness() {
        let spec = PermutationSpec {
            k: vec![vec![1, 1, 1], vec![2, 2, 2], vec![3, 3, 3]],
            l: vec![vec![1, 2, 3], vec![1, 2, 3], vec![1, 2, 3]],
        };
        let (p, rep) = permutation_gate(&spec).unwrap();
        assert_eq!(rep.k_rows_repeating, vec![0, 1, 2]);
        assert_eq!(linalg::max_abs_diff(p.matrix(), linalg::identity(9).as_ref()), 0.0);
        let bad = PermutationSpec { k: spec.k.clone(), l: spec.k.clone() };
        assert!(permutation_gate(&bad).is_err());
    }

    #[test]
    fn choi_pairings() {
        let id = TwoQuditGate::identity(2);
        let [pq, pr, _] = choi_purities(&id);
        assert!((pq - 0.25).abs() < 1e-14);
        assert!((pr - 1.0).abs() < 1e-14);
        let (p, _) = permutation_gate(&ols_q3()).unwrap();
        for v in choi_purities(&p) {
            assert!((v - 1.0 / 9.0).abs() < 1e-14);
        }
        let psi = choi_state(&p);
        let n: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        assert!((n - 1.0).abs() < 1e-14);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut rng = seeded(16);
        let u = haar_gate(3, &mut rng);
        let text = serde_json::to_string(&u.to_json()).unwrap();
        let back: GateJson = serde_json::from_str(&text).unwrap();
        let v = TwoQuditGate::from_json(&back).unwrap();
        assert_eq!(linalg::max_abs_diff(u.matrix(), v.matrix()), 0.0);
    }
}
