//! Periodic brickwall evolution of pair-product states, reduced density
//! matrices, Rényi entropies and the staircase operators `C_x`.
//!
//! Sites are numbered `0..L`; site 0 is the most significant digit of the
//! amplitude index. Pairs of the initial state sit on `(2j, 2j+1)`. One time
//! step applies the gate on the bonds `(1,2), (3,4), …, (L−1,0)` first and on
//! `(0,1), (2,3), …` second, so the first layer already couples neighbouring
//! pairs and the half cut at `i = L/4` grows by `κ_t = 2t` (even `i`) or
//! `2t + 1` (odd `i`) indices per step.

use faer::{c64, Mat, MatRef};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gates::{self, TwoQuditGate};
use crate::linalg::{self, CMat, ONE, ZERO};
use crate::rng::Rng;

/// Upper bound on amplitudes held by a single state vector.
pub const MAX_STATE_DIM: usize = 1 << 26;

#[derive(Clone, Debug)]
pub struct PairKernel {
    q: usize,
    m: CMat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelSource {
    /// `diag(√q, 0, …)`: every pair starts in `|00⟩`.
    Diag,
    /// Haar-random unitary kernel, `c = 1`.
    Unitary,
    /// Complex Gaussian kernel, rescaled.
    Random,
}

impl PairKernel {
    /// Rescales `m` so that `tr(m m†) = q`.
    pub fn normalized(m: CMat) -> Result<Self> {
        let q = m.nrows();
        if q < 2 || m.ncols() != q {
            return invalid("pair kernel must be a square matrix with q >= 2");
        }
        let n = m.as_ref().squared_norm_l2();
        if !(n > 0.0) || !n.is_finite() {
            return invalid("pair kernel has zero or non-finite norm");
        }
        let s = ((q as f64) / n).sqrt();
        let m = Mat::from_fn(q, q, |i, j| m[(i, j)] * s);
        Ok(Self { q, m })
    }

    /// Accepts `m` only when already normalized to 1e-12.
    pub fn new(m: CMat) -> Result<Self> {
        let q = m.nrows();
        let n = m.as_ref().squared_norm_l2();
        if (n - q as f64).abs() > 1e-12 {
            return invalid(format!("pair kernel not normalized: tr(m m†) = {n}, want {q}"));
        }
        Ok(Self { q, m })
    }

    pub fn diag(q: usize) -> Self {
        let mut m = Mat::<c64>::zeros(q, q);
        m[(0, 0)] = c64::new((q as f64).sqrt(), 0.0);
        Self { q, m }
    }

    pub fn unitary(q: usize, rng: &mut Rng) -> Self {
        Self {
            q,
            m: gates::haar_unitary(q, rng),
        }
    }

    pub fn random(q: usize, rng: &mut Rng) -> Self {
        let m = Mat::from_fn(q, q, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            c64::new(re, im)
        });
        Self::normalized(m).expect("gaussian kernel is nonzero")
    }

    pub fn from_source(source: KernelSource, q: usize, rng: &mut Rng) -> Self {
        match source {
            KernelSource::Diag => Self::diag(q),
            KernelSource::Unitary => Self::unitary(q, rng),
            KernelSource::Random => Self::random(q, rng),
        }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn matrix(&self) -> MatRef<'_, c64> {
        self.m.as_ref()
    }

    /// `c = tr((m m†)²)/q`, in `[1, q]`.
    pub fn c(&self) -> f64 {
        linalg::gram_purity(self.m.as_ref()) / self.q as f64
    }

    /// `χ = (c − 1)/√(q² − 1)`.
    pub fn chi(&self) -> f64 {
        let q = self.q as f64;
        (self.c() - 1.0) / (q * q - 1.0).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct BrickwallCircuit {
    pub gate: TwoQuditGate,
    pub l: usize,
}

impl BrickwallCircuit {
    pub fn new(gate: TwoQuditGate, l: usize) -> Result<Self> {
        if l < 2 || !l.is_multiple_of(2) {
            return invalid(format!("chain length L = {l} must be even and at least 2"));
        }
        Ok(Self { gate, l })
    }

    pub fn q(&self) -> usize {
        self.gate.q()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub q: usize,
    pub l: usize,
    pub amps: Vec<c64>,
}

pub fn checked_dim(q: usize, l: usize) -> Result<usize> {
    let mut d: usize = 1;
    for _ in 0..l {
        d = d
            .checked_mul(q)
            .filter(|&d| d <= MAX_STATE_DIM)
            .ok_or_else(|| Error::Guard(format!("state of {l} sites with q = {q} exceeds {MAX_STATE_DIM} amplitudes")))?;
    }
    Ok(d)
}

impl ChainState {
    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn product(q: usize, l: usize, digits: &[usize]) -> Result<Self> {
        let d = checked_dim(q, l)?;
        if digits.len() != l || digits.iter().any(|&x| x >= q) {
            return invalid("product state digits must list one value in 0..q per site");
        }
        let idx = digits.iter().fold(0, |acc, &x| acc * q + x);
        let mut amps = vec![ZERO; d];
        amps[idx] = ONE;
        Ok(Self { q, l, amps })
    }

    /// Stride of `site` in the amplitude index.
    pub fn stride(&self, site: usize) -> usize {
        self.q.pow((self.l - 1 - site) as u32)
    }
}

/// `N` copies of `m/√q` on the pairs `(2j, 2j+1)`.
pub fn initial_state(k: &PairKernel, pairs: usize) -> Result<ChainState> {
    if pairs == 0 {
        return invalid("initial state needs at least one pair");
    }
    let q = k.q;
    let n = k.m.as_ref().squared_norm_l2();
    if (n - q as f64).abs() > 1e-10 {
        return invalid(format!("pair kernel not normalized: tr(m m†) = {n}"));
    }
    let l = 2 * pairs;
    checked_dim(q, l)?;
    let s = 1.0 / (q as f64).sqrt();
    let pair: Vec<c64> = (0..q * q).map(|ab| k.m[(ab / q, ab % q)] * s).collect();
    let mut amps = vec![ONE];
    for _ in 0..pairs {
        let mut next = Vec::with_capacity(amps.len() * q * q);
        for a in &amps {
            for p in &pair {
                next.push(a * p);
            }
        }
        amps = next;
    }
    Ok(ChainState { q, l, amps })
}

/// Applies a `q² × q²` gate with its first qudit on site `a`, second on `b`.
pub fn apply_two_site(state: &mut ChainState, a: usize, b: usize, gate: MatRef<'_, c64>) {
    let q = state.q;
    let d2 = q * q;
    assert!(a != b && a < state.l && b < state.l);
    assert_eq!((gate.nrows(), gate.ncols()), (d2, d2));
    let sa = state.stride(a);
    let sb = state.stride(b);
    let (lo_s, hi_s) = if sa < sb { (sa, sb) } else { (sb, sa) };
    let dim = state.amps.len();
    let offs: Vec<usize> = (0..d2).map(|r| (r / q) * sa + (r % q) * sb).collect();
    let g: Vec<c64> = (0..d2 * d2).map(|t| gate[(t / d2, t % d2)]).collect();
    let mut buf = vec![ZERO; d2];
    let amps = &mut state.amps;
    let outer = dim / (hi_s * q);
    let mid = hi_s / (lo_s * q);
    for h in 0..outer {
        for m in 0..mid {
            let base0 = h * hi_s * q + m * lo_s * q;
            for lo in 0..lo_s {
                let base = base0 + lo;
                for (r, o) in offs.iter().enumerate() {
                    buf[r] = amps[base + o];
                }
                for (r, o) in offs.iter().enumerate() {
                    let row = &g[r * d2..(r + 1) * d2];
                    let mut acc = ZERO;
                    for (x, y) in row.iter().zip(&buf) {
                        acc += x * y;
                    }
                    amps[base + o] = acc;
                }
            }
        }
    }
}

/// Bonds of the first and second sub-layer.
pub fn sublayers(l: usize) -> [Vec<(usize, usize)>; 2] {
    let odd = (0..l / 2).map(|j| (2 * j + 1, (2 * j + 2) % l)).collect();
    let even = (0..l / 2).map(|j| (2 * j, 2 * j + 1)).collect();
    [odd, even]
}

pub fn evolve_in_place(state: &mut ChainState, circuit: &BrickwallCircuit, steps: usize) -> Result<()> {
    if state.l != circuit.l || state.q != circuit.q() {
        return invalid("state and circuit dimensions differ");
    }
    let layers = sublayers(circuit.l);
    let g = circuit.gate.matrix();
    for _ in 0..steps {
        for layer in &layers {
            for &(a, b) in layer {
                apply_two_site(state, a, b, g);
            }
        }
    }
    Ok(())
}

pub fn evolve(state: &ChainState, circuit: &BrickwallCircuit, steps: usize) -> Result<ChainState> {
    let mut s = state.clone();
    evolve_in_place(&mut s, circuit, steps)?;
    Ok(s)
}

/// Dense one-step propagator, for small chains only.
pub fn step_unitary(circuit: &BrickwallCircuit) -> Result<CMat> {
    let q = circuit.q();
    let d = checked_dim(q, circuit.l)?;
    if d > 4096 {
        return Err(Error::Guard(format!("dense propagator of dimension {d} refused")));
    }
    let mut out = Mat::<c64>::zeros(d, d);
    for col in 0..d {
        let mut amps = vec![ZERO; d];
        amps[col] = ONE;
        let mut s = ChainState { q, l: circuit.l, amps };
        evolve_in_place(&mut s, circuit, 1)?;
        for (row, z) in s.amps.iter().enumerate() {
            out[(row, col)] = *z;
        }
    }
    Ok(out)
}

/// `𝕌(t) = 𝒰^t` as a dense matrix.
pub fn brickwall_unitary(circuit: &BrickwallCircuit, t: usize) -> Result<CMat> {
    let u = step_unitary(circuit)?;
    let mut acc = linalg::identity(u.nrows());
    for _ in 0..t {
        acc = &u * &acc;
    }
    Ok(acc)
}

/// Amplitudes reshaped to rows over `rows` (in the given order) and columns
/// over the remaining sites (in increasing order).
pub fn split_matrix(state: &ChainState, rows: &[usize]) -> Result<CMat> {
    let (q, l) = (state.q, state.l);
    let mut is_row = vec![false; l];
    for &s in rows {
        if s >= l || is_row[s] {
            return invalid(format!("site set {rows:?} invalid for L = {l}"));
        }
        is_row[s] = true;
    }
    let cols: Vec<usize> = (0..l).filter(|&s| !is_row[s]).collect();
    let nr = q.pow(rows.len() as u32);
    let nc = q.pow(cols.len() as u32);
    // Per-site contributions to the row and column index.
    let mut row_w = vec![0usize; l];
    let mut col_w = vec![0usize; l];
    for (p, &s) in rows.iter().enumerate() {
        row_w[s] = q.pow((rows.len() - 1 - p) as u32);
    }
    for (p, &s) in cols.iter().enumerate() {
        col_w[s] = q.pow((cols.len() - 1 - p) as u32);
    }
    // Split the index into a high and a low half and tabulate both halves.
    let lo_sites = l / 2;
    let hi_sites = l - lo_sites;
    let table = |first: usize, count: usize| {
        let n = q.pow(count as u32);
        let mut r = vec![0usize; n];
        let mut c = vec![0usize; n];
        for v in 0..n {
            let mut x = v;
            for p in (0..count).rev() {
                let s = first + p;
                let digit = x % q;
                x /= q;
                r[v] += digit * row_w[s];
                c[v] += digit * col_w[s];
            }
        }
        (r, c)
    };
    let (hr, hc) = table(0, hi_sites);
    let (lr, lc) = table(hi_sites, lo_sites);
    let nlo = q.pow(lo_sites as u32);
    let mut m = Mat::<c64>::zeros(nr, nc);
    for (h, (&rh, &ch)) in hr.iter().zip(&hc).enumerate() {
        let chunk = &state.amps[h * nlo..(h + 1) * nlo];
        for (v, z) in chunk.iter().enumerate() {
            m[(rh + lr[v], ch + lc[v])] = *z;
        }
    }
    Ok(m)
}

fn check_contiguous(sites: &[usize], l: usize) -> Result<()> {
    if sites.is_empty() || sites.windows(2).any(|w| w[1] != w[0] + 1) || *sites.last().unwrap() >= l {
        return invalid(format!("site set {sites:?} is not a contiguous block of 0..{l}"));
    }
    Ok(())
}

/// `ρ_A` for a contiguous block `A`.
pub fn reduced_density(state: &ChainState, sites: &[usize]) -> Result<CMat> {
    check_contiguous(sites, state.l)?;
    let m = split_matrix(state, sites)?;
    Ok(&m * m.adjoint())
}

/// `tr ρ_S²` for an arbitrary site set, through the smaller Gram matrix.
pub fn subset_purity(state: &ChainState, sites: &[usize]) -> Result<f64> {
    let m = split_matrix(state, sites)?;
    Ok(linalg::gram_purity(m.as_ref()))
}

/// Schmidt weights (eigenvalues of `ρ_S`) for an arbitrary site set.
pub fn schmidt_weights(state: &ChainState, sites: &[usize]) -> Result<Vec<f64>> {
    let m = split_matrix(state, sites)?;
    linalg::hermitian_eigenvalues(linalg::gram(m.as_ref()).as_ref())
}

/// Rényi entropy (natural log) from a probability spectrum; `α = 1` is von Neumann.
pub fn renyi_from_spectrum(p: &[f64], alpha: f64) -> f64 {
    if (alpha - 1.0).abs() < 1e-15 {
        return von_neumann_from_spectrum(p);
    }
    let s: f64 = p.iter().filter(|&&x| x > 0.0).map(|&x| x.powf(alpha)).sum();
    (s.ln() / (1.0 - alpha)).max(0.0)
}

pub fn von_neumann_from_spectrum(p: &[f64]) -> f64 {
    p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.ln())
        .sum::<f64>()
        .max(0.0)
}

pub fn renyi_entropy(rho: MatRef<'_, c64>, alpha: f64) -> Result<f64> {
    if (alpha - 2.0).abs() < 1e-15 {
        return Ok((-rho.squared_norm_l2().ln()).max(0.0));
    }
    let p = linalg::hermitian_eigenvalues(rho)?;
    Ok(renyi_from_spectrum(&p, alpha))
}

pub fn von_neumann(rho: MatRef<'_, c64>) -> Result<f64> {
    let p = linalg::hermitian_eigenvalues(rho)?;
    Ok(von_neumann_from_spectrum(&p))
}

/// Sites of the half block `A = {L/4, …, L − L/4 − 1}`.
pub fn half_block(l: usize) -> Vec<usize> {
    (l / 4..l - l / 4).collect()
}

/// Rényi entropy of the half block computed from the full state.
pub fn half_cut_entropy(state: &ChainState, alpha: f64) -> Result<f64> {
    let a = half_block(state.l);
    if (alpha - 2.0).abs() < 1e-15 {
        return Ok((-subset_purity(state, &a)?.ln()).max(0.0));
    }
    let p = schmidt_weights(state, &a)?;
    Ok(renyi_from_spectrum(&p, alpha))
}

#[derive(Clone, Debug)]
pub struct CMatrix {
    pub q: usize,
    pub x: usize,
    pub matrix: CMat,
}

/// The staircase `C_x`: `x` kernels on `2x` sites, a triangle of `x(x−1)/2`
/// gates, rows over the first `x` sites.
pub fn c_matrix(gate: &TwoQuditGate, k: &PairKernel, x: usize) -> Result<CMatrix> {
    if x == 0 {
        return invalid("C_x needs x >= 1");
    }
    let q = gate.q();
    if k.q() != q {
        return invalid("kernel and gate dimensions differ");
    }
    let mut s = initial_state(k, x)?;
    for layer in 0..x.saturating_sub(1) {
        let mut b = 1 + layer;
        while b + layer + 2 < 2 * x {
            apply_two_site(&mut s, b, b + 1, gate.matrix());
            b += 2;
        }
    }
    let n = q.pow(x as u32);
    // Row-major amplitude vector reshaped to (first x sites) × (last x sites).
    let matrix = Mat::from_fn(n, n, |i, j| s.amps[i * n + j]);
    Ok(CMatrix { q, x, matrix })
}

impl CMatrix {
    /// `tr[(C C†)^α]`; `α = 1` returns the von Neumann entropy of `C C†` instead.
    pub fn trace_power(&self, alpha: f64) -> Result<f64> {
        if (alpha - 2.0).abs() < 1e-15 {
            return Ok(linalg::gram_purity(self.matrix.as_ref()));
        }
        let p = linalg::hermitian_eigenvalues(linalg::gram(self.matrix.as_ref()).as_ref())?;
        Ok(p.iter().filter(|&&v| v > 0.0).map(|&v| v.powf(alpha)).sum())
    }

    /// Entropy of the half block: both edges contribute one `C` factor.
    pub fn block_entropy(&self, alpha: f64) -> Result<f64> {
        if (alpha - 1.0).abs() < 1e-15 {
            let p = linalg::hermitian_eigenvalues(linalg::gram(self.matrix.as_ref()).as_ref())?;
            return Ok(2.0 * von_neumann_from_spectrum(&p));
        }
        Ok((2.0 / (1.0 - alpha) * self.trace_power(alpha)?.ln()).max(0.0))
    }
}

/// `κ_t` for the cut at `i`: `2t` when `i` is even, `2t + 1` when odd.
pub fn kappa(i: usize, t: usize) -> usize {
    2 * t + (i % 2)
}

/// First step at which the two staircases of an `L`-site chain overlap
/// (`2κ_t > N`). At `2κ_t = N` they only touch and `C_κ` is still exact.
pub fn t_star(l: usize) -> usize {
    let i = l / 4;
    (0..).find(|&t| 2 * kappa(i, t) > l / 2).unwrap()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntanglementRecord {
    pub t: usize,
    pub alpha: f64,
    pub kappa: usize,
    pub entropy: f64,
    /// `S/(2κ ln q)`; `NaN` when `κ = 0`.
    pub velocity: f64,
    /// `(S(t) − S(t−1))/(4 ln q)`; `NaN` at `t = 0`.
    pub increment: f64,
    /// Whether `S` came from `C_κ` (true) or from the full state.
    pub factorized: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfileMode {
    /// Finite periodic chain of this many sites.
    Finite(usize),
    /// Unbounded chain: always through `C_κ` with even `i`.
    Infinite,
}

/// Amplitude budget for `C_κ` in the unbounded mode (`q^{2κ}`).
pub const MAX_C_DIM: usize = 1 << 22;

pub fn entropy_profile(
    gate: &TwoQuditGate,
    k: &PairKernel,
    alpha: f64,
    t_max: usize,
    mode: ProfileMode,
) -> Result<Vec<EntanglementRecord>> {
    let q = gate.q();
    let lnq = (q as f64).ln();
    let mut out: Vec<EntanglementRecord> = Vec::with_capacity(t_max + 1);
    let push = |t: usize, kap: usize, s: f64, factorized: bool, out: &mut Vec<EntanglementRecord>| {
        let velocity = if kap == 0 { f64::NAN } else { s / (2.0 * kap as f64 * lnq) };
        let increment = match out.last() {
            Some(prev) => (s - prev.entropy) / (4.0 * lnq),
            None => f64::NAN,
        };
        out.push(EntanglementRecord { t, alpha, kappa: kap, entropy: s, velocity, increment, factorized });
    };
    match mode {
        ProfileMode::Infinite => {
            let kmax = kappa(0, t_max);
            let need = (q as f64).powi(2 * kmax as i32);
            if need > MAX_C_DIM as f64 {
                return Err(Error::Guard(format!(
                    "C_{kmax} needs q^{} amplitudes, budget {MAX_C_DIM}",
                    2 * kmax
                )));
            }
            for t in 0..=t_max {
                let kap = kappa(0, t);
                let s = if kap == 0 { 0.0 } else { c_matrix(gate, k, kap)?.block_entropy(alpha)? };
                push(t, kap, s, true, &mut out);
            }
        }
        ProfileMode::Finite(l) => {
            if l % 4 != 0 {
                return invalid(format!("half-cut profile needs L divisible by 4, got {l}"));
            }
            let circuit = BrickwallCircuit::new(gate.clone(), l)?;
            let mut state = initial_state(k, l / 2)?;
            let ts = t_star(l);
            let i = l / 4;
            for t in 0..=t_max {
                if t > 0 {
                    evolve_in_place(&mut state, &circuit, 1)?;
                }
                let kap = kappa(i, t);
                let (s, fac) = if t < ts {
                    let s = if kap == 0 { 0.0 } else { c_matrix(gate, k, kap)?.block_entropy(alpha)? };
                    (s, true)
                } else {
                    (half_cut_entropy(&state, alpha)?, false)
                };
                push(t, kap.min(l / 4), s, fac, &mut out);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{cartan_du, CartanParams, LocalDressing};
    use crate::rng::seeded;

    fn dressed_cartan(j3: f64, rng: &mut Rng) -> TwoQuditGate {
        cartan_du(&CartanParams { j3, phi: 0.0, locals: Some(LocalDressing::haar(2, rng)) }).unwrap()
    }

    #[test]
    fn kernel_normalization_and_c() {
        let mut rng = seeded(1);
        let k = PairKernel::random(3, &mut rng);
        assert!((k.matrix().squared_norm_l2() - 3.0).abs() < 1e-12);
        assert!(k.c() >= 1.0 - 1e-12 && k.c() <= 3.0 + 1e-12);
        assert!((PairKernel::unitary(3, &mut rng).c() - 1.0).abs() < 1e-12);
        assert!((PairKernel::diag(2).c() - 2.0).abs() < 1e-12);
        assert!(PairKernel::new(linalg::scaled(linalg::identity(2).as_ref(), 2.0)).is_err());
    }

    #[test]
    fn diag_kernel_gives_all_zero_product_state() {
        let s = initial_state(&PairKernel::diag(2), 3).unwrap();
        assert_eq!(s.amps[0], ONE);
        assert!(s.amps[1..].iter().all(|z| *z == ZERO));
        assert_eq!(half_cut_entropy(&s, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn random_initial_state_is_normalized() {
        let mut rng = seeded(2);
        let s = initial_state(&PairKernel::random(2, &mut rng), 5).unwrap();
        assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unitary_kernel_pairs_are_maximally_entangled() {
        let mut rng = seeded(3);
        let s = initial_state(&PairKernel::unitary(3, &mut rng), 2).unwrap();
        let rho = reduced_density(&s, &[0]).unwrap();
        let want = linalg::scaled(linalg::identity(3).as_ref(), 1.0 / 3.0);
        assert!(linalg::max_abs_diff(rho.as_ref(), want.as_ref()) < 1e-12);
    }

    #[test]
    fn swap_circuit_leaves_uniform_product_unchanged() {
        let c = BrickwallCircuit::new(TwoQuditGate::swap(2), 6).unwrap();
        let s = initial_state(&PairKernel::diag(2), 3).unwrap();
        let e = evolve(&s, &c, 7).unwrap();
        assert_eq!(e, s);
        assert!(BrickwallCircuit::new(TwoQuditGate::swap(2), 5).is_err());
    }

    #[test]
    fn gatewise_evolution_matches_dense_propagator() {
        let mut rng = seeded(4);
        let g = dressed_cartan(0.3, &mut rng);
        let c = BrickwallCircuit::new(g, 4).unwrap();
        let s = initial_state(&PairKernel::random(2, &mut rng), 2).unwrap();
        let e = evolve(&s, &c, 3).unwrap();
        let u = brickwall_unitary(&c, 3).unwrap();
        for r in 0..16 {
            let mut acc = ZERO;
            for col in 0..16 {
                acc += u[(r, col)] * s.amps[col];
            }
            assert!((acc - e.amps[r]).norm() < 1e-12);
        }
        assert!(linalg::unitarity_residual(u.as_ref()) < 1e-12);
    }

    /// Gate on sites `(a, b)` of a 4-qubit register, built entry by entry.
    fn placed(g: &TwoQuditGate, a: usize, b: usize) -> CMat {
        let digit = |x: usize, s: usize| (x >> (3 - s)) & 1;
        Mat::from_fn(16, 16, |o, i| {
            for s in 0..4 {
                if s != a && s != b && digit(o, s) != digit(i, s) {
                    return ZERO;
                }
            }
            g.element(digit(o, a), digit(o, b), digit(i, a), digit(i, b))
        })
    }

    #[test]
    fn dense_oracle_of_wrap_bond() {
        let mut rng = seeded(5);
        let g = TwoQuditGate::new(2, gates::haar_unitary(4, &mut rng)).unwrap();
        let c = BrickwallCircuit::new(g.clone(), 4).unwrap();
        let u = step_unitary(&c).unwrap();
        let first = placed(&g, 3, 0) * placed(&g, 1, 2);
        let second = placed(&g, 2, 3) * placed(&g, 0, 1);
        let want = &second * &first;
        assert!(linalg::max_abs_diff(u.as_ref(), want.as_ref()) < 1e-12);
    }

    #[test]
    fn reduced_density_is_a_state() {
        let mut rng = seeded(6);
        let g = dressed_cartan(0.1, &mut rng);
        let c = BrickwallCircuit::new(g, 8).unwrap();
        let s = evolve(&initial_state(&PairKernel::random(2, &mut rng), 4).unwrap(), &c, 2).unwrap();
        let rho = reduced_density(&s, &[2, 3, 4]).unwrap();
        assert!((linalg::trace(rho.as_ref()).re - 1.0).abs() < 1e-10);
        let ev = linalg::hermitian_eigenvalues(rho.as_ref()).unwrap();
        assert!(ev.iter().all(|&v| v > -1e-10));
        let full = reduced_density(&s, &(0..8).collect::<Vec<_>>()).unwrap();
        assert!((full.as_ref().squared_norm_l2() - 1.0).abs() < 1e-10);
        assert!(reduced_density(&s, &[1, 3]).is_err());
    }

    #[test]
    fn purity_two_ways() {
        let mut rng = seeded(7);
        let g = dressed_cartan(0.2, &mut rng);
        let c = BrickwallCircuit::new(g, 8).unwrap();
        let s = evolve(&initial_state(&PairKernel::random(2, &mut rng), 4).unwrap(), &c, 3).unwrap();
        let sites = [1, 2, 3];
        let rho = reduced_density(&s, &sites).unwrap();
        let p1 = rho.as_ref().squared_norm_l2();
        let sv = split_matrix(&s, &sites).unwrap().as_ref().singular_values().unwrap();
        let p2: f64 = sv.iter().map(|x| x.powi(4)).sum();
        assert!((p1 - p2).abs() < 1e-12);
        let comp = [0, 4, 5, 6, 7];
        assert!((subset_purity(&s, &comp).unwrap() - p1).abs() < 1e-12);
    }

    #[test]
    fn bell_half_is_maximally_mixed() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = ChainState { q: 2, l: 2, amps: vec![c64::new(h, 0.0), ZERO, ZERO, c64::new(h, 0.0)] };
        let rho = reduced_density(&s, &[0]).unwrap();
        assert!((renyi_entropy(rho.as_ref(), 2.0).unwrap() - 2f64.ln()).abs() < 1e-14);
        assert!((von_neumann(rho.as_ref()).unwrap() - 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn renyi_examples() {
        assert!((renyi_from_spectrum(&[0.25, 0.75], 2.0) + 0.625f64.ln()).abs() < 1e-15);
        let mixed = [0.2; 5];
        for a in [0.5, 2.0, 3.0, 1.0] {
            assert!((renyi_from_spectrum(&mixed, a) - 5f64.ln()).abs() < 1e-12);
        }
        assert_eq!(renyi_from_spectrum(&[1.0, 0.0], 3.0), 0.0);
    }

    #[test]
    fn c_matrix_normalization_and_solvable_case() {
        let mut rng = seeded(8);
        for q in [2, 3] {
            let g = if q == 2 { dressed_cartan(0.15, &mut rng) } else { gates::mr_dual_unitary(3, &mut rng, 5000).unwrap() };
            let kr = PairKernel::random(q, &mut rng);
            let ku = PairKernel::unitary(q, &mut rng);
            for x in 1..=4 {
                let c = c_matrix(&g, &kr, x).unwrap();
                assert!((c.matrix.as_ref().squared_norm_l2() - 1.0).abs() < 1e-10);
                let cu = c_matrix(&g, &ku, x).unwrap();
                let gram = &cu.matrix * cu.matrix.adjoint();
                let n = q.pow(x as u32);
                let want = linalg::scaled(linalg::identity(n).as_ref(), 1.0 / n as f64);
                assert!(linalg::max_abs_diff(gram.as_ref(), want.as_ref()) < 1e-10);
            }
            let c1 = c_matrix(&g, &kr, 1).unwrap();
            assert!((c1.trace_power(2.0).unwrap() - kr.c() / q as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn kappa_and_t_star() {
        assert_eq!(kappa(4, 3), 6);
        assert_eq!(kappa(5, 1), 3);
        assert_eq!(t_star(8), 2);
        assert_eq!(t_star(12), 2);
        assert_eq!(t_star(16), 3);
        assert_eq!(t_star(20), 3);
    }

    #[test]
    fn l16_first_step_matches_c2() {
        let mut rng = seeded(9);
        let g = dressed_cartan(0.05, &mut rng);
        let k = PairKernel::random(2, &mut rng);
        let c = BrickwallCircuit::new(g.clone(), 16).unwrap();
        let s = evolve(&initial_state(&k, 8).unwrap(), &c, 1).unwrap();
        let direct = half_cut_entropy(&s, 2.0).unwrap();
        let fac = c_matrix(&g, &k, 2).unwrap().block_entropy(2.0).unwrap();
        assert!((direct - fac).abs() < 1e-9, "{direct} vs {fac}");
    }

    #[test]
    fn swap_profile_is_bounded_and_periodic() {
        let mut rng = seeded(10);
        let k = PairKernel::random(2, &mut rng);
        let prof = entropy_profile(&TwoQuditGate::swap(2), &k, 2.0, 6, ProfileMode::Finite(8)).unwrap();
        // Each of the four pairs contributes at most its own entropy.
        let pair = -(k.c() / 2.0).ln();
        for r in &prof {
            assert!(r.entropy <= 4.0 * pair + 1e-12);
        }
        assert!((prof[4].entropy - prof[0].entropy).abs() < 1e-12);
    }
}
