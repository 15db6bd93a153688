//! Multipartite entanglement of chain states and entangling powers of whole
//! circuits.
//!
//! Subset averages enumerate site sets as bit masks in increasing order. For
//! translation-invariant states the enumeration can be folded onto orbits of
//! the shift group (and of complementation at `|S| = L/2`); each orbit is
//! evaluated once and weighted by its size.

use std::collections::BTreeMap;

use faer::{c64, Mat, MatRef};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::circuit::{checked_dim, schmidt_weights, subset_purity, ChainState};
use crate::error::{invalid, Error, Result};
use crate::linalg::{self, CMat, ZERO};
use crate::par;
use crate::rng::{self, Rng};
use crate::stats::{self, Summary};

/// Largest two-copy dimension `q^{2L}` accepted by [`multipartite_ep`].
pub const MAX_TWO_COPY_DIM: usize = 1 << 13;

/// Largest `d = q^L` accepted by [`operator_space_ep`].
pub const MAX_OPERATOR_DIM: usize = 1 << 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Symmetry {
    /// Every subset evaluated.
    None,
    /// State invariant under cyclic shifts by multiples of `period` sites.
    Translation { period: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubsetOrbit {
    pub sites: Vec<usize>,
    /// Number of subsets represented.
    pub weight: usize,
}

fn mask_sites(mask: u64, l: usize) -> Vec<usize> {
    (0..l).filter(|&s| mask >> s & 1 == 1).collect()
}

fn rotate(mask: u64, by: usize, l: usize) -> u64 {
    if by == 0 {
        return mask;
    }
    let full = (1u64 << l) - 1;
    ((mask << by) | (mask >> (l - by))) & full
}

/// Subsets of size `s` grouped into orbits; weights sum to `C(L, s)`.
pub fn subset_orbits(l: usize, s: usize, sym: Symmetry) -> Result<Vec<SubsetOrbit>> {
    if l == 0 || l > 40 || s > l {
        return invalid(format!("subset enumeration needs 0 <= s <= L <= 40, got s = {s}, L = {l}"));
    }
    let full = (1u64 << l) - 1;
    let mut orbits: BTreeMap<u64, usize> = BTreeMap::new();
    let period = match sym {
        Symmetry::None => None,
        Symmetry::Translation { period } => {
            if period == 0 || !l.is_multiple_of(period) {
                return invalid(format!("translation period {period} does not divide L = {l}"));
            }
            Some(period)
        }
    };
    for mask in 0..=full {
        if mask.count_ones() as usize != s {
            continue;
        }
        let key = match period {
            None => mask,
            Some(p) => {
                let mut best = mask;
                for k in (0..l).step_by(p) {
                    let r = rotate(mask, k, l);
                    best = best.min(r);
                    if 2 * s == l {
                        best = best.min(!r & full);
                    }
                }
                best
            }
        };
        *orbits.entry(key).or_insert(0) += 1;
    }
    Ok(orbits
        .into_iter()
        .map(|(m, weight)| SubsetOrbit { sites: mask_sites(m, l), weight })
        .collect())
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

fn check_state(state: &ChainState) -> Result<()> {
    let n = state.norm_sqr();
    if (n - 1.0).abs() > 1e-8 {
        return invalid(format!("state not normalized: <psi|psi> = {n}"));
    }
    Ok(())
}

/// Weighted mean of subset purities at size `s`.
fn mean_purity(state: &ChainState, s: usize, sym: Symmetry) -> Result<f64> {
    let orbits = subset_orbits(state.l, s, sym)?;
    let mut acc = 0.0;
    let mut n = 0usize;
    for o in &orbits {
        acc += o.weight as f64 * subset_purity(state, &o.sites)?;
        n += o.weight;
    }
    Ok(acc / n as f64)
}

/// `2(1 − mean_k tr ρ_k²)`.
pub fn meyer_wallach(state: &ChainState) -> Result<f64> {
    check_state(state)?;
    Ok(2.0 * (1.0 - mean_purity(state, 1, Symmetry::None)?))
}

/// `q^r/(q^r − 1) (1 − mean_{|S|=r} tr ρ_S²)`.
pub fn scott(state: &ChainState, r: usize) -> Result<f64> {
    scott_with(state, r, Symmetry::None)
}

pub fn scott_with(state: &ChainState, r: usize, sym: Symmetry) -> Result<f64> {
    check_state(state)?;
    if r == 0 || 2 * r > state.l {
        return invalid(format!("Scott measure needs 1 <= r <= L/2, got r = {r}, L = {}", state.l));
    }
    let qr = (state.q as f64).powi(r as i32);
    Ok(qr / (qr - 1.0) * (1.0 - mean_purity(state, r, sym)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AmeGme {
    /// Product of the normalized linear entropies of all subsets up to `L/2`.
    pub raw: f64,
    pub ln_raw: f64,
    /// `raw^{1/M}` with `M` the number of factors.
    pub gm: f64,
    pub factors: usize,
}

fn normalized_linear_entropy(q: usize, s: usize, purity: f64) -> f64 {
    let qs = (q as f64).powi(s as i32);
    (qs / (qs - 1.0) * (1.0 - purity)).max(0.0)
}

pub fn ame_gme(state: &ChainState) -> Result<AmeGme> {
    ame_gme_with(state, Symmetry::None)
}

pub fn ame_gme_with(state: &ChainState, sym: Symmetry) -> Result<AmeGme> {
    check_state(state)?;
    let mut ln_raw = 0.0;
    let mut m = 0usize;
    for s in 1..=state.l / 2 {
        for o in subset_orbits(state.l, s, sym)? {
            let f = normalized_linear_entropy(state.q, s, subset_purity(state, &o.sites)?);
            ln_raw += o.weight as f64 * f.ln();
            m += o.weight;
        }
    }
    Ok(gme_from_log(ln_raw, m))
}

fn gme_from_log(ln_raw: f64, m: usize) -> AmeGme {
    AmeGme { raw: ln_raw.exp(), ln_raw, gm: (ln_raw / m as f64).exp(), factors: m }
}

/// Mean von Neumann entropy (base `q`) over all `C(L, L/2)` half subsets.
pub fn avg_vn_half(state: &ChainState) -> Result<f64> {
    avg_vn_half_with(state, Symmetry::None)
}

pub fn avg_vn_half_with(state: &ChainState, sym: Symmetry) -> Result<f64> {
    check_state(state)?;
    if !state.l.is_multiple_of(2) {
        return invalid(format!("half bipartitions need even L, got {}", state.l));
    }
    let lnq = (state.q as f64).ln();
    let mut acc = 0.0;
    let mut n = 0usize;
    for o in subset_orbits(state.l, state.l / 2, sym)? {
        let p = schmidt_weights(state, &o.sites)?;
        acc += o.weight as f64 * von_neumann_base(&p, lnq);
        n += o.weight;
    }
    Ok(acc / n as f64)
}

fn von_neumann_base(p: &[f64], lnb: f64) -> f64 {
    crate::circuit::von_neumann_from_spectrum(p) / lnb
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MultipartiteReport {
    pub meyer_wallach: f64,
    /// `Q_{L/2}`.
    pub scott_half: f64,
    pub ame_gme: AmeGme,
    /// Base-`q` logarithm.
    pub avg_vn_half: f64,
}

/// All state measures in one pass; the half-subset spectra are shared between
/// `Q_{L/2}`, `E_GM` and `S̄_VN`.
pub fn multipartite_report(state: &ChainState, sym: Symmetry) -> Result<MultipartiteReport> {
    check_state(state)?;
    let (q, l) = (state.q, state.l);
    if l < 2 || l % 2 != 0 {
        return invalid(format!("multipartite report needs even L >= 2, got {l}"));
    }
    let lnq = (q as f64).ln();
    let mut ln_raw = 0.0;
    let mut m = 0usize;
    let mut mw = 0.0;
    let mut half_purity = 0.0;
    let mut vn = 0.0;
    for s in 1..=l / 2 {
        let mut acc_p = 0.0;
        let mut n = 0usize;
        for o in subset_orbits(l, s, sym)? {
            let purity = if 2 * s == l {
                let p = schmidt_weights(state, &o.sites)?;
                vn += o.weight as f64 * von_neumann_base(&p, lnq);
                p.iter().map(|x| x * x).sum()
            } else {
                subset_purity(state, &o.sites)?
            };
            acc_p += o.weight as f64 * purity;
            ln_raw += o.weight as f64 * normalized_linear_entropy(q, s, purity).ln();
            n += o.weight;
        }
        m += n;
        let mean = acc_p / n as f64;
        if s == 1 {
            mw = 2.0 * (1.0 - mean);
        }
        if 2 * s == l {
            let qr = (q as f64).powi(s as i32);
            half_purity = qr / (qr - 1.0) * (1.0 - mean);
            vn /= n as f64;
        }
    }
    Ok(MultipartiteReport {
        meyer_wallach: mw,
        scott_half: half_purity,
        ame_gme: gme_from_log(ln_raw, m),
        avg_vn_half: vn,
    })
}

fn two_copy_guard(q: usize, l: usize) -> Result<usize> {
    let d = checked_dim(q, l)?;
    match d.checked_mul(d) {
        Some(d2) if d2 <= MAX_TWO_COPY_DIM => Ok(d),
        _ => Err(Error::Guard(format!(
            "two-copy space q^(2L) for q = {q}, L = {l} exceeds {MAX_TWO_COPY_DIM}"
        ))),
    }
}

fn check_operator(u: MatRef<'_, c64>, q: usize, l: usize, d: usize) -> Result<()> {
    if u.nrows() != d || u.ncols() != d {
        return invalid(format!("operator is {}x{}, expected {d}x{d} for q = {q}, L = {l}", u.nrows(), u.ncols()));
    }
    let r = linalg::unitarity_residual(u);
    if !(r <= 1e-9) {
        return invalid(format!("operator not unitary (residual {r:.3e})"));
    }
    Ok(())
}

/// Per-index split of a base-`q` number into the digits on the sites of
/// `mask` and on the remaining sites, both read most significant first.
fn split_tables(q: usize, l: usize, mask: u64) -> (Vec<usize>, Vec<usize>) {
    let d = q.pow(l as u32);
    let mut inside = vec![0usize; d];
    let mut outside = vec![0usize; d];
    for (idx, (a, b)) in inside.iter_mut().zip(outside.iter_mut()).enumerate() {
        for site in 0..l {
            let digit = idx / q.pow((l - 1 - site) as u32) % q;
            if mask >> site & 1 == 1 {
                *a = *a * q + digit;
            } else {
                *b = *b * q + digit;
            }
        }
    }
    (inside, outside)
}

/// `R_S(𝕌) = (2/(q(q+1)))^L tr[𝕌^{⊗2} Π_i P_{i,i+L} 𝕌^{†⊗2} Π_{i∈S} T_{i,i+L}]`.
///
/// Expanding `Π P = 2^{−L} Σ_A T_A`, each term equals `tr[(W_A† W_A)²]` where
/// `W_A` holds `𝕌` with rows over (outputs off `S`, inputs off `A`) and
/// columns over (outputs on `S`, inputs on `A`).
pub fn r_s(u: MatRef<'_, c64>, q: usize, l: usize, s_mask: u64) -> Result<f64> {
    let d = two_copy_guard(q, l)?;
    let (s_in, s_out) = split_tables(q, l, s_mask);
    let ns = q.pow(s_mask.count_ones());
    let mut total = 0.0;
    for a_mask in 0..(1u64 << l) {
        let (a_in, a_out) = split_tables(q, l, a_mask);
        let na = q.pow(a_mask.count_ones());
        let nr = (d / ns) * (d / na);
        let nc = ns * na;
        let mut w = Mat::<c64>::zeros(nr, nc);
        for o in 0..d {
            for i in 0..d {
                w[(s_out[o] * (d / na) + a_out[i], s_in[o] * na + a_in[i])] = u[(o, i)];
            }
        }
        total += linalg::gram_purity(w.as_ref());
    }
    Ok(total * (1.0 / (q * (q + 1)) as f64).powi(l as i32))
}

/// Closed-form `e_P^{Q_r}(𝕌) = q^r/(q^r − 1)(1 − mean_{|S|=r} R_S)`.
pub fn multipartite_ep(u: MatRef<'_, c64>, q: usize, l: usize, r: usize) -> Result<f64> {
    let d = two_copy_guard(q, l)?;
    check_operator(u, q, l, d)?;
    if r == 0 || 2 * r > l {
        return invalid(format!("multipartite entangling power needs 1 <= r <= L/2, got r = {r}"));
    }
    let mut acc = 0.0;
    let mut n = 0usize;
    for o in subset_orbits(l, r, Symmetry::None)? {
        let mask = o.sites.iter().fold(0u64, |m, &s| m | 1 << s);
        // ρ_S and ρ_S̄ share their purity, so R_S = R_S̄.
        if 2 * r == l && mask & 1 == 0 {
            continue;
        }
        let w = if 2 * r == l { 2 } else { 1 };
        acc += w as f64 * r_s(u, q, l, mask)?;
        n += w;
    }
    let qr = (q as f64).powi(r as i32);
    Ok((qr / (qr - 1.0) * (1.0 - acc / n as f64)).clamp(0.0, 1.0))
}

pub fn haar_state(q: usize, rng: &mut Rng) -> Vec<c64> {
    let mut v: Vec<c64> = (0..q)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            c64::new(re, im)
        })
        .collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for z in &mut v {
        *z /= n;
    }
    v
}

/// Defining average: Scott measure of `𝕌|ψ₁⟩⊗…⊗|ψ_L⟩` over independent
/// single-site Haar states; sample `i` uses `rng::member(seed, i)`.
pub fn multipartite_ep_mc(
    u: MatRef<'_, c64>,
    q: usize,
    l: usize,
    r: usize,
    samples: usize,
    seed: u64,
    workers: usize,
) -> Result<Summary> {
    let d = checked_dim(q, l)?;
    check_operator(u, q, l, d)?;
    let vals = par::try_map_indexed(samples, workers, |i| {
        let mut g = rng::member(seed, i as u64);
        let mut psi = vec![linalg::ONE];
        for _ in 0..l {
            let site = haar_state(q, &mut g);
            psi = psi.iter().flat_map(|a| site.iter().map(move |b| a * b)).collect();
        }
        let mut amps = vec![ZERO; d];
        for (row, out) in amps.iter_mut().enumerate() {
            let mut acc = ZERO;
            for (col, p) in psi.iter().enumerate() {
                acc += u[(row, col)] * p;
            }
            *out = acc;
        }
        scott(&ChainState { q, l, amps }, r)
    })?;
    Ok(stats::summary(&vals))
}

/// Operator entanglement across the half cut:
/// `1 − tr[(V^R V^R†)²]/D⁴` with `D = q^{L/2}` and `V^R[(a,a'),(b,b')] = V[(a,b),(a',b')]`.
pub fn half_cut_operator_entanglement(v: MatRef<'_, c64>, q: usize, l: usize) -> Result<f64> {
    if !l.is_multiple_of(2) {
        return invalid(format!("half cut needs even L, got {l}"));
    }
    let big = q.pow((l / 2) as u32);
    let d = big * big;
    if v.nrows() != d || v.ncols() != d {
        return invalid("operator dimension does not match q^L");
    }
    let r = Mat::<c64>::from_fn(d, d, |row, col| {
        let (a, ap) = (row / big, row % big);
        let (b, bp) = (col / big, col % big);
        v[(a * big + b, ap * big + bp)]
    });
    Ok(1.0 - linalg::gram_purity(r.as_ref()) / (d * d) as f64)
}

/// Swap of the two halves of an `L`-site register.
pub fn half_swap(q: usize, l: usize) -> CMat {
    let big = q.pow((l / 2) as u32);
    let d = big * big;
    Mat::from_fn(d, d, |row, col| {
        if row == (col % big) * big + col / big {
            linalg::ONE
        } else {
            ZERO
        }
    })
}

/// Which dimension divides the cross term of `e_OS`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CrossTerm {
    /// `2/q^L`: reproduces the `1 − 2/(d+1)` Haar value.
    Total,
    /// `2/q` with `q` the local dimension.
    Local,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OperatorSpaceEp {
    pub e_u: f64,
    pub e_us: f64,
    pub e_swap: f64,
    pub e_os: f64,
}

/// `e_OS = 1 − (1 − a)² − (1 − b)² − (2/n) a b` with
/// `a = E(𝕌)/E(S̃)`, `b = E(𝕌S̃)/E(S̃)`.
pub fn operator_space_ep(u: MatRef<'_, c64>, q: usize, l: usize, cross: CrossTerm) -> Result<OperatorSpaceEp> {
    if l < 2 || !l.is_multiple_of(2) {
        return invalid(format!("operator-space entangling power needs even L >= 2, got {l}"));
    }
    let d = checked_dim(q, l)?;
    if d > MAX_OPERATOR_DIM {
        return Err(Error::Guard(format!("operator of dimension {d} exceeds {MAX_OPERATOR_DIM}")));
    }
    check_operator(u, q, l, d)?;
    let s = half_swap(q, l);
    let e_swap = half_cut_operator_entanglement(s.as_ref(), q, l)?;
    let e_u = half_cut_operator_entanglement(u, q, l)?;
    let us = u * &s;
    let e_us = half_cut_operator_entanglement(us.as_ref(), q, l)?;
    let n = match cross {
        CrossTerm::Total => d as f64,
        CrossTerm::Local => q as f64,
    };
    let (a, b) = (e_u / e_swap, e_us / e_swap);
    let e_os = 1.0 - (1.0 - a).powi(2) - (1.0 - b).powi(2) - 2.0 / n * a * b;
    Ok(OperatorSpaceEp { e_u, e_us, e_swap, e_os })
}

/// Largest `e_OS` value, `1 − 2/(d + 1)`.
pub fn operator_space_max(q: usize, l: usize) -> f64 {
    let d = (q as f64).powi(l as i32);
    1.0 - 2.0 / (d + 1.0)
}
