//! Exact dynamics on the fixed-particle-number Fock space. This is the
//! oracle every other engine is checked against, so it favours accuracy
//! over speed: Lanczos propagation with full reorthogonalization and
//! adaptive step halving.
//!
//! Occupation configurations are bitmasks where bit `k` is site `k + 1`.

use std::sync::Arc;

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::SparseHamiltonian;
use crate::observables::half_current_bonds;

/// Refuse sectors larger than this.
pub const FOCK_DIM_CAP: u128 = 5_000_000;

const KRYLOV_MAX: usize = 30;
const DENSE_GROUND_STATE_DIM: usize = 2000;
const GROUND_STATE_SEED: u64 = 0x005e_ed0f_f0c4;

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

#[derive(Clone, Debug, PartialEq)]
pub struct FockBasis {
    l: usize,
    n: usize,
    states: Vec<u64>,
}

impl FockBasis {
    pub fn new(l: usize, n: usize) -> Result<Self> {
        if n > l || l > 63 {
            return Err(Error::InvalidParams(format!("no sector with L = {l}, N = {n}")));
        }
        let dim = binomial(l, n);
        if dim > FOCK_DIM_CAP {
            return Err(Error::Capacity { l, n, dim, cap: FOCK_DIM_CAP });
        }
        let mut states = Vec::with_capacity(dim as usize);
        if n == 0 {
            states.push(0);
        } else {
            // Gosper's hack walks the popcount-n masks in increasing order.
            let limit = 1u64 << l;
            let mut s: u64 = (1u64 << n) - 1;
            while s < limit {
                states.push(s);
                let c = s & s.wrapping_neg();
                let r = s + c;
                s = (((r ^ s) >> 2) / c) | r;
            }
        }
        debug_assert_eq!(states.len() as u128, dim);
        Ok(Self { l, n, states })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn index_of(&self, config: u64) -> Option<usize> {
        self.states.binary_search(&config).ok()
    }

    /// `"0110"`-style string, site 1 first.
    pub fn occupation_string(&self, config: u64) -> String {
        (0..self.l).map(|k| if (config >> k) & 1 == 1 { '1' } else { '0' }).collect()
    }
}

#[derive(Clone, Debug)]
pub struct FockVector {
    pub basis: Arc<FockBasis>,
    pub amplitudes: Vec<C64>,
}

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Box-trap product state occupying sites `i1..=i2` (1-based).
pub fn box_state(basis: &Arc<FockBasis>, i1: usize, i2: usize) -> Result<FockVector> {
    let width = if i2 >= i1 { i2 - i1 + 1 } else { 0 };
    if i1 < 1 || i2 > basis.l() || width != basis.n() {
        return Err(Error::BoxMismatch { i1, i2, width, n: basis.n() });
    }
    let config = if width == 0 { 0 } else { ((1u64 << width) - 1) << (i1 - 1) };
    FockVector::product(basis, config)
}

impl FockVector {
    pub fn product(basis: &Arc<FockBasis>, config: u64) -> Result<Self> {
        let idx = basis.index_of(config).ok_or_else(|| {
            Error::InvalidParams(format!(
                "configuration {} is not in the N = {} sector",
                basis.occupation_string(config),
                basis.n()
            ))
        })?;
        let mut amplitudes = vec![zero(); basis.dim()];
        amplitudes[idx] = C64::new(1.0, 0.0);
        Ok(Self { basis: Arc::clone(basis), amplitudes })
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amplitudes)
    }

    pub fn overlap(&self, other: &FockVector) -> C64 {
        dot(&self.amplitudes, &other.amplitudes)
    }

    /// `<n_i>` for every site, index `k` = site `k + 1`.
    pub fn density(&self) -> Vec<f64> {
        let l = self.basis.l();
        let mut n = vec![0.0; l];
        for (&s, a) in self.basis.states().iter().zip(&self.amplitudes) {
            let p = a.norm_sqr();
            if p == 0.0 {
                continue;
            }
            let mut bits = s;
            while bits != 0 {
                let k = bits.trailing_zeros() as usize;
                n[k] += p;
                bits &= bits - 1;
            }
        }
        n
    }

    /// `<b†_k b_{k+1}>` for the bond whose left site is `k` (0-based).
    pub fn hopping_correlator(&self, k: usize) -> C64 {
        let mut acc = zero();
        for (&s, a) in self.basis.states().iter().zip(&self.amplitudes) {
            // b†_k b_{k+1} moves a particle from k+1 to k
            if (s >> k) & 0b11 == 0b10 {
                let t = s ^ (0b11 << k);
                let j = self.basis.index_of(t).expect("same sector");
                acc += self.amplitudes[j].conj() * a;
            }
        }
        acc
    }

    /// Summed particle current over the right-half bonds.
    pub fn half_current(&self, j: f64) -> f64 {
        half_current_bonds(self.basis.l())
            .map(|k| 2.0 * j * self.hopping_correlator(k).im)
            .sum()
    }

    pub fn energy(&self, h: &SparseHamiltonian) -> f64 {
        h.expectation(&self.amplitudes)
    }

    /// Dense `2^L` amplitude vector indexed by configuration bitmask.
    pub fn to_full_space(&self) -> Vec<C64> {
        let mut out = vec![zero(); 1usize << self.basis.l()];
        for (&s, a) in self.basis.states().iter().zip(&self.amplitudes) {
            out[s as usize] = *a;
        }
        out
    }
}

struct Lanczos {
    vectors: Vec<Vec<C64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// Norm of the residual after the last vector; zero on breakdown.
    residual: f64,
}

/// Lanczos tridiagonalization with full reorthogonalization, starting
/// from the normalized `start`. Vectors in `deflate` are projected out.
fn lanczos(h: &SparseHamiltonian, start: &[C64], max_dim: usize, deflate: &[&[C64]]) -> Lanczos {
    let dim = h.dim;
    let mut vectors: Vec<Vec<C64>> = Vec::new();
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    let mut v = start.to_vec();
    let mut w = vec![zero(); dim];
    let mut residual = 0.0;
    let m_cap = max_dim.min(dim);
    for m in 0..m_cap {
        h.apply(&v, &mut w);
        let a = dot(&v, &w).re;
        alpha.push(a);
        vectors.push(v);
        // two passes of classical Gram-Schmidt
        for _ in 0..2 {
            for q in deflate.iter().copied().chain(vectors.iter().map(|x| x.as_slice())) {
                let c = dot(q, &w);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
        let b = norm(&w);
        residual = b;
        if b < 1e-13 * (1.0 + a.abs()) || m + 1 == m_cap {
            if b < 1e-13 * (1.0 + a.abs()) {
                residual = 0.0;
            }
            break;
        }
        beta.push(b);
        v = w.iter().map(|x| x / b).collect();
        w = vec![zero(); dim];
    }
    Lanczos { vectors, alpha, beta, residual }
}

fn tridiagonal(alpha: &[f64], beta: &[f64]) -> Array2<f64> {
    let m = alpha.len();
    let mut t = Array2::zeros((m, m));
    for i in 0..m {
        t[[i, i]] = alpha[i];
        if i + 1 < m {
            t[[i, i + 1]] = beta[i];
            t[[i + 1, i]] = beta[i];
        }
    }
    t
}

fn combine(vectors: &[Vec<C64>], coeffs: &[C64], scale: f64) -> Vec<C64> {
    let mut out = vec![zero(); vectors[0].len()];
    for (v, c) in vectors.iter().zip(coeffs) {
        let c = c * scale;
        for (o, x) in out.iter_mut().zip(v) {
            *o += c * x;
        }
    }
    out
}

/// Approximates `exp(-i H dt) state` to 2-norm error `tol`, substepping
/// where a single Krylov space of dimension 30 does not suffice.
pub fn evolve(state: &FockVector, h: &SparseHamiltonian, dt: f64, tol: f64) -> Result<FockVector> {
    if h.dim != state.basis.dim() {
        return Err(Error::InvalidParams(format!(
            "Hamiltonian dimension {} does not match state dimension {}",
            h.dim,
            state.basis.dim()
        )));
    }
    let mut v = state.amplitudes.clone();
    if dt == 0.0 {
        return Ok(state.clone());
    }
    let total = dt.abs();
    let sign = dt.signum();
    let mut done = 0.0;
    let mut tau = total;
    while done < total {
        tau = tau.min(total - done);
        let nv = norm(&v);
        if nv == 0.0 {
            break;
        }
        let start: Vec<C64> = v.iter().map(|x| x / nv).collect();
        let lz = lanczos(h, &start, KRYLOV_MAX, &[]);
        let t = tridiagonal(&lz.alpha[..lz.vectors.len()], &lz.beta);
        let (theta, q) = t.eigh(UPLO::Lower)?;
        let m = lz.vectors.len();
        loop {
            // y = Q exp(-i θ τ) Q^T e_1
            let y: Vec<C64> = (0..m)
                .map(|r| {
                    (0..m)
                        .map(|c| q[[r, c]] * q[[0, c]] * C64::from_polar(1.0, -sign * theta[c] * tau))
                        .sum()
                })
                .collect();
            let err = lz.residual * y[m - 1].norm() * nv;
            if err <= tol * (tau / total).max(1e-3) {
                v = combine(&lz.vectors, &y, nv);
                done += tau;
                break;
            }
            tau *= 0.5;
            if tau < total * 1e-9 {
                return Err(Error::NonConvergence { what: "Krylov propagation".into(), residual: err });
            }
        }
    }
    Ok(FockVector { basis: Arc::clone(&state.basis), amplitudes: v })
}

#[derive(Clone, Debug)]
pub struct GroundState {
    pub energy: f64,
    pub state: FockVector,
    /// Distance to the next level, when it was resolved.
    pub gap: f64,
    /// Set when the gap is below 1e-8; `state` is then any member.
    pub degenerate: bool,
}

fn random_start(dim: usize, rng: &mut ChaCha8Rng, deflate: &[&[C64]]) -> Vec<C64> {
    let mut v: Vec<C64> = (0..dim)
        .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    for q in deflate {
        let c = dot(q, &v);
        for (x, qi) in v.iter_mut().zip(q.iter()) {
            *x -= c * qi;
        }
    }
    let n = norm(&v);
    v.iter().map(|x| x / n).collect()
}

/// Lowest eigenpair by restarted Lanczos, with vectors in `deflate`
/// projected out.
fn lowest_lanczos(h: &SparseHamiltonian, deflate: &[&[C64]], rng: &mut ChaCha8Rng) -> Result<(f64, Vec<C64>)> {
    let mut v = random_start(h.dim, rng, deflate);
    let mut last = f64::INFINITY;
    for _ in 0..200 {
        let lz = lanczos(h, &v, 120, deflate);
        let m = lz.vectors.len();
        let t = tridiagonal(&lz.alpha[..m], &lz.beta[..m - 1]);
        let (theta, q) = t.eigh(UPLO::Lower)?;
        let coeffs: Vec<C64> = (0..m).map(|r| C64::new(q[[r, 0]], 0.0)).collect();
        let mut x = combine(&lz.vectors, &coeffs, 1.0);
        let nx = norm(&x);
        x.iter_mut().for_each(|z| *z /= nx);
        let res = lz.residual * q[[m - 1, 0]].abs();
        last = res;
        if res < 1e-10 {
            return Ok((theta[0], x));
        }
        v = x;
    }
    Err(Error::NonConvergence { what: "Lanczos ground state".into(), residual: last })
}

pub fn ground_state(h: &SparseHamiltonian, basis: &Arc<FockBasis>) -> Result<GroundState> {
    if h.dim != basis.dim() {
        return Err(Error::InvalidParams("Hamiltonian and basis dimensions differ".into()));
    }
    let (energy, amps, gap) = if h.dim <= DENSE_GROUND_STATE_DIM {
        let (e, v) = h.to_dense()?.eigh(UPLO::Lower)?;
        let amps: Vec<C64> = v.column(0).iter().map(|&x| C64::new(x, 0.0)).collect();
        let gap = if h.dim > 1 { e[1] - e[0] } else { f64::INFINITY };
        (e[0], amps, gap)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(GROUND_STATE_SEED);
        let (e0, v0) = lowest_lanczos(h, &[], &mut rng)?;
        let (e1, _) = lowest_lanczos(h, &[&v0], &mut rng)?;
        (e0, v0, e1 - e0)
    };
    let mut state = FockVector { basis: Arc::clone(basis), amplitudes: amps };
    fix_phase(&mut state.amplitudes);
    Ok(GroundState { energy, state, gap, degenerate: gap < 1e-8 })
}

/// Rotates the global phase so the largest amplitude is real positive.
fn fix_phase(v: &mut [C64]) {
    if let Some(big) = v.iter().copied().max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr())) {
        if big.norm() > 0.0 {
            let ph = big.conj() / big.norm();
            v.iter_mut().for_each(|z| *z *= ph);
        }
    }
}

#[derive(Clone, Debug)]
pub struct PairCreation {
    pub state: FockVector,
    /// Squared norm of `b†_s b†_{s+1} |ψ>` before renormalization.
    pub weight: f64,
}

/// Applies `b†_site b†_{site+1}` (1-based `site`) and renormalizes in the
/// `N + 2` sector.
pub fn apply_pair_creation(state: &FockVector, site: usize) -> Result<PairCreation> {
    let l = state.basis.l();
    if site < 1 || site >= l {
        return Err(Error::InvalidParams(format!("pair site {site} outside 1..{}", l - 1)));
    }
    let target = Arc::new(FockBasis::new(l, state.basis.n() + 2)?);
    let mask = 0b11u64 << (site - 1);
    let mut amps = vec![zero(); target.dim()];
    for (&s, a) in state.basis.states().iter().zip(&state.amplitudes) {
        if s & mask == 0 {
            let idx = target.index_of(s | mask).expect("N + 2 sector");
            amps[idx] = *a;
        }
    }
    let weight: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    if weight <= 1e-28 {
        return Err(Error::QuenchImpossible { site });
    }
    let n = weight.sqrt();
    amps.iter_mut().for_each(|a| *a /= n);
    Ok(PairCreation { state: FockVector { basis: target, amplitudes: amps }, weight })
}

/// `exp(-i H t)` applied through a full dense eigendecomposition. Only for
/// small sectors; used to cross-check [`evolve`].
pub fn evolve_dense(state: &FockVector, h: &SparseHamiltonian, t: f64) -> Result<FockVector> {
    let (e, v) = h.to_dense()?.eigh(UPLO::Lower)?;
    let d = h.dim;
    let psi = Array1::from(state.amplitudes.clone());
    let vc = v.mapv(|x| C64::new(x, 0.0));
    let coeff = vc.t().dot(&psi);
    let phased = Array1::from_shape_fn(d, |k| coeff[k] * C64::from_polar(1.0, -e[k] * t));
    let out = vc.dot(&phased);
    Ok(FockVector { basis: Arc::clone(&state.basis), amplitudes: out.to_vec() })
}
