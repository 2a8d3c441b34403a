//! Two-site ground-state sweeps at fixed particle number.
//!
//! The Hamiltonian is a bond-dimension-6 MPO with finite-state rows
//!
//! ```text
//! 0 -> 0: I      0 -> 1: -J b†   1 -> 5: b
//! 0 -> 3: n      0 -> 2: -J b    2 -> 5: b†
//! 3 -> 4: n      4 -> 5: W n     5 -> 5: I
//! ```
//!
//! entering in state 0 on the left and leaving in state 5 on the right.
//! Site tensors keep their charge blocks, so the particle number of the
//! starting product state is conserved exactly by every update.

use std::collections::BTreeMap;

use ndarray::{s, Array2, Array3, Array4};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;

use super::block::{Bond, Theta, Truncation};
use super::MpsState;
use crate::error::{Error, Result};
use crate::model::ModelParams;

const MPO_DIM: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DmrgConfig {
    pub chi_max: usize,
    pub svd_eps: f64,
    /// Converged when the energy changes by less than this over a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
    pub krylov_dim: usize,
}

impl Default for DmrgConfig {
    fn default() -> Self {
        Self { chi_max: 128, svd_eps: 1e-10, tol: 1e-10, max_sweeps: 40, krylov_dim: 24 }
    }
}

#[derive(Clone, Debug)]
pub struct DmrgResult {
    pub energy: f64,
    pub state: MpsState,
    /// Energy after each full sweep.
    pub sweep_energies: Vec<f64>,
}

/// `(s, s', coefficient)` entries of a local operator.
type LocalOp = Vec<(usize, usize, f64)>;

struct Term {
    from: usize,
    to: usize,
    op: LocalOp,
}

fn mpo(params: &ModelParams) -> Vec<Term> {
    let id = vec![(0, 0, 1.0), (1, 1, 1.0)];
    let create = |c| vec![(1, 0, c)];
    let destroy = |c| vec![(0, 1, c)];
    let number = |c| vec![(1, 1, c)];
    let j = params.j;
    let mut t = vec![
        Term { from: 0, to: 0, op: id.clone() },
        Term { from: 0, to: 1, op: create(-j) },
        Term { from: 1, to: 5, op: destroy(1.0) },
        Term { from: 0, to: 2, op: destroy(-j) },
        Term { from: 2, to: 5, op: create(1.0) },
        Term { from: 5, to: 5, op: id },
    ];
    if params.w != 0.0 {
        t.push(Term { from: 0, to: 3, op: number(1.0) });
        t.push(Term { from: 3, to: 4, op: number(1.0) });
        t.push(Term { from: 4, to: 5, op: number(params.w) });
    }
    t
}

type Env = Vec<Array2<C64>>;

fn edge_env(active: usize) -> Env {
    (0..MPO_DIM)
        .map(|w| Array2::from_elem((1, 1), C64::new(if w == active { 1.0 } else { 0.0 }, 0.0)))
        .collect()
}

fn is_zero(m: &Array2<C64>) -> bool {
    m.iter().all(|z| *z == C64::new(0.0, 0.0))
}

fn grow_left(env: &Env, a: &Array3<C64>, terms: &[Term]) -> Env {
    let cr = a.dim().2;
    let mut out: Env = (0..MPO_DIM).map(|_| Array2::zeros((cr, cr))).collect();
    let ah: Vec<Array2<C64>> = (0..2).map(|n| a.slice(s![.., n, ..]).t().mapv(|z| z.conj())).collect();
    for t in terms {
        if is_zero(&env[t.from]) {
            continue;
        }
        for &(sb, sk, c) in &t.op {
            let m = ah[sb].dot(&env[t.from]).dot(&a.slice(s![.., sk, ..]));
            out[t.to].scaled_add(C64::new(c, 0.0), &m);
        }
    }
    out
}

fn grow_right(env: &Env, b: &Array3<C64>, terms: &[Term]) -> Env {
    let cl = b.dim().0;
    let mut out: Env = (0..MPO_DIM).map(|_| Array2::zeros((cl, cl))).collect();
    let bc: Vec<Array2<C64>> = (0..2).map(|n| b.slice(s![.., n, ..]).mapv(|z| z.conj())).collect();
    for t in terms {
        if is_zero(&env[t.to]) {
            continue;
        }
        for &(sb, sk, c) in &t.op {
            let m = bc[sb].dot(&env[t.to]).dot(&b.slice(s![.., sk, ..]).t());
            out[t.from].scaled_add(C64::new(c, 0.0), &m);
        }
    }
    out
}

/// Two-site effective Hamiltonian between fixed environments.
struct Effective<'a> {
    left: &'a Env,
    right_t: Vec<Array2<C64>>,
    paths: Vec<(usize, usize, &'a LocalOp, &'a LocalOp)>,
}

impl<'a> Effective<'a> {
    fn new(left: &'a Env, right: &Env, terms: &'a [Term]) -> Self {
        let mut paths = Vec::new();
        for t1 in terms {
            if is_zero(&left[t1.from]) {
                continue;
            }
            for t2 in terms.iter().filter(|t2| t2.from == t1.to) {
                if !is_zero(&right[t2.to]) {
                    paths.push((t1.from, t2.to, &t1.op, &t2.op));
                }
            }
        }
        let right_t = right.iter().map(|r| r.t().to_owned()).collect();
        Self { left, right_t, paths }
    }

    fn apply(&self, x: &Array4<C64>) -> Array4<C64> {
        let mut out = Array4::zeros(x.dim());
        for &(wl, wr, op1, op2) in &self.paths {
            for &(s1, s1p, c1) in op1 {
                for &(s2, s2p, c2) in op2 {
                    let m = self.left[wl].dot(&x.slice(s![.., s1p, s2p, ..])).dot(&self.right_t[wr]);
                    out.slice_mut(s![.., s1, s2, ..]).scaled_add(C64::new(c1 * c2, 0.0), &m);
                }
            }
        }
        out
    }
}

fn inner(a: &Array4<C64>, b: &Array4<C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Lowest Ritz pair in a Krylov space grown from `start`.
fn lowest_eigenpair(h: &Effective, start: &Array4<C64>, max_dim: usize) -> Result<(f64, Array4<C64>)> {
    let n0 = inner(start, start).re.sqrt();
    let mut basis = vec![start.mapv(|z| z / n0)];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let dim = start.len();
    loop {
        let k = basis.len() - 1;
        let mut w = h.apply(&basis[k]);
        alpha.push(inner(&basis[k], &w).re);
        for _ in 0..2 {
            for v in &basis {
                let p = inner(v, &w);
                w.scaled_add(-p, v);
            }
        }
        let b = inner(&w, &w).re.sqrt();
        if basis.len() >= max_dim.min(dim) || b < 1e-12 {
            break;
        }
        beta.push(b);
        basis.push(w.mapv(|z| z / b));
    }
    let m = alpha.len();
    let mut t = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        t[[i, i]] = alpha[i];
        if i + 1 < m {
            t[[i, i + 1]] = beta[i];
            t[[i + 1, i]] = beta[i];
        }
    }
    let (vals, vecs) = t.eigh(UPLO::Lower)?;
    let mut x = Array4::zeros(start.dim());
    for (i, v) in basis.iter().enumerate() {
        x.scaled_add(C64::new(vecs[[i, 0]], 0.0), v);
    }
    let nx = inner(&x, &x).re.sqrt();
    Ok((vals[0], x.mapv(|z| z / nx)))
}

fn theta_to_dense(th: &Theta) -> Array4<C64> {
    let mut d = Array4::zeros((th.left.dim(), 2, 2, th.right.dim()));
    for (&(a, c), blk) in &th.blocks {
        let b = th.right.find(th.left.charge(a) + c.count_ones() as i32).unwrap();
        d.slice_mut(s![th.left.range(a), c >> 1, c & 1, th.right.range(b)]).assign(blk);
    }
    d
}

fn dense_to_theta(d: &Array4<C64>, left: &Bond, right: &Bond) -> Theta {
    let mut blocks = BTreeMap::new();
    for a in 0..left.sectors() {
        for c in 0..4usize {
            if let Some(b) = right.find(left.charge(a) + c.count_ones() as i32) {
                blocks.insert((a, c), d.slice(s![left.range(a), c >> 1, c & 1, right.range(b)]).to_owned());
            }
        }
    }
    Theta { sites: 2, left: left.clone(), right: right.clone(), blocks }
}

/// Particles spread as evenly as possible over the chain.
pub fn spread_occupations(l: usize, n: usize) -> Vec<u8> {
    let mut occ = vec![0u8; l];
    for k in 0..n {
        occ[((2 * k + 1) * l) / (2 * n)] = 1;
    }
    occ
}

struct Sweeper<'a> {
    tensors: Vec<Array3<C64>>,
    bonds: Vec<Bond>,
    left_env: Vec<Option<Env>>,
    right_env: Vec<Option<Env>>,
    terms: &'a [Term],
    trunc: Truncation,
    krylov_dim: usize,
}

impl Sweeper<'_> {
    /// Optimizes sites `j, j+1`; the center moves right if `right`.
    fn update(&mut self, j: usize, right: bool) -> Result<f64> {
        let th = Theta::from_site(&self.tensors[j], &self.bonds[j], &self.bonds[j + 1])
            .extend(&self.tensors[j + 1], &self.bonds[j + 2]);
        let x0 = theta_to_dense(&th);
        let (le, re) = (self.left_env[j].as_ref().unwrap(), self.right_env[j + 2].as_ref().unwrap());
        let heff = Effective::new(le, re, self.terms);
        let (e, x) = lowest_eigenpair(&heff, &x0, self.krylov_dim)?;
        let th = dense_to_theta(&x, &self.bonds[j], &self.bonds[j + 2]);
        let sp = th.split_left(None, &self.trunc)?;
        let scale = C64::new(1.0 / sp.kept_sq.sqrt(), 0.0);
        self.bonds[j + 1] = sp.bond.clone();
        if right {
            self.tensors[j] = sp.left_from_u(false);
            self.tensors[j + 1] = sp.remainder(true).into_site_tensor().mapv(|z| z * scale);
            self.left_env[j + 1] = Some(grow_left(self.left_env[j].as_ref().unwrap(), &self.tensors[j], self.terms));
        } else {
            self.tensors[j] = sp.left_from_u(true).mapv(|z| z * scale);
            self.tensors[j + 1] = sp.remainder(false).into_site_tensor();
            self.right_env[j + 1] =
                Some(grow_right(self.right_env[j + 2].as_ref().unwrap(), &self.tensors[j + 1], self.terms));
        }
        Ok(e)
    }
}

/// Variational ground state with exactly `n` particles.
pub fn ground_state_search(params: &ModelParams, n: usize, cfg: &DmrgConfig) -> Result<DmrgResult> {
    params.validate()?;
    let l = params.l;
    if n > l {
        return Err(Error::InvalidParams(format!("N = {n} > L = {l}")));
    }
    let terms = mpo(params);
    let trunc = Truncation { chi_max: cfg.chi_max, svd_eps: cfg.svd_eps };
    let start = MpsState::from_occupations(&spread_occupations(l, n), trunc)?;
    let mut sw = Sweeper {
        tensors: start.tensors,
        bonds: start.bonds,
        left_env: vec![None; l + 1],
        right_env: vec![None; l + 1],
        terms: &terms,
        trunc,
        krylov_dim: cfg.krylov_dim.max(2),
    };
    sw.left_env[0] = Some(edge_env(0));
    sw.right_env[l] = Some(edge_env(MPO_DIM - 1));
    for j in (1..l).rev() {
        sw.right_env[j] = Some(grow_right(sw.right_env[j + 1].as_ref().unwrap(), &sw.tensors[j], &terms));
    }

    let mut energies = Vec::new();
    for sweep in 0..cfg.max_sweeps {
        for j in 0..l - 1 {
            sw.update(j, true)?;
        }
        let mut e = f64::NAN;
        for j in (0..l - 1).rev() {
            e = sw.update(j, false)?;
        }
        energies.push(e);
        log::debug!("sweep {sweep}: E = {e:.14}");
        if let [.., prev, last] = energies[..] {
            if (prev - last).abs() < cfg.tol {
                let state = MpsState::from_raw(l, n, sw.tensors, sw.bonds, trunc)?;
                return Ok(DmrgResult { energy: last, state, sweep_energies: energies });
            }
        }
    }
    Err(Error::SweepNonConvergence { sweeps: cfg.max_sweeps, energies })
}
