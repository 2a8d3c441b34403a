//! Matrix-product states with particle-number blocks.
//!
//! States are kept in the Vidal/Hastings form: every site tensor `B_j` is
//! right-isometric and the Schmidt values `Λ_j` of every bond are stored
//! alongside. Any site can then serve as the orthogonality center, so
//! gates and measurements never move a center around; `Λ_j B_j ...` is
//! the center-site view. Updates recover the new left tensor as
//! `θ · V†` from the unscaled merged tensor, never by dividing by
//! Schmidt values.

mod block;
pub mod dmrg;
mod io;
pub mod tebd;

use ndarray::{s, Array1, Array2, Array3, ArrayView2};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use block::{Bond, Truncation};
use block::{svd, Theta};

use crate::error::{Error, Result};
use crate::model::{ModelParams, ThreeSitePhases, TwoSiteGate};
use crate::observables::half_current_bonds;

/// Largest chain converted to a dense `2^L` vector.
pub const DENSE_SITES_CAP: usize = 24;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpsState {
    l: usize,
    n: usize,
    tensors: Vec<Array3<C64>>,
    bonds: Vec<Bond>,
    schmidt: Vec<Vec<f64>>,
    discarded_weight: f64,
    pub truncation: Truncation,
}

/// Outcome of a single bond decomposition.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CutReport {
    /// Relative squared weight dropped at this cut.
    pub discarded: f64,
    /// Squared norm of the state just before truncation.
    pub norm_sq: f64,
    /// The bond dimension cap bound rather than the threshold.
    pub capped: bool,
}

impl MpsState {
    /// Bond-dimension-one product state.
    pub fn from_occupations(occ: &[u8], truncation: Truncation) -> Result<Self> {
        if let Some(bad) = occ.iter().find(|&&o| o > 1) {
            return Err(Error::InvalidParams(format!("occupation {bad} is not 0 or 1")));
        }
        if occ.is_empty() {
            return Err(Error::InvalidParams("empty chain".into()));
        }
        let l = occ.len();
        let mut bonds = Vec::with_capacity(l + 1);
        let mut q = 0i32;
        bonds.push(Bond::trivial(0));
        let mut tensors = Vec::with_capacity(l);
        for &o in occ {
            let mut t = Array3::zeros((1, 2, 1));
            t[[0, o as usize, 0]] = c(1.0);
            tensors.push(t);
            q += o as i32;
            bonds.push(Bond::trivial(q));
        }
        Ok(Self {
            l,
            n: q as usize,
            tensors,
            bonds,
            schmidt: vec![vec![1.0]; l + 1],
            discarded_weight: 0.0,
            truncation,
        })
    }

    /// Box occupying sites `i1..=i2` (1-based).
    pub fn box_state(l: usize, i1: usize, i2: usize, truncation: Truncation) -> Result<Self> {
        if i1 < 1 || i2 < i1 || i2 > l {
            return Err(Error::InvalidParams(format!("box [{i1}, {i2}] outside 1..{l}")));
        }
        let occ: Vec<u8> = (1..=l).map(|i| u8::from(i >= i1 && i <= i2)).collect();
        Self::from_occupations(&occ, truncation)
    }

    /// Seeded random state with `n` particles and sector dimensions up to
    /// `chi`, brought to canonical form.
    pub fn random(l: usize, n: usize, chi: usize, seed: u64) -> Result<Self> {
        if n > l || l == 0 || chi == 0 {
            return Err(Error::InvalidParams(format!("random state with L = {l}, N = {n}, chi = {chi}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (l_i, n_i) = (l as i32, n as i32);
        let bonds: Vec<Bond> = (0..=l_i)
            .map(|j| {
                let lo = 0.max(n_i - (l_i - j));
                let hi = j.min(n_i);
                let edge = j == 0 || j == l_i;
                Bond::new((lo..=hi).map(|q| (q, if edge { 1 } else { rng.random_range(1..=chi) })).collect())
            })
            .collect();
        let tensors = (0..l)
            .map(|j| {
                let (bl, br) = (&bonds[j], &bonds[j + 1]);
                let mut t = Array3::zeros((bl.dim(), 2, br.dim()));
                for a in 0..bl.sectors() {
                    for nn in 0..2 {
                        if let Some(b) = br.find(bl.charge(a) + nn as i32) {
                            for x in bl.range(a) {
                                for y in br.range(b) {
                                    t[[x, nn, y]] = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                                }
                            }
                        }
                    }
                }
                t
            })
            .collect();
        let mut st = Self {
            l,
            n,
            tensors,
            bonds,
            schmidt: vec![vec![]; l + 1],
            discarded_weight: 0.0,
            truncation: Truncation::default(),
        };
        st.canonicalize()?;
        Ok(st)
    }

    pub fn l(&self) -> usize {
        self.l
    }

    /// Particle number of the symmetry sector.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Every site is a valid center in this form, so no single center is
    /// tracked.
    pub fn center(&self) -> Option<usize> {
        None
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.bonds.iter().map(Bond::dim).collect()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bonds.iter().map(Bond::dim).max().unwrap_or(1)
    }

    pub fn discarded_weight(&self) -> f64 {
        self.discarded_weight
    }

    pub fn tensor(&self, site: usize) -> &Array3<C64> {
        &self.tensors[site]
    }

    pub fn bond(&self, bond: usize) -> &Bond {
        &self.bonds[bond]
    }

    /// Schmidt values of bond `bond` (between sites `bond - 1` and `bond`,
    /// 0-based), in storage order.
    pub fn schmidt_values(&self, bond: usize) -> &[f64] {
        &self.schmidt[bond]
    }

    fn site_theta(&self, j: usize) -> Theta {
        Theta::from_site(&self.tensors[j], &self.bonds[j], &self.bonds[j + 1])
    }

    fn pair_theta(&self, j: usize) -> Theta {
        self.site_theta(j).extend(&self.tensors[j + 1], &self.bonds[j + 2])
    }

    /// Writes a two-site theta on sites `j, j+1` back into the chain.
    fn split_pair(&mut self, j: usize, th: &Theta) -> Result<CutReport> {
        let sp = th.split_left(Some(&self.schmidt[j]), &self.truncation)?;
        let norm = sp.kept_sq.sqrt();
        self.tensors[j] = sp.left_from_phi(th, 1.0 / norm);
        self.tensors[j + 1] = sp.remainder(false).into_site_tensor();
        self.schmidt[j + 1] = sp.values.iter().map(|v| v / norm).collect();
        self.bonds[j + 1] = sp.bond.clone();
        let rep = CutReport { discarded: sp.discarded(), norm_sq: sp.total_sq, capped: sp.capped };
        self.discarded_weight += rep.discarded;
        Ok(rep)
    }

    /// Applies a gate on sites `j, j+1` (0-based), truncates and
    /// renormalizes.
    pub fn apply_two_site_gate(&mut self, j: usize, gate: &TwoSiteGate) -> Result<CutReport> {
        self.apply_two_site_matrix(j, &gate.matrix)
    }

    pub(crate) fn apply_two_site_matrix(&mut self, j: usize, gate: &Array2<C64>) -> Result<CutReport> {
        assert!(j + 1 < self.l, "bond {j} outside the chain");
        let mut th = self.pair_theta(j);
        th.apply_gate(gate);
        self.split_pair(j, &th)
    }

    /// Applies diagonal phases on sites `j, j+1, j+2` (0-based) with two
    /// SVDs. Returns the summed discarded weight.
    pub fn apply_three_site_diagonal(&mut self, j: usize, phases: &ThreeSitePhases) -> Result<CutReport> {
        assert!(j + 2 < self.l, "triple at {j} outside the chain");
        let mut th = self.pair_theta(j).extend(&self.tensors[j + 2], &self.bonds[j + 3]);
        th.apply_diagonal(&phases.phases);
        let first = self.split_leading(j, &th)?;
        let rem = first.1;
        let second = self.split_pair(j + 1, &rem)?;
        Ok(CutReport {
            discarded: first.0.discarded + second.discarded,
            norm_sq: first.0.norm_sq,
            capped: first.0.capped || second.capped,
        })
    }

    /// Splits the first site off a multi-site theta starting at `j`,
    /// updating `B_j`, `Λ_{j+1}` and the bond. Returns the right factor.
    fn split_leading(&mut self, j: usize, th: &Theta) -> Result<(CutReport, Theta)> {
        let sp = th.split_left(Some(&self.schmidt[j]), &self.truncation)?;
        let norm = sp.kept_sq.sqrt();
        self.tensors[j] = sp.left_from_phi(th, 1.0 / norm);
        self.schmidt[j + 1] = sp.values.iter().map(|v| v / norm).collect();
        self.bonds[j + 1] = sp.bond.clone();
        let rep = CutReport { discarded: sp.discarded(), norm_sq: sp.total_sq, capped: sp.capped };
        self.discarded_weight += rep.discarded;
        Ok((rep, sp.remainder(false)))
    }

    /// One left-to-right pass of the phases over every consecutive triple.
    /// Each triple costs one SVD; the last pair is split at the end.
    pub fn apply_interaction_layer(&mut self, phases: &ThreeSitePhases) -> Result<Vec<CutReport>> {
        let mut reports = Vec::with_capacity(self.l);
        if self.l < 3 || phases.is_trivial() {
            return Ok(reports);
        }
        let mut rem = self.pair_theta(0);
        for j in 0..self.l - 2 {
            let mut th = rem.extend(&self.tensors[j + 2], &self.bonds[j + 3]);
            th.apply_diagonal(&phases.phases);
            let (rep, next) = self.split_leading(j, &th)?;
            reports.push(rep);
            rem = next;
        }
        let j = self.l - 2;
        reports.push(self.split_pair(j, &rem)?);
        Ok(reports)
    }

    /// Restores the canonical form from arbitrary tensors and normalizes.
    /// Returns the norm before normalization. Only numerically zero
    /// singular values are dropped.
    pub fn canonicalize(&mut self) -> Result<f64> {
        let norm = self.right_sweep()?;
        self.left_sweep()?;
        Ok(norm)
    }

    /// Right-to-left pass making every tensor right-isometric.
    fn right_sweep(&mut self) -> Result<f64> {
        let mut carry: Option<Array2<C64>> = None;
        for j in (0..self.l).rev() {
            let mut t = self.tensors[j].clone();
            if let Some(cm) = carry.take() {
                let (cl, _, cr) = t.dim();
                let flat = t.into_shape_with_order((cl * 2, cr)).unwrap().dot(&cm);
                t = flat.into_shape_with_order((cl, 2, cm.ncols())).unwrap();
            }
            let (bl, br) = (&self.bonds[j], &self.bonds[j + 1]);
            let mut pieces = Vec::new();
            for a in 0..bl.sectors() {
                let q = bl.charge(a);
                let b0 = br.find(q);
                let b1 = br.find(q + 1);
                let d0 = b0.map_or(0, |b| br.sector_dim(b));
                let d1 = b1.map_or(0, |b| br.sector_dim(b));
                if d0 + d1 == 0 {
                    continue;
                }
                let mut m = Array2::<C64>::zeros((bl.sector_dim(a), d0 + d1));
                if let Some(b) = b0 {
                    m.slice_mut(s![.., ..d0]).assign(&t.slice(s![bl.range(a), 0, br.range(b)]));
                }
                if let Some(b) = b1 {
                    m.slice_mut(s![.., d0..]).assign(&t.slice(s![bl.range(a), 1, br.range(b)]));
                }
                let (u, sv, vh) = svd(m.view())?;
                pieces.push((a, b0, b1, d0, u, sv, vh));
            }
            let s_max = pieces.iter().flat_map(|p| p.5.iter()).fold(0.0f64, |x, &y| x.max(y));
            if s_max == 0.0 {
                return Err(Error::Integrity("state has zero norm".into()));
            }
            let cut = 1e-14 * s_max;
            let mut sectors = Vec::new();
            let mut kept = Vec::new();
            for (a, b0, b1, d0, u, sv, vh) in pieces {
                let k = sv.iter().take_while(|&&x| x > cut).count();
                if k > 0 {
                    sectors.push((bl.charge(a), k));
                    kept.push((a, b0, b1, d0, u, sv, vh, k));
                }
            }
            let new_bond = Bond::new(sectors);
            let mut b_new = Array3::zeros((new_bond.dim(), 2, br.dim()));
            let mut cm = Array2::<C64>::zeros((bl.dim(), new_bond.dim()));
            for (idx, (a, b0, b1, d0, u, sv, vh, k)) in kept.into_iter().enumerate() {
                let nr = new_bond.range(idx);
                if let Some(b) = b0 {
                    b_new.slice_mut(s![nr.clone(), 0, br.range(b)]).assign(&vh.slice(s![..k, ..d0]));
                }
                if let Some(b) = b1 {
                    b_new.slice_mut(s![nr.clone(), 1, br.range(b)]).assign(&vh.slice(s![..k, d0..]));
                }
                let mut us = u.slice(s![.., ..k]).to_owned();
                for (mut col, &x) in us.columns_mut().into_iter().zip(&sv) {
                    col.mapv_inplace(|z| z * x);
                }
                cm.slice_mut(s![bl.range(a), nr]).assign(&us);
            }
            self.tensors[j] = b_new;
            self.bonds[j] = new_bond;
            carry = Some(cm);
        }
        let cm = carry.expect("non-empty chain");
        let z = cm[[0, 0]];
        let norm = z.norm();
        let phase = z / norm;
        self.tensors[0].mapv_inplace(|x| x * phase);
        Ok(norm)
    }

    /// Left-to-right pass computing Schmidt values on right-isometric
    /// tensors and rotating each bond to its Schmidt basis.
    fn left_sweep(&mut self) -> Result<()> {
        self.schmidt[0] = vec![1.0];
        self.schmidt[self.l] = vec![1.0];
        let exact = Truncation::exact();
        let mut rot: Option<Theta> = None;
        for j in 0..self.l {
            let th = match rot.take() {
                None => self.site_theta(j),
                Some(r) => r.extend(&self.tensors[j], &self.bonds[j + 1]),
            };
            if j + 1 == self.l {
                self.tensors[j] = th.into_site_tensor();
                break;
            }
            let sp = th.split_left(Some(&self.schmidt[j]), &exact)?;
            let norm = sp.kept_sq.sqrt();
            self.tensors[j] = sp.left_from_phi(&th, 1.0);
            self.schmidt[j + 1] = sp.values.iter().map(|v| v / norm).collect();
            self.bonds[j + 1] = sp.bond.clone();
            rot = Some(sp.remainder(false));
        }
        Ok(())
    }

    /// `<n_j>` for every site.
    pub fn density(&self) -> Vec<f64> {
        (0..self.l)
            .map(|j| {
                let (bl, br, t) = (&self.bonds[j], &self.bonds[j + 1], &self.tensors[j]);
                let mut acc = 0.0;
                for a in 0..bl.sectors() {
                    let Some(b) = br.find(bl.charge(a) + 1) else { continue };
                    for (x, &lam) in bl.range(a).zip(&self.schmidt[j][bl.range(a)]) {
                        let w: f64 = t.slice(s![x, 1, br.range(b)]).iter().map(|z| z.norm_sqr()).sum();
                        acc += lam * lam * w;
                    }
                }
                acc
            })
            .collect()
    }

    pub fn total_n(&self) -> f64 {
        self.density().iter().sum()
    }

    /// `<b†_j b_{j+1}>` for the bond with left site `j` (0-based).
    pub fn hopping_correlator(&self, j: usize) -> C64 {
        let th = self.pair_theta(j);
        let lam = &self.schmidt[j];
        let mut acc = c(0.0);
        for a in 0..th.left.sectors() {
            let (Some(x10), Some(x01)) = (th.blocks.get(&(a, 2)), th.blocks.get(&(a, 1))) else { continue };
            let lr = th.left.range(a);
            for (i, (r10, r01)) in x10.rows().into_iter().zip(x01.rows()).enumerate() {
                let l2 = lam[lr.start + i].powi(2);
                let dot: C64 = r10.iter().zip(r01.iter()).map(|(p, q)| p.conj() * q).sum();
                acc += dot * l2;
            }
        }
        acc
    }

    /// Summed particle current over the right-half bonds.
    pub fn half_current(&self, j: f64) -> f64 {
        half_current_bonds(self.l).map(|k| 2.0 * j * self.hopping_correlator(k).im).sum()
    }

    /// `<n_j n_{j+1} n_{j+2}>`.
    pub fn triple_density(&self, j: usize) -> f64 {
        let th = self.pair_theta(j).extend(&self.tensors[j + 2], &self.bonds[j + 3]);
        let lam = &self.schmidt[j];
        let mut acc = 0.0;
        for (&(a, cfg), blk) in &th.blocks {
            if cfg != 7 {
                continue;
            }
            let lr = th.left.range(a);
            for (i, row) in blk.rows().into_iter().enumerate() {
                acc += lam[lr.start + i].powi(2) * row.iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
        }
        acc
    }

    /// `<H>` from local terms.
    pub fn energy(&self, params: &ModelParams) -> f64 {
        let hop: f64 = (0..self.l - 1).map(|k| -2.0 * params.j * self.hopping_correlator(k).re).sum();
        let int: f64 = if params.w == 0.0 || self.l < 3 {
            0.0
        } else {
            (0..self.l - 2).map(|k| params.w * self.triple_density(k)).sum()
        };
        hop + int
    }

    /// Von Neumann entropy of bond `bond` (0..=L).
    pub fn bond_entropy(&self, bond: usize) -> f64 {
        entropy(&self.schmidt[bond])
    }

    pub fn entropies(&self) -> Vec<f64> {
        (0..=self.l).map(|b| self.bond_entropy(b)).collect()
    }

    pub fn max_entropy(&self) -> f64 {
        self.entropies().into_iter().fold(0.0, f64::max)
    }

    /// Overlap `<self|other>` by transfer matrices, valid in any gauge.
    pub fn overlap(&self, other: &MpsState) -> C64 {
        assert_eq!(self.l, other.l);
        let mut e = Array2::from_elem((1, 1), c(1.0));
        for j in 0..self.l {
            let (a, b) = (&self.tensors[j], &other.tensors[j]);
            let mut next = Array2::zeros((a.dim().2, b.dim().2));
            for nn in 0..2 {
                let an: Array2<C64> = a.slice(s![.., nn, ..]).mapv(|z| z.conj());
                let bn: ArrayView2<C64> = b.slice(s![.., nn, ..]);
                next += &an.t().dot(&e).dot(&bn);
            }
            e = next;
        }
        // both ends carry a single trivial index; differing sectors mean 0
        if self.bonds[self.l] != other.bonds[other.l] {
            return c(0.0);
        }
        e[[0, 0]]
    }

    pub fn norm(&self) -> f64 {
        self.overlap(self).re.max(0.0).sqrt()
    }

    /// Dense `2^L` amplitudes indexed by configuration bitmask, bit `k` for
    /// site `k` (0-based).
    pub fn to_full_space(&self) -> Result<Vec<C64>> {
        if self.l > DENSE_SITES_CAP {
            return Err(Error::InvalidParams(format!("L = {} too large for a dense vector", self.l)));
        }
        let mut psi = Array2::from_elem((1, 1), c(1.0));
        for (j, t) in self.tensors.iter().enumerate() {
            let rows = psi.nrows();
            let mut next = Array2::zeros((2 * rows, t.dim().2));
            for nn in 0..2 {
                let part = psi.dot(&t.slice(s![.., nn, ..]));
                next.slice_mut(s![nn * rows..(nn + 1) * rows, ..]).assign(&part);
            }
            debug_assert_eq!(rows, 1 << j);
            psi = next;
        }
        Ok(psi.column(0).to_vec())
    }

    /// Largest deviation from right-isometry and from the Schmidt relation
    /// `Σ_n (Λ B_n)† (Λ B_n) = Λ'^2`.
    pub fn canonical_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.l {
            let t = &self.tensors[j];
            let (cl, _, cr) = t.dim();
            let mut right = Array2::<C64>::zeros((cl, cl));
            let mut left = Array2::<C64>::zeros((cr, cr));
            let lam = Array1::from(self.schmidt[j].clone()).mapv(c);
            for nn in 0..2 {
                let b: ArrayView2<C64> = t.slice(s![.., nn, ..]);
                let bh: Array2<C64> = b.t().mapv(|z| z.conj());
                right += &b.dot(&bh);
                let lb: Array2<C64> = &b * &lam.view().insert_axis(ndarray::Axis(1));
                left += &lb.t().mapv(|z| z.conj()).dot(&lb);
            }
            for ((x, y), z) in right.indexed_iter() {
                let target = if x == y { 1.0 } else { 0.0 };
                worst = worst.max((z - c(target)).norm());
            }
            for ((x, y), z) in left.indexed_iter() {
                let target = if x == y { self.schmidt[j + 1][x].powi(2) } else { 0.0 };
                worst = worst.max((z - c(target)).norm());
            }
        }
        worst
    }

    /// `<(1 - n_j)(1 - n_{j+1})>` for 0-based `j`.
    fn empty_pair_weight(&self, j: usize) -> f64 {
        let th = self.pair_theta(j);
        let lam = &self.schmidt[j];
        let mut acc = 0.0;
        for (&(a, cfg), blk) in &th.blocks {
            if cfg != 0 {
                continue;
            }
            let lr = th.left.range(a);
            for (i, row) in blk.rows().into_iter().enumerate() {
                acc += lam[lr.start + i].powi(2) * row.iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
        }
        acc
    }

    /// Applies `b†_site b†_{site+1}` (1-based `site`), renormalizes, and
    /// returns the squared norm of the unnormalized result.
    pub fn apply_pair_creation(&mut self, site: usize) -> Result<f64> {
        if site < 1 || site >= self.l {
            return Err(Error::InvalidParams(format!("pair site {site} outside 1..{}", self.l - 1)));
        }
        let j = site - 1;
        let weight = self.empty_pair_weight(j);
        if weight <= 1e-24 {
            return Err(Error::QuenchImpossible { site });
        }
        for t in &mut self.tensors[j..j + 2] {
            let empty = t.slice(s![.., 0, ..]).to_owned();
            t.slice_mut(s![.., 1, ..]).assign(&empty);
            t.slice_mut(s![.., 0, ..]).fill(c(0.0));
        }
        self.bonds[j + 1] = self.bonds[j + 1].shifted(1);
        for b in &mut self.bonds[j + 2..] {
            *b = b.shifted(2);
        }
        self.n += 2;
        let norm = self.canonicalize()?;
        Ok(norm * norm)
    }

    /// Replaces the tensors and bonds wholesale, then canonicalizes. Used
    /// by the ground-state search.
    fn from_raw(l: usize, n: usize, tensors: Vec<Array3<C64>>, bonds: Vec<Bond>, truncation: Truncation) -> Result<Self> {
        let mut st = Self {
            l,
            n,
            tensors,
            bonds,
            schmidt: vec![vec![]; l + 1],
            discarded_weight: 0.0,
            truncation,
        };
        st.canonicalize()?;
        Ok(st)
    }
}

/// `-Σ s² ln s²` over a normalized spectrum.
pub fn entropy(values: &[f64]) -> f64 {
    values
        .iter()
        .map(|&v| v * v)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}
