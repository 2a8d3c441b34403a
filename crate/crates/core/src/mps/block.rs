//! Particle-number block structure. Every bond index carries a charge, the
//! number of particles to its left, and bond indices are stored sorted by
//! charge so each symmetry block is a contiguous rectangle of the dense
//! site tensor. Contractions and SVDs only ever touch those rectangles.

use std::collections::BTreeMap;
use std::ops::Range;

use ndarray::{s, Array2, Array3, ArrayView2};
use ndarray_linalg::{JobSvd, SVDDC, SVD};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Singular values below this fraction of the largest are numerical zeros
/// and never kept, whatever the configured threshold.
const ZERO_FLOOR: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Truncation {
    /// Bond dimension cap.
    pub chi_max: usize,
    /// Relative singular value threshold: keep `s >= svd_eps * s_max`.
    pub svd_eps: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Self { chi_max: 400, svd_eps: 1e-8 }
    }
}

impl Truncation {
    /// Drops numerical zeros only.
    pub fn exact() -> Self {
        Self { chi_max: usize::MAX, svd_eps: 0.0 }
    }
}

/// A bond index split into charge sectors, sorted by charge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bond {
    charges: Vec<i32>,
    dims: Vec<usize>,
    offsets: Vec<usize>,
}

impl Bond {
    /// Sectors must have strictly increasing charges and nonzero dims.
    pub fn new(sectors: Vec<(i32, usize)>) -> Self {
        debug_assert!(sectors.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert!(sectors.iter().all(|s| s.1 > 0));
        let mut offsets = Vec::with_capacity(sectors.len());
        let mut acc = 0;
        for &(_, d) in &sectors {
            offsets.push(acc);
            acc += d;
        }
        let (charges, dims) = sectors.into_iter().unzip();
        Self { charges, dims, offsets }
    }

    pub fn trivial(charge: i32) -> Self {
        Self::new(vec![(charge, 1)])
    }

    pub fn dim(&self) -> usize {
        self.offsets.last().map_or(0, |o| o + self.dims.last().unwrap())
    }

    pub fn sectors(&self) -> usize {
        self.charges.len()
    }

    pub fn charge(&self, idx: usize) -> i32 {
        self.charges[idx]
    }

    pub fn sector_dim(&self, idx: usize) -> usize {
        self.dims[idx]
    }

    pub fn find(&self, charge: i32) -> Option<usize> {
        self.charges.binary_search(&charge).ok()
    }

    pub fn range(&self, idx: usize) -> Range<usize> {
        self.offsets[idx]..self.offsets[idx] + self.dims[idx]
    }

    /// Charge of every index in order.
    pub fn index_charges(&self) -> Vec<i32> {
        self.charges.iter().zip(&self.dims).flat_map(|(&q, &d)| std::iter::repeat_n(q, d)).collect()
    }

    pub fn shifted(&self, delta: i32) -> Self {
        Self { charges: self.charges.iter().map(|q| q + delta).collect(), ..self.clone() }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, usize)> + '_ {
        self.charges.iter().copied().zip(self.dims.iter().copied())
    }
}

/// Contraction of `sites` consecutive site tensors, stored by symmetry
/// block. Key `(left sector, config)`; the first site is the most
/// significant bit of `config`, and the right sector has charge
/// `left charge + popcount(config)`.
#[derive(Clone, Debug)]
pub struct Theta {
    pub sites: usize,
    pub left: Bond,
    pub right: Bond,
    pub blocks: BTreeMap<(usize, usize), Array2<C64>>,
}

fn pop(c: usize) -> i32 {
    c.count_ones() as i32
}

impl Theta {
    pub fn from_site(t: &Array3<C64>, left: &Bond, right: &Bond) -> Self {
        let mut blocks = BTreeMap::new();
        for a in 0..left.sectors() {
            let qa = left.charge(a);
            for n in 0..2 {
                if let Some(b) = right.find(qa + n as i32) {
                    let blk = t.slice(s![left.range(a), n, right.range(b)]);
                    blocks.insert((a, n), blk.to_owned());
                }
            }
        }
        Self { sites: 1, left: left.clone(), right: right.clone(), blocks }
    }

    /// Appends one more site on the right.
    pub fn extend(&self, t: &Array3<C64>, new_right: &Bond) -> Self {
        let mut blocks = BTreeMap::new();
        for (&(a, c), m) in &self.blocks {
            let q = self.left.charge(a) + pop(c);
            let mid = self.right.find(q).expect("block has a right sector");
            for n in 0..2 {
                if let Some(b) = new_right.find(q + n as i32) {
                    let rhs = t.slice(s![self.right.range(mid), n, new_right.range(b)]);
                    blocks.insert((a, 2 * c + n), m.dot(&rhs));
                }
            }
        }
        Self { sites: self.sites + 1, left: self.left.clone(), right: new_right.clone(), blocks }
    }

    /// Two-site gate in the `(n_left, n_right)` basis. The gate must
    /// conserve particle number.
    pub fn apply_gate(&mut self, gate: &Array2<C64>) {
        debug_assert_eq!(self.sites, 2);
        let lefts: Vec<usize> = {
            let mut v: Vec<usize> = self.blocks.keys().map(|k| k.0).collect();
            v.dedup();
            v
        };
        for a in lefts {
            let old: Vec<Option<Array2<C64>>> = (0..4).map(|c| self.blocks.remove(&(a, c))).collect();
            for cp in 0..4 {
                let mut acc: Option<Array2<C64>> = None;
                for (c, blk) in old.iter().enumerate() {
                    let (Some(blk), g) = (blk, gate[[cp, c]]) else { continue };
                    if pop(c) != pop(cp) || g == C64::new(0.0, 0.0) {
                        continue;
                    }
                    match acc.as_mut() {
                        None => acc = Some(blk * g),
                        Some(x) => x.scaled_add(g, blk),
                    }
                }
                if let Some(x) = acc {
                    self.blocks.insert((a, cp), x);
                }
            }
        }
    }

    /// Multiplies each configuration block by a phase.
    pub fn apply_diagonal(&mut self, phases: &[C64]) {
        debug_assert_eq!(phases.len(), 1 << self.sites);
        for ((_, c), blk) in self.blocks.iter_mut() {
            let ph = phases[*c];
            if ph != C64::new(1.0, 0.0) {
                blk.mapv_inplace(|z| z * ph);
            }
        }
    }

    /// Dense tensor for a single-site theta.
    pub fn into_site_tensor(self) -> Array3<C64> {
        debug_assert_eq!(self.sites, 1);
        let mut t = Array3::zeros((self.left.dim(), 2, self.right.dim()));
        for ((a, n), blk) in self.blocks {
            let b = self.right.find(self.left.charge(a) + n as i32).unwrap();
            t.slice_mut(s![self.left.range(a), n, self.right.range(b)]).assign(&blk);
        }
        t
    }

    /// Splits off the first site by block SVD of the matrix with rows
    /// `(left, first site)` and columns `(remaining sites, right)`. Rows are
    /// scaled by `row_scale` (Schmidt values of the left bond) before the
    /// decomposition when given.
    pub fn split_left(&self, row_scale: Option<&[f64]>, trunc: &Truncation) -> Result<Split> {
        let k = self.sites;
        assert!(k >= 1);
        let rest_bits = k - 1;
        let rest_mask = (1usize << rest_bits) - 1;
        let mut charges: Vec<i32> = self
            .blocks
            .keys()
            .map(|&(a, c)| self.left.charge(a) + (c >> rest_bits) as i32)
            .collect();
        charges.sort_unstable();
        charges.dedup();

        let mut sectors = Vec::with_capacity(charges.len());
        for m in charges {
            let mut rows = Vec::new();
            let mut nrows = 0;
            for n1 in 0..2usize {
                if let Some(a) = self.left.find(m - n1 as i32) {
                    let d = self.left.sector_dim(a);
                    rows.push(RowGroup { a, n1, offset: nrows, dim: d });
                    nrows += d;
                }
            }
            let mut cols = Vec::new();
            let mut ncols = 0;
            for r in 0..=rest_mask {
                if let Some(b) = self.right.find(m + pop(r)) {
                    let d = self.right.sector_dim(b);
                    cols.push(ColGroup { r, offset: ncols, dim: d });
                    ncols += d;
                }
            }
            let mut mat = Array2::<C64>::zeros((nrows, ncols));
            let mut any = false;
            for rg in &rows {
                for cg in &cols {
                    let c = (rg.n1 << rest_bits) | cg.r;
                    if let Some(blk) = self.blocks.get(&(rg.a, c)) {
                        any = true;
                        let mut dst = mat.slice_mut(s![rg.offset..rg.offset + rg.dim, cg.offset..cg.offset + cg.dim]);
                        match row_scale {
                            Some(lam) => {
                                let lr = self.left.range(rg.a);
                                for (i, mut row) in dst.rows_mut().into_iter().enumerate() {
                                    let w = lam[lr.start + i];
                                    row.zip_mut_with(&blk.row(i), |d, &x| *d = x * w);
                                }
                            }
                            None => dst.assign(blk),
                        }
                    }
                }
            }
            if !any || nrows == 0 || ncols == 0 {
                continue;
            }
            let (u, sv, vh) = svd(mat.view())?;
            sectors.push(SplitSector { charge: m, rows, cols, u, s: sv, vh, keep: 0 });
        }
        Split::truncate(sectors, self.left.clone(), self.right.clone(), rest_bits, trunc)
    }
}

#[derive(Clone, Debug)]
pub struct RowGroup {
    pub a: usize,
    pub n1: usize,
    pub offset: usize,
    pub dim: usize,
}

#[derive(Clone, Debug)]
pub struct ColGroup {
    pub r: usize,
    pub offset: usize,
    pub dim: usize,
}

#[derive(Clone, Debug)]
pub struct SplitSector {
    pub charge: i32,
    pub rows: Vec<RowGroup>,
    pub cols: Vec<ColGroup>,
    pub u: Array2<C64>,
    pub s: Vec<f64>,
    pub vh: Array2<C64>,
    pub keep: usize,
}

/// Result of [`Theta::split_left`] after truncation.
#[derive(Clone, Debug)]
pub struct Split {
    /// The new bond, one sector per surviving charge.
    pub bond: Bond,
    /// Kept singular values in bond order, not normalized.
    pub values: Vec<f64>,
    pub kept_sq: f64,
    pub total_sq: f64,
    /// Whether the `chi_max` cap (rather than the threshold) bound.
    pub capped: bool,
    sectors: Vec<SplitSector>,
    left: Bond,
    right: Bond,
    rest_bits: usize,
}

impl Split {
    fn truncate(
        mut sectors: Vec<SplitSector>,
        left: Bond,
        right: Bond,
        rest_bits: usize,
        trunc: &Truncation,
    ) -> Result<Self> {
        let mut all: Vec<(f64, usize, usize)> = sectors
            .iter()
            .enumerate()
            .flat_map(|(si, sec)| sec.s.iter().enumerate().map(move |(i, &v)| (v, si, i)))
            .collect();
        let total_sq: f64 = all.iter().map(|x| x.0 * x.0).sum();
        // descending, ties broken by position for determinism
        all.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let s_max = all.first().map_or(0.0, |x| x.0);
        if s_max <= 0.0 {
            return Err(Error::Integrity("state vanished in a bond decomposition".into()));
        }
        let cut = (trunc.svd_eps * s_max).max(ZERO_FLOOR * s_max);
        let mut kept = 0;
        let mut capped = false;
        for &(v, si, _) in &all {
            if v < cut || v <= 0.0 {
                break;
            }
            if kept == trunc.chi_max {
                capped = true;
                break;
            }
            // singular values inside a sector are sorted, so counts suffice
            sectors[si].keep += 1;
            kept += 1;
        }
        sectors.retain(|s| s.keep > 0);
        let mut values = Vec::with_capacity(kept);
        for sec in &sectors {
            values.extend_from_slice(&sec.s[..sec.keep]);
        }
        let kept_sq: f64 = values.iter().map(|v| v * v).sum();
        let bond = Bond::new(sectors.iter().map(|s| (s.charge, s.keep)).collect());
        Ok(Self { bond, values, kept_sq, total_sq, capped, sectors, left, right, rest_bits })
    }

    /// Relative weight removed by truncation.
    pub fn discarded(&self) -> f64 {
        ((self.total_sq - self.kept_sq) / self.total_sq).max(0.0)
    }

    /// Left tensor `phi · Vh†`, i.e. the unscaled theta projected on the
    /// kept right singular vectors, times `scale`.
    pub fn left_from_phi(&self, phi: &Theta, scale: f64) -> Array3<C64> {
        let mut t = Array3::zeros((self.left.dim(), 2, self.bond.dim()));
        for (mi, sec) in self.sectors.iter().enumerate() {
            let mr = self.bond.range(mi);
            let vh = sec.vh.slice(s![..sec.keep, ..]);
            for rg in &sec.rows {
                let mut acc = Array2::<C64>::zeros((rg.dim, sec.keep));
                for cg in &sec.cols {
                    let c = (rg.n1 << self.rest_bits) | cg.r;
                    if let Some(blk) = phi.blocks.get(&(rg.a, c)) {
                        let v = vh.slice(s![.., cg.offset..cg.offset + cg.dim]);
                        acc += &blk.dot(&v.t().mapv(|z| z.conj()));
                    }
                }
                acc.mapv_inplace(|z| z * scale);
                t.slice_mut(s![self.left.range(rg.a), rg.n1, mr.clone()]).assign(&acc);
            }
        }
        t
    }

    /// Left tensor from `U` (optionally times `S`).
    pub fn left_from_u(&self, times_s: bool) -> Array3<C64> {
        let mut t = Array3::zeros((self.left.dim(), 2, self.bond.dim()));
        for (mi, sec) in self.sectors.iter().enumerate() {
            let mr = self.bond.range(mi);
            for rg in &sec.rows {
                let mut u = sec.u.slice(s![rg.offset..rg.offset + rg.dim, ..sec.keep]).to_owned();
                if times_s {
                    for (mut col, &sv) in u.columns_mut().into_iter().zip(&sec.s) {
                        col.mapv_inplace(|z| z * sv);
                    }
                }
                t.slice_mut(s![self.left.range(rg.a), rg.n1, mr.clone()]).assign(&u);
            }
        }
        t
    }

    /// The right factor `Vh` (optionally `S Vh`) as a theta over the
    /// remaining sites, with the new bond on its left.
    pub fn remainder(&self, times_s: bool) -> Theta {
        let mut blocks = BTreeMap::new();
        for (mi, sec) in self.sectors.iter().enumerate() {
            for cg in &sec.cols {
                let mut v = sec.vh.slice(s![..sec.keep, cg.offset..cg.offset + cg.dim]).to_owned();
                if times_s {
                    for (mut row, &sv) in v.rows_mut().into_iter().zip(&sec.s) {
                        row.mapv_inplace(|z| z * sv);
                    }
                }
                blocks.insert((mi, cg.r), v);
            }
        }
        Theta { sites: self.rest_bits, left: self.bond.clone(), right: self.right.clone(), blocks }
    }
}

/// Thin SVD, falling back to the QR-iteration driver if divide and
/// conquer fails.
pub fn svd(m: ArrayView2<C64>) -> Result<(Array2<C64>, Vec<f64>, Array2<C64>)> {
    if let Ok((Some(u), sv, Some(vh))) = m.svddc(JobSvd::Some) {
        return Ok((u, sv.to_vec(), vh));
    }
    let (u, sv, vh) = m.to_owned().svd(true, true)?;
    let (u, vh) = (u.unwrap(), vh.unwrap());
    let k = sv.len();
    Ok((u.slice(s![.., ..k]).to_owned(), sv.to_vec(), vh.slice(s![..k, ..]).to_owned()))
}
