//! The hard-core boson chain with hopping `J` and a three-body term `W`:
//!
//! ```text
//! H = -J Σ_i (b†_i b_{i+1} + h.c.) + W Σ_i n_{i-1} n_i n_{i+1}
//! ```
//!
//! on `L` sites with open boundaries. Every engine builds its Hamiltonian
//! pieces from [`ModelParams`] through the factories in this module.
//!
//! Two-site gates use the occupation basis ordered `(n_left, n_right)`
//! lexicographically: index 0 = `00`, 1 = `01`, 2 = `10`, 3 = `11`.
//! Three-site phases are indexed by `4 n_{i-1} + 2 n_i + n_{i+1}`.

use ndarray::{Array2, Array1};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fock::FockBasis;

/// Largest sector dimension [`dense_hamiltonian`] will materialize.
pub const DENSE_DIM_CAP: usize = 6000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    /// Hopping amplitude, the energy unit.
    pub j: f64,
    /// Three-body coupling.
    pub w: f64,
    /// Number of sites.
    pub l: usize,
}

impl ModelParams {
    pub fn new(j: f64, w: f64, l: usize) -> Result<Self> {
        let p = Self { j, w, l };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l < 3 {
            return Err(Error::InvalidParams(format!("L = {} < 3", self.l)));
        }
        if !(self.j > 0.0 && self.j.is_finite()) {
            return Err(Error::InvalidParams(format!("J = {} must be positive", self.j)));
        }
        if !(self.w >= 0.0 && self.w.is_finite()) {
            return Err(Error::InvalidParams(format!("W = {} must be non-negative", self.w)));
        }
        Ok(())
    }

    /// Boundary conditions are always open.
    pub fn boundary(&self) -> &'static str {
        "open"
    }

    /// Chain center `L/2 + 1/2` in 1-based site coordinates.
    pub fn center(&self) -> f64 {
        self.l as f64 / 2.0 + 0.5
    }
}

/// `exp(-i dt h_bond)` for one hopping bond.
#[derive(Clone, Debug)]
pub struct TwoSiteGate {
    pub matrix: Array2<C64>,
    pub dt: f64,
}

impl TwoSiteGate {
    pub fn identity() -> Self {
        Self { matrix: Array2::eye(4), dt: 0.0 }
    }
}

/// Diagonal of `exp(-i dt W n_{i-1} n_i n_{i+1})`.
#[derive(Clone, Copy, Debug)]
pub struct ThreeSitePhases {
    pub phases: [C64; 8],
    pub dt: f64,
}

impl ThreeSitePhases {
    /// True when every phase is exactly one.
    pub fn is_trivial(&self) -> bool {
        self.phases.iter().all(|p| *p == C64::new(1.0, 0.0))
    }
}

pub fn hopping_gate(params: &ModelParams, dt: f64) -> TwoSiteGate {
    // h_bond = -J σ_x on {01, 10}, so exp(-i dt h) = cos(J dt) + i sin(J dt) σ_x.
    let (s, c) = (params.j * dt).sin_cos();
    let mut m = Array2::<C64>::zeros((4, 4));
    m[[0, 0]] = C64::new(1.0, 0.0);
    m[[3, 3]] = C64::new(1.0, 0.0);
    m[[1, 1]] = C64::new(c, 0.0);
    m[[2, 2]] = C64::new(c, 0.0);
    m[[1, 2]] = C64::new(0.0, s);
    m[[2, 1]] = C64::new(0.0, s);
    TwoSiteGate { matrix: m, dt }
}

pub fn interaction_phases(params: &ModelParams, dt: f64) -> ThreeSitePhases {
    let mut phases = [C64::new(1.0, 0.0); 8];
    if params.w != 0.0 {
        phases[7] = C64::from_polar(1.0, -params.w * dt);
    }
    ThreeSitePhases { phases, dt }
}

/// Number of occupied consecutive triples in an occupation bitmask
/// (bit `k` is site `k + 1`).
pub fn occupied_triples(config: u64, l: usize) -> u32 {
    if l < 3 {
        return 0;
    }
    let mask = (1u64 << (l - 2)) - 1;
    (config & (config >> 1) & (config >> 2) & mask).count_ones()
}

/// Hamiltonian restricted to a fixed-N sector, stored row-compressed.
/// All matrix elements are real.
#[derive(Clone, Debug)]
pub struct SparseHamiltonian {
    pub dim: usize,
    pub diagonal: Vec<f64>,
    /// Off-diagonal entries per row as (column, value).
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl SparseHamiltonian {
    pub fn build(params: &ModelParams, basis: &FockBasis) -> Result<Self> {
        if basis.l() != params.l {
            return Err(Error::InvalidParams(format!(
                "basis has L = {} but the model has L = {}",
                basis.l(),
                params.l
            )));
        }
        let l = params.l;
        let dim = basis.dim();
        let mut diagonal = Vec::with_capacity(dim);
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for &s in basis.states() {
            diagonal.push(params.w * occupied_triples(s, l) as f64);
            for k in 0..l - 1 {
                let pair = (s >> k) & 0b11;
                if pair == 0b01 || pair == 0b10 {
                    let t = s ^ (0b11 << k);
                    let col = basis.index_of(t).expect("hop stays in the sector");
                    cols.push(col as u32);
                    vals.push(-params.j);
                }
            }
            row_ptr.push(cols.len());
        }
        Ok(Self { dim, diagonal, row_ptr, cols, vals })
    }

    /// `out = H x`.
    pub fn apply(&self, x: &[C64], out: &mut [C64]) {
        for r in 0..self.dim {
            let mut acc = x[r] * self.diagonal[r];
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += x[self.cols[p] as usize] * self.vals[p];
            }
            out[r] = acc;
        }
    }

    pub fn expectation(&self, x: &[C64]) -> f64 {
        let mut hx = vec![C64::new(0.0, 0.0); self.dim];
        self.apply(x, &mut hx);
        x.iter().zip(&hx).map(|(a, b)| (a.conj() * b).re).sum()
    }

    pub fn to_dense(&self) -> Result<Array2<f64>> {
        if self.dim > DENSE_DIM_CAP {
            return Err(Error::Capacity {
                l: 0,
                n: 0,
                dim: self.dim as u128,
                cap: DENSE_DIM_CAP as u128,
            });
        }
        let mut h = Array2::zeros((self.dim, self.dim));
        for r in 0..self.dim {
            h[[r, r]] = self.diagonal[r];
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                h[[r, self.cols[p] as usize]] += self.vals[p];
            }
        }
        Ok(h)
    }
}

/// Dense Hamiltonian on a fixed-N sector. Refuses sectors larger than
/// [`DENSE_DIM_CAP`].
pub fn dense_hamiltonian(params: &ModelParams, basis: &FockBasis) -> Result<Array2<f64>> {
    if basis.dim() > DENSE_DIM_CAP {
        return Err(Error::Capacity {
            l: basis.l(),
            n: basis.n(),
            dim: basis.dim() as u128,
            cap: DENSE_DIM_CAP as u128,
        });
    }
    SparseHamiltonian::build(params, basis)?.to_dense()
}

/// One-body hopping matrix for the W = 0 chain: zero diagonal, `-J` on the
/// first off-diagonals.
pub fn single_particle_matrix(params: &ModelParams) -> Array2<f64> {
    let l = params.l;
    let mut h = Array2::zeros((l, l));
    for i in 0..l - 1 {
        h[[i, i + 1]] = -params.j;
        h[[i + 1, i]] = -params.j;
    }
    h
}

/// `ε_k = -2J cos k` with `k = lπ/(L+1)`, `l = 1..L`, ascending.
pub fn dispersion(j: f64, l: usize) -> Array1<f64> {
    let mut e: Vec<f64> = (1..=l)
        .map(|m| -2.0 * j * (m as f64 * std::f64::consts::PI / (l as f64 + 1.0)).cos())
        .collect();
    e.sort_by(f64::total_cmp);
    Array1::from(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray_linalg::{Eigh, UPLO};

    fn params(w: f64, l: usize) -> ModelParams {
        ModelParams::new(1.0, w, l).unwrap()
    }

    fn max_abs(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ModelParams::new(1.0, 0.0, 2).is_err());
        assert!(ModelParams::new(0.0, 0.0, 5).is_err());
        assert!(ModelParams::new(1.0, -0.5, 5).is_err());
        assert_eq!(params(1.0, 4).boundary(), "open");
    }

    #[test]
    fn hopping_gate_zero_step_is_identity() {
        let g = hopping_gate(&params(0.0, 4), 0.0);
        assert_eq!(max_abs(&g.matrix, &Array2::eye(4)), 0.0);
    }

    #[test]
    fn hopping_gate_rotation_amplitudes() {
        let dt = 0.37;
        let g = hopping_gate(&params(0.0, 4), dt);
        // column = input, row = output; |01> is index 1, |10> index 2
        assert!((g.matrix[[2, 1]] - C64::new(0.0, dt.sin())).norm() < 1e-15);
        assert!((g.matrix[[1, 1]] - C64::new(dt.cos(), 0.0)).norm() < 1e-15);

        let g = hopping_gate(&params(0.0, 4), std::f64::consts::FRAC_PI_2);
        assert!((g.matrix[[2, 1]] - C64::new(0.0, 1.0)).norm() < 1e-12);
        assert!(g.matrix[[1, 1]].norm() < 1e-12);
    }

    #[test]
    fn hopping_gate_is_unitary_and_a_group() {
        let p = params(0.0, 4);
        for &(a, b) in &[(0.1, 0.25), (-0.7, 1.3), (2.0, 3.5)] {
            let ga = hopping_gate(&p, a).matrix;
            let gb = hopping_gate(&p, b).matrix;
            let gab = hopping_gate(&p, a + b).matrix;
            let gh = ga.t().mapv(|z| z.conj());
            assert!(max_abs(&gh.dot(&ga), &Array2::eye(4)) < 1e-12);
            assert!(max_abs(&ga.dot(&gb), &gab) < 1e-12);
        }
    }

    #[test]
    fn interaction_phases_entries() {
        let one = C64::new(1.0, 0.0);
        let ph = interaction_phases(&params(0.0, 4), 0.1);
        assert!(ph.phases.iter().all(|p| *p == one));
        assert!(ph.is_trivial());

        let ph = interaction_phases(&params(1.0, 4), 0.1);
        assert!((ph.phases[7] - C64::from_polar(1.0, -0.1)).norm() < 1e-15);

        let ph = interaction_phases(&params(3.0, 4), 0.1);
        assert!((ph.phases[7] - C64::from_polar(1.0, -0.3)).norm() < 1e-15);
        assert!(ph.phases[..7].iter().all(|p| *p == one));

        let back = interaction_phases(&params(3.0, 4), -0.1);
        for (a, b) in ph.phases.iter().zip(&back.phases) {
            assert!((a * b - one).norm() < 1e-15);
            assert!((a.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn dense_hamiltonian_small_sectors() {
        let h = dense_hamiltonian(&params(2.5, 3), &FockBasis::new(3, 3).unwrap()).unwrap();
        assert_eq!(h.dim(), (1, 1));
        assert_eq!(h[[0, 0]], 2.5);

        let h = dense_hamiltonian(&params(2.5, 3), &FockBasis::new(3, 1).unwrap()).unwrap();
        // states 001, 010, 100 = sites 1, 2, 3
        let expect = ndarray::arr2(&[[0.0, -1.0, 0.0], [-1.0, 0.0, -1.0], [0.0, -1.0, 0.0]]);
        assert_eq!(h, expect);
    }

    /// Builds H by summing elementary operators on the full 2^L space and
    /// projecting to the sector.
    fn operator_sum_hamiltonian(p: &ModelParams, basis: &FockBasis) -> Array2<f64> {
        let l = p.l;
        let full = 1usize << l;
        let mut big = Array2::<f64>::zeros((full, full));
        for s in 0..full {
            for i in 0..l - 1 {
                // b†_i b_{i+1}: move particle from i+1 to i
                if (s >> (i + 1)) & 1 == 1 && (s >> i) & 1 == 0 {
                    let t = s ^ (1 << i) ^ (1 << (i + 1));
                    big[[t, s]] += -p.j;
                }
                // b_i b†_{i+1}
                if (s >> i) & 1 == 1 && (s >> (i + 1)) & 1 == 0 {
                    let t = s ^ (1 << i) ^ (1 << (i + 1));
                    big[[t, s]] += -p.j;
                }
            }
            for i in 1..l - 1 {
                let n = |k: usize| ((s >> k) & 1) as f64;
                big[[s, s]] += p.w * n(i - 1) * n(i) * n(i + 1);
            }
        }
        let d = basis.dim();
        Array2::from_shape_fn((d, d), |(r, c)| {
            big[[basis.states()[r] as usize, basis.states()[c] as usize]]
        })
    }

    #[test]
    fn dense_hamiltonian_matches_operator_sum() {
        for &(l, n, w) in &[(4, 2, 1.3), (5, 3, 2.0), (6, 4, 0.7), (7, 5, 3.0)] {
            let p = params(w, l);
            let basis = FockBasis::new(l, n).unwrap();
            let h = dense_hamiltonian(&p, &basis).unwrap();
            assert_eq!(h, operator_sum_hamiltonian(&p, &basis));
            assert_eq!(h, h.t());
        }
        // |0110> has no triple, |1110> has one
        let basis = FockBasis::new(4, 3).unwrap();
        let h = dense_hamiltonian(&params(1.7, 4), &basis).unwrap();
        let i = basis.index_of(0b0111).unwrap();
        assert_eq!(h[[i, i]], 1.7);
        let basis = FockBasis::new(4, 2).unwrap();
        let h = dense_hamiltonian(&params(1.7, 4), &basis).unwrap();
        let i = basis.index_of(0b0110).unwrap();
        assert_eq!(h[[i, i]], 0.0);
    }

    #[test]
    fn single_particle_spectrum_matches_dispersion() {
        for l in [2usize, 3, 7, 20, 41] {
            let p = ModelParams { j: 1.0, w: 0.0, l };
            let (e, _) = single_particle_matrix(&p).eigh(UPLO::Lower).unwrap();
            let eps = dispersion(1.0, l);
            for (a, b) in e.iter().zip(eps.iter()) {
                assert!((a - b).abs() < 1e-10, "L={l}: {a} vs {b}");
            }
            for k in 0..l {
                assert!((e[k] + e[l - 1 - k]).abs() < 1e-10);
            }
        }
        let p = ModelParams { j: 1.0, w: 0.0, l: 3 };
        let (e, _) = single_particle_matrix(&p).eigh(UPLO::Lower).unwrap();
        let r2 = 2f64.sqrt();
        assert!((e[0] + r2).abs() < 1e-12 && e[1].abs() < 1e-12 && (e[2] - r2).abs() < 1e-12);
    }

    #[test]
    fn one_particle_sector_spectrum_equals_single_particle() {
        let p = params(0.0, 9);
        let basis = FockBasis::new(9, 1).unwrap();
        let (e1, _) = dense_hamiltonian(&p, &basis).unwrap().eigh(UPLO::Lower).unwrap();
        let (e2, _) = single_particle_matrix(&p).eigh(UPLO::Lower).unwrap();
        for (a, b) in e1.iter().zip(e2.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
