//! The W = 0 chain through the Jordan–Wigner mapping to free fermions.
//! A Gaussian state is its one-body correlation matrix `C_ij = <c†_i c_j>`,
//! which evolves by unitary conjugation with no time-step error.
//!
//! Only observables that the Jordan–Wigner string leaves untouched are
//! offered: densities and nearest-neighbour currents.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, EigValsh, UPLO};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::model::{single_particle_matrix, ModelParams};
use crate::observables::half_current_bonds;

const DENSITY_SLACK: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    pub c: Array2<C64>,
}

fn require_free(params: &ModelParams) -> Result<()> {
    if params.w != 0.0 {
        return Err(Error::EngineDomain { w: params.w });
    }
    Ok(())
}

impl CorrelationMatrix {
    pub fn l(&self) -> usize {
        self.c.nrows()
    }

    /// Product state with `C_ii = occ_i`.
    pub fn from_occupations(occ: &[u8]) -> Result<Self> {
        if let Some(bad) = occ.iter().find(|&&o| o > 1) {
            return Err(Error::InvalidParams(format!("occupation {bad} is not 0 or 1")));
        }
        let l = occ.len();
        let mut c = Array2::zeros((l, l));
        for (i, &o) in occ.iter().enumerate() {
            c[[i, i]] = C64::new(o as f64, 0.0);
        }
        Ok(Self { c })
    }

    /// Box occupying sites `i1..=i2` (1-based) of an `l`-site chain.
    pub fn box_state(l: usize, i1: usize, i2: usize) -> Result<Self> {
        if i1 < 1 || i2 < i1 || i2 > l {
            return Err(Error::InvalidParams(format!("box [{i1}, {i2}] outside 1..{l}")));
        }
        let occ: Vec<u8> = (1..=l).map(|i| u8::from(i >= i1 && i <= i2)).collect();
        Self::from_occupations(&occ)
    }

    /// Filled Fermi sea of the `n` lowest single-particle modes.
    pub fn ground_state(params: &ModelParams, n: usize) -> Result<Self> {
        require_free(params)?;
        if n > params.l {
            return Err(Error::InvalidParams(format!("N = {n} > L = {}", params.l)));
        }
        let (_, v) = single_particle_matrix(params).eigh(UPLO::Lower)?;
        let phi = v.slice(ndarray::s![.., ..n]).to_owned();
        let c = phi.dot(&phi.t()).mapv(|x| C64::new(x, 0.0));
        Ok(Self { c })
    }

    pub fn trace(&self) -> f64 {
        self.c.diag().iter().map(|z| z.re).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let ct = self.c.t().mapv(|z| z.conj());
        (&self.c - &ct).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn eigenvalues(&self) -> Result<Array1<f64>> {
        Ok(self.c.eigvalsh(UPLO::Lower)?)
    }

    /// `n_i = Re C_ii`; values outside `[0, 1]` beyond roundoff are an
    /// integrity failure.
    pub fn density(&self) -> Result<Vec<f64>> {
        self.c
            .diag()
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let n = z.re;
                if !(-DENSITY_SLACK..=1.0 + DENSITY_SLACK).contains(&n) {
                    return Err(Error::Integrity(format!("density {n} at site {} out of [0, 1]", i + 1)));
                }
                Ok(n.clamp(0.0, 1.0))
            })
            .collect()
    }

    /// `Σ 2J Im C_{k,k+1}` over the right-half bonds.
    pub fn half_current(&self, j: f64) -> f64 {
        half_current_bonds(self.l()).map(|k| 2.0 * j * self.c[[k, k + 1]].im).sum()
    }
}

/// Precomputed single-particle propagator for repeated evolution from a
/// fixed initial matrix.
#[derive(Clone, Debug)]
pub struct FreeEvolution {
    energies: Array1<f64>,
    modes: Array2<C64>,
    c0: CorrelationMatrix,
}

impl FreeEvolution {
    pub fn new(c0: CorrelationMatrix, params: &ModelParams) -> Result<Self> {
        require_free(params)?;
        if c0.l() != params.l {
            return Err(Error::InvalidParams("correlation matrix size differs from L".into()));
        }
        let (energies, v) = single_particle_matrix(params).eigh(UPLO::Lower)?;
        Ok(Self { energies, modes: v.mapv(|x| C64::new(x, 0.0)), c0 })
    }

    /// `C(t) = U* C0 U^T` with `U = exp(-i h t)`, which is `V C0 V†` for
    /// `V = exp(+i h t)`.
    pub fn at(&self, t: f64) -> CorrelationMatrix {
        if t == 0.0 {
            return self.c0.clone();
        }
        let phases = self.energies.mapv(|e| C64::from_polar(1.0, e * t));
        // V = modes diag(exp(+i e t)) modes^T
        let scaled = &self.modes * &phases.view().insert_axis(ndarray::Axis(0));
        let v = scaled.dot(&self.modes.t());
        let vh = v.t().mapv(|z| z.conj());
        CorrelationMatrix { c: v.dot(&self.c0.c).dot(&vh) }
    }
}

pub fn evolve_correlation(c0: &CorrelationMatrix, params: &ModelParams, t: f64) -> Result<CorrelationMatrix> {
    Ok(FreeEvolution::new(c0.clone(), params)?.at(t))
}
