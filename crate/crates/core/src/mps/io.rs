use ndarray::Array3;

use super::{Bond, MpsState, Truncation};
use crate::codec::{Decoder, Encoder};
use crate::error::{Error, Result};

impl MpsState {
    pub fn encode(&self, e: &mut Encoder) {
        e.usize(self.l);
        e.usize(self.n);
        e.f64(self.discarded_weight);
        e.usize(self.truncation.chi_max);
        e.f64(self.truncation.svd_eps);
        for (j, bond) in self.bonds.iter().enumerate() {
            e.usize(bond.sectors());
            for (q, d) in bond.iter() {
                e.i64(q as i64);
                e.usize(d);
            }
            e.f64s(&self.schmidt[j]);
        }
        for t in &self.tensors {
            e.c64s(t.iter());
        }
    }

    pub fn decode(d: &mut Decoder) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(format!("invalid state: {m}"));
        let l = d.usize()?;
        let n = d.usize()?;
        if l == 0 || n > l || l > 1 << 20 {
            return Err(bad("chain size"));
        }
        let discarded_weight = d.f64()?;
        let truncation = Truncation { chi_max: d.usize()?, svd_eps: d.f64()? };
        let mut bonds = Vec::with_capacity(l + 1);
        let mut schmidt = Vec::with_capacity(l + 1);
        for _ in 0..=l {
            let k = d.usize()?;
            let mut sectors = Vec::new();
            let mut last = None;
            for _ in 0..k {
                let q = i32::try_from(d.i64()?).map_err(|_| bad("charge"))?;
                let dim = d.usize()?;
                if dim == 0 || last.is_some_and(|p| p >= q) {
                    return Err(bad("bond sectors"));
                }
                last = Some(q);
                sectors.push((q, dim));
            }
            let bond = Bond::new(sectors);
            let lam = d.f64s()?;
            if lam.len() != bond.dim() {
                return Err(bad("Schmidt values"));
            }
            bonds.push(bond);
            schmidt.push(lam);
        }
        let mut tensors = Vec::with_capacity(l);
        for j in 0..l {
            let data = d.c64s()?;
            let shape = (bonds[j].dim(), 2, bonds[j + 1].dim());
            tensors.push(Array3::from_shape_vec(shape, data).map_err(|_| bad("tensor shape"))?);
        }
        Ok(Self { l, n, tensors, bonds, schmidt, discarded_weight, truncation })
    }
}
