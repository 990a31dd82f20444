//! Dense complex tensors of rank 1..=4 over dimension d, with full and
//! partial symmetrization.

use faer::c64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub d: usize,
    pub rank: usize,
    /// Row-major: the last index varies fastest.
    pub data: Vec<c64>,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = vec![];
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

impl Tensor {
    pub fn zeros(d: usize, rank: usize) -> Result<Self> {
        if !(1..=4).contains(&rank) {
            return Err(Error::RankOutOfRange(rank));
        }
        Ok(Tensor { d, rank, data: vec![c64::new(0.0, 0.0); d.pow(rank as u32)] })
    }

    pub fn from_fn(d: usize, rank: usize, f: impl Fn(&[usize]) -> c64) -> Result<Self> {
        let mut t = Self::zeros(d, rank)?;
        for flat in 0..t.data.len() {
            let idx = t.unflatten(flat);
            t.data[flat] = f(&idx);
        }
        Ok(t)
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.d + i)
    }

    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.rank];
        for slot in idx.iter_mut().rev() {
            *slot = flat % self.d;
            flat /= self.d;
        }
        idx
    }

    pub fn get(&self, idx: &[usize]) -> c64 {
        self.data[self.flatten(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: c64) {
        let f = self.flatten(idx);
        self.data[f] = v;
    }

    /// Average over the permutations of index positions `from..rank`.
    fn symmetrize_from(&self, from: usize) -> Tensor {
        let perms = permutations(self.rank - from);
        let w = 1.0 / perms.len() as f64;
        let mut out = self.clone();
        for flat in 0..self.data.len() {
            let idx = self.unflatten(flat);
            let mut acc = c64::new(0.0, 0.0);
            for p in &perms {
                let mut j = idx.clone();
                for (slot, &src) in p.iter().enumerate() {
                    j[from + slot] = idx[from + src];
                }
                acc += self.get(&j);
            }
            out.data[flat] = acc * w;
        }
        out
    }

    /// Average over all index permutations.
    pub fn symmetrize_full(&self) -> Tensor {
        self.symmetrize_from(0)
    }

    /// Average over permutations of all but the first index.
    pub fn symmetrize_partial(&self) -> Tensor {
        if self.rank < 2 {
            return self.clone();
        }
        self.symmetrize_from(1)
    }

    /// sum over indices of t[a1..ar] k[a1]...k[ar].
    pub fn contract(&self, k: &[f64]) -> c64 {
        (0..self.data.len())
            .map(|flat| {
                let w: f64 = self.unflatten(flat).iter().map(|&a| k[a]).product();
                self.data[flat] * w
            })
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Tensor {
        Tensor { d: self.d, rank: self.rank, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        Tensor { d: self.d, rank: self.rank, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> c64 {
        c64::new(re, 0.0)
    }

    #[test]
    fn rank2_full_is_transpose_average() {
        let t = Tensor::from_fn(2, 2, |i| c((3 * i[0] + i[1]) as f64)).unwrap();
        let s = t.symmetrize_full();
        for a in 0..2 {
            for b in 0..2 {
                assert_eq!(s.get(&[a, b]), (t.get(&[a, b]) + t.get(&[b, a])) * 0.5);
            }
        }
    }

    #[test]
    fn partial_rank3_basis_tensor() {
        let mut e = Tensor::zeros(3, 3).unwrap();
        e.set(&[0, 1, 2], c(1.0));
        let s = e.symmetrize_partial();
        assert_eq!(s.get(&[0, 1, 2]), c(0.5));
        assert_eq!(s.get(&[0, 2, 1]), c(0.5));
        assert_eq!(s.data.iter().filter(|x| x.norm() > 0.0).count(), 2);
    }

    #[test]
    fn rank_out_of_range() {
        assert!(matches!(Tensor::zeros(2, 5), Err(Error::RankOutOfRange(5))));
        assert!(matches!(Tensor::zeros(2, 0), Err(Error::RankOutOfRange(0))));
    }

    fn tensor_strategy() -> impl Strategy<Value = Tensor> {
        (1usize..=3, 1usize..=4).prop_flat_map(|(d, r)| {
            proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), d.pow(r as u32)).prop_map(move |v| Tensor {
                d,
                rank: r,
                data: v.into_iter().map(|(a, b)| c64::new(a, b)).collect(),
            })
        })
    }

    proptest! {
        #[test]
        fn full_symmetrization_is_idempotent_and_invariant(t in tensor_strategy()) {
            let s = t.symmetrize_full();
            prop_assert!(s.symmetrize_full().sub(&s).norm() < 1e-12);
            for flat in 0..s.data.len() {
                let mut idx = s.unflatten(flat);
                idx.reverse();
                prop_assert!((s.get(&idx) - s.data[flat]).norm() < 1e-12);
            }
        }

        #[test]
        fn partial_symmetrization_is_idempotent(t in tensor_strategy()) {
            let s = t.symmetrize_partial();
            prop_assert!(s.symmetrize_partial().sub(&s).norm() < 1e-12);
            prop_assert!(s.symmetrize_full().sub(&t.symmetrize_full()).norm() < 1e-12);
        }

        #[test]
        fn contraction_sees_only_the_symmetric_part(t in tensor_strategy(), k in proptest::collection::vec(-2.0f64..2.0, 3)) {
            let k = &k[..t.d];
            prop_assert!((t.contract(k) - t.symmetrize_full().contract(k)).norm() < 1e-10);
        }
    }
}
