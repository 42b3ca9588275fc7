//! Multi-index algebra for the moment index set Ω.
//!
//! Ω is the symmetric box `{k : |k_j| <= n, j = 1..d}`. All modules share one
//! linearization convention: multi-indices are stored row-major with axis 1
//! slowest, and the flat map κ enumerates the nonnegative box `{0..n}^d` the
//! same way. Every matrix identity in the solver depends on this ordering, so
//! it is fixed here and nowhere else.

use thiserror::Error;

/// A lag / frequency multi-index `(k_1, ..., k_d)`.
pub type MultiIndex = Vec<i32>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IndexingError {
    #[error("multi-index {k:?} lies outside the box of per-axis order {n}")]
    IndexOutOfOmega { k: MultiIndex, n: usize },
    #[error("dimension must be at least 1")]
    ZeroDimension,
}

/// The symmetric box index set Ω together with its canonical half-set.
///
/// The half-set contains `0` and exactly one representative of each conjugate
/// pair `{k, -k}`: a nonzero `k` is canonical iff its first nonzero component
/// is positive. Hermitian coefficient families (moments, trigonometric
/// polynomial coefficients) are stored on the half-set only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexSet {
    d: usize,
    n: usize,
    half: Vec<MultiIndex>,
    // box offset -> (position in `half` of the canonical representative,
    // whether the stored value must be conjugated)
    lookup: Vec<(u32, bool)>,
}

impl MultiIndexSet {
    pub fn new(d: usize, n: usize) -> Result<Self, IndexingError> {
        if d == 0 {
            return Err(IndexingError::ZeroDimension);
        }
        let side = 2 * n + 1;
        let box_len = side.pow(d as u32);
        let mut half = Vec::with_capacity(box_len.div_ceil(2));
        let mut lookup = vec![(u32::MAX, false); box_len];
        let mut k = vec![-(n as i32); d];
        for slot in lookup.iter_mut() {
            if is_canonical(&k) {
                *slot = (half.len() as u32, false);
                half.push(k.clone());
            }
            increment(&mut k, n);
        }
        // Second pass: point each non-canonical index at its mirror.
        let mut k = vec![-(n as i32); d];
        for flat in 0..box_len {
            if lookup[flat].0 == u32::MAX {
                let neg: MultiIndex = k.iter().map(|c| -c).collect();
                let mirror = box_flat_of(&neg, n, d);
                lookup[flat] = (lookup[mirror].0, true);
            }
            increment(&mut k, n);
        }
        debug_assert_eq!(half[0], vec![0; d]);
        Ok(Self { d, n, half, lookup })
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn order(&self) -> usize {
        self.n
    }

    /// Number of indices in the full box, `(2n+1)^d`.
    pub fn box_len(&self) -> usize {
        self.lookup.len()
    }

    /// Canonical half-set, `0` first; length `((2n+1)^d + 1) / 2`.
    pub fn half(&self) -> &[MultiIndex] {
        &self.half
    }

    pub fn half_len(&self) -> usize {
        self.half.len()
    }

    pub fn contains(&self, k: &[i32]) -> bool {
        k.len() == self.d && k.iter().all(|c| c.unsigned_abs() as usize <= self.n)
    }

    /// Flat offset of `k` in the full box (axis 1 slowest).
    pub fn box_flat(&self, k: &[i32]) -> Result<usize, IndexingError> {
        if !self.contains(k) {
            return Err(IndexingError::IndexOutOfOmega { k: k.to_vec(), n: self.n });
        }
        Ok(box_flat_of(k, self.n, self.d))
    }

    /// Where a Hermitian family stores the value for `k`: position in the
    /// half-set plus whether the stored value must be conjugated first.
    pub fn half_position(&self, k: &[i32]) -> Result<(usize, bool), IndexingError> {
        let flat = self.box_flat(k)?;
        let (pos, conj) = self.lookup[flat];
        Ok((pos as usize, conj))
    }

    /// Iterate the full box in storage order.
    pub fn members(&self) -> impl Iterator<Item = MultiIndex> + '_ {
        let side = 2 * self.n as i32 + 1;
        let d = self.d;
        let n = self.n as i32;
        (0..self.box_len()).map(move |mut flat| {
            let mut k = vec![0i32; d];
            for j in (0..d).rev() {
                k[j] = (flat % side as usize) as i32 - n;
                flat /= side as usize;
            }
            k
        })
    }

    /// `card(N_k)`: how many entries of the structured matrix share the lag
    /// `k`, i.e. `|{(i, j) : κ(i) - κ(j) = k}| = Π_j (n + 1 - |k_j|)`.
    pub fn card_n(&self, k: &[i32]) -> Result<usize, IndexingError> {
        if !self.contains(k) {
            return Err(IndexingError::IndexOutOfOmega { k: k.to_vec(), n: self.n });
        }
        Ok(k.iter()
            .map(|c| self.n + 1 - c.unsigned_abs() as usize)
            .product())
    }

    pub fn kappa(&self) -> FlatIndexMap {
        FlatIndexMap { d: self.d, n: self.n }
    }
}

fn is_canonical(k: &[i32]) -> bool {
    match k.iter().find(|c| **c != 0) {
        None => true,
        Some(c) => *c > 0,
    }
}

fn box_flat_of(k: &[i32], n: usize, _d: usize) -> usize {
    let side = 2 * n + 1;
    let mut flat = 0usize;
    for c in k {
        flat = flat * side + (c + n as i32) as usize;
    }
    flat
}

fn increment(k: &mut [i32], n: usize) {
    let n = n as i32;
    for j in (0..k.len()).rev() {
        if k[j] < n {
            k[j] += 1;
            return;
        }
        k[j] = -n;
    }
}

/// The bijection κ between flat positions `0..(n+1)^d` and the nonnegative
/// box `{0..n}^d`, row-major with axis 1 slowest. This is the ordering of the
/// Kronecker-product basis vector, so basis evaluation and matrix assembly
/// must both use it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlatIndexMap {
    d: usize,
    n: usize,
}

impl FlatIndexMap {
    pub fn new(d: usize, n: usize) -> Result<Self, IndexingError> {
        if d == 0 {
            return Err(IndexingError::ZeroDimension);
        }
        Ok(Self { d, n })
    }

    /// Number of flat positions, `(n+1)^d`.
    pub fn len(&self) -> usize {
        (self.n + 1).pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn kappa(&self, mut i: usize) -> MultiIndex {
        debug_assert!(i < self.len());
        let side = self.n + 1;
        let mut k = vec![0i32; self.d];
        for j in (0..self.d).rev() {
            k[j] = (i % side) as i32;
            i /= side;
        }
        k
    }

    /// `κ(i) - κ(j)`, always a member of Ω.
    pub fn pair_difference(&self, i: usize, j: usize) -> MultiIndex {
        let a = self.kappa(i);
        let b = self.kappa(j);
        a.iter().zip(&b).map(|(x, y)| x - y).collect()
    }
}

pub fn negate(k: &[i32]) -> MultiIndex {
    k.iter().map(|c| -c).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_set_sizes() {
        for (d, n) in [(1, 1), (1, 3), (2, 1), (2, 2), (3, 1), (3, 2)] {
            let omega = MultiIndexSet::new(d, n).unwrap();
            let box_len = (2 * n + 1).pow(d as u32);
            assert_eq!(omega.box_len(), box_len);
            assert_eq!(omega.half_len(), box_len.div_ceil(2));
            assert_eq!(omega.half()[0], vec![0i32; d]);
        }
    }

    #[test]
    fn half_set_covers_conjugate_pairs() {
        let omega = MultiIndexSet::new(2, 2).unwrap();
        for k in omega.members() {
            let (pos, conj) = omega.half_position(&k).unwrap();
            let rep = &omega.half()[pos];
            if conj {
                assert_eq!(*rep, negate(&k));
            } else {
                assert_eq!(*rep, k);
            }
        }
    }

    #[test]
    fn card_n_enumeration_matches_product_formula() {
        // Brute-force the pairs (i, j) with κ(i) − κ(j) = k for small boxes.
        for (d, n) in [(1, 1), (1, 3), (2, 1), (2, 2), (3, 1), (3, 3)] {
            let omega = MultiIndexSet::new(d, n).unwrap();
            let kappa = omega.kappa();
            let mut counts = vec![0usize; omega.box_len()];
            for i in 0..kappa.len() {
                for j in 0..kappa.len() {
                    let diff = kappa.pair_difference(i, j);
                    counts[omega.box_flat(&diff).unwrap()] += 1;
                }
            }
            let mut total = 0usize;
            for k in omega.members() {
                let formula = omega.card_n(&k).unwrap();
                assert_eq!(counts[omega.box_flat(&k).unwrap()], formula, "k = {k:?}");
                assert_eq!(formula, omega.card_n(&negate(&k)).unwrap());
                total += formula;
            }
            // Every matrix entry lands in exactly one N_k.
            assert_eq!(total, (n + 1).pow(2 * d as u32));
        }
    }

    #[test]
    fn card_n_examples() {
        let omega = MultiIndexSet::new(1, 1).unwrap();
        assert_eq!(omega.card_n(&[0]).unwrap(), 2);
        assert_eq!(omega.card_n(&[1]).unwrap(), 1);
        let omega = MultiIndexSet::new(2, 2).unwrap();
        assert_eq!(omega.card_n(&[0, 0]).unwrap(), 9);
    }

    #[test]
    fn card_n_rejects_outside_box() {
        let omega = MultiIndexSet::new(2, 1).unwrap();
        assert!(matches!(
            omega.card_n(&[2, 0]),
            Err(IndexingError::IndexOutOfOmega { .. })
        ));
    }

    #[test]
    fn pair_difference_examples() {
        let kappa = FlatIndexMap::new(1, 2).unwrap();
        assert_eq!(kappa.pair_difference(2, 2), vec![0]);
        assert_eq!(kappa.pair_difference(2, 0), vec![2]);

        // d = 2, n = 1: κ enumerates (0,0), (0,1), (1,0), (1,1).
        let kappa = FlatIndexMap::new(2, 1).unwrap();
        assert_eq!(kappa.kappa(0), vec![0, 0]);
        assert_eq!(kappa.kappa(1), vec![0, 1]);
        assert_eq!(kappa.kappa(2), vec![1, 0]);
        assert_eq!(kappa.kappa(3), vec![1, 1]);
        assert_eq!(kappa.pair_difference(3, 0), vec![1, 1]);
    }

    #[test]
    fn members_order_is_row_major_axis1_slowest() {
        let omega = MultiIndexSet::new(2, 1).unwrap();
        let members: Vec<_> = omega.members().collect();
        assert_eq!(members[0], vec![-1, -1]);
        assert_eq!(members[1], vec![-1, 0]);
        assert_eq!(members[3], vec![0, -1]);
        assert_eq!(members[8], vec![1, 1]);
        for k in &members {
            assert_eq!(omega.box_flat(k).unwrap(), members.iter().position(|m| m == k).unwrap());
        }
    }
}
