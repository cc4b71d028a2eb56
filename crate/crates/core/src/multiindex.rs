//! Multi-indices and the chain rule for derivatives through a linear change of variables.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// A multi-index `β ∈ Z_+^d`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    /// The unit multi-index along `axis`.
    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut v = vec![0; dim];
        v[axis] = 1;
        MultiIndex(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Total order `[β] = β_1 + ... + β_d`.
    pub fn order(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&b| factorial(b)).product()
    }

    /// All multi-indices of total order exactly `order` in `dim` dimensions,
    /// in lexicographically decreasing order of the first component.
    pub fn all_of_order(dim: usize, order: usize) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut cur = vec![0; dim];
        fill(&mut cur, 0, order, &mut out);
        out
    }

    /// All multi-indices with `lo <= [β] <= hi`.
    pub fn all_in_range(dim: usize, lo: usize, hi: usize) -> Vec<MultiIndex> {
        (lo..=hi).flat_map(|k| Self::all_of_order(dim, k)).collect()
    }
}

fn fill(cur: &mut Vec<usize>, axis: usize, remaining: usize, out: &mut Vec<MultiIndex>) {
    if axis + 1 == cur.len() {
        cur[axis] = remaining;
        out.push(MultiIndex(cur.clone()));
        return;
    }
    if cur.is_empty() {
        return;
    }
    for v in (0..=remaining).rev() {
        cur[axis] = v;
        fill(cur, axis + 1, remaining - v, out);
    }
    cur[axis] = 0;
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

/// Expands `D^β_y [f(B y + c)]` into a combination of derivatives of `f`
/// evaluated at `B y + c`.
///
/// Each `∂/∂y_i` acts as `Σ_l B[l,i] ∂_l`, so the result is the product
/// over axes `i` of `(Σ_l B[l,i] ∂_l)^{β_i}` written in the monomial basis.
pub fn chain_rule_expansion(b: &DMatrix<f64>, beta: &MultiIndex) -> Vec<(MultiIndex, f64)> {
    let d = b.nrows();
    let mut acc: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    acc.insert(vec![0; d], 1.0);
    for (i, &bi) in beta.0.iter().enumerate() {
        for _ in 0..bi {
            let mut next: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
            for (alpha, c) in &acc {
                for l in 0..d {
                    let w = b[(l, i)];
                    if w == 0.0 {
                        continue;
                    }
                    let mut a = alpha.clone();
                    a[l] += 1;
                    *next.entry(a).or_insert(0.0) += c * w;
                }
            }
            acc = next;
        }
    }
    acc.into_iter()
        .filter(|(_, c)| *c != 0.0)
        .map(|(a, c)| (MultiIndex(a), c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerates_orders() {
        assert_eq!(MultiIndex::all_of_order(1, 3), vec![MultiIndex(vec![3])]);
        let two = MultiIndex::all_of_order(2, 2);
        assert_eq!(two.len(), 3);
        assert!(two.iter().all(|b| b.order() == 2));
        // C(k+d-1, d-1) indices of order k
        assert_eq!(MultiIndex::all_of_order(3, 4).len(), 15);
        assert_eq!(MultiIndex::all_in_range(2, 0, 2).len(), 6);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(4, 0), 1.0);
        assert_eq!(binomial(3, 4), 0.0);
    }

    #[test]
    fn chain_rule_diagonal() {
        let b = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.25]);
        let e = chain_rule_expansion(&b, &MultiIndex(vec![2, 1]));
        assert_eq!(e, vec![(MultiIndex(vec![2, 1]), 0.25 * 0.25)]);
    }

    #[test]
    fn chain_rule_rotation_matches_polynomial() {
        // f(u,v) = u^2 v, y -> B y; check D_{y1} at a point against the expansion.
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, 3.0]);
        let e = chain_rule_expansion(&b, &MultiIndex(vec![1, 0]));
        // d/dy1 = B[0,0] ∂_u + B[1,0] ∂_v
        let mut map: BTreeMap<_, _> = e.into_iter().collect();
        assert_eq!(map.remove(&MultiIndex(vec![1, 0])), Some(1.0));
        assert_eq!(map.remove(&MultiIndex(vec![0, 1])), Some(-1.0));
        assert!(map.is_empty());
    }
}
