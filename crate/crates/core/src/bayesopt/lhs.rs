use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::rng::SeedRng;

/// `n` points in `[0,1)^d`, one per equal-width bin in every dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LhsDesign {
    pub points: Vec<Vec<f64>>,
}

impl LhsDesign {
    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// True if every dimension has exactly one point per bin.
    pub fn is_stratified(&self) -> bool {
        let n = self.n();
        (0..self.dim()).all(|j| {
            let mut seen = alloc::vec![false; n];
            self.points.iter().all(|p| {
                let v = p[j];
                if !(0.0..1.0).contains(&v) {
                    return false;
                }
                let bin = ((v * n as f64) as usize).min(n - 1);
                // Guard against rounding at bin edges: recheck with exact bounds.
                let bin = if v < bin as f64 / n as f64 { bin - 1 } else { bin };
                !core::mem::replace(&mut seen[bin], true)
            })
        })
    }
}

/// Per dimension: a seeded permutation of the bins, then a uniform jitter
/// inside each bin. Dimensions are drawn in order from one stream.
pub fn lhs_sample(n: usize, d: usize, seed: u64) -> LhsDesign {
    assert!(n >= 1 && d >= 1, "lhs_sample needs n >= 1 and d >= 1");
    let mut rng = SeedRng::new(seed);
    let mut points = alloc::vec![alloc::vec![0.0; d]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    let nf = n as f64;
    for j in 0..d {
        for (i, p) in perm.iter_mut().enumerate() {
            *p = i;
        }
        rng.shuffle(&mut perm);
        for (i, &bin) in perm.iter().enumerate() {
            let lo = bin as f64 / nf;
            let hi = (bin + 1) as f64 / nf;
            let mut v = (bin as f64 + rng.uniform()) / nf;
            if v >= hi {
                v = hi.next_down();
            }
            points[i][j] = v.max(lo);
        }
    }
    LhsDesign { points }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles() {
        let d = lhs_sample(4, 2, 1);
        for j in 0..2 {
            let mut bins: Vec<usize> = d.points.iter().map(|p| (p[j] * 4.0) as usize).collect();
            bins.sort();
            assert_eq!(bins, alloc::vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn single_point() {
        let d = lhs_sample(1, 3, 9);
        assert_eq!(d.n(), 1);
        assert!(d.points[0].iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn seeds_differ_and_stratify() {
        let a = lhs_sample(50, 10, 1);
        let b = lhs_sample(50, 10, 2);
        assert_ne!(a, b);
        assert!(a.is_stratified() && b.is_stratified());
        assert_eq!(a, lhs_sample(50, 10, 1));
    }

    #[test]
    fn detects_non_stratified() {
        let d = LhsDesign {
            points: alloc::vec![alloc::vec![0.1], alloc::vec![0.2]],
        };
        assert!(!d.is_stratified());
    }
}
