//! Orthonormal DCT-II basis generation, zig-zag index mapping, and filter
//! statistics.
//!
//! The basis uses the orthonormal scaling `alpha(0) = sqrt(1/N)`,
//! `alpha(k>0) = sqrt(2/N)`, so the N*N filters form an orthonormal family:
//! the Gram matrix of a fresh bank is the identity to f64 precision. Filters
//! are stored in zig-zag (JPEG scan) order, which sorts them by increasing
//! spatial complexity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded, Stream};
use rand::Rng;

/// Frequency index pair of a 2D basis function, each component in `[0, N-1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisIndex2D {
    pub k1: usize,
    pub k2: usize,
}

/// Provenance of a filter bank's coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterTag {
    DctInitialized,
    Learned,
    Random,
}

/// One N*N transform filter, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    n: usize,
    values: Vec<f64>,
    pub tag: FilterTag,
}

impl Filter {
    pub fn new(n: usize, values: Vec<f64>, tag: FilterTag) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::mismatch(format!(
                "filter expects {} values, got {}",
                n * n,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("filter entries must be finite"));
        }
        Ok(Filter { n, values, tag })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Frobenius inner product with another filter of the same size.
    pub fn dot(&self, other: &Filter) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Ordered family of N*N filters in zig-zag index order (index 1..=N*N).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    n: usize,
    filters: Vec<Filter>,
}

impl FilterBank {
    pub fn new(n: usize, filters: Vec<Filter>) -> Result<Self> {
        if filters.len() != n * n {
            return Err(Error::mismatch(format!(
                "bank expects {} filters, got {}",
                n * n,
                filters.len()
            )));
        }
        if filters.iter().any(|f| f.n != n) {
            return Err(Error::mismatch("all filters must be N x N"));
        }
        Ok(FilterBank { n, filters })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    /// Filter at 1-based zig-zag index `i`.
    pub fn filter(&self, i: usize) -> &Filter {
        &self.filters[i - 1]
    }

    pub fn filters(&self) -> &[Filter] {
        &self.filters
    }

    pub fn filters_mut(&mut self) -> &mut [Filter] {
        &mut self.filters
    }

    /// Bessel-corrected variance of each filter, in index order.
    pub fn variances(&self) -> Vec<f64> {
        self.filters.iter().map(filter_variance).collect()
    }
}

/// Bijection between frequency pairs `(k1, k2)` and 1-based scan indices,
/// following the JPEG anti-diagonal traversal: (0,0), (0,1), (1,0), (2,0),
/// (1,1), (0,2), ...
#[derive(Debug, Clone)]
pub struct ZigZag {
    n: usize,
    to_index: Vec<usize>,
    from_index: Vec<(usize, usize)>,
}

impl ZigZag {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("block size must be at least 2"));
        }
        let mut from_index = Vec::with_capacity(n * n);
        let (mut r, mut c) = (0usize, 0usize);
        let mut upward = true;
        for _ in 0..n * n {
            from_index.push((r, c));
            if upward {
                if c == n - 1 {
                    r += 1;
                    upward = false;
                } else if r == 0 {
                    c += 1;
                    upward = false;
                } else {
                    r -= 1;
                    c += 1;
                }
            } else if r == n - 1 {
                c += 1;
                upward = true;
            } else if c == 0 {
                r += 1;
                upward = true;
            } else {
                r += 1;
                c -= 1;
            }
        }
        let mut to_index = vec![0usize; n * n];
        for (i, &(k1, k2)) in from_index.iter().enumerate() {
            to_index[k1 * n + k2] = i + 1;
        }
        Ok(ZigZag {
            n,
            to_index,
            from_index,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Scan index in `[1, N*N]` of the frequency pair.
    pub fn index_of(&self, k1: usize, k2: usize) -> usize {
        self.to_index[k1 * self.n + k2]
    }

    /// Frequency pair of the 1-based scan index.
    pub fn pair_of(&self, i: usize) -> BasisIndex2D {
        let (k1, k2) = self.from_index[i - 1];
        BasisIndex2D { k1, k2 }
    }
}

/// Build the zig-zag bijection for block size `n`.
pub fn zigzag(n: usize) -> Result<ZigZag> {
    ZigZag::new(n)
}

/// Orthonormal 2D DCT-II basis value at spatial position `(n1, n2)` for
/// frequency pair `(k1, k2)`.
pub fn dct_basis_value(n: usize, k1: usize, k2: usize, n1: usize, n2: usize) -> f64 {
    let alpha = |k: usize| -> f64 {
        if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        }
    };
    let angle = |pos: usize, k: usize| -> f64 {
        std::f64::consts::PI / n as f64 * (pos as f64 + 0.5) * k as f64
    };
    alpha(k1) * alpha(k2) * angle(n1, k1).cos() * angle(n2, k2).cos()
}

/// Generate the N*N orthonormal DCT-II filters in zig-zag order.
pub fn dct_basis(n: usize) -> Result<FilterBank> {
    if n < 2 {
        return Err(Error::invalid("block size must be at least 2"));
    }
    let zz = ZigZag::new(n)?;
    let mut filters = Vec::with_capacity(n * n);
    for i in 1..=n * n {
        let BasisIndex2D { k1, k2 } = zz.pair_of(i);
        let mut values = Vec::with_capacity(n * n);
        for n1 in 0..n {
            for n2 in 0..n {
                values.push(dct_basis_value(n, k1, k2, n1, n2));
            }
        }
        filters.push(Filter::new(n, values, FilterTag::DctInitialized)?);
    }
    FilterBank::new(n, filters)
}

/// Bessel-corrected variance of a filter's entries.
pub fn filter_variance(f: &Filter) -> f64 {
    variance_of(f.values())
}

pub(crate) fn variance_of(values: &[f64]) -> f64 {
    let m = values.len() as f64;
    debug_assert!(m >= 2.0);
    let mean = values.iter().sum::<f64>() / m;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0)
}

/// Random orthonormal bank: Gaussian draws orthonormalized by modified
/// Gram-Schmidt. Useful because the perfect-reconstruction property depends
/// only on orthonormality, not on the DCT structure.
pub fn random_orthonormal_bank(n: usize, seed: u64) -> Result<FilterBank> {
    if n < 2 {
        return Err(Error::invalid("block size must be at least 2"));
    }
    let mut rng = seeded(seed, Stream::BankInit);
    let dim = n * n;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while rows.len() < dim {
        let mut v: Vec<f64> = (0..dim)
            .map(|_| {
                // Box-Muller keeps us independent of distribution crates.
                let u1: f64 = rng.random::<f64>().max(1e-12);
                let u2: f64 = rng.random();
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        for prev in &rows {
            let proj: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
            for (x, p) in v.iter_mut().zip(prev) {
                *x -= proj * p;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue; // degenerate draw, resample
        }
        for x in v.iter_mut() {
            *x /= norm;
        }
        rows.push(v);
    }
    let filters = rows
        .into_iter()
        .map(|values| Filter::new(n, values, FilterTag::Random))
        .collect::<Result<Vec<_>>>()?;
    FilterBank::new(n, filters)
}

/// Random (non-orthonormal) bank drawn uniformly in the Xavier range for an
/// N*N -> N*N linear map.
pub fn random_bank(n: usize, seed: u64) -> Result<FilterBank> {
    if n < 2 {
        return Err(Error::invalid("block size must be at least 2"));
    }
    let mut rng = seeded(seed, Stream::BankInit);
    let dim = n * n;
    let bound = (6.0 / (dim as f64 + dim as f64)).sqrt();
    let filters = (0..dim)
        .map(|_| {
            let values: Vec<f64> = (0..dim).map(|_| rng.random_range(-bound..bound)).collect();
            Filter::new(n, values, FilterTag::Random)
        })
        .collect::<Result<Vec<_>>>()?;
    FilterBank::new(n, filters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::spearman;

    // Reference 8x8 zig-zag scan as used by baseline JPEG: entry s is the
    // row-major position (k1*8+k2) visited at scan index s+1.
    const JPEG_SCAN_8X8: [usize; 64] = [
        0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34,
        27, 20, 13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44,
        51, 58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
    ];

    #[test]
    fn zigzag_matches_jpeg_scan_order() {
        let zz = zigzag(8).unwrap();
        for (s, &pos) in JPEG_SCAN_8X8.iter().enumerate() {
            let p = zz.pair_of(s + 1);
            assert_eq!(p.k1 * 8 + p.k2, pos, "scan index {}", s + 1);
        }
    }

    #[test]
    fn zigzag_first_index_is_dc() {
        let zz = zigzag(8).unwrap();
        assert_eq!(zz.index_of(0, 0), 1);
    }

    #[test]
    fn zigzag_round_trip_and_permutation() {
        let zz = zigzag(8).unwrap();
        let mut sum = 0usize;
        let mut seen = vec![false; 64];
        for k1 in 0..8 {
            for k2 in 0..8 {
                let i = zz.index_of(k1, k2);
                assert!((1..=64).contains(&i));
                assert!(!seen[i - 1], "index {i} visited twice");
                seen[i - 1] = true;
                sum += i;
                let p = zz.pair_of(i);
                assert_eq!((p.k1, p.k2), (k1, k2));
            }
        }
        assert_eq!(sum, 64 * 65 / 2);
    }

    #[test]
    fn zigzag_bijective_for_small_n() {
        for n in 2..=16 {
            let zz = zigzag(n).unwrap();
            for i in 1..=n * n {
                let p = zz.pair_of(i);
                assert_eq!(zz.index_of(p.k1, p.k2), i);
            }
        }
    }

    #[test]
    fn zigzag_rejects_n_below_two() {
        assert!(zigzag(1).is_err());
    }

    #[test]
    fn dc_filter_is_constant_eighth() {
        let bank = dct_basis(8).unwrap();
        let dc = bank.filter(1);
        for &v in dc.values() {
            assert!((v - 0.125).abs() < 1e-15);
        }
        assert!((dc.dot(dc) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn basis_value_k01_at_origin() {
        // alpha(0) * alpha(1) * cos(0) * cos(pi/16)
        let expected = (1.0f64 / 8.0).sqrt()
            * (2.0f64 / 8.0).sqrt()
            * (std::f64::consts::PI / 16.0).cos();
        let got = dct_basis_value(8, 0, 1, 0, 0);
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.173380).abs() < 1e-6);

        // Cross-check against a brute-force 2D DCT of a unit impulse at (0,0):
        // X(k1,k2) = sum_{n1,n2} x(n1,n2) w(n1,n2) collapses to w(0,0).
        let mut coeff = 0.0;
        for n1 in 0..8 {
            for n2 in 0..8 {
                let x = if n1 == 0 && n2 == 0 { 1.0 } else { 0.0 };
                coeff += x * dct_basis_value(8, 0, 1, n1, n2);
            }
        }
        assert!((coeff - got).abs() < 1e-15);
    }

    #[test]
    fn gram_of_dct_basis_is_identity() {
        let bank = dct_basis(8).unwrap();
        for i in 1..=64 {
            for j in 1..=64 {
                let dot = bank.filter(i).dot(bank.filter(j));
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (dot - expected).abs() < 1e-12,
                    "<w_{i}, w_{j}> = {dot}, expected {expected}"
                );
            }
        }
    }

    #[test]
    fn dct_basis_rejects_n_below_two() {
        assert!(dct_basis(1).is_err());
        assert!(dct_basis(0).is_err());
    }

    #[test]
    fn variance_of_dc_is_zero_others_positive() {
        let bank = dct_basis(8).unwrap();
        assert_eq!(filter_variance(bank.filter(1)), 0.0);
        for i in 2..=64 {
            assert!(
                filter_variance(bank.filter(i)) > 0.0,
                "variance of filter {i} should be positive"
            );
        }
    }

    #[test]
    fn variance_hand_case_two_by_two() {
        let f = Filter::new(2, vec![1.0, -1.0, 1.0, -1.0], FilterTag::Random).unwrap();
        assert!((filter_variance(&f) - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn variance_trend_follows_scan_index() {
        // All non-DC orthonormal filters have variance exactly 1/(N^2-1)
        // (zero mean, unit norm), so the ordering is tie-heavy; quantize so
        // float noise does not shuffle tied ranks.
        let bank = dct_basis(8).unwrap();
        let idx: Vec<f64> = (1..=64).map(|i| i as f64).collect();
        let vars: Vec<f64> = bank
            .variances()
            .iter()
            .map(|v| (v * 1e9).round() / 1e9)
            .collect();
        let rho = spearman(&idx, &vars);
        assert!(rho > 0.0, "rank correlation {rho} should be positive");
    }

    #[test]
    fn random_orthonormal_bank_is_orthonormal() {
        let bank = random_orthonormal_bank(4, 7).unwrap();
        for i in 1..=16 {
            for j in 1..=16 {
                let dot = bank.filter(i).dot(bank.filter(j));
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-10);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn variance_is_shift_invariant(
            values in proptest::collection::vec(-10.0f64..10.0, 16),
            shift in -5.0f64..5.0,
        ) {
            let f = Filter::new(4, values.clone(), FilterTag::Random).unwrap();
            let shifted = Filter::new(
                4,
                values.iter().map(|v| v + shift).collect(),
                FilterTag::Random,
            ).unwrap();
            let a = filter_variance(&f);
            let b = filter_variance(&shifted);
            proptest::prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }
    }
}
