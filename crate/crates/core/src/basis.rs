//! B-spline bases, derivative bases, difference penalties and tensor-product
//! design matrices.
//!
//! Knot vectors are clamped (each boundary knot repeated `degree + 1` times),
//! so the basis interpolates at the boundaries and every row of a level design
//! matrix sums to one inside the boundary interval.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum BasisError {
    #[error("basis values are degenerate: min equals max, no range to place knots on")]
    DegenerateRange,

    #[error("need at least degree + 1 = {required} basis functions, got {requested}")]
    TooFewBasis { required: usize, requested: usize },

    #[error("evaluation point {point} lies outside the basis boundary [{lo}, {hi}]")]
    PointOutOfRange { point: f64, lo: f64, hi: f64 },

    #[error("difference order {order} must satisfy 1 <= order < {num_basis}")]
    OrderTooHigh { order: usize, num_basis: usize },

    #[error("tensor factors disagree on row count: {0} vs {1}")]
    RowCountMismatch(usize, usize),
}

/// Clamped knot vector for a B-spline basis of a fixed degree.
#[derive(Debug, Clone)]
pub struct KnotVector {
    degree: usize,
    interior: Vec<f64>,
    boundary: (f64, f64),
    augmented: Vec<f64>,
}

/// Fraction of the data range by which the boundary knots are pushed outward,
/// so that evaluation at the exact data extremes (and grid endpoints equal to
/// them) stays in range.
const BOUNDARY_EXTENSION: f64 = 1e-3;

impl KnotVector {
    /// Builds a knot vector with `n_basis - degree - 1` interior knots placed
    /// at equally spaced quantiles of `values`.
    pub fn from_quantiles(values: &[f64], n_basis: usize, degree: usize) -> Result<Self, BasisError> {
        if n_basis < degree + 1 {
            return Err(BasisError::TooFewBasis {
                required: degree + 1,
                requested: n_basis,
            });
        }
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(max > min) {
            return Err(BasisError::DegenerateRange);
        }
        let pad = (max - min) * BOUNDARY_EXTENSION;
        let boundary = (min - pad, max + pad);

        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n_interior = n_basis - degree - 1;
        let interior: Vec<f64> = (1..=n_interior)
            .map(|k| quantile_sorted(&sorted, k as f64 / (n_interior + 1) as f64))
            .collect();

        Ok(Self::from_parts(degree, interior, boundary))
    }

    /// Assembles the clamped knot vector from explicit parts. Interior knots
    /// must be nondecreasing and strictly inside the boundary.
    pub fn from_parts(degree: usize, interior: Vec<f64>, boundary: (f64, f64)) -> Self {
        let mut augmented = Vec::with_capacity(interior.len() + 2 * (degree + 1));
        augmented.extend(std::iter::repeat(boundary.0).take(degree + 1));
        augmented.extend(interior.iter().cloned());
        augmented.extend(std::iter::repeat(boundary.1).take(degree + 1));
        Self {
            degree,
            interior,
            boundary,
            augmented,
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_basis(&self) -> usize {
        self.augmented.len() - self.degree - 1
    }

    pub fn boundary(&self) -> (f64, f64) {
        self.boundary
    }

    pub fn interior(&self) -> &[f64] {
        &self.interior
    }

    pub fn augmented(&self) -> &[f64] {
        &self.augmented
    }

    fn check_in_range(&self, x: f64) -> Result<(), BasisError> {
        let (lo, hi) = self.boundary;
        if x < lo || x > hi || !x.is_finite() {
            return Err(BasisError::PointOutOfRange { point: x, lo, hi });
        }
        Ok(())
    }

    /// Index of the knot span containing `x`, clamped so the last basis
    /// function owns the right boundary.
    fn find_span(&self, x: f64) -> usize {
        let n = self.n_basis();
        let p = self.degree;
        // valid spans are p .. n-1
        if x >= self.augmented[n] {
            return n - 1;
        }
        let mut lo = p;
        let mut hi = n;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < self.augmented[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Nonzero basis values `N_{span-degree..=span}` at `x` for the given
    /// degree `p <= self.degree` (Cox-de Boor recursion, triangular form).
    fn basis_funs(&self, span: usize, x: f64, p: usize) -> Vec<f64> {
        let knots = &self.augmented;
        let mut vals = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        vals[0] = 1.0;
        for j in 1..=p {
            left[j] = x - knots[span + 1 - j];
            right[j] = knots[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let term = if denom == 0.0 { 0.0 } else { vals[r] / denom };
                vals[r] = saved + right[r + 1] * term;
                saved = left[j - r] * term;
            }
            vals[j] = saved;
        }
        vals
    }

    /// Row of all `n_basis` level-basis values at `x`.
    pub fn row(&self, x: f64) -> Result<Vec<f64>, BasisError> {
        self.check_in_range(x)?;
        let p = self.degree;
        let span = self.find_span(x);
        let vals = self.basis_funs(span, x, p);
        let mut row = vec![0.0; self.n_basis()];
        for (j, v) in vals.iter().enumerate() {
            row[span - p + j] = *v;
        }
        Ok(row)
    }

    /// Row of first-derivative basis values at `x`, from the degree-reduction
    /// identity `B'_{i,p} = p (B_{i,p-1}/(k_{i+p}-k_i) - B_{i+1,p-1}/(k_{i+p+1}-k_{i+1}))`.
    pub fn derivative_row(&self, x: f64) -> Result<Vec<f64>, BasisError> {
        self.check_in_range(x)?;
        let p = self.degree;
        let knots = &self.augmented;
        let mut row = vec![0.0; self.n_basis()];
        if p == 0 {
            return Ok(row);
        }
        let span = self.find_span(x);
        // lower-degree values N_{span-p+1..=span, p-1}
        let lower = self.basis_funs(span, x, p - 1);
        let lower_at = |i: isize| -> f64 {
            let first = span as isize - (p as isize - 1);
            if i < first || i > span as isize {
                0.0
            } else {
                lower[(i - first) as usize]
            }
        };
        for i in (span - p)..=span {
            let ii = i as isize;
            let d1 = knots[i + p] - knots[i];
            let d2 = knots[i + p + 1] - knots[i + 1];
            let t1 = if d1 == 0.0 { 0.0 } else { lower_at(ii) / d1 };
            let t2 = if d2 == 0.0 { 0.0 } else { lower_at(ii + 1) / d2 };
            row[i] = p as f64 * (t1 - t2);
        }
        Ok(row)
    }
}

/// Linear-interpolation quantile of an already sorted slice.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Builds a knot vector for `n_basis` functions of the given degree over the
/// supplied values (interior knots at equally spaced quantiles).
pub fn make_knots(values: &[f64], n_basis: usize, degree: usize) -> Result<KnotVector, BasisError> {
    KnotVector::from_quantiles(values, n_basis, degree)
}

/// Level design matrix: rows are evaluation points, columns basis functions.
pub fn bspline_design(points: &[f64], knots: &KnotVector) -> Result<DMatrix<f64>, BasisError> {
    let mut m = DMatrix::zeros(points.len(), knots.n_basis());
    for (r, &x) in points.iter().enumerate() {
        let row = knots.row(x)?;
        for (c, v) in row.iter().enumerate() {
            m[(r, c)] = *v;
        }
    }
    Ok(m)
}

/// First-derivative design matrix; rows sum to zero.
pub fn bspline_derivative_design(
    points: &[f64],
    knots: &KnotVector,
) -> Result<DMatrix<f64>, BasisError> {
    let mut m = DMatrix::zeros(points.len(), knots.n_basis());
    for (r, &x) in points.iter().enumerate() {
        let row = knots.derivative_row(x)?;
        for (c, v) in row.iter().enumerate() {
            m[(r, c)] = *v;
        }
    }
    Ok(m)
}

/// Difference matrix of the given order, shape `(k - order) x k`.
/// Order 1 rows look like `(..., -1, 1, ...)`; higher orders compose
/// first differences.
pub fn difference_matrix(k: usize, order: usize) -> Result<DMatrix<f64>, BasisError> {
    if order == 0 || order >= k {
        return Err(BasisError::OrderTooHigh { order, num_basis: k });
    }
    let first = |n: usize| -> DMatrix<f64> {
        let mut d = DMatrix::zeros(n - 1, n);
        for i in 0..n - 1 {
            d[(i, i)] = -1.0;
            d[(i, i + 1)] = 1.0;
        }
        d
    };
    let mut d = first(k);
    for _ in 1..order {
        let rows = d.nrows();
        d = first(rows) * d;
    }
    Ok(d)
}

/// Row-wise tensor product of three design matrices evaluated at the same
/// observation rows. Column `(h, i, j)` is flattened as `h*(I*J) + i*J + j`.
pub fn tensor_design(
    b_t: &DMatrix<f64>,
    b_lon: &DMatrix<f64>,
    b_lat: &DMatrix<f64>,
) -> Result<DMatrix<f64>, BasisError> {
    let rows = b_t.nrows();
    if b_lon.nrows() != rows {
        return Err(BasisError::RowCountMismatch(rows, b_lon.nrows()));
    }
    if b_lat.nrows() != rows {
        return Err(BasisError::RowCountMismatch(rows, b_lat.nrows()));
    }
    let (nh, ni, nj) = (b_t.ncols(), b_lon.ncols(), b_lat.ncols());
    let mut m = DMatrix::zeros(rows, nh * ni * nj);
    for r in 0..rows {
        for h in 0..nh {
            let th = b_t[(r, h)];
            if th == 0.0 {
                continue;
            }
            for i in 0..ni {
                let ti = th * b_lon[(r, i)];
                if ti == 0.0 {
                    continue;
                }
                for j in 0..nj {
                    m[(r, h * (ni * nj) + i * nj + j)] = ti * b_lat[(r, j)];
                }
            }
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn single_segment_cubic() -> KnotVector {
        // knots {0,0,0,0,1,1,1,1}: the cubic Bernstein basis on [0, 1]
        KnotVector::from_parts(3, vec![], (0.0, 1.0))
    }

    #[test]
    fn bernstein_values_at_half() {
        let kv = single_segment_cubic();
        let row = kv.row(0.5).unwrap();
        let expected = [0.125, 0.375, 0.375, 0.125];
        for (got, want) in row.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn bernstein_derivative_at_half() {
        let kv = single_segment_cubic();
        let row = kv.derivative_row(0.5).unwrap();
        let expected = [-0.75, -0.75, 0.75, 0.75];
        for (got, want) in row.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn left_boundary_is_interpolated() {
        let vals: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let kv = make_knots(&vals, 8, 3).unwrap();
        let row = kv.row(0.0).unwrap();
        // clamped basis: at the data minimum the first function dominates;
        // at the exact boundary knot it would be 1
        let row_b = kv.row(kv.boundary().0).unwrap();
        assert!((row_b[0] - 1.0).abs() < 1e-12);
        assert!(row_b[1..].iter().all(|v| v.abs() < 1e-12));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn partition_of_unity_and_nonnegativity() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let vals: Vec<f64> = (0..200).map(|_| rng.random::<f64>() * 100.0).collect();
        let kv = make_knots(&vals, 13, 3).unwrap();
        for _ in 0..100 {
            let x = rng.random::<f64>() * 100.0;
            let row = kv.row(x).unwrap();
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn derivative_rows_sum_to_zero_and_match_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let vals: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let kv = make_knots(&vals, 10, 3).unwrap();
        let h = 1e-5;
        for _ in 0..100 {
            let x = 0.01 + 0.98 * rng.random::<f64>();
            let d = kv.derivative_row(x).unwrap();
            assert!(d.iter().sum::<f64>().abs() < 1e-10);
            let up = kv.row(x + h).unwrap();
            let dn = kv.row(x - h).unwrap();
            for (k, dv) in d.iter().enumerate() {
                let fd = (up[k] - dn[k]) / (2.0 * h);
                assert!((dv - fd).abs() < 1e-4, "basis {k} at {x}: {dv} vs {fd}");
            }
        }
    }

    #[test]
    fn local_support_bound() {
        let vals: Vec<f64> = (0..500).map(|i| i as f64 / 499.0).collect();
        let kv = make_knots(&vals, 12, 3).unwrap();
        // each basis function is nonzero on at most degree+1 spans; checking
        // on a fine grid, the support width never exceeds the widest
        // (degree+1)-span window
        let aug = kv.augmented().to_vec();
        for k in 0..kv.n_basis() {
            let support = aug[k + kv.degree() + 1] - aug[k];
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for i in 0..=1000 {
                let x = i as f64 / 1000.0;
                let row = kv.row(x).unwrap();
                if row[k].abs() > 1e-14 {
                    lo = lo.min(x);
                    hi = hi.max(x);
                }
            }
            if lo.is_finite() {
                assert!(hi - lo <= support + 1e-9);
            }
        }
    }

    #[test]
    fn make_knots_counts_and_median() {
        let vals: Vec<f64> = (0..=100).map(|i| i as f64).collect();
        let kv = make_knots(&vals, 5, 3).unwrap();
        assert_eq!(kv.interior().len(), 1);
        assert!((kv.interior()[0] - 50.0).abs() < 1e-12);
        assert_eq!(kv.n_basis(), 5);
    }

    #[test]
    fn make_knots_guards() {
        let vals = [0.0, 1.0, 2.0];
        assert_eq!(
            make_knots(&vals, 3, 3).unwrap_err(),
            BasisError::TooFewBasis { required: 4, requested: 3 }
        );
        let same = [5.0, 5.0, 5.0];
        assert_eq!(make_knots(&same, 6, 3).unwrap_err(), BasisError::DegenerateRange);
    }

    #[test]
    fn out_of_range_point_rejected() {
        let kv = single_segment_cubic();
        assert!(matches!(
            kv.row(1.5),
            Err(BasisError::PointOutOfRange { .. })
        ));
        assert!(matches!(
            bspline_design(&[0.2, -0.1], &kv),
            Err(BasisError::PointOutOfRange { .. })
        ));
    }

    #[test]
    fn difference_matrix_order_one() {
        let d = difference_matrix(3, 1).unwrap();
        let expected = DMatrix::from_row_slice(2, 3, &[-1.0, 1.0, 0.0, 0.0, -1.0, 1.0]);
        assert_eq!(d, expected);
    }

    #[test]
    fn difference_matrix_order_two_composes() {
        let d = difference_matrix(4, 2).unwrap();
        let expected =
            DMatrix::from_row_slice(2, 4, &[1.0, -2.0, 1.0, 0.0, 0.0, 1.0, -2.0, 1.0]);
        assert_eq!(d, expected);
    }

    #[test]
    fn differences_annihilate_constants_and_flatten_linears() {
        let d = difference_matrix(7, 1).unwrap();
        let c = nalgebra::DVector::from_element(7, 3.25);
        assert!((&d * &c).amax() == 0.0);
        let lin = nalgebra::DVector::from_iterator(7, (0..7).map(|i| 2.0 * i as f64 + 1.0));
        let diff = &d * &lin;
        assert!(diff.iter().all(|v| (v - 2.0).abs() < 1e-14));
    }

    #[test]
    fn difference_matrix_guard() {
        assert!(matches!(
            difference_matrix(3, 3),
            Err(BasisError::OrderTooHigh { .. })
        ));
    }

    #[test]
    fn tensor_design_matches_triple_loop_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let rows = 6;
        let (nh, ni, nj) = (2, 2, 1);
        let randm = |r: usize, c: usize, rng: &mut ChaCha20Rng| {
            DMatrix::from_fn(r, c, |_, _| rng.random::<f64>())
        };
        let bt = randm(rows, nh, &mut rng);
        let blon = randm(rows, ni, &mut rng);
        let blat = randm(rows, nj, &mut rng);
        let t = tensor_design(&bt, &blon, &blat).unwrap();
        assert_eq!(t.ncols(), nh * ni * nj);
        // brute-force oracle
        for r in 0..rows {
            for h in 0..nh {
                for i in 0..ni {
                    for j in 0..nj {
                        let want = bt[(r, h)] * blon[(r, i)] * blat[(r, j)];
                        let got = t[(r, h * (ni * nj) + i * nj + j)];
                        assert!((got - want).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn tensor_design_trivial_and_row_sums() {
        let ones = DMatrix::from_element(4, 1, 1.0);
        let t = tensor_design(&ones, &ones, &ones).unwrap();
        assert_eq!(t, DMatrix::from_element(4, 1, 1.0));

        // level bases keep partition of unity under the tensor product
        let vals: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let kv_t = make_knots(&vals, 6, 3).unwrap();
        let kv_s = make_knots(&vals, 4, 3).unwrap();
        let pts: Vec<f64> = vec![1.0, 10.0, 25.0, 39.0];
        let bt = bspline_design(&pts, &kv_t).unwrap();
        let bs = bspline_design(&pts, &kv_s).unwrap();
        let t = tensor_design(&bt, &bs, &bs).unwrap();
        for r in 0..t.nrows() {
            let sum: f64 = t.row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn tensor_design_row_mismatch() {
        let a = DMatrix::from_element(3, 2, 1.0);
        let b = DMatrix::from_element(4, 2, 1.0);
        assert!(matches!(
            tensor_design(&a, &b, &a),
            Err(BasisError::RowCountMismatch(3, 4))
        ));
    }
}
