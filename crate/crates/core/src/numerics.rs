//! Dense linear-algebra and special-function kernels.
//!
//! Everything here is single-threaded with a fixed summation order, so the
//! results are bitwise reproducible for a given input.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Row-major `n x D` point cloud. One row is one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl SampleMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidMatrix(format!(
                "shape {rows}x{cols} must have at least one row and one column"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::InvalidMatrix(format!(
                "{} values do not fill a {rows}x{cols} matrix",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix(format!(
                "non-finite value at row {}, column {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::InvalidMatrix(format!(
                    "row {i} has {} columns, expected {cols}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, values)
    }

    /// Builds a matrix without re-checking finiteness. Callers guarantee the
    /// shape and that every value is finite.
    pub(crate) fn from_parts(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        Self { rows, cols, values }
    }

    pub fn n(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for row in self.rows() {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        let n = self.rows as f64;
        sums.into_iter().map(|s| s / n).collect()
    }

    /// Sample standard deviation of every column, normalized by `n - 1`.
    pub fn column_stds(&self) -> Vec<f64> {
        let means = self.column_means();
        let mut acc = vec![0.0; self.cols];
        for row in self.rows() {
            for ((a, v), m) in acc.iter_mut().zip(row).zip(&means) {
                let d = v - m;
                *a += d * d;
            }
        }
        let denom = (self.rows.max(2) - 1) as f64;
        acc.into_iter().map(|a| (a / denom).sqrt()).collect()
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self::from_parts(indices.len(), self.cols, values)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.rows,
            self.cols,
            self.values.iter().map(|v| v * factor).collect(),
        )
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.rows, self.cols, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.values)
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                values.push(m[(i, j)]);
            }
        }
        Self::new(m.nrows(), m.ncols(), values)
    }
}

/// PCA of a centered cloud.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Explained variances, non-increasing, clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// `D x r` matrix whose columns are the orthonormal principal axes.
    pub components: DMatrix<f64>,
    /// `n x r` coordinates of the samples along `components`.
    pub projections: SampleMatrix,
}

pub fn center(data: &SampleMatrix) -> SampleMatrix {
    let means = data.column_means();
    let mut values = Vec::with_capacity(data.values.len());
    for row in data.rows() {
        values.extend(row.iter().zip(&means).map(|(v, m)| v - m));
    }
    SampleMatrix::from_parts(data.rows, data.cols, values)
}

/// Principal components of an already-centered matrix through its thin SVD.
///
/// Eigenvalues are `s_i^2 / (n - 1)`; values below `1e-12 * lambda_max` are
/// clamped to zero.
pub fn pca_spectrum(centered: &SampleMatrix) -> Result<Spectrum> {
    let n = centered.n();
    if n < 2 {
        return Err(Error::DegenerateInput(format!(
            "PCA needs at least 2 samples, got {n}"
        )));
    }
    let svd = centered.to_dmatrix().svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let sv = svd.singular_values;
    let r = sv.len();

    let denom = (n - 1) as f64;
    let mut eigenvalues: Vec<f64> = sv.iter().map(|s| s * s / denom).collect();
    let lmax = eigenvalues.first().copied().unwrap_or(0.0);
    for ev in eigenvalues.iter_mut() {
        if *ev < 1e-12 * lmax || *ev < 0.0 {
            *ev = 0.0;
        }
    }

    let mut proj = Vec::with_capacity(n * r);
    for i in 0..n {
        for j in 0..r {
            proj.push(u[(i, j)] * sv[j]);
        }
    }
    Ok(Spectrum {
        eigenvalues,
        components: vt.transpose(),
        projections: SampleMatrix::from_parts(n, r, proj),
    })
}

/// Number of leading components with `lambda_1 / lambda_i < conditional_number`.
///
/// Always at least 1.
pub fn select_major_components(eigenvalues: &[f64], conditional_number: f64) -> usize {
    let Some(&first) = eigenvalues.first() else {
        return 1;
    };
    let k = eigenvalues
        .iter()
        .take_while(|&&ev| first / ev < conditional_number)
        .count();
    k.max(1)
}

/// Divides every column by its sample standard deviation.
///
/// Fails when a column's std is at most `1e-12` times the largest column std.
pub fn whiten_columns(projections: &SampleMatrix) -> Result<SampleMatrix> {
    let stds = projections.column_stds();
    let largest = stds.iter().cloned().fold(0.0_f64, f64::max);
    let threshold = 1e-12 * largest;
    if let Some((component, &std)) = stds
        .iter()
        .enumerate()
        .find(|(_, &s)| s <= threshold || s == 0.0)
    {
        return Err(Error::DegenerateVariance {
            component,
            std,
            threshold,
        });
    }
    let mut values = Vec::with_capacity(projections.values.len());
    for row in projections.rows() {
        values.extend(row.iter().zip(&stds).map(|(v, s)| v / s));
    }
    Ok(SampleMatrix::from_parts(
        projections.rows,
        projections.cols,
        values,
    ))
}

pub fn project_to_sphere(data: &SampleMatrix) -> Result<SampleMatrix> {
    let mut values = Vec::with_capacity(data.values.len());
    for (i, row) in data.rows().enumerate() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-30 {
            return Err(Error::ZeroVector { row: i });
        }
        values.extend(row.iter().map(|v| v / norm));
    }
    Ok(SampleMatrix::from_parts(data.rows, data.cols, values))
}

const LAMBERT_TOL: f64 = 1e-14;
const LAMBERT_MAX_ITER: usize = 100;

/// Principal branch of the Lambert W function for `x >= 0`.
///
/// Halley iteration on `w e^w - x` started from `ln(1 + x)`.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!(
            "lambert_w0 is defined here for x >= 0, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let mut w = x.ln_1p();
    for _ in 0..LAMBERT_MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        w -= step;
        if step.abs() <= LAMBERT_TOL * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w)
}

/// Applies plane rotations to the consecutive coordinate pairs
/// `(0,1), (1,2), ..., (D-2,D-1)` in that order, one angle per pair.
pub fn givens_rotate_consecutive(data: &SampleMatrix, angles: &[f64]) -> Result<SampleMatrix> {
    let d = data.dim();
    if angles.len() + 1 != d {
        return Err(Error::ShapeMismatch {
            expected: d.saturating_sub(1),
            found: angles.len(),
        });
    }
    let trig: Vec<(f64, f64)> = angles.iter().map(|a| a.sin_cos()).collect();
    let mut values = data.values.clone();
    for row in values.chunks_exact_mut(d) {
        for (p, &(s, c)) in trig.iter().enumerate() {
            let (a, b) = (row[p], row[p + 1]);
            row[p] = c * a - s * b;
            row[p + 1] = s * a + c * b;
        }
    }
    Ok(SampleMatrix::from_parts(data.rows, d, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> SampleMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
        SampleMatrix::new(rows, cols, values).unwrap()
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(SampleMatrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(SampleMatrix::new(0, 2, vec![]).is_err());
        assert!(SampleMatrix::new(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn center_small_cases() {
        let m = SampleMatrix::from_rows(&[[1.0, 3.0], [3.0, 5.0]]).unwrap();
        assert_eq!(center(&m).as_slice(), &[-1.0, -1.0, 1.0, 1.0]);
        let one = SampleMatrix::from_rows(&[[7.0, 7.0]]).unwrap();
        assert_eq!(center(&one).as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn center_zeroes_column_means() {
        let m = random_matrix(100, 10, 1).map(|v| 3.0 * v + 5.0).unwrap();
        for mean in center(&m).column_means() {
            assert!(mean.abs() < 1e-10, "{mean}");
        }
    }

    #[test]
    fn pca_line_has_one_component() {
        let rows: Vec<[f64; 2]> = (0..20).map(|i| [i as f64, 2.0 * i as f64]).collect();
        let m = center(&SampleMatrix::from_rows(&rows).unwrap());
        let s = pca_spectrum(&m).unwrap();
        assert!(s.eigenvalues[0] > 1.0);
        assert!(s.eigenvalues[1] < 1e-10);
    }

    #[test]
    fn pca_needs_two_samples() {
        let m = SampleMatrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(matches!(pca_spectrum(&m), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn pca_axis_aligned_matches_column_variances() {
        let base = random_matrix(4000, 2, 2);
        let scaled: Vec<f64> = base
            .rows()
            .flat_map(|r| [2.0 * r[0], r[1]])
            .collect();
        let m = center(&SampleMatrix::new(4000, 2, scaled).unwrap());
        let vars: Vec<f64> = m.column_stds().iter().map(|s| s * s).collect();
        let s = pca_spectrum(&m).unwrap();
        // Sample cross-covariance is O(1/sqrt(n)), so the eigenvalues only
        // match the column variances to that order.
        assert_abs_diff_eq!(s.eigenvalues[0], vars[0], epsilon = 0.1);
        assert_abs_diff_eq!(s.eigenvalues[1], vars[1], epsilon = 0.1);
        assert!((s.eigenvalues[0] - 4.0).abs() < 0.4);
        assert!((s.eigenvalues[1] - 1.0).abs() < 0.1);
    }

    #[test]
    fn pca_isotropic_eigenvalues_are_close() {
        let m = center(&random_matrix(5000, 3, 3));
        let s = pca_spectrum(&m).unwrap();
        let (hi, lo) = (s.eigenvalues[0], s.eigenvalues[2]);
        assert!(hi / lo < 1.1, "{:?}", s.eigenvalues);
    }

    #[test]
    fn pca_round_trip_and_variances() {
        let m = center(&random_matrix(60, 7, 4));
        let s = pca_spectrum(&m).unwrap();
        let recon = s.projections.to_dmatrix() * s.components.transpose();
        let orig = m.to_dmatrix();
        let rel = (&recon - &orig).norm() / orig.norm();
        assert!(rel < 1e-8, "{rel}");
        let gram = s.components.transpose() * &s.components;
        let eye = DMatrix::<f64>::identity(gram.nrows(), gram.ncols());
        assert!((gram - eye).amax() < 1e-8);
        for (sd, ev) in s.projections.column_stds().iter().zip(&s.eigenvalues) {
            assert_abs_diff_eq!(sd * sd, *ev, epsilon = 1e-9 * (1.0 + ev));
        }
        assert!(s.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn pca_wide_matrix() {
        let m = center(&random_matrix(10, 40, 5));
        let s = pca_spectrum(&m).unwrap();
        assert_eq!(s.eigenvalues.len(), 10);
        // Centering removes one degree of freedom.
        assert_eq!(s.eigenvalues[9], 0.0);
        let recon = s.projections.to_dmatrix() * s.components.transpose();
        assert!((&recon - m.to_dmatrix()).norm() / m.to_dmatrix().norm() < 1e-8);
    }

    #[test]
    fn component_selection_rule() {
        assert_eq!(select_major_components(&[10.0, 2.0, 0.5], 10.0), 2);
        assert_eq!(select_major_components(&[5.0, 5.0, 5.0], 10.0), 3);
        assert_eq!(select_major_components(&[10.0, 1.0 + 1e-12], 10.0), 2);
        assert_eq!(select_major_components(&[10.0, 1.0], 10.0), 1);
        assert_eq!(select_major_components(&[1.0, 0.0, 0.0], 10.0), 1);
        assert_eq!(select_major_components(&[0.0, 0.0], 10.0), 1);
    }

    #[test]
    fn whitening() {
        let m = SampleMatrix::from_rows(&[[-2.0], [2.0], [0.0]]).unwrap();
        // std of (-2, 2, 0) is 2.
        let w = whiten_columns(&m).unwrap();
        assert_eq!(w.as_slice(), &[-1.0, 1.0, 0.0]);
        let again = whiten_columns(&w).unwrap();
        for (a, b) in again.as_slice().iter().zip(w.as_slice()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn whitening_gives_identity_covariance() {
        let m = center(&random_matrix(1000, 3, 6));
        let s = pca_spectrum(&m).unwrap();
        let w = whiten_columns(&s.projections).unwrap();
        let wm = w.to_dmatrix();
        let cov = wm.transpose() * &wm / 999.0;
        for i in 0..3 {
            assert_abs_diff_eq!(cov[(i, i)], 1.0, epsilon = 1e-8);
            for j in 0..3 {
                if i != j {
                    assert!(cov[(i, j)].abs() < 0.1);
                }
            }
        }
    }

    #[test]
    fn whitening_rejects_flat_column() {
        let m = SampleMatrix::from_rows(&[[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]).unwrap();
        assert!(matches!(
            whiten_columns(&m),
            Err(Error::DegenerateVariance { component: 1, .. })
        ));
    }

    #[test]
    fn sphere_projection() {
        let m = SampleMatrix::from_rows(&[[3.0, 4.0], [1.0, 0.0]]).unwrap();
        let p = project_to_sphere(&m).unwrap();
        assert_abs_diff_eq!(p.get(0, 0), 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(p.get(0, 1), 0.8, epsilon = 1e-15);
        assert_eq!(p.row(1), &[1.0, 0.0]);
        let zero = SampleMatrix::from_rows(&[[1.0, 1.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(project_to_sphere(&zero), Err(Error::ZeroVector { row: 1 })));
    }

    #[test]
    fn sphere_projection_random_norms() {
        let p = project_to_sphere(&random_matrix(500, 6, 7)).unwrap();
        for row in p.rows() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() <= 1e-12);
        }
    }

    /// Newton iteration in extended steps, independent of the Halley path.
    fn omega_by_newton() -> f64 {
        let mut w = 0.5_f64;
        for _ in 0..200 {
            w -= (w * w.exp() - 1.0) / (w.exp() * (w + 1.0));
        }
        w
    }

    #[test]
    fn lambert_known_values() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(lambert_w0(std::f64::consts::E).unwrap(), 1.0, epsilon = 1e-15);
        let omega = omega_by_newton();
        assert_abs_diff_eq!(omega, 0.567_143_290_409_783_8, epsilon = 1e-15);
        assert_abs_diff_eq!(lambert_w0(1.0).unwrap(), omega, epsilon = 1e-15);
        assert!(matches!(lambert_w0(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn lambert_large_arguments() {
        for &x in &[1e10, 1e100, 1e300] {
            let w = lambert_w0(x).unwrap();
            let back = w.ln() + w;
            assert!((back - x.ln()).abs() / x.ln() < 1e-13, "{x}");
        }
    }

    #[test]
    fn quarter_turn() {
        let m = SampleMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let r = givens_rotate_consecutive(&m, &[std::f64::consts::FRAC_PI_2]).unwrap();
        assert_abs_diff_eq!(r.get(0, 0), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.get(0, 1), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rotation_zero_angles_is_identity_and_checks_shape() {
        let m = random_matrix(10, 4, 8);
        assert_eq!(givens_rotate_consecutive(&m, &[0.0; 3]).unwrap(), m);
        assert!(matches!(
            givens_rotate_consecutive(&m, &[0.0; 2]),
            Err(Error::ShapeMismatch { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn rotation_preserves_norms() {
        let m = random_matrix(50, 6, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let angles: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        let r = givens_rotate_consecutive(&m, &angles).unwrap();
        for (a, b) in m.rows().zip(r.rows()) {
            let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((na - nb).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn lambert_inverse_identity(x in 0.0f64..1e6) {
            let w = lambert_w0(x).unwrap();
            prop_assert!(w >= 0.0);
            prop_assert!((w * w.exp() - x).abs() / x.max(1.0) < 1e-12);
        }

        #[test]
        fn rotation_is_orthogonal(angles in proptest::collection::vec(0.0f64..std::f64::consts::TAU, 1..8)) {
            let d = angles.len() + 1;
            let mut eye = vec![0.0; d * d];
            for i in 0..d { eye[i * d + i] = 1.0; }
            let basis = SampleMatrix::new(d, d, eye).unwrap();
            let r = givens_rotate_consecutive(&basis, &angles).unwrap().to_dmatrix();
            let gram = &r * r.transpose();
            let err = (gram - DMatrix::<f64>::identity(d, d)).amax();
            prop_assert!(err < 1e-10);
        }

        #[test]
        fn selection_monotone_in_c(
            mut evs in proptest::collection::vec(0.0f64..100.0, 1..12),
            c1 in 1.0001f64..50.0,
            dc in 0.0f64..50.0,
        ) {
            evs.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let k1 = select_major_components(&evs, c1);
            let k2 = select_major_components(&evs, c1 + dc);
            prop_assert!(k2 >= k1);
            prop_assert!(k1 >= 1);
        }
    }
}
