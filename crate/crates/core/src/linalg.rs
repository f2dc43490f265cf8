//! Dense symmetric positive definite matrices and their spectral functions.
//!
//! Vectors are row vectors (`&[f64]`) and are multiplied from the left, so
//! `row_vec_mul(v, m)` is `v·M`. Everything here is O(d³) and meant for the
//! small dimensions (d ≤ 4) of a hedging desk.

use crate::error::{check_dim, Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diag(&vec![1.0; dim])
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from rows; every row must have `rows.len()` entries.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for r in rows {
            let r = r.as_ref();
            check_dim(dim, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Self { dim, data })
    }

    /// Builds a `dim × dim` matrix from `dim²` row-major entries.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(dim * dim, data.len())?;
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        check_dim(self.dim, other.dim)?;
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Self { dim: self.dim, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        check_dim(self.dim, other.dim)?;
        Ok(Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

/// Symmetric positive definite matrix with a cached spectral decomposition
/// `M = Q diag(λ) Qᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    entries: Matrix,
    eig_values: Vec<f64>,
    /// Eigenvectors stored as columns.
    eig_vectors: Matrix,
}

impl SpdMatrix {
    pub fn new(entries: Matrix) -> Result<Self> {
        let n = entries.dim();
        if n == 0 {
            return Err(Error::InvalidParameter("matrix dimension must be positive".into()));
        }
        if entries.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
        }
        let scale = entries.max_abs().max(f64::MIN_POSITIVE);
        let mut asymmetry: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                asymmetry = asymmetry.max((entries[(i, j)] - entries[(j, i)]).abs() / scale);
            }
        }
        if asymmetry > SYMMETRY_TOL {
            return Err(Error::NotSymmetric { asymmetry });
        }
        let (eig_values, eig_vectors) = jacobi_eigen(&entries);
        let min_eigenvalue = eig_values.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eigenvalue <= 0.0 {
            return Err(Error::NotPositiveDefinite { min_eigenvalue });
        }
        Ok(Self { entries, eig_values, eig_vectors })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn from_diag(diag: &[f64]) -> Result<Self> {
        Self::new(Matrix::from_diag(diag))
    }

    /// The 1×1 matrix `[s]`.
    pub fn scalar(s: f64) -> Result<Self> {
        Self::from_diag(&[s])
    }

    pub fn dim(&self) -> usize {
        self.entries.dim()
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn eig_values(&self) -> &[f64] {
        &self.eig_values
    }

    pub fn eig_vectors(&self) -> &Matrix {
        &self.eig_vectors
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eig_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eig_values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `Q diag(values) Qᵀ`.
    fn spectral(&self, values: &[f64]) -> Matrix {
        let n = self.dim();
        let q = &self.eig_vectors;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v: f64 = (0..n).map(|k| q[(i, k)] * values[k] * q[(j, k)]).sum();
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    /// `Q diag(f(λᵢ)) Qᵀ`. Fails if `f` is not finite on the spectrum.
    pub fn apply_scalar_function<F: Fn(f64) -> f64>(&self, f: F) -> Result<Matrix> {
        let values = self
            .eig_values
            .iter()
            .map(|&l| {
                let v = f(l);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFiniteResult { eigenvalue: l })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.spectral(&values))
    }

    /// `Q diag(num(λᵢ) / den(λᵢ)) Qᵀ` for scaled hyperbolic functions, evaluated
    /// without forming `cosh`/`sinh` of large arguments.
    pub fn ratio_function(&self, num: ScaledHyperbolic, den: ScaledHyperbolic) -> Result<Matrix> {
        let values = self
            .eig_values
            .iter()
            .map(|&l| hyperbolic_ratio(num.kind, num.scale * l, den.kind, den.scale * l).map_err(|e| match e {
                Error::SingularDenominator { .. } => Error::SingularDenominator { eigenvalue: l },
                Error::NonFiniteResult { .. } => Error::NonFiniteResult { eigenvalue: l },
                other => other,
            }))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.spectral(&values))
    }

    /// Inverse via reciprocal eigenvalues.
    pub fn inverse(&self) -> SpdMatrix {
        let inv: Vec<f64> = self.eig_values.iter().map(|l| 1.0 / l).collect();
        SpdMatrix {
            entries: self.spectral(&inv),
            eig_values: inv,
            eig_vectors: self.eig_vectors.clone(),
        }
    }

    /// `exp(scale · M)`; entries underflow to zero harmlessly for large negative scales.
    pub fn exp_scaled(&self, scale: f64) -> Result<Matrix> {
        self.apply_scalar_function(|l| (scale * l).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hyperbolic {
    Cosh,
    Sinh,
}

/// `kind(scale · λ)` as a function of an eigenvalue `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledHyperbolic {
    pub kind: Hyperbolic,
    pub scale: f64,
}

impl ScaledHyperbolic {
    pub fn cosh(scale: f64) -> Self {
        Self { kind: Hyperbolic::Cosh, scale }
    }

    pub fn sinh(scale: f64) -> Self {
        Self { kind: Hyperbolic::Sinh, scale }
    }
}

/// `cosh(x)` or `sinh(x)` written as `sign · e^{|x|} · m / 2`; returns `(sign, m)`.
fn hyperbolic_mantissa(kind: Hyperbolic, x: f64) -> (f64, f64) {
    let ax = x.abs();
    match kind {
        Hyperbolic::Cosh => (1.0, 1.0 + (-2.0 * ax).exp()),
        Hyperbolic::Sinh => (x.signum(), -(-2.0 * ax).exp_m1()),
    }
}

/// Overflow-free `num(a) / den(b)` for `num, den ∈ {cosh, sinh}`.
pub fn hyperbolic_ratio(num: Hyperbolic, a: f64, den: Hyperbolic, b: f64) -> Result<f64> {
    let (sa, ma) = hyperbolic_mantissa(num, a);
    let (sb, mb) = hyperbolic_mantissa(den, b);
    if mb == 0.0 || sb == 0.0 {
        return Err(Error::SingularDenominator { eigenvalue: b });
    }
    if ma == 0.0 {
        return Ok(0.0);
    }
    let v = sa * sb * (a.abs() - b.abs()).exp() * ma / mb;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteResult { eigenvalue: a })
    }
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Row vector times matrix, `v·M`.
pub fn row_vec_mul(v: &[f64], m: &Matrix) -> Result<Vec<f64>> {
    check_dim(m.dim(), v.len())?;
    let n = m.dim();
    let mut out = vec![0.0; n];
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        for (o, mij) in out.iter_mut().zip(m.row(i)) {
            *o += vi * mij;
        }
    }
    Ok(out)
}

/// `v M vᵀ`.
pub fn quad_form(v: &[f64], m: &Matrix) -> Result<f64> {
    Ok(dot(&row_vec_mul(v, m)?, v))
}

/// Cyclic Jacobi eigensolver for a symmetric matrix. Returns eigenvalues and a
/// matrix whose columns are the corresponding orthonormal eigenvectors.
fn jacobi_eigen(m: &Matrix) -> (Vec<f64>, Matrix) {
    let n = m.dim();
    let mut a = m.clone();
    // symmetrize away the (tolerated) round-off asymmetry
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
    let mut q = Matrix::identity(n);
    let scale = a.max_abs().max(f64::MIN_POSITIVE);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apr = a[(p, r)];
                if apr.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(r, r)] - a[(p, p)]) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akr = a[(k, r)];
                    a[(k, p)] = c * akp - s * akr;
                    a[(k, r)] = s * akp + c * akr;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let ark = a[(r, k)];
                    a[(p, k)] = c * apk - s * ark;
                    a[(r, k)] = s * apk + c * ark;
                }
                for k in 0..n {
                    let qkp = q[(k, p)];
                    let qkr = q[(k, r)];
                    q[(k, p)] = c * qkp - s * qkr;
                    q[(k, r)] = s * qkp + c * qkr;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[(i, i)]).collect();
    (values, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn identity_and_diagonal_spectra() {
        let id = SpdMatrix::from_diag(&[1.0, 1.0]).unwrap();
        assert_eq!(id.eig_values(), &[1.0, 1.0]);

        let d = SpdMatrix::from_rows(&[[2.0, 0.0], [0.0, 3.0]]).unwrap();
        let mut ev = d.eig_values().to_vec();
        ev.sort_by(f64::total_cmp);
        assert_eq!(ev, vec![2.0, 3.0]);
    }

    #[test]
    fn rejects_indefinite_and_asymmetric() {
        // eigenvalues (a+c ± √((a−c)²+4b²))/2 = 3, −1
        match SpdMatrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]) {
            Err(Error::NotPositiveDefinite { min_eigenvalue }) => assert!(close(min_eigenvalue, -1.0, 1e-12)),
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
        assert!(matches!(
            SpdMatrix::from_rows(&[[1.0, 0.1], [0.2, 1.0]]),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn scalar_functions() {
        let m = SpdMatrix::from_diag(&[2f64.ln()]).unwrap();
        assert!(close(m.apply_scalar_function(f64::exp).unwrap()[(0, 0)], 2.0, 1e-15));

        // cosh of [0]; [0] is not SPD so evaluate cosh(0·λ) on a positive spectrum
        let one = SpdMatrix::scalar(1.0).unwrap();
        assert_eq!(one.apply_scalar_function(|l| (0.0 * l).cosh()).unwrap()[(0, 0)], 1.0);

        let d = SpdMatrix::from_diag(&[1.0, 2.0]).unwrap();
        let s = d.apply_scalar_function(f64::sinh).unwrap();
        assert!(close(s[(0, 0)], 1.1752012, 1e-7));
        assert!(close(s[(1, 1)], 3.6268604, 1e-7));
        assert!(close(s[(0, 1)], 0.0, 1e-15));

        assert!(matches!(
            one.apply_scalar_function(|l| (1000.0 * l).exp()),
            Err(Error::NonFiniteResult { .. })
        ));
    }

    #[test]
    fn stable_ratios() {
        let one = SpdMatrix::scalar(1.0).unwrap();
        let r = one.ratio_function(ScaledHyperbolic::cosh(0.0), ScaledHyperbolic::sinh(1.0)).unwrap();
        assert!(close(r[(0, 0)], 0.8509181, 1e-7));

        let m = SpdMatrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]]).unwrap();
        let r = m.ratio_function(ScaledHyperbolic::sinh(0.7), ScaledHyperbolic::sinh(0.7)).unwrap();
        assert!(r.max_abs_diff(&Matrix::identity(2)) < 1e-14);

        let r = one.ratio_function(ScaledHyperbolic::cosh(400.0), ScaledHyperbolic::sinh(420.0)).unwrap();
        let expected = (-20f64).exp() * (1.0 + (-800f64).exp()) / (1.0 - (-840f64).exp());
        assert!(close(r[(0, 0)], expected, 1e-22));
        assert!(close(r[(0, 0)], 2.0612e-9, 1e-13));

        assert!(matches!(
            one.ratio_function(ScaledHyperbolic::cosh(1.0), ScaledHyperbolic::sinh(0.0)),
            Err(Error::SingularDenominator { .. })
        ));
    }

    #[test]
    fn inverse_and_products() {
        let m = SpdMatrix::from_diag(&[2.0, 4.0]).unwrap();
        assert_eq!(m.inverse().entries(), &Matrix::from_diag(&[0.5, 0.25]));
        assert_eq!(quad_form(&[1.0, 1.0], &Matrix::identity(2)).unwrap(), 2.0);
        let a = Matrix::from_rows(&[[2.0, 1.0], [1.0, 3.0]]).unwrap();
        assert_eq!(quad_form(&[1.0, 2.0], &a).unwrap(), 18.0);
        assert_eq!(row_vec_mul(&[1.0, 2.0], &a).unwrap(), vec![4.0, 7.0]);
        assert!(matches!(quad_form(&[1.0], &a), Err(Error::DimensionMismatch { .. })));
    }

    fn spd_strategy() -> impl Strategy<Value = SpdMatrix> {
        (1usize..=4)
            .prop_flat_map(|d| (Just(d), prop::collection::vec(-1.0f64..1.0, d * d)))
            .prop_map(|(d, b)| {
                // B Bᵀ + 0.1 I is SPD
                let b = Matrix::from_row_major(d, b).unwrap();
                let mut m = b.matmul(&b.transpose()).unwrap();
                for i in 0..d {
                    m[(i, i)] += 0.1;
                }
                for i in 0..d {
                    for j in 0..i {
                        m[(i, j)] = m[(j, i)];
                    }
                }
                SpdMatrix::new(m).unwrap()
            })
    }

    proptest! {
        #[test]
        fn decomposition_is_orthogonal_and_reconstructs(m in spd_strategy()) {
            let q = m.eig_vectors();
            let qtq = q.transpose().matmul(q).unwrap();
            prop_assert!(qtq.max_abs_diff(&Matrix::identity(m.dim())) < 1e-10);
            let rec = m.apply_scalar_function(|l| l).unwrap();
            prop_assert!(rec.max_abs_diff(m.entries()) <= 1e-10 * m.entries().max_abs());
        }

        #[test]
        fn hyperbolic_identity(m in spd_strategy()) {
            let c = m.apply_scalar_function(f64::cosh).unwrap();
            let s = m.apply_scalar_function(f64::sinh).unwrap();
            let diff = c.matmul(&c).unwrap().sub(&s.matmul(&s).unwrap()).unwrap();
            prop_assert!(diff.max_abs_diff(&Matrix::identity(m.dim())) < 1e-9);
        }

        #[test]
        fn ratio_matches_direct(m in spd_strategy(), a in 0.0f64..2.0, b in 0.1f64..2.0) {
            let r = m.ratio_function(ScaledHyperbolic::cosh(a), ScaledHyperbolic::sinh(b)).unwrap();
            let num = m.apply_scalar_function(|l| (a * l).cosh()).unwrap();
            let den_inv = m.apply_scalar_function(|l| 1.0 / (b * l).sinh()).unwrap();
            let direct = num.matmul(&den_inv).unwrap();
            prop_assert!(r.max_abs_diff(&direct) < 1e-9 * (1.0 + direct.max_abs()));
        }

        #[test]
        fn inverse_times_matrix_is_identity(m in spd_strategy()) {
            let p = m.inverse().entries().matmul(m.entries()).unwrap();
            prop_assert!(p.max_abs_diff(&Matrix::identity(m.dim())) < 1e-10);
        }
    }
}
