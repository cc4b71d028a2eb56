//! Dilation matrices: expansive `d×d` matrices `M`, their powers, determinant
//! `m = |det M|` and isotropy diagnostics.
//!
//! Integer matrices (the usual case for lattice refinement) are stored exactly
//! and their positive powers are computed in integer arithmetic.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{QpError, Result};

/// Eigenvalue moduli must exceed this to count as expansive.
const EXPANSIVE_MARGIN: f64 = 1e-9;
/// Eigenvector-matrix condition number above which `M` counts as non-diagonalizable.
const DIAGONALIZABLE_COND: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct DilationMatrix {
    entries: DMatrix<f64>,
    integer: Option<Vec<i64>>,
    det_abs: f64,
    eigenvalues: Vec<Complex64>,
    eig_moduli: Vec<f64>,
}

impl DilationMatrix {
    /// Builds a dilation matrix from row-major nested rows, e.g. `[[2,0],[0,4]]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if d == 0 {
            return Err(QpError::Config("dilation matrix must have at least one row".into()));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(QpError::Config(format!(
                "dilation matrix must be square: row of length {} in a {d}x{d} matrix",
                bad.len()
            )));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_matrix(DMatrix::from_row_slice(d, d, &flat))
    }

    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(QpError::Config("dilation matrix must be square and non-empty".into()));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(QpError::Config("dilation matrix has non-finite entries".into()));
        }
        let d = entries.nrows();
        let integer = if entries.iter().all(|v| v.fract() == 0.0 && v.abs() < 1e15) {
            let mut flat = Vec::with_capacity(d * d);
            for r in 0..d {
                for c in 0..d {
                    flat.push(entries[(r, c)] as i64);
                }
            }
            Some(flat)
        } else {
            None
        };
        let det_abs = match &integer {
            Some(flat) => integer_det(flat, d).map(|v| v.unsigned_abs() as f64),
            None => None,
        }
        .unwrap_or_else(|| entries.determinant().abs());

        let eigenvalues = eigenvalues(&entries)?;
        let eig_moduli: Vec<f64> = eigenvalues.iter().map(|z| z.norm()).collect();
        if let Some(&bad) = eig_moduli.iter().find(|&&r| r <= 1.0 + EXPANSIVE_MARGIN) {
            return Err(QpError::NotExpansive { modulus: bad });
        }
        let prod: f64 = eig_moduli.iter().product();
        if (prod - det_abs).abs() > 1e-10 * det_abs.max(1.0) {
            return Err(QpError::Numeric(format!(
                "eigenvalue moduli product {prod} disagrees with |det M| = {det_abs}"
            )));
        }
        Ok(DilationMatrix { entries, integer, det_abs, eigenvalues, eig_moduli })
    }

    /// `c·I` in dimension `d`.
    pub fn scalar(c: f64, d: usize) -> Result<Self> {
        Self::from_matrix(DMatrix::identity(d, d) * c)
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::from_matrix(DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(diag)))
    }

    /// A small library of named matrices used by tests and configs.
    pub fn builtin(name: &str) -> Option<Self> {
        let m = match name {
            "dyadic" | "dyadic1" => Self::scalar(2.0, 1),
            "triadic" => Self::scalar(3.0, 1),
            "dyadic2" => Self::scalar(2.0, 2),
            "dyadic3" => Self::scalar(2.0, 3),
            "aniso24" => Self::diagonal(&[2.0, 4.0]),
            "quincunx" => Self::from_rows(&[vec![1.0, 1.0], vec![-1.0, 1.0]]),
            "twin_dragon" => Self::from_rows(&[vec![1.0, -1.0], vec![1.0, 1.0]]),
            "jordan2" => Self::from_rows(&[vec![2.0, 1.0], vec![0.0, 2.0]]),
            _ => return None,
        };
        m.ok()
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["dyadic1", "triadic", "dyadic2", "dyadic3", "aniso24", "quincunx", "twin_dragon", "jordan2"]
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn is_integer(&self) -> bool {
        self.integer.is_some()
    }

    /// `m = |det M|`.
    pub fn det_abs(&self) -> f64 {
        self.det_abs
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    pub fn eig_moduli(&self) -> &[f64] {
        &self.eig_moduli
    }

    /// Geometric-mean eigenvalue modulus `m^{1/d}`.
    pub fn lambda_geom(&self) -> f64 {
        self.det_abs.powf(1.0 / self.dim() as f64)
    }

    /// Row-major rows, for serialization.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|r| self.entries.row(r).iter().copied().collect()).collect()
    }

    /// `M^j` for any integer `j`.
    ///
    /// `j = 0` gives the exact identity. Positive powers of integer matrices
    /// use integer arithmetic; negative powers invert once and multiply.
    pub fn power(&self, j: i32) -> Result<DMatrix<f64>> {
        let d = self.dim();
        if j == 0 {
            return Ok(DMatrix::identity(d, d));
        }
        if j > 0 {
            if let Some(flat) = &self.integer {
                if let Some(p) = integer_power(flat, d, j as u32) {
                    return Ok(DMatrix::from_fn(d, d, |r, c| p[r * d + c] as f64));
                }
            }
            return Ok(repeated_product(&self.entries, j as u32));
        }
        let inv = self
            .entries
            .clone()
            .try_inverse()
            .ok_or_else(|| QpError::Singular("dilation matrix inverse".into()))?;
        Ok(repeated_product(&inv, j.unsigned_abs()))
    }

    /// True iff all eigenvalue moduli agree within `tol` and `M` is
    /// diagonalizable (eigenvector matrix condition number below 1e8).
    pub fn is_isotropic(&self, tol: f64) -> bool {
        let (lo, hi) = self
            .eig_moduli
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &r| (lo.min(r), hi.max(r)));
        if hi - lo > tol {
            return false;
        }
        eigenvector_condition(&self.entries, &self.eigenvalues) < DIAGONALIZABLE_COND
    }

    /// Condition number of a matrix of eigenvectors; infinite when defective.
    pub fn eigenvector_condition(&self) -> f64 {
        eigenvector_condition(&self.entries, &self.eigenvalues)
    }
}

fn repeated_product(a: &DMatrix<f64>, n: u32) -> DMatrix<f64> {
    let mut acc = a.clone();
    for _ in 1..n {
        acc = &acc * a;
    }
    acc
}

fn integer_power(flat: &[i64], d: usize, n: u32) -> Option<Vec<i64>> {
    let base: Vec<i128> = flat.iter().map(|&v| v as i128).collect();
    let mut acc = base.clone();
    for _ in 1..n {
        let mut next = vec![0i128; d * d];
        for r in 0..d {
            for c in 0..d {
                let mut s: i128 = 0;
                for k in 0..d {
                    s = s.checked_add(acc[r * d + k].checked_mul(base[k * d + c])?)?;
                }
                next[r * d + c] = s;
            }
        }
        acc = next;
    }
    // f64 is exact below 2^53
    acc.into_iter()
        .map(|v| if v.unsigned_abs() < (1u128 << 53) { Some(v as i64) } else { None })
        .collect()
}

/// Exact determinant by fraction-free Bareiss elimination.
fn integer_det(flat: &[i64], d: usize) -> Option<i128> {
    let mut a: Vec<i128> = flat.iter().map(|&v| v as i128).collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..d {
        if a[k * d + k] == 0 {
            let swap = (k + 1..d).find(|&r| a[r * d + k] != 0);
            match swap {
                Some(r) => {
                    for c in 0..d {
                        a.swap(k * d + c, r * d + c);
                    }
                    sign = -sign;
                }
                None => return Some(0),
            }
        }
        for i in k + 1..d {
            for j in k + 1..d {
                let v = a[i * d + j]
                    .checked_mul(a[k * d + k])?
                    .checked_sub(a[i * d + k].checked_mul(a[k * d + j])?)?;
                a[i * d + j] = v / prev;
            }
        }
        prev = a[k * d + k];
    }
    Some(sign * a[(d - 1) * d + (d - 1)])
}

/// Eigenvalues by characteristic polynomial for `d <= 3`, Schur/QR otherwise.
fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let d = m.nrows();
    match d {
        1 => Ok(vec![Complex64::new(m[(0, 0)], 0.0)]),
        2 => {
            let tr = m[(0, 0)] + m[(1, 1)];
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            Ok(quadratic_roots(-tr, det).to_vec())
        }
        3 => {
            let tr = m.trace();
            let minors = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
                + m[(0, 0)] * m[(2, 2)]
                - m[(0, 2)] * m[(2, 0)]
                + m[(1, 1)] * m[(2, 2)]
                - m[(1, 2)] * m[(2, 1)];
            let det = m.determinant();
            // λ³ − tr λ² + minors λ − det
            Ok(cubic_roots(-tr, minors, -det).to_vec())
        }
        _ => Ok(m.clone().complex_eigenvalues().iter().copied().collect()),
    }
}

/// Roots of `λ² + bλ + c`.
fn quadratic_roots(b: f64, c: f64) -> [Complex64; 2] {
    let disc = b * b - 4.0 * c;
    if disc >= 0.0 {
        let s = disc.sqrt();
        let sgn = if b >= 0.0 { 1.0 } else { -1.0 };
        let q = -0.5 * (b + sgn * s);
        if q == 0.0 {
            return [Complex64::new(0.0, 0.0); 2];
        }
        [Complex64::new(q, 0.0), Complex64::new(c / q, 0.0)]
    } else {
        let re = -0.5 * b;
        let im = 0.5 * (-disc).sqrt();
        [Complex64::new(re, im), Complex64::new(re, -im)]
    }
}

/// Roots of `λ³ + aλ² + bλ + c`: one real root by bracketed Newton, then deflation.
fn cubic_roots(a: f64, b: f64, c: f64) -> [Complex64; 3] {
    let p = |x: f64| ((x + a) * x + b) * x + c;
    let dp = |x: f64| (3.0 * x + 2.0 * a) * x + b;
    let bound = 1.0 + a.abs().max(b.abs()).max(c.abs());
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if p(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-12 * bound {
            break;
        }
    }
    let mut r = 0.5 * (lo + hi);
    for _ in 0..5 {
        let g = dp(r);
        if g == 0.0 {
            break;
        }
        let step = p(r) / g;
        r -= step;
        if step.abs() < 1e-16 * r.abs().max(1.0) {
            break;
        }
    }
    let [q1, q2] = quadratic_roots(a + r, b + r * (a + r));
    [Complex64::new(r, 0.0), q1, q2]
}

fn eigenvector_condition(m: &DMatrix<f64>, eigs: &[Complex64]) -> f64 {
    let d = m.nrows();
    let scale = m.norm().max(1.0);
    let mc: DMatrix<Complex64> = m.map(|v| Complex64::new(v, 0.0));
    let mut used = vec![false; eigs.len()];
    let mut columns: Vec<nalgebra::DVector<Complex64>> = Vec::with_capacity(d);
    for i in 0..eigs.len() {
        if used[i] {
            continue;
        }
        let cluster: Vec<usize> = (i..eigs.len())
            .filter(|&k| !used[k] && (eigs[k] - eigs[i]).norm() <= 1e-8 * scale)
            .collect();
        for &k in &cluster {
            used[k] = true;
        }
        let lam = cluster.iter().map(|&k| eigs[k]).sum::<Complex64>() / cluster.len() as f64;
        let shifted = &mc - DMatrix::<Complex64>::identity(d, d) * lam;
        let svd = shifted.svd(false, true);
        let v_t = match svd.v_t {
            Some(v) => v,
            None => return f64::INFINITY,
        };
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y]));
        for &idx in order.iter().take(cluster.len()) {
            if svd.singular_values[idx] > 1e-6 * scale {
                // geometric multiplicity below algebraic: defective
                return f64::INFINITY;
            }
            columns.push(v_t.row(idx).adjoint());
        }
    }
    if columns.len() != d {
        return f64::INFINITY;
    }
    let v = DMatrix::from_columns(&columns);
    let sv = v.singular_values();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for s in sv.iter() {
        lo = lo.min(*s);
        hi = hi.max(*s);
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Spectral norm (largest singular value) by power iteration on `AᵀA`,
/// stopping at relative change below 1e-12, at most 10 000 iterations.
pub fn operator_norm(a: &DMatrix<f64>) -> Result<f64> {
    const MAX_ITER: usize = 10_000;
    let n = a.ncols();
    if n == 0 || a.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let ata = a.transpose() * a;
    let mut v = nalgebra::DVector::from_fn(n, |i, _| 1.0 + 0.1 * i as f64 + 0.01 * (i * i) as f64);
    v /= v.norm();
    let mut lambda = 0.0f64;
    for it in 1..=MAX_ITER {
        let w = &ata * &v;
        let nw = w.norm();
        if nw == 0.0 {
            return Ok(0.0);
        }
        let next = v.dot(&w);
        v = w / nw;
        if it > 1 && (next - lambda).abs() <= 1e-12 * next.abs() {
            return Ok(next.max(0.0).sqrt());
        }
        lambda = next;
    }
    Err(QpError::NonConvergence { what: "operator norm power iteration", iterations: MAX_ITER })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, b, c, d])
    }

    #[test]
    fn scalar_power() {
        let m = DilationMatrix::scalar(2.0, 1).unwrap();
        assert_eq!(m.power(3).unwrap()[(0, 0)], 8.0);
        assert_eq!(m.power(0).unwrap()[(0, 0)], 1.0);
    }

    #[test]
    fn diagonal_inverse_power() {
        let m = DilationMatrix::diagonal(&[2.0, 4.0]).unwrap();
        let p = m.power(-1).unwrap();
        assert_eq!(p, m2(0.5, 0.0, 0.0, 0.25));
    }

    #[test]
    fn quincunx_square() {
        let m = DilationMatrix::builtin("quincunx").unwrap();
        assert!(m.is_integer());
        // direct 2x2 multiplication: [[1,1],[-1,1]]^2
        let a = [[1.0, 1.0], [-1.0, 1.0]];
        let mut sq = [[0.0; 2]; 2];
        for (r, row) in sq.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = a[r][0] * a[0][c] + a[r][1] * a[1][c];
            }
        }
        assert_eq!(sq, [[0.0, 2.0], [-2.0, 0.0]]);
        assert_eq!(m.power(2).unwrap(), m2(0.0, 2.0, -2.0, 0.0));
        assert_eq!(m.det_abs(), 2.0);
    }

    #[test]
    fn operator_norms() {
        assert_relative_eq!(operator_norm(&m2(2.0, 0.0, 0.0, 4.0)).unwrap(), 4.0, max_relative = 1e-12);
        assert_relative_eq!(operator_norm(&m2(0.0, 2.0, -2.0, 0.0)).unwrap(), 2.0, max_relative = 1e-12);
        let three = DMatrix::<f64>::identity(3, 3) * 3.0;
        assert_relative_eq!(operator_norm(&three).unwrap(), 3.0, max_relative = 1e-12);
        // 2x2 closed form: singular values of [[1,2],[0,1]] are 1±√2
        let s = operator_norm(&m2(1.0, 2.0, 0.0, 1.0)).unwrap();
        assert_relative_eq!(s, 1.0 + 2f64.sqrt(), max_relative = 1e-10);
        assert_eq!(operator_norm(&DMatrix::zeros(2, 2)).unwrap(), 0.0);
    }

    #[test]
    fn isotropy() {
        assert!(DilationMatrix::scalar(2.0, 2).unwrap().is_isotropic(1e-9));
        assert!(!DilationMatrix::diagonal(&[2.0, 4.0]).unwrap().is_isotropic(1e-9));
        let q = DilationMatrix::builtin("quincunx").unwrap();
        // characteristic polynomial λ² − 2λ + 2 has roots 1 ± i, modulus √2
        for r in q.eig_moduli() {
            assert_relative_eq!(*r, 2f64.sqrt(), max_relative = 1e-14);
        }
        assert!(q.is_isotropic(1e-9));
        // equal moduli but a Jordan block
        let j = DilationMatrix::builtin("jordan2").unwrap();
        assert!(j.eigenvector_condition().is_infinite());
        assert!(!j.is_isotropic(1e-9));
    }

    #[test]
    fn rejects_non_expansive() {
        assert!(matches!(
            DilationMatrix::diagonal(&[2.0, 1.0]),
            Err(QpError::NotExpansive { .. })
        ));
        assert!(DilationMatrix::diagonal(&[2.0, 0.5]).is_err());
        assert!(DilationMatrix::from_rows(&[vec![2.0, 0.0]]).is_err());
    }

    #[test]
    fn cubic_eigenvalues() {
        let m = DilationMatrix::from_rows(&[
            vec![2.0, 1.0, 0.0],
            vec![0.0, 3.0, 1.0],
            vec![1.0, 0.0, 2.0],
        ])
        .unwrap();
        let prod: f64 = m.eig_moduli().iter().product();
        assert_relative_eq!(prod, m.det_abs(), max_relative = 1e-10);
        for z in m.eigenvalues() {
            // det(M − zI) = 0
            let mc = m.entries().map(|v| Complex64::new(v, 0.0));
            let shifted = mc - DMatrix::<Complex64>::identity(3, 3) * *z;
            assert!(shifted.determinant().norm() < 1e-9);
        }
    }

    #[test]
    fn higher_dimension_uses_schur() {
        let m = DilationMatrix::diagonal(&[2.0, 3.0, 4.0, 5.0]).unwrap();
        let mut mods = m.eig_moduli().to_vec();
        mods.sort_by(f64::total_cmp);
        for (a, b) in mods.iter().zip([2.0, 3.0, 4.0, 5.0]) {
            assert_relative_eq!(*a, b, max_relative = 1e-12);
        }
    }
}
