//! Small dense complex matrices.
//!
//! Everything the determinant identities need and nothing more: complex LU
//! with partial pivoting, regularized determinants, Hilbert-Schmidt and
//! operator norms, and a closed-form 2x2 eigensolver.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Default absolute tolerance on `|l1 - l2|` below which `eig2` reports a
/// degenerate pair.
pub const EIG_DEGENERACY_TOL: f64 = 1e-8;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Square complex matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr")]
pub struct CMatrix {
    dim: usize,
    data: Vec<C64>,
}

#[derive(Deserialize)]
struct MatrixRepr {
    dim: usize,
    data: Vec<C64>,
}

impl TryFrom<MatrixRepr> for CMatrix {
    type Error = Error;

    fn try_from(r: MatrixRepr) -> Result<Self> {
        CMatrix::from_row_major(r.dim, r.dim, r.data)
    }
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    /// Builds a matrix from rows; rejects ragged or non-square input.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::NotSquare { rows: dim, cols: row.len() });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { dim, data })
    }

    /// Builds a matrix from a flat row-major buffer of `rows * cols` values.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows != cols {
            return Err(Error::NotSquare { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "expected {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { dim: rows, data })
    }

    pub fn mat2(a: C64, b: C64, c: C64, d: C64) -> Self {
        Self { dim: 2, data: vec![a, b, c, d] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|z| z * s).collect() }
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

    pub fn adjoint(&self) -> Self {
        let mut t = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                t[(j, i)] = self[(i, j)].conj();
            }
        }
        t
    }

    /// `self - other`, entrywise max modulus.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self[(i, j)] * x[j]).sum())
            .collect()
    }

    pub fn lu(&self) -> Result<LuFactor> {
        LuFactor::new(self)
    }

    pub fn inverse(&self) -> Result<Self> {
        self.lu()?.inverse()
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl<'a> Mul<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in product");
        let n = self.dim;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl<'a> Add<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in sum");
        CMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<'a> Sub<&'a CMatrix> for &'a CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in difference");
        CMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// PA = LU with partial pivoting on modulus. `L` has a unit diagonal and is
/// stored below the diagonal of `lu`.
#[derive(Debug, Clone)]
pub struct LuFactor {
    lu: CMatrix,
    perm: Vec<usize>,
    swaps: usize,
}

impl LuFactor {
    pub fn new(m: &CMatrix) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let n = m.dim;
        let mut lu = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut swaps = 0;
        for k in 0..n {
            let (p, _) = (k..n)
                .map(|i| (i, lu[(i, k)].norm()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                swaps += 1;
            }
            let pivot = lu[(k, k)];
            if pivot == ZERO {
                // exact zero column: determinant is zero, leave the rest untouched
                continue;
            }
            for i in (k + 1)..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f == ZERO {
                    continue;
                }
                for j in (k + 1)..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= f * u;
                }
            }
        }
        Ok(Self { lu, perm, swaps })
    }

    pub fn det(&self) -> C64 {
        let d: C64 = (0..self.lu.dim).map(|i| self.lu[(i, i)]).product();
        if self.swaps % 2 == 1 { -d } else { d }
    }

    fn check_regular(&self) -> Result<()> {
        let n = self.lu.dim;
        let scale = self.lu.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..n {
            if self.lu[(i, i)].norm() <= 1e-14 * scale {
                return Err(Error::Singular(format!("zero pivot at step {i}")));
            }
        }
        Ok(())
    }

    pub fn solve(&self, b: &[C64]) -> Result<Vec<C64>> {
        self.check_regular()?;
        let n = self.lu.dim;
        let mut x: Vec<C64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                let l = self.lu[(i, j)];
                x[i] = x[i] - l * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                let u = self.lu[(i, j)];
                x[i] = x[i] - u * x[j];
            }
            x[i] /= self.lu[(i, i)];
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<CMatrix> {
        let n = self.lu.dim;
        let mut inv = CMatrix::zeros(n);
        let mut e = vec![ZERO; n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = ZERO);
            e[j] = ONE;
            let col = self.solve(&e)?;
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Ok(inv)
    }
}

/// Determinant by LU with partial pivoting; row swaps flip the sign.
pub fn lu_det(m: &CMatrix) -> Result<C64> {
    Ok(m.lu()?.det())
}

/// Regularized determinant `det(I + A) exp(-tr A)`.
pub fn det2(a: &CMatrix) -> Result<C64> {
    let shifted = &CMatrix::identity(a.dim) + a;
    Ok(lu_det(&shifted)? * (-a.trace()).exp())
}

/// Hilbert-Schmidt (Frobenius) norm, summed row-major.
pub fn hs_norm(a: &CMatrix) -> f64 {
    a.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Spectral norm estimate by power iteration on `A* A`.
pub fn op_norm(a: &CMatrix) -> f64 {
    let n = a.dim;
    if n == 0 {
        return 0.0;
    }
    let ah = a.adjoint();
    // deterministic, non-symmetric start vector
    let mut x: Vec<C64> = (0..n).map(|i| C64::new(1.0 + 0.1 * i as f64, 0.05 * i as f64)).collect();
    let mut sigma2 = 0.0;
    for _ in 0..500 {
        let y = ah.mul_vec(&a.mul_vec(&x));
        let norm = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let xnorm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let next = norm / xnorm;
        x = y.into_iter().map(|z| z / norm).collect();
        if (next - sigma2).abs() <= 1e-13 * next {
            sigma2 = next;
            break;
        }
        sigma2 = next;
    }
    sigma2.sqrt()
}

/// Eigenvalues and eigenvectors of a 2x2 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigPair2 {
    pub values: [C64; 2],
    pub vectors: [[C64; 2]; 2],
}

/// Roots of `mu^2 - (tr M) mu + det M`, larger modulus first, ties broken by
/// the larger imaginary part.
pub fn eig2(m: &CMatrix) -> Result<EigPair2> {
    eig2_with_tol(m, EIG_DEGENERACY_TOL)
}

pub fn eig2_with_tol(m: &CMatrix, tol: f64) -> Result<EigPair2> {
    if m.dim != 2 {
        return Err(Error::InvalidInput(format!("eig2 needs a 2x2 matrix, got {}x{}", m.dim, m.dim)));
    }
    if !m.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let tr = a + d;
    let det = a * d - b * c;
    let (l1, l2) = quadratic_roots_ordered(tr, det);
    let gap = (l1 - l2).norm();
    if gap < tol {
        return Err(Error::DegenerateEigenpair { gap, tol });
    }
    Ok(EigPair2 { values: [l1, l2], vectors: [eigvec2(a, b, c, d, l1), eigvec2(a, b, c, d, l2)] })
}

/// Roots of `mu^2 - tr mu + det = 0` ordered by (modulus, imaginary part),
/// the larger first. The small root is recovered from `det / big` to avoid
/// cancellation.
pub fn quadratic_roots_ordered(tr: C64, det: C64) -> (C64, C64) {
    let s = (tr * tr - 4.0 * det).sqrt();
    let plus = (tr + s) * 0.5;
    let minus = (tr - s) * 0.5;
    let big = if plus.norm() >= minus.norm() { plus } else { minus };
    let small = if big == ZERO { ZERO } else { det / big };
    order_pair(big, small)
}

fn order_pair(x: C64, y: C64) -> (C64, C64) {
    let (nx, ny) = (x.norm(), y.norm());
    let tie = (nx - ny).abs() <= 1e-13 * nx.max(ny).max(1.0);
    if tie {
        if x.im >= y.im { (x, y) } else { (y, x) }
    } else if nx > ny {
        (x, y)
    } else {
        (y, x)
    }
}

fn eigvec2(a: C64, b: C64, c: C64, d: C64, l: C64) -> [C64; 2] {
    // rows of (M - l I) annihilate the vector; use the better-conditioned row
    let r1 = [a - l, b];
    let r2 = [c, d - l];
    let n1 = r1[0].norm() + r1[1].norm();
    let n2 = r2[0].norm() + r2[1].norm();
    let v = if n1 >= n2 { [r1[1], -r1[0]] } else { [d - l, -c] };
    let norm = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    if norm == 0.0 {
        [ONE, ZERO]
    } else {
        [v[0] / norm, v[1] / norm]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn identity_determinant() {
        assert_eq!(lu_det(&CMatrix::identity(4)).unwrap(), c(1.0, 0.0));
    }

    #[test]
    fn diagonal_determinant() {
        let d = lu_det(&CMatrix::from_diag(&[c(2.0, 0.0), c(0.0, 3.0)])).unwrap();
        assert!((d - c(0.0, 6.0)).norm() < 1e-15);
    }

    #[test]
    fn swap_sign_tracked() {
        let p = CMatrix::from_rows(&[vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]]).unwrap();
        assert_eq!(lu_det(&p).unwrap(), c(-1.0, 0.0));
    }

    #[test]
    fn rejects_ragged_and_nan() {
        assert!(matches!(
            CMatrix::from_rows(&[vec![c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]]),
            Err(Error::NotSquare { .. })
        ));
        assert!(matches!(CMatrix::from_row_major(2, 3, vec![c(0.0, 0.0); 6]), Err(Error::NotSquare { .. })));
        let m = CMatrix::from_diag(&[c(f64::NAN, 0.0)]);
        assert!(matches!(lu_det(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn det2_examples() {
        assert!((det2(&CMatrix::zeros(3)).unwrap() - 1.0).norm() < 1e-15);
        let one = CMatrix::from_diag(&[c(1.0, 0.0)]);
        assert!((det2(&one).unwrap() - 2.0 * (-1.0f64).exp()).norm() < 1e-15);
        assert!((det2(&one).unwrap().re - 0.7357588823).abs() < 1e-10);
        let nil = CMatrix::from_rows(&[vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(0.0, 0.0), c(0.0, 0.0)]]).unwrap();
        assert!((det2(&nil).unwrap() - 1.0).norm() < 1e-15);
    }

    #[test]
    fn det2_of_identity_perturbation() {
        // A = I_n written as I_n + A - I_n
        for n in 1..6 {
            let a = &(&CMatrix::identity(n) + &CMatrix::identity(n)) - &CMatrix::identity(n);
            let expect = 2f64.powi(n as i32) * (-(n as f64)).exp();
            assert!((det2(&a).unwrap() - expect).norm() < 1e-13);
        }
    }

    #[test]
    fn hs_norm_examples() {
        assert_eq!(hs_norm(&CMatrix::zeros(3)), 0.0);
        assert!((hs_norm(&CMatrix::identity(7)) - 7f64.sqrt()).abs() < 1e-15);
        assert_eq!(hs_norm(&CMatrix::from_diag(&[c(3.0, 0.0), c(4.0, 0.0)])), 5.0);
    }

    #[test]
    fn eig2_diagonal() {
        let e = eig2(&CMatrix::from_diag(&[c(0.5, 0.0), c(2.0, 0.0)])).unwrap();
        assert!((e.values[0] - 2.0).norm() < 1e-15);
        assert!((e.values[1] - 0.5).norm() < 1e-15);
    }

    #[test]
    fn eig2_one_step_squared_at_one() {
        // [[1,-1],[1,0]]^2 = [[0,-1],[1,-1]]: trace -1, det 1
        let m = CMatrix::mat2(c(0.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0));
        let e = eig2(&m).unwrap();
        let w = C64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
        assert!((e.values[0] - w).norm() < 1e-14);
        assert!((e.values[1] - w.conj()).norm() < 1e-14);
        assert!((e.values[0].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eig2_degenerate() {
        let m = CMatrix::mat2(c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0));
        assert!(matches!(eig2(&m), Err(Error::DegenerateEigenpair { .. })));
        assert!(eig2(&CMatrix::identity(3)).is_err());
    }

    #[test]
    fn eigenvectors_satisfy_equation() {
        let m = CMatrix::mat2(c(1.0, 2.0), c(-0.5, 0.1), c(0.3, -0.7), c(2.0, 0.0));
        let e = eig2(&m).unwrap();
        for k in 0..2 {
            let v = e.vectors[k];
            let mv = m.mul_vec(&v);
            for i in 0..2 {
                assert!((mv[i] - e.values[k] * v[i]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn inverse_and_op_norm() {
        let m = CMatrix::mat2(c(2.0, 0.0), c(1.0, 1.0), c(0.0, -1.0), c(3.0, 0.5));
        let inv = m.inverse().unwrap();
        assert!((&m * &inv).max_abs_diff(&CMatrix::identity(2)) < 1e-14);
        let d = CMatrix::from_diag(&[c(3.0, 0.0), c(0.0, -5.0), c(1.0, 1.0)]);
        assert!((op_norm(&d) - 5.0).abs() < 1e-10);
        let sing = CMatrix::mat2(c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0));
        assert!(matches!(sing.inverse(), Err(Error::Singular(_))));
    }
}
