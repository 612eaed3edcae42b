use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use std::ops::{Add, AddAssign, Mul, Sub};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// A `k×k` complex matrix, row-major. `k = 1` is the scalar case.
#[derive(Clone, Debug, PartialEq)]
pub struct Fiber {
    k: usize,
    data: SmallVec<[C64; 4]>,
}

impl Fiber {
    pub fn zeros(k: usize) -> Self {
        Fiber {
            k,
            data: SmallVec::from_elem(C64::new(0.0, 0.0), k * k),
        }
    }

    pub fn identity(k: usize) -> Self {
        let mut f = Fiber::zeros(k);
        for i in 0..k {
            f.data[i * k + i] = C64::new(1.0, 0.0);
        }
        f
    }

    pub fn scalar(c: C64) -> Self {
        Fiber {
            k: 1,
            data: SmallVec::from_elem(c, 1),
        }
    }

    pub fn real(r: f64) -> Self {
        Fiber::scalar(C64::new(r, 0.0))
    }

    /// `c·1` in dimension k.
    pub fn scalar_in(k: usize, c: C64) -> Self {
        let mut f = Fiber::zeros(k);
        for i in 0..k {
            f.data[i * k + i] = c;
        }
        f
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let k = rows.len();
        if k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidSpec("fiber must be a nonempty square matrix".into()));
        }
        Ok(Fiber {
            k,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn diagonal(d: &[C64]) -> Self {
        let k = d.len();
        let mut f = Fiber::zeros(k);
        for (i, &v) in d.iter().enumerate() {
            f.data[i * k + i] = v;
        }
        f
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.k + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.k + j] = v;
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn entries_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn rows(&self) -> Vec<Vec<C64>> {
        self.data.chunks(self.k).map(|r| r.to_vec()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.k).all(|i| (0..self.k).all(|j| i == j || self.get(i, j) == C64::new(0.0, 0.0)))
    }

    pub fn adjoint(&self) -> Self {
        let k = self.k;
        let mut out = Fiber::zeros(k);
        for i in 0..k {
            for j in 0..k {
                out.data[j * k + i] = self.data[i * k + j].conj();
            }
        }
        out
    }

    pub fn scale(&self, c: C64) -> Self {
        Fiber {
            k: self.k,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }

    pub fn matmul(&self, other: &Fiber) -> Fiber {
        debug_assert_eq!(self.k, other.k);
        let k = self.k;
        if k == 1 {
            return Fiber::scalar(self.data[0] * other.data[0]);
        }
        let mut out = Fiber::zeros(k);
        for i in 0..k {
            for l in 0..k {
                let a = self.data[i * k + l];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for j in 0..k {
                    out.data[i * k + j] += a * other.data[l * k + j];
                }
            }
        }
        out
    }

    /// `self += a·b`.
    pub fn add_product(&mut self, a: &Fiber, b: &Fiber) {
        let k = self.k;
        if k == 1 {
            self.data[0] += a.data[0] * b.data[0];
            return;
        }
        for i in 0..k {
            for l in 0..k {
                let x = a.data[i * k + l];
                if x.re == 0.0 && x.im == 0.0 {
                    continue;
                }
                for j in 0..k {
                    self.data[i * k + j] += x * b.data[l * k + j];
                }
            }
        }
    }

    /// `w · self · w^*`.
    pub fn conjugate_by(&self, w: &Fiber) -> Fiber {
        w.matmul(self).matmul(&w.adjoint())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest singular value, the C*-norm of `M_k`.
    pub fn norm(&self) -> f64 {
        match self.k {
            1 => self.data[0].norm(),
            2 => {
                let t: f64 = self.data.iter().map(|z| z.norm_sqr()).sum();
                let det = (self.data[0] * self.data[3] - self.data[1] * self.data[2]).norm_sqr();
                let disc = (t * t - 4.0 * det).max(0.0).sqrt();
                ((t + disc) / 2.0).sqrt()
            }
            _ => {
                if self.is_diagonal() {
                    return (0..self.k).map(|i| self.get(i, i).norm()).fold(0.0, f64::max);
                }
                self.to_matrix().singular_values().max()
            }
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    pub fn to_matrix(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.k, self.k, &self.data)
    }

    pub fn from_matrix(m: &DMatrix<C64>) -> Self {
        let k = m.nrows();
        let mut f = Fiber::zeros(k);
        for i in 0..k {
            for j in 0..k {
                f.data[i * k + j] = m[(i, j)];
            }
        }
        f
    }

    /// `‖u^*u − 1‖` as a unitarity defect.
    pub fn unitarity_defect(&self) -> f64 {
        (self.adjoint().matmul(self) - Fiber::identity(self.k)).norm()
    }

    /// Integer power of a unitary (negative exponents use the adjoint).
    pub fn unitary_pow(&self, n: i64) -> Fiber {
        let mut base = if n < 0 { self.adjoint() } else { self.clone() };
        let mut e = n.unsigned_abs();
        let mut acc = Fiber::identity(self.k);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.matmul(&base);
            }
            base = base.matmul(&base);
            e >>= 1;
        }
        acc
    }

    /// Standard Gaussian entries (real and imaginary parts independent).
    pub fn random<R: Rng>(k: usize, diagonal: bool, rng: &mut R) -> Self {
        let mut f = Fiber::zeros(k);
        for i in 0..k {
            for j in 0..k {
                if diagonal && i != j {
                    continue;
                }
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                f.data[i * k + j] = C64::new(re, im);
            }
        }
        f
    }

    /// Haar-like random unitary from the QR factorization of a Gaussian matrix.
    pub fn random_unitary<R: Rng>(k: usize, rng: &mut R) -> Self {
        let g = Fiber::random(k, false, rng).to_matrix();
        let qr = g.qr();
        let (q, r) = (qr.q(), qr.r());
        let mut q = q;
        for j in 0..k {
            let d = r[(j, j)];
            let ph = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
            for i in 0..k {
                q[(i, j)] *= ph;
            }
        }
        Fiber::from_matrix(&q)
    }
}

impl Add for &Fiber {
    type Output = Fiber;
    fn add(self, o: &Fiber) -> Fiber {
        Fiber {
            k: self.k,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Fiber {
    type Output = Fiber;
    fn sub(self, o: &Fiber) -> Fiber {
        Fiber {
            k: self.k,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Sub for Fiber {
    type Output = Fiber;
    fn sub(self, o: Fiber) -> Fiber {
        &self - &o
    }
}

impl AddAssign<&Fiber> for Fiber {
    fn add_assign(&mut self, o: &Fiber) {
        for (a, b) in self.data.iter_mut().zip(&o.data) {
            *a += b;
        }
    }
}

impl Mul for &Fiber {
    type Output = Fiber;
    fn mul(self, o: &Fiber) -> Fiber {
        self.matmul(o)
    }
}

/// JSON form of a fiber: rows of `[re, im]` pairs, or a bare number for scalars.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FiberLiteral {
    Real(f64),
    Complex([f64; 2]),
    Matrix(Vec<Vec<[f64; 2]>>),
}

impl FiberLiteral {
    pub fn to_fiber(&self) -> Result<Fiber> {
        match self {
            FiberLiteral::Real(r) => Ok(Fiber::real(*r)),
            FiberLiteral::Complex([re, im]) => Ok(Fiber::scalar(C64::new(*re, *im))),
            FiberLiteral::Matrix(rows) => Fiber::from_rows(
                &rows
                    .iter()
                    .map(|r| r.iter().map(|[re, im]| C64::new(*re, *im)).collect())
                    .collect::<Vec<_>>(),
            ),
        }
    }

    pub fn from_fiber(f: &Fiber) -> Self {
        FiberLiteral::Matrix(
            f.rows()
                .iter()
                .map(|r| r.iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn c_star_identity_and_svd_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..1000 {
            let k = 1 + i % 8;
            let a = Fiber::random(k, false, &mut rng);
            let n = a.norm();
            let svd = a.to_matrix().singular_values().max();
            assert!((n - svd).abs() <= 1e-12 * svd);
            let n2 = a.adjoint().matmul(&a).norm();
            assert!((n2 - n * n).abs() <= 1e-12 * n * n, "k={k}");
        }
    }

    #[test]
    fn unitaries_and_powers() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for k in 1..=4 {
            let u = Fiber::random_unitary(k, &mut rng);
            assert!(u.unitarity_defect() < 1e-12);
            let u3 = u.matmul(&u).matmul(&u);
            assert!((&u.unitary_pow(3) - &u3).norm() < 1e-12);
            assert!((&u.unitary_pow(-2).matmul(&u.unitary_pow(2)) - &Fiber::identity(k)).norm() < 1e-12);
        }
    }

    #[test]
    fn literals_round_trip() {
        let lit: FiberLiteral = serde_json::from_str("[[[1,0],[0,2]],[[0,0],[3,0]]]").unwrap();
        let f = lit.to_fiber().unwrap();
        assert_eq!(f.get(0, 1), C64::new(0.0, 2.0));
        assert_eq!(f.get(1, 1), C64::new(3.0, 0.0));
        let s: FiberLiteral = serde_json::from_str("2.5").unwrap();
        assert_eq!(s.to_fiber().unwrap(), Fiber::real(2.5));
        let back = FiberLiteral::from_fiber(&f).to_fiber().unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn diag_norm() {
        let d = Fiber::diagonal(&[C64::new(3.0, 0.0), C64::new(0.0, 0.0)]);
        assert_eq!(d.norm(), 3.0);
    }
}
