//! Minimal dense complex matrices, sized for gate algebra (dim ≤ 8).

use num_complex::Complex64;

pub type C64 = Complex64;

/// Square row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<C64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Matrix { dim, data: vec![C64::new(0.0, 0.0); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Matrix::zeros(dim);
        for i in 0..dim {
            m.set(i, i, C64::new(1.0, 0.0));
        }
        m
    }

    /// Builds a matrix from rows; panics if the shape is not square.
    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let dim = rows.len();
        let mut m = Matrix::zeros(dim);
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), dim, "matrix rows must be square");
            for (c, v) in row.iter().enumerate() {
                m.set(r, c, *v);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.dim + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: C64) {
        self.data[r * self.dim + c] = v;
    }

    /// `self * rhs` (matrix product).
    pub fn mul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        let mut out = Matrix::zeros(self.dim);
        for r in 0..self.dim {
            for k in 0..self.dim {
                let a = self.get(r, k);
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for c in 0..self.dim {
                    let v = out.get(r, c) + a * rhs.get(k, c);
                    out.set(r, c, v);
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> Matrix {
        let mut out = Matrix::zeros(self.dim);
        for r in 0..self.dim {
            for c in 0..self.dim {
                out.set(c, r, self.get(r, c).conj());
            }
        }
        out
    }

    pub fn scale(&self, z: C64) -> Matrix {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= z;
        }
        out
    }

    /// Kronecker product `self ⊗ other`; the factors of `self` index the
    /// high-order bits of the result.
    pub fn kron(&self, other: &Matrix) -> Matrix {
        let d = self.dim * other.dim;
        let mut out = Matrix::zeros(d);
        for r1 in 0..self.dim {
            for c1 in 0..self.dim {
                for r2 in 0..other.dim {
                    for c2 in 0..other.dim {
                        out.set(
                            r1 * other.dim + r2,
                            c1 * other.dim + c2,
                            self.get(r1, c1) * other.get(r2, c2),
                        );
                    }
                }
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_diagonal(&self, eps: f64) -> bool {
        for r in 0..self.dim {
            for c in 0..self.dim {
                if r != c && self.get(r, c).norm() > eps {
                    return false;
                }
            }
        }
        true
    }

    /// Whether `self† · self` is the identity within `eps` (entrywise).
    pub fn is_unitary(&self, eps: f64) -> bool {
        self.adjoint().mul(self).max_abs_diff(&Matrix::identity(self.dim)) <= eps
    }

    /// Finds the global phase `φ` minimizing `max |e^{iφ}·self − other|` (via
    /// the trace overlap) and returns `(deviation, φ)`. Falls back to `φ = 0`
    /// when the overlap is numerically zero.
    pub fn phase_aligned_distance(&self, other: &Matrix) -> (f64, f64) {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let mut overlap = C64::new(0.0, 0.0);
        for i in 0..self.dim {
            for j in 0..self.dim {
                overlap += self.get(i, j).conj() * other.get(i, j);
            }
        }
        let phi = if overlap.norm() < 1e-300 { 0.0 } else { overlap.arg() };
        let rotated = self.scale(C64::from_polar(1.0, phi));
        (rotated.max_abs_diff(other), phi)
    }
}
