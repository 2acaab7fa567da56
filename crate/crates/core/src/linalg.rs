//! Small dense complex linear algebra for two-qubit operators.

use core::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::math;

pub type C64 = Complex64;

pub const fn c(re: f64, im: f64) -> C64 {
    Complex64::new(re, im)
}

/// Dense 4x4 complex matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matrix4(pub [[C64; 4]; 4]);

impl Index<(usize, usize)> for Matrix4 {
    type Output = C64;

    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.0[r][c]
    }
}

impl IndexMut<(usize, usize)> for Matrix4 {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.0[r][c]
    }
}

impl Matrix4 {
    pub const fn zeros() -> Self {
        Matrix4([[c(0.0, 0.0); 4]; 4])
    }

    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for i in 0..4 {
            m[(i, i)] = c(1.0, 0.0);
        }
        m
    }

    /// `|u><v|`
    pub fn outer(u: &[C64; 4], v: &[C64; 4]) -> Self {
        let mut m = Self::zeros();
        for r in 0..4 {
            for col in 0..4 {
                m[(r, col)] = u[r] * v[col].conj();
            }
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros();
        for r in 0..4 {
            for col in 0..4 {
                m[(r, col)] = self[(col, r)].conj();
            }
        }
        m
    }

    pub fn trace(&self) -> C64 {
        (0..4).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, k: f64) -> Self {
        let mut m = *self;
        for row in m.0.iter_mut() {
            for x in row.iter_mut() {
                *x *= k;
            }
        }
        m
    }

    /// `T T†`
    pub fn gram(&self) -> Self {
        let mut m = Self::zeros();
        for r in 0..4 {
            for col in r..4 {
                let mut acc = c(0.0, 0.0);
                for k in 0..4 {
                    acc += self[(r, k)] * self[(col, k)].conj();
                }
                m[(r, col)] = acc;
                m[(col, r)] = acc.conj();
            }
        }
        m
    }

    /// `<v|M|v>`
    pub fn expectation(&self, v: &[C64; 4]) -> C64 {
        let mut acc = c(0.0, 0.0);
        for r in 0..4 {
            let mut row = c(0.0, 0.0);
            for col in 0..4 {
                row += self[(r, col)] * v[col];
            }
            acc += v[r].conj() * row;
        }
        acc
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn hermiticity_error(&self) -> f64 {
        (*self - self.adjoint()).max_abs()
    }

    /// Transpose of the second tensor factor: entry `(a b, a' b')` becomes
    /// `(a b', a' b)`.
    pub fn partial_transpose_second(&self) -> Self {
        let mut m = Self::zeros();
        for a in 0..2 {
            for b in 0..2 {
                for ap in 0..2 {
                    for bp in 0..2 {
                        m[(2 * a + b, 2 * ap + bp)] = self[(2 * a + bp, 2 * ap + b)];
                    }
                }
            }
        }
        m
    }

    /// `U ⊗ V` for 2x2 blocks.
    pub fn kron2(u: &[[C64; 2]; 2], v: &[[C64; 2]; 2]) -> Self {
        let mut m = Self::zeros();
        for a in 0..2 {
            for b in 0..2 {
                for ap in 0..2 {
                    for bp in 0..2 {
                        m[(2 * a + b, 2 * ap + bp)] = u[a][ap] * v[b][bp];
                    }
                }
            }
        }
        m
    }

    /// Eigenvalues of a Hermitian matrix in ascending order.
    ///
    /// Uses the real symmetric embedding `[[A, -B], [B, A]]` of `A + iB`,
    /// whose spectrum is that of the Hermitian matrix with every eigenvalue
    /// doubled, and diagonalizes it with cyclic Jacobi rotations.
    pub fn hermitian_eigenvalues(&self) -> [f64; 4] {
        let mut s = [[0.0f64; 8]; 8];
        for r in 0..4 {
            for col in 0..4 {
                // symmetrize so tiny anti-Hermitian noise cannot break Jacobi
                let z = (self[(r, col)] + self[(col, r)].conj()) * 0.5;
                s[r][col] = z.re;
                s[r + 4][col + 4] = z.re;
                s[r][col + 4] = -z.im;
                s[r + 4][col] = z.im;
            }
        }
        let mut eig = jacobi_eigenvalues(s);
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
        [
            0.5 * (eig[0] + eig[1]),
            0.5 * (eig[2] + eig[3]),
            0.5 * (eig[4] + eig[5]),
            0.5 * (eig[6] + eig[7]),
        ]
    }

    /// Lower-triangular `L` with `L L† = self` for a positive definite
    /// Hermitian matrix; `None` if a pivot is not positive.
    pub fn cholesky(&self) -> Option<Self> {
        let mut l = Self::zeros();
        for j in 0..4 {
            let mut d = self[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if d <= 0.0 || d.is_nan() {
                return None;
            }
            let ljj = math::sqrt(d);
            l[(j, j)] = c(ljj, 0.0);
            for i in (j + 1)..4 {
                let mut acc = self[(i, j)];
                for k in 0..j {
                    acc -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = acc / ljj;
            }
        }
        Some(l)
    }
}

impl Add for Matrix4 {
    type Output = Matrix4;

    fn add(self, rhs: Matrix4) -> Matrix4 {
        let mut m = self;
        for r in 0..4 {
            for col in 0..4 {
                m[(r, col)] += rhs[(r, col)];
            }
        }
        m
    }
}

impl Sub for Matrix4 {
    type Output = Matrix4;

    fn sub(self, rhs: Matrix4) -> Matrix4 {
        let mut m = self;
        for r in 0..4 {
            for col in 0..4 {
                m[(r, col)] -= rhs[(r, col)];
            }
        }
        m
    }
}

impl Mul for Matrix4 {
    type Output = Matrix4;

    fn mul(self, rhs: Matrix4) -> Matrix4 {
        let mut m = Matrix4::zeros();
        for r in 0..4 {
            for col in 0..4 {
                let mut acc = c(0.0, 0.0);
                for k in 0..4 {
                    acc += self[(r, k)] * rhs[(k, col)];
                }
                m[(r, col)] = acc;
            }
        }
        m
    }
}

fn jacobi_eigenvalues<const N: usize>(mut a: [[f64; N]; N]) -> [f64; N] {
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..N {
            for q in (p + 1)..N {
                off += a[p][q] * a[p][q];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..N {
            for q in (p + 1)..N {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + math::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + math::sqrt(1.0 + theta * theta))
                };
                let cs = 1.0 / math::sqrt(1.0 + t * t);
                let sn = t * cs;
                for k in 0..N {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = cs * akp - sn * akq;
                    a[k][q] = sn * akp + cs * akq;
                }
                for k in 0..N {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = cs * apk - sn * aqk;
                    a[q][k] = sn * apk + cs * aqk;
                }
            }
        }
    }
    let mut out = [0.0; N];
    for (i, v) in out.iter_mut().enumerate() {
        *v = a[i][i];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Complex, Matrix4 as NMatrix4};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng) -> Matrix4 {
        let mut m = Matrix4::zeros();
        for r in 0..4 {
            for col in 0..4 {
                m[(r, col)] = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
        }
        m
    }

    fn to_nalgebra(m: &Matrix4) -> NMatrix4<Complex<f64>> {
        NMatrix4::from_fn(|r, col| Complex::new(m[(r, col)].re, m[(r, col)].im))
    }

    #[test]
    fn eigenvalues_match_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let t = random_matrix(&mut rng);
            let h = t + t.adjoint();
            let ours = h.hermitian_eigenvalues();
            let mut theirs: std::vec::Vec<f64> =
                to_nalgebra(&h).symmetric_eigenvalues().iter().copied().collect();
            theirs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (a, b) in ours.iter().zip(&theirs) {
                assert!((a - b).abs() < 1e-10, "{ours:?} vs {theirs:?}");
            }
        }
    }

    #[test]
    fn cholesky_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_matrix(&mut rng);
        let pd = t.gram() + Matrix4::identity().scale(0.1);
        let l = pd.cholesky().unwrap();
        assert!((l.gram() - pd).max_abs() < 1e-12);
        for r in 0..4 {
            for col in (r + 1)..4 {
                assert_eq!(l[(r, col)], c(0.0, 0.0));
            }
        }
        assert!(Matrix4::zeros().cholesky().is_none());
    }

    #[test]
    fn partial_transpose_is_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_matrix(&mut rng);
        assert_eq!(m.partial_transpose_second().partial_transpose_second(), m);
    }
}
