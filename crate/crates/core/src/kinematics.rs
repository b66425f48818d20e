//! Small dense matrices and the Eulerian kinematic relations between the
//! return map, its gradient (the distortion), the deformation gradient,
//! the Jacobian and the mass density.
//!
//! Everything here is generic over the spatial dimension `D`; only
//! `D = 2` and `D = 3` are meaningful.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use thiserror::Error;

/// Below this determinant the distortion is treated as degenerate.
pub const DEFAULT_DET_FLOOR: f64 = 1e-12;

/// A point or vector in physical or reference space.
pub type Point<const D: usize> = [f64; D];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    /// `det(grad xi)` fell to or below the floor: local interpenetration.
    #[error("degenerate distortion: det(grad xi) = {det:e} <= floor {floor:e}")]
    DegenerateDistortion { det: f64, floor: f64 },
}

/// Dense `D x D` matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat<const D: usize>(pub [[f64; D]; D]);

impl<const D: usize> Default for Mat<D> {
    fn default() -> Self {
        Self::zeros()
    }
}

impl<const D: usize> Mat<D> {
    pub const fn zeros() -> Self {
        Mat([[0.0; D]; D])
    }

    pub fn identity() -> Self {
        Self::from_fn(|i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_diag(d: [f64; D]) -> Self {
        Self::from_fn(|i, j| if i == j { d[i] } else { 0.0 })
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = [[0.0; D]; D];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = f(i, j);
            }
        }
        Mat(m)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(|i, j| self.0[j][i])
    }

    pub fn sym(&self) -> Self {
        Self::from_fn(|i, j| 0.5 * (self.0[i][j] + self.0[j][i]))
    }

    pub fn trace(&self) -> f64 {
        (0..D).map(|i| self.0[i][i]).sum()
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        match D {
            1 => m[0][0],
            2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
            3 => {
                m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                    - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                    + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
            }
            _ => panic!("determinant only implemented for d <= 3"),
        }
    }

    /// Frobenius inner product `A : B`.
    pub fn ddot(&self, other: &Self) -> f64 {
        let mut s = 0.0;
        for i in 0..D {
            for j in 0..D {
                s += self.0[i][j] * other.0[i][j];
            }
        }
        s
    }

    pub fn norm_sq(&self) -> f64 {
        self.ddot(self)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0_f64, |acc, x| acc.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flat_map(|r| r.iter()).all(|x| x.is_finite())
    }

    pub fn matmul(&self, other: &Self) -> Self {
        Self::from_fn(|i, j| (0..D).map(|k| self.0[i][k] * other.0[k][j]).sum())
    }

    pub fn mul_vec(&self, x: &Point<D>) -> Point<D> {
        let mut y = [0.0; D];
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = (0..D).map(|k| self.0[i][k] * x[k]).sum();
        }
        y
    }

    pub fn scale(&self, a: f64) -> Self {
        Self::from_fn(|i, j| a * self.0[i][j])
    }
}

impl<const D: usize> Index<(usize, usize)> for Mat<D> {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.0[i][j]
    }
}

impl<const D: usize> IndexMut<(usize, usize)> for Mat<D> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.0[i][j]
    }
}

impl<const D: usize> Add for Mat<D> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::from_fn(|i, j| self.0[i][j] + rhs.0[i][j])
    }
}

impl<const D: usize> Sub for Mat<D> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::from_fn(|i, j| self.0[i][j] - rhs.0[i][j])
    }
}

impl<const D: usize> Neg for Mat<D> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl<const D: usize> Mul<f64> for Mat<D> {
    type Output = Self;
    fn mul(self, a: f64) -> Self {
        self.scale(a)
    }
}

impl<const D: usize> Mul for Mat<D> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.matmul(&rhs)
    }
}

impl<const D: usize> AddAssign for Mat<D> {
    fn add_assign(&mut self, rhs: Self) {
        for i in 0..D {
            for j in 0..D {
                self.0[i][j] += rhs.0[i][j];
            }
        }
    }
}

impl<const D: usize> SubAssign for Mat<D> {
    fn sub_assign(&mut self, rhs: Self) {
        for i in 0..D {
            for j in 0..D {
                self.0[i][j] -= rhs.0[i][j];
            }
        }
    }
}

/// Third-order tensor, indexed `[a][b][c]`. Holds `grad e(v)` with the
/// derivative index first and the hyperstress.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tensor3<const D: usize>(pub [[[f64; D]; D]; D]);

impl<const D: usize> Default for Tensor3<D> {
    fn default() -> Self {
        Self::zeros()
    }
}

impl<const D: usize> Tensor3<D> {
    pub const fn zeros() -> Self {
        Tensor3([[[0.0; D]; D]; D])
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = [[[0.0; D]; D]; D];
        for (a, ta) in t.iter_mut().enumerate() {
            for (b, tab) in ta.iter_mut().enumerate() {
                for (c, x) in tab.iter_mut().enumerate() {
                    *x = f(a, b, c);
                }
            }
        }
        Tensor3(t)
    }

    /// Full contraction `G ⋮ H`.
    pub fn dot3(&self, other: &Self) -> f64 {
        let mut s = 0.0;
        for a in 0..D {
            for b in 0..D {
                for c in 0..D {
                    s += self.0[a][b][c] * other.0[a][b][c];
                }
            }
        }
        s
    }

    pub fn norm(&self) -> f64 {
        self.dot3(self).sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_fn(|a, b, c| s * self.0[a][b][c])
    }

    pub fn axpy(&mut self, s: f64, x: &Self) {
        for a in 0..D {
            for b in 0..D {
                for c in 0..D {
                    self.0[a][b][c] += s * x.0[a][b][c];
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().flatten().all(|x| x.is_finite())
    }
}

/// Matrix of signed `(D-1) x (D-1)` minors, so that
/// `Cof M = det(M) M^{-T}` whenever `M` is invertible.
pub fn cofactor<const D: usize>(m: &Mat<D>) -> Mat<D> {
    let a = &m.0;
    match D {
        1 => Mat::from_fn(|_, _| 1.0),
        2 => Mat::from_fn(|i, j| {
            let s = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            s * a[1 - i][1 - j]
        }),
        3 => Mat::from_fn(|i, j| {
            let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
            let (j1, j2) = ((j + 1) % 3, (j + 2) % 3);
            a[i1][j1] * a[i2][j2] - a[i1][j2] * a[i2][j1]
        }),
        _ => panic!("cofactor only implemented for d <= 3"),
    }
}

/// `F = Cof(grad xi)^T / det(grad xi)`, i.e. the inverse of the distortion.
pub fn deformation_gradient<const D: usize>(grad_xi: &Mat<D>) -> Result<Mat<D>, KinematicsError> {
    deformation_gradient_with_floor(grad_xi, DEFAULT_DET_FLOOR)
}

pub fn deformation_gradient_with_floor<const D: usize>(
    grad_xi: &Mat<D>,
    det_floor: f64,
) -> Result<Mat<D>, KinematicsError> {
    let det = checked_det(grad_xi, det_floor)?;
    Ok(cofactor(grad_xi).transpose().scale(1.0 / det))
}

/// Actual density `rho = rho_ref * det(grad xi)`.
pub fn density<const D: usize>(grad_xi: &Mat<D>, rho_ref: f64) -> Result<f64, KinematicsError> {
    let det = checked_det(grad_xi, DEFAULT_DET_FLOOR)?;
    Ok(rho_ref * det)
}

/// Green-Lagrange strain `E = (F^T F - I) / 2`.
pub fn green_lagrange<const D: usize>(f: &Mat<D>) -> Mat<D> {
    (f.transpose().matmul(f) - Mat::identity()).scale(0.5)
}

fn checked_det<const D: usize>(a: &Mat<D>, floor: f64) -> Result<f64, KinematicsError> {
    let det = a.det();
    // NaN also lands here
    if det > floor {
        Ok(det)
    } else {
        Err(KinematicsError::DegenerateDistortion { det, floor })
    }
}

/// Kinematic fields derived from `grad xi` at every grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct KinematicSnapshot<const D: usize> {
    pub distortion: Vec<Mat<D>>,
    pub deformation: Vec<Mat<D>>,
    pub jacobian: Vec<f64>,
    pub density: Vec<f64>,
}

impl<const D: usize> KinematicSnapshot<D> {
    /// `rho_ref[i]` is the referential density at `xi(x_i)`.
    pub fn compute(grad_xi: &[Mat<D>], rho_ref: &[f64]) -> Result<Self, KinematicsError> {
        assert_eq!(grad_xi.len(), rho_ref.len());
        let mut deformation = Vec::with_capacity(grad_xi.len());
        let mut jacobian = Vec::with_capacity(grad_xi.len());
        let mut dens = Vec::with_capacity(grad_xi.len());
        for (a, &r) in grad_xi.iter().zip(rho_ref) {
            let f = deformation_gradient(a)?;
            jacobian.push(f.det());
            dens.push(density(a, r)?);
            deformation.push(f);
        }
        Ok(Self {
            distortion: grad_xi.to_vec(),
            deformation,
            jacobian,
            density: dens,
        })
    }

    pub fn min_jacobian(&self) -> f64 {
        self.jacobian.iter().copied().fold(f64::INFINITY, f64::min)
    }
}
