//! Scalar quaternion arithmetic.
//!
//! Components are always stored in (r, x, y, z) order, with `x`, `y`, `z`
//! the coefficients of the units i, j, k (i² = j² = k² = ijk = −1).

use std::ops::{Add, Mul};

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Quaternion<T = f64> {
    pub r: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> Quaternion<T> {
    pub const fn new(r: T, x: T, y: T, z: T) -> Self {
        Quaternion { r, x, y, z }
    }

    pub fn one() -> Self {
        Self::new(T::one(), T::zero(), T::zero(), T::zero())
    }

    pub fn i() -> Self {
        Self::new(T::zero(), T::one(), T::zero(), T::zero())
    }

    pub fn j() -> Self {
        Self::new(T::zero(), T::zero(), T::one(), T::zero())
    }

    pub fn k() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::one())
    }

    pub fn from_array(c: [T; 4]) -> Self {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn to_array(self) -> [T; 4] {
        [self.r, self.x, self.y, self.z]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }

    /// Euclidean norm `sqrt(r² + x² + y² + z²)`.
    pub fn norm(&self) -> T {
        (self.r * self.r + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Hamilton product `self ⊗ rhs`.
    pub fn hamilton(self, rhs: Self) -> Self {
        hamilton(self, rhs)
    }

    /// Left-multiplication matrix: `as_matrix(q) · vec(p) = vec(q ⊗ p)`.
    pub fn as_matrix(self) -> QuatMatrix<T> {
        as_matrix(self)
    }
}

impl<T: Scalar> Mul for Quaternion<T> {
    type Output = Quaternion<T>;

    fn mul(self, rhs: Self) -> Self {
        hamilton(self, rhs)
    }
}

impl<T: Scalar> Add for Quaternion<T> {
    type Output = Quaternion<T>;

    fn add(self, rhs: Self) -> Self {
        Quaternion {
            r: self.r + rhs.r,
            x: self.x + rhs.x,
            y: self.y + rhs.y,
            z: self.z + rhs.z,
        }
    }
}

/// Hamilton product of two quaternions.
pub fn hamilton<T: Scalar>(a: Quaternion<T>, b: Quaternion<T>) -> Quaternion<T> {
    Quaternion {
        r: a.r * b.r - a.x * b.x - a.y * b.y - a.z * b.z,
        x: a.r * b.x + a.x * b.r + a.y * b.z - a.z * b.y,
        y: a.r * b.y - a.x * b.z + a.y * b.r + a.z * b.x,
        z: a.r * b.z + a.x * b.y - a.y * b.x + a.z * b.r,
    }
}

/// 4×4 real matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuatMatrix<T = f64> {
    pub m: [[T; 4]; 4],
}

/// Real matrix representation of `q` acting by left multiplication.
pub fn as_matrix<T: Scalar>(q: Quaternion<T>) -> QuatMatrix<T> {
    let Quaternion { r, x, y, z } = q;
    QuatMatrix {
        m: [
            [r, -x, -y, -z],
            [x, r, -z, y],
            [y, z, r, -x],
            [z, -y, x, r],
        ],
    }
}

impl<T: Scalar> QuatMatrix<T> {
    pub fn identity() -> Self {
        as_matrix(Quaternion::one())
    }

    pub fn mul_vec(&self, v: [T; 4]) -> [T; 4] {
        let mut out = [T::zero(); 4];
        for (o, row) in out.iter_mut().zip(&self.m) {
            *o = row
                .iter()
                .zip(&v)
                .fold(T::zero(), |acc, (&a, &b)| acc + a * b);
        }
        out
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        let mut m = [[T::zero(); 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = (0..4).fold(T::zero(), |acc, k| acc + self.m[i][k] * rhs.m[k][j]);
            }
        }
        QuatMatrix { m }
    }

    pub fn transpose(&self) -> Self {
        let mut m = self.m;
        for (i, row) in m.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = self.m[j][i];
            }
        }
        QuatMatrix { m }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type Q = Quaternion<f64>;

    fn q(r: f64, x: f64, y: f64, z: f64) -> Q {
        Q::new(r, x, y, z)
    }

    fn arb_q() -> impl Strategy<Value = Q> {
        prop::array::uniform4(-1.0f64..1.0).prop_map(Q::from_array)
    }

    #[test]
    fn identity_left_and_right() {
        let a = q(0.3, -1.2, 2.5, 4.0);
        assert_eq!(Q::one() * a, a);
        assert_eq!(a * Q::one(), a);
    }

    #[test]
    fn unit_products() {
        assert_eq!(Q::i() * Q::j(), Q::k());
        assert_eq!(Q::j() * Q::i(), q(0.0, 0.0, 0.0, -1.0));
        assert_eq!(Q::j() * Q::k(), Q::i());
        assert_eq!(Q::k() * Q::i(), Q::j());
        for u in [Q::i(), Q::j(), Q::k()] {
            assert_eq!(u * u, q(-1.0, 0.0, 0.0, 0.0));
        }
        assert_eq!(Q::i() * Q::j() * Q::k(), q(-1.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn matrix_rows_follow_the_pattern() {
        let m = as_matrix(q(1.0, 2.0, 3.0, 4.0)).m;
        assert_eq!(m[0], [1.0, -2.0, -3.0, -4.0]);
        assert_eq!(m[1], [2.0, 1.0, -4.0, 3.0]);
        assert_eq!(m[2], [3.0, 4.0, 1.0, -2.0]);
        assert_eq!(m[3], [4.0, -3.0, 2.0, 1.0]);
        assert_eq!(QuatMatrix::<f64>::identity().m[2], [0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn matrix_agrees_with_tape_pattern() {
        let comps = [1.0, 2.0, 3.0, 4.0];
        let m = as_matrix(Q::from_array(comps)).m;
        for (a, row) in crate::tensor::HAMILTON_PATTERN.iter().enumerate() {
            for (b, &(c, neg)) in row.iter().enumerate() {
                let v = if neg { -comps[c] } else { comps[c] };
                assert_eq!(m[a][b], v);
            }
        }
    }

    proptest! {
        #[test]
        fn matrix_vector_is_hamilton(a in arb_q(), b in arb_q()) {
            let mv = as_matrix(a).mul_vec(b.to_array());
            let h = (a * b).to_array();
            for i in 0..4 {
                prop_assert!((mv[i] - h[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn associativity(a in arb_q(), b in arb_q(), c in arb_q()) {
            let l = ((a * b) * c).to_array();
            let r = (a * (b * c)).to_array();
            for i in 0..4 {
                prop_assert!((l[i] - r[i]).abs() < 1e-5);
            }
        }

        #[test]
        fn norm_is_multiplicative(a in arb_q(), b in arb_q()) {
            let lhs = (a * b).norm();
            let rhs = a.norm() * b.norm();
            prop_assert!((lhs - rhs).abs() <= 1e-5 * rhs.max(1e-12));
        }

        #[test]
        fn matrix_form_is_a_homomorphism(a in arb_q(), b in arb_q()) {
            let lhs = as_matrix(a).matmul(&as_matrix(b));
            let rhs = as_matrix(a * b);
            for i in 0..4 {
                for j in 0..4 {
                    prop_assert!((lhs.m[i][j] - rhs.m[i][j]).abs() < 1e-5);
                }
            }
        }

        #[test]
        fn matrix_is_scaled_orthogonal(a in arb_q()) {
            let g = as_matrix(a).transpose().matmul(&as_matrix(a));
            let n2 = a.norm() * a.norm();
            for i in 0..4 {
                for j in 0..4 {
                    let want = if i == j { n2 } else { 0.0 };
                    prop_assert!((g.m[i][j] - want).abs() < 1e-12);
                }
            }
        }
    }
}
