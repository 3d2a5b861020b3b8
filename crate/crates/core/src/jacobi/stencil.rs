use crate::scalar::Scalar;

/// One 7-point Jacobi update, summed in the fixed order
/// self, -x, +x, -y, +y, -z, +z and divided by 7.
#[inline]
pub fn stencil7<T: Scalar>(c: T, xm: T, xp: T, ym: T, yp: T, zm: T, zp: T) -> T {
    (c + xm + xp + ym + yp + zm + zp) / T::seven()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_fixed_point() {
        assert_eq!(stencil7(0.25f64, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25), 0.25);
        assert_eq!(stencil7(1.0f32, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0), 1.0);
    }

    #[test]
    fn corner_and_face_values() {
        assert_eq!(stencil7(0.0f64, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0), 3.0 / 7.0);
        assert_eq!(stencil7(0.0f64, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0), 1.0 / 7.0);
    }
}
