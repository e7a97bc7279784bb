//! Complex helpers shared by the conformal-map code.

pub type C64 = num_complex::Complex64;

/// Principal square root, computed algebraically.
///
/// `num_complex` goes through polar form (atan2, sin, cos); slit chains call
/// this O(n²) times per trace so the algebraic form matters.
#[inline]
pub fn csqrt(z: C64) -> C64 {
    let (x, y) = (z.re, z.im);
    if x == 0.0 && y == 0.0 {
        return C64::new(0.0, y);
    }
    let r = (x * x + y * y).sqrt();
    if x >= 0.0 {
        let t = (0.5 * (r + x)).sqrt();
        C64::new(t, y / (2.0 * t))
    } else {
        let t = (0.5 * (r - x)).sqrt();
        C64::new(y.abs() / (2.0 * t), t.copysign(y))
    }
}

/// Square root of `radicand` taken in the closed upper half-plane.
///
/// When the radicand is real and non-negative the root is real and its sign
/// follows `side` (the real part of the pre-image relative to the slit base),
/// so both half-lines of the real axis are mapped to themselves.
#[inline]
pub fn sqrt_upper(radicand: C64, side: f64) -> C64 {
    let s = csqrt(radicand);
    if s.im > 0.0 {
        s
    } else if s.im < 0.0 {
        -s
    } else if side < 0.0 {
        C64::new(-s.re, 0.0)
    } else {
        C64::new(s.re, 0.0)
    }
}

#[inline]
pub fn unit(angle: f64) -> C64 {
    let (s, c) = angle.sin_cos();
    C64::new(c, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn negative_real_axis_goes_up() {
        let s = sqrt_upper(C64::new(-4.0, 0.0), 1.0);
        assert_eq!(s, C64::new(0.0, 2.0));
        let s = sqrt_upper(C64::new(-4.0, -0.0), 1.0);
        assert_eq!(s, C64::new(0.0, 2.0));
    }

    #[test]
    fn real_branch_follows_side() {
        assert_eq!(sqrt_upper(C64::new(9.0, 0.0), -2.0), C64::new(-3.0, 0.0));
        assert_eq!(sqrt_upper(C64::new(9.0, -0.0), 2.0), C64::new(3.0, 0.0));
    }

    proptest! {
        #[test]
        fn csqrt_matches_num_complex(re in -1e3f64..1e3, im in -1e3f64..1e3) {
            let z = C64::new(re, im);
            let a = csqrt(z);
            let b = z.sqrt();
            prop_assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()));
        }

        #[test]
        fn sqrt_upper_squares_back(re in -50f64..50.0, im in -50f64..50.0) {
            let z = C64::new(re, im);
            let s = sqrt_upper(z, 1.0);
            prop_assert!(s.im >= 0.0);
            prop_assert!((s * s - z).norm() <= 1e-10 * (1.0 + z.norm()));
        }
    }
}
