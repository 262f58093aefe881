//! Small vector/scalar helpers used throughout the hot paths.

pub use nalgebra::{Matrix3, Vector3};

pub type Vec3 = Vector3<f64>;

/// Rec.709 luminance of a linear RGB triple.
pub fn luminance(rgb: [f64; 3]) -> f64 {
    0.2126 * rgb[0] + 0.7152 * rgb[1] + 0.0722 * rgb[2]
}

/// Mirror reflection of `v` about unit normal `n`: 2<v,n>n - v.
/// Both vectors point away from the surface.
pub fn reflect(v: Vec3, n: Vec3) -> Vec3 {
    n * (2.0 * v.dot(&n)) - v
}

pub fn softplus(x: f64) -> f64 {
    // log1p(exp(x)) with overflow guard
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn softplus_deriv(x: f64) -> f64 {
    sigmoid(x)
}

/// Inverse of softplus; input must be > 0.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_deriv(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s)
}

/// Inverse sigmoid (logit); input clamped away from {0,1}.
pub fn logit(y: f64) -> f64 {
    let y = y.clamp(1e-12, 1.0 - 1e-12);
    (y / (1.0 - y)).ln()
}

/// Orthonormal basis completing unit vector `n` (Duff et al. branchless form).
pub fn onb(n: Vec3) -> (Vec3, Vec3) {
    let sign = if n.z >= 0.0 { 1.0 } else { -1.0 };
    let a = -1.0 / (sign + n.z);
    let b = n.x * n.y * a;
    let t = Vec3::new(1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x);
    let bt = Vec3::new(b, sign + n.y * n.y * a, -n.y);
    (t, bt)
}

/// Angle between two nonzero vectors, in degrees.
pub fn angle_deg(a: Vec3, b: Vec3) -> f64 {
    let d = a.dot(&b) / (a.norm() * b.norm());
    d.clamp(-1.0, 1.0).acos().to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reflect_mirrors_about_normal() {
        let n = Vec3::new(0.0, 0.0, 1.0);
        let v = Vec3::new(1.0, 0.0, 1.0).normalize();
        let r = reflect(v, n);
        assert_relative_eq!(r.x, -v.x, epsilon = 1e-12);
        assert_relative_eq!(r.z, v.z, epsilon = 1e-12);
    }

    #[test]
    fn softplus_inverse_round_trip() {
        for &y in &[1e-4, 0.05, 0.7, 3.0, 50.0] {
            assert_relative_eq!(softplus(softplus_inv(y)), y, max_relative = 1e-9);
        }
        assert_relative_eq!(softplus(0.0), std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn sigmoid_symmetry_and_logit() {
        assert_relative_eq!(sigmoid(0.0), 0.5, epsilon = 1e-15);
        for &y in &[0.1, 0.5, 0.9] {
            assert_relative_eq!(sigmoid(logit(y)), y, epsilon = 1e-9);
        }
    }

    #[test]
    fn onb_is_orthonormal() {
        for v in [
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(0.3, -0.8, 0.5).normalize(),
            Vec3::new(0.0, 0.0, -1.0),
        ] {
            let (t, b) = onb(v);
            assert_relative_eq!(t.dot(&v), 0.0, epsilon = 1e-9);
            assert_relative_eq!(b.dot(&v), 0.0, epsilon = 1e-9);
            assert_relative_eq!(t.dot(&b), 0.0, epsilon = 1e-9);
            assert_relative_eq!(t.norm(), 1.0, epsilon = 1e-9);
        }
    }
}
