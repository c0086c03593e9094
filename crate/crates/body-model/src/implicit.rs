//! Capsule-union implicit field the body template is extracted from.

use glam::DVec3;

/// Distance from `p` to the segment (a, b) minus radius: negative inside.
pub fn capsule_distance(p: DVec3, a: DVec3, b: DVec3, r: f64) -> f64 {
    capsule_distance_with_gradient(p, a, b, r).0
}

pub fn capsule_distance_with_gradient(p: DVec3, a: DVec3, b: DVec3, r: f64) -> (f64, DVec3) {
    let ab = b - a;
    let denom = ab.length_squared();
    let t = if denom > 0.0 {
        ((p - a).dot(ab) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let delta = p - (a + ab * t);
    let len = delta.length();
    let grad = if len > 1e-12 { delta / len } else { DVec3::ZERO };
    (len - r, grad)
}

/// Polynomial smooth minimum; k is the blend width in meters.
pub fn smooth_union(a: f64, b: f64, k: f64) -> f64 {
    let h = (k - (a - b).abs()).max(0.0) / k;
    a.min(b) - h * h * k * 0.25
}

#[derive(Debug, Clone)]
pub struct CapsuleField {
    pub capsules: Vec<(DVec3, DVec3, f64)>,
    pub blend: f64,
}

impl CapsuleField {
    pub fn eval(&self, p: DVec3) -> f64 {
        let mut d = f64::INFINITY;
        for &(a, b, r) in &self.capsules {
            d = smooth_union(d, capsule_distance(p, a, b, r), self.blend);
        }
        d
    }

    /// Value and spatial gradient; the polynomial union is C¹, and the
    /// capsule distance is smooth away from the bone axes.
    pub fn eval_with_gradient(&self, p: DVec3) -> (f64, DVec3) {
        let mut value = f64::INFINITY;
        let mut grad = DVec3::ZERO;
        for &(a, b, r) in &self.capsules {
            let (d, g) = capsule_distance_with_gradient(p, a, b, r);
            let _ = r;
            // smin(v, d) = min(v, d) − h²k/4 with h = max(k − |v−d|, 0)/k
            let k = self.blend;
            let h = ((k - (value - d).abs()).max(0.0)) / k;
            let (base, mut dv, mut dd) = if value <= d {
                (value, 1.0, 0.0)
            } else {
                (d, 0.0, 1.0)
            };
            // d(h²k/4) = (h k / 2) dh; dh/dv = −sgn(v−d)/k, dh/dd = +sgn(v−d)/k
            if h > 0.0 && value.is_finite() {
                let s = if value - d >= 0.0 { 1.0 } else { -1.0 };
                dv += h * s * 0.5;
                dd -= h * s * 0.5;
            }
            value = base - h * h * k * 0.25;
            grad = grad * dv + g * dd;
        }
        (value, grad)
    }

    pub fn bounds(&self, margin: f64) -> (DVec3, DVec3) {
        let mut lo = DVec3::splat(f64::INFINITY);
        let mut hi = DVec3::splat(f64::NEG_INFINITY);
        for &(a, b, r) in &self.capsules {
            lo = lo.min(a - DVec3::splat(r)).min(b - DVec3::splat(r));
            hi = hi.max(a + DVec3::splat(r)).max(b + DVec3::splat(r));
        }
        (lo - DVec3::splat(margin), hi + DVec3::splat(margin))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capsule_sign_convention() {
        let a = DVec3::ZERO;
        let b = DVec3::Y;
        assert!(capsule_distance(DVec3::new(0.05, 0.5, 0.0), a, b, 0.1) < 0.0);
        assert!(capsule_distance(DVec3::new(0.5, 0.5, 0.0), a, b, 0.1) > 0.0);
        let d = capsule_distance(DVec3::new(0.0, 1.6, 0.0), a, b, 0.1);
        assert!((d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let field = CapsuleField {
            capsules: vec![
                (DVec3::new(0.0, 0.0, 0.0), DVec3::new(0.0, 1.0, 0.0), 0.1),
                (DVec3::new(0.2, 0.5, 0.0), DVec3::new(0.6, 0.9, 0.1), 0.07),
            ],
            blend: 0.05,
        };
        let h = 1e-6;
        for i in 0..40 {
            let p = DVec3::new(
                ((i * 37 % 100) as f64 / 50.0 - 1.0) * 0.8,
                ((i * 57 % 100) as f64 / 100.0) * 1.4,
                ((i * 77 % 100) as f64 / 50.0 - 1.0) * 0.4,
            );
            let (_, g) = field.eval_with_gradient(p);
            for axis in 0..3 {
                let mut dp = DVec3::ZERO;
                dp[axis] = h;
                let fd = (field.eval(p + dp) - field.eval(p - dp)) / (2.0 * h);
                assert!(
                    (g[axis] - fd).abs() < 1e-5,
                    "p {p:?} axis {axis}: {g:?} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn smooth_union_lower_bounds_min() {
        let cases = [(0.3, 0.31), (0.0, 0.5), (-0.2, -0.19), (1.0, -1.0)];
        for (a, b) in cases {
            let s = smooth_union(a, b, 0.05);
            assert!(s <= a.min(b) + 1e-12);
            assert!(s >= a.min(b) - 0.05);
        }
    }
}
