//! Quadrature rules on triangles and time intervals.

/// Rule on a triangle given by barycentric points and weights summing to one;
/// integrals are `area * sum(w_i f(x_i))`.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Six-point rule, exact for polynomials of total degree 4.
    pub fn degree4() -> Self {
        const A: f64 = 0.445_948_490_915_965;
        const WA: f64 = 0.223_381_589_678_011;
        const B: f64 = 0.091_576_213_509_771;
        const WB: f64 = 0.109_951_743_655_322;
        let points = vec![
            [1.0 - 2.0 * A, A, A],
            [A, 1.0 - 2.0 * A, A],
            [A, A, 1.0 - 2.0 * A],
            [1.0 - 2.0 * B, B, B],
            [B, 1.0 - 2.0 * B, B],
            [B, B, 1.0 - 2.0 * B],
        ];
        Self { points, weights: vec![WA, WA, WA, WB, WB, WB] }
    }

    /// Maps the barycentric points to physical coordinates.
    pub fn physical_points(&self, tri: &[[f64; 2]; 3]) -> impl Iterator<Item = ([f64; 2], f64, &[f64; 3])> + '_ {
        let tri = *tri;
        self.points.iter().zip(&self.weights).map(move |(l, &w)| {
            let x = l[0] * tri[0][0] + l[1] * tri[1][0] + l[2] * tri[2][0];
            let y = l[0] * tri[0][1] + l[1] * tri[1][1] + l[2] * tri[2][1];
            ([x, y], w, l)
        })
    }
}

/// Gauss rule on an interval, stored on `[0, 1]` with weights summing to one.
#[derive(Debug, Clone)]
pub struct IntervalRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl IntervalRule {
    /// Two-point Gauss-Legendre, exact for cubics.
    pub fn gauss2() -> Self {
        let d = 0.5 / 3f64.sqrt();
        Self { points: vec![0.5 - d, 0.5 + d], weights: vec![0.5, 0.5] }
    }

    /// Nodes in `[a, b]` with weights scaled by `b - a`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().zip(&self.weights).map(move |(&s, &w)| (a + s * (b - a), w * (b - a)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn triangle_monomials() {
        let rule = TriangleRule::degree4();
        assert!(rule.weights.iter().all(|&w| w > 0.0));
        assert_relative_eq!(rule.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        let reference = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        for a in 0..=4u32 {
            for b in 0..=(4 - a) {
                let approx: f64 = rule
                    .physical_points(&reference)
                    .map(|(p, w, _)| w * 0.5 * p[0].powi(a as i32) * p[1].powi(b as i32))
                    .sum();
                let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                assert_relative_eq!(approx, exact, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn interval_monomials() {
        let rule = IntervalRule::gauss2();
        for p in 0..=3 {
            let approx: f64 = rule.on(1.0, 3.0).map(|(t, w)| w * t.powi(p)).sum();
            let exact = (3f64.powi(p + 1) - 1.0) / f64::from(p + 1);
            assert_relative_eq!(approx, exact, max_relative = 1e-14);
        }
    }
}
