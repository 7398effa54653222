//! Gauss rules on the unit interval and on the reference triangle
//! `{(u, v) : u, v >= 0, u + v <= 1}`.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Newton on P_n starting from the Tricomi-type estimate
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // map [-1, 1] -> [0, 1]
            nodes[i] = 0.5 * (1.0 - x);
            nodes[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Quadrature on the reference triangle. Weights sum to its area, 1/2.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Total polynomial degree integrated exactly.
    pub degree: usize,
}

impl TriangleRule {
    /// Cheapest rule exact for polynomials of total degree `degree`.
    ///
    /// Degrees up to 5 use fully symmetric rules; beyond that a collapsed
    /// (Duffy) tensor Gauss rule is used.
    pub fn with_degree(degree: usize) -> Self {
        match degree {
            0 | 1 => Self::from_orbits(1, &[(1.0, Orbit::Centroid)]),
            2 => Self::from_orbits(2, &[(1.0 / 3.0, Orbit::Three(1.0 / 6.0))]),
            3 | 4 => Self::from_orbits(
                4,
                &[
                    (0.223_381_589_678_011_47, Orbit::Three(0.445_948_490_915_964_9)),
                    (0.109_951_743_655_321_87, Orbit::Three(0.091_576_213_509_770_74)),
                ],
            ),
            5 => Self::from_orbits(
                5,
                &[
                    (0.225, Orbit::Centroid),
                    (0.132_394_152_788_506_18, Orbit::Three(0.470_142_064_105_115_1)),
                    (0.125_939_180_544_827_15, Orbit::Three(0.101_286_507_323_456_34)),
                ],
            ),
            d => Self::collapsed((d + 3) / 2),
        }
    }

    /// Conical product of `n`-point Gauss rules; exact to degree `2n - 2`.
    pub fn collapsed(n: usize) -> Self {
        let g = GaussRule::new(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (s, ws) in g.iter() {
            for (t, wt) in g.iter() {
                points.push([s * (1.0 - t), s * t]);
                weights.push(ws * wt * s);
            }
        }
        Self {
            points,
            weights,
            degree: 2 * n - 2,
        }
    }

    fn from_orbits(degree: usize, orbits: &[(f64, Orbit)]) -> Self {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for &(w, orbit) in orbits {
            match orbit {
                Orbit::Centroid => {
                    points.push([1.0 / 3.0, 1.0 / 3.0]);
                    weights.push(0.5 * w);
                }
                Orbit::Three(a) => {
                    let b = 1.0 - 2.0 * a;
                    for p in [[a, a], [a, b], [b, a]] {
                        points.push(p);
                        weights.push(0.5 * w);
                    }
                }
            }
        }
        Self {
            points,
            weights,
            degree,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
enum Orbit {
    Centroid,
    /// barycentric permutations of `(a, a, 1 - 2a)`
    Three(f64),
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact `∫_T u^a v^b = a! b! / (a + b + 2)!`.
    fn monomial_integral(a: u32, b: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        fact(a) * fact(b) / fact(a + b + 2)
    }

    #[test]
    fn gauss_legendre_exactness() {
        for n in 1..=20 {
            let g = GaussRule::new(n);
            for deg in 0..(2 * n) as i32 {
                let q: f64 = g.iter().map(|(x, w)| w * x.powi(deg)).sum();
                let exact = 1.0 / (deg as f64 + 1.0);
                assert!((q - exact).abs() < 1e-14, "n={n} deg={deg}: {q} vs {exact}");
            }
            assert!(g.nodes.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn triangle_rules_exactness() {
        for degree in 0..=14 {
            let rule = TriangleRule::with_degree(degree);
            assert!(rule.degree >= degree);
            for a in 0..=rule.degree as u32 {
                for b in 0..=(rule.degree as u32 - a) {
                    let q: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    let exact = monomial_integral(a, b);
                    assert!(
                        (q - exact).abs() < 1e-14,
                        "degree {degree}, u^{a} v^{b}: {q} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn symmetric_rules_are_interior() {
        for degree in 1..=5 {
            let rule = TriangleRule::with_degree(degree);
            for p in &rule.points {
                assert!(p[0] > 0.0 && p[1] > 0.0 && p[0] + p[1] < 1.0);
            }
        }
    }
}
