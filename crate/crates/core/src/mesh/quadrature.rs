//! Tensor Gauss-Legendre quadrature on the reference interval, square and cube.

/// One-dimensional Gauss-Legendre rule on `[0, 1]`, exact for polynomials of
/// degree `2n - 1`.
#[derive(Debug, Clone)]
pub struct Rule1d {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Legendre polynomial value and derivative at `x` (on `[-1, 1]`).
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Builds the `n`-point rule by Newton iteration on the Legendre roots.
pub fn gauss_legendre(n: usize) -> Rule1d {
    assert!(n >= 1, "quadrature rule needs at least one point");
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-based initial guess, roots ordered descending in x.
        let mut x = (std::f64::consts::PI * (4.0 * i as f64 + 3.0) / (4.0 * n as f64 + 2.0)).cos();
        if n == 1 {
            x = 0.0;
        }
        for _ in 0..60 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Map [-1, 1] -> [0, 1]; store ascending in the node coordinate.
        points[n - 1 - i] = 0.5 * (x + 1.0);
        weights[n - 1 - i] = 0.5 * w;
    }
    Rule1d { points, weights }
}

/// Tensor rule over the reference cube; points ordered with the first
/// coordinate fastest.
#[derive(Debug, Clone)]
pub struct Rule3d {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub n_per_axis: usize,
}

pub fn tensor_cube(n: usize) -> Rule3d {
    let r = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n * n);
    let mut weights = Vec::with_capacity(n * n * n);
    for c in 0..n {
        for b in 0..n {
            for a in 0..n {
                points.push([r.points[a], r.points[b], r.points[c]]);
                weights.push(r.weights[a] * r.weights[b] * r.weights[c]);
            }
        }
    }
    Rule3d {
        points,
        weights,
        n_per_axis: n,
    }
}

/// Tensor rule over the reference square, first coordinate fastest.
#[derive(Debug, Clone)]
pub struct Rule2d {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub n_per_axis: usize,
}

pub fn tensor_square(n: usize) -> Rule2d {
    let r = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for b in 0..n {
        for a in 0..n {
            points.push([r.points[a], r.points[b]]);
            weights.push(r.weights[a] * r.weights[b]);
        }
    }
    Rule2d {
        points,
        weights,
        n_per_axis: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_point_rule_matches_reference_values() {
        // Classical abscissae/weights on [-1, 1], mapped to [0, 1].
        let r = gauss_legendre(5);
        let nodes = [
            -0.906179845938664,
            -0.538469310105683,
            0.0,
            0.538469310105683,
            0.906179845938664,
        ];
        let weights = [
            0.236926885056189,
            0.478628670499366,
            0.568888888888889,
            0.478628670499366,
            0.236926885056189,
        ];
        for i in 0..5 {
            assert!((r.points[i] - 0.5 * (nodes[i] + 1.0)).abs() < 1e-14);
            assert!((r.weights[i] - 0.5 * weights[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn rules_integrate_monomials_exactly() {
        for n in 1..=12 {
            let r = gauss_legendre(n);
            for degree in 0..=(2 * n - 1) {
                let integral: f64 = r
                    .points
                    .iter()
                    .zip(&r.weights)
                    .map(|(&x, &w)| w * x.powi(degree as i32))
                    .sum();
                let exact = 1.0 / (degree as f64 + 1.0);
                assert!(
                    (integral - exact).abs() < 1e-14,
                    "n={n} degree={degree} got {integral}"
                );
            }
        }
    }

    #[test]
    fn tensor_rules_integrate_separable_monomials() {
        let r = tensor_cube(4);
        let integral: f64 = r
            .points
            .iter()
            .zip(&r.weights)
            .map(|(p, &w)| w * p[0].powi(3) * p[1].powi(5) * p[2].powi(2))
            .sum();
        assert!((integral - 1.0 / 4.0 / 6.0 / 3.0).abs() < 1e-15);

        let s = tensor_square(3);
        let integral2: f64 = s
            .points
            .iter()
            .zip(&s.weights)
            .map(|(p, &w)| w * p[0] * p[1].powi(4))
            .sum();
        assert!((integral2 - 1.0 / 2.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn weights_are_positive_and_sum_to_one() {
        for n in 1..=12 {
            let r = gauss_legendre(n);
            assert!(r.weights.iter().all(|&w| w > 0.0));
            let s: f64 = r.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }
}
