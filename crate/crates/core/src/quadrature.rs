//! Quadrature rules on the reference interval `[0, 1]` and the reference
//! triangle with vertices `(0,0)`, `(1,0)`, `(0,1)`.
//!
//! Nodes and weights of the one-dimensional Gauss-Jacobi rules come from the
//! Golub-Welsch eigenvalue problem. Triangle rules use the collapsed (Duffy)
//! map with a Gauss-Jacobi rule in the collapsed direction so that the
//! Jacobian factor is absorbed into the weight.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::BasisError;

/// Highest polynomial degree the solver supports.
pub const MAX_DEGREE: usize = 4;

/// Points are stored as `[xi, eta]`; in 1D `eta` is always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub exactness: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Volume rule exact for polynomials of total degree `exactness`.
    pub fn volume(dim: usize, exactness: usize) -> Result<Self, BasisError> {
        let n = (exactness + 1).div_ceil(2).max(1);
        match dim {
            1 => {
                let (x, w) = gauss_jacobi(n, 0.0, 0.0);
                Ok(Self {
                    points: x.iter().map(|&t| [0.5 * (t + 1.0), 0.0]).collect(),
                    weights: w.iter().map(|&w| 0.5 * w).collect(),
                    exactness: 2 * n - 1,
                })
            }
            2 => {
                // x = s (1 - t), y = t with (s, t) in [0,1]^2, dx dy = (1 - t) ds dt.
                let (xs, ws) = gauss_jacobi(n, 0.0, 0.0);
                let (xt, wt) = gauss_jacobi(n, 1.0, 0.0);
                let mut points = Vec::with_capacity(n * n);
                let mut weights = Vec::with_capacity(n * n);
                for (tj, wj) in xt.iter().zip(&wt) {
                    let t = 0.5 * (tj + 1.0);
                    for (si, wi) in xs.iter().zip(&ws) {
                        let s = 0.5 * (si + 1.0);
                        points.push([s * (1.0 - t), t]);
                        // 1/2 from s-map, 1/4 from the (1 - t) weight on [-1, 1] mapped to [0, 1].
                        weights.push(0.5 * wi * 0.25 * wj);
                    }
                }
                Ok(Self {
                    points,
                    weights,
                    exactness: 2 * n - 1,
                })
            }
            _ => Err(BasisError::UnsupportedDimension(dim)),
        }
    }

    /// Gauss-Legendre rule with `n` points on `[0, 1]`, stored as `[t, 0]`.
    pub fn gauss_interval(n: usize) -> Self {
        let (x, w) = gauss_jacobi(n, 0.0, 0.0);
        Self {
            points: x.iter().map(|&t| [0.5 * (t + 1.0), 0.0]).collect(),
            weights: w.iter().map(|&w| 0.5 * w).collect(),
            exactness: 2 * n - 1,
        }
    }
}

/// Volume rule used by the scheme for degree `k`: exact to degree `2k + 1`.
pub fn volume_rule(k: usize, dim: usize) -> Result<QuadratureRule, BasisError> {
    check_degree(k)?;
    QuadratureRule::volume(dim, 2 * k + 1)
}

/// `(k+1)`-point Gauss rule on the reference facet `[0, 1]`.
///
/// In 1D a facet is a point and the rule is the single unit weight.
pub fn facet_rule(k: usize, dim: usize) -> Result<QuadratureRule, BasisError> {
    check_degree(k)?;
    match dim {
        1 => Ok(QuadratureRule {
            points: vec![[0.0, 0.0]],
            weights: vec![1.0],
            exactness: usize::MAX,
        }),
        2 => Ok(QuadratureRule::gauss_interval(k + 1)),
        _ => Err(BasisError::UnsupportedDimension(dim)),
    }
}

/// First weight of the `ceil((k+3)/2)`-point Gauss-Lobatto rule on `[-1/2, 1/2]`.
///
/// For an `n`-point Lobatto rule on `[-1, 1]` the endpoint weight is
/// `2 / (n (n - 1))`; rescaling to unit length halves it.
pub fn lobatto_w1(k: usize) -> Result<f64, BasisError> {
    check_degree(k)?;
    let n = (k + 3).div_ceil(2) as f64;
    Ok(1.0 / (n * (n - 1.0)))
}

pub(crate) fn check_degree(k: usize) -> Result<(), BasisError> {
    if k > MAX_DEGREE {
        Err(BasisError::UnsupportedDegree(k))
    } else {
        Ok(())
    }
}

/// Gauss-Jacobi nodes and weights on `[-1, 1]` for the weight
/// `(1 - x)^alpha (1 + x)^beta`.
pub fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let ab = alpha + beta;
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        let diag = if k == 0 {
            (beta - alpha) / (ab + 2.0)
        } else {
            (beta * beta - alpha * alpha) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
        };
        jac[(k, k)] = diag;
        if k + 1 < n {
            let j = kf + 1.0;
            let num = 4.0 * j * (j + alpha) * (j + beta) * (j + ab);
            let den = (2.0 * j + ab).powi(2) * (2.0 * j + ab + 1.0) * (2.0 * j + ab - 1.0);
            let off = (num / den).sqrt();
            jac[(k, k + 1)] = off;
            jac[(k + 1, k)] = off;
        }
    }
    let mu0 = 2f64.powf(ab + 1.0) * gamma_int(alpha + 1.0) * gamma_int(beta + 1.0) / gamma_int(ab + 2.0);
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    for p in pairs.iter_mut() {
        polish_node(n, alpha, beta, &mut p.0);
    }
    pairs.into_iter().unzip()
}

/// One or two Newton steps on the Jacobi polynomial to push the eigenvalue
/// estimate to full precision.
fn polish_node(n: usize, alpha: f64, beta: f64, x: &mut f64) {
    for _ in 0..2 {
        let (p, dp) = jacobi_with_derivative(n, alpha, beta, *x);
        if dp != 0.0 {
            let step = p / dp;
            if step.is_finite() && step.abs() < 1e-6 {
                *x -= step;
            }
        }
    }
}

/// Unnormalised Jacobi polynomial `P_n^{(a,b)}(x)` and its derivative.
fn jacobi_with_derivative(n: usize, a: f64, b: f64, x: f64) -> (f64, f64) {
    let eval = |n: usize, a: f64, b: f64| -> f64 {
        if n == 0 {
            return 1.0;
        }
        let mut p0 = 1.0;
        let mut p1 = 0.5 * (a - b + (a + b + 2.0) * x);
        for k in 2..=n {
            let k = k as f64;
            let c = 2.0 * k + a + b;
            let a1 = 2.0 * k * (k + a + b) * (c - 2.0);
            let a2 = (c - 1.0) * (a * a - b * b);
            let a3 = (c - 2.0) * (c - 1.0) * c;
            let a4 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * c;
            let p2 = ((a2 + a3 * x) * p1 - a4 * p0) / a1;
            p0 = p1;
            p1 = p2;
        }
        p1
    };
    let p = eval(n, a, b);
    let dp = if n == 0 {
        0.0
    } else {
        0.5 * (n as f64 + a + b + 1.0) * eval(n - 1, a + 1.0, b + 1.0)
    };
    (p, dp)
}

/// Gamma function at positive integer arguments (all the rules need).
pub(crate) fn gamma_int(x: f64) -> f64 {
    let n = x.round();
    debug_assert!((x - n).abs() < 1e-12 && n >= 1.0);
    (1..n as u64).map(|i| i as f64).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn interval_rules_integrate_monomials() {
        for k in 0..=MAX_DEGREE {
            let rule = volume_rule(k, 1).unwrap();
            assert!(rule.exactness >= 2 * k + 1);
            for p in 0..=(2 * k + 1) as i32 {
                let q: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(x, w)| w * x[0].powi(p))
                    .sum();
                assert!((q - 1.0 / (p as f64 + 1.0)).abs() < 1e-14, "k={k} p={p}");
            }
        }
    }

    #[test]
    fn even_exactness_is_honoured() {
        for e in 0..=10 {
            for dim in [1, 2] {
                let rule = QuadratureRule::volume(dim, e).unwrap();
                assert!(rule.exactness >= e);
                let q: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(x, w)| w * x[0].powi(e as i32))
                    .sum();
                let exact = if dim == 1 {
                    1.0 / (e as f64 + 1.0)
                } else {
                    factorial(e as u32) / factorial(e as u32 + 2)
                };
                assert!((q - exact).abs() < 1e-14, "dim={dim} e={e}");
            }
        }
    }

    #[test]
    fn midpoint_rule_for_k0() {
        let rule = volume_rule(0, 1).unwrap();
        assert_eq!(rule.len(), 1);
        assert!((rule.points[0][0] - 0.5).abs() < 1e-15);
        assert!((rule.weight_sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn triangle_rules_integrate_monomials() {
        for k in 0..=MAX_DEGREE {
            let rule = volume_rule(k, 2).unwrap();
            let d = 2 * k + 1;
            for a in 0..=d as u32 {
                for b in 0..=(d as u32 - a) {
                    let q: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(x, w)| w * x[0].powi(a as i32) * x[1].powi(b as i32))
                        .sum();
                    let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                    assert!((q - exact).abs() < 1e-14, "k={k} a={a} b={b}: {q} vs {exact}");
                }
            }
            assert!(rule.weights.iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn k2_triangle_rule_handles_x2y3() {
        let rule = volume_rule(2, 2).unwrap();
        let q: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(x, w)| w * x[0].powi(2) * x[1].powi(3))
            .sum();
        assert!((q - 2.0 * 6.0 / 5040.0).abs() < 1e-15);
    }

    #[test]
    fn facet_rules() {
        assert_eq!(facet_rule(0, 2).unwrap().len(), 1);
        let r1 = facet_rule(1, 2).unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert!((r1.points[0][0] - 0.5 * (1.0 - s)).abs() < 1e-15);
        assert!((r1.points[1][0] - 0.5 * (1.0 + s)).abs() < 1e-15);
        let r2 = facet_rule(2, 2).unwrap();
        assert_eq!(r2.len(), 3);
        for p in 0..=5 {
            let q: f64 = r2.points.iter().zip(&r2.weights).map(|(x, w)| w * x[0].powi(p)).sum();
            assert!((q - 1.0 / (p as f64 + 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn lobatto_first_weights() {
        assert_eq!(lobatto_w1(0).unwrap(), 0.5);
        assert_eq!(lobatto_w1(1).unwrap(), 0.5);
        assert!((lobatto_w1(2).unwrap() - 1.0 / 6.0).abs() < 1e-16);
        assert!(lobatto_w1(5).is_err());
    }

    #[test]
    fn lobatto_weight_matches_moment_fit() {
        // 3- and 4-point Lobatto nodes on [-1, 1]; weights from the moment system.
        for (n, nodes) in [
            (3usize, vec![-1.0, 0.0, 1.0]),
            (4, vec![-1.0, -1.0 / 5f64.sqrt(), 1.0 / 5f64.sqrt(), 1.0]),
        ] {
            let a = DMatrix::from_fn(n, n, |i, j| nodes[j].powi(i as i32));
            let rhs = nalgebra::DVector::from_fn(n, |i, _| if i % 2 == 0 { 2.0 / (i as f64 + 1.0) } else { 0.0 });
            let w = a.lu().solve(&rhs).unwrap();
            let k = if n == 3 { 2 } else { 4 };
            assert!((0.5 * w[0] - lobatto_w1(k).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn unsupported_degree() {
        assert!(volume_rule(5, 1).is_err());
        assert!(facet_rule(7, 2).is_err());
    }
}
