//! Orthonormal modal bases on the reference elements.
//!
//! 1D: scaled Legendre polynomials on `[0, 1]`. 2D: the Dubiner basis on the
//! triangle `(0,0), (1,0), (0,1)`, built from normalised Jacobi polynomials in
//! collapsed coordinates. Both are orthonormal with respect to the plain
//! reference measure, so the unweighted mass matrix on an affine element is
//! `|det J|` times the identity. Modes are ordered by total degree, which
//! makes the first `dim + 1` coefficients the linear part.

use crate::error::BasisError;
use crate::quadrature::{check_degree, facet_rule, gamma_int, volume_rule, QuadratureRule};

#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    dim: usize,
    degree: usize,
    /// `(i, j)` Dubiner indices per mode (`j = 0` in 1D).
    modes: Vec<(usize, usize)>,
}

impl Basis {
    pub fn new(degree: usize, dim: usize) -> Result<Self, BasisError> {
        check_degree(degree)?;
        let modes = match dim {
            1 => (0..=degree).map(|i| (i, 0)).collect(),
            2 => {
                let mut modes = Vec::new();
                for total in 0..=degree {
                    for j in 0..=total {
                        modes.push((total - j, j));
                    }
                }
                modes
            }
            _ => return Err(BasisError::UnsupportedDimension(dim)),
        };
        Ok(Self { dim, degree, modes })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Number of modes spanning polynomials of degree at most one.
    pub fn linear_len(&self) -> usize {
        if self.degree == 0 {
            1
        } else {
            self.dim + 1
        }
    }

    /// Measure of the reference element.
    pub fn reference_measure(&self) -> f64 {
        if self.dim == 1 {
            1.0
        } else {
            0.5
        }
    }

    /// Value of the constant mode; a field's cell average is `c_0 * phi_0`.
    pub fn phi0(&self) -> f64 {
        1.0 / self.reference_measure().sqrt()
    }

    pub fn eval(&self, xi: [f64; 2], out: &mut [f64]) {
        match self.dim {
            1 => {
                let x = 2.0 * xi[0] - 1.0;
                for (o, &(i, _)) in out.iter_mut().zip(&self.modes) {
                    *o = ((2 * i + 1) as f64).sqrt() * legendre(i, x);
                }
            }
            _ => {
                let (a, b) = collapse(xi);
                for (o, &(i, j)) in out.iter_mut().zip(&self.modes) {
                    *o = 2.0 * dubiner(a, b, i, j);
                }
            }
        }
    }

    /// Gradients with respect to the reference coordinates, `out[m] = [d/dxi, d/deta]`.
    pub fn eval_grad(&self, xi: [f64; 2], out: &mut [[f64; 2]]) {
        match self.dim {
            1 => {
                let x = 2.0 * xi[0] - 1.0;
                for (o, &(i, _)) in out.iter_mut().zip(&self.modes) {
                    let d = if i == 0 {
                        0.0
                    } else {
                        ((i * (i + 1)) as f64).sqrt() * jacobi_normalized(i - 1, 1.0, 1.0, x)
                    };
                    // phi = sqrt(2i+1) P_i(x) = sqrt(2) * normalised Legendre.
                    *o = [2.0 * 2f64.sqrt() * d, 0.0];
                }
            }
            _ => {
                let (a, b) = collapse(xi);
                for (o, &(i, j)) in out.iter_mut().zip(&self.modes) {
                    let (dr, ds) = dubiner_grad(a, b, i, j);
                    // phi = 2 psi(r, s), r = 2 xi - 1, s = 2 eta - 1.
                    *o = [4.0 * dr, 4.0 * ds];
                }
            }
        }
    }

    pub fn values_at(&self, xi: [f64; 2]) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        self.eval(xi, &mut v);
        v
    }

    pub fn tabulate(&self, points: &[[f64; 2]]) -> Tabulation {
        let nb = self.len();
        let mut values = vec![0.0; points.len() * nb];
        let mut grads = vec![[0.0; 2]; points.len() * nb];
        for (q, &p) in points.iter().enumerate() {
            self.eval(p, &mut values[q * nb..(q + 1) * nb]);
            self.eval_grad(p, &mut grads[q * nb..(q + 1) * nb]);
        }
        Tabulation {
            n_points: points.len(),
            n_basis: nb,
            values,
            grads,
        }
    }

    /// Reference-facet parametrisation: local facet `f`, parameter `t` in `[0, 1]`.
    ///
    /// Triangle facet `f` runs from local vertex `f` to vertex `(f + 1) % 3`.
    /// 1D facet 0 is the left end, facet 1 the right end.
    pub fn facet_point(&self, facet: usize, t: f64) -> [f64; 2] {
        facet_point(self.dim, facet, t)
    }

    pub fn n_facets(&self) -> usize {
        self.dim + 1
    }
}

pub fn facet_point(dim: usize, facet: usize, t: f64) -> [f64; 2] {
    if dim == 1 {
        return [if facet == 0 { 0.0 } else { 1.0 }, 0.0];
    }
    match facet {
        0 => [t, 0.0],
        1 => [1.0 - t, t],
        _ => [0.0, 1.0 - t],
    }
}

/// Reference vertex coordinates.
pub fn reference_vertices(dim: usize) -> Vec<[f64; 2]> {
    if dim == 1 {
        vec![[0.0, 0.0], [1.0, 0.0]]
    } else {
        vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
    }
}

/// Basis values (and reference gradients) tabulated at a point set,
/// row-major by point.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulation {
    pub n_points: usize,
    pub n_basis: usize,
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
}

impl Tabulation {
    #[inline]
    pub fn row(&self, q: usize) -> &[f64] {
        &self.values[q * self.n_basis..(q + 1) * self.n_basis]
    }

    #[inline]
    pub fn grad_row(&self, q: usize) -> &[[f64; 2]] {
        &self.grads[q * self.n_basis..(q + 1) * self.n_basis]
    }

    /// Evaluate an expansion with coefficients `c` at point `q`.
    #[inline]
    pub fn eval(&self, q: usize, c: &[f64]) -> f64 {
        self.row(q).iter().zip(c).map(|(p, c)| p * c).sum()
    }
}

/// Reference points of the positivity set: `k+1` Gauss points on every facet
/// plus all volume quadrature points.
pub fn positivity_point_set(k: usize, dim: usize) -> Result<Vec<[f64; 2]>, BasisError> {
    let facet = facet_rule(k, dim)?;
    let vol = volume_rule(k, dim)?;
    let mut pts: Vec<[f64; 2]> = Vec::new();
    for f in 0..=dim {
        for p in &facet.points {
            pts.push(facet_point(dim, f, p[0]));
        }
    }
    pts.extend(vol.points.iter().copied());
    let mut unique: Vec<[f64; 2]> = Vec::with_capacity(pts.len());
    for p in pts {
        if !unique
            .iter()
            .any(|q| (q[0] - p[0]).abs() < 1e-14 && (q[1] - p[1]).abs() < 1e-14)
        {
            unique.push(p);
        }
    }
    Ok(unique)
}

/// Vertices and edge midpoints (1D: both ends and the midpoint), the
/// sampling set of the velocity limiter.
pub fn vertex_midpoint_set(dim: usize) -> Vec<[f64; 2]> {
    if dim == 1 {
        vec![[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]]
    } else {
        vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]
    }
}

/// Equispaced Lagrange nodes of degree `k` on the reference element.
///
/// Nodes on a shared facet coincide between neighbours, so interpolating at
/// them yields a continuous piecewise polynomial.
pub fn lagrange_nodes(k: usize, dim: usize) -> Vec<[f64; 2]> {
    if k == 0 {
        return vec![if dim == 1 { [0.5, 0.0] } else { [1.0 / 3.0, 1.0 / 3.0] }];
    }
    let kf = k as f64;
    if dim == 1 {
        return (0..=k).map(|i| [i as f64 / kf, 0.0]).collect();
    }
    let mut nodes = Vec::new();
    for j in 0..=k {
        for i in 0..=(k - j) {
            nodes.push([i as f64 / kf, j as f64 / kf]);
        }
    }
    nodes
}

/// Project the function `f` (given in reference coordinates) onto the basis
/// using `rule`. Returns modal coefficients.
pub fn project_reference(basis: &Basis, rule: &QuadratureRule, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    let mut c = vec![0.0; basis.len()];
    let mut phi = vec![0.0; basis.len()];
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        basis.eval(*p, &mut phi);
        let v = f(*p);
        for (ci, pi) in c.iter_mut().zip(&phi) {
            *ci += w * v * pi;
        }
    }
    c
}

fn collapse(xi: [f64; 2]) -> (f64, f64) {
    let r = 2.0 * xi[0] - 1.0;
    let s = 2.0 * xi[1] - 1.0;
    let a = if (1.0 - s).abs() > 1e-14 {
        2.0 * (1.0 + r) / (1.0 - s) - 1.0
    } else {
        -1.0
    };
    (a, s)
}

fn legendre(n: usize, x: f64) -> f64 {
    let mut p0 = 1.0;
    if n == 0 {
        return p0;
    }
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Jacobi polynomial normalised to unit norm under `(1-x)^a (1+x)^b` on `[-1, 1]`.
fn jacobi_normalized(n: usize, a: f64, b: f64, x: f64) -> f64 {
    let ab = a + b;
    let gamma0 = 2f64.powf(ab + 1.0) / (ab + 1.0) * gamma_int(a + 1.0) * gamma_int(b + 1.0) / gamma_int(ab + 1.0);
    let p0 = 1.0 / gamma0.sqrt();
    if n == 0 {
        return p0;
    }
    let gamma1 = (a + 1.0) * (b + 1.0) / (ab + 3.0) * gamma0;
    let p1 = ((ab + 2.0) * x / 2.0 + (a - b) / 2.0) / gamma1.sqrt();
    if n == 1 {
        return p1;
    }
    let mut aold = 2.0 / (2.0 + ab) * ((a + 1.0) * (b + 1.0) / (ab + 3.0)).sqrt();
    let (mut pm1, mut p) = (p0, p1);
    for i in 1..n {
        let i = i as f64;
        let h1 = 2.0 * i + ab;
        let anew = 2.0 / (h1 + 2.0)
            * ((i + 1.0) * (i + 1.0 + ab) * (i + 1.0 + a) * (i + 1.0 + b) / (h1 + 1.0) / (h1 + 3.0)).sqrt();
        let bnew = -(a * a - b * b) / h1 / (h1 + 2.0);
        let next = (-aold * pm1 + (x - bnew) * p) / anew;
        pm1 = p;
        p = next;
        aold = anew;
    }
    p
}

fn jacobi_normalized_grad(n: usize, a: f64, b: f64, x: f64) -> f64 {
    if n == 0 {
        0.0
    } else {
        ((n as f64) * (n as f64 + a + b + 1.0)).sqrt() * jacobi_normalized(n - 1, a + 1.0, b + 1.0, x)
    }
}

/// Orthonormal Dubiner mode on the triangle `(-1,-1), (1,-1), (-1,1)`.
fn dubiner(a: f64, b: f64, i: usize, j: usize) -> f64 {
    let h1 = jacobi_normalized(i, 0.0, 0.0, a);
    let h2 = jacobi_normalized(j, (2 * i + 1) as f64, 0.0, b);
    2f64.sqrt() * h1 * h2 * (1.0 - b).powi(i as i32)
}

fn dubiner_grad(a: f64, b: f64, i: usize, j: usize) -> (f64, f64) {
    let fa = jacobi_normalized(i, 0.0, 0.0, a);
    let dfa = jacobi_normalized_grad(i, 0.0, 0.0, a);
    let alpha = (2 * i + 1) as f64;
    let gb = jacobi_normalized(j, alpha, 0.0, b);
    let dgb = jacobi_normalized_grad(j, alpha, 0.0, b);
    let half = 0.5 * (1.0 - b);
    let mut dr = dfa * gb;
    if i > 0 {
        dr *= half.powi(i as i32 - 1);
    }
    let mut ds = dfa * (gb * (0.5 * (1.0 + a)));
    if i > 0 {
        ds *= half.powi(i as i32 - 1);
    }
    let mut tmp = dgb * half.powi(i as i32);
    if i > 0 {
        tmp -= 0.5 * i as f64 * gb * half.powi(i as i32 - 1);
    }
    ds += fa * tmp;
    let scale = 2f64.powf(i as f64 + 0.5);
    (dr * scale, ds * scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mass_matrix(basis: &Basis, rule: &QuadratureRule) -> Vec<Vec<f64>> {
        let tab = basis.tabulate(&rule.points);
        let nb = basis.len();
        let mut m = vec![vec![0.0; nb]; nb];
        for (q, w) in rule.weights.iter().enumerate() {
            let row = tab.row(q);
            for i in 0..nb {
                for j in 0..nb {
                    m[i][j] += w * row[i] * row[j];
                }
            }
        }
        m
    }

    #[test]
    fn orthonormal_in_both_dimensions() {
        for dim in 1..=2 {
            for k in 0..=4 {
                let basis = Basis::new(k, dim).unwrap();
                let rule = volume_rule(k, dim).unwrap();
                let m = mass_matrix(&basis, &rule);
                for (i, row) in m.iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        let e = if i == j { 1.0 } else { 0.0 };
                        assert!((v - e).abs() < 1e-12, "dim={dim} k={k} ({i},{j}) = {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn dimension_counts() {
        assert_eq!(Basis::new(2, 1).unwrap().len(), 3);
        assert_eq!(Basis::new(2, 2).unwrap().len(), 6);
        assert_eq!(Basis::new(4, 2).unwrap().len(), 15);
        assert!(Basis::new(5, 2).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let eps = 1e-6;
        for dim in 1..=2 {
            let basis = Basis::new(4, dim).unwrap();
            let nb = basis.len();
            let pts = [[0.2, 0.3], [0.6, 0.1], [0.1, 0.75], [0.33, 0.33]];
            for p in pts {
                let p = if dim == 1 { [p[0], 0.0] } else { p };
                let mut g = vec![[0.0; 2]; nb];
                basis.eval_grad(p, &mut g);
                for d in 0..dim {
                    let mut pp = p;
                    let mut pm = p;
                    pp[d] += eps;
                    pm[d] -= eps;
                    let vp = basis.values_at(pp);
                    let vm = basis.values_at(pm);
                    for m in 0..nb {
                        let fd = (vp[m] - vm[m]) / (2.0 * eps);
                        assert!(
                            (fd - g[m][d]).abs() < 1e-6 * (1.0 + fd.abs()),
                            "dim={dim} mode={m} d={d}: {fd} vs {}",
                            g[m][d]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn projection_reproduces_polynomials() {
        for dim in 1..=2 {
            for k in 0..=3 {
                let basis = Basis::new(k, dim).unwrap();
                let rule = volume_rule(k, dim).unwrap();
                let f = |x: [f64; 2]| {
                    let mut s = 0.7;
                    for d in 1..=k {
                        s += 0.3 * x[0].powi(d as i32) - 0.2 * (x[0] * x[1]).powi(d as i32 / 2)
                            + 0.1 * x[1].powi(d as i32);
                    }
                    s
                };
                let c = project_reference(&basis, &rule, f);
                let tab = basis.tabulate(&rule.points);
                for (q, p) in rule.points.iter().enumerate() {
                    assert!((tab.eval(q, &c) - f(*p)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn linear_modes_come_first() {
        let basis = Basis::new(3, 2).unwrap();
        // Every mode beyond the linear ones is orthogonal to all linears.
        let rule = volume_rule(3, 2).unwrap();
        let tab = basis.tabulate(&rule.points);
        for m in basis.linear_len()..basis.len() {
            let lins: [fn([f64; 2]) -> f64; 3] = [|_| 1.0, |x| x[0], |x| x[1]];
            for lin in lins {
                let s: f64 = rule
                    .points
                    .iter()
                    .enumerate()
                    .map(|(q, p)| rule.weights[q] * tab.row(q)[m] * lin(*p))
                    .sum();
                assert!(s.abs() < 1e-13);
            }
        }
    }

    #[test]
    fn positivity_sets() {
        let s = positivity_point_set(0, 1).unwrap();
        assert_eq!(s.len(), 3);
        let s = positivity_point_set(1, 1).unwrap();
        assert_eq!(s.len(), 4);
        let s = positivity_point_set(2, 2).unwrap();
        assert_eq!(s.len(), 9 + volume_rule(2, 2).unwrap().len());
        for p in &s[..9] {
            let on_edge = p[1].abs() < 1e-15 || p[0].abs() < 1e-15 || (p[0] + p[1] - 1.0).abs() < 1e-15;
            assert!(on_edge);
        }
    }

    #[test]
    fn phi0_gives_cell_average() {
        for dim in 1..=2 {
            let basis = Basis::new(2, dim).unwrap();
            let rule = volume_rule(2, dim).unwrap();
            let c = project_reference(&basis, &rule, |_| 3.5);
            assert!((c[0] * basis.phi0() - 3.5).abs() < 1e-14);
        }
    }
}
