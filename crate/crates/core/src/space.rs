//! Modal DG fields and the per-mesh tabulations shared by operators and limiters.

use nalgebra::{DMatrix, DVector};

use crate::basis::{self, Basis, Tabulation};
use crate::error::{BasisError, SolverError};
use crate::mesh::Mesh;
use crate::quadrature::{self, QuadratureRule};

/// Coefficients laid out as `[element][component][basis]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DgField {
    pub n_elems: usize,
    pub n_basis: usize,
    pub n_comp: usize,
    pub coeffs: Vec<f64>,
}

impl DgField {
    pub fn zeros(n_elems: usize, n_basis: usize, n_comp: usize) -> Self {
        Self {
            n_elems,
            n_basis,
            n_comp,
            coeffs: vec![0.0; n_elems * n_basis * n_comp],
        }
    }

    #[inline]
    pub fn stride(&self) -> usize {
        self.n_basis * self.n_comp
    }

    #[inline]
    pub fn elem(&self, e: usize) -> &[f64] {
        let s = self.stride();
        &self.coeffs[e * s..(e + 1) * s]
    }

    #[inline]
    pub fn elem_mut(&mut self, e: usize) -> &mut [f64] {
        let s = self.stride();
        &mut self.coeffs[e * s..(e + 1) * s]
    }

    #[inline]
    pub fn comp(&self, e: usize, c: usize) -> &[f64] {
        let o = e * self.stride() + c * self.n_basis;
        &self.coeffs[o..o + self.n_basis]
    }

    #[inline]
    pub fn comp_mut(&mut self, e: usize, c: usize) -> &mut [f64] {
        let o = e * self.stride() + c * self.n_basis;
        let n = self.n_basis;
        &mut self.coeffs[o..o + n]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n_elems == other.n_elems && self.n_basis == other.n_basis && self.n_comp == other.n_comp
    }

    /// `w1 * a + w2 * b`, coefficientwise.
    pub fn combine(w1: f64, a: &Self, w2: f64, b: &Self) -> Result<Self, SolverError> {
        if !a.same_shape(b) {
            return Err(SolverError::Mismatch("combined fields differ in shape".into()));
        }
        let coeffs = a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| w1 * x + w2 * y).collect();
        Ok(Self { coeffs, ..*a })
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        let s = self.stride();
        self.coeffs.iter().position(|v| !v.is_finite()).map(|i| i / s)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub struct DgSpace {
    pub mesh: Mesh,
    pub basis: Basis,
    pub degree: usize,
    pub dim: usize,
    pub volume_rule: QuadratureRule,
    pub facet_rule: QuadratureRule,
    pub volume_tab: Tabulation,
    /// Indexed by `2 * local_facet + reversed`.
    pub facet_tabs: Vec<Tabulation>,
    /// Positivity point set.
    pub positivity_tab: Tabulation,
    /// Vertices and edge midpoints.
    pub sample_tab: Tabulation,
    pub sample_points: Vec<[f64; 2]>,
    pub centroid_values: Vec<f64>,
    projection_rule: QuadratureRule,
    projection_tab: Tabulation,
}

impl DgSpace {
    pub fn new(mesh: Mesh, degree: usize) -> Result<Self, BasisError> {
        let rule = quadrature::volume_rule(degree, mesh.dim)?;
        Self::with_volume_rule(mesh, degree, rule)
    }

    /// Space with a custom volume rule (the mass matrix stays diagonal only
    /// if the rule is exact to degree `2k`).
    pub fn with_volume_rule(mesh: Mesh, degree: usize, volume_rule: QuadratureRule) -> Result<Self, BasisError> {
        let dim = mesh.dim;
        let basis = Basis::new(degree, dim)?;
        let facet_rule = quadrature::facet_rule(degree, dim)?;
        let volume_tab = basis.tabulate(&volume_rule.points);
        let mut facet_tabs = Vec::with_capacity(2 * (dim + 1));
        for lf in 0..=dim {
            for rev in [false, true] {
                let pts: Vec<[f64; 2]> = facet_rule
                    .points
                    .iter()
                    .map(|p| basis::facet_point(dim, lf, if rev { 1.0 - p[0] } else { p[0] }))
                    .collect();
                facet_tabs.push(basis.tabulate(&pts));
            }
        }
        let positivity_tab = basis.tabulate(&basis::positivity_point_set(degree, dim)?);
        let sample_points = basis::vertex_midpoint_set(dim);
        let sample_tab = basis.tabulate(&sample_points);
        let centroid = if dim == 1 { [0.5, 0.0] } else { [1.0 / 3.0, 1.0 / 3.0] };
        let centroid_values = basis.values_at(centroid);
        let projection_rule = QuadratureRule::volume(dim, 2 * degree + 7)?;
        let projection_tab = basis.tabulate(&projection_rule.points);
        Ok(Self {
            mesh,
            basis,
            degree,
            dim,
            volume_rule,
            facet_rule,
            volume_tab,
            facet_tabs,
            positivity_tab,
            sample_tab,
            sample_points,
            centroid_values,
            projection_rule,
            projection_tab,
        })
    }

    #[inline]
    pub fn n_elements(&self) -> usize {
        self.mesh.n_elements()
    }

    #[inline]
    pub fn n_basis(&self) -> usize {
        self.basis.len()
    }

    /// Number of velocity / discharge components.
    #[inline]
    pub fn n_vec(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn jac(&self, e: usize) -> f64 {
        self.mesh.elements[e].geometry.det
    }

    #[inline]
    pub fn facet_tab(&self, local: usize, reversed: bool) -> &Tabulation {
        &self.facet_tabs[2 * local + reversed as usize]
    }

    pub fn zeros(&self, n_comp: usize) -> DgField {
        DgField::zeros(self.n_elements(), self.n_basis(), n_comp)
    }

    #[inline]
    pub fn average(&self, f: &DgField, e: usize, c: usize) -> f64 {
        f.comp(e, c)[0] * self.basis.phi0()
    }

    pub fn averages(&self, f: &DgField, c: usize) -> Vec<f64> {
        (0..f.n_elems).map(|e| self.average(f, e, c)).collect()
    }

    /// Integral of one component over the whole domain.
    pub fn integral(&self, f: &DgField, c: usize) -> f64 {
        (0..f.n_elems)
            .map(|e| self.average(f, e, c) * self.mesh.elements[e].measure)
            .sum()
    }

    pub fn eval(&self, f: &DgField, e: usize, c: usize, xi: [f64; 2]) -> f64 {
        let phi = self.basis.values_at(xi);
        phi.iter().zip(f.comp(e, c)).map(|(p, a)| p * a).sum()
    }

    /// L2 projection of `f(x)` (one closure per component) with a rule
    /// several degrees more accurate than the solver's volume rule.
    pub fn project(&self, fs: &[&dyn Fn([f64; 2]) -> f64]) -> DgField {
        let mut out = self.zeros(fs.len());
        for e in 0..self.n_elements() {
            let geo = &self.mesh.elements[e].geometry;
            for (c, f) in fs.iter().enumerate() {
                let coeffs = out.comp_mut(e, c);
                for (q, (p, w)) in self
                    .projection_rule
                    .points
                    .iter()
                    .zip(&self.projection_rule.weights)
                    .enumerate()
                {
                    let v = f(geo.map(*p));
                    for (a, phi) in coeffs.iter_mut().zip(self.projection_tab.row(q)) {
                        *a += w * v * phi;
                    }
                }
            }
        }
        out
    }

    /// Continuous piecewise polynomial interpolant at equispaced Lagrange
    /// nodes, expressed in the modal basis.
    pub fn interpolate_continuous(&self, f: &dyn Fn([f64; 2]) -> f64) -> Result<DgField, SolverError> {
        let nodes = basis::lagrange_nodes(self.degree, self.dim);
        let n = self.n_basis();
        let mut v = DMatrix::zeros(n, n);
        for (i, xi) in nodes.iter().enumerate() {
            for (j, p) in self.basis.values_at(*xi).into_iter().enumerate() {
                v[(i, j)] = p;
            }
        }
        let lu = v.lu();
        let mut out = self.zeros(1);
        for e in 0..self.n_elements() {
            let geo = &self.mesh.elements[e].geometry;
            let rhs = DVector::from_iterator(n, nodes.iter().map(|xi| f(geo.map(*xi))));
            let c = lu
                .solve(&rhs)
                .ok_or_else(|| SolverError::Mismatch("singular Lagrange interpolation matrix".into()))?;
            out.comp_mut(e, 0).copy_from_slice(c.as_slice());
        }
        Ok(out)
    }

    /// Keep only the linear modes of every component.
    pub fn linear_part(&self, f: &DgField) -> DgField {
        let mut out = f.clone();
        let nl = self.basis.linear_len();
        for e in 0..f.n_elems {
            for c in 0..f.n_comp {
                for a in &mut out.comp_mut(e, c)[nl..] {
                    *a = 0.0;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_interval_mesh, build_structured_triangular, SideTags};

    #[test]
    fn constant_field_has_constant_average() {
        let sp = DgSpace::new(
            build_structured_triangular(3, 2, [0.0, 2.0, 0.0, 1.0], SideTags::periodic()).unwrap(),
            2,
        )
        .unwrap();
        let f = sp.project(&[&|_| 3.25]);
        for e in 0..sp.n_elements() {
            assert!((sp.average(&f, e, 0) - 3.25).abs() < 1e-13);
        }
        assert!((sp.integral(&f, 0) - 6.5).abs() < 1e-12);
    }

    #[test]
    fn projection_is_exact_for_polynomials() {
        let sp = DgSpace::new(build_interval_mesh(-1.0, 2.0, 5, false).unwrap(), 2).unwrap();
        let p = |x: [f64; 2]| 1.0 - 2.0 * x[0] + 0.5 * x[0] * x[0];
        let f = sp.project(&[&p]);
        for e in 0..sp.n_elements() {
            for xi in [0.0, 0.3, 1.0] {
                let x = sp.mesh.elements[e].geometry.map([xi, 0.0]);
                assert!((sp.eval(&f, e, 0, [xi, 0.0]) - p(x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn continuous_interpolant_has_matching_traces() {
        let sp = DgSpace::new(
            build_structured_triangular(
                4,
                3,
                [0.0, 1.0, 0.0, 1.0],
                SideTags::all(crate::mesh::BoundaryTag::Wall),
            )
            .unwrap(),
            2,
        )
        .unwrap();
        let b = sp
            .interpolate_continuous(&|x| (3.0 * x[0]).sin() * (2.0 * x[1]).cos())
            .unwrap();
        for f in &sp.mesh.facets {
            if let Some(m) = f.minus() {
                let (tp, tm) = (sp.facet_tab(f.plus.local, false), sp.facet_tab(m.local, m.reversed));
                for q in 0..tp.n_points {
                    let a = tp.eval(q, b.comp(f.plus.element, 0));
                    let c = tm.eval(q, b.comp(m.element, 0));
                    assert!((a - c).abs() < 1e-12);
                }
            }
        }
        // Quadratics are reproduced exactly.
        let q = |x: [f64; 2]| x[0] * x[1] + x[1] * x[1] - 0.5;
        let bq = sp.interpolate_continuous(&q).unwrap();
        let pq = sp.project(&[&q]);
        assert!(bq.max_abs_diff(&pq) < 1e-12);
    }

    #[test]
    fn combine_is_linear() {
        let a = DgField {
            n_elems: 1,
            n_basis: 2,
            n_comp: 1,
            coeffs: vec![1.0, 2.0],
        };
        let b = DgField {
            n_elems: 1,
            n_basis: 2,
            n_comp: 1,
            coeffs: vec![3.0, -2.0],
        };
        assert_eq!(DgField::combine(1.0, &a, 0.0, &b).unwrap(), a);
        assert_eq!(DgField::combine(0.25, &a, 0.75, &b).unwrap().coeffs, vec![2.5, -1.0]);
        let c = DgField::zeros(2, 2, 1);
        assert!(DgField::combine(0.5, &a, 0.5, &c).is_err());
    }
}
