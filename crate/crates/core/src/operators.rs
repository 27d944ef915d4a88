//! Semi-discrete operators, velocity update and global functionals.
//!
//! Residuals are returned against the orthonormal modal basis, so the mass
//! matrix of element `K` is `|det J_K| I`.

use rayon::prelude::*;

use crate::cases::ghost_trace;
use crate::error::SolverError;
use crate::mesh::{FacetKind, FacetSide};
use crate::physics::{self, FacetTrace, PointState};
use crate::space::{DgField, DgSpace};

/// Spatial discretisation: space, bottom and gravity.
pub struct Scheme {
    pub space: DgSpace,
    pub g: f64,
    pub bottom: DgField,
    /// Use hydrostatic reconstruction in the facet fluxes.
    pub reconstruct: bool,
}

#[derive(Debug, Clone)]
pub struct Residual {
    /// `A_h(h, u; e_i)` for every basis function.
    pub mass: DgField,
    /// `B_h + C_h - A_h(.; u_c e_i / 2)` for every component and basis function.
    pub momentum: DgField,
    /// Net outward mass flux through boundary facets.
    pub boundary_mass_flux: f64,
    /// Facet points where a negative height trace was clamped.
    pub clamped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub h: DgField,
    pub u: DgField,
    pub m: DgField,
}

impl Scheme {
    pub fn new(space: DgSpace, g: f64, bottom: DgField, reconstruct: bool) -> Self {
        Self {
            space,
            g,
            bottom,
            reconstruct,
        }
    }

    pub fn check(&self, h: &DgField, u: &DgField) -> Result<(), SolverError> {
        let sp = &self.space;
        let ok = h.n_elems == sp.n_elements()
            && h.n_basis == sp.n_basis()
            && h.n_comp == 1
            && u.n_elems == h.n_elems
            && u.n_basis == h.n_basis
            && u.n_comp == sp.n_vec()
            && self.bottom.same_shape(h);
        if ok {
            Ok(())
        } else {
            Err(SolverError::Mismatch(format!(
                "h {}x{}x{}, u {}x{}x{}, space {} elements of {} modes",
                h.n_elems,
                h.n_basis,
                h.n_comp,
                u.n_elems,
                u.n_basis,
                u.n_comp,
                sp.n_elements(),
                sp.n_basis()
            )))
        }
    }

    /// Point state of element `e` at row `q` of `tab`.
    #[inline]
    fn point(&self, tab: &crate::basis::Tabulation, q: usize, e: usize, h: &DgField, u: &DgField) -> PointState {
        let mut s = PointState {
            h: tab.eval(q, h.comp(e, 0)),
            u: [0.0; 2],
            b: tab.eval(q, self.bottom.comp(e, 0)),
        };
        for c in 0..u.n_comp {
            s.u[c] = tab.eval(q, u.comp(e, c));
        }
        s
    }

    /// Traces on both sides of facet `f` at facet quadrature point `q`.
    pub fn facet_trace(&self, f: usize, q: usize, h: &DgField, u: &DgField) -> FacetTrace {
        let sp = &self.space;
        let facet = &sp.mesh.facets[f];
        let p = facet.plus;
        let plus = self.point(sp.facet_tab(p.local, false), q, p.element, h, u);
        let minus = match facet.kind {
            FacetKind::Interior { minus, .. } => {
                self.point(sp.facet_tab(minus.local, minus.reversed), q, minus.element, h, u)
            }
            FacetKind::Boundary(tag) => ghost_trace(plus, facet.normal, tag),
        };
        FacetTrace {
            plus,
            minus,
            n: facet.normal,
        }
    }

    pub fn residual(&self, h: &DgField, u: &DgField) -> Result<Residual, SolverError> {
        self.check(h, u)?;
        let sp = &self.space;
        let nb = sp.n_basis();
        let nv = sp.n_vec();
        let g = self.g;
        let mut mass = sp.zeros(1);
        let mut momentum = sp.zeros(nv);

        mass.coeffs
            .par_chunks_mut(nb)
            .zip(momentum.coeffs.par_chunks_mut(nb * nv))
            .enumerate()
            .for_each(|(e, (rm, rmom))| self.volume_terms(e, h, u, rm, rmom));

        let mut boundary_mass_flux = 0.0;
        let mut clamped = 0;
        for (f, facet) in sp.mesh.facets.iter().enumerate() {
            let n = facet.normal;
            let minus = facet.minus();
            for q in 0..sp.facet_rule.len() {
                let w = sp.facet_rule.weights[q] * facet.measure;
                let tr = self.facet_trace(f, q, h, u);
                if tr.plus.h < 0.0 || tr.minus.h < 0.0 {
                    clamped += 1;
                }
                let fl = physics::numerical_flux(g, &tr, self.reconstruct);
                let jeta = tr.plus.eta() - tr.minus.eta();
                self.scatter(
                    facet.plus,
                    false,
                    w,
                    &fl,
                    jeta,
                    &tr.plus,
                    n,
                    q,
                    &mut mass,
                    &mut momentum,
                );
                match minus {
                    Some(m) => self.scatter(m, true, w, &fl, jeta, &tr.minus, n, q, &mut mass, &mut momentum),
                    None => boundary_mass_flux += w * fl.mass,
                }
            }
        }
        Ok(Residual {
            mass,
            momentum,
            boundary_mass_flux,
            clamped,
        })
    }

    #[allow(clippy::too_many_arguments)]
    #[inline]
    fn scatter(
        &self,
        side: FacetSide,
        is_minus: bool,
        w: f64,
        fl: &physics::FluxValues,
        jeta: f64,
        s: &PointState,
        n: [f64; 2],
        q: usize,
        mass: &mut DgField,
        momentum: &mut DgField,
    ) {
        let phi = self.space.facet_tab(side.local, side.reversed).row(q);
        let sign = if is_minus { -1.0 } else { 1.0 };
        let e = side.element;
        let a = sign * w * fl.mass;
        for (r, p) in mass.comp_mut(e, 0).iter_mut().zip(phi) {
            *r += a * p;
        }
        for c in 0..momentum.n_comp {
            let coef = w * (sign * (fl.momentum[c] - 0.5 * fl.mass * s.u[c]) - 0.5 * self.g * jeta * s.h * n[c]);
            for (r, p) in momentum.comp_mut(e, c).iter_mut().zip(phi) {
                *r += coef * p;
            }
        }
    }

    fn volume_terms(&self, e: usize, h: &DgField, u: &DgField, rm: &mut [f64], rmom: &mut [f64]) {
        let sp = &self.space;
        let nb = sp.n_basis();
        let nv = sp.n_vec();
        let geo = &sp.mesh.elements[e].geometry;
        let tab = &sp.volume_tab;
        let (hc, bc) = (h.comp(e, 0), self.bottom.comp(e, 0));
        let mut gphi = vec![[0.0; 2]; nb];
        for q in 0..tab.n_points {
            let wq = sp.volume_rule.weights[q] * geo.det;
            let phi = tab.row(q);
            let gref = tab.grad_row(q);
            for (gp, gr) in gphi.iter_mut().zip(gref) {
                *gp = geo.physical_grad(*gr);
            }
            let hq = dot(phi, hc);
            let grad = |c: &[f64]| {
                let mut s = [0.0; 2];
                for (gp, a) in gphi.iter().zip(c) {
                    s[0] += gp[0] * a;
                    s[1] += gp[1] * a;
                }
                s
            };
            let (gh, gb) = (grad(hc), grad(bc));
            let geta = [gh[0] + gb[0], gh[1] + gb[1]];
            let mut uq = [0.0; 2];
            let mut gu = [[0.0; 2]; 2];
            for c in 0..nv {
                uq[c] = dot(phi, u.comp(e, c));
                gu[c] = grad(u.comp(e, c));
            }
            for i in 0..nb {
                let ug = uq[0] * gphi[i][0] + uq[1] * gphi[i][1];
                rm[i] -= wq * hq * ug;
                for c in 0..nv {
                    let adv = uq[0] * gu[c][0] + uq[1] * gu[c][1];
                    rmom[c * nb + i] +=
                        wq * (-0.5 * hq * uq[c] * ug + 0.5 * hq * adv * phi[i] + self.g * hq * geta[c] * phi[i]);
                }
            }
        }
    }

    /// One forward Euler stage; returns `(h_new, m_new, boundary mass flux)`.
    pub fn forward_euler(
        &self,
        h: &DgField,
        u: &DgField,
        m: &DgField,
        dt: f64,
    ) -> Result<(DgField, DgField, Residual), SolverError> {
        let r = self.residual(h, u)?;
        let sp = &self.space;
        let mut h_new = h.clone();
        for e in 0..sp.n_elements() {
            let s = dt / sp.jac(e);
            for (a, r) in h_new.comp_mut(e, 0).iter_mut().zip(r.mass.comp(e, 0)) {
                *a -= s * r;
            }
        }
        let mut m_new = m.clone();
        let tab = &sp.volume_tab;
        let mut dh = vec![0.0; tab.n_points];
        for e in 0..sp.n_elements() {
            let jac = sp.jac(e);
            for (q, d) in dh.iter_mut().enumerate() {
                let row = tab.row(q);
                *d = 0.5 * sp.volume_rule.weights[q] * (dot(row, h_new.comp(e, 0)) - dot(row, h.comp(e, 0)));
            }
            for c in 0..m.n_comp {
                let uc = u.comp(e, c);
                let mc = m_new.comp_mut(e, c);
                for (q, d) in dh.iter().enumerate() {
                    let row = tab.row(q);
                    let f = d * dot(row, uc);
                    for (a, p) in mc.iter_mut().zip(row) {
                        *a += f * p;
                    }
                }
                for (a, r) in mc.iter_mut().zip(r.momentum.comp(e, c)) {
                    *a -= dt * r / jac;
                }
            }
        }
        Ok((h_new, m_new, r))
    }

    /// Solve `(h u, w) = (m, w)` element by element. Elements with a
    /// non-positive mean height get zero velocity.
    pub fn velocity_update(&self, h: &DgField, m: &DgField) -> Result<DgField, SolverError> {
        let sp = &self.space;
        let nb = sp.n_basis();
        let nv = m.n_comp;
        if h.n_elems != sp.n_elements() || h.n_basis != nb || m.n_elems != h.n_elems || m.n_basis != nb {
            return Err(SolverError::Mismatch("velocity update inputs differ in shape".into()));
        }
        let mut u = sp.zeros(nv);
        let tab = &sp.volume_tab;
        let phi0 = sp.basis.phi0();
        u.coeffs.par_chunks_mut(nb * nv).enumerate().try_for_each(|(e, ue)| {
            let hc = h.comp(e, 0);
            if hc[0] * phi0 <= 0.0 {
                return Ok(());
            }
            let mut w = [0.0; MAX_BASIS * MAX_BASIS];
            for q in 0..tab.n_points {
                let row = tab.row(q);
                let hw = sp.volume_rule.weights[q] * dot(row, hc);
                for i in 0..nb {
                    let a = hw * row[i];
                    for j in 0..=i {
                        w[i * MAX_BASIS + j] += a * row[j];
                    }
                }
            }
            if !cholesky_in_place(&mut w, nb) {
                return Err(SolverError::NotSpd { element: e });
            }
            for c in 0..nv {
                let x = &mut ue[c * nb..(c + 1) * nb];
                x.copy_from_slice(m.comp(e, c));
                cholesky_solve(&w, nb, x);
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(SolverError::NonFinite { element: e });
                }
            }
            Ok(())
        })?;
        Ok(u)
    }

    /// Discharge `m = P(h u)` by L2 projection with the volume rule.
    pub fn discharge(&self, h: &DgField, u: &DgField) -> DgField {
        let sp = &self.space;
        let nv = u.n_comp;
        let mut m = sp.zeros(nv);
        let tab = &sp.volume_tab;
        for e in 0..sp.n_elements() {
            for q in 0..tab.n_points {
                let row = tab.row(q);
                let hq = sp.volume_rule.weights[q] * dot(row, h.comp(e, 0));
                for c in 0..nv {
                    let v = hq * dot(row, u.comp(e, c));
                    for (a, p) in m.comp_mut(e, c).iter_mut().zip(row) {
                        *a += v * p;
                    }
                }
            }
        }
        m
    }

    /// Discrete entropy `sum_K Q_K(h|u|^2/2 + g h^2/2 + g h b)`.
    pub fn total_entropy(&self, h: &DgField, u: &DgField) -> f64 {
        let sp = &self.space;
        let tab = &sp.volume_tab;
        let mut total = 0.0;
        for e in 0..sp.n_elements() {
            let jac = sp.jac(e);
            for q in 0..tab.n_points {
                let p = self.point(tab, q, e, h, u);
                total += jac * sp.volume_rule.weights[q] * physics::entropy_density(&p, self.g);
            }
        }
        total
    }

    pub fn total_mass(&self, h: &DgField) -> f64 {
        self.space.integral(h, 0)
    }

    pub fn total_momentum(&self, m: &DgField) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (c, o) in out.iter_mut().enumerate().take(m.n_comp) {
            *o = self.space.integral(m, c);
        }
        out
    }

    /// `-sum_F int_F alpha/2 (g [[h+b]]^2 + {{h+b}} |[[u]]|^2)`.
    pub fn entropy_dissipation_rhs(&self, h: &DgField, u: &DgField) -> f64 {
        let sp = &self.space;
        let mut total = 0.0;
        for (f, facet) in sp.mesh.facets.iter().enumerate() {
            for q in 0..sp.facet_rule.len() {
                let tr = self.facet_trace(f, q, h, u);
                total -= sp.facet_rule.weights[q] * facet.measure * physics::entropy_dissipation(self.g, &tr);
            }
        }
        total
    }

    /// `dE_h/dt` through the semi-discrete derivatives `h_t` and `m_t` of
    /// the three-field scheme, assuming `m = P(h u)`.
    pub fn entropy_rate(&self, h: &DgField, u: &DgField) -> Result<f64, SolverError> {
        let r = self.residual(h, u)?;
        let sp = &self.space;
        let tab = &sp.volume_tab;
        let mut rate = 0.0;
        let mut ht = vec![0.0; sp.n_basis()];
        let mut mt = vec![0.0; sp.n_basis()];
        for e in 0..sp.n_elements() {
            let jac = sp.jac(e);
            for (a, r) in ht.iter_mut().zip(r.mass.comp(e, 0)) {
                *a = -r / jac;
            }
            for q in 0..tab.n_points {
                let p = self.point(tab, q, e, h, u);
                let v = physics::entropy_variable(&p, self.g);
                rate += jac * sp.volume_rule.weights[q] * v[0] * dot(tab.row(q), &ht);
            }
            for c in 0..u.n_comp {
                let uc = u.comp(e, c);
                for (a, r) in mt.iter_mut().zip(r.momentum.comp(e, c)) {
                    *a = -r / jac;
                }
                for q in 0..tab.n_points {
                    let row = tab.row(q);
                    let f = 0.5 * sp.volume_rule.weights[q] * dot(row, &ht) * dot(row, uc);
                    for (a, p) in mt.iter_mut().zip(row) {
                        *a += f * p;
                    }
                }
                rate += jac * dot(&mt, uc);
            }
        }
        Ok(rate)
    }

    /// Largest facet wave speed touching each element.
    pub fn element_speeds(&self, h: &DgField, u: &DgField) -> Vec<f64> {
        let sp = &self.space;
        let mut speed = vec![0.0f64; sp.n_elements()];
        for (f, facet) in sp.mesh.facets.iter().enumerate() {
            let mut a = 0.0f64;
            for q in 0..sp.facet_rule.len() {
                let tr = self.facet_trace(f, q, h, u);
                a = a.max(physics::max_wave_speed(self.g, &tr, self.reconstruct));
            }
            speed[facet.plus.element] = speed[facet.plus.element].max(a);
            if let Some(m) = facet.minus() {
                speed[m.element] = speed[m.element].max(a);
            }
        }
        speed
    }

    /// Lake at rest check helper: `h + b` at every volume point of every element.
    pub fn surface_values(&self, h: &DgField) -> Vec<f64> {
        let sp = &self.space;
        let tab = &sp.volume_tab;
        let mut out = Vec::with_capacity(sp.n_elements() * tab.n_points);
        for e in 0..sp.n_elements() {
            for q in 0..tab.n_points {
                out.push(tab.eval(q, h.comp(e, 0)) + tab.eval(q, self.bottom.comp(e, 0)));
            }
        }
        out
    }
}

/// Largest number of modes (degree 4 on triangles).
const MAX_BASIS: usize = 15;

/// Lower Cholesky factor of the row-major lower triangle of `a`, stored in place.
fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * MAX_BASIS + j];
        for k in 0..j {
            d -= a[j * MAX_BASIS + k] * a[j * MAX_BASIS + k];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        a[j * MAX_BASIS + j] = d;
        for i in j + 1..n {
            let mut s = a[i * MAX_BASIS + j];
            for k in 0..j {
                s -= a[i * MAX_BASIS + k] * a[j * MAX_BASIS + k];
            }
            a[i * MAX_BASIS + j] = s / d;
        }
    }
    true
}

fn cholesky_solve(l: &[f64], n: usize, x: &mut [f64]) {
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[i * MAX_BASIS + k] * x[k];
        }
        x[i] = s / l[i * MAX_BASIS + i];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[k * MAX_BASIS + i] * x[k];
        }
        x[i] = s / l[i * MAX_BASIS + i];
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::{make_case, InitialData, Resolution};
    use crate::mesh::{build_interval_mesh, build_structured_triangular, BoundaryTag, SideTags};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn random_field(sp: &DgSpace, n_comp: usize, mean: f64, amp: f64, rng: &mut ChaCha8Rng) -> DgField {
        let mut f = sp.zeros(n_comp);
        for e in 0..f.n_elems {
            for c in 0..n_comp {
                let co = f.comp_mut(e, c);
                co[0] = (mean + amp * rng.gen_range(-1.0..1.0)) / sp.basis.phi0();
                for a in &mut co[1..] {
                    *a = 0.1 * amp * rng.gen_range(-1.0..1.0);
                }
            }
        }
        f
    }

    fn max_abs(f: &DgField) -> f64 {
        f.coeffs.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    #[test]
    fn lake_at_rest_has_zero_residual() {
        for name in ["ex4_2s", "ex4_2d", "ex4_3_big", "ex4_8"] {
            let mut c = make_case(name).unwrap();
            c.resolution = if c.dim == 1 {
                Resolution::Cells(16)
            } else {
                Resolution::Grid(8, 4)
            };
            c.initial = InitialData::Surface {
                eta: Arc::new(|_| 10.0),
                u: [Arc::new(|_| 0.0), Arc::new(|_| 0.0)],
            };
            let (sc, st) = c.setup().unwrap();
            let r = sc.residual(&st.h, &st.u).unwrap();
            assert!(max_abs(&r.mass) < 1e-12, "{name}");
            assert!(max_abs(&r.momentum) < 1e-11, "{name}: {}", max_abs(&r.momentum));
            let (h1, m1, _) = sc.forward_euler(&st.h, &st.u, &st.m, 1e-3).unwrap();
            assert!(h1.max_abs_diff(&st.h) < 1e-13 && max_abs(&m1) < 1e-13);
        }
    }

    #[test]
    fn uniform_flow_is_steady() {
        let mesh = build_structured_triangular(4, 3, [0.0, 1.0, 0.0, 1.0], SideTags::periodic()).unwrap();
        let sp = DgSpace::new(mesh, 2).unwrap();
        let h = sp.project(&[&|_| 2.0]);
        let u = sp.project(&[&|_| 0.3, &|_| -0.1]);
        let sc = Scheme::new(sp, 9.812, DgField::zeros(24, 6, 1), false);
        let r = sc.residual(&h, &u).unwrap();
        assert!(max_abs(&r.mass) < 1e-13 && max_abs(&r.momentum) < 1e-12);
    }

    #[test]
    fn first_order_stencil() {
        let g = 9.812;
        let sp = DgSpace::new(build_interval_mesh(0.0, 3.0, 3, true).unwrap(), 0).unwrap();
        let hs = [1.0, 2.5, 0.7];
        let us = [0.4, -0.3, 1.1];
        let mut h = sp.zeros(1);
        let mut u = sp.zeros(1);
        for e in 0..3 {
            h.comp_mut(e, 0)[0] = hs[e];
            u.comp_mut(e, 0)[0] = us[e];
        }
        let sc = Scheme::new(sp, g, DgField::zeros(3, 1, 1), false);
        let r = sc.residual(&h, &u).unwrap();
        // F_{j+1/2} = avg(hu) + alpha/2 (h_j - h_{j+1})
        let flux = |l: usize, rr: usize| {
            let a = ((g * hs[l]).sqrt() + us[l].abs()).max((g * hs[rr]).sqrt() + us[rr].abs());
            0.5 * (hs[l] * us[l] + hs[rr] * us[rr]) + 0.5 * a * (hs[l] - hs[rr])
        };
        for j in 0..3 {
            let expect = flux(j, (j + 1) % 3) - flux((j + 2) % 3, j);
            assert!((r.mass.comp(j, 0)[0] - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn mass_residual_is_local_flux_balance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mesh =
            build_structured_triangular(3, 3, [0.0, 1.0, 0.0, 1.0], SideTags::all(BoundaryTag::Outflow)).unwrap();
        let sp = DgSpace::new(mesh, 2).unwrap();
        let h = random_field(&sp, 1, 2.0, 0.5, &mut rng);
        let u = random_field(&sp, 2, 0.0, 0.5, &mut rng);
        let b = random_field(&sp, 1, 0.0, 0.3, &mut rng);
        let sc = Scheme::new(sp, 9.812, b, false);
        let r = sc.residual(&h, &u).unwrap();
        let sp = &sc.space;
        let mut balance = vec![0.0; sp.n_elements()];
        let mut boundary = 0.0;
        for (f, facet) in sp.mesh.facets.iter().enumerate() {
            for q in 0..sp.facet_rule.len() {
                let tr = sc.facet_trace(f, q, &h, &u);
                let fl = physics::numerical_flux(sc.g, &tr, false).mass * sp.facet_rule.weights[q] * facet.measure;
                balance[facet.plus.element] += fl;
                match facet.minus() {
                    Some(m) => balance[m.element] -= fl,
                    None => boundary += fl,
                }
            }
        }
        for (e, bal) in balance.iter().enumerate() {
            let tested = r.mass.comp(e, 0)[0] / sp.basis.phi0();
            assert!((tested - bal).abs() < 1e-12, "{e}: {tested} vs {bal}");
        }
        assert!((r.boundary_mass_flux - boundary).abs() < 1e-13);
        assert_eq!(r.clamped, 0);
    }

    #[test]
    fn velocity_update_inverts_discharge() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (dim, k) in [(1, 0), (1, 3), (2, 1), (2, 2), (2, 4)] {
            let mesh = if dim == 1 {
                build_interval_mesh(0.0, 1.0, 5, true).unwrap()
            } else {
                build_structured_triangular(2, 2, [0.0, 1.0, 0.0, 1.0], SideTags::periodic()).unwrap()
            };
            let sp = DgSpace::new(mesh, k).unwrap();
            let h = random_field(&sp, 1, 2.0, 0.5, &mut rng);
            let u = random_field(&sp, dim, 0.0, 1.0, &mut rng);
            let b = sp.zeros(1);
            let sc = Scheme::new(sp, 9.812, b, false);
            let m = sc.discharge(&h, &u);
            let back = sc.velocity_update(&h, &m).unwrap();
            assert!(back.max_abs_diff(&u) < 1e-12, "dim {dim} k {k}");
        }
    }

    #[test]
    fn velocity_update_dry_and_indefinite_cells() {
        let sp = DgSpace::new(build_interval_mesh(0.0, 2.0, 2, false).unwrap(), 2).unwrap();
        let mut h = sp.zeros(1);
        let mut m = sp.zeros(1);
        h.comp_mut(0, 0)[0] = -1e-14;
        m.comp_mut(0, 0)[0] = 0.5;
        h.comp_mut(1, 0).copy_from_slice(&[1.0, 0.0, 2.0]);
        m.comp_mut(1, 0)[0] = 0.3;
        let sc = Scheme::new(sp, 9.812, DgField::zeros(2, 3, 1), false);
        assert_eq!(sc.velocity_update(&h, &m), Err(SolverError::NotSpd { element: 1 }));
        h.comp_mut(1, 0).copy_from_slice(&[1.0, 0.0, 0.0]);
        let u = sc.velocity_update(&h, &m).unwrap();
        assert!(u.comp(0, 0).iter().all(|&v| v == 0.0));
        assert!((u.comp(1, 0)[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn entropy_rate_matches_finite_difference_and_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut c = make_case("ex4_1").unwrap();
        c.resolution = Resolution::Cells(12);
        let (sc, _) = c.setup().unwrap();
        let sp = &sc.space;
        let h = random_field(sp, 1, 6.0, 0.3, &mut rng);
        let u = random_field(sp, 1, 0.0, 0.5, &mut rng);
        let m = sc.discharge(&h, &u);
        let rate = sc.entropy_rate(&h, &u).unwrap();
        let rhs = sc.entropy_dissipation_rhs(&h, &u);
        assert!((rate - rhs).abs() < 1e-10 * sc.total_entropy(&h, &u));
        let e0 = sc.total_entropy(&h, &u);
        let dt = 1e-7;
        let (h1, m1, _) = sc.forward_euler(&h, &u, &m, dt).unwrap();
        let u1 = sc.velocity_update(&h1, &m1).unwrap();
        let fd = (sc.total_entropy(&h1, &u1) - e0) / dt;
        assert!((fd - rate).abs() < 1e-4 * rate.abs(), "{fd} vs {rate}");
    }

    #[test]
    fn zero_step_is_identity() {
        let mut c = make_case("ex4_1").unwrap();
        c.resolution = Resolution::Cells(8);
        let (sc, st) = c.setup().unwrap();
        let (h, m, _) = sc.forward_euler(&st.h, &st.u, &st.m, 0.0).unwrap();
        assert_eq!(h, st.h);
        assert_eq!(m, st.m);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let sp = DgSpace::new(build_interval_mesh(0.0, 1.0, 4, true).unwrap(), 1).unwrap();
        let sc = Scheme::new(sp, 9.812, DgField::zeros(4, 2, 1), false);
        let h = DgField::zeros(4, 2, 1);
        let u = DgField::zeros(3, 2, 1);
        assert!(matches!(sc.residual(&h, &u), Err(SolverError::Mismatch(_))));
    }
}
