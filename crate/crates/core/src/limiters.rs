//! Troubled-cell indicator, characteristic TVB limiter, positivity scaling,
//! dry-cell flattening and the velocity limiter.

use log::warn;
use rayon::prelude::*;

use crate::cases::ghost_trace;
use crate::error::SolverError;
use crate::mesh::{FacetKind, Mesh};
use crate::physics::{characteristic_basis, CharacteristicBasis, PointState};
use crate::space::{DgField, DgSpace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimiterConfig {
    /// Indicator threshold; `None` disables the TVB limiter.
    pub tol: Option<f64>,
    pub tvb_m: f64,
    /// Dry-cell fraction; `None` disables the dry-cell limiter.
    pub eps_d: Option<f64>,
    /// Velocity cap; `None` disables the velocity limiter.
    pub v_max: Option<f64>,
    /// Largest initial water height, set by the driver.
    pub h_max0: f64,
    /// Midpoint limiter factor on triangles.
    pub nu: f64,
}

impl Default for LimiterConfig {
    fn default() -> Self {
        Self {
            tol: Some(0.02),
            tvb_m: 0.0,
            eps_d: None,
            v_max: None,
            h_max0: 0.0,
            nu: 1.5,
        }
    }
}

impl LimiterConfig {
    pub fn validate(&self) -> Result<(), String> {
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(format!("tol must be positive, got {t}"));
            }
        }
        if let Some(e) = self.eps_d {
            if !(0.0..1.0).contains(&e) {
                return Err(format!("eps_d must lie in [0, 1), got {e}"));
            }
        }
        if let Some(v) = self.v_max {
            if !(v > 0.0) {
                return Err(format!("v_max must be positive, got {v}"));
            }
        }
        if self.tvb_m < 0.0 {
            return Err("tvb_m must be non-negative".into());
        }
        Ok(())
    }
}

#[inline]
pub fn minmod(a: f64, b: f64, c: f64) -> f64 {
    if a > 0.0 && b > 0.0 && c > 0.0 {
        a.min(b).min(c)
    } else if a < 0.0 && b < 0.0 && c < 0.0 {
        a.max(b).max(c)
    } else {
        0.0
    }
}

/// Fu-Shu indicator of the linear field `p` with the global average range as
/// denominator. Neighbour polynomials are extended to the target centroid.
pub fn fu_shu_indicator(space: &DgSpace, p: &DgField) -> Vec<f64> {
    let mesh = &space.mesh;
    let n = space.n_elements();
    let (avg, grad) = linear_data(space, p, 0);
    let pmax = avg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pmin = avg.iter().cloned().fold(f64::INFINITY, f64::min);
    let den = pmax - pmin;
    if !(den >= 1e-12 * pmax.abs().max(1.0)) {
        return vec![0.0; n];
    }
    (0..n)
        .map(|k| {
            let ck = mesh.elements[k].centroid;
            let mut s = 0.0;
            for nb in mesh.neighbors(k) {
                let t = nb.element;
                let ct = mesh.elements[t].centroid;
                // Target centroid in the neighbour's frame.
                let d = [ck[0] - nb.shift[0] - ct[0], ck[1] - nb.shift[1] - ct[1]];
                let ext = avg[t] + grad[t][0] * d[0] + grad[t][1] * d[1];
                s += (ext - avg[k]).abs();
            }
            s / den
        })
        .collect()
}

/// Cell averages and (constant) physical gradients of the linear part of one component.
fn linear_data(space: &DgSpace, f: &DgField, c: usize) -> (Vec<f64>, Vec<[f64; 2]>) {
    let nl = space.basis.linear_len();
    let tab = &space.volume_tab;
    let mut avg = Vec::with_capacity(f.n_elems);
    let mut grad = Vec::with_capacity(f.n_elems);
    for e in 0..f.n_elems {
        let coeffs = f.comp(e, c);
        avg.push(coeffs[0] * space.basis.phi0());
        let geo = &space.mesh.elements[e].geometry;
        let mut g = [0.0; 2];
        for (gr, a) in tab.grad_row(0)[..nl].iter().zip(coeffs) {
            let pg = geo.physical_grad(*gr);
            g[0] += pg[0] * a;
            g[1] += pg[1] * a;
        }
        grad.push(g);
    }
    (avg, grad)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TvbReport {
    pub troubled: Vec<usize>,
    pub modified: usize,
    pub fallback: usize,
}

/// Indicator plus characteristic-wise TVB limiting of `(eta, m)` with
/// `eta = h + b`; `h` is rebuilt as `eta - b` on modified cells.
pub fn tvb_limit(
    space: &DgSpace,
    bottom: &DgField,
    g: f64,
    cfg: &LimiterConfig,
    h: &mut DgField,
    m: &mut DgField,
) -> TvbReport {
    let Some(tol) = cfg.tol else {
        return TvbReport::default();
    };
    if space.degree == 0 {
        return TvbReport::default();
    }
    let eta = DgField::combine(1.0, h, 1.0, bottom).expect("h and b share a space");
    let ind = fu_shu_indicator(space, &space.linear_part(&eta));
    let troubled: Vec<usize> = (0..ind.len()).filter(|&k| ind[k] > tol).collect();
    let mut report = TvbReport {
        troubled: troubled.clone(),
        ..Default::default()
    };
    if troubled.is_empty() {
        return report;
    }
    let updates: Vec<(usize, Vec<Vec<f64>>, bool)> = {
        let ctx = TvbContext::new(space, bottom, g, cfg, &eta, m);
        troubled
            .par_iter()
            .filter_map(|&k| {
                let out = if space.dim == 1 {
                    ctx.limit_1d(k)
                } else {
                    ctx.limit_2d(k)
                };
                out.map(|(lin, fb)| (k, lin, fb))
            })
            .collect()
    };
    let nb = space.n_basis();
    for (k, lin, fallback) in updates {
        report.modified += 1;
        report.fallback += fallback as usize;
        for (v, l) in lin.iter().enumerate() {
            let mut coeffs = vec![0.0; nb];
            coeffs[..l.len()].copy_from_slice(l);
            if v == 0 {
                let b = bottom.comp(k, 0);
                for ((hc, ec), bc) in h.comp_mut(k, 0).iter_mut().zip(&coeffs).zip(b) {
                    *hc = ec - bc;
                }
            } else {
                m.comp_mut(k, v - 1).copy_from_slice(&coeffs);
            }
        }
    }
    report
}

struct TvbContext<'a> {
    space: &'a DgSpace,
    g: f64,
    cfg: &'a LimiterConfig,
    eta: &'a DgField,
    m: &'a DgField,
    /// Cell-average state `(eta, m_x, m_y)` and bottom average.
    avg: Vec<[f64; 3]>,
    bavg: Vec<f64>,
}

impl<'a> TvbContext<'a> {
    fn new(
        space: &'a DgSpace,
        bottom: &DgField,
        g: f64,
        cfg: &'a LimiterConfig,
        eta: &'a DgField,
        m: &'a DgField,
    ) -> Self {
        let n = space.n_elements();
        let mut avg = vec![[0.0; 3]; n];
        let mut bavg = vec![0.0; n];
        for e in 0..n {
            avg[e][0] = space.average(eta, e, 0);
            for c in 0..m.n_comp {
                avg[e][1 + c] = space.average(m, e, c);
            }
            bavg[e] = space.average(bottom, e, 0);
        }
        Self {
            space,
            g,
            cfg,
            eta,
            m,
            avg,
            bavg,
        }
    }

    /// Average state of the cell across local facet `lf` of `k`, with the
    /// neighbour centroid expressed in `k`'s frame.
    fn across(&self, k: usize, lf: usize) -> ([f64; 3], f64, [f64; 2]) {
        let mesh = &self.space.mesh;
        let fid = mesh.elements[k].facets[lf];
        let facet = &mesh.facets[fid];
        match facet.kind {
            FacetKind::Interior { minus, shift, .. } => {
                let (other, sh) = if facet.plus.element == k && facet.plus.local == lf {
                    (minus.element, shift)
                } else {
                    (facet.plus.element, [-shift[0], -shift[1]])
                };
                let c = mesh.elements[other].centroid;
                (self.avg[other], self.bavg[other], [c[0] + sh[0], c[1] + sh[1]])
            }
            FacetKind::Boundary(tag) => {
                let n = mesh.outward_normal(k, lf);
                let a = self.avg[k];
                let hbar = a[0] - self.bavg[k];
                let inner = PointState::new(hbar, [a[1], a[2]], self.bavg[k]);
                // Ghost works on velocities; reflect the discharge the same way.
                let gh = ghost_trace(inner, n, tag);
                let ck = mesh.elements[k].centroid;
                let ghost_c = reflect_point(mesh, fid, ck);
                ([gh.h + gh.b, gh.u[0], gh.u[1]], gh.b, ghost_c)
            }
        }
    }

    fn char_basis(&self, a: [f64; 3], b: f64, n: [f64; 2]) -> Option<CharacteristicBasis> {
        let h = a[0] - b;
        if !(h > 1e-12 * self.cfg.h_max0.max(1.0)) {
            return None;
        }
        characteristic_basis(h, [a[1] / h, a[2] / h], self.g, n).ok()
    }

    fn tvb_minmod(&self, a: f64, b: f64, c: f64, size: f64) -> f64 {
        if a.abs() <= self.cfg.tvb_m * size * size {
            a
        } else {
            minmod(a, b, c)
        }
    }

    fn nvars(&self) -> usize {
        1 + self.m.n_comp
    }

    fn coeffs(&self, k: usize, v: usize) -> &[f64] {
        if v == 0 {
            self.eta.comp(k, 0)
        } else {
            self.m.comp(k, v - 1)
        }
    }

    /// Returns new linear coefficients per variable when limiting changes the cell.
    /// Each facet limits the slope in the characteristic basis at the mean of
    /// the two cells sharing it; the cell takes the average of both results.
    fn limit_1d(&self, k: usize) -> Option<(Vec<Vec<f64>>, bool)> {
        let s3 = 3f64.sqrt();
        let nv = self.nvars();
        let (al, bl, _) = self.across(k, 0);
        let (ar, br, _) = self.across(k, 1);
        let a0 = self.avg[k];
        let b0 = self.bavg[k];
        let mut slope = [0.0; 3];
        for v in 0..nv {
            slope[v] = s3 * self.coeffs(k, v)[1];
        }
        let fwd = [ar[0] - a0[0], ar[1] - a0[1], 0.0];
        let bwd = [a0[0] - al[0], a0[1] - al[1], 0.0];
        let size = self.space.mesh.elements[k].size;
        let mut new_slope = [0.0; 3];
        let mut changed = false;
        let mut fallback = false;
        for (a, b) in [(al, bl), (ar, br)] {
            let mean = [0.5 * (a0[0] + a[0]), 0.5 * (a0[1] + a[1]), 0.0];
            let basis = self.char_basis(mean, 0.5 * (b0 + b), [1.0, 0.0]);
            fallback |= basis.is_none();
            let (w, wf, wb) = match &basis {
                Some(cb) => (
                    cb.to_characteristic(slope),
                    cb.to_characteristic(fwd),
                    cb.to_characteristic(bwd),
                ),
                None => (slope, fwd, bwd),
            };
            let mut lim = w;
            for i in 0..3 {
                lim[i] = self.tvb_minmod(w[i], wf[i], wb[i], size);
                changed |= lim[i] != w[i];
            }
            let back = match &basis {
                Some(cb) => cb.from_characteristic(lim),
                None => lim,
            };
            for v in 0..3 {
                new_slope[v] += 0.5 * back[v];
            }
        }
        if !changed {
            return None;
        }
        let out = (0..nv).map(|v| vec![self.coeffs(k, v)[0], new_slope[v] / s3]).collect();
        Some((out, fallback))
    }

    fn limit_2d(&self, k: usize) -> Option<(Vec<Vec<f64>>, bool)> {
        let sp = self.space;
        let mesh = &sp.mesh;
        let nv = self.nvars();
        let el = &mesh.elements[k];
        let b0 = el.centroid;
        let a0 = self.avg[k];
        let nbrs: Vec<([f64; 3], f64, [f64; 2])> = (0..3).map(|lf| self.across(k, lf)).collect();
        let verts: Vec<[f64; 2]> = (0..3)
            .map(|i| el.geometry.map(crate::basis::reference_vertices(2)[i]))
            .collect();
        let midpoint_ref = [[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]];
        let mut fallback = false;
        let mut changed = false;
        // Limited midpoint deviations per variable and edge.
        let mut dev = [[0.0f64; 3]; 3];
        for i in 0..3 {
            let mi = [
                0.5 * (verts[i][0] + verts[(i + 1) % 3][0]),
                0.5 * (verts[i][1] + verts[(i + 1) % 3][1]),
            ];
            let phi = sp.basis.values_at(midpoint_ref[i]);
            let mut d = [0.0; 3];
            for v in 0..nv {
                let c = self.coeffs(k, v);
                d[v] = (0..3).map(|j| c[j] * phi[j]).sum::<f64>() - a0[v];
            }
            let (alpha, pair) = decompose(b0, [nbrs[0].2, nbrs[1].2, nbrs[2].2], mi, i);
            let mut db = [0.0; 3];
            for v in 0..nv {
                db[v] = alpha[0] * (nbrs[pair[0]].0[v] - a0[v]) + alpha[1] * (nbrs[pair[1]].0[v] - a0[v]);
            }
            let n = mesh.outward_normal(k, i);
            let mean = [
                0.5 * (a0[0] + nbrs[i].0[0]),
                0.5 * (a0[1] + nbrs[i].0[1]),
                0.5 * (a0[2] + nbrs[i].0[2]),
            ];
            let basis = self.char_basis(mean, 0.5 * (self.bavg[k] + nbrs[i].1), n);
            fallback |= basis.is_none();
            let (w, wb) = match &basis {
                Some(cb) => (cb.to_characteristic(d), cb.to_characteristic(db)),
                None => (d, db),
            };
            let mut lim = [0.0; 3];
            for j in 0..3 {
                let nu_b = self.cfg.nu * wb[j];
                lim[j] = self.tvb_minmod(w[j], nu_b, nu_b, el.size);
                changed |= lim[j] != w[j];
            }
            let back = match &basis {
                Some(cb) => cb.from_characteristic(lim),
                None => lim,
            };
            for v in 0..nv {
                dev[v][i] = back[v];
            }
        }
        if !changed {
            return None;
        }
        let mut out = Vec::with_capacity(nv);
        for v in 0..nv {
            let d = renormalise(dev[v]);
            out.push(project_midpoint_linear(sp, a0[v], d));
        }
        Some((out, fallback))
    }
}

/// Write `m - b0` as a non-negative combination of two neighbour centroid
/// offsets, preferring pairs that include the neighbour across edge `i`.
fn decompose(b0: [f64; 2], nb: [[f64; 2]; 3], m: [f64; 2], i: usize) -> ([f64; 2], [usize; 2]) {
    let r = [m[0] - b0[0], m[1] - b0[1]];
    let pairs = [[i, (i + 1) % 3], [i, (i + 2) % 3], [(i + 1) % 3, (i + 2) % 3]];
    for p in pairs {
        let a = [nb[p[0]][0] - b0[0], nb[p[0]][1] - b0[1]];
        let b = [nb[p[1]][0] - b0[0], nb[p[1]][1] - b0[1]];
        let det = a[0] * b[1] - a[1] * b[0];
        if det.abs() < 1e-14 * (a[0].hypot(a[1]) * b[0].hypot(b[1])) {
            continue;
        }
        let x = (r[0] * b[1] - r[1] * b[0]) / det;
        let y = (a[0] * r[1] - a[1] * r[0]) / det;
        if x >= -1e-12 && y >= -1e-12 {
            return ([x.max(0.0), y.max(0.0)], p);
        }
    }
    let a = [nb[i][0] - b0[0], nb[i][1] - b0[1]];
    let s = r[0].hypot(r[1]) / a[0].hypot(a[1]);
    ([s, 0.0], [i, i])
}

fn renormalise(d: [f64; 3]) -> [f64; 3] {
    let sum: f64 = d.iter().sum();
    let scale = d.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if sum.abs() <= 1e-14 * scale {
        return d;
    }
    let pos: f64 = d.iter().map(|x| x.max(0.0)).sum();
    let neg: f64 = d.iter().map(|x| (-x).max(0.0)).sum();
    if pos == 0.0 || neg == 0.0 {
        return [0.0; 3];
    }
    let tp = (neg / pos).min(1.0);
    let tn = (pos / neg).min(1.0);
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = tp * d[i].max(0.0) - tn * (-d[i]).max(0.0);
    }
    out
}

/// Modal coefficients of `avg + sum_i d_i (1 - 2 lambda_opp(i))`, the linear
/// function with midpoint deviations `d`.
fn project_midpoint_linear(sp: &DgSpace, avg: f64, d: [f64; 3]) -> Vec<f64> {
    let tab = &sp.volume_tab;
    let mut c = vec![0.0; sp.basis.linear_len()];
    for (q, (p, w)) in sp.volume_rule.points.iter().zip(&sp.volume_rule.weights).enumerate() {
        let lam = [1.0 - p[0] - p[1], p[0], p[1]];
        let mut v = avg;
        for i in 0..3 {
            v += d[i] * (1.0 - 2.0 * lam[(i + 2) % 3]);
        }
        for (ci, phi) in c.iter_mut().zip(tab.row(q)) {
            *ci += w * v * phi;
        }
    }
    c
}

fn reflect_point(mesh: &Mesh, facet: usize, x: [f64; 2]) -> [f64; 2] {
    let f = &mesh.facets[facet];
    let p = mesh.vertices[f.vertices[0]];
    if mesh.dim == 1 {
        return [2.0 * p[0] - x[0], 0.0];
    }
    let n = f.normal;
    let d = (x[0] - p[0]) * n[0] + (x[1] - p[1]) * n[1];
    [x[0] - 2.0 * d * n[0], x[1] - 2.0 * d * n[1]]
}

/// Scale `h` about its cell average so it is non-negative on the positivity
/// point set. Returns `theta` per cell.
pub fn positivity_limit(space: &DgSpace, h: &mut DgField, eps_avg: f64) -> Result<Vec<f64>, SolverError> {
    let tab = &space.positivity_tab;
    let phi0 = space.basis.phi0();
    let mut thetas = Vec::with_capacity(h.n_elems);
    for e in 0..h.n_elems {
        let c = h.comp_mut(e, 0);
        let hbar = c[0] * phi0;
        if !hbar.is_finite() {
            return Err(SolverError::NonFinite { element: e });
        }
        if hbar < -eps_avg {
            return Err(SolverError::NegativeAverage {
                element: e,
                value: hbar,
            });
        }
        let theta = if hbar <= 0.0 {
            0.0
        } else {
            let mut t = 1.0f64;
            for q in 0..tab.n_points {
                let v = tab.eval(q, c);
                if v < 0.0 && hbar - v > 0.0 {
                    t = t.min(hbar / (hbar - v));
                }
            }
            t
        };
        if theta < 1.0 {
            for a in &mut c[1..] {
                *a *= theta;
            }
        }
        thetas.push(theta);
    }
    Ok(thetas)
}

/// Flatten cells whose mean height is at most `eps_d * h_max0`. Returns the dry cells.
pub fn dry_cell_limit(space: &DgSpace, cfg: &LimiterConfig, h: &mut DgField, m: &mut DgField) -> Vec<usize> {
    let Some(eps_d) = cfg.eps_d else {
        return Vec::new();
    };
    let threshold = eps_d * cfg.h_max0;
    let mut dry = Vec::new();
    for e in 0..h.n_elems {
        if space.average(h, e, 0) <= threshold {
            dry.push(e);
            for a in &mut h.comp_mut(e, 0)[1..] {
                *a = 0.0;
            }
            for c in 0..m.n_comp {
                for a in &mut m.comp_mut(e, c)[1..] {
                    *a = 0.0;
                }
            }
        }
    }
    dry
}

/// Replace velocity data on cells exceeding `v_max` by the mean of calm
/// neighbour averages, component by component. Returns the number of cells
/// modified in any component.
pub fn velocity_limit(space: &DgSpace, cfg: &LimiterConfig, u: &mut DgField) -> usize {
    let Some(vmax) = cfg.v_max else {
        return 0;
    };
    let mesh = &space.mesh;
    let n = u.n_elems;
    let phi0 = space.basis.phi0();
    let tab = &space.sample_tab;
    let mut touched = vec![false; n];
    for c in 0..u.n_comp {
        let mut troubled: Vec<bool> = (0..n)
            .map(|e| (0..tab.n_points).any(|q| tab.eval(q, u.comp(e, c)).abs() > vmax))
            .collect();
        let mut remaining: Vec<usize> = (0..n).filter(|&e| troubled[e]).collect();
        while !remaining.is_empty() {
            let mut updates = Vec::new();
            for &k in &remaining {
                let (mut s, mut cnt) = (0.0, 0usize);
                for nb in mesh.neighbors(k) {
                    if !troubled[nb.element] {
                        s += u.comp(nb.element, c)[0] * phi0;
                        cnt += 1;
                    }
                }
                if cnt > 0 {
                    updates.push((k, s / cnt as f64));
                }
            }
            if updates.is_empty() {
                warn!(
                    "velocity limiter: {} cells have no calm neighbour; clamping to +-{vmax}",
                    remaining.len()
                );
                for &k in &remaining {
                    let avg = (u.comp(k, c)[0] * phi0).clamp(-vmax, vmax);
                    set_constant(u, k, c, avg, phi0);
                    touched[k] = true;
                }
                break;
            }
            for &(k, v) in &updates {
                set_constant(u, k, c, v, phi0);
                troubled[k] = false;
                touched[k] = true;
            }
            remaining.retain(|&k| troubled[k]);
        }
    }
    touched.iter().filter(|&&t| t).count()
}

fn set_constant(f: &mut DgField, e: usize, c: usize, value: f64, phi0: f64) {
    let coeffs = f.comp_mut(e, c);
    coeffs[0] = value / phi0;
    for a in &mut coeffs[1..] {
        *a = 0.0;
    }
}
