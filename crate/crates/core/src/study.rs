//! Case runs and reference-solution convergence studies.

use std::fmt::Write as _;

use crate::cases::{CaseSpec, Resolution};
use crate::error::{CaseError, Result};
use crate::integrator::{Integrator, StepControl, StepInfo, StepRecord};
use crate::limiters::LimiterConfig;
use crate::mesh::Mesh;
use crate::operators::{Scheme, State};
use crate::quadrature::QuadratureRule;
use crate::space::{DgField, DgSpace};

pub struct Simulation {
    pub spec: CaseSpec,
    pub scheme: Scheme,
    pub state: State,
    pub t: f64,
    pub steps: usize,
    pub limiter: LimiterConfig,
    pub control: StepControl,
    pub history: Vec<StepRecord>,
}

impl Simulation {
    pub fn new(spec: CaseSpec) -> Result<Self> {
        let (scheme, state) = spec.setup()?;
        Ok(Self::from_parts(spec, scheme, state))
    }

    pub fn from_parts(spec: CaseSpec, scheme: Scheme, state: State) -> Self {
        let limiter = spec.limiter_for(&scheme, &state);
        let control = StepControl::new(spec.cfl);
        let mut sim = Self {
            spec,
            scheme,
            state,
            t: 0.0,
            steps: 0,
            limiter,
            control,
            history: Vec::new(),
        };
        let rec = sim.integrator().record(0, 0.0, 0, &sim.state, StepInfo::default());
        sim.history.push(rec);
        sim
    }

    pub fn integrator(&self) -> Integrator<'_> {
        Integrator::new(&self.scheme, self.spec.algorithm, self.limiter, self.control)
    }

    /// Advance to `t_end`; `observer` sees each accepted step.
    pub fn run_to(&mut self, t_end: f64, observer: &mut dyn FnMut(&StepRecord, &State)) -> Result<usize> {
        let integ = Integrator::new(&self.scheme, self.spec.algorithm, self.limiter, self.control);
        let history = &mut self.history;
        let n = integ.advance(&mut self.state, &mut self.t, t_end, self.steps, &mut |r, s| {
            history.push(r.clone());
            observer(r, s);
        })?;
        self.steps += n;
        Ok(n)
    }

    /// Output times within `(t, t_final]`, always ending with `t_final`.
    pub fn stops(&self) -> Vec<f64> {
        let tf = self.spec.t_final;
        let mut out: Vec<f64> = self
            .spec
            .output_times
            .iter()
            .copied()
            .filter(|&x| x > self.t && x < tf)
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        if tf > self.t || out.is_empty() {
            out.push(tf);
        }
        out
    }

    pub fn run(&mut self) -> Result<()> {
        let tf = self.spec.t_final;
        self.run_to(tf, &mut |_, _| {})?;
        Ok(())
    }
}

/// Finds the element containing a point through a uniform bucket grid.
pub struct PointLocator<'a> {
    mesh: &'a Mesh,
    lo: [f64; 2],
    cell: [f64; 2],
    n: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl<'a> PointLocator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &mesh.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        let ne = mesh.n_elements().max(1);
        let side = if mesh.dim == 1 {
            ne
        } else {
            (ne as f64).sqrt().ceil() as usize
        };
        let n = if mesh.dim == 1 { [side, 1] } else { [side, side] };
        let cell = [
            ((hi[0] - lo[0]) / n[0] as f64).max(1e-300),
            ((hi[1] - lo[1]) / n[1] as f64).max(1e-300),
        ];
        let mut loc = Self {
            mesh,
            lo,
            cell,
            n,
            buckets: vec![Vec::new(); n[0] * n[1]],
        };
        let nv = mesh.dim + 1;
        for (e, el) in mesh.elements.iter().enumerate() {
            let mut a = [f64::INFINITY; 2];
            let mut b = [f64::NEG_INFINITY; 2];
            for &v in &el.vertices[..nv] {
                let p = mesh.vertices[v];
                for d in 0..2 {
                    a[d] = a[d].min(p[d]);
                    b[d] = b[d].max(p[d]);
                }
            }
            let (i0, j0) = loc.bucket(a);
            let (i1, j1) = loc.bucket(b);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    loc.buckets[j * n[0] + i].push(e);
                }
            }
        }
        loc
    }

    fn bucket(&self, x: [f64; 2]) -> (usize, usize) {
        let f = |d: usize| (((x[d] - self.lo[d]) / self.cell[d]).floor().max(0.0) as usize).min(self.n[d] - 1);
        (f(0), f(1))
    }

    /// Element and reference coordinates of `x`.
    pub fn locate(&self, x: [f64; 2]) -> Option<(usize, [f64; 2])> {
        let (i, j) = self.bucket(x);
        let tol = 1e-10;
        for &e in &self.buckets[j * self.n[0] + i] {
            let xi = self.mesh.elements[e].geometry.inverse_map(x);
            let inside = if self.mesh.dim == 1 {
                xi[0] >= -tol && xi[0] <= 1.0 + tol
            } else {
                xi[0] >= -tol && xi[1] >= -tol && xi[0] + xi[1] <= 1.0 + tol
            };
            if inside {
                return Some((e, xi));
            }
        }
        None
    }
}

/// L2 norms of `coarse - fine` for `h`, `u` and `m` (vector norms), sampled
/// at a quadrature rule on the coarse mesh.
pub fn l2_difference(coarse: (&DgSpace, &State), fine: (&DgSpace, &State)) -> Result<[f64; 3]> {
    let (cs, cst) = coarse;
    let (fs, fst) = fine;
    let rule = QuadratureRule::volume(cs.dim, 2 * cs.degree.max(fs.degree) + 2)?;
    let loc = PointLocator::new(&fs.mesh);
    let nv = cs.n_vec();
    let mut err = [0.0; 3];
    let eval = |f: &DgField, e: usize, c: usize, phi: &[f64]| -> f64 {
        f.comp(e, c).iter().zip(phi).map(|(a, p)| a * p).sum()
    };
    for (e, el) in cs.mesh.elements.iter().enumerate() {
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let x = el.geometry.map(*p);
            let (fe, fxi) = loc
                .locate(x)
                .ok_or_else(|| CaseError::NotNested(format!("point {x:?} is outside the reference mesh")))?;
            let cphi = cs.basis.values_at(*p);
            let fphi = fs.basis.values_at(fxi);
            let wq = w * el.geometry.det.abs();
            let dh = eval(&cst.h, e, 0, &cphi) - eval(&fst.h, fe, 0, &fphi);
            err[0] += wq * dh * dh;
            for c in 0..nv {
                let du = eval(&cst.u, e, c, &cphi) - eval(&fst.u, fe, c, &fphi);
                let dm = eval(&cst.m, e, c, &cphi) - eval(&fst.m, fe, c, &fphi);
                err[1] += wq * du * du;
                err[2] += wq * dm * dm;
            }
        }
    }
    Ok(err.map(f64::sqrt))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub n: usize,
    pub errors: [f64; 3],
    pub rates: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub case: String,
    pub degree: usize,
    pub reference: usize,
    pub t: f64,
    pub rows: Vec<ErrorRow>,
}

impl ConvergenceTable {
    pub fn from_errors(case: &str, degree: usize, reference: usize, t: f64, errs: &[(usize, [f64; 3])]) -> Self {
        let mut rows: Vec<ErrorRow> = Vec::new();
        for (i, &(n, e)) in errs.iter().enumerate() {
            let rates = (i > 0).then(|| {
                let (n0, e0) = errs[i - 1];
                let r = (n as f64 / n0 as f64).ln();
                [0, 1, 2].map(|k| (e0[k] / e[k]).ln() / r)
            });
            rows.push(ErrorRow { n, errors: e, rates });
        }
        Self {
            case: case.to_string(),
            degree,
            reference,
            t,
            rows,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,err_h,rate_h,err_u,rate_u,err_m,rate_m\n");
        for r in &self.rows {
            let rate = |k: usize| r.rates.map(|x| format!("{:.4}", x[k])).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{:e},{},{:e},{},{:e},{}",
                r.n,
                r.errors[0],
                rate(0),
                r.errors[1],
                rate(1),
                r.errors[2],
                rate(2)
            );
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{} (k = {}, t = {}, reference N = {})\n{:>6} {:>11} {:>6} {:>11} {:>6} {:>11} {:>6}\n",
            self.case, self.degree, self.t, self.reference, "N", "err h", "rate", "err u", "rate", "err m", "rate"
        );
        for r in &self.rows {
            let rate = |k: usize| r.rates.map(|x| format!("{:.2}", x[k])).unwrap_or_else(|| "--".into());
            let _ = writeln!(
                s,
                "{:>6} {:>11.3e} {:>6} {:>11.3e} {:>6} {:>11.3e} {:>6}",
                r.n,
                r.errors[0],
                rate(0),
                r.errors[1],
                rate(1),
                r.errors[2],
                rate(2)
            );
        }
        s
    }
}

/// Resolution `n` as `n` cells in 1D or an `n x n` grid in 2D.
pub fn with_resolution(spec: &CaseSpec, n: usize) -> CaseSpec {
    let mut s = spec.clone();
    s.resolution = if spec.dim == 1 {
        Resolution::Cells(n)
    } else {
        Resolution::Grid(n, n)
    };
    s
}

pub fn check_nested(resolutions: &[usize], reference: usize) -> Result<(), CaseError> {
    for &n in resolutions {
        if n == 0 || reference % n != 0 {
            return Err(CaseError::NotNested(format!(
                "{n} does not divide the reference resolution {reference}"
            )));
        }
    }
    Ok(())
}

/// Final state of `spec` at resolution `n`.
pub fn solve_at(spec: &CaseSpec, n: usize) -> Result<Simulation> {
    let mut sim = Simulation::new(with_resolution(spec, n))?;
    sim.run()?;
    Ok(sim)
}

/// Errors at each resolution against the run at `reference`.
pub fn convergence(spec: &CaseSpec, resolutions: &[usize], reference: usize) -> Result<ConvergenceTable> {
    check_nested(resolutions, reference)?;
    let fine = solve_at(spec, reference)?;
    let mut errs = Vec::new();
    for &n in resolutions {
        let e = if n == reference {
            [0.0; 3]
        } else {
            let coarse = solve_at(spec, n)?;
            l2_difference((&coarse.scheme.space, &coarse.state), (&fine.scheme.space, &fine.state))?
        };
        errs.push((n, e));
    }
    Ok(ConvergenceTable::from_errors(
        &spec.name,
        spec.degree,
        reference,
        spec.t_final,
        &errs,
    ))
}
