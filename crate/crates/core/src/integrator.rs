//! SSP-RK3 time stepping with optional limiting and step halving.

use log::{debug, warn};

use crate::cases::Algorithm;
use crate::error::SolverError;
use crate::limiters::{dry_cell_limit, positivity_limit, tvb_limit, velocity_limit, LimiterConfig};
use crate::operators::{Scheme, State};
use crate::quadrature::lobatto_w1;
use crate::space::DgField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub cfl: f64,
    /// Also enforce `alpha dt |dK| / |K| <= 2/3 w1`.
    pub hard_bound: bool,
    pub max_retries: usize,
    /// Cell averages below `-eps_avg` reject the step.
    pub eps_avg: f64,
}

impl StepControl {
    pub fn new(cfl: f64) -> Self {
        Self {
            cfl,
            hard_bound: false,
            max_retries: 20,
            eps_avg: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.cfl > 0.0) {
            return Err(SolverError::InvalidControl(format!(
                "cfl must be positive, got {}",
                self.cfl
            )));
        }
        if self.max_retries < 1 {
            return Err(SolverError::InvalidControl("retry limit must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageStats {
    pub troubled: Vec<usize>,
    pub tvb_modified: usize,
    pub dry: usize,
    pub velocity_limited: usize,
    pub clamped: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepInfo {
    pub dt: f64,
    /// Mass leaving through the boundary during the step.
    pub boundary_outflow: f64,
    /// Statistics of the stage that produced the new state.
    pub last: StageStats,
    pub max_troubled: usize,
    pub max_dry: usize,
    pub velocity_limited: usize,
    pub clamped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub retries: usize,
    pub entropy: f64,
    pub mass: f64,
    pub momentum: [f64; 2],
    pub min_average: f64,
    pub info: StepInfo,
}

type FaultHook = Box<dyn Fn(usize, usize) -> bool + Send + Sync>;

pub struct Integrator<'a> {
    pub scheme: &'a Scheme,
    pub algorithm: Algorithm,
    pub limiter: LimiterConfig,
    pub control: StepControl,
    fault: Option<FaultHook>,
}

impl<'a> Integrator<'a> {
    pub fn new(scheme: &'a Scheme, algorithm: Algorithm, limiter: LimiterConfig, control: StepControl) -> Self {
        Self {
            scheme,
            algorithm,
            limiter,
            control,
            fault: None,
        }
    }

    /// Force a rejection of `(step, attempt)` pairs for which `hook` returns true.
    pub fn with_fault(mut self, hook: impl Fn(usize, usize) -> bool + Send + Sync + 'static) -> Self {
        self.fault = Some(Box::new(hook));
        self
    }

    /// `cfl * min tau_K / alpha_K`, optionally capped by the positivity bound.
    /// Returns infinity when no wave moves.
    pub fn compute_dt(&self, s: &State) -> f64 {
        let sp = &self.scheme.space;
        let speeds = self.scheme.element_speeds(&s.h, &s.u);
        let w1 = lobatto_w1(sp.degree).unwrap_or(1.0);
        let mut dt = f64::INFINITY;
        for (el, &a) in sp.mesh.elements.iter().zip(&speeds) {
            if !(a > 0.0) {
                continue;
            }
            dt = dt.min(self.control.cfl * el.size / a);
            if self.control.hard_bound {
                dt = dt.min(2.0 / 3.0 * w1 * el.measure / (a * el.perimeter));
            }
        }
        dt
    }

    /// Limiting and velocity recovery applied after every Euler stage or combination.
    fn finish_stage(&self, mut h: DgField, mut m: DgField, stats: &mut StageStats) -> Result<State, SolverError> {
        let sc = self.scheme;
        let sp = &sc.space;
        if let Some(e) = h.first_non_finite().or_else(|| m.first_non_finite()) {
            return Err(SolverError::NonFinite { element: e });
        }
        match self.algorithm {
            Algorithm::Plain => check_averages(sp, &h, self.control.eps_avg)?,
            Algorithm::Limited => {
                check_averages(sp, &h, self.control.eps_avg)?;
                stats.dry = dry_cell_limit(sp, &self.limiter, &mut h, &mut m).len();
                let rep = tvb_limit(sp, &sc.bottom, sc.g, &self.limiter, &mut h, &mut m);
                stats.troubled = rep.troubled;
                stats.tvb_modified = rep.modified;
                positivity_limit(sp, &mut h, self.control.eps_avg)?;
            }
        }
        let mut u = sc.velocity_update(&h, &m)?;
        if self.algorithm == Algorithm::Limited {
            stats.velocity_limited = velocity_limit(sp, &self.limiter, &mut u);
        }
        Ok(State { h, u, m })
    }

    fn euler(&self, s: &State, dt: f64, stats: &mut StageStats) -> Result<(DgField, DgField, f64), SolverError> {
        let (h, m, r) = self.scheme.forward_euler(&s.h, &s.u, &s.m, dt)?;
        stats.clamped = r.clamped;
        Ok((h, m, r.boundary_mass_flux))
    }

    /// One SSP-RK3 step of size `dt`.
    pub fn step(&self, s: &State, dt: f64) -> Result<(State, StepInfo), SolverError> {
        let mut st = [StageStats::default(), StageStats::default(), StageStats::default()];

        let (h1, m1, f0) = self.euler(s, dt, &mut st[0])?;
        let s1 = self.finish_stage(h1, m1, &mut st[0])?;

        let (h2, m2, f1) = self.euler(&s1, dt, &mut st[1])?;
        let h2 = DgField::combine(0.75, &s.h, 0.25, &h2)?;
        let m2 = DgField::combine(0.75, &s.m, 0.25, &m2)?;
        let s2 = self.finish_stage(h2, m2, &mut st[1])?;

        let (h3, m3, f2) = self.euler(&s2, dt, &mut st[2])?;
        let h3 = DgField::combine(1.0 / 3.0, &s.h, 2.0 / 3.0, &h3)?;
        let m3 = DgField::combine(1.0 / 3.0, &s.m, 2.0 / 3.0, &m3)?;
        let s3 = self.finish_stage(h3, m3, &mut st[2])?;

        let info = StepInfo {
            dt,
            boundary_outflow: dt * (f0 / 6.0 + f1 / 6.0 + 2.0 * f2 / 3.0),
            max_troubled: st.iter().map(|x| x.troubled.len()).max().unwrap_or(0),
            max_dry: st.iter().map(|x| x.dry).max().unwrap_or(0),
            velocity_limited: st.iter().map(|x| x.velocity_limited).sum(),
            clamped: st.iter().map(|x| x.clamped).sum(),
            last: std::mem::take(&mut st[2]),
        };
        Ok((s3, info))
    }

    pub fn record(&self, step: usize, t: f64, retries: usize, s: &State, info: StepInfo) -> StepRecord {
        let sc = self.scheme;
        StepRecord {
            step,
            t,
            dt: info.dt,
            retries,
            entropy: sc.total_entropy(&s.h, &s.u),
            mass: sc.total_mass(&s.h),
            momentum: sc.total_momentum(&s.m),
            min_average: sc.space.averages(&s.h, 0).into_iter().fold(f64::INFINITY, f64::min),
            info,
        }
    }

    /// Advance from `t` to `t_end`, halving rejected steps. `observer` sees
    /// every accepted step. Returns the number of accepted steps.
    pub fn advance(
        &self,
        state: &mut State,
        t: &mut f64,
        t_end: f64,
        first_step: usize,
        observer: &mut dyn FnMut(&StepRecord, &State),
    ) -> Result<usize, SolverError> {
        self.control.validate()?;
        let eps_t = 1e-13 * t_end.abs().max(1.0);
        let mut step = first_step;
        while *t < t_end - eps_t {
            let remaining = t_end - *t;
            let mut dt = self.compute_dt(state);
            if !dt.is_finite() || dt >= remaining - eps_t {
                dt = remaining;
            }
            let mut retries = 0;
            let (new, info) = loop {
                let res = if self.fault.as_ref().is_some_and(|f| f(step, retries)) {
                    Err(SolverError::NegativeAverage {
                        element: 0,
                        value: f64::NAN,
                    })
                } else {
                    self.step(state, dt)
                };
                match res {
                    Ok(ok) => break ok,
                    Err(e) if retryable(&e) && retries < self.control.max_retries => {
                        debug!(
                            "step {step} at t = {t} rejected ({e}); retrying with dt = {:e}",
                            dt / 2.0
                        );
                        retries += 1;
                        dt *= 0.5;
                    }
                    Err(e) if retryable(&e) => {
                        warn!("giving up at t = {t}");
                        return Err(SolverError::RetryExhausted {
                            t: *t,
                            dt,
                            retries,
                            reason: e.to_string(),
                        });
                    }
                    Err(e) => return Err(e),
                }
            };
            *state = new;
            *t = if dt == remaining { t_end } else { *t + dt };
            step += 1;
            let rec = self.record(step, *t, retries, state, info);
            observer(&rec, state);
        }
        Ok(step - first_step)
    }
}

fn retryable(e: &SolverError) -> bool {
    matches!(
        e,
        SolverError::NegativeAverage { .. } | SolverError::NotSpd { .. } | SolverError::NonFinite { .. }
    )
}

fn check_averages(sp: &crate::space::DgSpace, h: &DgField, eps: f64) -> Result<(), SolverError> {
    for e in 0..h.n_elems {
        let v = sp.average(h, e, 0);
        if v < -eps {
            return Err(SolverError::NegativeAverage { element: e, value: v });
        }
    }
    Ok(())
}

/// Coefficientwise `w1 a + w2 b` of conservative pairs.
pub fn convex_combine(
    a: (&DgField, &DgField),
    b: (&DgField, &DgField),
    w1: f64,
    w2: f64,
) -> Result<(DgField, DgField), SolverError> {
    if w1 < 0.0 || w2 < 0.0 || (w1 + w2 - 1.0).abs() > 1e-14 {
        return Err(SolverError::InvalidControl(format!(
            "weights {w1}, {w2} are not convex"
        )));
    }
    Ok((DgField::combine(w1, a.0, w2, b.0)?, DgField::combine(w1, a.1, w2, b.1)?))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::cases::{make_case, CaseSpec, InitialData, Resolution};
    use crate::operators::Scheme;

    fn still_water(n: usize) -> CaseSpec {
        let mut c = make_case("ex4_1").unwrap();
        c.resolution = Resolution::Cells(n);
        c.bottom = Arc::new(|_| 0.0);
        c.initial = InitialData::Height {
            h: Arc::new(|_| 1.0),
            u: [Arc::new(|_| 0.0), Arc::new(|_| 0.0)],
        };
        c
    }

    fn integ<'a>(sc: &'a Scheme, c: &CaseSpec, st: &State) -> Integrator<'a> {
        Integrator::new(sc, c.algorithm, c.limiter_for(sc, st), StepControl::new(c.cfl))
    }

    #[test]
    fn dt_from_wave_speed() {
        let c = still_water(100);
        let (sc, st) = c.setup().unwrap();
        let dt = integ(&sc, &c, &st).compute_dt(&st);
        assert!((dt - 0.1 * 0.01 / 9.812f64.sqrt()).abs() < 1e-15);
        assert!((dt - 3.1925e-4).abs() < 5e-8);
        let c2 = still_water(200);
        let (sc2, st2) = c2.setup().unwrap();
        let dt2 = integ(&sc2, &c2, &st2).compute_dt(&st2);
        assert!((dt / dt2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn hard_bound_caps_dt() {
        let mut c = still_water(100);
        c.cfl = 10.0;
        let (sc, st) = c.setup().unwrap();
        let mut it = integ(&sc, &c, &st);
        it.control.hard_bound = true;
        let dt = it.compute_dt(&st);
        // k = 2: w1 = 1/6, so the cap is (1/9) |K| / (alpha |dK|) with |dK| = 2 in 1D
        let cap = 1.0 / 9.0 * 0.01 / (9.812f64.sqrt() * 2.0);
        assert!((dt - cap).abs() < 1e-15);
    }

    #[test]
    fn dry_state_has_infinite_dt() {
        let mut c = still_water(10);
        c.initial = InitialData::Height {
            h: Arc::new(|_| 0.0),
            u: [Arc::new(|_| 0.0), Arc::new(|_| 0.0)],
        };
        let (sc, st) = c.setup().unwrap();
        assert_eq!(integ(&sc, &c, &st).compute_dt(&st), f64::INFINITY);
    }

    #[test]
    fn convex_combination() {
        let c = still_water(4);
        let (sc, st) = c.setup().unwrap();
        let mut other = st.clone();
        other.h.coeffs.iter_mut().for_each(|a| *a += 1.0);
        let (h, m) = convex_combine((&st.h, &st.m), (&other.h, &other.m), 1.0, 0.0).unwrap();
        assert_eq!(h, st.h);
        assert_eq!(m, st.m);
        let (h, _) = convex_combine((&st.h, &st.m), (&other.h, &other.m), 0.75, 0.25).unwrap();
        assert!(
            (sc.total_mass(&h) - sc.total_mass(&st.h) - 0.25 * sc.total_mass(&sc.space.project(&[&|_| 1.0]))).abs()
                < 1e-14
        );
        assert!(convex_combine((&st.h, &st.m), (&other.h, &other.m), 0.5, 0.6).is_err());
        let short = still_water(5).setup().unwrap().1;
        assert!(matches!(
            convex_combine((&st.h, &st.m), (&short.h, &short.m), 0.5, 0.5),
            Err(SolverError::Mismatch(_))
        ));
    }

    #[test]
    fn lake_at_rest_over_many_steps() {
        for name in ["ex4_2s", "ex4_2d"] {
            for alg in [Algorithm::Plain, Algorithm::Limited] {
                let mut c = make_case(name).unwrap();
                c.resolution = Resolution::Cells(40);
                c.algorithm = alg;
                let (sc, mut st) = c.setup().unwrap();
                let eta0 = sc.surface_values(&st.h);
                let it = integ(&sc, &c, &st);
                let dt = it.compute_dt(&st);
                let mut t = 0.0;
                let n = it
                    .advance(&mut st, &mut t, 100.0 * dt * 0.999999, 0, &mut |_, _| {})
                    .unwrap();
                assert_eq!(n, 100);
                let drift = sc
                    .surface_values(&st.h)
                    .iter()
                    .zip(&eta0)
                    .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
                assert!(drift < 1e-12, "{name} {alg}: {drift}");
                assert!(st.m.coeffs.iter().all(|v| v.abs() < 1e-11));
            }
        }
    }

    #[test]
    fn injected_fault_halves_one_step() {
        let mut c = make_case("ex4_1").unwrap();
        c.resolution = Resolution::Cells(20);
        let (sc, st0) = c.setup().unwrap();
        let it = integ(&sc, &c, &st0).with_fault(|step, attempt| step == 3 && attempt == 0);
        let mut st = st0.clone();
        let mut t = 0.0;
        let mut recs = Vec::new();
        it.advance(&mut st, &mut t, 0.01, 0, &mut |r, _| recs.push(r.clone()))
            .unwrap();
        assert_eq!(recs[3].retries, 1);
        assert!(recs.iter().enumerate().all(|(i, r)| i == 3 || r.retries == 0));
        assert!((recs[3].dt * 2.0 - recs[2].dt).abs() < 1e-2 * recs[2].dt);
        // the following step recomputes dt from the CFL condition
        assert!(recs[4].dt > 1.5 * recs[3].dt);
        assert_eq!(t, 0.01);
    }

    #[test]
    fn persistent_fault_exhausts_retries() {
        let mut c = make_case("ex4_1").unwrap();
        c.resolution = Resolution::Cells(10);
        let (sc, st0) = c.setup().unwrap();
        let mut it = integ(&sc, &c, &st0).with_fault(|step, _| step == 1);
        it.control.max_retries = 3;
        let mut st = st0.clone();
        let mut t = 0.0;
        let err = it.advance(&mut st, &mut t, 0.01, 0, &mut |_, _| {}).unwrap_err();
        match err {
            SolverError::RetryExhausted { retries, t: tf, .. } => {
                assert_eq!(retries, 3);
                assert!(tf > 0.0);
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn inert_limiters_match_plain_pipeline() {
        let mut c = make_case("ex4_1").unwrap();
        c.resolution = Resolution::Cells(40);
        let (sc, st0) = c.setup().unwrap();
        let plain = integ(&sc, &c, &st0);
        let mut limited = integ(&sc, &c, &st0);
        limited.algorithm = Algorithm::Limited;
        limited.limiter.tol = Some(1e300);
        limited.limiter.eps_d = Some(0.0);
        limited.limiter.v_max = None;
        let (mut a, mut b) = (st0.clone(), st0.clone());
        let (mut ta, mut tb) = (0.0, 0.0);
        plain.advance(&mut a, &mut ta, 0.02, 0, &mut |_, _| {}).unwrap();
        limited.advance(&mut b, &mut tb, 0.02, 0, &mut |_, _| {}).unwrap();
        assert!(a.h.max_abs_diff(&b.h) < 1e-12);
        assert!(a.m.max_abs_diff(&b.m) < 1e-12);
    }

    #[test]
    fn periodic_mass_is_conserved_and_time_is_exact() {
        let mut c = make_case("ex4_1").unwrap();
        c.resolution = Resolution::Cells(50);
        let (sc, mut st) = c.setup().unwrap();
        let m0 = sc.total_mass(&st.h);
        let it = integ(&sc, &c, &st);
        let mut t = 0.0;
        let mut last = 0.0;
        it.advance(&mut st, &mut t, 0.1, 0, &mut |r, _| {
            assert!(r.t > last);
            last = r.t;
            assert!(r.info.boundary_outflow.abs() < 1e-14);
        })
        .unwrap();
        assert_eq!(t, 0.1);
        assert!((sc.total_mass(&st.h) - m0).abs() < 1e-12 * m0);
    }

    #[test]
    fn invalid_control_is_rejected() {
        assert!(StepControl::new(0.0).validate().is_err());
        assert!(StepControl::new(f64::NAN).validate().is_err());
        let mut c = StepControl::new(0.1);
        c.max_retries = 0;
        assert!(c.validate().is_err());
    }
}
