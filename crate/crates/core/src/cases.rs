//! Benchmark scenarios and the boundary ghost-trace rule.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use crate::error::{CaseError, Result, SolverError};
use crate::limiters::{positivity_limit, LimiterConfig};
use crate::mesh::{build_structured_triangular, interval_mesh, BoundaryTag, Mesh, SideTags};
use crate::operators::{Scheme, State};
use crate::physics::{PointState, GRAVITY};
use crate::space::{DgField, DgSpace};

pub type ScalarFn = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;

/// Exterior trace for a boundary facet with outward normal `n`.
pub fn ghost_trace(interior: PointState, n: [f64; 2], tag: BoundaryTag) -> PointState {
    match tag {
        BoundaryTag::Wall => {
            let un = interior.u[0] * n[0] + interior.u[1] * n[1];
            PointState {
                u: [interior.u[0] - 2.0 * un * n[0], interior.u[1] - 2.0 * un * n[1]],
                ..interior
            }
        }
        BoundaryTag::Outflow | BoundaryTag::Periodic(_) => interior,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// SSP-RK3 with velocity updates only.
    Plain,
    /// SSP-RK3 with dry-cell, TVB, positivity and velocity limiters.
    Limited,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Plain => "plain",
            Algorithm::Limited => "limited",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Resolution {
    Cells(usize),
    Grid(usize, usize),
    File(PathBuf),
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resolution::Cells(n) => write!(f, "{n}"),
            Resolution::Grid(nx, ny) => write!(f, "{nx}x{ny}"),
            Resolution::File(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Clone)]
pub enum InitialData {
    /// `h0` and velocity.
    Height { h: ScalarFn, u: [ScalarFn; 2] },
    /// Still water surface `eta`: `h = P(eta) - b_h`, velocity given.
    Surface { eta: ScalarFn, u: [ScalarFn; 2] },
    /// `h0` and discharge.
    Discharge { h: ScalarFn, m: [ScalarFn; 2] },
}

#[derive(Clone)]
pub struct CaseSpec {
    pub name: String,
    pub title: &'static str,
    pub dim: usize,
    /// `[x0, x1, y0, y1]`; the y entries are unused in 1D.
    pub domain: [f64; 4],
    pub sides: SideTags,
    pub g: f64,
    pub t_final: f64,
    pub output_times: Vec<f64>,
    pub bottom: ScalarFn,
    pub bottom_discontinuous: bool,
    pub initial: InitialData,
    pub algorithm: Algorithm,
    pub limiter: LimiterConfig,
    pub cfl: f64,
    pub degree: usize,
    pub resolution: Resolution,
    /// Resolutions used by convergence studies, finest last as reference.
    pub study: Vec<usize>,
    pub notes: Vec<&'static str>,
}

impl fmt::Debug for CaseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CaseSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("domain", &self.domain)
            .field("sides", &self.sides)
            .field("g", &self.g)
            .field("t_final", &self.t_final)
            .field("algorithm", &self.algorithm)
            .field("limiter", &self.limiter)
            .field("cfl", &self.cfl)
            .field("degree", &self.degree)
            .field("resolution", &self.resolution)
            .finish()
    }
}

pub const CASE_NAMES: &[&str] = &[
    "ex4_1",
    "ex4_2s",
    "ex4_2d",
    "ex4_3_big",
    "ex4_3_small",
    "ex4_4",
    "ex4_5",
    "ex4_6",
    "ex4_7",
    "ex4_8",
    "ex4_9_wet",
    "ex4_9_dry",
    "ex4_10",
];

fn f(func: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static) -> ScalarFn {
    Arc::new(func)
}

fn zero() -> ScalarFn {
    f(|_| 0.0)
}

fn still() -> [ScalarFn; 2] {
    [zero(), zero()]
}

fn base(name: &str, title: &'static str, dim: usize, domain: [f64; 4]) -> CaseSpec {
    let limiter = LimiterConfig::default();
    CaseSpec {
        name: name.to_string(),
        title,
        dim,
        domain,
        sides: SideTags::all(BoundaryTag::Wall),
        g: GRAVITY,
        t_final: 0.0,
        output_times: Vec::new(),
        bottom: zero(),
        bottom_discontinuous: false,
        initial: InitialData::Height {
            h: f(|_| 1.0),
            u: still(),
        },
        algorithm: Algorithm::Limited,
        limiter,
        cfl: if dim == 1 { 0.1 } else { 0.05 },
        degree: 2,
        resolution: Resolution::Cells(200),
        study: Vec::new(),
        notes: Vec::new(),
    }
}

fn pulse_case(name: &str, eps: f64) -> CaseSpec {
    let mut c = base(
        name,
        "quasi-stationary pulse over a smooth bump",
        1,
        [0.0, 2.0, 0.0, 0.0],
    );
    c.sides = SideTags::all(BoundaryTag::Outflow);
    c.t_final = 0.2;
    c.bottom = f(|x| {
        if (1.4..=1.6).contains(&x[0]) {
            0.25 * ((10.0 * PI * (x[0] - 1.5)).cos() + 1.0)
        } else {
            0.0
        }
    });
    c.initial = InitialData::Surface {
        eta: f(move |x| if (1.1..=1.2).contains(&x[0]) { 1.0 + eps } else { 1.0 }),
        u: still(),
    };
    c
}

fn circular_dam(name: &str, outside: f64) -> CaseSpec {
    let mut c = base(name, "circular dam break, quarter domain", 2, [0.0, 25.0, 0.0, 25.0]);
    c.sides = SideTags {
        left: BoundaryTag::Wall,
        bottom: BoundaryTag::Wall,
        right: BoundaryTag::Outflow,
        top: BoundaryTag::Outflow,
    };
    c.t_final = 0.69;
    c.initial = InitialData::Height {
        h: f(move |x| if x[0].hypot(x[1]) <= 11.0 { 10.0 } else { outside }),
        u: still(),
    };
    c.resolution = Resolution::Grid(15, 15);
    c
}

/// Look up a case by name. `ex4_3` and `ex4_9` default to the big-pulse and dry variants.
pub fn make_case(name: &str) -> Result<CaseSpec, CaseError> {
    let c = match name {
        "ex4_1" => {
            let mut c = base("ex4_1", "smooth periodic accuracy test", 1, [0.0, 1.0, 0.0, 0.0]);
            c.sides = SideTags::periodic();
            c.t_final = 0.1;
            c.bottom = f(|x| (PI * x[0]).sin().powi(2));
            c.initial = InitialData::Discharge {
                h: f(|x| 5.0 + (2.0 * PI * x[0]).cos().exp()),
                m: [f(|x| (2.0 * PI * x[0]).cos().sin()), zero()],
            };
            c.algorithm = Algorithm::Plain;
            c.study = vec![50, 100, 200, 400, 1600];
            c
        }
        "ex4_2s" | "ex4_2d" => {
            let smooth = name == "ex4_2s";
            let title = if smooth {
                "lake at rest over a smooth bump"
            } else {
                "lake at rest over a step"
            };
            let mut c = base(name, title, 1, [0.0, 10.0, 0.0, 0.0]);
            c.t_final = 0.5;
            c.bottom = if smooth {
                f(|x| 5.0 * (-0.4 * (x[0] - 5.0).powi(2)).exp())
            } else {
                f(|x| if (4.0..=8.0).contains(&x[0]) { 4.0 } else { 0.0 })
            };
            c.bottom_discontinuous = !smooth;
            c.initial = InitialData::Surface {
                eta: f(|_| 10.0),
                u: still(),
            };
            c
        }
        "ex4_3" | "ex4_3_big" => pulse_case("ex4_3_big", 0.2),
        "ex4_3_small" => pulse_case("ex4_3_small", 0.001),
        "ex4_4" => {
            let mut c = base("ex4_4", "dam break over a rectangular bump", 1, [0.0, 1500.0, 0.0, 0.0]);
            c.sides = SideTags::all(BoundaryTag::Outflow);
            c.t_final = 60.0;
            c.bottom = f(|x| if (x[0] - 750.0).abs() < 225.0 { 8.0 } else { 0.0 });
            c.bottom_discontinuous = true;
            c.initial = InitialData::Surface {
                eta: f(|x| if x[0] <= 750.0 { 20.0 } else { 15.0 }),
                u: still(),
            };
            c.notes.push("initial surface 20 | 15 at x = 750 is assumed");
            c
        }
        "ex4_5" => {
            let mut c = base("ex4_5", "flat-bottom dam break", 1, [-1.0, 1.0, 0.0, 0.0]);
            c.sides = SideTags::all(BoundaryTag::Outflow);
            c.g = 10.0;
            c.t_final = 0.2;
            c.initial = InitialData::Height {
                h: f(|x| if x[0] <= 0.0 { 1.0 } else { 0.1 }),
                u: still(),
            };
            c.notes.push("g = 10 taken from the example text");
            c
        }
        "ex4_6" => {
            let mut c = base("ex4_6", "dam break onto a dry bed", 1, [-300.0, 300.0, 0.0, 0.0]);
            c.sides = SideTags::all(BoundaryTag::Outflow);
            c.g = 10.0;
            c.t_final = 12.0;
            c.output_times = vec![4.0, 8.0, 12.0];
            c.initial = InitialData::Height {
                h: f(|x| if x[0] <= 0.0 { 10.0 } else { 1e-12 }),
                u: still(),
            };
            c.limiter.eps_d = Some(5e-3);
            c.notes
                .push("g = 10 follows the preamble; the source problem usually uses 9.812");
            c
        }
        "ex4_7" => {
            let mut c = base("ex4_7", "smooth periodic accuracy test in 2D", 2, [0.0, 1.0, 0.0, 1.0]);
            c.sides = SideTags::periodic();
            c.t_final = 0.05;
            c.bottom = f(|x| (2.0 * PI * x[0]).sin() + (2.0 * PI * x[1]).sin());
            c.initial = InitialData::Discharge {
                h: f(|x| 10.0 + (2.0 * PI * x[0]).sin().exp() * (2.0 * PI * x[1]).cos()),
                m: [
                    f(|x| (2.0 * PI * x[0]).cos().sin() * (2.0 * PI * x[1]).sin()),
                    f(|x| (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).sin().cos()),
                ],
            };
            c.algorithm = Algorithm::Plain;
            c.resolution = Resolution::Grid(50, 50);
            c.study = vec![25, 50, 200];
            c
        }
        "ex4_8" => {
            let mut c = base(
                "ex4_8",
                "small perturbation over an elliptic hump",
                2,
                [0.0, 2.0, 0.0, 0.5],
            );
            c.sides = SideTags {
                left: BoundaryTag::Outflow,
                right: BoundaryTag::Outflow,
                bottom: BoundaryTag::Wall,
                top: BoundaryTag::Wall,
            };
            c.t_final = 0.6;
            c.output_times = vec![0.12, 0.24, 0.36, 0.48, 0.6];
            c.bottom = f(|x| 0.8 * (-5.0 * (x[0] - 0.9).powi(2) - 50.0 * (x[1] - 0.5).powi(2)).exp());
            c.initial = InitialData::Surface {
                eta: f(|x| if (0.05..=0.15).contains(&x[0]) { 1.01 } else { 1.0 }),
                u: still(),
            };
            c.resolution = Resolution::Grid(60, 15);
            c.notes.push("second exponent of the hump read as -50 (y - 0.5)^2");
            c
        }
        "ex4_9" | "ex4_9_dry" => {
            let mut c = circular_dam("ex4_9_dry", 1e-12);
            c.limiter.eps_d = Some(5e-3);
            c.limiter.v_max = Some(15.0);
            c
        }
        "ex4_9_wet" => circular_dam("ex4_9_wet", 1.0),
        "ex4_10" => {
            let mut c = base(
                "ex4_10",
                "dam break in a closed channel with three mounds",
                2,
                [0.0, 75.0, 0.0, 15.0],
            );
            c.t_final = 40.0;
            c.output_times = (1..=8).map(|i| 5.0 * i as f64).collect();
            c.bottom = f(|x| {
                let m1 = 1.0 - 0.1 * (x[0] - 30.0).hypot(x[1] - 22.5);
                let m2 = 1.0 - 0.1 * (x[0] - 30.0).hypot(x[1] - 7.5);
                let m3 = 2.8 - 0.28 * (x[0] - 47.5).hypot(x[1] - 15.0);
                0f64.max(m1).max(m2).max(m3)
            });
            c.initial = InitialData::Height {
                h: f(|x| if x[0] < 16.0 { 1.875 } else { 1e-12 }),
                u: still(),
            };
            c.limiter.eps_d = Some(1e-3);
            c.limiter.v_max = Some(9.0);
            c.resolution = Resolution::Grid(45, 9);
            c
        }
        other => return Err(CaseError::UnknownCase(other.to_string())),
    };
    Ok(c)
}

impl CaseSpec {
    pub fn validate(&self) -> Result<(), CaseError> {
        let bad = |m: String| Err(CaseError::InvalidConfig(m));
        if self.degree > 4 {
            return bad(format!("degree {} is not supported (0..=4)", self.degree));
        }
        if !(self.cfl > 0.0) {
            return bad(format!("cfl must be positive, got {}", self.cfl));
        }
        if !(self.t_final >= 0.0) {
            return bad(format!("t_final must be non-negative, got {}", self.t_final));
        }
        if !(self.g > 0.0) {
            return bad(format!("g must be positive, got {}", self.g));
        }
        match &self.resolution {
            Resolution::Cells(0) | Resolution::Grid(0, _) | Resolution::Grid(_, 0) => {
                return bad("resolution must be positive".into())
            }
            Resolution::Cells(_) if self.dim != 1 => {
                // N means N x N for square domains
            }
            Resolution::Grid(..) if self.dim != 2 => return bad("grid resolution needs a 2D case".into()),
            _ => {}
        }
        self.limiter.validate().map_err(CaseError::InvalidConfig)
    }

    pub fn build_mesh(&self) -> Result<Mesh> {
        let d = self.domain;
        let mesh = match (&self.resolution, self.dim) {
            (Resolution::File(p), _) => Mesh::load(p)?,
            (Resolution::Cells(n), 1) => interval_mesh(d[0], d[1], *n, [self.sides.left, self.sides.right])?,
            (Resolution::Cells(n), _) => build_structured_triangular(*n, *n, d, self.sides)?,
            (Resolution::Grid(nx, ny), _) => build_structured_triangular(*nx, *ny, d, self.sides)?,
        };
        if mesh.dim != self.dim {
            return Err(CaseError::InvalidConfig(format!("mesh is {}D but case is {}D", mesh.dim, self.dim)).into());
        }
        Ok(mesh)
    }

    /// Continuous interpolant for smooth bottoms at `k >= 1`, L2 projection otherwise.
    pub fn uses_reconstruction(&self) -> bool {
        self.bottom_discontinuous || self.degree == 0
    }

    pub fn setup(&self) -> Result<(Scheme, State)> {
        self.validate()?;
        let mesh = self.build_mesh()?;
        self.setup_on(mesh)
    }

    pub fn setup_on(&self, mesh: Mesh) -> Result<(Scheme, State)> {
        let space = DgSpace::new(mesh, self.degree)?;
        let bfun = self.bottom.clone();
        let bottom = if self.uses_reconstruction() {
            space.project(&[&*bfun])
        } else {
            space.interpolate_continuous(&*bfun)?
        };
        let scheme = Scheme::new(space, self.g, bottom, self.uses_reconstruction());
        let state = initial_state(
            &scheme,
            &self.initial,
            &self.bottom,
            self.algorithm == Algorithm::Limited,
        )?;
        Ok((scheme, state))
    }

    /// Limiter configuration with `h_max0` taken from the initial height.
    pub fn limiter_for(&self, scheme: &Scheme, state: &State) -> LimiterConfig {
        let mut cfg = self.limiter;
        cfg.h_max0 = max_height(&scheme.space, &state.h);
        cfg
    }
}

/// Largest value of `h` over the positivity point sets.
pub fn max_height(space: &DgSpace, h: &DgField) -> f64 {
    let tab = &space.positivity_tab;
    (0..h.n_elems)
        .flat_map(|e| (0..tab.n_points).map(move |q| tab.eval(q, h.comp(e, 0))))
        .fold(0.0, f64::max)
}

pub fn initial_state(scheme: &Scheme, init: &InitialData, bottom: &ScalarFn, limit: bool) -> Result<State> {
    let sp = &scheme.space;
    let nv = sp.n_vec();
    let (mut h, mfun): (DgField, Vec<ScalarFn>) = match init {
        InitialData::Height { h, u } => {
            let hh = sp.project(&[&**h]);
            let m = (0..nv)
                .map(|c| {
                    let (h, uc) = (h.clone(), u[c].clone());
                    f(move |x| h(x) * uc(x))
                })
                .collect();
            (hh, m)
        }
        InitialData::Surface { eta, u } => {
            let hh = DgField::combine(1.0, &sp.project(&[&**eta]), -1.0, &scheme.bottom)?;
            let m = (0..nv)
                .map(|c| {
                    let (eta, b, uc) = (eta.clone(), bottom.clone(), u[c].clone());
                    f(move |x| (eta(x) - b(x)).max(0.0) * uc(x))
                })
                .collect();
            (hh, m)
        }
        InitialData::Discharge { h, m } => (sp.project(&[&**h]), m[..nv].to_vec()),
    };
    let refs: Vec<&dyn Fn([f64; 2]) -> f64> = mfun.iter().map(|g| &**g as &dyn Fn([f64; 2]) -> f64).collect();
    let m = sp.project(&refs);
    if limit {
        positivity_limit(sp, &mut h, f64::INFINITY)?;
    }
    if let Some(e) = h.first_non_finite() {
        return Err(SolverError::NonFinite { element: e }.into());
    }
    let u = scheme.velocity_update(&h, &m)?;
    Ok(State { h, u, m })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_parameter_values() {
        let c = make_case("ex4_2s").unwrap();
        assert!(((c.bottom)([5.0, 0.0]) - 5.0).abs() < 1e-15);
        assert_eq!(make_case("ex4_5").unwrap().g, 10.0);
        let c = make_case("ex4_3").unwrap();
        let InitialData::Surface { eta, .. } = &c.initial else {
            panic!("surface data expected")
        };
        let b1 = (c.bottom)([1.0, 0.0]);
        let h1 = eta([1.0, 0.0]) - b1;
        assert_eq!(h1 + b1, 1.0);
        assert_eq!(b1, 0.0);
    }

    #[test]
    fn unknown_case() {
        assert!(matches!(make_case("ex9"), Err(CaseError::UnknownCase(_))));
    }

    #[test]
    fn ghost_rules() {
        let p = PointState::new(1.5, [2.0, 1.0], 0.3);
        let w = ghost_trace(p, [1.0, 0.0], BoundaryTag::Wall);
        assert_eq!(w.u, [-2.0, 1.0]);
        assert_eq!((w.h, w.b), (1.5, 0.3));
        assert_eq!(ghost_trace(p, [1.0, 0.0], BoundaryTag::Outflow), p);
        let q = PointState::new(1.5, [0.0, 1.0], 0.3);
        assert_eq!(ghost_trace(q, [1.0, 0.0], BoundaryTag::Wall), q);
    }

    #[test]
    fn every_case_builds_with_nonnegative_height() {
        for name in CASE_NAMES {
            let mut c = make_case(name).unwrap();
            c.resolution = match c.dim {
                1 => Resolution::Cells(20),
                _ => Resolution::Grid(6, 4),
            };
            let (scheme, state) = c.setup().unwrap();
            let tab = &scheme.space.positivity_tab;
            for e in 0..state.h.n_elems {
                for q in 0..tab.n_points {
                    let v = tab.eval(q, state.h.comp(e, 0));
                    assert!(v >= -1e-13, "{name}: h = {v} in element {e}");
                }
            }
        }
    }

    #[test]
    fn surface_data_is_lake_at_rest() {
        for name in ["ex4_2s", "ex4_2d"] {
            let mut c = make_case(name).unwrap();
            c.resolution = Resolution::Cells(40);
            let (scheme, state) = c.setup().unwrap();
            for v in scheme.surface_values(&state.h) {
                assert!((v - 10.0).abs() < 1e-12);
            }
            assert!(state.u.coeffs.iter().all(|&x| x == 0.0));
        }
    }
}
