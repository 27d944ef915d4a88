//! Runtime invariant suite: well-balancing, entropy identity, local
//! conservation, flux symmetry, positivity scaling and the velocity update.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cases::{make_case, InitialData, Resolution};
use crate::error::Result;
use crate::limiters::positivity_limit;
use crate::operators::Scheme;
use crate::physics::{numerical_flux, FacetTrace, PointState};
use crate::space::{DgField, DgSpace};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, worst: f64, tol: f64, what: &str) -> CheckResult {
    CheckResult {
        name,
        passed: worst <= tol,
        detail: format!("{what} {worst:.2e} (tolerance {tol:.0e})"),
    }
}

fn random_field(sp: &DgSpace, n_comp: usize, mean: f64, amp: f64, rng: &mut ChaCha8Rng) -> DgField {
    let mut f = sp.zeros(n_comp);
    let phi0 = sp.basis.phi0();
    for e in 0..f.n_elems {
        for c in 0..n_comp {
            let v = f.comp_mut(e, c);
            v[0] = (mean + rng.gen_range(-amp..amp)) / phi0;
            for a in &mut v[1..] {
                *a = rng.gen_range(-0.1 * amp..0.1 * amp);
            }
        }
    }
    f
}

/// Periodic schemes with smooth continuous bottoms: 20 cells in 1D, 4x4x2 in 2D.
fn periodic_schemes() -> Result<Vec<(Scheme, f64)>> {
    let mut out = Vec::new();
    for (name, res, mean) in [
        ("ex4_1", Resolution::Cells(20), 6.0),
        ("ex4_7", Resolution::Grid(4, 4), 10.0),
    ] {
        let mut c = make_case(name)?;
        c.resolution = res;
        out.push((c.setup()?.0, mean));
    }
    Ok(out)
}

pub fn well_balanced() -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for (name, res) in [
        ("ex4_2s", Resolution::Cells(50)),
        ("ex4_2d", Resolution::Cells(50)),
        ("ex4_8", Resolution::Grid(12, 4)),
    ] {
        let mut c = make_case(name)?;
        c.resolution = res;
        if name == "ex4_8" {
            c.initial = InitialData::Surface {
                eta: Arc::new(|_| 1.0),
                u: [Arc::new(|_| 0.0), Arc::new(|_| 0.0)],
            };
        }
        let (sc, st) = c.setup()?;
        let r = sc.residual(&st.h, &st.u)?;
        for v in r.mass.coeffs.iter().chain(&r.momentum.coeffs) {
            worst = worst.max(v.abs());
        }
    }
    Ok(check(
        "well-balanced residual",
        worst,
        1e-10,
        "largest lake-at-rest residual",
    ))
}

pub fn entropy_identity(samples: usize, rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for (sc, mean) in periodic_schemes()? {
        for _ in 0..samples {
            let h = random_field(&sc.space, 1, mean, 0.3 * mean, rng);
            let u = random_field(&sc.space, sc.space.n_vec(), 0.0, 1.0, rng);
            let e = sc.total_entropy(&h, &u);
            let d = sc.entropy_rate(&h, &u)? - sc.entropy_dissipation_rhs(&h, &u);
            worst = worst.max(d.abs() / e.abs().max(1.0));
        }
    }
    Ok(check("entropy identity", worst, 1e-10, "largest relative mismatch"))
}

pub fn local_conservation(samples: usize, rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for (sc, mean) in periodic_schemes()? {
        let phi0 = sc.space.basis.phi0();
        for _ in 0..samples {
            let h = random_field(&sc.space, 1, mean, 0.3 * mean, rng);
            let u = random_field(&sc.space, sc.space.n_vec(), 0.0, 1.0, rng);
            let r = sc.residual(&h, &u)?;
            let net: f64 = (0..r.mass.n_elems).map(|e| r.mass.comp(e, 0)[0] * phi0).sum();
            let scale: f64 = (0..r.mass.n_elems).map(|e| (r.mass.comp(e, 0)[0] * phi0).abs()).sum();
            worst = worst.max(net.abs() / scale.max(1.0));
        }
    }
    Ok(check("local conservation", worst, 1e-12, "net periodic mass residual"))
}

pub fn flux_symmetry(samples: usize, g: f64, rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let mut pt = || {
            PointState::new(
                rng.gen_range(0.1..3.0),
                [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
                rng.gen_range(0.0..1.0),
            )
        };
        let (a, b) = (pt(), pt());
        let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let n = [th.cos(), th.sin()];
        for rec in [false, true] {
            let f = numerical_flux(g, &FacetTrace { plus: a, minus: b, n }, rec);
            let r = numerical_flux(
                g,
                &FacetTrace {
                    plus: b,
                    minus: a,
                    n: [-n[0], -n[1]],
                },
                rec,
            );
            worst = worst
                .max((f.mass + r.mass).abs())
                .max((f.momentum[0] + r.momentum[0]).abs())
                .max((f.momentum[1] + r.momentum[1]).abs());
        }
    }
    check("flux conservativity", worst, 1e-13, "largest swapped-trace sum")
}

pub fn positivity(samples: usize, rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for (sc, _) in periodic_schemes()? {
        let sp = &sc.space;
        for _ in 0..samples {
            let mut h = random_field(sp, 1, 0.5, 0.5, rng);
            for v in h.coeffs.iter_mut() {
                *v *= 4.0;
            }
            let before = sp.averages(&h, 0);
            positivity_limit(sp, &mut h, 1e-12)?;
            let tab = &sp.positivity_tab;
            for e in 0..h.n_elems {
                worst = worst.max((sp.average(&h, e, 0) - before[e]).abs());
                for q in 0..tab.n_points {
                    worst = worst.max(-tab.eval(q, h.comp(e, 0)) - 1e-13);
                }
            }
        }
    }
    Ok(check(
        "positivity scaling",
        worst,
        1e-13,
        "largest negative value or average change",
    ))
}

pub fn velocity_update(samples: usize, rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for (sc, mean) in periodic_schemes()? {
        for _ in 0..samples {
            let h = random_field(&sc.space, 1, mean, 0.3 * mean, rng);
            let m = random_field(&sc.space, sc.space.n_vec(), 0.0, 2.0, rng);
            let u = sc.velocity_update(&h, &m)?;
            worst = worst.max(sc.discharge(&h, &u).max_abs_diff(&m));
        }
    }
    Ok(check("velocity update", worst, 1e-11, "largest (h u - m, w) residual"))
}

/// Runs every check with `samples` random states per mesh.
pub fn run_suite(seed: u64, samples: usize) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(vec![
        well_balanced()?,
        entropy_identity(samples, &mut rng)?,
        local_conservation(samples, &mut rng)?,
        flux_symmetry(samples * 10, crate::physics::GRAVITY, &mut rng),
        positivity(samples, &mut rng)?,
        velocity_update(samples, &mut rng)?,
    ])
}
