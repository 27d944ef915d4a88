//! Pointwise shallow water quantities.

use crate::error::PhysicsError;

/// Default gravitational acceleration used by the benchmark cases.
pub const GRAVITY: f64 = 9.812;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointState {
    pub h: f64,
    pub u: [f64; 2],
    pub b: f64,
}

impl PointState {
    pub fn new(h: f64, u: [f64; 2], b: f64) -> Self {
        Self { h, u, b }
    }

    #[inline]
    pub fn eta(&self) -> f64 {
        self.h + self.b
    }

    #[inline]
    pub fn un(&self, n: [f64; 2]) -> f64 {
        self.u[0] * n[0] + self.u[1] * n[1]
    }
}

/// Traces on both sides of a facet; `n` points from `plus` to `minus`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacetTrace {
    pub plus: PointState,
    pub minus: PointState,
    pub n: [f64; 2],
}

/// Numerical flux values at one facet point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxValues {
    pub mass: f64,
    pub momentum: [f64; 2],
    pub alpha: f64,
    /// Heights actually used in the flux (reconstructed when requested).
    pub h_plus: f64,
    pub h_minus: f64,
}

#[inline]
pub fn wave_speed(g: f64, h: f64, u: [f64; 2], n: [f64; 2]) -> f64 {
    (g * h.max(0.0)).sqrt() + (u[0] * n[0] + u[1] * n[1]).abs()
}

pub fn hydrostatic_reconstruct(hp: f64, hm: f64, bp: f64, bm: f64) -> (f64, f64) {
    let jb = bp - bm;
    ((hp + jb.min(0.0)).max(0.0), (hm - jb.max(0.0)).max(0.0))
}

pub fn max_wave_speed(g: f64, tr: &FacetTrace, reconstructed: bool) -> f64 {
    let (hp, hm) = heights(tr, reconstructed);
    wave_speed(g, hp, tr.plus.u, tr.n).max(wave_speed(g, hm, tr.minus.u, tr.n))
}

fn heights(tr: &FacetTrace, reconstructed: bool) -> (f64, f64) {
    if reconstructed {
        hydrostatic_reconstruct(tr.plus.h, tr.minus.h, tr.plus.b, tr.minus.b)
    } else {
        (tr.plus.h, tr.minus.h)
    }
}

/// Mass and momentum fluxes. Without reconstruction the dissipation uses
/// jumps of `h + b` and `(h + b) u`; with it, jumps of `h*` and `h* u`.
/// Negative heights are clamped to zero.
pub fn numerical_flux(g: f64, tr: &FacetTrace, reconstructed: bool) -> FluxValues {
    let (p, m, n) = (&tr.plus, &tr.minus, tr.n);
    let (hp, hm) = heights(tr, reconstructed);
    let (hp, hm) = (hp.max(0.0), hm.max(0.0));
    let alpha = wave_speed(g, hp, p.u, n).max(wave_speed(g, hm, m.u, n));
    let avg_hun = 0.5 * (hp * p.un(n) + hm * m.un(n));
    let (sp, sm) = if reconstructed { (hp, hm) } else { (hp + p.b, hm + m.b) };
    let mass = avg_hun + 0.5 * alpha * (sp - sm);
    let mut momentum = [0.0; 2];
    for c in 0..2 {
        momentum[c] = avg_hun * 0.5 * (p.u[c] + m.u[c]) + 0.5 * alpha * (sp * p.u[c] - sm * m.u[c]);
    }
    FluxValues {
        mass,
        momentum,
        alpha,
        h_plus: hp,
        h_minus: hm,
    }
}

pub fn mass_flux(g: f64, tr: &FacetTrace, reconstructed: bool) -> Result<f64, PhysicsError> {
    check_heights(tr)?;
    Ok(numerical_flux(g, tr, reconstructed).mass)
}

pub fn momentum_flux(g: f64, tr: &FacetTrace, reconstructed: bool) -> Result<[f64; 2], PhysicsError> {
    check_heights(tr)?;
    Ok(numerical_flux(g, tr, reconstructed).momentum)
}

fn check_heights(tr: &FacetTrace) -> Result<(), PhysicsError> {
    for h in [tr.plus.h, tr.minus.h] {
        if h < 0.0 {
            return Err(PhysicsError::NegativeHeight(h));
        }
    }
    Ok(())
}

/// Exact normal flux `(h u.n, h u (u.n) + g h^2 n / 2)`.
pub fn exact_normal_flux(g: f64, p: &PointState, n: [f64; 2]) -> [f64; 3] {
    let un = p.un(n);
    let pres = 0.5 * g * p.h * p.h;
    [
        p.h * un,
        p.h * p.u[0] * un + pres * n[0],
        p.h * p.u[1] * un + pres * n[1],
    ]
}

pub fn entropy_density(p: &PointState, g: f64) -> f64 {
    0.5 * p.h * (p.u[0] * p.u[0] + p.u[1] * p.u[1]) + 0.5 * g * p.h * p.h + g * p.h * p.b
}

pub fn entropy_variable(p: &PointState, g: f64) -> [f64; 3] {
    [
        g * (p.h + p.b) - 0.5 * (p.u[0] * p.u[0] + p.u[1] * p.u[1]),
        p.u[0],
        p.u[1],
    ]
}

/// Dissipation integrand `alpha/2 (g [[h+b]]^2 + {{h+b}} |[[u]]|^2)` at a point.
pub fn entropy_dissipation(g: f64, tr: &FacetTrace) -> f64 {
    let alpha = max_wave_speed(g, tr, false);
    let je = tr.plus.eta() - tr.minus.eta();
    let ae = 0.5 * (tr.plus.eta() + tr.minus.eta());
    let ju = [tr.plus.u[0] - tr.minus.u[0], tr.plus.u[1] - tr.minus.u[1]];
    0.5 * alpha * (g * je * je + ae * (ju[0] * ju[0] + ju[1] * ju[1]))
}

/// Eigenvectors of the flux Jacobian in direction `n` with respect to
/// `(h, m_x, m_y)`. Columns of `r` are right eigenvectors for
/// `u.n - c`, `u.n`, `u.n + c`; `l` is the inverse of `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicBasis {
    pub r: [[f64; 3]; 3],
    pub l: [[f64; 3]; 3],
    pub eigenvalues: [f64; 3],
}

impl CharacteristicBasis {
    pub fn to_characteristic(&self, v: [f64; 3]) -> [f64; 3] {
        mat_vec(&self.l, v)
    }

    pub fn from_characteristic(&self, w: [f64; 3]) -> [f64; 3] {
        mat_vec(&self.r, w)
    }
}

pub fn characteristic_basis(h: f64, u: [f64; 2], g: f64, n: [f64; 2]) -> Result<CharacteristicBasis, PhysicsError> {
    if !(h > 0.0) {
        return Err(PhysicsError::NonPositiveHeight(h));
    }
    let c = (g * h).sqrt();
    let t = [-n[1], n[0]];
    let un = u[0] * n[0] + u[1] * n[1];
    let ut = u[0] * t[0] + u[1] * t[1];
    let r = [
        [1.0, 0.0, 1.0],
        [u[0] - c * n[0], t[0], u[0] + c * n[0]],
        [u[1] - c * n[1], t[1], u[1] + c * n[1]],
    ];
    let s = 0.5 / c;
    let l = [
        [(un + c) * s, -n[0] * s, -n[1] * s],
        [-ut, t[0], t[1]],
        [-(un - c) * s, n[0] * s, n[1] * s],
    ];
    Ok(CharacteristicBasis {
        r,
        l,
        eigenvalues: [un - c, un, un + c],
    })
}

fn mat_vec(a: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = a[i][0] * v[0] + a[i][1] * v[1] + a[i][2] * v[2];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tr(hp: f64, up: [f64; 2], bp: f64, hm: f64, um: [f64; 2], bm: f64, n: [f64; 2]) -> FacetTrace {
        FacetTrace {
            plus: PointState::new(hp, up, bp),
            minus: PointState::new(hm, um, bm),
            n,
        }
    }

    #[test]
    fn mass_flux_examples() {
        let t = tr(2.0, [1.0, 0.0], 0.0, 2.0, [1.0, 0.0], 0.0, [1.0, 0.0]);
        assert!((mass_flux(9.812, &t, false).unwrap() - 2.0).abs() < 1e-15);
        let t = tr(1.5, [0.0; 2], 0.5, 0.7, [0.0; 2], 1.3, [0.6, 0.8]);
        assert_eq!(mass_flux(9.812, &t, false).unwrap(), 0.0);
        let t = tr(1.0, [0.0; 2], 0.0, 0.25, [0.0; 2], 0.0, [1.0, 0.0]);
        let oracle = 0.5 * 10f64.sqrt() * 0.75;
        assert!((mass_flux(10.0, &t, false).unwrap() - oracle).abs() < 1e-14);
        assert!((oracle - 1.185854).abs() < 1e-6);
        assert!(mass_flux(1.0, &tr(-1.0, [0.0; 2], 0.0, 1.0, [0.0; 2], 0.0, [1.0, 0.0]), false).is_err());
    }

    #[test]
    fn momentum_flux_examples() {
        let t = tr(1.0, [1.0, 0.0], 0.0, 0.25, [0.0; 2], 0.0, [1.0, 0.0]);
        let m = momentum_flux(10.0, &t, false).unwrap();
        // {{hu}} = 0.5, {{u}} = 0.5, alpha = max(sqrt(10) + 1, sqrt(2.5)), [[hu]] = 1.
        let alpha = 10f64.sqrt() + 1.0;
        assert!((m[0] - (0.5 * 0.5 + 0.5 * alpha * 1.0)).abs() < 1e-14);
        assert_eq!(m[1], 0.0);
        let rest = tr(1.5, [0.0; 2], 0.5, 0.7, [0.0; 2], 1.3, [1.0, 0.0]);
        assert_eq!(momentum_flux(9.812, &rest, false).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn wave_speed_examples() {
        let t = tr(1.0, [0.0; 2], 0.0, 1.0, [0.0; 2], 0.0, [1.0, 0.0]);
        assert!((max_wave_speed(9.812, &t, false) - 3.13241).abs() < 1e-5);
        let t = tr(0.0, [0.0; 2], 0.0, 0.0, [0.0; 2], 0.0, [1.0, 0.0]);
        assert_eq!(max_wave_speed(9.812, &t, false), 0.0);
        let t = tr(1.0, [3.0, 0.0], 0.0, 4.0, [-1.0, 0.0], 0.0, [1.0, 0.0]);
        assert_eq!(max_wave_speed(1.0, &t, false), 4.0);
    }

    #[test]
    fn reconstruction_examples() {
        assert_eq!(hydrostatic_reconstruct(2.0, 1.0, 0.3, 0.3), (2.0, 1.0));
        assert_eq!(hydrostatic_reconstruct(2.0, 1.0, 0.0, 1.0), (1.0, 1.0));
        let (hp, hm) = hydrostatic_reconstruct(3.0, 1.0, 1.0, 3.0);
        assert_eq!(hp - hm, (3.0 + 1.0) - (1.0 + 3.0));
    }

    #[test]
    fn entropy_examples() {
        let p = PointState::new(0.0, [1.5, -2.0], 0.7);
        assert_eq!(entropy_density(&p, 9.812), 0.0);
        assert_eq!(entropy_variable(&p, 2.0), [2.0 * 0.7 - 0.5 * 6.25, 1.5, -2.0]);
        let p = PointState::new(1.0, [0.0; 2], 0.0);
        assert_eq!(entropy_density(&p, 2.0), 1.0);
        assert_eq!(entropy_variable(&p, 2.0), [2.0, 0.0, 0.0]);
        assert_eq!(entropy_density(&PointState::new(2.0, [3.0, 4.0], 1.0), 10.0), 65.0);
    }

    fn fd_jacobian(g: f64, q: [f64; 3], n: [f64; 2]) -> [[f64; 3]; 3] {
        let f = |q: [f64; 3]| {
            let p = PointState::new(q[0], [q[1] / q[0], q[2] / q[0]], 0.0);
            exact_normal_flux(g, &p, n)
        };
        let mut j = [[0.0; 3]; 3];
        for c in 0..3 {
            let eps = 1e-6;
            let (mut a, mut b) = (q, q);
            a[c] += eps;
            b[c] -= eps;
            let (fa, fb) = (f(a), f(b));
            for r in 0..3 {
                j[r][c] = (fa[r] - fb[r]) / (2.0 * eps);
            }
        }
        j
    }

    #[test]
    fn characteristic_basis_diagonalises_jacobian() {
        let cb = characteristic_basis(1.0, [0.0, 0.0], 1.0, [1.0, 0.0]).unwrap();
        let j = fd_jacobian(1.0, [1.0, 0.0, 0.0], [1.0, 0.0]);
        let mut d = [[0.0; 3]; 3];
        for i in 0..3 {
            for k in 0..3 {
                for a in 0..3 {
                    for b in 0..3 {
                        d[i][k] += cb.l[i][a] * j[a][b] * cb.r[b][k];
                    }
                }
            }
        }
        let expect = [-1.0, 0.0, 1.0];
        for i in 0..3 {
            for k in 0..3 {
                let e = if i == k { expect[i] } else { 0.0 };
                assert!((d[i][k] - e).abs() < 1e-8, "{d:?}");
            }
        }
        assert!(characteristic_basis(0.0, [0.0; 2], 1.0, [1.0, 0.0]).is_err());
    }

    #[test]
    fn one_dimensional_eigenpairs() {
        // 2x2 system: A = [[0, 1], [c^2 - u^2, 2u]], eigenvectors (1, u -+ c).
        let (h, u, g) = (2.0f64, 0.7, 9.812);
        let c = (g * h).sqrt();
        let cb = characteristic_basis(h, [u, 0.0], g, [1.0, 0.0]).unwrap();
        let a = [[0.0, 1.0], [c * c - u * u, 2.0 * u]];
        for (col, lam) in [(0, u - c), (2, u + c)] {
            let r = [cb.r[0][col], cb.r[1][col]];
            assert_eq!(cb.r[2][col], 0.0);
            for i in 0..2 {
                let av = a[i][0] * r[0] + a[i][1] * r[1];
                assert!((av - lam * r[i]).abs() < 1e-12);
            }
        }
        assert!((cb.eigenvalues[0] - (u - c)).abs() < 1e-15);
    }

    fn state() -> impl Strategy<Value = PointState> {
        (0.01f64..10.0, -3.0f64..3.0, -3.0f64..3.0, -2.0f64..2.0).prop_map(|(h, u, v, b)| PointState::new(h, [u, v], b))
    }

    fn normal() -> impl Strategy<Value = [f64; 2]> {
        (0.0f64..std::f64::consts::TAU).prop_map(|a| [a.cos(), a.sin()])
    }

    proptest! {
        #[test]
        fn consistency(p in state(), n in normal(), g in 1.0f64..12.0) {
            let mut p = p;
            p.b = 0.0;
            let t = FacetTrace { plus: p, minus: p, n };
            let f = numerical_flux(g, &t, false);
            let ex = exact_normal_flux(g, &p, n);
            let pres = 0.5 * g * p.h * p.h;
            prop_assert!((f.mass - ex[0]).abs() < 1e-13 * (1.0 + ex[0].abs()));
            for c in 0..2 {
                let conv = ex[1 + c] - pres * n[c];
                prop_assert!((f.momentum[c] - conv).abs() < 1e-13 * (1.0 + conv.abs()));
            }
        }

        #[test]
        fn conservativity(p in state(), m in state(), n in normal(), g in 1.0f64..12.0, rec in any::<bool>()) {
            let a = numerical_flux(g, &FacetTrace { plus: p, minus: m, n }, rec);
            let b = numerical_flux(g, &FacetTrace { plus: m, minus: p, n: [-n[0], -n[1]] }, rec);
            prop_assert!((a.mass + b.mass).abs() < 1e-13 * (1.0 + a.mass.abs()));
            for c in 0..2 {
                prop_assert!((a.momentum[c] + b.momentum[c]).abs() < 1e-13 * (1.0 + a.momentum[c].abs()));
            }
        }

        #[test]
        fn entropy_identity_at_a_point(p in state(), m in state(), n in normal(), g in 1.0f64..12.0) {
            let t = FacetTrace { plus: p, minus: m, n };
            let f = numerical_flux(g, &t, false);
            // [[V]] . (mass, momentum) minus the central gravity term of the
            // non-conservative product.
            let (vp, vm) = (entropy_variable(&p, g), entropy_variable(&m, g));
            let jv: Vec<f64> = (0..3).map(|i| vp[i] - vm[i]).collect();
            let avg_hun = 0.5 * (p.h * p.un(n) + m.h * m.un(n));
            let je = p.eta() - m.eta();
            let lhs = jv[0] * f.mass + jv[1] * f.momentum[0] + jv[2] * f.momentum[1]
                - g * je * avg_hun;
            let rhs = entropy_dissipation(g, &t);
            prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs.abs() + lhs.abs()));
            prop_assert!(rhs >= 0.0 || 0.5 * (p.eta() + m.eta()) < 0.0);
        }

        #[test]
        fn reconstruction_is_bounded(hp in 0.0f64..5.0, hm in 0.0f64..5.0, bp in -3.0f64..3.0, bm in -3.0f64..3.0) {
            let (a, b) = hydrostatic_reconstruct(hp, hm, bp, bm);
            let top = hp.max(hm);
            prop_assert!((0.0..=top).contains(&a) && (0.0..=top).contains(&b));
        }

        #[test]
        fn characteristic_inverse(p in state(), n in normal(), g in 0.5f64..12.0) {
            let cb = characteristic_basis(p.h, p.u, g, n).unwrap();
            for i in 0..3 {
                for k in 0..3 {
                    let s: f64 = (0..3).map(|a| cb.r[i][a] * cb.l[a][k]).sum();
                    let e = if i == k { 1.0 } else { 0.0 };
                    prop_assert!((s - e).abs() < 1e-12);
                }
            }
        }
    }
}
