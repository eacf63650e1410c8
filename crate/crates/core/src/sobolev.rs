//! Sobolev-type inequalities on hypersurfaces and their explicit constants.
//!
//! Every check evaluates both sides of an inequality on a mesh (or along a
//! trajectory) and returns an [`InequalityReport`]. The constants are very
//! loose, so the ratio `lhs / rhs` is the interesting output.

use serde::{Deserialize, Serialize};

use crate::analytic::unit_sphere_area;
use crate::error::{Error, Result};
use crate::flow::FlowTrajectory;
use crate::geometry::{gradient_lp_norm, lp_integral, lp_norm, GeometryCache, ScalarField};
use crate::mesh::Hypersurface;
use crate::report::InequalityReport;
use crate::stats::trapezoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevConstants {
    pub n: usize,
    pub k: u32,
    pub volume: f64,
    pub t: f64,
    /// `kn / (kn - (k+1))`.
    pub q_k: f64,
    /// `2 + (k+1)^2 / (k^2 n)`; also the space-time exponent.
    pub gamma: f64,
    pub omega_n: f64,
    pub c_n: f64,
    pub c_nk: f64,
    pub a_nk: f64,
    pub big_a: f64,
    pub a_hat: f64,
    pub a_tilde: f64,
    pub b_nkt: f64,
}

/// Checks `k, n >= 2`, or `k = 1` and `n > 2`.
pub fn check_hypothesis(n: usize, k: u32) -> Result<()> {
    let ok = (k >= 2 && n >= 2) || (k == 1 && n > 2);
    if !ok {
        return Err(Error::HypothesisViolated(format!(
            "need k, n >= 2 or k = 1 and n > 2; got n = {n}, k = {k}"
        )));
    }
    Ok(())
}

pub fn compute_constants(n: usize, k: u32, volume: f64, t: f64) -> Result<SobolevConstants> {
    check_hypothesis(n, k)?;
    if !(volume > 0.0) || !(t > 0.0) {
        return Err(Error::InvalidArgument(
            "volume and T must be positive".into(),
        ));
    }
    let (nf, kf) = (n as f64, k as f64);
    let denom = kf * nf - (kf + 1.0);
    let q_k = kf * nf / denom;
    let gamma = 2.0 + (kf + 1.0).powi(2) / (kf * kf * nf);
    let omega_n = unit_sphere_area(n);
    let c_n = 4f64.powf(nf + 1.0) / omega_n.powf(1.0 / nf);
    let c_nk = c_n * (kf + 1.0) * (nf - 1.0) / denom;
    let a_nk = c_nk.powf(denom / (nf - 1.0)) * 2f64.powf((kf * nf - kf - nf) / (nf - 1.0));
    let big_a = 2f64.powf((nf - 1.0) * (kf + 1.0) * (nf + kf + 1.0) / denom)
        * (2.0 * c_nk).powf(nf + kf + 1.0);
    let a_hat = big_a * volume.powf((kf - 1.0) / (2.0 * (kf + 1.0)));
    let a_tilde = big_a.powf(1.0 / kf) * (2.0 * kf / (kf + 1.0)).powf((kf + 1.0) / kf);
    let b_nkt = a_tilde
        * volume.powf((kf - 1.0) * (kf + 1.0) / (2.0 * kf * kf * nf))
        * t.powf((kf - 1.0) / kf).max(t.powf((kf - 1.0) / (2.0 * kf)));
    Ok(SobolevConstants {
        n,
        k,
        volume,
        t,
        q_k,
        gamma,
        omega_n,
        c_n,
        c_nk,
        a_nk,
        big_a,
        a_hat,
        a_tilde,
        b_nkt,
    })
}

impl SobolevConstants {
    /// Interpolation exponent `mu_{n,k,s}` for `1 < s < n/(n-1)`.
    pub fn mu(&self, s: f64) -> Result<f64> {
        let (nf, kf) = (self.n as f64, self.k as f64);
        let upper = nf / (nf - 1.0);
        if !(s > 1.0 && s < upper) {
            return Err(Error::InvalidArgument(format!(
                "s = {s} must lie in (1, {upper})"
            )));
        }
        Ok(
            nf / (kf * nf - (kf + 1.0)) * (kf * (nf - 1.0) * (s - 1.0) + 1.0)
                / (nf - (nf - 1.0) * s),
        )
    }
}

/// Right-hand side of `(a1 + a2)^theta <= ...`: `a1^theta + a2^theta` for
/// `theta <= 1`, `2^{theta-1}(a1^theta + a2^theta)` for `theta >= 1`.
pub fn power_sum_bound(a1: f64, a2: f64, theta: f64) -> f64 {
    let s = a1.powf(theta) + a2.powf(theta);
    if theta <= 1.0 {
        s
    } else {
        2f64.powf(theta - 1.0) * s
    }
}

fn check_dimension(mesh: &Hypersurface, n: usize) -> Result<()> {
    if n != mesh.dimension() {
        return Err(Error::InvalidArgument(format!(
            "mesh has dimension {}, got n = {n}",
            mesh.dimension()
        )));
    }
    Ok(())
}

/// `(int w^{n/(n-1)})^{(n-1)/n} <= c_n int (|grad w| + |H| w)`.
pub fn michael_simon_check(
    mesh: &Hypersurface,
    cache: &GeometryCache,
    w: &ScalarField,
    n: usize,
) -> Result<InequalityReport> {
    check_dimension(mesh, n)?;
    w.require_nonnegative()?;
    let nf = n as f64;
    let c_n = 4f64.powf(nf + 1.0) / unit_sphere_area(n).powf(1.0 / nf);
    let lhs = lp_norm(cache, w, nf / (nf - 1.0));
    let grad_l1 = gradient_lp_norm(mesh, cache, w, 1.0);
    let h_w: f64 = cache
        .mean_curvature
        .iter()
        .zip(&w.values)
        .zip(&cache.area_weights)
        .map(|((h, w), a)| h.abs() * w * a)
        .sum();
    Ok(
        InequalityReport::new("michael_simon", lhs, c_n * (grad_l1 + h_w))
            .constant("c_n", c_n)
            .factor("grad_l1", grad_l1)
            .factor("h_w_l1", h_w),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearSobolevReport {
    /// Norms of `v` and `grad v` in `L^{(k+1)/k}`.
    pub lp_form: InequalityReport,
    /// The same left side against `L^2` norms with the volume-corrected constant.
    pub l2_form: InequalityReport,
}

/// `||v||^{k+1}_{(k+1)Q_k/k} <= A (||grad v||^{k+1}_{(k+1)/k} + ||H||^{n+k+1}_{n+k+1} ||v||^{k+1}_{(k+1)/k})`
/// and its `L^2` variant.
pub fn nonlinear_sobolev_check(
    mesh: &Hypersurface,
    cache: &GeometryCache,
    v: &ScalarField,
    n: usize,
    k: u32,
) -> Result<NonlinearSobolevReport> {
    check_dimension(mesh, n)?;
    check_hypothesis(n, k)?;
    v.require_nonnegative()?;
    let c = compute_constants(n, k, cache.total_area(), 1.0)?;
    let (nf, kf) = (n as f64, k as f64);
    let p = (kf + 1.0) / kf;
    let h_pow = lp_integral(cache, &cache.mean_curvature_field(), nf + kf + 1.0);

    let lhs_norm = lp_norm(cache, v, p * c.q_k);
    let lhs = lhs_norm.powf(kf + 1.0);
    let grad_p = gradient_lp_norm(mesh, cache, v, p);
    let v_p = lp_norm(cache, v, p);
    let rhs = c.big_a * (grad_p.powf(kf + 1.0) + h_pow * v_p.powf(kf + 1.0));
    let lp_form = InequalityReport::new("nonlinear_sobolev", lhs, rhs)
        .constant("A", c.big_a)
        .constant("Q_k", c.q_k)
        .factor("lhs_norm", lhs_norm)
        .factor("grad_norm", grad_p)
        .factor("v_norm", v_p)
        .factor("h_power_integral", h_pow);

    let grad_2 = gradient_lp_norm(mesh, cache, v, 2.0);
    let v_2 = lp_norm(cache, v, 2.0);
    let rhs2 = c.a_hat * (grad_2.powf(kf + 1.0) + h_pow * v_2.powf(kf + 1.0));
    let l2_form = InequalityReport::new("nonlinear_sobolev_l2", lhs, rhs2)
        .constant("A_hat", c.a_hat)
        .constant("Q_k", c.q_k)
        .factor("lhs_norm", lhs_norm)
        .factor("grad_l2", grad_2)
        .factor("v_l2", v_2)
        .factor("h_power_integral", h_pow);
    Ok(NonlinearSobolevReport { lp_form, l2_form })
}

/// `||v||^2_{2Q_k} <= A~ (||v||_2^{(k-1)/k} ||grad v||_2^{(k+1)/k} + (||H||^{n+k+1}_{n+k+1})^{1/k} ||v||_2^2)`.
pub fn gradient_form_check(
    mesh: &Hypersurface,
    cache: &GeometryCache,
    v: &ScalarField,
    n: usize,
    k: u32,
) -> Result<InequalityReport> {
    check_dimension(mesh, n)?;
    v.require_nonnegative()?;
    let c = compute_constants(n, k, cache.total_area(), 1.0)?;
    let (nf, kf) = (n as f64, k as f64);
    let h_pow = lp_integral(cache, &cache.mean_curvature_field(), nf + kf + 1.0);
    let lhs_norm = lp_norm(cache, v, 2.0 * c.q_k);
    let v_2 = lp_norm(cache, v, 2.0);
    let grad_2 = gradient_lp_norm(mesh, cache, v, 2.0);
    let rhs = c.a_tilde
        * (v_2.powf((kf - 1.0) / kf) * grad_2.powf((kf + 1.0) / kf)
            + h_pow.powf(1.0 / kf) * v_2 * v_2);
    Ok(
        InequalityReport::new("gradient_form", lhs_norm * lhs_norm, rhs)
            .constant("A_tilde", c.a_tilde)
            .constant("Q_k", c.q_k)
            .factor("lhs_norm", lhs_norm)
            .factor("v_l2", v_2)
            .factor("grad_l2", grad_2)
            .factor("h_power_integral", h_pow),
    )
}

/// Space-time inequality along a trajectory, with `v_fields[j]` living on `traj.states[j]`.
/// Time integrals use the trapezoid rule over the stored snapshots.
pub fn spacetime_sobolev_check(
    traj: &FlowTrajectory,
    v_fields: &[ScalarField],
    n: usize,
    k: u32,
) -> Result<InequalityReport> {
    if traj.states.len() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "{} snapshots, at least 2 needed",
            traj.states.len()
        )));
    }
    if v_fields.len() != traj.states.len() {
        return Err(Error::InvalidArgument(format!(
            "{} fields for {} snapshots",
            v_fields.len(),
            traj.states.len()
        )));
    }
    check_dimension(&traj.states[0].mesh, n)?;
    for w in traj.states.windows(2) {
        let (a0, a1) = (w[0].cache.total_area(), w[1].cache.total_area());
        if a1 > a0 * (1.0 + 1e-12) {
            return Err(Error::HypothesisViolated(format!(
                "area increased from {a0} to {a1} at t = {}: f(H)H < 0 somewhere",
                w[1].time
            )));
        }
    }
    for v in v_fields {
        v.require_nonnegative()?;
    }
    let t0 = traj.states[0].time;
    let t_span = traj.states[traj.states.len() - 1].time - t0;
    let volume = traj.states[0].cache.total_area();
    let c = compute_constants(n, k, volume, t_span)?;
    let (nf, kf) = (n as f64, k as f64);

    let times: Vec<f64> = traj.states.iter().map(|s| s.time).collect();
    let mut lhs_t = Vec::with_capacity(times.len());
    let mut grad_sq_t = Vec::with_capacity(times.len());
    let mut h_pow_t = Vec::with_capacity(times.len());
    let mut max_v2 = 0.0f64;
    for (s, v) in traj.states.iter().zip(v_fields) {
        if v.len() != s.mesh.vertex_count() {
            return Err(Error::InvalidArgument(
                "field length does not match the snapshot".into(),
            ));
        }
        lhs_t.push(lp_integral(&s.cache, v, c.gamma));
        grad_sq_t.push(gradient_lp_norm(&s.mesh, &s.cache, v, 2.0).powi(2));
        h_pow_t.push(lp_integral(
            &s.cache,
            &s.cache.mean_curvature_field(),
            nf + kf + 1.0,
        ));
        max_v2 = max_v2.max(lp_norm(&s.cache, v, 2.0));
    }
    let lhs = trapezoid(&times, &lhs_t);
    let grad_st = trapezoid(&times, &grad_sq_t).sqrt();
    let h_st = trapezoid(&times, &h_pow_t);
    let lead = max_v2.powf((kf + 1.0).powi(2) / (kf * kf * nf) + (kf - 1.0) / kf);
    let rhs = c.b_nkt
        * lead
        * (grad_st.powf((kf + 1.0) / kf) + max_v2.powf((kf + 1.0) / kf) * h_st.powf(1.0 / kf));
    Ok(InequalityReport::new("spacetime_sobolev", lhs, rhs)
        .constant("B", c.b_nkt)
        .constant("gamma", c.gamma)
        .constant("volume", volume)
        .constant("T", t_span)
        .factor("max_v_l2", max_v2)
        .factor("grad_spacetime_l2", grad_st)
        .factor("h_spacetime_power", h_st))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{run, FlowParams};
    use crate::geometry::build_geometry;
    use crate::mesh::{ellipsoid, icosphere};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn constants_n2_k2() {
        let c = compute_constants(2, 2, 4.0 * PI, 1.0).unwrap();
        assert_eq!(c.q_k, 4.0);
        assert_eq!(c.gamma, 3.125);
        assert_relative_eq!(c.c_n, 64.0 / (4.0 * PI).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(c.c_nk, 3.0 * c.c_n, max_relative = 1e-14);
        assert!(c.big_a > 4e14 && c.big_a < 6e14, "{}", c.big_a);
        assert_relative_eq!(
            c.a_tilde,
            c.big_a.sqrt() * (4.0f64 / 3.0).powf(1.5),
            max_relative = 1e-14
        );
    }

    #[test]
    fn q_reduces_for_k1() {
        let c = compute_constants(3, 1, 1.0, 1.0).unwrap();
        assert_relative_eq!(c.q_k, 3.0, max_relative = 1e-15);
        for n in 3..8 {
            let c = compute_constants(n, 1, 1.0, 1.0).unwrap();
            assert_relative_eq!(c.q_k, n as f64 / (n as f64 - 2.0), max_relative = 1e-15);
        }
    }

    #[test]
    fn hypothesis_rejected() {
        assert!(matches!(
            compute_constants(2, 1, 1.0, 1.0),
            Err(Error::HypothesisViolated(_))
        ));
        assert!(compute_constants(2, 2, 0.0, 1.0).is_err());
    }

    #[test]
    fn b_reduces_to_a_for_k1() {
        // with T = 1 the time factor is 1 and every volume exponent vanishes
        for n in 3..7 {
            let c = compute_constants(n, 1, 7.0, 1.0).unwrap();
            assert_relative_eq!(c.b_nkt, c.a_tilde, max_relative = 1e-14);
            assert_relative_eq!(c.a_tilde, c.big_a, max_relative = 1e-14);
        }
    }

    #[test]
    fn constant_ordering() {
        for (n, k) in [(2, 2), (3, 2), (2, 3), (4, 1), (5, 3)] {
            let c = compute_constants(n, k, 2.0, 0.5).unwrap();
            assert!(c.q_k > 1.0);
            assert!(c.c_nk > c.c_n);
            assert!(c.gamma > 2.0);
        }
    }

    #[test]
    fn mu_range() {
        let c = compute_constants(2, 2, 1.0, 1.0).unwrap();
        assert!(c.mu(1.0).is_err());
        assert!(c.mu(2.0).is_err());
    }

    proptest! {
        #[test]
        fn mu_positive(n in 2usize..8, k in 2u32..6, frac in 0.001f64..0.999) {
            let c = compute_constants(n, k, 1.0, 1.0).unwrap();
            let s = 1.0 + frac * (n as f64 / (n as f64 - 1.0) - 1.0);
            prop_assert!(c.mu(s).unwrap() > 0.0);
        }

        #[test]
        fn power_sum_inequalities(a1 in 0.0f64..100.0, a2 in 0.0f64..100.0, theta in 0.0f64..5.0) {
            let lhs = (a1 + a2).powf(theta);
            prop_assert!(lhs <= power_sum_bound(a1, a2, theta) * (1.0 + 1e-12) + 1e-300);
        }
    }

    #[test]
    fn michael_simon_unit_sphere() {
        let m = icosphere(4, 1.0).unwrap();
        let g = build_geometry(&m).unwrap();
        let r =
            michael_simon_check(&m, &g, &ScalarField::constant(m.vertex_count(), 1.0), 2).unwrap();
        assert!((r.lhs - (4.0 * PI).sqrt()).abs() / (4.0 * PI).sqrt() < 0.01);
        assert!((r.rhs - 64.0 / (4.0 * PI).sqrt() * 8.0 * PI).abs() / r.rhs < 0.01);
        assert!(r.holds);
        let z =
            michael_simon_check(&m, &g, &ScalarField::constant(m.vertex_count(), 0.0), 2).unwrap();
        assert!(z.holds && z.ratio == 0.0);
    }

    #[test]
    fn negative_field_rejected() {
        let m = icosphere(2, 1.0).unwrap();
        let g = build_geometry(&m).unwrap();
        let v = ScalarField::from_positions(&m, |p| p.z);
        assert!(matches!(
            michael_simon_check(&m, &g, &v, 2),
            Err(Error::NegativeField { .. })
        ));
        assert!(nonlinear_sobolev_check(&m, &g, &v, 2, 2).is_err());
    }

    #[test]
    fn nonlinear_constant_field() {
        let m = icosphere(4, 1.0).unwrap();
        let g = build_geometry(&m).unwrap();
        let r =
            nonlinear_sobolev_check(&m, &g, &ScalarField::constant(m.vertex_count(), 1.0), 2, 2)
                .unwrap();
        let area = 4.0 * PI;
        // ||1||^{3}_{L^6} = Area^{1/2}
        assert!((r.lp_form.lhs - area.sqrt()).abs() / area.sqrt() < 0.01);
        assert!(r.lp_form.holds && r.l2_form.holds);
        let expected = 32.0 * area;
        assert!((r.lp_form.factors["h_power_integral"] - expected).abs() / expected < 0.01);
        let g0 = gradient_form_check(&m, &g, &ScalarField::constant(m.vertex_count(), 1.0), 2, 2)
            .unwrap();
        assert!((g0.lhs - area.powf(0.25)).abs() / area.powf(0.25) < 0.01);
        assert!(g0.factors["grad_l2"] < 1e-12);
        assert!(g0.holds);
    }

    #[test]
    fn ellipsoid_checks_hold() {
        let m = ellipsoid(1.0, 0.9, 0.8, 3).unwrap();
        let g = build_geometry(&m).unwrap();
        let v = ScalarField::from_positions(&m, |p| 1.0 + p.z);
        assert!(michael_simon_check(&m, &g, &v, 2).unwrap().holds);
        let r = nonlinear_sobolev_check(&m, &g, &v, 2, 2).unwrap();
        assert!(r.lp_form.holds && r.l2_form.holds);
        assert!(gradient_form_check(&m, &g, &v, 2, 2).unwrap().holds);
    }

    #[test]
    fn spacetime_short_sphere_run() {
        let m = icosphere(3, 1.0).unwrap();
        let traj = run(&m, &FlowParams::power(2).with_stop_t(0.01), &[]).unwrap();
        let ones: Vec<ScalarField> = traj
            .states
            .iter()
            .map(|s| ScalarField::constant(s.mesh.vertex_count(), 1.0))
            .collect();
        let r = spacetime_sobolev_check(&traj, &ones, 2, 2).unwrap();
        assert!(r.holds);
        // int_0^T Area(t) dt with Area = 4 pi r^2
        let sol = crate::analytic::SphereSolution::new(2, 2, 1.0).unwrap();
        let steps = 10_000;
        let exact: f64 = (0..steps)
            .map(|i| {
                let t = (i as f64 + 0.5) * 0.01 / steps as f64;
                sol.area(t).unwrap() * 0.01 / steps as f64
            })
            .sum();
        assert!((r.lhs - exact).abs() / exact < 0.01, "{} vs {exact}", r.lhs);
        let h: Vec<ScalarField> = traj
            .states
            .iter()
            .map(|s| s.cache.mean_curvature_field())
            .collect();
        assert!(spacetime_sobolev_check(&traj, &h, 2, 2).unwrap().holds);
        let zeros: Vec<ScalarField> = traj
            .states
            .iter()
            .map(|s| ScalarField::constant(s.mesh.vertex_count(), 0.0))
            .collect();
        let z = spacetime_sobolev_check(&traj, &zeros, 2, 2).unwrap();
        assert!(z.holds && z.lhs == 0.0);
    }
}
