//! Closed-form shrinking spheres, the parabolic rescaling, and the scaling
//! functional equation that singles out power speeds.
//!
//! A round sphere of radius `r0` in R^{n+1} evolving by `dF/dt = -H^k nu`
//! stays round with `dr/dt = -n^k / r^k`, so
//! `r(t)^{k+1} = r0^{k+1} - (k+1) n^k t` and it vanishes at
//! `T_max = r0^{k+1} / ((k+1) n^k)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowTrajectory, StepRecord, Termination};

/// Gamma function at a positive half-integer or integer `m / 2`, by exact recursion.
fn gamma_half(m: u32) -> f64 {
    assert!(m > 0);
    let (mut x, mut acc) = if m.is_multiple_of(2) {
        (1.0, 1.0)
    } else {
        (0.5, PI.sqrt())
    };
    let target = m as f64 / 2.0;
    while x < target {
        acc *= x;
        x += 1.0;
    }
    acc
}

/// Area of the unit n-sphere in R^{n+1}: `2 pi^{(n+1)/2} / Gamma((n+1)/2)`.
pub fn unit_sphere_area(n: usize) -> f64 {
    2.0 * PI.powf((n as f64 + 1.0) / 2.0) / gamma_half(n as u32 + 1)
}

/// Outcome of a space-time norm that may diverge at the singular time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum SpacetimeNorm {
    Finite(f64),
    Divergent,
}

impl SpacetimeNorm {
    pub fn finite(self) -> Option<f64> {
        match self {
            SpacetimeNorm::Finite(v) => Some(v),
            SpacetimeNorm::Divergent => None,
        }
    }

    pub fn is_divergent(self) -> bool {
        matches!(self, SpacetimeNorm::Divergent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereSolution {
    pub n: usize,
    pub k: u32,
    pub r0: f64,
}

impl SphereSolution {
    pub fn new(n: usize, k: u32, r0: f64) -> Result<Self> {
        if n < 2 || k < 1 || !(r0 > 0.0) || !r0.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sphere needs n >= 2, k >= 1, r0 > 0 (got {n}, {k}, {r0})"
            )));
        }
        Ok(Self { n, k, r0 })
    }

    fn rate(&self) -> f64 {
        (self.k as f64 + 1.0) * (self.n as f64).powi(self.k as i32)
    }

    pub fn t_max(&self) -> f64 {
        self.r0.powi(self.k as i32 + 1) / self.rate()
    }

    /// `r(t) = [r0^{k+1} - (k+1) n^k t]^{1/(k+1)}` for `0 <= t < T_max`.
    pub fn radius(&self, t: f64) -> Result<f64> {
        let t_max = self.t_max();
        if !(t >= 0.0) || t >= t_max {
            return Err(Error::TimeBeyondTmax { t, t_max });
        }
        Ok(self.radius_at_gap(t_max - t))
    }

    /// Radius as a function of the remaining time `T_max - t`, free of cancellation.
    pub fn radius_at_gap(&self, gap: f64) -> f64 {
        (self.rate() * gap).powf(1.0 / (self.k as f64 + 1.0))
    }

    pub fn mean_curvature(&self, t: f64) -> Result<f64> {
        Ok(self.n as f64 / self.radius(t)?)
    }

    pub fn area(&self, t: f64) -> Result<f64> {
        Ok(unit_sphere_area(self.n) * self.radius(t)?.powi(self.n as i32))
    }

    /// `H^{k+1} (T_max - t)`, constant along the flow.
    pub fn type_one_constant(&self) -> f64 {
        self.n as f64 / (self.k as f64 + 1.0)
    }

    /// `int_0^T int_{M_t} H^alpha dmu dt`, the alpha-th power of the space-time norm.
    pub fn spacetime_integral(&self, alpha: f64, t_end: f64) -> SpacetimeNorm {
        let t_max = self.t_max();
        if t_end >= t_max {
            return self.spacetime_integral_to_gap(alpha, 0.0);
        }
        self.spacetime_integral_to_gap(alpha, t_max - t_end)
    }

    /// Same integral truncated at `T_max - gap`.
    pub fn spacetime_integral_to_gap(&self, alpha: f64, gap: f64) -> SpacetimeNorm {
        let n = self.n as f64;
        let t_max = self.t_max();
        let gap = gap.clamp(0.0, t_max);
        // H^alpha |M_t| = n^alpha w_n r^{n - alpha}, r^{k+1} = rate (T_max - t)
        let e = (n - alpha) / (self.k as f64 + 1.0);
        let prefactor = n.powf(alpha) * unit_sphere_area(self.n) * self.rate().powf(e);
        let exponent = e + 1.0;
        if exponent.abs() < 1e-12 {
            if gap == 0.0 {
                return SpacetimeNorm::Divergent;
            }
            return SpacetimeNorm::Finite(prefactor * (t_max / gap).ln());
        }
        if exponent < 0.0 && gap == 0.0 {
            return SpacetimeNorm::Divergent;
        }
        SpacetimeNorm::Finite(prefactor * (t_max.powf(exponent) - gap.powf(exponent)) / exponent)
    }

    /// `(int_0^T int H^alpha)^{1/alpha}`.
    pub fn spacetime_norm(&self, alpha: f64, t_end: f64) -> SpacetimeNorm {
        match self.spacetime_integral(alpha, t_end) {
            SpacetimeNorm::Finite(v) => SpacetimeNorm::Finite(v.powf(1.0 / alpha)),
            SpacetimeNorm::Divergent => SpacetimeNorm::Divergent,
        }
    }

    /// The borderline exponent `n + k + 1` at which the full norm first diverges.
    pub fn critical_alpha(&self) -> f64 {
        (self.n + self.k as usize + 1) as f64
    }
}

/// Mesh-free trajectory sampled from the exact sphere: records only, no snapshots.
///
/// Sample times approach `T_max` geometrically from `t = 0` down to a remaining
/// time `final_gap`; the trajectory is tagged as stopped at the blow-up threshold.
pub fn synthetic_sphere_trajectory(
    sol: &SphereSolution,
    samples: usize,
    final_gap: f64,
    alphas: &[f64],
) -> Result<FlowTrajectory> {
    let t_max = sol.t_max();
    if samples < 2 || !(final_gap > 0.0 && final_gap < t_max) {
        return Err(Error::InvalidArgument(
            "need at least 2 samples and 0 < final_gap < T_max".into(),
        ));
    }
    let n = sol.n as f64;
    let ratio = (final_gap / t_max).ln() / (samples - 1) as f64;
    let mut records = Vec::with_capacity(samples);
    let mut prev = 0.0;
    for i in 0..samples {
        let gap = t_max * (ratio * i as f64).exp();
        let t = if i == 0 { 0.0 } else { t_max - gap };
        let r = sol.radius_at_gap(gap);
        let h = n / r;
        let accumulators = alphas
            .iter()
            .map(|&a| {
                sol.spacetime_integral_to_gap(a, gap)
                    .finite()
                    .unwrap_or(f64::INFINITY)
            })
            .collect();
        records.push(StepRecord {
            time: t,
            dt: t - prev,
            min_h: h,
            max_h: h,
            max_h_pow: h.powi(sol.k as i32 + 1),
            argmax_vertex: 0,
            min_principal: 1.0 / r,
            area: unit_sphere_area(sol.n) * r.powi(sol.n as i32),
            mean_radius: r,
            quality: 1.0,
            accumulators,
        });
        prev = t;
    }
    Ok(FlowTrajectory {
        n: sol.n,
        k: sol.k,
        alphas: alphas.to_vec(),
        states: Vec::new(),
        records,
        termination: Termination::BlowupThreshold,
    })
}

/// Parameters of `F~(., t) = Q^beta F(., t / Q^gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaleParams {
    pub q: f64,
    pub beta: f64,
    pub gamma_exp: f64,
}

impl RescaleParams {
    pub fn new(q: f64, beta: f64, gamma_exp: f64) -> Result<Self> {
        if !(q > 0.0) || !(beta > 0.0) || !(gamma_exp > 0.0) {
            return Err(Error::InvalidArgument(
                "rescaling needs Q, beta, gamma > 0".into(),
            ));
        }
        Ok(Self { q, beta, gamma_exp })
    }

    /// The choice `gamma = beta (k + 1)` that leaves `||H||_{L^{n+k+1}}` invariant.
    pub fn norm_preserving(q: f64, beta: f64, k: u32) -> Result<Self> {
        Self::new(q, beta, beta * (k as f64 + 1.0))
    }

    pub fn space_factor(&self) -> f64 {
        self.q.powf(self.beta)
    }

    pub fn time_factor(&self) -> f64 {
        self.q.powf(self.gamma_exp)
    }
}

/// Applies the rescaling to every snapshot, record and accumulator of a trajectory.
///
/// Positions scale by `Q^beta`, times by `Q^gamma`, curvatures by `Q^-beta`,
/// and `int int H^alpha` by `Q^{beta (n - alpha) + gamma}`.
pub fn rescale_trajectory(
    traj: &FlowTrajectory,
    params: &RescaleParams,
    k: u32,
) -> Result<FlowTrajectory> {
    if traj.records.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let s = params.space_factor();
    let tf = params.time_factor();
    let n = traj.n as f64;
    let mut out = traj.clone();
    out.k = k;
    for state in out.states.iter_mut() {
        state.time *= tf;
        state.mesh = state.mesh.scaled(s);
        state.cache = state.cache.scaled(s);
    }
    for rec in out.records.iter_mut() {
        rec.time *= tf;
        rec.dt *= tf;
        rec.min_h /= s;
        rec.max_h /= s;
        rec.max_h_pow /= s.powi(k as i32 + 1);
        rec.min_principal /= s;
        rec.area *= s.powf(n);
        rec.mean_radius *= s;
        for (acc, alpha) in rec.accumulators.iter_mut().zip(&traj.alphas) {
            *acc *= params.q.powf(params.beta * (n - alpha) + params.gamma_exp);
        }
    }
    Ok(out)
}

/// `|f(x) - Q^{k beta} f(x / Q^beta)|` for an arbitrary speed function.
pub fn functional_equation_residual_with(
    f: impl Fn(f64) -> f64,
    k: u32,
    beta: f64,
    q: f64,
    x: f64,
) -> f64 {
    (f(x) - q.powf(k as f64 * beta) * f(x / q.powf(beta))).abs()
}

/// Residual of the scaling equation for `f(x) = x^k`; zero up to rounding.
pub fn functional_equation_residual(k: u32, beta: f64, q: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) || !(q > 0.0) {
        return Err(Error::InvalidArgument(
            "functional equation needs x > 0 and Q > 0".into(),
        ));
    }
    Ok(functional_equation_residual_with(
        |y| y.powi(k as i32),
        k,
        beta,
        q,
        x,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unit_sphere_areas() {
        assert_relative_eq!(unit_sphere_area(1), 2.0 * PI, max_relative = 1e-15);
        assert_relative_eq!(unit_sphere_area(2), 4.0 * PI, max_relative = 1e-15);
        assert_relative_eq!(unit_sphere_area(3), 2.0 * PI * PI, max_relative = 1e-15);
        assert_relative_eq!(
            unit_sphere_area(4),
            8.0 * PI * PI / 3.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn radius_examples() {
        let s = SphereSolution::new(2, 2, 1.0).unwrap();
        assert_eq!(s.radius(0.0).unwrap(), 1.0);
        assert_relative_eq!(s.t_max(), 1.0 / 12.0, max_relative = 1e-15);
        assert_relative_eq!(
            s.radius(1.0 / 24.0).unwrap(),
            0.5f64.powf(1.0 / 3.0),
            max_relative = 1e-14
        );
        assert!(matches!(
            s.radius(s.t_max()),
            Err(Error::TimeBeyondTmax { .. })
        ));
        assert!(s.radius(-1.0).is_err());
    }

    #[test]
    fn sphere_ode_and_h_evolution() {
        for (n, k) in [(2, 1), (2, 2), (3, 2), (4, 3)] {
            let s = SphereSolution::new(n, k, 1.3).unwrap();
            let h = 1e-6 * s.t_max();
            for frac in [0.1, 0.4, 0.7] {
                let t = frac * s.t_max();
                let r = s.radius(t).unwrap();
                let dr = (s.radius(t + h).unwrap() - s.radius(t - h).unwrap()) / (2.0 * h);
                let expect = -(n as f64).powi(k as i32) / r.powi(k as i32);
                assert!((dr - expect).abs() < 1e-8 * expect.abs().max(1.0));
                let hc = s.mean_curvature(t).unwrap();
                let dh = (s.mean_curvature(t + h).unwrap() - s.mean_curvature(t - h).unwrap())
                    / (2.0 * h);
                let expect = hc.powi(k as i32 + 2) / n as f64;
                assert!((dh - expect).abs() / expect < 1e-6);
            }
        }
    }

    #[test]
    fn t_max_scaling() {
        for k in 1..4 {
            let a = SphereSolution::new(2, k, 1.0).unwrap().t_max();
            let b = SphereSolution::new(2, k, 2.0).unwrap().t_max();
            assert_relative_eq!(b / a, 2f64.powi(k as i32 + 1), max_relative = 1e-14);
        }
    }

    #[test]
    fn spacetime_norm_examples() {
        let s = SphereSolution::new(2, 2, 1.0).unwrap();
        let v = s.spacetime_integral(4.0, s.t_max()).finite().unwrap();
        assert_relative_eq!(v, 16.0 * PI, max_relative = 1e-12);
        assert!(s.spacetime_norm(5.0, s.t_max()).is_divergent());
        assert!(s.spacetime_norm(6.0, s.t_max()).is_divergent());
        let eps = 1e-6;
        let v = s.spacetime_integral_to_gap(5.0, eps).finite().unwrap();
        assert_relative_eq!(
            v,
            128.0 * PI / 12.0 * (s.t_max() / eps).ln(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn truncated_integral_matches_quadrature() {
        // midpoint rule on int_0^T 64 pi r(t)^{-2} dt
        let s = SphereSolution::new(2, 2, 1.0).unwrap();
        let t_end = 0.05;
        let steps = 200_000;
        let h = t_end / steps as f64;
        let quad: f64 = (0..steps)
            .map(|i| {
                let t = (i as f64 + 0.5) * h;
                64.0 * PI / s.radius(t).unwrap().powi(2) * h
            })
            .sum();
        let closed = s.spacetime_integral(4.0, t_end).finite().unwrap();
        assert_relative_eq!(quad, closed, max_relative = 1e-8);
    }

    #[test]
    fn spacetime_norm_monotone() {
        let s = SphereSolution::new(2, 2, 1.0).unwrap();
        let mut prev = 0.0;
        for i in 1..50 {
            let t = s.t_max() * i as f64 / 50.0;
            let v = s.spacetime_norm(4.5, t).finite().unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn functional_equation() {
        assert!(functional_equation_residual(2, 1.0, 3.0, 5.0).unwrap() < 1e-13);
        assert!(functional_equation_residual(3, 0.7, 10.0, 2.0).unwrap() < 1e-12 * 8.0);
        let r = functional_equation_residual_with(|x| x * x + 1.0, 2, 1.0, 2.0, 2.0);
        assert_relative_eq!(r, 3.0, max_relative = 1e-15);
    }
}
