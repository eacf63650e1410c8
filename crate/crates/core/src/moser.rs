//! Energy estimate, Moser iteration and the resulting curvature sup bound
//! for the H^k flow, with every constant evaluated explicitly.
//!
//! All checks use time-only cutoffs, so the `Delta eta` and `|grad eta|^2`
//! terms of the energy estimate vanish and only `eta^2 + 2 eta eta'` remains.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowParams, FlowTrajectory};
use crate::geometry::{laplacian, lp_integral, vertex_gradient_sq, ScalarField};
use crate::report::InequalityReport;
use crate::sobolev::compute_constants;
use crate::stats::trapezoid;

/// Measured or user-supplied inputs of the Moser constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoserInput {
    pub n: usize,
    pub k: u32,
    pub t: f64,
    pub volume: f64,
    /// `||f'(v) G||_{L^infty}`.
    pub c0_inf: f64,
    /// `||f'(v) G||_{L^q}`; defaults to `c0_inf` when absent.
    pub c0_q: Option<f64>,
    /// `||H||^{n+k+1}_{L^{n+k+1}(M x [0,T])}`.
    pub h_norm_accum: f64,
    /// Lower bound on `f'(v)`.
    pub c2: f64,
    /// Integrability exponent of `G`; `None` means infinity.
    pub q: Option<f64>,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoserConstants {
    pub input: MoserInput,
    pub gamma: f64,
    pub c1: f64,
    /// `gamma / ((gamma - 2) q - gamma)`; zero for `q = infinity`.
    pub nu_q: f64,
    pub b: f64,
    pub b_tilde: f64,
    /// Energy-estimate constant at the given `q` and `beta`.
    pub c_full: f64,
    pub d: f64,
    /// Cutoff slope constant `max(1, 1/T)`.
    pub c_n: f64,
    pub e_of_beta: f64,
    /// Sup-bound constant at `beta = (n+k+1)/k`.
    pub f_final: f64,
}

pub fn compute_moser_constants(input: MoserInput) -> Result<MoserConstants> {
    let MoserInput {
        n,
        k,
        t,
        volume,
        c0_inf,
        c0_q,
        h_norm_accum,
        c2,
        q,
        beta,
    } = input;
    if n < 2 || k < 2 {
        return Err(Error::HypothesisViolated(format!(
            "need n, k >= 2; got n = {n}, k = {k}"
        )));
    }
    if !(beta >= 2.0) {
        return Err(Error::BetaTooSmall { beta });
    }
    let (nf, kf) = (n as f64, k as f64);
    let beta_sup = (nf + kf + 1.0) / kf;
    if beta_sup < 2.0 {
        return Err(Error::HypothesisViolated(format!(
            "sup bound needs n + 1 >= k: beta = (n+k+1)/k = {beta_sup} < 2"
        )));
    }
    if !(c2 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "C2 must be positive, got {c2}"
        )));
    }
    if !(c0_inf >= 0.0) || !(h_norm_accum >= 0.0) {
        return Err(Error::InvalidArgument(
            "C0 and the H norm must be nonnegative".into(),
        ));
    }
    let sob = compute_constants(n, k, volume, t)?;
    let gamma = sob.gamma;
    let nu_q = match q {
        None => 0.0,
        Some(q) => {
            let bound = gamma / (gamma - 2.0);
            if !(q > bound) {
                return Err(Error::ExponentOutOfRange { q, bound });
            }
            gamma / ((gamma - 2.0) * q - gamma)
        }
    };
    let c1 = (1.0 + h_norm_accum).powf(1.0 / kf);
    let b = sob.b_nkt;
    let b_tilde = b * (1.0 / c2).powf((kf + 1.0) / (2.0 * kf)).max(1.0);
    let c_full = energy_constant(beta, gamma, b_tilde, c1, c0_q.unwrap_or(c0_inf), q);
    let d = 8.0 * c0_inf.max(1.0) * b_tilde.powf(2.0 / gamma);
    let c_n = (1.0 / t).max(1.0);
    let e_of_beta = e_function(d, c_n, gamma, beta);
    let f_final = e_function(d, c_n, gamma, beta_sup).powf(1.0 / kf)
        * (1.0 + h_norm_accum).powf(2.0 / (gamma - 2.0) / (nf + kf + 1.0));
    Ok(MoserConstants {
        input,
        gamma,
        c1,
        nu_q,
        b,
        b_tilde,
        c_full,
        d,
        c_n,
        e_of_beta,
        f_final,
    })
}

/// The energy-estimate constant; `q = None` gives the `q = infinity` form.
pub fn energy_constant(
    beta: f64,
    gamma: f64,
    b_tilde: f64,
    c1: f64,
    c0: f64,
    q: Option<f64>,
) -> f64 {
    let x = (b_tilde * c1).powf(2.0 / gamma);
    match q {
        None => 2.0 * beta / (beta - 1.0) * (c0 * beta * beta / (beta - 1.0)).max(1.0) * x,
        Some(q) => {
            let nu = gamma / ((gamma - 2.0) * q - gamma);
            beta / (beta - 1.0)
                * (2.0 * x).max((2.0 * c0 * beta * beta / (beta - 1.0) * x).powf(1.0 + nu))
        }
    }
}

/// `E(beta) = (D C_n beta)^{(1/beta) gamma/(gamma-2)} (gamma/2)^{(1/beta) 2gamma/(gamma-2)^2} 4^{(1/beta) gamma^2/(gamma-2)^2}`.
pub fn e_function(d: f64, c_n: f64, gamma: f64, beta: f64) -> f64 {
    let g2 = gamma - 2.0;
    (d * c_n * beta).powf(gamma / g2 / beta)
        * (gamma / 2.0).powf(2.0 * gamma / (g2 * g2) / beta)
        * 4f64.powf(gamma * gamma / (g2 * g2) / beta)
}

impl MoserConstants {
    pub fn e_of(&self, beta: f64) -> f64 {
        e_function(self.d, self.c_n, self.gamma, beta)
    }

    /// Bound on `||w||_{beta ghat^m, I_m}` in units of `||w||_{beta, I_0}`, `ghat = gamma/2`.
    pub fn iterate_factor(&self, beta: f64, m: usize) -> f64 {
        let g = self.gamma / 2.0;
        let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..=m {
            let w = g.powi(-(i as i32));
            let fi = i as f64;
            if i < m {
                s0 += w;
                s2 += fi * w;
            }
            if i >= 1 {
                s1 += w;
            }
            s3 += fi * w;
        }
        let c = self.d * self.c_n;
        (c * beta).powf(s0 / beta)
            * self.c1.powf(s1 / beta)
            * g.powf(s2 / beta)
            * 4f64.powf(g * s3 / beta)
    }
}

/// A time-only cutoff: zero, or a cubic smoothstep from 0 at `start` to 1 at `end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TimeCutoff {
    Zero,
    Ramp { start: f64, end: f64 },
}

impl TimeCutoff {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            TimeCutoff::Zero => 0.0,
            TimeCutoff::Ramp { start, end } => {
                let s = ((t - start) / (end - start)).clamp(0.0, 1.0);
                s * s * (3.0 - 2.0 * s)
            }
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            TimeCutoff::Zero => 0.0,
            TimeCutoff::Ramp { start, end } => {
                if t <= start || t >= end {
                    return 0.0;
                }
                let s = (t - start) / (end - start);
                6.0 * s * (1.0 - s) / (end - start)
            }
        }
    }

    /// `max |eta'|`, attained at the ramp midpoint.
    pub fn max_slope(&self) -> f64 {
        match *self {
            TimeCutoff::Zero => 0.0,
            TimeCutoff::Ramp { start, end } => 1.5 / (end - start),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffSchedule {
    pub t: f64,
    /// `t_0, ..., t_{i_max}` with `t_i = (T/2)(1 - 4^{-i})`.
    pub times: Vec<f64>,
    /// `cutoffs[i - 1]` ramps on `[t_{i-1}, t_i]`.
    pub cutoffs: Vec<TimeCutoff>,
    pub slope_bound: f64,
}

impl CutoffSchedule {
    pub fn cutoff(&self, i: usize) -> Option<TimeCutoff> {
        if i == 0 {
            return None;
        }
        self.cutoffs.get(i - 1).copied()
    }
}

pub fn cutoff_schedule(t: f64, i_max: usize) -> Result<CutoffSchedule> {
    if !(t > 0.0) || i_max < 1 {
        return Err(Error::InvalidArgument(
            "cutoff schedule needs T > 0 and i_max >= 1".into(),
        ));
    }
    let times: Vec<f64> = (0..=i_max)
        .map(|i| t / 2.0 * (1.0 - 4f64.powi(-(i as i32))))
        .collect();
    let cutoffs = times
        .windows(2)
        .map(|w| TimeCutoff::Ramp {
            start: w[0],
            end: w[1],
        })
        .collect();
    Ok(CutoffSchedule {
        t,
        times,
        cutoffs,
        slope_bound: (1.0 / t).max(1.0),
    })
}

/// Integral over `[a, b]` of a piecewise-linear interpolant of `(xs, ys)`.
fn window_integral(xs: &[f64], ys: &[f64], a: f64, b: f64) -> f64 {
    let interp = |x: f64| {
        let j = xs.partition_point(|&t| t < x).clamp(1, xs.len() - 1);
        let (x0, x1) = (xs[j - 1], xs[j]);
        ys[j - 1] + (ys[j] - ys[j - 1]) * (x - x0) / (x1 - x0)
    };
    let mut px = vec![a];
    let mut py = vec![interp(a)];
    for (x, y) in xs.iter().zip(ys) {
        if *x > a && *x < b {
            px.push(*x);
            py.push(*y);
        }
    }
    px.push(b);
    py.push(interp(b));
    trapezoid(&px, &py)
}

/// Trajectory-wide quantities shared by the Moser checks, measured with `v = H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeasures {
    pub t: f64,
    pub volume: f64,
    pub min_h: f64,
    /// `k (min H)^{k-1}`.
    pub c2: f64,
    /// `sup k H^{k-1} |A|^2`.
    pub c0_inf: f64,
    /// `||H||^{n+k+1}_{L^{n+k+1}(M x [0,T])}`.
    pub h_norm_accum: f64,
}

pub fn measure_trajectory(traj: &FlowTrajectory, k: u32) -> Result<TrajectoryMeasures> {
    if traj.states.len() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "{} snapshots, at least 2 needed",
            traj.states.len()
        )));
    }
    for w in traj.states.windows(2) {
        if w[1].cache.total_area() > w[0].cache.total_area() * (1.0 + 1e-12) {
            return Err(Error::HypothesisViolated(format!(
                "area increased at t = {}",
                w[1].time
            )));
        }
    }
    let kf = k as f64;
    let alpha = traj.n as f64 + kf + 1.0;
    let mut min_h = f64::INFINITY;
    let mut c0_inf = 0.0f64;
    for s in &traj.states {
        for (h, a2) in s
            .cache
            .mean_curvature
            .iter()
            .zip(&s.cache.second_fund_norm_sq)
        {
            min_h = min_h.min(*h);
            c0_inf = c0_inf.max(kf * h.powi(k as i32 - 1) * a2);
        }
    }
    if !(min_h > 0.0) {
        return Err(Error::HypothesisViolated(format!(
            "min H = {min_h} is not positive along the run"
        )));
    }
    let t0 = traj.states[0].time;
    let t_end = traj.states[traj.states.len() - 1].time;
    // the per-step accumulator is more accurate than snapshot quadrature
    let h_norm_accum = match (traj.accumulated(alpha), traj.records.last()) {
        (Some(v), Some(r)) if r.time == t_end => v,
        _ => {
            let times: Vec<f64> = traj.states.iter().map(|s| s.time).collect();
            let vals: Vec<f64> = traj
                .states
                .iter()
                .map(|s| lp_integral(&s.cache, &s.cache.mean_curvature_field(), alpha))
                .collect();
            trapezoid(&times, &vals)
        }
    };
    Ok(TrajectoryMeasures {
        t: t_end - t0,
        volume: traj.states[0].cache.total_area(),
        min_h,
        c2: kf * min_h.powi(k as i32 - 1),
        c0_inf,
        h_norm_accum,
    })
}

fn constants_for(
    traj: &FlowTrajectory,
    k: u32,
    beta: f64,
) -> Result<(TrajectoryMeasures, MoserConstants)> {
    let m = measure_trajectory(traj, k)?;
    let c = compute_moser_constants(MoserInput {
        n: traj.n,
        k,
        t: m.t,
        volume: m.volume,
        c0_inf: m.c0_inf,
        c0_q: None,
        h_norm_accum: m.h_norm_accum,
        c2: m.c2,
        q: None,
        beta,
    })?;
    Ok((m, c))
}

/// `||eta^2 f^beta(v)||_{L^{gamma/2}} <= C ||f^beta(v) (eta^2 + 2 eta eta')||_{L^1}` with `f = x^k`.
/// The constant uses `G = |A|^2`, which is the right choice for `v = H`.
pub fn energy_estimate_check(
    traj: &FlowTrajectory,
    v_fields: &[ScalarField],
    k: u32,
    beta: f64,
    eta: TimeCutoff,
) -> Result<InequalityReport> {
    if v_fields.len() != traj.states.len() {
        return Err(Error::InvalidArgument(
            "one field per snapshot required".into(),
        ));
    }
    for v in v_fields {
        v.require_nonnegative()?;
    }
    let (meas, c) = constants_for(traj, k, beta)?;
    let t0 = traj.states[0].time;
    if eta.value(t0) != 0.0 {
        return Err(Error::InvalidArgument(
            "cutoff must vanish at the initial time".into(),
        ));
    }
    let kf = k as f64;
    let times: Vec<f64> = traj.states.iter().map(|s| s.time - t0).collect();
    let mut lhs_t = Vec::with_capacity(times.len());
    let mut rhs_t = Vec::with_capacity(times.len());
    for ((s, v), &t) in traj.states.iter().zip(v_fields).zip(&times) {
        let (e, de) = (eta.value(t), eta.derivative(t));
        let fb = v.map(|x| x.powf(kf * beta));
        lhs_t.push(lp_integral(&s.cache, &fb.map(|y| e * e * y), c.gamma / 2.0));
        rhs_t.push(lp_integral(
            &s.cache,
            &fb.map(|y| y * (e * e + 2.0 * e * de)),
            1.0,
        ));
    }
    let lhs = trapezoid(&times, &lhs_t).powf(2.0 / c.gamma);
    let bracket = trapezoid(&times, &rhs_t);
    Ok(
        InequalityReport::new("energy_estimate", lhs, c.c_full * bracket)
            .constant("C", c.c_full)
            .constant("B_tilde", c.b_tilde)
            .constant("C1", c.c1)
            .constant("C2", meas.c2)
            .constant("C0_inf", meas.c0_inf)
            .constant("gamma", c.gamma)
            .constant("beta", beta)
            .factor("bracket_l1", bracket),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateEntry {
    pub m: usize,
    pub exponent: f64,
    pub window_start: f64,
    pub norm: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateReport {
    pub beta0: f64,
    pub entries: Vec<IterateEntry>,
    /// `sup H^k` over snapshots in `[T/2, T]`.
    pub sup_measured: f64,
    pub constants: MoserConstants,
    pub holds: bool,
}

/// Space-time norms `||H^k||_{beta0 ghat^m, [t_m, T]}` for `m = 0..=m_max`,
/// each with its iteration bound.
pub fn iterate_norms(
    traj: &FlowTrajectory,
    k: u32,
    beta0: f64,
    m_max: usize,
) -> Result<IterateReport> {
    let fields: Vec<ScalarField> = traj
        .states
        .iter()
        .map(|s| s.cache.mean_curvature_field())
        .collect();
    iterate_norms_of(traj, &fields, k, beta0, m_max)
}

/// As [`iterate_norms`] with `w = v^k` for arbitrary nonnegative snapshot fields `v`.
pub fn iterate_norms_of(
    traj: &FlowTrajectory,
    v_fields: &[ScalarField],
    k: u32,
    beta0: f64,
    m_max: usize,
) -> Result<IterateReport> {
    if traj.states.len() < 3 {
        return Err(Error::InsufficientSamples(format!(
            "{} snapshots, at least 3 needed",
            traj.states.len()
        )));
    }
    if v_fields.len() != traj.states.len() {
        return Err(Error::InvalidArgument(
            "one field per snapshot required".into(),
        ));
    }
    let (_, c) = constants_for(traj, k, beta0)?;
    let t0 = traj.states[0].time;
    let times: Vec<f64> = traj.states.iter().map(|s| s.time - t0).collect();
    let t_end = *times.last().unwrap();
    let schedule_times: Vec<f64> = (0..=m_max)
        .map(|i| t_end / 2.0 * (1.0 - 4f64.powi(-(i as i32))))
        .collect();
    let kf = k as f64;
    let ws: Vec<ScalarField> = v_fields
        .iter()
        .map(|v| v.map(|x| x.max(0.0).powf(kf)))
        .collect();
    let g = c.gamma / 2.0;
    let mut entries = Vec::with_capacity(m_max + 1);
    let mut base = 0.0;
    for (m, &start) in schedule_times.iter().enumerate() {
        let p = beta0 * g.powi(m as i32);
        let vals: Vec<f64> = traj
            .states
            .iter()
            .zip(&ws)
            .map(|(s, w)| lp_integral(&s.cache, w, p))
            .collect();
        let norm = window_integral(&times, &vals, start, t_end).powf(1.0 / p);
        if m == 0 {
            base = norm;
        }
        entries.push(IterateEntry {
            m,
            exponent: p,
            window_start: start,
            norm,
            bound: c.iterate_factor(beta0, m) * base,
        });
    }
    let sup_measured = traj
        .states
        .iter()
        .zip(&ws)
        .zip(&times)
        .filter(|(_, &t)| t >= t_end / 2.0)
        .flat_map(|((_, w), _)| w.values.iter().copied())
        .fold(0.0, f64::max);
    let holds = entries
        .iter()
        .all(|e| e.norm <= e.bound * (1.0 + crate::report::ROUNDING_SLACK));
    Ok(IterateReport {
        beta0,
        entries,
        sup_measured,
        constants: c,
        holds,
    })
}

/// `||H||_{L^infty(M x [T/2, T])} <= F ||H||_{L^{n+k+1}(M x [0,T])}`.
pub fn sup_bound_check(traj: &FlowTrajectory, k: u32) -> Result<InequalityReport> {
    let (nf, kf) = (traj.n as f64, k as f64);
    let beta = (nf + kf + 1.0) / kf;
    if beta < 2.0 {
        return Err(Error::HypothesisViolated(format!(
            "beta = (n+k+1)/k = {beta} < 2 (needs n + 1 >= k)"
        )));
    }
    let (meas, c) = constants_for(traj, k, beta)?;
    if !meas.c0_inf.is_finite() {
        return Err(Error::HypothesisViolated(
            "k H^{k-1} |A|^2 is unbounded".into(),
        ));
    }
    let t0 = traj.states[0].time;
    let lhs = traj
        .states
        .iter()
        .filter(|s| s.time - t0 >= meas.t / 2.0)
        .map(|s| s.cache.max_mean_curvature())
        .fold(0.0, f64::max);
    let h_norm = meas.h_norm_accum.powf(1.0 / (nf + kf + 1.0));
    Ok(InequalityReport::new("sup_bound", lhs, c.f_final * h_norm)
        .constant("F", c.f_final)
        .constant("E", c.e_of(beta))
        .constant("C2", meas.c2)
        .constant("C0_inf", meas.c0_inf)
        .constant("beta", beta)
        .factor("h_spacetime_norm", h_norm)
        .factor("min_h", meas.min_h))
}

/// Relative size of the positive part of
/// `(d/dt - f'(H) Delta) H - f(H)|A|^2 - f''(H)|grad H|^2` over interior snapshots.
pub fn differential_inequality_excess(traj: &FlowTrajectory, params: &FlowParams) -> Result<f64> {
    if traj.states.len() < 3 {
        return Err(Error::InsufficientSamples(
            "at least 3 snapshots needed".into(),
        ));
    }
    let f = &params.speed;
    let (mut excess, mut scale) = (0.0, 0.0);
    for w in traj.states.windows(3) {
        let (a, b, c) = (&w[0], &w[1], &w[2]);
        let (h0, h1) = (b.time - a.time, c.time - b.time);
        let cw = [
            -h1 / (h0 * (h0 + h1)),
            (h1 - h0) / (h0 * h1),
            h0 / (h1 * (h0 + h1)),
        ];
        let hf = b.cache.mean_curvature_field();
        let lap = laplacian(&b.mesh, &b.cache, &hf);
        let grad = vertex_gradient_sq(&b.mesh, &b.cache, &hf);
        for v in 0..b.mesh.vertex_count() {
            let h = hf.values[v];
            let dh =
                cw[0] * a.cache.mean_curvature[v] + cw[1] * h + cw[2] * c.cache.mean_curvature[v];
            let reaction =
                f.value(h) * b.cache.second_fund_norm_sq[v] + f.second_derivative(h) * grad[v];
            let residual = dh - f.derivative(h) * lap[v] - reaction;
            let mu = b.cache.area_weights[v];
            excess += residual.max(0.0) * mu;
            scale += dh.abs() * mu;
        }
    }
    Ok(if scale > 0.0 { excess / scale } else { 0.0 })
}
