//! Explicit time integration of `dF/dt = -f(H) nu`.
//!
//! Each step moves every vertex along its normal with speed `f(H)` and then
//! rebuilds the geometry. The step size follows the parabolic stability limit
//! `dt = safety * h_min^2 / max f'(H)`. There is no remeshing: a run stops
//! when triangle quality drops below the configured floor.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{build_geometry, laplacian, vertex_gradient_sq, GeometryCache, ScalarField};
use crate::mesh::{Hypersurface, Vec3};
use crate::stats::linear_fit;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The speed function `f` together with its first two derivatives.
#[derive(Clone)]
pub enum SpeedFunction {
    /// `f(x) = x^k`.
    Power(u32),
    Custom {
        f: ScalarFn,
        df: ScalarFn,
        d2f: ScalarFn,
    },
}

impl fmt::Debug for SpeedFunction {
    fn fmt(&self, fmt: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpeedFunction::Power(k) => write!(fmt, "Power({k})"),
            SpeedFunction::Custom { .. } => write!(fmt, "Custom"),
        }
    }
}

impl SpeedFunction {
    pub fn custom(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        SpeedFunction::Custom {
            f: Arc::new(f),
            df: Arc::new(df),
            d2f: Arc::new(d2f),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            SpeedFunction::Power(k) => x.powi(*k as i32),
            SpeedFunction::Custom { f, .. } => f(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            SpeedFunction::Power(0) => 0.0,
            SpeedFunction::Power(k) => *k as f64 * x.powi(*k as i32 - 1),
            SpeedFunction::Custom { df, .. } => df(x),
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match self {
            SpeedFunction::Power(k) if *k < 2 => 0.0,
            SpeedFunction::Power(k) => (*k as f64) * (*k as f64 - 1.0) * x.powi(*k as i32 - 2),
            SpeedFunction::Custom { d2f, .. } => d2f(x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowParams {
    pub k: u32,
    pub speed: SpeedFunction,
    /// Fraction of the parabolic stability limit, in (0, 1].
    pub dt_safety: f64,
    pub dt_min: f64,
    pub stop_t: Option<f64>,
    /// Stop once `max H^{k+1}` exceeds this value.
    pub blowup_threshold: Option<f64>,
    /// Minimum admissible triangle quality (see [`Hypersurface::min_triangle_quality`]).
    pub quality_floor: f64,
    /// Keep every `snapshot_stride`-th state; the first and last are always kept.
    pub snapshot_stride: usize,
}

impl FlowParams {
    /// H^k flow with the default numerical settings.
    pub fn power(k: u32) -> Self {
        Self {
            k,
            speed: SpeedFunction::Power(k),
            dt_safety: 0.2,
            dt_min: 1e-16,
            stop_t: None,
            blowup_threshold: None,
            quality_floor: 0.1,
            snapshot_stride: 1,
        }
    }

    pub fn with_stop_t(mut self, t: f64) -> Self {
        self.stop_t = Some(t);
        self
    }

    pub fn with_blowup_threshold(mut self, q: f64) -> Self {
        self.blowup_threshold = Some(q);
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.snapshot_stride = stride.max(1);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt_safety > 0.0 && self.dt_safety <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "dt_safety must lie in (0, 1], got {}",
                self.dt_safety
            )));
        }
        if !(self.dt_min > 0.0) {
            return Err(Error::InvalidArgument("dt_min must be positive".into()));
        }
        if self.k < 1 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub time: f64,
    pub mesh: Hypersurface,
    pub cache: GeometryCache,
}

impl FlowState {
    pub fn new(mesh: Hypersurface, time: f64) -> Result<Self> {
        let cache = build_geometry(&mesh)?;
        Ok(Self { time, mesh, cache })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    #[serde(rename = "reached_T")]
    ReachedT,
    BlowupThreshold,
    DtUnderflow,
    QualityFailure,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::ReachedT => "reached_T",
            Termination::BlowupThreshold => "blowup_threshold",
            Termination::DtUnderflow => "dt_underflow",
            Termination::QualityFailure => "quality_failure",
        }
    }
}

/// Scalar summary of one accepted step (or of the initial state, with `dt = 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub time: f64,
    pub dt: f64,
    pub min_h: f64,
    pub max_h: f64,
    /// `max_v H^{k+1}`.
    pub max_h_pow: f64,
    pub argmax_vertex: usize,
    pub min_principal: f64,
    pub area: f64,
    pub mean_radius: f64,
    pub quality: f64,
    /// Running `int_0^t int H^alpha dmu dt`, one entry per configured alpha.
    pub accumulators: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    /// Intrinsic dimension of the evolving surface.
    pub n: usize,
    pub k: u32,
    pub alphas: Vec<f64>,
    pub states: Vec<FlowState>,
    pub records: Vec<StepRecord>,
    pub termination: Termination,
}

impl FlowTrajectory {
    pub fn final_time(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.time)
    }

    pub fn start_time(&self) -> f64 {
        self.records.first().map_or(0.0, |r| r.time)
    }

    /// Final value of the running `int int H^alpha` for a configured alpha.
    pub fn accumulated(&self, alpha: f64) -> Option<f64> {
        let i = self.alphas.iter().position(|a| (a - alpha).abs() < 1e-12)?;
        self.records.last().map(|r| r.accumulators[i])
    }

    pub fn accumulator_series(&self, alpha: f64) -> Option<Vec<(f64, f64)>> {
        let i = self.alphas.iter().position(|a| (a - alpha).abs() < 1e-12)?;
        Some(
            self.records
                .iter()
                .map(|r| (r.time, r.accumulators[i]))
                .collect(),
        )
    }

    /// Largest `max H^{k+1}` over all records.
    pub fn peak_h_pow(&self) -> f64 {
        self.records.iter().map(|r| r.max_h_pow).fold(0.0, f64::max)
    }

    /// Snapshots with time in `[t0, t1]`.
    pub fn states_in(&self, t0: f64, t1: f64) -> impl Iterator<Item = &FlowState> {
        self.states
            .iter()
            .filter(move |s| s.time >= t0 && s.time <= t1)
    }
}

fn record_for(state: &FlowState, k: u32, dt: f64, accumulators: Vec<f64>) -> StepRecord {
    let cache = &state.cache;
    let (argmax_vertex, max_h) = cache.argmax_mean_curvature();
    let center = state.mesh.centroid();
    StepRecord {
        time: state.time,
        dt,
        min_h: cache.min_mean_curvature(),
        max_h,
        max_h_pow: max_h.max(0.0).powi(k as i32 + 1),
        argmax_vertex,
        min_principal: crate::geometry::pinching_minimum(cache),
        area: cache.total_area(),
        mean_radius: state.mesh.mean_radius(&center),
        quality: state.mesh.min_triangle_quality(),
        accumulators,
    }
}

fn h_power_integral(cache: &GeometryCache, alpha: f64) -> f64 {
    cache
        .mean_curvature
        .iter()
        .zip(&cache.area_weights)
        .map(|(h, w)| h.abs().powf(alpha) * w)
        .sum()
}

fn check_gates(state: &FlowState, params: &FlowParams) -> Result<()> {
    let cache = &state.cache;
    if matches!(params.speed, SpeedFunction::Power(k) if k >= 2) {
        let min_h = cache.min_mean_curvature();
        if !(min_h > 0.0) {
            return Err(Error::NotMeanConvex { min_h });
        }
    }
    for (vertex, &h) in cache.mean_curvature.iter().enumerate() {
        let derivative = params.speed.derivative(h);
        if !(derivative > 0.0) {
            return Err(Error::ParabolicityLost { vertex, derivative });
        }
    }
    Ok(())
}

/// Largest stable step: `dt_safety * h_min^2 / max f'(H)`.
pub fn stable_dt(state: &FlowState, params: &FlowParams) -> f64 {
    let h_min = state.mesh.min_edge_length();
    let max_df = state
        .cache
        .mean_curvature
        .iter()
        .map(|&h| params.speed.derivative(h))
        .fold(0.0, f64::max);
    params.dt_safety * h_min * h_min / max_df
}

/// Forward Euler step with an explicit time step.
pub fn step_by(state: &FlowState, params: &FlowParams, dt: f64) -> Result<FlowState> {
    check_gates(state, params)?;
    let positions: Vec<Vec3> = state
        .mesh
        .vertices()
        .iter()
        .zip(&state.cache.normals)
        .zip(&state.cache.mean_curvature)
        .map(|((p, nu), &h)| p - nu * (dt * params.speed.value(h)))
        .collect();
    let mesh = state.mesh.with_positions(positions)?;
    FlowState::new(mesh, state.time + dt)
}

/// One adaptive forward Euler step, clipped so that it never passes `stop_t`.
pub fn step(state: &FlowState, params: &FlowParams) -> Result<FlowState> {
    params.validate()?;
    check_gates(state, params)?;
    let dt = stable_dt(state, params);
    if !(dt >= params.dt_min) {
        return Err(Error::StepUnderflow {
            dt,
            dt_min: params.dt_min,
        });
    }
    let dt = match params.stop_t {
        Some(stop) if state.time + dt > stop => stop - state.time,
        _ => dt,
    };
    step_by(state, params, dt)
}

/// Integrates from `mesh0` until a stop condition fires.
pub fn run(mesh0: &Hypersurface, params: &FlowParams, alphas: &[f64]) -> Result<FlowTrajectory> {
    params.validate()?;
    if params.stop_t.is_none() && params.blowup_threshold.is_none() {
        return Err(Error::InvalidArgument(
            "a run needs stop_t or blowup_threshold".into(),
        ));
    }
    let mut state = FlowState::new(mesh0.clone(), 0.0)?;
    check_gates(&state, params)?;
    let k = params.k;
    let mut integrands: Vec<f64> = alphas
        .iter()
        .map(|&a| h_power_integral(&state.cache, a))
        .collect();
    let mut accumulators = vec![0.0; alphas.len()];
    let mut records = vec![record_for(&state, k, 0.0, accumulators.clone())];
    let mut states = vec![state.clone()];
    let mut steps = 0usize;

    let termination = loop {
        if let Some(stop) = params.stop_t {
            if state.time >= stop {
                break Termination::ReachedT;
            }
        }
        let next = match step(&state, params) {
            Ok(s) => s,
            Err(Error::StepUnderflow { .. }) => break Termination::DtUnderflow,
            Err(Error::DegenerateMesh { .. }) => break Termination::QualityFailure,
            Err(e) => return Err(e),
        };
        let dt = next.time - state.time;
        for (i, &alpha) in alphas.iter().enumerate() {
            let value = h_power_integral(&next.cache, alpha);
            accumulators[i] += 0.5 * dt * (integrands[i] + value);
            integrands[i] = value;
        }
        state = next;
        steps += 1;
        let record = record_for(&state, k, dt, accumulators.clone());
        let blown_up = params
            .blowup_threshold
            .is_some_and(|q| record.max_h_pow > q);
        let degraded = record.quality < params.quality_floor;
        let reached = params.stop_t.is_some_and(|stop| state.time >= stop);
        records.push(record);
        if blown_up || degraded || reached || steps.is_multiple_of(params.snapshot_stride) {
            states.push(state.clone());
        }
        if blown_up {
            break Termination::BlowupThreshold;
        }
        if degraded {
            break Termination::QualityFailure;
        }
    };
    if states.last().map(|s| s.time) != Some(state.time) {
        states.push(state);
    }

    Ok(FlowTrajectory {
        n: mesh0.dimension(),
        k,
        alphas: alphas.to_vec(),
        states,
        records,
        termination,
    })
}

/// Linear fit of `1 / max H^{k+1}` against time over the final window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TmaxEstimate {
    /// The t-intercept of the fit.
    pub t_max: f64,
    pub slope: f64,
    pub intercept: f64,
    /// `-1 / slope`, the fitted limit of `max H^{k+1} (T_max - t)`.
    pub type_one_product: f64,
    pub samples: usize,
    pub r_squared: f64,
}

/// Fraction of the time span used as the final fitting window.
pub const TMAX_WINDOW: f64 = 0.25;
pub const TMAX_MIN_SAMPLES: usize = 10;

pub fn estimate_tmax(traj: &FlowTrajectory, k: u32) -> Result<TmaxEstimate> {
    if traj.termination != Termination::BlowupThreshold {
        return Err(Error::NoBlowup);
    }
    if traj.records.len() < TMAX_MIN_SAMPLES {
        return Err(Error::InsufficientSamples(format!(
            "{} samples, at least {TMAX_MIN_SAMPLES} needed",
            traj.records.len()
        )));
    }
    let t0 = traj.start_time();
    let t1 = traj.final_time();
    let cut = t1 - TMAX_WINDOW * (t1 - t0);
    let mut window: Vec<&StepRecord> = traj.records.iter().filter(|r| r.time >= cut).collect();
    if window.len() < TMAX_MIN_SAMPLES {
        window = traj.records[traj.records.len() - TMAX_MIN_SAMPLES..]
            .iter()
            .collect();
    }
    let xs: Vec<f64> = window.iter().map(|r| r.time).collect();
    let ys: Vec<f64> = window
        .iter()
        .map(|r| {
            // records may come from a trajectory built for another k
            let h = r.max_h.max(0.0);
            1.0 / h.powi(k as i32 + 1)
        })
        .collect();
    let fit = linear_fit(&xs, &ys)
        .ok_or_else(|| Error::InsufficientSamples("degenerate time samples".into()))?;
    let y_scale = ys.iter().map(|y| y.abs()).fold(0.0, f64::max);
    let span = xs[xs.len() - 1] - xs[0];
    if !(fit.slope < 0.0) || fit.slope.abs() * span < 1e-9 * y_scale {
        return Err(Error::InsufficientSamples(
            "no blow-up signal: 1/max H^{k+1} is not decreasing".into(),
        ));
    }
    Ok(TmaxEstimate {
        t_max: -fit.intercept / fit.slope,
        slope: fit.slope,
        intercept: fit.intercept,
        type_one_product: -1.0 / fit.slope,
        samples: xs.len(),
        r_squared: fit.r_squared,
    })
}

/// Discrete residuals of the volume-form and mean-curvature evolution laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionResiduals {
    /// `sum |d(dmu)/dt + f(H) H dmu| / sum |f(H) H dmu|` over interior snapshots.
    pub volume_form: f64,
    /// `dH/dt` against `f'(H) Delta H + f(H)|A|^2 + f''(H)|grad H|^2`, area-weighted relative L^1.
    pub mean_curvature_full: f64,
    /// `dH/dt` against the round-sphere reduction `f(H) H^2 / n`.
    pub mean_curvature_sphere: f64,
    pub snapshots_used: usize,
}

/// Central-difference weights for the derivative at the middle of three nonuniform nodes.
fn central_weights(t0: f64, t1: f64, t2: f64) -> [f64; 3] {
    let (h0, h1) = (t1 - t0, t2 - t1);
    [
        -h1 / (h0 * (h0 + h1)),
        (h1 - h0) / (h0 * h1),
        h0 / (h1 * (h0 + h1)),
    ]
}

pub fn evolution_residuals(
    traj: &FlowTrajectory,
    params: &FlowParams,
) -> Result<EvolutionResiduals> {
    if traj.states.len() < 3 {
        return Err(Error::InsufficientSamples(format!(
            "{} snapshots, at least 3 needed",
            traj.states.len()
        )));
    }
    let n = traj.n as f64;
    let f = &params.speed;
    let (mut vol_num, mut vol_den) = (0.0, 0.0);
    let (mut full_num, mut full_den) = (0.0, 0.0);
    let (mut sph_num, mut sph_den) = (0.0, 0.0);
    for w in traj.states.windows(3) {
        let [a, b, c] = [&w[0], &w[1], &w[2]];
        if !(a.time < b.time && b.time < c.time) {
            return Err(Error::InvalidArgument(
                "snapshot times must be strictly increasing".into(),
            ));
        }
        let cw = central_weights(a.time, b.time, c.time);
        let cache = &b.cache;
        let h_field = cache.mean_curvature_field();
        let lap_h = laplacian(&b.mesh, cache, &h_field);
        let grad_h_sq = vertex_gradient_sq(&b.mesh, cache, &h_field);
        for v in 0..b.mesh.vertex_count() {
            let h = cache.mean_curvature[v];
            let mu = cache.area_weights[v];
            let dmu =
                cw[0] * a.cache.area_weights[v] + cw[1] * mu + cw[2] * c.cache.area_weights[v];
            let expected_dmu = -f.value(h) * h * mu;
            vol_num += (dmu - expected_dmu).abs();
            vol_den += expected_dmu.abs();

            let dh =
                cw[0] * a.cache.mean_curvature[v] + cw[1] * h + cw[2] * c.cache.mean_curvature[v];
            let full = f.derivative(h) * lap_h[v]
                + f.value(h) * cache.second_fund_norm_sq[v]
                + f.second_derivative(h) * grad_h_sq[v];
            full_num += (dh - full).abs() * mu;
            full_den += full.abs() * mu;
            let sphere = f.value(h) * h * h / n;
            sph_num += (dh - sphere).abs() * mu;
            sph_den += sphere.abs() * mu;
        }
    }
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    Ok(EvolutionResiduals {
        volume_form: ratio(vol_num, vol_den),
        mean_curvature_full: ratio(full_num, full_den),
        mean_curvature_sphere: ratio(sph_num, sph_den),
        snapshots_used: traj.states.len() - 2,
    })
}

/// Per-vertex `H` as a field, for every snapshot.
pub fn mean_curvature_fields(traj: &FlowTrajectory) -> Vec<ScalarField> {
    traj.states
        .iter()
        .map(|s| s.cache.mean_curvature_field())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{ellipsoid, icosphere, torus};

    #[test]
    fn single_step_matches_sphere_ode() {
        let m = icosphere(4, 1.0).unwrap();
        let s0 = FlowState::new(m, 0.0).unwrap();
        let p = FlowParams::power(2);
        let s1 = step_by(&s0, &p, 1e-4).unwrap();
        let c = Vec3::zeros();
        let dr = s0.mesh.mean_radius(&c) - s1.mesh.mean_radius(&c);
        assert!((dr - 4e-4).abs() / 4e-4 < 0.02, "{dr}");
    }

    #[test]
    fn k1_sphere_stays_round() {
        let m = icosphere(3, 1.0).unwrap();
        let p = FlowParams::power(1).with_stop_t(0.2);
        let traj = run(&m, &p, &[]).unwrap();
        let c = Vec3::zeros();
        for s in &traj.states {
            assert!(s.mesh.radius_variation(&c) < 1e-3);
        }
    }

    #[test]
    fn non_mean_convex_rejected() {
        // inner rim: 1/0.6 - 1/0.4 < 0
        let m = torus(1.0, 0.6, 32, 16).unwrap();
        let s0 = FlowState::new(m, 0.0).unwrap();
        let p = FlowParams::power(2).with_stop_t(0.1);
        assert!(matches!(step(&s0, &p), Err(Error::NotMeanConvex { .. })));
    }

    #[test]
    fn parabolicity_gate() {
        let m = icosphere(2, 1.0).unwrap();
        let s0 = FlowState::new(m, 0.0).unwrap();
        let mut p = FlowParams::power(1).with_stop_t(0.1);
        p.speed = SpeedFunction::custom(|x| -x, |_| -1.0, |_| 0.0);
        assert!(matches!(step(&s0, &p), Err(Error::ParabolicityLost { .. })));
    }

    #[test]
    fn stop_time_is_hit_exactly() {
        let m = icosphere(3, 1.0).unwrap();
        let traj = run(
            &m,
            &FlowParams::power(2).with_stop_t(0.01).with_stride(5),
            &[4.0],
        )
        .unwrap();
        assert_eq!(traj.termination, Termination::ReachedT);
        assert_eq!(traj.final_time(), 0.01);
        assert_eq!(traj.states.last().unwrap().time, 0.01);
        for w in traj.records.windows(2) {
            assert!(w[1].time > w[0].time);
            assert!(w[1].accumulators[0] >= w[0].accumulators[0]);
        }
    }

    #[test]
    fn ellipsoid_area_decreases() {
        let m = ellipsoid(1.0, 0.9, 0.8, 3).unwrap();
        let traj = run(
            &m,
            &FlowParams::power(2).with_stop_t(0.02).with_stride(10),
            &[],
        )
        .unwrap();
        for w in traj.records.windows(2) {
            assert!(w[1].area < w[0].area);
        }
    }

    #[test]
    fn too_few_samples_for_tmax() {
        let m = icosphere(2, 1.0).unwrap();
        let mut traj = run(&m, &FlowParams::power(2).with_stop_t(0.001), &[]).unwrap();
        traj.records.truncate(3);
        traj.termination = Termination::BlowupThreshold;
        assert!(matches!(
            estimate_tmax(&traj, 2),
            Err(Error::InsufficientSamples(_))
        ));
    }

    #[test]
    fn frozen_snapshots_give_unit_residual() {
        let m = icosphere(3, 1.0).unwrap();
        let s = FlowState::new(m, 0.0).unwrap();
        let states: Vec<FlowState> = (0..3)
            .map(|i| FlowState {
                time: i as f64 * 1e-3,
                ..s.clone()
            })
            .collect();
        let traj = FlowTrajectory {
            n: 2,
            k: 2,
            alphas: vec![],
            states,
            records: vec![],
            termination: Termination::ReachedT,
        };
        let r = evolution_residuals(&traj, &FlowParams::power(2)).unwrap();
        assert_eq!(r.volume_form, 1.0);
        assert_eq!(r.mean_curvature_sphere, 1.0);
    }
}
