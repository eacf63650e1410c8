//! Runtime monitor for the extension criterion (uniform pinching plus a
//! finite space-time curvature norm) and the blow-up rescaling diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{estimate_tmax, FlowTrajectory, Termination};
use crate::geometry::{lp_integral, GeometryCache};
use crate::mesh::Hypersurface;
use crate::stats::{linear_fit, trapezoid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionA {
    pub c_used: f64,
    pub min_pinching_over_run: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionB {
    pub alpha: f64,
    /// `int int H^alpha` up to the last record.
    pub accumulated_integral: f64,
    /// Its `alpha`-th root.
    pub accumulated_norm: f64,
    pub diverging: bool,
    /// Set when `alpha < n + k + 1`: such norms stay finite even on shrinking spheres.
    pub uninformative: bool,
    /// Slopes of the accumulated integral against `-ln(T^ - t)` on the two halves of the tail.
    pub trend_slopes: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ExtendableConsistent,
    SingularityConsistent,
    Indeterminate,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::ExtendableConsistent => "extendable_consistent",
            Verdict::SingularityConsistent => "singularity_consistent",
            Verdict::Indeterminate => "indeterminate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtensionReport {
    pub condition_a: ConditionA,
    pub condition_b: ConditionB,
    pub verdict: Verdict,
    pub termination: Termination,
}

/// Minimum number of records on each half of the divergence tail.
const TREND_MIN_SAMPLES: usize = 5;

fn accumulated_series(traj: &FlowTrajectory, alpha: f64) -> Result<Vec<(f64, f64)>> {
    if let Some(series) = traj.accumulator_series(alpha) {
        return Ok(series);
    }
    if traj.states.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "alpha = {alpha} was not accumulated and there are too few snapshots"
        )));
    }
    let times: Vec<f64> = traj.states.iter().map(|s| s.time).collect();
    let vals: Vec<f64> = traj
        .states
        .iter()
        .map(|s| lp_integral(&s.cache, &s.cache.mean_curvature_field(), alpha))
        .collect();
    Ok((1..=times.len())
        .map(|j| (times[j - 1], trapezoid(&times[..j], &vals[..j])))
        .collect())
}

/// Logarithmic divergence test: regress the accumulated integral on
/// `L = -ln(T^ - t)` over the last half of the `L` range, split that tail in
/// two, and call it diverging when the later slope is significantly positive
/// and has not decayed below half the earlier one.
fn divergence_trend(series: &[(f64, f64)], t_hat: f64) -> Option<(bool, (f64, f64))> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, _)| *t < t_hat)
        .map(|&(t, v)| (-(t_hat - t).ln(), v))
        .collect();
    if pts.len() < 4 * TREND_MIN_SAMPLES {
        return None;
    }
    let l_min = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let l_max = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let l_tail = 0.5 * (l_min + l_max);
    let l_split = 0.5 * (l_tail + l_max);
    let half = |lo: f64, hi: f64| -> Option<crate::stats::LinearFit> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts
            .iter()
            .filter(|p| p.0 >= lo && p.0 <= hi)
            .copied()
            .unzip();
        if xs.len() < TREND_MIN_SAMPLES {
            return None;
        }
        linear_fit(&xs, &ys)
    };
    let first = half(l_tail, l_split)?;
    let second = half(l_split, l_max)?;
    let significant = second.slope > 2.0 * second.slope_stderr && second.slope > 0.0;
    let sustained = second.slope >= 0.5 * first.slope;
    Some((significant && sustained, (first.slope, second.slope)))
}

pub fn monitor(traj: &FlowTrajectory, c: f64, alpha: f64) -> Result<ExtensionReport> {
    if traj.records.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let min_pinching = traj
        .records
        .iter()
        .map(|r| r.min_principal)
        .fold(f64::INFINITY, f64::min);
    let condition_a = ConditionA {
        c_used: c,
        min_pinching_over_run: min_pinching,
        holds: min_pinching >= c,
    };

    let series = accumulated_series(traj, alpha)?;
    let integral = series.last().map_or(0.0, |p| p.1);
    let critical = traj.n as f64 + traj.k as f64 + 1.0;
    let blown_up = traj.termination == Termination::BlowupThreshold;
    let trend = if blown_up {
        estimate_tmax(traj, traj.k)
            .ok()
            .and_then(|est| divergence_trend(&series, est.t_max))
    } else {
        None
    };
    let diverging = trend.is_some_and(|t| t.0);
    let condition_b = ConditionB {
        alpha,
        accumulated_integral: integral,
        accumulated_norm: integral.powf(1.0 / alpha),
        diverging,
        uninformative: alpha < critical,
        trend_slopes: trend.map(|t| t.1),
    };

    let verdict = if !blown_up {
        if condition_a.holds && !diverging {
            Verdict::ExtendableConsistent
        } else {
            Verdict::Indeterminate
        }
    } else if !condition_a.holds || diverging {
        Verdict::SingularityConsistent
    } else {
        Verdict::Indeterminate
    };
    Ok(ExtensionReport {
        condition_a,
        condition_b,
        verdict,
        termination: traj.termination,
    })
}

#[derive(Debug, Clone)]
pub struct BlowupEntry {
    pub i: usize,
    pub t_i: f64,
    pub x_i: usize,
    /// Running maximum of `max H^{k+1}` up to `t_i`.
    pub q_i: f64,
    pub rescaled: Hypersurface,
    pub rescaled_cache: GeometryCache,
}

/// Scalar summary of one entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupSummary {
    pub i: usize,
    pub t_i: f64,
    pub x_i: usize,
    pub q_i: f64,
    /// `max (H^{(i)})^{k+1}` on the rescaled slice.
    pub max_rescaled_h_pow: f64,
    /// `(H^{(i)})^{k+1}` at `x_i`.
    pub value_at_x: f64,
    pub min_rescaled_principal: f64,
    pub max_rescaled_principal: f64,
    /// Smallest `lambda_min / lambda_max` over vertices, before and after rescaling (scale free).
    pub principal_ratio: f64,
}

impl BlowupEntry {
    pub fn summary(&self, k: u32) -> BlowupSummary {
        let c = &self.rescaled_cache;
        let pow = |h: f64| h.max(0.0).powi(k as i32 + 1);
        BlowupSummary {
            i: self.i,
            t_i: self.t_i,
            x_i: self.x_i,
            q_i: self.q_i,
            max_rescaled_h_pow: pow(c.max_mean_curvature()),
            value_at_x: pow(c.mean_curvature[self.x_i]),
            min_rescaled_principal: c
                .principal
                .iter()
                .map(|p| p.0)
                .fold(f64::INFINITY, f64::min),
            max_rescaled_principal: c
                .principal
                .iter()
                .map(|p| p.1)
                .fold(f64::NEG_INFINITY, f64::max),
            principal_ratio: c
                .principal
                .iter()
                .map(|p| p.0 / p.1)
                .fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlowupSequence {
    pub k: u32,
    pub entries: Vec<BlowupEntry>,
}

impl BlowupSequence {
    pub fn summaries(&self) -> Vec<BlowupSummary> {
        self.entries.iter().map(|e| e.summary(self.k)).collect()
    }
}

/// Picks `count` snapshots with increasing curvature maxima, spread evenly in
/// `ln Q` and ending at the final snapshot, and rescales each by `Q^{1/(k+1)}`.
pub fn blowup_sequence(traj: &FlowTrajectory, k: u32, count: usize) -> Result<BlowupSequence> {
    if traj.termination != Termination::BlowupThreshold {
        return Err(Error::NoBlowup);
    }
    if count < 1 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    let kf = k as f64;
    let pow = |h: f64| h.max(0.0).powi(k as i32 + 1);
    // (snapshot index, running max up to the snapshot)
    let mut candidates: Vec<(usize, f64)> = Vec::new();
    let mut running = 0.0f64;
    let mut rec = traj.records.iter().peekable();
    for (si, s) in traj.states.iter().enumerate() {
        while let Some(r) = rec.peek() {
            if r.time > s.time {
                break;
            }
            running = running.max(r.max_h_pow);
            rec.next();
        }
        let q = running.max(pow(s.cache.max_mean_curvature()));
        // enough parabolic time before t_i to fit the unit rescaled interval
        if q.powf(2.0 / (kf + 1.0)) * s.time >= 1.0 {
            candidates.push((si, q));
        }
    }
    candidates.dedup_by(|b, a| b.1 <= a.1);
    if candidates.len() < count {
        return Err(Error::InsufficientSamples(format!(
            "{} eligible snapshots for {count} blow-up entries",
            candidates.len()
        )));
    }
    let (lq0, lq1) = (
        candidates[0].1.ln(),
        candidates[candidates.len() - 1].1.ln(),
    );
    let mut picked: Vec<usize> = Vec::with_capacity(count);
    for j in 1..=count {
        let target = if count == 1 {
            lq1
        } else {
            lq0 + (lq1 - lq0) * (j - 1) as f64 / (count - 1) as f64
        };
        let lower = picked.last().map_or(0, |&p| p + 1);
        let upper = candidates.len() - (count - j);
        let best = (lower..upper)
            .min_by(|&a, &b| {
                let da = (candidates[a].1.ln() - target).abs();
                let db = (candidates[b].1.ln() - target).abs();
                da.total_cmp(&db)
            })
            .ok_or_else(|| {
                Error::InsufficientSamples("not enough distinct blow-up snapshots".into())
            })?;
        picked.push(best);
    }
    let entries = picked
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let (si, q) = candidates[c];
            let s = &traj.states[si];
            let factor = q.powf(1.0 / (kf + 1.0));
            BlowupEntry {
                i: i + 1,
                t_i: s.time,
                x_i: s.cache.argmax_mean_curvature().0,
                q_i: q,
                rescaled: s.mesh.scaled(factor),
                rescaled_cache: s.cache.scaled(factor),
            }
        })
        .collect();
    Ok(BlowupSequence { k, entries })
}

/// Fitted limit of `max H^{k+1} (T^_max - t)` near the singular time.
pub fn type_one_rate(traj: &FlowTrajectory, k: u32) -> Result<f64> {
    Ok(estimate_tmax(traj, k)?.type_one_product)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{synthetic_sphere_trajectory, SphereSolution};
    use crate::flow::{run, FlowParams};
    use crate::mesh::icosphere;
    use std::f64::consts::PI;

    #[test]
    fn analytic_sphere_borderline() {
        let sol = SphereSolution::new(2, 2, 1.0).unwrap();
        let traj = synthetic_sphere_trajectory(&sol, 400, 1e-9, &[4.0, 5.0]).unwrap();
        let crit = monitor(&traj, 0.5, 5.0).unwrap();
        assert!(crit.condition_a.holds);
        assert!(crit.condition_b.diverging);
        assert_eq!(crit.verdict, Verdict::SingularityConsistent);
        let sub = monitor(&traj, 0.5, 4.0).unwrap();
        assert!(!sub.condition_b.diverging);
        assert!(sub.condition_b.uninformative);
        let exact = match sol.spacetime_integral_to_gap(4.0, 1e-9) {
            crate::analytic::SpacetimeNorm::Finite(v) => v,
            _ => unreachable!(),
        };
        assert!((sub.condition_b.accumulated_integral - exact).abs() / exact < 1e-9);
        assert!((sub.condition_b.accumulated_norm - (16.0 * PI).powf(0.25)).abs() < 2e-3);
        assert_eq!(sub.verdict, Verdict::Indeterminate);
    }

    #[test]
    fn analytic_type_one_rates() {
        for (n, k, expect, t_max) in [(2, 2, 2.0 / 3.0, 1.0 / 12.0), (3, 2, 1.0, 1.0 / 27.0)] {
            let sol = SphereSolution::new(n, k, 1.0).unwrap();
            let traj = synthetic_sphere_trajectory(&sol, 200, 1e-6 * t_max, &[]).unwrap();
            let est = estimate_tmax(&traj, k).unwrap();
            assert!((est.t_max - t_max).abs() / t_max < 1e-6);
            assert!((type_one_rate(&traj, k).unwrap() - expect).abs() / expect < 1e-6);
        }
    }

    #[test]
    fn short_run_is_extendable() {
        let m = icosphere(3, 1.0).unwrap();
        let traj = run(
            &m,
            &FlowParams::power(2).with_stop_t(0.01).with_stride(10),
            &[5.0],
        )
        .unwrap();
        let r = monitor(&traj, 0.5, 5.0).unwrap();
        assert_eq!(r.verdict, Verdict::ExtendableConsistent);
        assert!(!r.condition_b.diverging);
        assert!(matches!(blowup_sequence(&traj, 2, 1), Err(Error::NoBlowup)));
    }

    #[test]
    fn empty_trajectory() {
        let traj = FlowTrajectory {
            n: 2,
            k: 2,
            alphas: vec![],
            states: vec![],
            records: vec![],
            termination: Termination::ReachedT,
        };
        assert!(matches!(
            monitor(&traj, 0.5, 5.0),
            Err(Error::EmptyTrajectory)
        ));
    }
}
