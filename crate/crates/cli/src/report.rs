//! The JSON report assembled by `flow` and `diagnose`.

use hkflow::extension::{blowup_sequence, monitor, type_one_rate, BlowupSummary, ExtensionReport};
use hkflow::flow::{
    estimate_tmax, evolution_residuals, mean_curvature_fields, EvolutionResiduals, FlowParams,
    FlowTrajectory, Termination, TmaxEstimate,
};
use hkflow::geometry::{build_geometry, pinching_minimum, GeometryCache, ScalarField};
use hkflow::mesh::{Hypersurface, Vec3};
use hkflow::moser::{
    cutoff_schedule, energy_estimate_check, iterate_norms, sup_bound_check, IterateReport,
};
use hkflow::report::InequalityReport;
use hkflow::sobolev::{
    gradient_form_check, michael_simon_check, nonlinear_sobolev_check, spacetime_sobolev_check,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Check, RunConfig};
use crate::output::FORMAT_VERSION;

#[derive(Debug, Clone, Serialize)]
pub struct ErrorInfo {
    pub kind: String,
    pub message: String,
}

impl From<&hkflow::Error> for ErrorInfo {
    fn from(e: &hkflow::Error) -> Self {
        Self {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome<T> {
    Ok { result: T },
    Error { error: ErrorInfo },
    Skipped { reason: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct StaticCheck {
    pub check: Check,
    pub field: &'static str,
    pub snapshot: &'static str,
    #[serde(flatten)]
    pub outcome: Outcome<Vec<InequalityReport>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeshInfo {
    pub vertices: usize,
    pub faces: usize,
    pub area: f64,
    pub min_h: f64,
    pub max_h: f64,
    pub min_principal: f64,
}

impl MeshInfo {
    fn of(mesh: &Hypersurface, cache: &GeometryCache) -> Self {
        Self {
            vertices: mesh.vertex_count(),
            faces: mesh.faces().len(),
            area: cache.total_area(),
            min_h: cache.min_mean_curvature(),
            max_h: cache.max_mean_curvature(),
            min_principal: pinching_minimum(cache),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub termination: Termination,
    pub start_time: f64,
    pub final_time: f64,
    pub steps: usize,
    pub snapshots: usize,
    pub final_area: f64,
    pub peak_h_pow: f64,
    pub t_max_estimate: Option<TmaxEstimate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupResult {
    pub entries: Vec<BlowupSummary>,
    pub type_one_rate: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TrajectoryChecks {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spacetime_sobolev: Option<Outcome<InequalityReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_estimate: Option<Outcome<InequalityReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moser_iterate: Option<Outcome<IterateReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sup_bound: Option<Outcome<InequalityReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extension_monitor: Option<Outcome<ExtensionReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blowup_sequence: Option<Outcome<BlowupResult>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evolution_residuals: Option<Outcome<EvolutionResiduals>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report<'a> {
    pub document: &'static str,
    pub format_version: u32,
    pub command: &'static str,
    pub config: &'a RunConfig,
    pub mesh: MeshInfo,
    pub run: Option<RunSummary>,
    pub static_checks: Vec<StaticCheck>,
    pub trajectory_checks: TrajectoryChecks,
    /// Every evaluated inequality held.
    pub all_hold: bool,
    pub error_count: usize,
    /// First module error, which also decides the exit status.
    #[serde(skip)]
    pub first_error: Option<hkflow::Error>,
}

/// Collects outcomes while remembering the first error and whether all inequalities held.
struct Tally {
    all_hold: bool,
    errors: usize,
    first: Option<hkflow::Error>,
}

impl Tally {
    fn take<T>(&mut self, r: hkflow::Result<T>, holds: impl Fn(&T) -> bool) -> Outcome<T> {
        match r {
            Ok(v) => {
                self.all_hold &= holds(&v);
                Outcome::Ok { result: v }
            }
            Err(e) => {
                self.errors += 1;
                let info = ErrorInfo::from(&e);
                self.first.get_or_insert(e);
                Outcome::Error { error: info }
            }
        }
    }
}

/// Test fields for the static inequalities: positive on any mesh.
pub fn test_fields(mesh: &Hypersurface, seed: u64) -> Vec<(&'static str, ScalarField)> {
    let (zmin, zmax) = mesh
        .vertices()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
            (a.min(p.z), b.max(p.z))
        });
    let span = (zmax - zmin).max(f64::MIN_POSITIVE);
    let center = mesh.centroid();
    let radius = 0.5 * mesh.bounding_box_diagonal();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = loop {
        let d = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let len = d.norm();
        if len > 1e-3 && len <= 1.0 {
            break d / len * rng.gen_range(0.5..1.5);
        }
    };
    vec![
        ("one", ScalarField::constant(mesh.vertex_count(), 1.0)),
        (
            "height",
            ScalarField::from_positions(mesh, |p| 1.0 + (p.z - zmin) / span),
        ),
        (
            "random_exponential",
            ScalarField::from_positions(mesh, |p| (dir.dot(&(p - center)) / radius).exp()),
        ),
    ]
}

fn static_checks(
    config: &RunConfig,
    mesh: &Hypersurface,
    cache: &GeometryCache,
    snapshot: &'static str,
    tally: &mut Tally,
    out: &mut Vec<StaticCheck>,
) {
    let all = |rs: &Vec<InequalityReport>| rs.iter().all(|r| r.holds);
    for (field, v) in test_fields(mesh, config.seed) {
        for &check in config.checks.iter().filter(|c| c.is_static()) {
            let r = match check {
                Check::MichaelSimon => {
                    michael_simon_check(mesh, cache, &v, config.n).map(|r| vec![r])
                }
                Check::NonlinearSobolev => {
                    nonlinear_sobolev_check(mesh, cache, &v, config.n, config.k)
                        .map(|r| vec![r.lp_form, r.l2_form])
                }
                Check::GradientForm => {
                    gradient_form_check(mesh, cache, &v, config.n, config.k).map(|r| vec![r])
                }
                _ => unreachable!("static checks only"),
            };
            out.push(StaticCheck {
                check,
                field,
                snapshot,
                outcome: tally.take(r, all),
            });
        }
    }
}

pub fn diagnose_report<'a>(
    config: &'a RunConfig,
    mesh: &Hypersurface,
) -> hkflow::Result<Report<'a>> {
    let cache = build_geometry(mesh)?;
    let mut tally = Tally {
        all_hold: true,
        errors: 0,
        first: None,
    };
    let mut checks = Vec::new();
    static_checks(config, mesh, &cache, "mesh", &mut tally, &mut checks);
    Ok(Report {
        document: "report",
        format_version: FORMAT_VERSION,
        command: "diagnose",
        config,
        mesh: MeshInfo::of(mesh, &cache),
        run: None,
        static_checks: checks,
        trajectory_checks: TrajectoryChecks::default(),
        all_hold: tally.all_hold,
        error_count: tally.errors,
        first_error: tally.first,
    })
}

pub fn flow_report<'a>(
    config: &'a RunConfig,
    traj: &FlowTrajectory,
    params: &FlowParams,
) -> Report<'a> {
    let mut tally = Tally {
        all_hold: true,
        errors: 0,
        first: None,
    };
    let first = traj
        .states
        .first()
        .expect("trajectories keep their first state");
    let last = traj
        .states
        .last()
        .expect("trajectories keep their last state");
    let mut checks = Vec::new();
    static_checks(
        config,
        &first.mesh,
        &first.cache,
        "initial",
        &mut tally,
        &mut checks,
    );
    static_checks(
        config,
        &last.mesh,
        &last.cache,
        "final",
        &mut tally,
        &mut checks,
    );

    let blown_up = traj.termination == Termination::BlowupThreshold;
    let k = config.k;
    let ineq = |r: &InequalityReport| r.holds;
    let mut tc = TrajectoryChecks::default();
    let fields = || mean_curvature_fields(traj);
    if config.has(Check::SpacetimeSobolev) {
        tc.spacetime_sobolev =
            Some(tally.take(spacetime_sobolev_check(traj, &fields(), config.n, k), ineq));
    }
    if config.has(Check::EnergyEstimate) {
        let span = traj.final_time() - traj.start_time();
        let r = cutoff_schedule(span, 1).and_then(|s| {
            energy_estimate_check(
                traj,
                &fields(),
                k,
                config.beta0,
                s.cutoff(1).expect("i_max = 1"),
            )
        });
        tc.energy_estimate = Some(tally.take(r, ineq));
    }
    if config.has(Check::MoserIterate) {
        tc.moser_iterate = Some(
            tally.take(iterate_norms(traj, k, config.beta0, config.moser_m), |r| {
                r.holds
            }),
        );
    }
    if config.has(Check::SupBound) {
        tc.sup_bound = Some(tally.take(sup_bound_check(traj, k), ineq));
    }
    if config.has(Check::ExtensionMonitor) {
        tc.extension_monitor = Some(tally.take(
            monitor(traj, config.pinching_c, config.monitor_alpha),
            |_| true,
        ));
    }
    if config.has(Check::BlowupSequence) {
        tc.blowup_sequence = Some(if blown_up {
            let r = blowup_sequence(traj, k, config.blowup_count).map(|s| BlowupResult {
                entries: s.summaries(),
                type_one_rate: type_one_rate(traj, k).ok(),
            });
            tally.take(r, |_| true)
        } else {
            Outcome::Skipped {
                reason: format!("run ended with {}", traj.termination.as_str()),
            }
        });
    }
    if config.has(Check::EvolutionResiduals) {
        tc.evolution_residuals = Some(tally.take(evolution_residuals(traj, params), |_| true));
    }

    Report {
        document: "report",
        format_version: FORMAT_VERSION,
        command: "flow",
        config,
        mesh: MeshInfo::of(&first.mesh, &first.cache),
        run: Some(RunSummary {
            termination: traj.termination,
            start_time: traj.start_time(),
            final_time: traj.final_time(),
            steps: traj.records.len(),
            snapshots: traj.states.len(),
            final_area: last.cache.total_area(),
            peak_h_pow: traj.peak_h_pow(),
            t_max_estimate: if blown_up {
                estimate_tmax(traj, k).ok()
            } else {
                None
            },
        }),
        static_checks: checks,
        trajectory_checks: tc,
        all_hold: tally.all_hold,
        error_count: tally.errors,
        first_error: tally.first,
    }
}
