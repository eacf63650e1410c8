use std::fmt::Write as _;
use std::path::Path;

use hkflow::analytic::{SpacetimeNorm, SphereSolution};
use hkflow::extension::{blowup_sequence, monitor, type_one_rate, BlowupSummary, ExtensionReport};
use hkflow::flow::{run, FlowParams, FlowTrajectory};
use hkflow::moser::{compute_moser_constants, MoserConstants, MoserInput};
use hkflow::sobolev::{compute_constants, SobolevConstants};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::meshio::{load, write_off};
use crate::output::{
    load_trajectory_dir, to_json_pretty, write_trajectory_dir, FORMAT_VERSION, REPORT,
};
use crate::report::{diagnose_report, flow_report, Report};

/// `%.12g`-style formatting: 12 significant digits, trailing zeros dropped.
pub fn sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let fixed = format!("{:.*}", (11 - exp) as usize, x);
        if fixed.contains('.') {
            fixed
                .trim_end_matches('0')
                .trim_end_matches('.')
                .to_string()
        } else {
            fixed
        }
    } else {
        let m = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{m}e{exp}")
    }
}

pub struct FlowOutcome {
    pub trajectory: FlowTrajectory,
    pub report_json: String,
    pub first_error: Option<hkflow::Error>,
}

pub fn flow_params(config: &RunConfig) -> FlowParams {
    let mut p = FlowParams::power(config.k).with_stride(config.snapshot_stride);
    p.dt_safety = config.dt_safety;
    if let Some(t) = config.stop_t {
        p = p.with_stop_t(t);
    }
    if let Some(q) = config.blowup_threshold {
        p = p.with_blowup_threshold(q);
    }
    p
}

fn report_json(report: &Report) -> String {
    to_json_pretty(report)
}

/// Runs the flow, writes the trajectory directory (when configured) and the report.
/// Module errors raised by individual checks are reported in-band and returned in `first_error`.
pub fn cmd_flow(config: &RunConfig) -> CliResult<FlowOutcome> {
    let mesh = load(&config.mesh)?;
    config.validate(true)?;
    let params = flow_params(config);
    let traj = run(&mesh, &params, &config.accumulated_alphas())?;
    let report = flow_report(config, &traj, &params);
    let json = report_json(&report);
    if let Some(dir) = &config.output_dir {
        write_trajectory_dir(dir, &traj, config)?;
        let path = dir.join(REPORT);
        std::fs::write(&path, &json)
            .map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    }
    let first_error = report.first_error.clone();
    Ok(FlowOutcome {
        trajectory: traj,
        report_json: json,
        first_error,
    })
}

pub fn cmd_diagnose(config: &RunConfig) -> CliResult<(String, Option<hkflow::Error>)> {
    let mesh = load(&config.mesh)?;
    config.validate(false)?;
    let report = diagnose_report(config, &mesh)?;
    let json = report_json(&report);
    if let Some(dir) = &config.output_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
        let path = dir.join(REPORT);
        std::fs::write(&path, &json)
            .map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    }
    Ok((json, report.first_error))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MoserOverrides {
    pub c0_inf: Option<f64>,
    pub c2: Option<f64>,
    pub h_norm: Option<f64>,
    pub beta: Option<f64>,
    pub q: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantsDoc {
    pub document: &'static str,
    pub format_version: u32,
    pub sobolev: SobolevConstants,
    /// Absent for k = 1, where the Moser iteration does not apply.
    pub moser: Option<MoserConstants>,
}

/// Moser inputs default to the values a sphere of the given volume would measure with `v = H`.
pub fn cmd_constants(
    n: usize,
    k: u32,
    t: f64,
    volume: f64,
    o: MoserOverrides,
) -> CliResult<ConstantsDoc> {
    let sobolev = compute_constants(n, k, volume, t)?;
    let moser = if k >= 2 {
        let (nf, kf) = (n as f64, k as f64);
        let r = (volume / hkflow::analytic::unit_sphere_area(n)).powf(1.0 / nf);
        let h = nf / r;
        let input = MoserInput {
            n,
            k,
            t,
            volume,
            c0_inf: o.c0_inf.unwrap_or(kf * h.powf(kf - 1.0) * nf / (r * r)),
            c0_q: None,
            h_norm_accum: o.h_norm.unwrap_or(h.powf(nf + kf + 1.0) * volume * t),
            c2: o.c2.unwrap_or(kf * h.powf(kf - 1.0)),
            q: o.q,
            beta: o.beta.unwrap_or((nf + kf + 1.0) / kf),
        };
        Some(compute_moser_constants(input)?)
    } else {
        None
    };
    Ok(ConstantsDoc {
        document: "constants",
        format_version: FORMAT_VERSION,
        sobolev,
        moser,
    })
}

pub fn constants_text(doc: &ConstantsDoc) -> String {
    let s = &doc.sobolev;
    let mut out = String::new();
    let mut line = |name: &str, v: f64| writeln!(out, "{name:<12} {}", sig12(v)).unwrap();
    line("n", s.n as f64);
    line("k", s.k as f64);
    line("T", s.t);
    line("volume", s.volume);
    line("Q_k", s.q_k);
    line("gamma", s.gamma);
    line("omega_n", s.omega_n);
    line("c_n", s.c_n);
    line("c_nk", s.c_nk);
    line("a_nk", s.a_nk);
    line("A_nk", s.big_a);
    line("A_hat_nk", s.a_hat);
    line("A_tilde_nk", s.a_tilde);
    line("B_nkT", s.b_nkt);
    if let Some(m) = &doc.moser {
        line("beta", m.input.beta);
        line("C0_inf", m.input.c0_inf);
        line("C2", m.input.c2);
        line("H_norm", m.input.h_norm_accum);
        line("C1", m.c1);
        line("nu_q", m.nu_q);
        line("B", m.b);
        line("B_tilde", m.b_tilde);
        line("C", m.c_full);
        line("D", m.d);
        line("C_n", m.c_n);
        line("E(beta)", m.e_of_beta);
        line("F", m.f_final);
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SphereSample {
    pub t: f64,
    pub radius: f64,
    pub mean_curvature: f64,
    pub area: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SphereNorm {
    pub alpha: f64,
    pub t_end: f64,
    /// `int_0^T int H^alpha`; null when divergent.
    pub integral: Option<f64>,
    pub norm: Option<f64>,
    pub divergent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SphereDoc {
    pub document: &'static str,
    pub format_version: u32,
    pub n: usize,
    pub k: u32,
    pub r0: f64,
    pub t_max: f64,
    pub type_one_constant: f64,
    pub critical_alpha: f64,
    pub samples: Vec<SphereSample>,
    pub norms: Vec<SphereNorm>,
}

pub fn cmd_sphere(
    n: usize,
    k: u32,
    r0: f64,
    times: &[f64],
    alphas: &[f64],
    until: Option<f64>,
) -> CliResult<SphereDoc> {
    let sol = SphereSolution::new(n, k, r0)?;
    let t_max = sol.t_max();
    let samples = times
        .iter()
        .map(|&t| {
            Ok(SphereSample {
                t,
                radius: sol.radius(t)?,
                mean_curvature: sol.mean_curvature(t)?,
                area: sol.area(t)?,
            })
        })
        .collect::<hkflow::Result<Vec<_>>>()?;
    let t_end = until.unwrap_or(t_max);
    if t_end > t_max {
        return Err(hkflow::Error::TimeBeyondTmax { t: t_end, t_max }.into());
    }
    let norms = alphas
        .iter()
        .map(|&alpha| {
            let (integral, norm) = match sol.spacetime_integral(alpha, t_end) {
                SpacetimeNorm::Finite(v) => (Some(v), Some(v.powf(1.0 / alpha))),
                SpacetimeNorm::Divergent => (None, None),
            };
            SphereNorm {
                alpha,
                t_end,
                integral,
                norm,
                divergent: integral.is_none(),
            }
        })
        .collect();
    Ok(SphereDoc {
        document: "sphere",
        format_version: FORMAT_VERSION,
        n,
        k,
        r0,
        t_max,
        type_one_constant: sol.type_one_constant(),
        critical_alpha: sol.critical_alpha(),
        samples,
        norms,
    })
}

pub fn sphere_text(doc: &SphereDoc) -> String {
    let mut out = String::new();
    writeln!(out, "T_max              {}", sig12(doc.t_max)).unwrap();
    writeln!(out, "type_one_constant  {}", sig12(doc.type_one_constant)).unwrap();
    writeln!(out, "critical_alpha     {}", sig12(doc.critical_alpha)).unwrap();
    for s in &doc.samples {
        writeln!(
            out,
            "t {}  r {}  H {}  area {}",
            sig12(s.t),
            sig12(s.radius),
            sig12(s.mean_curvature),
            sig12(s.area)
        )
        .unwrap();
    }
    for nrm in &doc.norms {
        match (nrm.integral, nrm.norm) {
            (Some(i), Some(v)) => writeln!(
                out,
                "alpha {}  T {}  integral {}  norm {}",
                sig12(nrm.alpha),
                sig12(nrm.t_end),
                sig12(i),
                sig12(v)
            )
            .unwrap(),
            _ => writeln!(
                out,
                "alpha {}  T {}  divergent",
                sig12(nrm.alpha),
                sig12(nrm.t_end)
            )
            .unwrap(),
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupDoc {
    pub document: &'static str,
    pub format_version: u32,
    pub k: u32,
    pub entries: Vec<BlowupSummary>,
    pub files: Vec<String>,
    pub type_one_rate: Option<f64>,
    pub extension: ExtensionReport,
}

pub const BLOWUP_DIR: &str = "blowup";
pub const BLOWUP_JSON: &str = "blowup/blowup.json";

/// Post-processes a stored trajectory directory: rescaled snapshots plus the extension monitor.
pub fn cmd_blowup(
    dir: &Path,
    count: usize,
    pinching_c: f64,
    alpha: Option<f64>,
) -> CliResult<BlowupDoc> {
    let traj = load_trajectory_dir(dir)?;
    let k = traj.k;
    let seq = blowup_sequence(&traj, k, count)?;
    let alpha = alpha.unwrap_or((traj.n as u32 + k + 1) as f64);
    let extension = monitor(&traj, pinching_c, alpha)?;
    let out_dir = dir.join(BLOWUP_DIR);
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::io(format!("creating {}", out_dir.display()), e))?;
    let mut files = Vec::new();
    for e in &seq.entries {
        let name = format!("rescaled_{:02}.off", e.i);
        write_off(&e.rescaled, &out_dir.join(&name))?;
        files.push(format!("{BLOWUP_DIR}/{name}"));
    }
    let doc = BlowupDoc {
        document: "blowup",
        format_version: FORMAT_VERSION,
        k,
        entries: seq.summaries(),
        files,
        type_one_rate: type_one_rate(&traj, k).ok(),
        extension,
    };
    let path = dir.join(BLOWUP_JSON);
    std::fs::write(&path, to_json_pretty(&doc))
        .map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    Ok(doc)
}
