//! Trajectory directory layout: summary CSV, OFF snapshots with an index,
//! a manifest and a gnuplot script. The directory can be read back for
//! post-processing.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hkflow::flow::{FlowState, FlowTrajectory, StepRecord, Termination};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::meshio::{read_mesh, write_off};

pub const FORMAT_VERSION: u32 = 1;
pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const SNAPSHOT_INDEX: &str = "snapshots/index.csv";
pub const MANIFEST: &str = "manifest.json";
pub const REPORT: &str = "report.json";
pub const PLOT: &str = "plot.gp";

const FIXED_COLUMNS: [&str; 11] = [
    "step",
    "t",
    "dt",
    "min_h",
    "max_h",
    "max_h_pow",
    "argmax_vertex",
    "min_principal",
    "area",
    "mean_radius",
    "quality",
];

pub fn accumulator_column(alpha: f64) -> String {
    format!("int_h_pow_{alpha}")
}

pub fn trajectory_csv(traj: &FlowTrajectory) -> String {
    let mut s = FIXED_COLUMNS.join(",");
    for a in &traj.alphas {
        write!(s, ",{}", accumulator_column(*a)).unwrap();
    }
    s.push('\n');
    for (i, r) in traj.records.iter().enumerate() {
        write!(
            s,
            "{i},{},{},{},{},{},{},{},{},{},{}",
            r.time,
            r.dt,
            r.min_h,
            r.max_h,
            r.max_h_pow,
            r.argmax_vertex,
            r.min_principal,
            r.area,
            r.mean_radius,
            r.quality
        )
        .unwrap();
        for acc in &r.accumulators {
            write!(s, ",{acc}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn plot_script(traj: &FlowTrajectory) -> String {
    let mut s = String::from(
        "# gnuplot -p plot.gp\n\
         set datafile separator ','\n\
         set key top left\n\
         set xlabel 't'\n\
         set multiplot layout 2,2\n\
         set logscale y\n\
         plot 'trajectory.csv' using 2:5 skip 1 with lines title 'max H', \\\n     '' using 2:4 skip 1 with lines title 'min H'\n\
         unset logscale y\n\
         plot 'trajectory.csv' using 2:9 skip 1 with lines title 'area'\n\
         plot 'trajectory.csv' using 2:11 skip 1 with lines title 'triangle quality'\n",
    );
    if traj.alphas.is_empty() {
        s.push_str("plot 'trajectory.csv' using 2:10 skip 1 with lines title 'mean radius'\n");
    } else {
        s.push_str("set logscale y\nplot ");
        let parts: Vec<String> = traj
            .alphas
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let file = if j == 0 { "'trajectory.csv'" } else { "''" };
                format!(
                    "{file} using 2:{} skip 1 with lines title 'int int H^{a}'",
                    FIXED_COLUMNS.len() + j + 1
                )
            })
            .collect();
        s.push_str(&parts.join(", \\\n     "));
        s.push_str("\nunset logscale y\n");
    }
    s.push_str("unset multiplot\n");
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestFiles {
    pub trajectory: &'static str,
    pub snapshot_index: &'static str,
    pub report: &'static str,
    pub plot: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub document: &'static str,
    pub format_version: u32,
    pub n: usize,
    pub k: u32,
    pub alphas: &'a [f64],
    pub termination: Termination,
    pub start_time: f64,
    pub final_time: f64,
    pub steps: usize,
    pub snapshot_count: usize,
    pub files: ManifestFiles,
    pub config: &'a RunConfig,
}

/// The part of the manifest needed to rebuild a trajectory.
#[derive(Debug, Deserialize)]
struct ManifestHead {
    format_version: u32,
    n: usize,
    k: u32,
    alphas: Vec<f64>,
    termination: Termination,
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn snapshot_name(i: usize) -> String {
    format!("snapshot_{i:05}.off")
}

/// Writes everything except the report.
pub fn write_trajectory_dir(
    dir: &Path,
    traj: &FlowTrajectory,
    config: &RunConfig,
) -> CliResult<()> {
    let snaps = dir.join(SNAPSHOT_DIR);
    std::fs::create_dir_all(&snaps)
        .map_err(|e| CliError::io(format!("creating {}", snaps.display()), e))?;
    write_file(&dir.join(TRAJECTORY_CSV), &trajectory_csv(traj))?;
    let mut index = String::from("index,t,file\n");
    for (i, s) in traj.states.iter().enumerate() {
        let name = snapshot_name(i);
        write_off(&s.mesh, &snaps.join(&name))?;
        writeln!(index, "{i},{},{name}", s.time).unwrap();
    }
    write_file(&dir.join(SNAPSHOT_INDEX), &index)?;
    write_file(&dir.join(PLOT), &plot_script(traj))?;
    let manifest = Manifest {
        document: "manifest",
        format_version: FORMAT_VERSION,
        n: traj.n,
        k: traj.k,
        alphas: &traj.alphas,
        termination: traj.termination,
        start_time: traj.start_time(),
        final_time: traj.final_time(),
        steps: traj.records.len(),
        snapshot_count: traj.states.len(),
        files: ManifestFiles {
            trajectory: TRAJECTORY_CSV,
            snapshot_index: SNAPSHOT_INDEX,
            report: REPORT,
            plot: PLOT,
        },
        config,
    };
    write_file(&dir.join(MANIFEST), &to_json_pretty(&manifest))
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("reading {}", path.display()), e))
}

fn bad(path: &Path, line: usize, what: impl std::fmt::Display) -> CliError {
    CliError::TrajectoryFormat(format!("{}:{line}: {what}", path.display()))
}

fn parse_records(path: &Path, text: &str, alphas: &[f64]) -> CliResult<Vec<StepRecord>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad(path, 1, "empty file"))?;
    let mut expected: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    expected.extend(alphas.iter().map(|a| accumulator_column(*a)));
    if header.split(',').collect::<Vec<_>>() != expected {
        return Err(bad(path, 1, "unexpected header"));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let ln = i + 2;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != expected.len() {
            return Err(bad(
                path,
                ln,
                format!("{} columns, expected {}", cols.len(), expected.len()),
            ));
        }
        let f = |j: usize| {
            cols[j]
                .parse::<f64>()
                .map_err(|_| bad(path, ln, format!("bad number {:?}", cols[j])))
        };
        out.push(StepRecord {
            time: f(1)?,
            dt: f(2)?,
            min_h: f(3)?,
            max_h: f(4)?,
            max_h_pow: f(5)?,
            argmax_vertex: cols[6]
                .parse()
                .map_err(|_| bad(path, ln, "bad vertex index"))?,
            min_principal: f(7)?,
            area: f(8)?,
            mean_radius: f(9)?,
            quality: f(10)?,
            accumulators: (FIXED_COLUMNS.len()..cols.len())
                .map(f)
                .collect::<CliResult<_>>()?,
        });
    }
    Ok(out)
}

/// Rebuilds a trajectory (records, snapshots and geometry) from a directory written by [`write_trajectory_dir`].
pub fn load_trajectory_dir(dir: &Path) -> CliResult<FlowTrajectory> {
    let manifest_path = dir.join(MANIFEST);
    let head: ManifestHead = serde_json::from_str(&read_text(&manifest_path)?)
        .map_err(|e| CliError::TrajectoryFormat(format!("{}: {e}", manifest_path.display())))?;
    if head.format_version != FORMAT_VERSION {
        return Err(CliError::TrajectoryFormat(format!(
            "format version {} is not supported",
            head.format_version
        )));
    }
    let csv_path = dir.join(TRAJECTORY_CSV);
    let records = parse_records(&csv_path, &read_text(&csv_path)?, &head.alphas)?;
    let index_path = dir.join(SNAPSHOT_INDEX);
    let mut states = Vec::new();
    for (i, line) in read_text(&index_path)?.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(bad(&index_path, i + 1, "expected index,t,file"));
        }
        let t: f64 = cols[1]
            .parse()
            .map_err(|_| bad(&index_path, i + 1, "bad time"))?;
        let mesh_path: PathBuf = dir.join(SNAPSHOT_DIR).join(cols[2]);
        states.push(FlowState::new(read_mesh(&mesh_path)?, t)?);
    }
    Ok(FlowTrajectory {
        n: head.n,
        k: head.k,
        alphas: head.alphas,
        states,
        records,
        termination: head.termination,
    })
}
