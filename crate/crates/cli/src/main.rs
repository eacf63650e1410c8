use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hkflow_cli::commands::{
    cmd_blowup, cmd_constants, cmd_diagnose, cmd_flow, cmd_sphere, constants_text, sphere_text,
    MoserOverrides,
};
use hkflow_cli::config::{read_config_file, RunConfig};
use hkflow_cli::output::to_json_pretty;
use hkflow_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "hkflow",
    version,
    about = "H^k mean curvature flow on triangle meshes, with inequality diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Every config-file key, overridable from the command line.
#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// OFF/OBJ path, `icosphere:LEVEL:RADIUS` or `ellipsoid:A:B:C:LEVEL`.
    #[arg(long)]
    mesh: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    k: Option<String>,
    /// Comma-separated exponents of the accumulated space-time integrals.
    #[arg(long)]
    alphas: Option<String>,
    #[arg(long = "stop_t", visible_alias = "stop-t")]
    stop_t: Option<String>,
    #[arg(long = "blowup_threshold", visible_alias = "blowup-threshold")]
    blowup_threshold: Option<String>,
    #[arg(long = "snapshot_stride", visible_alias = "snapshot-stride")]
    snapshot_stride: Option<String>,
    #[arg(long = "dt_safety", visible_alias = "dt-safety")]
    dt_safety: Option<String>,
    /// Comma-separated check names, or `all`.
    #[arg(long)]
    checks: Option<String>,
    #[arg(long = "output_dir", visible_alias = "output-dir")]
    output_dir: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long = "pinching_c", visible_alias = "pinching-c")]
    pinching_c: Option<String>,
    #[arg(long = "monitor_alpha", visible_alias = "monitor-alpha")]
    monitor_alpha: Option<String>,
    #[arg(long)]
    beta0: Option<String>,
    #[arg(long = "moser_m", visible_alias = "moser-m")]
    moser_m: Option<String>,
    #[arg(long = "blowup_count", visible_alias = "blowup-count")]
    blowup_count: Option<String>,
}

impl RunArgs {
    fn into_config(self) -> CliResult<RunConfig> {
        let mut map = match &self.config {
            Some(p) => read_config_file(p)?,
            None => BTreeMap::new(),
        };
        let overrides = [
            ("mesh", self.mesh),
            ("n", self.n),
            ("k", self.k),
            ("alphas", self.alphas),
            ("stop_t", self.stop_t),
            ("blowup_threshold", self.blowup_threshold),
            ("snapshot_stride", self.snapshot_stride),
            ("dt_safety", self.dt_safety),
            ("checks", self.checks),
            ("output_dir", self.output_dir),
            ("seed", self.seed),
            ("pinching_c", self.pinching_c),
            ("monitor_alpha", self.monitor_alpha),
            ("beta0", self.beta0),
            ("moser_m", self.moser_m),
            ("blowup_count", self.blowup_count),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                map.insert(key.to_string(), v);
            }
        }
        RunConfig::from_map(&map)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the flow and write the trajectory, snapshots and report.
    Flow(RunArgs),
    /// Evaluate the static inequalities on one mesh.
    Diagnose(RunArgs),
    /// Print the Sobolev and Moser constants.
    Constants {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        k: u32,
        #[arg(long = "t", default_value_t = 1.0)]
        t: f64,
        /// Defaults to the area of the unit n-sphere.
        #[arg(long)]
        volume: Option<f64>,
        #[arg(long = "c0_inf", visible_alias = "c0-inf")]
        c0_inf: Option<f64>,
        #[arg(long)]
        c2: Option<f64>,
        #[arg(long = "h_norm", visible_alias = "h-norm")]
        h_norm: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Closed-form shrinking sphere.
    Sphere {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        k: u32,
        #[arg(long, default_value_t = 1.0)]
        r0: f64,
        /// Sample times, comma-separated.
        #[arg(long = "t", value_delimiter = ',')]
        times: Vec<f64>,
        /// Space-time norm exponents, comma-separated.
        #[arg(long = "alpha", value_delimiter = ',')]
        alphas: Vec<f64>,
        /// End of the space-time integrals; defaults to the maximal time.
        #[arg(long)]
        until: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Rescale a stored blow-up trajectory and rerun the extension monitor.
    Blowup {
        dir: PathBuf,
        #[arg(long, default_value_t = 3)]
        count: usize,
        #[arg(
            long = "pinching_c",
            visible_alias = "pinching-c",
            default_value_t = 0.1
        )]
        pinching_c: f64,
        #[arg(long)]
        alpha: Option<f64>,
    },
}

fn configure_threads() {
    if let Some(n) = std::env::var("HKFLOW_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if n > 0 {
            // only fails if a pool already exists, which cannot happen this early
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
}

fn execute(cli: Cli) -> CliResult<Option<hkflow::Error>> {
    match cli.command {
        Command::Flow(args) => {
            let config = args.into_config()?;
            let out = cmd_flow(&config)?;
            match &config.output_dir {
                Some(dir) => {
                    let t = &out.trajectory;
                    println!(
                        "termination={} final_time={} steps={} snapshots={} output_dir={}",
                        t.termination.as_str(),
                        t.final_time(),
                        t.records.len(),
                        t.states.len(),
                        dir.display()
                    );
                }
                None => print!("{}", out.report_json),
            }
            Ok(out.first_error)
        }
        Command::Diagnose(args) => {
            let config = args.into_config()?;
            let (json, err) = cmd_diagnose(&config)?;
            print!("{json}");
            Ok(err)
        }
        Command::Constants {
            n,
            k,
            t,
            volume,
            c0_inf,
            c2,
            h_norm,
            beta,
            q,
            json,
        } => {
            let volume = volume.unwrap_or_else(|| hkflow::analytic::unit_sphere_area(n));
            let doc = cmd_constants(
                n,
                k,
                t,
                volume,
                MoserOverrides {
                    c0_inf,
                    c2,
                    h_norm,
                    beta,
                    q,
                },
            )?;
            if json {
                print!("{}", to_json_pretty(&doc));
            } else {
                print!("{}", constants_text(&doc));
            }
            Ok(None)
        }
        Command::Sphere {
            n,
            k,
            r0,
            times,
            alphas,
            until,
            json,
        } => {
            let doc = cmd_sphere(n, k, r0, &times, &alphas, until)?;
            if json {
                print!("{}", to_json_pretty(&doc));
            } else {
                print!("{}", sphere_text(&doc));
            }
            Ok(None)
        }
        Command::Blowup {
            dir,
            count,
            pinching_c,
            alpha,
        } => {
            let doc = cmd_blowup(&dir, count, pinching_c, alpha)?;
            print!("{}", to_json_pretty(&doc));
            Ok(None)
        }
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(module_error)) => fail(&CliError::Core(module_error)),
        Err(e) => fail(&e),
    }
}
