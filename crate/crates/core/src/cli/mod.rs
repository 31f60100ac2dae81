//! Configuration, file formats and the command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 the run was
//! aborted by a step failure (artifacts up to the failure are written),
//! 3 the verification suite found a failing check.

pub mod config;
pub mod series;
pub mod snapshot;
pub mod verify;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::calculus::ambient_norm;
use crate::charts::ChartAtlas;
use crate::diagnostics::{
    check_initial_conditions, concentration_scan, fit_decay, ConditionCertificate, DecayFit,
    DecayQuantity,
};
use crate::energetics::{energy_report, tension};
use crate::error::{Error, Result};
use crate::evolve::{run_with, RunMonitors, RunWarning, Trajectory};

pub use config::{build_initial, build_reference, RunConfig};
pub use series::{read_column, write_series, COLUMNS};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_ABORTED: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "nematic-flow",
    version,
    about = "Nematic liquid-crystal flow on the sphere"
)]
pub struct Cli {
    /// Worker threads for data-parallel sweeps (default: all cores).
    #[arg(long, global = true, value_name = "K")]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation; writes the CSV series, snapshots and a manifest.
    Run {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        /// Overrides `output.directory`.
        #[arg(long, value_name = "DIR")]
        output: Option<PathBuf>,
    },
    /// Energies, degree and tension of a snapshot.
    Energy { snapshot: PathBuf },
    /// Condition certificate for the configured initial data.
    Check {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        /// Also write `certificate.json` here.
        #[arg(long, value_name = "DIR")]
        output: Option<PathBuf>,
    },
    /// Exponential decay fit of one CSV column.
    Fit {
        csv: PathBuf,
        #[arg(long, value_name = "NAME")]
        quantity: String,
        #[arg(long, value_name = "A:B", value_parser = parse_window)]
        window: (f64, f64),
    },
    /// Largest local energy over geodesic balls of a snapshot.
    Scan {
        snapshot: PathBuf,
        #[arg(long, value_name = "R")]
        radius: f64,
    },
    /// Write the configured initial state as a snapshot.
    MakeInitial {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        #[arg(long, value_name = "DIR")]
        output: Option<PathBuf>,
    },
    /// Run the built-in oracle suite.
    Verify {
        /// Only N = 65; order-of-convergence checks are skipped.
        #[arg(long)]
        quick: bool,
        /// Scale the Christoffel table (fault injection for testing the suite).
        #[arg(long, hide = true)]
        corrupt_christoffel: Option<f64>,
    },
}

fn parse_window(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected A:B")?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad start {a:?}"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad end {b:?}"))?;
    if !(a < b) {
        return Err(format!("empty window {a}:{b}"));
    }
    Ok((a, b))
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct AtlasEntry {
    pub n: usize,
    pub extent: f64,
    pub checksum: String,
}

/// Everything needed to audit a run: the config echo, atlas digest,
/// written files with digests, warnings and step statistics.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub atlas: AtlasEntry,
    pub files: Vec<FileEntry>,
    pub steps: usize,
    pub dt: f64,
    pub max_div_ratio: f64,
    pub max_mean_ratio: f64,
    pub warnings: Vec<RunWarning>,
    pub aborted: Option<RunWarning>,
    pub decay_fit: Option<DecayFit>,
}

#[derive(Debug)]
pub struct RunArtifacts {
    pub trajectory: Trajectory,
    pub directory: PathBuf,
    pub manifest: Manifest,
}

fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

/// Runs `cfg` and writes its artifacts into `dir`.
pub fn execute_run(cfg: &RunConfig, dir: &Path) -> Result<RunArtifacts> {
    let atlas = cfg.build_atlas()?;
    let initial = build_initial(&atlas, &cfg.initial_data)?;
    let opts = RunMonitors {
        reference: build_reference(&atlas, cfg)?,
        scan_radius: cfg.diagnostics.scan_radius,
    };
    let traj = run_with(&atlas, &initial, &cfg.scheme, &opts)?;
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();

    let csv_path = dir.join(&cfg.output.csv);
    write_series(BufWriter::new(File::create(&csv_path)?), &traj)?;
    files.push(FileEntry {
        name: cfg.output.csv.clone(),
        sha256: sha256_file(&csv_path)?,
    });
    for (i, s) in traj.snapshots.iter().enumerate() {
        let name = format!("{}_{i:04}.els2", cfg.output.snapshot_prefix);
        let path = dir.join(&name);
        write_snapshot(&path, &atlas, s)?;
        files.push(FileEntry {
            name,
            sha256: sha256_file(&path)?,
        });
    }

    let decay_fit = match (cfg.diagnostics.decay_window, opts.reference.is_some()) {
        (Some([a, b]), true) => {
            let series = traj.series(|_, m| m.director_l2_error);
            fit_decay(&series, (a, b), DecayQuantity::DirectorL2Error).ok()
        }
        _ => None,
    };
    let manifest = Manifest {
        config: cfg.clone(),
        atlas: AtlasEntry {
            n: atlas.resolution(),
            extent: atlas.extent(),
            checksum: atlas.checksum(),
        },
        files,
        steps: traj.steps,
        dt: traj.dt,
        max_div_ratio: traj.max_div_ratio,
        max_mean_ratio: traj.max_mean_ratio,
        warnings: traj.warnings.clone(),
        aborted: traj.aborted.clone(),
        decay_fit,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), text)?;
    Ok(RunArtifacts {
        trajectory: traj,
        directory: dir.to_path_buf(),
        manifest,
    })
}

/// Certificate for the configured initial data.
pub fn execute_check(cfg: &RunConfig) -> Result<ConditionCertificate> {
    let atlas = cfg.build_atlas()?;
    let state = build_initial(&atlas, &cfg.initial_data)?;
    let profile = cfg.constants(&atlas)?;
    Ok(check_initial_conditions(
        &atlas,
        &state,
        &profile,
        cfg.diagnostics.margin,
    ))
}

pub fn format_certificate(cert: &ConditionCertificate) -> String {
    let mut s = String::new();
    let p = &cert.profile;
    s += &format!(
        "constants (relative to configured profile, rigorous = {}): C_p = {:e}, C1 = {:e}, C2 = {:e}, C_L = {:e}, C0 = {:e}, eps0 = {:e}\n",
        p.rigorous, p.c_p, p.c_lady1, p.c_lady2, p.c_l, p.c0_topping, p.eps0_topping
    );
    for (name, c) in cert.conditions() {
        let op = if c.strict { "<" } else { "<=" };
        s += &format!(
            "{name:<16} {:e} {op} {:e}  margin {:e}  {:?}\n",
            c.lhs, c.rhs, c.margin, c.verdict
        );
    }
    s += &format!("min d3 = {:e}\n", cert.min_d3);
    s += &format!("log lhs of xu_zhang = {:e}\n", cert.xu_zhang_log_lhs);
    s
}

fn load_snapshot_atlas(path: &Path) -> Result<(ChartAtlas, Snapshot)> {
    let snap = read_snapshot(path)?;
    let atlas = snap.atlas()?;
    Ok((atlas, snap))
}

fn command(cmd: Command, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Run { config, output } => {
            let cfg = RunConfig::load(&config)?;
            let dir = output.unwrap_or_else(|| cfg.output.directory.clone());
            let art = execute_run(&cfg, &dir)?;
            let t = &art.trajectory;
            writeln!(
                out,
                "steps {}  dt {:e}  reports {}",
                t.steps,
                t.dt,
                t.reports.len()
            )?;
            if let Some(r) = t.reports.last() {
                writeln!(
                    out,
                    "final t {:e}  E {:e}  kinetic {:e}",
                    r.time, r.dirichlet, r.kinetic
                )?;
            }
            if let Some(f) = &art.manifest.decay_fit {
                writeln!(
                    out,
                    "decay fit: C1 {:e}  C2 {:e}  r2 {:?}",
                    f.c1, f.c2, f.r_squared
                )?;
            }
            for w in &t.warnings {
                writeln!(out, "warning t={:e} {:?}: {}", w.time, w.kind, w.message)?;
            }
            writeln!(out, "wrote {}", art.directory.display())?;
            if let Some(w) = &t.aborted {
                writeln!(out, "aborted at t={:e}: {}", w.time, w.message)?;
                return Ok(EXIT_ABORTED);
            }
            Ok(EXIT_OK)
        }
        Command::Energy { snapshot } => {
            let (atlas, snap) = load_snapshot_atlas(&snapshot)?;
            let r = energy_report(&atlas, &snap.state);
            let tau = ambient_norm(&atlas, &tension(&atlas, &snap.state.director));
            writeln!(out, "t          {:e}", r.time)?;
            writeln!(out, "E          {:e}", r.dirichlet)?;
            writeln!(out, "E_del      {:e}", r.e_del)?;
            writeln!(out, "E_delbar   {:e}", r.e_delbar)?;
            writeln!(out, "degree_raw {:e}", r.degree_raw)?;
            writeln!(out, "degree     {}", r.degree)?;
            writeln!(out, "kinetic    {:e}", r.kinetic)?;
            writeln!(out, "tension    {tau:e}")?;
            Ok(EXIT_OK)
        }
        Command::Check { config, output } => {
            let cfg = RunConfig::load(&config)?;
            let cert = execute_check(&cfg)?;
            write!(out, "{}", format_certificate(&cert))?;
            if let Some(dir) = output {
                std::fs::create_dir_all(&dir)?;
                let text = serde_json::to_string_pretty(&cert)
                    .map_err(|e| Error::Config(e.to_string()))?;
                std::fs::write(dir.join("certificate.json"), text)?;
            }
            Ok(EXIT_OK)
        }
        Command::Fit {
            csv,
            quantity,
            window,
        } => {
            let q = DecayQuantity::parse(&quantity)
                .ok_or_else(|| Error::Config(format!("unknown quantity {quantity:?}")))?;
            let series = read_column(&csv, q.column())?;
            let f = fit_decay(&series, window, q)?;
            writeln!(
                out,
                "quantity {:?}  window [{}, {}]  samples {}",
                q, window.0, window.1, f.samples
            )?;
            writeln!(out, "C1 {:e}", f.c1)?;
            writeln!(out, "C2 {:e}", f.c2)?;
            match f.r_squared {
                Some(r) => writeln!(out, "r2 {r:e}")?,
                None => writeln!(out, "r2 undefined (constant series)")?,
            }
            Ok(EXIT_OK)
        }
        Command::Scan { snapshot, radius } => {
            if !(radius > 0.0 && radius <= std::f64::consts::PI) {
                return Err(Error::Config(format!("radius {radius} outside (0, pi]")));
            }
            let (atlas, snap) = load_snapshot_atlas(&snapshot)?;
            let r = concentration_scan(&atlas, &snap.state, radius);
            let c = r.argmax_center;
            writeln!(out, "radius {:e}", r.radius)?;
            writeln!(out, "max local energy {:e}", r.max_local_energy)?;
            writeln!(out, "ratio to 8pi {:e}", r.threshold_ratio)?;
            writeln!(out, "center ({:.6}, {:.6}, {:.6})", c[0], c[1], c[2])?;
            writeln!(out, "(maximum over 162 icosahedral centers)")?;
            Ok(EXIT_OK)
        }
        Command::MakeInitial { config, output } => {
            let cfg = RunConfig::load(&config)?;
            let dir = output.unwrap_or_else(|| cfg.output.directory.clone());
            let atlas = cfg.build_atlas()?;
            let state = build_initial(&atlas, &cfg.initial_data)?;
            std::fs::create_dir_all(&dir)?;
            let path = dir.join(format!("{}_initial.els2", cfg.output.snapshot_prefix));
            write_snapshot(&path, &atlas, &state)?;
            writeln!(out, "wrote {}", path.display())?;
            Ok(EXIT_OK)
        }
        Command::Verify {
            quick,
            corrupt_christoffel,
        } => {
            let opts = verify::VerifyOptions {
                resolutions: if quick { vec![65] } else { vec![65, 129] },
                christoffel_factor: corrupt_christoffel,
            };
            let report = verify::run_suite(&opts)?;
            for c in &report.checks {
                writeln!(out, "{c}")?;
            }
            if report.passed() {
                writeln!(out, "all checks passed")?;
                Ok(EXIT_OK)
            } else {
                writeln!(out, "failed:")?;
                for c in report.failures() {
                    writeln!(out, "  {}", c.name)?;
                }
                Ok(EXIT_VERIFY)
            }
        }
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code. Errors go to `err`.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_CONFIG;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    let result = match cli.workers {
        Some(k) if k >= 1 => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => {
                let mut buf = Vec::new();
                let r = pool.install(|| command(cli.command, &mut buf));
                let _ = out.write_all(&buf);
                r
            }
            Err(e) => Err(Error::Config(format!("worker pool: {e}"))),
        },
        Some(_) => Err(Error::Config("--workers must be >= 1".into())),
        None => command(cli.command, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_CONFIG
        }
    }
}
