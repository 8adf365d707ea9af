//! Command-line front end: basis export, path simulation, the verification
//! suite, chaos projections and report tables.
//!
//! Exit codes: 0 on success, 1 when a verification check fails, 2 on
//! configuration errors.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use levychaos::{
    chaos_coefficients, ChaosBasis, Error, ExperimentConfig, JumpMeasure, MartingaleFamily,
    McOptions, MuMeasure, PathGenerator, PathSample, Timeline,
};

#[derive(Parser)]
#[command(name = "levychaos", version, about = "Martingale families from Levy characteristics: simulation, verification and chaos projections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Configuration file (key = value schema; see README)
    #[arg(long, alias = "triplet")]
    config: Option<PathBuf>,
    /// Master seed (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo path count (overrides the config)
    #[arg(long)]
    paths: Option<usize>,
    /// Chaos order cap (overrides the config)
    #[arg(long)]
    order: Option<usize>,
    /// Time grid step (overrides the config)
    #[arg(long)]
    grid: Option<f64>,
    /// Truncation window for density jump measures (overrides the config)
    #[arg(long)]
    eps: Option<f64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Export the configured function system as CSV
    Basis {
        #[command(flatten)]
        common: CommonOpts,
        /// Which system to export (overrides the config basis kind)
        #[arg(long)]
        basis: Option<String>,
        /// Orthonormalize before export
        #[arg(long)]
        orthonormal: bool,
    },
    /// Simulate martingale paths and dump them
    Simulate {
        #[command(flatten)]
        common: CommonOpts,
        /// Generator of the simulated martingale, as `basis:<index>`
        #[arg(long, default_value = "basis:0")]
        f: String,
        /// Output format: csv or bin
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Run the verification suite and write the report
    Verify {
        #[command(flatten)]
        common: CommonOpts,
        /// Comma-separated check families (overrides the config suite)
        #[arg(long)]
        suite: Option<String>,
        /// Iterated-integral spec files: each is run as an isometry check of
        /// the configured family and appended to the report
        #[arg(long = "spec-file")]
        spec_files: Vec<PathBuf>,
    },
    /// Project a target functional onto the chaos basis
    Project {
        #[command(flatten)]
        common: CommonOpts,
        /// Target expression: `member:<i>`, `member_sq:<i>` or `const:<c>`
        #[arg(long, default_value = "member_sq:0")]
        target: String,
        /// Which system generates the family (overrides the config)
        #[arg(long)]
        system: Option<String>,
    },
    /// Re-emit CSV tables from an existing report JSON
    Report {
        /// Path to a report.json produced by `verify`
        #[arg(long)]
        report: PathBuf,
        /// Output directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            // anything that stops a run from starting is a configuration or
            // environment problem: exit 2 (check failures exit 1 from `run`)
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_config(common: &CommonOpts) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::ConfigInvalid(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => {
            let mut cfg = ExperimentConfig::default();
            if common.seed.is_none() {
                return Err(Error::ConfigInvalid(
                    "no --config given: --seed is mandatory (no wall-clock default)".into(),
                )
                .into());
            }
            cfg.config_hash = "default".into();
            cfg
        }
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(paths) = common.paths {
        cfg.n_paths = paths;
    }
    if let Some(order) = common.order {
        cfg.order_cap = order;
    }
    if let Some(grid) = common.grid {
        cfg.grid_step = grid;
    }
    if let Some(eps) = common.eps {
        if let levychaos::NuSpec::Density { truncation_eps, .. } = &mut cfg.nu {
            *truncation_eps = eps;
        }
    }
    if let Some(out) = &common.out {
        cfg.out_dir = Some(out.display().to_string());
    }
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.clone().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"))
}

fn parse_basis_kind(cfg: &mut ExperimentConfig, basis: &Option<String>) -> anyhow::Result<()> {
    if let Some(name) = basis {
        cfg.basis = match name.as_str() {
            "teugels" => levychaos::BasisKind::Teugels { n_max: 2 },
            "hermite" => levychaos::BasisKind::Hermite { n_max: 3 },
            "haar" => levychaos::BasisKind::Haar { j_min: 0, j_max: 2, k_min: -2, k_max: 2 },
            "indicator" => {
                levychaos::BasisKind::Indicator { cells: vec![(0.5, 1.5), (1.5, 2.5)], at_zero: 1.0 }
            }
            other => {
                return Err(Error::ConfigInvalid(format!(
                    "unknown basis '{other}' (known: teugels, hermite, haar, indicator)"
                ))
                .into())
            }
        };
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Basis { common, basis, orthonormal } => {
            let mut cfg = load_config(&common)?;
            parse_basis_kind(&mut cfg, &basis)?;
            let triplet = cfg.triplet()?;
            let mu = triplet.mu();
            let functions = if orthonormal {
                cfg.orthonormal_system(&mu)?.members().to_vec()
            } else {
                cfg.basis_functions(&mu)?
            };
            let dir = out_dir(&cfg);
            std::fs::create_dir_all(&dir).map_err(Error::IoFailure)?;
            let path = dir.join("basis.csv");
            write_basis_csv(&path, &functions, &mu)?;
            println!("wrote {} members to {}", functions.len(), path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate { common, f, format } => {
            let cfg = load_config(&common)?;
            let triplet = cfg.triplet()?;
            let mu = triplet.mu();
            let functions = cfg.basis_functions(&mu)?;
            let index: usize = f
                .strip_prefix("basis:")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::ConfigInvalid(format!("--f must look like basis:<index>, got '{f}'")))?;
            let func = functions
                .get(index)
                .ok_or_else(|| {
                    Error::ConfigInvalid(format!("basis index {index} out of range 0..{}", functions.len()))
                })?
                .clone();
            let family = MartingaleFamily::new(triplet, vec![func])?;
            let gen = PathGenerator::new(family.triplet(), cfg.horizon, cfg.grid_step)?;
            let dir = out_dir(&cfg);
            std::fs::create_dir_all(&dir).map_err(Error::IoFailure)?;
            match format.as_str() {
                "csv" => {
                    for p in 0..cfg.n_paths {
                        let path = gen.path(levychaos::path_seed(cfg.seed, p as u64));
                        let tl = Timeline::from_path(&path);
                        let series = family.series_all(&tl)?.remove(0);
                        let file = std::fs::File::create(dir.join(format!("path_{p:05}.csv")))
                            .map_err(Error::IoFailure)?;
                        series.write_csv(std::io::BufWriter::new(file))?;
                    }
                    println!("wrote {} CSV paths to {}", cfg.n_paths, dir.display());
                }
                "bin" => {
                    let out = dir.join("paths.bin");
                    write_binary_batch(&out, &family, &gen, cfg.n_paths, cfg.seed)?;
                    println!("wrote {} binary paths to {}", cfg.n_paths, out.display());
                }
                other => {
                    return Err(Error::ConfigInvalid(format!("--format must be csv or bin, got '{other}'")).into())
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { common, suite, spec_files } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = suite {
                let text = format!("version = 1\nseed = {}\nsuite = {}\n", cfg.seed, s);
                cfg.suite = ExperimentConfig::parse(&text)?.suite;
            }
            let mut report = levychaos::run_suite(&cfg)?;
            for file in &spec_files {
                report.checks.push(run_spec_file(&cfg, file)?);
            }
            let dir = out_dir(&cfg);
            let files = levychaos::suite::emit_tables(&report, &dir)?;
            for c in &report.checks {
                let status = if c.pass { "PASS" } else { "FAIL" };
                println!("[{status}] {} :: {}", c.id, c.property);
            }
            println!("report: {}", files[0].display());
            if report.all_pass() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
        Command::Project { common, target, system } => {
            let mut cfg = load_config(&common)?;
            parse_basis_kind(&mut cfg, &system)?;
            let triplet = cfg.triplet()?;
            let mu = triplet.mu();
            let onb = cfg.orthonormal_system(&mu)?;
            let family = MartingaleFamily::from_orthonormal(triplet, &onb)?;
            let basis = ChaosBasis::new(&onb, cfg.horizon, cfg.chaos_depth, cfg.order_cap)?;
            let mc = McOptions::new(cfg.n_paths, cfg.seed, cfg.grid_step);
            let target_fn = parse_target(&target, family.len())?;
            let report = chaos_coefficients(&*target_fn, &target, &basis, &family, &mc)?;
            let dir = out_dir(&cfg);
            std::fs::create_dir_all(&dir).map_err(Error::IoFailure)?;
            let json_path = dir.join("projection.json");
            std::fs::write(&json_path, serde_json::to_string_pretty(&report)?).map_err(Error::IoFailure)?;
            let csv_path = dir.join("projection.csv");
            write_projection_csv(&csv_path, &report)?;
            for r in &report.residuals {
                println!(
                    "order <= {}: residual^2 = {:.6e} (noise floor {:.2e}, se {:.2e})",
                    r.order_cap, r.residual2, r.noise_floor, r.std_error
                );
            }
            println!("projection tables: {} / {}", json_path.display(), csv_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { report, out } => {
            let text = std::fs::read_to_string(&report).map_err(Error::IoFailure)?;
            let parsed: levychaos::VerificationReport = serde_json::from_str(&text)
                .map_err(|e| Error::ConfigInvalid(format!("cannot parse report: {e}")))?;
            let dir = out.unwrap_or_else(|| PathBuf::from("out"));
            let files = levychaos::suite::emit_tables(&parsed, &dir)?;
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Run an isometry check for a user-supplied iterated-integral spec against
/// the configured (orthonormalized) family.
fn run_spec_file(cfg: &ExperimentConfig, file: &Path) -> anyhow::Result<levychaos::CheckRecord> {
    let text = std::fs::read_to_string(file)
        .map_err(|e| Error::ConfigInvalid(format!("cannot read {}: {e}", file.display())))?;
    let spec = levychaos::IteratedSpec::parse(&text)?;
    let triplet = cfg.triplet()?;
    let mu = triplet.mu();
    let onb = cfg.orthonormal_system(&mu)?;
    for &i in &spec.indices {
        if i >= onb.len() {
            return Err(Error::ConfigInvalid(format!(
                "spec index {i} out of range for a {}-member system",
                onb.len()
            ))
            .into());
        }
    }
    let family = MartingaleFamily::from_orthonormal(triplet, &onb)?;
    let mc = McOptions::new(cfg.n_paths, cfg.seed, cfg.grid_step);
    let start = std::time::Instant::now();
    let out = levychaos::isometry_check(&spec, &spec, &family, cfg.horizon, &mc)?;
    let name = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(levychaos::CheckRecord {
        id: format!("userspec.{name}"),
        property: "second moment of the user spec equals its simplex moment".into(),
        kind: "statistical".into(),
        estimate: out.estimate,
        se_or_gap: out.std_error,
        reference: out.reference,
        z: Some(out.z),
        tolerance: 3.0,
        pass: out.z.abs() <= 3.0,
        runtime_ms: start.elapsed().as_millis() as u64,
    })
}

/// CSV export: atomic measures list the member values at every atom;
/// densities are sampled on a log grid.
fn write_basis_csv(path: &Path, functions: &[levychaos::TestFunction], mu: &MuMeasure) -> anyhow::Result<()> {
    let file = std::fs::File::create(path).map_err(Error::IoFailure)?;
    let mut out = std::io::BufWriter::new(file);
    match &mu.nu {
        JumpMeasure::Atomic { .. } => {
            let atoms = mu.nu.atoms().unwrap();
            write!(out, "member_index,at_zero").map_err(Error::IoFailure)?;
            for a in atoms {
                write!(out, ",value_at_{}", a.location).map_err(Error::IoFailure)?;
            }
            writeln!(out).map_err(Error::IoFailure)?;
            for (i, f) in functions.iter().enumerate() {
                write!(out, "{},{}", i, f.at_zero()).map_err(Error::IoFailure)?;
                for a in atoms {
                    write!(out, ",{}", f.jump_at(a.location)).map_err(Error::IoFailure)?;
                }
                writeln!(out).map_err(Error::IoFailure)?;
            }
        }
        JumpMeasure::Density { .. } => {
            writeln!(out, "member_index,x,value").map_err(Error::IoFailure)?;
            for (i, f) in functions.iter().enumerate() {
                writeln!(out, "{},0,{}", i, f.at_zero()).map_err(Error::IoFailure)?;
                for k in 0..256 {
                    let x = 10f64.powf(-3.0 + 4.0 * k as f64 / 255.0);
                    for s in [-1.0, 1.0] {
                        writeln!(out, "{},{},{}", i, s * x, f.jump_at(s * x)).map_err(Error::IoFailure)?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Binary batch layout: magic "LVCB", u32 version, u64 path count, then per
/// path a u64 point count, u64 jump count and (time, value, pre_value) f64
/// triplets. Little-endian throughout.
fn write_binary_batch(
    path: &Path,
    family: &MartingaleFamily,
    gen: &PathGenerator,
    n_paths: usize,
    seed: u64,
) -> anyhow::Result<()> {
    let file = std::fs::File::create(path).map_err(Error::IoFailure)?;
    let mut out = std::io::BufWriter::new(file);
    out.write_all(b"LVCB").map_err(Error::IoFailure)?;
    out.write_all(&1u32.to_le_bytes()).map_err(Error::IoFailure)?;
    out.write_all(&(n_paths as u64).to_le_bytes()).map_err(Error::IoFailure)?;
    for p in 0..n_paths {
        let levy = gen.path(levychaos::path_seed(seed, p as u64));
        let tl = Timeline::from_path(&levy);
        let series = family.series_all(&tl)?.remove(0);
        out.write_all(&(series.times().len() as u64).to_le_bytes()).map_err(Error::IoFailure)?;
        out.write_all(&(levy.jumps.len() as u64).to_le_bytes()).map_err(Error::IoFailure)?;
        for i in 0..series.times().len() {
            out.write_all(&series.times()[i].to_le_bytes()).map_err(Error::IoFailure)?;
            out.write_all(&series.value(i).to_le_bytes()).map_err(Error::IoFailure)?;
            out.write_all(&series.pre_value(i).to_le_bytes()).map_err(Error::IoFailure)?;
        }
    }
    Ok(())
}

fn write_projection_csv(path: &Path, report: &levychaos::ProjectionReport) -> anyhow::Result<()> {
    let file = std::fs::File::create(path).map_err(Error::IoFailure)?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "order,indices,cells,coefficient,std_error,second_moment").map_err(Error::IoFailure)?;
    for c in &report.coefficients {
        writeln!(
            out,
            "{},{:?},{:?},{},{},{}",
            c.order,
            c.indices.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" "),
            c.cells.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" "),
            c.coefficient,
            c.std_error,
            c.second_moment
        )
        .map_err(Error::IoFailure)?;
    }
    writeln!(out, "# order_cap,residual2,noise_floor,std_error").map_err(Error::IoFailure)?;
    for r in &report.residuals {
        writeln!(out, "# {},{},{},{}", r.order_cap, r.residual2, r.noise_floor, r.std_error)
            .map_err(Error::IoFailure)?;
    }
    Ok(())
}

type TargetFn = Box<dyn Fn(&PathSample<'_>) -> f64>;

/// Targets are measurable functionals of the member terminal values.
fn parse_target(expr: &str, n_members: usize) -> anyhow::Result<TargetFn> {
    let check = |i: usize| -> anyhow::Result<usize> {
        if i < n_members {
            Ok(i)
        } else {
            Err(Error::ConfigInvalid(format!("member index {i} out of range 0..{n_members}")).into())
        }
    };
    if let Some(rest) = expr.strip_prefix("member_sq:") {
        let i = check(rest.parse().map_err(|_| Error::ConfigInvalid(format!("bad target '{expr}'")))?)?;
        return Ok(Box::new(move |s: &PathSample<'_>| {
            let v = s.member_terminal(i);
            v * v
        }));
    }
    if let Some(rest) = expr.strip_prefix("member:") {
        let i = check(rest.parse().map_err(|_| Error::ConfigInvalid(format!("bad target '{expr}'")))?)?;
        return Ok(Box::new(move |s: &PathSample<'_>| s.member_terminal(i)));
    }
    if let Some(rest) = expr.strip_prefix("const:") {
        let c: f64 = rest.parse().map_err(|_| Error::ConfigInvalid(format!("bad target '{expr}'")))?;
        return Ok(Box::new(move |_| c));
    }
    Err(Error::ConfigInvalid(format!(
        "unknown target '{expr}' (known: member:<i>, member_sq:<i>, const:<c>)"
    ))
    .into())
}
