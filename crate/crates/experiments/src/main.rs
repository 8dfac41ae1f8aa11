use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use kslocal_core::diagnostics::stability_threshold;
use kslocal_core::linsolve::smallest_nonzero_eigenvalue;
use kslocal_core::mesh::check_admissibility;
use kslocal_core::scheme::{Motility, Schedule, SchemeParams};
use kslocal_experiments::config::{self, RunConfig, Testcase};
use kslocal_experiments::meshes::{build_mesh, parse_mesh_arg};
use kslocal_experiments::output::write_file;
use kslocal_experiments::testcases::run_config;

/// Finite volume solver for the chemotaxis system with local sensing.
#[derive(Debug, Parser)]
#[command(name = "kslocal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a preset or a configuration file.
    Run {
        /// Preset name or path to a TOML configuration.
        target: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Grid refinement study (testcase 1 by default).
    Converge {
        #[arg(default_value = "testcase1")]
        target: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Sweep over eps against the quasi-stationary run (testcase 2 by default).
    SweepEps {
        #[arg(default_value = "testcase2")]
        target: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// First nonzero eigenvalue of the finite volume Laplacian of a mesh.
    Eigen {
        /// interval:N[:L], disk:N[:R], square:N[:S], a .msh file, a preset or a config.
        mesh: String,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Admissibility report of a mesh.
    CheckMesh {
        mesh: String,
        #[arg(long, default_value_t = 0.1)]
        zeta: f64,
        /// Write the plain-text mesh dump here.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// List the presets.
    Presets,
}

#[derive(Debug, Args)]
struct Overrides {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use the full-size variant of a preset.
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    tfinal: Option<f64>,
}

fn load(target: &str, o: &Overrides) -> Result<RunConfig> {
    let mut c = config::load(target, o.paper_scale).with_context(|| format!("loading {target}"))?;
    if let Some(out) = &o.out {
        c.output.dir = out.clone();
    }
    if let Some(seed) = o.seed {
        c.seed = seed;
    }
    if let Some(dt) = o.dt {
        c.time.dt = dt;
    }
    if let Some(t) = o.tfinal {
        c.time.t_final = t;
    }
    c.validate()?;
    Ok(c)
}

fn execute(c: &RunConfig) -> Result<()> {
    let out = c.output.dir.clone();
    let manifest = run_config(c, &out)?;
    println!("wrote {}", out.join("manifest.json").display());
    if let Some(checks) = manifest.get("checks") {
        println!("{}", serde_json::to_string_pretty(checks)?);
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { target, overrides } => execute(&load(&target, &overrides)?),
        Command::Converge { target, overrides } => {
            let c = load(&target, &overrides)?;
            if c.testcase != Testcase::Testcase1 {
                bail!("{target} is not a convergence study");
            }
            execute(&c)
        }
        Command::SweepEps { target, overrides } => {
            let c = load(&target, &overrides)?;
            if c.testcase != Testcase::Testcase2 {
                bail!("{target} is not an eps sweep");
            }
            execute(&c)
        }
        Command::Eigen { mesh, beta, delta, tol } => {
            let spec = parse_mesh_arg(&mesh)?;
            let m = build_mesh(&spec, 0)?;
            let lambda = smallest_nonzero_eigenvalue(&m, tol)?;
            println!("cells {}", m.n_cells());
            println!("lambda1 {lambda}");
            if let (Some(beta), Some(delta)) = (beta, delta) {
                let params = SchemeParams::new(0.0, delta, beta, Motility::Exponential, Schedule::constant(1.0, 1)?);
                println!("threshold {}", stability_threshold(&m, &params)?);
            }
            Ok(())
        }
        Command::CheckMesh { mesh, zeta, dump } => {
            let spec = parse_mesh_arg(&mesh)?;
            let m = build_mesh(&spec, 0)?;
            let report = check_admissibility(&m, zeta);
            println!("cells {}", m.n_cells());
            println!("edges {}", m.edges().len());
            println!("size {}", m.size());
            println!("domain_measure {}", m.domain_measure());
            println!("connected {}", m.is_connected());
            println!("zeta {}", report.zeta);
            println!("worst_ratio {}", report.worst_ratio);
            println!("offending_edges {}", report.offending_edges.len());
            println!("admissible {}", report.ok);
            if let Some(path) = dump {
                write_file(&path, |w| m.write_dump(w))?;
            }
            if !report.ok {
                bail!("mesh is not admissible for zeta = {zeta}");
            }
            Ok(())
        }
        Command::Presets => {
            for name in config::preset_names() {
                println!("{name}");
            }
            Ok(())
        }
    }
}
