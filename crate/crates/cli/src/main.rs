use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use nscert::constants::{
    bilinear_constant, default_constant, BilinearConstant, CutoffPolicy, Lattice,
};
use nscert::error::Error;
use nscert::scenario::{certify, reproduce_published, run, RunOptions, Scenario};

/// Certified error bounds for Galerkin approximations of Navier-Stokes on the torus.
#[derive(Parser)]
#[command(name = "nscert", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the bilinear constants K_n with their bracket evidence.
    Constants {
        /// Space dimension.
        #[arg(long, default_value_t = 3)]
        d: usize,
        /// Comma-separated Sobolev indices.
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<f64>,
        /// Cutoff for the Sigma_n lattice sum.
        #[arg(long)]
        lambda: Option<f64>,
        /// Half-width of the box searched for the supremum.
        #[arg(long = "box")]
        search_box: Option<u32>,
        /// Include the zero mode in the lattice.
        #[arg(long)]
        full_lattice: bool,
    },
    /// Certify a scenario and print the report.
    Certify {
        scenario: PathBuf,
        /// Write the tube samples `t,tube` of the issued certificate here.
        #[arg(long)]
        tube_csv: Option<PathBuf>,
        /// Write the numerical grid solution here when it is used.
        #[arg(long)]
        grid_csv: Option<PathBuf>,
    },
    /// Integrate the Galerkin system and compare with a reference resolution.
    Run {
        scenario: PathBuf,
        /// Radius of the Galerkin box.
        #[arg(long, default_value_t = 2)]
        g_radius: u32,
        /// Radius of the reference box; 0 disables the reference run.
        #[arg(long, default_value_t = 4)]
        ref_radius: u32,
        /// Final time, capped by the certified horizon.
        #[arg(long, default_value_t = 2.0)]
        t_end: f64,
        /// Number of containment samples.
        #[arg(long, default_value_t = 20)]
        samples: usize,
        /// Run even when no certificate is issued.
        #[arg(long)]
        force: bool,
        /// Directory for the CSV outputs.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Recompute every published value and print a pass/fail table.
    ReproducePaper,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let refused = e
                .downcast_ref::<Error>()
                .is_some_and(|e| matches!(e, Error::Refused(_) | Error::NoCertificate(_)));
            ExitCode::from(if refused { 2 } else { 1 })
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Constants {
            d,
            n,
            lambda,
            search_box,
            full_lattice,
        } => {
            let lattice = if full_lattice {
                Lattice::Full
            } else {
                Lattice::Punctured
            };
            cmd_constants(d, &n, lambda, search_box, lattice)
        }
        Command::Certify {
            scenario,
            tube_csv,
            grid_csv,
        } => cmd_certify(&scenario, tube_csv, grid_csv),
        Command::Run {
            scenario,
            g_radius,
            ref_radius,
            t_end,
            samples,
            force,
            out_dir,
        } => {
            let opts = RunOptions {
                g_radius,
                ref_radius: (ref_radius > 0).then_some(ref_radius),
                t_end,
                samples,
                force,
            };
            cmd_run(&scenario, &opts, &out_dir)
        }
        Command::ReproducePaper => cmd_reproduce(),
    }
}

fn cmd_constants(
    d: usize,
    ns: &[f64],
    lambda: Option<f64>,
    search_box: Option<u32>,
    lattice: Lattice,
) -> Result<ExitCode> {
    let mut results: Vec<BilinearConstant> = Vec::new();
    for &n in ns {
        let c = if lambda.is_none() && search_box.is_none() {
            default_constant(n, d, lattice)?
        } else {
            let mut policy = CutoffPolicy::default_for(n, d);
            if let Some(l) = lambda {
                policy.lambda_sigma = l;
            }
            if let Some(b) = search_box {
                policy.search_box = b;
            }
            bilinear_constant(n, d, lattice, &policy)?
        };
        results.push(c);
    }
    let mut out = io::stdout().lock();
    writeln!(
        out,
        "n,d,lattice,K_n,sup_box_lo,sup_box_hi,sigma_lo,sigma_hi"
    )?;
    for c in &results {
        writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
            c.n, c.dim, c.lattice, c.value, c.sup_box.lo, c.sup_box.hi, c.sigma.lo, c.sigma.hi
        )?;
    }
    for c in &results {
        eprintln!(
            "K_{} = {} (d = {}): sup over |k_i| <= {} attained at {:?}, Sigma_n bracket [{:.5}, {:.5}] with lambda = {}",
            c.n, c.value, c.dim, c.policy.search_box, c.argsup, c.sigma.lo, c.sigma.hi, c.policy.lambda_sigma
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn cmd_certify(
    path: &Path,
    tube_csv: Option<PathBuf>,
    grid_csv: Option<PathBuf>,
) -> Result<ExitCode> {
    let scenario = Scenario::load(path)?;
    let report = certify(&scenario)?;
    print!("{}", report.render());
    if let Some(p) = tube_csv {
        let cert = match (&report.galerkin, &report.analysis, &report.zero) {
            (Some(Ok(c)), _, _) => Some(c.clone()),
            (None, Ok(a), _) => a
                .certificate(nscert::field::GalerkinSet::cube(scenario.d, 2).resolution())
                .ok(),
            (_, _, Ok(c)) => Some(c.clone()),
            _ => None,
        };
        if let Some(c) = cert {
            let span = if c.horizon.is_finite() {
                c.horizon
            } else {
                5.0
            };
            c.write_csv(create(&p)?, span, 101)?;
        }
    }
    if let (Some(p), Some(g)) = (grid_csv, &report.grid) {
        g.write_csv(create(&p)?)?;
    }
    Ok(ExitCode::from(if report.certified() { 0 } else { 2 }))
}

fn cmd_run(path: &Path, opts: &RunOptions, out_dir: &Path) -> Result<ExitCode> {
    let scenario = Scenario::load(path)?;
    std::fs::create_dir_all(out_dir)?;
    let report = run(&scenario, opts)?;
    let (n, p) = (scenario.n, scenario.p);
    report
        .trajectory
        .write_csv(create(&out_dir.join("trajectory.csv"))?, n, p)?;
    if let Some(r) = &report.reference {
        r.write_csv(create(&out_dir.join("reference.csv"))?, n, p)?;
    }
    if let Some(c) = &report.certificate {
        c.write_csv(
            create(&out_dir.join("tube.csv"))?,
            report.trajectory.end(),
            101,
        )?;
    }
    if !report.containment.is_empty() {
        report.write_containment_csv(create(&out_dir.join("containment.csv"))?)?;
    }
    println!("admissible: {}", report.admissible);
    println!(
        "integrated to t = {} in {} steps",
        report.trajectory.end(),
        report.trajectory.times().len().saturating_sub(1)
    );
    match report.margin {
        Some(m) => println!("containment margin: {m:.6e}"),
        None => println!("containment margin: not available"),
    }
    println!("outputs written to {}", out_dir.display());
    Ok(ExitCode::from(if report.margin.is_none_or(|m| m >= 0.0) {
        0
    } else {
        2
    }))
}

/// Fixed six decimals with trailing zeros removed.
fn trim(v: f64) -> String {
    let s = format!("{v:.6}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn cmd_reproduce() -> Result<ExitCode> {
    let rows = reproduce_published()?;
    let mut out = io::stdout().lock();
    writeln!(
        out,
        "{:<40} {:>12} {:>12} {:>10}  result",
        "quantity", "published", "computed", "tolerance"
    )?;
    for r in &rows {
        writeln!(
            out,
            "{:<40} {:>12} {:>12.6} {:>10.0e}  {}",
            r.label,
            trim(r.expected),
            r.computed,
            r.tolerance,
            if r.pass { "PASS" } else { "FAIL" }
        )?;
    }
    let failed = rows.iter().filter(|r| !r.pass).count();
    writeln!(
        out,
        "{} of {} values reproduced",
        rows.len() - failed,
        rows.len()
    )?;
    Ok(ExitCode::from(if failed == 0 { 0 } else { 2 }))
}
