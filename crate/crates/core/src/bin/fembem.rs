use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fembem::case::{convergence_study, exit_code, run_case};
use fembem::config::CaseConfig;

#[derive(Parser)]
#[command(name = "fembem", version, about = "Symmetric FEM-BEM magnetostatics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads; FEMBEM_THREADS is read only when this flag is absent.
    #[arg(long, global = true, env = "FEMBEM_THREADS")]
    threads: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the first mesh level and its motion script.
    Run { config: PathBuf },
    /// Convergence study over all mesh levels.
    Study { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let (path, study) = match &cli.command {
        Command::Run { config } => (config, false),
        Command::Study { config } => (config, true),
    };
    let result = CaseConfig::load(path).and_then(|mut cfg| {
        if let Some(dir) = &cli.output {
            cfg.output.directory = std::path::absolute(dir)?;
        }
        if study {
            let r = convergence_study(&cfg)?;
            for row in &r.rows {
                println!(
                    "level {} h {:.4e} N_FEM {} N_BEM {} l2_norm {:.6e} l2_error {:.3e} iterations {} {}",
                    row.level, row.h, row.n_fem, row.n_bem, row.l2_norm, row.l2_error, row.iterations, row.warning
                );
            }
            if let Some((values, table)) = &r.sweep {
                println!("mu_r {values:?}");
                for (level, _, _, _, its) in table {
                    println!("level {level} iterations {its:?}");
                }
            }
            println!("{}", if r.monotone { "converged (monotone error)" } else { "NOT converged: non-monotone error" });
        } else {
            let r = run_case(&cfg)?;
            println!(
                "N_FEM {} N_BEM {} iterations {} l2_norm {:.6e}",
                r.n_fem, r.n_bem, r.solve.iterations, r.l2_norm
            );
            for s in &r.motion {
                println!("step {} iterations {}", s.step, s.iterations);
            }
            for f in &r.files {
                println!("wrote {}", f.display());
            }
        }
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
