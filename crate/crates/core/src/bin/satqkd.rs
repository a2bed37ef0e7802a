use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::{error, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use satqkd::plot::emit_plot_data;
use satqkd::scenario::Scenario;
use satqkd::turbulence::{reference_profile, REFERENCE_TARGETS};
use satqkd::{Error, Result};

#[derive(Parser)]
#[command(name = "satqkd", version, about = "Satellite-to-ground QKD link budget and key rate simulator")]
struct Cli {
    /// Overrides the seed given in the scenario file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "results")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every sweep point and write channel.csv, dv.csv and cv.csv.
    Run { config: PathBuf },
    /// Check a scenario file and report every problem found.
    Validate { config: PathBuf },
    /// Turn a result table into per-curve CSVs and a gnuplot script.
    Plot { results: PathBuf, family: String },
    /// Write the pass transmittance distribution of every sweep point.
    Pdte {
        config: PathBuf,
        /// Also draw this many seeded samples from each distribution.
        #[arg(long, default_value_t = 0)]
        samples: usize,
    },
    /// Write the synthetic reference turbulence profiles as profile files.
    Profiles,
}

fn load(config: &Path, seed: Option<u64>) -> Result<Scenario> {
    let mut s = Scenario::from_file(config)?;
    if let Some(seed) = seed {
        s.settings.seed = seed;
    }
    Ok(s)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Validate { config } => {
            let s = load(config, cli.seed)?;
            println!("{}: ok ({} profiles, {} sweep points)", config.display(), s.profiles.len(), s.points().len());
        }
        Command::Run { config } => {
            let s = load(config, cli.seed)?;
            let start = Instant::now();
            let results = s.run();
            for path in results.write(&cli.out_dir)? {
                println!("wrote {}", path.display());
            }
            info!("finished in {:.1} s", start.elapsed().as_secs_f64());
        }
        Command::Plot { results, family } => {
            for path in emit_plot_data(results, family, &cli.out_dir)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Pdte { config, samples } => {
            let s = load(config, cli.seed)?;
            std::fs::create_dir_all(&cli.out_dir)?;
            for point in s.points() {
                let channel = s.pass_channel(&point)?;
                let stem = format!(
                    "pdte_{:03}_{}_{}km_{}o_{}m",
                    point.index, point.profile, point.altitude_km, point.ao_orders, point.diameter_m
                );
                let path = cli.out_dir.join(format!("{stem}.csv"));
                channel.pdte.write_csv(&path)?;
                println!("wrote {} ({point}, {:.2} dB)", path.display(), channel.pdte.mean_attenuation_db());
                if *samples > 0 {
                    let sampler = channel.pdte.sampler()?;
                    let mut rng = ChaCha8Rng::seed_from_u64(s.settings.seed.wrapping_add(point.index as u64));
                    let path = cli.out_dir.join(format!("{stem}_samples.csv"));
                    let mut w = csv::Writer::from_path(&path)?;
                    w.write_record(["transmittance"])?;
                    for _ in 0..*samples {
                        w.write_record([sampler.sample(&mut rng).to_string()])?;
                    }
                    w.flush()?;
                    println!("wrote {}", path.display());
                }
            }
        }
        Command::Profiles => {
            std::fs::create_dir_all(&cli.out_dir)?;
            for (label, _, _) in REFERENCE_TARGETS {
                let path = cli.out_dir.join(format!("{label}.txt"));
                reference_profile(label)?.write(&path)?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("{e}");
            return ExitCode::from(3);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let bad_input = e.is_config() || (matches!(e, Error::Io(_) | Error::Csv(_)) && is_input(&cli));
            ExitCode::from(if bad_input { 2 } else { 3 })
        }
    }
}

/// Unreadable input files count as configuration errors.
fn is_input(cli: &Cli) -> bool {
    match &cli.command {
        Command::Plot { results, .. } => !results.is_file(),
        _ => false,
    }
}
