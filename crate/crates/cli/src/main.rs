//! `coskg` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use coskg::attacks::{attack_registry, run_attack};
use coskg::harness::artifacts::secrets_csv;
use coskg::harness::{
    campaign_traces, load_trace, raw_key_metrics, run_campaign, run_experiment, run_pipeline, save_trace, sweep,
};
use coskg::statistics::nist_suite;
use coskg::{Error, ExperimentConfig, Result};

#[derive(Parser)]
#[command(name = "coskg", version, about = "Channel-obfuscated secret key generation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Preset to start from (default, desk, indoor, corridor, outdoor).
    #[arg(long, default_value = "default")]
    preset: String,
    /// Config file of `key = value` lines, applied over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single override, applied last; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a probing campaign and write the CSI trace.
    Probe {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        seed: u64,
        /// Trace CSV to write.
        #[arg(long, short)]
        out: PathBuf,
        /// Also write Alice's private obfuscation state here.
        #[arg(long)]
        dump_secrets: Option<PathBuf>,
    },
    /// Extract keys from a trace (or a fresh campaign) and write the report
    /// plus public artifacts.
    Extract {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Trace CSV to read instead of simulating.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, short)]
        out_dir: PathBuf,
    },
    /// Run an attack scenario (or `all`).
    Attack {
        name: String,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        out_dir: PathBuf,
    },
    /// Sweep one parameter over values and seeded trials.
    Sweep {
        parameter: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        out_dir: PathBuf,
    },
    /// Randomness tests on a bit file (characters 0/1), or on Bob's raw key.
    Nist {
        #[arg(long)]
        bits: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// CSV to write; stdout when absent.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn load_config(args: &ConfigArgs, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::preset(&args.preset)?;
    if let Some(path) = &args.config {
        cfg.apply_text(&fs::read_to_string(path)?)?;
    }
    for kv in &args.sets {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::param(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k, v)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn read_bits(path: &Path) -> Result<Vec<u8>> {
    let text = fs::read_to_string(path)?;
    let mut bits = Vec::with_capacity(text.len());
    for (i, line) in text.lines().enumerate() {
        for c in line.chars().filter(|c| !c.is_whitespace()) {
            match c {
                '0' => bits.push(0),
                '1' => bits.push(1),
                other => {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: format!("unexpected character `{other}` in bit file"),
                    })
                }
            }
        }
    }
    Ok(bits)
}

fn timing(label: &str, start: Instant) {
    eprintln!("{label}: {:.3} s", start.elapsed().as_secs_f64());
}

fn run(cli: Cli) -> Result<()> {
    let start = Instant::now();
    match cli.command {
        Command::Probe {
            cfg,
            seed,
            out,
            dump_secrets,
        } => {
            let cfg = load_config(&cfg, Some(seed))?;
            let campaign = run_campaign(&cfg)?;
            save_trace(&out, &campaign_traces(&campaign))?;
            if let Some(path) = dump_secrets {
                write(&path, secrets_csv(&campaign.secrets))?;
            }
            timing("probe", start);
        }
        Command::Extract {
            cfg,
            seed,
            trace,
            out_dir,
        } => {
            let cfg = load_config(&cfg, seed)?;
            let exp = match trace {
                Some(path) => run_pipeline(&load_trace(&path)?, &cfg)?,
                None => run_experiment(&cfg)?,
            };
            write(&out_dir.join("report.json"), exp.report.to_json())?;
            exp.write_public(&out_dir.join("public"))?;
            for (stage, secs) in &exp.report.timings {
                eprintln!("{stage}: {secs:.3} s");
            }
            println!(
                "BMR {:.4}  BGR {:.2} bit/pkt  keys match: {}",
                exp.report.metrics.bmr, exp.report.metrics.bgr, exp.report.keys_match
            );
        }
        Command::Attack {
            name,
            cfg,
            seed,
            out_dir,
        } => {
            let cfg = load_config(&cfg, seed)?;
            let names: Vec<String> = if name == "all" {
                attack_registry().names().iter().map(|s| s.to_string()).collect()
            } else {
                vec![name]
            };
            for n in names {
                let t = Instant::now();
                let report = run_attack(&n, &cfg)?;
                write(&out_dir.join(format!("{n}.csv")), report.to_csv())?;
                for (stem, table) in &report.tables {
                    write(&out_dir.join(format!("{n}_{stem}.csv")), table)?;
                }
                print!("{n}\n{}", report.to_csv());
                if report.degenerate {
                    println!("degenerate,1");
                }
                timing(&n, t);
            }
        }
        Command::Sweep {
            parameter,
            values,
            trials,
            cfg,
            seed,
            out_dir,
        } => {
            let cfg = load_config(&cfg, seed)?;
            let values: Vec<&str> = values.iter().map(String::as_str).collect();
            let table = sweep(&cfg, &parameter, &values, trials)?;
            write(&out_dir.join(format!("{}.csv", table.tag)), table.to_csv())?;
            print!("{}", table.to_csv());
            timing("sweep", start);
        }
        Command::Nist { bits, cfg, seed, out } => {
            let bits = match bits {
                Some(path) => read_bits(&path)?,
                None => {
                    let cfg = load_config(&cfg, seed)?;
                    let (_, ex) = raw_key_metrics(&cfg)?;
                    let n = cfg.nist_bits.min(ex.q_b.bits.len());
                    ex.q_b.bits[..n].to_vec()
                }
            };
            let report = nist_suite(&bits)?;
            match out {
                Some(path) => write(&path, report.to_csv())?,
                None => print!("{}", report.to_csv()),
            }
            timing("nist", start);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
