use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ibfd_cli::commands::{self, Outcome};
use ibfd_cli::config::{parse_designers, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "ibfd", version, about = "Discrete-phase transmit beamforming for full-duplex arrays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic SI channel file.
    GenChannel(Flags),
    /// Design beams for one steering direction and write JSON.
    Design(Flags),
    /// Run designers over a direction grid and write CSV.
    Sweep(Flags),
    /// Exhaustive codebook search for small arrays.
    Oracle(Flags),
}

#[derive(Args)]
struct Flags {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (stdout when omitted, except for sweep).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Phase-shifter resolution in bits.
    #[arg(long)]
    bits: Option<u32>,
    /// Per-antenna SI limit in dBm.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "no_pmax")]
    pmax_dbm: Option<f64>,
    /// Remove the SI limit.
    #[arg(long)]
    no_pmax: bool,
    /// Total transmit power in dBm.
    #[arg(long, allow_hyphen_values = true)]
    pt_dbm: Option<f64>,
    /// Elevation(s) in degrees, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta_deg: Option<Vec<f64>>,
    /// Azimuth(s) in degrees, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    phi_deg: Option<Vec<f64>>,
    /// Designers, comma separated: cbf, quantized_cbf, digital, sequential, proposed.
    #[arg(long)]
    designers: Option<String>,
    /// Rotation grid size of the projection step.
    #[arg(long)]
    grid_points: Option<usize>,
    /// Seed of the synthetic scatter term.
    #[arg(long)]
    seed: Option<u64>,
    /// Record wall time per design.
    #[arg(long)]
    timing: bool,
    /// Read the SI channel from this file.
    #[arg(long)]
    channel_file: Option<PathBuf>,
}

impl Flags {
    fn into_config(self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let designers = self.designers.as_deref().map(parse_designers).transpose()?;
        cfg.apply(Overrides {
            out: self.out,
            bits: self.bits,
            pmax_dbm: self.pmax_dbm,
            no_pmax: self.no_pmax,
            pt_dbm: self.pt_dbm,
            theta_deg: self.theta_deg,
            phi_deg: self.phi_deg,
            designers,
            grid_points: self.grid_points,
            seed: self.seed,
            timing: self.timing,
            channel_file: self.channel_file,
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::GenChannel(f) => commands::gen_channel(&f.into_config()?),
        Command::Design(f) => commands::design(&f.into_config()?),
        Command::Sweep(f) => commands::sweep_cmd(&f.into_config()?),
        Command::Oracle(f) => commands::oracle(&f.into_config()?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) => ExitCode::from(outcome.code() as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
