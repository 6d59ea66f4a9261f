//! `headsteer`: render scenes, run the selector on WAV files, and run
//! experiment sweeps.
//!
//! Exit codes: 0 success, 1 usage, 2 data or schema, 3 numerical failure.
//! Experiment flags can also come from `HEADSTEER_*` environment variables;
//! a flag beats its variable, which beats the scenario file.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use headsteer_scene::scenario::Method;

#[derive(Debug, Parser)]
#[command(name = "headsteer", version, about = "Remote-microphone selection by head steering")]
struct Cli {
    /// Progress messages on stderr; repeat for more.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Image-method impulse response to a mono WAV.
    Rir(RirArgs),
    /// Render one scenario combination to WAVs plus truth and manifest.
    Render(RenderArgs),
    /// Run the selector on a hearing-aid recording and remote channels.
    Select(SelectArgs),
    /// Run the scenario's sweep and write results.csv and manifest.json.
    Experiment(ExperimentArgs),
    /// Check a scenario file without computing anything.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct RirArgs {
    /// Room size x,y,z in metres.
    #[arg(long, value_delimiter = ',', value_name = "X,Y,Z", required = true)]
    pub dims: Vec<f64>,
    /// Reverberation time in seconds; 0 is anechoic.
    #[arg(long, default_value_t = 0.0)]
    pub t60: f64,
    #[arg(long, value_delimiter = ',', value_name = "X,Y,Z", required = true)]
    pub src: Vec<f64>,
    #[arg(long, value_delimiter = ',', value_name = "X,Y,Z", required = true)]
    pub mic: Vec<f64>,
    #[arg(long, default_value_t = 16_000)]
    pub fs: u32,
    /// Response length; defaults to the room diagonal delay plus T60.
    #[arg(long)]
    pub length_s: Option<f64>,
    #[arg(long)]
    pub max_order: Option<usize>,
    #[arg(long, default_value_t = 343.0)]
    pub speed_of_sound: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Competing talkers; defaults to the first value of the sweep grid.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub combo: u64,
    #[arg(long, env = "HEADSTEER_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Multichannel hearing-aid recording.
    #[arg(long)]
    pub ha: PathBuf,
    /// Remote recordings; channels of all files are candidates, in order.
    #[arg(long = "remote", required = true, num_args = 1..)]
    pub remotes: Vec<PathBuf>,
    /// Impulse-response set manifest holding the target direction.
    #[arg(long)]
    pub ir_set: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub azimuth: f64,
    #[arg(long, default_value_t = 5.0)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 0)]
    pub reference_mic: usize,
    #[arg(long, env = "HEADSTEER_T_INT", default_value_t = 2.0)]
    pub t_int: f64,
    /// Truth sidecar; `truth.json` next to the hearing-aid file is used if present.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = "HEADSTEER_SEED")]
    pub seed: Option<u64>,
    /// Integration times in seconds, comma separated.
    #[arg(long, env = "HEADSTEER_T_INT", value_delimiter = ',')]
    pub t_int: Option<Vec<f64>>,
    /// Subset of proposed,optimal,ncc,mog,random.
    #[arg(long, env = "HEADSTEER_METHODS", value_delimiter = ',', value_parser = parse_method)]
    pub methods: Option<Vec<Method>>,
    #[arg(long, env = "HEADSTEER_N_COMPETING", value_delimiter = ',')]
    pub n_competing: Option<Vec<usize>>,
    #[arg(long, env = "HEADSTEER_COMBOS")]
    pub combos: Option<usize>,
    /// Worker threads for parallel combinations.
    #[arg(long, env = "HEADSTEER_WORKERS")]
    pub workers: Option<usize>,
    /// Full grid: 40 combinations, N 2..=8, five integration times.
    #[arg(long, env = "HEADSTEER_PAPER_SCALE")]
    pub paper_scale: bool,
    /// Also write per-frame decision logs under `decisions/`.
    #[arg(long)]
    pub decision_logs: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
        format!("unknown method `{s}` (expected one of {})", names.join(", "))
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let verbose = cli.verbose;
    let result = match cli.command {
        Command::Rir(a) => commands::rir(&a),
        Command::Render(a) => commands::render(&a, verbose),
        Command::Select(a) => commands::select(&a, verbose),
        Command::Experiment(a) => commands::experiment(&a, verbose),
        Command::Validate(a) => commands::validate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
