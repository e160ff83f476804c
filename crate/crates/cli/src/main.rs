//! `atlas <stage> --config <file>`: run one pipeline stage or all of them.

use std::path::PathBuf;
use std::process::ExitCode;

use atlas_core::pipeline::{run, PipelineConfig, Stage};
use atlas_core::AtlasError;
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    /// Load, deduplicate and filter the input records
    Ingest,
    /// Tokenize and build the tf-idf matrix
    Vectorize,
    /// Project onto the principal components
    Reduce,
    /// Sweep k and pick the knee of the distortion curve
    Elbow,
    /// Run k-means with the fixed or elbow-chosen k
    Cluster,
    /// Compute the 2-D t-SNE map
    Embed,
    /// Write atlas.json
    Export,
    /// Every stage in order
    All,
}

impl From<Command> for Stage {
    fn from(c: Command) -> Self {
        match c {
            Command::Ingest => Stage::Ingest,
            Command::Vectorize => Stage::Vectorize,
            Command::Reduce => Stage::Reduce,
            Command::Elbow => Stage::Elbow,
            Command::Cluster => Stage::Cluster,
            Command::Embed => Stage::Embed,
            Command::Export => Stage::Export,
            Command::All => Stage::All,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "atlas", version, about = "Organize a document corpus into a clustered 2-D map")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Pipeline config, TOML or JSON (by extension)
    #[arg(long)]
    config: PathBuf,
    /// Use this many clusters instead of the elbow choice
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory, relative to the working directory
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, AtlasError> {
    let mut config = PipelineConfig::from_file(&cli.config)?;
    if let Some(k) = cli.k {
        config.k = Some(k);
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(t) = cli.threads {
        config.threads = Some(t);
    }
    if let Some(out) = &cli.out {
        let cwd = std::env::current_dir().map_err(|e| AtlasError::Config(format!("no working directory: {e}")))?;
        config.out_dir = cwd.join(out);
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = std::panic::catch_unwind(|| {
        let config = load_config(&cli)?;
        run(cli.command.into(), &config)
    });
    match result {
        Ok(Ok(outcomes)) => {
            for o in outcomes {
                for note in &o.notes {
                    eprintln!("[{}] {note}", o.stage);
                }
                for path in &o.artifacts {
                    println!("{}", path.display());
                }
            }
            ExitCode::SUCCESS
        }
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        // the panic message is already on stderr
        Err(_) => ExitCode::from(3),
    }
}
