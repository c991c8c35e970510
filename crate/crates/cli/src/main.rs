use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use credence::dataset::write_csv;
use credence::pipeline::{self, EmitOptions, Input, PipelineConfig};
use credence::{synthgen, with_jobs, Error, Result};

#[derive(Parser)]
#[command(name = "credence", version, about = "Interpretable outcome prediction with multiple imputation and gated feature selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full protocol and write the report files.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (0 uses every core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Also write every completed dataset under imputations/.
        #[arg(long)]
        dump_imputations: bool,
        /// Output directory; defaults to the config value, then $CREDENCE_OUTPUT_DIR.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a synthetic cohort from the config's generator settings.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and check a config, including any CSV input it names.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(config: &PathBuf, seed: Option<u64>) -> Result<PipelineConfig> {
    let cfg = PipelineConfig::from_file(config)?;
    Ok(match seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, seed, jobs, dump_imputations, out } => {
            let mut cfg = load(&config, seed)?;
            if out.is_some() {
                cfg.output_dir = out;
            }
            let dir = pipeline::resolve_output_dir(&cfg);
            let report = with_jobs(jobs, || pipeline::run_pipeline(&cfg))?;
            let manifest = pipeline::emit_report(&report, &dir, EmitOptions { dump_imputations })?;
            for r in &report.results {
                let auc = r.evaluation.as_ref().map_or("NA".to_string(), |e| format!("{:.3}", e.pooled_auc));
                let names: Vec<&str> = r.trace.selected().iter().map(|&f| report.feature_names[f].as_str()).collect();
                println!("{:<20} {:<10} auc {:<6} [{}]", r.model.name(), r.outcome.name(), auc, names.join(", "));
            }
            println!("wrote {} files to {}", manifest.len() + 1, dir.display());
        }
        Command::Generate { config, out, seed } => {
            let cfg = load(&config, seed)?;
            let cohort = synthgen::generate(&cfg.generator_config(), &cfg.schema)?;
            let file = File::create(&out).map_err(|e| Error::Io(e).at(out.display().to_string()))?;
            write_csv(&cohort, BufWriter::new(file))?;
            println!("wrote {} patients to {}", cohort.n_patients(), out.display());
        }
        Command::Validate { config } => {
            let cfg = load(&config, None)?;
            if let Input::Csv(_) = cfg.input {
                let cohort = pipeline::load_input(&cfg)?;
                println!("input: {} patients, {} missing cells", cohort.n_patients(), cohort.missing_count());
            }
            println!("config ok");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
