use clap::{Args, Parser, Subcommand, ValueEnum};
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use htp_core::export::{self, ExportFormat};
use htp_core::gateway::batch::DEFAULT_PARALLELISM;
use htp_core::workflow::{self, Command, NewCase, PoolMode, Workspace, WorkflowError};

/// House-Tree-Person assessment: corpus evaluation, multi-agent
/// assessment and multi-model fusion over pluggable backends.
#[derive(Parser)]
#[command(name = "htp", version)]
struct Cli {
    /// Config file.
    #[arg(long, global = true, default_value = workflow::CONFIG_FILE)]
    config: PathBuf,
    /// Concurrent backend calls.
    #[arg(long, global = true, default_value_t = NonZeroUsize::new(DEFAULT_PARALLELISM).unwrap())]
    parallelism: NonZeroUsize,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// AI-expert similarity evaluation.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Run the four-stage pipeline on a stored case.
    Assess { case_id: String },
    /// Run multi-model fusion on a stored case.
    Fuse { case_id: String },
    #[command(subcommand)]
    Schema(SchemaCmd),
    /// Export the statistics table computed from stored records.
    Export {
        #[arg(long, value_enum)]
        format: Format,
        #[arg(long)]
        out: PathBuf,
        /// Similarity records; defaults to <store>/eval/records.json.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Capture live answers into mock scripts, or replay them.
    #[command(subcommand)]
    Mock(MockCmd),
    #[command(subcommand)]
    Case(CaseCmd),
    #[command(subcommand)]
    Demo(DemoCmd),
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Evaluate every stored case with expert text.
    Run,
    /// Recompute statistics from stored records and print them.
    Stats {
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Subcommand)]
enum SchemaCmd {
    /// Check the configured schema, and optionally an observation file.
    Check {
        #[arg(long)]
        observation: Option<PathBuf>,
        /// Print every leaf path with its type.
        #[arg(long)]
        catalog: bool,
    },
}

#[derive(Subcommand)]
enum MockCmd {
    /// Run against live backends and merge their answers into mocks.dir.
    #[command(subcommand)]
    Record(RunCmd),
    /// Run against the scripts in mocks.dir.
    #[command(subcommand)]
    Replay(RunCmd),
}

#[derive(Subcommand, Clone)]
enum RunCmd {
    Eval,
    Assess { case_id: String },
    Fuse { case_id: String },
}

#[derive(Subcommand)]
enum CaseCmd {
    /// Store a new case.
    Add(AddArgs),
    /// List stored case ids.
    List,
}

#[derive(Args)]
struct AddArgs {
    #[arg(long)]
    id: String,
    /// PNG or JPEG drawing.
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value = "")]
    note: String,
    #[arg(long)]
    expert_label: Option<String>,
    /// File holding the expert's interpretation.
    #[arg(long)]
    expert_text: Option<PathBuf>,
}

#[derive(Subcommand)]
enum DemoCmd {
    /// Write an offline workspace with fixture cases and recorded mocks.
    Init { dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ExportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ExportFormat::Csv,
            Format::Json => ExportFormat::Json,
        }
    }
}

fn workspace(cli: &Cli) -> Result<Workspace, WorkflowError> {
    Workspace::load(&cli.config, cli.parallelism, cli.force)
}

fn run_one(ws: &Workspace, run: &RunCmd, mode: Option<PoolMode>) -> Result<(), WorkflowError> {
    let command = match run {
        RunCmd::Eval => Command::EvalRun,
        RunCmd::Assess { .. } => Command::Assess,
        RunCmd::Fuse { .. } => Command::Fuse,
    };
    let pool = ws.pool(command, mode)?;
    let result = match run {
        RunCmd::Eval => ws.eval_run(&pool).map(|s| {
            println!(
                "evaluated {} of {} case(s), {} failed, {} skipped without expert text",
                s.evaluated, s.cases, s.failed, s.skipped
            );
            println!(
                "share >= {:.2}: {:.4}",
                s.threshold, s.share_at_or_above_threshold
            );
            if let Ok(csv) = export::to_csv(&s.rows) {
                print!("{csv}");
            }
            println!("outputs in {}", ws.eval_dir().display());
        }),
        RunCmd::Assess { case_id } => ws.assess(&pool, case_id).map(|s| {
            println!(
                "assessed {} ({} critique entries)",
                s.case_id, s.critique_entries
            );
            for f in s.files {
                println!("  {}", f.display());
            }
        }),
        RunCmd::Fuse { case_id } => ws.fuse(&pool, case_id).map(|s| {
            println!(
                "fused {}: {} consensus, {} to be verified, {} conflicts; principles {}/4",
                s.case_id, s.consensus, s.to_be_verified, s.conflicts, s.principles_passed
            );
            for f in s.files {
                println!("  {}", f.display());
            }
        }),
    };
    if mode == Some(PoolMode::Record) {
        // keep what was captured even when the command failed
        let dir = ws.config.mocks.dir.as_deref().unwrap_or(Path::new("."));
        for path in pool.save_recordings(dir, ws.force)? {
            println!("recorded {}", path.display());
        }
    }
    result
}

fn run(cli: Cli) -> Result<(), WorkflowError> {
    match &cli.command {
        Cmd::Demo(DemoCmd::Init { dir }) => {
            let s = workflow::demo_init(dir, cli.force)?;
            println!(
                "wrote {} with {} case(s) and {} mock script(s)",
                s.config.display(),
                s.cases,
                s.scripts.len()
            );
            Ok(())
        }
        Cmd::Eval(EvalCmd::Run) => run_one(&workspace(&cli)?, &RunCmd::Eval, None),
        Cmd::Eval(EvalCmd::Stats { records, format }) => {
            let rows = workspace(&cli)?.eval_stats(records.as_deref())?;
            let text = match format {
                Format::Csv => export::to_csv(&rows)?,
                Format::Json => export::to_json(&rows)?,
            };
            print!("{text}");
            Ok(())
        }
        Cmd::Assess { case_id } => run_one(
            &workspace(&cli)?,
            &RunCmd::Assess {
                case_id: case_id.clone(),
            },
            None,
        ),
        Cmd::Fuse { case_id } => run_one(
            &workspace(&cli)?,
            &RunCmd::Fuse {
                case_id: case_id.clone(),
            },
            None,
        ),
        Cmd::Mock(MockCmd::Record(run)) => run_one(&workspace(&cli)?, run, Some(PoolMode::Record)),
        Cmd::Mock(MockCmd::Replay(run)) => run_one(&workspace(&cli)?, run, Some(PoolMode::Replay)),
        Cmd::Schema(SchemaCmd::Check {
            observation,
            catalog,
        }) => {
            let ws = workspace(&cli)?;
            let s = ws.schema_check(observation.as_deref())?;
            println!(
                "schema {}: {} typed leaves{}",
                s.version,
                s.leaves,
                if s.reconstructed { " (reconstructed)" } else { "" }
            );
            if let Some(path) = observation {
                println!("{}: valid", path.display());
            }
            if *catalog {
                print!("{}", ws.schema.catalog());
            }
            Ok(())
        }
        Cmd::Export {
            format,
            out,
            records,
        } => {
            workspace(&cli)?.export(records.as_deref(), (*format).into(), out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Cmd::Case(CaseCmd::Add(a)) => {
            let stored = workspace(&cli)?.add_case(NewCase {
                id: &a.id,
                image: &a.image,
                note: &a.note,
                expert_label: a.expert_label.as_deref(),
                expert_text: a.expert_text.as_deref(),
            })?;
            println!("stored {} in {}", stored.case_id, stored.dir.display());
            Ok(())
        }
        Cmd::Case(CaseCmd::List) => {
            for id in workspace(&cli)?.store.ids() {
                println!("{id}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are validation errors; help and version are not
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
