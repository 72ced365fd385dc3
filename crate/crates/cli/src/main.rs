use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use geeval_core::classify::Patterns;
use geeval_core::forge::{
    drafts_to_suite, export_review_queue, forge_entry, load_doc_entries, materialize_expected_answers,
    materialize_suite, MaterializeOptions, MaterializeStatus,
};
use geeval_core::model::{read_suite, validate_cases, SuiteError};
use geeval_core::report::{build_report, render_json, render_text, write_report, Format};
use geeval_core::run::{default_home, execute_run, load_attempts, run_dir, RunConfig, RunContext, REPORTS_DIR};
use geeval_core::runner::{PlatformBackend, SubprocessRunner, DEFAULT_TIMEOUT_S};
use geeval_core::submission::{client_for, load_profiles, ModelProfile};

/// Exit status for bad arguments or configuration, as opposed to a
/// suite that merely fails validation.
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "geeval", version, about = "Execution-based evaluation of Earth Engine code generation")]
struct Cli {
    /// Run storage root; defaults to $GEEVAL_HOME or ./.geeval
    #[arg(long, global = true)]
    home: Option<PathBuf>,
    /// JSON array of model profiles to resolve --model ids against
    #[arg(long, global = true)]
    profiles: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Mock,
    Live,
}

impl From<Backend> for PlatformBackend {
    fn from(b: Backend) -> Self {
        match b {
            Backend::Mock => PlatformBackend::Mock,
            Backend::Live => PlatformBackend::Live,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Csv,
    Text,
}

#[derive(clap::Args)]
struct RunnerArgs {
    /// Command line of the sandbox runner
    #[arg(long, env = "GEEVAL_RUNNER")]
    runner: Option<String>,
    #[arg(long, value_enum, default_value = "mock")]
    backend: Backend,
    /// Per-execution limit in seconds
    #[arg(long, default_value_t = DEFAULT_TIMEOUT_S)]
    timeout: f64,
    #[arg(long, default_value_t = 1)]
    concurrency: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check every case of a suite; prints one line per violation
    Validate { suite: PathBuf },
    /// Draft cases from an API documentation file
    Forge {
        docs: PathBuf,
        #[arg(long)]
        model: String,
        /// Directory receiving the drafted cases and review_queue.json
        #[arg(long, default_value = "forged")]
        out: PathBuf,
        /// Also execute reference code to produce expected answers
        #[arg(long)]
        materialize: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        exec: RunnerArgs,
    },
    /// Produce missing expected answers by running each reference solution
    Materialize {
        suite: PathBuf,
        /// Overwrite answers that already exist
        #[arg(long)]
        force: bool,
        #[command(flatten)]
        exec: RunnerArgs,
    },
    /// Evaluate models on a suite; reruns resume where they stopped
    Run {
        suite: PathBuf,
        /// Model id, repeatable; `<script>-stub` ids need no profile
        #[arg(long, required = true)]
        model: Vec<String>,
        /// Attempts per case
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long)]
        run_id: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        exec: RunnerArgs,
    },
    /// Render reports for a stored run
    Report {
        run_id: String,
        #[arg(long, value_enum, default_value = "text")]
        format: ReportFormat,
    },
}

fn resolve_models(ids: &[String], profiles: Option<&Path>) -> Result<Vec<ModelProfile>> {
    let known = match profiles {
        Some(p) => load_profiles(p).map_err(|e| anyhow!(e))?,
        None => Vec::new(),
    };
    ids.iter()
        .map(|id| {
            known
                .iter()
                .find(|p| &p.model_id == id)
                .cloned()
                .or_else(|| ModelProfile::builtin(id))
                .ok_or_else(|| anyhow!("unknown model {id:?}; pass --profiles or use a <script>-stub id"))
        })
        .collect()
}

fn runner(args: &RunnerArgs) -> Result<SubprocessRunner> {
    let cmd = args.runner.as_deref().ok_or_else(|| anyhow!("no runner: pass --runner or set GEEVAL_RUNNER"))?;
    let r = SubprocessRunner::from_command_line(cmd)?;
    r.probe()?;
    Ok(r)
}

fn default_run_id(suite: &Path, models: &[ModelProfile]) -> String {
    let stem = suite
        .canonicalize()
        .ok()
        .and_then(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "suite".into());
    let mut id = stem;
    for m in models {
        id.push('-');
        id.push_str(&m.model_id);
    }
    id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

fn cmd_validate(suite: &Path) -> Result<ExitCode> {
    let s = match read_suite(suite) {
        Ok(s) => s,
        Err(e @ SuiteError::Parse { .. }) => {
            println!("{e}");
            return Ok(ExitCode::FAILURE);
        }
        Err(e) => return Err(e.into()),
    };
    let violations = validate_cases(&s.cases);
    for v in &violations {
        println!("{v}");
    }
    if violations.is_empty() {
        eprintln!("{} cases valid", s.cases.len());
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::FAILURE)
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let home = cli.home.clone().unwrap_or_else(default_home);
    match cli.cmd {
        Cmd::Validate { suite } => cmd_validate(&suite),
        Cmd::Forge { docs, model, out, materialize, seed, exec } => {
            let profile = resolve_models(&[model], cli.profiles.as_deref())?.remove(0);
            let entries = load_doc_entries(&docs).map_err(|e| anyhow!(e))?;
            let client = client_for(&profile, seed).map_err(|e| anyhow!(e))?;
            let mut drafts: Vec<_> = entries.iter().map(|e| forge_entry(e, client.as_ref())).collect();
            if materialize {
                let r = runner(&exec)?;
                let opts = MaterializeOptions {
                    force: false,
                    timeout_s: exec.timeout,
                    backend: exec.backend.into(),
                    concurrency: exec.concurrency,
                };
                materialize_expected_answers(&mut drafts, &out, &r, &opts)?;
            }
            drafts_to_suite(&drafts, &out).write_to(&out)?;
            let queue = out.join("review_queue.json");
            export_review_queue(&drafts, &queue).with_context(|| queue.display().to_string())?;
            let flagged = drafts.iter().filter(|d| !d.issues.is_empty()).count();
            println!("{} drafts ({flagged} with issues); review queue at {}", drafts.len(), queue.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Materialize { suite, force, exec } => {
            let s = read_suite(&suite)?;
            let r = runner(&exec)?;
            let opts =
                MaterializeOptions { force, timeout_s: exec.timeout, backend: exec.backend.into(), concurrency: exec.concurrency };
            let statuses = materialize_suite(&s, &r, &opts)?;
            let mut failed = 0;
            for st in &statuses {
                if st.status == MaterializeStatus::Failed {
                    failed += 1;
                    println!("{}: {}", st.case_id, st.message);
                }
            }
            eprintln!("{} cases, {failed} failed", statuses.len());
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Cmd::Run { suite, model, n, run_id, seed, exec } => {
            let models = resolve_models(&model, cli.profiles.as_deref())?;
            let run_id = run_id.unwrap_or_else(|| default_run_id(&suite, &models));
            let mut cfg = RunConfig::new(run_id, &suite, models);
            cfg.attempts = n;
            cfg.backend = exec.backend.into();
            cfg.concurrency = exec.concurrency;
            cfg.timeout_s = exec.timeout;
            cfg.seed = seed;
            cfg.validate()?;
            let r = runner(&exec)?;
            let patterns = Patterns::default();
            let ctx = RunContext { runner: &r, patterns: &patterns, max_new_attempts: None };
            let st = execute_run(&home, &cfg, &ctx)?;
            println!("run {}: {} executed, {} already done", cfg.run_id, st.executed, st.skipped);
            let records = load_attempts(&st.run_dir)?;
            let report = build_report(&records)?;
            write_report(&report, &st.run_dir.join(REPORTS_DIR), Format::Json)?;
            print!("{}", render_text(&report));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Report { run_id, format } => {
            let dir = run_dir(&home, &run_id);
            let records = load_attempts(&dir)?;
            let report = build_report(&records)?;
            let out = dir.join(REPORTS_DIR);
            match format {
                ReportFormat::Json => {
                    write_report(&report, &out, Format::Json)?;
                    print!("{}", render_json(&report));
                }
                ReportFormat::Text => {
                    write_report(&report, &out, Format::Text)?;
                    print!("{}", render_text(&report));
                }
                ReportFormat::Csv => {
                    for p in write_report(&report, &out, Format::Csv)? {
                        println!("{}", p.display());
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
