use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use framelab::api::{router, AppState};
use framelab::io::{export_corpus, read_json, FileFormat};
use framelab::llm::{AuditLog, LlmClient, LlmConfig, MockTranscript};
use framelab::store::{RevisionRequest, Session};
use framelab_core::codebook::{diff_codebooks, Change, Disposition};
use framelab_core::corpus::ColumnMapping;
use framelab_core::prompting::FeatureSet;
use framelab_core::{Codebook, SampleSpec};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "framelab", version, about = "Codebook lifecycle engine for LLM-assisted deductive framing analysis")]
struct Cli {
    /// Session directory.
    #[arg(long, global = true, default_value = ".")]
    session: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DispositionArg {
    Accepted,
    Revised,
    Rejected,
}

#[derive(Clone, Copy, ValueEnum)]
enum Features {
    HeadlineLead,
    FullText,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportWhat {
    Report,
    Codebook,
    Anchors,
    Cases,
    Ledger,
    Corpus,
}

#[derive(Subcommand)]
enum Command {
    /// Create a session directory around an initial codebook.
    Init {
        #[arg(long)]
        codebook: PathBuf,
        /// LLM endpoint settings (JSON); defaults apply when omitted.
        #[arg(long)]
        llm_config: Option<PathBuf>,
    },
    /// Load a CSV or JSON Lines corpus through a column mapping.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        /// Inline mapping, e.g. `id=ID,headline=titulo,lead=bajada,gold:moralidad=moral`.
        #[arg(long, default_value = "id,headline,lead")]
        format: String,
        /// File format; inferred from the extension when omitted.
        #[arg(long, value_enum)]
        file_format: Option<FileFormat>,
    },
    Sample {
        #[arg(long)]
        fraction: f64,
        /// Comma-separated metadata keys.
        #[arg(long, default_value = "")]
        strata: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    Explore {
        #[arg(long)]
        mock: Option<PathBuf>,
    },
    Curate {
        #[arg(long)]
        mock: Option<PathBuf>,
    },
    Classify {
        #[arg(long, default_value_t = 1)]
        runs: u32,
        #[arg(long)]
        mock: Option<PathBuf>,
        #[arg(long, value_enum)]
        features: Option<Features>,
    },
    Evaluate {
        /// Score against the corpus gold labels (the only supported reference).
        #[arg(long)]
        gold: bool,
    },
    Mine,
    Revise {
        #[arg(long)]
        criterion: String,
        #[arg(long, value_enum)]
        disposition: DispositionArg,
        #[arg(long)]
        rationale: String,
        /// JSON list of changes, or a full target codebook to diff against.
        #[arg(long)]
        edit: Option<PathBuf>,
        /// Comma-separated article ids the criterion came from.
        #[arg(long, default_value = "")]
        cases: String,
        #[arg(long)]
        base_version: Option<u32>,
    },
    Diff {
        #[arg(long)]
        from: u32,
        #[arg(long)]
        to: u32,
    },
    Status,
    Export {
        #[arg(long, value_enum)]
        what: ExportWhat,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Codebook version for `--what codebook`.
        #[arg(long)]
        version: Option<u32>,
    },
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        mock: Option<PathBuf>,
    },
}

fn print_json<T: Serialize>(v: &T) -> anyhow::Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{}", serde_json::to_string_pretty(v)?) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect()
}

fn client_for(session: &Session, mock: Option<&Path>) -> anyhow::Result<LlmClient> {
    let audit = Arc::new(AuditLog::file(&session.layout().exchanges())?);
    let cfg = session.config().llm.clone();
    Ok(match mock {
        Some(p) => {
            let transcript = MockTranscript::load(p).with_context(|| format!("loading transcript {}", p.display()))?;
            LlmClient::mock(cfg, Arc::new(transcript), audit)?
        }
        None => LlmClient::http(cfg, audit)?,
    })
}

fn read_edits(path: &Path, current: &Codebook) -> anyhow::Result<Vec<Change>> {
    let raw = std::fs::read_to_string(path)?;
    if let Ok(changes) = serde_json::from_str::<Vec<Change>>(&raw) {
        return Ok(changes);
    }
    let target: Codebook =
        serde_json::from_str(&raw).with_context(|| format!("{} is neither a change list nor a codebook", path.display()))?;
    Ok(diff_codebooks(current, &target))
}

async fn run(cli: Cli) -> anyhow::Result<()> {
    let dir = cli.session.as_path();
    match cli.command {
        Command::Init { codebook, llm_config } => {
            let cb: Codebook = read_json(&codebook)?;
            let llm: LlmConfig = match llm_config {
                Some(p) => read_json(&p)?,
                None => LlmConfig::default(),
            };
            let s = Session::init(dir, cb, llm)?;
            print_json(&s.status()?)
        }
        Command::Ingest { corpus, format, file_format } => {
            let mapping = ColumnMapping::parse_inline(&format)?;
            let ff = file_format
                .or_else(|| FileFormat::from_path(&corpus))
                .context("cannot infer the file format; pass --file-format")?;
            let mut s = Session::open(dir)?;
            let event = s.ingest(&corpus, ff, &mapping)?;
            print_json(&event)
        }
        Command::Sample { fraction, strata, seed } => {
            let spec = SampleSpec::new(fraction, split_list(&strata), seed)?;
            let mut s = Session::open(dir)?;
            print_json(&s.sample(&spec)?)
        }
        Command::Explore { mock } => {
            let mut s = Session::open(dir)?;
            let client = client_for(&s, mock.as_deref())?;
            print_json(&s.explore(&client).await?)
        }
        Command::Curate { mock } => {
            let mut s = Session::open(dir)?;
            let client = client_for(&s, mock.as_deref())?;
            let (picks, _) = s.curate(&client).await?;
            print_json(&picks)
        }
        Command::Classify { runs, mock, features } => {
            let mut s = Session::open(dir)?;
            let client = client_for(&s, mock.as_deref())?;
            let features = features.map(|f| match f {
                Features::HeadlineLead => FeatureSet::HeadlineLead,
                Features::FullText => FeatureSet::FullText,
            });
            let summary = s.classify(&client, runs, features).await?;
            for f in &summary.failures {
                eprintln!("warning: {} run {}: {}", f.article_id, f.run_index, f.error);
            }
            print_json(&summary)
        }
        Command::Evaluate { gold } => {
            if !gold {
                bail!("evaluation needs --gold");
            }
            let mut s = Session::open(dir)?;
            print_json(&s.evaluate()?)
        }
        Command::Mine => {
            let mut s = Session::open(dir)?;
            let report = s.mine()?;
            print_json(&serde_json::json!({
                "batch": report.batch,
                "disagreement_rate": report.disagreement_rate,
                "rate_source": report.rate_source,
                "cases": report.disagreements.as_ref().map_or(0, |d| d.total()),
                "rationales": report.rationales,
                "stabilized": s.is_stabilized(),
            }))
        }
        Command::Revise { criterion, disposition, rationale, edit, cases, base_version } => {
            let mut s = Session::open(dir)?;
            let edits = match edit {
                Some(p) => read_edits(&p, s.codebook())?,
                None => Vec::new(),
            };
            let disposition = match disposition {
                DispositionArg::Accepted => Disposition::Accepted,
                DispositionArg::Revised => Disposition::Revised,
                DispositionArg::Rejected => Disposition::Rejected,
            };
            let entry = s.revise(RevisionRequest {
                candidate_criterion: criterion,
                disposition,
                rationale,
                provenance_case_ids: split_list(&cases),
                edits,
                base_version,
            })?;
            print_json(&entry)
        }
        Command::Diff { from, to } => {
            let s = Session::open_read_only(dir)?;
            let changes = s.history().diff(from, to).with_context(|| format!("unknown version {from} or {to}"))?;
            print_json(&changes)
        }
        Command::Status => print_json(&Session::open_read_only(dir)?.status()?),
        Command::Export { what, out, version } => {
            let s = Session::open_read_only(dir)?;
            let mut buf = Vec::new();
            match what {
                ExportWhat::Report => buf = serde_json::to_vec_pretty(&s.report()?.context("no report yet")?)?,
                ExportWhat::Codebook => {
                    let cb = match version {
                        Some(v) => s.history().version(v).with_context(|| format!("no codebook version {v}"))?,
                        None => s.codebook(),
                    };
                    buf = serde_json::to_vec_pretty(cb)?;
                }
                ExportWhat::Anchors => {
                    let cases = s.cases()?.context("no mined cases yet")?;
                    buf = serde_json::to_vec_pretty(&cases.anchors)?;
                }
                ExportWhat::Cases => buf = serde_json::to_vec_pretty(&s.cases()?.context("no mined cases yet")?)?,
                ExportWhat::Ledger => buf = serde_json::to_vec_pretty(s.history().ledger())?,
                ExportWhat::Corpus => {
                    let corpus = s.working_corpus()?;
                    let mapping = s
                        .events()?
                        .iter()
                        .rev()
                        .find_map(|e| serde_json::from_value::<ColumnMapping>(e.payload.get("mapping")?.clone()).ok())
                        .unwrap_or_default();
                    let ff = out.as_deref().and_then(FileFormat::from_path).unwrap_or(FileFormat::Csv);
                    export_corpus(&corpus, &mapping, ff, &mut buf)?;
                }
            }
            match out {
                Some(p) => std::fs::write(p, buf)?,
                None => {
                    use std::io::Write;
                    std::io::stdout().write_all(&buf)?;
                    println!();
                }
            }
            Ok(())
        }
        Command::Serve { port, host, mock } => {
            let s = Session::open(dir)?;
            let client = match mock {
                Some(p) => Some(Arc::new(client_for(&s, Some(&p))?)),
                None => client_for(&s, None).ok().map(Arc::new),
            };
            let app = router(AppState::new(s, client));
            let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await?;
            eprintln!("serving on http://{}/api/v1", listener.local_addr()?);
            axum::serve(listener, app).await?;
            Ok(())
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    match run(Cli::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
