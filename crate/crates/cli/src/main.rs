use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sparqllm_core::embedding::Embedder;
use sparqllm_core::generation_eval::{load_eval_dataset, run_generation_eval};
use sparqllm_core::kg_store::{count_triples, discover_jobs, load_mapping, CleaningConfig, EtlJob, EtlSummary};
use sparqllm_core::query_generator::Pipeline;
use sparqllm_core::sparql::SparqlClient;
use sparqllm_core::template_store::{
    load_retrieval_dataset, load_templates, run_retrieval_eval, EmbeddingMode, IndexParams, TemplateIndex,
};
use sparqllm_core::vector_index::Metric;
use sparqllm_core::viz_planner::{load_viz_dataset, render_table_text, run_viz_eval};
use sparqllm_server::{answer, state_from_settings, AskRequest, Settings};
use sparqllm_store::{serve as serve_store, EmbeddedStore, EndpointOptions, RunningEndpoint};

#[derive(Debug, Parser)]
#[command(name = "sparqllm", version, about = "Template-guided natural-language questions over a SPARQL knowledge graph")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML settings file; SPARQLLM_* variables and flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "table")]
    format: Format,
    /// Start an in-process store and load the CSV tables of DIR into it.
    #[arg(long, global = true, value_name = "DIR")]
    embedded_kg: Option<PathBuf>,
    #[arg(long, global = true)]
    sparql_endpoint: Option<String>,
    #[arg(long, global = true)]
    llm_replay: Option<PathBuf>,
    #[arg(long, global = true)]
    llm_url: Option<String>,
    #[arg(long, global = true)]
    templates: Option<PathBuf>,
    #[arg(long, global = true)]
    index: Option<PathBuf>,
    #[arg(long, global = true)]
    embedding_model: Option<String>,
    #[arg(long, global = true)]
    mode: Option<EmbeddingMode>,
    #[arg(long, global = true)]
    metric: Option<Metric>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    n_templates: Option<usize>,
    #[arg(long, global = true)]
    max_attempts: Option<usize>,
    /// Generate without retrieved templates.
    #[arg(long, global = true)]
    no_templates: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Clean, map and load CSV tables into the SPARQL store.
    Etl {
        #[command(subcommand)]
        action: EtlAction,
    },
    /// Answer one question.
    Ask { question: String },
    /// Run an evaluation suite.
    Eval {
        #[command(subcommand)]
        suite: EvalSuite,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        bind: Option<SocketAddr>,
    },
    /// Template corpus tools.
    Templates {
        #[command(subcommand)]
        action: TemplatesAction,
    },
    /// Standalone SPARQL endpoint backed by an in-memory store.
    Store {
        #[command(subcommand)]
        action: StoreAction,
    },
}

#[derive(Debug, Subcommand)]
enum EtlAction {
    /// Load every NAME.csv of DIR with NAME_mapping.json (and NAME_cleaning.json when present).
    Run {
        #[arg(long, conflicts_with_all = ["csv", "mapping", "cleaning"])]
        dir: Option<PathBuf>,
        #[arg(long, requires = "mapping")]
        csv: Option<PathBuf>,
        #[arg(long, requires = "csv")]
        mapping: Option<PathBuf>,
        #[arg(long, requires = "csv")]
        cleaning: Option<PathBuf>,
    },
    /// Check a mapping file without loading anything.
    Check { mapping: PathBuf },
}

#[derive(Debug, Subcommand)]
enum EvalSuite {
    /// Top-n retrieval accuracy and MCC over a labeled question CSV.
    Retrieval {
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated n values.
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,7,10")]
        n: Vec<usize>,
        /// Comma-separated embedding modes; defaults to the configured mode.
        #[arg(long, value_delimiter = ',')]
        modes: Vec<EmbeddingMode>,
        /// Comma-separated metrics; defaults to the configured metric.
        #[arg(long, value_delimiter = ',')]
        metrics: Vec<Metric>,
    },
    /// ESR, RCA, RMR and HRA over a JSONL question set.
    Generation {
        #[arg(long)]
        dataset: PathBuf,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot/table decision accuracy over a labeled JSONL set.
    Viz {
        #[arg(long)]
        dataset: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum TemplatesAction {
    /// Validate a JSONL corpus.
    Check { corpus: PathBuf },
    /// Embed a corpus and save the index.
    Index {
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Load a saved index and print its configuration.
    Inspect { index: PathBuf },
}

#[derive(Debug, Subcommand)]
enum StoreAction {
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        bind: SocketAddr,
        /// Preload the CSV tables of DIR.
        #[arg(long, value_name = "DIR")]
        load: Option<PathBuf>,
    },
}

/// Exit 1: bad arguments or configuration. Exit 2: the pipeline failed.
enum Failure {
    Usage(anyhow::Error),
    Pipeline(anyhow::Error),
}

type Outcome = Result<(), Failure>;

trait UsageContext<T> {
    fn usage(self) -> Result<T, Failure>;
    fn pipeline(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> UsageContext<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn pipeline(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Pipeline(e.into()))
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("SPARQLLM_LOG").unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::from(2);
        }
    };
    match runtime.block_on(run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Pipeline(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn settings(global: &Global) -> Result<Settings, Failure> {
    let mut s = Settings::load(global.config.as_deref()).usage()?;
    let g = global;
    macro_rules! set {
        ($($flag:ident => $field:ident),* $(,)?) => {
            $(if let Some(v) = &g.$flag { s.$field = v.clone(); })*
        };
    }
    set!(sparql_endpoint => sparql_endpoint, embedding_model => embedding_model, mode => embedding_mode,
         metric => metric, seed => seed, n_templates => n_templates, max_attempts => max_attempts);
    if let Some(p) = &g.llm_replay {
        s.llm_replay = Some(p.clone());
    }
    if let Some(u) = &g.llm_url {
        s.llm_url = Some(u.clone());
    }
    if let Some(p) = &g.templates {
        s.templates = Some(p.clone());
    }
    if let Some(p) = &g.index {
        s.index = Some(p.clone());
    }
    if g.no_templates {
        s.use_templates = false;
    }
    s.generation()
        .validate()
        .map_err(|e| Failure::Usage(anyhow!("invalid configuration: {e}")))?;
    Ok(s)
}

/// Starts the in-process store requested by `--embedded-kg` and points the
/// settings at it.
async fn embedded_store(global: &Global, settings: &mut Settings) -> Result<Option<RunningEndpoint>, Failure> {
    let Some(dir) = &global.embedded_kg else {
        return Ok(None);
    };
    let jobs = discover_jobs(dir).usage()?;
    let store = EmbeddedStore::new().pipeline()?;
    let endpoint = serve_store(store, ([127, 0, 0, 1], 0).into(), EndpointOptions::default())
        .await
        .pipeline()?;
    settings.sparql_endpoint = endpoint.sparql_url();
    let client = settings.sparql_client().usage()?;
    for job in jobs {
        job.run(&client).await.pipeline()?;
    }
    Ok(Some(endpoint))
}

fn print_json<T: serde::Serialize>(value: &T) -> Outcome {
    println!("{}", serde_json::to_string_pretty(value).pipeline()?);
    Ok(())
}

async fn run(cli: Cli) -> Outcome {
    let g = &cli.global;
    match cli.command {
        Command::Etl { action } => etl(g, action).await,
        Command::Ask { question } => ask(g, question).await,
        Command::Eval { suite } => eval(g, suite).await,
        Command::Serve { bind } => {
            let mut s = settings(g)?;
            let _store = embedded_store(g, &mut s).await?;
            let addr: SocketAddr = match bind {
                Some(a) => a,
                None => s.bind.parse().with_context(|| format!("bind address '{}'", s.bind)).usage()?,
            };
            let state = state_from_settings(&s).await.usage()?;
            eprintln!("serving on http://{addr}/api");
            sparqllm_server::serve(state, addr).await.pipeline()
        }
        Command::Templates { action } => templates(g, action).await,
        Command::Store {
            action: StoreAction::Serve { bind, load },
        } => {
            let jobs = load.as_ref().map(discover_jobs).transpose().usage()?;
            let endpoint = serve_store(EmbeddedStore::new().pipeline()?, bind, EndpointOptions::default())
                .await
                .pipeline()?;
            let client = SparqlClient::new(endpoint.sparql_url().parse().pipeline()?);
            for job in jobs.unwrap_or_default() {
                job.run(&client).await.pipeline()?;
            }
            eprintln!("SPARQL endpoint at {} ({} triples)", endpoint.sparql_url(), endpoint.store.len());
            tokio::signal::ctrl_c().await.pipeline()?;
            endpoint.shutdown().await;
            Ok(())
        }
    }
}

async fn etl(g: &Global, action: EtlAction) -> Outcome {
    let jobs = match action {
        EtlAction::Check { mapping } => {
            let rules = load_mapping(&mapping).usage()?;
            println!("{}: {} rules", mapping.display(), rules.len());
            return Ok(());
        }
        EtlAction::Run { dir: Some(dir), .. } => discover_jobs(dir).usage()?,
        EtlAction::Run {
            csv: Some(csv),
            mapping: Some(mapping),
            cleaning,
            ..
        } => vec![EtlJob { csv, mapping, cleaning }],
        EtlAction::Run { .. } => return Err(Failure::Usage(anyhow!("pass --dir or --csv with --mapping"))),
    };
    let mut s = settings(g)?;
    let store = embedded_store(g, &mut s).await?;
    let client = s.sparql_client().usage()?;
    let mut summaries: Vec<(String, EtlSummary)> = Vec::new();
    for job in &jobs {
        if let Some(path) = &job.cleaning {
            let text = std::fs::read_to_string(path).with_context(|| path.display().to_string()).usage()?;
            serde_json::from_str::<CleaningConfig>(&text)
                .with_context(|| path.display().to_string())
                .usage()?;
        }
        let summary = job.run(&client).await.pipeline()?;
        summaries.push((job.csv.display().to_string(), summary));
    }
    let total = count_triples(&client).await.pipeline()?;
    match g.format {
        Format::Json => print_json(&serde_json::json!({
            "tables": summaries.iter().map(|(t, s)| serde_json::json!({"table": t, "summary": s})).collect::<Vec<_>>(),
            "store_triples": total,
        }))?,
        Format::Table => {
            let rows: Vec<Vec<String>> = summaries
                .iter()
                .map(|(t, s)| {
                    vec![
                        t.clone(),
                        s.rows.to_string(),
                        s.triples.to_string(),
                        s.load.inserted.to_string(),
                        s.cell_errors.len().to_string(),
                    ]
                })
                .collect();
            let headers = ["table", "rows", "triples", "inserted", "cell errors"].map(String::from);
            print!("{}", sparqllm_core::table::render_grid(&headers, &rows));
            println!("store now holds {total} triples");
        }
    }
    if let Some(store) = store {
        store.shutdown().await;
    }
    Ok(())
}

async fn ask(g: &Global, question: String) -> Outcome {
    let mut s = settings(g)?;
    let store = embedded_store(g, &mut s).await?;
    let state = state_from_settings(&s).await.usage()?;
    let result = answer(
        &state,
        AskRequest {
            question,
            ..AskRequest::default()
        },
    )
    .await;
    if let Some(store) = store {
        store.shutdown().await;
    }
    let response = match result {
        Ok(r) => r,
        Err(e) if e.status() == 400 => return Err(Failure::Usage(anyhow!("{}", e.message))),
        Err(e) => {
            if g.format == Format::Json {
                print_json(&e)?;
            }
            return Err(Failure::Pipeline(anyhow!("{} ({})", e.message, e.code)));
        }
    };
    match g.format {
        Format::Json => print_json(&response),
        Format::Table => {
            println!("{}\n", response.sparql);
            print!("{}", render_table_text(&response.results, 50));
            println!(
                "\n{} attempt(s); view: {}",
                response.trace.attempts.len(),
                response.chart_spec.to_json()
            );
            Ok(())
        }
    }
}

async fn eval(g: &Global, suite: EvalSuite) -> Outcome {
    match suite {
        EvalSuite::Retrieval {
            dataset,
            n,
            modes,
            metrics,
        } => {
            let s = settings(g)?;
            let samples = load_retrieval_dataset(&dataset).usage()?;
            let corpus = s
                .templates
                .clone()
                .ok_or_else(|| Failure::Usage(anyhow!("--templates is required for retrieval evaluation")))?;
            let templates = load_templates(&corpus).usage()?;
            let embedder = s.embedder().usage()?;
            let modes = if modes.is_empty() { vec![s.embedding_mode] } else { modes };
            let metrics = if metrics.is_empty() { vec![s.metric] } else { metrics };
            let mut reports = Vec::new();
            for &mode in &modes {
                for &metric in &metrics {
                    let params = IndexParams {
                        mode,
                        metric,
                        ..s.index_params()
                    };
                    let index = build_index(templates.clone(), embedder.as_ref(), params).await?;
                    reports.push(run_retrieval_eval(&index, &samples, &n, embedder.as_ref()).await.pipeline()?);
                }
            }
            match g.format {
                Format::Json => print_json(&reports),
                Format::Table => {
                    for r in &reports {
                        println!("{}", r.to_text());
                    }
                    Ok(())
                }
            }
        }
        EvalSuite::Generation { dataset, out } => {
            let mut s = settings(g)?;
            let samples = load_eval_dataset(&dataset).usage()?;
            let store = embedded_store(g, &mut s).await?;
            let embedder = s.embedder().usage()?;
            let index = s.template_index(embedder.as_ref()).await.usage()?;
            let llm = s.llm().usage()?;
            let client = s.sparql_client().usage()?;
            let ontology = s.ontology_text().usage()?;
            let pipeline = Pipeline {
                index: &index,
                embedder: embedder.as_ref(),
                llm: llm.as_ref(),
                executor: &client,
                ontology_text: &ontology,
            };
            let report = run_generation_eval(&samples, &pipeline, &client, &s.generation()).await.pipeline()?;
            if let Some(store) = store {
                store.shutdown().await;
            }
            if let Some(path) = out {
                std::fs::write(&path, report.to_json())
                    .with_context(|| path.display().to_string())
                    .pipeline()?;
            }
            match g.format {
                Format::Json => println!("{}", report.to_json()),
                Format::Table => print!("{}", report.to_text()),
            }
            Ok(())
        }
        EvalSuite::Viz { dataset } => {
            let s = settings(g)?;
            let samples = load_viz_dataset(&dataset).map_err(|errs| Failure::Usage(anyhow!(errs.join("; "))))?;
            let llm = if s.llm_url.is_some() || s.llm_replay.is_some() {
                Some(s.llm().usage()?)
            } else {
                None
            };
            let gateway = llm.as_deref().filter(|l| !l.is_mock());
            let report = run_viz_eval(&samples, gateway).await;
            match g.format {
                Format::Json => print_json(&report),
                Format::Table => {
                    print!("{}", report.to_text());
                    Ok(())
                }
            }
        }
    }
}

async fn build_index(
    templates: Vec<sparqllm_core::template_store::Template>,
    embedder: &dyn Embedder,
    params: IndexParams,
) -> Result<TemplateIndex, Failure> {
    TemplateIndex::build(templates, embedder, params).await.pipeline()
}

async fn templates(g: &Global, action: TemplatesAction) -> Outcome {
    match action {
        TemplatesAction::Check { corpus } => {
            let templates = load_templates(&corpus).usage()?;
            let targets: std::collections::BTreeSet<_> = templates.iter().map(|t| t.target.as_str()).collect();
            println!(
                "{}: {} templates, {} targets",
                corpus.display(),
                templates.len(),
                targets.len()
            );
            Ok(())
        }
        TemplatesAction::Index { corpus, out } => {
            let s = settings(g)?;
            let templates = load_templates(&corpus).usage()?;
            let embedder = s.embedder().usage()?;
            let index = build_index(templates, embedder.as_ref(), s.index_params()).await?;
            index.save(&out).pipeline()?;
            describe_index(g, &index, &out)
        }
        TemplatesAction::Inspect { index } => {
            let loaded = TemplateIndex::load(&index).usage()?;
            describe_index(g, &loaded, &index)
        }
    }
}

fn describe_index(g: &Global, index: &TemplateIndex, path: &Path) -> Outcome {
    let info = serde_json::json!({
        "path": path.display().to_string(),
        "templates": index.len(),
        "embedding_model": index.embedding_model(),
        "mode": index.mode(),
        "metric": index.metric(),
        "nlist": index.ivf().map(|i| i.nlist()),
    });
    match g.format {
        Format::Json => print_json(&info),
        Format::Table => {
            println!(
                "{}: {} templates, model {}, mode {}, metric {}, nlist {}",
                path.display(),
                index.len(),
                index.embedding_model(),
                index.mode(),
                index.metric(),
                index.ivf().map_or("-".to_string(), |i| i.nlist().to_string())
            );
            Ok(())
        }
    }
}
