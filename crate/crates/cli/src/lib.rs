//! `fieldscribe`: run the report pipeline, or any single stage of it.
//!
//! Exit codes: 0 success, 1 pipeline or data error, 2 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use fieldscribe_core::clustering::{self, ClustersFile};
use fieldscribe_core::config::{ClusteringChoice, ConfigError, PipelineConfig, ReportFormat};
use fieldscribe_core::gateway::GatewayClient;
use fieldscribe_core::metrics::GroundTruthLabeling;
use fieldscribe_core::pipeline::{
    self, clusters_file, evaluate_files, read_json, summaries_from_file, write_json, ClusteredView, EmbeddingsFile,
    Pipeline, PipelineError, SessionData, Stage, BEST_PARAMS_FILE, CLUSTERS_FILE, EMBEDDINGS_FILE, GRID_FILE,
    LOG_FILE, METRICS_FILE, REPORT_DIR,
};
use fieldscribe_core::session::{load_descriptions, save_descriptions, validate_session, DESCRIPTIONS_FILE};
use fieldscribe_core::tuning::{grid_tsv, GridSpec};

#[derive(Parser, Debug)]
#[command(name = "fieldscribe", version, about = "Clustered, geo-referenced reports from recorded robot sessions")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for representative selection.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use the in-process mock gateway instead of HTTP.
    #[arg(long, global = true)]
    mock: bool,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Report formats, comma separated: md,html,tex.
    #[arg(long, global = true)]
    format: Option<String>,
    /// Let the HTML map viewer fetch tiles from the configured tile URL.
    #[arg(long, global = true)]
    allow_tiles: bool,
    /// Publish representative images without redaction.
    #[arg(long, global = true)]
    no_anonymize: bool,
    /// Log stage progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a session directory and list every violation.
    Ingest { session: PathBuf },
    /// Caption every clip; writes descriptions.jsonl.
    Describe { session: PathBuf },
    /// Embed descriptions; writes embeddings.json.
    Embed {
        session: PathBuf,
        /// Defaults to <out>/descriptions.jsonl, then the session's own file.
        #[arg(long)]
        descriptions: Option<PathBuf>,
    },
    /// Cluster descriptions and pick representatives; writes clusters.json.
    Cluster {
        session: PathBuf,
        #[arg(long)]
        descriptions: Option<PathBuf>,
        /// Defaults to <out>/embeddings.json when its space matches.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Grid search on the tuning split; writes grid_results.tsv and best_params.json.
    Tune {
        #[arg(required = true)]
        sessions: Vec<PathBuf>,
        /// Grid specification (JSON); defaults to the config's grid.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Score a clustering against ground truth; writes metrics.json.
    Evaluate {
        clusters: PathBuf,
        ground_truth: PathBuf,
        /// Domain recorded in metrics.json; defaults to the ground truth's.
        #[arg(long)]
        domain: Option<String>,
    },
    /// Render reports from existing descriptions and clusters.
    Report {
        session: PathBuf,
        #[arg(long)]
        descriptions: Option<PathBuf>,
        #[arg(long)]
        clusters: Option<PathBuf>,
    },
    /// Full pipeline from frames to reports.
    Run { session: PathBuf },
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(format!("configuration: {e}"))
    }
}

type Outcome = Result<(), Failure>;

/// Parses `args` (program name first) and runs the command; returns the
/// process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(if cli.global.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .format_timestamp(None)
        .try_init();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            2
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            1
        }
    }
}

fn config_from(g: &Global) -> Result<PipelineConfig, Failure> {
    let mut c = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    c.gateway.apply_env();
    if let Some(seed) = g.seed {
        c.seed = seed;
    }
    if let Some(f) = &g.format {
        c.report.formats = ReportFormat::parse_list(f)?;
    }
    if g.allow_tiles {
        c.report.allow_tiles = true;
    }
    if g.no_anonymize {
        c.anonymize = false;
    }
    if !c.anonymize {
        eprintln!(
            "warning: anonymization is disabled; faces and license plates in representative images will be published unredacted"
        );
    }
    c.validate()?;
    Ok(c)
}

fn session_dir(p: &Path) -> Result<&Path, Failure> {
    if p.is_dir() {
        Ok(p)
    } else {
        Err(Failure::Usage(format!("session directory {} does not exist", p.display())))
    }
}

fn existing_file(p: &Path) -> Result<&Path, Failure> {
    if p.is_file() {
        Ok(p)
    } else {
        Err(Failure::Usage(format!("file {} does not exist", p.display())))
    }
}

fn connect(g: &Global, config: &PipelineConfig, roots: &[&Path]) -> Result<Pipeline, Failure> {
    let gw = if g.mock {
        pipeline::mock_gateway(config, roots)
    } else {
        GatewayClient::http(config.gateway.clone())
    }
    .map_err(|e| Failure::Data(format!("gateway: {e}")))?;
    Ok(Pipeline::new(config.clone(), gw))
}

/// Session plus descriptions from `explicit`, `<out>/descriptions.jsonl`,
/// or the session itself, in that order.
fn load_with(p: &Pipeline, dir: &Path, explicit: Option<&Path>, out: &Path) -> Result<SessionData, Failure> {
    let session = p.ingest(dir)?;
    let from_out = out.join(DESCRIPTIONS_FILE);
    let file = match explicit {
        Some(f) => Some(existing_file(f)?.to_path_buf()),
        None => from_out.is_file().then_some(from_out),
    };
    let descriptions = match file {
        Some(f) => load_descriptions(&f, &session).map_err(|e| Failure::Data(format!("{}: {e}", f.display())))?,
        None => p.descriptions_for(&session)?,
    };
    let truth = p.ground_truth_for(&session, descriptions.len())?;
    Ok(SessionData {
        session,
        descriptions,
        truth,
    })
}

fn ensure_out(out: &Path) -> Outcome {
    std::fs::create_dir_all(out).map_err(|e| Failure::Data(format!("cannot create {}: {e}", out.display())))
}

fn dispatch(cli: Cli) -> Outcome {
    let g = &cli.global;
    match &cli.command {
        Command::Ingest { session } => ingest(session_dir(session)?),
        Command::Evaluate {
            clusters,
            ground_truth,
            domain,
        } => evaluate(g, existing_file(clusters)?, existing_file(ground_truth)?, domain.as_deref()),
        Command::Describe { session } => {
            let dir = session_dir(session)?;
            let config = config_from(g)?;
            let p = connect(g, &config, &[dir])?;
            ensure_out(&g.out)?;
            let s = p.ingest(dir)?;
            let d = p.describe(&s)?;
            let path = g.out.join(DESCRIPTIONS_FILE);
            save_descriptions(&path, &d).map_err(|e| Failure::Data(e.to_string()))?;
            println!("{} descriptions written to {}", d.len(), path.display());
            Ok(())
        }
        Command::Embed { session, descriptions } => {
            let dir = session_dir(session)?;
            let config = config_from(g)?;
            let p = connect(g, &config, &[dir])?;
            ensure_out(&g.out)?;
            let data = load_with(&p, dir, descriptions.as_deref(), &g.out)?;
            let space = config.cluster_space();
            let v = p.embed(&data.descriptions, space)?;
            let path = write_json(Stage::Embed, &g.out.join(EMBEDDINGS_FILE), &EmbeddingsFile::from_vectors(space, &v))?;
            println!("{} vectors in {space} written to {}", v.len(), path.display());
            Ok(())
        }
        Command::Cluster {
            session,
            descriptions,
            embeddings,
        } => cluster(g, session_dir(session)?, descriptions.as_deref(), embeddings.as_deref()),
        Command::Tune { sessions, grid } => tune(g, sessions, grid.as_deref()),
        Command::Report {
            session,
            descriptions,
            clusters,
        } => report(g, session_dir(session)?, descriptions.as_deref(), clusters.as_deref()),
        Command::Run { session } => {
            let dir = session_dir(session)?;
            let config = config_from(g)?;
            let p = connect(g, &config, &[dir])?;
            let s = p.run(dir, &g.out)?;
            println!(
                "{} descriptions in {} clusters; outputs in {} (log: {})",
                s.descriptions,
                s.clusters,
                g.out.display(),
                g.out.join(LOG_FILE).display()
            );
            if let Some(m) = &s.metrics {
                println!(
                    "evaluation split: n {} ARI {:.3} NMI {:.3} FMI {:.3}",
                    m.n, m.ari, m.nmi_arithmetic, m.fmi
                );
            }
            Ok(())
        }
    }
}

fn ingest(dir: &Path) -> Outcome {
    let violations = validate_session(dir);
    if violations.is_empty() {
        let s = fieldscribe_core::session::load_session(dir).map_err(|e| Failure::Data(e.to_string()))?;
        println!(
            "ok: session {} ({}), {} clips, {} poses",
            s.session_id,
            s.domain,
            s.clips.len(),
            s.track.len()
        );
        return Ok(());
    }
    for v in &violations {
        println!("{v}");
    }
    Err(Failure::Data(format!("{} violation(s) in {}", violations.len(), dir.display())))
}

fn evaluate(g: &Global, clusters: &Path, truth: &Path, domain: Option<&str>) -> Outcome {
    let c: ClustersFile = read_json(Stage::Evaluate, clusters)?;
    let text = std::fs::read_to_string(truth).map_err(|e| Failure::Data(format!("{}: {e}", truth.display())))?;
    let gt = GroundTruthLabeling::parse(&text).map_err(|e| Failure::Data(format!("{}: {e}", truth.display())))?;
    let domain = domain
        .map(str::to_string)
        .or_else(|| gt.domain.as_ref().map(|d| d.as_key().to_string()))
        .unwrap_or_else(|| "all".into());
    let m = evaluate_files(&c, &gt, &domain)?;
    ensure_out(&g.out)?;
    let path = write_json(Stage::Evaluate, &g.out.join(METRICS_FILE), &m)?;
    println!(
        "n {} ARI {:.6} NMI {:.6} FMI {:.6} -> {}",
        m.n,
        m.ari,
        m.nmi_arithmetic,
        m.fmi,
        path.display()
    );
    Ok(())
}

fn cluster(g: &Global, dir: &Path, descriptions: Option<&Path>, embeddings: Option<&Path>) -> Outcome {
    let config = config_from(g)?;
    let p = connect(g, &config, &[dir])?;
    ensure_out(&g.out)?;
    let data = load_with(&p, dir, descriptions, &g.out)?;
    let (space, params, partition) = match config.clustering {
        ClusteringChoice::Auto => {
            let c = p.cluster(&data)?;
            if let Some(t) = &c.tuning {
                write_grid(&g.out, &t.trials)?;
            }
            (c.space, c.params, c.partition)
        }
        ClusteringChoice::Fixed(params) => {
            let space = config.cluster_space().to_string();
            let default_path = g.out.join(EMBEDDINGS_FILE);
            let file = match embeddings {
                Some(f) => Some(existing_file(f)?.to_path_buf()),
                None => default_path.is_file().then_some(default_path),
            };
            let loaded = match file {
                Some(f) => {
                    let e: EmbeddingsFile = read_json(Stage::Cluster, &f)?;
                    (e.space_id == space).then_some(e).map(|e| e.to_vectors()).transpose().map_err(Failure::Data)?
                }
                None => None,
            };
            let vectors = match loaded {
                Some(v) if v.len() == data.descriptions.len() => v,
                Some(v) => {
                    return Err(Failure::Data(format!(
                        "{} embeddings for {} descriptions",
                        v.len(),
                        data.descriptions.len()
                    )))
                }
                None => p.embed(&data.descriptions, &space)?,
            };
            let partition =
                clustering::cluster(&vectors, &params).map_err(|e| Failure::Data(format!("cluster: {e}")))?;
            (space, params, partition)
        }
    };
    let summaries = p.representatives(&data.session, &data.descriptions, &partition)?;
    let path = write_json(
        Stage::Cluster,
        &g.out.join(CLUSTERS_FILE),
        &clusters_file(&space, &params, &partition, &summaries),
    )?;
    println!("{} descriptions in {} clusters -> {}", partition.len(), partition.k(), path.display());
    Ok(())
}

fn write_grid(out: &Path, trials: &[fieldscribe_core::tuning::TrialResult]) -> Outcome {
    let path = out.join(GRID_FILE);
    std::fs::write(&path, grid_tsv(trials)).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn tune(g: &Global, sessions: &[PathBuf], grid: Option<&Path>) -> Outcome {
    let dirs = sessions.iter().map(|s| session_dir(s)).collect::<Result<Vec<_>, _>>()?;
    let config = config_from(g)?;
    let spec = match grid {
        Some(f) => {
            let mut spec: GridSpec = read_json(Stage::Tune, existing_file(f)?)?;
            if spec.embed_spaces.is_empty() {
                spec.embed_spaces.push(config.cluster_space().to_string());
            }
            spec
        }
        None => config.resolved_grid(),
    };
    let p = connect(g, &config, &dirs)?;
    ensure_out(&g.out)?;
    let data = dirs
        .iter()
        .map(|d| load_with(&p, d, None, Path::new("")))
        .collect::<Result<Vec<_>, _>>()?;
    let outcome = p.tune(&data, &spec)?;
    write_grid(&g.out, &outcome.trials)?;
    let best = &outcome.best;
    let path = write_json(Stage::Tune, &g.out.join(BEST_PARAMS_FILE), best)?;
    println!(
        "{} trials; best: space {} metric {} linkage {} threshold {} (ARI {:.6} NMI {:.6} FMI {:.6}, k {}) -> {}",
        outcome.trials.len(),
        best.params.space,
        best.params.metric,
        best.params.linkage,
        best.params.threshold,
        best.ari,
        best.nmi,
        best.fmi,
        best.k,
        path.display()
    );
    Ok(())
}

fn report(g: &Global, dir: &Path, descriptions: Option<&Path>, clusters: Option<&Path>) -> Outcome {
    let config = config_from(g)?;
    let p = connect(g, &config, &[dir])?;
    let clusters_path = match clusters {
        Some(c) => existing_file(c)?.to_path_buf(),
        None => existing_file(&g.out.join(CLUSTERS_FILE))?.to_path_buf(),
    };
    let file: ClustersFile = read_json(Stage::Report, &clusters_path)?;
    let data = load_with(&p, dir, descriptions, &g.out)?;
    let partition = file.partition().map_err(|e| Failure::Data(format!("{}: {e}", clusters_path.display())))?;
    if partition.len() != data.descriptions.len() {
        return Err(Failure::Data(format!(
            "{} has {} labels for {} descriptions",
            clusters_path.display(),
            partition.len(),
            data.descriptions.len()
        )));
    }
    let params = clustering::ClusterParams {
        metric: file.params.metric,
        threshold: file.params.threshold,
        linkage: file.params.linkage,
    };
    let summaries = summaries_from_file(&file, &partition);
    let visuals = p.visuals(&data.session, &data.descriptions, &summaries)?;
    let metrics = p.evaluate(&data, &file.params.space_id, &params)?;
    let out = g.out.join(REPORT_DIR);
    let view = ClusteredView {
        space: &file.params.space_id,
        params: &params,
        partition: &partition,
    };
    let written = p.report(&data, &view, &summaries, visuals, metrics.as_ref(), &out)?;
    if let Some(m) = &metrics {
        write_json(Stage::Evaluate, &out.join(METRICS_FILE), m)?;
    }
    println!("{} files written to {}", written.len(), out.display());
    Ok(())
}
