//! `sevscale` command-line tool.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sevscale::audit::{BinaryFlag, DatasheetConfig};
use sevscale::io::{read_json_file, read_jsonl_file, write_jsonl};
use sevscale::model::Campaign;
use sevscale::reliability::DEFAULT_TRIALS;
use sevscale::sampler::CorpusRecord;
use sevscale::scoring::{read_scores_csv, write_scores_csv};
use sevscale::sim::{simulate_judgments, LatentWorld};
use sevscale::{
    aggregate_labelings, balance_report, compute_scores, disparity_report, export_datasheet, generate_design,
    sample_corpus, split_half_reliability, verify_design, AggregatedLabel, BwsDesign, CampaignPolicy,
    GroupBalanceReport, IdentityRegistry, Item, ItemId, ItemLabeling, Judgment, ReliabilityReport, SamplingPlan,
};

mod serve;

#[derive(Parser)]
#[command(name = "sevscale", version, about = "Best-worst severity annotation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or check best-worst tuple designs.
    #[command(subcommand)]
    Design(DesignCommand),
    /// Turn judgments into severity scores.
    #[command(subcommand)]
    Score(ScoreCommand),
    /// Split-half reliability of a set of judgments.
    Reliability(ReliabilityArgs),
    /// Balance, disparity and datasheet reports.
    #[command(subcommand)]
    Audit(AuditCommand),
    /// Draw items from a corpus according to a sampling plan.
    Sample(SampleArgs),
    /// Simulate annotators over items with known severities.
    Simulate(SimulateArgs),
    /// Subject-matter label utilities.
    #[command(subcommand)]
    Labels(LabelsCommand),
    /// Run the campaign HTTP server.
    Serve(serve::ServeArgs),
}

#[derive(Subcommand)]
enum DesignCommand {
    /// Build a design over the items of a JSONL item file.
    Generate {
        #[arg(long)]
        items: PathBuf,
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 2.0)]
        multiplier: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a design document; exits non-zero when it is invalid.
    Verify { file: PathBuf },
}

#[derive(Subcommand)]
enum ScoreCommand {
    /// Write the scores CSV.
    Compute {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        judgments: PathBuf,
        /// Item file, for the text column.
        #[arg(long)]
        items: Option<PathBuf>,
        /// Aggregated labels, for the labels column.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ReliabilityArgs {
    #[arg(long)]
    design: PathBuf,
    #[arg(long)]
    judgments: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Default, clap::ValueEnum)]
enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Subcommand)]
enum AuditCommand {
    /// Abusive and benign counts per identity group.
    Balance {
        /// Scores CSV.
        #[arg(long)]
        scores: PathBuf,
        /// Aggregated labels, JSONL.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        /// Registry whose groups always get a row.
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// False positive and false negative rates per identity group.
    Disparity {
        /// Gold flags, JSONL of `{item_id, abusive}`.
        #[arg(long)]
        gold: PathBuf,
        /// Model flags in the same format.
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Markdown datasheet for a campaign.
    Datasheet {
        /// Campaign document, JSON.
        #[arg(long)]
        campaign: PathBuf,
        /// Balance report, JSON.
        #[arg(long)]
        balance: PathBuf,
        /// Reliability report, JSON.
        #[arg(long)]
        reliability: Option<PathBuf>,
        #[arg(long, default_value_t = DatasheetConfig::default().low_reliability_threshold)]
        low_reliability_threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SampleArgs {
    /// Corpus records, JSONL.
    #[arg(long)]
    corpus: PathBuf,
    /// Sampling plan, TOML or JSON.
    #[arg(long)]
    plan: PathBuf,
    /// Overrides the plan seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Sampled items, JSONL.
    #[arg(long)]
    out: PathBuf,
    /// Per-item provenance, JSONL.
    #[arg(long)]
    provenance: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 50)]
    n_items: usize,
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 2.0)]
    multiplier: f64,
    #[arg(long, default_value_t = 3)]
    annotators: usize,
    #[arg(long, default_value_t = 0.05)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for items.jsonl, design.json, judgments.jsonl and latent.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum LabelsCommand {
    /// Majority-aggregate individual labelings.
    Aggregate {
        #[arg(long)]
        labelings: PathBuf,
        #[arg(long, default_value_t = CampaignPolicy::default().labelers_per_item)]
        labelers_per_item: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Design(DesignCommand::Generate {
            items,
            n,
            multiplier,
            seed,
            out,
        }) => {
            let ids: Vec<ItemId> = read_items(&items)?.into_iter().map(|i| i.item_id).collect();
            let design = generate_design(&ids, n, multiplier, seed)?;
            if !design.pair_target_met {
                tracing::warn!(
                    max_pair_count = design.max_pair_count,
                    bound = design.pair_bound,
                    "pair diversity target not met"
                );
            }
            write_json(out.as_deref(), &design)
        }
        Command::Design(DesignCommand::Verify { file }) => {
            let design: BwsDesign = read_json_file(&file)?;
            let verdict = verify_design(&design);
            write_json(None, &verdict)?;
            if !verdict.is_valid() {
                bail!("{} violation(s) in {}", verdict.violations.len(), file.display());
            }
            Ok(())
        }
        Command::Score(ScoreCommand::Compute {
            design,
            judgments,
            items,
            labels,
            out,
        }) => {
            let design: BwsDesign = read_json_file(&design)?;
            let judgments: Vec<Judgment> = read_jsonl_file(&judgments)?;
            let scores = compute_scores(&judgments, &design)?;
            let items: BTreeMap<ItemId, Item> = match items {
                Some(path) => read_items(&path)?.into_iter().map(|i| (i.item_id.clone(), i)).collect(),
                None => BTreeMap::new(),
            };
            let labels = labels.as_deref().map(read_labels).transpose()?.unwrap_or_default();
            write_scores_csv(output(out.as_deref())?, &scores, &items, &labels)?;
            Ok(())
        }
        Command::Reliability(args) => {
            let design: BwsDesign = read_json_file(&args.design)?;
            let judgments: Vec<Judgment> = read_jsonl_file(&args.judgments)?;
            let report = split_half_reliability(&judgments, &design, args.trials, args.seed)?;
            tracing::info!(mean_shr = report.mean_shr, trials = report.trials, "split-half reliability");
            write_json(args.out.as_deref(), &report)
        }
        Command::Audit(cmd) => audit(cmd),
        Command::Sample(args) => sample(args),
        Command::Simulate(args) => simulate(args),
        Command::Labels(LabelsCommand::Aggregate {
            labelings,
            labelers_per_item,
            out,
        }) => {
            let labelings: Vec<ItemLabeling> = read_jsonl_file(&labelings)?;
            let policy = CampaignPolicy {
                labelers_per_item,
                ..CampaignPolicy::default()
            };
            let aggregated = aggregate_labelings(&labelings, &policy)?;
            let pending = aggregated.values().filter(|a| a.needs_adjudication).count();
            if pending > 0 {
                tracing::warn!(items = pending, "items need adjudication");
            }
            write_jsonl(output(out.as_deref())?, aggregated.values())?;
            Ok(())
        }
        Command::Serve(args) => serve::run(args),
    }
}

fn audit(cmd: AuditCommand) -> Result<()> {
    match cmd {
        AuditCommand::Balance {
            scores,
            labels,
            tau,
            registry,
            format,
            out,
        } => {
            let scores = read_scores_csv(open(&scores)?)?;
            let labels = read_labels(&labels)?;
            let groups = match registry {
                Some(path) => IdentityRegistry::load(&path)?.group_ids().cloned().collect(),
                None => Vec::new(),
            };
            let report = balance_report(&scores, &labels, tau, &groups)?;
            match format {
                Format::Text => write_text(out.as_deref(), &report.to_string()),
                Format::Json => write_json(out.as_deref(), &report),
            }
        }
        AuditCommand::Disparity {
            gold,
            predictions,
            labels,
            format,
            out,
        } => {
            let flags = |path: &Path| -> Result<BTreeMap<ItemId, bool>> {
                let rows: Vec<BinaryFlag> = read_jsonl_file(path)?;
                Ok(rows.into_iter().map(|f| (f.item_id, f.abusive)).collect())
            };
            let report = disparity_report(&flags(&gold)?, &flags(&predictions)?, &read_labels(&labels)?)?;
            match format {
                Format::Text => write_text(out.as_deref(), &report.to_string()),
                Format::Json => write_json(out.as_deref(), &report),
            }
        }
        AuditCommand::Datasheet {
            campaign,
            balance,
            reliability,
            low_reliability_threshold,
            out,
        } => {
            let campaign: Campaign = read_json_file(&campaign)?;
            let balance: GroupBalanceReport = read_json_file(&balance)?;
            let reliability: Option<ReliabilityReport> =
                reliability.as_deref().map(read_json_file).transpose()?;
            let config = DatasheetConfig {
                low_reliability_threshold,
            };
            write_text(
                out.as_deref(),
                &export_datasheet(&campaign, &balance, reliability.as_ref(), &config),
            )
        }
    }
}

fn sample(args: SampleArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.plan).with_context(|| format!("reading {}", args.plan.display()))?;
    let mut plan: SamplingPlan = if args.plan.extension().is_some_and(|e| e == "toml") {
        sevscale::io::from_toml(&text).map_err(anyhow::Error::msg)?
    } else {
        serde_json::from_str(&text)?
    };
    if let Some(seed) = args.seed {
        plan.seed = seed;
    }
    let corpus: Vec<CorpusRecord> = read_jsonl_file(&args.corpus)?;
    let outcome = sample_corpus(corpus, &plan)?;
    for s in &outcome.shortfalls {
        tracing::warn!(quota = ?s.quota, achieved = s.achieved, target = s.target, "quota not met");
    }
    write_jsonl(output(Some(&args.out))?, outcome.items.iter().map(|s| &s.item))?;
    if let Some(path) = &args.provenance {
        write_jsonl(output(Some(path))?, outcome.items.iter())?;
    }
    tracing::info!(items = outcome.items.len(), "sampled");
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let world = LatentWorld::uniform(args.n_items, args.sigma, args.seed);
    let design = generate_design(&world.item_ids(), args.n, args.multiplier, args.seed)?;
    let judgments = simulate_judgments(&world, &design, args.annotators)?;
    std::fs::create_dir_all(&args.out)?;
    write_jsonl(output(Some(&args.out.join("items.jsonl")))?, world.as_items().iter())?;
    write_json(Some(&args.out.join("design.json")), &design)?;
    write_jsonl(output(Some(&args.out.join("judgments.jsonl")))?, judgments.iter())?;
    write_json(Some(&args.out.join("latent.json")), &world)?;
    tracing::info!(
        items = design.item_count,
        tuples = design.tuple_count,
        judgments = judgments.len(),
        dir = %args.out.display(),
        "simulation written"
    );
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(file))
}

fn read_items(path: &Path) -> Result<Vec<Item>> {
    let items: Vec<Item> = read_jsonl_file(path)?;
    sevscale::model::validate_items(&items)?;
    Ok(items)
}

fn read_labels(path: &Path) -> Result<BTreeMap<ItemId, AggregatedLabel>> {
    let rows: Vec<AggregatedLabel> = read_jsonl_file(path)?;
    Ok(rows.into_iter().map(|l| (l.item_id.clone(), l)).collect())
}

/// File at `path`, or stdout.
fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: serde::Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    let mut w = output(path)?;
    w.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}
