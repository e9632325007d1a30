//! `chainflow`: every pipeline stage as a subcommand, plus `pipeline` to run
//! them all. Exit codes: 1 bad input, 2 bad configuration, 3 internal error.

use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chainflow::action::{behaviour_graph_for, load_bgraph, save_bgraph, BehaviourGraph};
use chainflow::cluster::{
    read_clusters, run_suite, write_clusters, write_scores, AlgorithmRegistry, ClusterError, ClusterTable, KPolicy,
};
use chainflow::config::{ConfigError, PipelineConfig};
use chainflow::embed::{embed_users, read_embeddings, write_embeddings};
use chainflow::export::{ExportFormat, ExportGraph};
use chainflow::flow::{eligible_users, extract_flow, general_flow, FlowGraph};
use chainflow::ingest::{load_dataset, load_graph, save_graph, IngestError};
use chainflow::pipeline::run_pipeline;
use chainflow::profile::{profile_clusters, write_profiles_csv};
use chainflow::sequence::{sequences_for_address, sequences_for_token, TokenKeyMode};
use chainflow::synthgen::{default_archetypes, generate, load_archetypes};

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

fn input(e: impl Display) -> Failure {
    Failure { code: 1, message: e.to_string() }
}

fn config(e: impl Display) -> Failure {
    Failure { code: 2, message: e.to_string() }
}

fn internal(e: impl Display) -> Failure {
    Failure { code: 3, message: e.to_string() }
}

fn from_config_error(e: ConfigError) -> Failure {
    match e {
        ConfigError::Io { .. } => input(e),
        _ => config(e),
    }
}

fn from_cluster_error(e: ClusterError) -> Failure {
    match e {
        ClusterError::UnknownAlgorithm(_) | ClusterError::InvalidConfig(_) => config(e),
        ClusterError::TooFewPoints { .. } | ClusterError::Parse(_) | ClusterError::Io(_) => input(e),
        _ => internal(e),
    }
}

/// A closed stdout (`chainflow sequence ... | head`) ends the command quietly.
fn stdout_error(e: std::io::Error) -> Failure {
    match e.kind() {
        std::io::ErrorKind::BrokenPipe => Failure { code: 0, message: String::new() },
        _ => internal(e),
    }
}

type Outcome = Result<(), Failure>;

#[derive(Parser)]
#[command(name = "chainflow", version, about = "Behavioural flow analysis of decoded blockchain event logs")]
struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config value, e.g. `--set embed.d_hidden=32`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a transaction log into a property graph directory.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Abort on the first malformed line.
        #[arg(long)]
        strict: bool,
    },
    /// Print the event sequence of an address or a token as JSON lines.
    Sequence {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, conflicts_with = "token", required_unless_present = "token")]
        address: Option<String>,
        #[arg(long)]
        token: Option<String>,
        #[arg(long)]
        token_key: Option<TokenKeyMode>,
    },
    /// Form actions and build the behaviour graph.
    Actions {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        repeat_threshold: Option<usize>,
    },
    /// Render one user's flow.
    Flow {
        #[arg(long)]
        bgraph: PathBuf,
        #[arg(long)]
        address: String,
        /// Include NFT nodes and USED_BY edges.
        #[arg(long)]
        extended: bool,
        /// dot, graphml, csv or json.
        #[arg(long, default_value = "json")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Embed every eligible user's extended flow.
    Embed(EmbedArgs),
    /// Cluster embeddings and score the partitions.
    Cluster(ClusterArgs),
    /// Characterize the clusters of one algorithm.
    Profile(ProfileArgs),
    /// Generate a synthetic dataset with planted archetypes.
    Synth {
        /// `default` or a JSON file of archetype specs.
        #[arg(long, default_value = "default")]
        archetypes: String,
        #[arg(long, default_value_t = 30)]
        users_per: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run every stage into one run directory.
    Pipeline {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Export a flow, a cluster subgraph or a cluster's general flow.
    Export(ExportArgs),
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    bgraph: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Embed with the seeded initial weights.
    #[arg(long)]
    untrained: bool,
    #[arg(long)]
    d_hidden: Option<usize>,
    #[arg(long)]
    d_out: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// `all` or a comma-separated list.
    #[arg(long)]
    algo: Option<String>,
    #[arg(long, conflicts_with = "auto_k")]
    k: Option<usize>,
    /// Choose k with the elbow method (the default when --k is absent).
    #[arg(long)]
    auto_k: bool,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    scores: PathBuf,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long)]
    bgraph: PathBuf,
    #[arg(long)]
    clusters: PathBuf,
    /// Column of the clusters file to profile.
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<usize>,
    /// Read rho as sum(x) / m instead of the share of actions with usage.
    #[arg(long)]
    rho_literal: bool,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    bgraph: PathBuf,
    /// dot, graphml or csv.
    #[arg(long)]
    format: String,
    #[arg(long)]
    out: PathBuf,
    /// Export this user's extended flow.
    #[arg(long, conflicts_with = "cluster")]
    address: Option<String>,
    #[arg(long, requires = "clusters")]
    cluster: Option<usize>,
    #[arg(long)]
    clusters: Option<PathBuf>,
    #[arg(long)]
    algo: Option<String>,
    /// Export the cluster's general flow instead of all member flows.
    #[arg(long)]
    general: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) if f.code == 0 => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("chainflow: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).map_err(from_config_error)?,
        None => PipelineConfig::default(),
    };
    for s in &cli.sets {
        cfg.set(s).map_err(from_config_error)?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Outcome {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Ingest { input: path, out, strict } => {
            cfg.ingest.strict |= strict;
            let report = load_dataset(&path, &cfg.ingest.options()).map_err(|e| match e {
                IngestError::Io { .. } | IngestError::Schema(_) => input(e),
            })?;
            for e in &report.errors {
                eprintln!("skipped line {}: {}", e.line, e.message);
            }
            save_graph(&report.graph, &out).map_err(internal)?;
            let c = report.graph.counts();
            println!("{} transactions, {} nodes, {} edges", report.graph.transactions().len(), c.nodes(), c.edges());
            Ok(())
        }
        Command::Sequence { graph, address, token, token_key } => {
            if let Some(mode) = token_key {
                cfg.actions.sequence.token_key = mode;
            }
            let g = load_graph(&graph).map_err(input)?;
            let mut out = std::io::stdout().lock();
            let mut emit = |v: &dyn erased::Json| writeln!(out, "{}", v.json()).map_err(stdout_error);
            if let Some(addr) = address {
                for e in &sequences_for_address(&g, &addr.to_ascii_lowercase(), &cfg.actions.sequence).entries {
                    emit(e)?;
                }
            } else if let Some(id) = token {
                for seq in sequences_for_token(&g, &id, &cfg.actions.sequence) {
                    emit(&seq)?;
                }
            }
            Ok(())
        }
        Command::Actions { graph, out, repeat_threshold } => {
            if let Some(r) = repeat_threshold {
                cfg.actions.repeat_threshold = r;
            }
            let g = load_graph(&graph).map_err(input)?;
            let (formation, bg) = behaviour_graph_for(&g, &cfg.actions).map_err(internal)?;
            save_bgraph(&bg, &out).map_err(internal)?;
            println!("{} actions, {} users, {} NFTs", formation.catalogue.len(), bg.users().len(), bg.nfts().len());
            Ok(())
        }
        Command::Flow { bgraph, address, extended, format, out } => {
            let bg = load_bgraph(&bgraph).map_err(input)?;
            let flow = extract_flow(&bg, &address.to_ascii_lowercase(), extended).map_err(input)?;
            let text = if format == "json" {
                serde_json::to_string_pretty(&flow).map_err(internal)? + "\n"
            } else {
                let f: ExportFormat = format.parse().map_err(config)?;
                ExportGraph::from_flow(&bg, &flow).render(f)
            };
            write_or_print(out.as_deref(), &text)
        }
        Command::Embed(a) => embed(cfg, a),
        Command::Cluster(a) => cluster(cfg, a),
        Command::Profile(a) => profile(cfg, a),
        Command::Synth { archetypes, users_per, seed, out, truth } => {
            let seed = cfg.resolve_seed(seed).map_err(config)?;
            let specs = if archetypes == "default" {
                default_archetypes()
            } else {
                load_archetypes(Path::new(&archetypes)).map_err(input)?
            };
            let s = generate(&specs, users_per, seed).map_err(config)?;
            s.write(&out).map_err(internal)?;
            if let Some(t) = truth {
                s.truth.write_csv(&t).map_err(internal)?;
            }
            println!("{} transactions for {} users", s.lines.len(), s.truth.assignment.len());
            Ok(())
        }
        Command::Pipeline { input: path, out, seed } => {
            let seed = cfg.resolve_seed(seed).map_err(config)?;
            if !path.is_file() {
                return Err(input(format!("input {} does not exist", path.display())));
            }
            let m = run_pipeline(&cfg, seed, &path, &out).map_err(|e| Failure {
                code: e.exit_code() as u8,
                message: e.to_string(),
            })?;
            println!(
                "{} eligible users, k = {}, {} profiles in {}",
                m.counts.eligible_users,
                m.k,
                m.profiles.len(),
                out.display()
            );
            Ok(())
        }
        Command::Export(a) => export(cfg, a),
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => std::fs::write(p, text).map_err(internal),
        None => std::io::stdout().lock().write_all(text.as_bytes()).map_err(stdout_error),
    }
}

fn embed(mut cfg: PipelineConfig, a: EmbedArgs) -> Outcome {
    let seed = cfg.resolve_seed(a.seed).map_err(config)?;
    cfg.embed.untrained |= a.untrained;
    if let Some(v) = a.d_hidden {
        cfg.embed.d_hidden = v;
    }
    if let Some(v) = a.d_out {
        cfg.embed.d_out = v;
    }
    if let Some(v) = a.epochs {
        cfg.embed.train.epochs = v;
    }
    if let Some(v) = a.lr {
        cfg.embed.train.lr = v;
    }
    cfg.validate().map_err(config)?;
    let bg = load_bgraph(&a.bgraph).map_err(input)?;
    let users = eligible_users(&bg, cfg.flow.min_unique_actions);
    if users.is_empty() {
        return Err(input("no eligible users in the behaviour graph"));
    }
    let run = embed_users(&bg, &users, &cfg.embed, seed).map_err(internal)?;
    write_embeddings(&a.out, &run.addresses, &run.z).map_err(internal)?;
    if let Some(loss) = run.report.as_ref().and_then(|r| r.losses.last()) {
        println!("{} users embedded; final train loss {loss:.6}", users.len());
    } else {
        println!("{} users embedded", users.len());
    }
    Ok(())
}

fn cluster(mut cfg: PipelineConfig, a: ClusterArgs) -> Outcome {
    let seed = cfg.resolve_seed(a.seed).map_err(config)?;
    if let Some(algo) = a.algo {
        cfg.cluster.algorithms = algo;
    }
    if let Some(m) = a.k_max {
        cfg.cluster.k_max = m;
    }
    if a.k.is_some() {
        cfg.cluster.k = a.k;
    } else if a.auto_k {
        cfg.cluster.k = None;
    }
    cfg.validate().map_err(config)?;
    let (addresses, z) = read_embeddings(&a.embeddings).map_err(input)?;
    let registry = AlgorithmRegistry::with_defaults(&cfg.cluster.algorithm_config()).map_err(from_cluster_error)?;
    let policy: KPolicy = cfg.cluster.policy();
    let suite = run_suite(z.view(), &registry, &cfg.cluster.algorithms, policy, seed, &cfg.cluster.kmeans)
        .map_err(from_cluster_error)?;
    write_clusters(&a.out, &ClusterTable::from_runs(&addresses, &suite.runs)).map_err(internal)?;
    write_scores(&a.scores, &suite.runs).map_err(internal)?;
    for r in &suite.runs {
        let note = if r.assignment.converged { "" } else { " (not converged)" };
        println!("{}: k = {}{note}", r.assignment.algorithm, r.assignment.k);
    }
    Ok(())
}

fn profile(mut cfg: PipelineConfig, a: ProfileArgs) -> Outcome {
    if let Some(v) = a.alpha {
        cfg.profile.alpha = v;
    }
    if let Some(v) = a.beta {
        cfg.profile.beta = v;
    }
    if let Some(v) = a.gamma {
        cfg.profile.gamma = v;
    }
    cfg.profile.rho_literal |= a.rho_literal;
    cfg.validate().map_err(config)?;
    let bg = load_bgraph(&a.bgraph).map_err(input)?;
    let table = read_clusters(&a.clusters).map_err(input)?;
    let algo = a.algo.unwrap_or(cfg.cluster.profile_algorithm.clone());
    let labels = table.labels(&algo).map_err(input)?;
    let report = profile_clusters(&bg, &table.addresses, labels, &cfg.profile).map_err(input)?;
    write_profiles_csv(&a.out, &report.profiles).map_err(internal)?;
    for p in &report.profiles {
        println!("cluster {}: {} users, {}", p.cluster_id, p.user_count, p.label);
    }
    Ok(())
}

fn cluster_flows(bg: &BehaviourGraph, table: &ClusterTable, algo: &str, cluster: usize) -> Result<Vec<FlowGraph>, Failure> {
    let labels = table.labels(algo).map_err(input)?;
    let flows = table
        .addresses
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == cluster)
        .map(|(addr, _)| extract_flow(bg, addr, true).map_err(input))
        .collect::<Result<Vec<_>, _>>()?;
    if flows.is_empty() {
        return Err(input(format!("cluster {cluster} has no members in the {algo} column")));
    }
    Ok(flows)
}

fn export(cfg: PipelineConfig, a: ExportArgs) -> Outcome {
    let format: ExportFormat = a.format.parse().map_err(config)?;
    let bg = load_bgraph(&a.bgraph).map_err(input)?;
    let graph = match (a.address, a.cluster) {
        (Some(addr), _) => {
            let flow = extract_flow(&bg, &addr.to_ascii_lowercase(), true).map_err(input)?;
            ExportGraph::from_flow(&bg, &flow)
        }
        (None, Some(c)) => {
            let path = a.clusters.expect("clap requires --clusters with --cluster");
            let table = read_clusters(&path).map_err(input)?;
            let algo = a.algo.unwrap_or(cfg.cluster.profile_algorithm.clone());
            let flows = cluster_flows(&bg, &table, &algo, c)?;
            if a.general {
                ExportGraph::from_general_flow(&bg, &general_flow(&flows, c).map_err(internal)?)
            } else {
                ExportGraph::from_flows(&bg, &flows, &format!("cluster_{c}"), Some(c))
            }
        }
        (None, None) => return Err(config("export needs --address or --cluster")),
    };
    graph.write(&a.out, format).map_err(internal)
}

mod erased {
    /// Serialize anything serde can, for line-oriented output.
    pub trait Json {
        fn json(&self) -> String;
    }

    impl<T: serde::Serialize> Json for T {
        fn json(&self) -> String {
            serde_json::to_string(self).expect("serializable")
        }
    }
}
