//! `amazons` command line: data generation, training, matches, self-play,
//! single-position analysis and the HTTP service.

pub mod config;
pub mod server;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use amazons_core::arena::{emit_report, play_game, run_match, AgentContext, AgentKind, AgentSpec};
use amazons_core::datagen::{
    generate_dataset, ApiProvider, DatagenConfig, Dataset, MockProvider, MovementSelection, PlacementSelection, ProviderConfig, RatingService, ReplyCache,
};
use amazons_core::hybrid::{play_turn_with_tree, HybridConfig};
use amazons_core::neuralkit::{GatArch, ModelBundle};
use amazons_core::search::SearchConfig;
use amazons_core::train::{train_gat_ae, train_uct_ae, variance_and_ftest, write_config_file, write_loss_csv, TrainConfig};
use amazons_core::{BoardState, DecisionStrategy, Move, Side};
use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "amazons", version, about = "Game of the Amazons engine: data generation, training, matches and a JSON service")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate rated self-play games as NDJSON.
    Datagen(DatagenArgs),
    /// Train the movement and placement autoencoders.
    TrainUctAe(TrainUctArgs),
    /// Train the graph attention network on stored search trees.
    TrainGatAe(TrainGatArgs),
    /// Play a match between two agents.
    Arena(ArenaArgs),
    /// Serve the HTTP JSON API.
    Serve(ServeArgs),
    /// Play one engine-vs-engine game and print its log.
    Selfplay(SelfplayArgs),
    /// Search one position and print the decision and tree as JSON.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `key = value` file; explicit flags override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ProviderKind {
    Mock,
    Api,
}

#[derive(Debug, Args)]
pub struct ProviderArgs {
    #[arg(long, value_enum, default_value_t = ProviderKind::Mock)]
    pub provider: ProviderKind,
    /// Noise amplitude of the mock rater.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    /// Reply cache directory for the API provider.
    #[arg(long, value_name = "DIR")]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Name of the environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long)]
    pub requests_per_minute: Option<u32>,
}

impl ProviderArgs {
    fn service(&self, seed: u64) -> anyhow::Result<RatingService> {
        Ok(match self.provider {
            ProviderKind::Mock => RatingService::mock(MockProvider { epsilon: self.epsilon, seed }),
            ProviderKind::Api => {
                let mut cfg = ProviderConfig::default();
                if let Some(e) = &self.endpoint {
                    cfg.endpoint_url = e.clone();
                }
                if let Some(m) = &self.model {
                    cfg.model = m.clone();
                }
                if let Some(k) = &self.api_key_env {
                    cfg.api_key_env = k.clone();
                }
                if let Some(r) = self.requests_per_minute {
                    cfg.requests_per_minute = r;
                }
                let cache = self.cache.as_deref().map(ReplyCache::open).transpose()?;
                RatingService::new(Box::new(ApiProvider::new(cfg.clone())), cache, &cfg)
            }
        })
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MovementArg {
    Sgga,
    Argmax,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PlacementArg {
    WeightedRandom,
    Argmax,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct DatagenArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    pub games: u64,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub budget: u64,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, value_enum, default_value_t = MovementArg::Sgga)]
    pub movement: MovementArg,
    #[arg(long, value_enum, default_value_t = PlacementArg::WeightedRandom)]
    pub placement: PlacementArg,
    /// Models steering the search; untrained zeros when absent.
    #[arg(long, value_name = "FILE")]
    pub models: Option<PathBuf>,
    #[command(flatten)]
    pub rater: ProviderArgs,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct TrainUctArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub iterations: u64,
    /// Where to write the model bundle.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Keep the graph network of this bundle instead of zeros.
    #[arg(long, value_name = "FILE")]
    pub models: Option<PathBuf>,
    /// Directory for loss CSVs, the run config and the variance test.
    #[arg(long, value_name = "DIR")]
    pub report: Option<PathBuf>,
    /// First iteration of the variance tails.
    #[arg(long, default_value_t = 500)]
    pub tail_from: usize,
    #[arg(long, default_value_t = 50)]
    pub window: usize,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct TrainGatArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Bundle holding the trained autoencoders.
    #[arg(long, value_name = "FILE")]
    pub models: PathBuf,
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    pub iterations: u64,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub window: usize,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct ArenaArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub a: AgentKind,
    #[arg(long)]
    pub b: AgentKind,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    pub games: u64,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub budget: u64,
    /// Budget of agent B when it differs from A's.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub budget_b: Option<u64>,
    #[arg(long, default_value = "softmax")]
    pub strategy: DecisionStrategy,
    #[arg(long, value_name = "FILE")]
    pub models: Option<PathBuf>,
    /// Directory for curves.csv, ci.csv and games.csv.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub rater: ProviderArgs,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct ServeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    #[arg(long, value_name = "FILE")]
    pub models: Option<PathBuf>,
    /// Append-only session journal, replayed at start-up.
    #[arg(long, value_name = "FILE")]
    pub journal: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SelfplayArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "hybrid")]
    pub engine: AgentKind,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub budget: u64,
    #[arg(long, default_value = "softmax")]
    pub strategy: DecisionStrategy,
    #[arg(long, value_name = "FILE")]
    pub models: Option<PathBuf>,
    /// Also write the log here.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub rater: ProviderArgs,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Space-separated moves from the initial position, e.g. "d1-d7/g7 g10-g8/b3".
    #[arg(long, default_value = "")]
    pub moves: String,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub budget: u64,
    #[arg(long, default_value = "softmax")]
    pub strategy: DecisionStrategy,
    #[arg(long, value_name = "FILE")]
    pub models: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code: 0 ok, 1 runtime failure, 2 usage.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args = match config::expand_config(args.into_iter().map(Into::into).collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let mut out = std::io::stdout().lock();
    match run(cli.command, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn load_models(path: Option<&Path>) -> anyhow::Result<ModelBundle> {
    match path {
        Some(p) => ModelBundle::load(p).with_context(|| format!("loading models from {}", p.display())),
        None => {
            eprintln!("note: no --models given, using untrained zero models");
            Ok(ModelBundle::zeros(GatArch::default()))
        }
    }
}

fn fmt_loss(l: Option<f64>) -> String {
    l.map_or("n/a".to_owned(), |v| format!("{v:.5}"))
}

fn budget(b: u64) -> usize {
    usize::try_from(b).unwrap_or(usize::MAX)
}

pub fn run(command: Command, out: &mut impl Write) -> anyhow::Result<()> {
    match command {
        Command::Datagen(a) => datagen(a, out),
        Command::TrainUctAe(a) => train_uct(a, out),
        Command::TrainGatAe(a) => train_gat(a, out),
        Command::Arena(a) => arena(a, out),
        Command::Serve(a) => serve(a),
        Command::Selfplay(a) => selfplay(a, out),
        Command::Analyze(a) => analyze(a, out),
    }
}

fn datagen(a: DatagenArgs, out: &mut impl Write) -> anyhow::Result<()> {
    let models = load_models(a.models.as_deref())?;
    let config = DatagenConfig {
        games: budget(a.games),
        seed: a.common.seed,
        search: SearchConfig::training(budget(a.budget)),
        movement: match a.movement {
            MovementArg::Sgga => MovementSelection::Sgga,
            MovementArg::Argmax => MovementSelection::Argmax,
        },
        placement: match a.placement {
            PlacementArg::WeightedRandom => PlacementSelection::WeightedRandom,
            PlacementArg::Argmax => PlacementSelection::Argmax,
        },
        workers: a.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
    };
    let service = a.rater.service(a.common.seed)?;
    let summary = generate_dataset(&config, &models, &service, &a.out)?;
    writeln!(
        out,
        "wrote {} games ({} already present), {} plies, {} unrated, {} provider calls -> {}",
        summary.games_written,
        summary.games_skipped_existing,
        summary.plies,
        summary.ratings_skipped,
        service.network_calls(),
        a.out.display()
    )?;
    Ok(())
}

fn train_uct(a: TrainUctArgs, out: &mut impl Write) -> anyhow::Result<()> {
    let data = Dataset::load(&a.data)?;
    let run = train_uct_ae(&data.plies, &TrainConfig::uct_ae(budget(a.iterations), a.common.seed))?;
    let mut bundle = run.bundle();
    if let Some(p) = &a.models {
        bundle.gat = load_models(Some(p))?.gat;
    }
    bundle.save(&a.out)?;
    let last = |l: &[f64]| l.last().copied().unwrap_or(f64::NAN);
    writeln!(
        out,
        "{} plies; final movement loss {:.5}, placement loss {:.5}; holdout {} / {} -> {}",
        data.plies.len(),
        last(&run.movement.losses),
        last(&run.placement.losses),
        fmt_loss(run.movement.holdout_loss),
        fmt_loss(run.placement.holdout_loss),
        a.out.display()
    )?;
    let ftest = variance_and_ftest(&run.movement.losses, &run.placement.losses, a.tail_from).ok();
    if let Some(t) = &ftest {
        writeln!(out, "tail variance from {}: movement {:.3e}, placement {:.3e}, F {:.4}, p {:.3e}", a.tail_from, t.var_a, t.var_b, t.f, t.p)?;
    }
    if let Some(dir) = &a.report {
        std::fs::create_dir_all(dir)?;
        write_loss_csv(&dir.join("movement_loss.csv"), &run.movement.losses, a.window)?;
        write_loss_csv(&dir.join("placement_loss.csv"), &run.placement.losses, a.window)?;
        let mut pairs = vec![
            ("data", a.data.display().to_string()),
            ("iterations", a.iterations.to_string()),
            ("seed", a.common.seed.to_string()),
            ("tail_from", a.tail_from.to_string()),
        ];
        if let Some(t) = ftest {
            pairs.extend([("f", t.f.to_string()), ("p", t.p.to_string()), ("var_movement", t.var_a.to_string()), ("var_placement", t.var_b.to_string())]);
        }
        write_config_file(&dir.join("run.conf"), &pairs)?;
    }
    Ok(())
}

fn train_gat(a: TrainGatArgs, out: &mut impl Write) -> anyhow::Result<()> {
    let data = Dataset::load(&a.data)?;
    let mut bundle = load_models(Some(&a.models))?;
    let run = train_gat_ae(&data.graphs, &bundle, a.alpha, &TrainConfig::gat_ae(budget(a.iterations), a.common.seed))?;
    bundle.gat = run.model;
    bundle.save(&a.out)?;
    writeln!(
        out,
        "{} trees; final loss {:.5}; holdout {} -> {}",
        data.graphs.len(),
        run.losses.last().copied().unwrap_or(f64::NAN),
        fmt_loss(run.holdout_loss),
        a.out.display()
    )?;
    if let Some(dir) = &a.report {
        std::fs::create_dir_all(dir)?;
        write_loss_csv(&dir.join("gat_loss.csv"), &run.losses, a.window)?;
        write_config_file(
            &dir.join("run.conf"),
            &[
                ("data", a.data.display().to_string()),
                ("iterations", a.iterations.to_string()),
                ("alpha", a.alpha.to_string()),
                ("seed", a.common.seed.to_string()),
            ],
        )?;
    }
    Ok(())
}

fn arena(a: ArenaArgs, out: &mut impl Write) -> anyhow::Result<()> {
    let uses_llm = a.a == AgentKind::Llm || a.b == AgentKind::Llm;
    let ctx = AgentContext {
        models: Arc::new(load_models(a.models.as_deref())?),
        service: if uses_llm { Some(Arc::new(a.rater.service(a.common.seed)?)) } else { None },
    };
    let spec_a = AgentSpec {
        strategy: a.strategy,
        ..AgentSpec::new(a.a, budget(a.budget))
    };
    let spec_b = AgentSpec {
        strategy: a.strategy,
        ..AgentSpec::new(a.b, budget(a.budget_b.unwrap_or(a.budget)))
    };
    let report = run_match(&spec_a, &spec_b, &ctx, budget(a.games), a.common.seed)?;
    let s = &report.summary;
    writeln!(
        out,
        "{} vs {}: {}/{} wins for {} ({:.3}, 95% CI [{:.3}, {:.3}]); failures {} / {}",
        s.a, s.b, s.wins_a, s.games, s.a, s.win_rate_a, s.ci_lo, s.ci_hi, s.failures_a, s.failures_b
    )?;
    if let Some(dir) = &a.out {
        emit_report(std::slice::from_ref(&report), dir)?;
        writeln!(out, "report -> {}", dir.display())?;
    }
    Ok(())
}

fn serve(a: ServeArgs) -> anyhow::Result<()> {
    let models = load_models(a.models.as_deref())?;
    let state = match &a.journal {
        Some(p) => server::AppState::with_journal(models, p)?,
        None => server::AppState::new(models),
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(server::serve(Arc::new(state), &a.addr))
}

fn selfplay(a: SelfplayArgs, out: &mut impl Write) -> anyhow::Result<()> {
    let ctx = AgentContext {
        models: Arc::new(load_models(a.models.as_deref())?),
        service: if a.engine == AgentKind::Llm { Some(Arc::new(a.rater.service(a.common.seed)?)) } else { None },
    };
    let spec = AgentSpec {
        strategy: a.strategy,
        ..AgentSpec::new(a.engine, budget(a.budget))
    };
    let record = play_game(&spec, &spec, &ctx, Side::White, 0, a.common.seed);
    let mut log = String::new();
    let mut side = Side::White;
    for (i, (mv, src)) in record.moves.iter().zip(&record.sources).enumerate() {
        let src = src.map_or("-".to_owned(), |s| serde_json::to_value(s).map(|v| v.as_str().unwrap_or("-").to_owned()).unwrap_or_default());
        log.push_str(&format!("{} {} {} {}\n", i + 1, side.name(), mv, src));
        side = side.opponent();
    }
    if let Some((seat, msg)) = &record.failure {
        log.push_str(&format!("failure {seat:?}: {msg}\n"));
    }
    let winner = if record.winner == amazons_core::arena::Seat::A { Side::White } else { Side::Black };
    log.push_str(&format!("result {} wins after {} plies\n", winner.name(), record.plies));
    out.write_all(log.as_bytes())?;
    if let Some(p) = &a.out {
        std::fs::write(p, &log)?;
    }
    Ok(())
}

fn analyze(a: AnalyzeArgs, out: &mut impl Write) -> anyhow::Result<()> {
    let mut state = BoardState::initial();
    for token in a.moves.split_whitespace() {
        let mv: Move = token.parse()?;
        state = state.apply_move(&mv).with_context(|| format!("applying {token}"))?;
    }
    if state.status() != amazons_core::GameStatus::Ongoing {
        bail!("the position is already decided");
    }
    let models = load_models(a.models.as_deref())?;
    let cfg = HybridConfig {
        search: SearchConfig {
            budget: budget(a.budget),
            ..Default::default()
        },
        strategy: a.strategy,
        ..Default::default()
    };
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(a.common.seed);
    let (decision, tree) = play_turn_with_tree(&state, &cfg, &models, &mut rng)?;
    let body = serde_json::json!({
        "side_to_move": state.side_to_move(),
        "decision": decision,
        "chosen": decision.chosen.to_string(),
        "nodes": tree.dump(),
    });
    writeln!(out, "{}", serde_json::to_string_pretty(&body)?)?;
    Ok(())
}
