use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use sparsepix_core::strmask::StrAttackParams;
use sparsepix_models::dataset::{self, DEFAULT_TEST_SIZE, DEFAULT_TRAIN_SIZE};
use sparsepix_models::server::StubServer;
use sparsepix_models::{train, weights, TrainConfig};
use sparsepix_harness::config::{AttackSettings, CampaignConfig, DatasetSource, InitMode, Method, ModelSource};
use sparsepix_harness::{report, run_ablation, run_campaign};

#[derive(Parser)]
#[command(name = "sparsepix", version, about = "Few-pixel black-box adversarial attacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic shapes dataset as PNGs plus labels.csv.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TEST_SIZE)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Train the tiny classifier and save its weights.
    Train(TrainArgs),
    /// Attack a set of images and write reports.
    Attack(AttackArgs),
    /// Compare random and mask initialization for the annealing attack.
    Ablate(CommonArgs),
    /// Serve a weights file over the scoring protocol.
    ServeStub {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Training images; generated when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Held-out images; generated when absent.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TRAIN_SIZE)]
    train_count: usize,
    #[arg(long, default_value_t = DEFAULT_TEST_SIZE)]
    test_count: usize,
    /// Seed of generated training data; test data uses seed + 1.
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long, conflicts_with = "endpoint", required_unless_present = "endpoint")]
    model: Option<PathBuf>,
    #[arg(long)]
    endpoint: Option<String>,
    /// Weights for mask generation when attacking a remote endpoint.
    #[arg(long)]
    surrogate: Option<PathBuf>,
    #[arg(long, default_value_t = 5000)]
    timeout_ms: u64,
    #[arg(long, default_value_t = 2)]
    retries: u32,
    /// Image directory; generated test shapes when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    data_seed: u64,
    #[arg(long, default_value_t = 100)]
    images: usize,
    #[arg(long, default_value_t = 25)]
    pixels: usize,
    #[arg(long, default_value_t = 15000)]
    budget: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    no_annotate: bool,
    #[arg(long)]
    save_masks: bool,
    #[arg(long)]
    visiting: Option<f64>,
    #[arg(long)]
    acceptance: Option<f64>,
    #[arg(long)]
    initial_temp: Option<f64>,
    #[arg(long)]
    restart_ratio: Option<f64>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    mutation: Option<f64>,
    #[arg(long)]
    crossover: Option<f64>,
    /// Calls charged for generating a mask.
    #[arg(long)]
    mask_charge: Option<u64>,
    #[arg(long)]
    mask_threshold: Option<f64>,
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value = "gsa")]
    method: Method,
    #[arg(long, default_value = "mask")]
    init: InitMode,
}

impl CommonArgs {
    fn config(&self, method: Method, init: InitMode) -> anyhow::Result<CampaignConfig> {
        let model = match (&self.model, &self.endpoint) {
            (Some(path), None) => ModelSource::Weights(path.clone()),
            (None, Some(url)) => ModelSource::Remote {
                endpoint: url.clone(),
                timeout_ms: self.timeout_ms,
                retries: self.retries,
            },
            _ => bail!("give exactly one of --model and --endpoint"),
        };
        let dataset = match &self.data {
            Some(dir) => DatasetSource::Directory(dir.clone()),
            None => DatasetSource::Generated { count: self.images, seed: self.data_seed },
        };
        let mut attack = AttackSettings {
            method,
            init,
            pixels: self.pixels,
            budget: self.budget,
            seed: self.seed,
            ..AttackSettings::default()
        };
        let gsa = &mut attack.gsa;
        set(&mut gsa.visiting, self.visiting);
        set(&mut gsa.acceptance, self.acceptance);
        set(&mut gsa.initial_temperature, self.initial_temp);
        set(&mut gsa.restart_ratio, self.restart_ratio);
        set(&mut attack.de.population, self.population);
        set(&mut attack.de.mutation, self.mutation);
        set(&mut attack.de.crossover, self.crossover);
        let StrAttackParams { call_charge, threshold, .. } = &mut attack.strattack;
        set(call_charge, self.mask_charge);
        set(threshold, self.mask_threshold);
        let mut cfg = CampaignConfig::new(model, dataset);
        cfg.surrogate = self.surrogate.clone();
        cfg.images = self.images;
        cfg.attack = attack;
        cfg.out = self.out.clone();
        cfg.jobs = self.jobs;
        cfg.annotate = !self.no_annotate;
        cfg.save_masks = self.save_masks;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn train_command(args: &TrainArgs) -> anyhow::Result<()> {
    let train_set = match &args.data {
        Some(dir) => dataset::import(dir)?,
        None => dataset::generate_shapes(args.train_count, args.data_seed),
    };
    let test_set = match &args.test {
        Some(dir) => dataset::import(dir)?,
        None => dataset::generate_shapes(args.test_count, args.data_seed.wrapping_add(1)),
    };
    let mut cfg = TrainConfig { seed: args.seed, ..TrainConfig::default() };
    set(&mut cfg.epochs, args.epochs);
    set(&mut cfg.learning_rate, args.lr);
    set(&mut cfg.batch_size, args.batch_size);
    set(&mut cfg.hidden, args.hidden);
    let (model, report) = train(&train_set, Some(&test_set), &cfg)?;
    weights::save(&model, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

/// Exit code 2 when some images errored.
fn campaign_command(cfg: &CampaignConfig) -> anyhow::Result<ExitCode> {
    let result = run_campaign(cfg)?;
    let table = match &cfg.out {
        Some(dir) => report::write_campaign(dir, cfg, &result)?,
        None => sparsepix_harness::metrics::render_table(&report::campaign_table(cfg, &result)),
    };
    print!("{table}");
    if result.is_partial() {
        eprintln!("{} image(s) errored and were excluded", result.aggregates.errored);
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn ablate_command(cfg: &CampaignConfig) -> anyhow::Result<ExitCode> {
    let result = run_ablation(cfg)?;
    let table = match &cfg.out {
        Some(dir) => report::write_ablation(dir, cfg, &result)?,
        None => sparsepix_harness::metrics::render_table(&report::ablation_table(&result)),
    };
    print!("{table}");
    if result.random.is_partial() || result.mask.is_partial() {
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::GenData { out, count, seed } => {
            dataset::export(&out, &dataset::generate_shapes(count, seed))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Train(args) => train_command(&args).map(|()| ExitCode::SUCCESS),
        Command::Attack(args) => campaign_command(&args.common.config(args.method, args.init)?),
        Command::Ablate(args) => ablate_command(&args.config(Method::Gsa, InitMode::Mask)?),
        Command::ServeStub { model, addr } => {
            let model = weights::load(&model)?;
            let server = StubServer::spawn(Arc::new(model), addr)?;
            eprintln!("serving on {}", server.endpoint());
            server.join()?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
