use std::io::{self, BufReader};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use bitextmine::eval::{self, BleuOptions};
use bitextmine::providers::{MockProvider, MockTranslate};
use bitextmine_cli::{run_pipeline, run_stage, PipelineConfig, RunError, Stage};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bitextmine", version, about = "Mine pseudoparallel sentence pairs from monolingual web text")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set mining.k=8`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Re-run stages even if their outputs exist.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct BleuArgs {
    #[command(flatten)]
    common: Common,
    /// Score this hypothesis file directly instead of running the stage.
    #[arg(long, requires = "reference")]
    hyp: Option<PathBuf>,
    #[arg(long = "ref", requires = "hyp")]
    reference: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    max_n: usize,
    /// Add-one smoothing for n-gram orders above one.
    #[arg(long)]
    smooth: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum TranslateMode {
    Tag,
    Echo,
}

#[derive(Args)]
struct MockArgs {
    #[arg(long, default_value_t = bitextmine::providers::mock::DEFAULT_MOCK_DIM)]
    dim: usize,
    #[arg(long, value_enum, default_value = "tag")]
    translate: TranslateMode,
    /// Supported language pairs as `src-tgt`, comma separated.
    #[arg(long, value_delimiter = ',')]
    pairs: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Crawl the configured sites.
    Crawl(Common),
    /// Clean, segment and deduplicate both corpora.
    Clean(Common),
    /// Replace source words using bilingual dictionaries.
    Codeswitch(Common),
    /// Train a BPE model on the code-switched source text.
    BpeTrain(Common),
    /// Segment the code-switched source text with the BPE model.
    BpeApply(Common),
    /// Embed both corpora with the configured provider.
    Embed(Common),
    /// Mine sentence pairs by margin score.
    Mine(Common),
    /// Translate the target side of mined pairs to the pivot language.
    Translate(Common),
    /// Corpus BLEU from the configured files, or from `--hyp`/`--ref`.
    Bleu(BleuArgs),
    /// Aggregate stage statistics into report.json.
    Report(Common),
    /// Run every configured stage in order.
    Pipeline(Common),
    /// Deterministic provider speaking the protocol on stdin/stdout.
    #[command(hide = true)]
    MockProvider(MockArgs),
}

fn load(common: &Common) -> Result<PipelineConfig, RunError> {
    PipelineConfig::load(common.config.as_deref(), &common.set).map_err(RunError::Config)
}

fn stage(s: Stage, common: &Common) -> Result<(), RunError> {
    run_stage(s, &load(common)?, common.force)
}

fn direct_bleu(args: &BleuArgs, hyp: &PathBuf, reference: &PathBuf) -> Result<(), RunError> {
    let read = |p: &PathBuf| -> Result<Vec<String>, RunError> {
        let text = std::fs::read_to_string(p)
            .with_context(|| format!("cannot read {}", p.display()))
            .map_err(RunError::Config)?;
        Ok(text.lines().map(str::to_string).collect())
    };
    let opts = BleuOptions {
        max_n: args.max_n,
        smoothing: args.smooth,
    };
    let report = eval::bleu(&read(hyp)?, &read(reference)?, opts).map_err(|e| RunError::Stage {
        stage: Stage::Bleu,
        source: e.into(),
    })?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

fn mock_provider(args: &MockArgs) -> Result<(), RunError> {
    let mut pairs = Vec::new();
    for p in &args.pairs {
        let (s, t) = p
            .split_once('-')
            .ok_or_else(|| RunError::Config(anyhow!("pair `{p}` is not of the form src-tgt")))?;
        pairs.push((s.to_string(), t.to_string()));
    }
    let provider = MockProvider {
        dim: args.dim,
        translate: match args.translate {
            TranslateMode::Tag => MockTranslate::Tag,
            TranslateMode::Echo => MockTranslate::Echo,
        },
        pairs: (!pairs.is_empty()).then_some(pairs),
    };
    provider
        .serve(BufReader::new(io::stdin().lock()), io::stdout().lock())
        .map_err(|e| RunError::Stage {
            stage: Stage::Embed,
            source: e.into(),
        })
}

fn dispatch(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Crawl(c) => stage(Stage::Crawl, &c),
        Command::Clean(c) => stage(Stage::Clean, &c),
        Command::Codeswitch(c) => stage(Stage::Codeswitch, &c),
        Command::BpeTrain(c) => stage(Stage::BpeTrain, &c),
        Command::BpeApply(c) => stage(Stage::BpeApply, &c),
        Command::Embed(c) => stage(Stage::Embed, &c),
        Command::Mine(c) => stage(Stage::Mine, &c),
        Command::Translate(c) => stage(Stage::Translate, &c),
        Command::Bleu(b) => match (&b.hyp, &b.reference) {
            (Some(h), Some(r)) => direct_bleu(&b, h, r),
            _ => stage(Stage::Bleu, &b.common),
        },
        Command::Report(c) => stage(Stage::Report, &c),
        Command::Pipeline(c) => run_pipeline(&load(&c)?, c.force),
        Command::MockProvider(m) => mock_provider(&m),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp_millis()
        .init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
