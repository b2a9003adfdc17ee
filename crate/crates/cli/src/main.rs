use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use forge_core::episodes::{export_episodes, ingest_human, materialize_images, read_episodes, Mix, PatternBank, PosteriorSource, Sources};
use forge_core::fitting::{
    fit, prepare_classification, prepare_generation, read_classification_csv, read_generation_csv, synthesize_classification,
    synthesize_generation, write_classification_csv, write_generation_csv, Dataset, FitOptions, ParamSpace, Task,
};
use forge_core::geometry::{default_bank, AttachmentTable, PrimitiveBank};
use forge_core::grammar::{Grammar, Lesions};
use forge_core::harness::{build_model_space, resolve_all, run_experiment, ExperimentConfig, ModelId};
use forge_core::inference::{build_space, FitParams, HypothesisSpace, SpaceConfig, TrialView};
use forge_core::token::UniverseCache;
use forge_core::trials::fixtures::standard_trials_upto;
use forge_core::trials::{load_trials, ResolvedTrial, Trial};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "forge", version, about = "Few-shot concept induction over lattice figures")]
struct Cli {
    /// Master seed; FORGE_SEED takes precedence when set.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Primitive bank JSON; the built-in bank when omitted.
    #[arg(long, global = true)]
    bank: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Classify,
    Generate,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Classify => Task::Classify,
            TaskArg::Generate => Task::Generate,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GrammarArg {
    /// Full grammar plus both lesions, merged.
    All,
    Full,
    NoDp,
    NoVar,
}

#[derive(Subcommand)]
enum Cmd {
    /// Export the attachment table, and optionally a trial universe.
    Enumerate {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated primitives whose universe should be exported.
        #[arg(long, value_delimiter = ',')]
        prims: Vec<String>,
        #[arg(long)]
        universe_out: Option<PathBuf>,
    },
    /// Write the built-in trial fixtures.
    Trials {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the hypothesis space with MCMC.
    Space {
        #[arg(long)]
        trials: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        chains: usize,
        #[arg(long, default_value_t = 100_000)]
        steps: usize,
        #[arg(long, default_value_t = 200)]
        topk: usize,
        #[arg(long, value_enum, default_value_t = GrammarArg::All)]
        grammar: GrammarArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw synthetic behavioural data from the model.
    Synth {
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long)]
        trials: Option<PathBuf>,
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        subjects: u32,
        /// Tokens per virtual participant, for generation data.
        #[arg(long, default_value_t = 3)]
        per_subject: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit model parameters to classification or generation data.
    Fit {
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        trials: Option<PathBuf>,
        #[arg(long, default_value = "bayes-full")]
        model: ModelId,
        #[arg(long, default_value_t = 10)]
        starts: usize,
        /// Keep both temperatures at 1.
        #[arg(long)]
        fix_temperatures: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predictions for every trial: classification of the test items, or
    /// scores of generated tokens (or fresh samples without data).
    Predict {
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        trials: Option<PathBuf>,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value = "bayes-full")]
        model: ModelId,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Samples per trial when generating without data.
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write meta-learning episodes in fixed-mix blocks.
    Episodes {
        /// Per-block counts P/R/C/H.
        #[arg(long, default_value = "20/10/10/20")]
        mix: Mix,
        #[arg(long, default_value_t = 60_000)]
        n: usize,
        #[arg(long)]
        trials: Option<PathBuf>,
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long)]
        params: Option<PathBuf>,
        /// Human generation CSV for the H source.
        #[arg(long)]
        human: Option<PathBuf>,
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the end-to-end comparison and write the report directory.
    Report {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Two trials and short chains.
        #[arg(long)]
        smoke: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        origin: Vec<String>,
    },
}

struct Ctx {
    seed: u64,
    bank: Arc<PrimitiveBank>,
    table: Arc<AttachmentTable>,
    cache: UniverseCache,
}

impl Ctx {
    fn trials(&self, path: &Option<PathBuf>) -> Result<Vec<Trial>> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Ok(load_trials(&text).with_context(|| format!("parsing {}", p.display()))?)
            }
            None => Ok(standard_trials_upto(&self.bank, &self.table, self.seed, usize::MAX)),
        }
    }

    fn resolved(&self, path: &Option<PathBuf>) -> Result<Vec<ResolvedTrial>> {
        Ok(resolve_all(&self.trials(path)?, &self.cache)?)
    }

    fn space(&self, path: &Path) -> Result<HypothesisSpace> {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        Ok(HypothesisSpace::read_jsonl(BufReader::new(f), &self.bank)?)
    }
}

/// A bare parameter object or a fit report holding one under `params`.
fn load_params(path: &Option<PathBuf>) -> Result<FitParams> {
    let Some(p) = path else { return Ok(FitParams::default()) };
    let v: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(p)?))?;
    let inner = v.get("params").cloned().unwrap_or(v);
    let params: FitParams = serde_json::from_value(inner).with_context(|| format!("parameters in {}", p.display()))?;
    params.validate()?;
    Ok(params)
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn lesions_of(m: ModelId) -> Result<Lesions> {
    m.lesions().with_context(|| format!("{} has no grammar parameters", m.name()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let seed = match std::env::var("FORGE_SEED") {
        Ok(s) => s.trim().parse().with_context(|| format!("FORGE_SEED={s:?} is not an integer"))?,
        Err(_) => cli.seed,
    };
    let bank = Arc::new(match &cli.bank {
        Some(p) => PrimitiveBank::from_json(&std::fs::read_to_string(p)?)?,
        None => default_bank(),
    });
    let table = Arc::new(AttachmentTable::build(&bank));
    let ctx = Ctx { seed, cache: UniverseCache::new(bank.clone(), table.clone(), 32), bank, table };
    match cli.cmd {
        Cmd::Enumerate { out, prims, universe_out } => {
            let mut w = output(&out)?;
            serde_json::to_writer_pretty(&mut w, &ctx.table.export(&ctx.bank))?;
            writeln!(w)?;
            w.flush()?;
            if !prims.is_empty() {
                let ids = prims.iter().map(|n| ctx.bank.resolve(n)).collect::<Result<Vec<_>, _>>()?;
                let u = ctx.cache.get(&ids)?;
                eprintln!("universe {}: {} tokens {:?}", prims.join(","), u.len(), u.counts());
                if let Some(p) = universe_out {
                    let mut w = BufWriter::new(File::create(&p)?);
                    serde_json::to_writer(&mut w, &u.export(&ctx.bank, &ctx.table))?;
                    w.flush()?;
                }
            }
        }
        Cmd::Trials { n, out } => {
            let trials = standard_trials_upto(&ctx.bank, &ctx.table, seed, n.unwrap_or(usize::MAX));
            serde_json::to_writer_pretty(BufWriter::new(File::create(&out)?), &trials)?;
            eprintln!("{} trials written to {}", trials.len(), out.display());
        }
        Cmd::Space { trials, chains, steps, topk, grammar, out } => {
            let rts = ctx.resolved(&trials)?;
            let cfg = SpaceConfig { chains, steps, top_k: topk, seed };
            let t0 = std::time::Instant::now();
            let g = |l| Grammar::default().lesion(l);
            let space = match grammar {
                GrammarArg::All => build_model_space(&ctx.bank, &rts, &cfg),
                GrammarArg::Full => build_space(&g(Lesions::NONE)?, &ctx.bank, &rts, &cfg),
                GrammarArg::NoDp => build_space(&g(Lesions::NO_DP)?, &ctx.bank, &rts, &cfg),
                GrammarArg::NoVar => build_space(&g(Lesions::NO_VAR)?, &ctx.bank, &rts, &cfg),
            };
            let mut w = BufWriter::new(File::create(&out)?);
            space.write_jsonl(&mut w, &Grammar::default(), &rts)?;
            w.flush()?;
            eprintln!("{} unique hypotheses from {} trials in {:.1?}", space.len(), rts.len(), t0.elapsed());
        }
        Cmd::Synth { task, trials, space, params, subjects, per_subject, out } => {
            let rts = ctx.resolved(&trials)?;
            let space = ctx.space(&space)?;
            let params = load_params(&params)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = File::create(&out)?;
            match task {
                TaskArg::Classify => {
                    let recs = synthesize_classification(&space, &rts, &params, Lesions::NONE, subjects, &mut rng)?;
                    write_classification_csv(f, &recs)?;
                }
                TaskArg::Generate => {
                    let recs = synthesize_generation(&space, &rts, &params, Lesions::NONE, subjects, per_subject, &mut rng)?;
                    write_generation_csv(f, &recs)?;
                }
            }
        }
        Cmd::Fit { task, data, space, trials, model, starts, fix_temperatures, out } => {
            let rts = ctx.resolved(&trials)?;
            let space = ctx.space(&space)?;
            let l = lesions_of(model)?;
            let mut ps = ParamSpace::new(FitParams::default(), l, task.into());
            if fix_temperatures {
                ps.temperatures = false;
            }
            let opts = FitOptions { starts, seed, ..FitOptions::default() };
            let f = File::open(&data)?;
            let report = match task {
                TaskArg::Classify => {
                    let recs = read_classification_csv(f)?;
                    let d = prepare_classification(&space, &rts, &recs, &ctx.bank, &ctx.table)?;
                    fit(Dataset::Classification(&d), &ps, &opts)?
                }
                TaskArg::Generate => {
                    let recs = read_generation_csv(f)?;
                    let d = prepare_generation(&space, &rts, &recs, &ctx.bank, &ctx.table)?;
                    fit(Dataset::Generation(&d), &ps, &opts)?
                }
            };
            eprintln!("nll {:.4} converged {}", report.nll, report.convergence);
            let mut w = output(&out)?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            writeln!(w)?;
            w.flush()?;
        }
        Cmd::Predict { task, space, trials, params, model, data, n, out } => {
            let rts = ctx.resolved(&trials)?;
            let space = ctx.space(&space)?;
            let params = load_params(&params)?;
            let l = lesions_of(model)?;
            let mut w = csv::Writer::from_writer(output(&out)?);
            match (task, data) {
                (TaskArg::Classify, _) => {
                    w.write_record(["trial_id", "item", "novelty_type", "p"])?;
                    for rt in &rts {
                        let view = TrialView::new(&space, rt, &[]);
                        let post = view.posterior::<f64>(&params, l)?;
                        for (q, item) in rt.trial.test_items.iter().enumerate() {
                            let p = post.classify_query(&view, q, params.alpha, params.beta);
                            w.write_record([rt.id(), &item.string, &item.novelty_type, &p.to_string()])?;
                        }
                    }
                }
                (TaskArg::Generate, Some(path)) => {
                    let recs = read_generation_csv(File::open(path)?)?;
                    let d = prepare_generation(&space, &rts, &recs, &ctx.bank, &ctx.table)?;
                    w.write_record(["trial_id", "token", "logp"])?;
                    for t in &d {
                        let post = t.view.posterior::<f64>(&params, l)?;
                        for &y in &t.tokens {
                            let lp = post.predictive_logprob(&t.view, y, params.alpha);
                            w.write_record([&t.view.trial_id, t.view.universe.string(y), &lp.to_string()])?;
                        }
                    }
                }
                (TaskArg::Generate, None) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    w.write_record(["trial_id", "token", "logp"])?;
                    for rt in &rts {
                        let view = TrialView::new(&space, rt, &[]);
                        let post = view.posterior::<f64>(&params, l)?;
                        for _ in 0..n {
                            let y = post.sample_predictive(&view, params.alpha, &mut rng);
                            let lp = post.predictive_logprob(&view, y, params.alpha);
                            w.write_record([rt.id(), rt.universe.string(y), &lp.to_string()])?;
                        }
                    }
                }
            }
            w.flush()?;
        }
        Cmd::Episodes { mix, n, trials, space, params, human, images, out } => {
            let [p, r, c, h] = mix.0;
            let ts = ctx.trials(&trials)?;
            let rts = resolve_all(&ts, &ctx.cache)?;
            let mut universes: Vec<_> = rts.iter().map(|t| t.universe.clone()).collect();
            universes.sort_by(|a, b| a.prims().cmp(b.prims()));
            universes.dedup_by(|a, b| a.prims() == b.prims());
            let grammar = Grammar::default();
            let posterior = if r > 0 {
                let Some(sp) = &space else { bail!("the R source needs --space") };
                Some(PosteriorSource::new(&ctx.space(sp)?, &rts, &load_params(&params)?, Lesions::NONE)?)
            } else {
                None
            };
            let patterns = (c > 0).then(|| PatternBank::from_universes(&universes));
            let human_eps = match (&human, h > 0) {
                (Some(path), _) => Some(ingest_human(&ts, &read_generation_csv(File::open(path)?)?, &ctx.bank, &ctx.table)?),
                (None, true) => bail!("the H source needs --human"),
                (None, false) => None,
            };
            let sources = Sources {
                prior: (p > 0).then_some((&grammar, &universes[..], &*ctx.bank)),
                posterior: posterior.as_ref(),
                patterns: patterns.as_ref(),
                human: human_eps.as_deref(),
            };
            let totals = export_episodes(&sources, mix, n, seed, File::create(&out)?)?;
            eprintln!("P {} R {} C {} H {} written to {}", totals[0], totals[1], totals[2], totals[3], out.display());
            if let Some(dir) = images {
                let eps = read_episodes(BufReader::new(File::open(&out)?))?;
                let k = materialize_images(&eps, &ctx.bank, &ctx.table, &dir)?;
                eprintln!("{k} images in {}", dir.display());
            }
        }
        Cmd::Report { config, smoke, out } => {
            let mut cfg = match (&config, smoke) {
                (Some(p), _) => serde_json::from_reader(BufReader::new(File::open(p)?))?,
                (None, true) => ExperimentConfig::smoke(),
                (None, false) => ExperimentConfig::default(),
            };
            cfg.seed = seed;
            let e = run_experiment(&cfg, ctx.bank.clone(), ctx.table.clone())?;
            e.write(&out)?;
            eprintln!("report written to {}", out.display());
        }
        Cmd::Serve { port, space, params, origin } => {
            let space = match &space {
                Some(p) => ctx.space(p)?,
                None => HypothesisSpace::default(),
            };
            let mut engine = forge_service::Engine::new(ctx.bank.clone(), ctx.table.clone(), space, seed);
            engine.params.insert("default".into(), load_params(&params)?);
            let app = forge_service::router(forge_service::AppState::new(engine), &origin);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
                eprintln!("listening on {}", listener.local_addr()?);
                axum::serve(listener, app).await
            })?;
        }
    }
    Ok(())
}
