use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gazedwell::engine::EngineConfig;
use gazedwell::gateway::{GatewayConfig, Server};
use gazedwell::intent::{train_intent, IntentTrainConfig, LabeledScanpath};
use gazedwell::segmentation::{train_segmentation, viterbi_labels, SegTrainConfig};
use gazedwell::sim::{self, grid, replay, GridSpec, PostSelectNoise, SynthConfig, TrialRecord};
use gazedwell::trace::{load_trials, read_gaze_samples, save_trials, TRACE_VERSION};
use gazedwell::{
    assign_dwells, extract_fixations, forward_posterior, last_fixated_baseline, GazeSample, ModelParams,
    PolicyParams, Quantization,
};

#[derive(Parser)]
#[command(name = "gazedwell", version, about = "Gaze-based link selection with probability-dependent dwell times")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Label gaze samples and print the extracted fixations.
    Segment {
        /// A trial file or a plain `t,x,y` gaze file.
        trace: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Print one label per sample instead of fixations.
        #[arg(long)]
        labels: bool,
    },
    /// Posterior over links for each trial in a trial file.
    Infer {
        trials: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Only this trial (0-based).
        #[arg(long)]
        index: Option<usize>,
        /// Also print the dwell assigned to every link under this policy.
        #[arg(long)]
        policy: Option<PolicyParams>,
        #[arg(long, default_value = "per-sample")]
        quantize: Quantization,
    },
    /// Error rate and response time of one policy.
    Simulate {
        #[arg(long)]
        policy: PolicyParams,
        #[arg(long)]
        trials: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "per-sample")]
        quantize: Quantization,
        /// Replay every trial through a live engine instead of the precomputed tables.
        #[arg(long)]
        engine: bool,
    },
    /// Evaluate the policy grid and write one CSV row per policy.
    Grid {
        #[arg(long)]
        trials: Option<PathBuf>,
        /// Synthesize this many trials instead of reading a file.
        #[arg(long, conflicts_with = "trials")]
        synth: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the Pareto frontier here.
        #[arg(long)]
        pareto: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "per-sample")]
        quantize: Quantization,
        /// Time step in samples (1 = full resolution).
        #[arg(long, default_value_t = 1)]
        time_step: u32,
        /// Number of probability steps between 0 and 1.
        #[arg(long, default_value_t = 10)]
        p_steps: u32,
        #[arg(long, default_value_t = 30)]
        max_samples: u32,
        #[arg(long)]
        serial: bool,
    },
    /// Generate a synthetic trial corpus.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        noise: NoiseArgs,
    },
    /// Fit the segmentation model to unlabeled gaze.
    TrainSeg {
        /// Trial files (their pre-select gaze is used) or plain gaze files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Starting parameters; defaults to the built-in initialisation.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        max_iters: usize,
    },
    /// Fit the intent model to trials with known targets.
    TrainIntent {
        #[arg(long)]
        trials: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Segmentation parameters used to extract scanpaths, and the starting point.
        #[command(flatten)]
        model: ModelArgs,
        /// Start the intent model from the uninformative default.
        #[arg(long)]
        from_scratch: bool,
        #[arg(long, default_value_t = 200)]
        max_iters: usize,
    },
    /// Run the session gateway.
    Serve {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "500,16.67,16.67,1")]
        policy: PolicyParams,
        #[arg(long, default_value = "per-sample")]
        quantize: Quantization,
        /// Leave posterior values out of DWELLS messages.
        #[arg(long)]
        hide_posterior: bool,
        /// Command buttons need strictly consecutive samples.
        #[arg(long)]
        strict_buttons: bool,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Parameter file; defaults to the shipped reference fixture.
    #[arg(long)]
    params: Option<PathBuf>,
}

impl ModelArgs {
    fn load(&self) -> Result<ModelParams> {
        match &self.params {
            Some(p) => ModelParams::load(p).with_context(|| format!("loading {}", p.display())),
            None => Ok(ModelParams::fixture()),
        }
    }
}

#[derive(Args)]
struct NoiseArgs {
    /// Post-select fixation jitter (px).
    #[arg(long)]
    jitter: Option<f64>,
    /// Probability of a glance at another link before the target.
    #[arg(long)]
    distractor_rate: Option<f64>,
    /// No jitter, glances or transit samples after Select.
    #[arg(long)]
    noiseless: bool,
    /// Number of hyperlink lines per page.
    #[arg(long)]
    lines: Option<usize>,
}

impl NoiseArgs {
    fn apply(&self, cfg: &mut SynthConfig) {
        if self.noiseless {
            cfg.post = PostSelectNoise::noiseless();
        }
        if let Some(j) = self.jitter {
            cfg.post.jitter_px = j;
        }
        if let Some(r) = self.distractor_rate {
            cfg.post.distractor_rate = r;
        }
        if let Some(l) = self.lines {
            cfg.lines = l;
        }
    }
}

fn engine_config(quantization: Quantization) -> EngineConfig {
    EngineConfig { quantization, ..EngineConfig::default() }
}

fn load(path: &Path) -> Result<Vec<TrialRecord>> {
    let trials = load_trials(path).with_context(|| format!("reading {}", path.display()))?;
    if trials.is_empty() {
        bail!("{} holds no trials", path.display());
    }
    Ok(trials)
}

fn is_trial_file(path: &Path) -> Result<bool> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    Ok(first.contains(TRACE_VERSION))
}

/// Gaze streams in a file: pre-select gaze for trial files, the whole file otherwise.
fn gaze_streams(path: &Path) -> Result<Vec<Vec<GazeSample>>> {
    if is_trial_file(path)? {
        Ok(load(path)?.into_iter().map(|t| t.pre_select).collect())
    } else {
        let f = File::open(path)?;
        Ok(vec![read_gaze_samples(BufReader::new(f), &path.display().to_string())?])
    }
}

fn write_out(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Err(e) if e.downcast_ref::<io::Error>().map_or(false, |io| io.kind() == io::ErrorKind::BrokenPipe) => Ok(()),
        other => other,
    }
}

fn run(cli: Cli) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Cmd::Segment { trace, model, labels } => {
            let params = model.load()?;
            writeln!(out, "{}", if labels { "stream,t,x,y,label" } else { "stream,x,y,duration_ms,start,end" })?;
            for (i, samples) in gaze_streams(&trace)?.iter().enumerate() {
                let l = viterbi_labels(samples, &params.seg).with_context(|| format!("stream {i}"))?;
                if labels {
                    for (s, l) in samples.iter().zip(&l) {
                        writeln!(out, "{i},{},{},{},{}", s.t, s.point.x, s.point.y, l.symbol())?;
                    }
                } else {
                    for f in extract_fixations(samples, &l)? {
                        writeln!(out, "{i},{:.2},{:.2},{:.2},{},{}", f.x, f.y, f.duration_ms, f.start_index, f.end_index)?;
                    }
                }
            }
        }
        Cmd::Infer { trials, model, index, policy, quantize } => {
            let params = model.load()?;
            let cfg = engine_config(quantize);
            let trials = load(&trials)?;
            let picked: Vec<usize> = match index {
                Some(i) if i < trials.len() => vec![i],
                Some(i) => bail!("trial {i} out of range (file has {})", trials.len()),
                None => (0..trials.len()).collect(),
            };
            for i in picked {
                let t = &trials[i];
                let scanpath = replay::pre_select_scanpath(t, &params, &cfg)?;
                let posterior = if scanpath.is_empty() {
                    gazedwell::IntentPosterior::uniform(t.layout.len())
                } else {
                    forward_posterior(&scanpath, &t.layout, &params.intent)?
                };
                let mut rec = serde_json::json!({
                    "trial": i,
                    "true_target": t.true_target,
                    "argmax": posterior.argmax(),
                    "last_fixated": last_fixated_baseline(&scanpath, &t.layout),
                    "fixations": scanpath.len(),
                    "posterior": posterior.probs,
                });
                if let Some(p) = &policy {
                    rec["dwells"] = serde_json::to_value(assign_dwells(&posterior, p, quantize)?.dwells)?;
                }
                writeln!(out, "{rec}")?;
            }
        }
        Cmd::Simulate { policy, trials, model, quantize, engine } => {
            let params = model.load()?;
            let mut cfg = engine_config(quantize);
            let trials = load(&trials)?;
            let result = if engine {
                cfg.policy = policy;
                let models = Arc::new(params);
                let outcomes = trials
                    .iter()
                    .map(|t| Ok((replay::replay_with_engine(t, models.clone(), &cfg)?.0, t.true_target)))
                    .collect::<gazedwell::Result<Vec<_>>>()?;
                replay::aggregate(policy, &outcomes)
            } else {
                sim::simulate_policy(&trials, &policy, &params, &cfg)?
            };
            grid::write_csv(&mut out, &[result])?;
        }
        Cmd::Grid { trials, synth, seed, out: path, pareto, model, quantize, time_step, p_steps, max_samples, serial } => {
            let params = model.load()?;
            let cfg = engine_config(quantize);
            let trials = match (trials, synth) {
                (Some(p), _) => load(&p)?,
                (None, Some(n)) => sim::synth_trials(&SynthConfig { n_trials: n, seed, ..Default::default() }, &params)?,
                (None, None) => bail!("give --trials <file> or --synth <n>"),
            };
            let spec = GridSpec::stepped(max_samples, time_step, p_steps);
            let policies = spec.policies()?;
            log::info!("{} trials, {} policies", trials.len(), policies.len());
            let prepared = replay::prepare_trials(&trials, &params, &cfg)?;
            let rows = grid::grid_search(&prepared, &policies, quantize, !serial)?;
            grid::write_csv(write_out(&path)?, &rows)?;
            if let Some(p) = pareto {
                grid::write_csv(write_out(&p)?, &grid::pareto_frontier(&rows))?;
            }
            log::info!("wrote {}", path.display());
        }
        Cmd::Synth { n, seed, out: path, model, noise } => {
            let params = model.load()?;
            let mut cfg = SynthConfig { n_trials: n, seed, ..Default::default() };
            noise.apply(&mut cfg);
            let trials = sim::synth_trials(&cfg, &params)?;
            save_trials(&trials, &path)?;
            log::info!("wrote {} trials to {}", trials.len(), path.display());
        }
        Cmd::TrainSeg { inputs, out: path, init, max_iters } => {
            let mut params = match init {
                Some(p) => ModelParams::load(&p).with_context(|| format!("loading {}", p.display()))?,
                None => ModelParams::default(),
            };
            let mut traces = Vec::new();
            for p in &inputs {
                traces.extend(gaze_streams(p)?.into_iter().filter(|t| t.len() >= 3));
            }
            let cfg = SegTrainConfig { max_iters, ..Default::default() };
            let (seg, report) = train_segmentation(&traces, &params.seg, &cfg)?;
            for w in &report.warnings {
                log::warn!("{w}");
            }
            log::info!(
                "{} iterations, converged: {}, final log-likelihood {:.3}",
                report.iterations,
                report.converged,
                report.log_likelihoods.last().copied().unwrap_or(f64::NAN)
            );
            params.seg = seg;
            params.save(&path)?;
        }
        Cmd::TrainIntent { trials, out: path, model, from_scratch, max_iters } => {
            let mut params = model.load()?;
            let cfg = engine_config(Quantization::PerSample);
            let trials = load(&trials)?;
            let mut corpus = Vec::new();
            for t in &trials {
                let scanpath = replay::pre_select_scanpath(t, &params, &cfg)?;
                if !scanpath.is_empty() {
                    corpus.push(LabeledScanpath { scanpath, layout: t.layout.clone(), target: t.true_target });
                }
            }
            log::info!("{} of {} trials have fixations", corpus.len(), trials.len());
            let init = if from_scratch { Default::default() } else { params.intent.clone() };
            let tcfg = IntentTrainConfig { max_iters, ..Default::default() };
            let (intent, report) = train_intent(&corpus, &init, &tcfg)?;
            for w in &report.warnings {
                log::warn!("{w}");
            }
            log::info!("{} iterations, p_s = {}", report.iterations, intent.p_switch);
            params.intent = intent;
            params.save(&path)?;
        }
        Cmd::Serve { port, host, model, policy, quantize, hide_posterior, strict_buttons } => {
            let params = model.load()?;
            let engine = EngineConfig { policy, quantization: quantize, strict_button_dwell: strict_buttons, ..EngineConfig::default() };
            let server = Server::bind((host.as_str(), port), GatewayConfig { engine, models: Arc::new(params), hide_posterior })?;
            log::info!("listening on {}", server.local_addr()?);
            server.run()?;
        }
    }
    out.flush()?;
    Ok(())
}
