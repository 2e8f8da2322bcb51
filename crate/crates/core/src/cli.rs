//! `gvtg` subcommands. Every JSON document printed or written here carries
//! a `provenance` object with the config hash, seed and toolkit version.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::codec::{parse_grounded_text, render_grounded_text, timestamp_to_token, token_to_timestamp, vocab_layout, GroundedEvent};
use crate::curriculum::{self, evaluate_model, temporal_exact_match, Corpus, SyntheticVideo, TaskKind, TrainConfig};
use crate::datagen::{read_annotations, run_pipeline, synthetic_annotations, write_records, DatagenConfig};
use crate::encoder::{encode_video, synth_features, token_budget, write_bundle, Activation, EncoderConfig, Mlp, SynthParams};
use crate::error::{Error, Result};
use crate::introspect::{adjacency_distances, aggregate_attention, emit_plot_data, pca, temporal_embeddings, video_attention, HeadReduction, PlotData};
use crate::lm::{checkpoint, StagedModel, Tokenizer};
use crate::metrics::{evaluate_dataset, ChunkedUnigram, EvalTask};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Base vocabulary size and chunk count used when no model is involved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VocabParams {
    pub base_size: usize,
    pub chunks: usize,
}

impl Default for VocabParams {
    fn default() -> Self {
        Self { base_size: 32000, chunks: 300 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<PathBuf>,
}

/// One config file for every subcommand; each reads the sections it needs.
/// Flags override fields.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub paths: Paths,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder: Option<EncoderConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<VocabParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datagen: Option<DatagenConfig>,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSection {
    pub task: EvalTask,
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(e) = &self.encoder {
            e.validate()?;
        }
        if let Some(v) = &self.vocab {
            if v.chunks == 0 {
                return Err(Error::Config("vocab.chunks must be at least 1".into()));
            }
        }
        if let Some(t) = &self.train {
            t.validate()?;
        }
        if let Some(d) = &self.datagen {
            d.validate()?;
        }
        if let Some(data) = &self.paths.data {
            if !data.exists() {
                return Err(Error::Config(format!("paths.data {} does not exist", data.display())));
            }
        }
        Ok(())
    }

    fn load(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::from_json_file)
    }

    /// Hex SHA-256 of the effective config as compact JSON.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    fn encoder_or(&self, fallback: EncoderConfig) -> EncoderConfig {
        self.encoder.clone().or_else(|| self.train.as_ref().map(|t| t.corpus.encoder.clone())).unwrap_or(fallback)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    pub fn new(cfg: &RunConfig, seed: u64) -> Self {
        Self { config_hash: cfg.hash(), seed, version: VERSION.to_string() }
    }
}

fn with_provenance(mut v: Value, p: &Provenance) -> Value {
    if let Value::Object(map) = &mut v {
        map.insert("provenance".into(), serde_json::to_value(p).expect("provenance serializes"));
    }
    v
}

fn emit(out: &mut dyn Write, v: &Value) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string(v)?)?;
    Ok(())
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "gvtg", version, about = "Temporal tokens, two-stream video encoding, staged grounding training and metrics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Timestamp/token conversion and grounded text
    #[command(subcommand)]
    Codec(CodecCmd),
    /// Encode a synthetic video into a feature bundle
    Encode(EncodeArgs),
    /// Run curriculum stages on the synthetic corpus
    Train(TrainArgs),
    /// Score prediction files or a checkpoint
    Eval(EvalArgs),
    /// Generate grounded multiple-choice QA records
    Datagen(DatagenArgs),
    /// Plot data: per-frame attention and embedding projections
    #[command(subcommand)]
    Viz(VizCmd),
}

#[derive(Debug, Subcommand)]
pub enum CodecCmd {
    /// Timestamp to temporal token
    Encode {
        #[arg(long, allow_hyphen_values = true)]
        tau: f64,
        #[arg(long, allow_hyphen_values = true)]
        duration: f64,
        #[arg(long)]
        chunks: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Temporal token to timestamp
    Decode {
        #[arg(long)]
        token: usize,
        #[arg(long, allow_hyphen_values = true)]
        duration: f64,
        #[arg(long)]
        chunks: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Video rows an encoder config contributes to the decoder input
    Budget {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Events (JSON array of {start, end, caption}) to grounded text
    Render {
        #[arg(long, allow_hyphen_values = true)]
        duration: f64,
        #[arg(long)]
        chunks: Option<usize>,
        /// Inline JSON; read from stdin when absent
        #[arg(long)]
        events: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Grounded text to events
    Parse {
        #[arg(long, allow_hyphen_values = true)]
        duration: f64,
        #[arg(long)]
        chunks: Option<usize>,
        /// Read from stdin when absent
        #[arg(long)]
        text: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Config with an `encoder` section; the toy encoder otherwise
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Use this checkpoint's encoder config and projectors
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Config with a `train` section; the desk-scale defaults otherwise
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated stages, e.g. `1,3` for the run without alignment
    #[arg(long, default_value = "1,2,3", value_delimiter = ',')]
    pub stages: Vec<u8>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for checkpoints, log.jsonl and summary.json
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub task: Option<EvalTask>,
    #[arg(long, requires = "gt")]
    pub pred: Option<PathBuf>,
    #[arg(long, requires = "pred")]
    pub gt: Option<PathBuf>,
    /// Generate answers with this checkpoint instead of reading predictions
    #[arg(long, conflicts_with_all = ["pred", "gt"])]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Corpus seed of the synthetic test set
    #[arg(long)]
    pub test_seed: Option<u64>,
    /// Also write the report here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DatagenArgs {
    /// JSONL annotations {video_id, duration, segments}
    #[arg(long, conflicts_with = "synthetic")]
    pub input: Option<PathBuf>,
    /// Use this many synthetic annotations instead of a file
    #[arg(long)]
    pub synthetic: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Offline clients
    #[arg(long)]
    pub stub: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum VizCmd {
    /// Per-frame attention CSV
    Attn(AttnArgs),
    /// Temporal-token embedding projection CSV
    Pca(PcaArgs),
}

#[derive(Debug, Args)]
pub struct AttnArgs {
    /// JSON array of attention weights over the video rows
    #[arg(long, conflicts_with = "checkpoint")]
    pub vector: Option<PathBuf>,
    /// Encoder for `--vector`: a config with an `encoder` section, or the standard layout
    #[arg(long)]
    pub encoder: Option<PathBuf>,
    /// Trace attention in this checkpoint on a synthetic grounding prompt
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub sample: usize,
    /// Decoder layer; the last one by default
    #[arg(long)]
    pub layer: Option<usize>,
    /// `mean`, `max` or `head:N`
    #[arg(long, default_value = "mean", value_parser = parse_reduction)]
    pub heads: HeadReduction,
    #[arg(long)]
    pub test_seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PcaArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub dims: u8,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_reduction(s: &str) -> std::result::Result<HeadReduction, String> {
    match s {
        "mean" => Ok(HeadReduction::Mean),
        "max" => Ok(HeadReduction::Max),
        _ => s
            .strip_prefix("head:")
            .and_then(|h| h.parse().ok())
            .map(HeadReduction::Head)
            .ok_or_else(|| format!("expected mean, max or head:N, got {s:?}")),
    }
}

/// Execute a parsed command, printing its JSON result to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Codec(c) => codec(c, out),
        Command::Encode(a) => encode(a, out),
        Command::Train(a) => train(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Datagen(a) => datagen(a, out),
        Command::Viz(VizCmd::Attn(a)) => viz_attn(a, out),
        Command::Viz(VizCmd::Pca(a)) => viz_pca(a, out),
    }
}

fn stdin_string() -> Result<String> {
    let mut s = String::new();
    std::io::stdin().read_to_string(&mut s)?;
    Ok(s)
}

fn codec_vocab(config: Option<&Path>, chunks: Option<usize>) -> Result<(RunConfig, VocabParams)> {
    let mut cfg = RunConfig::load(config)?;
    let mut vocab = cfg.vocab.unwrap_or_default();
    if let Some(m) = chunks {
        vocab.chunks = m;
    }
    cfg.vocab = Some(vocab);
    Ok((cfg, vocab))
}

fn codec(cmd: CodecCmd, out: &mut dyn Write) -> Result<()> {
    let (cfg, body) = match cmd {
        CodecCmd::Encode { tau, duration, chunks, config } => {
            let (cfg, v) = codec_vocab(config.as_deref(), chunks)?;
            (cfg, json!({ "token": timestamp_to_token(tau, duration, v.chunks)? }))
        }
        CodecCmd::Decode { token, duration, chunks, config } => {
            let (cfg, v) = codec_vocab(config.as_deref(), chunks)?;
            (cfg, json!({ "timestamp": token_to_timestamp(token, v.chunks, duration)? }))
        }
        CodecCmd::Budget { config } => {
            let cfg = RunConfig::load(config.as_deref())?;
            let enc = cfg.encoder_or(EncoderConfig::standard());
            let body = json!({
                "tokens": token_budget(&enc),
                "segments": enc.segments,
                "spatial_per_segment": enc.spatial_tokens(),
                "temporal_per_segment": enc.temporal_tokens() * enc.frames_per_segment(),
            });
            (cfg, body)
        }
        CodecCmd::Render { duration, chunks, events, config } => {
            let (cfg, v) = codec_vocab(config.as_deref(), chunks)?;
            let text = events.map_or_else(stdin_string, Ok)?;
            let events: Vec<GroundedEvent> =
                serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("events must be a JSON array of {{start, end, caption}}: {e}")))?;
            let vocab = vocab_layout(v.base_size, v.chunks)?;
            (cfg, json!({ "text": render_grounded_text(&events, duration, &vocab)? }))
        }
        CodecCmd::Parse { duration, chunks, text, config } => {
            let (cfg, v) = codec_vocab(config.as_deref(), chunks)?;
            let text = text.map_or_else(stdin_string, Ok)?;
            let vocab = vocab_layout(v.base_size, v.chunks)?;
            let parsed = parse_grounded_text(&text, &vocab, duration)?;
            (cfg, json!({ "events": parsed.events, "malformed": parsed.malformed }))
        }
    };
    let seed = cfg.seed.unwrap_or(0);
    emit(out, &with_provenance(body, &Provenance::new(&cfg, seed)))
}

fn encode(args: EncodeArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    cfg.seed = Some(seed);
    let model = args.checkpoint.as_deref().map(checkpoint::load).transpose()?.map(|(m, _)| m);
    let enc = match &model {
        Some(m) => m.encoder.clone(),
        None => cfg.encoder_or(EncoderConfig::toy()),
    };
    enc.validate()?;
    cfg.encoder = Some(enc.clone());
    let video = SyntheticVideo::generate(format!("synth-{seed}"), seed);
    let inputs = synth_features(seed, &enc, &video.events, video.duration, SynthParams::default())?;
    let (f, g) = match &model {
        Some(m) => (m.spatial_proj.clone(), m.temporal_proj.clone()),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
            let mut proj = |dims: Option<&crate::encoder::StreamDims>| {
                dims.map(|d| Mlp::random(&[d.channels, enc.model_dim, enc.model_dim], Activation::Gelu, &mut rng)).transpose()
            };
            (proj(enc.spatial.as_ref())?, proj(enc.temporal.as_ref())?)
        }
    };
    let bundle = encode_video(&inputs, &enc, f.as_ref(), g.as_ref())?;
    write_bundle(&args.out, &bundle)?;
    let body = json!({
        "out": args.out,
        "video": { "id": video.id, "duration": video.duration, "events": video.events },
        "segments": enc.segments,
        "rows": token_budget(&enc),
        "dim": enc.model_dim,
    });
    emit(out, &with_provenance(body, &Provenance::new(&cfg, seed)))
}

fn train_config(cfg: &mut RunConfig, seed: Option<u64>) -> TrainConfig {
    let mut t = cfg.train.clone().unwrap_or_default();
    if let Some(s) = seed.or(cfg.seed) {
        t.seed = s;
    }
    cfg.seed = Some(t.seed);
    cfg.train = Some(t.clone());
    t
}

fn train(args: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    let tcfg = train_config(&mut cfg, args.seed);
    let prov = Provenance::new(&cfg, tcfg.seed);
    let dir = args.out.or_else(|| cfg.paths.checkpoints.clone()).unwrap_or_else(|| PathBuf::from("runs"));
    std::fs::create_dir_all(&dir)?;

    let mut written = Vec::new();
    let tokenizer = Tokenizer::from_corpus(curriculum::world_texts().iter().map(String::as_str));
    let (model, corpus, log) = curriculum::train(&tcfg, &args.stages, |m, s| {
        let name = format!("stage{}.ckpt", s.stage);
        checkpoint::save(&dir.join(&name), m, Some(&tokenizer))?;
        written.push(name);
        Ok(())
    })?;

    let mut lines = String::new();
    lines.push_str(&serde_json::to_string(&json!({ "stages": args.stages, "alignment_skipped": log.alignment_skipped }))?);
    lines.push('\n');
    for step in log.steps() {
        lines.push_str(&serde_json::to_string(step)?);
        lines.push('\n');
    }
    std::fs::write(dir.join("log.jsonl"), lines)?;

    let grounding = match model.vocab {
        Some(_) => Some(temporal_exact_match(&model, &corpus, TaskKind::SentenceGrounding)?),
        None => None,
    };
    let stages: Vec<Value> = log
        .stages
        .iter()
        .map(|s| json!({ "stage": s.stage, "steps": s.steps.len(), "final_loss": s.final_loss(), "vocab_size": s.vocab_size }))
        .collect();
    let summary = with_provenance(
        json!({
            "stages": stages,
            "alignment_skipped": log.alignment_skipped,
            "grounding_exact_match": grounding.map(|g| json!({ "token_rate": g.token_rate(), "item_rate": g.item_rate() })),
            "checkpoints": written,
        }),
        &prov,
    );
    write_json(&dir.join("summary.json"), &summary)?;
    emit(out, &summary)
}

/// Synthetic test corpus sized for `model`, with the vocabulary check that
/// keeps token ids meaningful.
fn test_corpus(model: &StagedModel, tokenizer: Option<&Tokenizer>, tcfg: &TrainConfig, seed: u64) -> Result<Corpus> {
    let vocab = model.vocab.as_ref().ok_or_else(|| Error::Config("checkpoint has no temporal tokens; train stage 2 first".into()))?;
    let mut c = tcfg.corpus.clone();
    c.seed = seed;
    c.encoder = model.encoder.clone();
    c.chunks = vocab.chunks();
    let corpus = Corpus::build(&c)?;
    if tokenizer.is_some_and(|t| t.words() != corpus.tokenizer.words()) {
        return Err(Error::Config("checkpoint tokenizer differs from the synthetic corpus vocabulary".into()));
    }
    Ok(corpus)
}

fn eval(args: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    let task = args.task.or_else(|| cfg.eval.as_ref().map(|e| e.task)).ok_or_else(|| Error::Config("--task or eval.task is required".into()))?;
    cfg.eval = Some(EvalSection { task });
    let scorer = ChunkedUnigram::default();
    let (evaluation, seed) = match (&args.pred, &args.gt, &args.checkpoint) {
        (Some(pred), Some(gt), None) => {
            let seed = cfg.seed.unwrap_or(0);
            (evaluate_dataset(task, pred, gt, &scorer)?, seed)
        }
        (None, None, Some(ckpt)) => {
            let (model, tokenizer) = checkpoint::load(ckpt)?;
            let tcfg = train_config(&mut cfg, None);
            let seed = args.test_seed.unwrap_or(tcfg.corpus.seed + 1000);
            cfg.seed = Some(seed);
            let corpus = test_corpus(&model, tokenizer.as_ref(), &tcfg, seed)?;
            (evaluate_model(&model, &corpus, task, &scorer)?, seed)
        }
        _ => return Err(Error::Config("give --pred and --gt, or --checkpoint".into())),
    };
    let body = with_provenance(serde_json::to_value(&evaluation)?, &Provenance::new(&cfg, seed));
    if let Some(path) = &args.out {
        write_json(path, &body)?;
    }
    emit(out, &body)
}

fn datagen(args: DatagenArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    let mut dcfg = cfg.datagen.clone().unwrap_or_default();
    if let Some(s) = args.seed.or(cfg.seed) {
        dcfg.seed = s;
    }
    if args.stub {
        dcfg.clients.stub = true;
    }
    cfg.seed = Some(dcfg.seed);
    cfg.datagen = Some(dcfg.clone());
    let annotations = match (&args.input, args.synthetic) {
        (Some(p), _) => read_annotations(p)?,
        (None, Some(n)) => synthetic_annotations(n, dcfg.seed),
        (None, None) => match &cfg.paths.data {
            Some(p) => read_annotations(p)?,
            None => return Err(Error::Config("give --input or --synthetic N".into())),
        },
    };
    let (chat, embed) = dcfg.clients.build()?;
    let result = run_pipeline(&annotations, chat.as_ref(), embed.as_ref(), &dcfg)?;
    let path = args.out.or_else(|| cfg.paths.outputs.as_ref().map(|d| d.join("qa.jsonl"))).unwrap_or_else(|| PathBuf::from("qa.jsonl"));
    write_records(&path, &result.records)?;
    let body = json!({ "out": path, "stats": result.stats });
    emit(out, &with_provenance(body, &Provenance::new(&cfg, dcfg.seed)))?;
    if result.stats.annotations > 0 && result.stats.emitted == 0 {
        return Err(Error::Client(format!("no records emitted from {} annotations", result.stats.annotations)));
    }
    Ok(())
}

fn viz_attn(args: AttnArgs, out: &mut dyn Write) -> Result<()> {
    let (cfg, weights, seed) = match (&args.vector, &args.checkpoint) {
        (Some(path), None) => {
            let mut cfg = RunConfig::load(args.encoder.as_deref())?;
            let enc = cfg.encoder_or(EncoderConfig::standard());
            cfg.encoder = Some(enc.clone());
            let v: Vec<f64> = serde_json::from_str(&std::fs::read_to_string(path)?)
                .map_err(|e| Error::InvalidInput(format!("{} must hold a JSON array of numbers: {e}", path.display())))?;
            let seed = cfg.seed.unwrap_or(0);
            (cfg, aggregate_attention(&v, &enc)?, seed)
        }
        (None, Some(ckpt)) => {
            let (model, tokenizer) = checkpoint::load(ckpt)?;
            let mut cfg = RunConfig::load(args.config.as_deref())?;
            let tcfg = train_config(&mut cfg, None);
            let seed = args.test_seed.unwrap_or(tcfg.corpus.seed);
            cfg.seed = Some(seed);
            let corpus = test_corpus(&model, tokenizer.as_ref(), &tcfg, seed)?;
            let sample = corpus
                .samples_of(TaskKind::SentenceGrounding)
                .nth(args.sample)
                .ok_or_else(|| Error::InvalidInput(format!("no grounding sample {}", args.sample)))?;
            let ex = corpus.example(sample, model.vocab.as_ref())?;
            let prompt = ex.prompt;
            let (_, trace) = model.forward_traced(&prompt, &[])?;
            let layer = args.layer.unwrap_or(trace.layers() - 1);
            let row = video_attention(&trace, &prompt, layer, prompt.len() - 1, args.heads)?;
            (cfg, aggregate_attention(&row, &model.encoder)?, seed)
        }
        _ => return Err(Error::Config("give --vector or --checkpoint".into())),
    };
    emit_plot_data(&PlotData::FrameWeights(&weights), &args.out)?;
    let body = json!({ "out": args.out, "frames": weights.len(), "mass": weights.iter().sum::<f64>() });
    emit(out, &with_provenance(body, &Provenance::new(&cfg, seed)))
}

fn viz_pca(args: PcaArgs, out: &mut dyn Write) -> Result<()> {
    let (model, _) = checkpoint::load(&args.checkpoint)?;
    let rows = temporal_embeddings(&model)?;
    let proj = pca(&rows.view(), args.dims as usize)?;
    emit_plot_data(&PlotData::Projection(&proj), &args.out)?;
    let adjacency = adjacency_distances(&rows.view(), 5, 100).ok().map(|(near, far)| json!({ "near_mean": near, "far_mean": far }));
    let cfg = RunConfig { paths: Paths { checkpoints: Some(args.checkpoint.clone()), ..Paths::default() }, ..RunConfig::default() };
    let body = json!({
        "out": args.out,
        "points": proj.coords.nrows(),
        "explained": proj.explained,
        "warning": proj.warning,
        "adjacency": adjacency,
    });
    emit(out, &with_provenance(body, &Provenance::new(&cfg, 0)))
}
