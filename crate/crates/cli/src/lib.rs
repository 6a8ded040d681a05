//! The `t2v` command line: curate metadata, preprocess videos into clips,
//! synthesize the toy corpus, train, generate and evaluate.

pub mod config;
mod frames;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use t2v_core::data_pipeline::curate::{read_metadata, CurationConfig};
use t2v_core::data_pipeline::parallel::parallel_map;
use t2v_core::data_pipeline::qualify::qualify_clips_named;
use t2v_core::data_pipeline::toy::parse_caption;
use t2v_core::data_pipeline::{
    curate_metadata, load_corpus, save_corpus, split_dataset, synthesize_toy_corpus, CorpusEntry, ToyCorpusSpec,
};
use t2v_core::evaluation::consistency::ConsistencySample;
use t2v_core::evaluation::{
    caption_consistency_metrics, confusion_heatmap, generate_class_samples, score_predictions, train_classifier,
    ClassifierModel, EvalReport, LabeledClip, VariantResult, VideoClassifier,
};
use t2v_core::gist_cvae::Gist;
use t2v_core::text_encoder::{Caption, Vocabulary};
use t2v_core::training::{TrainState, VariantKind, LOSS_LOG_HEADER};
use t2v_core::video_generator::{save_png, VideoClip};
use t2v_core::Error;

use crate::config::{ConfigError, RunConfig};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const LOSS_LOG_FILE: &str = "loss_log.csv";
pub const SPLITS_FILE: &str = "splits.tsv";
pub const DIVERGENCE_FILE: &str = "divergence.bin";
pub const SPLIT_RATIOS: [f64; 3] = [0.7, 0.1, 0.2];

#[derive(Debug, Parser)]
#[command(name = "t2v", version, about = "Text-to-video generation: data, training and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter video metadata records down to usable, describable videos.
    Curate(CurateArgs),
    /// Cut decoded videos into qualified clips and write a clip corpus.
    Preprocess(PreprocessArgs),
    /// Render the synthetic moving-shape corpus.
    SynthData(SynthArgs),
    /// Train one model variant on a clip corpus.
    Train(TrainArgs),
    /// Generate a gist and a clip for a caption from a checkpoint.
    Generate(GenerateArgs),
    /// Train the video classifier and score generated clips per variant.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat `key = value` config file [default: built-in defaults]
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for all randomness [default: config `seed`, 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 1 guarantees determinism [default: config `workers`, 1]
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Line-delimited JSON metadata records
    #[arg(long)]
    pub metadata: PathBuf,
    /// Allowed tags, one per line
    #[arg(long)]
    pub allowlist: PathBuf,
    /// Accepted records, line-delimited JSON
    #[arg(long, default_value = "accepted.jsonl")]
    pub out: PathBuf,
    /// Rejection reasons per record, tab-separated [default: not written]
    #[arg(long)]
    pub rejections: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[command(flatten)]
    pub common: Common,
    /// Tab-separated `path, source_id, caption` lines; a path is a video file
    /// (decoded with ffmpeg) or a directory of PNG frames
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output corpus directory [default: config `corpus_dir`]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 4)]
    pub colors: usize,
    #[arg(long, default_value_t = 4)]
    pub motions: usize,
    #[arg(long, default_value_t = 10)]
    pub per_combo: usize,
    /// Gaussian pixel noise standard deviation
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Output corpus directory [default: config `corpus_dir`]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Clip corpus directory [default: config `corpus_dir`]
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// DT2V, PT2V, GT2V or T2V [default: config `variant`, T2V]
    #[arg(long)]
    pub variant: Option<String>,
    /// Training steps [default: config `steps`, 2000]
    #[arg(long)]
    pub steps: Option<u64>,
    /// Run directory for the checkpoint and loss log [default: config `run_dir`]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue from the checkpoint in the run directory
    #[arg(long, default_value_t = false)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Checkpoint file [default: `<run_dir>/checkpoint.bin`]
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub caption: String,
    /// Output directory
    #[arg(long, default_value = "samples")]
    pub out: PathBuf,
    /// File name prefix
    #[arg(long, default_value = "sample")]
    pub name: String,
    /// GIF frame delay in milliseconds
    #[arg(long, default_value_t = 120)]
    pub delay_ms: u32,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Clip corpus used to train and test the classifier [default: config `corpus_dir`]
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Directory holding one run directory per variant, named after it
    #[arg(long, default_value = "runs")]
    pub runs: PathBuf,
    /// Comma-separated variants to score
    #[arg(long, default_value = "DT2V,PT2V,GT2V,T2V", value_delimiter = ',')]
    pub variants: Vec<String>,
    /// Report directory
    #[arg(long, default_value = "eval")]
    pub out: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(ConfigError),
    Core(Error),
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
            CliError::Config(e) => e.fmt(f),
            CliError::Core(e) => e.fmt(f),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    /// 1 for bad input or configuration, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Core(Error::InvalidInput(_) | Error::Format { .. }) => 1,
            CliError::Core(_) | CliError::Runtime(_) => 2,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn io(context: impl std::fmt::Display) -> impl FnOnce(std::io::Error) -> CliError {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command, std::env::vars()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cmd: Command, env: impl IntoIterator<Item = (String, String)>) -> CliResult<()> {
    match cmd {
        Command::Curate(a) => curate(&a, &load(&a.common, env)?),
        Command::Preprocess(a) => preprocess(&a, &load(&a.common, env)?),
        Command::SynthData(a) => synth(&a, &load(&a.common, env)?),
        Command::Train(a) => train(&a, load(&a.common, env)?),
        Command::Generate(a) => generate(&a, &load(&a.common, env)?),
        Command::Evaluate(a) => evaluate(&a, &load(&a.common, env)?),
    }
}

fn load(common: &Common, env: impl IntoIterator<Item = (String, String)>) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref(), env)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(io(format!("creating {}", dir.display())))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, bytes).map_err(io(format!("writing {}", path.display())))
}

fn curate(a: &CurateArgs, cfg: &RunConfig) -> CliResult<()> {
    let f = fs::File::open(&a.metadata).map_err(io(format!("opening {}", a.metadata.display())))?;
    let records = read_metadata(BufReader::new(f), &a.metadata)?;
    let allow_text = fs::read_to_string(&a.allowlist).map_err(io(format!("reading {}", a.allowlist.display())))?;
    let allowlist: HashSet<String> = t2v_core::data_pipeline::curate::parse_word_list(&allow_text);
    let ccfg = CurationConfig {
        workers: cfg.workers,
        ..CurationConfig::default()
    };
    let outcome = curate_metadata(&records, &allowlist, &ccfg)?;
    let mut out = String::new();
    for &i in &outcome.accepted {
        out.push_str(&serde_json::to_string(&records[i]).map_err(|e| CliError::Runtime(e.to_string()))?);
        out.push('\n');
    }
    write_file(&a.out, out)?;
    if let Some(p) = &a.rejections {
        let mut s = String::from("source_id\treasons\n");
        for (r, reasons) in records.iter().zip(&outcome.reasons) {
            if !reasons.is_empty() {
                let names: Vec<&str> = reasons.iter().map(|x| x.as_str()).collect();
                s.push_str(&format!("{}\t{}\n", r.source_id, names.join(",")));
            }
        }
        write_file(p, s)?;
    }
    println!(
        "selected tags: {}\naccepted {} of {} records",
        outcome.selected_tags.join(", "),
        outcome.accepted.len(),
        records.len()
    );
    Ok(())
}

struct ManifestLine {
    path: PathBuf,
    source_id: String,
    caption: String,
}

fn read_manifest(path: &Path) -> CliResult<Vec<ManifestLine>> {
    let text = fs::read_to_string(path).map_err(io(format!("reading {}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let [p, source_id, caption] = f[..] else {
            return Err(CliError::Usage(format!(
                "{}:{}: expected `path<TAB>source_id<TAB>caption`",
                path.display(),
                i + 1
            )));
        };
        out.push(ManifestLine {
            path: base.join(p),
            source_id: source_id.into(),
            caption: caption.into(),
        });
    }
    Ok(out)
}

fn preprocess(a: &PreprocessArgs, cfg: &RunConfig) -> CliResult<()> {
    let manifest = read_manifest(&a.manifest)?;
    if cfg.height != cfg.width {
        return Err(ConfigError::Invalid("preprocessing needs square frames (height = width)".into()).into());
    }
    let qcfg = cfg.qualification();
    let per_video = parallel_map(&manifest, cfg.workers, |m| -> CliResult<Vec<CorpusEntry>> {
        let frames = frames::decode(&m.path, qcfg.fps, 2 * qcfg.resolution)?;
        let clips = qualify_clips_named(&frames, &qcfg, "")?;
        Ok(clips
            .into_iter()
            .enumerate()
            .map(|(k, mut clip)| {
                clip.caption_id = format!("{}_{k:04}", m.source_id);
                CorpusEntry {
                    clip,
                    source_id: m.source_id.clone(),
                    caption: m.caption.clone(),
                }
            })
            .collect())
    });
    let mut entries = Vec::new();
    for v in per_video {
        entries.extend(v?);
    }
    let out = a.out.clone().unwrap_or_else(|| cfg.corpus_dir.clone().into());
    save_corpus(&out, &entries)?;
    println!("{} clips from {} videos written to {}", entries.len(), manifest.len(), out.display());
    Ok(())
}

fn synth(a: &SynthArgs, cfg: &RunConfig) -> CliResult<()> {
    let mut spec = ToyCorpusSpec::standard(a.colors, a.motions, a.per_combo, cfg.seed);
    if a.colors > t2v_core::data_pipeline::toy::PALETTE.len() || a.motions > t2v_core::data_pipeline::toy::MOTIONS.len() {
        return Err(CliError::Usage(format!(
            "at most {} colors and {} motions are available",
            t2v_core::data_pipeline::toy::PALETTE.len(),
            t2v_core::data_pipeline::toy::MOTIONS.len()
        )));
    }
    if cfg.height != cfg.width {
        return Err(ConfigError::Invalid("toy clips are square (height = width)".into()).into());
    }
    spec.noise_level = a.noise;
    spec.frames = cfg.frames;
    spec.size = cfg.height;
    let pairs = synthesize_toy_corpus(&spec)?;
    let entries: Vec<CorpusEntry> = pairs
        .into_iter()
        .map(|p| CorpusEntry {
            clip: p.clip,
            source_id: "toy".into(),
            caption: p.caption,
        })
        .collect();
    let out = a.out.clone().unwrap_or_else(|| cfg.corpus_dir.clone().into());
    save_corpus(&out, &entries)?;
    println!("{} clips written to {}", entries.len(), out.display());
    Ok(())
}

/// Corpus split into (train, val, test) by `seed`.
pub fn split_corpus(entries: &[CorpusEntry], seed: u64) -> CliResult<(Vec<CorpusEntry>, Vec<CorpusEntry>, Vec<CorpusEntry>)> {
    Ok(split_dataset(entries, SPLIT_RATIOS, seed)?)
}

fn train(a: &TrainArgs, mut cfg: RunConfig) -> CliResult<()> {
    if let Some(v) = &a.variant {
        cfg.variant = v.clone();
    }
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    cfg.validate()?;
    let kind = cfg.variant_kind()?;
    let corpus_dir = a.corpus.clone().unwrap_or_else(|| cfg.corpus_dir.clone().into());
    let out = a.out.clone().unwrap_or_else(|| cfg.run_dir.clone().into());
    let entries = load_corpus(&corpus_dir)?;
    if entries.is_empty() {
        return Err(CliError::Usage(format!("corpus {} is empty", corpus_dir.display())));
    }
    let (train_set, val, test) = split_corpus(&entries, cfg.seed)?;
    create_dir(&out)?;
    let ckpt = out.join(CHECKPOINT_FILE);
    let log_path = out.join(LOSS_LOG_FILE);
    let (mut state, mut log) = if a.resume {
        let state = TrainState::load(&ckpt)?;
        if state.kind() != kind {
            return Err(CliError::Usage(format!(
                "checkpoint holds a {} model, not {kind}",
                state.kind()
            )));
        }
        let log = fs::OpenOptions::new()
            .append(true)
            .open(&log_path)
            .map_err(io(format!("opening {}", log_path.display())))?;
        (state, BufWriter::new(log))
    } else {
        let captions: Vec<&str> = entries.iter().map(|e| e.caption.as_str()).collect();
        let vocab = Vocabulary::build(&captions)?;
        let state = TrainState::new(kind, &cfg.model_config(), &cfg.train_config(), vocab)?;
        let f = fs::File::create(&log_path).map_err(io(format!("creating {}", log_path.display())))?;
        let mut w = BufWriter::new(f);
        writeln!(w, "{LOSS_LOG_HEADER}").map_err(io("writing loss log"))?;
        (state, w)
    };
    let data: Vec<(VideoClip, Caption)> = train_set
        .iter()
        .map(|e| Ok((e.clip.clone(), state.vocab.caption(&e.caption)?)))
        .collect::<t2v_core::Result<_>>()?;
    let mut splits = String::new();
    for (name, set) in [("train", &train_set), ("val", &val), ("test", &test)] {
        for e in set.iter() {
            splits.push_str(&format!("{}\t{name}\n", e.clip_id()));
        }
    }
    write_file(&out.join(SPLITS_FILE), splits)?;
    write_file(&out.join("config.txt"), cfg.to_text())?;
    let result = state.train(&data, cfg.steps, Some(&mut log), |_| {});
    log.flush().map_err(io("writing loss log"))?;
    if let Err(e @ Error::Divergence { .. }) = &result {
        let dump = out.join(DIVERGENCE_FILE);
        state.save(&dump)?;
        eprintln!("{e}; state at failure saved to {}", dump.display());
    }
    let reports = result?;
    state.save(&ckpt)?;
    if let Some(last) = reports.last() {
        println!("{kind}: {} steps, last losses {}", state.step, last.csv_row());
    }
    Ok(())
}

fn save_gist(gist: &Gist, path: &Path) -> CliResult<()> {
    Ok(save_png(&gist.pixels, path)?)
}

fn generate(a: &GenerateArgs, cfg: &RunConfig) -> CliResult<()> {
    let ckpt = a.checkpoint.clone().unwrap_or_else(|| Path::new(&cfg.run_dir).join(CHECKPOINT_FILE));
    let state = TrainState::load(&ckpt)?;
    let caption = state.vocab.caption(&a.caption)?;
    let sample = state.generate_sample(&caption, cfg.seed)?;
    create_dir(&a.out)?;
    let stem = a.out.join(&a.name);
    let with_ext = |ext: &str| PathBuf::from(format!("{}{ext}", stem.display()));
    if let Some(g) = &sample.gist {
        save_gist(g, &with_ext("_gist.png"))?;
    }
    sample.video.save_gif(&with_ext(".gif"), a.delay_ms)?;
    sample.video.save_raw(&with_ext(".raw"))?;
    println!("wrote {}.{{gif,raw}}", stem.display());
    Ok(())
}

/// Classifies every clip, writes `predictions_<variant>.tsv` (sample index,
/// true and predicted label) and tallies the result.
fn classify_groups(
    classifier: &ClassifierModel,
    variant: &str,
    by_class: &[Vec<VideoClip>],
    out: &Path,
) -> CliResult<VariantResult> {
    let mut pairs = Vec::new();
    let mut tsv = String::from("sample\ttrue\tpredicted\n");
    for (label, clips) in by_class.iter().enumerate() {
        for chunk in clips.chunks(32) {
            let refs: Vec<&VideoClip> = chunk.iter().collect();
            for p in classifier.predict_batch(&refs)? {
                tsv.push_str(&format!("{}\t{label}\t{p}\n", pairs.len()));
                pairs.push((label, p));
            }
        }
    }
    write_file(&out.join(format!("predictions_{variant}.tsv")), tsv)?;
    Ok(score_predictions(variant, classifier.num_classes(), &pairs)?)
}

fn evaluate(a: &EvaluateArgs, cfg: &RunConfig) -> CliResult<()> {
    let kinds: Vec<VariantKind> = a
        .variants
        .iter()
        .map(|v| v.trim().parse().map_err(|e: Error| CliError::Usage(e.to_string())))
        .collect::<CliResult<_>>()?;
    if kinds.is_empty() {
        return Err(CliError::Usage("no variants requested".into()));
    }
    let corpus_dir = a.corpus.clone().unwrap_or_else(|| cfg.corpus_dir.clone().into());
    let entries = load_corpus(&corpus_dir)?;
    let classes: Vec<String> = entries
        .iter()
        .map(|e| e.caption.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let label: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let (train_set, val, test) = split_corpus(&entries, cfg.seed)?;
    let labeled = |set: &[CorpusEntry]| -> Vec<(VideoClip, usize)> {
        set.iter().map(|e| (e.clip.clone(), label[e.caption.as_str()])).collect()
    };
    let (tr, va, te) = (labeled(&train_set), labeled(&val), labeled(&test));
    let tr_l: Vec<LabeledClip> = tr.iter().map(|(c, l)| LabeledClip { clip: c, label: *l }).collect();
    let va_l: Vec<LabeledClip> = va.iter().map(|(c, l)| LabeledClip { clip: c, label: *l }).collect();
    let (classifier, history) = train_classifier(&tr_l, &va_l, classes.clone(), &cfg.classifier_config())?;
    let mut by_class: Vec<Vec<VideoClip>> = vec![Vec::new(); classes.len()];
    let test_empty = te.is_empty();
    for (c, l) in te {
        by_class[l].push(c);
    }
    create_dir(&a.out)?;
    let mut results = Vec::new();
    if test_empty {
        eprintln!("warning: test split is empty; skipping in-set accuracy");
    } else {
        results.push(classify_groups(&classifier, "in-set", &by_class, &a.out)?);
    }
    let toy = classes.iter().all(|c| parse_caption(c).is_some());
    let mut consistency = Vec::new();
    for kind in &kinds {
        let ckpt = a.runs.join(kind.name()).join(CHECKPOINT_FILE);
        let state = TrainState::load(&ckpt)?;
        if state.kind() != *kind {
            return Err(CliError::Usage(format!("{} holds a {} model", ckpt.display(), state.kind())));
        }
        let captions: Vec<Vec<Caption>> = classes
            .iter()
            .map(|c| Ok(vec![state.vocab.caption(c)?]))
            .collect::<t2v_core::Result<_>>()?;
        let samples = generate_class_samples(&state.model, &state.params, &captions, cfg.eval_per_class, cfg.seed)?;
        let clips: Vec<Vec<VideoClip>> = samples.iter().map(|v| v.iter().map(|s| s.video.clone()).collect()).collect();
        results.push(classify_groups(&classifier, kind.name(), &clips, &a.out)?);
        if toy {
            let stand_ins: Vec<Vec<Gist>> = samples
                .iter()
                .map(|v| {
                    v.iter()
                        .map(|s| s.gist.clone().unwrap_or_else(|| Gist { pixels: s.video.frame(0) }))
                        .collect()
                })
                .collect();
            let mut cs = Vec::new();
            for (k, v) in samples.iter().enumerate() {
                for (s, g) in v.iter().zip(&stand_ins[k]) {
                    cs.push(ConsistencySample {
                        gist: g,
                        video: &s.video,
                        caption: &classes[k],
                    });
                }
            }
            consistency.push((kind.name(), caption_consistency_metrics(&cs, None)?));
        }
    }
    let report = EvalReport {
        classes: classes.clone(),
        results,
    };
    let mut text = report.to_text();
    text.push_str(&format!(
        "classifier best epoch {} (validation accuracy {:.4})\n",
        history.best_epoch + 1,
        history.val_accuracy[history.best_epoch]
    ));
    for (name, c) in &consistency {
        text.push_str(&format!(
            "{name}\tcolor_match_rate {:.4}\tmotion_match_rate {:.4}\n",
            c.color_match_rate, c.motion_match_rate
        ));
    }
    write_file(&a.out.join("report.txt"), &text)?;
    let mut acc_csv = String::from("variant,accuracy,samples\n");
    for r in &report.results {
        acc_csv.push_str(&format!("{},{},{}\n", r.variant, r.accuracy, r.sample_count));
        write_file(&a.out.join(format!("confusion_{}.csv", r.variant)), report.confusion_csv(r))?;
        let img = confusion_heatmap(&r.confusion, 16);
        let p = a.out.join(format!("confusion_{}.png", r.variant));
        img.save(&p).map_err(|e| CliError::Core(Error::Image(e)))?;
    }
    write_file(&a.out.join("accuracy.csv"), acc_csv)?;
    print!("{text}");
    Ok(())
}
