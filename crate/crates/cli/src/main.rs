//! `avdecode` command-line front end.
//!
//! Data errors exit with status 1 and a JSON object `{"error", "message"}`
//! on standard error; usage errors exit with status 2. Log verbosity follows
//! `AVDECODE_LOG` (for example `AVDECODE_LOG=debug`).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use avdecode_core::audio::{augment_corpus, AudioSignal, NoiseKind, NoiseSource, NoiseSpec, SeedNamespace};
use avdecode_core::ctc::min_frames;
use avdecode_core::decoder::{decode_batch, decode_with_mode};
use avdecode_core::demo::{render_table, run_demo, SyntheticConfig};
use avdecode_core::fusion::{plan_rate_alignment, DEFAULT_HOP, DEFAULT_WINDOW};
use avdecode_core::manifest::Manifest;
use avdecode_core::scorer::teacher_forced_log_probs;
use avdecode_core::visual::{
    align_track, apply_frames, augment_plan, interpolate_gaps, mouth_roi, smooth, FrameTensor, LandmarkTrack,
    AUG_CROP, FLIP_PROB, ROI_SIZE, SMOOTHING_WINDOW,
};
use avdecode_core::wer::corpus_wer;
use avdecode_core::{
    ctc_forward_loss, ctc_gradient, cross_entropy_loss, hybrid_loss, BigramScorer, DecodeMode, DecoderConfig, Error,
    HybridLossConfig, PosteriorGrid, Result, Scorer, TableScorer, UniformScorer, Vocabulary,
};
use clap::{Args, Parser, Subcommand};
use log::{debug, info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

#[derive(Parser)]
#[command(name = "avdecode", version, about = "Hybrid CTC/attention decoding and audio-visual preprocessing tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode a posterior grid (or every grid in a manifest).
    Decode(DecodeArgs),
    /// CTC, cross-entropy and hybrid losses of a transcript.
    CtcLoss(CtcLossArgs),
    /// Word error rate between line-aligned reference and hypothesis files.
    Wer(WerArgs),
    /// Mix noise into WAV files at a target SNR.
    MixNoise(MixNoiseArgs),
    /// Interpolate, smooth and align landmarks and plan the mouth crop.
    PrepLandmarks(PrepArgs),
    /// Padding/truncation that gives two audio frames per video frame.
    AlignRate(AlignRateArgs),
    /// Compare decoding modes on a fixture and a seeded synthetic corpus.
    Demo(DemoArgs),
}

#[derive(Args)]
struct VocabArgs {
    /// JSON array of 40 symbols overriding the built-in vocabulary.
    #[arg(long)]
    vocab: Option<PathBuf>,
}

impl VocabArgs {
    fn load(&self) -> Result<Vocabulary> {
        match &self.vocab {
            Some(p) => Vocabulary::load(p),
            None => Ok(Vocabulary::default()),
        }
    }
}

#[derive(Args)]
struct DecodeArgs {
    /// Posterior grid (CTCGRID1 binary or JSON).
    #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
    grid: Option<PathBuf>,
    /// JSON-lines manifest whose records carry `grid_path`.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Attention scorer: `uniform`, `table:<file>` or `bigram:<corpus>`.
    #[arg(long, default_value = "uniform")]
    scorer: String,
    /// CTC weight in the joint score.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 5)]
    beam_width: usize,
    /// Maximum hypothesis length [default: number of frames].
    #[arg(long)]
    l_max: Option<usize>,
    /// joint, ctc, attention or greedy.
    #[arg(long, default_value = "joint")]
    mode: String,
    /// Write a JSON report with every complete hypothesis.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    vocab: VocabArgs,
}

#[derive(Args)]
struct CtcLossArgs {
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    transcript: String,
    /// Attention scorer used for the cross-entropy term.
    #[arg(long, default_value = "uniform")]
    scorer: String,
    /// Weight of the CTC term.
    #[arg(long, default_value_t = 0.2)]
    lambda: f64,
    /// Label-smoothing weight.
    #[arg(long, default_value_t = 0.01)]
    smoothing: f64,
    /// Write the gradient with respect to the grid's log-probabilities as JSON.
    #[arg(long)]
    gradient: Option<PathBuf>,
    #[command(flatten)]
    vocab: VocabArgs,
}

#[derive(Args)]
struct WerArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    hyp: PathBuf,
    /// Write per-utterance counts as JSON.
    #[arg(long)]
    per_utt: Option<PathBuf>,
}

#[derive(Args)]
struct MixNoiseArgs {
    /// Input WAV (16 kHz mono 16-bit).
    #[arg(long = "in", required_unless_present = "manifest", conflicts_with = "manifest")]
    input: Option<PathBuf>,
    /// Output WAV for `--in`, or output directory for `--manifest`.
    #[arg(long)]
    out: PathBuf,
    /// JSON-lines manifest whose records carry `audio_path`.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
    snr_db: f64,
    /// `babble`, `human` or `file:<wav>`.
    #[arg(long, default_value = "babble")]
    noise: String,
    /// Directory of WAV sources for babble or human noise.
    #[arg(long)]
    sources: Option<PathBuf>,
    /// Probability that an utterance receives noise.
    #[arg(long, default_value_t = 0.25)]
    prob: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the evaluation seed namespace instead of the training one.
    #[arg(long)]
    eval: bool,
    /// Write the per-utterance report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PrepArgs {
    /// Landmark CSV (`frame,point,x,y,valid`).
    #[arg(long)]
    track: PathBuf,
    /// Single-frame reference landmark CSV.
    #[arg(long)]
    reference: PathBuf,
    #[arg(long, default_value_t = SMOOTHING_WINDOW)]
    window: usize,
    #[arg(long, default_value_t = ROI_SIZE)]
    roi_size: usize,
    /// Image size `WxH` used to clamp the crop box.
    #[arg(long, value_parser = parse_size)]
    image_size: Option<(usize, usize)>,
    /// Draw a random crop and flip for the sequence.
    #[arg(long)]
    aug: bool,
    #[arg(long, default_value_t = AUG_CROP)]
    crop: usize,
    #[arg(long, default_value_t = FLIP_PROB)]
    flip_prob: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Frame tensor (FRAMES01) in reference coordinates to crop.
    #[arg(long, requires = "frames_out")]
    frames: Option<PathBuf>,
    #[arg(long)]
    frames_out: Option<PathBuf>,
    /// Convert RGB frames to grayscale.
    #[arg(long)]
    grayscale: bool,
    /// Normalization mean applied to pixels.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    mean: f64,
    /// Normalization variance applied to pixels.
    #[arg(long, default_value_t = 1.0)]
    var: f64,
}

#[derive(Args)]
struct AlignRateArgs {
    #[arg(long)]
    visual_frames: usize,
    #[arg(long)]
    samples: usize,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
    #[arg(long, default_value_t = DEFAULT_HOP)]
    hop: usize,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Synthetic utterances.
    #[arg(long, default_value_t = 20)]
    utterances: usize,
    /// Logit margin of the aligned symbol.
    #[arg(long, default_value_t = SyntheticConfig::default().sharpness)]
    sharpness: f64,
    /// Standard deviation of the logit noise.
    #[arg(long, default_value_t = SyntheticConfig::default().noise)]
    noise: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 5)]
    beam_width: usize,
    /// Write the JSON report here as well as the table on standard output.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    Ok((w.parse().map_err(|e| format!("{e}"))?, h.parse().map_err(|e| format!("{e}"))?))
}

fn build_scorer(spec: &str, vocab: &Vocabulary) -> Result<Box<dyn Scorer>> {
    match spec.split_once(':') {
        None if spec == "uniform" => Ok(Box::new(UniformScorer::new(vocab.layout()))),
        Some(("table", path)) => Ok(Box::new(TableScorer::load(path, vocab)?)),
        Some(("bigram", path)) => Ok(Box::new(BigramScorer::fit_text(vocab, &fs::read_to_string(path)?)?)),
        _ => Err(Error::InvalidConfig(format!(
            "unknown scorer {spec:?}; expected uniform, table:<file> or bigram:<corpus>"
        ))),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn cmd_decode(args: &DecodeArgs) -> Result<()> {
    let vocab = args.vocab.load()?;
    let scorer = build_scorer(&args.scorer, &vocab)?;
    let mode: DecodeMode = args.mode.parse()?;
    let config = DecoderConfig { alpha: args.alpha, beam_width: args.beam_width, l_max: args.l_max };
    config.validate()?;
    let settings = json!({
        "alpha": config.alpha,
        "beam_width": config.beam_width,
        "l_max": config.l_max,
        "mode": mode,
        "scorer": scorer.name(),
    });

    if let Some(grid_path) = &args.grid {
        let grid = PosteriorGrid::load(grid_path, vocab.layout())?;
        info!("decoding {} frames", grid.frame_count());
        let out = decode_with_mode(&grid, scorer.as_ref(), &config, mode)?;
        let text = vocab.decode_ids(out.best.labels())?;
        println!("{text}");
        if let Some(report) = &args.report {
            let ranking: Vec<_> = out
                .ranking
                .iter()
                .map(|h| {
                    json!({
                        "text": vocab.decode_ids(h.labels()).unwrap_or_default(),
                        "tokens": h.tokens,
                        "ctc_score": finite_or_null(h.ctc_score),
                        "attn_score": finite_or_null(h.attn_score),
                        "joint_score": finite_or_null(h.joint_score),
                    })
                })
                .collect();
            let value = json!({
                "settings": settings,
                "best": text,
                "final_level_completions": out.final_level_completions,
                "ranking": ranking,
            });
            write_json(report, &value)?;
        }
        return Ok(());
    }

    let manifest = Manifest::load(args.manifest.as_ref().expect("clap enforces grid or manifest"))?;
    let mut ids = Vec::new();
    let mut grids = Vec::new();
    for r in &manifest.records {
        let path = r
            .grid_path
            .as_ref()
            .ok_or_else(|| Error::InvalidManifest(format!("{} has no grid_path", r.utterance_id)))?;
        grids.push(PosteriorGrid::load(path, vocab.layout())?);
        ids.push(r);
    }
    info!("decoding {} utterances", grids.len());
    let results = decode_batch(&grids, scorer.as_ref(), &config, mode);
    let mut rows = Vec::new();
    let mut pairs = Vec::new();
    for (rec, res) in ids.iter().zip(results) {
        match res.and_then(|o| vocab.decode_ids(o.best.labels())) {
            Ok(text) => {
                println!("{}\t{}", rec.utterance_id, text);
                if let Some(t) = &rec.transcript {
                    pairs.push((t.clone(), text.clone()));
                }
                rows.push(json!({"utterance_id": rec.utterance_id, "hypothesis": text}));
            }
            Err(e) => {
                warn!("{}: {e}", rec.utterance_id);
                rows.push(json!({"utterance_id": rec.utterance_id, "error": e.kind(), "message": e.to_string()}));
            }
        }
    }
    let wer = if pairs.is_empty() { None } else { Some(corpus_wer(&pairs)?) };
    if let Some(w) = &wer {
        match w.wer {
            Some(rate) => println!("WER {rate:.4}"),
            None => println!("WER n/a"),
        }
    }
    if let Some(report) = &args.report {
        write_json(report, &json!({"settings": settings, "utterances": rows, "wer": wer}))?;
    }
    Ok(())
}

fn finite_or_null(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        serde_json::Value::Null
    }
}

fn cmd_ctc_loss(args: &CtcLossArgs) -> Result<()> {
    let vocab = args.vocab.load()?;
    let grid = PosteriorGrid::load(&args.grid, vocab.layout())?;
    let loss_cfg = HybridLossConfig::new(args.lambda, args.smoothing)?;
    let scorer = build_scorer(&args.scorer, &vocab)?;
    let target = vocab.encode_text(&args.transcript)?.ids;
    debug!("target needs {} frames, grid has {}", min_frames(&target), grid.frame_count());
    let ctc = ctc_forward_loss(&grid, &target)?;
    let mut with_eos = target.clone();
    with_eos.push(vocab.eos_sos_id());
    let steps = teacher_forced_log_probs(scorer.as_ref(), &with_eos);
    let ce = cross_entropy_loss(&steps, &with_eos, vocab.layout(), loss_cfg.smoothing)?;
    let value = json!({
        "transcript": args.transcript,
        "lambda": loss_cfg.lambda,
        "smoothing": loss_cfg.smoothing,
        "scorer": scorer.name(),
        "ctc_nll": finite_or_null(ctc),
        "ce_nll": finite_or_null(ce),
        "hybrid_loss": finite_or_null(hybrid_loss(ctc, ce, &loss_cfg)),
    });
    println!("{}", serde_json::to_string_pretty(&value)?);
    if let Some(path) = &args.gradient {
        let grad = ctc_gradient(&grid, &target)?;
        let rows: Vec<&[f64]> = grad.chunks(grid.vocab_size()).collect();
        write_json(path, &json!({"frames": grid.frame_count(), "vocab_size": grid.vocab_size(), "gradient": rows}))?;
    }
    Ok(())
}

fn cmd_wer(args: &WerArgs) -> Result<()> {
    let refs = fs::read_to_string(&args.reference)?;
    let hyps = fs::read_to_string(&args.hyp)?;
    let refs: Vec<&str> = refs.lines().collect();
    let hyps: Vec<&str> = hyps.lines().collect();
    if refs.len() != hyps.len() {
        return Err(Error::LengthMismatch { expected: refs.len(), actual: hyps.len() });
    }
    let pairs: Vec<(&str, &str)> = refs.into_iter().zip(hyps).collect();
    let scored = corpus_wer(&pairs)?;
    let t = &scored.total;
    match scored.wer {
        Some(w) => println!(
            "WER {w:.4} (S={} D={} I={} N={})",
            t.substitutions, t.deletions, t.insertions, t.ref_len
        ),
        None => return Err(Error::EmptyReference),
    }
    if let Some(path) = &args.per_utt {
        write_json(path, &scored)?;
    }
    Ok(())
}

fn load_wav_dir(dir: &Path) -> Result<Vec<AudioSignal>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    paths.iter().map(AudioSignal::read_wav).collect()
}

fn cmd_mix_noise(args: &MixNoiseArgs) -> Result<()> {
    let kind = match args.noise.split_once(':') {
        None if args.noise == "babble" => NoiseKind::Babble,
        None if args.noise == "human" => NoiseKind::Human,
        Some(("file", path)) => NoiseKind::File(path.to_string()),
        _ => return Err(Error::InvalidConfig(format!("unknown noise {:?}", args.noise))),
    };
    let source = match &kind {
        NoiseKind::File(path) => NoiseSource::Signal(AudioSignal::read_wav(path)?),
        NoiseKind::Babble | NoiseKind::Human => {
            let dir = args
                .sources
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("--sources is required for babble and human noise".into()))?;
            let pool = load_wav_dir(dir)?;
            if kind == NoiseKind::Babble {
                NoiseSource::Babble(pool)
            } else {
                NoiseSource::Human(pool)
            }
        }
    };
    let spec = NoiseSpec {
        kind,
        snr_db: args.snr_db,
        apply_prob: args.prob,
        seed: args.seed,
        namespace: if args.eval { SeedNamespace::Eval } else { SeedNamespace::Train },
    };

    let (utterances, outputs): (Vec<(String, AudioSignal)>, Vec<PathBuf>) = match (&args.input, &args.manifest) {
        (Some(input), _) => {
            let id = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            (vec![(id, AudioSignal::read_wav(input)?)], vec![args.out.clone()])
        }
        (None, Some(m)) => {
            let manifest = Manifest::load(m)?;
            fs::create_dir_all(&args.out)?;
            let mut utts = Vec::new();
            let mut outs = Vec::new();
            for r in &manifest.records {
                let path = r
                    .audio_path
                    .as_ref()
                    .ok_or_else(|| Error::InvalidManifest(format!("{} has no audio_path", r.utterance_id)))?;
                utts.push((r.utterance_id.clone(), AudioSignal::read_wav(path)?));
                outs.push(args.out.join(format!("{}.wav", r.utterance_id)));
            }
            (utts, outs)
        }
        (None, None) => unreachable!("clap enforces --in or --manifest"),
    };
    info!("mixing {} utterance(s)", utterances.len());
    let augmented = augment_corpus(&utterances, &source, &spec)?;
    for (signal, path) in augmented.signals.iter().zip(&outputs) {
        signal.write_wav(path)?;
    }
    for e in augmented.report.entries.iter().filter(|e| e.error.is_some()) {
        warn!("{}: {}", e.utterance_id, e.error.as_deref().unwrap_or_default());
    }
    println!("{}", serde_json::to_string_pretty(&augmented.report)?);
    if let Some(path) = &args.report {
        write_json(path, &augmented.report)?;
    }
    if utterances.len() == 1 {
        if let Some(err) = &augmented.report.entries[0].error {
            return Err(Error::InvalidConfig(err.clone()));
        }
    }
    Ok(())
}

fn cmd_prep_landmarks(args: &PrepArgs) -> Result<()> {
    let track = LandmarkTrack::load_csv(&args.track)?;
    let reference = LandmarkTrack::load_csv(&args.reference)?;
    if reference.len() != 1 || !reference.is_fully_valid() {
        return Err(Error::InvalidLandmarks("reference must be a single valid frame".into()));
    }
    let filled = interpolate_gaps(&track)?;
    let smoothed = smooth(&filled, args.window)?;
    let (aligned, transforms) = align_track(&smoothed, &reference.frames[0])?;
    let roi = mouth_roi(&aligned, args.roi_size, args.image_size)?;
    for w in &roi.warnings {
        warn!("{w}");
    }
    let plan = if args.aug {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        augment_plan(&roi.plan, args.crop, args.flip_prob, &mut rng)?
    } else {
        roi.plan
    };
    if let (Some(input), Some(output)) = (&args.frames, &args.frames_out) {
        let frames = FrameTensor::read(std::io::BufReader::new(fs::File::open(input)?))?;
        if frames.frames != track.len() {
            return Err(Error::LengthMismatch { expected: track.len(), actual: frames.frames });
        }
        let out = apply_frames(&frames, &plan, args.grayscale, args.mean, args.var)?;
        out.write(BufWriter::new(fs::File::create(output)?))?;
    }
    let value = json!({
        "window": args.window,
        "roi_size": args.roi_size,
        "frames": track.len(),
        "interpolated_frames": track.valid.iter().filter(|v| !**v).count(),
        "transforms": transforms,
        "roi_center": roi.center,
        "crop_plan": plan,
        "crop_rect": plan.crop_rect(),
        "warnings": roi.warnings,
    });
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn cmd_align_rate(args: &AlignRateArgs) -> Result<()> {
    let plan = plan_rate_alignment(args.samples, args.visual_frames, args.window, args.hop)?;
    let value = json!({
        "plan": plan,
        "raw_frames": plan.raw_frames(),
        "front_end_frames": plan.front_end_frames(),
        "fused_frames": plan.fused_frames(),
    });
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn cmd_demo(args: &DemoArgs) -> Result<()> {
    let vocab = Vocabulary::default();
    let synthetic = SyntheticConfig { seed: args.seed, utterances: args.utterances, sharpness: args.sharpness, noise: args.noise, ..Default::default() };
    let decoder = DecoderConfig { alpha: args.alpha, beam_width: args.beam_width, l_max: None };
    decoder.validate()?;
    let report = run_demo(&vocab, &synthetic, &decoder, &HybridLossConfig::default())?;
    print!("{}", render_table(&report));
    if let Some(path) = &args.report {
        write_json(path, &report)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AVDECODE_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Decode(a) => cmd_decode(a),
        Command::CtcLoss(a) => cmd_ctc_loss(a),
        Command::Wer(a) => cmd_wer(a),
        Command::MixNoise(a) => cmd_mix_noise(a),
        Command::PrepLandmarks(a) => cmd_prep_landmarks(a),
        Command::AlignRate(a) => cmd_align_rate(a),
        Command::Demo(a) => cmd_demo(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({"error": e.kind(), "message": e.to_string()}));
            ExitCode::from(1)
        }
    }
}
