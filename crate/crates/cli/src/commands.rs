use std::path::{Path, PathBuf};

use gazehead_core::audio::{load_wav, log_mel, save_features, MelConfig};
use gazehead_core::corpus::{load_corpus, load_manifest, manifest_base, resolve, save_manifest, Session};
use gazehead_core::generator::{GenerationConfig, StyleMode};
use gazehead_core::metrics::{
    aggregate, evaluate_sequence, format_table, CompensationConfig, EvalReport, IdtConfig, MetricConfig,
    WindowEmbedder,
};
use gazehead_core::motion::{load_motion_file, save_motion_file, MotionSequence};
use gazehead_core::pipeline::{
    cluster_report, embed_sequence_windows, generate_all_with, par_map, prepare, train_generator_stage,
    train_style_stage, EmbeddingRecord, FrozenEncoder, SeedMode, SplitConfig,
};
use gazehead_core::style::StyleEncoderConfig;
use gazehead_core::synth::{generate_corpus, SynthConfig};
use gazehead_core::trainer::{
    finite_difference_check, load_checkpoint, model_from_checkpoint, save_checkpoint, GradCheckModule, StepRecord,
    TrainConfig,
};
use gazehead_core::{Error, Result};

use crate::args::*;
use crate::config::{create_run_dir, write_text};

pub fn run(cli: &Cli) -> Result<()> {
    let common = cli.command.common();
    let run_dir = create_run_dir(&common.runs_dir, cli.command.name())?;
    let resolved = serde_json::to_string_pretty(&cli.command)?;
    write_text(&run_dir.join("config.json"), &(resolved + "\n"))?;
    println!("run directory: {}", run_dir.display());
    let threads = common.threads.max(1);
    match &cli.command {
        Command::Synth(a) => synth(a, &run_dir),
        Command::ExtractFeatures(a) => extract_features(a, threads),
        Command::PretrainStyle(a) => pretrain_style(a, &run_dir),
        Command::Train(a) => train(a, &run_dir),
        Command::Generate(a) => generate(a, &run_dir, threads),
        Command::TransferStyle(a) => transfer(a, &run_dir, threads),
        Command::Evaluate(a) => evaluate(a, &run_dir, threads),
        Command::Embed(a) => embed(a, &run_dir),
        Command::Gradcheck(a) => gradcheck(a, &run_dir),
    }
}

fn split_cfg(s: &SplitArgs) -> SplitConfig {
    SplitConfig {
        train_frac: s.train_frac,
        angle_bound: s.angle_bound,
    }
}

fn write_log(path: &Path, log: &[StepRecord]) -> Result<()> {
    let mut text = String::new();
    for r in log {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    write_text(path, &text)
}

fn synth(a: &SynthArgs, run_dir: &Path) -> Result<()> {
    let cfg = SynthConfig {
        n_speakers: a.speakers,
        sessions_per_speaker: a.sessions,
        session_seconds: a.seconds,
        seed: a.seed,
    };
    let out = a.out.clone().unwrap_or_else(|| run_dir.join("corpus"));
    let manifest = generate_corpus(&cfg, &out)?;
    println!("manifest: {}", manifest.display());
    Ok(())
}

fn extract_features(a: &ExtractArgs, threads: usize) -> Result<()> {
    let base = manifest_base(&a.manifest);
    let mut entries = load_manifest(&a.manifest)?;
    let mel = MelConfig::default();
    let done = par_map(&entries, threads, |e| -> Result<String> {
        let clip = load_wav(resolve(&base, &e.audio_path))?;
        let cfg = if clip.sample_rate == 16_000 {
            mel
        } else {
            MelConfig {
                fmax: mel.fmax.min(clip.sample_rate as f64 / 2.0),
                ..MelConfig::for_rate(clip.sample_rate)?
            }
        };
        let feats = log_mel(&clip, &cfg)?;
        let rel = format!("features/{}.feat", e.session_id);
        let path = base.join(&rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|err| Error::Io {
                path: dir.to_path_buf(),
                source: err,
            })?;
        }
        save_features(&feats, &path)?;
        println!("{}: {} frames x {}", e.session_id, feats.len(), feats.dim());
        Ok(rel)
    });
    for (e, rel) in entries.iter_mut().zip(done) {
        e.features_path = Some(rel?);
    }
    let out = a.out_manifest.clone().unwrap_or_else(|| a.manifest.clone());
    save_manifest(&entries, &out)?;
    println!("manifest: {}", out.display());
    Ok(())
}

fn load_sessions(manifest: &Path) -> Result<Vec<Session>> {
    load_corpus(manifest, &MelConfig::default())
}

fn pretrain_style(a: &StyleArgs, run_dir: &Path) -> Result<()> {
    let sessions = load_sessions(&a.manifest)?;
    let corpus = prepare(&sessions, &split_cfg(&a.split))?;
    let enc = StyleEncoderConfig {
        window: a.window,
        style_dim: a.style_dim,
        n_layers: a.layers,
        n_heads: a.heads,
        ff_dim: a.ff_dim,
    };
    let train = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        seed: a.seed,
        clip_norm: a.clip_norm,
        steps_per_epoch: a.steps_per_epoch,
        tau: a.tau,
        gap_min: a.gap_min,
        schedule: a.lr_schedule.into(),
    };
    let resume = a.resume.as_ref().map(load_checkpoint).transpose()?;
    let out = train_style_stage(&corpus, enc, train, resume.as_ref())?;
    let path = a.out.clone().unwrap_or_else(|| run_dir.join("style.ckpt"));
    save_checkpoint(&out.checkpoint, &path)?;
    write_log(&run_dir.join("train_log.jsonl"), &out.log)?;
    if let (Some(first), Some(last)) = (out.log.first(), out.log.last()) {
        println!("contrastive loss {:.4} -> {:.4} over {} steps", first.loss, last.loss, out.log.len());
    }
    println!("checkpoint: {}", path.display());
    Ok(())
}

fn train(a: &TrainArgs, run_dir: &Path) -> Result<()> {
    let sessions = load_sessions(&a.manifest)?;
    let mut corpus = prepare(&sessions, &split_cfg(&a.split))?;
    let style = match (a.style_dim, &a.style_ckpt) {
        (0, _) => None,
        (_, Some(p)) => Some(load_checkpoint(p)?),
        (_, None) => return Err(Error::InvalidArgument("--style-ckpt is required unless --style-dim 0".into())),
    };
    if let Some(ck) = &style {
        corpus.stats = ck.meta.stats;
    }
    let feature_dim = corpus.train.first().map(|s| s.features.dim()).unwrap_or(MelConfig::default().n_mels);
    let gen = GenerationConfig {
        past: a.past,
        future: a.future,
        model_dim: a.model_dim,
        style_dim: a.style_dim,
        lambda: a.lambda,
        lstm_layers: a.lstm_layers,
        lstm_hidden: a.lstm_hidden,
        feature_dim,
    };
    let train = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        seed: a.seed,
        clip_norm: a.clip_norm,
        schedule: a.lr_schedule.into(),
        ..TrainConfig::generator_default()
    };
    let resume = a.resume.as_ref().map(load_checkpoint).transpose()?;
    let out = train_generator_stage(&corpus, gen, train, style.as_ref(), resume.as_ref())?;
    let path = a.out.clone().unwrap_or_else(|| run_dir.join("generator.ckpt"));
    save_checkpoint(&out.checkpoint, &path)?;
    write_log(&run_dir.join("train_log.jsonl"), &out.log)?;
    if let (Some(first), Some(last)) = (out.log.first(), out.log.last()) {
        println!("generator loss {:.5} -> {:.5} over {} steps", first.loss, last.loss, out.log.len());
    }
    println!("checkpoint: {}", path.display());
    Ok(())
}

fn seed_mode(s: SeedArg) -> SeedMode {
    match s {
        SeedArg::Gt => SeedMode::Gt,
        SeedArg::MeanPose => SeedMode::MeanPose,
    }
}

fn test_segments(manifest: &Path, split: &SplitArgs) -> Result<Vec<Session>> {
    load_sessions(manifest)?
        .iter()
        .map(|s| s.split(split.train_frac).map(|(_, test)| test))
        .collect()
}

fn write_generated(out: &Path, items: &[MotionSequence], comments: &[String]) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    for seq in items {
        let path = out.join(format!("{}.csv", seq.session_id));
        save_motion_file(seq, &path, comments)?;
    }
    Ok(())
}

fn generate(a: &GenerateArgs, run_dir: &Path, threads: usize) -> Result<()> {
    let model = model_from_checkpoint(&load_checkpoint(&a.ckpt)?)?;
    let tests = test_segments(&a.manifest, &a.split)?;
    let items = generate_all_with(&model, &tests, &model.default_style_mode(), seed_mode(a.seed_window), threads)?;
    let out = a.out.clone().unwrap_or_else(|| run_dir.join("generated"));
    let preds: Vec<MotionSequence> = items.into_iter().map(|g| g.pred).collect();
    write_generated(&out, &preds, &[])?;
    println!("{} sequences written to {}", preds.len(), out.display());
    Ok(())
}

fn transfer(a: &TransferArgs, run_dir: &Path, threads: usize) -> Result<()> {
    let model = model_from_checkpoint(&load_checkpoint(&a.ckpt)?)?;
    let tests = test_segments(&a.manifest, &a.split)?;
    let reference = match tests.iter().find(|t| t.entry.session_id == a.reference) {
        Some(t) => t.motion.clone(),
        None if Path::new(&a.reference).exists() => load_motion_file(&a.reference)?,
        None => {
            return Err(Error::InvalidArgument(format!(
                "reference {:?} is neither a session id nor a motion file",
                a.reference
            )))
        }
    };
    let style = model.reference_style(&reference)?;
    let items = generate_all_with(&model, &tests, &StyleMode::Fixed(style), seed_mode(a.seed_window), threads)?;
    let out = a.out.clone().unwrap_or_else(|| run_dir.join("transfer"));
    let preds: Vec<MotionSequence> = items.into_iter().map(|g| g.pred).collect();
    write_generated(&out, &preds, &[format!("reference={}", a.reference)])?;
    println!("{} sequences written to {}", preds.len(), out.display());
    Ok(())
}

/// Motion files in a directory, sorted by name.
fn motion_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut files: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    Ok(files)
}

fn evaluate(a: &EvaluateArgs, run_dir: &Path, threads: usize) -> Result<()> {
    let sessions = load_sessions(&a.manifest)?;
    let encoder = a
        .style_ckpt
        .as_ref()
        .map(|p| load_checkpoint(p).and_then(|ck| FrozenEncoder::from_checkpoint(&ck)))
        .transpose()?;
    let cfg = MetricConfig {
        idt: IdtConfig {
            disp_max: a.disp_max,
            min_dur: a.min_dur,
        },
        compensation: CompensationConfig {
            normalize_head: a.normalize_comp,
            ..CompensationConfig::default()
        },
        bas_sigma: a.bas_sigma,
    };
    let mut warnings = Vec::new();
    let mut pairs = Vec::new();
    for path in motion_files(&a.pred_dir)? {
        let pred = load_motion_file(&path)?;
        let Some(s) = sessions.iter().find(|s| s.entry.session_id == pred.session_id) else {
            warnings.push(format!("{}: no ground truth for session {:?}", path.display(), pred.session_id));
            continue;
        };
        let end = pred.start_frame + pred.len();
        if end > s.len() {
            warnings.push(format!(
                "{}: frames {}..{end} exceed session length {}",
                path.display(),
                pred.start_frame,
                s.len()
            ));
            continue;
        }
        let gt = s.slice(pred.start_frame, end);
        pairs.push((pred.session_id.clone(), pred, gt));
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if pairs.is_empty() {
        return Err(Error::Insufficient("no predicted sequence pairs with the manifest".into()));
    }
    let reports = par_map(&pairs, threads, |(id, pred, gt)| {
        evaluate_sequence(
            pred,
            &gt.motion,
            &gt.features,
            encoder.as_ref().map(|e| e as &dyn WindowEmbedder),
            &cfg,
        )
        .map(|r| (id.clone(), r))
    })
    .into_iter()
    .collect::<Result<Vec<(String, EvalReport)>>>()?;
    let agg = aggregate(&reports.iter().map(|(_, r)| r.clone()).collect::<Vec<_>>())?;
    let out = a.out.clone().unwrap_or_else(|| run_dir.to_path_buf());
    for (id, r) in &reports {
        write_text(&out.join("reports").join(format!("{id}.json")), &(serde_json::to_string_pretty(r)? + "\n"))?;
    }
    write_text(&out.join("aggregate.json"), &(serde_json::to_string_pretty(&agg)? + "\n"))?;
    let mut rows = reports.clone();
    rows.push(("aggregate".into(), agg));
    let table = format_table(&rows);
    write_text(&out.join("table.txt"), &table)?;
    print!("{table}");
    println!("warnings: {}", warnings.len());
    Ok(())
}

fn embed(a: &EmbedArgs, run_dir: &Path) -> Result<()> {
    let encoder = FrozenEncoder::from_checkpoint(&load_checkpoint(&a.style_ckpt)?)?;
    let sessions = load_sessions(&a.manifest)?;
    let mut gt: Vec<EmbeddingRecord> = Vec::new();
    for s in &sessions {
        let seq = match a.span {
            SpanArg::All => s.motion.clone(),
            SpanArg::Test => s.split(a.split.train_frac)?.1.motion,
        };
        gt.extend(embed_sequence_windows(&encoder, &seq, "gt")?);
    }
    let mut pred = Vec::new();
    if let Some(dir) = &a.pred_dir {
        for path in motion_files(dir)? {
            pred.extend(embed_sequence_windows(&encoder, &load_motion_file(&path)?, "pred")?);
        }
    }
    let out = a.out.clone().unwrap_or_else(|| run_dir.to_path_buf());
    let mut text = String::new();
    for r in gt.iter().chain(&pred) {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    write_text(&out.join("embeddings.jsonl"), &text)?;
    let queries = if pred.is_empty() { &gt } else { &pred };
    match cluster_report(&gt, queries) {
        Ok(c) => {
            write_text(&out.join("cluster.json"), &(serde_json::to_string_pretty(&c)? + "\n"))?;
            println!(
                "silhouette {:.4}  centroid accuracy {:.4} (chance {:.4})",
                c.silhouette, c.centroid_accuracy, c.chance
            );
        }
        Err(e) => eprintln!("warning: no cluster report: {e}"),
    }
    println!("{} embeddings written", gt.len() + pred.len());
    Ok(())
}

fn gradcheck(a: &GradcheckArgs, run_dir: &Path) -> Result<()> {
    let modules: Vec<GradCheckModule> = match &a.module {
        Some(m) => vec![m.parse()?],
        None => GradCheckModule::ALL.to_vec(),
    };
    let mut reports = Vec::new();
    for m in modules {
        let r = finite_difference_check(m, a.seed)?;
        println!(
            "{:<18} max_rel_err {:.3e}  threshold {:.0e}  {}",
            m.name(),
            r.max_rel_err,
            r.threshold,
            if r.passed { "PASS" } else { "FAIL" }
        );
        reports.push(r);
    }
    write_text(&run_dir.join("gradcheck.json"), &(serde_json::to_string_pretty(&reports)? + "\n"))?;
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.module.name()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("gradient check failed for {}", failed.join(", "))))
    }
}
