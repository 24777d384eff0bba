//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs the full synthetic ablation twice (determinism), so
//! expect tens of minutes on one core.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use gazehead_core::audio::{features_from_file, features_to_file, load_features, save_features, FeatureSequence};
use gazehead_core::container::{edit_manifest, TensorFile};
use gazehead_core::corpus::{load_corpus, parse_manifest};
use gazehead_core::generator::{mse_loss, velocity_loss};
use gazehead_core::metrics::{compensation_score, idt_labels, sim_with_gt, CompensationConfig, IdtConfig};
use gazehead_core::motion::{load_motion_file, save_motion_file, MotionSequence};
use gazehead_core::pipeline::{
    cluster_report, embed_sequence_windows, gt_pattern, prepare, run_variant, style_transfer_check, train_style_stage,
    ClusterReport, ExperimentConfig, FrozenEncoder, TransferReport, Variant, VariantResult,
};
use gazehead_core::style::nt_xent_loss;
use gazehead_core::synth::{generate_corpus, SynthConfig};
use gazehead_core::trainer::{finite_difference_check, model_from_checkpoint, Checkpoint, GradCheckModule};
use gazehead_core::Error;
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRADCHECK_BUDGET: Duration = Duration::from_secs(120);
const NT_XENT_EXPECTED: f64 = 2.20574;
const NT_XENT_TOL: f64 = 1e-4;
const IDT_EXHAUSTIVE_MAX_T: usize = 8;
const IDT_RANDOM_MAX_T: usize = 50;
const IDT_RANDOM_PER_T: usize = 40;
const IDT_LONG_T: usize = 500;
const IDT_LONG_COUNT: usize = 200;
const HAND_TOL: f64 = 1e-9;
const FIXATION_BAND: f64 = 0.10;
const SIM_SCORE_MIN: f64 = 0.8;
const PIPELINE_BUDGET: Duration = Duration::from_secs(45 * 60);
const SILHOUETTE_MIN: f64 = 0.2;
const CENTROID_CHANCE_FACTOR: f64 = 2.0;
const TRANSFER_MIN_FRACTION: f64 = 0.7;
const TRANSFER_REF_COS_MAX: f64 = 0.5;

struct Tally {
    failed: Vec<String>,
}

impl Tally {
    fn line(&mut self, id: &str, name: &str, pass: bool, detail: String) {
        println!("criterion {id:<3} {name:<34} {}  {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(id.to_string());
        }
    }
}

fn gradients(t: &mut Tally) {
    let start = Instant::now();
    let mut all = true;
    let mut parts = Vec::new();
    for m in GradCheckModule::ALL {
        match finite_difference_check(m, 0) {
            Ok(r) => {
                all &= r.passed && r.max_rel_err < m.threshold();
                parts.push(format!("{}={:.1e}", m.name(), r.max_rel_err));
            }
            Err(e) => {
                all = false;
                parts.push(format!("{}: {e}", m.name()));
            }
        }
    }
    let elapsed = start.elapsed();
    t.line(
        "1",
        "gradient checks",
        all && elapsed < GRADCHECK_BUDGET,
        format!("{} in {:.1}s", parts.join(" "), elapsed.as_secs_f64()),
    );
}

fn nt_xent_closed_form(t: &mut Tally) {
    // rows 0,1 are anchors, rows 2,3 their partners
    let e = array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
    let (loss, _) = nt_xent_loss::<f64>(e.view(), 1.0).expect("valid batch");
    let exact = 4.0 * (1.0 + 2.0 / std::f64::consts::E).ln();
    t.line(
        "2",
        "NT-Xent closed form",
        (loss - NT_XENT_EXPECTED).abs() < NT_XENT_TOL && (loss - exact).abs() < 1e-12,
        format!("loss {loss:.7} vs {NT_XENT_EXPECTED} (exact {exact:.7})"),
    );
}

fn idt_oracle(t: &mut Tally) {
    let cfg = IdtConfig::default();
    let mut sequences = 0usize;
    let mut mismatched = 0usize;
    let mut check = |g: &Array2<f64>| {
        let fast = idt_labels(g.view(), &cfg).expect("long enough");
        let slow = common::brute_force_idt(g.view(), cfg.disp_max, cfg.min_dur);
        mismatched += fast.iter().zip(&slow).filter(|(a, b)| a != b).count();
        sequences += 1;
    };
    for len in cfg.min_dur..=IDT_EXHAUSTIVE_MAX_T {
        for code in 0..common::ALPHABET.len().pow(len as u32) {
            check(&common::alphabet_sequence(code, len));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for len in IDT_EXHAUSTIVE_MAX_T + 1..=IDT_RANDOM_MAX_T {
        for _ in 0..IDT_RANDOM_PER_T {
            check(&common::random_gaze(&mut rng, len));
        }
    }
    for _ in 0..IDT_LONG_COUNT {
        check(&common::random_gaze(&mut rng, IDT_LONG_T));
    }
    t.line(
        "3",
        "I-DT brute-force equivalence",
        mismatched == 0,
        format!("{sequences} sequences, {mismatched} mismatched frames"),
    );
}

fn metric_hand_cases(t: &mut Tally) {
    let cfg = CompensationConfig::default();
    let comp = |h: [f64; 2], e: [f64; 2]| {
        compensation_score(array![h].view(), array![e].view(), &cfg).expect("matching shapes")
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gt = Array2::from_shape_fn((40, 7), |_| rng.random_range(-20.0..20.0));
    let offset = gt.mapv(|v| v + 1.0);
    let shifted = gt.mapv(|v| v + 12.375);
    let cases = [
        ("comp zeros", comp([0.0, 0.0], [0.0, 0.0]), 0.0),
        ("comp opposed", comp([40.0, 0.0], [-10.0, 0.0]), 1.0),
        ("comp gap", comp([22.0, 0.0], [0.0, 0.0]), 0.0),
        ("mse offset", mse_loss(offset.view(), gt.view()).expect("shapes"), 7.0),
        ("vel translation", velocity_loss(shifted.view(), gt.view()).expect("shapes"), 0.0),
        ("sim identical", sim_with_gt(0.6113, 0.6113, -0.3366, -0.3366), 1.0),
        ("sim arithmetic", sim_with_gt(0.5, 0.6, -0.30, -0.25), 0.85),
    ];
    let worst = cases.iter().map(|(_, got, want)| (got - want).abs()).fold(0.0, f64::max);
    let failing: Vec<&str> = cases
        .iter()
        .filter(|(_, got, want)| (got - want).abs() > HAND_TOL)
        .map(|(n, _, _)| *n)
        .collect();
    t.line(
        "4",
        "metric hand cases",
        failing.is_empty(),
        format!("{} cases, worst |err| {worst:.1e} {failing:?}", cases.len()),
    );
}

struct SweepOutcome {
    style: Checkpoint,
    gt_silhouette: ClusterReport,
    variants: Vec<VariantResult>,
    gt_fixation: f64,
    pred_cluster: ClusterReport,
    transfer: TransferReport,
    elapsed: Duration,
}

/// Settings of the synthetic ablation. With same-speaker windows acting as
/// negatives, a low temperature pushes the encoder toward telling individual
/// windows apart; a soft temperature keeps the speaker as the dominant factor.
fn sweep_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.style_train.tau = 2.0;
    cfg.style_train.epochs = 16;
    cfg.generator_train.epochs = 40;
    cfg
}

fn variants() -> [Variant; 3] {
    [
        Variant::new("Base", 0, 1.0),
        Variant::new("SE-64", 64, 1.0),
        Variant::new("SE-64-VEL", 64, 0.5),
    ]
}

fn sweep(dir: &std::path::Path) -> gazehead_core::Result<SweepOutcome> {
    let start = Instant::now();
    let cfg = sweep_config();
    let synth = SynthConfig {
        n_speakers: 4,
        sessions_per_speaker: 2,
        session_seconds: 60.0,
        seed: 1,
    };
    let manifest = generate_corpus(&synth, dir)?;
    let sessions = load_corpus(&manifest, &cfg.mel)?;
    let corpus = prepare(&sessions, &cfg.split)?;
    let style = train_style_stage(&corpus, cfg.style, cfg.style_train, None)?.checkpoint;
    let evaluator = FrozenEncoder::from_checkpoint(&style)?;

    let mut gt_records = Vec::new();
    for s in &corpus.test {
        gt_records.extend(embed_sequence_windows(&evaluator, &s.motion, "gt")?);
    }
    let gt_silhouette = cluster_report(&gt_records, &gt_records)?;

    let mut variants_out = Vec::new();
    for v in variants() {
        let r = run_variant(&corpus, &cfg, &v, &style, &evaluator)?;
        println!(
            "  trained {:<10} mae {:.3} vel {:.4} ce {:.4} fixation {:.3} compScore {:.3} simScore {:.3} ({:.0}s)",
            v.name,
            r.report.mae,
            r.report.vel,
            r.report.ce.unwrap_or(f64::NAN),
            r.report.fixation,
            r.report.comp_score,
            r.report.sim_score,
            start.elapsed().as_secs_f64()
        );
        variants_out.push(r);
    }
    let vel_variant = &variants_out[2];
    let (gt_fixation, gt_comp) = gt_pattern(&vel_variant.generated, &cfg.metrics)?;
    println!("  ground truth fixation {gt_fixation:.3} compScore {gt_comp:.3}");

    let mut pred_records = Vec::new();
    for g in &vel_variant.generated {
        pred_records.extend(embed_sequence_windows(&evaluator, &g.pred, "pred")?);
    }
    let pred_cluster = cluster_report(&gt_records, &pred_records)?;
    let model = model_from_checkpoint(&vel_variant.checkpoint)?;
    let transfer = style_transfer_check(&model, &evaluator, &corpus.test, cfg.threads)?;
    Ok(SweepOutcome {
        style,
        gt_silhouette,
        variants: variants_out,
        gt_fixation,
        pred_cluster,
        transfer,
        elapsed: start.elapsed(),
    })
}

fn sweep_fingerprint(o: &SweepOutcome) -> gazehead_core::Result<Vec<Vec<u8>>> {
    let mut out = vec![o.style.to_bytes()?];
    for v in &o.variants {
        out.push(v.checkpoint.to_bytes()?);
        out.push(v.eval_json()?.into_bytes());
    }
    Ok(out)
}

fn end_to_end(t: &mut Tally) {
    let dirs = [tempfile::tempdir().expect("tempdir"), tempfile::tempdir().expect("tempdir")];
    let first = match sweep(dirs[0].path()) {
        Ok(o) => o,
        Err(e) => {
            for (id, name) in [
                ("5a", "CE(SE-64) < CE(Base)"),
                ("5b", "Vel(lambda<1) < Vel(lambda=1)"),
                ("5c", "fixation band and simScore"),
                ("5", "ablation runtime"),
                ("6", "style clustering"),
                ("7", "style transfer"),
                ("8", "determinism"),
            ] {
                t.line(id, name, false, format!("pipeline error: {e}"));
            }
            return;
        }
    };
    let [base, se, vel] = [&first.variants[0].report, &first.variants[1].report, &first.variants[2].report];
    let (ce_base, ce_se) = (base.ce.unwrap_or(f64::NAN), se.ce.unwrap_or(f64::NAN));
    t.line("5a", "CE(SE-64) < CE(Base)", ce_se < ce_base, format!("{ce_se:.4} vs {ce_base:.4}"));
    t.line(
        "5b",
        "Vel(lambda<1) < Vel(lambda=1)",
        vel.vel < se.vel,
        format!("{:.5} vs {:.5} deg/frame", vel.vel, se.vel),
    );
    let fix_gap = (vel.fixation - first.gt_fixation).abs();
    t.line(
        "5c",
        "fixation band and simScore",
        fix_gap <= FIXATION_BAND && vel.sim_score >= SIM_SCORE_MIN,
        format!(
            "fixation {:.3} vs GT {:.3} (gap {:.1}pp), simScore {:.3} (min {SIM_SCORE_MIN})",
            vel.fixation,
            first.gt_fixation,
            100.0 * fix_gap,
            vel.sim_score
        ),
    );
    t.line(
        "5",
        "ablation runtime",
        first.elapsed < PIPELINE_BUDGET,
        format!("{:.0}s (budget {}s)", first.elapsed.as_secs_f64(), PIPELINE_BUDGET.as_secs()),
    );
    let c = &first.pred_cluster;
    t.line(
        "6",
        "style clustering",
        first.gt_silhouette.silhouette > SILHOUETTE_MIN && c.centroid_accuracy >= CENTROID_CHANCE_FACTOR * c.chance,
        format!(
            "silhouette {:.3} (min {SILHOUETTE_MIN}), predicted centroid accuracy {:.3} (chance {:.3})",
            first.gt_silhouette.silhouette, c.centroid_accuracy, c.chance
        ),
    );
    let tr = &first.transfer;
    t.line(
        "7",
        "style transfer",
        tr.reference_cosine < TRANSFER_REF_COS_MAX && tr.fraction >= TRANSFER_MIN_FRACTION,
        format!(
            "references {} / {} cos {:.3}, own-closer {}/{} = {:.3}",
            tr.reference_a, tr.reference_b, tr.reference_cosine, tr.own_closer, tr.windows, tr.fraction
        ),
    );
    let second = sweep(dirs[1].path());
    let (pass, detail) = match (sweep_fingerprint(&first), second.and_then(|s| sweep_fingerprint(&s))) {
        (Ok(a), Ok(b)) => {
            let same = a.iter().zip(&b).filter(|(x, y)| x == y).count();
            (a == b, format!("{same}/{} artifacts bitwise identical", a.len()))
        }
        (Err(e), _) | (_, Err(e)) => (false, format!("rerun failed: {e}")),
    };
    t.line("8", "determinism", pass, detail);
}

fn round_trips(t: &mut Tally) {
    let dir = tempfile::tempdir().expect("tempdir");
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut notes = Vec::new();
    let mut ok = true;

    let frames = Array2::from_shape_fn((57, 7), |_| rng.random_range(-39.9..39.9) / 3.0);
    let mut seq = MotionSequence::new(frames, 25, "spk", "sess").expect("valid motion");
    seq.start_frame = 12;
    let path = dir.path().join("m.csv");
    let motion_ok = save_motion_file(&seq, &path, &["note".into()]).is_ok()
        && load_motion_file(&path).map(|b| b == seq).unwrap_or(false);
    ok &= motion_ok;
    notes.push(format!("motion {motion_ok}"));

    let feats = FeatureSequence::new(Array2::from_shape_fn((33, 26), |_| rng.random_range(-12.0f32..3.0)))
        .expect("valid features");
    let fpath = dir.path().join("f.feat");
    let feats_ok = save_features(&feats, &fpath).is_ok()
        && load_features(&fpath).map(|b| b == feats).unwrap_or(false)
        && features_from_file(&TensorFile::from_bytes(&features_to_file(&feats).to_bytes().expect("encode")).expect("decode"))
            .map(|b| b == feats)
            .unwrap_or(false);
    ok &= feats_ok;
    notes.push(format!("features {feats_ok}"));

    let mut file = TensorFile::new("generator", serde_json::json!({"k": 1}));
    file.push("w", vec![3, 4], (0..12).map(|_| rng.random::<f32>()).collect(), true);
    file.push("b", vec![4], (0..4).map(|_| rng.random::<f32>()).collect(), false);
    let bytes = file.to_bytes().expect("encode");
    let container_ok = TensorFile::from_bytes(&bytes).map(|b| b == file && b.to_bytes().ok() == Some(bytes.clone())).unwrap_or(false);
    ok &= container_ok;
    notes.push(format!("container {container_ok}"));

    let wrong_shape = edit_manifest(&bytes, |v| v["tensors"][0]["shape"] = serde_json::json!([3, 5])).expect("edit");
    let shape_err = matches!(TensorFile::from_bytes(&wrong_shape), Err(Error::Format(m)) if m.contains("tensor w"));
    let future = edit_manifest(&bytes, |v| v["format_version"] = serde_json::json!("2")).expect("edit");
    let version_err = matches!(TensorFile::from_bytes(&future), Err(Error::Version { .. }));
    let truncated_err = matches!(TensorFile::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Format(_)));
    let bad_line = "{\"motion_path\":\"a.csv\",\"audio_path\":\"a.wav\",\"speaker_id\":\"s\",\"session_id\":\"x\"}\n{\"motion_path\":\"b.csv\"}\n";
    let manifest_err = matches!(parse_manifest(bad_line), Err(Error::Parse { line: 2, .. }));
    let dup = "{\"motion_path\":\"a.csv\",\"audio_path\":\"a.wav\",\"speaker_id\":\"s\",\"session_id\":\"x\"}\n".repeat(2);
    let dup_err = parse_manifest(&dup).is_err();
    let errors_ok = shape_err && version_err && truncated_err && manifest_err && dup_err;
    ok &= errors_ok;
    notes.push(format!(
        "errors shape={shape_err} version={version_err} truncated={truncated_err} manifest-line={manifest_err} duplicate={dup_err}"
    ));

    t.line("9", "format round-trips and corruption", ok, notes.join(", "));
}

fn main() -> ExitCode {
    let mut t = Tally { failed: Vec::new() };
    gradients(&mut t);
    nt_xent_closed_form(&mut t);
    idt_oracle(&mut t);
    metric_hand_cases(&mut t);
    round_trips(&mut t);
    end_to_end(&mut t);
    if t.failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed {:?}", t.failed);
        ExitCode::FAILURE
    }
}
