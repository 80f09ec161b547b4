//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use bgprofile::benchmark::{
    assign_backgrounds, background_profiles, prototypes_for, run_contamination, run_polyphony, ContaminationConfig,
    ContaminationDataset, PolyphonyConfig,
};
use bgprofile::eval::{grid_search_tau_per_sample, prototype_distance_analysis, TauGrid};
use bgprofile::oracle::{Oracle, OracleConfig};
use bgprofile::profiles::{adapt, classify, compute_profiles, AdaptationConfig, BackgroundSource, Profile};
use bgprofile::prototypes::{
    build_supervised_centroid, build_supervised_set, build_text_anchor_set, build_tgap_prototype, build_tgap_set,
    PrototypeMode, Provenance, TgapAnchor, TgapConfig,
};
use bgprofile::soundscape::{mix_at_snr, AudioClip, SoundscapeSpec};
use bgprofile::EmbeddingSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Suite {
    failures: usize,
}

impl Suite {
    fn run(&mut self, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) {
        let t = Instant::now();
        let mut outcome = f();
        let elapsed = t.elapsed();
        if let (Ok(detail), Some(limit)) = (&outcome, limit) {
            if elapsed > limit {
                outcome = Err(format!("{detail}; took {elapsed:.2?}, limit {limit:.0?}"));
            }
        }
        match outcome {
            Ok(detail) => println!("PASS  {name}  ({detail}; {elapsed:.2?})"),
            Err(detail) => {
                self.failures += 1;
                println!("FAIL  {name}  ({detail}; {elapsed:.2?})");
            }
        }
    }
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn class_ids(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("c{i:02}")).collect()
}

fn random_profile(rng: &mut ChaCha8Rng, ids: &[String]) -> Profile<f64> {
    Profile::new(ids.to_vec(), ids.iter().map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn subtraction_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0usize;
    for _ in 0..10_000 {
        let ids = class_ids(rng.gen_range(1..=50));
        let ps = random_profile(&mut rng, &ids);
        let pb = random_profile(&mut rng, &ids);
        let tau: f64 = rng.gen_range(0.0..=1.0);
        let out = adapt(&ps, &pb, &AdaptationConfig::new(tau, BackgroundSource::Audio).unwrap()).unwrap();
        let expected: Vec<f64> = ps.scores.iter().zip(&pb.scores).map(|(s, b)| s - tau * b).collect();
        if out.scores.iter().zip(&expected).any(|(a, e)| a.to_bits() != e.to_bits()) || out.class_ids != ids {
            mismatches += 1;
        }
        let zero = adapt(&ps, &pb, &AdaptationConfig::new(0.0, BackgroundSource::Text).unwrap()).unwrap();
        if zero.scores.iter().zip(&ps.scores).any(|(a, s)| a.to_bits() != s.to_bits()) {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("10000 triples, {mismatches} mismatches"))
}

fn argmax_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let grid = TauGrid::default();
    let mut changed = 0usize;
    for _ in 0..1000 {
        let ids = class_ids(rng.gen_range(2..=30));
        let ps = random_profile(&mut rng, &ids);
        let c: f64 = rng.gen_range(-1.0..1.0);
        let pb = Profile::new(ids.clone(), vec![c; ids.len()]).unwrap();
        let base = classify(&ps).unwrap().to_string();
        for &tau in &grid.0 {
            let a = adapt(&ps, &pb, &AdaptationConfig::new(tau, BackgroundSource::Audio).unwrap()).unwrap();
            if classify(&a).unwrap() != base {
                changed += 1;
            }
        }
    }
    check(changed == 0, format!("1000 profiles x {} tau, {changed} changed", grid.0.len()))
}

fn random_signal(rng: &mut ChaCha8Rng, n: usize, rate: u32, peak: f64) -> AudioClip {
    let tones: Vec<(f64, f64, f64)> = (0..rng.gen_range(1..=3))
        .map(|_| (rng.gen_range(40.0..4000.0), rng.gen_range(0.1..1.0), rng.gen_range(0.0..6.3)))
        .collect();
    let total: f64 = tones.iter().map(|t| t.1).sum::<f64>() + 0.2;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / rate as f64;
            let s: f64 = tones.iter().map(|(f, a, ph)| a * (std::f64::consts::TAU * f * t + ph).sin()).sum();
            peak * (s + rng.gen_range(-0.2..0.2)) / total
        })
        .collect();
    AudioClip::new(samples, rate).unwrap()
}

fn power(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum()
}

fn snr_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut clipped = 0usize;
    let mut attenuated = 0usize;
    for i in 0..1000 {
        let rate = [8000u32, 16000, 22050][i % 3];
        let fg_n = rng.gen_range(rate as usize / 20..rate as usize / 4);
        let bg_n = fg_n + rng.gen_range(0..rate as usize / 4);
        let fg_peak = rng.gen_range(0.01..1.0);
        let fg = random_signal(&mut rng, fg_n, rate, fg_peak);
        let bg_peak = rng.gen_range(0.01..1.0);
        let bg = random_signal(&mut rng, bg_n, rate, bg_peak);
        let onset = rng.gen_range(0..=bg_n - fg_n);
        let snr: f64 = rng.gen_range(0.0..=20.0);
        let spec = SoundscapeSpec::new(format!("m{i}"), "fg", "bg", snr, onset as f64 / rate as f64, i as u64);
        let m = mix_at_snr(&fg, &bg, &spec).map_err(|e| e.to_string())?;
        let window = onset..onset + fg_n;
        let noise: Vec<f64> = bg.samples()[window.clone()].iter().map(|b| m.safety_gain * b).collect();
        let signal = m.clip.samples()[window].iter().zip(&noise).map(|(x, b)| x - b);
        let measured = 10.0 * (power(signal) / power(noise.iter().copied())).log10();
        worst = worst.max((measured - snr).abs());
        clipped += m.clip.samples().iter().filter(|s| s.abs() > 1.0).count();
        attenuated += usize::from(m.safety_gain < 1.0);
    }
    check(
        worst <= 0.01 && clipped == 0,
        format!("1000 mixes, max |error| {worst:.2e} dB, {clipped} clipped samples, {attenuated} attenuated"),
    )
}

fn oracle_labeled(oracle: &Oracle, per_class: usize) -> EmbeddingSet<f64> {
    let k = oracle.config().n_classes;
    EmbeddingSet::from_records(
        (0..k)
            .flat_map(|c| (0..per_class).map(move |j| (c, j as u64)))
            .map(|(c, j)| oracle.audio_embedding(c, j).unwrap())
            .collect(),
    )
    .unwrap()
}

fn oracle_prompts(oracle: &Oracle) -> EmbeddingSet<f64> {
    EmbeddingSet::from_records((0..oracle.config().n_classes).map(|c| oracle.text_embedding(c).unwrap()).collect())
        .unwrap()
}

fn tgap_supervised_equivalence() -> Outcome {
    let oracle = Oracle::new(OracleConfig {
        n_classes: 10,
        dim: 64,
        noise_sigma: 0.1,
        gap_magnitude: 0.5,
        seed: 11,
    })
    .unwrap();
    let per_class = 50;
    let labeled = oracle_labeled(&oracle, per_class);
    let anchors = build_text_anchor_set(&oracle_prompts(&oracle)).unwrap();
    let mut worst = 0.0f64;
    for anchor in anchors.iter() {
        let pool = labeled.filter(|e| e.label.as_deref() == Some(anchor.class_id.as_str()));
        let tgap = build_tgap_prototype(TgapAnchor::Prototype(anchor), &pool, &TgapConfig { n_neighbors: per_class })
            .map_err(|e| e.to_string())?;
        let sup = build_supervised_centroid(&anchor.class_id, &labeled).map_err(|e| e.to_string())?;
        for (a, b) in tgap.vector().iter().zip(sup.vector()) {
            worst = worst.max((a - b).abs());
        }
    }
    check(worst <= 1e-9, format!("10 classes, max |diff| {worst:.2e}"))
}

fn gap_reduction_direction() -> Outcome {
    let oracle = Oracle::new(OracleConfig {
        n_classes: 10,
        dim: 64,
        noise_sigma: 0.1,
        gap_magnitude: 0.5,
        seed: 12,
    })
    .unwrap();
    let labeled = oracle_labeled(&oracle, 200);
    let anchors = build_text_anchor_set(&oracle_prompts(&oracle)).unwrap();
    let tgap = build_tgap_set(&anchors, &labeled, &TgapConfig::default()).unwrap();
    let sup = build_supervised_set(&labeled).unwrap();
    let sets: BTreeMap<_, _> = [
        (Provenance::TextAnchor, anchors),
        (Provenance::Tgap, tgap),
        (Provenance::SupervisedCentroid, sup),
    ]
    .into_iter()
    .collect();
    let report = prototype_distance_analysis(&sets, &labeled).map_err(|e| e.to_string())?;
    let mut ok = 0;
    let mut means = [0.0f64; 3];
    for row in report.per_class_prototype_distance.values() {
        let d = [
            row[&Provenance::TextAnchor].unwrap(),
            row[&Provenance::Tgap].unwrap(),
            row[&Provenance::SupervisedCentroid].unwrap(),
        ];
        ok += usize::from(d[0] > d[1] && d[1] > d[2]);
        for (m, v) in means.iter_mut().zip(d) {
            *m += v / 10.0;
        }
    }
    check(
        ok == 10,
        format!(
            "{ok}/10 classes ordered; mean text_anchor {:.4} > tgap {:.4} > supervised {:.4}",
            means[0], means[1], means[2]
        ),
    )
}

fn contamination(mode: PrototypeMode) -> Outcome {
    let cfg = ContaminationConfig::reference();
    let data = ContaminationDataset::<f64>::generate(&cfg).map_err(|e| e.to_string())?;
    let r = run_contamination(&data, mode, &TgapConfig { n_neighbors: cfg.tgap_neighbors }, &TauGrid::default())
        .map_err(|e| e.to_string())?;
    let (b, t, a) = (r.baseline_accuracy, r.text.best_accuracy, r.audio.best_accuracy);
    check(
        a >= b + 0.05 && t >= b && a >= t,
        format!(
            "baseline {b:.4}, text {t:.4} (tau {}), audio {a:.4} (tau {}), audio gain {:+.2} pp",
            r.text.best_tau,
            r.audio.best_tau,
            100.0 * (a - b)
        ),
    )
}

fn polyphony_direction() -> Outcome {
    let cfg = PolyphonyConfig::reference();
    let modes = [PrototypeMode::TextAnchor, PrototypeMode::Tgap, PrototypeMode::Supervised];
    let rows = run_polyphony::<f64>(&cfg, &modes).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for mode in modes {
        let pred: Vec<f64> = rows
            .iter()
            .filter(|r| r.prototype_mode == mode)
            .map(|r| r.pred_classes_per_audio)
            .collect();
        ok &= pred.windows(2).all(|w| w[1] <= w[0]);
        parts.push(format!(
            "{}: {}",
            mode.as_str(),
            pred.iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>().join(" > ")
        ));
    }
    check(ok, format!("threshold {}, Pred C/A {}", cfg.threshold, parts.join("; ")))
}

fn manual_argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

fn grid_search_correctness() -> Outcome {
    let cfg = ContaminationConfig::reference();
    let data = ContaminationDataset::<f64>::generate(&cfg).unwrap().to_storage_precision();
    let protos = prototypes_for(&data, PrototypeMode::TextAnchor, &TgapConfig::default()).unwrap();
    let profiles = compute_profiles(data.test.records(), &protos).unwrap();
    let bgs = background_profiles(&data.background_audio, &protos, BackgroundSource::Audio).unwrap();
    let refs = assign_backgrounds(&data.truths, &bgs).unwrap();
    let truths: Vec<String> = data.truths.iter().map(|t| t.single_label().unwrap().to_string()).collect();
    let grid = TauGrid::default();
    let found = grid_search_tau_per_sample(&profiles, &refs, &truths, &grid, BackgroundSource::Audio)
        .map_err(|e| e.to_string())?;

    let accuracy_at = |tau: f64| {
        let correct = profiles
            .iter()
            .zip(&refs)
            .zip(&truths)
            .filter(|((p, b), t)| {
                let s: Vec<f64> = p.scores.iter().zip(&b.scores).map(|(s, b)| s - tau * b).collect();
                &p.class_ids[manual_argmax(&s)] == *t
            })
            .count();
        correct as f64 / profiles.len() as f64
    };
    let exhaustive: Vec<f64> = grid.0.iter().map(|&t| accuracy_at(t)).collect();
    let mut best = 0;
    for i in 1..exhaustive.len() {
        if exhaustive[i] > exhaustive[best] {
            best = i;
        }
    }
    let single = grid_search_tau_per_sample(&profiles, &refs, &truths, &TauGrid(vec![0.0]), BackgroundSource::Audio)
        .map_err(|e| e.to_string())?;
    let baseline = accuracy_at(0.0);
    check(
        found.accuracy_per_tau == exhaustive && found.best_tau == grid.0[best] && single.best_accuracy == baseline,
        format!(
            "best tau {} (exhaustive {}), grid {{0}} accuracy {} vs baseline {}",
            found.best_tau, grid.0[best], single.best_accuracy, baseline
        ),
    )
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_bgprofile")
}

fn cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(bin()).current_dir(dir).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("`{}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

const EXPERIMENT: &str = r#"{
  "schema_version": 1,
  "audio_store_path": "data/test.atpe",
  "text_store_path": "data/class_prompts.atpe",
  "prototype_mode": "text_anchor",
  "background_mode": "audio",
  "background_store_path": "data/background_audio.atpe",
  "truth_path": "data/truth.jsonl",
  "output_dir": "run"
}
"#;

fn pipeline(dir: &Path, threads: &str) -> Result<(), String> {
    std::fs::write(dir.join("experiment.json"), EXPERIMENT).map_err(|e| e.to_string())?;
    let t = ["--threads", threads];
    cli(dir, &[&t[..], &["oracle", "gen", "--output-dir", "data"]].concat())?;
    cli(dir, &[&t[..], &["prototypes", "build", "--mode", "text", "--prompts", "data/class_prompts.atpe", "--output-dir", "protos"]].concat())?;
    cli(dir, &[&t[..], &["classify", "--config", "experiment.json"]].concat())?;
    cli(dir, &[&t[..], &["adapt", "--config", "experiment.json", "--tau", "0.5"]].concat())?;
    cli(dir, &[&t[..], &["tau-search", "--config", "experiment.json", "--grid", "0:1:0.1"]].concat())?;
    cli(
        dir,
        &[&t[..], &["tau-search", "--config", "experiment.json", "--background", "text", "--background-store", "data/background_text.atpe", "--profiles", "run/profiles.jsonl", "--prototypes", "run/prototypes.atpe", "--output-dir", "run/text"]].concat(),
    )?;
    cli(dir, &[&t[..], &["eval", "--truth", "data/truth.jsonl", "--predictions", "run/predictions.jsonl", "--output-dir", "run/eval_baseline"]].concat())?;
    cli(dir, &[&t[..], &["eval", "--truth", "data/truth.jsonl", "--predictions", "run/adapted_predictions.jsonl", "--output-dir", "run/eval_adapted"]].concat())?;
    cli(dir, &[&t[..], &["gap", "report", "--audio", "data/labeled.atpe", "--text", "data/class_prompts.atpe", "--labeled", "data/labeled.atpe", "--output-dir", "gap"]].concat())?;
    Ok(())
}

fn outputs(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != "run.log") {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn cli_determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    pipeline(a.path(), "1")?;
    pipeline(b.path(), "4")?;
    let (fa, fb) = (outputs(a.path()), outputs(b.path()));
    let json = fa.keys().filter(|p| p.to_string_lossy().contains(".json")).count();
    let differing: Vec<String> = fa
        .keys()
        .chain(fb.keys())
        .filter(|k| fa.get(*k) != fb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    check(
        differing.is_empty() && json > 0,
        format!("{} files ({json} JSON) compared across --threads 1 and 4, differing: {differing:?}", fa.len()),
    )
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

fn cli_matches_library() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    pipeline(dir.path(), "2")?;
    let cfg = ContaminationConfig::reference();
    let data = ContaminationDataset::<f64>::generate(&cfg).unwrap();
    let lib = run_contamination(&data, PrototypeMode::TextAnchor, &TgapConfig::default(), &TauGrid::default()).unwrap();
    let audio = read_json(&dir.path().join("run/tau_search.json"));
    let text = read_json(&dir.path().join("run/text/tau_search.json"));
    let base = read_json(&dir.path().join("run/eval_baseline/report.json"));
    let floats = |v: &serde_json::Value| -> Vec<f64> {
        v["accuracy_per_tau"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
    };
    let ok = floats(&audio) == lib.audio.accuracy_per_tau
        && floats(&text) == lib.text.accuracy_per_tau
        && base["accuracy"].as_f64() == Some(lib.baseline_accuracy);
    check(
        ok,
        format!(
            "CLI baseline {}, audio best {} vs library {}, text best {} vs library {}",
            base["accuracy"], audio["best_accuracy"], lib.audio.best_accuracy, text["best_accuracy"], lib.text.best_accuracy
        ),
    )
}

fn main() {
    let mut s = Suite { failures: 0 };
    let secs = Duration::from_secs;
    s.run("adaptation equals P_s - tau*P_b exactly", Some(secs(5)), subtraction_exactness);
    s.run("constant background never changes the argmax", Some(secs(5)), argmax_invariance);
    s.run("mixing hits the requested SNR within 0.01 dB without clipping", Some(secs(30)), snr_fidelity);
    s.run("TGAP over a full class pool equals the supervised centroid", None, tgap_supervised_equivalence);
    s.run("prototype distance: text_anchor > tgap > supervised for every class", None, gap_reduction_direction);
    s.run("contamination benchmark, text_anchor prototypes", Some(secs(60)), || contamination(PrototypeMode::TextAnchor));
    s.run("contamination benchmark, tgap prototypes", Some(secs(60)), || contamination(PrototypeMode::Tgap));
    s.run("polyphony: Pred C/A non-increasing in C/A", None, polyphony_direction);
    s.run("tau grid search matches exhaustive recomputation", None, grid_search_correctness);
    s.run("CLI oracle pipeline is byte-identical across runs", None, cli_determinism);
    s.run("CLI pipeline reproduces the library benchmark exactly", None, cli_matches_library);
    if s.failures > 0 {
        println!("{} acceptance criteria failed", s.failures);
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
