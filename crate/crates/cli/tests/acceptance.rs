//! Acceptance run: one PASS/FAIL line per criterion.

use std::f64::consts::{LN_10, PI};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use acoustic_sim::array::tdoa_quantized;
use acoustic_sim::channel::{compose_cir, ReverbSpec};
use acoustic_sim::dataset::{
    format_prompt, read_manifest, render_answer, AnswerKind, Datapoint, ManifestEntry, QaForm, QaPair,
};
use acoustic_sim::doppler::{apply_doppler, DopplerSpec};
use acoustic_sim::dsp::{fft_convolve, gaussian_noise, Signal, FS, SPEED_OF_SOUND, STFT_BINS, STFT_HOP};
use acoustic_sim::features::extract_features;
use acoustic_sim::rng;
use acoustic_sim::scenario::{
    render, sample_channel, sample_scenario, GroundTruth, MultipathClass, SnrPolicy, SourceRef, Task,
};
use acoustic_sim::sources::{gen_chirp, ChirpSpec, SourcePool};
use acoustic_sim::verify::{
    detect_los, distance_from_tof, estimate_rt60, estimate_tdoa_xcorr, estimate_tof_matched, score_predictions,
    Prediction, MIN_TDOA_SEARCH,
};
use rand::Rng;
use sha2::{Digest, Sha256};

type Verdict = Result<String, String>;

fn check(cond: bool, msg: String) -> Verdict {
    if cond {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn pool() -> SourcePool {
    SourcePool::synthetic(2024, 16, 2.0).unwrap()
}

/// 1. Reverberation time of a uniform tail.
fn rt60_relation() -> Verdict {
    let rt = |lambda: f64| estimate_rt60(&compose_cir(&[], Some(&ReverbSpec::uniform(lambda, 0.0)), 17).unwrap()).unwrap();
    let (slow, fast) = (rt(1.5), rt(60.0));
    let expect = |l: f64| 3.0 * LN_10 / (2.0 * l);
    check(
        (1.5..=2.9).contains(&slow) && (0.038..=0.075).contains(&fast),
        format!(
            "RT60(1.5) = {slow:.3} s (closed form {:.3}), RT60(60) = {fast:.4} s (closed form {:.4})",
            expect(1.5),
            expect(60.0)
        ),
    )
}

/// Frequency of the strongest component near `around`, from a Hann-windowed
/// DFT scanned on a coarse then a fine grid.
fn tone_peak(x: &[f64], around: f64, span: f64) -> f64 {
    let n = x.len();
    let w: Vec<f64> = (0..n)
        .map(|i| x[i] * (0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos()))
        .collect();
    let power = |f: f64| {
        let (mut re, mut im) = (0.0, 0.0);
        for (i, v) in w.iter().enumerate() {
            let ph = 2.0 * PI * f * i as f64 / FS;
            re += v * ph.cos();
            im -= v * ph.sin();
        }
        re * re + im * im
    };
    let scan = |lo: f64, hi: f64, step: f64| {
        let mut best = (lo, f64::MIN);
        let mut f = lo;
        while f <= hi {
            let p = power(f);
            if p > best.1 {
                best = (f, p);
            }
            f += step;
        }
        best.0
    };
    let coarse = scan(around - span, around + span, 1.0);
    scan(coarse - 1.0, coarse + 1.0, 0.01)
}

/// 2. Tone shift under the Doppler time map.
fn doppler_fidelity() -> Verdict {
    let tone = Signal::new((0..32_000).map(|i| 0.5 * (2.0 * PI * 1000.0 * i as f64 / FS).sin()).collect()).unwrap();
    let mut worst: f64 = 0.0;
    let mut at_50 = 0.0;
    for v in [-50.0, -34.3, 0.0, 25.0, 50.0] {
        let moved = apply_doppler(&tone, &DopplerSpec::new(v, 1.0).unwrap()).unwrap();
        let s = moved.samples();
        let f = tone_peak(&s[800..s.len() - 800], 1000.0, 200.0);
        let shift = 100.0 * (f / 1000.0 - 1.0);
        let expected = -100.0 * v / SPEED_OF_SOUND;
        worst = worst.max((shift - expected).abs());
        if v == 50.0 {
            at_50 = shift;
        }
    }
    check(
        worst <= 0.5 && (at_50.abs() - 14.58).abs() < 0.01,
        format!("worst deviation {worst:.4} pct-points; shift at 50 m/s = {at_50:.3}%"),
    )
}

/// 3. TDoA recovered from rendered stereo audio.
fn tdoa_closure() -> Verdict {
    let p = pool();
    let run = |snr: SnrPolicy| {
        let mut exact = 0;
        let mut abs_err = 0.0;
        for i in 0..200 {
            let inst = sample_scenario(Task::DoaEstimation, 31, i, &p, snr).unwrap();
            let out = render(&inst, &p).unwrap();
            let truth = tdoa_quantized(inst.array.as_ref().unwrap());
            let lag = estimate_tdoa_xcorr(&out.channels[0], &out.channels[1], MIN_TDOA_SEARCH).unwrap();
            exact += usize::from(lag == truth);
            abs_err += (lag - truth).abs() as f64;
        }
        (exact as f64 / 200.0, abs_err / 200.0)
    };
    let (rate, _) = run(SnrPolicy::Noiseless);
    let (_, mae) = run(SnrPolicy::Fixed { db: 10.0 });
    check(
        rate >= 0.99 && mae <= 1.0,
        format!("noiseless exact rate {rate:.3}; MAE at 10 dB {mae:.3} samples"),
    )
}

/// 4. Worked ranging example and randomized ranging scenes.
fn range_closure() -> Verdict {
    let spec = ChirpSpec {
        f0_hz: 2000.0,
        f1_hz: 6000.0,
        duration_s: 0.02,
        amplitude: 0.5,
    };
    let pulse = gen_chirp(&spec).unwrap();
    let tof_ms = 59.0;
    let tof_n = (tof_ms / 1000.0 * FS).round() as usize;
    let mut rx = Signal::zeros(16_000);
    rx.mix_at(pulse.samples(), 1600);
    rx.mix_at(pulse.scaled(0.4).samples(), 1600 + tof_n);
    let est = estimate_tof_matched(&rx, &pulse).unwrap();
    let distance = distance_from_tof(est as f64 * 1000.0 / FS, SPEED_OF_SOUND).unwrap();
    let worked = est == 944 && (distance - 10.1).abs() <= 0.05;

    let p = pool();
    let mut within = 0;
    for i in 0..200 {
        let inst = sample_scenario(Task::RangeEstimation, 47, i, &p, SnrPolicy::Noiseless).unwrap();
        let out = render(&inst, &p).unwrap();
        let GroundTruth::Range { tof_samples, .. } = out.ground_truth else { unreachable!() };
        let est = estimate_tof_matched(&out.channels[0], &inst.reference_pulse().unwrap()).unwrap();
        within += usize::from(est.abs_diff(tof_samples) <= 1);
    }
    let rate = within as f64 / 200.0;
    check(
        worked && rate >= 0.99,
        format!("worked example {est} samples -> {distance:.4} m; randomized within +/-1: {rate:.3}"),
    )
}

/// 5. LOS presence from the first-arrival energy ratio.
fn los_separability() -> Verdict {
    let (mut pos, mut neg, mut correct) = (0, 0, 0);
    let mut i = 0;
    while pos + neg < 400 {
        let seed = acoustic_sim::scenario::scenario_seed(Task::LosDetection, 53, i);
        i += 1;
        let inst = sample_channel(Task::LosDetection, seed, SnrPolicy::Noiseless).unwrap();
        let truth = inst.los.is_some();
        if (truth && pos == 200) || (!truth && neg == 200) {
            continue;
        }
        if truth {
            pos += 1;
        } else {
            neg += 1;
        }
        correct += usize::from(detect_los(&inst.cir().unwrap()).unwrap() == truth);
    }
    let bca = correct as f64 / 400.0;
    check(bca >= 0.99, format!("BCA {bca:.4} over 200 + 200 scenes"))
}

fn entry(id: String, task: Task, answer: String, gt: GroundTruth) -> ManifestEntry {
    ManifestEntry {
        audio: vec![format!("audio/{id}.wav")],
        id,
        task,
        form: QaForm::Closed,
        question: String::new(),
        answer,
        ground_truth: gt,
        scenario_seed: 0,
        snr_db: None,
    }
}

/// 6. Random predictors against the baseline row.
fn random_baselines() -> Verdict {
    const N: usize = 10_000;
    let mut r = rng::stream(6, "baseline", 0);
    let mut manifest = Vec::new();
    let mut preds = Vec::new();
    let max_shift = 100.0 * 50.0 / SPEED_OF_SOUND;
    let classes = [MultipathClass::Rich, MultipathClass::Moderate, MultipathClass::Negligible];
    for i in 0..N {
        let mut add = |task: Task, answer: String, gt: GroundTruth, guess: String| {
            let id = format!("{}-{i}", task.tag());
            manifest.push(entry(id.clone(), task, answer, gt));
            preds.push(Prediction { id, answer_text: guess });
        };
        let los = i % 2 == 0;
        let yes_no = |b: bool| if b { "Yes." } else { "No." }.to_string();
        add(Task::LosDetection, yes_no(los), GroundTruth::Los { los_present: los }, yes_no(r.gen_bool(0.5)));

        let shift: f64 = r.gen_range(-max_shift..=max_shift);
        let guess: f64 = r.gen_range(-max_shift..=max_shift);
        let gt = GroundTruth::Doppler { shift_pct: shift };
        add(
            Task::DopplerEstimation,
            render_answer(AnswerKind::ShiftPercent, &gt).unwrap(),
            gt,
            format!("{guess:.2}%."),
        );

        let lag: i64 = r.gen_range(-100..=100);
        let guess: i64 = r.gen_range(-100..=100);
        add(
            Task::DoaEstimation,
            format!("{lag} samples."),
            GroundTruth::Doa {
                tdoa_samples: lag as f64,
                tdoa_quantized: lag,
                theta_deg: 90.0,
                mic_distance_m: 0.1,
            },
            format!("{guess} samples."),
        );

        let class = classes[r.gen_range(0..3)];
        let guess = classes[r.gen_range(0..3)];
        add(
            Task::MultipathAnalysis,
            format!("{}.", class.as_str()),
            GroundTruth::Multipath { class, mean_decay: 10.0 },
            format!("{}.", guess.as_str()),
        );

        // The relative error is the gap between two uniform fractions.
        let tof_ms = (r.gen_range(10..=600) as f64) / 10.0;
        let rel: f64 = r.gen::<f64>() - r.gen::<f64>();
        add(
            Task::RangeEstimation,
            format!("{tof_ms:.1} ms."),
            GroundTruth::Range {
                tof_ms,
                tof_samples: (tof_ms * 16.0).round() as usize,
                distance_m: tof_ms * SPEED_OF_SOUND / 2000.0,
            },
            format!("{} ms.", tof_ms * (1.0 + rel)),
        );
    }
    let rep = score_predictions(&manifest, &preds).map_err(|e| e.to_string())?;
    let (bca, tca, mae_f, mae_t, rel) = (
        rep.bca.unwrap(),
        rep.tca.unwrap(),
        rep.mae_f.unwrap(),
        rep.mae_t.unwrap(),
        rep.rep.unwrap(),
    );
    check(
        (bca - 0.5).abs() <= 0.03
            && (tca - 0.333).abs() <= 0.03
            && (mae_f - 10.0).abs() <= 0.5
            && (mae_t - 66.7).abs() <= 3.0
            && (rel - 33.3).abs() <= 2.0,
        format!("BCA {bca:.3}, TCA {tca:.3}, MAE_f {mae_f:.3}, MAE_t {mae_t:.2}, REP {rel:.2}"),
    )
}

/// 7. Feature shape, phase identity and hop shift.
fn feature_contract() -> Verdict {
    let x = gaussian_noise(160_000, 77).unwrap();
    let f = extract_features(&x).unwrap();
    let shape_ok = f.frames == 1000 && f.log_magnitude.len() == 1000 * STFT_BINS && STFT_BINS == 128;
    let ident = f
        .phase_sin
        .iter()
        .zip(&f.phase_cos)
        .map(|(s, c)| (s * s + c * c - 1.0).abs())
        .fold(0.0, f64::max);
    let short = Signal::new(x.samples()[..32_000].to_vec()).unwrap();
    let a = extract_features(&short).unwrap();
    let b = extract_features(&short.delayed(STFT_HOP)).unwrap();
    let mut shifted = b.frames == a.frames + 1;
    for t in 2..a.frames - 2 {
        for k in 0..STFT_BINS {
            for ch in 0..3 {
                shifted &= b.get(ch, t + 1, k) == a.get(ch, t, k);
            }
        }
    }
    check(
        shape_ok && ident <= 1e-6 && shifted,
        format!("shape 3 x {} x {}; max |sin^2+cos^2-1| = {ident:.2e}; interior hop shift exact: {shifted}", f.frames, STFT_BINS),
    )
}

fn dataset_digest(dir: &Path) -> String {
    let mut h = Sha256::new();
    h.update(fs::read(dir.join("manifest.jsonl")).unwrap());
    let mut wavs: Vec<_> = fs::read_dir(dir.join("audio")).unwrap().map(|e| e.unwrap().path()).collect();
    wavs.sort();
    for w in &wavs {
        h.update(w.file_name().unwrap().to_string_lossy().as_bytes());
        h.update(fs::read(w).unwrap());
    }
    format!("{:x}", h.finalize())
}

/// 8. Two identical `gen` runs.
fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut digests = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_acoustic-sim"))
            .args(["gen", "--tasks", "all", "--n", "10", "--seed", "7", "--out"])
            .arg(&out)
            .env("RUST_LOG", "warn")
            .status()
            .unwrap();
        if !status.success() {
            return Err(format!("gen exited with {status}"));
        }
        digests.push(dataset_digest(&out));
    }
    let n = read_manifest(&dir.path().join("a/manifest.jsonl")).unwrap().len();
    check(
        n == 50 && digests[0] == digests[1],
        format!("{n} datapoints; digests {} / {}", &digests[0][..16], &digests[1][..16]),
    )
}

/// 9. Prompt text against the golden templates.
fn prompt_golden() -> Verdict {
    let dp = |paths: &[&str], question: &str, answer: &str, task: Task, gt: GroundTruth| Datapoint {
        id: "x".into(),
        audio_paths: paths.iter().map(Into::into).collect(),
        task,
        qa: QaPair {
            question: question.into(),
            answer: answer.into(),
            form: QaForm::Closed,
            template_id: String::new(),
        },
        ground_truth: gt,
        scenario_seed: 0,
        snr_db: None,
    };
    let one = format_prompt(&dp(
        &["a.wav"],
        "Does the audio contain a line-of-sight path?",
        "Yes.",
        Task::LosDetection,
        GroundTruth::Los { los_present: true },
    ))
    .unwrap();
    let two = format_prompt(&dp(
        &["s.wav", "r.wav"],
        acoustic_sim::dataset::templates(Task::DopplerEstimation)
            .iter()
            .find(|t| t.kind == AnswerKind::ShiftPercent)
            .unwrap()
            .question,
        "-14.58%.",
        Task::DopplerEstimation,
        GroundTruth::Doppler { shift_pct: -14.58 },
    ))
    .unwrap();
    let g1 = include_str!("golden/prompt_one_audio.txt");
    let g2 = include_str!("golden/prompt_two_audio.txt");
    check(
        one == g1 && two == g2,
        format!("one-audio match: {}, two-audio match: {}", one == g1, two == g2),
    )
}

/// 10. Convolution, legality and manifest round-trip properties.
fn property_suites() -> Verdict {
    let mut r = rng::stream(10, "properties", 0);
    let mut conv_err: f64 = 0.0;
    for _ in 0..2000 {
        let (n, m) = (r.gen_range(1..=64), r.gen_range(1..=64));
        let x: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..m).map(|_| r.gen_range(-1.0..1.0)).collect();
        let y = fft_convolve(&Signal::new(x.clone()).unwrap(), &Signal::new(h.clone()).unwrap()).unwrap();
        let mut direct = vec![0.0; n + m - 1];
        for (i, a) in x.iter().enumerate() {
            for (j, b) in h.iter().enumerate() {
                direct[i + j] += a * b;
            }
        }
        if y.len() != direct.len() {
            return Err(format!("convolution length {} vs {}", y.len(), direct.len()));
        }
        for (a, b) in y.samples().iter().zip(&direct) {
            conv_err = conv_err.max((a - b).abs());
        }
    }

    let mut illegal = 0;
    for i in 0..100_000u64 {
        let task = Task::ALL[(i % 5) as usize];
        let inst = sample_channel(task, rng::derive_seed(10, "legality", i), SnrPolicy::default()).unwrap();
        let targets = inst.reflections.iter().filter(|p| p.target).count();
        let chirp = matches!(inst.source, SourceRef::Chirp(_));
        let row_ok = match task {
            Task::LosDetection => inst.los.is_some() || !inst.reflections.is_empty(),
            Task::DopplerEstimation => inst.doppler.is_some(),
            Task::DoaEstimation => inst.los.is_some(),
            Task::MultipathAnalysis => inst.reverb.is_some(),
            Task::RangeEstimation => inst.los.is_some() && targets == 1,
        };
        let ok = row_ok
            && inst.array.is_some() == (task == Task::DoaEstimation)
            && (task == Task::RangeEstimation || targets == 0)
            && chirp == (task == Task::RangeEstimation)
            && inst.check_legality().is_ok();
        illegal += usize::from(!ok);
    }

    let dir = tempfile::tempdir().unwrap();
    let cfg = acoustic_sim::dataset::DatasetConfig::uniform(12, &Task::ALL, 4);
    acoustic_sim::dataset::write_dataset(&cfg, &pool(), dir.path(), None).unwrap();
    let text = fs::read_to_string(dir.path().join("manifest.jsonl")).unwrap();
    let mut mismatched = 0;
    for line in text.lines() {
        let e: ManifestEntry = serde_json::from_str(line).unwrap();
        mismatched += usize::from(e.to_line().unwrap() != line);
        let back: ManifestEntry = serde_json::from_str(&e.to_line().unwrap()).unwrap();
        mismatched += usize::from(back != e);
    }
    let lines = text.lines().count();
    check(
        conv_err <= 1e-9 && illegal == 0 && mismatched == 0 && lines == 20,
        format!(
            "convolution max error {conv_err:.2e} over 2000 cases; {illegal} illegal of 100000 scenes; {mismatched} manifest mismatches over {lines} lines"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict, Option<u64>); 10] = [
        ("RT60 vs decay rate", rt60_relation, Some(10)),
        ("Doppler fidelity", doppler_fidelity, Some(5)),
        ("TDoA closure", tdoa_closure, Some(60)),
        ("Range closure", range_closure, Some(60)),
        ("LOS separability", los_separability, Some(60)),
        ("Random baselines", random_baselines, Some(30)),
        ("Feature contract", feature_contract, Some(5)),
        ("Determinism", determinism, Some(120)),
        ("Prompt golden files", prompt_golden, None),
        ("Property suites", property_suites, None),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let verdict = match (verdict, budget) {
            (Ok(m), Some(b)) if elapsed > Duration::from_secs(*b) => Err(format!("{m}; over the {b} s budget")),
            (v, _) => v,
        };
        let (tag, detail) = match &verdict {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failed += 1;
                ("FAIL", m)
            }
        };
        println!("criterion {:>2} {tag} {name} ({:.1} s): {detail}", i + 1, elapsed.as_secs_f64());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
