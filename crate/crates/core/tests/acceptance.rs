//! End-to-end acceptance checks. Each test prints one summary line:
//! `acceptance: <name>: PASS|FAIL`.

use binaural_core::autodiff::{Tape, Tensor};
use binaural_core::checkpoint::{self, Checkpoint};
use binaural_core::dsp::{self, StftConfig};
use binaural_core::gradcheck;
use binaural_core::model::{self, ModelConfig, Params};
use binaural_core::scene::{
    self, GainModel, GeneratorConfig, ListenerSpec, LoadedSample, SceneSpec, SoundSource,
};
use binaural_core::train::{self, TrainConfig, TrainSample, Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(name: &str, ok: bool) {
    println!("acceptance: {name}: {}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "acceptance criterion {name} failed");
}

fn rand_signal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn loaded(samples: Vec<scene::RenderedSample>) -> Vec<LoadedSample> {
    samples
        .into_iter()
        .enumerate()
        .map(|(i, s)| LoadedSample {
            name: scene::sample_dir_name(i),
            mono: s.mono_mix.clone(),
            image: s.image.clone(),
            depth_map: s.depth_map.clone(),
            image_size: s.scene.image_size,
            binaural: s.binaural,
        })
        .collect()
}

/// O(N^2) reference DFT.
fn dft(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (t, &v) in x.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            (re, im)
        })
        .collect()
}

#[test]
fn dsp_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = StftConfig::new(64, 16).unwrap();
    let signal = rand_signal(&mut rng, 256);
    let spec = dsp::stft(&signal, &cfg).unwrap();
    let window = dsp::hann_window(64);
    let mut ok = true;
    for t in 0..spec.frames {
        let frame: Vec<f64> = (0..64).map(|i| signal[t * 16 + i] * window[i]).collect();
        let reference = dft(&frame);
        for f in 0..spec.bins {
            let (re, im) = spec.at(f, t);
            ok &= (re - reference[f].0).abs() <= 1e-6 && (im - reference[f].1).abs() <= 1e-6;
        }
    }

    let back = dsp::istft(&spec).unwrap();
    for i in 64..back.len() - 64 {
        ok &= (back[i] - signal[i]).abs() < 1e-4;
    }

    let mp = dsp::mag_phase(&spec);
    for f in 0..spec.bins {
        for t in 0..spec.frames {
            let (re, im) = spec.at(f, t);
            let i = f * spec.frames + t;
            ok &= (mp.mag[i] - re.hypot(im)).abs() <= 1e-9;
            ok &= (mp.phase[i] - im.atan2(re)).abs() <= 1e-9;
        }
    }

    // Hilbert envelope against a naive analytic signal
    let short = rand_signal(&mut rng, 128);
    let fast = dsp::hilbert_envelope(&short).unwrap();
    let spectrum = dft(&short);
    let n = short.len();
    for (t, &f) in fast.iter().enumerate() {
        let mut re = 0.0;
        let mut im = 0.0;
        for (k, &(sr, si)) in spectrum.iter().enumerate() {
            let w = if k == 0 || k == n / 2 {
                1.0
            } else if k < n / 2 {
                2.0
            } else {
                0.0
            };
            let ang = 2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
            re += w * (sr * ang.cos() - si * ang.sin());
            im += w * (sr * ang.sin() + si * ang.cos());
        }
        ok &= (f - (re / n as f64).hypot(im / n as f64)).abs() < 1e-6;
    }

    verdict("dsp-oracles", ok);
}

#[test]
fn channel_algebra() {
    let mut ok = true;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let left = rand_signal(&mut rng, 300);
        let right = rand_signal(&mut rng, 300);
        let (mix, diff) = dsp::mix_and_diff(&left, &right).unwrap();
        let (l2, r2) = dsp::recover_channels(&mix, &diff).unwrap();
        for i in 0..left.len() {
            ok &= (l2[i] - left[i]).abs() <= 1e-12 && (r2[i] - right[i]).abs() <= 1e-12;
        }
    }

    // predicted left+right matches the mono input at arbitrary parameters
    let cfg = ModelConfig::toy();
    let stft_cfg = cfg.stft().unwrap();
    for seed in [0u64, 17, 99] {
        let params = Params::init(&cfg, seed).unwrap();
        let mono = rand_signal(&mut rng, model::usable_len(600, &stft_cfg).unwrap());
        let image = Tensor::randn(&mut rng, &[3, 32, 32], 0.5);
        let depth = Tensor::randn(&mut rng, &[1, 32, 32], 0.3);
        let out =
            model::predict_binaural(&params, &cfg, &mono, Some(&image), Some(&depth), 16_000)
                .unwrap();
        let peak = mono.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 32..mono.len() - 32 {
            let err = (out.left()[i] + out.right()[i] - mono[i]).abs();
            ok &= err <= 1e-3 * peak;
        }
    }
    verdict("channel-algebra", ok);
}

#[test]
fn simulator_physics() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let listener = ListenerSpec::default();
    let fs = 16_000.0;
    let mut ok = true;
    for _ in 0..50 {
        let azimuth = rng.gen_range(-scene::AZIMUTH_MAX..scene::AZIMUTH_MAX);
        let depth = rng.gen_range(0.5..5.0);
        let freq = rng.gen_range(100.0..500.0);
        let signal: Vec<f64> =
            (0..4_400).map(|t| 0.3 * (std::f64::consts::TAU * freq * t as f64 / fs).sin()).collect();
        let spec = SceneSpec {
            sources: vec![SoundSource { signal, azimuth, depth }],
            listener,
            gain: GainModel::default(),
            image_size: 32,
            sample_rate: 16_000,
            clip_length: 4_000,
            seed: 0,
        };
        let out = scene::render_binaural(&spec).unwrap();

        let (sx, sy) = (depth * azimuth.sin(), depth * azimuth.cos());
        let e = listener.ear_separation;
        let d_l = ((sx + e / 2.0).powi(2) + sy * sy).sqrt();
        let d_r = ((sx - e / 2.0).powi(2) + sy * sy).sqrt();
        let expected_lag = ((d_r - d_l) / listener.speed_of_sound * fs).round() as i64;

        let (left, right) = (out.left(), out.right());
        let n = left.len() as i64;
        let mut best = (f64::NEG_INFINITY, 0i64);
        for k in -12..=12i64 {
            let mut c = 0.0;
            for t in 0..n {
                let j = t - k;
                if j >= 0 && j < n {
                    c += right[t as usize] * left[j as usize];
                }
            }
            if c > best.0 {
                best = (c, k);
            }
        }
        ok &= (best.1 - expected_lag).abs() <= 1;

        let rms = |x: &[f64]| -> f64 {
            let inner = &x[500..x.len() - 500];
            (inner.iter().map(|v| v * v).sum::<f64>() / inner.len() as f64).sqrt()
        };
        let ratio = rms(left) / rms(right);
        ok &= (ratio / (d_r / d_l) - 1.0).abs() <= 0.01;
    }
    verdict("simulator-physics", ok);
}

#[test]
fn gradient_suite() {
    let mut worst: f64 = 0.0;
    for r in gradcheck::primitive_checks(1) {
        worst = worst.max(r.max_rel_err);
    }
    worst = worst.max(gradcheck::full_model_check(1, 150).unwrap().max_rel_err);
    verdict("gradient-suite", worst <= gradcheck::TOLERANCE);
}

#[test]
fn ranges_fuzz() {
    let cfg = ModelConfig::toy();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ok = true;
    for draw in 0..100 {
        let params = Params::init(&cfg, draw).unwrap();
        let scale = 10f64.powi(draw as i32 % 5 - 2);
        let mix = Tensor::randn(&mut rng, &[2, 32, 32], scale);
        let image = Tensor::randn(&mut rng, &[3, 32, 32], scale);
        let depth = Tensor::randn(&mut rng, &[1, 32, 32], scale);
        let mut tape = Tape::new();
        let vars = params.watch(&mut tape);
        let out =
            model::forward(&mut tape, &vars, &cfg, &mix, Some(&image), Some(&depth), true).unwrap();
        for a in &out.attention {
            ok &= a.map.data.iter().all(|v| (-1.0 - 1e-12..=1.0 + 1e-12).contains(v));
        }
        ok &= tape.value(out.mask).data.iter().all(|&v| (-1.0..=1.0).contains(&v));
        ok &= tape.value(out.mag).data.iter().all(|&v| v >= 0.0);
        let pi = std::f64::consts::PI;
        ok &= tape.value(out.phase).data.iter().all(|&v| v.abs() <= pi + 1e-12);
    }
    verdict("ranges-fuzz", ok);
}

#[test]
fn learning() {
    let raw = loaded(scene::make_dataset(16, 1, &GeneratorConfig::default()).unwrap());
    let cfg = TrainConfig::default();
    let data = train::prepare_dataset(&raw, &cfg.model).unwrap();

    let dataset_loss = |params: &Params| -> f64 {
        let mut tot = 0.0;
        for s in &data {
            let mut tape = Tape::new();
            let vars = params.watch(&mut tape);
            let out = model::forward(
                &mut tape,
                &vars,
                &cfg.model,
                &s.mix_planes,
                s.image.as_ref(),
                s.depth.as_ref(),
                false,
            )
            .unwrap();
            let losses =
                model::compute_losses(&mut tape, &out, &s.diff_planes, &cfg.weights).unwrap();
            tot += tape.value(losses.total).value();
        }
        tot / data.len() as f64
    };

    let mut trainer = Trainer::new(cfg.clone()).unwrap();
    let initial = dataset_loss(&trainer.params);
    trainer.run(&data, |_, _| {}).unwrap();
    let fin = dataset_loss(&trainer.params);

    let report = train::evaluate_dataset(&trainer.params, &cfg.model, &raw).unwrap();
    let loss_ok = fin < 0.1 * initial;
    let baseline_ok = report.mean.stft_d <= 0.8 * report.baseline_mean.stft_d;
    println!(
        "learning: loss {initial:.3} -> {fin:.3}, stft_d {:.1} vs baseline {:.1}",
        report.mean.stft_d, report.baseline_mean.stft_d
    );
    verdict("learning", loss_ok && baseline_ok);
}

#[test]
fn trend_ablations() {
    let gen = GeneratorConfig { clip_length: 560, ..GeneratorConfig::default() };
    let raw = loaded(scene::make_dataset(48, 11, &gen).unwrap());

    let run = |seed: u64, use_views: bool, all_losses: bool| -> f64 {
        let model = ModelConfig {
            fft_size: 64,
            hop: 16,
            use_image: use_views,
            use_depth: use_views,
            decoder_mode: model::DecoderMode::Triple,
            ..ModelConfig::default()
        };
        let weights = if all_losses {
            model::LossWeights::default()
        } else {
            model::LossWeights { alpha_mag: 0.0, alpha_phs: 0.0, alpha_rec: 0.0 }
        };
        let cfg = TrainConfig { model, steps: 150, seed, weights, ..TrainConfig::default() };
        let data = train::prepare_dataset(&raw, &cfg.model).unwrap();
        let mut trainer = Trainer::new(cfg.clone()).unwrap();
        trainer.run(&data, |_, _| {}).unwrap();
        train::evaluate_dataset(&trainer.params, &cfg.model, &raw).unwrap().mean.stft_d
    };

    let mut views_wins = 0;
    let mut loss_wins = 0;
    for seed in 0..5u64 {
        let full = run(seed, true, true);
        let audio_only = run(seed, false, true);
        let stft_only = run(seed, true, false);
        views_wins += (full <= audio_only) as u32;
        loss_wins += (full <= stft_only) as u32;
        println!(
            "ablation seed {seed}: full {full:.2} audio-only {audio_only:.2} stft-only {stft_only:.2}"
        );
    }
    println!("ablation wins: views {views_wins}/5, losses {loss_wins}/5");
    verdict("trend-ablations", views_wins >= 4 && loss_wins >= 4);
}

#[test]
fn determinism_and_persistence() {
    let gen = GeneratorConfig { clip_length: 560, ..GeneratorConfig::default() };
    let raw = loaded(scene::make_dataset(3, 9, &gen).unwrap());
    let cfg = TrainConfig { model: ModelConfig::toy(), steps: 10, seed: 4, ..TrainConfig::default() };
    let data = train::prepare_dataset(&raw, &cfg.model).unwrap();

    let run_steps = |trainer: &mut Trainer, n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| {
                let idx = trainer.next_batch(data.len());
                let batch: Vec<&TrainSample> = idx.iter().map(|&i| &data[i]).collect();
                trainer.train_step(&batch).unwrap().loss
            })
            .collect()
    };

    let mut a = Trainer::new(cfg.clone()).unwrap();
    let mut b = Trainer::new(cfg.clone()).unwrap();
    let mut ok = run_steps(&mut a, 10) == run_steps(&mut b, 10);
    ok &= a.params == b.params;

    // checkpoint round-trip identity and exact resume
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.ckpt");
    let mut c = Trainer::new(cfg.clone()).unwrap();
    run_steps(&mut c, 4);
    let ckpt = Checkpoint::from_trainer(&c);
    checkpoint::save(&path, &ckpt).unwrap();
    let back = checkpoint::load(&path).unwrap();
    let path2 = dir.path().join("t2.ckpt");
    checkpoint::save(&path2, &back).unwrap();
    ok &= std::fs::read(&path).unwrap() == std::fs::read(&path2).unwrap();
    let mut resumed = back.into_trainer(cfg).unwrap();
    run_steps(&mut c, 6);
    run_steps(&mut resumed, 6);
    ok &= c.params == resumed.params && c.step == resumed.step;
    verdict("determinism-persistence", ok);
}

fn shared_signal_scene(azimuth: f64) -> LoadedSample {
    let fs = 16_000.0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let partials: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.gen_range(100.0..600.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.5..1.5) / 3.0,
            )
        })
        .collect();
    let signal: Vec<f64> = (0..860)
        .map(|t| {
            partials
                .iter()
                .map(|(f, p, a)| a * (std::f64::consts::TAU * f * t as f64 / fs + p).sin())
                .sum()
        })
        .collect();
    let spec = SceneSpec {
        sources: vec![SoundSource { signal, azimuth, depth: 1.2 }],
        listener: ListenerSpec::default(),
        gain: GainModel::default(),
        image_size: 32,
        sample_rate: 16_000,
        clip_length: 560,
        seed: 0,
    };
    let s = scene::render_sample(spec).unwrap();
    LoadedSample {
        name: format!("az{azimuth:.2}"),
        mono: s.mono_mix.clone(),
        image: s.image.clone(),
        depth_map: s.depth_map.clone(),
        image_size: s.scene.image_size,
        binaural: s.binaural,
    }
}

#[test]
fn attention_export() {
    // scenes share one source signal, so position must come from the views
    let n = 12;
    let raw: Vec<LoadedSample> =
        (0..n).map(|i| shared_signal_scene(-1.0 + 2.0 * i as f64 / (n - 1) as f64)).collect();
    let model_cfg = ModelConfig::toy();
    let cfg =
        TrainConfig { model: model_cfg.clone(), steps: 150, seed: 5, ..TrainConfig::default() };
    let data = train::prepare_dataset(&raw, &cfg.model).unwrap();
    let mut trainer = Trainer::new(cfg).unwrap();
    trainer.run(&data, |_, _| {}).unwrap();

    let probe = shared_signal_scene(-0.9);
    let pdata = train::prepare_sample(&probe, &model_cfg).unwrap();
    let mut tape = Tape::new();
    let vars = trainer.params.watch(&mut tape);
    let out = model::forward(
        &mut tape,
        &vars,
        &model_cfg,
        &pdata.mix_planes,
        pdata.image.as_ref(),
        pdata.depth.as_ref(),
        true,
    )
    .unwrap();

    // one map per decoder layer and modality
    let mut ok = out.attention.len() == 5 * 2;
    let grid = model_cfg.grid();
    let mut centroid = f64::NAN;
    for a in &out.attention {
        let w = a.token_weights(grid);
        let lo = w.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let norm: Vec<f64> = w.iter().map(|v| (v - lo) / (hi - lo)).collect();
        ok &= norm.iter().all(|v| (0.0..=1.0).contains(v));
        if a.layer == 5 && a.modality == "img" {
            let mut cx = 0.0;
            let mut mass = 0.0;
            for y in 0..grid {
                for x in 0..grid {
                    cx += norm[y * grid + x] * x as f64;
                    mass += norm[y * grid + x];
                }
            }
            centroid = cx / mass;
        }
    }
    println!("attention centroid x {centroid:.3} (grid middle {:.3})", (grid - 1) as f64 / 2.0);
    ok &= centroid < (grid - 1) as f64 / 2.0;
    verdict("attention-export", ok);
}
