//! `binaural` — dataset synthesis, training, evaluation and inference for
//! the mono-to-binaural pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::panic::AssertUnwindSafe;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use binaural_core::autodiff::{NumericFailure, Tensor};
use binaural_core::{checkpoint, gradcheck, model, netpbm, runconfig, scene, train, wav};
use binaural_core::wav::SampleFormat;
use binaural_core::model::ModelConfig;
use binaural_core::{Error, Result};

#[derive(Parser)]
#[command(name = "binaural", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a seeded synthetic dataset of scenes.
    Synth {
        #[arg(long)]
        scenes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Drop samples whose channels are too similar to count as binaural.
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 0.001)]
        threshold: f64,
    },
    /// Train a model on a rendered dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Resume from an existing checkpoint instead of initializing fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset and write a JSON report.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Spatialize a mono WAV using image and depth views.
    Binauralize {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        mono: PathBuf,
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        depth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export per-layer, per-modality attention maps for one sample.
    Attn {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        sample: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify gradients against central finite differences.
    Gradcheck {
        #[arg(long)]
        full_model: bool,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap reserves exit code 2; our convention is 1 for usage
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            std::process::exit(if is_help { 0 } else { 1 });
        }
    };
    let outcome = std::panic::catch_unwind(AssertUnwindSafe(|| run(cli.command)));
    let code = match outcome {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Numerical(_) => 3,
                Error::Data(_) | Error::Io(_) => 2,
                _ => 1,
            }
        }
        Err(payload) => {
            if let Some(nf) = payload.downcast_ref::<NumericFailure>() {
                eprintln!("numerical failure: {nf}");
                3
            } else {
                std::panic::resume_unwind(payload)
            }
        }
    };
    std::process::exit(code);
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth { scenes, seed, out } => synth(scenes, seed, &out),
        Command::Filter { input, threshold } => filter(&input, threshold),
        Command::Train { data, config, out, resume } => do_train(&data, config.as_deref(), &out, resume.as_deref()),
        Command::Eval { ckpt, data, report } => eval(&ckpt, &data, &report),
        Command::Binauralize { ckpt, mono, image, depth, out } => {
            binauralize(&ckpt, &mono, image.as_deref(), depth.as_deref(), &out)
        }
        Command::Attn { ckpt, sample, out } => attn(&ckpt, &sample, &out),
        Command::Gradcheck { full_model } => run_gradcheck(full_model),
    }
}

fn synth(scenes: usize, seed: u64, out: &Path) -> Result<()> {
    let cfg = scene::GeneratorConfig::default();
    let samples = scene::make_dataset(scenes, seed, &cfg)?;
    std::fs::create_dir_all(out)?;
    for (i, s) in samples.iter().enumerate() {
        scene::write_sample_dir(&out.join(scene::sample_dir_name(i)), s)?;
    }
    println!("wrote {} scenes to {}", samples.len(), out.display());
    Ok(())
}

fn filter(input: &Path, threshold: f64) -> Result<()> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(input)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Data(format!("{}: no sample directories found", input.display())));
    }
    let (mut kept, mut dropped) = (0usize, 0usize);
    for dir in dirs {
        let clip = wav::read_wav(&dir.join("binaural.wav"))?;
        if scene::is_binaural_clip(&clip, threshold)? {
            kept += 1;
        } else {
            println!("drop {}", dir.display());
            std::fs::remove_dir_all(&dir)?;
            dropped += 1;
        }
    }
    println!("kept {kept}, dropped {dropped} (threshold {threshold})");
    Ok(())
}

fn do_train(data: &Path, config: Option<&Path>, out: &Path, resume: Option<&Path>) -> Result<()> {
    let cfg = match config {
        Some(p) => runconfig::parse_train_config(&std::fs::read_to_string(p)?)?,
        None => train::TrainConfig::default(),
    };
    let samples = scene::load_dataset_dir(data)?;
    let prepared = train::prepare_dataset(&samples, &cfg.model)?;
    let mut trainer = match resume {
        Some(p) => checkpoint::load(p)?.into_trainer(cfg)?,
        None => train::Trainer::new(cfg)?,
    };
    trainer.run(&prepared, |step, stats| {
        println!(
            "step {step}: loss {:.6} (stft {:.6} mag {:.6} phs {:.6} rec {:.6})",
            stats.loss, stats.l_stft, stats.l_mag, stats.l_phs, stats.l_rec
        );
    })?;
    checkpoint::save(out, &checkpoint::Checkpoint::from_trainer(&trainer))?;
    println!("saved checkpoint to {}", out.display());
    Ok(())
}

fn eval(ckpt: &Path, data: &Path, report: &Path) -> Result<()> {
    let ck = checkpoint::load(ckpt)?;
    let samples = scene::load_dataset_dir(data)?;
    let rep = train::evaluate_dataset(&ck.params, &ck.model, &samples)?;
    let json = serde_json::to_string_pretty(&rep)
        .map_err(|e| Error::Data(format!("serializing report: {e}")))?;
    std::fs::write(report, json)?;
    // per-clip CSV next to the JSON report, baseline row included
    let csv_path = report.with_extension("csv");
    let mut csv = String::from("name,stft_d,env_d,mag_d,phs_d,snr_db\n");
    for c in &rep.clips {
        let m = &c.metrics;
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            c.name, m.stft_d, m.env_d, m.mag_d, m.phs_d, m.snr_db
        ));
    }
    let b = &rep.baseline_mean;
    csv.push_str(&format!(
        "mono_mono_baseline_mean,{},{},{},{},{}\n",
        b.stft_d, b.env_d, b.mag_d, b.phs_d, b.snr_db
    ));
    std::fs::write(&csv_path, csv)?;
    println!(
        "mean stft_d {:.6} (baseline {:.6}); report: {}, per-clip CSV: {}",
        rep.mean.stft_d,
        rep.baseline_mean.stft_d,
        report.display(),
        csv_path.display()
    );
    Ok(())
}

fn binauralize(
    ckpt: &Path,
    mono_path: &Path,
    image_path: Option<&Path>,
    depth_path: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let ck = checkpoint::load(ckpt)?;
    let cfg = &ck.model;
    let mono_wf = wav::read_wav(mono_path)?;
    if mono_wf.is_stereo() {
        return Err(Error::Data(format!("{}: expected a mono WAV", mono_path.display())));
    }
    let image = match (cfg.use_image, image_path) {
        (true, Some(p)) => Some(load_image_plane(p, cfg)?),
        (true, None) => {
            return Err(Error::Input("this checkpoint needs --image".into()));
        }
        (false, _) => None,
    };
    let depth = match (cfg.use_depth, depth_path) {
        (true, Some(p)) => Some(load_depth_plane(p, cfg)?),
        (true, None) => {
            return Err(Error::Input("this checkpoint needs --depth".into()));
        }
        (false, _) => None,
    };
    let stft_cfg = cfg.stft()?;
    let mono = &mono_wf.channels[0];
    let usable = model::usable_len(mono.len(), &stft_cfg).ok_or_else(|| {
        Error::Data(format!("{}: clip too short for this model", mono_path.display()))
    })?;
    if usable != mono.len() {
        println!("note: trimming {} -> {} samples to fit whole frames", mono.len(), usable);
    }
    let stereo = model::predict_binaural(
        &ck.params,
        cfg,
        &mono[..usable],
        image.as_ref(),
        depth.as_ref(),
        mono_wf.sample_rate,
    )?;
    wav::write_wav(out, &stereo, SampleFormat::Float32)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn load_image_plane(path: &Path, cfg: &ModelConfig) -> Result<Tensor> {
    let (img, h, w) = netpbm::read_ppm(path)?;
    if h != cfg.image_size || w != cfg.image_size {
        let s = cfg.image_size;
        return Err(Error::Data(format!(
            "{}: image is {h}x{w}, model expects {s}x{s}",
            path.display()
        )));
    }
    Ok(Tensor::new(vec![3, h, w], img))
}

fn load_depth_plane(path: &Path, cfg: &ModelConfig) -> Result<Tensor> {
    let (depth, h, w) = netpbm::read_depth_pgm(path)?;
    if h != cfg.image_size || w != cfg.image_size {
        return Err(Error::Data(format!(
            "{}: depth map is {h}x{w}, model expects another size",
            path.display()
        )));
    }
    model::depth_plane(&depth, h)
}

fn attn(ckpt: &Path, sample: &Path, out: &Path) -> Result<()> {
    let ck = checkpoint::load(ckpt)?;
    let cfg = &ck.model;
    let loaded = scene::load_sample_dir(sample)?;
    let prepared = train::prepare_sample(&loaded, cfg)?;
    let mut tape = binaural_core::autodiff::Tape::new();
    let vars = ck.params.watch(&mut tape);
    let fw = model::forward(
        &mut tape,
        &vars,
        cfg,
        &prepared.mix_planes,
        prepared.image.as_ref(),
        prepared.depth.as_ref(),
        true,
    )?;
    std::fs::create_dir_all(out)?;
    let grid = cfg.grid();
    // export the first head's maps: decoder_depth x 2 grayscale images
    let first_head = fw.attention.first().map(|a| a.head.clone()).unwrap_or_default();
    let mut count = 0;
    for rec in fw.attention.iter().filter(|a| a.head == first_head) {
        let weights = rec.token_weights(grid);
        let (lo, hi) = weights
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let norm: Vec<f64> = weights.iter().map(|&v| (v - lo) / span).collect();
        let name = format!("attn_layer{}_{}.pgm", rec.layer, rec.modality);
        netpbm::write_gray_pgm(&out.join(&name), &norm, grid, grid)?;
        count += 1;
    }
    println!("wrote {count} attention maps to {}", out.display());
    Ok(())
}

fn run_gradcheck(full_model: bool) -> Result<()> {
    let mut worst: f64 = 0.0;
    for r in gradcheck::primitive_checks(1) {
        println!(
            "{:<20} max rel err {:.3e}  {}",
            r.name,
            r.max_rel_err,
            if r.passed() { "ok" } else { "FAIL" }
        );
        worst = worst.max(r.max_rel_err);
    }
    if full_model {
        let r = gradcheck::full_model_check(1, 150)?;
        println!(
            "{:<20} max rel err {:.3e}  {}",
            r.name,
            r.max_rel_err,
            if r.passed() { "ok" } else { "FAIL" }
        );
        worst = worst.max(r.max_rel_err);
    }
    if worst > gradcheck::TOLERANCE {
        return Err(Error::Numerical(format!(
            "gradient check failed: max rel err {worst:.3e} > {:.0e}",
            gradcheck::TOLERANCE
        )));
    }
    println!("all gradients within {:.0e}", gradcheck::TOLERANCE);
    Ok(())
}
