//! Adam training loop over rendered scenes, plus dataset evaluation.

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{Tape, Tensor};
use crate::dsp;
use crate::error::{Error, Result};
use crate::metrics::{self, MetricReport};
use crate::model::{
    self, compute_losses, forward, LossWeights, ModelConfig, Params,
};
use crate::scene::LoadedSample;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weights: LossWeights,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            steps: 500,
            batch_size: 4,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weights: LossWeights::default(),
            seed: 0,
            log_every: 25,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config(format!("learning rate {} is invalid", self.lr)));
        }
        Ok(())
    }
}

/// A sample converted into network-ready tensors.
pub struct TrainSample {
    pub name: String,
    pub mix_planes: Tensor,
    pub diff_planes: Tensor,
    pub image: Option<Tensor>,
    pub depth: Option<Tensor>,
}

/// STFT both the mix and the channel difference of a loaded sample and crop
/// them to the network's frequency extent.
pub fn prepare_sample(sample: &LoadedSample, cfg: &ModelConfig) -> Result<TrainSample> {
    let stft_cfg = cfg.stft()?;
    let (mix, diff) = dsp::mix_and_diff(sample.binaural.left(), sample.binaural.right())?;
    let usable = model::usable_len(mix.len(), &stft_cfg).ok_or_else(|| {
        Error::Data(format!("{}: clip too short for the model's STFT", sample.name))
    })?;
    let fc = cfg.freq_extent(&stft_cfg);
    let mix_spec = dsp::stft(&mix[..usable], &stft_cfg)?;
    let diff_spec = dsp::stft(&diff[..usable], &stft_cfg)?;
    let image = if cfg.use_image {
        if sample.image_size != cfg.image_size {
            return Err(Error::Data(format!(
                "{}: image side {} does not match model image_size {}",
                sample.name, sample.image_size, cfg.image_size
            )));
        }
        Some(Tensor::new(
            vec![3, cfg.image_size, cfg.image_size],
            sample.image.clone(),
        ))
    } else {
        None
    };
    let depth = if cfg.use_depth {
        Some(model::depth_plane(&sample.depth_map, cfg.image_size)?)
    } else {
        None
    };
    Ok(TrainSample {
        name: sample.name.clone(),
        mix_planes: model::planes_from_spectrogram(&mix_spec, fc),
        diff_planes: model::planes_from_spectrogram(&diff_spec, fc),
        image,
        depth,
    })
}

pub fn prepare_dataset(samples: &[LoadedSample], cfg: &ModelConfig) -> Result<Vec<TrainSample>> {
    samples.iter().map(|s| prepare_sample(s, cfg)).collect()
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: IndexMap<String, Tensor>,
    pub v: IndexMap<String, Tensor>,
    pub t: u64,
}

impl Adam {
    pub fn new(cfg: &TrainConfig, params: &Params) -> Self {
        let m = params.map.iter().map(|(k, t)| (k.clone(), Tensor::zeros(&t.shape))).collect();
        let v = params.map.iter().map(|(k, t)| (k.clone(), Tensor::zeros(&t.shape))).collect();
        Self { lr: cfg.lr, beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.eps, m, v, t: 0 }
    }

    pub fn step(&mut self, params: &mut Params, grads: &IndexMap<String, Tensor>) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, p) in params.map.iter_mut() {
            let g = &grads[name];
            let m = self.m.get_mut(name).unwrap();
            let v = self.v.get_mut(name).unwrap();
            for i in 0..p.data.len() {
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * g.data[i];
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * g.data[i] * g.data[i];
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                p.data[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepStats {
    pub loss: f64,
    pub l_stft: f64,
    pub l_mag: f64,
    pub l_phs: f64,
    pub l_rec: f64,
}

/// Full trainer state; round-trips through a checkpoint exactly.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub params: Params,
    pub adam: Adam,
    pub step: u64,
    pub rng: ChaCha8Rng,
    pub epoch_order: Vec<usize>,
    pub epoch_pos: usize,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let params = Params::init(&cfg.model, cfg.seed)?;
        let adam = Adam::new(&cfg, &params);
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed_5eed_5eed);
        Ok(Self { cfg, params, adam, step: 0, rng, epoch_order: Vec::new(), epoch_pos: 0 })
    }

    /// Next batch of dataset indices, reshuffling per epoch.
    pub fn next_batch(&mut self, n_data: usize) -> Vec<usize> {
        let mut batch = Vec::with_capacity(self.cfg.batch_size);
        while batch.len() < self.cfg.batch_size {
            if self.epoch_pos >= self.epoch_order.len() {
                self.epoch_order = (0..n_data).collect();
                self.epoch_order.shuffle(&mut self.rng);
                self.epoch_pos = 0;
            }
            batch.push(self.epoch_order[self.epoch_pos]);
            self.epoch_pos += 1;
        }
        batch
    }

    /// One optimizer update on a batch: per-sample tapes, gradients averaged
    /// by parameter name.
    pub fn train_step(&mut self, batch: &[&TrainSample]) -> Result<StepStats> {
        assert!(!batch.is_empty());
        let mut acc: IndexMap<String, Tensor> = self
            .params
            .map
            .iter()
            .map(|(k, t)| (k.clone(), Tensor::zeros(&t.shape)))
            .collect();
        let mut stats = StepStats { loss: 0.0, l_stft: 0.0, l_mag: 0.0, l_phs: 0.0, l_rec: 0.0 };
        for sample in batch {
            let mut tape = Tape::new();
            let vars = self.params.watch(&mut tape);
            let out = forward(
                &mut tape,
                &vars,
                &self.cfg.model,
                &sample.mix_planes,
                sample.image.as_ref(),
                sample.depth.as_ref(),
                false,
            )?;
            let losses = compute_losses(&mut tape, &out, &sample.diff_planes, &self.cfg.weights)?;
            let loss = tape.value(losses.total).value();
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss {loss} on sample {}",
                    sample.name
                )));
            }
            stats.loss += loss;
            stats.l_stft += tape.value(losses.l_stft).value();
            stats.l_mag += tape.value(losses.l_mag).value();
            stats.l_phs += tape.value(losses.l_phs).value();
            stats.l_rec += tape.value(losses.l_rec).value();
            let grads = tape.backward(losses.total)?;
            for (name, var) in &vars {
                let g = grads.get_or_zeros(*var, &tape);
                let slot = acc.get_mut(name).unwrap();
                for (a, b) in slot.data.iter_mut().zip(&g.data) {
                    *a += b;
                }
            }
        }
        let scale = 1.0 / batch.len() as f64;
        for g in acc.values_mut() {
            for v in &mut g.data {
                *v *= scale;
            }
        }
        stats.loss *= scale;
        stats.l_stft *= scale;
        stats.l_mag *= scale;
        stats.l_phs *= scale;
        stats.l_rec *= scale;
        self.adam.step(&mut self.params, &acc);
        self.step += 1;
        Ok(stats)
    }

    /// Run until `self.cfg.steps` total steps (counting any resumed ones).
    pub fn run(
        &mut self,
        data: &[TrainSample],
        mut log: impl FnMut(u64, &StepStats),
    ) -> Result<()> {
        if data.is_empty() {
            return Err(Error::Data("training dataset is empty".into()));
        }
        while self.step < self.cfg.steps as u64 {
            let idx = self.next_batch(data.len());
            let batch: Vec<&TrainSample> = idx.iter().map(|&i| &data[i]).collect();
            let stats = self.train_step(&batch)?;
            if self.cfg.log_every > 0
                && (self.step % self.cfg.log_every as u64 == 0
                    || self.step == self.cfg.steps as u64)
            {
                log(self.step, &stats);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClipResult {
    pub name: String,
    pub metrics: MetricReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub clips: Vec<ClipResult>,
    pub mean: MetricReport,
    pub baseline_mean: MetricReport,
}

/// Evaluate a model on loaded samples, with the mono-mono baseline row for
/// reference. Metrics use the model's own STFT configuration.
pub fn evaluate_dataset(
    params: &Params,
    cfg: &ModelConfig,
    samples: &[LoadedSample],
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Data("evaluation dataset is empty".into()));
    }
    let stft_cfg = cfg.stft()?;
    let mut clips = Vec::with_capacity(samples.len());
    let mut baseline = Vec::with_capacity(samples.len());
    for s in samples {
        let usable = model::usable_len(s.mono.len(), &stft_cfg).ok_or_else(|| {
            Error::Data(format!("{}: clip too short for the model's STFT", s.name))
        })?;
        let mono = &s.mono[..usable];
        let gt = crate::dsp::Waveform::stereo(
            s.binaural.left()[..usable].to_vec(),
            s.binaural.right()[..usable].to_vec(),
            s.binaural.sample_rate,
        )?;
        let image = if cfg.use_image {
            Some(Tensor::new(vec![3, s.image_size, s.image_size], s.image.clone()))
        } else {
            None
        };
        let depth = if cfg.use_depth {
            Some(model::depth_plane(&s.depth_map, s.image_size)?)
        } else {
            None
        };
        let pred = model::predict_binaural(
            params,
            cfg,
            mono,
            image.as_ref(),
            depth.as_ref(),
            gt.sample_rate,
        )?;
        clips.push(ClipResult {
            name: s.name.clone(),
            metrics: metrics::compute_metrics(&gt, &pred, &stft_cfg)?,
        });
        let bl = metrics::mono_mono_baseline(mono, gt.sample_rate)?;
        baseline.push(metrics::compute_metrics(&gt, &bl, &stft_cfg)?);
    }
    let mean = MetricReport::mean(&clips.iter().map(|c| c.metrics).collect::<Vec<_>>());
    let baseline_mean = MetricReport::mean(&baseline);
    Ok(EvalReport { clips, mean, baseline_mean })
}
