//! The five evaluation distances (STFT, ENV, Mag, Phs, SNR) and the
//! Mono-Mono baseline.

use serde::Serialize;

use crate::dsp::{self, StftConfig, Waveform};
use crate::error::{Error, Result};

pub const SNR_CAP_DB: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    pub stft_d: f64,
    pub env_d: f64,
    pub mag_d: f64,
    pub phs_d: f64,
    pub snr_db: f64,
}

impl MetricReport {
    pub fn zeros() -> Self {
        Self { stft_d: 0.0, env_d: 0.0, mag_d: 0.0, phs_d: 0.0, snr_db: 0.0 }
    }

    /// Unweighted mean of per-clip reports.
    pub fn mean(reports: &[MetricReport]) -> MetricReport {
        let n = reports.len().max(1) as f64;
        let mut acc = MetricReport::zeros();
        for r in reports {
            acc.stft_d += r.stft_d;
            acc.env_d += r.env_d;
            acc.mag_d += r.mag_d;
            acc.phs_d += r.phs_d;
            acc.snr_db += r.snr_db;
        }
        MetricReport {
            stft_d: acc.stft_d / n,
            env_d: acc.env_d / n,
            mag_d: acc.mag_d / n,
            phs_d: acc.phs_d / n,
            snr_db: acc.snr_db / n,
        }
    }
}

/// Compare prediction against ground truth.
///
/// - `stft_d`: squared L2 distance between per-channel STFT planes.
/// - `env_d`: L2 distance between Hilbert envelopes, summed over channels.
/// - `mag_d`: squared L2 distance between STFT magnitudes.
/// - `phs_d`: mean L1 distance between the phases of the two difference
///   signals (principal values, no unwrapping).
/// - `snr_db`: `10 log10(||gt||^2 / ||gt - pred||^2)`, capped at 100 dB.
pub fn compute_metrics(
    gt: &Waveform,
    pred: &Waveform,
    cfg: &StftConfig,
) -> Result<MetricReport> {
    if !gt.is_stereo() || !pred.is_stereo() {
        return Err(Error::Input("compute_metrics: stereo clips required".into()));
    }
    if gt.len() != pred.len() || gt.sample_rate != pred.sample_rate {
        return Err(Error::Input(format!(
            "compute_metrics: length/rate mismatch ({} @ {} vs {} @ {})",
            gt.len(),
            gt.sample_rate,
            pred.len(),
            pred.sample_rate
        )));
    }

    let mut stft_d = 0.0;
    let mut env_d = 0.0;
    let mut mag_d = 0.0;
    for ch in 0..2 {
        let sg = dsp::stft(&gt.channels[ch], cfg)?;
        let sp = dsp::stft(&pred.channels[ch], cfg)?;
        for i in 0..sg.re.len() {
            let dre = sg.re[i] - sp.re[i];
            let dim = sg.im[i] - sp.im[i];
            stft_d += dre * dre + dim * dim;
        }
        let mg = dsp::mag_phase(&sg);
        let mp = dsp::mag_phase(&sp);
        for i in 0..mg.mag.len() {
            let d = mg.mag[i] - mp.mag[i];
            mag_d += d * d;
        }
        let eg = dsp::hilbert_envelope(&gt.channels[ch])?;
        let ep = dsp::hilbert_envelope(&pred.channels[ch])?;
        env_d += eg.iter().zip(&ep).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    }

    // phase distance is measured on the difference signals
    let (_, gt_diff) = dsp::mix_and_diff(gt.left(), gt.right())?;
    let (_, pred_diff) = dsp::mix_and_diff(pred.left(), pred.right())?;
    let pg = dsp::mag_phase(&dsp::stft(&gt_diff, cfg)?);
    let pp = dsp::mag_phase(&dsp::stft(&pred_diff, cfg)?);
    let phs_d = pg
        .phase
        .iter()
        .zip(&pp.phase)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / pg.phase.len() as f64;

    let signal: f64 = gt.channels.iter().flatten().map(|v| v * v).sum();
    let noise: f64 = (0..2)
        .map(|ch| {
            gt.channels[ch]
                .iter()
                .zip(&pred.channels[ch])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum();
    let snr_db = if noise < 1e-12 * signal {
        SNR_CAP_DB
    } else {
        (10.0 * (signal / noise).log10()).min(SNR_CAP_DB)
    };

    Ok(MetricReport { stft_d, env_d, mag_d, phs_d, snr_db })
}

/// The weakest reference system: predict zero channel difference.
/// Consistent with the recovery convention, each output channel is half the
/// mix, so `left + right == mix` holds exactly.
pub fn mono_mono_baseline(mono_mix: &[f64], sample_rate: u32) -> Result<Waveform> {
    let half: Vec<f64> = mono_mix.iter().map(|v| v / 2.0).collect();
    Waveform::stereo(half.clone(), half, sample_rate)
}
