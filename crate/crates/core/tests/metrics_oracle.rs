//! Independent brute-force recomputation of the five evaluation metrics,
//! sharing no code with the library implementation (naive DFT, naive
//! analytic signal, plain loops).

use binaural_core::dsp::{hann_window, Waveform};
use binaural_core::metrics::{compute_metrics, SNR_CAP_DB};
use binaural_core::dsp::StftConfig;

fn rand_signal(seed: u64, n: usize) -> Vec<f64> {
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(5);
    (0..n)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect()
}

/// Naive one-sided STFT: windowed O(N^2) DFT per frame, (re, im) per bin.
fn naive_stft(x: &[f64], fft: usize, hop: usize) -> Vec<Vec<(f64, f64)>> {
    let frames = (x.len() - fft) / hop + 1;
    let bins = fft / 2 + 1;
    let w = hann_window(fft);
    (0..frames)
        .map(|t| {
            let frame: Vec<f64> = (0..fft).map(|i| x[t * hop + i] * w[i]).collect();
            (0..bins)
                .map(|k| {
                    let mut re = 0.0;
                    let mut im = 0.0;
                    for (n, &v) in frame.iter().enumerate() {
                        let ang = -2.0 * std::f64::consts::PI * (k * n) as f64 / fft as f64;
                        re += v * ang.cos();
                        im += v * ang.sin();
                    }
                    (re, im)
                })
                .collect()
        })
        .collect()
}

fn naive_envelope(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    // full DFT
    let spec: Vec<(f64, f64)> = (0..n)
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
        .collect();
    (0..n)
        .map(|t| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (k, &(sr, si)) in spec.iter().enumerate() {
                let w = if k == 0 || (n % 2 == 0 && k == n / 2) {
                    1.0
                } else if k < n.div_ceil(2) {
                    2.0
                } else {
                    0.0
                };
                let ang = 2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                re += w * (sr * ang.cos() - si * ang.sin());
                im += w * (sr * ang.sin() + si * ang.cos());
            }
            (re / n as f64).hypot(im / n as f64)
        })
        .collect()
}

#[test]
fn metrics_match_brute_force() {
    let n = 256;
    let (fft, hop) = (64, 16);
    // Bias the left channels so the difference signals have strongly positive
    // DC and Nyquist components in every frame. At bins where the spectrum is
    // real-negative, the principal-value phase is +-pi depending on a ~1e-17
    // rounding residue, and the FFT and the naive DFT can disagree by 2*pi.
    let bias = |x: Vec<f64>| -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| v + 1.5 + if i % 2 == 0 { 0.75 } else { -0.75 })
            .collect()
    };
    let gt = Waveform::stereo(bias(rand_signal(1, n)), rand_signal(2, n), 16_000).unwrap();
    let pred = Waveform::stereo(bias(rand_signal(3, n)), rand_signal(4, n), 16_000).unwrap();

    // --- brute force ---
    let mut stft_d = 0.0;
    let mut mag_d = 0.0;
    let mut env_d = 0.0;
    for ch in 0..2 {
        let sg = naive_stft(&gt.channels[ch], fft, hop);
        let sp = naive_stft(&pred.channels[ch], fft, hop);
        let mut e = 0.0;
        for (fg, fp) in sg.iter().zip(&sp) {
            for (&(gr, gi), &(pr, pi)) in fg.iter().zip(fp) {
                stft_d += (gr - pr).powi(2) + (gi - pi).powi(2);
                let d = gr.hypot(gi) - pr.hypot(pi);
                mag_d += d * d;
            }
        }
        let eg = naive_envelope(&gt.channels[ch]);
        let ep = naive_envelope(&pred.channels[ch]);
        for (a, b) in eg.iter().zip(&ep) {
            e += (a - b).powi(2);
        }
        env_d += e.sqrt();
    }
    let gdiff: Vec<f64> = gt.left().iter().zip(gt.right()).map(|(l, r)| l - r).collect();
    let pdiff: Vec<f64> = pred.left().iter().zip(pred.right()).map(|(l, r)| l - r).collect();
    let sgd = naive_stft(&gdiff, fft, hop);
    let spd = naive_stft(&pdiff, fft, hop);
    let mut phs_sum = 0.0;
    let mut phs_n = 0usize;
    for (fg, fp) in sgd.iter().zip(&spd) {
        for (&(gr, gi), &(pr, pi)) in fg.iter().zip(fp) {
            let pg = if gr == 0.0 && gi == 0.0 { 0.0 } else { gi.atan2(gr) };
            let pp = if pr == 0.0 && pi == 0.0 { 0.0 } else { pi.atan2(pr) };
            phs_sum += (pg - pp).abs();
            phs_n += 1;
        }
    }
    let phs_d = phs_sum / phs_n as f64;
    let signal: f64 = gt.channels.iter().flatten().map(|v| v * v).sum();
    let noise: f64 = (0..2)
        .map(|ch| {
            gt.channels[ch]
                .iter()
                .zip(&pred.channels[ch])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
        })
        .sum();
    let snr_db = (10.0 * (signal / noise).log10()).min(SNR_CAP_DB);

    // --- library ---
    let cfg = StftConfig::new(fft, hop).unwrap();
    let m = compute_metrics(&gt, &pred, &cfg).unwrap();

    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-12);
    assert!(rel(m.stft_d, stft_d) < 1e-6, "stft_d {} vs {stft_d}", m.stft_d);
    assert!(rel(m.mag_d, mag_d) < 1e-6, "mag_d {} vs {mag_d}", m.mag_d);
    assert!(rel(m.env_d, env_d) < 1e-6, "env_d {} vs {env_d}", m.env_d);
    assert!(rel(m.phs_d, phs_d) < 1e-6, "phs_d {} vs {phs_d}", m.phs_d);
    assert!(rel(m.snr_db, snr_db) < 1e-6, "snr_db {} vs {snr_db}", m.snr_db);
}
