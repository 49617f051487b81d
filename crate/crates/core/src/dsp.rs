//! Pure signal-processing substrate: channel algebra, STFT, magnitude/phase
//! and the Hilbert envelope.
//!
//! Complex time-frequency data is stored as two stacked real planes
//! (`F x T` each), the same layout the network consumes.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// One or two equal-length channels of real samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub channels: Vec<Vec<f64>>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn stereo(left: Vec<f64>, right: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![left, right], sample_rate)
    }

    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() || channels.len() > 2 {
            return Err(Error::Input(format!(
                "waveform must have 1 or 2 channels, got {}",
                channels.len()
            )));
        }
        if sample_rate == 0 {
            return Err(Error::Input("sample_rate must be positive".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::Input("all channels must have the same length".into()));
        }
        if channels.iter().flatten().any(|s| !s.is_finite()) {
            return Err(Error::Numerical("waveform contains non-finite samples".into()));
        }
        Ok(Self { channels, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_stereo(&self) -> bool {
        self.channels.len() == 2
    }

    pub fn left(&self) -> &[f64] {
        &self.channels[0]
    }

    pub fn right(&self) -> &[f64] {
        &self.channels[self.channels.len() - 1]
    }
}

/// Analysis settings for [`stft`]/[`istft`]. The window is always Hann.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { fft_size: 512, hop: 160 }
    }
}

impl StftConfig {
    pub fn new(fft_size: usize, hop: usize) -> Result<Self> {
        let cfg = Self { fft_size, hop };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 8 || !self.fft_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "fft_size must be a power of two >= 8, got {}",
                self.fft_size
            )));
        }
        if self.hop == 0 || self.hop > self.fft_size / 2 {
            return Err(Error::Config(format!(
                "hop must satisfy 0 < hop <= fft_size/2, got hop={} fft_size={}",
                self.hop, self.fft_size
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn frames_for(&self, signal_len: usize) -> Option<usize> {
        if signal_len < self.fft_size {
            None
        } else {
            Some((signal_len - self.fft_size) / self.hop + 1)
        }
    }

    /// Signal length exactly covered by `frames` analysis frames.
    pub fn signal_len(&self, frames: usize) -> usize {
        (frames - 1) * self.hop + self.fft_size
    }
}

/// Complex spectrogram stored as stacked real/imaginary `F x T` planes,
/// row-major with frequency as the slow axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub bins: usize,
    pub frames: usize,
    pub config: StftConfig,
}

impl Spectrogram {
    pub fn zeros(cfg: StftConfig, frames: usize) -> Self {
        let bins = cfg.bins();
        Self {
            re: vec![0.0; bins * frames],
            im: vec![0.0; bins * frames],
            bins,
            frames,
            config: cfg,
        }
    }

    pub fn at(&self, f: usize, t: usize) -> (f64, f64) {
        let i = f * self.frames + t;
        (self.re[i], self.im[i])
    }
}

/// Magnitude (non-negative) and principal-value phase planes.
#[derive(Debug, Clone, PartialEq)]
pub struct MagPhase {
    pub mag: Vec<f64>,
    pub phase: Vec<f64>,
    pub bins: usize,
    pub frames: usize,
}

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// `mix = left + right`, `diff = left - right`.
pub fn mix_and_diff(left: &[f64], right: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if left.len() != right.len() {
        return Err(Error::Shape(format!(
            "mix_and_diff: channel lengths differ ({} vs {})",
            left.len(),
            right.len()
        )));
    }
    let mix = left.iter().zip(right).map(|(l, r)| l + r).collect();
    let diff = left.iter().zip(right).map(|(l, r)| l - r).collect();
    Ok((mix, diff))
}

/// `left = (mix + diff) / 2`, `right = (mix - diff) / 2`.
pub fn recover_channels(mix: &[f64], diff: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if mix.len() != diff.len() {
        return Err(Error::Shape(format!(
            "recover_channels: lengths differ ({} vs {})",
            mix.len(),
            diff.len()
        )));
    }
    let left = mix.iter().zip(diff).map(|(m, d)| (m + d) / 2.0).collect();
    let right = mix.iter().zip(diff).map(|(m, d)| (m - d) / 2.0).collect();
    Ok((left, right))
}

/// Hann-windowed real STFT. Frame `t` covers samples `[t*hop, t*hop + fft_size)`.
pub fn stft(signal: &[f64], cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    let frames = cfg.frames_for(signal.len()).ok_or_else(|| {
        Error::Input(format!(
            "signal too short for one frame: {} < fft_size {}",
            signal.len(),
            cfg.fft_size
        ))
    })?;
    let n = cfg.fft_size;
    let bins = cfg.bins();
    let window = hann_window(n);
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let mut spec = Spectrogram::zeros(*cfg, frames);
    let mut buf = vec![Complex64::default(); n];
    for t in 0..frames {
        let start = t * cfg.hop;
        for i in 0..n {
            buf[i] = Complex64::new(signal[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        for f in 0..bins {
            spec.re[f * frames + t] = buf[f].re;
            spec.im[f * frames + t] = buf[f].im;
        }
    }
    Ok(spec)
}

/// Overlap-add synthesis with accumulated-squared-window normalization.
///
/// Output length is `(frames - 1) * hop + fft_size`. Samples where the
/// accumulated window energy vanishes (the very edges of a periodic Hann)
/// are emitted as zero.
pub fn istft(spec: &Spectrogram) -> Result<Vec<f64>> {
    let cfg = &spec.config;
    cfg.validate()?;
    let n = cfg.fft_size;
    let bins = cfg.bins();
    if spec.bins != bins || spec.re.len() != bins * spec.frames {
        return Err(Error::Shape(format!(
            "istft: plane shape {}x{} inconsistent with fft_size {}",
            spec.bins, spec.frames, n
        )));
    }
    let window = hann_window(n);
    let out_len = cfg.signal_len(spec.frames);
    let mut num = vec![0.0; out_len];
    let mut den = vec![0.0; out_len];
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(n);
    let mut buf = vec![Complex64::default(); n];
    for t in 0..spec.frames {
        for f in 0..bins {
            buf[f] = Complex64::new(spec.re[f * spec.frames + t], spec.im[f * spec.frames + t]);
        }
        // conjugate symmetry for the negative frequencies of a real signal
        for f in bins..n {
            buf[f] = buf[n - f].conj();
        }
        ifft.process(&mut buf);
        let start = t * cfg.hop;
        for i in 0..n {
            num[start + i] += buf[i].re / n as f64 * window[i];
            den[start + i] += window[i] * window[i];
        }
    }
    // the interior must be fully covered; a degenerate window/hop pair is a
    // config error rather than a silent divide-by-zero
    let interior = n..out_len.saturating_sub(n);
    if interior.clone().any(|i| den[i] < 1e-9) {
        return Err(Error::Config("istft: window/hop leaves uncovered interior samples".into()));
    }
    Ok(num
        .iter()
        .zip(&den)
        .map(|(x, d)| if *d < 1e-12 { 0.0 } else { x / d })
        .collect())
}

/// Magnitude and four-quadrant phase; a zero bin gets phase 0.
pub fn mag_phase(spec: &Spectrogram) -> MagPhase {
    let mut mag = Vec::with_capacity(spec.re.len());
    let mut phase = Vec::with_capacity(spec.re.len());
    for (&re, &im) in spec.re.iter().zip(&spec.im) {
        mag.push(re.hypot(im));
        phase.push(if re == 0.0 && im == 0.0 { 0.0 } else { im.atan2(re) });
    }
    MagPhase { mag, phase, bins: spec.bins, frames: spec.frames }
}

/// `re = mag*cos(phase)`, `im = mag*sin(phase)`.
pub fn polar_to_complex(mp: &MagPhase, cfg: StftConfig) -> Spectrogram {
    let re = mp.mag.iter().zip(&mp.phase).map(|(m, p)| m * p.cos()).collect();
    let im = mp.mag.iter().zip(&mp.phase).map(|(m, p)| m * p.sin()).collect();
    Spectrogram { re, im, bins: mp.bins, frames: mp.frames, config: cfg }
}

/// Magnitude of the analytic signal, by the FFT method: zero the negative
/// frequencies, double the positive ones.
pub fn hilbert_envelope(signal: &[f64]) -> Result<Vec<f64>> {
    let n = signal.len();
    if n < 16 {
        return Err(Error::Input(format!("hilbert_envelope: need >= 16 samples, got {n}")));
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft.process(&mut buf);
    let half = n / 2;
    for (k, v) in buf.iter_mut().enumerate() {
        if k == 0 || (n % 2 == 0 && k == half) {
            // dc and nyquist unchanged
        } else if k < half || (n % 2 == 1 && k == half) {
            *v *= 2.0;
        } else {
            *v = Complex64::default();
        }
    }
    ifft.process(&mut buf);
    Ok(buf.iter().map(|c| c.norm() / n as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_diff_trivial() {
        let s = vec![0.5, -0.25, 1.0];
        let (mix, diff) = mix_and_diff(&s, &s).unwrap();
        assert_eq!(mix, vec![1.0, -0.5, 2.0]);
        assert_eq!(diff, vec![0.0, 0.0, 0.0]);

        let (mix, diff) = mix_and_diff(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(mix, vec![1.0, 1.0]);
        assert_eq!(diff, vec![1.0, -1.0]);
    }

    #[test]
    fn recover_trivial() {
        let (l, r) = recover_channels(&[2.0, 2.0], &[2.0, -2.0]).unwrap();
        assert_eq!(l, vec![2.0, 0.0]);
        assert_eq!(r, vec![0.0, 2.0]);

        let (l, r) = recover_channels(&[0.4, -0.6], &[0.0, 0.0]).unwrap();
        assert_eq!(l, r);
        assert_eq!(l, vec![0.2, -0.3]);
    }

    #[test]
    fn length_mismatch_is_shape_error() {
        assert!(matches!(mix_and_diff(&[1.0], &[1.0, 2.0]), Err(Error::Shape(_))));
        assert!(matches!(recover_channels(&[1.0], &[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn stft_zero_signal() {
        let cfg = StftConfig::new(64, 16).unwrap();
        let spec = stft(&vec![0.0; 256], &cfg).unwrap();
        assert!(spec.re.iter().chain(&spec.im).all(|&x| x == 0.0));
        assert_eq!(spec.bins, 33);
        assert_eq!(spec.frames, 13);
    }

    #[test]
    fn stft_too_short_is_input_error() {
        let cfg = StftConfig::new(64, 16).unwrap();
        assert!(matches!(stft(&vec![0.0; 63], &cfg), Err(Error::Input(_))));
    }

    #[test]
    fn stft_bin_concentration() {
        // sine at an exact bin frequency concentrates its frame energy there
        let cfg = StftConfig::new(128, 32).unwrap();
        let k = 5;
        let signal: Vec<f64> = (0..512)
            .map(|n| (2.0 * std::f64::consts::PI * k as f64 * n as f64 / 128.0).sin())
            .collect();
        let spec = stft(&signal, &cfg).unwrap();
        let t = 3;
        let energy: Vec<f64> = (0..spec.bins)
            .map(|f| {
                let (re, im) = spec.at(f, t);
                re * re + im * im
            })
            .collect();
        let total: f64 = energy.iter().sum();
        // the Hann window leaks into the two neighbouring bins; the main
        // lobe (k-1..=k+1) still carries essentially all the energy
        let lobe = energy[k - 1] + energy[k] + energy[k + 1];
        assert!(lobe / total >= 0.99, "main lobe holds {} of energy", lobe / total);
        let argmax = (0..spec.bins).max_by(|&a, &b| energy[a].total_cmp(&energy[b])).unwrap();
        assert_eq!(argmax, k);
    }

    #[test]
    fn istft_zero_spectrogram() {
        let cfg = StftConfig::new(64, 16).unwrap();
        let spec = Spectrogram::zeros(cfg, 8);
        let x = istft(&spec).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
        assert_eq!(x.len(), cfg.signal_len(8));
    }

    #[test]
    fn istft_linearity() {
        let cfg = StftConfig::new(64, 16).unwrap();
        let mut rng_state = 12345u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (rng_state >> 33) as f64 / (1u64 << 31) as f64 - 1.0
        };
        let x1: Vec<f64> = (0..320).map(|_| next()).collect();
        let x2: Vec<f64> = (0..320).map(|_| next()).collect();
        let s1 = stft(&x1, &cfg).unwrap();
        let s2 = stft(&x2, &cfg).unwrap();
        let (a, b) = (0.7, -1.3);
        let mut s3 = s1.clone();
        for i in 0..s3.re.len() {
            s3.re[i] = a * s1.re[i] + b * s2.re[i];
            s3.im[i] = a * s1.im[i] + b * s2.im[i];
        }
        let y1 = istft(&s1).unwrap();
        let y2 = istft(&s2).unwrap();
        let y3 = istft(&s3).unwrap();
        for i in 0..y3.len() {
            assert!((y3[i] - (a * y1[i] + b * y2[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn mag_phase_examples() {
        let cfg = StftConfig::new(64, 16).unwrap();
        let mut spec = Spectrogram::zeros(cfg, 1);
        spec.re[0] = 1.0; // (1, 0)
        spec.im[1] = 1.0; // (0, 1)
        spec.re[2] = 3.0;
        spec.im[2] = 4.0; // (3, 4)
        let mp = mag_phase(&spec);
        assert_eq!(mp.mag[0], 1.0);
        assert_eq!(mp.phase[0], 0.0);
        assert_eq!(mp.mag[1], 1.0);
        assert!((mp.phase[1] - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert_eq!(mp.mag[2], 5.0);
        assert!((mp.phase[2] - 0.9272952180016122).abs() < 1e-12);
        // zero bin gets phase 0
        assert_eq!(mp.phase[3], 0.0);
    }

    #[test]
    fn polar_trivial() {
        let cfg = StftConfig::new(64, 16).unwrap();
        let mp = MagPhase { mag: vec![1.0, 0.0], phase: vec![0.0, 2.0], bins: 1, frames: 2 };
        let spec = polar_to_complex(&mp, cfg);
        assert_eq!((spec.re[0], spec.im[0]), (1.0, 0.0));
        assert_eq!((spec.re[1], spec.im[1]), (0.0, 0.0));
    }

    #[test]
    fn envelope_of_pure_tone() {
        let fs = 16_000.0;
        let a = 0.8;
        let signal: Vec<f64> = (0..1024)
            .map(|n| a * (2.0 * std::f64::consts::PI * 1000.0 * n as f64 / fs).cos())
            .collect();
        let env = hilbert_envelope(&signal).unwrap();
        for &e in &env[128..896] {
            assert!((e - a).abs() / a < 0.02, "envelope {e} vs {a}");
        }
    }

    #[test]
    fn envelope_edge_cases() {
        assert!(matches!(hilbert_envelope(&[0.0; 8]), Err(Error::Input(_))));
        let env = hilbert_envelope(&[0.0; 64]).unwrap();
        assert!(env.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn waveform_invariants() {
        assert!(Waveform::new(vec![], 16_000).is_err());
        assert!(Waveform::new(vec![vec![0.0]; 3], 16_000).is_err());
        assert!(Waveform::stereo(vec![0.0; 4], vec![0.0; 5], 16_000).is_err());
        assert!(Waveform::mono(vec![f64::NAN], 16_000).is_err());
        assert!(Waveform::mono(vec![0.0], 0).is_err());
    }
}
