//! The mono-to-binaural network: audio encoder over STFT planes, patch
//! transformer encoders over the image and depth views, per-layer cosine
//! cross-modal attention, and mask-predicting decoder heads.

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::dsp::{self, Spectrogram, StftConfig, Waveform};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecoderMode {
    /// Separate decoder trunks for the complex mask, magnitude and phase.
    Triple,
    /// One trunk; magnitude and phase are derived from the masked spectrum.
    Single,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Base channel width of the audio encoder/decoder.
    pub d: usize,
    /// Square patch size for the view encoders.
    pub patch: usize,
    /// Token embedding width inside the view transformers.
    pub view_embed: usize,
    /// Number of transformer blocks (each one is tapped for features).
    pub n_view_blocks: usize,
    /// Side length of the square image and depth inputs.
    pub image_size: usize,
    pub fft_size: usize,
    pub hop: usize,
    pub decoder_mode: DecoderMode,
    pub use_image: bool,
    pub use_depth: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 8,
            patch: 8,
            view_embed: 16,
            n_view_blocks: 4,
            image_size: 32,
            fft_size: 512,
            hop: 160,
            decoder_mode: DecoderMode::Single,
            use_image: true,
            use_depth: true,
        }
    }
}

impl ModelConfig {
    /// Small configuration for gradient checks and fast trend experiments.
    pub fn toy() -> Self {
        Self { fft_size: 64, hop: 16, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.view_embed == 0 || self.n_view_blocks == 0 {
            return Err(Error::Config("model widths must be positive".into()));
        }
        if self.patch == 0 || self.image_size % self.patch != 0 {
            return Err(Error::Config(format!(
                "image size {} must be a multiple of patch {}",
                self.image_size, self.patch
            )));
        }
        let cfg = self.stft()?;
        if self.freq_extent(&cfg) < 32 {
            return Err(Error::Config(format!(
                "fft size {} leaves fewer than 32 usable bins",
                self.fft_size
            )));
        }
        Ok(())
    }

    pub fn stft(&self) -> Result<StftConfig> {
        StftConfig::new(self.fft_size, self.hop)
    }

    /// Frequency extent the network operates on: the bin count rounded down
    /// to a multiple of 32 so five halvings stay exact. With a power-of-two
    /// FFT this only drops the Nyquist bin.
    pub fn freq_extent(&self, stft: &StftConfig) -> usize {
        stft.bins() - stft.bins() % 32
    }

    /// Tokens per side of the view encoders.
    pub fn grid(&self) -> usize {
        self.image_size / self.patch
    }

    /// Total view tokens (`hw`).
    pub fn tokens(&self) -> usize {
        self.grid() * self.grid()
    }

    fn heads(&self) -> &'static [&'static str] {
        match self.decoder_mode {
            DecoderMode::Triple => &["mask", "mag", "phs"],
            DecoderMode::Single => &["single"],
        }
    }

    fn head_out(&self, head: &str) -> usize {
        match head {
            "mask" | "single" => 2,
            _ => 1,
        }
    }

    /// Channel count of the decoder activations entering layer `i` (1-based).
    fn c_act(&self, i: usize) -> usize {
        [4 * self.d, 4 * self.d, 4 * self.d, 2 * self.d, self.d][i - 1]
    }

    /// Output channels of decoder layer `i` for a given head.
    fn dec_out(&self, head: &str, i: usize) -> usize {
        if i == 5 {
            self.head_out(head)
        } else {
            [4 * self.d, 4 * self.d, 2 * self.d, self.d][i - 1]
        }
    }

    /// Encoder channel widths, layers 1..=5.
    fn enc_ch(&self, i: usize) -> usize {
        [self.d, 2 * self.d, 4 * self.d, 4 * self.d, 4 * self.d][i - 1]
    }
}

pub type VarMap = IndexMap<String, Var>;

/// Named parameter store. Insertion order is the canonical serialization
/// order, so initialization must be deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub map: IndexMap<String, Tensor>,
}

impl Params {
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut map = IndexMap::new();
        let d = cfg.d;
        let e = cfg.view_embed;
        let hw = cfg.tokens();
        let k = 4usize;

        let conv = |map: &mut IndexMap<String, Tensor>,
                        rng: &mut ChaCha8Rng,
                        name: &str,
                        shape: [usize; 4],
                        fan_in: usize,
                        bias: usize| {
            map.insert(format!("{name}.w"), Tensor::he_init(rng, &shape, fan_in));
            map.insert(format!("{name}.b"), Tensor::zeros(&[bias]));
        };
        let linear = |map: &mut IndexMap<String, Tensor>,
                          rng: &mut ChaCha8Rng,
                          name: &str,
                          out: usize,
                          inp: usize| {
            map.insert(format!("{name}.w"), Tensor::he_init(rng, &[out, inp], inp));
            map.insert(format!("{name}.b"), Tensor::zeros(&[out]));
        };

        // audio encoder
        let mut in_ch = 2;
        for i in 1..=5 {
            let out = cfg.enc_ch(i);
            conv(&mut map, &mut rng, &format!("enc.conv{i}"), [out, in_ch, k, k], in_ch * k * k, out);
            in_ch = out;
        }

        // view encoders (image: 3 channels, depth: 1 channel)
        for (m, ch) in [("img", 3usize), ("dep", 1usize)] {
            let p = cfg.patch;
            conv(&mut map, &mut rng, &format!("{m}.patch"), [e, ch, p, p], ch * p * p, e);
            map.insert(format!("{m}.pos"), Tensor::randn(&mut rng, &[hw, e], 0.02));
            for b in 1..=cfg.n_view_blocks {
                let pre = format!("{m}.blk{b}");
                map.insert(format!("{pre}.ln1.g"), Tensor::full(&[e], 1.0));
                map.insert(format!("{pre}.ln1.b"), Tensor::zeros(&[e]));
                for part in ["q", "k", "v", "o"] {
                    linear(&mut map, &mut rng, &format!("{pre}.attn.{part}"), e, e);
                }
                map.insert(format!("{pre}.ln2.g"), Tensor::full(&[e], 1.0));
                map.insert(format!("{pre}.ln2.b"), Tensor::zeros(&[e]));
                linear(&mut map, &mut rng, &format!("{pre}.ffn.l1"), 2 * e, e);
                linear(&mut map, &mut rng, &format!("{pre}.ffn.l2"), e, 2 * e);
            }
            for b in 1..=cfg.n_view_blocks {
                linear(&mut map, &mut rng, &format!("{m}.tap{b}"), d, e);
            }
        }

        // decoder trunks
        let att_ch = 2 * hw;
        for head in cfg.heads() {
            for i in 1..=5 {
                let skip = if i >= 2 { cfg.c_act(i) } else { 0 };
                let cin = att_ch + cfg.c_act(i) + skip;
                let out = cfg.dec_out(head, i);
                conv(
                    &mut map,
                    &mut rng,
                    &format!("{head}.dec{i}"),
                    [cin, out, k, k],
                    cin * k * k,
                    out,
                );
                if i >= 2 {
                    for m in ["img", "dep"] {
                        linear(
                            &mut map,
                            &mut rng,
                            &format!("{head}.align{i}.{m}"),
                            cfg.c_act(i),
                            cfg.n_view_blocks * d,
                        );
                    }
                }
            }
        }

        Ok(Self { map })
    }

    /// Register every parameter on a tape, returning name -> Var.
    pub fn watch(&self, tape: &mut Tape) -> VarMap {
        self.map.iter().map(|(k, v)| (k.clone(), tape.input(v.clone()))).collect()
    }

    pub fn numel(&self) -> usize {
        self.map.values().map(Tensor::numel).sum()
    }
}

fn v(vars: &VarMap, name: &str) -> Var {
    *vars.get(name).unwrap_or_else(|| panic!("missing parameter '{name}'"))
}

/// One recorded cross-modal attention map.
#[derive(Debug, Clone)]
pub struct LayerAttention {
    pub head: String,
    pub layer: usize,
    pub modality: String,
    /// `[hw, f_i, t_i]` cosine similarities in `[-1, 1]`.
    pub map: Tensor,
}

impl LayerAttention {
    /// Average attention each view token receives over all time-frequency
    /// positions, as an `h x w` grid (row-major).
    pub fn token_weights(&self, grid: usize) -> Vec<f64> {
        let hw = self.map.shape[0];
        assert_eq!(hw, grid * grid);
        let per = self.map.numel() / hw;
        (0..hw)
            .map(|t| self.map.data[t * per..(t + 1) * per].iter().sum::<f64>() / per as f64)
            .collect()
    }
}

pub struct ForwardOutput {
    /// Masked difference-spectrum planes `[2, Fc, T]`.
    pub pred: Var,
    /// Complex ratio mask `[2, Fc, T]`, entries in `[-1, 1]`.
    pub mask: Var,
    /// Predicted magnitude `[1, Fc, T]` (non-negative).
    pub mag: Var,
    /// Predicted phase `[1, Fc, T]` in `[-pi, pi]`.
    pub phase: Var,
    pub attention: Vec<LayerAttention>,
}

fn audio_encoder(tape: &mut Tape, vars: &VarMap, x: Var) -> [Var; 5] {
    let mut acts = Vec::with_capacity(5);
    let mut cur = x;
    for i in 1..=5 {
        let w = v(vars, &format!("enc.conv{i}.w"));
        let b = v(vars, &format!("enc.conv{i}.b"));
        let y = tape.conv2d(cur, w, b, 2, 1);
        cur = tape.leaky_relu(y, 0.2);
        acts.push(cur);
    }
    acts.try_into().unwrap()
}

/// Patch-embed + transformer over one view; returns `[n_blocks*d, hw]`
/// features (every block tapped, projected to `d`, concatenated).
fn view_encoder(tape: &mut Tape, vars: &VarMap, cfg: &ModelConfig, m: &str, input: Var) -> Var {
    let hw = cfg.tokens();
    let e = cfg.view_embed;
    let pw = v(vars, &format!("{m}.patch.w"));
    let pb = v(vars, &format!("{m}.patch.b"));
    let embedded = tape.conv2d(input, pw, pb, cfg.patch, 0); // [e, g, g]
    let flat = tape.reshape(embedded, &[e, hw]);
    let tokens = tape.transpose(flat); // [hw, e]
    let pos = v(vars, &format!("{m}.pos"));
    let mut x = tape.add(tokens, pos);

    let scale = 1.0 / (e as f64).sqrt();
    let mut taps = Vec::with_capacity(cfg.n_view_blocks);
    for b in 1..=cfg.n_view_blocks {
        let pre = format!("{m}.blk{b}");
        let n1 = tape.layer_norm_rows(x, v(vars, &format!("{pre}.ln1.g")), v(vars, &format!("{pre}.ln1.b")));
        let q = tape.linear_rows(n1, v(vars, &format!("{pre}.attn.q.w")), v(vars, &format!("{pre}.attn.q.b")));
        let k = tape.linear_rows(n1, v(vars, &format!("{pre}.attn.k.w")), v(vars, &format!("{pre}.attn.k.b")));
        let val = tape.linear_rows(n1, v(vars, &format!("{pre}.attn.v.w")), v(vars, &format!("{pre}.attn.v.b")));
        let kt = tape.transpose(k);
        let scores = tape.matmul(q, kt);
        let scores = tape.mul_scalar(scores, scale);
        let weights = tape.softmax_rows(scores);
        let mixed = tape.matmul(weights, val);
        let proj = tape.linear_rows(mixed, v(vars, &format!("{pre}.attn.o.w")), v(vars, &format!("{pre}.attn.o.b")));
        x = tape.add(x, proj);

        let n2 = tape.layer_norm_rows(x, v(vars, &format!("{pre}.ln2.g")), v(vars, &format!("{pre}.ln2.b")));
        let h1 = tape.linear_rows(n2, v(vars, &format!("{pre}.ffn.l1.w")), v(vars, &format!("{pre}.ffn.l1.b")));
        let h1 = tape.gelu(h1);
        let h2 = tape.linear_rows(h1, v(vars, &format!("{pre}.ffn.l2.w")), v(vars, &format!("{pre}.ffn.l2.b")));
        x = tape.add(x, h2);

        let tap = tape.linear_rows(x, v(vars, &format!("{m}.tap{b}.w")), v(vars, &format!("{m}.tap{b}.b")));
        taps.push(tape.transpose(tap)); // [d, hw]
    }
    tape.concat(0, &taps) // [n_blocks*d, hw]
}

/// Cosine-similarity attention between aligned view tokens `[c, hw]` and
/// decoder activations `[c, f, t]`, producing `[hw, f, t]`.
fn attention_map(tape: &mut Tape, view: Var, act: Var) -> Var {
    let (c, f, t) = {
        let s = tape.shape(act);
        (s[0], s[1], s[2])
    };
    let hw = tape.shape(view)[1];
    let act_flat = tape.reshape(act, &[c, f * t]);
    let vn = tape.l2_normalize_cols(view);
    let an = tape.l2_normalize_cols(act_flat);
    let vt = tape.transpose(vn);
    let sim = tape.matmul(vt, an); // [hw, f*t]
    tape.reshape(sim, &[hw, f, t])
}

#[allow(clippy::too_many_arguments)]
fn decoder_trunk(
    tape: &mut Tape,
    vars: &VarMap,
    cfg: &ModelConfig,
    head: &str,
    enc: &[Var; 5],
    img_feat: Option<Var>,
    dep_feat: Option<Var>,
    records: Option<&mut Vec<LayerAttention>>,
) -> Var {
    let hw = cfg.tokens();
    let mut records = records;
    let mut cur = enc[4];
    for i in 1..=5 {
        let (f_i, t_i) = {
            let s = tape.shape(cur);
            (s[1], s[2])
        };
        let mut att_maps = Vec::with_capacity(2);
        for (m, feat) in [("img", img_feat), ("dep", dep_feat)] {
            let map = match feat {
                Some(feat) => {
                    let aligned = if i == 1 {
                        feat
                    } else {
                        let w = v(vars, &format!("{head}.align{i}.{m}.w"));
                        let b = v(vars, &format!("{head}.align{i}.{m}.b"));
                        let ft = tape.transpose(feat); // [hw, 4d]
                        let lin = tape.linear_rows(ft, w, b); // [hw, c_i]
                        let lin = tape.gelu(lin);
                        tape.transpose(lin) // [c_i, hw]
                    };
                    let raw = attention_map(tape, aligned, cur);
                    tape.bilinear_resize(raw, f_i, t_i)
                }
                None => tape.input(Tensor::zeros(&[hw, f_i, t_i])),
            };
            if let Some(recs) = records.as_deref_mut() {
                recs.push(LayerAttention {
                    head: head.to_string(),
                    layer: i,
                    modality: m.to_string(),
                    map: tape.value(map).clone(),
                });
            }
            att_maps.push(map);
        }
        let fused = tape.concat(0, &att_maps); // [2hw, f_i, t_i]

        let mut pieces = vec![fused, cur];
        if i >= 2 {
            pieces.push(enc[5 - i]); // encoder skip, layer 6-i
        }
        let stacked = tape.concat(0, &pieces);
        let w = v(vars, &format!("{head}.dec{i}.w"));
        let b = v(vars, &format!("{head}.dec{i}.b"));
        let y = tape.deconv2d(stacked, w, b, 2, 1);
        cur = if i < 5 { tape.leaky_relu(y, 0.2) } else { y };
    }
    cur
}

/// Run the network on cropped mix-spectrum planes `[2, Fc, T]` plus optional
/// views (`[3, H, W]` image, `[1, H, W]` normalized depth). `Fc` and `T`
/// must both be multiples of 32.
pub fn forward(
    tape: &mut Tape,
    vars: &VarMap,
    cfg: &ModelConfig,
    mix_planes: &Tensor,
    image: Option<&Tensor>,
    depth: Option<&Tensor>,
    record_attention: bool,
) -> Result<ForwardOutput> {
    let shape = mix_planes.shape.clone();
    if shape.len() != 3 || shape[0] != 2 || shape[1] % 32 != 0 || shape[2] % 32 != 0 {
        return Err(Error::Input(format!(
            "forward: expected [2, Fc, T] planes with Fc and T multiples of 32, got {shape:?}"
        )));
    }
    let hs = cfg.image_size;
    for (name, t, ch, used) in
        [("image", image, 3usize, cfg.use_image), ("depth", depth, 1usize, cfg.use_depth)]
    {
        if used {
            let Some(t) = t else {
                return Err(Error::Input(format!("forward: {name} view required but missing")));
            };
            if t.shape != vec![ch, hs, hs] {
                return Err(Error::Input(format!(
                    "forward: {name} view shape {:?}, expected [{ch}, {hs}, {hs}]",
                    t.shape
                )));
            }
        }
    }

    let x = tape.input(mix_planes.clone());
    let enc = audio_encoder(tape, vars, x);

    let img_feat = if cfg.use_image {
        let iv = tape.input(image.unwrap().clone());
        Some(view_encoder(tape, vars, cfg, "img", iv))
    } else {
        None
    };
    let dep_feat = if cfg.use_depth {
        let dv = tape.input(depth.unwrap().clone());
        Some(view_encoder(tape, vars, cfg, "dep", dv))
    } else {
        None
    };

    let (fc, t) = (shape[1], shape[2]);
    let a_re = tape.narrow(x, 0, 0, 1);
    let a_im = tape.narrow(x, 0, 1, 1);
    let mut attention = Vec::new();
    macro_rules! recs {
        () => {
            if record_attention { Some(&mut attention) } else { None }
        };
    }

    // complex-mask application: pred = M * A over the stacked planes
    let apply_mask = |tape: &mut Tape, mask_raw: Var| -> (Var, Var) {
        let m = tape.tanh(mask_raw);
        let m_re = tape.narrow(m, 0, 0, 1);
        let m_im = tape.narrow(m, 0, 1, 1);
        let rr = tape.mul(m_re, a_re);
        let ii = tape.mul(m_im, a_im);
        let ri = tape.mul(m_re, a_im);
        let ir = tape.mul(m_im, a_re);
        let out_re = tape.sub(rr, ii);
        let out_im = tape.add(ri, ir);
        (tape.concat(0, &[out_re, out_im]), m)
    };

    let (pred, mask, mag, phase) = match cfg.decoder_mode {
        DecoderMode::Triple => {
            let mask_raw =
                decoder_trunk(tape, vars, cfg, "mask", &enc, img_feat, dep_feat, recs!());
            let (pred, mask) = apply_mask(tape, mask_raw);
            let mag_raw =
                decoder_trunk(tape, vars, cfg, "mag", &enc, img_feat, dep_feat, recs!());
            let mag = tape.relu(mag_raw);
            let phs_raw =
                decoder_trunk(tape, vars, cfg, "phs", &enc, img_feat, dep_feat, recs!());
            let phs = tape.tanh(phs_raw);
            let phase = tape.mul_scalar(phs, std::f64::consts::PI);
            (pred, mask, mag, phase)
        }
        DecoderMode::Single => {
            let raw = decoder_trunk(
                tape,
                vars,
                cfg,
                "single",
                &enc,
                img_feat,
                dep_feat,
                recs!(),
            );
            let (pred, mask) = apply_mask(tape, raw);
            let p_re = tape.narrow(pred, 0, 0, 1);
            let p_im = tape.narrow(pred, 0, 1, 1);
            let re2 = tape.mul(p_re, p_re);
            let im2 = tape.mul(p_im, p_im);
            let power = tape.add(re2, im2);
            let mag = tape.sqrt_eps(power, 1e-12);
            let phase = tape.atan2(p_im, p_re);
            (pred, mask, mag, phase)
        }
    };

    debug_assert_eq!(tape.shape(pred), &[2, fc, t]);
    Ok(ForwardOutput { pred, mask, mag, phase, attention })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha_mag: f64,
    pub alpha_phs: f64,
    pub alpha_rec: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha_mag: 1.0, alpha_phs: 1.0, alpha_rec: 1.0 }
    }
}

pub struct Losses {
    pub l_stft: Var,
    pub l_mag: Var,
    pub l_phs: Var,
    pub l_rec: Var,
    pub total: Var,
}

/// Mean-squared losses of the forward output against the target
/// difference-spectrum planes `[2, Fc, T]`.
pub fn compute_losses(
    tape: &mut Tape,
    out: &ForwardOutput,
    target: &Tensor,
    w: &LossWeights,
) -> Result<Losses> {
    if tape.shape(out.pred) != target.shape.as_slice() {
        return Err(Error::Input(format!(
            "compute_losses: prediction {:?} vs target {:?}",
            tape.shape(out.pred),
            target.shape
        )));
    }
    let (fc, t) = (target.shape[1], target.shape[2]);
    let n = fc * t;
    let (t_re, t_im) = (&target.data[..n], &target.data[n..]);
    let t_mag: Vec<f64> =
        (0..n).map(|i| (t_re[i] * t_re[i] + t_im[i] * t_im[i]).sqrt()).collect();
    let t_phs: Vec<f64> = (0..n).map(|i| t_im[i].atan2(t_re[i])).collect();

    let tv = tape.input(target.clone());
    let tm = tape.input(Tensor::new(vec![1, fc, t], t_mag));
    let tp = tape.input(Tensor::new(vec![1, fc, t], t_phs));

    let msq = |tape: &mut Tape, a: Var, b: Var| -> Var {
        let d = tape.sub(a, b);
        let d2 = tape.mul(d, d);
        tape.mean_all(d2)
    };

    let l_stft = msq(tape, out.pred, tv);
    let l_mag = msq(tape, out.mag, tm);
    let l_phs = msq(tape, out.phase, tp);

    let cosp = tape.cos(out.phase);
    let sinp = tape.sin(out.phase);
    let rec_re = tape.mul(out.mag, cosp);
    let rec_im = tape.mul(out.mag, sinp);
    let rec = tape.concat(0, &[rec_re, rec_im]);
    let l_rec = msq(tape, rec, tv);

    let wm = tape.mul_scalar(l_mag, w.alpha_mag);
    let wp = tape.mul_scalar(l_phs, w.alpha_phs);
    let wr = tape.mul_scalar(l_rec, w.alpha_rec);
    let s1 = tape.add(l_stft, wm);
    let s2 = tape.add(s1, wp);
    let total = tape.add(s2, wr);
    Ok(Losses { l_stft, l_mag, l_phs, l_rec, total })
}

/// Stack a spectrogram into `[2, Fc, T]` planes cropped to the network's
/// frequency extent.
pub fn planes_from_spectrogram(spec: &Spectrogram, fc: usize) -> Tensor {
    let (bins, frames) = (spec.bins, spec.frames);
    assert!(fc <= bins);
    let mut data = Vec::with_capacity(2 * fc * frames);
    data.extend_from_slice(&spec.re[..fc * frames]);
    data.extend_from_slice(&spec.im[..fc * frames]);
    Tensor::new(vec![2, fc, frames], data)
}

/// Inverse of [`planes_from_spectrogram`]: restore full bin count, zeroing
/// the cropped top bins.
pub fn spectrogram_from_planes(planes: &Tensor, cfg: &StftConfig) -> Spectrogram {
    let (fc, frames) = (planes.shape[1], planes.shape[2]);
    let bins = cfg.bins();
    assert!(fc <= bins);
    let mut re = vec![0.0; bins * frames];
    let mut im = vec![0.0; bins * frames];
    re[..fc * frames].copy_from_slice(&planes.data[..fc * frames]);
    im[..fc * frames].copy_from_slice(&planes.data[fc * frames..]);
    Spectrogram { re, im, bins, frames, config: *cfg }
}

/// Normalize a raw depth map (meters, row-major `size x size`) into the
/// network's `[1, size, size]` input plane.
pub fn depth_plane(depth_m: &[f64], size: usize) -> Result<Tensor> {
    if depth_m.len() != size * size {
        return Err(Error::Input(format!(
            "depth map has {} values, expected {}",
            depth_m.len(),
            size * size
        )));
    }
    let data: Vec<f64> =
        depth_m.iter().map(|d| (d / crate::scene::DEPTH_MAX).clamp(0.0, 1.0)).collect();
    Ok(Tensor::new(vec![1, size, size], data))
}

/// Number of samples a clip must have so its STFT frame count is a multiple
/// of 32 (required by the encoder), for the largest frame count not
/// exceeding the one implied by `len`.
pub fn usable_len(len: usize, cfg: &StftConfig) -> Option<usize> {
    if len < cfg.fft_size {
        return None;
    }
    let frames = (len - cfg.fft_size) / cfg.hop + 1;
    let frames = frames - frames % 32;
    if frames == 0 {
        None
    } else {
        Some((frames - 1) * cfg.hop + cfg.fft_size)
    }
}

/// End-to-end inference: mono clip + views -> stereo clip. The two output
/// channels sum exactly to the input mono signal.
pub fn predict_binaural(
    params: &Params,
    cfg: &ModelConfig,
    mono: &[f64],
    image: Option<&Tensor>,
    depth: Option<&Tensor>,
    sample_rate: u32,
) -> Result<Waveform> {
    let stft_cfg = cfg.stft()?;
    let Some(len) = usable_len(mono.len(), &stft_cfg) else {
        return Err(Error::Input(format!(
            "mono clip of {} samples is too short for fft {} hop {} (need 32 frames)",
            mono.len(),
            stft_cfg.fft_size,
            stft_cfg.hop
        )));
    };
    if len != mono.len() {
        return Err(Error::Input(format!(
            "mono clip length {} does not map to a whole multiple-of-32 frame count; \
             nearest usable length is {len}",
            mono.len()
        )));
    }

    let spec = dsp::stft(mono, &stft_cfg)?;
    let fc = cfg.freq_extent(&stft_cfg);
    let planes = planes_from_spectrogram(&spec, fc);

    let mut tape = Tape::new();
    let vars = params.watch(&mut tape);
    let out = forward(&mut tape, &vars, cfg, &planes, image, depth, false)?;
    let pred = tape.value(out.pred).clone();

    let diff_spec = spectrogram_from_planes(&pred, &stft_cfg);
    let diff = dsp::istft(&diff_spec)?;
    let n = mono.len().min(diff.len());
    let (l, r) = dsp::recover_channels(&mono[..n], &diff[..n])?;
    Waveform::stereo(l, r, sample_rate)
}
