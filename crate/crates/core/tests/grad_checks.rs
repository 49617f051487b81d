//! Finite-difference verification of every tape primitive and of composite
//! graphs up to the full model loss.

use binaural_core::autodiff::{check_gradients, Tape, Tensor};
use binaural_core::gradcheck::{self, STEP, TOLERANCE};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn every_primitive_passes() {
    for seed in [1u64, 2] {
        for r in gradcheck::primitive_checks(seed) {
            assert!(
                r.passed(),
                "{} (seed {seed}): max rel err {} > {TOLERANCE}",
                r.name,
                r.max_rel_err
            );
        }
    }
}

#[test]
fn composite_mask_and_losses() {
    // complex-mask application followed by the reconstruction loss shape
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let m = Tensor::randn(&mut rng, &[2, 4, 3], 0.7);
    let a = Tensor::randn(&mut rng, &[2, 4, 3], 1.0);
    let target = Tensor::randn(&mut rng, &[2, 4, 3], 1.0);
    let err = check_gradients(
        |t, v| {
            let m = t.tanh(v[0]);
            let m_re = t.narrow(m, 0, 0, 1);
            let m_im = t.narrow(m, 0, 1, 1);
            let av = t.input(a.clone());
            let a_re = t.narrow(av, 0, 0, 1);
            let a_im = t.narrow(av, 0, 1, 1);
            let rr = t.mul(m_re, a_re);
            let ii = t.mul(m_im, a_im);
            let ri = t.mul(m_re, a_im);
            let ir = t.mul(m_im, a_re);
            let out_re = t.sub(rr, ii);
            let out_im = t.add(ri, ir);
            let out = t.concat(0, &[out_re, out_im]);
            let tv = t.input(target.clone());
            let d = t.sub(out, tv);
            let d2 = t.mul(d, d);
            t.mean_all(d2)
        },
        &[m],
        STEP,
        10_000,
        0,
    );
    assert!(err <= TOLERANCE, "mask+loss composite: {err}");
}

#[test]
fn transformer_block_composite() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x = Tensor::randn(&mut rng, &[5, 6], 1.0);
    let wq = Tensor::randn(&mut rng, &[6, 6], 0.4);
    let wk = Tensor::randn(&mut rng, &[6, 6], 0.4);
    let wv = Tensor::randn(&mut rng, &[6, 6], 0.4);
    let g = Tensor::randn(&mut rng, &[6], 0.3);
    let b = Tensor::randn(&mut rng, &[6], 0.3);
    let bias = Tensor::zeros(&[6]);
    let err = check_gradients(
        |t, v| {
            let n = t.layer_norm_rows(v[0], v[4], v[5]);
            let q = t.linear_rows(n, v[1], v[6]);
            let k = t.linear_rows(n, v[2], v[6]);
            let val = t.linear_rows(n, v[3], v[6]);
            let kt = t.transpose(k);
            let s = t.matmul(q, kt);
            let s = t.mul_scalar(s, 1.0 / 6f64.sqrt());
            let w = t.softmax_rows(s);
            let mixed = t.matmul(w, val);
            let y = t.add(v[0], mixed);
            let y2 = t.mul(y, y);
            t.mean_all(y2)
        },
        &[x, wq, wk, wv, g, b, bias],
        STEP,
        10_000,
        3,
    );
    assert!(err <= TOLERANCE, "transformer composite: {err}");
}

#[test]
fn full_model_loss_passes() {
    let r = gradcheck::full_model_check(11, 150).unwrap();
    assert!(r.passed(), "full model: max rel err {}", r.max_rel_err);
}

#[test]
fn full_model_single_decoder_and_ablations() {
    use binaural_core::model::{self, compute_losses, DecoderMode, LossWeights, ModelConfig, Params};
    for (mode, use_image, use_depth) in [
        (DecoderMode::Single, true, true),
        (DecoderMode::Triple, false, true),
        (DecoderMode::Triple, false, false),
    ] {
        let mut cfg = ModelConfig::toy();
        cfg.decoder_mode = mode;
        cfg.use_image = use_image;
        cfg.use_depth = use_depth;
        let params = Params::init(&cfg, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let mix = Tensor::randn(&mut rng, &[2, 32, 32], 1.0);
        let target = Tensor::randn(&mut rng, &[2, 32, 32], 1.0);
        let image = Tensor::randn(&mut rng, &[3, 32, 32], 0.3);
        let depth = Tensor::randn(&mut rng, &[1, 32, 32], 0.3);
        let names: Vec<String> = params.map.keys().cloned().collect();
        let values: Vec<Tensor> = params.map.values().cloned().collect();
        let err = check_gradients(
            |t, vars| {
                let vm: model::VarMap =
                    names.iter().cloned().zip(vars.iter().copied()).collect();
                let out = model::forward(
                    t,
                    &vm,
                    &cfg,
                    &mix,
                    use_image.then_some(&image),
                    use_depth.then_some(&depth),
                    false,
                )
                .unwrap();
                compute_losses(t, &out, &target, &LossWeights::default()).unwrap().total
            },
            &values,
            STEP,
            120,
            7,
        );
        assert!(
            err <= TOLERANCE,
            "mode {mode:?} img {use_image} dep {use_depth}: max rel err {err}"
        );
    }
}
