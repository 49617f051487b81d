//! Ready-made finite-difference checks: one per tape primitive, plus the
//! full model with its four-term loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{check_gradients, Tape, Tensor, Var};
use crate::error::Result;
use crate::model::{self, compute_losses, LossWeights, ModelConfig, Params};

pub const TOLERANCE: f64 = 1e-6;
pub const STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_err: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= TOLERANCE
    }
}

/// Deterministic pseudo-random projection so every output coordinate
/// contributes to the scalar loss with a distinct weight.
fn proj_loss(tape: &mut Tape, out: Var, salt: u64) -> Var {
    let shape = tape.shape(out).to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(xp_as_u64(salt));
    let c = Tensor::randn(&mut rng, &shape, 1.0);
    let cv = tape.input(c);
    let p = tape.mul(out, cv);
    tape.sum_all(p)
}

fn xp_as_u64(salt: u64) -> u64 {
    salt.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1)
}

/// Check the gradient of a single-tensor op under a random projection loss.
fn check1(
    name: &str,
    shape: &[usize],
    seed: u64,
    f: impl Fn(&mut Tape, Var) -> Var,
) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::randn(&mut rng, shape, 1.0);
    let err = check_gradients(
        |tape, vars| {
            let y = f(tape, vars[0]);
            proj_loss(tape, y, seed)
        },
        &[x],
        STEP,
        10_000,
        seed,
    );
    CheckResult { name: name.to_string(), max_rel_err: err }
}

fn check_n(
    name: &str,
    inputs: Vec<Tensor>,
    seed: u64,
    f: impl Fn(&mut Tape, &[Var]) -> Var,
) -> CheckResult {
    let err = check_gradients(
        |tape, vars| {
            let y = f(tape, vars);
            proj_loss(tape, y, seed)
        },
        &inputs,
        STEP,
        10_000,
        seed,
    );
    CheckResult { name: name.to_string(), max_rel_err: err }
}

/// Run every primitive through the finite-difference checker.
pub fn primitive_checks(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut randn = |shape: &[usize], std: f64| Tensor::randn(&mut rng, shape, std);
    // inputs kept away from kinks/poles: |x| >= ~0.05 for relu/div/atan2
    let away = |t: &Tensor, floor: f64| -> Tensor {
        let data = t
            .data
            .iter()
            .map(|&v| if v.abs() < floor { floor * v.signum().max(0.5) + v } else { v })
            .collect();
        Tensor::new(t.shape.clone(), data)
    };

    let mut out = Vec::new();
    let s = seed;

    let a = randn(&[3, 4], 1.0);
    let b = away(&randn(&[3, 4], 1.0), 0.2);
    out.push(check_n("add", vec![a.clone(), b.clone()], s, |t, v| t.add(v[0], v[1])));
    out.push(check_n("sub", vec![a.clone(), b.clone()], s, |t, v| t.sub(v[0], v[1])));
    out.push(check_n("mul", vec![a.clone(), b.clone()], s, |t, v| t.mul(v[0], v[1])));
    out.push(check_n("div", vec![a.clone(), b.clone()], s, |t, v| t.div(v[0], v[1])));
    out.push(check_n("atan2", vec![away(&a, 0.2), b.clone()], s, |t, v| t.atan2(v[0], v[1])));

    out.push(check1("add_scalar", &[3, 4], s, |t, x| t.add_scalar(x, 0.7)));
    out.push(check1("mul_scalar", &[3, 4], s, |t, x| t.mul_scalar(x, -1.3)));
    out.push(check1("tanh", &[3, 4], s, |t, x| t.tanh(x)));
    out.push(check1("sigmoid", &[3, 4], s, |t, x| t.sigmoid(x)));
    out.push(check_n("relu", vec![away(&randn(&[3, 4], 1.0), 0.1)], s, |t, v| t.relu(v[0])));
    out.push(check_n("leaky_relu", vec![away(&randn(&[3, 4], 1.0), 0.1)], s, |t, v| {
        t.leaky_relu(v[0], 0.2)
    }));
    out.push(check1("gelu", &[3, 4], s, |t, x| t.gelu(x)));
    out.push(check1("exp", &[3, 4], s, |t, x| t.exp(x)));
    out.push(check1("sin", &[3, 4], s, |t, x| t.sin(x)));
    out.push(check1("cos", &[3, 4], s, |t, x| t.cos(x)));
    out.push(check_n("sqrt_eps", vec![randn(&[3, 4], 1.0)], s, |t, v| {
        let sq = t.mul(v[0], v[0]);
        t.sqrt_eps(sq, 1e-6)
    }));

    out.push(check_n("matmul", vec![randn(&[3, 5], 1.0), randn(&[5, 2], 1.0)], s, |t, v| {
        t.matmul(v[0], v[1])
    }));
    out.push(check1("transpose", &[3, 4], s, |t, x| t.transpose(x)));
    out.push(check_n(
        "conv2d",
        vec![randn(&[2, 6, 5], 1.0), randn(&[3, 2, 4, 4], 0.3), randn(&[3], 0.3)],
        s,
        |t, v| t.conv2d(v[0], v[1], v[2], 2, 1),
    ));
    out.push(check_n(
        "deconv2d",
        vec![randn(&[3, 3, 4], 1.0), randn(&[3, 2, 4, 4], 0.3), randn(&[2], 0.3)],
        s,
        |t, v| t.deconv2d(v[0], v[1], v[2], 2, 1),
    ));
    out.push(check1("bilinear_resize", &[2, 3, 4], s, |t, x| t.bilinear_resize(x, 5, 7)));

    out.push(check_n("concat", vec![randn(&[2, 3, 4], 1.0), randn(&[3, 3, 4], 1.0)], s, |t, v| {
        t.concat(0, v)
    }));
    out.push(check1("narrow", &[4, 5], s, |t, x| t.narrow(x, 1, 1, 3)));
    out.push(check1("reshape", &[3, 4], s, |t, x| t.reshape(x, &[2, 6])));
    out.push(check1("tile_rows", &[4], s, |t, x| t.tile_rows(x, 3)));
    out.push(check1("tile_cols", &[4], s, |t, x| t.tile_cols(x, 3)));
    out.push(check1("sum_rows", &[3, 4], s, |t, x| t.sum_rows(x)));
    out.push(check1("sum_cols", &[3, 4], s, |t, x| t.sum_cols(x)));
    out.push(check1("sum_all", &[3, 4], s, |t, x| t.sum_all(x)));
    out.push(check1("mean_all", &[3, 4], s, |t, x| t.mean_all(x)));
    out.push(check1("softmax_rows", &[3, 5], s, |t, x| t.softmax_rows(x)));
    out.push(check1("l2_normalize_cols", &[3, 4], s, |t, x| t.l2_normalize_cols(x)));
    out.push(check_n(
        "layer_norm_rows",
        vec![randn(&[3, 6], 1.0), randn(&[6], 0.5), randn(&[6], 0.5)],
        s,
        |t, v| t.layer_norm_rows(v[0], v[1], v[2]),
    ));
    out.push(check_n(
        "linear_rows",
        vec![randn(&[3, 4], 1.0), randn(&[5, 4], 0.5), randn(&[5], 0.5)],
        s,
        |t, v| t.linear_rows(v[0], v[1], v[2]),
    ));
    out
}

/// Finite-difference check of the full four-term loss through the whole
/// model (toy configuration), sampling coordinates across all parameters.
pub fn full_model_check(seed: u64, min_coords: usize) -> Result<CheckResult> {
    let cfg = ModelConfig::toy();
    let params = Params::init(&cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    let fc = 32;
    let t = 32;
    let mix = Tensor::randn(&mut rng, &[2, fc, t], 0.5);
    let target = Tensor::randn(&mut rng, &[2, fc, t], 0.5);
    let image = {
        let raw = Tensor::randn(&mut rng, &[3, cfg.image_size, cfg.image_size], 1.0);
        Tensor::new(raw.shape.clone(), raw.data.iter().map(|v| v.abs().fract()).collect())
    };
    let depth = {
        let raw = Tensor::randn(&mut rng, &[1, cfg.image_size, cfg.image_size], 1.0);
        Tensor::new(raw.shape.clone(), raw.data.iter().map(|v| v.abs().fract()).collect())
    };

    let names: Vec<String> = params.map.keys().cloned().collect();
    let values: Vec<Tensor> = params.map.values().cloned().collect();
    let weights = LossWeights::default();
    let err = check_gradients(
        |tape, vars| {
            let varmap: model::VarMap =
                names.iter().cloned().zip(vars.iter().copied()).collect();
            let out = forward_or_panic(tape, &varmap, &cfg, &mix, &image, &depth);
            let losses = compute_losses(tape, &out, &target, &weights).expect("loss");
            losses.total
        },
        &values,
        STEP,
        min_coords,
        seed,
    );
    Ok(CheckResult { name: "full_model_loss".into(), max_rel_err: err })
}

fn forward_or_panic(
    tape: &mut Tape,
    vars: &model::VarMap,
    cfg: &ModelConfig,
    mix: &Tensor,
    image: &Tensor,
    depth: &Tensor,
) -> model::ForwardOutput {
    model::forward(tape, vars, cfg, mix, Some(image), Some(depth), false).expect("forward")
}
