//! Finite-difference gradient verification.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tape::{Tape, Var};
use super::tensor::Tensor;

/// Compare reverse-mode gradients of a scalar-valued function against
/// central differences.
///
/// `f` rebuilds the computation from scratch on each call; `params` are the
/// leaf values it receives. At least `min_coords` coordinates are probed
/// (all of them when the parameter count is small), chosen deterministically
/// from `seed`. Returns the largest relative error, with the relative error
/// of analytic `a` vs numeric `n` defined as `|a - n| / max(|a|, |n|, 1)`.
pub fn check_gradients<F>(f: F, params: &[Tensor], h: f64, min_coords: usize, seed: u64) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let eval = |values: &[Tensor]| -> (f64, Vec<Tensor>, Tape, Vec<Var>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.input(t.clone())).collect();
        let loss = f(&mut tape, &vars);
        let grads = tape.backward(loss).expect("loss must be scalar");
        let gs: Vec<Tensor> = vars.iter().map(|v| grads.get_or_zeros(*v, &tape)).collect();
        (tape.value(loss).value(), gs, tape, vars)
    };

    let (_, analytic, _, _) = eval(params);

    // enumerate all coordinates, then sample
    let mut coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(pi, t)| (0..t.numel()).map(move |ci| (pi, ci)))
        .collect();
    let total = coords.len();
    let take = total.min(min_coords.max(1));
    if take < total {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        coords.shuffle(&mut rng);
        coords.truncate(take);
    }

    let mut worst = 0.0f64;
    let mut scratch: Vec<Tensor> = params.to_vec();
    for (pi, ci) in coords {
        let orig = scratch[pi].data[ci];
        scratch[pi].data[ci] = orig + h;
        let (fp, _, _, _) = eval(&scratch);
        scratch[pi].data[ci] = orig - h;
        let (fm, _, _, _) = eval(&scratch);
        scratch[pi].data[ci] = orig;
        let numeric = (fp - fm) / (2.0 * h);
        let a = analytic[pi].data[ci];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
        worst = worst.max(rel);
    }
    worst
}
