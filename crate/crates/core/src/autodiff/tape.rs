use crate::error::{Error, Result};

use super::convmath::{col2im, conv_out, deconv_out, gemm, im2col};
use super::tensor::Tensor;

/// Panic payload raised when a primitive produces a non-finite value.
/// The harness downcasts this to report a numerical failure cleanly.
#[derive(Debug, Clone)]
pub struct NumericFailure {
    pub op: String,
    pub index: usize,
}

impl std::fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "non-finite value produced by op '{}' at flat index {}", self.op, self.index)
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

type BackFn = Box<dyn Fn(&Tensor) -> Vec<Tensor>>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    back: Option<BackFn>,
}

/// Record of primitive applications. Single-owner during a step; replayed
/// in reverse topological (= forward) order by [`Tape::backward`].
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Grads {
    by_node: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.by_node[v.0].as_ref()
    }

    /// Gradient of a leaf, densified to zeros when the parameter is unused.
    pub fn get_or_zeros(&self, v: Var, tape: &Tape) -> Tensor {
        self.by_node[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(&tape.nodes[v.0].value.shape))
    }
}

fn shape_panic(op: &str, detail: String) -> ! {
    panic!("shape error in {op}: {detail}")
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    fn push(&mut self, op: &str, value: Tensor, parents: Vec<usize>, back: Option<BackFn>) -> Var {
        if let Some(index) = value.data.iter().position(|x| !x.is_finite()) {
            std::panic::panic_any(NumericFailure { op: op.to_string(), index });
        }
        self.nodes.push(Node { value, parents, back });
        Var(self.nodes.len() - 1)
    }

    /// Register a leaf (input or parameter).
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push("input", value, vec![], None)
    }

    /// Reverse-topological gradient accumulation from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::Input(format!(
                "backward: loss must be scalar, got shape {:?}",
                self.nodes[loss.0].value.shape
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if let Some(back) = &node.back {
                let parent_grads = back(&g);
                debug_assert_eq!(parent_grads.len(), node.parents.len());
                for (p, pg) in node.parents.iter().zip(parent_grads) {
                    debug_assert_eq!(pg.shape, self.nodes[*p].value.shape);
                    match &mut grads[*p] {
                        Some(acc) => {
                            for (a, b) in acc.data.iter_mut().zip(&pg.data) {
                                *a += b;
                            }
                        }
                        slot => *slot = Some(pg),
                    }
                }
            }
            grads[i] = Some(g);
        }
        Ok(Grads { by_node: grads })
    }

    // ---- elementwise ----

    fn binary_ew(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        df: impl Fn(f64, f64) -> (f64, f64) + 'static,
    ) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape != tb.shape {
            shape_panic(op, format!("{:?} vs {:?}", ta.shape, tb.shape));
        }
        let data: Vec<f64> = ta.data.iter().zip(&tb.data).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(ta.shape.clone(), data);
        let (xa, xb) = (ta.clone(), tb.clone());
        self.push(
            op,
            value,
            vec![a.0, b.0],
            Some(Box::new(move |g| {
                let mut ga = Tensor::zeros(&xa.shape);
                let mut gb = Tensor::zeros(&xb.shape);
                for i in 0..g.data.len() {
                    let (da, db) = df(xa.data[i], xb.data[i]);
                    ga.data[i] = g.data[i] * da;
                    gb.data[i] = g.data[i] * db;
                }
                vec![ga, gb]
            })),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary_ew("add", a, b, |x, y| x + y, |_, _| (1.0, 1.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary_ew("sub", a, b, |x, y| x - y, |_, _| (1.0, -1.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary_ew("mul", a, b, |x, y| x * y, |x, y| (y, x))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary_ew("div", a, b, |x, y| x / y, |x, y| (1.0 / y, -x / (y * y)))
    }

    /// Four-quadrant arctangent, elementwise: `atan2(y, x)`.
    pub fn atan2(&mut self, y: Var, x: Var) -> Var {
        self.binary_ew(
            "atan2",
            y,
            x,
            |yy, xx| yy.atan2(xx),
            |yy, xx| {
                let d = xx * xx + yy * yy + 1e-300;
                (xx / d, -yy / d)
            },
        )
    }

    fn unary_ew(
        &mut self,
        op: &'static str,
        a: Var,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64, f64) -> f64 + 'static, // (x, y) -> dy/dx
    ) -> Var {
        let ta = &self.nodes[a.0].value;
        let data: Vec<f64> = ta.data.iter().map(|&x| f(x)).collect();
        let value = Tensor::new(ta.shape.clone(), data);
        let x = ta.clone();
        let y = value.clone();
        self.push(
            op,
            value,
            vec![a.0],
            Some(Box::new(move |g| {
                let mut ga = Tensor::zeros(&x.shape);
                for i in 0..g.data.len() {
                    ga.data[i] = g.data[i] * df(x.data[i], y.data[i]);
                }
                vec![ga]
            })),
        )
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary_ew("add_scalar", a, move |x| x + c, |_, _| 1.0)
    }

    pub fn mul_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary_ew("mul_scalar", a, move |x| x * c, move |_, _| c)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary_ew("tanh", a, f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary_ew("sigmoid", a, |x| 1.0 / (1.0 + (-x).exp()), |_, y| y * (1.0 - y))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary_ew("relu", a, |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary_ew(
            "leaky_relu",
            a,
            move |x| if x > 0.0 { x } else { slope * x },
            move |x, _| if x > 0.0 { 1.0 } else { slope },
        )
    }

    /// Exact Gaussian-CDF GELU: `x * Phi(x)`.
    pub fn gelu(&mut self, a: Var) -> Var {
        fn phi(x: f64) -> f64 {
            0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
        }
        self.unary_ew("gelu", a, |x| x * phi(x), |x, _| {
            let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
            phi(x) + x * pdf
        })
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary_ew("exp", a, f64::exp, |_, y| y)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.unary_ew("sin", a, f64::sin, |x, _| x.cos())
    }

    pub fn cos(&mut self, a: Var) -> Var {
        self.unary_ew("cos", a, f64::cos, |x, _| -x.sin())
    }

    /// `sqrt(x + eps)`, the eps keeping the derivative finite at zero.
    pub fn sqrt_eps(&mut self, a: Var, eps: f64) -> Var {
        self.unary_ew("sqrt_eps", a, move |x| (x + eps).sqrt(), |_, y| 0.5 / y)
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape.len() != 2 || tb.shape.len() != 2 || ta.shape[1] != tb.shape[0] {
            shape_panic("matmul", format!("{:?} vs {:?}", ta.shape, tb.shape));
        }
        let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &ta.data, false, &tb.data, false, &mut out);
        let (xa, xb) = (ta.clone(), tb.clone());
        self.push(
            "matmul",
            Tensor::new(vec![m, n], out),
            vec![a.0, b.0],
            Some(Box::new(move |g| {
                let mut ga = vec![0.0; m * k];
                let mut gb = vec![0.0; k * n];
                // dA = g * B^T ; dB = A^T * g
                gemm(m, n, k, &g.data, false, &xb.data, true, &mut ga);
                gemm(k, m, n, &xa.data, true, &g.data, false, &mut gb);
                vec![Tensor::new(vec![m, k], ga), Tensor::new(vec![k, n], gb)]
            })),
        )
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        if ta.shape.len() != 2 {
            shape_panic("transpose", format!("expected 2-d, got {:?}", ta.shape));
        }
        let (m, n) = (ta.shape[0], ta.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = ta.data[i * n + j];
            }
        }
        self.push(
            "transpose",
            Tensor::new(vec![n, m], out),
            vec![a.0],
            Some(Box::new(move |g| {
                let mut ga = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        ga[i * n + j] = g.data[j * m + i];
                    }
                }
                vec![Tensor::new(vec![m, n], ga)]
            })),
        )
    }

    /// 2-D convolution over a `[C, H, W]` input with weight `[O, C, kh, kw]`
    /// and per-channel bias `[O]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let (tx, tw, tb) =
            (&self.nodes[x.0].value, &self.nodes[w.0].value, &self.nodes[b.0].value);
        if tx.shape.len() != 3 || tw.shape.len() != 4 || tx.shape[0] != tw.shape[1] {
            shape_panic("conv2d", format!("input {:?} vs weight {:?}", tx.shape, tw.shape));
        }
        let (c, h, win) = (tx.shape[0], tx.shape[1], tx.shape[2]);
        let (o, kh, kw) = (tw.shape[0], tw.shape[2], tw.shape[3]);
        if tb.shape != vec![o] {
            shape_panic("conv2d", format!("bias {:?} vs {o} output channels", tb.shape));
        }
        if h + 2 * pad < kh || win + 2 * pad < kw {
            shape_panic("conv2d", format!("kernel {kh}x{kw} larger than padded input {h}x{win}"));
        }
        let (oh, ow) = (conv_out(h, kh, stride, pad), conv_out(win, kw, stride, pad));
        let cols = oh * ow;
        let ckk = c * kh * kw;
        let col = im2col(&tx.data, c, h, win, kh, kw, stride, pad);
        let mut out = vec![0.0; o * cols];
        gemm(o, ckk, cols, &tw.data, false, &col, false, &mut out);
        for oc in 0..o {
            let bias = tb.data[oc];
            for v in &mut out[oc * cols..(oc + 1) * cols] {
                *v += bias;
            }
        }
        let (xw, xcol) = (tw.clone(), col);
        self.push(
            "conv2d",
            Tensor::new(vec![o, oh, ow], out),
            vec![x.0, w.0, b.0],
            Some(Box::new(move |g| {
                // dW = g * col^T
                let mut gw = vec![0.0; o * ckk];
                gemm(o, cols, ckk, &g.data, false, &xcol, true, &mut gw);
                // dX = col2im(W^T * g)
                let mut gcol = vec![0.0; ckk * cols];
                gemm(ckk, o, cols, &xw.data, true, &g.data, false, &mut gcol);
                let gx = col2im(&gcol, c, h, win, kh, kw, stride, pad);
                let gb: Vec<f64> =
                    (0..o).map(|oc| g.data[oc * cols..(oc + 1) * cols].iter().sum()).collect();
                vec![
                    Tensor::new(vec![c, h, win], gx),
                    Tensor::new(vec![o, c, kh, kw], gw),
                    Tensor::new(vec![o], gb),
                ]
            })),
        )
    }

    /// Fractionally strided (transposed) convolution over `[C, H, W]` with
    /// weight `[C, O, kh, kw]`; output extent is `(in-1)*stride - 2*pad + k`.
    pub fn deconv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let (tx, tw, tb) =
            (&self.nodes[x.0].value, &self.nodes[w.0].value, &self.nodes[b.0].value);
        if tx.shape.len() != 3 || tw.shape.len() != 4 || tx.shape[0] != tw.shape[0] {
            shape_panic("deconv2d", format!("input {:?} vs weight {:?}", tx.shape, tw.shape));
        }
        let (c, h, win) = (tx.shape[0], tx.shape[1], tx.shape[2]);
        let (o, kh, kw) = (tw.shape[1], tw.shape[2], tw.shape[3]);
        if tb.shape != vec![o] {
            shape_panic("deconv2d", format!("bias {:?} vs {o} output channels", tb.shape));
        }
        let (oh, ow) = (deconv_out(h, kh, stride, pad), deconv_out(win, kw, stride, pad));
        let cols = h * win;
        let okk = o * kh * kw;
        // P = W^T_mat * X_mat, scattered onto the output grid
        let mut p = vec![0.0; okk * cols];
        gemm(okk, c, cols, &tw.data, true, &tx.data, false, &mut p);
        let mut out = col2im(&p, o, oh, ow, kh, kw, stride, pad);
        for oc in 0..o {
            let bias = tb.data[oc];
            for v in &mut out[oc * oh * ow..(oc + 1) * oh * ow] {
                *v += bias;
            }
        }
        let (xw, xx) = (tw.clone(), tx.clone());
        self.push(
            "deconv2d",
            Tensor::new(vec![o, oh, ow], out),
            vec![x.0, w.0, b.0],
            Some(Box::new(move |g| {
                let gcol = im2col(&g.data, o, oh, ow, kh, kw, stride, pad);
                // dX = W_mat * gcol
                let mut gx = vec![0.0; c * cols];
                gemm(c, okk, cols, &xw.data, false, &gcol, false, &mut gx);
                // dW = X_mat * gcol^T
                let mut gw = vec![0.0; c * okk];
                gemm(c, cols, okk, &xx.data, false, &gcol, true, &mut gw);
                let gb: Vec<f64> = (0..o)
                    .map(|oc| g.data[oc * oh * ow..(oc + 1) * oh * ow].iter().sum())
                    .collect();
                vec![
                    Tensor::new(vec![c, h, win], gx),
                    Tensor::new(vec![c, o, kh, kw], gw),
                    Tensor::new(vec![o], gb),
                ]
            })),
        )
    }

    /// Bilinear resize of the spatial planes of a `[C, H, W]` tensor,
    /// align-corners convention (preserves constants and endpoint values).
    pub fn bilinear_resize(&mut self, x: Var, h2: usize, w2: usize) -> Var {
        let tx = &self.nodes[x.0].value;
        if tx.shape.len() != 3 {
            shape_panic("bilinear_resize", format!("expected [C,H,W], got {:?}", tx.shape));
        }
        let (c, h, w) = (tx.shape[0], tx.shape[1], tx.shape[2]);
        let axis_map = |n_out: usize, n_in: usize| -> Vec<(usize, usize, f64)> {
            (0..n_out)
                .map(|i| {
                    if n_out == 1 || n_in == 1 {
                        return (0, 0, 0.0);
                    }
                    let src = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
                    let i0 = (src.floor() as usize).min(n_in - 1);
                    let i1 = (i0 + 1).min(n_in - 1);
                    (i0, i1, src - i0 as f64)
                })
                .collect()
        };
        let rows = axis_map(h2, h);
        let cols = axis_map(w2, w);
        let mut out = vec![0.0; c * h2 * w2];
        for ci in 0..c {
            for (oi, &(r0, r1, fr)) in rows.iter().enumerate() {
                for (oj, &(c0, c1, fc)) in cols.iter().enumerate() {
                    let at = |r: usize, cc: usize| tx.data[(ci * h + r) * w + cc];
                    let top = at(r0, c0) * (1.0 - fc) + at(r0, c1) * fc;
                    let bot = at(r1, c0) * (1.0 - fc) + at(r1, c1) * fc;
                    out[(ci * h2 + oi) * w2 + oj] = top * (1.0 - fr) + bot * fr;
                }
            }
        }
        let (rows_b, cols_b) = (rows, cols);
        self.push(
            "bilinear_resize",
            Tensor::new(vec![c, h2, w2], out),
            vec![x.0],
            Some(Box::new(move |g| {
                let mut gx = vec![0.0; c * h * w];
                for ci in 0..c {
                    for (oi, &(r0, r1, fr)) in rows_b.iter().enumerate() {
                        for (oj, &(c0, c1, fc)) in cols_b.iter().enumerate() {
                            let gv = g.data[(ci * h2 + oi) * w2 + oj];
                            gx[(ci * h + r0) * w + c0] += gv * (1.0 - fr) * (1.0 - fc);
                            gx[(ci * h + r0) * w + c1] += gv * (1.0 - fr) * fc;
                            gx[(ci * h + r1) * w + c0] += gv * fr * (1.0 - fc);
                            gx[(ci * h + r1) * w + c1] += gv * fr * fc;
                        }
                    }
                }
                vec![Tensor::new(vec![c, h, w], gx)]
            })),
        )
    }

    // ---- shape ops ----

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let ta = &self.nodes[a.0].value;
        if shape.iter().product::<usize>() != ta.numel() {
            shape_panic("reshape", format!("{:?} -> {:?}", ta.shape, shape));
        }
        let old_shape = ta.shape.clone();
        let value = Tensor::new(shape.to_vec(), ta.data.clone());
        self.push(
            "reshape",
            value,
            vec![a.0],
            Some(Box::new(move |g| vec![Tensor::new(old_shape.clone(), g.data.clone())])),
        )
    }

    /// Slice `len` indices starting at `start` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Var {
        let ta = &self.nodes[a.0].value;
        if axis >= ta.shape.len() || start + len > ta.shape[axis] {
            shape_panic(
                "narrow",
                format!("axis {axis} range {start}..{} of shape {:?}", start + len, ta.shape),
            );
        }
        let outer: usize = ta.shape[..axis].iter().product();
        let extent = ta.shape[axis];
        let inner: usize = ta.shape[axis + 1..].iter().product();
        let mut shape = ta.shape.clone();
        shape[axis] = len;
        let mut out = Vec::with_capacity(outer * len * inner);
        for oi in 0..outer {
            let base = (oi * extent + start) * inner;
            out.extend_from_slice(&ta.data[base..base + len * inner]);
        }
        let full_shape = ta.shape.clone();
        self.push(
            "narrow",
            Tensor::new(shape, out),
            vec![a.0],
            Some(Box::new(move |g| {
                let mut gx = Tensor::zeros(&full_shape);
                for oi in 0..outer {
                    let src = oi * len * inner;
                    let dst = (oi * extent + start) * inner;
                    gx.data[dst..dst + len * inner].copy_from_slice(&g.data[src..src + len * inner]);
                }
                vec![gx]
            })),
        )
    }

    /// Concatenate along `axis`; all other extents must agree.
    pub fn concat(&mut self, axis: usize, vars: &[Var]) -> Var {
        assert!(!vars.is_empty(), "concat of zero tensors");
        let first = self.nodes[vars[0].0].value.shape.clone();
        let mut extents = Vec::with_capacity(vars.len());
        for v in vars {
            let s = &self.nodes[v.0].value.shape;
            if s.len() != first.len()
                || s.iter().enumerate().any(|(i, &e)| i != axis && e != first[i])
            {
                shape_panic("concat", format!("axis {axis}: {:?} vs {:?}", first, s));
            }
            extents.push(s[axis]);
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let total: usize = extents.iter().sum();
        let mut shape = first.clone();
        shape[axis] = total;
        let mut out = vec![0.0; outer * total * inner];
        for oi in 0..outer {
            let mut offset = 0;
            for (v, &e) in vars.iter().zip(&extents) {
                let data = &self.nodes[v.0].value.data;
                let src = oi * e * inner;
                let dst = (oi * total + offset) * inner;
                out[dst..dst + e * inner].copy_from_slice(&data[src..src + e * inner]);
                offset += e;
            }
        }
        let parents: Vec<usize> = vars.iter().map(|v| v.0).collect();
        let shapes: Vec<Vec<usize>> =
            vars.iter().map(|v| self.nodes[v.0].value.shape.clone()).collect();
        self.push(
            "concat",
            Tensor::new(shape, out),
            parents,
            Some(Box::new(move |g| {
                let mut grads: Vec<Tensor> = shapes.iter().map(|s| Tensor::zeros(s)).collect();
                for oi in 0..outer {
                    let mut offset = 0;
                    for (gi, &e) in extents.iter().enumerate() {
                        let src = (oi * total + offset) * inner;
                        let dst = oi * e * inner;
                        grads[gi].data[dst..dst + e * inner]
                            .copy_from_slice(&g.data[src..src + e * inner]);
                        offset += e;
                    }
                }
                grads
            })),
        )
    }

    /// Broadcast a column vector `[m]` to `[m, n]`.
    pub fn tile_cols(&mut self, a: Var, n: usize) -> Var {
        let ta = &self.nodes[a.0].value;
        if ta.shape.len() != 1 {
            shape_panic("tile_cols", format!("expected 1-d, got {:?}", ta.shape));
        }
        let m = ta.shape[0];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            out[i * n..(i + 1) * n].fill(ta.data[i]);
        }
        self.push(
            "tile_cols",
            Tensor::new(vec![m, n], out),
            vec![a.0],
            Some(Box::new(move |g| {
                let data = (0..m).map(|i| g.data[i * n..(i + 1) * n].iter().sum()).collect();
                vec![Tensor::new(vec![m], data)]
            })),
        )
    }

    /// Broadcast a row vector `[n]` to `[m, n]`.
    pub fn tile_rows(&mut self, a: Var, m: usize) -> Var {
        let ta = &self.nodes[a.0].value;
        if ta.shape.len() != 1 {
            shape_panic("tile_rows", format!("expected 1-d, got {:?}", ta.shape));
        }
        let n = ta.shape[0];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            out[i * n..(i + 1) * n].copy_from_slice(&ta.data);
        }
        self.push(
            "tile_rows",
            Tensor::new(vec![m, n], out),
            vec![a.0],
            Some(Box::new(move |g| {
                let mut data = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        data[j] += g.data[i * n + j];
                    }
                }
                vec![Tensor::new(vec![n], data)]
            })),
        )
    }

    /// Sum over axis 1 of `[m, n]` -> `[m]`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        if ta.shape.len() != 2 {
            shape_panic("sum_rows", format!("expected 2-d, got {:?}", ta.shape));
        }
        let (m, n) = (ta.shape[0], ta.shape[1]);
        let data: Vec<f64> = (0..m).map(|i| ta.data[i * n..(i + 1) * n].iter().sum()).collect();
        self.push(
            "sum_rows",
            Tensor::new(vec![m], data),
            vec![a.0],
            Some(Box::new(move |g| {
                let mut gx = vec![0.0; m * n];
                for i in 0..m {
                    gx[i * n..(i + 1) * n].fill(g.data[i]);
                }
                vec![Tensor::new(vec![m, n], gx)]
            })),
        )
    }

    /// Sum over axis 0 of `[m, n]` -> `[n]`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        if ta.shape.len() != 2 {
            shape_panic("sum_cols", format!("expected 2-d, got {:?}", ta.shape));
        }
        let (m, n) = (ta.shape[0], ta.shape[1]);
        let mut data = vec![0.0; n];
        for i in 0..m {
            for j in 0..n {
                data[j] += ta.data[i * n + j];
            }
        }
        self.push(
            "sum_cols",
            Tensor::new(vec![n], data),
            vec![a.0],
            Some(Box::new(move |g| {
                let mut gx = vec![0.0; m * n];
                for i in 0..m {
                    gx[i * n..(i + 1) * n].copy_from_slice(&g.data);
                }
                vec![Tensor::new(vec![m, n], gx)]
            })),
        )
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let total: f64 = ta.data.iter().sum();
        let shape = ta.shape.clone();
        self.push(
            "sum_all",
            Tensor::scalar(total),
            vec![a.0],
            Some(Box::new(move |g| vec![Tensor::full(&shape, g.data[0])])),
        )
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.nodes[a.0].value.numel() as f64;
        let s = self.sum_all(a);
        self.mul_scalar(s, 1.0 / n)
    }

    /// Row-wise softmax of `[m, n]`.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        if ta.shape.len() != 2 {
            shape_panic("softmax_rows", format!("expected 2-d, got {:?}", ta.shape));
        }
        let (m, n) = (ta.shape[0], ta.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &ta.data[i * n..(i + 1) * n];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..n {
                let e = (row[j] - max).exp();
                out[i * n + j] = e;
                sum += e;
            }
            for j in 0..n {
                out[i * n + j] /= sum;
            }
        }
        let value = Tensor::new(vec![m, n], out);
        let y = value.clone();
        self.push(
            "softmax_rows",
            value,
            vec![a.0],
            Some(Box::new(move |g| {
                let mut gx = vec![0.0; m * n];
                for i in 0..m {
                    let dot: f64 = (0..n).map(|j| g.data[i * n + j] * y.data[i * n + j]).sum();
                    for j in 0..n {
                        gx[i * n + j] = y.data[i * n + j] * (g.data[i * n + j] - dot);
                    }
                }
                vec![Tensor::new(vec![m, n], gx)]
            })),
        )
    }

    // ---- composites used throughout the model ----

    /// Normalize each column of `[c, n]` to unit L2 norm (eps-guarded).
    pub fn l2_normalize_cols(&mut self, a: Var) -> Var {
        let sq = self.mul(a, a);
        let ss = self.sum_cols(sq);
        let norm = self.sqrt_eps(ss, 1e-12);
        let m = self.shape(a)[0];
        let denom = self.tile_rows(norm, m);
        self.div(a, denom)
    }

    /// Layer-normalize each row of `[m, n]`, with per-feature gain and bias.
    pub fn layer_norm_rows(&mut self, a: Var, gain: Var, bias: Var) -> Var {
        let (m, n) = (self.shape(a)[0], self.shape(a)[1]);
        let mean = self.sum_rows(a);
        let mean = self.mul_scalar(mean, 1.0 / n as f64);
        let mean_b = self.tile_cols(mean, n);
        let centered = self.sub(a, mean_b);
        let sq = self.mul(centered, centered);
        let var = self.sum_rows(sq);
        let var = self.mul_scalar(var, 1.0 / n as f64);
        let std = self.sqrt_eps(var, 1e-8);
        let std_b = self.tile_cols(std, n);
        let normed = self.div(centered, std_b);
        let g = self.tile_rows(gain, m);
        let b = self.tile_rows(bias, m);
        let scaled = self.mul(normed, g);
        self.add(scaled, b)
    }

    /// `x W^T + b` for row-major tokens `x [m, in]`, `w [out, in]`, `b [out]`.
    pub fn linear_rows(&mut self, x: Var, w: Var, b: Var) -> Var {
        let wt = self.transpose(w);
        let y = self.matmul(x, wt);
        let m = self.shape(y)[0];
        let bb = self.tile_rows(b, m);
        self.add(y, bb)
    }
}
