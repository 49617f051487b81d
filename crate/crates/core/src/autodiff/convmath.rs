//! Patch extraction (im2col), its adjoint (col2im) and a thin gemm wrapper.
//! Convolution and transposed convolution are expressed through these so
//! forward and backward share one audited code path.

/// `a [m x k] * b [k x n] -> out [m x n]`, with optional transposes applied
/// to the logical operands via strides.
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    out: &mut [f64],
) {
    assert_eq!(out.len(), m * n);
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Output spatial extent of a strided convolution.
pub fn conv_out(extent: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (extent + 2 * pad - kernel) / stride + 1
}

/// Output spatial extent of a transposed convolution.
pub fn deconv_out(extent: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (extent - 1) * stride + kernel - 2 * pad
}

/// Extract sliding `kh x kw` patches of a `c x h x w` image into a
/// `(c*kh*kw) x (oh*ow)` column matrix. Out-of-image taps read zero.
pub fn im2col(
    x: &[f64],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let oh = conv_out(h, kh, stride, pad);
    let ow = conv_out(w, kw, stride, pad);
    let cols = oh * ow;
    let mut out = vec![0.0; c * kh * kw * cols];
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh + ki) * kw + kj;
                let base = row * cols;
                for oi in 0..oh {
                    let yi = (oi * stride + ki) as isize - pad as isize;
                    if yi < 0 || yi >= h as isize {
                        continue;
                    }
                    for oj in 0..ow {
                        let xj = (oj * stride + kj) as isize - pad as isize;
                        if xj < 0 || xj >= w as isize {
                            continue;
                        }
                        out[base + oi * ow + oj] = x[(ci * h + yi as usize) * w + xj as usize];
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: scatter-add a column matrix back into image layout.
pub fn col2im(
    col: &[f64],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let oh = conv_out(h, kh, stride, pad);
    let ow = conv_out(w, kw, stride, pad);
    let cols = oh * ow;
    assert_eq!(col.len(), c * kh * kw * cols);
    let mut out = vec![0.0; c * h * w];
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh + ki) * kw + kj;
                let base = row * cols;
                for oi in 0..oh {
                    let yi = (oi * stride + ki) as isize - pad as isize;
                    if yi < 0 || yi >= h as isize {
                        continue;
                    }
                    for oj in 0..ow {
                        let xj = (oj * stride + kj) as isize - pad as isize;
                        if xj < 0 || xj >= w as isize {
                            continue;
                        }
                        out[(ci * h + yi as usize) * w + xj as usize] += col[base + oi * ow + oj];
                    }
                }
            }
        }
    }
    out
}

/// Nested-loop reference convolution, kept independent of the gemm path for
/// oracle tests.
pub fn conv2d_oracle(
    x: &[f64],
    c: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    o: usize,
    kh: usize,
    kw: usize,
    bias: &[f64],
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let oh = conv_out(h, kh, stride, pad);
    let ow = conv_out(w, kw, stride, pad);
    let mut out = vec![0.0; o * oh * ow];
    for oc in 0..o {
        for oi in 0..oh {
            for oj in 0..ow {
                let mut acc = bias[oc];
                for ci in 0..c {
                    for ki in 0..kh {
                        for kj in 0..kw {
                            let yi = (oi * stride + ki) as isize - pad as isize;
                            let xj = (oj * stride + kj) as isize - pad as isize;
                            if yi < 0 || yi >= h as isize || xj < 0 || xj >= w as isize {
                                continue;
                            }
                            acc += x[(ci * h + yi as usize) * w + xj as usize]
                                * weight[((oc * c + ci) * kh + ki) * kw + kj];
                        }
                    }
                }
                out[(oc * oh + oi) * ow + oj] = acc;
            }
        }
    }
    out
}
