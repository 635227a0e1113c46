//! Layer compute kernels.
//!
//! Activations are laid out [height, width, channels] row-major. Both
//! convolution directions reduce to one GEMM per kernel offset: a strided
//! gather feeds the matmul for conv forward (and transposed-conv
//! backward), a strided scatter-add writes it back for conv backward (and
//! transposed-conv forward). `matrixmultiply::dgemm` does the heavy
//! lifting.

use matrixmultiply::dgemm;

/// C[m,n] = alpha * op(A) * op(B) + beta * C, row-major buffers.
#[allow(clippy::too_many_arguments)]
pub fn matmul(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    unsafe {
        dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Gather the input plane seen by kernel offset (ky, kx) over a
/// (gh x gw) output grid with the given stride/padding, as a
/// [gh*gw, c] matrix. Out-of-bounds taps read zero.
#[allow(clippy::too_many_arguments)]
fn gather_tap(
    src: &[f64],
    (h, w, c): (usize, usize, usize),
    (ky, kx): (usize, usize),
    stride: usize,
    pad: usize,
    (gh, gw): (usize, usize),
) -> Vec<f64> {
    let mut out = vec![0.0; gh * gw * c];
    for gy in 0..gh {
        let iy = (gy * stride + ky) as isize - pad as isize;
        if iy < 0 || iy >= h as isize {
            continue;
        }
        for gx in 0..gw {
            let ix = (gx * stride + kx) as isize - pad as isize;
            if ix < 0 || ix >= w as isize {
                continue;
            }
            let src_off = (iy as usize * w + ix as usize) * c;
            let dst_off = (gy * gw + gx) * c;
            out[dst_off..dst_off + c].copy_from_slice(&src[src_off..src_off + c]);
        }
    }
    out
}

/// Scatter-add the [gh*gw, c] matrix `vals` back through kernel offset
/// (ky, kx); the adjoint of `gather_tap`.
#[allow(clippy::too_many_arguments)]
fn scatter_add_tap(
    dst: &mut [f64],
    (h, w, c): (usize, usize, usize),
    vals: &[f64],
    (ky, kx): (usize, usize),
    stride: usize,
    pad: usize,
    (gh, gw): (usize, usize),
) {
    for gy in 0..gh {
        let iy = (gy * stride + ky) as isize - pad as isize;
        if iy < 0 || iy >= h as isize {
            continue;
        }
        for gx in 0..gw {
            let ix = (gx * stride + kx) as isize - pad as isize;
            if ix < 0 || ix >= w as isize {
                continue;
            }
            let dst_off = (iy as usize * w + ix as usize) * c;
            let src_off = (gy * gw + gx) * c;
            for ch in 0..c {
                dst[dst_off + ch] += vals[src_off + ch];
            }
        }
    }
}

/// Conv2D forward. Weights are [k, k, in_c, out_c] row-major, output is
/// [oh, ow, out_c] with oh = floor((h + 2p - k) / stride) + 1.
#[allow(clippy::too_many_arguments)]
pub fn conv_forward(
    x: &[f64],
    (h, w, c): (usize, usize, usize),
    weights: &[f64],
    bias: &[f64],
    k: usize,
    stride: usize,
    pad: usize,
    (oh, ow): (usize, usize),
) -> Vec<f64> {
    let oc = bias.len();
    let p = oh * ow;
    let mut y = vec![0.0; p * oc];
    for (i, slot) in y.iter_mut().enumerate() {
        *slot = bias[i % oc];
    }
    for ky in 0..k {
        for kx in 0..k {
            let tap = gather_tap(x, (h, w, c), (ky, kx), stride, pad, (oh, ow));
            let w_tap = &weights[(ky * k + kx) * c * oc..(ky * k + kx + 1) * c * oc];
            matmul(p, c, oc, 1.0, &tap, false, w_tap, false, 1.0, &mut y);
        }
    }
    y
}

/// Conv2D backward: gradients w.r.t. input, weights, bias.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward(
    x: &[f64],
    (h, w, c): (usize, usize, usize),
    weights: &[f64],
    k: usize,
    stride: usize,
    pad: usize,
    (oh, ow): (usize, usize),
    oc: usize,
    dy: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let p = oh * ow;
    let mut dx = vec![0.0; h * w * c];
    let mut dw = vec![0.0; k * k * c * oc];
    let mut db = vec![0.0; oc];
    for row in dy.chunks_exact(oc) {
        for (acc, &g) in db.iter_mut().zip(row) {
            *acc += g;
        }
    }
    let mut dtap = vec![0.0; p * c];
    for ky in 0..k {
        for kx in 0..k {
            let base = (ky * k + kx) * c * oc;
            let tap = gather_tap(x, (h, w, c), (ky, kx), stride, pad, (oh, ow));
            matmul(c, p, oc, 1.0, &tap, true, dy, false, 0.0, &mut dw[base..base + c * oc]);
            let w_tap = &weights[base..base + c * oc];
            matmul(p, oc, c, 1.0, dy, false, w_tap, true, 0.0, &mut dtap);
            scatter_add_tap(&mut dx, (h, w, c), &dtap, (ky, kx), stride, pad, (oh, ow));
        }
    }
    (dx, dw, db)
}

/// ConvT2D forward. Weights are [k, k, in_c, out_c]; output is
/// [oh, ow, out_c] with oh = (h - 1) * stride + k - 2p + output_padding.
#[allow(clippy::too_many_arguments)]
pub fn convt_forward(
    x: &[f64],
    (h, w, c): (usize, usize, usize),
    weights: &[f64],
    bias: &[f64],
    k: usize,
    stride: usize,
    pad: usize,
    (oh, ow): (usize, usize),
) -> Vec<f64> {
    let oc = bias.len();
    let mut y = vec![0.0; oh * ow * oc];
    for (i, slot) in y.iter_mut().enumerate() {
        *slot = bias[i % oc];
    }
    let p = h * w;
    let mut contrib = vec![0.0; p * oc];
    for ky in 0..k {
        for kx in 0..k {
            let w_tap = &weights[(ky * k + kx) * c * oc..(ky * k + kx + 1) * c * oc];
            matmul(p, c, oc, 1.0, x, false, w_tap, false, 0.0, &mut contrib);
            scatter_add_tap(&mut y, (oh, ow, oc), &contrib, (ky, kx), stride, pad, (h, w));
        }
    }
    y
}

/// ConvT2D backward: gradients w.r.t. input, weights, bias.
#[allow(clippy::too_many_arguments)]
pub fn convt_backward(
    x: &[f64],
    (h, w, c): (usize, usize, usize),
    weights: &[f64],
    k: usize,
    stride: usize,
    pad: usize,
    (oh, ow): (usize, usize),
    oc: usize,
    dy: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let p = h * w;
    let mut dx = vec![0.0; p * c];
    let mut dw = vec![0.0; k * k * c * oc];
    let mut db = vec![0.0; oc];
    for row in dy.chunks_exact(oc) {
        for (acc, &g) in db.iter_mut().zip(row) {
            *acc += g;
        }
    }
    for ky in 0..k {
        for kx in 0..k {
            let base = (ky * k + kx) * c * oc;
            // The output taps this kernel offset wrote to during forward.
            let g_tap = gather_tap(dy, (oh, ow, oc), (ky, kx), stride, pad, (h, w));
            let w_tap = &weights[base..base + c * oc];
            matmul(p, oc, c, 1.0, &g_tap, false, w_tap, true, 1.0, &mut dx);
            matmul(c, p, oc, 1.0, x, true, &g_tap, false, 0.0, &mut dw[base..base + c * oc]);
        }
    }
    (dx, dw, db)
}

/// 2x2/stride-2 max pool (floor mode). Returns the pooled plane and the
/// flat input index of each winner; ties go to the first element in scan
/// order.
pub fn maxpool_forward(
    x: &[f64],
    (h, w, c): (usize, usize, usize),
) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut y = vec![0.0; oh * ow * c];
    let mut arg = vec![0usize; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let idx = ((oy * 2 + dy) * w + ox * 2 + dx) * c + ch;
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                let o = (oy * ow + ox) * c + ch;
                y[o] = best;
                arg[o] = best_idx;
            }
        }
    }
    (y, arg)
}

pub fn maxpool_backward(dy: &[f64], argmax: &[usize], input_len: usize) -> Vec<f64> {
    let mut dx = vec![0.0; input_len];
    for (&g, &idx) in dy.iter().zip(argmax.iter()) {
        dx[idx] += g;
    }
    dx
}

/// Dense forward: y = x W + b with W stored [in, out] row-major.
pub fn dense_forward(x: &[f64], weights: &[f64], bias: &[f64]) -> Vec<f64> {
    let out = bias.len();
    let mut y = bias.to_vec();
    matmul(1, x.len(), out, 1.0, x, false, weights, false, 1.0, &mut y);
    y
}

pub fn dense_backward(
    x: &[f64],
    weights: &[f64],
    out: usize,
    dy: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let inp = x.len();
    let mut dx = vec![0.0; inp];
    let mut dw = vec![0.0; inp * out];
    matmul(1, out, inp, 1.0, dy, false, weights, true, 0.0, &mut dx);
    matmul(inp, 1, out, 1.0, x, true, dy, false, 0.0, &mut dw);
    (dx, dw, dy.to_vec())
}

/// Zero padding around the spatial plane.
pub fn zeropad_forward(
    x: &[f64],
    (h, w, c): (usize, usize, usize),
    (top, bottom, left, right): (usize, usize, usize, usize),
) -> Vec<f64> {
    let (oh, ow) = (h + top + bottom, w + left + right);
    let mut y = vec![0.0; oh * ow * c];
    for iy in 0..h {
        let src = iy * w * c;
        let dst = ((iy + top) * ow + left) * c;
        y[dst..dst + w * c].copy_from_slice(&x[src..src + w * c]);
    }
    y
}

pub fn zeropad_backward(
    dy: &[f64],
    (h, w, c): (usize, usize, usize),
    (top, _bottom, left, right): (usize, usize, usize, usize),
) -> Vec<f64> {
    let ow = w + left + right;
    let mut dx = vec![0.0; h * w * c];
    for iy in 0..h {
        let src = ((iy + top) * ow + left) * c;
        let dst = iy * w * c;
        dx[dst..dst + w * c].copy_from_slice(&dy[src..src + w * c]);
    }
    dx
}
