//! Per-sample kernels over flat `[channel][row][col]` buffers.

/// Row/column range `[lo, hi)` of outputs whose tap at offset `d` stays inside.
#[inline]
fn valid_range(d: isize, n: usize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d.max(0)) as usize;
    (lo, hi)
}

/// 3×3 convolution, stride 1, zero padding 1.
pub(super) fn conv3x3_forward(
    input: &[f32],
    in_c: usize,
    side: usize,
    weights: &[f32],
    bias: &[f32],
    out: &mut [f32],
) {
    let plane = side * side;
    for (oc, out_plane) in out.chunks_exact_mut(plane).enumerate() {
        out_plane.fill(bias[oc]);
        for ic in 0..in_c {
            let src = &input[ic * plane..(ic + 1) * plane];
            let kernel = &weights[(oc * in_c + ic) * 9..(oc * in_c + ic + 1) * 9];
            for ky in 0..3 {
                let dy = ky as isize - 1;
                let (y_lo, y_hi) = valid_range(dy, side);
                for kx in 0..3 {
                    let dx = kx as isize - 1;
                    let (x_lo, x_hi) = valid_range(dx, side);
                    let wv = kernel[ky * 3 + kx];
                    for y in y_lo..y_hi {
                        let sy = (y as isize + dy) as usize;
                        let sx_lo = (x_lo as isize + dx) as usize;
                        let dst = &mut out_plane[y * side + x_lo..y * side + x_hi];
                        let s = &src[sy * side + sx_lo..sy * side + sx_lo + (x_hi - x_lo)];
                        for (d, v) in dst.iter_mut().zip(s) {
                            *d += wv * v;
                        }
                    }
                }
            }
        }
    }
}

/// Returns the input gradient (empty when `need_input_grad` is false) and
/// accumulates weight/bias gradients.
#[allow(clippy::too_many_arguments)]
pub(super) fn conv3x3_backward(
    input: &[f32],
    in_c: usize,
    side: usize,
    weights: &[f32],
    grad_out: &[f32],
    grad_w: &mut [f32],
    grad_b: &mut [f32],
    need_input_grad: bool,
) -> Vec<f32> {
    let plane = side * side;
    let mut grad_in = if need_input_grad {
        vec![0f32; in_c * plane]
    } else {
        Vec::new()
    };
    for (oc, g_plane) in grad_out.chunks_exact(plane).enumerate() {
        grad_b[oc] += g_plane.iter().sum::<f32>();
        for ic in 0..in_c {
            let src = &input[ic * plane..(ic + 1) * plane];
            let k = (oc * in_c + ic) * 9;
            for ky in 0..3 {
                let dy = ky as isize - 1;
                let (y_lo, y_hi) = valid_range(dy, side);
                for kx in 0..3 {
                    let dx = kx as isize - 1;
                    let (x_lo, x_hi) = valid_range(dx, side);
                    let n = x_hi - x_lo;
                    let wv = weights[k + ky * 3 + kx];
                    let mut acc = 0f32;
                    for y in y_lo..y_hi {
                        let sy = (y as isize + dy) as usize;
                        let s0 = sy * side + (x_lo as isize + dx) as usize;
                        let g = &g_plane[y * side + x_lo..y * side + x_hi];
                        acc += g.iter().zip(&src[s0..s0 + n]).map(|(a, b)| a * b).sum::<f32>();
                        if need_input_grad {
                            let gi = &mut grad_in[ic * plane + s0..ic * plane + s0 + n];
                            for (d, gv) in gi.iter_mut().zip(g) {
                                *d += wv * gv;
                            }
                        }
                    }
                    grad_w[k + ky * 3 + kx] += acc;
                }
            }
        }
    }
    grad_in
}

/// 2×2 max pooling with stride 2 (odd trailing row/column dropped).
pub(super) fn maxpool2_forward(input: &[f32], channels: usize, side: usize) -> (Vec<f32>, Vec<u32>) {
    let half = side / 2;
    let mut out = Vec::with_capacity(channels * half * half);
    let mut idx = Vec::with_capacity(channels * half * half);
    for c in 0..channels {
        let base = c * side * side;
        for y in 0..half {
            for x in 0..half {
                let mut best = base + 2 * y * side + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * y + dy) * side + 2 * x + dx;
                    if input[i] > input[best] {
                        best = i;
                    }
                }
                out.push(input[best]);
                idx.push(best as u32);
            }
        }
    }
    (out, idx)
}

pub(super) fn maxpool2_backward(grad_out: &[f32], idx: &[u32], input_len: usize) -> Vec<f32> {
    let mut g = vec![0f32; input_len];
    for (&i, &v) in idx.iter().zip(grad_out) {
        g[i as usize] += v;
    }
    g
}

pub(super) fn dense_forward(input: &[f32], weights: &[f32], bias: &[f32]) -> Vec<f32> {
    let n_in = input.len();
    weights
        .chunks_exact(n_in)
        .zip(bias)
        .map(|(row, b)| b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f32>())
        .collect()
}

pub(super) fn dense_backward(
    input: &[f32],
    weights: &[f32],
    grad_out: &[f32],
    grad_w: &mut [f32],
    grad_b: &mut [f32],
) -> Vec<f32> {
    let n_in = input.len();
    let mut grad_in = vec![0f32; n_in];
    for (o, &g) in grad_out.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        grad_b[o] += g;
        let row = &weights[o * n_in..(o + 1) * n_in];
        let gw = &mut grad_w[o * n_in..(o + 1) * n_in];
        for ((gwv, &x), (gi, &w)) in gw.iter_mut().zip(input).zip(grad_in.iter_mut().zip(row)) {
            *gwv += g * x;
            *gi += g * w;
        }
    }
    grad_in
}
