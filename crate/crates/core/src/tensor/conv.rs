//! Slice-level convolution kernels: im2col / col2im around a row-major GEMM.
//! Transposed convolution reuses the same pair in the opposite direction,
//! which makes it the exact adjoint of [`conv2d_forward`].

/// Geometry of one strided, zero-padded 2-D correlation `in_hw -> out_hw`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub in_h: usize,
    pub in_w: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ph: usize,
    pub pw: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn patch(&self) -> usize {
        self.kh * self.kw
    }
    pub fn out_plane(&self) -> usize {
        self.out_h * self.out_w
    }
    pub fn in_plane(&self) -> usize {
        self.in_h * self.in_w
    }
}

/// `floor((len + 2·pad − kernel) / stride) + 1`, or `None` when the window does not fit.
pub fn conv_output_len(len: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = len + 2 * pad;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// `c = a·b + beta·c` with optional transposes, all row-major.
/// `a` is `m×k` (or `k×m` when transposed), `b` is `k×n` (or `n×k`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides above describe exactly the m×k, k×n and m×n
    // row-major buffers whose lengths are checked in debug builds and
    // guaranteed by every caller in this module.
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
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Unfold one `C×H×W` image into a `(C·kh·kw) × (out_h·out_w)` column matrix.
pub(crate) fn im2col(image: &[f64], channels: usize, g: &ConvGeom, cols: &mut [f64]) {
    let op = g.out_plane();
    debug_assert_eq!(cols.len(), channels * g.patch() * op);
    for c in 0..channels {
        let plane = &image[c * g.in_plane()..(c + 1) * g.in_plane()];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * op..(row + 1) * op];
                for oy in 0..g.out_h {
                    let iy = (oy * g.sh + ki) as isize - g.ph as isize;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.in_h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.sw + kj) as isize - g.pw as isize;
                        *v = if ix < 0 || ix >= g.in_w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add columns back onto a zeroed `C×H×W` image.
pub(crate) fn col2im(cols: &[f64], channels: usize, g: &ConvGeom, image: &mut [f64]) {
    let op = g.out_plane();
    image.fill(0.0);
    for c in 0..channels {
        let plane = &mut image[c * g.in_plane()..(c + 1) * g.in_plane()];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * op..(row + 1) * op];
                for oy in 0..g.out_h {
                    let iy = (oy * g.sh + ki) as isize - g.ph as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for (ox, v) in src[oy * g.out_w..(oy + 1) * g.out_w].iter().enumerate() {
                        let ix = (ox * g.sw + kj) as isize - g.pw as isize;
                        if ix >= 0 && (ix as usize) < g.in_w {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Correlation of `batch` images `C_in×H×W` with kernel `C_out×C_in×kh×kw`.
pub(crate) fn conv2d_forward(
    input: &[f64],
    kernel: &[f64],
    batch: usize,
    c_in: usize,
    c_out: usize,
    g: &ConvGeom,
) -> Vec<f64> {
    let k = c_in * g.patch();
    let op = g.out_plane();
    let mut out = vec![0.0; batch * c_out * op];
    let mut cols = vec![0.0; k * op];
    for n in 0..batch {
        im2col(
            &input[n * c_in * g.in_plane()..(n + 1) * c_in * g.in_plane()],
            c_in,
            g,
            &mut cols,
        );
        gemm(
            c_out,
            k,
            op,
            kernel,
            false,
            &cols,
            false,
            0.0,
            &mut out[n * c_out * op..(n + 1) * c_out * op],
        );
    }
    out
}

/// Gradients of [`conv2d_forward`] w.r.t. input and kernel.
pub(crate) fn conv2d_backward(
    grad_out: &[f64],
    input: &[f64],
    kernel: &[f64],
    batch: usize,
    c_in: usize,
    c_out: usize,
    g: &ConvGeom,
    need_input: bool,
    need_kernel: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let k = c_in * g.patch();
    let op = g.out_plane();
    let ip = c_in * g.in_plane();
    let mut grad_in = need_input.then(|| vec![0.0; batch * ip]);
    let mut grad_k = need_kernel.then(|| vec![0.0; c_out * k]);
    let mut cols = vec![0.0; k * op];
    for n in 0..batch {
        let go = &grad_out[n * c_out * op..(n + 1) * c_out * op];
        if let Some(gk) = grad_k.as_mut() {
            im2col(&input[n * ip..(n + 1) * ip], c_in, g, &mut cols);
            gemm(c_out, op, k, go, false, &cols, true, 1.0, gk);
        }
        if let Some(gi) = grad_in.as_mut() {
            gemm(k, c_out, op, kernel, true, go, false, 0.0, &mut cols);
            col2im(&cols, c_in, g, &mut gi[n * ip..(n + 1) * ip]);
        }
    }
    (grad_in, grad_k)
}

/// Transposed convolution of `batch` images `C_in×h×w` with kernel
/// `C_in×C_out×kh×kw`. `g` describes the *forward* correlation that maps the
/// `C_out×out_h×out_w` result back to `h×w`; i.e. `g.in_*` is the result size.
pub(crate) fn conv_transpose2d_forward(
    input: &[f64],
    kernel: &[f64],
    batch: usize,
    c_in: usize,
    c_out: usize,
    g: &ConvGeom,
) -> Vec<f64> {
    let k = c_out * g.patch();
    let small = g.out_plane();
    let big = c_out * g.in_plane();
    let mut out = vec![0.0; batch * big];
    let mut cols = vec![0.0; k * small];
    for n in 0..batch {
        let x = &input[n * c_in * small..(n + 1) * c_in * small];
        gemm(k, c_in, small, kernel, true, x, false, 0.0, &mut cols);
        col2im(&cols, c_out, g, &mut out[n * big..(n + 1) * big]);
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_transpose2d_backward(
    grad_out: &[f64],
    input: &[f64],
    kernel: &[f64],
    batch: usize,
    c_in: usize,
    c_out: usize,
    g: &ConvGeom,
    need_input: bool,
    need_kernel: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let k = c_out * g.patch();
    let small = g.out_plane();
    let big = c_out * g.in_plane();
    let mut grad_in = need_input.then(|| vec![0.0; batch * c_in * small]);
    let mut grad_k = need_kernel.then(|| vec![0.0; c_in * k]);
    let mut cols = vec![0.0; k * small];
    for n in 0..batch {
        im2col(&grad_out[n * big..(n + 1) * big], c_out, g, &mut cols);
        if let Some(gi) = grad_in.as_mut() {
            gemm(
                c_in,
                k,
                small,
                kernel,
                false,
                &cols,
                false,
                0.0,
                &mut gi[n * c_in * small..(n + 1) * c_in * small],
            );
        }
        if let Some(gk) = grad_k.as_mut() {
            let x = &input[n * c_in * small..(n + 1) * c_in * small];
            gemm(c_in, small, k, x, false, &cols, true, 1.0, gk);
        }
    }
    (grad_in, grad_k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_len_formula() {
        assert_eq!(conv_output_len(64, 5, 2, 2), Some(32));
        assert_eq!(conv_output_len(64, 10, 2, 4), Some(32));
        assert_eq!(conv_output_len(2, 10, 2, 4), Some(1));
        assert_eq!(conv_output_len(1, 5, 1, 0), None);
    }

    #[test]
    fn gemm_transposes() {
        // a = [[1,2],[3,4]], b = [[5,6],[7,8]]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        gemm(2, 2, 2, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
        gemm(2, 2, 2, &a, true, &b, false, 0.0, &mut c);
        assert_eq!(c, [26.0, 30.0, 38.0, 44.0]);
        gemm(2, 2, 2, &a, false, &b, true, 0.0, &mut c);
        assert_eq!(c, [17.0, 23.0, 39.0, 53.0]);
    }
}
