use rand::Rng as _;

use super::conv::{self, ConvGeom};
use super::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Training or inference behaviour for BatchNorm and dropout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Eval,
}

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;
pub const BCE_CLAMP: f64 = 1e-7;

/// Per-channel running estimates kept by a BatchNorm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

fn dim_err(msg: String) -> Error {
    Error::Dimension(msg)
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(dim_err(format!(
            "{what}: shapes {} and {} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Zero-padded strided cross-correlation. `kernel` is `(out_ch, in_ch, kh, kw)`.
pub fn conv2d(input: &Tensor, kernel: &Tensor, stride: (usize, usize), padding: (usize, usize)) -> Result<Tensor> {
    let xs = input.shape();
    let ks = kernel.shape();
    if xs.channels != ks.channels {
        return Err(dim_err(format!(
            "conv2d: input channels (axis 1 of {xs}) = {} but kernel in_ch (axis 1 of {ks}) = {}",
            xs.channels, ks.channels
        )));
    }
    if stride.0 == 0 || stride.1 == 0 {
        return Err(Error::Parameter("conv2d: stride must be >= 1".into()));
    }
    let out_h = conv::conv_output_len(xs.height, ks.height, stride.0, padding.0).ok_or_else(|| {
        dim_err(format!(
            "conv2d: height {} with kernel {} and padding {} gives no output",
            xs.height, ks.height, padding.0
        ))
    })?;
    let out_w = conv::conv_output_len(xs.width, ks.width, stride.1, padding.1).ok_or_else(|| {
        dim_err(format!(
            "conv2d: width {} with kernel {} and padding {} gives no output",
            xs.width, ks.width, padding.1
        ))
    })?;
    let g = ConvGeom {
        in_h: xs.height,
        in_w: xs.width,
        kh: ks.height,
        kw: ks.width,
        sh: stride.0,
        sw: stride.1,
        ph: padding.0,
        pw: padding.1,
        out_h,
        out_w,
    };
    let (batch, c_in, c_out) = (xs.batch, xs.channels, ks.batch);
    let out = conv::conv2d_forward(&input.data(), &kernel.data(), batch, c_in, c_out, &g);
    let (x, k) = (input.clone(), kernel.clone());
    Ok(Tensor::from_op(
        Shape::new(batch, c_out, out_h, out_w),
        out,
        "conv2d",
        vec![input.clone(), kernel.clone()],
        Box::new(move |grad, needs| {
            let (gi, gk) =
                conv::conv2d_backward(grad, &x.data(), &k.data(), batch, c_in, c_out, &g, needs[0], needs[1]);
            vec![gi, gk]
        }),
    ))
}

/// Fractionally strided convolution, the adjoint of [`conv2d`].
/// `kernel` is `(in_ch, out_ch, kh, kw)`; output size is
/// `(in − 1)·s − 2p + k + output_padding`.
pub fn conv_transpose2d(
    input: &Tensor,
    kernel: &Tensor,
    stride: (usize, usize),
    padding: (usize, usize),
    output_padding: (usize, usize),
) -> Result<Tensor> {
    let xs = input.shape();
    let ks = kernel.shape();
    if xs.channels != ks.batch {
        return Err(dim_err(format!(
            "conv_transpose2d: input channels (axis 1 of {xs}) = {} but kernel in_ch (axis 0 of {ks}) = {}",
            xs.channels, ks.batch
        )));
    }
    if stride.0 == 0 || stride.1 == 0 {
        return Err(Error::Parameter("conv_transpose2d: stride must be >= 1".into()));
    }
    if output_padding.0 >= stride.0 || output_padding.1 >= stride.1 {
        return Err(Error::Parameter(
            "conv_transpose2d: output_padding must be smaller than stride".into(),
        ));
    }
    let out_len = |len: usize, k: usize, s: usize, p: usize, op: usize, axis: &str| -> Result<usize> {
        let full = (len as isize - 1) * s as isize + k as isize + op as isize - 2 * p as isize;
        if len == 0 || full < 1 {
            return Err(dim_err(format!(
                "conv_transpose2d: {axis} output size {full} is not positive"
            )));
        }
        Ok(full as usize)
    };
    let out_h = out_len(xs.height, ks.height, stride.0, padding.0, output_padding.0, "height")?;
    let out_w = out_len(xs.width, ks.width, stride.1, padding.1, output_padding.1, "width")?;
    let g = ConvGeom {
        in_h: out_h,
        in_w: out_w,
        kh: ks.height,
        kw: ks.width,
        sh: stride.0,
        sw: stride.1,
        ph: padding.0,
        pw: padding.1,
        out_h: xs.height,
        out_w: xs.width,
    };
    let (batch, c_in, c_out) = (xs.batch, xs.channels, ks.channels);
    let out = conv::conv_transpose2d_forward(&input.data(), &kernel.data(), batch, c_in, c_out, &g);
    let (x, k) = (input.clone(), kernel.clone());
    Ok(Tensor::from_op(
        Shape::new(batch, c_out, out_h, out_w),
        out,
        "conv_transpose2d",
        vec![input.clone(), kernel.clone()],
        Box::new(move |grad, needs| {
            let (gi, gk) =
                conv::conv_transpose2d_backward(grad, &x.data(), &k.data(), batch, c_in, c_out, &g, needs[0], needs[1]);
            vec![gi, gk]
        }),
    ))
}

/// Adds `bias[c]` to every element of channel `c`. `bias` holds `C` values.
pub fn add_channel_bias(input: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let s = input.shape();
    if bias.numel() != s.channels {
        return Err(dim_err(format!(
            "add_channel_bias: {} bias values for {} channels",
            bias.numel(),
            s.channels
        )));
    }
    let plane = s.plane();
    let mut out = input.to_vec();
    {
        let b = bias.data();
        for (i, chunk) in out.chunks_mut(plane).enumerate() {
            let v = b[i % s.channels];
            chunk.iter_mut().for_each(|x| *x += v);
        }
    }
    let channels = s.channels;
    Ok(Tensor::from_op(
        s,
        out,
        "add_channel_bias",
        vec![input.clone(), bias.clone()],
        Box::new(move |grad, needs| {
            let gb = needs[1].then(|| {
                let mut gb = vec![0.0; channels];
                for (i, chunk) in grad.chunks(plane).enumerate() {
                    gb[i % channels] += chunk.iter().sum::<f64>();
                }
                gb
            });
            vec![needs[0].then(|| grad.to_vec()), gb]
        }),
    ))
}

/// Per-channel batch normalization. In train mode the statistics come from
/// the batch (over N·H·W) and `stats` is updated with `momentum`; in eval
/// mode `stats` is used as-is.
pub fn batchnorm2d(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    stats: &mut RunningStats,
    mode: Mode,
    momentum: f64,
    eps: f64,
) -> Result<Tensor> {
    let s = input.shape();
    let channels = s.channels;
    if gamma.numel() != channels
        || beta.numel() != channels
        || stats.mean.len() != channels
        || stats.var.len() != channels
    {
        return Err(dim_err(format!(
            "batchnorm2d: affine/statistics sizes do not match {channels} channels"
        )));
    }
    if eps <= 0.0 {
        return Err(Error::Parameter("batchnorm2d: eps must be positive".into()));
    }
    let plane = s.plane();
    let count = s.batch * plane;
    let x = input.data();
    let (mean, var) = match mode {
        Mode::Train => {
            let mut mean = vec![0.0; channels];
            let mut var = vec![0.0; channels];
            for (i, chunk) in x.chunks(plane).enumerate() {
                mean[i % channels] += chunk.iter().sum::<f64>();
            }
            mean.iter_mut().for_each(|m| *m /= count as f64);
            for (i, chunk) in x.chunks(plane).enumerate() {
                let m = mean[i % channels];
                var[i % channels] += chunk.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
            }
            var.iter_mut().for_each(|v| *v /= count as f64);
            let unbias = if count > 1 {
                count as f64 / (count - 1) as f64
            } else {
                1.0
            };
            for c in 0..channels {
                stats.mean[c] = (1.0 - momentum) * stats.mean[c] + momentum * mean[c];
                stats.var[c] = (1.0 - momentum) * stats.var[c] + momentum * var[c] * unbias;
            }
            (mean, var)
        }
        Mode::Eval => (stats.mean.clone(), stats.var.clone()),
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    for (i, (dst, src)) in xhat.chunks_mut(plane).zip(x.chunks(plane)).enumerate() {
        let c = i % channels;
        for (d, v) in dst.iter_mut().zip(src) {
            *d = (v - mean[c]) * inv_std[c];
        }
    }
    drop(x);
    let mut out = xhat.clone();
    {
        let (gm, bt) = (gamma.data(), beta.data());
        for (i, chunk) in out.chunks_mut(plane).enumerate() {
            let c = i % channels;
            chunk.iter_mut().for_each(|v| *v = gm[c] * *v + bt[c]);
        }
    }
    let gamma_c = gamma.clone();
    Ok(Tensor::from_op(
        s,
        out,
        "batchnorm2d",
        vec![input.clone(), gamma.clone(), beta.clone()],
        Box::new(move |grad, needs| {
            let mut sum_dy = vec![0.0; channels];
            let mut sum_dy_xhat = vec![0.0; channels];
            for (i, (g, xh)) in grad.chunks(plane).zip(xhat.chunks(plane)).enumerate() {
                let c = i % channels;
                sum_dy[c] += g.iter().sum::<f64>();
                sum_dy_xhat[c] += g.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>();
            }
            let gi = needs[0].then(|| {
                let gm = gamma_c.data();
                let mut gi = vec![0.0; grad.len()];
                for (i, ((dst, g), xh)) in gi
                    .chunks_mut(plane)
                    .zip(grad.chunks(plane))
                    .zip(xhat.chunks(plane))
                    .enumerate()
                {
                    let c = i % channels;
                    let scale = gm[c] * inv_std[c];
                    match mode {
                        Mode::Train => {
                            let n = count as f64;
                            let (mdy, mdyx) = (sum_dy[c] / n, sum_dy_xhat[c] / n);
                            for ((d, gv), xv) in dst.iter_mut().zip(g).zip(xh) {
                                *d = scale * (gv - mdy - xv * mdyx);
                            }
                        }
                        Mode::Eval => {
                            for (d, gv) in dst.iter_mut().zip(g) {
                                *d = scale * gv;
                            }
                        }
                    }
                }
                gi
            });
            vec![gi, needs[1].then_some(sum_dy_xhat), needs[2].then_some(sum_dy)]
        }),
    ))
}

fn unary(
    input: &Tensor,
    name: &'static str,
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
) -> Tensor {
    let out: Vec<f64> = input.data().iter().map(|&v| f(v)).collect();
    let x = input.clone();
    let y = out.clone();
    Tensor::from_op(
        input.shape(),
        out,
        name,
        vec![input.clone()],
        Box::new(move |grad, _| {
            let xd = x.data();
            vec![Some(
                grad.iter()
                    .zip(xd.iter().zip(&y))
                    .map(|(g, (&xv, &yv))| g * df(xv, yv))
                    .collect(),
            )]
        }),
    )
}

/// `x` for `x ≥ 0`, `slope·x` otherwise.
pub fn leaky_relu(input: &Tensor, slope: f64) -> Tensor {
    unary(
        input,
        "leaky_relu",
        move |x| if x >= 0.0 { x } else { slope * x },
        move |x, _| if x >= 0.0 { 1.0 } else { slope },
    )
}

pub fn relu(input: &Tensor) -> Tensor {
    unary(input, "relu", |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
}

pub fn tanh(input: &Tensor) -> Tensor {
    unary(input, "tanh", f64::tanh, |_, y| 1.0 - y * y)
}

pub fn sigmoid(input: &Tensor) -> Tensor {
    unary(
        input,
        "sigmoid",
        |x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        },
        |_, y| y * (1.0 - y),
    )
}

/// Inverted dropout: in train mode each element is zeroed with probability
/// `p` and survivors are scaled by `1/(1−p)`. The mask is a function of `seed`.
pub fn dropout(input: &Tensor, p: f64, mode: Mode, seed: u64) -> Result<Tensor> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Parameter(format!("dropout probability {p} not in [0, 1)")));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok(unary(input, "dropout", |x| x, |_, _| 1.0));
    }
    let mut rng = rng_from_seed(seed);
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..input.numel())
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    let out = input.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
    Ok(Tensor::from_op(
        input.shape(),
        out,
        "dropout",
        vec![input.clone()],
        Box::new(move |grad, _| vec![Some(grad.iter().zip(&mask).map(|(g, m)| g * m).collect())]),
    ))
}

/// Concatenate along the channel axis.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.batch != sb.batch || sa.height != sb.height || sa.width != sb.width {
        return Err(dim_err(format!(
            "concat_channels: batch/height/width of {sa} and {sb} differ"
        )));
    }
    let (la, lb) = (sa.channels * sa.plane(), sb.channels * sb.plane());
    let mut out = Vec::with_capacity(a.numel() + b.numel());
    {
        let (da, db) = (a.data(), b.data());
        for n in 0..sa.batch {
            out.extend_from_slice(&da[n * la..(n + 1) * la]);
            out.extend_from_slice(&db[n * lb..(n + 1) * lb]);
        }
    }
    let shape = Shape::new(sa.batch, sa.channels + sb.channels, sa.height, sa.width);
    let batch = sa.batch;
    Ok(Tensor::from_op(
        shape,
        out,
        "concat_channels",
        vec![a.clone(), b.clone()],
        Box::new(move |grad, needs| {
            let mut ga = needs[0].then(|| Vec::with_capacity(batch * la));
            let mut gb = needs[1].then(|| Vec::with_capacity(batch * lb));
            for n in 0..batch {
                let row = &grad[n * (la + lb)..(n + 1) * (la + lb)];
                if let Some(g) = ga.as_mut() {
                    g.extend_from_slice(&row[..la]);
                }
                if let Some(g) = gb.as_mut() {
                    g.extend_from_slice(&row[la..]);
                }
            }
            vec![ga, gb]
        }),
    ))
}

/// Inverse of [`concat_channels`]: the first `first` channels and the rest.
pub fn split_channels(x: &Tensor, first: usize) -> Result<(Tensor, Tensor)> {
    let s = x.shape();
    if first > s.channels {
        return Err(dim_err(format!("split_channels: {first} > {} channels", s.channels)));
    }
    let (la, lb) = (first * s.plane(), (s.channels - first) * s.plane());
    let (mut a, mut b) = (Vec::new(), Vec::new());
    {
        let d = x.data();
        for n in 0..s.batch {
            let row = &d[n * (la + lb)..(n + 1) * (la + lb)];
            a.extend_from_slice(&row[..la]);
            b.extend_from_slice(&row[la..]);
        }
    }
    let batch = s.batch;
    // scatter one half's gradient back into a full-size zero buffer
    let part = move |offset: usize, len: usize| {
        Box::new(move |grad: &[f64], _: &[bool]| {
            let mut g = vec![0.0; batch * (la + lb)];
            for n in 0..batch {
                let at = n * (la + lb) + offset;
                g[at..at + len].copy_from_slice(&grad[n * len..(n + 1) * len]);
            }
            vec![Some(g)]
        })
    };
    Ok((
        Tensor::from_op(
            Shape::new(s.batch, first, s.height, s.width),
            a,
            "split_channels",
            vec![x.clone()],
            part(0, la),
        ),
        Tensor::from_op(
            Shape::new(s.batch, s.channels - first, s.height, s.width),
            b,
            "split_channels",
            vec![x.clone()],
            part(la, lb),
        ),
    ))
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape(a, b, "add")?;
    let out = a.data().iter().zip(b.data().iter()).map(|(x, y)| x + y).collect();
    Ok(Tensor::from_op(
        a.shape(),
        out,
        "add",
        vec![a.clone(), b.clone()],
        Box::new(|grad, needs| vec![needs[0].then(|| grad.to_vec()), needs[1].then(|| grad.to_vec())]),
    ))
}

/// Elementwise product.
pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape(a, b, "mul")?;
    let out = a.data().iter().zip(b.data().iter()).map(|(x, y)| x * y).collect();
    let (ac, bc) = (a.clone(), b.clone());
    Ok(Tensor::from_op(
        a.shape(),
        out,
        "mul",
        vec![a.clone(), b.clone()],
        Box::new(move |grad, needs| {
            let ga = needs[0].then(|| grad.iter().zip(bc.data().iter()).map(|(g, y)| g * y).collect());
            let gb = needs[1].then(|| grad.iter().zip(ac.data().iter()).map(|(g, x)| g * x).collect());
            vec![ga, gb]
        }),
    ))
}

pub fn scale(input: &Tensor, factor: f64) -> Tensor {
    unary(input, "scale", move |x| factor * x, move |_, _| factor)
}

/// Sum of all elements as a scalar tensor.
pub fn sum(input: &Tensor) -> Tensor {
    let total = input.data().iter().sum();
    let n = input.numel();
    Tensor::from_op(
        Shape::scalar(),
        vec![total],
        "sum",
        vec![input.clone()],
        Box::new(move |grad, _| vec![Some(vec![grad[0]; n])]),
    )
}

pub fn mean(input: &Tensor) -> Tensor {
    let n = input.numel();
    scale(&sum(input), 1.0 / n as f64)
}

/// `Σ (pred − target)² / N`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    same_shape(pred, target, "mse_loss")?;
    let n = pred.numel() as f64;
    let diff: Vec<f64> = pred
        .data()
        .iter()
        .zip(target.data().iter())
        .map(|(p, t)| p - t)
        .collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok(Tensor::from_op(
        Shape::scalar(),
        vec![loss],
        "mse_loss",
        vec![pred.clone(), target.clone()],
        Box::new(move |grad, needs| {
            let g = grad[0] * 2.0 / n;
            let gp = needs[0].then(|| diff.iter().map(|d| g * d).collect());
            let gt = needs[1].then(|| diff.iter().map(|d| -g * d).collect());
            vec![gp, gt]
        }),
    ))
}

/// Binary cross-entropy of probabilities against a constant label, averaged
/// over elements. Probabilities are clamped to `[1e−7, 1 − 1e−7]`.
pub fn bce_loss(pred: &Tensor, label: f64) -> Tensor {
    let n = pred.numel() as f64;
    let p: Vec<f64> = pred
        .data()
        .iter()
        .map(|&v| v.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP))
        .collect();
    let raw = pred.to_vec();
    let loss = -p
        .iter()
        .map(|&q| label * q.ln() + (1.0 - label) * (1.0 - q).ln())
        .sum::<f64>()
        / n;
    Tensor::from_op(
        Shape::scalar(),
        vec![loss],
        "bce_loss",
        vec![pred.clone()],
        Box::new(move |grad, _| {
            vec![Some(
                p.iter()
                    .zip(&raw)
                    .map(|(&q, &r)| {
                        if r < BCE_CLAMP || r > 1.0 - BCE_CLAMP {
                            0.0
                        } else {
                            grad[0] * (-label / q + (1.0 - label) / (1.0 - q)) / n
                        }
                    })
                    .collect(),
            )]
        }),
    )
}
