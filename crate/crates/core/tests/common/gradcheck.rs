use dereverb::rng::rng_from_seed;
use dereverb::tensor::{mul, sum, Tensor};

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for the relative error, so gradients that are
/// analytically near zero are compared absolutely.
pub const REL_FLOOR: f64 = 1e-2;

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Worst relative error between the analytic gradient and central
/// differences of `Σ f(inputs) ⊙ r` over every element of every input, for a
/// fixed random projection `r`.
pub fn check(inputs: &[Tensor], seed: u64, f: impl Fn(&[Tensor]) -> Tensor) -> f64 {
    let inputs: Vec<Tensor> = inputs.iter().map(|t| t.clone().requires_grad_(true)).collect();
    let out = f(&inputs);
    let r = Tensor::randn(out.shape(), 1.0, &mut rng_from_seed(seed));
    let objective = |xs: &[Tensor]| sum(&mul(&f(xs), &r).unwrap()).item();
    inputs.iter().for_each(Tensor::zero_grad);
    sum(&mul(&out, &r).unwrap()).backward().unwrap();
    let mut worst: f64 = 0.0;
    for x in &inputs {
        let grad = x.grad().unwrap_or_else(|| vec![0.0; x.numel()]);
        let base = x.to_vec();
        for i in 0..base.len() {
            let mut v = base.clone();
            v[i] = base[i] + FD_STEP;
            x.assign(&v).unwrap();
            let up = objective(&inputs);
            v[i] = base[i] - FD_STEP;
            x.assign(&v).unwrap();
            let down = objective(&inputs);
            x.assign(&base).unwrap();
            worst = worst.max(rel((up - down) / (2.0 * FD_STEP), grad[i]));
        }
    }
    worst
}
