use proptest::prelude::*;

use dereverb::cli::RunConfig;
use dereverb::dataset::{build_dataset, content_hash, DatasetConfig};
use dereverb::metrics::{cepstral_distance, fwsegsnr, llr};
use dereverb::rng::{derive_seed, rng_from_seed};
use dereverb::signal::{
    from_logspec, istft, snr_db, stft, to_logspec, NormSpec, TileSpec, Waveform, FRAME_LEN, SAMPLE_RATE,
};
use dereverb::tensor::{
    bce_loss, conv2d, conv_transpose2d, mse_loss, no_grad, sigmoid, tanh, Checkpoint, Mode, Shape, Tensor,
};
use dereverb::unet::{UNetConfig, UNetModel};

fn signal(samples: Vec<f64>) -> Waveform {
    Waveform::new(samples, SAMPLE_RATE).unwrap()
}

fn coloured(len: usize, seed: u64) -> Waveform {
    use rand::Rng;
    let mut rng = rng_from_seed(seed);
    let mut prev = 0.0;
    signal(
        (0..len)
            .map(|_| {
                prev = 0.6 * prev + rng.random_range(-0.5..0.5);
                prev
            })
            .collect(),
    )
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data().iter()).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transposed_conv_is_the_adjoint(
        k in 1usize..5, s in 1usize..4, p in 0usize..3, extra_h in 0usize..7, extra_w in 0usize..7,
        cin in 1usize..3, cout in 1usize..3, seed in any::<u64>(),
    ) {
        let lo = k.saturating_sub(2 * p).max(1);
        let (h, w) = (lo + extra_h, lo + extra_w);
        let mut rng = rng_from_seed(seed);
        let x = Tensor::randn(Shape::new(1, cin, h, w), 1.0, &mut rng);
        let ker = Tensor::randn(Shape::new(cout, cin, k, k), 1.0, &mut rng);
        let cx = conv2d(&x, &ker, (s, s), (p, p)).unwrap();
        let y = Tensor::randn(cx.shape(), 1.0, &mut rng);
        let op = ((h + 2 * p - k) % s, (w + 2 * p - k) % s);
        let ty = conv_transpose2d(&y, &ker, (s, s), (p, p), op).unwrap();
        prop_assert_eq!(ty.shape(), x.shape());
        prop_assert!((dot(&cx, &y) - dot(&x, &ty)).abs() < 1e-10);
    }

    #[test]
    fn losses_and_squashers_stay_in_range(v in proptest::collection::vec(-30.0f64..30.0, 1..40), label in 0.0f64..=1.0) {
        let t = Tensor::from_vec(Shape::vector(v.len()), v.clone()).unwrap();
        prop_assert!(sigmoid(&t).data().iter().all(|&y| (0.0..=1.0).contains(&y)));
        prop_assert!(tanh(&t).data().iter().all(|&y| (-1.0..=1.0).contains(&y)));
        let bce = bce_loss(&sigmoid(&t), label).item();
        prop_assert!(bce >= 0.0 && bce <= -(1e-7f64).ln() + 1e-9);
        prop_assert_eq!(mse_loss(&t, &t).unwrap().item(), 0.0);
        let shifted = Tensor::from_vec(Shape::vector(v.len()), v.iter().map(|x| x + 0.5).collect()).unwrap();
        prop_assert!((mse_loss(&t, &shifted).unwrap().item() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn stft_magnitudes_scale_linearly(seed in any::<u64>(), gain in 0.01f64..10.0) {
        let x = coloured(3000, seed);
        let y = signal(x.samples.iter().map(|v| v * gain).collect());
        let (sx, sy) = (stft(&x), stft(&y));
        for (a, b) in sx.magnitude.iter().zip(&sy.magnitude) {
            prop_assert!((a * gain - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn istft_inverts_stft(seed in any::<u64>(), len in 600usize..5000) {
        let x = coloured(len, seed);
        let y = istft(&stft(&x));
        prop_assert_eq!(y.len(), x.len());
        if len > 3 * FRAME_LEN {
            let inner = FRAME_LEN..len - FRAME_LEN;
            prop_assert!(snr_db(&x.samples[inner.clone()], &y.samples[inner]) > 60.0);
        }
    }

    #[test]
    fn unclamped_logspec_round_trip(seed in any::<u64>(), len in 2000usize..9000, tile in 0usize..3) {
        let x = coloured(len, seed);
        let spec = stft(&x);
        let top = spec.magnitude.iter().cloned().fold(0.0, f64::max);
        // a range wide enough that no bin is clamped
        let norm = NormSpec::new(-400.0, 20.0 * top.log10() + 1.0).unwrap();
        let tile = [(256, 256), (64, 64), (128, 32)][tile];
        let tile = TileSpec::new(tile.0, tile.1).unwrap();
        let (images, side) = to_logspec(&spec, norm, tile).unwrap();
        prop_assert!(images.iter().all(|im| im.values.iter().all(|v| (-1.0..=1.0).contains(v))));
        let y = from_logspec(&images, &side).unwrap();
        prop_assert_eq!(y.len(), x.len());
        prop_assert!(snr_db(&x.samples, &y.samples) > 60.0);
    }

    #[test]
    fn norm_maps_are_inverse_inside_the_range(hi in -60.0f64..60.0, frac in 0.0f64..=1.0) {
        let n = NormSpec::from_ceiling(hi);
        let db = n.lo_db + frac * (n.hi_db - n.lo_db);
        prop_assert!((n.to_db(n.to_unit(db)) - db).abs() < 1e-9);
        prop_assert_eq!(n.to_unit(n.hi_db + 5.0), 1.0);
        prop_assert_eq!(n.to_unit(n.lo_db - 5.0), -1.0);
    }

    #[test]
    fn checkpoint_bytes_round_trip(
        values in proptest::collection::vec(-1e6f64..1e6, 0..50),
        key in "[a-z_]{1,12}", meta in "[ -~]{0,20}",
    ) {
        let mut ck = Checkpoint::default();
        ck.set_meta(key.clone(), &meta);
        ck.push("w", vec![values.len()], values.clone());
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        prop_assert_eq!(back.meta(&key), Some(meta.as_str()));
        prop_assert_eq!(&back.get("w").unwrap().values, &values);
        prop_assert_eq!(back.to_bytes(), ck.to_bytes());
    }

    #[test]
    fn run_config_text_round_trip(
        n_utts in 1usize..100, lr in 1e-6f64..1.0, t60_lo in 0.1f64..0.5, span in 0.0f64..0.5,
        seed in any::<u64>(), shuffle in any::<bool>(),
    ) {
        let mut cfg = RunConfig::default();
        cfg.apply(&[
            format!("n_utts={n_utts}"), format!("lr={lr}"), format!("t60_lo={t60_lo}"),
            format!("t60_hi={}", t60_lo + span), format!("seed={seed}"), format!("shuffle={shuffle}"),
        ]).unwrap();
        prop_assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg.clone());
        prop_assert!(cfg.dataset().is_ok());
    }

    #[test]
    fn derived_seeds_separate_streams(seed in any::<u64>(), a in any::<u64>(), b in any::<u64>()) {
        prop_assume!(a != b);
        prop_assert_ne!(derive_seed(seed, a), derive_seed(seed, b));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn intrusive_measures_are_gain_invariant_where_expected(seed in any::<u64>(), gain in 0.05f64..5.0) {
        let x = coloured(6000, seed);
        let y = signal(x.samples.iter().map(|v| v * gain).collect());
        prop_assert!(cepstral_distance(&x, &y).unwrap() < 1e-6);
        prop_assert!(llr(&x, &y).unwrap() < 1e-9);
        prop_assert!((fwsegsnr(&x, &x).unwrap() - 35.0).abs() < 1e-12);
        let f = fwsegsnr(&x, &y).unwrap();
        prop_assert!((-10.0..=35.0).contains(&f));
    }

    #[test]
    fn llr_and_cd_are_non_negative(seed in any::<u64>(), other in any::<u64>()) {
        let (x, y) = (coloured(5000, seed), coloured(5000, other));
        prop_assert!(cepstral_distance(&x, &y).unwrap() >= 0.0);
        prop_assert!(llr(&x, &y).unwrap() >= 0.0);
    }

    #[test]
    fn unet_output_is_bounded(seed in any::<u64>(), std in 0.1f64..5.0) {
        let model = UNetModel::new(UNetConfig::toy(), seed).unwrap();
        let x = Tensor::randn(Shape::new(1, 1, 64, 64), std, &mut rng_from_seed(seed ^ 1));
        for mode in [Mode::Train, Mode::Eval] {
            let y = no_grad(|| model.forward_with_mode(&x, mode)).unwrap();
            prop_assert_eq!(y.shape(), x.shape());
            prop_assert!(y.data().iter().all(|v| v.abs() <= 1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn corpus_is_a_pure_function_of_its_seed(seed in any::<u64>()) {
        let cfg = DatasetConfig { n_utts: 2, duration_s: 0.4, seed, ..DatasetConfig::default() };
        let (a, na) = build_dataset(&cfg).unwrap();
        let (b, nb) = build_dataset(&cfg).unwrap();
        prop_assert_eq!(content_hash(&a), content_hash(&b));
        prop_assert_eq!(na, nb);
        let other = DatasetConfig { seed: seed.wrapping_add(1), ..cfg };
        prop_assert_ne!(content_hash(&build_dataset(&other).unwrap().0), content_hash(&a));
    }
}
