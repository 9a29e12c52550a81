use nalgebra::DMatrix;
use proptest::prelude::*;

use pwdrec::dsp::resample_linear;
use pwdrec::envelope::{extract_envelopes, rasterize_envelopes};
use pwdrec::harness::io::{decode_samples, encode_samples};
use pwdrec::harness::{split, SplitMode, TRAIN_RATIO};
use pwdrec::nn::{forward, NetConfig, PwDRecNetParams, Tensor1};
use pwdrec::separation::{detect_polarity, pca_fit};
use pwdrec::signal::{Polarity, SampleFormat, SampleWindowPair, TimeSeries};

fn beats(amp: f64, offset: f64) -> Vec<f64> {
    (0..1200)
        .map(|i| {
            let phase = (i % 120) as f64 - 60.0;
            amp * (-(phase / 3.0).powi(2)).exp() - 0.3 * amp * (-((phase - 8.0) / 3.0).powi(2)).exp() + offset
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn raw_f64_round_trip_is_bit_exact(v in proptest::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 0..300)) {
        let back = decode_samples(&encode_samples(&v, SampleFormat::F64le), SampleFormat::F64le).unwrap();
        prop_assert_eq!(v.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), back.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn polarity_flips_with_sign(amp in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0], offset in -1.0f64..1.0) {
        let x = TimeSeries::new(beats(amp, offset), 284.0).unwrap();
        let neg = TimeSeries::new(beats(-amp, -offset), 284.0).unwrap();
        if let (Ok(a), Ok(b)) = (detect_polarity(&x), detect_polarity(&neg)) {
            prop_assert_eq!(a.opposite(), b);
            prop_assert_ne!(a, Polarity::Group);
        }
    }

    #[test]
    fn rendered_envelopes_are_recovered(
        upper in proptest::collection::vec(0.0f64..60.0, 2..80),
        lower in proptest::collection::vec(-60.0f64..0.0, 2..80),
    ) {
        let n = upper.len().min(lower.len());
        let img = rasterize_envelopes(&upper[..n], &lower[..n], 128, 64, 210, 20).unwrap();
        let env = extract_envelopes(&img, 115, 64, 200.0).unwrap();
        for (a, b) in env.upper.samples().iter().zip(&upper[..n]) {
            prop_assert!((a - b).abs() <= 1.0, "upper {} vs {}", a, b);
        }
        for (a, b) in env.lower.samples().iter().zip(&lower[..n]) {
            prop_assert!((a - b).abs() <= 1.0, "lower {} vs {}", a, b);
        }
    }

    #[test]
    fn forward_keeps_padded_length(blocks in 1usize..12, seed in 0u64..100) {
        let cfg = NetConfig { enc_channels: vec![2, 2, 4], kernel_size: 3, ..NetConfig::default() };
        let p = PwDRecNetParams::init(cfg, seed).unwrap();
        let len = 8 * blocks;
        let x = Tensor1::new(1, len, (0..len).map(|i| (i as f64).sin()).collect()).unwrap();
        let (out, _) = forward(&p, &x).unwrap();
        prop_assert_eq!(out.shape(), (1, len));
    }

    #[test]
    fn time_split_never_looks_back(sizes in proptest::collection::vec(2usize..25, 1..5), seed in any::<u64>()) {
        let mut windows = Vec::new();
        for (r, &n) in sizes.iter().enumerate() {
            for i in (0..n).rev() {
                windows.push(SampleWindowPair::new(vec![0.0; 4], vec![vec![0.0; 4]], i as f64, &format!("r{r}")).unwrap());
            }
        }
        let (train, test) = split(windows, SplitMode::TimeBased, TRAIN_RATIO, seed).unwrap();
        prop_assert_eq!(train.len() + test.len(), sizes.iter().sum::<usize>());
        for r in 0..sizes.len() {
            let id = format!("r{r}");
            let last = train.iter().filter(|w| w.record_id == id).map(|w| w.t_start).fold(f64::MIN, f64::max);
            let first = test.iter().filter(|w| w.record_id == id).map(|w| w.t_start).fold(f64::MAX, f64::min);
            prop_assert!(last < first);
        }
    }

    #[test]
    fn resampling_to_the_same_rate_is_identity(v in proptest::collection::vec(-1e6f64..1e6, 1..300), fs in 1.0f64..5000.0) {
        let x = TimeSeries::new(v, fs).unwrap();
        prop_assert_eq!(resample_linear(&x, fs).unwrap(), x);
    }

    #[test]
    fn pca_full_reconstruction(vals in proptest::collection::vec(-10.0f64..10.0, 30..60)) {
        let n = vals.len() / 3;
        let data = DMatrix::from_fn(n, 3, |i, c| vals[i * 3 + c] + (i * c) as f64 * 0.01);
        let model = pca_fit(&data).unwrap();
        let back = model.inverse_centered(&model.transform(&data, 3));
        let centered = model.center(&data);
        prop_assert!((back - centered).abs().max() < 1e-8);
    }
}
