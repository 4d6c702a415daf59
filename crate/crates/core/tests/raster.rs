mod common;

use candlenet_core::market_data::Bar;
use candlenet_core::raster::{decode_png, encode_png, render_window, to_tensor};
use candlenet_core::synth::momentum_series;
use candlenet_core::window::{sliding_windows, DatasetSpec};
use common::{ascii, golden_pixels, golden_window, pixels};
use proptest::prelude::*;

#[test]
fn two_bar_golden_chart() {
    let spec = DatasetSpec::new(2, 20, false).unwrap();
    let img = render_window(&golden_window(), &spec).unwrap();
    let got = pixels(&img);
    let want = golden_pixels();
    assert!(got == want, "got\n{}\nwant\n{}", ascii(&got, 20), ascii(&want, 20));
}

#[test]
fn golden_chart_survives_png() {
    let spec = DatasetSpec::new(2, 20, false).unwrap();
    let img = render_window(&golden_window(), &spec).unwrap();
    let back = decode_png(&encode_png(&img).unwrap()).unwrap();
    assert_eq!(pixels(&back), golden_pixels());
}

fn hundred_windows(spec: &DatasetSpec) -> Vec<Vec<Bar>> {
    let s = momentum_series("DET", 100 + spec.period + spec.horizon, 5);
    let w = sliding_windows(&s, spec).samples;
    assert!(w.len() >= 100);
    w.into_iter().take(100).map(|s| s.window).collect()
}

#[test]
fn png_bytes_deterministic() {
    for spec in [DatasetSpec::new(20, 50, true).unwrap(), DatasetSpec::new(5, 20, false).unwrap()] {
        let windows = hundred_windows(&spec);
        let first: Vec<Vec<u8>> =
            windows.iter().map(|w| encode_png(&render_window(w, &spec).unwrap()).unwrap()).collect();
        let second: Vec<Vec<u8>> =
            windows.iter().map(|w| encode_png(&render_window(w, &spec).unwrap()).unwrap()).collect();
        assert_eq!(first, second);
        assert!(first.iter().all(|p| p.starts_with(b"\x89PNG\r\n\x1a\n")));
    }
}

#[test]
fn tensor_matches_pixels() {
    let spec = DatasetSpec::new(2, 20, false).unwrap();
    let t = to_tensor(&render_window(&golden_window(), &spec).unwrap());
    assert_eq!(t.shape(), &[20, 20, 3]);
    // row 0, column 4 is the green wick
    assert_eq!(&t.data()[12..15], &[0.0, 1.0, 0.0]);
    assert_eq!(&t.data()[0..3], &[1.0, 1.0, 1.0]);
}

fn scaled(window: &[Bar], price: f64, volume: u64) -> Vec<Bar> {
    window
        .iter()
        .map(|b| {
            Bar::new(b.date, b.open * price, b.high * price, b.low * price, b.close * price, b.volume * volume).unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn power_of_two_scaling_is_invisible(seed in 0u64..1000, shift in -8i32..9, vshift in 0u32..8, vol in any::<bool>(), p in prop::sample::select(vec![5usize, 10, 20])) {
        let spec = DatasetSpec::new(p, 50, vol).unwrap();
        let s = momentum_series("S", p + 1, seed);
        let window = &s.bars()[..p];
        let a = render_window(window, &spec).unwrap();
        let b = render_window(&scaled(window, 2f64.powi(shift), 1 << vshift), &spec).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn every_pixel_in_palette(seed in 0u64..1000, vol in any::<bool>(), p in prop::sample::select(vec![5usize, 10, 20]), dim in prop::sample::select(vec![20usize, 50])) {
        use candlenet_core::raster::{BACKGROUND, BEARISH, BULLISH, VOLUME};
        let spec = DatasetSpec::new(p, dim, vol).unwrap();
        let s = momentum_series("S", p, seed);
        let img = render_window(s.bars(), &spec).unwrap();
        prop_assert_eq!(img.width(), dim);
        prop_assert!(pixels(&img).iter().all(|px| [BACKGROUND, BULLISH, BEARISH, VOLUME].contains(px)));
    }
}
