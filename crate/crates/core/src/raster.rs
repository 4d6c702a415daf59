//! Candlestick chart rasterizer.
//!
//! Charts are drawn natively at the target size with no anti-aliasing, axes
//! or decoration. Every pixel is one of four palette colors, and the output
//! depends only on the window's bars, so identical windows produce
//! byte-identical PNGs.

use std::ops::Range;

use crate::error::{contract, Error, Result};
use crate::market_data::Bar;
use crate::nn::tensor::Tensor;
use crate::window::DatasetSpec;

pub type Rgb = [u8; 3];

pub const BACKGROUND: Rgb = [255, 255, 255];
pub const BULLISH: Rgb = [0, 255, 0];
pub const BEARISH: Rgb = [255, 0, 0];
pub const VOLUME: Rgb = [0, 0, 0];

/// Square RGB raster, row-major, 8 bits per channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChartImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl ChartImage {
    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        let pixels = color.iter().copied().cycle().take(width * height * 3).collect();
        ChartImage { width, height, pixels }
    }

    pub fn from_raw(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height * 3 {
            return Err(Error::Shape {
                expected: format!("{} bytes", width * height * 3),
                found: format!("{} bytes", pixels.len()),
            });
        }
        Ok(ChartImage { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn raw(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> Rgb {
        let i = (row * self.width + col) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, row: usize, col: usize, color: Rgb) {
        let i = (row * self.width + col) * 3;
        self.pixels[i..i + 3].copy_from_slice(&color);
    }
}

/// Pixel geometry for one (period, dimension, volume) combination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChartLayout {
    pub price_panel_rows: Range<usize>,
    /// Empty when there is no volume panel.
    pub volume_panel_rows: Range<usize>,
    pub candle_width: usize,
    pub gap: usize,
    pub wick_width: usize,
}

impl ChartLayout {
    pub fn new(spec: &DatasetSpec) -> Result<Self> {
        spec.validate()?;
        let dim = spec.dimension;
        let slot = dim / spec.period;
        let (candle_width, gap) = if slot >= 2 { (slot - 1, 1) } else { (1, 0) };
        let (price_panel_rows, volume_panel_rows) = if spec.volume_panel {
            let vol = dim / 5;
            if vol == 0 || dim < vol + 2 {
                return Err(Error::Config(format!("dimension {dim} too small for a volume panel")));
            }
            (0..dim - vol - 1, dim - vol..dim)
        } else {
            (0..dim, dim..dim)
        };
        Ok(ChartLayout { price_panel_rows, volume_panel_rows, candle_width, gap, wick_width: 1 })
    }

    /// Columns covered by candle `k`.
    pub fn candle_columns(&self, k: usize) -> Range<usize> {
        let start = k * (self.candle_width + self.gap);
        start..start + self.candle_width
    }

    /// The wick column of candle `k` (left of center for even widths).
    pub fn wick_column(&self, k: usize) -> usize {
        self.candle_columns(k).start + (self.candle_width - 1) / 2
    }

    pub fn price_panel_height(&self) -> usize {
        self.price_panel_rows.len()
    }
}

/// Rounds half away from zero.
pub fn round_half_away(x: f64) -> f64 {
    x.round()
}

/// Maps a price onto a panel row, 0 at `hi`, `panel_height - 1` at `lo`.
pub fn price_to_row(p: f64, lo: f64, hi: f64, panel_height: usize) -> Result<usize> {
    if panel_height == 0 {
        return contract("panel_height must be >= 1");
    }
    if !(lo <= p && p <= hi) {
        return contract(format!("price {p} outside [{lo}, {hi}]"));
    }
    let span = (panel_height - 1) as f64;
    if hi == lo {
        return Ok((panel_height - 1) / 2);
    }
    Ok(round_half_away((hi - p) / (hi - lo) * span) as usize)
}

fn candle_color(bar: &Bar) -> Rgb {
    if bar.is_bullish() {
        BULLISH
    } else {
        BEARISH
    }
}

/// Draws one window as a candlestick chart.
pub fn render_window(window: &[Bar], spec: &DatasetSpec) -> Result<ChartImage> {
    if window.len() != spec.period {
        return contract(format!("window has {} bars, period is {}", window.len(), spec.period));
    }
    let layout = ChartLayout::new(spec)?;
    let dim = spec.dimension;
    let mut img = ChartImage::filled(dim, dim, BACKGROUND);

    let lo = window.iter().map(|b| b.low).fold(f64::INFINITY, f64::min);
    let hi = window.iter().map(|b| b.high).fold(f64::NEG_INFINITY, f64::max);
    let height = layout.price_panel_height();
    let top = layout.price_panel_rows.start;

    for (k, bar) in window.iter().enumerate() {
        let color = candle_color(bar);
        let row = |p| price_to_row(p, lo, hi, height);
        let (wick_top, wick_bottom) = (row(bar.high)?, row(bar.low)?);
        let (r_open, r_close) = (row(bar.open)?, row(bar.close)?);
        let wick = layout.wick_column(k);
        for r in wick_top..=wick_bottom {
            img.set(top + r, wick, color);
        }
        for r in r_open.min(r_close)..=r_open.max(r_close) {
            for c in layout.candle_columns(k) {
                img.set(top + r, c, color);
            }
        }
    }

    if spec.volume_panel {
        let vol_height = layout.volume_panel_rows.len();
        let max_vol = window.iter().map(|b| b.volume).max().unwrap_or(0);
        if max_vol > 0 {
            for (k, bar) in window.iter().enumerate() {
                let h = round_half_away(bar.volume as f64 / max_vol as f64 * vol_height as f64) as usize;
                for r in layout.volume_panel_rows.end - h..layout.volume_panel_rows.end {
                    for c in layout.candle_columns(k) {
                        img.set(r, c, VOLUME);
                    }
                }
            }
        }
    }
    Ok(img)
}

/// Encodes as an 8-bit RGB PNG with no ancillary chunks.
pub fn encode_png(img: &ChartImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        encoder.set_compression(png::Compression::Balanced);
        encoder.set_filter(png::Filter::NoFilter);
        let mut writer = encoder.write_header().map_err(|e| Error::Png(e.to_string()))?;
        writer.write_image_data(&img.pixels).map_err(|e| Error::Png(e.to_string()))?;
        writer.finish().map_err(|e| Error::Png(e.to_string()))?;
    }
    Ok(out)
}

/// Decodes an 8-bit RGB PNG.
pub fn decode_png(bytes: &[u8]) -> Result<ChartImage> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| Error::Png(e.to_string()))?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::Png("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Png(e.to_string()))?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Png(format!("unsupported {:?}/{:?}", info.color_type, info.bit_depth)));
    }
    buf.truncate(info.buffer_size());
    ChartImage::from_raw(info.width as usize, info.height as usize, buf)
}

/// `(height, width, 3)` tensor with channels scaled to `[0, 1]`.
pub fn to_tensor(img: &ChartImage) -> Tensor<f32> {
    let data = img.pixels.iter().map(|&v| v as f32 / 255.0).collect();
    Tensor::from_vec(vec![img.height, img.width, 3], data).expect("pixel buffer matches shape")
}

/// `<ticker>_<window_end_date>_<period>_<dimension>_<vol|novol>.png`
pub fn chart_file_name(ticker: &str, window_end: chrono::NaiveDate, spec: &DatasetSpec) -> String {
    format!(
        "{}_{}_{}_{}_{}.png",
        ticker,
        window_end.format("%Y-%m-%d"),
        spec.period,
        spec.dimension,
        if spec.volume_panel { "vol" } else { "novol" }
    )
}
