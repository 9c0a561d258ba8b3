//! LOMO-style hand-crafted descriptor.
//!
//! The image is cut into horizontal stripes. Inside each stripe a window
//! slides horizontally; every window yields a joint HSV colour histogram and
//! a histogram of ternary local texture codes. The stripe keeps, bin by bin,
//! the maximum over window positions. Stripes are concatenated, passed
//! through `log(1 + x)` and L2-normalised.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of folded texture bins (four ternary digits).
pub const TEXTURE_BINS: usize = 81;

/// 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<[u8; 3]>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Config(format!("image size {height}x{width} is empty")));
        }
        if pixels.len() != height * width {
            return Err(Error::shape(height * width, pixels.len()));
        }
        Ok(Self { height, width, pixels })
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Result<Self> {
        Self::new(height, width, vec![rgb; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [u8; 3]) {
        self.pixels[y * self.width + x] = rgb;
    }

    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set_pixel(y, x, self.pixel(y, self.width - 1 - x));
            }
        }
        out
    }

    fn gray(&self, y: usize, x: usize) -> f64 {
        let [r, g, b] = self.pixel(y, x);
        (r as f64 + g as f64 + b as f64) / (3.0 * 255.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DescriptorConfig {
    pub num_stripes: usize,
    pub hue_bins: usize,
    pub sat_bins: usize,
    pub val_bins: usize,
    /// Texture tolerance as a fraction of the grey range.
    pub texture_threshold: f64,
    pub subwindow: usize,
    pub subwindow_stride: usize,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self {
            num_stripes: 8,
            hue_bins: 8,
            sat_bins: 8,
            val_bins: 8,
            texture_threshold: 0.03,
            subwindow: 10,
            subwindow_stride: 5,
        }
    }
}

impl DescriptorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_stripes == 0 {
            return Err(Error::Config("num_stripes must be at least 1".into()));
        }
        if self.hue_bins < 2 || self.sat_bins < 2 || self.val_bins < 2 {
            return Err(Error::Config("hue/sat/val bin counts must be at least 2".into()));
        }
        if !(self.texture_threshold >= 0.0 && self.texture_threshold.is_finite()) {
            return Err(Error::Config(
                "texture_threshold must be finite and non-negative".into(),
            ));
        }
        if self.subwindow == 0 || self.subwindow_stride == 0 {
            return Err(Error::Config("subwindow and stride must be positive".into()));
        }
        Ok(())
    }

    pub fn color_bins(&self) -> usize {
        self.hue_bins * self.sat_bins * self.val_bins
    }

    /// Output length; depends on the configuration only.
    pub fn output_dim(&self) -> usize {
        self.num_stripes * (self.color_bins() + TEXTURE_BINS)
    }

    fn color_bin(&self, rgb: [u8; 3]) -> usize {
        let (h, s, v) = rgb_to_hsv(rgb[0], rgb[1], rgb[2]);
        let bin = |x: f64, n: usize| ((x * n as f64) as usize).min(n - 1);
        let hb = bin(h / 360.0, self.hue_bins);
        let sb = bin(s, self.sat_bins);
        let vb = bin(v, self.val_bins);
        (hb * self.sat_bins + sb) * self.val_bins + vb
    }
}

/// Hexcone RGB → HSV with `h ∈ [0, 360)`, `s, v ∈ [0, 1]`; hue is 0 for
/// achromatic colours.
pub fn rgb_to_hsv(r: u8, g: u8, b: u8) -> (f64, f64, f64) {
    let (r, g, b) = (r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if s == 0.0 {
        return (0.0, 0.0, v);
    }
    let h = if max == r {
        60.0 * ((g - b) / delta)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let h = if h < 0.0 { h + 360.0 } else { h };
    (if h >= 360.0 { h - 360.0 } else { h }, s, v)
}

/// Ternary pattern of a 3×3 grey neighbourhood (`window[row][col]`).
///
/// Neighbours are read clockwise from the top-left; neighbour `k` contributes
/// digit `d·3^k` with `d = 0` inside `center ± threshold`, `1` above, `2`
/// below.
pub fn local_texture_code(window: &[[f64; 3]; 3], threshold: f64) -> u32 {
    const CLOCKWISE: [(usize, usize); 8] = [(0, 0), (0, 1), (0, 2), (1, 2), (2, 2), (2, 1), (2, 0), (1, 0)];
    let center = window[1][1];
    CLOCKWISE.iter().rev().fold(0, |code, &(r, c)| {
        code * 3 + ternary_digit(window[r][c], center, threshold)
    })
}

fn ternary_digit(neighbor: f64, center: f64, threshold: f64) -> u32 {
    if neighbor > center + threshold {
        1
    } else if neighbor < center - threshold {
        2
    } else {
        0
    }
}

/// Folds a full code into [`TEXTURE_BINS`] bins.
///
/// Digits are paired with their horizontal mirror partner (top-left with
/// top-right, right with left, bottom-right with bottom-left, top with
/// bottom) and each pair is summed modulo 3, so mirrored patterns share a
/// bin.
pub fn fold_texture_code(code: u32) -> usize {
    let mut digits = [0u32; 8];
    let mut c = code;
    for d in &mut digits {
        *d = c % 3;
        c /= 3;
    }
    let pairs = [(0, 2), (3, 7), (4, 6), (1, 5)];
    pairs
        .iter()
        .rev()
        .fold(0, |bin, &(a, b)| bin * 3 + ((digits[a] + digits[b]) % 3) as usize)
}

/// Folded texture bin of every pixel; borders replicate the edge pixels.
fn texture_bins(img: &Image, threshold: f64) -> Vec<usize> {
    let (h, w) = (img.height(), img.width());
    let mut bins = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let mut window = [[0.0; 3]; 3];
            for (dy, row) in window.iter_mut().enumerate() {
                for (dx, cell) in row.iter_mut().enumerate() {
                    let yy = (y + dy).saturating_sub(1).min(h - 1);
                    let xx = (x + dx).saturating_sub(1).min(w - 1);
                    *cell = img.gray(yy, xx);
                }
            }
            bins.push(fold_texture_code(local_texture_code(&window, threshold)));
        }
    }
    bins
}

pub fn extract_handcrafted(img: &Image, cfg: &DescriptorConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let (h, w) = (img.height(), img.width());
    if cfg.subwindow > h.min(w) {
        return Err(Error::Extraction(format!(
            "image {h}x{w} is smaller than the {}-pixel subwindow",
            cfg.subwindow
        )));
    }
    if h < cfg.num_stripes {
        return Err(Error::Extraction(format!(
            "image height {h} cannot hold {} stripes",
            cfg.num_stripes
        )));
    }
    let color: Vec<usize> = img.pixels().iter().map(|&p| cfg.color_bin(p)).collect();
    let texture = texture_bins(img, cfg.texture_threshold);

    let color_bins = cfg.color_bins();
    let stripe_len = color_bins + TEXTURE_BINS;
    let mut out = vec![0.0f64; cfg.output_dim()];
    let mut window_hist = vec![0u32; stripe_len];
    for s in 0..cfg.num_stripes {
        let (y0, y1) = (s * h / cfg.num_stripes, (s + 1) * h / cfg.num_stripes);
        let stripe = &mut out[s * stripe_len..(s + 1) * stripe_len];
        for x0 in (0..=w - cfg.subwindow).step_by(cfg.subwindow_stride) {
            window_hist.fill(0);
            for y in y0..y1 {
                for x in x0..x0 + cfg.subwindow {
                    let p = y * w + x;
                    window_hist[color[p]] += 1;
                    window_hist[color_bins + texture[p]] += 1;
                }
            }
            for (best, &count) in stripe.iter_mut().zip(&window_hist) {
                *best = best.max(count as f64);
            }
        }
    }
    for v in &mut out {
        *v = v.ln_1p();
    }
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut out {
        *v /= norm;
    }
    Ok(out)
}

/// Extracts every image in parallel; output order follows input order.
pub fn extract_all(images: &[&Image], cfg: &DescriptorConfig) -> Result<Vec<Vec<f64>>> {
    images.par_iter().map(|img| extract_handcrafted(img, cfg)).collect()
}
