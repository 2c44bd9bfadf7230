//! Speckle conditioning applied identically to calibration and measurement
//! frames: bin, center-crop, median, Gaussian, then divide by a box-blurred
//! copy of itself.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Image2D;

/// Floor applied to the low-pass denominator.
pub const LOWPASS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocParams {
    pub bin_factor: usize,
    /// Square crop side in raw (pre-binning) pixels; `None` keeps the frame.
    pub crop_size: Option<usize>,
    pub median_kernel: usize,
    pub gaussian_sigma: f64,
    pub lowpass_kernel: usize,
}

impl Default for PreprocParams {
    fn default() -> Self {
        PreprocParams {
            bin_factor: 2,
            crop_size: None,
            median_kernel: 3,
            gaussian_sigma: 10.0,
            lowpass_kernel: 5,
        }
    }
}

impl PreprocParams {
    pub fn validate(&self) -> Result<()> {
        if self.bin_factor == 0 {
            return Err(Error::OutOfRange("bin_factor must be >= 1".into()));
        }
        if self.median_kernel % 2 == 0 {
            return Err(Error::OutOfRange(format!(
                "median_kernel must be odd, got {}",
                self.median_kernel
            )));
        }
        if self.lowpass_kernel % 2 == 0 {
            return Err(Error::OutOfRange(format!(
                "lowpass_kernel must be odd, got {}",
                self.lowpass_kernel
            )));
        }
        if !(self.gaussian_sigma > 0.0 && self.gaussian_sigma.is_finite()) {
            return Err(Error::OutOfRange(format!(
                "gaussian_sigma must be positive, got {}",
                self.gaussian_sigma
            )));
        }
        if self.crop_size == Some(0) {
            return Err(Error::OutOfRange("crop_size must be positive".into()));
        }
        Ok(())
    }

    /// Output dims for a raw frame of `dims`.
    pub fn output_dims(&self, dims: (usize, usize)) -> Result<(usize, usize)> {
        self.validate()?;
        let binned = (dims.0 / self.bin_factor, dims.1 / self.bin_factor);
        let out = match self.crop_size {
            None => binned,
            Some(c) => {
                if c > dims.0 || c > dims.1 {
                    return Err(Error::Dimension(format!(
                        "crop {c} exceeds the {}x{} frame",
                        dims.0, dims.1
                    )));
                }
                (c / self.bin_factor, c / self.bin_factor)
            }
        };
        if out.0 == 0 || out.1 == 0 {
            return Err(Error::Dimension(format!(
                "preprocessing leaves an empty frame from {}x{}",
                dims.0, dims.1
            )));
        }
        Ok(out)
    }
}

pub fn preprocess(img: &Image2D, p: &PreprocParams) -> Result<Image2D> {
    let (ow, oh) = p.output_dims(img.dims())?;
    let binned = bin_mean(img, p.bin_factor);
    let cropped = binned.center_crop(ow, oh)?;
    let med = median_filter(&cropped, p.median_kernel);
    let smooth = gaussian_blur(&med, p.gaussian_sigma);
    let low = box_blur(&smooth, p.lowpass_kernel);
    let data = smooth
        .data()
        .iter()
        .zip(low.data())
        .map(|(s, l)| s / l.max(LOWPASS_FLOOR))
        .collect();
    Image2D::from_clamped(ow, oh, data)
}

/// Mean over `f x f` blocks; trailing partial blocks are dropped.
pub fn bin_mean(img: &Image2D, f: usize) -> Image2D {
    if f == 1 {
        return img.clone();
    }
    let (w, h) = (img.width() / f, img.height() / f);
    let inv = 1.0 / (f * f) as f64;
    Image2D::from_fn(w, h, |x, y| {
        let mut s = 0.0;
        for dy in 0..f {
            for dx in 0..f {
                s += img.get(x * f + dx, y * f + dy);
            }
        }
        s * inv
    })
}

fn clamped(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// `k x k` median with replicated edges.
pub fn median_filter(img: &Image2D, k: usize) -> Image2D {
    if k <= 1 {
        return img.clone();
    }
    let r = (k / 2) as isize;
    let (w, h) = img.dims();
    let mut window = Vec::with_capacity(k * k);
    Image2D::from_fn(w, h, |x, y| {
        window.clear();
        for dy in -r..=r {
            for dx in -r..=r {
                window.push(img.get(clamped(x as isize + dx, w), clamped(y as isize + dy, h)));
            }
        }
        let mid = window.len() / 2;
        *window.select_nth_unstable_by(mid, f64::total_cmp).1
    })
}

fn separable(img: &Image2D, kernel: &[f64]) -> Image2D {
    let r = (kernel.len() / 2) as isize;
    let (w, h) = img.dims();
    let horiz = Image2D::from_fn(w, h, |x, y| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, k)| k * img.get(clamped(x as isize + i as isize - r, w), y))
            .sum()
    });
    Image2D::from_fn(w, h, |x, y| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, k)| k * horiz.get(x, clamped(y as isize + i as isize - r, h)))
            .sum()
    })
}

/// Normalized Gaussian blur truncated at 4 sigma, replicated edges.
pub fn gaussian_blur(img: &Image2D, sigma: f64) -> Image2D {
    let r = (4.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|v| *v /= s);
    separable(img, &kernel)
}

/// Uniform `k x k` mean, replicated edges.
pub fn box_blur(img: &Image2D, k: usize) -> Image2D {
    if k <= 1 {
        return img.clone();
    }
    separable(img, &vec![1.0 / k as f64; k])
}
