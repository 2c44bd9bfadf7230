//! Image and spectrum quality metrics.

pub mod color;

use serde::Serialize;

pub use color::{cie_rgb, compose_color, compose_color_linear, RgbImage};

use crate::error::{Error, Result};
use crate::simulate::pearson;
use crate::types::{Image2D, Spectrum};

/// Side of the square SSIM window.
pub const SSIM_WINDOW: usize = 8;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// Summed-area table with a zero first row and column.
struct Integral {
    w: usize,
    data: Vec<f64>,
}

impl Integral {
    fn new(width: usize, height: usize, f: impl Fn(usize) -> f64) -> Self {
        let w = width + 1;
        let mut data = vec![0.0; w * (height + 1)];
        for y in 0..height {
            let mut row = 0.0;
            for x in 0..width {
                row += f(y * width + x);
                data[(y + 1) * w + x + 1] = data[y * w + x + 1] + row;
            }
        }
        Integral { w, data }
    }

    fn window(&self, x: usize, y: usize, side_x: usize, side_y: usize) -> f64 {
        let w = self.w;
        self.data[(y + side_y) * w + x + side_x]
            - self.data[y * w + x + side_x]
            - self.data[(y + side_y) * w + x]
            + self.data[y * w + x]
    }
}

/// SSIM with dynamic range taken from the reference `b`: `max(b) - min(b)`,
/// or 1 for a constant reference.
pub fn ssim(a: &Image2D, b: &Image2D) -> Result<f64> {
    let (lo, hi) = b
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    let range = if hi > lo { hi - lo } else { 1.0 };
    ssim_with_range(a, b, range)
}

/// Mean SSIM over all 8x8 windows (stride 1, uniform weights, sample
/// covariance). Frames smaller than the window use a single window of the
/// full frame.
pub fn ssim_with_range(a: &Image2D, b: &Image2D, range: f64) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::Dimension(format!(
            "SSIM operands are {:?} and {:?}",
            a.dims(),
            b.dims()
        )));
    }
    if !(range > 0.0) {
        return Err(Error::Precondition(
            "SSIM dynamic range must be positive".into(),
        ));
    }
    let (w, h) = a.dims();
    if w == 0 || h == 0 {
        return Err(Error::Dimension("SSIM of an empty image".into()));
    }
    let (wx, wy) = (SSIM_WINDOW.min(w), SSIM_WINDOW.min(h));
    let n = (wx * wy) as f64;
    let (da, db) = (a.data(), b.data());
    let sa = Integral::new(w, h, |i| da[i]);
    let sb = Integral::new(w, h, |i| db[i]);
    let saa = Integral::new(w, h, |i| da[i] * da[i]);
    let sbb = Integral::new(w, h, |i| db[i] * db[i]);
    let sab = Integral::new(w, h, |i| da[i] * db[i]);
    let c1 = (K1 * range).powi(2);
    let c2 = (K2 * range).powi(2);
    let cov_norm = if n > 1.0 { n / (n - 1.0) } else { 1.0 };

    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..=h - wy {
        for x in 0..=w - wx {
            let ma = sa.window(x, y, wx, wy) / n;
            let mb = sb.window(x, y, wx, wy) / n;
            let va = ((saa.window(x, y, wx, wy) / n - ma * ma) * cov_norm).max(0.0);
            let vb = ((sbb.window(x, y, wx, wy) / n - mb * mb) * cov_norm).max(0.0);
            let cov = (sab.window(x, y, wx, wy) / n - ma * mb) * cov_norm;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// PSNR in dB, or `Exact` when the images are identical.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Psnr {
    Exact,
    Db(f64),
}

impl Psnr {
    /// Finite dB value, with `Exact` mapped to `+inf`.
    pub fn db(&self) -> f64 {
        match self {
            Psnr::Exact => f64::INFINITY,
            Psnr::Db(v) => *v,
        }
    }
}

impl std::fmt::Display for Psnr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Psnr::Exact => f.write_str("exact"),
            Psnr::Db(v) => write!(f, "{v}"),
        }
    }
}

/// `10 log10(max(b)^2 / MSE)` with the peak taken from the reference `b`.
pub fn psnr(a: &Image2D, b: &Image2D) -> Result<Psnr> {
    if a.dims() != b.dims() {
        return Err(Error::Dimension(format!(
            "PSNR operands are {:?} and {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        / a.len().max(1) as f64;
    if mse == 0.0 {
        return Ok(Psnr::Exact);
    }
    let peak = b.max();
    if peak <= 0.0 {
        return Err(Error::Precondition(
            "PSNR reference has no positive peak".into(),
        ));
    }
    Ok(Psnr::Db(10.0 * (peak * peak / mse).log10()))
}

/// Pearson correlation of two equally long sample vectors.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "correlation operands have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    pearson(a, b).ok_or_else(|| Error::UndefinedCorrelation("an operand has zero variance".into()))
}

/// Pearson correlation of the full (all-polarization) spectra.
pub fn spectral_correlation(s1: &Spectrum, s2: &Spectrum) -> Result<f64> {
    correlation(s1.values(), s2.values())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Image2D {
        Image2D::from_fn(w, h, |x, y| ((x * 3 + y * 7) % 13) as f64)
    }

    #[test]
    fn ssim_self_is_one() {
        let x = ramp(16, 12);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_of_inverted_half_plane_is_low() {
        let x = Image2D::from_fn(16, 16, |px, _| if px < 8 { 1.0 } else { 0.0 });
        let inv = Image2D::from_fn(16, 16, |px, py| 1.0 - x.get(px, py));
        assert!(ssim(&inv, &x).unwrap() < 0.1);
    }

    #[test]
    fn ssim_matches_direct_window_sum() {
        let a = ramp(10, 9);
        let b = Image2D::from_fn(10, 9, |x, y| ((x * 5 + y) % 4) as f64);
        let range = 3.0;
        let (c1, c2) = (
            (0.01 * range) * (0.01f64 * range),
            (0.03 * range) * (0.03f64 * range),
        );
        let mut total = 0.0;
        let mut count = 0.0;
        for y0 in 0..=1 {
            for x0 in 0..=2 {
                let pix: Vec<(f64, f64)> = (y0..y0 + 8)
                    .flat_map(|y| (x0..x0 + 8).map(move |x| (x, y)))
                    .map(|(x, y)| (a.get(x, y), b.get(x, y)))
                    .collect();
                let n = pix.len() as f64;
                let ma = pix.iter().map(|p| p.0).sum::<f64>() / n;
                let mb = pix.iter().map(|p| p.1).sum::<f64>() / n;
                let va = pix.iter().map(|p| (p.0 - ma).powi(2)).sum::<f64>() / (n - 1.0);
                let vb = pix.iter().map(|p| (p.1 - mb).powi(2)).sum::<f64>() / (n - 1.0);
                let cv = pix.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum::<f64>() / (n - 1.0);
                total += (2.0 * ma * mb + c1) * (2.0 * cv + c2)
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1.0;
            }
        }
        let got = ssim(&a, &b).unwrap();
        assert!(
            (got - total / count).abs() < 1e-12,
            "{got} vs {}",
            total / count
        );
    }

    #[test]
    fn psnr_examples() {
        let b = Image2D::from_fn(8, 8, |_, _| 1.0);
        assert_eq!(psnr(&b, &b).unwrap(), Psnr::Exact);
        let mut d = b.clone().into_data();
        d[10] = 0.0;
        let a = Image2D::new(8, 8, d).unwrap();
        let v = psnr(&a, &b).unwrap().db();
        assert!((v - 10.0 * 64f64.log10()).abs() < 1e-12);
        assert!((v - 18.06).abs() < 0.01);
        assert!(matches!(
            psnr(&a, &Image2D::zeros(4, 4)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn correlation_examples() {
        let x = [1.0, 3.0, 2.0, 5.0];
        assert!((correlation(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            correlation(&x, &[2.0; 4]),
            Err(Error::UndefinedCorrelation(_))
        ));
    }
}
