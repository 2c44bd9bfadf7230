//! 2-D FFT helpers over `rustfft` and the linear-convolution plan shared by
//! the simulator and TM emulation.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::types::Image2D;

/// Smallest `m >= n` whose only prime factors are 2, 3 and 5.
pub fn good_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Row-major 2-D complex FFT of a fixed size.
#[derive(Clone)]
pub struct Fft2 {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish()
    }
}

impl Fft2 {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            width,
            height,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn transform(&self, buf: &mut [Complex64], row: &dyn Fft<f64>, col: &dyn Fft<f64>) {
        assert_eq!(buf.len(), self.len());
        row.process(buf);
        let mut t = transpose(buf, self.width, self.height);
        col.process(&mut t);
        let back = transpose(&t, self.height, self.width);
        buf.copy_from_slice(&back);
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.transform(buf, self.row_fwd.as_ref(), self.col_fwd.as_ref());
    }

    /// Inverse transform in place, scaled by `1 / (width * height)`.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.transform(buf, self.row_inv.as_ref(), self.col_inv.as_ref());
        let s = 1.0 / self.len() as f64;
        for v in buf.iter_mut() {
            *v *= s;
        }
    }

    /// Forward transform of a real raster copied into the top-left corner of
    /// a zero frame of this size.
    pub fn forward_real_padded(&self, data: &[f64], width: usize, height: usize) -> Vec<Complex64> {
        assert!(width <= self.width && height <= self.height);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len()];
        for y in 0..height {
            for x in 0..width {
                buf[y * self.width + x] = Complex64::new(data[y * width + x], 0.0);
            }
        }
        self.forward(&mut buf);
        buf
    }
}

fn transpose(src: &[Complex64], width: usize, height: usize) -> Vec<Complex64> {
    let mut dst = vec![Complex64::new(0.0, 0.0); src.len()];
    for y in 0..height {
        for x in 0..width {
            dst[x * height + y] = src[y * width + x];
        }
    }
    dst
}

/// Signed frequency (cycles per sample) of FFT bin `k` for length `n`.
pub fn frequency(k: usize, n: usize) -> f64 {
    let k = k as isize;
    let n = n as isize;
    let s = if k <= n / 2 { k } else { k - n };
    s as f64 / n as f64
}

/// Plan for linear convolution of PSF-sized rasters with object-sized
/// rasters, cropped back to the PSF frame.
///
/// The object's center pixel `(w/2, h/2)` is the convolution origin, so a
/// unit delta there reproduces the PSF exactly.
#[derive(Debug, Clone)]
pub struct ConvPlan {
    psf_dims: (usize, usize),
    obj_dims: (usize, usize),
    fft: Fft2,
}

impl ConvPlan {
    pub fn new(psf_dims: (usize, usize), obj_dims: (usize, usize)) -> Self {
        let w = good_size(psf_dims.0 + obj_dims.0 - 1);
        let h = good_size(psf_dims.1 + obj_dims.1 - 1);
        ConvPlan {
            psf_dims,
            obj_dims,
            fft: Fft2::new(w, h),
        }
    }

    pub fn psf_dims(&self) -> (usize, usize) {
        self.psf_dims
    }

    pub fn obj_dims(&self) -> (usize, usize) {
        self.obj_dims
    }

    pub fn spectrum(&self, img: &Image2D) -> Vec<Complex64> {
        self.fft
            .forward_real_padded(img.data(), img.width(), img.height())
    }

    /// Inverse-transforms an accumulated product spectrum and crops it to the
    /// PSF frame. Round-off negatives are clamped to zero.
    pub fn finish(&self, mut acc: Vec<Complex64>) -> Image2D {
        self.fft.inverse(&mut acc);
        let (pw, ph) = self.psf_dims;
        let ox = self.obj_dims.0 / 2;
        let oy = self.obj_dims.1 / 2;
        let stride = self.fft.width();
        Image2D::from_fn(pw, ph, |x, y| acc[(y + oy) * stride + x + ox].re)
    }

    pub fn zero_spectrum(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.fft.len()]
    }

    /// `psf * obj`, cropped.
    pub fn convolve(&self, psf: &Image2D, obj: &Image2D) -> Image2D {
        let a = self.spectrum(psf);
        let b = self.spectrum(obj);
        self.finish(a.iter().zip(&b).map(|(x, y)| x * y).collect())
    }
}
