//! Frequency-domain Wiener deconvolution, `O = conj(H) I / (|H|^2 + nsr)`.
//!
//! The PSF's center pixel `(w/2, h/2)` is treated as the origin, so
//! deconvolving `PSF * O` (forward-model crop convention) returns `O` with
//! its center pixel at the center pixel of the speckle frame.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::types::{HyperCube, Image2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WienerParams {
    pub nsr: f64,
}

impl Default for WienerParams {
    fn default() -> Self {
        WienerParams { nsr: 1e-3 }
    }
}

impl WienerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.nsr >= 0.0 && self.nsr.is_finite()) {
            return Err(Error::OutOfRange(format!(
                "nsr must be >= 0, got {}",
                self.nsr
            )));
        }
        Ok(())
    }
}

/// PSF transfer functions for one speckle frame size, reusable across many
/// speckles.
#[derive(Debug, Clone)]
pub struct WienerBank {
    fft: Fft2,
    transfer: Vec<Vec<Complex64>>,
}

fn transfer_function(fft: &Fft2, psf: &Image2D) -> Result<Vec<Complex64>> {
    let (w, h) = (fft.width(), fft.height());
    if psf.width() > w || psf.height() > h {
        return Err(Error::Dimension(format!(
            "PSF {}x{} is larger than the {w}x{h} speckle",
            psf.width(),
            psf.height()
        )));
    }
    if psf.is_zero() {
        return Err(Error::Precondition(
            "cannot deconvolve by a zero PSF".into(),
        ));
    }
    let padded = psf.center_pad(w, h)?;
    let (cx, cy) = (w / 2, h / 2);
    let mut buf = vec![Complex64::new(0.0, 0.0); w * h];
    for y in 0..h {
        for x in 0..w {
            let (rx, ry) = ((x + w - cx) % w, (y + h - cy) % h);
            buf[ry * w + rx] = Complex64::new(padded.get(x, y), 0.0);
        }
    }
    fft.forward(&mut buf);
    Ok(buf)
}

impl WienerBank {
    pub fn new(psfs: &[Image2D], speckle_dims: (usize, usize)) -> Result<Self> {
        let fft = Fft2::new(speckle_dims.0, speckle_dims.1);
        let transfer = psfs
            .iter()
            .map(|p| transfer_function(&fft, p))
            .collect::<Result<Vec<_>>>()?;
        Ok(WienerBank { fft, transfer })
    }

    pub fn from_cube(psfs: &HyperCube, speckle_dims: (usize, usize)) -> Result<Self> {
        WienerBank::new(psfs.planes(), speckle_dims)
    }

    pub fn len(&self) -> usize {
        self.transfer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transfer.is_empty()
    }

    pub fn speckle_spectrum(&self, speckle: &Image2D) -> Result<Vec<Complex64>> {
        if speckle.dims() != (self.fft.width(), self.fft.height()) {
            return Err(Error::Dimension(format!(
                "speckle is {:?}, bank expects {}x{}",
                speckle.dims(),
                self.fft.width(),
                self.fft.height()
            )));
        }
        Ok(self
            .fft
            .forward_real_padded(speckle.data(), speckle.width(), speckle.height()))
    }

    /// Deconvolve a precomputed speckle spectrum by PSF `index`.
    pub fn deconvolve_spectrum(
        &self,
        index: usize,
        spectrum: &[Complex64],
        w: &WienerParams,
    ) -> Result<Image2D> {
        w.validate()?;
        let h = &self.transfer[index];
        let mut buf: Vec<Complex64> = h
            .iter()
            .zip(spectrum)
            .map(|(hk, ik)| {
                let den = hk.norm_sqr() + w.nsr;
                if den > 0.0 {
                    hk.conj() * ik / den
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        self.fft.inverse(&mut buf);
        Ok(Image2D::from_fn(
            self.fft.width(),
            self.fft.height(),
            |x, y| buf[y * self.fft.width() + x].re,
        ))
    }

    pub fn deconvolve(&self, index: usize, speckle: &Image2D, w: &WienerParams) -> Result<Image2D> {
        let spec = self.speckle_spectrum(speckle)?;
        self.deconvolve_spectrum(index, &spec, w)
    }
}

/// One-shot Wiener deconvolution of `speckle` by `psf`.
pub fn wiener_deconv(speckle: &Image2D, psf: &Image2D, w: &WienerParams) -> Result<Image2D> {
    WienerBank::new(std::slice::from_ref(psf), speckle.dims())?.deconvolve(0, speckle, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::ConvPlan;

    fn random_psf(w: usize, h: usize) -> Image2D {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        Image2D::from_fn(w, h, |_, _| rng.random_range(0.0..1.0))
            .normalized_to_unit_sum()
            .unwrap()
    }

    #[test]
    fn self_deconvolution_is_centered_delta() {
        let psf = random_psf(16, 16);
        let out = wiener_deconv(&psf, &psf, &WienerParams { nsr: 1e-12 }).unwrap();
        let total: f64 = out.data().iter().sum();
        let center: f64 = (7..10)
            .flat_map(|y| (7..10).map(move |x| (x, y)))
            .map(|(x, y)| out.get(x, y))
            .sum();
        assert!(center >= 0.99 * total, "{center} of {total}");
        assert!((out.get(8, 8) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_psf_is_a_precondition_error() {
        let z = Image2D::zeros(4, 4);
        assert!(matches!(
            wiener_deconv(&Image2D::zeros(8, 8), &z, &WienerParams { nsr: 0.0 }),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn odd_frames_keep_the_center_convention() {
        let psf = random_psf(9, 7);
        let mut obj = vec![0.0; 9 * 7];
        obj[3 * 9 + 4] = 2.0;
        let obj = Image2D::new(9, 7, obj).unwrap();
        let speckle = ConvPlan::new((9, 7), (9, 7)).convolve(&psf, &obj);
        let out = wiener_deconv(&speckle, &psf, &WienerParams { nsr: 1e-12 }).unwrap();
        assert!((out.get(4, 3) - 2.0).abs() < 1e-3, "{}", out.get(4, 3));
    }
}
