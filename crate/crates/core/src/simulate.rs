//! Synthetic stand-in for the optical bench.
//!
//! PSFs are fully developed speckle: per polarization, a complex Gaussian
//! field per channel coupled along the wavelength axis by an AR(1) recursion
//! `f[k+1] = rho * f[k] + sqrt(1 - rho^2) * w[k+1]`, low-pass filtered to the
//! grain size, squared, shaped by a Gaussian envelope and normalized to unit
//! sum. Intensity correlation between channels `k` and `k + L` is `rho^(2L)`.
//!
//! Imaging is exact linear convolution, so the memory effect holds everywhere.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{frequency, ConvPlan, Fft2};
use crate::types::{HyperCube, Image2D, SpectralGrid};

/// Speckle simulator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    pub seed: u64,
    /// `(width, height)` of each PSF plane.
    pub psf_dims: (usize, usize),
    pub grid: SpectralGrid,
    pub n_pol: usize,
    /// Spatial standard deviation of the field low-pass filter (pixels).
    pub grain_sigma: f64,
    /// Field correlation between adjacent channels, in `[0, 1)`.
    pub spectral_corr: f64,
    /// Width of the Gaussian intensity envelope (pixels).
    pub envelope_sigma: f64,
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if self.psf_dims.0 == 0 || self.psf_dims.1 == 0 {
            return Err(Error::Dimension("psf_dims must be nonzero".into()));
        }
        if self.n_pol != 1 && self.n_pol != 2 {
            return Err(Error::OutOfRange(format!(
                "n_pol must be 1 or 2, got {}",
                self.n_pol
            )));
        }
        if !(0.0..1.0).contains(&self.spectral_corr) {
            return Err(Error::OutOfRange(format!(
                "spectral_corr must lie in [0, 1), got {}",
                self.spectral_corr
            )));
        }
        if !(self.grain_sigma > 0.0 && self.grain_sigma.is_finite()) {
            return Err(Error::OutOfRange(format!(
                "grain_sigma must be positive, got {}",
                self.grain_sigma
            )));
        }
        if !(self.envelope_sigma > 0.0 && self.envelope_sigma.is_finite()) {
            return Err(Error::OutOfRange(format!(
                "envelope_sigma must be positive, got {}",
                self.envelope_sigma
            )));
        }
        Ok(())
    }

    /// Spectral decorrelation range implied by `spectral_corr` (nm).
    pub fn decorrelation_range_nm(&self) -> f64 {
        decorrelation_range_nm(self.spectral_corr, self.grid.delta_lambda())
    }

    /// Channels are contiguous when the spacing does not exceed the larger of
    /// the decorrelation range and the source linewidth.
    pub fn check_channel_continuity(&self, linewidth_nm: f64) -> Result<()> {
        let reach = self.decorrelation_range_nm().max(linewidth_nm);
        if self.grid.delta_lambda() <= reach * (1.0 + 1e-9) {
            Ok(())
        } else {
            Err(Error::OutOfRange(format!(
                "channel spacing {} nm exceeds max(decorrelation range {:.3} nm, linewidth {} nm)",
                self.grid.delta_lambda(),
                self.decorrelation_range_nm(),
                linewidth_nm
            )))
        }
    }
}

/// Wavelength span over which intensity correlation halves, given the
/// per-channel field correlation.
pub fn decorrelation_range_nm(spectral_corr: f64, delta_lambda: f64) -> f64 {
    if spectral_corr <= 0.0 {
        return 0.0;
    }
    -delta_lambda * std::f64::consts::LN_2 / (2.0 * spectral_corr.ln())
}

/// Inverse of [`decorrelation_range_nm`].
pub fn spectral_corr_for_range(range_nm: f64, delta_lambda: f64) -> f64 {
    if range_nm <= 0.0 {
        return 0.0;
    }
    (-delta_lambda * std::f64::consts::LN_2 / (2.0 * range_nm)).exp()
}

fn pol_rng(seed: u64, pol: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(pol as u64 + 1);
    rng
}

/// One unit-sum speckle PSF per (polarization, channel).
pub fn gen_psf_set(p: &SimParams) -> Result<HyperCube> {
    p.validate()?;
    let (w, h) = p.psf_dims;
    let fft = Fft2::new(w, h);
    let s2 = p.grain_sigma * p.grain_sigma;
    let filter: Vec<f64> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| {
            let fx = frequency(x, w);
            let fy = frequency(y, h);
            (-2.0 * std::f64::consts::PI.powi(2) * s2 * (fx * fx + fy * fy)).exp()
        })
        .collect();
    let (cx, cy) = ((w / 2) as f64, (h / 2) as f64);
    let e2 = 2.0 * p.envelope_sigma * p.envelope_sigma;
    let envelope: Vec<f64> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| (-((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / e2).exp())
        .collect();

    let rho = p.spectral_corr;
    let fresh_gain = (1.0 - rho * rho).sqrt();
    let mut planes = Vec::with_capacity(p.grid.n_channels() * p.n_pol);
    for pol in 0..p.n_pol {
        let mut rng = pol_rng(p.seed, pol);
        let white = |rng: &mut ChaCha8Rng| -> Complex64 {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        };
        let mut state: Vec<Complex64> = (0..w * h).map(|_| white(&mut rng)).collect();
        for k in 0..p.grid.n_channels() {
            if k > 0 {
                for s in state.iter_mut() {
                    *s = *s * rho + white(&mut rng) * fresh_gain;
                }
            }
            let mut field: Vec<Complex64> = state.iter().zip(&filter).map(|(s, g)| s * g).collect();
            fft.inverse(&mut field);
            let intensity: Vec<f64> = field
                .iter()
                .zip(&envelope)
                .map(|(f, e)| f.norm_sqr() * e)
                .collect();
            let plane = Image2D::new(w, h, intensity)?;
            planes.push(plane.normalized_to_unit_sum().map_err(|_| {
                Error::Numeric(format!("PSF plane pol {pol} channel {k} vanished"))
            })?);
        }
    }
    HyperCube::new(p.grid, p.n_pol, planes)
}

/// Cached PSF spectra for repeated forward simulations against objects of a
/// fixed size.
pub struct ForwardModel<'a> {
    psfs: &'a HyperCube,
    plan: ConvPlan,
    spectra: Vec<OnceLock<Vec<Complex64>>>,
}

impl<'a> ForwardModel<'a> {
    pub fn new(psfs: &'a HyperCube, obj_dims: (usize, usize)) -> Result<Self> {
        let (pw, ph) = psfs.dims();
        if obj_dims.0 > pw || obj_dims.1 > ph || obj_dims.0 == 0 || obj_dims.1 == 0 {
            return Err(Error::Dimension(format!(
                "object {}x{} must be nonempty and fit inside the {pw}x{ph} PSF frame",
                obj_dims.0, obj_dims.1
            )));
        }
        Ok(ForwardModel {
            psfs,
            plan: ConvPlan::new((pw, ph), obj_dims),
            spectra: (0..psfs.planes().len()).map(|_| OnceLock::new()).collect(),
        })
    }

    fn psf_spectrum(&self, index: usize) -> &[Complex64] {
        self.spectra[index].get_or_init(|| self.plan.spectrum(&self.psfs.planes()[index]))
    }

    /// `PSF(pol, channel) * plane`, cropped to the PSF frame.
    pub fn convolve_channel(&self, pol: usize, channel: usize, plane: &Image2D) -> Result<Image2D> {
        if plane.dims() != self.plan.obj_dims() {
            return Err(Error::Dimension("object plane size changed".into()));
        }
        let h = self.psf_spectrum(self.psfs.index(pol, channel));
        let o = self.plan.spectrum(plane);
        Ok(self
            .plan
            .finish(h.iter().zip(&o).map(|(a, b)| a * b).collect()))
    }

    /// Sum over channels of `PSF * O`, one image per polarization.
    pub fn image(&self, object: &HyperCube) -> Result<Vec<Image2D>> {
        if object.grid() != self.psfs.grid() || object.n_pol() != self.psfs.n_pol() {
            return Err(Error::Dimension(
                "object and PSF cubes disagree in grid or polarization count".into(),
            ));
        }
        if object.dims() != self.plan.obj_dims() {
            return Err(Error::Dimension("object plane size changed".into()));
        }
        let mut out = Vec::with_capacity(object.n_pol());
        for pol in 0..object.n_pol() {
            let mut acc = self.plan.zero_spectrum();
            for k in 0..object.n_channels() {
                let plane = object.plane(pol, k);
                if plane.is_zero() {
                    continue;
                }
                let o = self.plan.spectrum(plane);
                let h = self.psf_spectrum(self.psfs.index(pol, k));
                for ((a, x), y) in acc.iter_mut().zip(h).zip(&o) {
                    *a += x * y;
                }
            }
            out.push(self.plan.finish(acc));
        }
        Ok(out)
    }
}

/// Speckle image per polarization: `I = sum_k PSF(k) * O(k)`.
pub fn forward_image(psfs: &HyperCube, object: &HyperCube) -> Result<Vec<Image2D>> {
    ForwardModel::new(psfs, object.dims())?.image(object)
}

/// Incoherent sum of the per-polarization speckles: what a polarization-blind
/// camera records.
pub fn forward_total(psfs: &HyperCube, object: &HyperCube) -> Result<Image2D> {
    let per_pol = forward_image(psfs, object)?;
    sum_images(&per_pol)
}

pub(crate) fn sum_images(images: &[Image2D]) -> Result<Image2D> {
    let first = images
        .first()
        .ok_or_else(|| Error::Precondition("nothing to sum".into()))?;
    let mut acc = first.data().to_vec();
    for img in &images[1..] {
        if img.dims() != first.dims() {
            return Err(Error::Dimension("summed images differ in size".into()));
        }
        for (a, b) in acc.iter_mut().zip(img.data()) {
            *a += b;
        }
    }
    Image2D::new(first.width(), first.height(), acc)
}

/// Integer-pixel translation of every plane; `dx` to the right, `dy` down.
pub fn shift_object(object: &HyperCube, dx: isize, dy: isize) -> Result<HyperCube> {
    let (w, h) = object.dims();
    let mut planes = Vec::with_capacity(object.planes().len());
    for (i, plane) in object.planes().iter().enumerate() {
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let v = plane.get(x, y);
                if v == 0.0 {
                    continue;
                }
                let nx = x as isize + dx;
                let ny = y as isize + dy;
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    return Err(Error::OutOfRange(format!(
                        "shift ({dx}, {dy}) moves support of plane {i} off the {w}x{h} frame"
                    )));
                }
                out[ny as usize * w + nx as usize] = v;
            }
        }
        planes.push(Image2D::new(w, h, out)?);
    }
    HyperCube::new(*object.grid(), object.n_pol(), planes)
}

/// Additive white Gaussian detector noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    /// `10 log10(mean(I^2) / noise variance)`.
    pub snr_db: f64,
    pub seed: u64,
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        if !self.snr_db.is_finite() {
            return Err(Error::OutOfRange("snr_db must be finite".into()));
        }
        Ok(())
    }
}

/// Adds noise at the requested SNR, then clamps negatives to zero.
pub fn add_noise(img: &Image2D, n: &NoiseParams) -> Image2D {
    let power = img.data().iter().map(|v| v * v).sum::<f64>() / img.len().max(1) as f64;
    if power == 0.0 {
        return img.clone();
    }
    let sigma = (power / 10f64.powf(n.snr_db / 10.0)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(n.seed);
    let data = img
        .data()
        .iter()
        .map(|v| {
            let z: f64 = rng.sample(StandardNormal);
            (v + sigma * z).max(0.0)
        })
        .collect();
    Image2D::new(img.width(), img.height(), data).expect("noisy image stays finite")
}

/// Pearson correlation of two equally sized sample sets.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    if a.len() < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some(sab / (saa.sqrt() * sbb.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n_channels: usize, corr: f64) -> SimParams {
        SimParams {
            seed: 11,
            psf_dims: (128, 128),
            grid: SpectralGrid::with_channels(500.0, 2.0, n_channels).unwrap(),
            n_pol: 1,
            grain_sigma: 1.5,
            spectral_corr: corr,
            envelope_sigma: 64.0,
        }
    }

    #[test]
    fn psf_planes_are_unit_sum_and_deterministic() {
        let p = params(3, 0.5);
        let a = gen_psf_set(&p).unwrap();
        let b = gen_psf_set(&p).unwrap();
        assert_eq!(a, b);
        for plane in a.planes() {
            assert!((plane.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uncorrelated_channels_look_independent() {
        let cube = gen_psf_set(&params(12, 0.0)).unwrap();
        let adj = pearson(cube.plane(0, 0).data(), cube.plane(0, 1).data()).unwrap();
        let far = pearson(cube.plane(0, 0).data(), cube.plane(0, 10).data()).unwrap();
        assert!(adj.abs() < 0.1, "adjacent r = {adj}");
        assert!(far.abs() < 0.1, "far r = {far}");
    }

    #[test]
    fn strong_coupling_decays_with_lag() {
        let cube = gen_psf_set(&params(32, 0.95)).unwrap();
        let r = |lag: usize| {
            (0..32 - lag)
                .map(|k| pearson(cube.plane(0, k).data(), cube.plane(0, k + lag).data()).unwrap())
                .sum::<f64>()
                / (32 - lag) as f64
        };
        let (r1, r10) = (r(1), r(10));
        assert!(r1 > r10, "lag1 {r1} lag10 {r10}");
        assert!(r1 > 0.8);
    }

    #[test]
    fn polarizations_use_independent_fields() {
        let mut p = params(2, 0.9);
        p.n_pol = 2;
        let cube = gen_psf_set(&p).unwrap();
        let r = pearson(cube.plane(0, 0).data(), cube.plane(1, 0).data()).unwrap();
        assert!(r.abs() < 0.1, "cross-pol r = {r}");
    }

    #[test]
    fn invalid_params_are_rejected() {
        let mut p = params(2, 0.5);
        p.psf_dims = (0, 8);
        assert!(matches!(gen_psf_set(&p), Err(Error::Dimension(_))));
        let mut p = params(2, 0.5);
        p.spectral_corr = 1.0;
        assert!(gen_psf_set(&p).is_err());
    }

    #[test]
    fn decorrelation_helpers_invert() {
        let rho = spectral_corr_for_range(2.0, 2.0);
        assert!((rho * rho - 0.5).abs() < 1e-12);
        assert!((decorrelation_range_nm(rho, 2.0) - 2.0).abs() < 1e-12);
        let mut p = params(2, rho);
        p.grid = SpectralGrid::with_channels(400.0, 2.0, 2).unwrap();
        assert!(p.check_channel_continuity(0.0).is_ok());
        p.spectral_corr = 0.1;
        assert!(p.check_channel_continuity(0.0).is_err());
        assert!(p.check_channel_continuity(2.0).is_ok());
    }

    #[test]
    fn noise_examples() {
        let img = Image2D::from_fn(256, 256, |_, _| 1.0);
        let quiet = add_noise(
            &img,
            &NoiseParams {
                snr_db: 300.0,
                seed: 1,
            },
        );
        for (a, b) in quiet.data().iter().zip(img.data()) {
            assert!((a - b).abs() <= 1e-10 * b);
        }
        let noisy = add_noise(
            &img,
            &NoiseParams {
                snr_db: 20.0,
                seed: 1,
            },
        );
        let err: f64 = noisy
            .data()
            .iter()
            .zip(img.data())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / img.len() as f64;
        let snr = 10.0 * (1.0 / err).log10();
        assert!((snr - 20.0).abs() < 1.0, "empirical snr {snr}");
        assert_eq!(
            noisy,
            add_noise(
                &img,
                &NoiseParams {
                    snr_db: 20.0,
                    seed: 1
                }
            )
        );
    }
}
