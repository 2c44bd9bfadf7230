//! Per-channel imaging: Wiener deconvolution of the speckle by every PSF,
//! background estimation from dark channels and spectrum-weighted denoising.

pub mod preprocess;
pub mod wiener;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use preprocess::{preprocess, PreprocParams};
pub use wiener::{wiener_deconv, WienerBank, WienerParams};

use crate::error::{Error, Result};
use crate::types::{HyperCube, Image2D, Spectrum};

/// Pixelwise mean of the background-channel planes.
pub fn estimate_background(planes: &[&Image2D]) -> Result<Image2D> {
    let first = planes
        .first()
        .ok_or_else(|| Error::Precondition("no background channels to average".into()))?;
    let mut acc = vec![0.0; first.len()];
    for p in planes {
        if p.dims() != first.dims() {
            return Err(Error::Dimension("background planes differ in size".into()));
        }
        for (a, v) in acc.iter_mut().zip(p.data()) {
            *a += v;
        }
    }
    let inv = 1.0 / planes.len() as f64;
    Image2D::new(
        first.width(),
        first.height(),
        acc.into_iter().map(|v| v * inv).collect(),
    )
}

/// `O_d = s * max(O_n - BG, 0) / sum(max(O_n - BG, 0))`.
pub fn denoise(on: &Image2D, s_prime_i: f64, bg: &Image2D) -> Result<Image2D> {
    if !(s_prime_i >= 0.0 && s_prime_i.is_finite()) {
        return Err(Error::Precondition(format!(
            "spectral weight must be >= 0, got {s_prime_i}"
        )));
    }
    if on.dims() != bg.dims() {
        return Err(Error::Dimension(
            "background and channel image differ in size".into(),
        ));
    }
    if s_prime_i == 0.0 {
        return Ok(Image2D::zeros(on.width(), on.height()));
    }
    let diff: Vec<f64> = on
        .data()
        .iter()
        .zip(bg.data())
        .map(|(a, b)| (a - b).max(0.0))
        .collect();
    let total: f64 = diff.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateChannel(
            "no positive signal left after background subtraction".into(),
        ));
    }
    let k = s_prime_i / total;
    Image2D::new(
        on.width(),
        on.height(),
        diff.into_iter().map(|v| v * k).collect(),
    )
}

/// Channels whose recovered intensity is below `frac * max(S')`, as flat
/// (polarization-major) indices.
pub fn select_background_channels(s: &Spectrum, frac: f64) -> Vec<usize> {
    let thresh = frac * s.max();
    s.values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v < thresh)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImagingParams {
    pub wiener: WienerParams,
    /// Background threshold as a fraction of `max(S')`.
    pub background_frac: f64,
}

impl Default for ImagingParams {
    fn default() -> Self {
        ImagingParams {
            wiener: WienerParams::default(),
            background_frac: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ImagingResult {
    /// Raw Wiener outputs.
    pub on: HyperCube,
    /// Denoised, spectrum-weighted outputs.
    pub od: HyperCube,
    /// One background estimate per polarization.
    pub backgrounds: Vec<Image2D>,
    pub background_channels: Vec<usize>,
    /// Channels zeroed because nothing survived background subtraction.
    pub degenerate_channels: Vec<usize>,
}

/// Deconvolves `speckle` by every PSF in `bank` (polarization-major, one per
/// entry of `s_prime`), crops each result to `roi` around the frame center,
/// then estimates per-polarization backgrounds and denoises.
///
/// A polarization without dark channels of its own borrows the dark channels
/// of the other one; with none anywhere the background is zero.
pub fn reconstruct_channels(
    bank: &WienerBank,
    speckle: &Image2D,
    s_prime: &Spectrum,
    roi: (usize, usize),
    p: &ImagingParams,
) -> Result<ImagingResult> {
    if bank.len() != s_prime.len() {
        return Err(Error::Dimension(format!(
            "{} PSFs for {} spectral entries",
            bank.len(),
            s_prime.len()
        )));
    }
    let spec = bank.speckle_spectrum(speckle)?;
    let on_planes = (0..bank.len())
        .into_par_iter()
        .map(|k| {
            bank.deconvolve_spectrum(k, &spec, &p.wiener)?
                .center_crop(roi.0, roi.1)
        })
        .collect::<Result<Vec<_>>>()?;

    let n_pol = s_prime.n_pol();
    let n_ch = s_prime.grid().n_channels();
    let background_channels = select_background_channels(s_prime, p.background_frac);
    let mut backgrounds = Vec::with_capacity(n_pol);
    for pol in 0..n_pol {
        let own: Vec<&Image2D> = background_channels
            .iter()
            .filter(|&&i| i / n_ch == pol)
            .map(|&i| &on_planes[i])
            .collect();
        let chosen: Vec<&Image2D> = if own.is_empty() {
            background_channels.iter().map(|&i| &on_planes[i]).collect()
        } else {
            own
        };
        backgrounds.push(if chosen.is_empty() {
            Image2D::zeros(roi.0, roi.1)
        } else {
            estimate_background(&chosen)?
        });
    }

    let denoised = on_planes
        .par_iter()
        .enumerate()
        .map(
            |(i, on)| match denoise(on, s_prime.values()[i], &backgrounds[i / n_ch]) {
                Ok(od) => Ok((od, false)),
                Err(Error::DegenerateChannel(_)) => Ok((Image2D::zeros(roi.0, roi.1), true)),
                Err(e) => Err(e),
            },
        )
        .collect::<Result<Vec<_>>>()?;
    let degenerate_channels = denoised
        .iter()
        .enumerate()
        .filter(|(_, (_, d))| *d)
        .map(|(i, _)| i)
        .collect();
    let od_planes = denoised.into_iter().map(|(p, _)| p).collect();

    Ok(ImagingResult {
        on: HyperCube::new(*s_prime.grid(), n_pol, on_planes)?,
        od: HyperCube::new(*s_prime.grid(), n_pol, od_planes)?,
        backgrounds,
        background_channels,
        degenerate_channels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SpectralGrid;

    #[test]
    fn background_is_pixelwise_mean() {
        let a = Image2D::from_fn(3, 2, |x, _| x as f64);
        let b = Image2D::from_fn(3, 2, |_, y| 2.0 * y as f64);
        assert_eq!(estimate_background(&[&a]).unwrap(), a);
        let m = estimate_background(&[&a, &b]).unwrap();
        assert_eq!(m.get(2, 1), 2.0);
        assert!(matches!(
            estimate_background(&[]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn denoise_examples() {
        let on = Image2D::from_fn(4, 4, |x, y| (x + y) as f64);
        let zero = Image2D::zeros(4, 4);
        let unit = denoise(&on, 1.0, &zero).unwrap();
        assert_eq!(unit, on.normalized_to_unit_sum().unwrap());
        assert!(denoise(&on, 0.0, &zero).unwrap().is_zero());
        let bg = Image2D::from_fn(4, 4, |_, _| 100.0);
        assert!(matches!(
            denoise(&on, 1.0, &bg),
            Err(Error::DegenerateChannel(_))
        ));
        let scaled = denoise(&on, 3.5, &Image2D::from_fn(4, 4, |_, _| 1.0)).unwrap();
        assert!((scaled.sum() - 3.5).abs() < 1e-12);
    }

    #[test]
    fn background_selection_uses_fraction_of_max() {
        let grid = SpectralGrid::with_channels(500.0, 2.0, 4).unwrap();
        let s = Spectrum::new(grid, 1, vec![1.0, 0.04, 0.06, 0.0]).unwrap();
        assert_eq!(select_background_channels(&s, 0.05), vec![1, 3]);
    }
}
