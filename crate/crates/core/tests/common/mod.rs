#![allow(dead_code)]

use hyperspeckle::simulate::SimParams;
use hyperspeckle::{Image2D, SpectralGrid};

pub fn sim_params(seed: u64, dims: (usize, usize), n_channels: usize, n_pol: usize) -> SimParams {
    SimParams {
        seed,
        psf_dims: dims,
        grid: SpectralGrid::with_channels(500.0, 2.0, n_channels).unwrap(),
        n_pol,
        grain_sigma: 1.0,
        spectral_corr: 0.0,
        envelope_sigma: dims.0 as f64 / 6.0,
    }
}

/// Linear convolution by explicit summation: object pixel `(u, v)` lands
/// the PSF shifted by its offset from the object center pixel.
pub fn direct_conv(psf: &Image2D, obj: &Image2D) -> Image2D {
    let (pw, ph) = psf.dims();
    let (ow, oh) = obj.dims();
    let (cx, cy) = ((ow / 2) as isize, (oh / 2) as isize);
    let mut out = vec![0.0; pw * ph];
    for v in 0..oh {
        for u in 0..ow {
            let o = obj.get(u, v);
            if o == 0.0 {
                continue;
            }
            let (sx, sy) = (u as isize - cx, v as isize - cy);
            for y in 0..ph as isize {
                for x in 0..pw as isize {
                    let (px, py) = (x - sx, y - sy);
                    if px >= 0 && py >= 0 && px < pw as isize && py < ph as isize {
                        out[(y as usize) * pw + x as usize] +=
                            o * psf.get(px as usize, py as usize);
                    }
                }
            }
        }
    }
    Image2D::new(pw, ph, out).unwrap()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}
