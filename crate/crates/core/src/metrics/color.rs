//! CIE 1931 RGB color composition of recovered cubes.

use crate::error::{Error, Result};
use crate::types::{HyperCube, Spectrum};

const CIE_START: f64 = 380.0;
const CIE_STEP: f64 = 5.0;

/// CIE 1931 RGB color-matching functions (Wright & Guild primaries at 700,
/// 546.1 and 435.8 nm), 380 to 780 nm in 5 nm steps.
#[rustfmt::skip]
const CIE_1931_RGB: [[f64; 3]; 81] = [
    [0.00003, -0.00001, 0.00117], // 380
    [0.00005, -0.00002, 0.00189], // 385
    [0.00010, -0.00004, 0.00359], // 390
    [0.00017, -0.00007, 0.00647], // 395
    [0.00030, -0.00014, 0.01214], // 400
    [0.00047, -0.00022, 0.01969], // 405
    [0.00084, -0.00041, 0.03707], // 410
    [0.00139, -0.00070, 0.06637], // 415
    [0.00211, -0.00110, 0.11541], // 420
    [0.00266, -0.00143, 0.18575], // 425
    [0.00218, -0.00119, 0.24769], // 430
    [0.00036, -0.00021, 0.29012], // 435
    [-0.00261, 0.00149, 0.31228], // 440
    [-0.00673, 0.00379, 0.31860], // 445
    [-0.01213, 0.00678, 0.31670], // 450
    [-0.01874, 0.01046, 0.31166], // 455
    [-0.02608, 0.01485, 0.29821], // 460
    [-0.03324, 0.01977, 0.27295], // 465
    [-0.03933, 0.02538, 0.22991], // 470
    [-0.04471, 0.03183, 0.18592], // 475
    [-0.04939, 0.03914, 0.14494], // 480
    [-0.05364, 0.04713, 0.10968], // 485
    [-0.05814, 0.05689, 0.08257], // 490
    [-0.06414, 0.06948, 0.06246], // 495
    [-0.07137, 0.08536, 0.04776], // 500
    [-0.08120, 0.10593, 0.03688], // 505
    [-0.08901, 0.12860, 0.02698], // 510
    [-0.09356, 0.15262, 0.01842], // 515
    [-0.09264, 0.17468, 0.01221], // 520
    [-0.08473, 0.19113, 0.00830], // 525
    [-0.07101, 0.20317, 0.00549], // 530
    [-0.05316, 0.21083, 0.00320], // 535
    [-0.03152, 0.21466, 0.00146], // 540
    [-0.00613, 0.21487, 0.00023], // 545
    [0.02279, 0.21178, -0.00058], // 550
    [0.05514, 0.20588, -0.00105], // 555
    [0.09060, 0.19702, -0.00130], // 560
    [0.12840, 0.18522, -0.00138], // 565
    [0.16768, 0.17087, -0.00135], // 570
    [0.20715, 0.15429, -0.00123], // 575
    [0.24562, 0.13610, -0.00108], // 580
    [0.27989, 0.11686, -0.00093], // 585
    [0.30928, 0.09754, -0.00079], // 590
    [0.33184, 0.07909, -0.00063], // 595
    [0.34429, 0.06246, -0.00049], // 600
    [0.34756, 0.04776, -0.00038], // 605
    [0.33971, 0.03557, -0.00030], // 610
    [0.32265, 0.02583, -0.00022], // 615
    [0.29708, 0.01828, -0.00015], // 620
    [0.26348, 0.01253, -0.00011], // 625
    [0.22677, 0.00833, -0.00008], // 630
    [0.19233, 0.00537, -0.00005], // 635
    [0.15968, 0.00334, -0.00003], // 640
    [0.12905, 0.00199, -0.00002], // 645
    [0.10167, 0.00116, -0.00001], // 650
    [0.07857, 0.00066, -0.00001], // 655
    [0.05932, 0.00037, 0.00000], // 660
    [0.04366, 0.00021, 0.00000], // 665
    [0.03149, 0.00011, 0.00000], // 670
    [0.02294, 0.00006, 0.00000], // 675
    [0.01687, 0.00003, 0.00000], // 680
    [0.01187, 0.00001, 0.00000], // 685
    [0.00819, 0.00000, 0.00000], // 690
    [0.00572, 0.00000, 0.00000], // 695
    [0.00410, 0.00000, 0.00000], // 700
    [0.00291, 0.00000, 0.00000], // 705
    [0.00210, 0.00000, 0.00000], // 710
    [0.00148, 0.00000, 0.00000], // 715
    [0.00105, 0.00000, 0.00000], // 720
    [0.00074, 0.00000, 0.00000], // 725
    [0.00052, 0.00000, 0.00000], // 730
    [0.00036, 0.00000, 0.00000], // 735
    [0.00025, 0.00000, 0.00000], // 740
    [0.00017, 0.00000, 0.00000], // 745
    [0.00012, 0.00000, 0.00000], // 750
    [0.00008, 0.00000, 0.00000], // 755
    [0.00006, 0.00000, 0.00000], // 760
    [0.00004, 0.00000, 0.00000], // 765
    [0.00003, 0.00000, 0.00000], // 770
    [0.00001, 0.00000, 0.00000], // 775
    [0.00000, 0.00000, 0.00000], // 780
];

/// Color-matching values at `lambda_nm`, linearly interpolated, with
/// negative lobes clipped to zero.
pub fn cie_rgb(lambda_nm: f64) -> Result<[f64; 3]> {
    let last = CIE_START + CIE_STEP * (CIE_1931_RGB.len() - 1) as f64;
    if !(CIE_START..=last).contains(&lambda_nm) {
        return Err(Error::OutOfRange(format!(
            "{lambda_nm} nm is outside the {CIE_START}-{last} nm color table"
        )));
    }
    let pos = (lambda_nm - CIE_START) / CIE_STEP;
    let i = (pos.floor() as usize).min(CIE_1931_RGB.len() - 2);
    let t = pos - i as f64;
    let (a, b) = (CIE_1931_RGB[i], CIE_1931_RGB[i + 1]);
    Ok([0, 1, 2].map(|c| (a[c] + t * (b[c] - a[c])).max(0.0)))
}

/// Floating-point RGB raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Binary PPM (P6, 8-bit) after `v^(1/gamma)` display encoding of values
    /// clipped to `[0, 1]`.
    pub fn to_ppm(&self, gamma: f64) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for px in &self.data {
            for &v in px {
                let enc = v.clamp(0.0, 1.0).powf(1.0 / gamma);
                out.push((enc * 255.0).round() as u8);
            }
        }
        out
    }
}

/// `sum_k S'(k) rgb(lambda_k) O_d(k) / max(O_d(k))` without the final
/// normalization. Linear in `S'`.
pub fn compose_color_linear(cube: &HyperCube, spectrum: &Spectrum) -> Result<RgbImage> {
    if cube.grid() != spectrum.grid() || cube.n_pol() != spectrum.n_pol() {
        return Err(Error::Dimension(
            "cube and spectrum disagree in grid or polarization".into(),
        ));
    }
    let (w, h) = cube.dims();
    let mut data = vec![[0.0; 3]; w * h];
    let n_ch = cube.n_channels();
    for (i, plane) in cube.planes().iter().enumerate() {
        let rgb = cie_rgb(cube.grid().wavelength(i % n_ch))?;
        let weight = spectrum.values()[i];
        let peak = plane.max();
        if weight == 0.0 || peak <= 0.0 {
            continue;
        }
        let k = weight / peak;
        for (px, &v) in data.iter_mut().zip(plane.data()) {
            for c in 0..3 {
                px[c] += k * rgb[c] * v;
            }
        }
    }
    Ok(RgbImage {
        width: w,
        height: h,
        data,
    })
}

/// [`compose_color_linear`] scaled so its brightest component is 1, clipped
/// to `[0, 1]`. A zero spectrum gives a black image.
pub fn compose_color(cube: &HyperCube, spectrum: &Spectrum) -> Result<RgbImage> {
    let mut img = compose_color_linear(cube, spectrum)?;
    let m = img.max();
    if m > 0.0 {
        for px in img.data.iter_mut() {
            for v in px.iter_mut() {
                *v = (*v / m).clamp(0.0, 1.0);
            }
        }
    }
    Ok(img)
}
