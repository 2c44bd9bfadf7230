//! Calibration: scanned aperture speckles to `T_b`, linewidth correction to
//! `T_c`, and PSF calibration from pinhole or aperture scans.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{WienerBank, WienerParams};
use crate::recover::{truncated_pinv_with_info, PinvInfo, PinvPolicy};
use crate::simulate::ForwardModel;
use crate::types::{
    image_to_column, CalibSourceMatrix, ColumnAxis, HyperCube, Image2D, SpectralGrid,
    TransmissionMatrix,
};

/// Speckles recorded while scanning the source, one per scan step.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibScan {
    speckles: Vec<Image2D>,
    source: CalibSourceMatrix,
    pol: usize,
}

impl CalibScan {
    pub fn new(speckles: Vec<Image2D>, source: CalibSourceMatrix, pol: usize) -> Result<Self> {
        if speckles.len() != source.n_steps() {
            return Err(Error::Dimension(format!(
                "{} speckles for {} scan steps",
                speckles.len(),
                source.n_steps()
            )));
        }
        if let Some(first) = speckles.first() {
            if speckles.iter().any(|s| s.dims() != first.dims()) {
                return Err(Error::Dimension("scan speckles differ in size".into()));
            }
        }
        if pol > 1 {
            return Err(Error::OutOfRange(format!("polarization index {pol}")));
        }
        Ok(CalibScan {
            speckles,
            source,
            pol,
        })
    }

    pub fn speckles(&self) -> &[Image2D] {
        &self.speckles
    }

    pub fn source(&self) -> &CalibSourceMatrix {
        &self.source
    }

    pub fn grid(&self) -> &SpectralGrid {
        self.source.grid()
    }

    pub fn pol(&self) -> usize {
        self.pol
    }

    pub fn dims(&self) -> (usize, usize) {
        self.speckles[0].dims()
    }

    /// The same scan with every speckle passed through `f`.
    pub fn map_speckles(
        &self,
        f: impl Fn(&Image2D) -> Result<Image2D> + Sync + Send,
    ) -> Result<Self> {
        let speckles = self
            .speckles
            .par_iter()
            .map(f)
            .collect::<Result<Vec<_>>>()?;
        CalibScan::new(speckles, self.source.clone(), self.pol)
    }
}

/// Scan speckles the simulator would record: step `k` images `aperture`
/// under the source spectrum in column `k` of `source`.
pub fn synthesize_scan(
    psfs: &HyperCube,
    pol: usize,
    aperture: &Image2D,
    source: &CalibSourceMatrix,
) -> Result<CalibScan> {
    if source.grid() != psfs.grid() {
        return Err(Error::Dimension("source and PSF grids differ".into()));
    }
    if pol >= psfs.n_pol() {
        return Err(Error::OutOfRange(format!(
            "polarization {pol} not simulated"
        )));
    }
    let model = ForwardModel::new(psfs, aperture.dims())?;
    let n = psfs.n_channels();
    let s = source.matrix();
    let needed: Vec<usize> = (0..n)
        .filter(|&c| s.row(c).iter().any(|&v| v != 0.0))
        .collect();
    let per_channel = needed
        .par_iter()
        .map(|&c| model.convolve_channel(pol, c, aperture))
        .collect::<Result<Vec<_>>>()?;
    let (w, h) = psfs.dims();
    let speckles = (0..source.n_steps())
        .map(|k| {
            let mut acc = vec![0.0; w * h];
            for (img, &c) in per_channel.iter().zip(&needed) {
                let weight = s[(c, k)];
                if weight != 0.0 {
                    for (a, v) in acc.iter_mut().zip(img.data()) {
                        *a += weight * v;
                    }
                }
            }
            Image2D::new(w, h, acc)
        })
        .collect::<Result<Vec<_>>>()?;
    CalibScan::new(speckles, source.clone(), pol)
}

/// `T_b`: column `k` is the reshaped speckle of scan step `k`.
pub fn build_tb(scan: &CalibScan) -> Result<TransmissionMatrix> {
    let columns: Vec<Vec<f64>> = scan.speckles.iter().map(image_to_column).collect();
    TransmissionMatrix::from_columns(
        *scan.grid(),
        1,
        scan.dims(),
        ColumnAxis::ScanSteps,
        &columns,
    )
}

/// Result of the linewidth correction.
#[derive(Debug, Clone)]
pub struct LinewidthCorrection {
    pub tc: TransmissionMatrix,
    /// Conditioning of `S_c`; `None` when `S_c` is the identity.
    pub info: Option<PinvInfo>,
    pub warning: Option<String>,
}

/// Condition number above which the correction is flagged.
pub const CONDITION_WARNING: f64 = 1e6;

/// `T_c = T_b S_c^+`.
pub fn correct_linewidth(
    tb: &TransmissionMatrix,
    sc: &CalibSourceMatrix,
    policy: PinvPolicy,
) -> Result<LinewidthCorrection> {
    if tb.n_columns() != sc.n_steps() {
        return Err(Error::Dimension(format!(
            "T_b has {} columns, S_c has {} scan steps",
            tb.n_columns(),
            sc.n_steps()
        )));
    }
    if tb.grid() != sc.grid() {
        return Err(Error::Dimension("T_b and S_c grids differ".into()));
    }
    if sc.is_identity() {
        let tc = TransmissionMatrix::new(
            *sc.grid(),
            1,
            tb.image_dims(),
            ColumnAxis::Channels,
            tb.matrix().clone(),
        )?;
        return Ok(LinewidthCorrection {
            tc,
            info: None,
            warning: None,
        });
    }
    let (pinv, info) = truncated_pinv_with_info(sc.matrix(), policy)?;
    let full_rank = sc.matrix().nrows().min(sc.matrix().ncols());
    let warning = if info.rank < full_rank {
        Some(format!(
            "S_c has numerical rank {} of {full_rank}; correction is a least-squares estimate",
            info.rank
        ))
    } else if info.condition > CONDITION_WARNING {
        Some(format!(
            "S_c is ill-conditioned (cond = {:.3e})",
            info.condition
        ))
    } else {
        None
    };
    let m: DMatrix<f64> = tb.matrix() * pinv;
    let tc = TransmissionMatrix::new(*sc.grid(), 1, tb.image_dims(), ColumnAxis::Channels, m)?;
    Ok(LinewidthCorrection {
        tc,
        info: Some(info),
        warning,
    })
}

/// Whether PSF calibration also receives the linewidth correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsfCorrection {
    /// Correct whenever `S_c` is not the identity.
    #[default]
    Auto,
    Always,
    Never,
}

/// Unit-sum PSF planes, one per channel, from a point-object scan.
pub fn calibrate_psfs(scan: &CalibScan, correction: PsfCorrection) -> Result<HyperCube> {
    if let Some(k) = scan.speckles.iter().position(|s| s.sum() <= 0.0) {
        return Err(Error::Precondition(format!(
            "scan step {k} recorded no light; cannot normalize"
        )));
    }
    let apply = match correction {
        PsfCorrection::Always => true,
        PsfCorrection::Never => false,
        PsfCorrection::Auto => !scan.source.is_identity(),
    };
    let (w, h) = scan.dims();
    let planes: Vec<Image2D> = if apply {
        let tb = build_tb(scan)?;
        let tc = correct_linewidth(&tb, &scan.source, PinvPolicy::EXACT)?.tc;
        (0..tc.n_columns())
            .map(|n| Image2D::from_clamped(w, h, tc.column(n)))
            .collect::<Result<_>>()?
    } else {
        if scan.speckles.len() != scan.grid().n_channels() {
            return Err(Error::Dimension(format!(
                "{} scan steps cannot map onto {} channels without correction",
                scan.speckles.len(),
                scan.grid().n_channels()
            )));
        }
        scan.speckles.clone()
    };
    let planes = planes
        .iter()
        .enumerate()
        .map(|(n, p)| {
            p.normalized_to_unit_sum().map_err(|_| {
                Error::Precondition(format!(
                    "corrected PSF for channel {n} has no positive mass"
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    HyperCube::new(*scan.grid(), 1, planes)
}

/// PSFs recovered by Wiener-deconvolving aperture speckles with the binary
/// aperture image.
pub fn psf_from_aperture(cube: &HyperCube, mask: &Image2D, nsr: f64) -> Result<HyperCube> {
    if mask.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Precondition("aperture mask must be binary".into()));
    }
    if mask.is_zero() {
        return Err(Error::Precondition("aperture mask is empty".into()));
    }
    let params = WienerParams { nsr };
    params.validate()?;
    let bank = WienerBank::new(std::slice::from_ref(mask), cube.dims())?;
    let planes = cube
        .planes()
        .par_iter()
        .enumerate()
        .map(|(i, plane)| {
            bank.deconvolve(0, plane, &params)?
                .normalized_to_unit_sum()
                .map_err(|_| Error::Precondition(format!("deconvolved plane {i} vanished")))
        })
        .collect::<Result<Vec<_>>>()?;
    HyperCube::new(*cube.grid(), cube.n_pol(), planes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> SpectralGrid {
        SpectralGrid::with_channels(500.0, 2.0, n).unwrap()
    }

    fn tb_from(speckles: Vec<Image2D>, n: usize) -> TransmissionMatrix {
        let scan = CalibScan::new(speckles, CalibSourceMatrix::identity(grid(n)), 0).unwrap();
        build_tb(&scan).unwrap()
    }

    #[test]
    fn tb_columns_follow_scan_order() {
        let a = Image2D::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Image2D::new(2, 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let tb = tb_from(vec![a, b], 2);
        assert_eq!(tb.matrix().shape(), (4, 2));
        assert_eq!(tb.column(1), vec![5.0, 6.0, 7.0, 8.0]);
        let single = tb_from(vec![Image2D::zeros(3, 3)], 1);
        assert_eq!(single.matrix().shape(), (9, 1));
    }

    #[test]
    fn mismatched_speckles_are_rejected() {
        let r = CalibScan::new(
            vec![Image2D::zeros(2, 2), Image2D::zeros(3, 2)],
            CalibSourceMatrix::identity(grid(2)),
            0,
        );
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn identity_and_scaled_sources() {
        let imgs: Vec<Image2D> = (0..3)
            .map(|k| Image2D::from_fn(3, 3, |x, y| (x + 2 * y + k) as f64))
            .collect();
        let tb = tb_from(imgs, 3);
        let id = correct_linewidth(
            &tb,
            &CalibSourceMatrix::identity(grid(3)),
            PinvPolicy::EXACT,
        )
        .unwrap();
        assert_eq!(id.tc.matrix(), tb.matrix());
        assert_eq!(id.tc.axis(), ColumnAxis::Channels);

        let twice = CalibSourceMatrix::new(grid(3), DMatrix::identity(3, 3) * 2.0).unwrap();
        let half = correct_linewidth(&tb, &twice, PinvPolicy::EXACT).unwrap();
        let err = (half.tc.matrix() - tb.matrix() / 2.0).amax();
        assert!(err < 1e-14, "{err}");
        assert!(half.warning.is_none());
    }

    #[test]
    fn rank_deficient_source_warns() {
        let mut m = DMatrix::identity(3, 3);
        m[(2, 2)] = 0.0;
        m[(1, 2)] = 1.0;
        let sc = CalibSourceMatrix::new(grid(3), m).unwrap();
        let tb = tb_from(vec![Image2D::zeros(2, 2); 3], 3);
        let out = correct_linewidth(&tb, &sc, PinvPolicy::EXACT).unwrap();
        assert!(out.warning.is_some());
    }

    #[test]
    fn zero_speckle_cannot_become_a_psf() {
        let scan = CalibScan::new(
            vec![Image2D::from_fn(2, 2, |_, _| 1.0), Image2D::zeros(2, 2)],
            CalibSourceMatrix::identity(grid(2)),
            0,
        )
        .unwrap();
        assert!(matches!(
            calibrate_psfs(&scan, PsfCorrection::Auto),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn single_pixel_mask_returns_speckles() {
        let plane = Image2D::from_fn(8, 8, |x, y| 1.0 + ((x * 3 + y) % 5) as f64);
        let cube = HyperCube::new(grid(1), 1, vec![plane.clone()]).unwrap();
        let mask = Image2D::new(1, 1, vec![1.0]).unwrap();
        let out = psf_from_aperture(&cube, &mask, 0.0).unwrap();
        let want = plane.normalized_to_unit_sum().unwrap();
        for (a, b) in out.plane(0, 0).data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(
            psf_from_aperture(&cube, &Image2D::zeros(1, 1), 0.0),
            Err(Error::Precondition(_))
        ));
    }
}
