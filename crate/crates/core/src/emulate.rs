//! TM emulation from recovered objects, iterative refinement and the
//! polarization cascade.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{preprocess, reconstruct_channels, ImagingParams, PreprocParams, WienerBank};
use crate::metrics::spectral_correlation;
use crate::recover::{residual, L1Params, PinvPolicy, SpectralSolver};
use crate::simulate::ForwardModel;
use crate::types::{image_to_column, ColumnAxis, HyperCube, Image2D, Spectrum, TransmissionMatrix};

/// `T_e`: column `n` is `PSF_n * O_d_n` with the forward-model crop.
///
/// Channels whose `O_d` is all zero take the matching column of `fallback`
/// when one is given, and stay zero otherwise.
pub fn build_te(
    psfs: &HyperCube,
    od: &HyperCube,
    fallback: Option<&TransmissionMatrix>,
) -> Result<TransmissionMatrix> {
    if psfs.grid() != od.grid() || psfs.n_pol() != od.n_pol() {
        return Err(Error::Dimension(
            "PSF and object cubes disagree in grid or polarization count".into(),
        ));
    }
    if let Some(fb) = fallback {
        if fb.image_dims() != psfs.dims() || fb.n_columns() != psfs.planes().len() {
            return Err(Error::Dimension(
                "fallback TM does not match the PSF cube".into(),
            ));
        }
    }
    let model = ForwardModel::new(psfs, od.dims())?;
    let n_ch = psfs.n_channels();
    let columns = (0..od.planes().len())
        .into_par_iter()
        .map(|i| {
            let plane = &od.planes()[i];
            if plane.is_zero() {
                return Ok(match fallback {
                    Some(fb) => fb.column(i),
                    None => vec![0.0; psfs.dims().0 * psfs.dims().1],
                });
            }
            Ok(image_to_column(&model.convolve_channel(
                i / n_ch,
                i % n_ch,
                plane,
            )?))
        })
        .collect::<Result<Vec<_>>>()?;
    TransmissionMatrix::from_columns(
        *psfs.grid(),
        psfs.n_pol(),
        psfs.dims(),
        ColumnAxis::Channels,
        &columns,
    )
}

/// `[T_0, T_1]`: all polarization-0 channels, then all polarization-1.
pub fn cascade_polarization(
    tc0: &TransmissionMatrix,
    tc1: &TransmissionMatrix,
) -> Result<TransmissionMatrix> {
    if tc0.n_pol() != 1 || tc1.n_pol() != 1 {
        return Err(Error::Dimension(
            "cascade expects two single-polarization TMs".into(),
        ));
    }
    if tc0.axis() != ColumnAxis::Channels || tc1.axis() != ColumnAxis::Channels {
        return Err(Error::Dimension(
            "cascade expects channel-indexed TMs".into(),
        ));
    }
    if tc0.n_pixels() != tc1.n_pixels() || tc0.image_dims() != tc1.image_dims() {
        return Err(Error::Dimension(format!(
            "pixel counts differ: {} vs {}",
            tc0.n_pixels(),
            tc1.n_pixels()
        )));
    }
    if tc0.grid() != tc1.grid() {
        return Err(Error::Dimension("cascaded TMs use different grids".into()));
    }
    let (p, n) = (tc0.n_pixels(), tc0.n_columns());
    let mut m = DMatrix::zeros(p, 2 * n);
    m.columns_mut(0, n).copy_from(tc0.matrix());
    m.columns_mut(n, n).copy_from(tc1.matrix());
    TransmissionMatrix::new(*tc0.grid(), 2, tc0.image_dims(), ColumnAxis::Channels, m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineConfig {
    pub rounds: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig { rounds: 1 }
    }
}

/// Everything the refinement loop needs besides the data.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub pinv: PinvPolicy,
    pub l1: Option<L1Params>,
    pub imaging: ImagingParams,
    /// Applied to the speckle and to every emulated column before solving.
    pub preproc: Option<PreprocParams>,
    /// Object-plane window kept from each deconvolution.
    pub roi: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub residual: f64,
    pub correlation: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub spectrum: Spectrum,
    pub on: HyperCube,
    pub od: HyperCube,
    pub tm: TransmissionMatrix,
    /// 1-based index of the returned round.
    pub best_round: usize,
    pub rounds: Vec<RoundLog>,
}

fn solve_with(solver: &SpectralSolver, speckle: &Image2D, cfg: &SolverConfig) -> Result<Spectrum> {
    let s = solver.recover(speckle)?;
    match &cfg.l1 {
        Some(p) => solver.l1_refine(speckle, &s, p),
        None => Ok(s),
    }
}

/// Emulated TM for one refinement round. Object estimates are normalized to
/// unit sum; each emulated column is preprocessed like the measurements and
/// rescaled to the sum of the matching calibration column. Background and
/// empty channels keep their calibration columns.
fn emulate_round(
    tc: &TransmissionMatrix,
    psfs: &HyperCube,
    od: &HyperCube,
    background: &[usize],
    cfg: &SolverConfig,
) -> Result<TransmissionMatrix> {
    let model = ForwardModel::new(psfs, od.dims())?;
    let n_ch = psfs.n_channels();
    let columns = (0..od.planes().len())
        .into_par_iter()
        .map(|i| {
            let plane = &od.planes()[i];
            let calib = tc.column(i);
            if plane.is_zero() || background.binary_search(&i).is_ok() {
                return Ok(calib);
            }
            let unit = plane.normalized_to_unit_sum()?;
            let mut img = model.convolve_channel(i / n_ch, i % n_ch, &unit)?;
            if let Some(p) = &cfg.preproc {
                img = preprocess(&img, p)?;
            }
            let target: f64 = calib.iter().sum();
            let have = img.sum();
            if have > 0.0 && target > 0.0 {
                img = img.scaled(target / have);
            }
            Ok(image_to_column(&img))
        })
        .collect::<Result<Vec<_>>>()?;
    TransmissionMatrix::from_columns(
        *tc.grid(),
        tc.n_pol(),
        tc.image_dims(),
        ColumnAxis::Channels,
        &columns,
    )
}

/// Recover, image, emulate, repeat. Returns the round with the smallest
/// residual `||I - T S'||`; ties keep the earlier round.
///
/// `speckle` is the raw camera frame: it is deconvolved as is and passed
/// through `cfg.preproc` before spectral recovery. A round whose emulation
/// fails ends the loop, keeping the rounds already done.
pub fn refine(
    tc: &TransmissionMatrix,
    psfs: &HyperCube,
    speckle: &Image2D,
    rounds: usize,
    cfg: &SolverConfig,
    truth: Option<&Spectrum>,
) -> Result<RefineOutcome> {
    let solver = SpectralSolver::new(tc, cfg.pinv)?;
    refine_with_solver(&solver, psfs, speckle, rounds, cfg, truth)
}

/// [`refine`] with the calibration TM already factored.
pub fn refine_with_solver(
    solver: &SpectralSolver,
    psfs: &HyperCube,
    speckle: &Image2D,
    rounds: usize,
    cfg: &SolverConfig,
    truth: Option<&Spectrum>,
) -> Result<RefineOutcome> {
    let tc = solver.tm();
    if rounds == 0 {
        return Err(Error::OutOfRange("refine needs at least one round".into()));
    }
    if psfs.planes().len() != tc.n_columns() || psfs.grid() != tc.grid() {
        return Err(Error::Dimension(
            "PSF cube does not match the TM columns".into(),
        ));
    }
    let measured = match &cfg.preproc {
        Some(p) => preprocess(speckle, p)?,
        None => speckle.clone(),
    };
    let bank = WienerBank::from_cube(psfs, speckle.dims())?;

    let mut tm = tc.clone();
    let mut logs = Vec::with_capacity(rounds);
    let mut best: Option<RefineOutcome> = None;
    for round in 1..=rounds {
        let attempt = if round == 1 {
            solve_with(solver, &measured, cfg)
        } else {
            SpectralSolver::new(&tm, cfg.pinv).and_then(|s| solve_with(&s, &measured, cfg))
        };
        let spectrum = match attempt {
            Ok(s) => s,
            Err(_) if round > 1 => break,
            Err(e) => return Err(e),
        };
        let res = residual(&tm, &measured, &spectrum)?;
        let correlation = truth.and_then(|t| spectral_correlation(&spectrum, t).ok());
        logs.push(RoundLog {
            round,
            residual: res,
            correlation,
        });
        let imaging = reconstruct_channels(&bank, speckle, &spectrum, cfg.roi, &cfg.imaging)?;
        let improves = best
            .as_ref()
            .map_or(true, |b| res < b.rounds[b.best_round - 1].residual);
        let next_tm = if round < rounds {
            emulate_round(tc, psfs, &imaging.od, &imaging.background_channels, cfg).ok()
        } else {
            None
        };
        if improves {
            best = Some(RefineOutcome {
                spectrum,
                on: imaging.on,
                od: imaging.od,
                tm: tm.clone(),
                best_round: round,
                rounds: logs.clone(),
            });
        }
        match next_tm {
            Some(t) => tm = t,
            None => break,
        }
    }
    let mut out = best.expect("round 1 always completes");
    out.rounds = logs;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SpectralGrid;

    fn tm(cols: usize, offset: f64) -> TransmissionMatrix {
        let grid = SpectralGrid::with_channels(500.0, 2.0, cols).unwrap();
        let m = DMatrix::from_fn(6, cols, |r, c| r as f64 + 10.0 * c as f64 + offset);
        TransmissionMatrix::new(grid, 1, (3, 2), ColumnAxis::Channels, m).unwrap()
    }

    #[test]
    fn cascade_places_blocks_in_order() {
        let (a, b) = (tm(3, 0.0), tm(3, 0.5));
        let c = cascade_polarization(&a, &b).unwrap();
        assert_eq!(c.n_pol(), 2);
        assert_eq!(c.matrix().columns(0, 3), a.matrix().columns(0, 3));
        assert_eq!(c.matrix().columns(3, 3), b.matrix().columns(0, 3));
        let grid = *a.grid();
        let other =
            TransmissionMatrix::new(grid, 1, (2, 2), ColumnAxis::Channels, DMatrix::zeros(4, 3))
                .unwrap();
        assert!(matches!(
            cascade_polarization(&a, &other),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn delta_objects_give_psf_columns() {
        let grid = SpectralGrid::with_channels(500.0, 2.0, 2).unwrap();
        let psfs = HyperCube::new(
            grid,
            1,
            vec![
                Image2D::from_fn(5, 5, |x, y| (x * 5 + y) as f64),
                Image2D::from_fn(5, 5, |x, y| (x + y * 2) as f64),
            ],
        )
        .unwrap();
        let mut delta = vec![0.0; 9];
        delta[4] = 1.0;
        let d = Image2D::new(3, 3, delta).unwrap();
        let od = HyperCube::new(grid, 1, vec![d.clone(), d]).unwrap();
        let te = build_te(&psfs, &od, None).unwrap();
        for k in 0..2 {
            for (a, b) in te.column(k).iter().zip(psfs.plane(0, k).data()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
