//! Spectral recovery: truncated-SVD pseudoinverse of the TM, nonnegative
//! clamping, polarization split and the L1-regularized refinement.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{image_to_column, ColumnAxis, Image2D, Spectrum, TransmissionMatrix};

/// Which singular values to zero when pseudo-inverting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinvPolicy {
    pub drop_smallest: usize,
    /// Values below `rel_floor * sigma_max` are zeroed as well.
    pub rel_floor: f64,
}

impl Default for PinvPolicy {
    fn default() -> Self {
        PinvPolicy {
            drop_smallest: 5,
            rel_floor: 0.0,
        }
    }
}

impl PinvPolicy {
    /// Plain Moore-Penrose inverse.
    pub const EXACT: PinvPolicy = PinvPolicy {
        drop_smallest: 0,
        rel_floor: 0.0,
    };

    /// Default for a matrix with `n_columns` columns. Dropping five values
    /// only makes sense for large systems; small ones use a relative floor.
    pub fn for_columns(n_columns: usize) -> Self {
        if n_columns < 20 {
            PinvPolicy {
                drop_smallest: 0,
                rel_floor: 1e-6,
            }
        } else {
            PinvPolicy::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rel_floor) {
            return Err(Error::OutOfRange(format!(
                "rel_floor must lie in [0, 1), got {}",
                self.rel_floor
            )));
        }
        Ok(())
    }
}

/// Conditioning summary of a truncated pseudoinverse.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PinvInfo {
    /// All singular values, descending.
    pub singular_values: Vec<f64>,
    /// Number of singular values kept.
    pub rank: usize,
    /// `sigma_max / sigma_min` over the kept values; infinite when rank is 0.
    pub condition: f64,
}

impl PinvInfo {
    pub fn sigma_max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }
}

/// Pseudoinverse together with its conditioning summary.
pub fn truncated_pinv_with_info(
    m: &DMatrix<f64>,
    policy: PinvPolicy,
) -> Result<(DMatrix<f64>, PinvInfo)> {
    policy.validate()?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("matrix has non-finite entries".into()));
    }
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok((
            DMatrix::zeros(cols, rows),
            PinvInfo {
                singular_values: vec![],
                rank: 0,
                condition: f64::INFINITY,
            },
        ));
    }
    let svd = m
        .clone()
        .try_svd(true, true, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let sv = &svd.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let sigma_max = sv[order[0]];
    let tol = (rows.max(cols) as f64 * f64::EPSILON * sigma_max).max(policy.rel_floor * sigma_max);
    let keep_by_count = order.len().saturating_sub(policy.drop_smallest);

    let mut pinv = DMatrix::zeros(cols, rows);
    let mut rank = 0;
    let mut sigma_min = f64::INFINITY;
    for &i in order.iter().take(keep_by_count) {
        let s = sv[i];
        if s <= tol || s == 0.0 {
            break;
        }
        rank += 1;
        sigma_min = s;
        // pinv += v_i u_i^T / s
        let vi = v_t.row(i).transpose();
        let ui = u.column(i);
        pinv.ger(1.0 / s, &vi, &ui, 1.0);
    }
    let info = PinvInfo {
        singular_values: order.iter().map(|&i| sv[i]).collect(),
        rank,
        condition: if rank == 0 {
            f64::INFINITY
        } else {
            sigma_max / sigma_min
        },
    };
    Ok((pinv, info))
}

/// SVD pseudoinverse with the policy's singular values zeroed.
pub fn truncated_pinv(m: &DMatrix<f64>, policy: PinvPolicy) -> Result<DMatrix<f64>> {
    truncated_pinv_with_info(m, policy).map(|(p, _)| p)
}

/// Pseudo-inverted TM ready to recover many speckles.
#[derive(Debug, Clone)]
pub struct SpectralSolver {
    tm: TransmissionMatrix,
    pinv: DMatrix<f64>,
    info: PinvInfo,
}

impl SpectralSolver {
    pub fn new(tm: &TransmissionMatrix, policy: PinvPolicy) -> Result<Self> {
        if tm.axis() != ColumnAxis::Channels {
            return Err(Error::Dimension(
                "spectral recovery needs a channel-indexed TM".into(),
            ));
        }
        let (pinv, info) = truncated_pinv_with_info(tm.matrix(), policy)?;
        Ok(SpectralSolver {
            tm: tm.clone(),
            pinv,
            info,
        })
    }

    pub fn tm(&self) -> &TransmissionMatrix {
        &self.tm
    }

    pub fn pinv(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    pub fn info(&self) -> &PinvInfo {
        &self.info
    }

    fn column(&self, speckle: &Image2D) -> Result<DVector<f64>> {
        if speckle.dims() != self.tm.image_dims() {
            return Err(Error::Dimension(format!(
                "speckle is {:?}, TM expects {:?}",
                speckle.dims(),
                self.tm.image_dims()
            )));
        }
        Ok(DVector::from_vec(image_to_column(speckle)))
    }

    /// `T^+ I` before clamping.
    pub fn solve_unclamped(&self, speckle: &Image2D) -> Result<Vec<f64>> {
        let col = self.column(speckle)?;
        Ok((&self.pinv * col).as_slice().to_vec())
    }

    /// `S' = max(T^+ I, 0)`.
    pub fn recover(&self, speckle: &Image2D) -> Result<Spectrum> {
        let raw = self.solve_unclamped(speckle)?;
        Spectrum::new(
            *self.tm.grid(),
            self.tm.n_pol(),
            raw.into_iter().map(|v| v.max(0.0)).collect(),
        )
    }

    /// L1 refinement reusing this solver's largest singular value.
    pub fn l1_refine(&self, speckle: &Image2D, init: &Spectrum, p: &L1Params) -> Result<Spectrum> {
        let col = self.column(speckle)?;
        l1_refine_inner(&self.tm, &col, init, p, self.info.sigma_max())
    }
}

/// `clamp0(T_c^+ I)` for a single speckle.
pub fn recover_spectrum(
    tc: &TransmissionMatrix,
    speckle: &Image2D,
    policy: PinvPolicy,
) -> Result<Spectrum> {
    SpectralSolver::new(tc, policy)?.recover(speckle)
}

/// `|| I - T S ||_2`.
pub fn residual(tm: &TransmissionMatrix, speckle: &Image2D, s: &Spectrum) -> Result<f64> {
    if speckle.dims() != tm.image_dims() || s.len() != tm.n_columns() {
        return Err(Error::Dimension(
            "residual operands disagree in size".into(),
        ));
    }
    let col = DVector::from_column_slice(speckle.data());
    let sv = DVector::from_column_slice(s.values());
    Ok((col - tm.matrix() * sv).norm())
}

/// Settings for the nonnegative L1 refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct L1Params {
    pub gamma1: f64,
    pub max_iters: usize,
    pub step_tol: f64,
}

impl Default for L1Params {
    fn default() -> Self {
        L1Params {
            gamma1: 0.3,
            max_iters: 500,
            step_tol: 1e-7,
        }
    }
}

impl L1Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma1 >= 0.0 && self.gamma1.is_finite()) {
            return Err(Error::OutOfRange(format!(
                "gamma1 must be >= 0, got {}",
                self.gamma1
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::OutOfRange("max_iters must be >= 1".into()));
        }
        if !(self.step_tol > 0.0) {
            return Err(Error::OutOfRange(format!(
                "step_tol must be > 0, got {}",
                self.step_tol
            )));
        }
        Ok(())
    }
}

/// `||I - T S||^2 + gamma1 * ||S||_1`.
pub fn l1_objective(
    tm: &TransmissionMatrix,
    speckle: &Image2D,
    s: &Spectrum,
    gamma1: f64,
) -> Result<f64> {
    let r = residual(tm, speckle, s)?;
    Ok(r * r + gamma1 * s.values().iter().map(|v| v.abs()).sum::<f64>())
}

/// Nonnegative FISTA on `||I - T S||^2 + gamma1 ||S||_1`, started from
/// `init` projected onto `S >= 0`. Returns the best iterate seen.
pub fn l1_refine(
    tm: &TransmissionMatrix,
    speckle: &Image2D,
    init: &Spectrum,
    p: &L1Params,
) -> Result<Spectrum> {
    if speckle.dims() != tm.image_dims() {
        return Err(Error::Dimension(
            "speckle does not match TM image size".into(),
        ));
    }
    let col = DVector::from_column_slice(speckle.data());
    let gram = tm.matrix().tr_mul(tm.matrix());
    let lambda_max = gram
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(0.0, f64::max);
    l1_refine_inner(tm, &col, init, p, lambda_max.sqrt())
}

fn l1_refine_inner(
    tm: &TransmissionMatrix,
    col: &DVector<f64>,
    init: &Spectrum,
    p: &L1Params,
    sigma_max: f64,
) -> Result<Spectrum> {
    p.validate()?;
    if init.len() != tm.n_columns() {
        return Err(Error::Dimension(format!(
            "init has {} entries, TM has {} columns",
            init.len(),
            tm.n_columns()
        )));
    }
    let n = init.len();
    let t = tm.matrix();
    let gram = t.tr_mul(t);
    let b = t.tr_mul(col);
    let c = col.norm_squared();
    let objective = |x: &DVector<f64>| -> f64 {
        let gx = &gram * x;
        (x.dot(&gx) - 2.0 * b.dot(x) + c).max(0.0)
            + p.gamma1 * x.iter().map(|v| v.abs()).sum::<f64>()
    };
    let finish = |x: DVector<f64>| Spectrum::new(*init.grid(), init.n_pol(), x.as_slice().to_vec());

    let max_b = b.iter().copied().fold(0.0, f64::max);
    if p.gamma1 >= 2.0 * max_b {
        return finish(DVector::zeros(n));
    }
    if sigma_max <= 0.0 {
        return finish(DVector::from_iterator(
            n,
            init.values().iter().map(|v| v.max(0.0)),
        ));
    }

    let step = 1.0 / (2.0 * sigma_max * sigma_max);
    let shrink = step * p.gamma1;
    let mut x = DVector::from_iterator(n, init.values().iter().map(|v| v.max(0.0)));
    let mut best = x.clone();
    let mut best_obj = objective(&x);
    let mut y = x.clone();
    let mut t_k = 1.0f64;
    for _ in 0..p.max_iters {
        let grad = (&gram * &y - &b) * 2.0;
        let next = (&y - grad * step).map(|v| (v - shrink).max(0.0));
        let obj = objective(&next);
        if obj < best_obj {
            best_obj = obj;
            best.copy_from(&next);
        }
        let change = (&next - &x).norm();
        let scale = x.norm().max(f64::MIN_POSITIVE);
        let t_next = (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt()) / 2.0;
        y = &next + (&next - &x) * ((t_k - 1.0) / t_next);
        x = next;
        t_k = t_next;
        if change <= p.step_tol * scale {
            break;
        }
    }
    finish(best)
}

/// First half of the values belongs to polarization 0, second half to 1.
pub fn split_polarization(s: &Spectrum) -> Result<(Spectrum, Spectrum)> {
    if s.n_pol() != 2 || s.len() % 2 != 0 {
        return Err(Error::Dimension(format!(
            "split needs a dual-polarization spectrum, got n_pol = {} and length {}",
            s.n_pol(),
            s.len()
        )));
    }
    let half = s.len() / 2;
    Ok((
        Spectrum::new(*s.grid(), 1, s.values()[..half].to_vec())?,
        Spectrum::new(*s.grid(), 1, s.values()[half..].to_vec())?,
    ))
}
