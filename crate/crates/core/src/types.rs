//! Domain types shared by every stage: the wavelength axis, intensity
//! rasters, hyperspectral cubes, spectra and transmission matrices.
//!
//! Conventions fixed crate-wide:
//! - rasters are row-major (`data[y * width + x]`);
//! - polarization-major channel ordering: every channel of polarization 0,
//!   then every channel of polarization 1.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Discretized wavelength axis for one polarization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct SpectralGrid {
    lambda_start: f64,
    lambda_end: f64,
    delta_lambda: f64,
    n_channels: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    lambda_start: f64,
    lambda_end: f64,
    delta_lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_channels: Option<usize>,
}

impl TryFrom<RawGrid> for SpectralGrid {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        let grid = SpectralGrid::new(raw.lambda_start, raw.lambda_end, raw.delta_lambda)?;
        match raw.n_channels {
            Some(n) if n != grid.n_channels => Err(Error::OutOfRange(format!(
                "n_channels {n} disagrees with the span, which gives {}",
                grid.n_channels
            ))),
            _ => Ok(grid),
        }
    }
}

impl From<SpectralGrid> for RawGrid {
    fn from(g: SpectralGrid) -> Self {
        RawGrid {
            lambda_start: g.lambda_start,
            lambda_end: g.lambda_end,
            delta_lambda: g.delta_lambda,
            n_channels: Some(g.n_channels),
        }
    }
}

impl SpectralGrid {
    /// Grid spanning `[lambda_start, lambda_end]` (nm) in steps of `delta_lambda`.
    ///
    /// A single-channel grid is expressed with `lambda_end == lambda_start`.
    pub fn new(lambda_start: f64, lambda_end: f64, delta_lambda: f64) -> Result<Self> {
        if !(lambda_start.is_finite() && lambda_end.is_finite() && delta_lambda.is_finite()) {
            return Err(Error::OutOfRange("grid bounds must be finite".into()));
        }
        if delta_lambda <= 0.0 {
            return Err(Error::OutOfRange(format!(
                "delta_lambda must be positive, got {delta_lambda}"
            )));
        }
        if lambda_end < lambda_start {
            return Err(Error::OutOfRange(format!(
                "lambda_end {lambda_end} precedes lambda_start {lambda_start}"
            )));
        }
        let n_channels = ((lambda_end - lambda_start) / delta_lambda).round() as usize + 1;
        Ok(SpectralGrid {
            lambda_start,
            lambda_end,
            delta_lambda,
            n_channels,
        })
    }

    /// Grid of `n_channels` channels starting at `lambda_start`.
    pub fn with_channels(lambda_start: f64, delta_lambda: f64, n_channels: usize) -> Result<Self> {
        if n_channels == 0 {
            return Err(Error::OutOfRange(
                "a grid needs at least one channel".into(),
            ));
        }
        let end = lambda_start + (n_channels - 1) as f64 * delta_lambda;
        let grid = SpectralGrid::new(lambda_start, end, delta_lambda)?;
        debug_assert_eq!(grid.n_channels, n_channels);
        Ok(grid)
    }

    pub fn lambda_start(&self) -> f64 {
        self.lambda_start
    }

    pub fn lambda_end(&self) -> f64 {
        self.lambda_end
    }

    pub fn delta_lambda(&self) -> f64 {
        self.delta_lambda
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    /// Center wavelength of channel `k`.
    pub fn wavelength(&self, k: usize) -> f64 {
        self.lambda_start + k as f64 * self.delta_lambda
    }

    /// Channel whose center lies within half a step of `lambda`.
    pub fn channel_of(&self, lambda: f64) -> Option<usize> {
        let pos = (lambda - self.lambda_start) / self.delta_lambda;
        let k = pos.round();
        if k < 0.0 || k >= self.n_channels as f64 || (pos - k).abs() > 0.5 {
            return None;
        }
        Some(k as usize)
    }

    pub fn wavelengths(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_channels).map(move |k| self.wavelength(k))
    }
}

/// Nonnegative, finite intensity raster in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2D {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image2D {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width.checked_mul(height) != Some(data.len()) {
            return Err(Error::Dimension(format!(
                "{width}x{height} raster needs {} samples, got {}",
                width.saturating_mul(height),
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::OutOfRange(format!(
                "intensity at index {i} is {} (must be finite and >= 0)",
                data[i]
            )));
        }
        Ok(Image2D {
            width,
            height,
            data,
        })
    }

    /// Builds a raster from arbitrary samples, clamping negatives to zero.
    ///
    /// Non-finite samples are still rejected.
    pub fn from_clamped(width: usize, height: usize, mut data: Vec<f64>) -> Result<Self> {
        for v in &mut data {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Image2D::new(width, height, data)
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Image2D {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    /// `f(x, y)` evaluated at every pixel; negative results are clamped to zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                assert!(v.is_finite(), "non-finite intensity at ({x}, {y})");
                data.push(v.max(0.0));
            }
        }
        Image2D {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `(width, height)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// Every sample multiplied by a nonnegative factor.
    pub fn scaled(&self, factor: f64) -> Image2D {
        assert!(factor >= 0.0 && factor.is_finite());
        Image2D {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// Divides by the plane sum; fails on an all-zero plane.
    pub fn normalized_to_unit_sum(&self) -> Result<Image2D> {
        let s = self.sum();
        if s <= 0.0 {
            return Err(Error::Precondition(
                "cannot normalize a zero-sum plane".into(),
            ));
        }
        Ok(self.scaled(1.0 / s))
    }

    /// Divides by the plane maximum; an all-zero plane is returned unchanged.
    pub fn normalized_to_max(&self) -> Image2D {
        let m = self.max();
        if m > 0.0 {
            self.scaled(1.0 / m)
        } else {
            self.clone()
        }
    }

    /// Crop keeping the center pixel `(w/2, h/2)` at the center of the
    /// output (identity when the dims already match).
    pub fn center_crop(&self, width: usize, height: usize) -> Result<Image2D> {
        if width > self.width || height > self.height {
            return Err(Error::Dimension(format!(
                "cannot crop {}x{} to {width}x{height}",
                self.width, self.height
            )));
        }
        let x0 = self.width / 2 - width / 2;
        let y0 = self.height / 2 - height / 2;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            let row = (y + y0) * self.width + x0;
            data.extend_from_slice(&self.data[row..row + width]);
        }
        Ok(Image2D {
            width,
            height,
            data,
        })
    }

    /// Zero padding that puts this raster's center pixel at the center pixel
    /// of the larger frame. Inverse of [`Image2D::center_crop`].
    pub fn center_pad(&self, width: usize, height: usize) -> Result<Image2D> {
        if width < self.width || height < self.height {
            return Err(Error::Dimension(format!(
                "cannot pad {}x{} to {width}x{height}",
                self.width, self.height
            )));
        }
        let x0 = width / 2 - self.width / 2;
        let y0 = height / 2 - self.height / 2;
        let mut data = vec![0.0; width * height];
        for y in 0..self.height {
            let dst = (y + y0) * width + x0;
            data[dst..dst + self.width]
                .copy_from_slice(&self.data[y * self.width..(y + 1) * self.width]);
        }
        Ok(Image2D {
            width,
            height,
            data,
        })
    }
}

/// Reshape a raster into a column vector (row-major order).
pub fn image_to_column(img: &Image2D) -> Vec<f64> {
    img.data.clone()
}

/// Inverse of [`image_to_column`].
pub fn column_to_image(v: &[f64], dims: (usize, usize)) -> Result<Image2D> {
    Image2D::new(dims.0, dims.1, v.to_vec())
}

/// Object-plane intensity per (polarization, channel): one plane each, all
/// with the same dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperCube {
    grid: SpectralGrid,
    n_pol: usize,
    width: usize,
    height: usize,
    planes: Vec<Image2D>,
}

fn check_n_pol(n_pol: usize) -> Result<()> {
    if n_pol == 1 || n_pol == 2 {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!(
            "polarization count must be 1 or 2, got {n_pol}"
        )))
    }
}

impl HyperCube {
    /// `planes` in polarization-major order.
    pub fn new(grid: SpectralGrid, n_pol: usize, planes: Vec<Image2D>) -> Result<Self> {
        check_n_pol(n_pol)?;
        let expected = grid.n_channels() * n_pol;
        if planes.len() != expected {
            return Err(Error::Dimension(format!(
                "cube needs {expected} planes, got {}",
                planes.len()
            )));
        }
        let (width, height) = planes[0].dims();
        if let Some(i) = planes.iter().position(|p| p.dims() != (width, height)) {
            return Err(Error::Dimension(format!(
                "plane {i} is {}x{}, expected {width}x{height}",
                planes[i].width(),
                planes[i].height()
            )));
        }
        Ok(HyperCube {
            grid,
            n_pol,
            width,
            height,
            planes,
        })
    }

    pub fn zeros(grid: SpectralGrid, n_pol: usize, width: usize, height: usize) -> Result<Self> {
        let planes = vec![Image2D::zeros(width, height); grid.n_channels() * n_pol];
        HyperCube::new(grid, n_pol, planes)
    }

    /// Concatenates single-polarization cubes along the polarization axis.
    pub fn stack_polarizations(cubes: &[HyperCube]) -> Result<Self> {
        let first = cubes
            .first()
            .ok_or_else(|| Error::Precondition("no cubes to stack".into()))?;
        let mut planes = Vec::new();
        for c in cubes {
            if c.grid != first.grid || c.dims() != first.dims() {
                return Err(Error::Dimension(
                    "stacked cubes disagree in grid or dims".into(),
                ));
            }
            planes.extend(c.planes.iter().cloned());
        }
        let n_pol = cubes.iter().map(|c| c.n_pol).sum();
        HyperCube::new(first.grid, n_pol, planes)
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn n_pol(&self) -> usize {
        self.n_pol
    }

    pub fn n_channels(&self) -> usize {
        self.grid.n_channels()
    }

    /// `(width, height)` of every plane.
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Flat plane index for (polarization, channel).
    pub fn index(&self, pol: usize, channel: usize) -> usize {
        assert!(pol < self.n_pol && channel < self.grid.n_channels());
        pol * self.grid.n_channels() + channel
    }

    pub fn plane(&self, pol: usize, channel: usize) -> &Image2D {
        &self.planes[self.index(pol, channel)]
    }

    pub fn planes(&self) -> &[Image2D] {
        &self.planes
    }

    pub fn into_planes(self) -> Vec<Image2D> {
        self.planes
    }

    /// Single-polarization view.
    pub fn polarization(&self, pol: usize) -> Result<HyperCube> {
        if pol >= self.n_pol {
            return Err(Error::OutOfRange(format!("polarization {pol} not in cube")));
        }
        let n = self.grid.n_channels();
        HyperCube::new(self.grid, 1, self.planes[pol * n..(pol + 1) * n].to_vec())
    }

    /// Shape `(n_pol, n_channels, height, width)`.
    pub fn to_tensor(&self) -> Tensor {
        let mut data = Vec::with_capacity(self.planes.len() * self.width * self.height);
        for p in &self.planes {
            data.extend_from_slice(p.data());
        }
        Tensor::new(
            vec![self.n_pol, self.grid.n_channels(), self.height, self.width],
            data,
        )
        .expect("cube tensor dims are consistent")
    }

    pub fn from_tensor(grid: SpectralGrid, t: &Tensor) -> Result<Self> {
        let dims = t.dims();
        if dims.len() != 4 || dims[1] != grid.n_channels() {
            return Err(Error::Dimension(format!(
                "expected (n_pol, {}, height, width), got {dims:?}",
                grid.n_channels()
            )));
        }
        let (n_pol, h, w) = (dims[0], dims[2], dims[3]);
        let planes = t
            .data()
            .chunks_exact((h * w).max(1))
            .take(n_pol * grid.n_channels())
            .map(|c| Image2D::new(w, h, c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        HyperCube::new(grid, n_pol, planes)
    }
}

/// Per-channel intensities, polarization-major, length `n_channels * n_pol`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: SpectralGrid,
    n_pol: usize,
    values: Vec<f64>,
}

impl Spectrum {
    pub fn new(grid: SpectralGrid, n_pol: usize, values: Vec<f64>) -> Result<Self> {
        check_n_pol(n_pol)?;
        if values.len() != grid.n_channels() * n_pol {
            return Err(Error::Dimension(format!(
                "spectrum needs {} values, got {}",
                grid.n_channels() * n_pol,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("spectrum contains non-finite values".into()));
        }
        Ok(Spectrum {
            grid,
            n_pol,
            values,
        })
    }

    pub fn zeros(grid: SpectralGrid, n_pol: usize) -> Result<Self> {
        Spectrum::new(grid, n_pol, vec![0.0; grid.n_channels() * n_pol])
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn n_pol(&self) -> usize {
        self.n_pol
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self, pol: usize, channel: usize) -> f64 {
        self.values[pol * self.grid.n_channels() + channel]
    }

    /// Negative entries set to zero.
    pub fn clamped(&self) -> Spectrum {
        Spectrum {
            grid: self.grid,
            n_pol: self.n_pol,
            values: self.values.iter().map(|v| v.max(0.0)).collect(),
        }
    }

    /// Flat index of the largest entry (first on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Which axis the columns of a [`TransmissionMatrix`] run along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnAxis {
    /// One column per (polarization, channel); the T, T_c, T_e roles.
    Channels,
    /// One column per calibration scan step; the broad-linewidth T_b role.
    ScanSteps,
}

/// P x N matrix whose columns are reshaped speckle images.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionMatrix {
    grid: SpectralGrid,
    n_pol: usize,
    image_dims: (usize, usize),
    axis: ColumnAxis,
    matrix: DMatrix<f64>,
}

impl TransmissionMatrix {
    pub fn new(
        grid: SpectralGrid,
        n_pol: usize,
        image_dims: (usize, usize),
        axis: ColumnAxis,
        matrix: DMatrix<f64>,
    ) -> Result<Self> {
        check_n_pol(n_pol)?;
        let p = image_dims.0 * image_dims.1;
        if matrix.nrows() != p {
            return Err(Error::Dimension(format!(
                "matrix has {} rows but image dims {}x{} give {p} pixels",
                matrix.nrows(),
                image_dims.0,
                image_dims.1
            )));
        }
        match axis {
            ColumnAxis::Channels if matrix.ncols() != grid.n_channels() * n_pol => {
                return Err(Error::Dimension(format!(
                    "{} columns for {} channels x {n_pol} polarizations",
                    matrix.ncols(),
                    grid.n_channels()
                )))
            }
            ColumnAxis::ScanSteps if matrix.ncols() == 0 || n_pol != 1 => {
                return Err(Error::Dimension(
                    "scan matrices need at least one column and a single polarization".into(),
                ))
            }
            _ => {}
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "transmission matrix has non-finite entries".into(),
            ));
        }
        Ok(TransmissionMatrix {
            grid,
            n_pol,
            image_dims,
            axis,
            matrix,
        })
    }

    /// Columns given as raw vectors of length `width * height`.
    pub fn from_columns(
        grid: SpectralGrid,
        n_pol: usize,
        image_dims: (usize, usize),
        axis: ColumnAxis,
        columns: &[Vec<f64>],
    ) -> Result<Self> {
        let p = image_dims.0 * image_dims.1;
        if let Some(i) = columns.iter().position(|c| c.len() != p) {
            return Err(Error::Dimension(format!(
                "column {i} has length {}, expected {p}",
                columns[i].len()
            )));
        }
        let matrix = DMatrix::from_fn(p, columns.len(), |r, c| columns[c][r]);
        TransmissionMatrix::new(grid, n_pol, image_dims, axis, matrix)
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn n_pol(&self) -> usize {
        self.n_pol
    }

    pub fn image_dims(&self) -> (usize, usize) {
        self.image_dims
    }

    pub fn axis(&self) -> ColumnAxis {
        self.axis
    }

    pub fn n_pixels(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_columns(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn column(&self, n: usize) -> Vec<f64> {
        self.matrix.column(n).iter().copied().collect()
    }

    /// Shape `(P, columns)`.
    pub fn to_tensor(&self) -> Tensor {
        let (p, n) = self.matrix.shape();
        let data = (0..p)
            .flat_map(|r| (0..n).map(move |c| (r, c)))
            .map(|(r, c)| self.matrix[(r, c)])
            .collect();
        Tensor::new(vec![p, n], data).expect("matrix tensor dims are consistent")
    }

    pub fn sidecar(&self) -> TmSidecar {
        TmSidecar {
            grid: self.grid,
            n_pol: self.n_pol,
            width: self.image_dims.0,
            height: self.image_dims.1,
            axis: self.axis,
        }
    }

    pub fn from_tensor(t: &Tensor, sidecar: &TmSidecar) -> Result<Self> {
        let dims = t.dims();
        if dims.len() != 2 {
            return Err(Error::Dimension(format!(
                "expected a matrix, got dims {dims:?}"
            )));
        }
        let matrix = DMatrix::from_row_slice(dims[0], dims[1], t.data());
        TransmissionMatrix::new(
            sidecar.grid,
            sidecar.n_pol,
            (sidecar.width, sidecar.height),
            sidecar.axis,
            matrix,
        )
    }
}

/// JSON metadata stored next to a persisted transmission matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TmSidecar {
    pub grid: SpectralGrid,
    pub n_pol: usize,
    pub width: usize,
    pub height: usize,
    pub axis: ColumnAxis,
}

/// N x K matrix whose column k is the measured source spectrum of scan step k.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibSourceMatrix {
    grid: SpectralGrid,
    matrix: DMatrix<f64>,
}

impl CalibSourceMatrix {
    pub fn new(grid: SpectralGrid, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != grid.n_channels() || matrix.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "source matrix is {}x{}, needs {} rows and at least one column",
                matrix.nrows(),
                matrix.ncols(),
                grid.n_channels()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::OutOfRange(
                "source spectra must be finite and >= 0".into(),
            ));
        }
        if let Some(k) = (0..matrix.ncols()).find(|&k| matrix.column(k).sum() <= 0.0) {
            return Err(Error::OutOfRange(format!("scan step {k} emits no light")));
        }
        Ok(CalibSourceMatrix { grid, matrix })
    }

    /// Ideal narrow-line scan: one step per channel, all power in that channel.
    pub fn identity(grid: SpectralGrid) -> Self {
        let n = grid.n_channels();
        CalibSourceMatrix {
            grid,
            matrix: DMatrix::identity(n, n),
        }
    }

    /// One step per channel; each step is a Gaussian line of the given FWHM
    /// centered on that channel, sampled on the grid and normalized to unit sum.
    pub fn gaussian_lines(grid: SpectralGrid, fwhm_nm: f64) -> Result<Self> {
        if fwhm_nm <= 0.0 {
            return Ok(CalibSourceMatrix::identity(grid));
        }
        let n = grid.n_channels();
        let sigma = fwhm_nm / (8.0 * std::f64::consts::LN_2).sqrt();
        let mut m = DMatrix::from_fn(n, n, |row, col| {
            let d = grid.wavelength(row) - grid.wavelength(col);
            let w = (-0.5 * (d / sigma).powi(2)).exp();
            // Far tails are numerically zero anyway; dropping them keeps S_c banded.
            if w < 1e-12 {
                0.0
            } else {
                w
            }
        });
        for mut c in m.column_iter_mut() {
            let s = c.sum();
            c /= s;
        }
        CalibSourceMatrix::new(grid, m)
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n_steps(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn is_identity(&self) -> bool {
        self.matrix.is_square()
            && self.matrix == DMatrix::identity(self.matrix.nrows(), self.matrix.ncols())
    }

    /// Shape `(N, K)`.
    pub fn to_tensor(&self) -> Tensor {
        let (n, k) = self.matrix.shape();
        let data = (0..n)
            .flat_map(|r| (0..k).map(move |c| (r, c)))
            .map(|(r, c)| self.matrix[(r, c)])
            .collect();
        Tensor::new(vec![n, k], data).expect("source tensor dims are consistent")
    }

    pub fn from_tensor(grid: SpectralGrid, t: &Tensor) -> Result<Self> {
        let dims = t.dims();
        if dims.len() != 2 {
            return Err(Error::Dimension(format!("expected (N, K), got {dims:?}")));
        }
        CalibSourceMatrix::new(grid, DMatrix::from_row_slice(dims[0], dims[1], t.data()))
    }
}
