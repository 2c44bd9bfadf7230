//! Scene descriptions: binary shapes, spectral components and the named
//! desk-scale experiments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shapes::{disc, glyph, rect};
use crate::types::{HyperCube, Image2D, SpectralGrid, Spectrum};

/// A binary shape inside the object frame, offset from its center pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Disc {
        radius: f64,
        #[serde(default)]
        dx: f64,
        #[serde(default)]
        dy: f64,
    },
    Rect {
        width: usize,
        height: usize,
        #[serde(default)]
        dx: isize,
        #[serde(default)]
        dy: isize,
    },
    Glyph {
        ch: char,
        scale: usize,
    },
    /// Single pixel at the frame center.
    Point,
}

impl Shape {
    pub fn render(&self, dims: (usize, usize)) -> Result<Image2D> {
        let (w, h) = dims;
        let (cx, cy) = ((w / 2) as f64, (h / 2) as f64);
        let img = match self {
            Shape::Disc { radius, dx, dy } => disc(w, h, cx + dx, cy + dy, *radius),
            Shape::Rect {
                width,
                height,
                dx,
                dy,
            } => {
                let x0 = (w / 2) as isize - (*width / 2) as isize + dx;
                let y0 = (h / 2) as isize - (*height / 2) as isize + dy;
                if x0 < 0 || y0 < 0 || x0 as usize + width > w || y0 as usize + height > h {
                    return Err(Error::OutOfRange(format!(
                        "rectangle {width}x{height} at ({dx}, {dy}) leaves the {w}x{h} frame"
                    )));
                }
                let (x0, y0) = (x0 as usize, y0 as usize);
                rect(w, h, x0, y0, x0 + width, y0 + height)
            }
            Shape::Glyph { ch, scale } => glyph(*ch, w, h, *scale)?,
            Shape::Point => {
                let mut d = vec![0.0; w * h];
                d[(h / 2) * w + w / 2] = 1.0;
                Image2D::new(w, h, d)?
            }
        };
        if img.is_zero() {
            return Err(Error::OutOfRange(format!(
                "{self:?} is empty in a {w}x{h} frame"
            )));
        }
        Ok(img)
    }
}

/// A spectral line: Gaussian profile of the given FWHM (a single channel
/// when `fwhm_nm` is 0), peak `amplitude`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSpec {
    pub pol: usize,
    pub lambda_nm: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub fwhm_nm: f64,
    /// Overrides the scene mask for this component.
    #[serde(default)]
    pub shape: Option<Shape>,
}

impl LineSpec {
    fn profile(&self, grid: &SpectralGrid) -> Result<Vec<f64>> {
        let k = grid.channel_of(self.lambda_nm).ok_or_else(|| {
            Error::OutOfRange(format!("line at {} nm is off the grid", self.lambda_nm))
        })?;
        let mut out = vec![0.0; grid.n_channels()];
        if self.fwhm_nm <= 0.0 {
            out[k] = self.amplitude;
        } else {
            let sigma = self.fwhm_nm / (8.0 * std::f64::consts::LN_2).sqrt();
            for (j, lam) in grid.wavelengths().enumerate() {
                let v = (-(lam - self.lambda_nm).powi(2) / (2.0 * sigma * sigma)).exp();
                if v > 1e-6 {
                    out[j] = self.amplitude * v;
                }
            }
        }
        Ok(out)
    }
}

/// What the camera looks at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneSpec {
    /// Sum of spectral components, each with a shape.
    Lines { mask: Shape, lines: Vec<LineSpec> },
    /// One measurement per (polarization, channel): the mask lit in that
    /// channel only.
    Sweep { mask: Shape, amplitude: f64 },
}

/// Ground truth as component masks and per-measurement spectral weights.
/// Plane `i` of measurement `m` is `sum_c weights[m][c][i] * masks[c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub grid: SpectralGrid,
    pub n_pol: usize,
    pub masks: Vec<Image2D>,
    pub weights: Vec<Vec<Vec<f64>>>,
}

impl Scene {
    pub fn build(
        spec: &SceneSpec,
        grid: SpectralGrid,
        n_pol: usize,
        dims: (usize, usize),
    ) -> Result<Scene> {
        let n = grid.n_channels();
        match spec {
            SceneSpec::Sweep { mask, amplitude } => {
                if !(*amplitude > 0.0) {
                    return Err(Error::OutOfRange("sweep amplitude must be positive".into()));
                }
                let weights = (0..n * n_pol)
                    .map(|m| {
                        let mut w = vec![0.0; n * n_pol];
                        w[m] = *amplitude;
                        vec![w]
                    })
                    .collect();
                Ok(Scene {
                    grid,
                    n_pol,
                    masks: vec![mask.render(dims)?],
                    weights,
                })
            }
            SceneSpec::Lines { mask, lines } => {
                if lines.is_empty() {
                    return Err(Error::Precondition("scene has no spectral lines".into()));
                }
                let mut shapes: Vec<Shape> = vec![mask.clone()];
                let mut weights: Vec<Vec<f64>> = vec![vec![0.0; n * n_pol]];
                for line in lines {
                    if line.pol >= n_pol {
                        return Err(Error::OutOfRange(format!(
                            "line at {} nm uses polarization {} of {n_pol}",
                            line.lambda_nm, line.pol
                        )));
                    }
                    if !(line.amplitude >= 0.0) {
                        return Err(Error::OutOfRange("line amplitude must be >= 0".into()));
                    }
                    let shape = line.shape.clone().unwrap_or_else(|| mask.clone());
                    let c = match shapes.iter().position(|s| *s == shape) {
                        Some(c) => c,
                        None => {
                            shapes.push(shape);
                            weights.push(vec![0.0; n * n_pol]);
                            shapes.len() - 1
                        }
                    };
                    for (j, v) in line.profile(&grid)?.into_iter().enumerate() {
                        weights[c][line.pol * n + j] += v;
                    }
                }
                let masks = shapes
                    .iter()
                    .map(|s| s.render(dims))
                    .collect::<Result<_>>()?;
                Ok(Scene {
                    grid,
                    n_pol,
                    masks,
                    weights: vec![weights],
                })
            }
        }
    }

    pub fn n_measurements(&self) -> usize {
        self.weights.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.masks[0].dims()
    }

    pub fn object(&self, m: usize) -> Result<HyperCube> {
        let (w, h) = self.dims();
        let n = self.grid.n_channels() * self.n_pol;
        let planes = (0..n)
            .map(|i| {
                let mut acc = vec![0.0; w * h];
                for (mask, wv) in self.masks.iter().zip(&self.weights[m]) {
                    if wv[i] != 0.0 {
                        for (a, v) in acc.iter_mut().zip(mask.data()) {
                            *a += wv[i] * v;
                        }
                    }
                }
                Image2D::new(w, h, acc)
            })
            .collect::<Result<Vec<_>>>()?;
        HyperCube::new(self.grid, self.n_pol, planes)
    }

    /// Per-channel object energy in units of the calibration aperture's
    /// energy; this is what a consistent TM recovers.
    pub fn truth_spectrum(&self, m: usize, aperture_sum: f64) -> Result<Spectrum> {
        let n = self.grid.n_channels() * self.n_pol;
        let values = (0..n)
            .map(|i| {
                self.masks
                    .iter()
                    .zip(&self.weights[m])
                    .map(|(mask, wv)| wv[i] * mask.sum())
                    .sum::<f64>()
                    / aperture_sum
            })
            .collect();
        Spectrum::new(self.grid, self.n_pol, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_accumulate_into_components() {
        let grid = SpectralGrid::with_channels(500.0, 2.0, 8).unwrap();
        let spec = SceneSpec::Lines {
            mask: Shape::Disc {
                radius: 2.0,
                dx: 0.0,
                dy: 0.0,
            },
            lines: vec![
                LineSpec {
                    pol: 0,
                    lambda_nm: 504.0,
                    amplitude: 2.0,
                    fwhm_nm: 0.0,
                    shape: None,
                },
                LineSpec {
                    pol: 1,
                    lambda_nm: 510.0,
                    amplitude: 1.0,
                    fwhm_nm: 0.0,
                    shape: Some(Shape::Point),
                },
            ],
        };
        let scene = Scene::build(&spec, grid, 2, (8, 8)).unwrap();
        assert_eq!(scene.masks.len(), 2);
        let obj = scene.object(0).unwrap();
        assert_eq!(obj.plane(0, 2).sum(), 2.0 * scene.masks[0].sum());
        assert_eq!(obj.plane(1, 5).get(4, 4), 1.0);
        let truth = scene.truth_spectrum(0, scene.masks[0].sum()).unwrap();
        assert_eq!(truth.value(0, 2), 2.0);
        assert!((truth.value(1, 5) - 1.0 / scene.masks[0].sum()).abs() < 1e-15);
    }

    #[test]
    fn sweep_lights_one_plane_per_measurement() {
        let grid = SpectralGrid::with_channels(500.0, 2.0, 3).unwrap();
        let spec = SceneSpec::Sweep {
            mask: Shape::Point,
            amplitude: 1.0,
        };
        let scene = Scene::build(&spec, grid, 2, (5, 5)).unwrap();
        assert_eq!(scene.n_measurements(), 6);
        let obj = scene.object(4).unwrap();
        assert_eq!(obj.planes().iter().filter(|p| !p.is_zero()).count(), 1);
        assert!(!obj.plane(1, 1).is_zero());
    }

    #[test]
    fn shapes_must_fit() {
        assert!(Shape::Rect {
            width: 4,
            height: 4,
            dx: 3,
            dy: 0
        }
        .render((6, 6))
        .is_err());
        assert!(Shape::Glyph { ch: 'H', scale: 2 }.render((12, 16)).is_ok());
    }
}
