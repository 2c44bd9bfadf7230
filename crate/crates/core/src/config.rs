//! JSON run configuration and the named desk-scale presets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calib::PsfCorrection;
use crate::emulate::RefineConfig;
use crate::error::{Error, Result};
use crate::image::{PreprocParams, WienerParams};
use crate::recover::{L1Params, PinvPolicy};
use crate::scenario::{LineSpec, SceneSpec, Shape};
use crate::simulate::{NoiseParams, SimParams};
use crate::types::SpectralGrid;

fn default_background_frac() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    /// Calibration aperture, drawn in the object frame.
    pub aperture: Shape,
    /// Object frame; also the window kept from each deconvolution.
    pub object_dims: (usize, usize),
    /// FWHM of the calibration source line; 0 is an ideal narrow line.
    #[serde(default)]
    pub linewidth_nm: f64,
    /// Detector SNR during calibration scans; absent means noiseless.
    #[serde(default)]
    pub calib_snr_db: Option<f64>,
    #[serde(default)]
    pub psf_correction: PsfCorrection,
    #[serde(default = "default_background_frac")]
    pub background_frac: f64,
    pub scene: SceneSpec,
    /// Also write a color composite.
    #[serde(default)]
    pub color: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub sim: SimParams,
    /// Measurement noise; absent means noiseless.
    #[serde(default)]
    pub noise: Option<NoiseParams>,
    /// Speckle conditioning; absent means raw frames are used directly.
    #[serde(default)]
    pub preproc: Option<PreprocParams>,
    /// Absent picks the size-dependent default.
    #[serde(default)]
    pub pinv: Option<PinvPolicy>,
    /// Absent disables the L1 refinement.
    #[serde(default)]
    pub l1: Option<L1Params>,
    #[serde(default)]
    pub wiener: WienerParams,
    #[serde(default)]
    pub refine: RefineConfig,
    pub scenario: ScenarioSpec,
}

fn check(ok: bool, path: &str, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(path, msg()))
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Config> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Config> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Field-level validation; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        let s = &self.sim;
        check(s.psf_dims.0 > 0 && s.psf_dims.1 > 0, "sim.psf_dims", || {
            "dimensions must be nonzero".into()
        })?;
        check(s.n_pol == 1 || s.n_pol == 2, "sim.n_pol", || {
            format!("must be 1 or 2, got {}", s.n_pol)
        })?;
        check(
            (0.0..1.0).contains(&s.spectral_corr),
            "sim.spectral_corr",
            || format!("must lie in [0, 1), got {}", s.spectral_corr),
        )?;
        check(
            s.grain_sigma > 0.0 && s.grain_sigma.is_finite(),
            "sim.grain_sigma",
            || format!("must be positive, got {}", s.grain_sigma),
        )?;
        check(
            s.envelope_sigma > 0.0 && s.envelope_sigma.is_finite(),
            "sim.envelope_sigma",
            || format!("must be positive, got {}", s.envelope_sigma),
        )?;
        if let Some(n) = &self.noise {
            check(n.snr_db.is_finite(), "noise.snr_db", || {
                "must be finite".into()
            })?;
        }
        if let Some(p) = &self.preproc {
            p.validate()
                .map_err(|e| Error::config("preproc", e.to_string()))?;
        }
        if let Some(p) = &self.pinv {
            check((0.0..1.0).contains(&p.rel_floor), "pinv.rel_floor", || {
                format!("must lie in [0, 1), got {}", p.rel_floor)
            })?;
        }
        if let Some(p) = &self.l1 {
            check(p.gamma1 >= 0.0 && p.gamma1.is_finite(), "l1.gamma1", || {
                format!("must be >= 0, got {}", p.gamma1)
            })?;
            check(p.max_iters >= 1, "l1.max_iters", || "must be >= 1".into())?;
            check(p.step_tol > 0.0, "l1.step_tol", || "must be > 0".into())?;
        }
        check(
            self.wiener.nsr >= 0.0 && self.wiener.nsr.is_finite(),
            "wiener.nsr",
            || format!("must be >= 0, got {}", self.wiener.nsr),
        )?;
        check(self.refine.rounds >= 1, "refine.rounds", || {
            "must be >= 1".into()
        })?;

        let sc = &self.scenario;
        let (ow, oh) = sc.object_dims;
        check(
            ow > 0 && oh > 0 && ow <= s.psf_dims.0 && oh <= s.psf_dims.1,
            "scenario.object_dims",
            || format!("must be nonzero and fit the {:?} PSF frame", s.psf_dims),
        )?;
        check(sc.linewidth_nm >= 0.0, "scenario.linewidth_nm", || {
            "must be >= 0".into()
        })?;
        if let Some(v) = sc.calib_snr_db {
            check(v.is_finite(), "scenario.calib_snr_db", || {
                "must be finite".into()
            })?;
        }
        check(
            (0.0..1.0).contains(&sc.background_frac),
            "scenario.background_frac",
            || "must lie in [0, 1)".into(),
        )?;
        sc.aperture
            .render(sc.object_dims)
            .map_err(|e| Error::config("scenario.aperture", e.to_string()))?;
        crate::scenario::Scene::build(&sc.scene, s.grid, s.n_pol, sc.object_dims)
            .map_err(|e| Error::config("scenario.scene", e.to_string()))?;
        Ok(())
    }

    /// Replace every seed.
    pub fn with_seed(mut self, seed: u64) -> Config {
        self.sim.seed = seed;
        if let Some(n) = &mut self.noise {
            n.seed = seed;
        }
        self
    }

    pub fn pinv_policy(&self) -> PinvPolicy {
        self.pinv
            .unwrap_or_else(|| PinvPolicy::for_columns(self.sim.grid.n_channels() * self.sim.n_pol))
    }
}

/// Names accepted by [`preset`].
pub const PRESETS: &[&str] = &[
    "matched-aperture",
    "single-channel-sweep",
    "dual-pol-sparse",
    "snr-complex",
    "l1-sparse",
    "mismatch-hust",
    "broad-linewidth",
];

fn grid(start: f64, n: usize) -> SpectralGrid {
    SpectralGrid::with_channels(start, 2.0, n).expect("preset grid")
}

fn disc(radius: f64) -> Shape {
    Shape::Disc {
        radius,
        dx: 0.0,
        dy: 0.0,
    }
}

fn line(pol: usize, lambda_nm: f64, amplitude: f64) -> LineSpec {
    LineSpec {
        pol,
        lambda_nm,
        amplitude,
        fwhm_nm: 0.0,
        shape: None,
    }
}

/// The desk-scale experiments.
#[allow(clippy::approx_constant)]
pub fn preset(name: &str) -> Option<Config> {
    let dual_pol_sim = SimParams {
        seed: 7,
        psf_dims: (96, 96),
        grid: grid(400.0, 126),
        n_pol: 2,
        grain_sigma: 1.0,
        spectral_corr: 0.7071,
        envelope_sigma: 24.0,
    };
    let base = Config {
        sim: dual_pol_sim.clone(),
        noise: Some(NoiseParams {
            snr_db: 30.0,
            seed: 11,
        }),
        preproc: None,
        pinv: None,
        l1: None,
        wiener: WienerParams { nsr: 1e-5 },
        refine: RefineConfig::default(),
        scenario: ScenarioSpec {
            name: name.to_string(),
            aperture: disc(4.0),
            object_dims: (12, 12),
            linewidth_nm: 0.0,
            calib_snr_db: None,
            psf_correction: PsfCorrection::Auto,
            background_frac: 0.05,
            scene: SceneSpec::Sweep {
                mask: disc(4.0),
                amplitude: 1.0,
            },
            color: false,
        },
    };
    let cfg = match name {
        "matched-aperture" => Config {
            sim: SimParams {
                seed: 3,
                psf_dims: (128, 128),
                grid: grid(500.0, 32),
                n_pol: 1,
                grain_sigma: 1.0,
                spectral_corr: 0.7071,
                envelope_sigma: 32.0,
            },
            noise: None,
            pinv: Some(PinvPolicy::EXACT),
            scenario: ScenarioSpec {
                object_dims: (16, 16),
                aperture: disc(5.0),
                scene: SceneSpec::Lines {
                    mask: disc(5.0),
                    lines: vec![
                        LineSpec {
                            fwhm_nm: 8.0,
                            ..line(0, 520.0, 1.0)
                        },
                        line(0, 540.0, 0.6),
                        LineSpec {
                            fwhm_nm: 4.0,
                            ..line(0, 552.0, 0.8)
                        },
                    ],
                },
                ..base.scenario.clone()
            },
            ..base.clone()
        },
        "single-channel-sweep" => base.clone(),
        "dual-pol-sparse" => Config {
            scenario: ScenarioSpec {
                scene: SceneSpec::Lines {
                    mask: disc(4.0),
                    lines: vec![
                        line(0, 450.0, 1.0),
                        line(0, 560.0, 0.8),
                        line(1, 620.0, 0.9),
                    ],
                },
                color: true,
                ..base.scenario.clone()
            },
            ..base.clone()
        },
        "snr-complex" => Config {
            scenario: ScenarioSpec {
                scene: SceneSpec::Lines {
                    mask: disc(4.0),
                    lines: vec![
                        LineSpec {
                            fwhm_nm: 40.0,
                            ..line(0, 520.0, 0.4)
                        },
                        line(0, 440.0, 1.0),
                        line(0, 600.0, 0.9),
                        LineSpec {
                            fwhm_nm: 30.0,
                            ..line(1, 560.0, 0.3)
                        },
                        line(1, 470.0, 0.8),
                        line(1, 630.0, 1.0),
                    ],
                },
                ..base.scenario.clone()
            },
            ..base.clone()
        },
        "l1-sparse" => Config {
            l1: Some(L1Params::default()),
            scenario: ScenarioSpec {
                scene: SceneSpec::Lines {
                    mask: disc(4.0),
                    lines: vec![
                        line(0, 450.0, 1.0),
                        line(0, 560.0, 0.8),
                        line(1, 620.0, 0.9),
                    ],
                },
                ..base.scenario.clone()
            },
            ..base.clone()
        },
        "mismatch-hust" => Config {
            refine: RefineConfig { rounds: 3 },
            scenario: ScenarioSpec {
                aperture: disc(4.0),
                object_dims: (16, 16),
                scene: SceneSpec::Lines {
                    mask: Shape::Disc {
                        radius: 4.0,
                        dx: 3.0,
                        dy: 0.0,
                    },
                    lines: vec![
                        line(0, 450.0, 1.0),
                        line(0, 560.0, 0.8),
                        line(1, 620.0, 0.9),
                    ],
                },
                ..base.scenario.clone()
            },
            ..base.clone()
        },
        "broad-linewidth" => Config {
            sim: SimParams {
                seed: 5,
                psf_dims: (64, 64),
                grid: grid(500.0, 32),
                n_pol: 1,
                grain_sigma: 1.0,
                spectral_corr: 0.7071,
                envelope_sigma: 16.0,
            },
            noise: None,
            pinv: Some(PinvPolicy::EXACT),
            scenario: ScenarioSpec {
                linewidth_nm: 2.0,
                object_dims: (8, 8),
                aperture: disc(3.0),
                scene: SceneSpec::Lines {
                    mask: disc(3.0),
                    lines: vec![line(0, 520.0, 1.0), line(0, 540.0, 0.5)],
                },
                ..base.scenario.clone()
            },
            ..base.clone()
        },
        _ => return None,
    };
    Some(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            assert_eq!(Config::from_json(&cfg.to_json()).unwrap(), cfg, "{name}");
        }
        assert!(preset("nope").is_none());
    }

    #[test]
    fn bad_spectral_corr_names_the_field() {
        let mut v: serde_json::Value =
            serde_json::from_str(&preset("matched-aperture").unwrap().to_json()).unwrap();
        v["sim"]["spectral_corr"] = serde_json::json!(1.2);
        match Config::from_json(&v.to_string()) {
            Err(Error::Config { path, .. }) => assert!(path.contains("spectral_corr"), "{path}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let mut v: serde_json::Value =
            serde_json::from_str(&preset("matched-aperture").unwrap().to_json()).unwrap();
        v["wiener"]["bogus"] = serde_json::json!(1);
        match Config::from_json(&v.to_string()) {
            Err(Error::Config { path, msg }) => {
                assert!(path.starts_with("wiener"), "{path}");
                assert!(msg.contains("bogus"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }
}
