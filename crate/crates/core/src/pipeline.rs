//! End-to-end runs: simulate, calibrate, recover, image, evaluate, and the
//! on-disk artifacts that connect the stages.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calib::{build_tb, calibrate_psfs, correct_linewidth, synthesize_scan, CalibScan};
use crate::config::Config;
use crate::emulate::{cascade_polarization, refine_with_solver, RoundLog, SolverConfig};
use crate::error::{Error, Result, StageExt};
use crate::image::{preprocess, ImagingParams};
use crate::io::{self, MetricRow};
use crate::metrics::{compose_color, psnr, spectral_correlation, ssim};
use crate::recover::{residual, PinvInfo, PinvPolicy, SpectralSolver};
use crate::scenario::{Scene, SceneSpec};
use crate::simulate::{add_noise, gen_psf_set, ForwardModel, NoiseParams};
use crate::tensor::Tensor;
use crate::types::{CalibSourceMatrix, HyperCube, Image2D, Spectrum, TransmissionMatrix};

/// Offset separating calibration-noise seeds from measurement-noise seeds.
const CALIB_SEED_OFFSET: u64 = 1 << 32;

/// Everything the simulated bench records.
#[derive(Debug, Clone, PartialEq)]
pub struct SimArtifacts {
    /// Ground-truth PSFs.
    pub psfs: HyperCube,
    /// Aperture scans, one per polarization.
    pub calib_scans: Vec<CalibScan>,
    /// Point-object scans, one per polarization.
    pub pinhole_scans: Vec<CalibScan>,
    pub scene: Scene,
    /// Raw camera frames, one per measurement.
    pub measurements: Vec<Image2D>,
    pub warnings: Vec<String>,
}

fn noisy_scan(scan: CalibScan, snr_db: Option<f64>, seed: u64) -> Result<CalibScan> {
    match snr_db {
        None => Ok(scan),
        Some(snr_db) => {
            let speckles = scan
                .speckles()
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    add_noise(
                        s,
                        &NoiseParams {
                            snr_db,
                            seed: seed.wrapping_add(k as u64),
                        },
                    )
                })
                .collect();
            CalibScan::new(speckles, scan.source().clone(), scan.pol())
        }
    }
}

fn noise_seed(cfg: &Config) -> u64 {
    cfg.noise.map_or(cfg.sim.seed, |n| n.seed)
}

pub fn simulate(cfg: &Config) -> Result<SimArtifacts> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    if let Err(e) = cfg.sim.check_channel_continuity(cfg.scenario.linewidth_nm) {
        warnings.push(e.to_string());
    }
    let psfs = gen_psf_set(&cfg.sim)?;
    let grid = cfg.sim.grid;
    let source = CalibSourceMatrix::gaussian_lines(grid, cfg.scenario.linewidth_nm)?;
    let aperture = cfg.scenario.aperture.render(cfg.scenario.object_dims)?;
    let point = Image2D::new(1, 1, vec![1.0])?;
    let base = noise_seed(cfg).wrapping_add(CALIB_SEED_OFFSET);
    let mut calib_scans = Vec::new();
    let mut pinhole_scans = Vec::new();
    for pol in 0..cfg.sim.n_pol {
        let k = source.n_steps() as u64;
        let scan = synthesize_scan(&psfs, pol, &aperture, &source)?;
        calib_scans.push(noisy_scan(
            scan,
            cfg.scenario.calib_snr_db,
            base + 2 * pol as u64 * k,
        )?);
        let scan = synthesize_scan(&psfs, pol, &point, &source)?;
        pinhole_scans.push(noisy_scan(
            scan,
            cfg.scenario.calib_snr_db,
            base + (2 * pol as u64 + 1) * k,
        )?);
    }

    let scene = Scene::build(
        &cfg.scenario.scene,
        grid,
        cfg.sim.n_pol,
        cfg.scenario.object_dims,
    )?;
    let model = ForwardModel::new(&psfs, scene.dims())?;
    let measurements = (0..scene.n_measurements())
        .into_par_iter()
        .map(|m| {
            let per_pol = model.image(&scene.object(m)?)?;
            let clean = crate::simulate::sum_images(&per_pol)?;
            Ok(match cfg.noise {
                Some(n) => add_noise(
                    &clean,
                    &NoiseParams {
                        snr_db: n.snr_db,
                        seed: n.seed.wrapping_add(m as u64),
                    },
                ),
                None => clean,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimArtifacts {
        psfs,
        calib_scans,
        pinhole_scans,
        scene,
        measurements,
        warnings,
    })
}

/// Calibrated system model.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub solver: SpectralSolver,
    /// PSFs calibrated from the point scans, used for deconvolution.
    pub psfs: HyperCube,
    /// Conditioning of `S_c` when a linewidth correction was applied.
    pub source_info: Option<PinvInfo>,
    pub warnings: Vec<String>,
}

impl Calibration {
    pub fn tc(&self) -> &TransmissionMatrix {
        self.solver.tm()
    }
}

pub fn calibrate(cfg: &Config, sim: &SimArtifacts) -> Result<Calibration> {
    calibrate_scans(cfg, &sim.calib_scans, &sim.pinhole_scans)
}

pub fn calibrate_scans(
    cfg: &Config,
    calib: &[CalibScan],
    pinhole: &[CalibScan],
) -> Result<Calibration> {
    if calib.len() != cfg.sim.n_pol || pinhole.len() != cfg.sim.n_pol {
        return Err(Error::Dimension(
            "one calibration scan per polarization is required".into(),
        ));
    }
    let mut warnings = Vec::new();
    let mut source_info = None;
    let mut tcs = Vec::new();
    for scan in calib {
        let scan = match &cfg.preproc {
            Some(p) => scan.map_speckles(|s| preprocess(s, p))?,
            None => scan.clone(),
        };
        let corr = correct_linewidth(&build_tb(&scan)?, scan.source(), PinvPolicy::EXACT)?;
        if let Some(w) = corr.warning {
            warnings.push(format!("polarization {}: {w}", scan.pol()));
        }
        source_info = corr.info;
        tcs.push(corr.tc);
    }
    let tc = if tcs.len() == 2 {
        cascade_polarization(&tcs[0], &tcs[1])?
    } else {
        tcs.pop().expect("one polarization")
    };
    let planes = pinhole
        .iter()
        .map(|scan| calibrate_psfs(scan, cfg.scenario.psf_correction))
        .collect::<Result<Vec<_>>>()?;
    let psfs = HyperCube::stack_polarizations(&planes)?;
    let solver = SpectralSolver::new(&tc, cfg.pinv_policy())?;
    Ok(Calibration {
        solver,
        psfs,
        source_info,
        warnings,
    })
}

fn solver_config(cfg: &Config) -> SolverConfig {
    SolverConfig {
        pinv: cfg.pinv_policy(),
        l1: cfg.l1,
        imaging: ImagingParams {
            wiener: cfg.wiener,
            background_frac: cfg.scenario.background_frac,
        },
        preproc: cfg.preproc,
        roi: cfg.scenario.object_dims,
    }
}

/// Result of reconstructing one camera frame.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    /// Final spectrum (after L1 and refinement when enabled).
    pub spectrum: Spectrum,
    /// Plain clamped pseudoinverse solution with `T_c`.
    pub svd_spectrum: Spectrum,
    pub on: HyperCube,
    pub od: HyperCube,
    pub best_round: usize,
    pub rounds: Vec<RoundLog>,
}

pub fn reconstruct(
    cfg: &Config,
    cal: &Calibration,
    frame: &Image2D,
    truth: Option<&Spectrum>,
) -> Result<Reconstruction> {
    let scfg = solver_config(cfg);
    let out = refine_with_solver(
        &cal.solver,
        &cal.psfs,
        frame,
        cfg.refine.rounds,
        &scfg,
        truth,
    )?;
    let svd_spectrum = if cfg.l1.is_none() && out.best_round == 1 {
        out.spectrum.clone()
    } else {
        let measured = match &cfg.preproc {
            Some(p) => preprocess(frame, p)?,
            None => frame.clone(),
        };
        cal.solver.recover(&measured)?
    };
    Ok(Reconstruction {
        spectrum: out.spectrum,
        svd_spectrum,
        on: out.on,
        od: out.od,
        best_round: out.best_round,
        rounds: out.rounds,
    })
}

/// Per-measurement evaluation against the simulated truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementMetrics {
    pub spectral_correlation: Option<f64>,
    pub svd_correlation: Option<f64>,
    /// Share of recovered energy in channels where the truth is zero.
    pub background_fraction: Option<f64>,
    pub svd_background_fraction: Option<f64>,
    pub residual: f64,
    /// Flat index of the brightest recovered channel.
    pub argmax: usize,
    pub truth_argmax: usize,
    /// `(flat channel index, ssim_od, ssim_on, psnr_od, psnr_on)` for every
    /// channel where the truth object is nonzero.
    pub channels: Vec<ChannelMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMetrics {
    pub index: usize,
    pub ssim_od: f64,
    pub ssim_on: f64,
    pub psnr_od: f64,
    pub psnr_on: f64,
}

fn background_fraction(s: &Spectrum, truth: &Spectrum) -> Option<f64> {
    let total: f64 = s.values().iter().sum();
    if total <= 0.0 {
        return None;
    }
    let bg: f64 = s
        .values()
        .iter()
        .zip(truth.values())
        .filter(|(_, &t)| t == 0.0)
        .map(|(v, _)| v)
        .sum();
    Some(bg / total)
}

fn unit_sum(img: &Image2D) -> Image2D {
    img.normalized_to_unit_sum().unwrap_or_else(|_| img.clone())
}

/// Channel images are compared at equal energy: every plane is scaled to
/// unit sum first.
pub fn evaluate(
    cfg: &Config,
    cal: &Calibration,
    frame: &Image2D,
    truth_cube: &HyperCube,
    truth: &Spectrum,
    rec: &Reconstruction,
) -> Result<MeasurementMetrics> {
    let measured = match &cfg.preproc {
        Some(p) => preprocess(frame, p)?,
        None => frame.clone(),
    };
    let channels = truth_cube
        .planes()
        .par_iter()
        .enumerate()
        .filter(|(_, p)| !p.is_zero())
        .map(|(i, plane)| {
            let t = unit_sum(plane);
            let od = unit_sum(&rec.od.planes()[i]);
            let on = unit_sum(&rec.on.planes()[i]);
            Ok(ChannelMetrics {
                index: i,
                ssim_od: ssim(&od, &t)?,
                ssim_on: ssim(&on, &t)?,
                psnr_od: psnr(&od, &t)?.db(),
                psnr_on: psnr(&on, &t)?.db(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasurementMetrics {
        spectral_correlation: spectral_correlation(&rec.spectrum, truth).ok(),
        svd_correlation: spectral_correlation(&rec.svd_spectrum, truth).ok(),
        background_fraction: background_fraction(&rec.spectrum, truth),
        svd_background_fraction: background_fraction(&rec.svd_spectrum, truth),
        residual: residual(cal.tc(), &measured, &rec.svd_spectrum)?,
        argmax: rec.spectrum.argmax(),
        truth_argmax: truth.argmax(),
        channels,
    })
}

/// Summary written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    pub n_measurements: usize,
    pub n_columns: usize,
    pub tc_rank: usize,
    pub tc_condition: f64,
    pub warnings: Vec<String>,
    /// Mean over measurements of the spectral correlation.
    pub spectral_correlation: Option<f64>,
    pub argmax_accuracy: f64,
    /// Mean over measurements and object channels.
    pub mean_ssim_od: Option<f64>,
    pub mean_ssim_on: Option<f64>,
    pub refine_rounds: Vec<RoundLog>,
    pub best_round: usize,
}

/// A complete in-memory run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub sim: SimArtifacts,
    pub calibration: Calibration,
    pub reconstructions: Vec<Reconstruction>,
    pub truths: Vec<Spectrum>,
    pub metrics: Vec<MeasurementMetrics>,
    pub report: Report,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

pub fn run(cfg: &Config) -> Result<RunResult> {
    let sim = simulate(cfg).stage("simulate")?;
    run_on(cfg, sim)
}

/// Everything after simulation.
pub fn run_on(cfg: &Config, sim: SimArtifacts) -> Result<RunResult> {
    let cal = calibrate(cfg, &sim).stage("calibrate")?;
    let aperture_sum = cfg
        .scenario
        .aperture
        .render(cfg.scenario.object_dims)?
        .sum();
    let sweep = matches!(cfg.scenario.scene, SceneSpec::Sweep { .. });
    let per_measurement = |m: usize| -> Result<(Spectrum, Reconstruction, MeasurementMetrics)> {
        let truth = sim.scene.truth_spectrum(m, aperture_sum)?;
        let frame = &sim.measurements[m];
        let rec = reconstruct(cfg, &cal, frame, Some(&truth)).stage("reconstruct")?;
        let cube = sim.scene.object(m)?;
        let met = evaluate(cfg, &cal, frame, &cube, &truth, &rec).stage("evaluate")?;
        Ok((truth, rec, met))
    };
    let results = if sweep {
        (0..sim.measurements.len())
            .into_par_iter()
            .map(per_measurement)
            .collect::<Result<Vec<_>>>()?
    } else {
        (0..sim.measurements.len())
            .map(per_measurement)
            .collect::<Result<Vec<_>>>()?
    };
    let mut truths = Vec::new();
    let mut reconstructions = Vec::new();
    let mut metrics = Vec::new();
    for (t, r, m) in results {
        truths.push(t);
        reconstructions.push(r);
        metrics.push(m);
    }
    let mut warnings = sim.warnings.clone();
    warnings.extend(cal.warnings.iter().cloned());
    let info = cal.solver.info();
    let correct = metrics
        .iter()
        .filter(|m| m.argmax == m.truth_argmax)
        .count();
    let report = Report {
        scenario: cfg.scenario.name.clone(),
        n_measurements: metrics.len(),
        n_columns: cal.tc().n_columns(),
        tc_rank: info.rank,
        tc_condition: info.condition,
        warnings,
        spectral_correlation: mean(metrics.iter().filter_map(|m| m.spectral_correlation)),
        argmax_accuracy: correct as f64 / metrics.len().max(1) as f64,
        mean_ssim_od: mean(
            metrics
                .iter()
                .flat_map(|m| m.channels.iter().map(|c| c.ssim_od)),
        ),
        mean_ssim_on: mean(
            metrics
                .iter()
                .flat_map(|m| m.channels.iter().map(|c| c.ssim_on)),
        ),
        refine_rounds: reconstructions
            .first()
            .map(|r| r.rounds.clone())
            .unwrap_or_default(),
        best_round: reconstructions.first().map_or(1, |r| r.best_round),
    };
    Ok(RunResult {
        sim,
        calibration: cal,
        reconstructions,
        truths,
        metrics,
        report,
    })
}

// ---------------------------------------------------------------------------
// Artifacts on disk

pub const PSFS_FILE: &str = "psfs.htm";
pub const MEASUREMENTS_FILE: &str = "measurements.htm";
pub const SCENE_MASKS_FILE: &str = "scene_masks.htm";
pub const SCENE_WEIGHTS_FILE: &str = "scene_weights.htm";
pub const TC_FILE: &str = "tc.htm";
pub const CALIBRATED_PSFS_FILE: &str = "psfs_calibrated.htm";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn calib_file(pol: usize) -> String {
    format!("calib_pol{pol}.htm")
}

pub fn pinhole_file(pol: usize) -> String {
    format!("pinhole_pol{pol}.htm")
}

pub fn source_file(pol: usize) -> String {
    format!("source_pol{pol}.htm")
}

fn images_tensor(images: &[Image2D]) -> Result<Tensor> {
    let (w, h) = images.first().map_or((0, 0), |i| i.dims());
    let data = images
        .iter()
        .flat_map(|i| i.data().iter().copied())
        .collect();
    Tensor::new(vec![images.len(), h, w], data)
}

fn images_from_tensor(t: &Tensor) -> Result<Vec<Image2D>> {
    let d = t.dims();
    if d.len() != 3 {
        return Err(Error::Dimension(format!(
            "expected (count, height, width), got {d:?}"
        )));
    }
    let (n, h, w) = (d[0], d[1], d[2]);
    (0..n)
        .map(|i| Image2D::new(w, h, t.data()[i * w * h..(i + 1) * w * h].to_vec()))
        .collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub seeds: BTreeMap<String, u64>,
    pub config: Config,
    /// File name to SHA-256 of its contents.
    pub files: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn hash_all(dir: &Path, names: &[String]) -> Result<BTreeMap<String, String>> {
    names
        .iter()
        .map(|n| Ok((n.clone(), sha256_file(&dir.join(n))?)))
        .collect()
}

/// Writes the simulation artifacts plus `manifest.json`.
pub fn write_sim_artifacts(dir: &Path, cfg: &Config, sim: &SimArtifacts) -> Result<Manifest> {
    ensure_dir(dir)?;
    let mut names = Vec::new();
    let mut put = |name: String, t: Tensor| -> Result<()> {
        t.write(dir.join(&name))?;
        names.push(name);
        Ok(())
    };
    put(PSFS_FILE.into(), sim.psfs.to_tensor())?;
    for (pol, (scan, pin)) in sim.calib_scans.iter().zip(&sim.pinhole_scans).enumerate() {
        put(calib_file(pol), images_tensor(scan.speckles())?)?;
        put(source_file(pol), scan.source().to_tensor())?;
        put(pinhole_file(pol), images_tensor(pin.speckles())?)?;
    }
    put(MEASUREMENTS_FILE.into(), images_tensor(&sim.measurements)?)?;
    put(SCENE_MASKS_FILE.into(), images_tensor(&sim.scene.masks)?)?;
    let (m, c) = (sim.scene.weights.len(), sim.scene.masks.len());
    let n = sim.scene.grid.n_channels() * sim.scene.n_pol;
    let weights = sim
        .scene
        .weights
        .iter()
        .flatten()
        .flatten()
        .copied()
        .collect();
    put(
        SCENE_WEIGHTS_FILE.into(),
        Tensor::new(vec![m, c, n], weights)?,
    )?;
    io::write_text(dir.join("config.json"), &(cfg.to_json() + "\n"))?;
    names.push("config.json".into());
    let mut seeds = BTreeMap::new();
    seeds.insert("sim".to_string(), cfg.sim.seed);
    if let Some(n) = cfg.noise {
        seeds.insert("noise".to_string(), n.seed);
    }
    let manifest = Manifest {
        stage: "simulate".into(),
        seeds,
        config: cfg.clone(),
        files: hash_all(dir, &names)?,
        warnings: sim.warnings.clone(),
    };
    io::write_json(dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Reads artifacts written by [`write_sim_artifacts`].
pub fn read_sim_artifacts(dir: &Path, cfg: &Config) -> Result<SimArtifacts> {
    let grid = cfg.sim.grid;
    let psfs = HyperCube::from_tensor(grid, &Tensor::read(dir.join(PSFS_FILE))?)?;
    let mut calib_scans = Vec::new();
    let mut pinhole_scans = Vec::new();
    for pol in 0..cfg.sim.n_pol {
        let source =
            CalibSourceMatrix::from_tensor(grid, &Tensor::read(dir.join(source_file(pol)))?)?;
        let calib = images_from_tensor(&Tensor::read(dir.join(calib_file(pol)))?)?;
        let pin = images_from_tensor(&Tensor::read(dir.join(pinhole_file(pol)))?)?;
        calib_scans.push(CalibScan::new(calib, source.clone(), pol)?);
        pinhole_scans.push(CalibScan::new(pin, source, pol)?);
    }
    let measurements = images_from_tensor(&Tensor::read(dir.join(MEASUREMENTS_FILE))?)?;
    let masks = images_from_tensor(&Tensor::read(dir.join(SCENE_MASKS_FILE))?)?;
    let wt = Tensor::read(dir.join(SCENE_WEIGHTS_FILE))?;
    let d = wt.dims();
    if d.len() != 3 || d[1] != masks.len() {
        return Err(Error::Dimension(format!("scene weights have dims {d:?}")));
    }
    let (m, c, n) = (d[0], d[1], d[2]);
    let weights = (0..m)
        .map(|i| {
            (0..c)
                .map(|j| wt.data()[(i * c + j) * n..(i * c + j + 1) * n].to_vec())
                .collect()
        })
        .collect();
    Ok(SimArtifacts {
        psfs,
        calib_scans,
        pinhole_scans,
        scene: Scene {
            grid,
            n_pol: cfg.sim.n_pol,
            masks,
            weights,
        },
        measurements,
        warnings: Vec::new(),
    })
}

/// Writes `tc.htm` (+ sidecar) and the calibrated PSFs.
pub fn write_calibration(dir: &Path, cal: &Calibration) -> Result<Vec<String>> {
    ensure_dir(dir)?;
    io::write_tm(dir.join(TC_FILE), cal.tc())?;
    cal.psfs.to_tensor().write(dir.join(CALIBRATED_PSFS_FILE))?;
    Ok(vec![
        TC_FILE.into(),
        "tc.json".into(),
        CALIBRATED_PSFS_FILE.into(),
    ])
}

pub fn read_calibration(dir: &Path, cfg: &Config) -> Result<Calibration> {
    let tc = io::read_tm(dir.join(TC_FILE))?;
    let psfs =
        HyperCube::from_tensor(cfg.sim.grid, &Tensor::read(dir.join(CALIBRATED_PSFS_FILE))?)?;
    let solver = SpectralSolver::new(&tc, cfg.pinv_policy())?;
    Ok(Calibration {
        solver,
        psfs,
        source_info: None,
        warnings: Vec::new(),
    })
}

fn spectra_tensor(spectra: &[&Spectrum]) -> Result<Tensor> {
    let n = spectra.first().map_or(0, |s| s.len());
    Tensor::new(
        vec![spectra.len(), n],
        spectra
            .iter()
            .flat_map(|s| s.values().iter().copied())
            .collect(),
    )
}

/// Writes the pipeline outputs of a run into `dir` and returns their names.
pub fn write_outputs(dir: &Path, cfg: &Config, res: &RunResult) -> Result<Vec<String>> {
    ensure_dir(dir)?;
    let mut names = Vec::new();
    let sweep = matches!(cfg.scenario.scene, SceneSpec::Sweep { .. });
    let spectra: Vec<&Spectrum> = res.reconstructions.iter().map(|r| &r.spectrum).collect();
    spectra_tensor(&spectra)?.write(dir.join("spectra.htm"))?;
    names.push("spectra.htm".to_string());
    let truths: Vec<&Spectrum> = res.truths.iter().collect();
    spectra_tensor(&truths)?.write(dir.join("truth_spectra.htm"))?;
    names.push("truth_spectra.htm".to_string());

    let mut rows = Vec::new();
    let n_ch = cfg.sim.grid.n_channels();
    if sweep {
        let planes: Vec<Image2D> = res
            .reconstructions
            .iter()
            .enumerate()
            .map(|(m, r)| r.od.planes()[m].clone())
            .collect();
        images_tensor(&planes)?.write(dir.join("od_swept.htm"))?;
        names.push("od_swept.htm".into());
        for (m, met) in res.metrics.iter().enumerate() {
            if let Some(c) = met.channels.iter().find(|c| c.index == m) {
                rows.push(MetricRow::channel("ssim_od", m % n_ch, m / n_ch, c.ssim_od));
            }
        }
    } else {
        let rec = &res.reconstructions[0];
        let met = &res.metrics[0];
        io::write_text(
            dir.join("spectrum.csv"),
            &io::spectrum_to_csv(&rec.spectrum),
        )?;
        io::write_text(
            dir.join("truth_spectrum.csv"),
            &io::spectrum_to_csv(&res.truths[0]),
        )?;
        rec.on.to_tensor().write(dir.join("on.htm"))?;
        rec.od.to_tensor().write(dir.join("od.htm"))?;
        io::write_text(
            dir.join("refine_log.csv"),
            &io::refine_log_to_csv(&rec.rounds),
        )?;
        names.extend(
            [
                "spectrum.csv",
                "truth_spectrum.csv",
                "on.htm",
                "od.htm",
                "refine_log.csv",
            ]
            .map(String::from),
        );
        if let Some(c) = met.spectral_correlation {
            rows.push(MetricRow::global("spectral_correlation", c));
        }
        if let Some(b) = met.background_fraction {
            rows.push(MetricRow::global("background_fraction", b));
        }
        rows.push(MetricRow::global("residual", met.residual));
        for c in &met.channels {
            let (ch, pol) = (c.index % n_ch, c.index / n_ch);
            rows.push(MetricRow::channel("ssim_od", ch, pol, c.ssim_od));
            rows.push(MetricRow::channel("ssim_on", ch, pol, c.ssim_on));
            rows.push(MetricRow::channel("psnr_od", ch, pol, c.psnr_od));
            rows.push(MetricRow::channel("psnr_on", ch, pol, c.psnr_on));
        }
        if cfg.scenario.color {
            let rgb = compose_color(&rec.od, &rec.spectrum)?;
            std::fs::write(dir.join("color.ppm"), rgb.to_ppm(2.2))
                .map_err(|e| Error::io(dir.join("color.ppm"), e))?;
            names.push("color.ppm".into());
        }
    }
    io::write_text(dir.join("metrics.csv"), &io::metrics_to_csv(&rows))?;
    names.push("metrics.csv".into());
    io::write_json(dir.join("report.json"), &res.report)?;
    names.push("report.json".into());
    Ok(names)
}

/// Runs every stage after simulation from artifacts in `dir`, writing the
/// calibration and outputs next to them.
pub fn run_from_dir(dir: &Path, cfg: &Config) -> Result<(RunResult, Manifest)> {
    let sim = read_sim_artifacts(dir, cfg).stage("load artifacts")?;
    let res = run_on(cfg, sim)?;
    let mut names = write_calibration(dir, &res.calibration)?;
    names.extend(write_outputs(dir, cfg, &res)?);
    let manifest = Manifest {
        stage: "pipeline".into(),
        seeds: BTreeMap::new(),
        config: cfg.clone(),
        files: hash_all(dir, &names)?,
        warnings: res.report.warnings.clone(),
    };
    io::write_json(dir.join("pipeline_manifest.json"), &manifest)?;
    Ok((res, manifest))
}
