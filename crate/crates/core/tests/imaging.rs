use hyperspeckle::config::{preset, Config};
use hyperspeckle::image::{reconstruct_channels, ImagingParams, WienerBank};
use hyperspeckle::pipeline;
use hyperspeckle::scenario::{LineSpec, SceneSpec, Shape};
use hyperspeckle::simulate::{add_noise, forward_total, NoiseParams};
use hyperspeckle::{HyperCube, Image2D};

fn line(pol: usize, lambda_nm: f64, amplitude: f64) -> LineSpec {
    LineSpec {
        pol,
        lambda_nm,
        amplitude,
        fwhm_nm: 0.0,
        shape: None,
    }
}

fn two_line_config() -> Config {
    let mut cfg = preset("dual-pol-sparse").unwrap();
    cfg.scenario.scene = SceneSpec::Lines {
        mask: Shape::Glyph { ch: 'H', scale: 2 },
        lines: vec![line(0, 470.0, 1.0), line(1, 600.0, 0.8)],
    };
    cfg.scenario.object_dims = (16, 16);
    cfg.scenario.aperture = Shape::Disc {
        radius: 4.0,
        dx: 0.0,
        dy: 0.0,
    };
    cfg
}

#[test]
fn denoising_beats_raw_deconvolution_per_channel() {
    let cfg = two_line_config();
    let res = pipeline::run(&cfg).unwrap();
    let m = &res.metrics[0];
    assert_eq!(m.channels.len(), 2);
    for c in &m.channels {
        assert!(
            c.ssim_od > c.ssim_on,
            "channel {}: {} vs {}",
            c.index,
            c.ssim_od,
            c.ssim_on
        );
        assert!(
            c.psnr_od > c.psnr_on,
            "channel {}: {} vs {}",
            c.index,
            c.psnr_od,
            c.psnr_on
        );
    }
}

#[test]
fn denoised_channels_carry_their_spectral_weight() {
    let cfg = two_line_config();
    let res = pipeline::run(&cfg).unwrap();
    let rec = &res.reconstructions[0];
    for (plane, s) in rec.od.planes().iter().zip(rec.spectrum.values()) {
        if !plane.is_zero() {
            assert!((plane.sum() - s).abs() < 1e-10 * s.max(1.0));
        }
    }
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// For each object channel, the floor under `O_n` is the deconvolution of a
/// control frame with that channel's light removed (same noise draw). The
/// background estimate should match its RMS level within 15%.
#[test]
#[ignore = "background level is 20-25% low against the control floor on the desk scene; see project notes"]
fn background_matches_control_run_floor() {
    let cfg = preset("snr-complex").unwrap();
    let sim = pipeline::simulate(&cfg).unwrap();
    let cal = pipeline::calibrate(&cfg, &sim).unwrap();
    let frame = &sim.measurements[0];
    let s = cal.solver.recover(frame).unwrap();
    let bank = WienerBank::from_cube(&cal.psfs, frame.dims()).unwrap();
    let params = ImagingParams {
        wiener: cfg.wiener,
        background_frac: cfg.scenario.background_frac,
    };
    let roi = cfg.scenario.object_dims;
    let im = reconstruct_channels(&bank, frame, &s, roi, &params).unwrap();
    let obj = sim.scene.object(0).unwrap();
    let noise = cfg.noise.unwrap();
    let n_ch = cfg.sim.grid.n_channels();
    let (mut floor_sq, mut bg_sq) = (0.0, 0.0);
    for i in 0..obj.planes().len() {
        if obj.planes()[i].is_zero() {
            continue;
        }
        let mut planes = obj.planes().to_vec();
        planes[i] = Image2D::zeros(roi.0, roi.1);
        let control = HyperCube::new(*obj.grid(), obj.n_pol(), planes).unwrap();
        let clean = forward_total(&sim.psfs, &control).unwrap();
        let noisy = add_noise(
            &clean,
            &NoiseParams {
                snr_db: noise.snr_db,
                seed: noise.seed,
            },
        );
        let floor = bank
            .deconvolve(i, &noisy, &cfg.wiener)
            .unwrap()
            .center_crop(roi.0, roi.1)
            .unwrap();
        floor_sq += rms(floor.data()).powi(2);
        bg_sq += rms(im.backgrounds[i / n_ch].data()).powi(2);
    }
    let ratio = (bg_sq / floor_sq).sqrt();
    assert!((ratio - 1.0).abs() <= 0.15, "RMS ratio {ratio}");
}
