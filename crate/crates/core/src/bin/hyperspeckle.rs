use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hyperspeckle::config::{preset, Config, PRESETS};
use hyperspeckle::image::{reconstruct_channels, ImagingParams, WienerBank};
use hyperspeckle::io::{self, MetricRow};
use hyperspeckle::metrics::{correlation, psnr, ssim};
use hyperspeckle::pipeline::{self, MEASUREMENTS_FILE};
use hyperspeckle::{Error, Image2D, Result, Tensor};

#[derive(Parser)]
#[command(
    name = "hyperspeckle",
    version,
    about = "Hyperspectral imaging through a scattering fiber bundle"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Global {
    /// Run configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Built-in scenario used when no config is given.
    #[arg(long, global = true, value_name = "NAME")]
    scenario: Option<String>,
    /// Artifact directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "run")]
    out: PathBuf,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate PSFs, calibration scans and camera frames.
    Simulate,
    /// Build the calibration TM and PSFs from simulated scans.
    Calibrate,
    /// Recover the spectrum of one camera frame.
    Recover {
        #[arg(long, default_value_t = 0)]
        frame: usize,
    },
    /// Deconvolve and denoise one frame using its recovered spectrum.
    Image {
        #[arg(long, default_value_t = 0)]
        frame: usize,
    },
    /// Run every stage after simulation and write the report.
    Pipeline {
        /// Simulate first.
        #[arg(long)]
        simulate: bool,
    },
    /// Compare two tensors (.htm) or spectra (.csv).
    Metrics { a: PathBuf, b: PathBuf },
    /// List the built-in scenarios.
    Scenarios,
}

fn load_config(g: &Global) -> Result<Config> {
    let cfg = match (&g.config, &g.scenario) {
        (Some(path), _) => Config::load(path)?,
        (None, Some(name)) => preset(name).ok_or_else(|| {
            Error::config(
                "scenario",
                format!(
                    "unknown scenario `{name}`; try one of {}",
                    PRESETS.join(", ")
                ),
            )
        })?,
        (None, None) => {
            let saved = g.out.join("config.json");
            if !saved.exists() {
                return Err(Error::config("", "give --config or --scenario"));
            }
            Config::load(saved)?
        }
    };
    Ok(match g.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn frame(dir: &Path, i: usize) -> Result<Image2D> {
    let t = Tensor::read(dir.join(MEASUREMENTS_FILE))?;
    let d = t.dims().to_vec();
    if d.len() != 3 || i >= d[0] {
        return Err(Error::OutOfRange(format!(
            "frame {i} not in measurements of dims {d:?}"
        )));
    }
    let n = d[1] * d[2];
    Image2D::new(d[2], d[1], t.data()[i * n..(i + 1) * n].to_vec())
}

fn say(g: &Global, msg: impl AsRef<str>) {
    if !g.quiet {
        eprintln!("{}", msg.as_ref());
    }
}

fn values_of(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    if path.extension().is_some_and(|e| e == "csv") {
        let text = io::read_text(path)?;
        let mut v = Vec::new();
        for (k, line) in text
            .lines()
            .skip(1)
            .filter(|l| !l.trim().is_empty())
            .enumerate()
        {
            let x = line
                .rsplit(',')
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| {
                    Error::Format(format!("{} row {}: `{line}`", path.display(), k + 2))
                })?;
            v.push(x);
        }
        Ok((vec![v.len()], v))
    } else {
        let t = Tensor::read(path)?;
        Ok((t.dims().to_vec(), t.into_data()))
    }
}

fn compare(a: &Path, b: &Path) -> Result<Vec<MetricRow>> {
    let (da, va) = values_of(a)?;
    let (db, vb) = values_of(b)?;
    if da != db {
        return Err(Error::Dimension(format!("shapes differ: {da:?} vs {db:?}")));
    }
    let mut rows = vec![MetricRow::global("correlation", correlation(&va, &vb)?)];
    if da.len() >= 2 {
        let (h, w) = (da[da.len() - 2], da[da.len() - 1]);
        let n = w * h;
        let mut total = 0.0;
        let planes = va.len() / n.max(1);
        for p in 0..planes {
            let x = Image2D::new(w, h, va[p * n..(p + 1) * n].to_vec())?;
            let y = Image2D::new(w, h, vb[p * n..(p + 1) * n].to_vec())?;
            let s = ssim(&x, &y)?;
            total += s;
            if planes > 1 {
                rows.push(MetricRow::channel("ssim", p, 0, s));
            }
            if let Ok(q) = psnr(&x, &y) {
                rows.push(MetricRow::channel("psnr", p, 0, q));
            }
        }
        rows.insert(1, MetricRow::global("ssim", total / planes as f64));
    }
    Ok(rows)
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let dir = &g.out;
    match cli.cmd {
        Cmd::Scenarios => {
            for name in PRESETS {
                println!("{name}");
            }
        }
        Cmd::Simulate => {
            let cfg = load_config(g)?;
            let sim = pipeline::simulate(&cfg)?;
            let manifest = pipeline::write_sim_artifacts(dir, &cfg, &sim)?;
            for w in &manifest.warnings {
                say(g, format!("warning: {w}"));
            }
            say(
                g,
                format!("wrote {} files to {}", manifest.files.len(), dir.display()),
            );
        }
        Cmd::Calibrate => {
            let cfg = load_config(g)?;
            let sim = pipeline::read_sim_artifacts(dir, &cfg)?;
            let cal = pipeline::calibrate(&cfg, &sim)?;
            pipeline::write_calibration(dir, &cal)?;
            for w in &cal.warnings {
                say(g, format!("warning: {w}"));
            }
            let info = cal.solver.info();
            say(
                g,
                format!("T_c rank {} condition {:.3e}", info.rank, info.condition),
            );
        }
        Cmd::Recover { frame: i } => {
            let cfg = load_config(g)?;
            let cal = pipeline::read_calibration(dir, &cfg)?;
            let rec = pipeline::reconstruct(&cfg, &cal, &frame(dir, i)?, None)?;
            io::write_text(
                dir.join("spectrum.csv"),
                &io::spectrum_to_csv(&rec.spectrum),
            )?;
            say(g, format!("peak at flat channel {}", rec.spectrum.argmax()));
        }
        Cmd::Image { frame: i } => {
            let cfg = load_config(g)?;
            let cal = pipeline::read_calibration(dir, &cfg)?;
            let s = io::spectrum_from_csv(&io::read_text(dir.join("spectrum.csv"))?, cfg.sim.grid)?;
            let speckle = frame(dir, i)?;
            let bank = WienerBank::from_cube(&cal.psfs, speckle.dims())?;
            let params = ImagingParams {
                wiener: cfg.wiener,
                background_frac: cfg.scenario.background_frac,
            };
            let out = reconstruct_channels(&bank, &speckle, &s, cfg.scenario.object_dims, &params)?;
            out.on.to_tensor().write(dir.join("on.htm"))?;
            out.od.to_tensor().write(dir.join("od.htm"))?;
            if !out.degenerate_channels.is_empty() {
                say(
                    g,
                    format!(
                        "warning: zeroed degenerate channels {:?}",
                        out.degenerate_channels
                    ),
                );
            }
        }
        Cmd::Pipeline { simulate } => {
            let cfg = load_config(g)?;
            if simulate {
                let sim = pipeline::simulate(&cfg)?;
                pipeline::write_sim_artifacts(dir, &cfg, &sim)?;
            }
            let (res, _) = pipeline::run_from_dir(dir, &cfg)?;
            let r = &res.report;
            for w in &r.warnings {
                say(g, format!("warning: {w}"));
            }
            let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
            say(
                g,
                format!(
                    "{}: correlation {} argmax accuracy {:.4} mean SSIM od {} on {}",
                    r.scenario,
                    opt(r.spectral_correlation),
                    r.argmax_accuracy,
                    opt(r.mean_ssim_od),
                    opt(r.mean_ssim_on)
                ),
            );
            for round in &r.refine_rounds {
                say(
                    g,
                    format!("round {} residual {:.6e}", round.round, round.residual),
                );
            }
        }
        Cmd::Metrics { a, b } => print!("{}", io::metrics_to_csv(&compare(&a, &b)?)),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
