//! Text and image artifact formats: spectrum, metric and refinement-log CSVs,
//! PGM debug frames and small JSON helpers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::emulate::RoundLog;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::types::{Image2D, SpectralGrid, Spectrum, TmSidecar, TransmissionMatrix};

pub const SPECTRUM_HEADER: &str = "wavelength_nm,pol,value";
pub const METRICS_HEADER: &str = "metric,channel,pol,value";
pub const REFINE_HEADER: &str = "round,residual,correlation";

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("JSON encoding failed: {e}")))?;
    text.push('\n');
    write_text(path, &text)
}

/// One row per (polarization, channel), polarization-major.
pub fn spectrum_to_csv(s: &Spectrum) -> String {
    let mut out = String::from(SPECTRUM_HEADER);
    out.push('\n');
    let n = s.grid().n_channels();
    for (i, v) in s.values().iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", s.grid().wavelength(i % n), i / n, v);
    }
    out
}

/// Parses [`spectrum_to_csv`] output, checking it against `grid`.
pub fn spectrum_from_csv(text: &str, grid: SpectralGrid) -> Result<Spectrum> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(SPECTRUM_HEADER) {
        return Err(Error::Format(format!(
            "spectrum CSV must start with `{SPECTRUM_HEADER}`"
        )));
    }
    let n = grid.n_channels();
    let mut values = Vec::new();
    let mut max_pol = 0;
    for (row, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        let bad = || Error::Format(format!("spectrum CSV row {}: `{line}`", row + 2));
        if fields.len() != 3 {
            return Err(bad());
        }
        let lambda: f64 = fields[0].trim().parse().map_err(|_| bad())?;
        let pol: usize = fields[1].trim().parse().map_err(|_| bad())?;
        let value: f64 = fields[2].trim().parse().map_err(|_| bad())?;
        let i = values.len();
        if pol != i / n || (lambda - grid.wavelength(i % n)).abs() > 1e-9 * lambda.abs().max(1.0) {
            return Err(Error::Format(format!(
                "spectrum CSV row {} does not follow the grid order",
                row + 2
            )));
        }
        max_pol = max_pol.max(pol);
        values.push(value);
    }
    Spectrum::new(grid, max_pol + 1, values)
}

/// A metrics CSV row; `channel` and `pol` are blank for global metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub metric: String,
    pub channel: Option<usize>,
    pub pol: Option<usize>,
    pub value: String,
}

impl MetricRow {
    pub fn global(metric: &str, value: impl ToString) -> Self {
        MetricRow {
            metric: metric.into(),
            channel: None,
            pol: None,
            value: value.to_string(),
        }
    }

    pub fn channel(metric: &str, channel: usize, pol: usize, value: impl ToString) -> Self {
        MetricRow {
            metric: metric.into(),
            channel: Some(channel),
            pol: Some(pol),
            value: value.to_string(),
        }
    }
}

pub fn metrics_to_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.metric,
            opt(r.channel),
            opt(r.pol),
            r.value
        );
    }
    out
}

pub fn metrics_from_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(METRICS_HEADER) {
        return Err(Error::Format(format!(
            "metrics CSV must start with `{METRICS_HEADER}`"
        )));
    }
    let opt = |s: &str| -> Result<Option<usize>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|_| Error::Format(format!("bad index `{s}`")))
        }
    };
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(Error::Format(format!("metrics CSV row `{line}`")));
            }
            Ok(MetricRow {
                metric: f[0].to_string(),
                channel: opt(f[1])?,
                pol: opt(f[2])?,
                value: f[3].to_string(),
            })
        })
        .collect()
}

pub fn refine_log_to_csv(rounds: &[RoundLog]) -> String {
    let mut out = String::from(REFINE_HEADER);
    out.push('\n');
    for r in rounds {
        let corr = r.correlation.map(|c| c.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", r.round, r.residual, corr);
    }
    out
}

/// Binary PGM (P5), 16-bit big-endian samples scaled so the maximum is 65535.
pub fn to_pgm16(img: &Image2D) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", img.width(), img.height()).into_bytes();
    let m = img.max();
    let k = if m > 0.0 { 65535.0 / m } else { 0.0 };
    for v in img.data() {
        out.extend_from_slice(&((v * k).round() as u16).to_be_bytes());
    }
    out
}

pub fn write_tm(path: impl AsRef<Path>, tm: &TransmissionMatrix) -> Result<()> {
    let path = path.as_ref();
    tm.to_tensor().write(path)?;
    write_json(path.with_extension("json"), &tm.sidecar())
}

pub fn read_tm(path: impl AsRef<Path>) -> Result<TransmissionMatrix> {
    let path = path.as_ref();
    let side_path = path.with_extension("json");
    let sidecar: TmSidecar = serde_json::from_str(&read_text(&side_path)?)
        .map_err(|e| Error::Format(format!("{}: {e}", side_path.display())))?;
    TransmissionMatrix::from_tensor(&Tensor::read(path)?, &sidecar)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectrum_csv_round_trip_is_lossless() {
        let grid = SpectralGrid::with_channels(400.0, 2.0, 3).unwrap();
        let s = Spectrum::new(grid, 2, vec![0.1, 1.0 / 3.0, 2.5e-17, 0.0, 7.0, 1e300]).unwrap();
        let text = spectrum_to_csv(&s);
        assert!(text.starts_with("wavelength_nm,pol,value\n400,0,0.1\n"));
        assert_eq!(spectrum_from_csv(&text, grid).unwrap(), s);
        let wrong = SpectralGrid::with_channels(402.0, 2.0, 3).unwrap();
        assert!(spectrum_from_csv(&text, wrong).is_err());
    }

    #[test]
    fn metrics_csv_round_trip() {
        let rows = vec![
            MetricRow::global("spectral_correlation", 0.99),
            MetricRow::channel("ssim_od", 4, 1, 0.93),
            MetricRow::channel("psnr_od", 4, 1, "exact"),
        ];
        let text = metrics_to_csv(&rows);
        assert!(text.contains("\nspectral_correlation,,,0.99\n"));
        assert_eq!(metrics_from_csv(&text).unwrap(), rows);
    }

    #[test]
    fn pgm_is_max_scaled_big_endian() {
        let img = Image2D::new(2, 1, vec![0.5, 1.0]).unwrap();
        let pgm = to_pgm16(&img);
        let header = b"P5\n2 1\n65535\n";
        assert!(pgm.starts_with(header));
        assert_eq!(&pgm[header.len()..], &[0x80, 0x00, 0xff, 0xff]);
    }
}
