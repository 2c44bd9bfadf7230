//! Binary test objects and helpers for building object cubes from them.

use crate::error::{Error, Result};
use crate::types::{HyperCube, Image2D, Spectrum};

/// Filled disc of radius `r` centered at `(cx, cy)`.
pub fn disc(width: usize, height: usize, cx: f64, cy: f64, r: f64) -> Image2D {
    Image2D::from_fn(width, height, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        if dx * dx + dy * dy <= r * r {
            1.0
        } else {
            0.0
        }
    })
}

/// Axis-aligned filled rectangle `[x0, x1) x [y0, y1)`.
pub fn rect(width: usize, height: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> Image2D {
    Image2D::from_fn(width, height, |x, y| {
        if (x0..x1).contains(&x) && (y0..y1).contains(&y) {
            1.0
        } else {
            0.0
        }
    })
}

const GLYPH_W: usize = 5;
const GLYPH_H: usize = 7;

fn glyph_rows(c: char) -> Option<[u8; GLYPH_H]> {
    Some(match c {
        'H' => [
            0b10001, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001,
        ],
        'U' => [
            0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110,
        ],
        'S' => [
            0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110,
        ],
        'T' => [
            0b11111, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100,
        ],
        '9' => [
            0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100,
        ],
        _ => return None,
    })
}

/// A 5x7 bitmap glyph scaled by `scale` and centered in a `width x height`
/// frame. Supported characters: `H U S T 9`.
pub fn glyph(c: char, width: usize, height: usize, scale: usize) -> Result<Image2D> {
    let rows = glyph_rows(c).ok_or_else(|| Error::OutOfRange(format!("no glyph for {c:?}")))?;
    let (gw, gh) = (GLYPH_W * scale, GLYPH_H * scale);
    if scale == 0 || gw > width || gh > height {
        return Err(Error::Dimension(format!(
            "glyph at scale {scale} does not fit {width}x{height}"
        )));
    }
    let (ox, oy) = ((width - gw) / 2, (height - gh) / 2);
    Ok(Image2D::from_fn(width, height, |x, y| {
        if x < ox || y < oy || x >= ox + gw || y >= oy + gh {
            return 0.0;
        }
        let (gx, gy) = ((x - ox) / scale, (y - oy) / scale);
        f64::from((rows[gy] >> (GLYPH_W - 1 - gx)) & 1)
    }))
}

/// Cube whose every plane is `mask` scaled by the matching spectrum entry.
pub fn object_from_spectrum(mask: &Image2D, spectrum: &Spectrum) -> Result<HyperCube> {
    let planes = spectrum
        .values()
        .iter()
        .map(|&v| {
            if v < 0.0 {
                Err(Error::Precondition(
                    "object spectrum must be nonnegative".into(),
                ))
            } else {
                Ok(mask.scaled(v))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    HyperCube::new(*spectrum.grid(), spectrum.n_pol(), planes)
}

/// Cube whose planes carry separate masks, weighted by the spectrum.
pub fn object_from_masks(masks: &[Image2D], spectrum: &Spectrum) -> Result<HyperCube> {
    if masks.len() != spectrum.len() {
        return Err(Error::Dimension(format!(
            "{} masks for {} spectral entries",
            masks.len(),
            spectrum.len()
        )));
    }
    let planes = masks
        .iter()
        .zip(spectrum.values())
        .map(|(m, &v)| m.scaled(v.max(0.0)))
        .collect();
    HyperCube::new(*spectrum.grid(), spectrum.n_pol(), planes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disc_area_is_close_to_pi_r_squared() {
        let d = disc(64, 64, 32.0, 32.0, 10.0);
        let area = d.sum();
        assert!((area - std::f64::consts::PI * 100.0).abs() < 15.0, "{area}");
    }

    #[test]
    fn glyph_t_has_full_top_bar() {
        let g = glyph('T', 5, 7, 1).unwrap();
        assert_eq!(&g.data()[0..5], &[1.0; 5]);
        assert_eq!(g.get(2, 6), 1.0);
        assert_eq!(g.get(0, 6), 0.0);
        assert!(glyph('Q', 5, 7, 1).is_err());
        assert!(glyph('H', 4, 7, 1).is_err());
    }

    #[test]
    fn rect_counts_pixels() {
        assert_eq!(rect(10, 10, 2, 3, 5, 7).sum(), 12.0);
    }
}
