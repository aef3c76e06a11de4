use serde::{Deserialize, Serialize};

use crate::gridfield::GridField;

/// Gray level of out-of-mask pixels; in-mask values map into `1..=255`.
pub const MASK_SHADE: u8 = 0;
/// Gray level of every in-mask pixel of a constant field.
const FLAT_SHADE: u8 = 128;

/// Colorbar metadata written next to an exported image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSidecar {
    pub min: f64,
    pub max: f64,
    pub width: usize,
    pub height: usize,
    /// Shade of masked pixels.
    pub mask_shade: u8,
    /// Shades of `min` and `max`.
    pub low_shade: u8,
    pub high_shade: u8,
    pub source: String,
    pub excitation_id: u32,
}

/// Binary PGM (`P5`) image of `field`, row 0 at the top with `y` increasing
/// upwards, plus its sidecar.
pub fn grid_to_pgm(field: &GridField) -> (Vec<u8>, PlotSidecar) {
    let n = field.spec.n();
    let (lo, hi) = field.range();
    let shade = |v: f64| -> u8 {
        if hi > lo {
            (1.0 + 254.0 * (v - lo) / (hi - lo)).round().clamp(1.0, 255.0) as u8
        } else {
            FLAT_SHADE
        }
    };
    let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
    for row in (0..n).rev() {
        for col in 0..n {
            let i = field.spec.index(row, col);
            out.push(if field.spec.in_mask(i) { shade(field.values[i]) } else { MASK_SHADE });
        }
    }
    let (low_shade, high_shade) = if hi > lo { (1, 255) } else { (FLAT_SHADE, FLAT_SHADE) };
    let sidecar = PlotSidecar {
        min: lo,
        max: hi,
        width: n,
        height: n,
        mask_shade: MASK_SHADE,
        low_shade,
        high_shade,
        source: format!("{:?}", field.source).to_lowercase(),
        excitation_id: field.excitation_id,
    };
    (out, sidecar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridfield::{GridSource, GridSpec};

    fn pixels(img: &[u8], n: usize) -> &[u8] {
        &img[img.len() - n * n..]
    }

    #[test]
    fn constant_grid_is_mid_gray() {
        let spec = GridSpec::new(16);
        let g = GridField::from_fn(&spec, GridSource::Sigma, 0, |_| 2.5);
        let (img, side) = grid_to_pgm(&g);
        assert!(img.starts_with(b"P5\n16 16\n255\n"));
        let px = pixels(&img, 16);
        assert!(px.iter().all(|&p| p == FLAT_SHADE || p == MASK_SHADE));
        assert_eq!(px.iter().filter(|&&p| p == FLAT_SHADE).count(), spec.n_mask());
        assert_eq!((side.min, side.max), (2.5, 2.5));
        let json = serde_json::to_string(&side).unwrap();
        assert_eq!(serde_json::from_str::<PlotSidecar>(&json).unwrap(), side);
    }

    #[test]
    fn ramp_spans_full_range() {
        let spec = GridSpec::new(32);
        let g = GridField::from_fn(&spec, GridSource::Sigma, 0, |p| p[0]);
        let (img, side) = grid_to_pgm(&g);
        let px = pixels(&img, 32);
        assert_eq!(px.iter().filter(|&&p| p == MASK_SHADE).count(), spec.len() - spec.n_mask());
        assert!(px.contains(&1) && px.contains(&255));
        assert!(side.min < side.max && (side.low_shade, side.high_shade) == (1, 255));
    }
}
