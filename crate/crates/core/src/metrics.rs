//! Image quality metrics between a reconstruction and the ground truth,
//! over in-mask pixels.

use serde::{Deserialize, Serialize};

use crate::error::{EitError, Result};
use crate::gridfield::GridField;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_STD: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub case: String,
    pub method: String,
    pub ssim: f64,
    pub cc: f64,
    pub rie: f64,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "case,method,ssim,cc,rie,seed,config_hash";

    pub fn csv_row(&self, seed: u64, config_hash: &str) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{seed},{config_hash}",
            self.case, self.method, self.ssim, self.cc, self.rie
        )
    }
}

fn check(a: &GridField, b: &GridField) -> Result<()> {
    if a.spec != b.spec {
        return Err(EitError::GridMismatch);
    }
    Ok(())
}

fn masked_pairs<'a>(a: &'a GridField, b: &'a GridField) -> impl Iterator<Item = (f64, f64)> + 'a {
    a.masked_values().zip(b.masked_values())
}

/// Mean local SSIM with an 11×11 Gaussian window (σ = 1.5). The dynamic
/// range is that of `truth`. Window weights are restricted to in-mask pixels
/// and renormalized. Two constant fields score 1.
pub fn ssim(estimate: &GridField, truth: &GridField) -> Result<f64> {
    check(estimate, truth)?;
    let (lo, hi) = truth.range();
    let mut range = hi - lo;
    if range == 0.0 {
        let (elo, ehi) = estimate.range();
        if ehi == elo {
            // Both constant: 1 by convention.
            return Ok(1.0);
        }
        range = ehi - elo;
    }
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let spec = &truth.spec;
    let n = spec.n() as isize;
    let half = (SSIM_WINDOW / 2) as isize;
    let kernel: Vec<f64> = (-half..=half)
        .map(|d| (-(d * d) as f64 / (2.0 * SSIM_STD * SSIM_STD)).exp())
        .collect();
    let (a, b) = (&estimate.values, &truth.values);
    let mut total = 0.0;
    let mut count = 0usize;
    for idx in spec.mask_indices() {
        let (r, c) = spec.row_col(idx);
        let (r, c) = (r as isize, c as isize);
        let (mut w_sum, mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for dr in -half..=half {
            let rr = r + dr;
            if rr < 0 || rr >= n {
                continue;
            }
            for dc in -half..=half {
                let cc = c + dc;
                if cc < 0 || cc >= n {
                    continue;
                }
                let j = spec.index(rr as usize, cc as usize);
                if !spec.in_mask(j) {
                    continue;
                }
                let w = kernel[(dr + half) as usize] * kernel[(dc + half) as usize];
                let (x, y) = (a[j], b[j]);
                w_sum += w;
                ma += w * x;
                mb += w * y;
                aa += w * x * x;
                bb += w * y * y;
                ab += w * x * y;
            }
        }
        let (ma, mb) = (ma / w_sum, mb / w_sum);
        let va = (aa / w_sum - ma * ma).max(0.0);
        let vb = (bb / w_sum - mb * mb).max(0.0);
        let cov = ab / w_sum - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        count += 1;
    }
    Ok(total / count as f64)
}

/// Pearson correlation over in-mask pixels.
pub fn cc(a: &GridField, b: &GridField) -> Result<f64> {
    check(a, b)?;
    let n = a.spec.n_mask() as f64;
    let (sa, sb) = masked_pairs(a, b).fold((0.0, 0.0), |(x, y), (u, v)| (x + u, y + v));
    let (ma, mb) = (sa / n, sb / n);
    let (mut vab, mut vaa, mut vbb) = (0.0, 0.0, 0.0);
    for (u, v) in masked_pairs(a, b) {
        vab += (u - ma) * (v - mb);
        vaa += (u - ma) * (u - ma);
        vbb += (v - mb) * (v - mb);
    }
    if vaa == 0.0 || vbb == 0.0 {
        return Err(EitError::UndefinedCorrelation);
    }
    Ok((vab / (vaa * vbb).sqrt()).clamp(-1.0, 1.0))
}

/// `‖estimate − truth‖₂ / ‖truth‖₂` over in-mask pixels.
pub fn rie(estimate: &GridField, truth: &GridField) -> Result<f64> {
    check(estimate, truth)?;
    let (num, den) = masked_pairs(estimate, truth).fold((0.0, 0.0), |(n, d), (e, t)| (n + (e - t).powi(2), d + t * t));
    if den == 0.0 {
        return Err(EitError::ZeroNormReference);
    }
    Ok((num / den).sqrt())
}

pub fn evaluate(estimate: &GridField, truth: &GridField, case: &str, method: &str) -> Result<EvalReport> {
    Ok(EvalReport {
        case: case.to_string(),
        method: method.to_string(),
        ssim: ssim(estimate, truth)?,
        cc: cc(estimate, truth)?,
        rie: rie(estimate, truth)?,
    })
}
