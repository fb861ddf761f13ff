//! Shi-Tomasi corner detection.
//!
//! The corner score at a pixel is the minimum eigenvalue of the 2x2
//! structure tensor accumulated over a 3x3 window of Sobel gradients:
//!
//! ```text
//! lambda_min = (sxx + syy) / 2 - sqrt(((sxx - syy) / 2)^2 + sxy^2)
//! ```
//!
//! Pixels within 2 px of the frame border score zero because neither the
//! Sobel kernel nor the accumulation window fits there.

use super::GrayFrame;

/// A detected corner. Coordinates are pixel centers, so integer values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corner {
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

/// Computes the full minimum-eigenvalue score map, one value per pixel in
/// row-major order. The 2 px frame border scores zero.
pub fn score_map(frame: &GrayFrame) -> Vec<f64> {
    let w = frame.width as usize;
    let h = frame.height as usize;
    let mut scores = vec![0.0f64; w * h];
    if w < 5 || h < 5 {
        return scores;
    }

    let px = |x: usize, y: usize| frame.pixels[y * w + x] as f64;

    // Sobel gradients, defined for the 1-px-inset interior.
    let mut gx = vec![0.0f64; w * h];
    let mut gy = vec![0.0f64; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            gx[i] = (px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2.0 * px(x - 1, y) + px(x - 1, y + 1));
            gy[i] = (px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2.0 * px(x, y - 1) + px(x + 1, y - 1));
        }
    }

    for y in 2..h - 2 {
        for x in 2..w - 2 {
            let mut sxx = 0.0;
            let mut syy = 0.0;
            let mut sxy = 0.0;
            for wy in y - 1..=y + 1 {
                for wx in x - 1..=x + 1 {
                    let i = wy * w + wx;
                    sxx += gx[i] * gx[i];
                    syy += gy[i] * gy[i];
                    sxy += gx[i] * gy[i];
                }
            }
            let half_trace = (sxx + syy) / 2.0;
            let disc = ((sxx - syy) / 2.0).powi(2) + sxy * sxy;
            scores[y * w + x] = half_trace - disc.sqrt();
        }
    }
    scores
}

/// Detects up to `max_corners` corners.
///
/// Candidates are local maxima of the score map (8-neighborhood, ties kept)
/// scoring at least `quality` times the global maximum. Survivors are taken
/// in descending score order, ties broken by row then column, and a
/// candidate within `min_dist_px` (Euclidean) of an already accepted corner
/// is dropped. Returns an empty list when the frame has no positive score.
pub fn shi_tomasi(
    frame: &GrayFrame,
    max_corners: usize,
    quality: f64,
    min_dist_px: f64,
) -> Vec<Corner> {
    let scores = score_map(frame);
    let w = frame.width as usize;
    let h = frame.height as usize;
    let best = scores.iter().cloned().fold(0.0f64, f64::max);
    if best <= 0.0 || max_corners == 0 {
        return Vec::new();
    }
    let cutoff = quality * best;

    let mut candidates: Vec<Corner> = Vec::new();
    for y in 2..h.saturating_sub(2) {
        for x in 2..w.saturating_sub(2) {
            let s = scores[y * w + x];
            if s <= 0.0 || s < cutoff {
                continue;
            }
            let mut is_max = true;
            'nb: for ny in y - 1..=y + 1 {
                for nx in x - 1..=x + 1 {
                    if (nx, ny) != (x, y) && scores[ny * w + nx] > s {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                candidates.push(Corner {
                    x: x as f64,
                    y: y as f64,
                    score: s,
                });
            }
        }
    }

    candidates.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.y.partial_cmp(&b.y).unwrap())
            .then(a.x.partial_cmp(&b.x).unwrap())
    });

    let min_d2 = min_dist_px * min_dist_px;
    let mut kept: Vec<Corner> = Vec::new();
    for c in candidates {
        if kept.len() >= max_corners {
            break;
        }
        let crowded = kept
            .iter()
            .any(|k| (k.x - c.x).powi(2) + (k.y - c.y).powi(2) < min_d2);
        if !crowded {
            kept.push(c);
        }
    }
    kept
}
