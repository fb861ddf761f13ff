//! Pyramidal Lucas-Kanade optical flow.
//!
//! Tracks sparse corners from one frame to the next. Each pyramid level is
//! a 2x2 block average of the level below. Tracking starts at the coarsest
//! level with zero displacement; the estimate found at each level is
//! doubled and refined at the next finer one. Within a level the standard
//! iteration applies: spatial gradients from the first image fix the 2x2
//! normal matrix, and the residual against the displaced second image
//! updates the flow until the step shrinks below 1e-3 px.
//!
//! Window samples falling outside the image use edge replication, so
//! corners near the border remain trackable. A track is reported lost when
//! the gradient matrix is near singular (textureless neighborhood), when
//! the iteration produces a non-finite or wildly divergent step, or when
//! the tracked point itself ends up outside the frame.

use super::corners::Corner;
use super::{GrayFrame, VisionError};

/// Smallest acceptable minimum eigenvalue of the gradient matrix, per
/// window pixel. Below this the neighborhood has too little texture.
pub const LK_MIN_EIG_PER_PX: f64 = 1e-3;

const MAX_ITERS: usize = 30;
const CONVERGENCE_PX: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowStatus {
    Tracked,
    Lost,
}

/// One tracked corner. For lost tracks `to` equals `from`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowVector {
    pub from: (f64, f64),
    pub to: (f64, f64),
    pub status: FlowStatus,
}

impl FlowVector {
    pub fn displacement(&self) -> (f64, f64) {
        (self.to.0 - self.from.0, self.to.1 - self.from.1)
    }

    pub fn magnitude(&self) -> f64 {
        let (dx, dy) = self.displacement();
        (dx * dx + dy * dy).sqrt()
    }
}

struct ImageF {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl ImageF {
    fn from_frame(frame: &GrayFrame) -> Self {
        ImageF {
            w: frame.width as usize,
            h: frame.height as usize,
            data: frame.pixels.iter().map(|&p| p as f64).collect(),
        }
    }

    fn downsample(&self) -> ImageF {
        let w = self.w / 2;
        let h = self.h / 2;
        let mut data = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let i = 2 * y * self.w + 2 * x;
                data[y * w + x] =
                    (self.data[i] + self.data[i + 1] + self.data[i + self.w]
                        + self.data[i + self.w + 1])
                        / 4.0;
            }
        }
        ImageF { w, h, data }
    }

    /// Bilinear sample with edge replication.
    fn sample(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.w - 1) as f64);
        let y = y.clamp(0.0, (self.h - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.w - 1);
        let y1 = (y0 + 1).min(self.h - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let v00 = self.data[y0 * self.w + x0];
        let v10 = self.data[y0 * self.w + x1];
        let v01 = self.data[y1 * self.w + x0];
        let v11 = self.data[y1 * self.w + x1];
        v00 * (1.0 - fx) * (1.0 - fy)
            + v10 * fx * (1.0 - fy)
            + v01 * (1.0 - fx) * fy
            + v11 * fx * fy
    }
}

fn build_pyramid(frame: &GrayFrame, levels: usize) -> Vec<ImageF> {
    let mut pyr = vec![ImageF::from_frame(frame)];
    for _ in 0..levels {
        let top = pyr.last().unwrap();
        if top.w / 2 < 8 || top.h / 2 < 8 {
            break;
        }
        let down = top.downsample();
        pyr.push(down);
    }
    pyr
}

/// Tracks `corners` from `prev` to `next`.
///
/// `window_px` is the nominal window side; the effective window is the
/// centered odd box of side `2 * (window_px / 2) + 1`. `pyramid_levels` is
/// the number of 2x subsamplings above the full-resolution image; levels
/// that would shrink below 8 px on a side are not built.
///
/// Returns one `FlowVector` per input corner, in input order.
pub fn lk_flow(
    prev: &GrayFrame,
    next: &GrayFrame,
    corners: &[Corner],
    window_px: usize,
    pyramid_levels: usize,
) -> Result<Vec<FlowVector>, VisionError> {
    if prev.width != next.width || prev.height != next.height {
        return Err(VisionError::DimensionMismatch {
            what: "flow frames".to_string(),
            a: (prev.width, prev.height),
            b: (next.width, next.height),
        });
    }
    let pyr_prev = build_pyramid(prev, pyramid_levels);
    let pyr_next = build_pyramid(next, pyramid_levels);
    let levels = pyr_prev.len().min(pyr_next.len());
    let r = (window_px / 2).max(1) as i64;
    let n_win = ((2 * r + 1) * (2 * r + 1)) as f64;
    let max_shift = (prev.width.max(prev.height)) as f64;

    let mut out = Vec::with_capacity(corners.len());
    'corner: for c in corners {
        let lost = FlowVector {
            from: (c.x, c.y),
            to: (c.x, c.y),
            status: FlowStatus::Lost,
        };
        let top = &pyr_prev[levels - 1];
        let scale_top = (1u64 << (levels - 1)) as f64;
        if c.x < 0.0
            || c.y < 0.0
            || c.x / scale_top > (top.w - 1) as f64
            || c.y / scale_top > (top.h - 1) as f64
        {
            out.push(lost);
            continue;
        }

        let mut g = (0.0f64, 0.0f64);
        for level in (0..levels).rev() {
            let img0 = &pyr_prev[level];
            let img1 = &pyr_next[level];
            let scale = (1u64 << level) as f64;
            let px = c.x / scale;
            let py = c.y / scale;

            // Gradients of the first image over the window, fixed for the
            // whole iteration at this level.
            let mut ix = vec![0.0f64; (n_win) as usize];
            let mut iy = vec![0.0f64; (n_win) as usize];
            let mut i0 = vec![0.0f64; (n_win) as usize];
            let mut gxx = 0.0;
            let mut gxy = 0.0;
            let mut gyy = 0.0;
            let mut k = 0;
            for wy in -r..=r {
                for wx in -r..=r {
                    let sx = px + wx as f64;
                    let sy = py + wy as f64;
                    let dx = (img0.sample(sx + 1.0, sy) - img0.sample(sx - 1.0, sy)) / 2.0;
                    let dy = (img0.sample(sx, sy + 1.0) - img0.sample(sx, sy - 1.0)) / 2.0;
                    ix[k] = dx;
                    iy[k] = dy;
                    i0[k] = img0.sample(sx, sy);
                    gxx += dx * dx;
                    gxy += dx * dy;
                    gyy += dy * dy;
                    k += 1;
                }
            }
            let half_trace = (gxx + gyy) / 2.0;
            let lam_min = half_trace - (((gxx - gyy) / 2.0).powi(2) + gxy * gxy).sqrt();
            let det = gxx * gyy - gxy * gxy;
            if lam_min / n_win < LK_MIN_EIG_PER_PX || det <= 1e-12 {
                out.push(lost);
                continue 'corner;
            }

            let mut nu = (0.0f64, 0.0f64);
            for _ in 0..MAX_ITERS {
                let mut bx = 0.0;
                let mut by = 0.0;
                let mut k = 0;
                for wy in -r..=r {
                    for wx in -r..=r {
                        let sx = px + g.0 + nu.0 + wx as f64;
                        let sy = py + g.1 + nu.1 + wy as f64;
                        let diff = i0[k] - img1.sample(sx, sy);
                        bx += diff * ix[k];
                        by += diff * iy[k];
                        k += 1;
                    }
                }
                let dx = (gyy * bx - gxy * by) / det;
                let dy = (gxx * by - gxy * bx) / det;
                nu.0 += dx;
                nu.1 += dy;
                if !nu.0.is_finite() || !nu.1.is_finite() {
                    out.push(lost);
                    continue 'corner;
                }
                if (dx * dx + dy * dy).sqrt() < CONVERGENCE_PX {
                    break;
                }
            }
            if (nu.0 * nu.0 + nu.1 * nu.1).sqrt() > max_shift {
                out.push(lost);
                continue 'corner;
            }
            g = if level > 0 {
                (2.0 * (g.0 + nu.0), 2.0 * (g.1 + nu.1))
            } else {
                (g.0 + nu.0, g.1 + nu.1)
            };
        }

        let to = (c.x + g.0, c.y + g.1);
        let in_frame = to.0 >= 0.0
            && to.1 >= 0.0
            && to.0 <= (prev.width - 1) as f64
            && to.1 <= (prev.height - 1) as f64;
        out.push(FlowVector {
            from: (c.x, c.y),
            to,
            status: if in_frame {
                FlowStatus::Tracked
            } else {
                FlowStatus::Lost
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Smooth analytic pattern so a shifted render is an exact translation
    /// up to u8 quantization.
    fn pattern(x: f64, y: f64) -> u8 {
        let v = 128.0
            + 55.0 * (x * 0.31 + 1.1).sin() * (y * 0.27 + 0.4).cos()
            + 35.0 * (x * 0.11 - y * 0.09).sin();
        v.round().clamp(0.0, 255.0) as u8
    }

    fn render(w: u32, h: u32, dx: f64, dy: f64) -> GrayFrame {
        let mut f = GrayFrame::new(w, h, 0.0);
        for y in 0..h {
            for x in 0..w {
                f.pixels[(y * w + x) as usize] = pattern(x as f64 - dx, y as f64 - dy);
            }
        }
        f
    }

    fn grid_corners(w: u32, h: u32, margin: u32, step: u32) -> Vec<Corner> {
        let mut out = Vec::new();
        let mut y = margin;
        while y < h - margin {
            let mut x = margin;
            while x < w - margin {
                out.push(Corner {
                    x: x as f64,
                    y: y as f64,
                    score: 1.0,
                });
                x += step;
            }
            y += step;
        }
        out
    }

    fn check_translation(dx: f64, dy: f64, levels: usize, tol: f64) {
        let prev = render(96, 96, 0.0, 0.0);
        let next = render(96, 96, dx, dy);
        let corners = grid_corners(96, 96, 20, 12);
        let flows = lk_flow(&prev, &next, &corners, 11, levels).unwrap();
        let mut tracked = 0;
        for f in &flows {
            if f.status != FlowStatus::Tracked {
                continue;
            }
            tracked += 1;
            let (fx, fy) = f.displacement();
            assert!(
                (fx - dx).abs() <= tol && (fy - dy).abs() <= tol,
                "shift ({dx},{dy}): corner {:?} measured ({fx:.3},{fy:.3})",
                f.from
            );
        }
        assert!(
            tracked * 10 >= flows.len() * 9,
            "only {tracked}/{} tracked for shift ({dx},{dy})",
            flows.len()
        );
    }

    #[test]
    fn recovers_integer_translations() {
        check_translation(3.0, -2.0, 2, 0.25);
        check_translation(-1.0, 4.0, 2, 0.25);
    }

    #[test]
    fn recovers_subpixel_translations() {
        check_translation(1.5, -0.75, 2, 0.25);
        check_translation(0.25, 0.5, 2, 0.25);
    }

    #[test]
    fn pyramid_handles_shifts_beyond_window_half() {
        check_translation(4.0, 4.0, 2, 0.25);
        check_translation(-4.0, 3.0, 2, 0.25);
    }

    #[test]
    fn textureless_window_is_lost() {
        let prev = GrayFrame::filled(64, 64, 90, 0.0);
        let next = GrayFrame::filled(64, 64, 90, 0.033);
        let corners = [Corner {
            x: 32.0,
            y: 32.0,
            score: 1.0,
        }];
        let flows = lk_flow(&prev, &next, &corners, 11, 2).unwrap();
        assert_eq!(flows[0].status, FlowStatus::Lost);
        assert_eq!(flows[0].to, flows[0].from);
    }

    #[test]
    fn corner_outside_frame_is_lost() {
        let prev = render(64, 64, 0.0, 0.0);
        let next = render(64, 64, 1.0, 0.0);
        let corners = [Corner {
            x: 200.0,
            y: 10.0,
            score: 1.0,
        }];
        let flows = lk_flow(&prev, &next, &corners, 11, 2).unwrap();
        assert_eq!(flows[0].status, FlowStatus::Lost);
    }

    #[test]
    fn mismatched_frames_error() {
        let a = GrayFrame::new(64, 64, 0.0);
        let b = GrayFrame::new(64, 32, 0.0);
        let err = lk_flow(&a, &b, &[], 11, 2).unwrap_err();
        assert!(matches!(err, VisionError::DimensionMismatch { .. }));
    }

    #[test]
    fn results_follow_input_order() {
        let prev = render(96, 96, 0.0, 0.0);
        let next = render(96, 96, 2.0, 1.0);
        let corners = grid_corners(96, 96, 24, 16);
        let flows = lk_flow(&prev, &next, &corners, 11, 2).unwrap();
        assert_eq!(flows.len(), corners.len());
        for (f, c) in flows.iter().zip(corners.iter()) {
            assert_eq!(f.from, (c.x, c.y));
        }
    }
}
