//! Pinhole renderer producing 8-bit grayscale frames of the scene.
//!
//! The scene is deliberately simple: a flat textured ground plane, a flat
//! sky, and each pedestrian as a filled rectangle standing on the ground,
//! carrying a body-anchored texture so that it produces trackable corners
//! that move with it. A global ambient level scales every pixel, which is
//! how night scenarios are made.

use crate::vision::GrayFrame;

use super::{ScenarioConfig, SimError, WorldState};

const SKY_VALUE: u8 = 35;
const GROUND_MIN: u8 = 25;
const GROUND_SPAN: u64 = 34; // ground values in [25, 58], below the pipeline threshold
const PED_MIN: u8 = 165;
const PED_SPAN: u64 = 86; // pedestrian values in [165, 250]
/// Side length of one pedestrian texture cell, meters on the body. Small
/// enough that neighboring corners stay inside the clustering radius even
/// at the 2 m near edge of the working band.
const PED_CELL_M: f64 = 0.06;

/// Focal length in pixels for a pinhole camera with the given horizontal
/// field of view.
pub fn focal_px(width_px: u32, hfov_deg: f64) -> f64 {
    let half = (hfov_deg / 2.0).to_radians();
    (width_px as f64 / 2.0) / half.tan()
}

/// Continuous image row of a pedestrian's ground contact at longitudinal
/// distance `d`: the camera looks down on the ground plane from its mount
/// height, so the feet row sits `f * height / d` below the horizon.
pub fn ped_bottom_row(cfg: &ScenarioConfig, distance_m: f64) -> f64 {
    let f = focal_px(cfg.camera.width_px, cfg.camera.hfov_deg);
    let cy = cfg.camera.height_px as f64 / 2.0;
    cy + f * cfg.camera.height_m / distance_m
}

fn mix(mut x: u64) -> u64 {
    x ^= x >> 33;
    x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
    x ^= x >> 33;
    x = x.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    x ^= x >> 33;
    x
}

fn hash2(seed: u64, a: i64, b: i64) -> u64 {
    let a = (a as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let b = (b as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    mix(seed ^ a ^ b)
}

/// Renders one frame of the world. Fails with [`SimError::BehindCamera`]
/// if the primary pedestrian is at or behind the camera plane; a second
/// pedestrian behind the plane is simply not drawn.
pub fn render_frame(world: &WorldState, cfg: &ScenarioConfig) -> Result<GrayFrame, SimError> {
    let cam = &cfg.camera;
    let width = cam.width_px;
    let height = cam.height_px;
    let f = focal_px(width, cam.hfov_deg);
    let cx = width as f64 / 2.0;
    let cy = height as f64 / 2.0;
    let horizon = cy.floor() as u32;

    let mut frame = GrayFrame::new(width, height, world.t_s);

    // Sky above (and on) the horizon row, per-pixel hash noise below it.
    // The ground texture is anchored to the image, not the world, so the
    // only optical flow in the scene comes from the pedestrians.
    for y in 0..height {
        for x in 0..width {
            let v = if y <= horizon {
                SKY_VALUE
            } else {
                GROUND_MIN + (hash2(cfg.seed, x as i64, y as i64) % GROUND_SPAN) as u8
            };
            frame.set(x, y, v);
        }
    }

    // Painter's order: farther pedestrian first so the nearer one wins
    // where they overlap.
    let primary_d = world.ped.lon_m - world.vehicle_x_m;
    if primary_d <= 0.0 {
        return Err(SimError::BehindCamera);
    }
    let mut peds: Vec<(usize, f64, f64)> = vec![(0, primary_d, world.ped.lat_m)];
    if let Some(second) = &world.second_ped {
        let d = second.lon_m - world.vehicle_x_m;
        if d > 0.0 {
            peds.push((1, d, second.lat_m));
        }
    }
    peds.sort_by(|a, b| b.1.total_cmp(&a.1));

    let (ped_w, ped_h) = cfg.ped_size_m;
    for &(index, d, lat) in &peds {
        let y_bottom = cy + f * cam.height_m / d;
        let y_top = cy + f * (cam.height_m - ped_h) / d;
        let x_left = cx + f * (lat - ped_w / 2.0) / d;
        let x_right = cx + f * (lat + ped_w / 2.0) / d;

        let y0 = y_top.ceil().max(0.0) as u32;
        let y1 = (y_bottom.floor() as i64).min(height as i64 - 1);
        let x0 = x_left.ceil().max(0.0) as u32;
        let x1 = (x_right.floor() as i64).min(width as i64 - 1);
        if y1 < 0 || x1 < 0 {
            continue;
        }
        let (y1, x1) = (y1 as u32, x1 as u32);

        let texture_seed = mix(cfg.seed ^ (index as u64).wrapping_add(0x517c_c1b7_2722_0a95));
        for y in y0..=y1.min(height - 1) {
            // Height above the feet of the body point seen in this row.
            let z = cam.height_m - (y as f64 - cy) * d / f;
            let cell_v = (z / PED_CELL_M).floor() as i64;
            for x in x0..=x1.min(width - 1) {
                // Lateral offset across the body, from its left edge.
                let u = (x as f64 - cx) * d / f - (lat - ped_w / 2.0);
                let cell_u = (u / PED_CELL_M).floor() as i64;
                let v = PED_MIN + (hash2(texture_seed, cell_u, cell_v) % PED_SPAN) as u8;
                frame.set(x, y, v);
            }
        }
    }

    // Ambient scaling: value * ambient / 255, rounded. Integer arithmetic
    // keeps this bit-exact across platforms.
    let amb = cfg.ambient_level as u32;
    if amb != 255 {
        for p in frame.pixels.iter_mut() {
            *p = ((*p as u32 * amb + 127) / 255) as u8;
        }
    }

    Ok(frame)
}
