//! Sliding-window tiling of large rasters and vote-based stitching of
//! per-tile label maps.
//!
//! Origins per axis are 0, step, 2*step, ... while the window still falls
//! short of the far edge, plus a final origin clamped to `extent - window`
//! so no pixels are discarded. Images smaller than the window produce a
//! single origin at 0 and are edge-replicated at extraction; the padded
//! region is excluded when stitching.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GrayImage, LabelMask, RgbImage};

pub const DEFAULT_WINDOW: u32 = 896;
pub const DEFAULT_STEP: u32 = 512;

/// The tiling of one image: window/step parameters plus the row-major list
/// of top-left tile corners. Serializes as the JSON plan manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilePlan {
    pub image_width: u32,
    pub image_height: u32,
    pub window: u32,
    pub step: u32,
    pub origins: Vec<(u32, u32)>,
}

fn axis_origins(extent: u32, window: u32, step: u32) -> Vec<u32> {
    if extent <= window {
        return vec![0];
    }
    let mut origins = Vec::new();
    let mut o = 0u64;
    while o + (window as u64) < extent as u64 {
        origins.push(o as u32);
        o += step as u64;
    }
    origins.push(extent - window);
    origins
}

/// Plan the tiling of a `image_width` x `image_height` raster.
pub fn plan_tiles(image_width: u32, image_height: u32, window: u32, step: u32) -> Result<TilePlan> {
    if image_width == 0 || image_height == 0 {
        return Err(Error::Parameter(format!(
            "image extent must be positive, got {image_width}x{image_height}"
        )));
    }
    if window == 0 || step == 0 {
        return Err(Error::Parameter(format!(
            "window and step must be positive, got window={window} step={step}"
        )));
    }
    if step > window {
        return Err(Error::Parameter(format!(
            "step {step} larger than window {window} would leave uncovered pixels"
        )));
    }
    let xs = axis_origins(image_width, window, step);
    let ys = axis_origins(image_height, window, step);
    let mut origins = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            origins.push((x, y));
        }
    }
    Ok(TilePlan {
        image_width,
        image_height,
        window,
        step,
        origins,
    })
}

impl TilePlan {
    /// Check a deserialized manifest for internal consistency.
    pub fn validate(&self) -> Result<()> {
        let fresh = plan_tiles(self.image_width, self.image_height, self.window, self.step)?;
        if fresh.origins != self.origins {
            return Err(Error::Data(
                "manifest origins do not match its window/step parameters".into(),
            ));
        }
        Ok(())
    }

    /// Size of the in-image part of the tile at `origin`; the rest of the
    /// window is replication padding.
    pub fn valid_extent(&self, origin: (u32, u32)) -> (u32, u32) {
        (
            self.window.min(self.image_width - origin.0.min(self.image_width)),
            self.window.min(self.image_height - origin.1.min(self.image_height)),
        )
    }
}

/// File name for the tile anchored at `origin`: `<stem>_x<x>_y<y>.<ext>`.
pub fn tile_file_name(stem: &str, origin: (u32, u32), ext: &str) -> String {
    format!("{stem}_x{}_y{}.{ext}", origin.0, origin.1)
}

fn check_origin(
    image_width: u32,
    image_height: u32,
    origin: (u32, u32),
    window: u32,
) -> Result<()> {
    let max_x = image_width.saturating_sub(window);
    let max_y = image_height.saturating_sub(window);
    if origin.0 > max_x || origin.1 > max_y {
        return Err(Error::Parameter(format!(
            "tile origin ({}, {}) outside plan bounds ({max_x}, {max_y}) \
             for window {window}",
            origin.0, origin.1
        )));
    }
    Ok(())
}

fn extract_planes(
    src: &[u8],
    bpp: usize,
    width: u32,
    height: u32,
    origin: (u32, u32),
    window: u32,
) -> Vec<u8> {
    let mut out = Vec::with_capacity(bpp * window as usize * window as usize);
    for ty in 0..window {
        let sy = (origin.1 + ty).min(height - 1) as usize;
        for tx in 0..window {
            let sx = (origin.0 + tx).min(width - 1) as usize;
            let base = bpp * (sy * width as usize + sx);
            out.extend_from_slice(&src[base..base + bpp]);
        }
    }
    out
}

/// `window` x `window` crop with edge replication past the image borders.
pub fn extract_tile_gray(img: &GrayImage, origin: (u32, u32), window: u32) -> Result<GrayImage> {
    check_origin(img.width(), img.height(), origin, window)?;
    let data = extract_planes(img.data(), 1, img.width(), img.height(), origin, window);
    GrayImage::new(window, window, data)
}

pub fn extract_tile_rgb(img: &RgbImage, origin: (u32, u32), window: u32) -> Result<RgbImage> {
    check_origin(img.width(), img.height(), origin, window)?;
    let data = extract_planes(img.data(), 3, img.width(), img.height(), origin, window);
    RgbImage::new(window, window, data)
}

pub fn extract_tile_mask(mask: &LabelMask, origin: (u32, u32), window: u32) -> Result<LabelMask> {
    check_origin(mask.width(), mask.height(), origin, window)?;
    let data = extract_planes(mask.labels(), 1, mask.width(), mask.height(), origin, window);
    LabelMask::new(window, window, data)
}

/// Reassemble a full-size label mask from per-tile masks. Overlapping tiles
/// vote per pixel; ties go to the lowest class index. Padded tile regions
/// do not vote.
pub fn stitch_labels(plan: &TilePlan, tiles: &[LabelMask], num_classes: usize) -> Result<LabelMask> {
    if tiles.len() != plan.origins.len() {
        return Err(Error::Parameter(format!(
            "{} tiles for a plan with {} origins",
            tiles.len(),
            plan.origins.len()
        )));
    }
    if num_classes == 0 || num_classes > 256 {
        return Err(Error::Parameter(format!(
            "num_classes must be in 1..=256, got {num_classes}"
        )));
    }
    for (i, t) in tiles.iter().enumerate() {
        if (t.width(), t.height()) != (plan.window, plan.window) {
            return Err(Error::Data(format!(
                "tile {i} is {}x{}, expected window {}x{}",
                t.width(),
                t.height(),
                plan.window,
                plan.window
            )));
        }
    }

    let (w, h) = (plan.image_width as usize, plan.image_height as usize);
    let mut out = vec![0u8; w * h];
    // One row of vote counters at a time keeps memory at W * C.
    let mut votes = vec![0u32; w * num_classes];
    for y in 0..plan.image_height {
        votes.fill(0);
        for (tile, &(ox, oy)) in tiles.iter().zip(&plan.origins) {
            let (vw, vh) = plan.valid_extent((ox, oy));
            if y < oy || y >= oy + vh {
                continue;
            }
            let ty = y - oy;
            for tx in 0..vw {
                let label = tile.label(tx, ty) as usize;
                if label >= num_classes {
                    return Err(Error::Data(format!(
                        "tile at ({ox}, {oy}) pixel ({tx}, {ty}): label {label} \
                         out of range for {num_classes} classes"
                    )));
                }
                votes[(ox + tx) as usize * num_classes + label] += 1;
            }
        }
        let row = &mut out[y as usize * w..][..w];
        for (x, slot) in row.iter_mut().enumerate() {
            let cell = &votes[x * num_classes..][..num_classes];
            let mut best = 0usize;
            let mut best_votes = cell[0];
            for (c, &v) in cell.iter().enumerate().skip(1) {
                if v > best_votes {
                    best = c;
                    best_votes = v;
                }
            }
            *slot = best as u8;
        }
    }
    Ok(LabelMask::from_raw(plan.image_width, plan.image_height, out))
}
