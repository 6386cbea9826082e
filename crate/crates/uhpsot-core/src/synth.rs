//! Procedural synthetic scenes for tests and shipped fixtures: a textured
//! object square over a textured background, with optional camera motion,
//! occlusion and zoom.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::BoundingBox;

/// Smooth background intensity field (0..255).
pub fn background_rgb(x: f64, y: f64) -> [f64; 3] {
    let v = 127.5
        + 55.0 * (0.33 * x + 1.3).sin() * (0.26 * y + 0.7).sin()
        + 35.0 * (0.11 * x - 0.21 * y + 0.4).sin();
    [v, 0.8 * v + 20.0, 0.6 * v + 40.0]
}

/// Object texture, visually distinct from the background.
pub fn object_rgb(x: f64, y: f64) -> [f64; 3] {
    let v = 127.5
        + 70.0 * (0.9 * x + 0.2).sin() * (0.8 * y + 1.1).sin()
        + 25.0 * (0.31 * x + 0.43 * y).cos();
    [0.95 * v + 10.0, 0.4 * v + 10.0, 0.3 * v]
}

/// One frame of a synthetic scene. All geometry is in pixel units of the
/// rendered frame.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Translation applied to the background texture (camera motion).
    pub bg_shift: (f64, f64),
    /// Object box; the object texture is rendered inside it.
    pub object: BoundingBox<f64>,
    pub object_visible: bool,
    /// Flat-gray occluder box drawn on top, if any.
    pub occluder: Option<BoundingBox<f64>>,
    /// Global zoom about the object center (1.0 = none).
    pub zoom: f64,
}

impl SceneSpec {
    pub fn new(width: usize, height: usize, object: BoundingBox<f64>) -> Self {
        SceneSpec {
            width,
            height,
            bg_shift: (0.0, 0.0),
            object,
            object_visible: true,
            occluder: None,
            zoom: 1.0,
        }
    }

    pub fn render(&self, index: usize) -> Frame {
        let (w, h) = (self.width, self.height);
        let (ocx, ocy) = self.object.center();
        let mut px = vec![0u8; w * h * 3];
        for py in 0..h {
            for pxx in 0..w {
                // Zoom about the object center, then sample.
                let x = (pxx as f64 - ocx) / self.zoom + ocx;
                let y = (py as f64 - ocy) / self.zoom + ocy;
                let mut rgb;
                let inside_obj = self.object_visible
                    && x >= self.object.x
                    && x < self.object.x + self.object.w
                    && y >= self.object.y
                    && y < self.object.y + self.object.h;
                if inside_obj {
                    rgb = object_rgb(x - self.object.x, y - self.object.y);
                } else {
                    rgb = background_rgb(x + self.bg_shift.0, y + self.bg_shift.1);
                }
                if let Some(occ) = &self.occluder {
                    if x >= occ.x && x < occ.x + occ.w && y >= occ.y && y < occ.y + occ.h {
                        rgb = [90.0, 90.0, 90.0];
                    }
                }
                let i = (py * w + pxx) * 3;
                for c in 0..3 {
                    px[i + c] = rgb[c].round().clamp(0.0, 255.0) as u8;
                }
            }
        }
        Frame::from_rgb(px, w, h, index)
    }
}

/// A fully rendered synthetic test sequence.
pub struct Fixture {
    pub name: &'static str,
    pub frames: Vec<Frame>,
    pub ground_truth: Vec<BoundingBox<f64>>,
    pub occluded: Vec<bool>,
}

impl Fixture {
    /// Write the fixture in OTB sequence layout under `root/<name>/`.
    pub fn write(&self, root: &Path) -> Result<()> {
        let dir = root.join(self.name);
        let img = dir.join("img");
        fs::create_dir_all(&img).map_err(|e| Error::io(&img, e))?;
        let mut gt = String::new();
        for (i, frame) in self.frames.iter().enumerate() {
            frame.save_png(&img.join(format!("{:04}.png", i + 1)))?;
            let b = &self.ground_truth[i];
            gt.push_str(&format!("{},{},{},{}\n", b.x, b.y, b.w, b.h));
        }
        let gt_path = dir.join("groundtruth_rect.txt");
        fs::write(&gt_path, gt).map_err(|e| Error::io(&gt_path, e))?;
        if self.occluded.iter().any(|o| *o) {
            let mask: Vec<&str> = self.occluded.iter().map(|o| if *o { "1" } else { "0" }).collect();
            let p = dir.join("full_occlusion.txt");
            fs::write(&p, mask.join(",")).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// The three sequences shipped with the repository: a static scene, a
/// constant-velocity square over a moving background, and a ten-frame
/// full occlusion.
pub fn standard_fixtures() -> Vec<Fixture> {
    let mut out = Vec::new();

    let obj = BoundingBox::new(40.0, 30.0, 26.0, 26.0);
    let scene = SceneSpec::new(120, 100, obj);
    out.push(Fixture {
        name: "static",
        frames: (1..=16).map(|i| scene.render(i)).collect(),
        ground_truth: vec![obj; 16],
        occluded: vec![false; 16],
    });

    let n = 40;
    let mut frames = Vec::new();
    let mut gt = Vec::new();
    for i in 0..n {
        let bb = BoundingBox::new(30.0 + 2.0 * i as f64, 40.0, 28.0, 28.0);
        let mut s = SceneSpec::new(200, 130, bb);
        s.bg_shift = (-(i as f64), 0.5 * i as f64);
        frames.push(s.render(i + 1));
        gt.push(bb);
    }
    out.push(Fixture {
        name: "linear",
        frames,
        ground_truth: gt,
        occluded: vec![false; n],
    });

    let obj = BoundingBox::new(60.0, 45.0, 28.0, 28.0);
    let n = 30;
    let mut frames = Vec::new();
    let mut occluded = Vec::new();
    for i in 0..n {
        let mut s = SceneSpec::new(160, 120, obj);
        let hidden = (10..20).contains(&i);
        if hidden {
            s.occluder = Some(BoundingBox::new(50.0, 35.0, 48.0, 48.0));
        }
        frames.push(s.render(i + 1));
        occluded.push(hidden);
    }
    out.push(Fixture {
        name: "occlusion",
        frames,
        ground_truth: vec![obj; n],
        occluded,
    });
    out
}
