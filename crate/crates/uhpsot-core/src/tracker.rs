//! The per-frame tracking pipeline: appearance, background-motion and
//! trajectory proposals, fusion, model update, history bookkeeping.

use ndarray::Array2;

use crate::bgmotion::{self, AffineModel, BgParams};
use crate::config::Config;
use crate::dcf::{Dcf, DcfOptions};
use crate::error::Result;
use crate::features::CnTable;
use crate::frame::Frame;
use crate::fusion::{
    self, FusionParams, ModelBank, QualityFlags,
};
use crate::geometry::BoundingBox;
use crate::num::Real;
use crate::trajectory::TrackHistory;

pub struct Tracker<T: Real> {
    dcf: Dcf<T>,
    bank: ModelBank<T>,
    hist: TrackHistory<T>,
    fusion: FusionParams<T>,
    bg: BgParams<T>,
    prev_box: BoundingBox<T>,
    prev_gray: Array2<T>,
    bgd_centers: Vec<(T, T)>,
    disagreement_streak: usize,
    cn: Option<CnTable>,
    is_color: bool,
    enable_bgmotion: bool,
    enable_trajectory: bool,
    motion_skip_px: T,
    frame_index: usize,
}

impl<T: Real> Tracker<T> {
    /// Initialize from the first frame and its ground-truth box; no
    /// prediction is made for this frame.
    pub fn new(frame: &Frame, init_box: &BoundingBox<T>, config: &Config) -> Result<Self> {
        let opts: DcfOptions<T> = config.dcf_options();
        let mut dcf = Dcf::new(init_box, &opts)?;
        let is_color = frame.is_color && !config.force_gray;
        let cn = if config.enable_cn && is_color {
            Some(if config.cn_table.is_empty() {
                CnTable::generate_default()
            } else {
                CnTable::load(std::path::Path::new(&config.cn_table))?
            })
        } else {
            None
        };
        let template = dcf.learn(frame, init_box, T::c(config.mu_app), None, cn.as_ref())?;
        let score = dcf.similarity(frame, &template, init_box, cn.as_ref());
        let color = frame.mean_rgb_in_box(init_box.x, init_box.y, init_box.w, init_box.h)?;
        let mut hist = TrackHistory::new(config.history_n);
        hist.push(*init_box, score, color);
        Ok(Tracker {
            dcf,
            bank: ModelBank::new(template),
            hist,
            fusion: config.fusion_params(),
            bg: config.bg_params(),
            prev_box: *init_box,
            prev_gray: frame.gray(),
            bgd_centers: Vec::new(),
            disagreement_streak: 0,
            cn,
            is_color,
            enable_bgmotion: config.enable_bgmotion,
            enable_trajectory: config.enable_trajectory,
            motion_skip_px: T::c(config.motion_skip_px),
            frame_index: frame.index,
        })
    }

    pub fn current_box(&self) -> BoundingBox<T> {
        self.prev_box
    }

    fn trajectory_proposal(&self) -> Option<BoundingBox<T>> {
        let (cx, cy) = self.hist.predict_center()?;
        let (w, h) = self.hist.predict_size()?;
        Some(BoundingBox::from_center(cx, cy, w, h))
    }

    fn bgmotion_proposal(&mut self, cur_gray: &Array2<T>) -> Option<BoundingBox<T>> {
        let model = match bgmotion::build_correspondences(
            &self.prev_gray,
            cur_gray,
            Some(&self.prev_box),
            &self.bg,
        ) {
            Ok(c) => match bgmotion::fit_affine(&c, self.bg.outlier_px) {
                Ok(m) if m.is_finite() => m,
                _ => AffineModel::identity(),
            },
            // flat or tiny frames: fall back to a pure difference map
            Err(_) => AffineModel::identity(),
        };
        let residual = bgmotion::residual_map(&self.prev_gray, cur_gray, &model);
        let (bb, raw_size) =
            bgmotion::propose_box_from_residual(&residual, &self.prev_box, &self.bg)?;
        let (cx, cy) = bb.center();
        // size estimates that stray from the size trajectory are rejected;
        // the centroid location is kept either way
        let (w, h) = self
            .hist
            .filter_size_estimate(raw_size)
            .unwrap_or((self.prev_box.w, self.prev_box.h));
        Some(BoundingBox::from_center(cx, cy, w, h))
    }

    fn learn_update(&mut self, frame: &Frame, bb: &BoundingBox<T>, mu: T) {
        let prev = self.bank.latest.clone();
        match self.dcf.learn(frame, bb, mu, Some(&prev), self.cn.as_ref()) {
            Ok(t) => self.bank.latest = t,
            Err(e) => log::warn!("frame {}: model update failed: {e}", frame.index),
        }
    }

    fn push_history(&mut self, frame: &Frame, bb: &BoundingBox<T>, score: T) {
        let color = frame
            .mean_rgb_in_box(bb.x, bb.y, bb.w, bb.h)
            .unwrap_or([T::zero(); 3]);
        self.hist.push(*bb, score, color);
    }

    /// Track one frame; returns the fused box.
    pub fn step(&mut self, frame: &Frame) -> Result<BoundingBox<T>> {
        let (app_box, _, app_scale) =
            self.dcf
                .propose(frame, &self.prev_box, &self.bank.latest, self.cn.as_ref())?;
        let app_box = app_box.clamp_to_frame(frame.width(), frame.height());
        let cur_gray = frame.gray();

        let baseline_only = !self.enable_bgmotion && !self.enable_trajectory;
        let no_motion = app_box.center_error(&self.prev_box) < self.motion_skip_px
            && app_scale == T::one();
        if baseline_only || no_motion {
            let score = self
                .dcf
                .similarity(frame, &self.bank.latest, &app_box, self.cn.as_ref());
            self.learn_update(frame, &app_box, self.fusion.mu_app);
            self.push_history(frame, &app_box, score);
            self.prev_box = app_box;
            self.prev_gray = cur_gray;
            self.frame_index = frame.index;
            log::debug!(
                "frame {}: appearance only (baseline {baseline_only}, still {no_motion})",
                frame.index
            );
            return Ok(app_box);
        }

        let trj = if self.enable_trajectory {
            self.trajectory_proposal()
        } else {
            None
        };
        let bgd = if self.enable_bgmotion {
            self.bgmotion_proposal(&cur_gray)
        } else {
            None
        };
        if let Some(b) = &bgd {
            self.bgd_centers.push(b.center());
            if self.bgd_centers.len() > self.fusion.bgd_std_window {
                self.bgd_centers.remove(0);
            }
        }
        let proposals = [
            app_box,
            trj.unwrap_or(self.prev_box),
            bgd.unwrap_or(self.prev_box),
        ];

        let scores = fusion::similarity_scores(
            &mut self.dcf,
            &self.bank,
            frame,
            &proposals,
            self.cn.as_ref(),
        );
        let mut sims = fusion::best_per_proposal(&scores);
        if trj.is_none() {
            sims[1] = T::zero();
        }
        if bgd.is_none() {
            sims[2] = T::zero();
        }

        let current_color = if self.is_color {
            frame
                .mean_rgb_in_box(app_box.x, app_box.y, app_box.w, app_box.h)
                .ok()
        } else {
            None
        };
        let occluded = fusion::detect_occlusion(&self.hist, sims[0], current_color, &self.fusion);

        let flags: QualityFlags =
            fusion::assess_quality(&sims, &proposals, &self.prev_box, &self.bgd_centers, &self.fusion);
        let decision = fusion::fuse(
            flags,
            &proposals,
            &sims,
            &self.prev_box,
            occluded,
            self.disagreement_streak,
            &self.fusion,
        );
        log::debug!(
            "frame {}: case {} mu {} occluded {} app {:?} trj {:?} bgd {:?} -> {:?}",
            frame.index,
            decision.case_id,
            decision.mu_selected,
            decision.occluded,
            proposals[0],
            trj,
            bgd,
            decision.bb,
        );

        let agree = fusion::proposals_agree(&proposals, &self.fusion);
        let pairwise_overlap = proposals[0].iou(&proposals[1]) >= self.fusion.iou_thresh
            && proposals[0].iou(&proposals[2]) >= self.fusion.iou_thresh
            && proposals[1].iou(&proposals[2]) >= self.fusion.iou_thresh;
        if pairwise_overlap {
            self.disagreement_streak = 0;
        } else {
            self.disagreement_streak += 1;
        }

        let bb = decision.bb.clamp_to_frame(frame.width(), frame.height());
        if decision.update_model {
            // learn at the appearance detection whenever it took part in
            // the decision: relearning at a merged box that trails the
            // detection bakes the trailing offset into the template and
            // the track settles behind a moving target. An override (the
            // appearance proposal lost) relearns at the fused box so the
            // template is pulled back toward the object.
            let learn_box = if decision.mu_selected == self.fusion.mu_override {
                bb
            } else {
                proposals[0]
            };
            self.learn_update(frame, &learn_box, decision.mu_selected);
            if agree {
                self.bank.refresh_anchor();
            }
        }
        // while occluded the track is held, so the score and color history
        // is held too; otherwise the drop test would renormalize against
        // the occluder and release the freeze prematurely
        if !decision.occluded {
            self.push_history(frame, &bb, sims[0]);
        }
        self.prev_box = bb;
        self.prev_gray = cur_gray;
        self.frame_index = frame.index;
        Ok(bb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::SceneSpec;

    fn track_scene(
        frames: &[Frame],
        init: BoundingBox<f64>,
        config: &Config,
    ) -> Vec<BoundingBox<f64>> {
        let mut tracker = Tracker::new(&frames[0], &init, config).unwrap();
        let mut out = vec![init];
        for f in &frames[1..] {
            out.push(tracker.step(f).unwrap());
        }
        out
    }

    #[test]
    fn static_scene_is_a_fixed_point() {
        let obj = BoundingBox::new(50.0, 40.0, 30.0, 30.0);
        let scene = SceneSpec::new(160, 120, obj);
        let frames: Vec<Frame> = (0..8).map(|i| scene.render(i)).collect();
        let boxes = track_scene(&frames, obj, &Config::default());
        for (i, b) in boxes.iter().enumerate() {
            assert!(
                b.iou(&obj) > 0.9,
                "frame {i}: drifted to {b:?} (IoU {})",
                b.iou(&obj)
            );
        }
    }

    #[test]
    fn constant_velocity_over_moving_background() {
        let init = BoundingBox::new(30.0, 40.0, 28.0, 28.0);
        let mut frames = Vec::new();
        for i in 0..12 {
            let mut s = SceneSpec::new(
                200,
                130,
                BoundingBox::new(30.0 + 4.0 * i as f64, 40.0, 28.0, 28.0),
            );
            s.bg_shift = (-1.5 * i as f64, 0.5 * i as f64);
            frames.push(s.render(i));
        }
        let boxes = track_scene(&frames, init, &Config::default());
        for (i, b) in boxes.iter().enumerate() {
            let gt = BoundingBox::new(30.0 + 4.0 * i as f64, 40.0, 28.0, 28.0);
            assert!(b.iou(&gt) > 0.55, "frame {i}: IoU {}", b.iou(&gt));
        }
    }

    #[test]
    fn occlusion_freezes_then_reacquires() {
        let obj = BoundingBox::new(60.0, 45.0, 28.0, 28.0);
        let mut frames = Vec::new();
        for i in 0..20 {
            let mut s = SceneSpec::new(160, 120, obj);
            if (5..15).contains(&i) {
                s.occluder = Some(BoundingBox::new(50.0, 35.0, 48.0, 48.0));
            }
            frames.push(s.render(i));
        }
        let boxes = track_scene(&frames, obj, &Config::default());
        // never drifts far while hidden, and reacquires afterwards
        for (i, b) in boxes.iter().enumerate().skip(15) {
            assert!(b.iou(&obj) > 0.7, "frame {i}: IoU {}", b.iou(&obj));
        }
        for (i, b) in boxes.iter().enumerate() {
            assert!(b.center_error(&obj) < 15.0, "frame {i}: {b:?}");
        }
    }

    #[test]
    fn ablation_matches_standalone_baseline_bit_exactly() {
        let init = BoundingBox::new(30.0, 40.0, 28.0, 28.0);
        let mut frames = Vec::new();
        for i in 0..8 {
            let s = SceneSpec::new(
                180,
                130,
                BoundingBox::new(30.0 + 3.0 * i as f64, 40.0 + i as f64, 28.0, 28.0),
            );
            frames.push(s.render(i));
        }
        let config = Config {
            enable_bgmotion: false,
            enable_trajectory: false,
            ..Config::default()
        };
        let pipeline = track_scene(&frames, init, &config);

        // standalone correlation-filter loop: propose, relearn, repeat
        let opts: DcfOptions<f64> = config.dcf_options();
        let mut dcf = Dcf::new(&init, &opts).unwrap();
        let cn = CnTable::generate_default();
        let mut template = dcf
            .learn(&frames[0], &init, config.mu_app, None, Some(&cn))
            .unwrap();
        let mut bb = init;
        let mut baseline = vec![init];
        for f in &frames[1..] {
            let (next, _, _) = dcf.propose(f, &bb, &template, Some(&cn)).unwrap();
            bb = next.clamp_to_frame(f.width(), f.height());
            template = dcf
                .learn(f, &bb, config.mu_app, Some(&template), Some(&cn))
                .unwrap();
            baseline.push(bb);
        }
        assert_eq!(pipeline, baseline);
    }

    #[test]
    fn grayscale_input_disables_color_machinery() {
        let obj = BoundingBox::new(50.0, 40.0, 30.0, 30.0);
        let scene = SceneSpec::new(160, 120, obj);
        let frames: Vec<Frame> = (0..4).map(|i| scene.render(i)).collect();
        let config = Config {
            force_gray: true,
            ..Config::default()
        };
        let mut tracker = Tracker::new(&frames[0], &obj, &config).unwrap();
        assert!(tracker.cn.is_none());
        assert!(!tracker.is_color);
        for f in &frames[1..] {
            let b = tracker.step(f).unwrap();
            assert!(b.iou(&obj) > 0.8);
        }
    }

    #[test]
    fn causality_prefix_runs_match() {
        let init = BoundingBox::new(30.0, 40.0, 28.0, 28.0);
        let mut frames = Vec::new();
        for i in 0..10 {
            let mut s = SceneSpec::new(
                180,
                130,
                BoundingBox::new(30.0 + 3.0 * i as f64, 40.0, 28.0, 28.0),
            );
            s.bg_shift = (i as f64, 0.0);
            frames.push(s.render(i));
        }
        let full = track_scene(&frames, init, &Config::default());
        let prefix = track_scene(&frames[..6], init, &Config::default());
        assert_eq!(&full[..6], &prefix[..]);
    }
}
