//! Proposal fusion: quality flags for the three box proposals, occlusion
//! detection, and the 8-case rule table that picks the final box, the
//! regularization strength for the model update, and whether to update.

use crate::dcf::{Dcf, Template};
use crate::features::CnTable;
use crate::frame::Frame;
use crate::geometry::{min_cover, BoundingBox};
use crate::num::Real;
use crate::trajectory::TrackHistory;

/// Latest appearance model plus an older anchor model kept from the last
/// frame where all three proposals agreed on the object location.
#[derive(Debug, Clone)]
pub struct ModelBank<T: Real> {
    pub latest: Template<T>,
    pub anchor: Template<T>,
    pub anchor_frame: usize,
}

impl<T: Real> ModelBank<T> {
    pub fn new(initial: Template<T>) -> Self {
        let frame = initial.frame_learned;
        ModelBank {
            latest: initial.clone(),
            anchor: initial,
            anchor_frame: frame,
        }
    }

    pub fn refresh_anchor(&mut self) {
        self.anchor = self.latest.clone();
        self.anchor_frame = self.latest.frame_learned;
    }
}

/// Per-proposal goodness bits, appearance / trajectory / background order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QualityFlags {
    pub app: bool,
    pub trj: bool,
    pub bgd: bool,
}

impl QualityFlags {
    pub fn case_id(&self) -> u8 {
        (self.app as u8) << 2 | (self.trj as u8) << 1 | self.bgd as u8
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionDecision<T> {
    pub bb: BoundingBox<T>,
    pub case_id: u8,
    pub mu_selected: T,
    pub update_model: bool,
    pub occluded: bool,
}

#[derive(Debug, Clone)]
pub struct FusionParams<T> {
    /// A correlation score above this counts as good similarity.
    pub sim_threshold: T,
    /// Displacement from the previous box above this is not robust.
    pub robustness_px: T,
    /// Axis-wise std bound on recent background-proposal centers.
    pub bgd_std_px: T,
    pub bgd_std_window: usize,
    pub iou_thresh: T,
    /// Regularization when the appearance box is adopted alone.
    pub mu_app: T,
    /// Regularization when proposals merge.
    pub mu_merge: T,
    /// Regularization when a non-appearance proposal wins over B_app.
    pub mu_override: T,
    /// Regularization for a three-way merge after a disagreement streak.
    pub mu_stronger: T,
    pub disagreement_streak: usize,
    /// Anchor refresh: pairwise center distance and IoU bounds.
    pub anchor_center_px: T,
    pub anchor_iou: T,
    /// Occlusion: score-drop ratio, color-shift floor, history window.
    pub occl_score_ratio: T,
    pub occl_color_delta: T,
    pub occl_window: usize,
}

impl<T: Real> Default for FusionParams<T> {
    fn default() -> Self {
        FusionParams {
            sim_threshold: T::c(0.08),
            robustness_px: T::c(30.0),
            bgd_std_px: T::c(30.0),
            bgd_std_window: 10,
            iou_thresh: T::c(0.5),
            mu_app: T::c(15.0),
            mu_merge: T::c(10.0),
            mu_override: T::c(5.0),
            mu_stronger: T::zero(),
            disagreement_streak: 3,
            anchor_center_px: T::c(3.0),
            anchor_iou: T::c(0.7),
            occl_score_ratio: T::c(0.5),
            occl_color_delta: T::c(20.0),
            occl_window: 5,
        }
    }
}

/// Correlation scores of the three proposals against both stored models,
/// `[template][proposal]` with proposals in app/trj/bgd order. Degenerate
/// proposals score 0.
pub fn similarity_scores<T: Real>(
    dcf: &mut Dcf<T>,
    bank: &ModelBank<T>,
    frame: &Frame,
    proposals: &[BoundingBox<T>; 3],
    cn: Option<&CnTable>,
) -> [[T; 3]; 2] {
    let mut out = [[T::zero(); 3]; 2];
    for (ti, template) in [&bank.latest, &bank.anchor].into_iter().enumerate() {
        for (pi, bb) in proposals.iter().enumerate() {
            out[ti][pi] = dcf.similarity(frame, template, bb, cn);
        }
    }
    out
}

/// Best score of each proposal over the two templates.
pub fn best_per_proposal<T: Real>(scores: &[[T; 3]; 2]) -> [T; 3] {
    [
        scores[0][0].max(scores[1][0]),
        scores[0][1].max(scores[1][1]),
        scores[0][2].max(scores[1][2]),
    ]
}

fn displacement<T: Real>(a: &BoundingBox<T>, b: &BoundingBox<T>) -> T {
    a.center_error(b)
}

/// Axis-wise standard deviation of recent background-proposal centers;
/// with fewer than 2 samples the history is considered steady.
fn bgd_center_steady<T: Real>(centers: &[(T, T)], window: usize, bound: T) -> bool {
    let take = window.min(centers.len());
    if take < 2 {
        return true;
    }
    let recent = &centers[centers.len() - take..];
    let n = T::from_index(take);
    for sel in 0..2 {
        let comp = |p: &(T, T)| if sel == 0 { p.0 } else { p.1 };
        let mean = recent.iter().map(comp).sum::<T>() / n;
        let var = recent.iter().map(|p| (comp(p) - mean).powi(2)).sum::<T>() / n;
        if var.sqrt() > bound {
            return false;
        }
    }
    true
}

/// Flag each proposal: similarity above threshold plus, for app/trj, a
/// bounded displacement from the previous box, and for bgd a steady recent
/// center history.
pub fn assess_quality<T: Real>(
    sims: &[T; 3],
    proposals: &[BoundingBox<T>; 3],
    prev_box: &BoundingBox<T>,
    bgd_centers: &[(T, T)],
    params: &FusionParams<T>,
) -> QualityFlags {
    let good_sim = |i: usize| sims[i] > params.sim_threshold;
    let robust = |i: usize| displacement(&proposals[i], prev_box) <= params.robustness_px;
    QualityFlags {
        app: good_sim(0) && robust(0),
        trj: good_sim(1) && robust(1),
        bgd: good_sim(2)
            && bgd_center_steady(bgd_centers, params.bgd_std_window, params.bgd_std_px),
    }
}

/// Occlusion = sudden score drop plus (for color input) a rapid shift of
/// the mean box color. Needs a full score window of history.
pub fn detect_occlusion<T: Real>(
    hist: &TrackHistory<T>,
    current_score: T,
    current_color: Option<[T; 3]>,
    params: &FusionParams<T>,
) -> bool {
    if hist.len() < params.occl_window {
        return false;
    }
    let mean_score = match hist.recent_score_mean(params.occl_window) {
        Some(m) => m,
        None => return false,
    };
    let score_drop = current_score < params.occl_score_ratio * mean_score;
    if !score_drop {
        return false;
    }
    match (current_color, hist.recent_color_mean(params.occl_window)) {
        (Some(cur), Some(mean)) => {
            let max_shift = (0..3)
                .map(|k| (cur[k] - mean[k]).abs())
                .fold(T::zero(), T::max);
            max_shift > params.occl_color_delta
        }
        // grayscale input: the score test alone decides
        _ => true,
    }
}

/// True when all three proposals land on the same location: every pairwise
/// center distance within `anchor_center_px` and IoU at least `anchor_iou`.
pub fn proposals_agree<T: Real>(
    proposals: &[BoundingBox<T>; 3],
    params: &FusionParams<T>,
) -> bool {
    for i in 0..3 {
        for j in i + 1..3 {
            if displacement(&proposals[i], &proposals[j]) > params.anchor_center_px
                || proposals[i].iou(&proposals[j]) < params.anchor_iou
            {
                return false;
            }
        }
    }
    true
}

/// Apply the 8-case rule table. `proposals` in app/trj/bgd order; `sims`
/// the best per-proposal similarity; `streak` counts consecutive frames of
/// three-way disagreement before this one.
pub fn fuse<T: Real>(
    flags: QualityFlags,
    proposals: &[BoundingBox<T>; 3],
    sims: &[T; 3],
    prev_box: &BoundingBox<T>,
    occluded: bool,
    streak: usize,
    params: &FusionParams<T>,
) -> FusionDecision<T> {
    let case_id = flags.case_id();
    if occluded {
        return FusionDecision {
            bb: *prev_box,
            case_id,
            mu_selected: params.mu_app,
            update_model: false,
            occluded: true,
        };
    }
    let app = &proposals[0];
    let overlap = |i: usize, j: usize| proposals[i].iou(&proposals[j]) >= params.iou_thresh;
    // merged box: union center, size from one designated member. A union
    // size would grow by the members' center gap every frame and the
    // track balloons; trj/bgd sizes are recycled from the previous box,
    // so the appearance proposal is the only genuine size estimate.
    let merge = |boxes: &[BoundingBox<T>], size_from: &BoundingBox<T>| {
        let (cx, cy) = min_cover(boxes).center();
        BoundingBox::from_center(cx, cy, size_from.w, size_from.h)
    };
    // smaller displacement from the previous box wins
    let more_robust = |i: usize, j: usize| {
        if displacement(&proposals[i], prev_box) <= displacement(&proposals[j], prev_box) {
            i
        } else {
            j
        }
    };

    let (bb, mu) = match (flags.app, flags.trj, flags.bgd) {
        (true, true, true) => {
            if overlap(0, 1) && overlap(0, 2) && overlap(1, 2) {
                let mu = if streak >= params.disagreement_streak {
                    params.mu_stronger
                } else {
                    params.mu_merge
                };
                (merge(proposals, app), mu)
            } else {
                (*app, params.mu_app)
            }
        }
        (true, true, false) | (true, false, true) => {
            let other = if flags.trj { 1 } else { 2 };
            if overlap(0, other) {
                (merge(&[proposals[0], proposals[other]], app), params.mu_merge)
            } else {
                let pick = more_robust(0, other);
                let mu = if pick == 0 { params.mu_app } else { params.mu_override };
                (proposals[pick], mu)
            }
        }
        (false, true, true) => {
            if overlap(1, 2) {
                let lead = more_robust(1, 2);
                (
                    merge(&[proposals[1], proposals[2]], &proposals[lead]),
                    params.mu_override,
                )
            } else {
                (proposals[more_robust(1, 2)], params.mu_override)
            }
        }
        (true, false, false) => (*app, params.mu_app),
        (false, true, false) | (false, false, true) => {
            let i = if flags.trj { 1 } else { 2 };
            let beats_app = sims[i] > sims[0]
                || displacement(&proposals[i], prev_box) < displacement(app, prev_box);
            if beats_app {
                (proposals[i], params.mu_override)
            } else {
                (*app, params.mu_app)
            }
        }
        (false, false, false) => (*app, params.mu_app),
    };
    FusionDecision {
        bb,
        case_id,
        mu_selected: mu,
        update_model: true,
        occluded: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcf::DcfOptions;
    use crate::synth::SceneSpec;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    type BB = BoundingBox<f64>;

    fn params() -> FusionParams<f64> {
        FusionParams::default()
    }

    #[test]
    fn case_id_packs_flags() {
        let f = QualityFlags {
            app: true,
            trj: true,
            bgd: true,
        };
        assert_eq!(f.case_id(), 7);
        let f = QualityFlags {
            app: false,
            trj: true,
            bgd: false,
        };
        assert_eq!(f.case_id(), 2);
        let f = QualityFlags {
            app: false,
            trj: false,
            bgd: false,
        };
        assert_eq!(f.case_id(), 0);
    }

    #[test]
    fn all_good_overlapping_merges_at_union_center() {
        let p = [
            BB::new(10.0, 10.0, 20.0, 20.0),
            BB::new(12.0, 11.0, 20.0, 20.0),
            BB::new(11.0, 12.0, 20.0, 20.0),
        ];
        let flags = QualityFlags {
            app: true,
            trj: true,
            bgd: true,
        };
        let d = fuse(flags, &p, &[0.5; 3], &p[0], false, 0, &params());
        assert_eq!(d.case_id, 7);
        assert_eq!(d.mu_selected, 10.0);
        // union center, appearance-proposal size
        let cover = min_cover(&p);
        assert_eq!(d.bb.center(), cover.center());
        assert_eq!((d.bb.w, d.bb.h), (p[0].w, p[0].h));
        assert!(d.update_model);
    }

    #[test]
    fn all_good_disjoint_keeps_appearance() {
        let p = [
            BB::new(10.0, 10.0, 20.0, 20.0),
            BB::new(80.0, 10.0, 20.0, 20.0),
            BB::new(10.0, 80.0, 20.0, 20.0),
        ];
        let flags = QualityFlags {
            app: true,
            trj: true,
            bgd: true,
        };
        let d = fuse(flags, &p, &[0.5; 3], &p[0], false, 0, &params());
        assert_eq!(d.bb, p[0]);
        assert_eq!(d.mu_selected, 15.0);
    }

    #[test]
    fn disagreement_streak_strengthens_merge() {
        let p = [BB::new(10.0, 10.0, 20.0, 20.0); 3];
        let flags = QualityFlags {
            app: true,
            trj: true,
            bgd: true,
        };
        let d = fuse(flags, &p, &[0.5; 3], &p[0], false, 3, &params());
        assert_eq!(d.mu_selected, 0.0);
    }

    #[test]
    fn occlusion_holds_previous_box_without_update() {
        let prev = BB::new(30.0, 30.0, 10.0, 10.0);
        let p = [
            BB::new(90.0, 90.0, 10.0, 10.0),
            BB::new(10.0, 10.0, 10.0, 10.0),
            BB::new(50.0, 50.0, 10.0, 10.0),
        ];
        let flags = QualityFlags {
            app: false,
            trj: false,
            bgd: false,
        };
        let d = fuse(flags, &p, &[0.0; 3], &prev, true, 0, &params());
        assert_eq!(d.bb, prev);
        assert!(!d.update_model);
        assert!(d.occluded);
    }

    #[test]
    fn lone_trajectory_wins_only_when_it_beats_appearance() {
        let prev = BB::new(30.0, 30.0, 10.0, 10.0);
        let app = BB::new(60.0, 30.0, 10.0, 10.0);
        let trj = BB::new(32.0, 30.0, 10.0, 10.0);
        let p = [app, trj, BB::new(90.0, 90.0, 10.0, 10.0)];
        let flags = QualityFlags {
            app: false,
            trj: true,
            bgd: false,
        };
        // higher similarity: trj adopted
        let d = fuse(flags, &p, &[0.05, 0.2, 0.0], &prev, false, 0, &params());
        assert_eq!(d.bb, trj);
        assert_eq!(d.mu_selected, 5.0);
        // lower similarity but closer to prev: still adopted via robustness
        let d = fuse(flags, &p, &[0.05, 0.01, 0.0], &prev, false, 0, &params());
        assert_eq!(d.bb, trj);
        // neither better: appearance kept
        let far_trj = BB::new(90.0, 30.0, 10.0, 10.0);
        let p2 = [app, far_trj, p[2]];
        let d = fuse(flags, &p2, &[0.05, 0.01, 0.0], &prev, false, 0, &params());
        assert_eq!(d.bb, app);
        assert_eq!(d.mu_selected, 15.0);
    }

    #[test]
    fn two_good_without_overlap_picks_more_robust() {
        let prev = BB::new(30.0, 30.0, 10.0, 10.0);
        let app = BB::new(70.0, 30.0, 10.0, 10.0);
        let bgd = BB::new(33.0, 30.0, 10.0, 10.0);
        let p = [app, BB::new(0.0, 0.0, 10.0, 10.0), bgd];
        let flags = QualityFlags {
            app: true,
            trj: false,
            bgd: true,
        };
        let d = fuse(flags, &p, &[0.5, 0.0, 0.5], &prev, false, 0, &params());
        assert_eq!(d.bb, bgd);
        assert_eq!(d.mu_selected, 5.0);
    }

    #[test]
    fn fuse_total_over_all_cases() {
        let prev = BB::new(30.0, 30.0, 12.0, 12.0);
        let p = [
            BB::new(31.0, 30.0, 12.0, 12.0),
            BB::new(30.0, 31.0, 12.0, 12.0),
            BB::new(80.0, 80.0, 12.0, 12.0),
        ];
        let disjoint = [
            BB::new(10.0, 10.0, 12.0, 12.0),
            BB::new(50.0, 10.0, 12.0, 12.0),
            BB::new(10.0, 50.0, 12.0, 12.0),
        ];
        for bits in 0..8u8 {
            let flags = QualityFlags {
                app: bits & 4 != 0,
                trj: bits & 2 != 0,
                bgd: bits & 1 != 0,
            };
            for occluded in [false, true] {
                for props in [&p, &disjoint] {
                    let d = fuse(flags, props, &[0.3, 0.2, 0.1], &prev, occluded, 0, &params());
                    assert_eq!(d.case_id, bits);
                    assert!(d.bb.is_valid());
                    assert!([15.0, 10.0, 5.0, 0.0].contains(&d.mu_selected));
                    if occluded {
                        assert_eq!(d.bb, prev);
                        assert!(!d.update_model);
                    }
                }
            }
        }
    }

    #[test]
    fn fixed_point_when_everything_agrees() {
        let prev = BB::new(30.0, 30.0, 12.0, 12.0);
        let p = [prev; 3];
        for bits in 0..8u8 {
            let flags = QualityFlags {
                app: bits & 4 != 0,
                trj: bits & 2 != 0,
                bgd: bits & 1 != 0,
            };
            let d = fuse(flags, &p, &[0.3; 3], &prev, false, 0, &params());
            assert_eq!(d.bb, prev, "flags {bits:03b}");
        }
    }

    #[test]
    fn quality_flags_respect_threshold_and_robustness() {
        let prev = BB::new(30.0, 30.0, 10.0, 10.0);
        let near = BB::new(32.0, 30.0, 10.0, 10.0);
        let far = BB::new(90.0, 90.0, 10.0, 10.0);
        let p = [near, far, near];
        let f = assess_quality(&[0.5, 0.5, 0.07], &p, &prev, &[], &params());
        assert!(f.app);
        assert!(!f.trj, "displacement above 30 px");
        assert!(!f.bgd, "score at most the threshold");
        let f = assess_quality(&[0.08, 0.5, 0.5], &[near, near, near], &prev, &[], &params());
        assert!(!f.app, "threshold is strict");
        assert!(f.trj && f.bgd);
    }

    #[test]
    fn jumpy_bgd_history_clears_flag() {
        let prev = BB::new(30.0, 30.0, 10.0, 10.0);
        let p = [prev; 3];
        let mut centers = Vec::new();
        for i in 0..10 {
            let off = if i % 2 == 0 { -100.0 } else { 100.0 };
            centers.push((35.0 + off, 35.0));
        }
        let f = assess_quality(&[0.5; 3], &p, &prev, &centers, &params());
        assert!(!f.bgd);
        let steady: Vec<_> = (0..10).map(|i| (35.0 + i as f64, 35.0)).collect();
        let f = assess_quality(&[0.5; 3], &p, &prev, &steady, &params());
        assert!(f.bgd);
    }

    fn hist_with(scores: &[f64], colors: &[[f64; 3]]) -> TrackHistory<f64> {
        let mut h = TrackHistory::new(20);
        for (s, c) in scores.iter().zip(colors) {
            h.push(BB::new(10.0, 10.0, 8.0, 8.0), *s, *c);
        }
        h
    }

    #[test]
    fn occlusion_requires_both_score_and_color() {
        let colors = [[100.0, 100.0, 100.0]; 5];
        let h = hist_with(&[0.4; 5], &colors);
        let p = params();
        // steady scores, steady color
        assert!(!detect_occlusion(&h, 0.4, Some([100.0; 3]), &p));
        // score halves, color shifts by 40
        assert!(detect_occlusion(&h, 0.15, Some([140.0, 100.0, 100.0]), &p));
        // score halves, color unchanged
        assert!(!detect_occlusion(&h, 0.15, Some([100.0; 3]), &p));
        // color shifts, score steady
        assert!(!detect_occlusion(&h, 0.4, Some([140.0; 3]), &p));
        // grayscale input: score alone decides
        assert!(detect_occlusion(&h, 0.15, None, &p));
    }

    #[test]
    fn occlusion_needs_history_window() {
        let h = hist_with(&[0.4; 3], &[[100.0; 3]; 3]);
        assert!(!detect_occlusion(&h, 0.0, Some([200.0; 3]), &params()));
    }

    #[test]
    fn occlusion_scale_invariant_in_scores() {
        for c in [0.01, 1.0, 250.0] {
            let scores: Vec<f64> = vec![0.4 * c; 5];
            let h = hist_with(&scores, &[[100.0; 3]; 5]);
            assert!(detect_occlusion(&h, 0.1 * c, Some([150.0; 3]), &params()));
            assert!(!detect_occlusion(&h, 0.3 * c, Some([150.0; 3]), &params()));
        }
    }

    #[test]
    fn anchor_refresh_needs_tight_agreement() {
        let a = BB::new(30.0, 30.0, 20.0, 20.0);
        let close = [a, BB::new(31.0, 30.0, 20.0, 20.0), BB::new(30.0, 31.0, 20.0, 20.0)];
        assert!(proposals_agree(&close, &params()));
        let shifted = [a, BB::new(36.0, 30.0, 20.0, 20.0), a];
        assert!(!proposals_agree(&shifted, &params()));
        // centers match but sizes differ enough to break the IoU bound
        let resized = [a, BB::from_center(40.0, 40.0, 13.0, 13.0), a];
        assert!(!proposals_agree(&resized, &params()));
    }

    #[test]
    fn six_scores_and_self_match_dominance() {
        let obj = BoundingBox::new(40.0, 30.0, 28.0, 28.0);
        let scene = SceneSpec::new(140, 110, obj);
        let frame = scene.render(1);
        let opts = DcfOptions::default();
        let mut dcf = Dcf::<f64>::new(&obj, &opts).unwrap();
        let template = dcf.learn(&frame, &obj, 15.0, None, None).unwrap();
        let bank = ModelBank::new(template);
        assert_eq!(bank.anchor_frame, 1);
        let off = BoundingBox::new(80.0, 60.0, 28.0, 28.0);
        let degenerate = BoundingBox::new(40.0, 30.0, 0.0, 28.0);
        let scores = similarity_scores(&mut dcf, &bank, &frame, &[obj, off, degenerate], None);
        for row in &scores {
            assert!(row[0] > row[1], "self-match must dominate: {row:?}");
            assert_eq!(row[2], 0.0);
        }
        let best = best_per_proposal(&scores);
        assert!(best[0] > 0.08, "self-match above quality threshold");
    }

    #[test]
    fn noise_patches_score_below_threshold() {
        let obj = BoundingBox::new(40.0, 30.0, 28.0, 28.0);
        let scene = SceneSpec::new(140, 110, obj);
        let frame = scene.render(1);
        let opts = DcfOptions::default();
        let mut dcf = Dcf::<f64>::new(&obj, &opts).unwrap();
        let template = dcf.learn(&frame, &obj, 15.0, None, None).unwrap();
        let mut r = StdRng::seed_from_u64(41);
        let mut scores = Vec::new();
        for i in 0..40 {
            let px: Vec<u8> = (0..140 * 110 * 3).map(|_| r.random::<u8>()).collect();
            let noise = crate::frame::Frame::from_rgb(px, 140, 110, i);
            scores.push(dcf.similarity(&noise, &template, &obj, None));
        }
        scores.sort_by(f64::total_cmp);
        let p95 = scores[(scores.len() as f64 * 0.95) as usize];
        assert!(p95 < 0.08, "95th percentile {p95}");
    }
}
