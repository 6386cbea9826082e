//! Flat key=value configuration. Every tunable of the tracker is surfaced
//! here so ablations are reproducible from a config file alone; unknown
//! keys warn, out-of-range values fail.

use std::fs;
use std::path::Path;

use crate::bgmotion::BgParams;
use crate::dcf::{DcfOptions, SolverParams};
use crate::error::{Error, Result};
use crate::fusion::FusionParams;
use crate::num::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    // fusion
    pub mu_app: f64,
    pub mu_merge: f64,
    pub mu_override: f64,
    pub mu_stronger: f64,
    pub sim_thresh: f64,
    pub iou_thresh: f64,
    pub robustness_px: f64,
    pub bgd_std_px: f64,
    pub bgd_std_window: usize,
    pub disagreement_streak: usize,
    pub anchor_center_px: f64,
    pub anchor_iou: f64,
    pub occl_score_ratio: f64,
    pub occl_color_delta: f64,
    pub occl_window: usize,
    // trajectory
    pub history_n: usize,
    // bgmotion
    pub cut: f64,
    pub energy_floor: f64,
    pub bg_window_scale: f64,
    pub bg_max_points: usize,
    pub bg_search_radius: usize,
    pub bg_downscale_max: usize,
    // appearance model
    pub cell_size: usize,
    pub area_pad: f64,
    pub max_patch_side: f64,
    pub sigma_factor: f64,
    pub scale_count: usize,
    pub scale_step: f64,
    pub scale_damping: f64,
    pub admm_iterations: usize,
    pub penalty_init: f64,
    pub penalty_scale: f64,
    pub penalty_max: f64,
    // pipeline switches
    pub enable_bgmotion: bool,
    pub enable_trajectory: bool,
    pub enable_cn: bool,
    pub force_gray: bool,
    /// Skip the motion modules when the appearance proposal barely moved.
    pub motion_skip_px: f64,
    /// Optional path to a color-name table file; empty = built-in table.
    pub cn_table: String,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            mu_app: 15.0,
            mu_merge: 10.0,
            mu_override: 5.0,
            mu_stronger: 0.0,
            sim_thresh: 0.08,
            iou_thresh: 0.5,
            robustness_px: 30.0,
            bgd_std_px: 30.0,
            bgd_std_window: 10,
            disagreement_streak: 3,
            anchor_center_px: 3.0,
            anchor_iou: 0.7,
            occl_score_ratio: 0.5,
            occl_color_delta: 20.0,
            occl_window: 5,
            history_n: 20,
            cut: 0.1,
            energy_floor: 1.0,
            bg_window_scale: 2.0,
            bg_max_points: 50,
            bg_search_radius: 20,
            bg_downscale_max: 480,
            cell_size: 4,
            area_pad: 5.0,
            max_patch_side: 200.0,
            sigma_factor: 1.0 / 16.0,
            scale_count: 5,
            scale_step: 1.02,
            scale_damping: 0.995,
            admm_iterations: 2,
            penalty_init: 1.0,
            penalty_scale: 10.0,
            penalty_max: 1e4,
            enable_bgmotion: true,
            enable_trajectory: true,
            enable_cn: true,
            force_gray: false,
            motion_skip_px: 1.0,
            cn_table: String::new(),
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse(&text)
    }

    /// Parse `key = value` lines; `#` starts a comment, blank lines are
    /// skipped, unknown keys warn and are ignored.
    pub fn parse(text: &str) -> Result<Config> {
        let mut cfg = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got {raw:?}", i + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let f = || -> Result<f64> {
            v.parse()
                .map_err(|_| Error::Config(format!("{key}: expected a number, got {v:?}")))
        };
        let u = || -> Result<usize> {
            v.parse()
                .map_err(|_| Error::Config(format!("{key}: expected an integer, got {v:?}")))
        };
        match key {
            "mu_app" => self.mu_app = f()?,
            "mu_merge" => self.mu_merge = f()?,
            "mu_override" => self.mu_override = f()?,
            "mu_stronger" => self.mu_stronger = f()?,
            "sim_thresh" => self.sim_thresh = f()?,
            "iou_thresh" => self.iou_thresh = f()?,
            "robustness_px" => self.robustness_px = f()?,
            "bgd_std_px" => self.bgd_std_px = f()?,
            "bgd_std_window" => self.bgd_std_window = u()?,
            "disagreement_streak" => self.disagreement_streak = u()?,
            "anchor_center_px" => self.anchor_center_px = f()?,
            "anchor_iou" => self.anchor_iou = f()?,
            "occl_score_ratio" => self.occl_score_ratio = f()?,
            "occl_color_delta" => self.occl_color_delta = f()?,
            "occl_window" => self.occl_window = u()?,
            "history_n" => self.history_n = u()?,
            "cut" => self.cut = f()?,
            "energy_floor" => self.energy_floor = f()?,
            "bg_window_scale" => self.bg_window_scale = f()?,
            "bg_max_points" => self.bg_max_points = u()?,
            "bg_search_radius" => self.bg_search_radius = u()?,
            "bg_downscale_max" => self.bg_downscale_max = u()?,
            "cell_size" => self.cell_size = u()?,
            "area_pad" => self.area_pad = f()?,
            "max_patch_side" => self.max_patch_side = f()?,
            "sigma_factor" => self.sigma_factor = f()?,
            "scale_count" => self.scale_count = u()?,
            "scale_step" => self.scale_step = f()?,
            "scale_damping" => self.scale_damping = f()?,
            "admm_iterations" => self.admm_iterations = u()?,
            "penalty_init" => self.penalty_init = f()?,
            "penalty_scale" => self.penalty_scale = f()?,
            "penalty_max" => self.penalty_max = f()?,
            "enable_bgmotion" => self.enable_bgmotion = parse_bool(key, v)?,
            "enable_trajectory" => self.enable_trajectory = parse_bool(key, v)?,
            "enable_cn" => self.enable_cn = parse_bool(key, v)?,
            "force_gray" => self.force_gray = parse_bool(key, v)?,
            "motion_skip_px" => self.motion_skip_px = f()?,
            "cn_table" => self.cn_table = v.to_string(),
            _ => log::warn!("unknown config key {key:?} ignored"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(&str, bool); 16] = [
            ("mu values must be nonnegative", self.mu_app >= 0.0 && self.mu_merge >= 0.0 && self.mu_override >= 0.0 && self.mu_stronger >= 0.0),
            ("sim_thresh must be in [0,1]", (0.0..=1.0).contains(&self.sim_thresh)),
            ("iou_thresh must be in [0,1]", (0.0..=1.0).contains(&self.iou_thresh)),
            ("anchor_iou must be in [0,1]", (0.0..=1.0).contains(&self.anchor_iou)),
            ("occl_score_ratio must be in (0,1]", self.occl_score_ratio > 0.0 && self.occl_score_ratio <= 1.0),
            ("occl_window must be at least 1", self.occl_window >= 1),
            ("history_n must be at least 2", self.history_n >= 2),
            ("cut must be in (0,1)", self.cut > 0.0 && self.cut < 1.0),
            ("cell_size must be at least 1", self.cell_size >= 1),
            ("area_pad must exceed 1", self.area_pad > 1.0),
            ("max_patch_side must be positive", self.max_patch_side > 0.0),
            ("scale_count must be odd", self.scale_count % 2 == 1),
            ("scale_step must exceed 1", self.scale_step > 1.0),
            ("scale_damping must be in (0,1]", self.scale_damping > 0.0 && self.scale_damping <= 1.0),
            ("admm_iterations must be at least 1", self.admm_iterations >= 1),
            ("penalty settings must be positive", self.penalty_init > 0.0 && self.penalty_scale >= 1.0 && self.penalty_max >= self.penalty_init),
        ];
        for (msg, ok) in checks {
            if !ok {
                return Err(Error::Config(msg.to_string()));
            }
        }
        Ok(())
    }

    pub fn dcf_options<T: Real>(&self) -> DcfOptions<T> {
        DcfOptions {
            cell_size: self.cell_size,
            area_pad: T::c(self.area_pad),
            max_patch_side: T::c(self.max_patch_side),
            sigma_factor: T::c(self.sigma_factor),
            scale_step: T::c(self.scale_step),
            scale_count: self.scale_count,
            scale_damping: T::c(self.scale_damping),
            solver: SolverParams {
                iterations: self.admm_iterations,
                penalty_init: T::c(self.penalty_init),
                penalty_scale: T::c(self.penalty_scale),
                penalty_max: T::c(self.penalty_max),
            },
            ..DcfOptions::default()
        }
    }

    pub fn fusion_params<T: Real>(&self) -> FusionParams<T> {
        FusionParams {
            sim_threshold: T::c(self.sim_thresh),
            robustness_px: T::c(self.robustness_px),
            bgd_std_px: T::c(self.bgd_std_px),
            bgd_std_window: self.bgd_std_window,
            iou_thresh: T::c(self.iou_thresh),
            mu_app: T::c(self.mu_app),
            mu_merge: T::c(self.mu_merge),
            mu_override: T::c(self.mu_override),
            mu_stronger: T::c(self.mu_stronger),
            disagreement_streak: self.disagreement_streak,
            anchor_center_px: T::c(self.anchor_center_px),
            anchor_iou: T::c(self.anchor_iou),
            occl_score_ratio: T::c(self.occl_score_ratio),
            occl_color_delta: T::c(self.occl_color_delta),
            occl_window: self.occl_window,
        }
    }

    pub fn bg_params<T: Real>(&self) -> BgParams<T> {
        BgParams {
            max_points: self.bg_max_points,
            search_radius: self.bg_search_radius,
            downscale_max: self.bg_downscale_max,
            cut: T::c(self.cut),
            energy_floor: T::c(self.energy_floor),
            window_scale: T::c(self.bg_window_scale),
            ..BgParams::default()
        }
    }
}
