//! Appearance model: spatial-temporally regularized correlation filter.
//!
//! The template is learned in the Fourier domain by alternating-direction
//! splitting of the regularized regression objective (data term + spatial
//! weight penalty + temporal proximity penalty) and matched against search
//! regions by FFT correlation with multi-scale box estimation.

use ndarray::{Array2, Array3, Axis};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::features::{apply_window, extract_features, extract_patch, hann_window, CnTable, FeatureMap};
use crate::fft::FftEngine;
use crate::frame::Frame;
use crate::geometry::BoundingBox;
use crate::num::Real;

/// Ridge added to every per-frequency division.
pub const RIDGE: f64 = 1e-4;

/// Frequency-domain multi-channel filter plus the pieces needed to
/// re-learn and to score proposals.
#[derive(Debug, Clone)]
pub struct Template<T: Real> {
    /// (ny, nx, d) complex filter; responses are `ifft(sum_d conj(f)·z)`.
    pub f_hat: Array3<Complex<T>>,
    pub label_hat: Array2<Complex<T>>,
    pub spatial_weight: Array2<T>,
    pub mu: T,
    pub frame_learned: usize,
    /// Energy of the (windowed) training features, for score normalization.
    pub train_energy: T,
}

impl<T: Real> Template<T> {
    pub fn ny(&self) -> usize {
        self.f_hat.shape()[0]
    }
    pub fn nx(&self) -> usize {
        self.f_hat.shape()[1]
    }
    pub fn dims(&self) -> usize {
        self.f_hat.shape()[2]
    }
}

#[derive(Debug, Clone)]
pub struct ResponseMap<T: Real> {
    pub values: Array2<T>,
    /// Spectrum of the response, kept for sub-grid peak refinement.
    pub spectrum: Array2<Complex<T>>,
}

/// Splitting-scheme controls for `learn_template`.
#[derive(Debug, Clone, Copy)]
pub struct SolverParams<T> {
    pub iterations: usize,
    pub penalty_init: T,
    pub penalty_scale: T,
    pub penalty_max: T,
}

impl<T: Real> Default for SolverParams<T> {
    fn default() -> Self {
        SolverParams {
            iterations: 2,
            penalty_init: T::one(),
            penalty_scale: T::c(10.0),
            penalty_max: T::c(1e4),
        }
    }
}

impl<T: Real> SolverParams<T> {
    /// Slow-growth schedule that converges tightly; used by oracle tests.
    pub fn converged() -> Self {
        SolverParams {
            iterations: 400,
            penalty_init: T::one(),
            penalty_scale: T::c(1.02),
            penalty_max: T::c(50.0),
        }
    }
}

/// Circularly centered 2-D Gaussian with peak value 1 at the zero-shift bin.
pub fn make_gaussian_label<T: Real>(nx: usize, ny: usize, sigma: T) -> Array2<T> {
    assert!(nx >= 1 && ny >= 1 && sigma > T::zero());
    let two_s2 = T::c(2.0) * sigma * sigma;
    Array2::from_shape_fn((ny, nx), |(i, j)| {
        let di = i.min(ny - i) as f64;
        let dj = j.min(nx - j) as f64;
        (-(T::c(di * di + dj * dj)) / two_s2).exp()
    })
}

/// Bowl-shaped spatial weight: small constant over the target extent at the
/// array center, large outside.
pub fn make_spatial_weight<T: Real>(
    nx: usize,
    ny: usize,
    target_cells_w: T,
    target_cells_h: T,
    inside: T,
    outside: T,
) -> Array2<T> {
    let half = T::c(0.5);
    let cx = T::from_index(nx) * half;
    let cy = T::from_index(ny) * half;
    let hw = target_cells_w * half;
    let hh = target_cells_h * half;
    Array2::from_shape_fn((ny, nx), |(i, j)| {
        let dy = (T::from_index(i) + half - cy).abs();
        let dx = (T::from_index(j) + half - cx).abs();
        if dx <= hw && dy <= hh {
            inside
        } else {
            outside
        }
    })
}

fn reflect<T: Real>(w: &Array2<T>) -> Array2<T> {
    let (h, n) = (w.shape()[0], w.shape()[1]);
    Array2::from_shape_fn((h, n), |(i, j)| w[[(h - i) % h, (n - j) % n]])
}

/// Learn a template by approximately minimizing the regularized regression
/// objective. `f_prev` is `None` only at initialization (the temporal term
/// is dropped).
#[allow(clippy::too_many_arguments)]
pub fn learn_template<T: Real>(
    engine: &mut FftEngine<T>,
    x: &FeatureMap<T>,
    label: &Array2<T>,
    weight: &Array2<T>,
    mu: T,
    f_prev: Option<&Template<T>>,
    params: &SolverParams<T>,
    frame_index: usize,
) -> Result<Template<T>> {
    let (ny, nx, d) = (x.ny(), x.nx(), x.dims());
    if label.shape() != [ny, nx] || weight.shape() != [ny, nx] {
        return Err(Error::DimensionMismatch {
            expected: format!("{ny}x{nx}"),
            got: format!(
                "label {:?}, weight {:?}",
                label.shape(),
                weight.shape()
            ),
        });
    }
    if x.data.iter().any(|v| !v.is_finite())
        || label.iter().any(|v| !v.is_finite())
        || weight.iter().any(|v| !v.is_finite())
        || !mu.is_finite()
        || mu < T::zero()
    {
        return Err(Error::NonFinite);
    }
    if let Some(prev) = f_prev {
        if prev.f_hat.shape() != x.data.shape() {
            return Err(Error::DimensionMismatch {
                expected: format!("{:?}", x.data.shape()),
                got: format!("{:?}", prev.f_hat.shape()),
            });
        }
    }

    let zero = Complex::new(T::zero(), T::zero());
    let mut x_hat = Array3::from_elem((ny, nx, d), zero);
    for ch in 0..d {
        let spec = engine.fft2(&x.data.index_axis(Axis(2), ch).to_owned());
        x_hat.index_axis_mut(Axis(2), ch).assign(&spec);
    }
    let y_hat = engine.fft2(label);
    let mut sum_xx = Array2::<T>::zeros((ny, nx));
    for k in 0..ny {
        for l in 0..nx {
            let mut s = T::zero();
            for ch in 0..d {
                s += x_hat[[k, l, ch]].norm_sqr();
            }
            sum_xx[[k, l]] = s;
        }
    }

    // Internal variable u = conj(f); the model is sum_d x_hat·u = y_hat and
    // the spatial copy of u is the reflected filter, so the bowl weight is
    // reflected accordingly.
    let u_prev: Option<Array3<Complex<T>>> = f_prev.map(|p| p.f_hat.mapv(|v| v.conj()));
    let w_refl = reflect(weight);
    let w2 = w_refl.mapv(|v| v * v);

    let mut u = u_prev.clone().unwrap_or_else(|| Array3::from_elem((ny, nx, d), zero));
    let mut g_hat = u.clone();
    let mut h_hat = Array3::from_elem((ny, nx, d), zero);
    let ridge = T::c(RIDGE);
    let mut gamma = params.penalty_init;

    for _ in 0..params.iterations {
        // u-step: per-frequency ridge system solved via the rank-one update.
        let rho = mu + gamma + ridge;
        for k in 0..ny {
            for l in 0..nx {
                let mut xb = zero;
                let mut b = vec![zero; d];
                for ch in 0..d {
                    let mut bv = x_hat[[k, l, ch]].conj() * y_hat[[k, l]]
                        + (g_hat[[k, l, ch]] - h_hat[[k, l, ch]]) * gamma;
                    if let Some(prev) = &u_prev {
                        bv += prev[[k, l, ch]] * mu;
                    }
                    xb += x_hat[[k, l, ch]] * bv;
                    b[ch] = bv;
                }
                let denom = rho * (rho + sum_xx[[k, l]]);
                for ch in 0..d {
                    u[[k, l, ch]] = b[ch] / rho - x_hat[[k, l, ch]].conj() * (xb / denom);
                }
            }
        }
        // g-step in the spatial domain, then dual update.
        for ch in 0..d {
            let s_hat = Array2::from_shape_fn((ny, nx), |(k, l)| {
                u[[k, l, ch]] + h_hat[[k, l, ch]]
            });
            let s = engine.ifft2_real(&s_hat);
            let g = Array2::from_shape_fn((ny, nx), |(k, l)| {
                gamma * s[[k, l]] / (w2[[k, l]] + gamma)
            });
            let g_spec = engine.fft2(&g);
            for k in 0..ny {
                for l in 0..nx {
                    g_hat[[k, l, ch]] = g_spec[[k, l]];
                    h_hat[[k, l, ch]] = h_hat[[k, l, ch]] + u[[k, l, ch]] - g_spec[[k, l]];
                }
            }
        }
        gamma = (gamma * params.penalty_scale).min(params.penalty_max);
    }

    let train_energy = x.data.iter().map(|v| *v * *v).sum::<T>();
    Ok(Template {
        f_hat: u.mapv(|v| v.conj()),
        label_hat: y_hat,
        spatial_weight: weight.clone(),
        mu,
        frame_learned: frame_index,
        train_energy,
    })
}

/// FFT correlation of the template against a feature map.
pub fn correlate<T: Real>(
    engine: &mut FftEngine<T>,
    template: &Template<T>,
    z: &FeatureMap<T>,
) -> Result<ResponseMap<T>> {
    let (ny, nx, d) = (template.ny(), template.nx(), template.dims());
    if z.data.shape() != [ny, nx, d] {
        return Err(Error::DimensionMismatch {
            expected: format!("{ny}x{nx}x{d}"),
            got: format!("{:?}", z.data.shape()),
        });
    }
    let zero = Complex::new(T::zero(), T::zero());
    let mut acc = Array2::from_elem((ny, nx), zero);
    for ch in 0..d {
        let z_hat = engine.fft2(&z.data.index_axis(Axis(2), ch).to_owned());
        for k in 0..ny {
            for l in 0..nx {
                acc[[k, l]] += template.f_hat[[k, l, ch]].conj() * z_hat[[k, l]];
            }
        }
    }
    let values = engine.ifft2_real(&acc);
    Ok(ResponseMap {
        values,
        spectrum: acc,
    })
}

/// Trigonometric-surface value, gradient and Hessian at fractional (u, v).
fn surface_eval<T: Real>(
    spectrum: &Array2<Complex<T>>,
    u: f64,
    v: f64,
) -> (f64, [f64; 2], [[f64; 2]; 2]) {
    let (ny, nx) = (spectrum.shape()[0], spectrum.shape()[1]);
    let n = (ny * nx) as f64;
    let tau = std::f64::consts::TAU;
    let mut p = 0.0;
    let mut g = [0.0f64; 2];
    let mut hess = [[0.0f64; 2]; 2];
    for k in 0..ny {
        let ks = if k <= ny / 2 { k as f64 } else { k as f64 - ny as f64 };
        let wy = tau * ks / ny as f64;
        for l in 0..nx {
            let ls = if l <= nx / 2 { l as f64 } else { l as f64 - nx as f64 };
            let wx = tau * ls / nx as f64;
            let c = spectrum[[k, l]];
            let (re, im) = (c.re.to_f64().unwrap(), c.im.to_f64().unwrap());
            let phase = wy * u + wx * v;
            let (s, co) = phase.sin_cos();
            // Re(c e^{i phase}) and its derivatives in (u, v).
            let val = re * co - im * s;
            let dval = -(re * s + im * co);
            p += val;
            g[0] += wy * dval;
            g[1] += wx * dval;
            hess[0][0] -= wy * wy * val;
            hess[0][1] -= wy * wx * val;
            hess[1][1] -= wx * wx * val;
        }
    }
    hess[1][0] = hess[0][1];
    p /= n;
    g[0] /= n;
    g[1] /= n;
    for row in hess.iter_mut() {
        row[0] /= n;
        row[1] /= n;
    }
    (p, g, hess)
}

/// Peak location with sub-grid Newton refinement on the interpolated
/// response surface. Returns signed offsets `(dx, dy)` in bins and the
/// refined peak score. Ties break toward the lowest index.
pub fn locate<T: Real>(response: &ResponseMap<T>) -> (T, T, T) {
    let (ny, nx) = (response.values.shape()[0], response.values.shape()[1]);
    let mut best = (0usize, 0usize);
    let mut best_v = response.values[[0, 0]];
    for i in 0..ny {
        for j in 0..nx {
            if response.values[[i, j]] > best_v {
                best_v = response.values[[i, j]];
                best = (i, j);
            }
        }
    }
    let mut u = best.0 as f64;
    let mut v = best.1 as f64;
    let mut score = best_v.to_f64().unwrap();
    for _ in 0..5 {
        let (p, g, h) = surface_eval(&response.spectrum, u, v);
        score = p;
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        // Only step toward a genuine maximum.
        if det <= 0.0 || h[0][0] >= 0.0 {
            break;
        }
        let du = -(h[1][1] * g[0] - h[0][1] * g[1]) / det;
        let dv = -(h[0][0] * g[1] - h[1][0] * g[0]) / det;
        let du = du.clamp(-0.5, 0.5);
        let dv = dv.clamp(-0.5, 0.5);
        u += du;
        v += dv;
        if du.abs() < 1e-6 && dv.abs() < 1e-6 {
            break;
        }
    }
    let (p, _, _) = surface_eval(&response.spectrum, u, v);
    score = score.max(p);
    let signed = |c: f64, n: usize| -> f64 {
        let half = n as f64 / 2.0;
        if c > half {
            c - n as f64
        } else {
            c
        }
    };
    (T::c(signed(v, nx)), T::c(signed(u, ny)), T::c(score))
}

/// Geometry and fixed assets of the appearance model for one tracked object.
pub struct Dcf<T: Real> {
    pub cell_size: usize,
    /// Search area as a multiple of the box area; the search region is a
    /// square with side sqrt(area_pad · w · h).
    pub area_pad: T,
    /// Output patch side in pixels (multiple of cell_size).
    pub patch_side: usize,
    pub label: Array2<T>,
    pub weight: Array2<T>,
    pub window: Array2<T>,
    pub scale_step: T,
    pub scale_count: usize,
    pub scale_damping: T,
    pub solver: SolverParams<T>,
    pub engine: FftEngine<T>,
}

pub struct DcfOptions<T> {
    pub cell_size: usize,
    pub area_pad: T,
    pub max_patch_side: T,
    pub sigma_factor: T,
    pub weight_inside: T,
    pub weight_outside: T,
    pub scale_step: T,
    pub scale_count: usize,
    pub scale_damping: T,
    pub solver: SolverParams<T>,
}

impl<T: Real> Default for DcfOptions<T> {
    fn default() -> Self {
        DcfOptions {
            cell_size: 4,
            area_pad: T::c(5.0),
            max_patch_side: T::c(200.0),
            sigma_factor: T::c(1.0 / 16.0),
            weight_inside: T::c(1e-3),
            weight_outside: T::c(1e5),
            scale_step: T::c(1.02),
            scale_count: 5,
            scale_damping: T::c(0.995),
            solver: SolverParams::default(),
        }
    }
}

impl<T: Real> Dcf<T> {
    pub fn new(init_box: &BoundingBox<T>, opts: &DcfOptions<T>) -> Result<Self> {
        if !init_box.is_valid() {
            return Err(Error::DegenerateBox);
        }
        let cell = opts.cell_size;
        let side_src = (opts.area_pad * init_box.w * init_box.h).sqrt();
        let side = side_src.min(opts.max_patch_side).to_f64().unwrap();
        let ncells = ((side / cell as f64).round() as usize).max(3);
        let patch_side = ncells * cell;
        // Target extent expressed in cells of the resampled patch.
        let resample = T::from_index(patch_side) / side_src;
        let cell_t = T::from_index(cell);
        let tw = init_box.w * resample / cell_t;
        let th = init_box.h * resample / cell_t;
        let sigma = (tw * th).sqrt() * opts.sigma_factor;
        Ok(Dcf {
            cell_size: cell,
            area_pad: opts.area_pad,
            patch_side,
            label: make_gaussian_label(ncells, ncells, sigma.max(T::c(0.25))),
            weight: make_spatial_weight(
                ncells,
                ncells,
                tw,
                th,
                opts.weight_inside,
                opts.weight_outside,
            ),
            window: hann_window(ncells, ncells),
            scale_step: opts.scale_step,
            scale_count: opts.scale_count,
            scale_damping: opts.scale_damping,
            solver: opts.solver,
            engine: FftEngine::new(),
        })
    }

    pub fn ncells(&self) -> usize {
        self.patch_side / self.cell_size
    }

    /// Windowed feature map of the search region around `bbox`, optionally
    /// inflated by `scale`. Also returns the source step (source pixels per
    /// patch pixel).
    pub fn search_features(
        &mut self,
        frame: &Frame,
        bbox: &BoundingBox<T>,
        scale: T,
        cn: Option<&CnTable>,
    ) -> Result<(FeatureMap<T>, T)> {
        let side = (self.area_pad * bbox.w * bbox.h).sqrt() * scale;
        let (cx, cy) = bbox.center();
        let square = BoundingBox::from_center(cx, cy, side, side);
        let patch = extract_patch(frame, &square, T::one(), self.patch_side, self.patch_side)?;
        let step = patch.src_step.0;
        let fmap = extract_features(&patch, cn, self.cell_size)?;
        Ok((apply_window(&fmap, &self.window)?, step))
    }

    pub fn learn(
        &mut self,
        frame: &Frame,
        bbox: &BoundingBox<T>,
        mu: T,
        prev: Option<&Template<T>>,
        cn: Option<&CnTable>,
    ) -> Result<Template<T>> {
        let (fmap, _) = self.search_features(frame, bbox, T::one(), cn)?;
        let label = self.label.clone();
        let weight = self.weight.clone();
        let solver = self.solver;
        learn_template(
            &mut self.engine,
            &fmap,
            &label,
            &weight,
            mu,
            prev,
            &solver,
            frame.index,
        )
    }

    /// Multi-scale appearance proposal: correlate at `scale_count` relative
    /// scales, damp non-unity scales, return the best box and score.
    pub fn propose(
        &mut self,
        frame: &Frame,
        prev_box: &BoundingBox<T>,
        template: &Template<T>,
        cn: Option<&CnTable>,
    ) -> Result<(BoundingBox<T>, T, T)> {
        let half = (self.scale_count / 2) as i32;
        let mut best: Option<(T, BoundingBox<T>, T)> = None;
        for k in -half..=(self.scale_count as i32 - 1 - half) {
            let scale = self.scale_step.powi(k);
            let (fmap, step) = self.search_features(frame, prev_box, scale, cn)?;
            let resp = correlate(&mut self.engine, template, &fmap)?;
            let (dx_bins, dy_bins, raw) = locate(&resp);
            let score = if k == 0 {
                raw
            } else {
                raw * self.scale_damping
            };
            let cell = T::from_index(self.cell_size);
            let (cx, cy) = prev_box.center();
            let bb = BoundingBox::from_center(
                cx + dx_bins * cell * step,
                cy + dy_bins * cell * step,
                prev_box.w * scale,
                prev_box.h * scale,
            );
            if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
                best = Some((score, bb, scale));
            }
        }
        let (score, bb, scale) = best.unwrap();
        Ok((bb, score, scale))
    }

    /// Normalized correlation peak of `template` against the features at
    /// `bbox`; comparable across templates and patches. Degenerate boxes
    /// score 0.
    pub fn similarity(
        &mut self,
        frame: &Frame,
        template: &Template<T>,
        bbox: &BoundingBox<T>,
        cn: Option<&CnTable>,
    ) -> T {
        if !bbox.is_valid() || bbox.w < T::one() || bbox.h < T::one() {
            return T::zero();
        }
        match self.search_features(frame, bbox, T::one(), cn) {
            Ok((fmap, _)) => {
                let energy = fmap.data.iter().map(|v| *v * *v).sum::<T>();
                if energy <= T::zero() {
                    return T::zero();
                }
                let norm = (template.train_energy / energy).sqrt();
                match correlate(&mut self.engine, template, &fmap) {
                    Ok(resp) => {
                        let (_, _, score) = locate(&resp);
                        (score * norm).max(T::zero())
                    }
                    Err(_) => T::zero(),
                }
            }
            Err(_) => T::zero(),
        }
    }
}
