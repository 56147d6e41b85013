//! Distinctiveness maps from structure-tensor eigenvalues.
//!
//! For every pixel the 2x2 gradient auto-correlation matrix is summed over a
//! `B x B` window and its eigenvalues `l1 >= l2 >= 0` are taken. Two
//! quantities describe the neighbourhood: the log-magnitude
//! `d = ln |(l1, l2)|` and the eigenvalue angle `a`. Both are centred on
//! their image medians and squashed through a logistic sigmoid; their
//! product is the distinctiveness, zeroed at or below the threshold `w_T`.
//!
//! The angle is `a = atan(l2 / l1)` in `[0, pi/4]` by default, so that
//! corner-like pixels (`l2` close to `l1`) score higher than edges.
//! [`AngleMode::Literal`] switches to `atan(l1 / l2)` for comparison.
//!
//! Pixels with both eigenvalues zero have no defined `d`; they are left out
//! of the medians and get distinctiveness 0.

use image::RgbImage;

use crate::{Error, Result};

/// A dense row-major scalar image.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl ScalarMap {
    pub fn new(width: usize, height: usize) -> Self {
        ScalarMap {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        ScalarMap { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Edge-replicated access.
    #[inline]
    fn clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    /// Values scaled by `scale` and clamped to 16 bits.
    pub fn to_u16(&self, scale: f64) -> Vec<u16> {
        self.data
            .iter()
            .map(|v| (v * scale).round().clamp(0.0, 65535.0) as u16)
            .collect()
    }
}

/// Rec.601 luminance in [0, 1].
pub fn luminance(image: &RgbImage) -> ScalarMap {
    let (w, h) = image.dimensions();
    ScalarMap::from_fn(w as usize, h as usize, |x, y| {
        let [r, g, b] = image.get_pixel(x as u32, y as u32).0;
        (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0
    })
}

/// Sorted structure-tensor eigenvalues per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenMaps {
    pub lambda1: ScalarMap,
    pub lambda2: ScalarMap,
    pub window: usize,
}

/// Eigenvalues of the gradient auto-correlation matrix over a `window x
/// window` neighbourhood. Gradients are central differences; both the
/// gradients and the unweighted window sum replicate edge pixels.
pub fn structure_eigen(image: &ScalarMap, window: usize) -> Result<EigenMaps> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::BadConfig(format!("window must be odd and >= 3, got {window}")));
    }
    let (w, h) = (image.width, image.height);
    if w < window || h < window {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            window,
        });
    }
    let mut gxx = ScalarMap::new(w, h);
    let mut gxy = ScalarMap::new(w, h);
    let mut gyy = ScalarMap::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let gx = 0.5 * (image.clamped(xi + 1, yi) - image.clamped(xi - 1, yi));
            let gy = 0.5 * (image.clamped(xi, yi + 1) - image.clamped(xi, yi - 1));
            let i = y * w + x;
            gxx.data[i] = gx * gx;
            gxy.data[i] = gx * gy;
            gyy.data[i] = gy * gy;
        }
    }
    let r = (window / 2) as isize;
    let mut lambda1 = ScalarMap::new(w, h);
    let mut lambda2 = ScalarMap::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for dy in -r..=r {
                for dx in -r..=r {
                    let (sx, sy) = (x as isize + dx, y as isize + dy);
                    a += gxx.clamped(sx, sy);
                    b += gxy.clamped(sx, sy);
                    c += gyy.clamped(sx, sy);
                }
            }
            let (l1, l2) = sym2_eigen(a, b, c);
            lambda1.data[y * w + x] = l1;
            lambda2.data[y * w + x] = l2;
        }
    }
    Ok(EigenMaps {
        lambda1,
        lambda2,
        window,
    })
}

/// Eigenvalues of the PSD matrix `[[a, b], [b, c]]`, largest first.
#[inline]
fn sym2_eigen(a: f64, b: f64, c: f64) -> (f64, f64) {
    let half_trace = 0.5 * (a + c);
    let disc = (0.5 * (a - c)).hypot(b);
    let l1 = (half_trace + disc).max(0.0);
    let l2 = (half_trace - disc).clamp(0.0, l1);
    (l1, l2)
}

/// Harris response `l1 * l2 - k (l1 + l2)^2`.
pub fn harris_response(eig: &EigenMaps, k: f64) -> ScalarMap {
    let l1 = &eig.lambda1;
    let l2 = &eig.lambda2;
    ScalarMap {
        width: l1.width,
        height: l1.height,
        data: l1
            .data
            .iter()
            .zip(&l2.data)
            .map(|(a, b)| a * b - k * (a + b) * (a + b))
            .collect(),
    }
}

/// Which eigenvalue angle feeds the second sigmoid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleMode {
    /// `atan(l2 / l1)`: larger for corners.
    #[default]
    Ratio,
    /// `atan(l1 / l2)`: larger for edges.
    Literal,
}

impl AngleMode {
    #[inline]
    pub fn angle(self, l1: f64, l2: f64) -> f64 {
        match self {
            AngleMode::Ratio => l2.atan2(l1),
            AngleMode::Literal => l1.atan2(l2),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Keeps `value` only when it exceeds `threshold`.
#[inline]
pub fn thresholded(value: f64, threshold: f64) -> f64 {
    if value > threshold {
        value
    } else {
        0.0
    }
}

/// Per-pixel distinctiveness with the statistics it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct DistinctivenessMap {
    pub c: ScalarMap,
    pub threshold: f64,
    pub median_d: f64,
    pub median_a: f64,
    /// Set when no pixel had a non-zero eigenvalue; `c` is then all zero.
    pub degenerate: bool,
}

/// Exact median; the mean of the two middle values for even counts.
pub fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    assert!(n > 0, "median of empty set");
    let mid = n / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower_max = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower_max + upper)
    }
}

pub fn distinctiveness(eig: &EigenMaps, threshold: f64, mode: AngleMode) -> DistinctivenessMap {
    let (w, h) = (eig.lambda1.width, eig.lambda1.height);
    let n = w * h;
    let mut d = vec![f64::NAN; n];
    let mut a = vec![f64::NAN; n];
    let mut ds = Vec::with_capacity(n);
    let mut as_ = Vec::with_capacity(n);
    for i in 0..n {
        let (l1, l2) = (eig.lambda1.data[i], eig.lambda2.data[i]);
        if l1 * l1 + l2 * l2 > 0.0 {
            d[i] = l1.hypot(l2).ln();
            a[i] = mode.angle(l1, l2);
            ds.push(d[i]);
            as_.push(a[i]);
        }
    }
    if ds.is_empty() {
        return DistinctivenessMap {
            c: ScalarMap::new(w, h),
            threshold,
            median_d: f64::NAN,
            median_a: f64::NAN,
            degenerate: true,
        };
    }
    let md = median(&mut ds);
    let ma = median(&mut as_);
    let data = (0..n)
        .map(|i| {
            if d[i].is_nan() {
                return 0.0;
            }
            thresholded(sigmoid(d[i] - md) * sigmoid(a[i] - ma), threshold)
        })
        .collect();
    DistinctivenessMap {
        c: ScalarMap { width: w, height: h, data },
        threshold,
        median_d: md,
        median_a: ma,
        degenerate: false,
    }
}

/// Distinctiveness of an RGB image: luminance, `window`-sized structure
/// tensor, then [`distinctiveness`].
pub fn distinctiveness_map(image: &RgbImage, window: usize, threshold: f64, mode: AngleMode) -> Result<DistinctivenessMap> {
    let eig = structure_eigen(&luminance(image), window)?;
    Ok(distinctiveness(&eig, threshold, mode))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn eig_of(l1: Vec<f64>, l2: Vec<f64>, w: usize) -> EigenMaps {
        let h = l1.len() / w;
        EigenMaps {
            lambda1: ScalarMap { width: w, height: h, data: l1 },
            lambda2: ScalarMap { width: w, height: h, data: l2 },
            window: 3,
        }
    }

    #[test]
    fn constant_image_has_zero_eigenvalues() {
        let img = ScalarMap::from_fn(10, 8, |_, _| 0.4);
        let e = structure_eigen(&img, 3).unwrap();
        assert!(e.lambda1.data.iter().chain(&e.lambda2.data).all(|&v| v == 0.0));
        let m = distinctiveness(&e, 0.1, AngleMode::Ratio);
        assert!(m.degenerate);
        assert!(m.c.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_edge_is_rank_one() {
        let img = ScalarMap::from_fn(12, 12, |x, _| if x < 6 { 0.0 } else { 1.0 });
        let e = structure_eigen(&img, 3).unwrap();
        for y in 0..12 {
            assert!(e.lambda1.get(6, y) > 0.0);
            assert_abs_diff_eq!(e.lambda2.get(6, y), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn too_small_or_even_window() {
        let img = ScalarMap::from_fn(2, 10, |_, _| 0.0);
        assert!(matches!(structure_eigen(&img, 3), Err(Error::ImageTooSmall { .. })));
        let img = ScalarMap::from_fn(10, 10, |_, _| 0.0);
        assert!(matches!(structure_eigen(&img, 4), Err(Error::BadConfig(_))));
    }

    #[test]
    fn harris_values() {
        let e = eig_of(vec![0.0, 2.0], vec![0.0, 1.0], 2);
        assert_eq!(harris_response(&e, 0.0).data, vec![0.0, 2.0]);
        assert_abs_diff_eq!(harris_response(&e, 0.04).data[1], 1.64, epsilon = 1e-12);
    }

    #[test]
    fn median_centred_pixel_scores_a_quarter() {
        // three pixels; the middle one sits on both medians
        let l1 = vec![1.0, 2.0, 4.0];
        let l2 = vec![0.1, 1.0, 3.5];
        let e = eig_of(l1, l2, 3);
        let m = distinctiveness(&e, 0.0, AngleMode::Ratio);
        assert_abs_diff_eq!(m.median_d, 2.0f64.hypot(1.0).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(m.c.data[1], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn threshold_zeroes_weak_pixels() {
        assert_eq!(thresholded(0.09, 0.1), 0.0);
        assert_eq!(thresholded(0.1, 0.1), 0.0);
        assert_eq!(thresholded(0.11, 0.1), 0.11);
        let e = eig_of(vec![1.0, 1.0, 1.0, 1.0, 1.0], vec![0.0, 0.2, 0.5, 0.8, 1.0], 5);
        let m = distinctiveness(&e, 0.1, AngleMode::Ratio);
        for (i, &c) in m.c.data.iter().enumerate() {
            let a = AngleMode::Ratio.angle(e.lambda1.data[i], e.lambda2.data[i]);
            let d = e.lambda1.data[i].hypot(e.lambda2.data[i]).ln();
            let pre = sigmoid(d - m.median_d) * sigmoid(a - m.median_a);
            assert_eq!(c, if pre <= 0.1 { 0.0 } else { pre });
        }
    }

    #[test]
    fn even_median() {
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&mut [5.0]), 5.0);
    }
}
