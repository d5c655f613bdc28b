//! Image quality: SSIM (the training criterion), PSNR (reporting only) and
//! the per-step reward.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kspace::Image;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SsimWindow {
    /// 11x11 Gaussian, sigma 1.5, weights normalized to sum to one.
    Gaussian11,
    /// 7x7 box filter.
    Uniform7,
}

impl SsimWindow {
    pub fn size(self) -> usize {
        match self {
            SsimWindow::Gaussian11 => 11,
            SsimWindow::Uniform7 => 7,
        }
    }

    /// Normalized 1-D taps; the 2-D window is their outer product.
    pub fn taps(self) -> Vec<f64> {
        let raw: Vec<f64> = match self {
            SsimWindow::Gaussian11 => (0..11)
                .map(|i| {
                    let d = i as f64 - 5.0;
                    (-d * d / (2.0 * 1.5 * 1.5)).exp()
                })
                .collect(),
            SsimWindow::Uniform7 => vec![1.0; 7],
        };
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|t| t / total).collect()
    }
}

impl fmt::Display for SsimWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SsimWindow::Gaussian11 => "gaussian_11_sigma_1_5",
            SsimWindow::Uniform7 => "uniform_7",
        })
    }
}

impl FromStr for SsimWindow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian_11_sigma_1_5" | "gaussian" => Ok(SsimWindow::Gaussian11),
            "uniform_7" | "uniform" => Ok(SsimWindow::Uniform7),
            other => Err(Error::invalid(format!("unknown SSIM window `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimConfig {
    pub k1: f64,
    pub k2: f64,
    pub window: SsimWindow,
    pub dynamic_range: f64,
}

impl SsimConfig {
    /// Standard constants (k1 = 0.01, k2 = 0.03) with the Gaussian window.
    pub fn new(dynamic_range: f64) -> Result<Self> {
        SsimConfig {
            k1: 0.01,
            k2: 0.03,
            window: SsimWindow::Gaussian11,
            dynamic_range,
        }
        .validated()
    }

    pub fn with_window(mut self, window: SsimWindow) -> Self {
        self.window = window;
        self
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.k1 > 0.0 && self.k2 > 0.0) {
            return Err(Error::invalid("SSIM constants k1 and k2 must be positive"));
        }
        if !(self.dynamic_range > 0.0 && self.dynamic_range.is_finite()) {
            return Err(Error::invalid(format!(
                "SSIM dynamic range must be positive, got {}",
                self.dynamic_range
            )));
        }
        Ok(self)
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }
}

/// Valid-position separable correlation of a row-major `h x w` map.
fn filter_valid(src: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut horiz = vec![0.0; h * ow];
    for r in 0..h {
        let row = &src[r * w..(r + 1) * w];
        for c in 0..ow {
            horiz[r * ow + c] = taps.iter().zip(&row[c..c + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * horiz[(r + i) * ow + c])
                .sum();
        }
    }
    out
}

/// Local SSIM term from window statistics.
pub fn local_ssim(
    mu_x: f64,
    mu_y: f64,
    var_x: f64,
    var_y: f64,
    cov_xy: f64,
    c1: f64,
    c2: f64,
) -> f64 {
    ((2.0 * mu_x * mu_y + c1) * (2.0 * cov_xy + c2))
        / ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2))
}

/// Mean SSIM over every valid window position.
pub fn ssim(reference: &Image, test: &Image, cfg: &SsimConfig) -> Result<f64> {
    if !reference.same_shape(test) {
        return Err(Error::invalid(format!(
            "SSIM needs equal shapes, got {}x{} and {}x{}",
            reference.height(),
            reference.width(),
            test.height(),
            test.width()
        )));
    }
    ssim_slices(reference.pixels(), test.pixels(), reference.height(), reference.width(), cfg)
}

/// [`ssim`] on raw row-major `h x w` buffers. Accepts maps smaller than the
/// minimum [`Image`] size, down to a single window.
pub fn ssim_slices(x: &[f64], y: &[f64], h: usize, w: usize, cfg: &SsimConfig) -> Result<f64> {
    if x.len() != h * w || y.len() != h * w {
        return Err(Error::invalid(format!("buffers do not hold {h}x{w} values")));
    }
    let k = cfg.window.size();
    if h < k || w < k {
        return Err(Error::invalid(format!(
            "{h}x{w} image is smaller than the {k}x{k} SSIM window"
        )));
    }
    let taps = cfg.window.taps();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();

    let mu_x = filter_valid(x, h, w, &taps);
    let mu_y = filter_valid(y, h, w, &taps);
    let e_xx = filter_valid(&xx, h, w, &taps);
    let e_yy = filter_valid(&yy, h, w, &taps);
    let e_xy = filter_valid(&xy, h, w, &taps);

    let (c1, c2) = (cfg.c1(), cfg.c2());
    let n = mu_x.len();
    let total: f64 = (0..n)
        .map(|i| {
            local_ssim(
                mu_x[i],
                mu_y[i],
                e_xx[i] - mu_x[i] * mu_x[i],
                e_yy[i] - mu_y[i] * mu_y[i],
                e_xy[i] - mu_x[i] * mu_y[i],
                c1,
                c2,
            )
        })
        .sum();
    Ok(total / n as f64)
}

/// Peak signal-to-noise ratio in dB; `f64::INFINITY` when the images match.
pub fn psnr(reference: &Image, test: &Image, dynamic_range: f64) -> Result<f64> {
    if !reference.same_shape(test) {
        return Err(Error::invalid("PSNR needs images of equal shape"));
    }
    let n = reference.pixels().len() as f64;
    let mse = reference
        .pixels()
        .iter()
        .zip(test.pixels())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (dynamic_range * dynamic_range / mse).log10())
}

/// Improvement in quality from one acquisition step to the next.
pub fn reward(prev_score: f64, new_score: f64) -> f64 {
    new_score - prev_score
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_image(seed: u64, h: usize, w: usize) -> Image {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Image::new(h, w, (0..h * w).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    /// Direct 2-D evaluation of the local formula, averaged over every
    /// valid window position.
    fn brute_force(x: &Image, y: &Image, cfg: &SsimConfig) -> f64 {
        let taps = cfg.window.taps();
        let k = taps.len();
        let (c1, c2) = (cfg.c1(), cfg.c2());
        let mut total = 0.0;
        let mut n = 0;
        for r0 in 0..=x.height() - k {
            for c0 in 0..=x.width() - k {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for r in 0..k {
                    for c in 0..k {
                        let wt = taps[r] * taps[c];
                        mx += wt * x.get(r0 + r, c0 + c);
                        my += wt * y.get(r0 + r, c0 + c);
                    }
                }
                for r in 0..k {
                    for c in 0..k {
                        let wt = taps[r] * taps[c];
                        let dx = x.get(r0 + r, c0 + c) - mx;
                        let dy = y.get(r0 + r, c0 + c) - my;
                        sxx += wt * dx * dx;
                        syy += wt * dy * dy;
                        sxy += wt * dx * dy;
                    }
                }
                total += ((2.0 * mx * my + c1) * (2.0 * sxy + c2))
                    / ((mx * mx + my * my + c1) * (sxx + syy + c2));
                n += 1;
            }
        }
        total / n as f64
    }

    #[test]
    fn identical_images_score_one() {
        let x = random_image(1, 16, 16);
        for window in [SsimWindow::Gaussian11, SsimWindow::Uniform7] {
            let cfg = SsimConfig::new(1.0).unwrap().with_window(window);
            assert!((ssim(&x, &x, &cfg).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_versus_zero() {
        let cfg = SsimConfig::new(1.0).unwrap();
        let c = Image::filled(16, 16, 1.0).unwrap();
        let z = Image::zeros(16, 16).unwrap();
        let expected = 1e-4 / (1.0 + 1e-4);
        assert!((ssim(&c, &z, &cfg).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 9.9990e-5).abs() < 1e-9);
    }

    #[test]
    fn matches_brute_force() {
        // exactly window-sized: a single window position
        let cfg = SsimConfig::new(1.0).unwrap();
        let (x, y) = (random_image(2, 11, 11), random_image(3, 11, 11));
        assert!((ssim(&x, &y, &cfg).unwrap() - brute_force(&x, &y, &cfg)).abs() < 1e-10);

        for window in [SsimWindow::Gaussian11, SsimWindow::Uniform7] {
            let cfg = SsimConfig::new(1.3).unwrap().with_window(window);
            let (x, y) = (random_image(4, 14, 17), random_image(5, 14, 17));
            assert!((ssim(&x, &y, &cfg).unwrap() - brute_force(&x, &y, &cfg)).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_mismatch_and_small_images() {
        let cfg = SsimConfig::new(1.0).unwrap();
        let a = random_image(1, 16, 16);
        assert!(ssim(&a, &random_image(1, 16, 17), &cfg).is_err());
        let small = random_image(1, 10, 10);
        assert!(ssim(&small, &small, &cfg).is_err());
        assert!(SsimConfig::new(0.0).is_err());
    }

    #[test]
    fn psnr_values() {
        let a = Image::filled(8, 8, 0.5).unwrap();
        let b = Image::filled(8, 8, 0.6).unwrap();
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
        let delta = psnr(&a, &b, 2.0).unwrap() - psnr(&a, &b, 1.0).unwrap();
        assert!((delta - 20.0 * 2f64.log10()).abs() < 1e-12);
        assert!((delta - 6.0206).abs() < 1e-4);
    }

    #[test]
    fn rewards_telescope() {
        assert!((reward(0.70, 0.72) - 0.02).abs() < 1e-15);
        assert_eq!(reward(0.72, 0.72), 0.0);
        let scores = [0.31, 0.45, 0.44, 0.61, 0.78];
        let total: f64 = scores.windows(2).map(|w| reward(w[0], w[1])).sum();
        assert!((total - (scores[4] - scores[0])).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(s1 in any::<u64>(), s2 in any::<u64>(), uniform in any::<bool>()) {
            let window = if uniform { SsimWindow::Uniform7 } else { SsimWindow::Gaussian11 };
            let cfg = SsimConfig::new(1.0).unwrap().with_window(window);
            let a = random_image(s1, 16, 16);
            let b = random_image(s2, 16, 16);
            let ab = ssim(&a, &b, &cfg).unwrap();
            let ba = ssim(&b, &a, &cfg).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ab.abs() <= 1.0 + 1e-12);
        }
    }
}
