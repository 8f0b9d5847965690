//! Gaussian-derivative estimation and the per-pixel curvature fields.
//!
//! Kernels are sampled Gaussians truncated at `ceil(4 sigma)` and then
//! moment-normalised so that the smoothing, first- and second-derivative
//! kernels are exact on polynomials of degree <= 2. All outputs are in metric
//! units: a derivative of total order `n` is divided by `pitch^n`.
//!
//! A pixel is valid in a derivative field only when the whole square kernel
//! support lies inside the grid and on valid input pixels.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::grid::{erode_mask, Grid, HeightField, PixelMask};

pub const DEFAULT_SIGMA: f64 = 3.0;
pub const DEFAULT_LAPLACE_WINDOW: usize = 16;

/// Discriminant values in `(-DISCRIMINANT_CLAMP, 0)` are treated as zero.
pub const DISCRIMINANT_CLAMP: f64 = 1e-10;
/// Minimum `|grad k|` (per pixel) for a defined direction.
pub const THETA_MIN_GRADIENT: f64 = 1e-8;
/// Below this `|k_max - k_min|` the principal directions are undefined.
pub const UMBILIC_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Units {
    Dimensionless,
    PerMetre,
    PerSquareMetre,
    Metres,
    Radians,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub values: Grid<f64>,
    pub valid: PixelMask,
    pub units: Units,
}

impl ScalarField {
    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        *self.values.get(x, y)
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid.get(x, y)
    }

    /// Value if the pixel is valid.
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> Option<f64> {
        self.valid.get(x, y).then(|| self.get(x, y))
    }

    /// Bilinear value at a fractional position; all four support pixels must be valid.
    pub fn bilinear(&self, x: f64, y: f64) -> Option<f64> {
        let x0 = x.floor();
        let y0 = y.floor();
        let (fx, fy) = (x - x0, y - y0);
        let (x0, y0) = (x0 as i64, y0 as i64);
        let (x1, y1) = (if fx > 0.0 { x0 + 1 } else { x0 }, if fy > 0.0 { y0 + 1 } else { y0 });
        for (cx, cy) in [(x0, y0), (x1, y0), (x0, y1), (x1, y1)] {
            if !self.valid.get_signed(cx, cy) {
                return None;
            }
        }
        let v = |cx: i64, cy: i64| self.get(cx as usize, cy as usize);
        let top = v(x0, y0) * (1.0 - fx) + v(x1, y0) * fx;
        let bottom = v(x0, y1) * (1.0 - fx) + v(x1, y1) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }

    pub fn rotate90(&self) -> ScalarField {
        ScalarField {
            values: self.values.rotate90(),
            valid: PixelMask::from_grid(self.valid.grid().rotate90()),
            units: self.units,
        }
    }
}

/// Sampled Gaussian smoothing and derivative kernels on `[-radius, radius]`.
#[derive(Clone, Debug)]
pub struct DerivativeKernels {
    pub radius: usize,
    pub smooth: Vec<f64>,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl DerivativeKernels {
    pub fn new(sigma: f64, radius: usize) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
        }
        if radius == 0 {
            return Err(Error::Parameter("kernel radius must be >= 1".into()));
        }
        let r = radius as i64;
        let mut g: Vec<f64> = (-r..=r)
            .map(|j| (-((j * j) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        let s: f64 = g.iter().sum();
        g.iter_mut().for_each(|v| *v /= s);

        let m2: f64 = (-r..=r).zip(&g).map(|(j, w)| (j * j) as f64 * w).sum();
        let m4: f64 = (-r..=r).zip(&g).map(|(j, w)| ((j * j) as f64).powi(2) * w).sum();

        // sum(j * first) = 1, sum(first) = 0
        let mut first: Vec<f64> = (-r..=r).zip(&g).map(|(j, w)| j as f64 * w / m2).collect();
        first[radius] = 0.0;

        // second = a j^2 g + b g with sum = 0 and sum(j^2 second) = 2
        let a = 2.0 / (m4 - m2 * m2);
        let b = -a * m2;
        let mut second: Vec<f64> = (-r..=r).zip(&g).map(|(j, w)| (a * (j * j) as f64 + b) * w).collect();
        let off_centre: f64 = second
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != radius)
            .map(|(_, v)| v)
            .sum();
        second[radius] = -off_centre;

        Ok(Self {
            radius,
            smooth: g,
            first,
            second,
        })
    }

    /// Truncation at `ceil(4 sigma)`.
    pub fn for_sigma(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
        }
        Self::new(sigma, (4.0 * sigma).ceil() as usize)
    }

    pub fn order(&self, n: usize) -> &[f64] {
        match n {
            0 => &self.smooth,
            1 => &self.first,
            2 => &self.second,
            _ => unreachable!("derivative order checked by caller"),
        }
    }
}

/// Correlate one line with a kernel that is either even or odd about its centre.
#[inline]
fn correlate_at(line: &[f64], stride: usize, centre: usize, kernel: &[f64], r: usize, odd: bool) -> f64 {
    let mut acc = if odd { 0.0 } else { kernel[r] * line[centre * stride] };
    for j in 1..=r {
        let plus = line[(centre + j) * stride];
        let minus = line[(centre - j) * stride];
        acc += if odd {
            kernel[r + j] * (plus - minus)
        } else {
            kernel[r + j] * (plus + minus)
        };
    }
    acc
}

/// Separable correlation; output is only meaningful where the square
/// support fits, which is exactly the eroded validity mask.
fn separable(values: &Grid<f64>, valid: &PixelMask, kx: &[f64], ky: &[f64], r: usize, odd_x: bool, odd_y: bool) -> (Grid<f64>, PixelMask) {
    let (w, h) = (values.width(), values.height());
    let out_valid = erode_mask(valid, r);
    let mut out = vec![0.0; w * h];
    if w <= 2 * r || h <= 2 * r || out_valid.is_empty() {
        return (Grid::from_vec(w, h, out).unwrap(), out_valid);
    }
    let src: Vec<f64> = values
        .data()
        .iter()
        .zip(valid.grid().data())
        .map(|(&v, &ok)| if ok { v } else { 0.0 })
        .collect();
    // horizontal pass on rows that can contribute
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in r..w - r {
            tmp[y * w + x] = correlate_at(row, 1, x, kx, r, odd_x);
        }
    }
    for y in r..h - r {
        for x in r..w - r {
            if out_valid.get(x, y) {
                out[y * w + x] = correlate_at(&tmp[x..], w, y, ky, r, odd_y);
            }
        }
    }
    (Grid::from_vec(w, h, out).unwrap(), out_valid)
}

fn apply_derivative(values: &Grid<f64>, valid: &PixelMask, k: &DerivativeKernels, dx: usize, dy: usize) -> (Grid<f64>, PixelMask) {
    separable(values, valid, k.order(dx), k.order(dy), k.radius, dx == 1, dy == 1)
}

/// `d^(dx+dy) h / dx^dx dy^dy` in metric units.
pub fn gaussian_derivative(h: &HeightField, sigma: f64, dx: usize, dy: usize) -> Result<ScalarField> {
    if dx + dy > 2 {
        return Err(Error::Parameter(format!("derivative order {dx}+{dy} exceeds 2")));
    }
    let k = DerivativeKernels::for_sigma(sigma)?;
    Ok(derivative_with(h, &k, dx, dy))
}

fn derivative_with(h: &HeightField, k: &DerivativeKernels, dx: usize, dy: usize) -> ScalarField {
    let (mut values, valid) = apply_derivative(h.values(), h.valid(), k, dx, dy);
    let order = dx + dy;
    let scale = h.pitch().powi(order as i32);
    if order > 0 {
        values.data_mut().iter_mut().for_each(|v| *v /= scale);
    }
    ScalarField {
        values,
        valid,
        units: match order {
            0 => Units::Metres,
            1 => Units::Dimensionless,
            _ => Units::PerMetre,
        },
    }
}

/// Per-pixel curvature quantities of the height surface.
#[derive(Clone, Debug)]
pub struct CurvatureMaps {
    pub mean: ScalarField,
    pub gaussian: ScalarField,
    pub k_max: ScalarField,
    pub k_min: ScalarField,
    /// Direction of the gradient of the bump curvature (`-k_min`), in
    /// `(-pi/2, pi/2]`. Undefined where the gradient vanishes.
    pub theta: ScalarField,
    /// Image-plane direction of the `k_min` principal direction, in
    /// `(-pi/2, pi/2]`. Undefined at umbilic and flat points.
    pub principal_dir: ScalarField,
}

impl CurvatureMaps {
    pub fn width(&self) -> usize {
        self.mean.width()
    }

    pub fn height(&self) -> usize {
        self.mean.height()
    }

    /// Pixels where the curvature quantities are defined.
    pub fn valid(&self) -> &PixelMask {
        &self.mean.valid
    }
}

/// Fold an angle into `(-pi/2, pi/2]`.
pub fn fold_half_turn(a: f64) -> f64 {
    let mut t = a % std::f64::consts::PI;
    if t > FRAC_PI_2 {
        t -= std::f64::consts::PI;
    } else if t <= -FRAC_PI_2 {
        t += std::f64::consts::PI;
    }
    t
}

/// Mean, Gaussian and principal curvatures from metric Gaussian derivatives.
pub fn curvature_maps(h: &HeightField, sigma: f64) -> Result<CurvatureMaps> {
    let k = DerivativeKernels::for_sigma(sigma)?;
    let fx = derivative_with(h, &k, 1, 0);
    let fy = derivative_with(h, &k, 0, 1);
    let fxx = derivative_with(h, &k, 2, 0);
    let fyy = derivative_with(h, &k, 0, 2);
    let fxy = derivative_with(h, &k, 1, 1);

    let (w, hgt) = (h.width(), h.height());
    let n = w * hgt;
    let mut mean = vec![0.0; n];
    let mut gauss = vec![0.0; n];
    let mut kmax = vec![0.0; n];
    let mut kmin = vec![0.0; n];
    let mut pdir = vec![0.0; n];
    let mut valid = fx.valid.clone();
    let mut pdir_valid = PixelMask::empty(w, hgt)?;

    for p in fx.valid.iter_set() {
        let i = p.y * w + p.x;
        let (gx, gy) = (fx.values.data()[i], fy.values.data()[i]);
        let (gxx, gyy, gxy) = (fxx.values.data()[i], fyy.values.data()[i], fxy.values.data()[i]);
        let q = 1.0 + gx * gx + gy * gy;
        let cm = ((1.0 + gy * gy) * gxx + (1.0 + gx * gx) * gyy - 2.0 * gx * gy * gxy) / (2.0 * q.powf(1.5));
        let cg = (gxx * gyy - gxy * gxy) / (q * q);
        let mut disc = cm * cm - cg;
        if disc < 0.0 {
            if disc > -DISCRIMINANT_CLAMP {
                disc = 0.0;
            } else {
                valid.set(p.x, p.y, false);
                continue;
            }
        }
        let root = disc.sqrt();
        let (hi, lo) = (cm + root, cm - root);
        mean[i] = cm;
        gauss[i] = cg;
        kmax[i] = hi;
        kmin[i] = lo;

        if hi - lo >= UMBILIC_EPS {
            // (II - k I) v = 0 for k = k_min
            let s = q.sqrt();
            let (l, m, nn) = (gxx / s, gxy / s, gyy / s);
            let (e, f, g) = (1.0 + gx * gx, gx * gy, 1.0 + gy * gy);
            let r1 = (l - lo * e, m - lo * f);
            let r2 = (m - lo * f, nn - lo * g);
            let row = if r1.0.hypot(r1.1) >= r2.0.hypot(r2.1) { r1 } else { r2 };
            pdir[i] = fold_half_turn((row.0).atan2(-row.1));
            pdir_valid.set(p.x, p.y, true);
        }
    }
    let to_field = |v: Vec<f64>, valid: &PixelMask, units| ScalarField {
        values: Grid::from_vec(w, hgt, v).unwrap(),
        valid: valid.clone(),
        units,
    };
    let pdir_valid = pdir_valid.and(&valid);
    let k_min = to_field(kmin, &valid, Units::PerMetre);

    // gradient of the bump curvature, per pixel
    let (gx, gvalid) = apply_derivative(&k_min.values, &valid, &k, 1, 0);
    let (gy, _) = apply_derivative(&k_min.values, &valid, &k, 0, 1);
    let mut theta = vec![0.0; n];
    let mut theta_valid = gvalid.clone();
    for p in gvalid.iter_set() {
        let (a, b) = (*gx.get(p.x, p.y), *gy.get(p.x, p.y));
        if a.hypot(b) < THETA_MIN_GRADIENT {
            theta_valid.set(p.x, p.y, false);
        } else {
            theta[p.y * w + p.x] = fold_half_turn(b.atan2(a));
        }
    }

    Ok(CurvatureMaps {
        mean: to_field(mean, &valid, Units::PerMetre),
        gaussian: to_field(gauss, &valid, Units::PerSquareMetre),
        k_max: to_field(kmax, &valid, Units::PerMetre),
        k_min,
        theta: to_field(theta, &theta_valid, Units::Radians),
        principal_dir: to_field(pdir, &pdir_valid, Units::Radians),
    })
}

/// `f_xx + f_yy` from a Laplacian-of-Gaussian template with a
/// `window x window` footprint (`sigma = window / 6`, radius `window / 2`).
pub fn laplacian_field(h: &HeightField, window: usize) -> Result<ScalarField> {
    if window < 3 {
        return Err(Error::Parameter(format!("Laplace window must be >= 3, got {window}")));
    }
    let k = DerivativeKernels::new(window as f64 / 6.0, window / 2)?;
    let (mut xx, valid) = apply_derivative(h.values(), h.valid(), &k, 2, 0);
    let (yy, _) = apply_derivative(h.values(), h.valid(), &k, 0, 2);
    let scale = h.pitch() * h.pitch();
    for (a, b) in xx.data_mut().iter_mut().zip(yy.data()) {
        *a = (*a + b) / scale;
    }
    Ok(ScalarField {
        values: xx,
        valid,
        units: Units::PerMetre,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Pixel;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn field(w: usize, h: usize, pitch: f64, f: impl Fn(f64, f64) -> f64) -> HeightField {
        HeightField::from_world_fn(w, h, pitch, f).unwrap()
    }

    #[test]
    fn kernel_moments() {
        let k = DerivativeKernels::for_sigma(2.5).unwrap();
        let r = k.radius as i64;
        let m = |ker: &[f64], p: i32| -> f64 { (-r..=r).zip(ker).map(|(j, w)| (j as f64).powi(p) * w).sum() };
        assert!((m(&k.smooth, 0) - 1.0).abs() < 1e-14);
        assert!(m(&k.first, 0).abs() < 1e-15);
        assert!((m(&k.first, 1) - 1.0).abs() < 1e-14);
        assert!(m(&k.second, 0).abs() < 1e-15);
        assert!((m(&k.second, 2) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn affine_slope_is_exact() {
        let h = field(60, 60, 0.001, |x, y| 0.002 * x + 0.05 + 0.0 * y);
        let fx = gaussian_derivative(&h, 3.0, 1, 0).unwrap();
        let fy = gaussian_derivative(&h, 3.0, 0, 1).unwrap();
        let fxx = gaussian_derivative(&h, 3.0, 2, 0).unwrap();
        for p in fx.valid.iter_set() {
            assert!((fx.get(p.x, p.y) - 0.002).abs() < 1e-6);
            assert!(fy.get(p.x, p.y).abs() < 1e-9);
            assert!(fxx.get(p.x, p.y).abs() < 1e-6);
        }
        assert_eq!(fx.units, Units::Dimensionless);
        assert_eq!(fxx.units, Units::PerMetre);
        assert!(fx.valid.count() > 0);
    }

    #[test]
    fn constant_field_has_zero_derivatives() {
        let h = field(40, 40, 0.001, |_, _| 0.731);
        for (dx, dy) in [(1, 0), (0, 1), (2, 0), (0, 2), (1, 1)] {
            let d = gaussian_derivative(&h, 2.0, dx, dy).unwrap();
            for p in d.valid.iter_set() {
                assert!(d.get(p.x, p.y).abs() < 1e-12 / 1e-6, "({dx},{dy})");
            }
        }
        let s = gaussian_derivative(&h, 2.0, 0, 0).unwrap();
        assert!((s.get(20, 20) - 0.731).abs() < 1e-12);
    }

    #[test]
    fn bad_sigma_and_order() {
        let h = field(20, 20, 0.001, |_, _| 0.0);
        assert!(matches!(gaussian_derivative(&h, 0.0, 1, 0), Err(Error::Parameter(_))));
        assert!(matches!(gaussian_derivative(&h, -1.0, 1, 0), Err(Error::Parameter(_))));
        assert!(matches!(gaussian_derivative(&h, 1.0, 2, 1), Err(Error::Parameter(_))));
        assert!(matches!(laplacian_field(&h, 2), Err(Error::Parameter(_))));
    }

    /// Frequency response of a correlation kernel at angular frequency w (rad/px).
    fn response(kernel: &[f64], w: f64) -> f64 {
        let r = (kernel.len() / 2) as i64;
        (-r..=r).zip(kernel).map(|(j, k)| k * (w * j as f64).cos()).sum()
    }

    #[test]
    fn sine_second_derivative_attenuation() {
        // h = sin(2 pi x / lambda), lambda = 40 px; continuous Gaussian
        // attenuation of the second derivative is exp(-2 pi^2 sigma^2 / lambda^2)
        let (lambda, sigma, pitch) = (40.0, 3.0, 0.001);
        let h = field(200, 60, pitch, |x, _| (2.0 * PI * x / (lambda * pitch)).sin());
        let fxx = gaussian_derivative(&h, sigma, 2, 0).unwrap();
        let k_m = 2.0 * PI / (lambda * pitch);
        let expected_att = (-2.0 * PI * PI * sigma * sigma / (lambda * lambda)).exp();
        // the smoothing kernel along y sees a constant, so the ratio is the x response
        let mut checked = 0;
        for p in fxx.valid.iter_set() {
            let hv = h.get(p.x, p.y);
            if hv.abs() > 0.5 {
                let att = fxx.get(p.x, p.y) / (-k_m * k_m * hv);
                assert!((att / expected_att - 1.0).abs() < 0.02, "att {att} vs {expected_att}");
                checked += 1;
            }
        }
        assert!(checked > 100);
        // same number from the sampled kernel's transfer function
        let k = DerivativeKernels::for_sigma(sigma).unwrap();
        let w = 2.0 * PI / lambda;
        let att_kernel = response(&k.second, w) / (-w * w);
        assert!((att_kernel / expected_att - 1.0).abs() < 0.02);
    }

    #[test]
    fn hemisphere_apex_curvature() {
        let (n, pitch, r) = (129usize, 0.001, 0.5);
        let c = 64.0 * pitch;
        let h = field(n, n, pitch, |x, y| (r * r - (x - c).powi(2) - (y - c).powi(2)).sqrt());
        let m = curvature_maps(&h, 3.0).unwrap();
        let mean = m.mean.get(64, 64);
        let gauss = m.gaussian.get(64, 64);
        assert!((mean + 2.0).abs() / 2.0 < 0.02, "mean {mean}");
        assert!((gauss - 4.0).abs() / 4.0 < 0.04, "gauss {gauss}");
        assert!((m.k_max.get(64, 64) + 2.0).abs() < 0.04);
        assert!((m.k_min.get(64, 64) + 2.0).abs() < 0.04);
    }

    #[test]
    fn half_cylinder_crest_curvature() {
        let (n, pitch, r) = (121usize, 0.001, 0.05);
        let c = 60.0 * pitch;
        let h = field(n, n, pitch, |x, _| (r * r - (x - c).powi(2)).max(0.0).sqrt());
        let m = curvature_maps(&h, 3.0).unwrap();
        for y in 20..100 {
            let kmin = m.k_min.get(60, y);
            let kmax = m.k_max.get(60, y);
            assert!((kmin + 20.0).abs() / 20.0 < 0.02, "k_min {kmin}");
            assert!(kmax.abs() < 0.5, "k_max {kmax}");
            // bump direction is across the cylinder axis (x)
            assert!(m.principal_dir.get(60, y).abs() < 1e-6);
        }
    }

    #[test]
    fn plane_has_zero_curvature() {
        let h = field(50, 50, 0.001, |x, y| 0.3 * x - 0.2 * y + 0.01);
        let m = curvature_maps(&h, 3.0).unwrap();
        for p in m.valid().iter_set() {
            assert!(m.mean.get(p.x, p.y).abs() < 1e-6);
            assert!(m.gaussian.get(p.x, p.y).abs() < 1e-6);
        }
        assert!(m.valid().count() > 0);
    }

    #[test]
    fn laplacian_examples() {
        let plane = field(60, 60, 0.001, |x, y| 0.4 * x + 0.1 * y);
        let lap = laplacian_field(&plane, 16).unwrap();
        assert!(lap.valid.iter_set().all(|p| lap.get(p.x, p.y).abs() < 1e-9));

        let bowl = field(60, 60, 0.001, |x, y| x * x + y * y);
        let lap = laplacian_field(&bowl, 16).unwrap();
        for p in lap.valid.iter_set() {
            assert!((lap.get(p.x, p.y) - 4.0).abs() / 4.0 < 0.02);
        }

        // ridge profile along y: zero crossings near +-sigma_w (smoothed)
        let (pitch, a, sw) = (0.001, 0.02, 0.01);
        let c = 60.0 * pitch;
        let ridge = field(40, 121, pitch, |_, y| a * (-(y - c).powi(2) / (2.0 * sw * sw)).exp());
        let lap = laplacian_field(&ridge, 16).unwrap();
        let col = 20;
        let mut crossings = vec![];
        for y in 1..121 {
            if lap.is_valid(col, y) && lap.is_valid(col, y - 1) {
                let (a0, a1) = (lap.get(col, y - 1), lap.get(col, y));
                if a0 * a1 < 0.0 {
                    crossings.push(y as f64 - 1.0 + a0 / (a0 - a1));
                }
            }
        }
        assert_eq!(crossings.len(), 2, "{crossings:?}");
        assert!((crossings[0] - 50.0).abs() <= 1.0, "{crossings:?}");
        assert!((crossings[1] - 70.0).abs() <= 1.0, "{crossings:?}");
    }

    #[test]
    fn holes_invalidate_their_neighbourhood() {
        let h = field(60, 60, 0.001, |x, _| x * x);
        let mut valid = h.valid().clone();
        valid.set(30, 30, false);
        let h = h.with_valid(valid).unwrap();
        let d = gaussian_derivative(&h, 2.0, 2, 0).unwrap();
        let r = 8;
        assert!(!d.is_valid(30 + r, 30));
        assert!(d.is_valid(30 + r + 1, 30));
        assert!(!d.is_valid(3, 30));
    }

    fn smooth_field(n: usize) -> HeightField {
        field(n, n, 0.001, |x, y| {
            0.01 * (-((x - 0.03).powi(2) + (y - 0.035).powi(2)) / 2e-4).exp() + 0.004 * (x * 80.0).sin() * (y * 50.0).cos()
        })
    }

    #[test]
    fn eq3_consistency_and_ordering() {
        let m = curvature_maps(&smooth_field(64), 3.0).unwrap();
        for p in m.valid().iter_set() {
            let (hi, lo) = (m.k_max.get(p.x, p.y), m.k_min.get(p.x, p.y));
            let (cm, cg) = (m.mean.get(p.x, p.y), m.gaussian.get(p.x, p.y));
            assert!(lo <= hi);
            assert!(((hi + lo) - 2.0 * cm).abs() <= 1e-9 * (2.0 * cm).abs().max(1e-12));
            if cg.abs() > 1e-12 {
                assert!((hi * lo - cg).abs() <= 1e-6 * cg.abs());
            }
        }
        for p in m.theta.valid.iter_set() {
            let t = m.theta.get(p.x, p.y);
            assert!(t > -FRAC_PI_2 && t <= FRAC_PI_2);
        }
    }

    #[test]
    fn rotation_equivariance() {
        let h = smooth_field(64);
        let m = curvature_maps(&h, 3.0).unwrap();
        let mr = curvature_maps(&h.rotate90(), 3.0).unwrap();
        let mean_r = m.mean.rotate90();
        let gauss_r = m.gaussian.rotate90();
        let theta_r = m.theta.rotate90();
        assert_eq!(mr.valid(), &mean_r.valid);
        for p in mr.valid().iter_set() {
            let scale = mean_r.get(p.x, p.y).abs().max(1.0);
            assert!((mr.mean.get(p.x, p.y) - mean_r.get(p.x, p.y)).abs() < 1e-9 * scale);
            let gs = gauss_r.get(p.x, p.y).abs().max(1.0);
            assert!((mr.gaussian.get(p.x, p.y) - gauss_r.get(p.x, p.y)).abs() < 1e-9 * gs);
        }
        let mut checked = 0;
        for p in mr.theta.valid.iter_set() {
            if !theta_r.valid.get(p.x, p.y) {
                continue;
            }
            let d = fold_half_turn(mr.theta.get(p.x, p.y) - (theta_r.get(p.x, p.y) + FRAC_PI_2));
            // guard the wrap at +-pi/2
            assert!(d.abs() < 1e-9 || (d.abs() - PI).abs() < 1e-9, "{d} at {p:?}");
            checked += 1;
        }
        assert!(checked > 100);
    }

    #[test]
    fn small_slope_mean_curvature_scales_linearly() {
        let base = field(64, 64, 0.001, |x, y| 0.0002 * ((x * 150.0).sin() + (y * 120.0).cos()));
        let m1 = curvature_maps(&base, 3.0).unwrap();
        let m2 = curvature_maps(&base.map_heights(|v| 2.0 * v), 3.0).unwrap();
        for p in m1.valid().iter_set() {
            let (a, b) = (m1.mean.get(p.x, p.y), m2.mean.get(p.x, p.y));
            if a.abs() > 1.0 {
                assert!((b / a - 2.0).abs() < 0.02, "{a} {b}");
            }
        }
    }

    #[test]
    fn gaussian_fxx_matches_finite_differences_of_smoothed_field() {
        use rand::{Rng, SeedableRng};
        let h = smooth_field(96);
        let sigma = 3.0;
        let smoothed = gaussian_derivative(&h, sigma, 0, 0).unwrap();
        let fxx = gaussian_derivative(&h, sigma, 2, 0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let pitch = h.pitch();
        let mut n = 0;
        while n < 100 {
            let p = Pixel::new(rng.random_range(14..82), rng.random_range(14..82));
            if !(smoothed.is_valid(p.x - 1, p.y) && smoothed.is_valid(p.x + 1, p.y)) {
                continue;
            }
            let fd = (smoothed.get(p.x + 1, p.y) - 2.0 * smoothed.get(p.x, p.y) + smoothed.get(p.x - 1, p.y)) / (pitch * pitch);
            let g = fxx.get(p.x, p.y);
            if g.abs() > 1.0 {
                assert!((fd - g).abs() / g.abs() < 0.05, "fd {fd} g {g}");
            }
            n += 1;
        }
    }

    proptest! {
        #[test]
        fn fold_stays_in_half_open_interval(a in -20.0f64..20.0) {
            let t = fold_half_turn(a);
            prop_assert!(t > -FRAC_PI_2 && t <= FRAC_PI_2);
            let d = (a - t) / PI;
            prop_assert!((d - d.round()).abs() < 1e-9);
        }
    }
}
