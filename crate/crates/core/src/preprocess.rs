//! Tensor-product uniform B-spline approximation of a height field.
//!
//! The fit is a regularised linear least-squares problem over the control
//! heights. Data pixels contribute `B^T B`, the smoothness term adds a small
//! penalty on third differences of the control grid along both axes (zero
//! on quadratics, so those are reproduced exactly), which also fills holes
//! in the mask. The normal matrix is banded (row-major control ordering), so
//! it is factored with a banded Cholesky.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, HeightField, PixelMask};

pub const DEFAULT_SPACING: usize = 8;
pub const DEFAULT_DEGREE: usize = 3;
pub const DEFAULT_SMOOTHNESS: f64 = 1e-6;

/// Axis-aligned pixel rectangle `[x0, x0 + width) x [y0, y0 + height)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl PixelRect {
    pub fn new(x0: usize, y0: usize, width: usize, height: usize) -> Self {
        Self {
            x0,
            y0,
            width,
            height,
        }
    }

    pub fn contains_rect(&self, other: &PixelRect) -> bool {
        other.x0 >= self.x0
            && other.y0 >= self.y0
            && other.x0 + other.width <= self.x0 + self.width
            && other.y0 + other.height <= self.y0 + self.height
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Pixels per knot interval.
    pub spacing: usize,
    pub degree: usize,
    /// Weight of the third-difference penalty on control heights.
    pub smoothness: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            spacing: DEFAULT_SPACING,
            degree: DEFAULT_DEGREE,
            smoothness: DEFAULT_SMOOTHNESS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub rmse: f64,
    pub max_residual: f64,
    pub n_points: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BSplineSurface {
    degree: usize,
    spacing: f64,
    nx: usize,
    ny: usize,
    /// Row-major `ny x nx` control heights in metres.
    control: Vec<f64>,
    domain: PixelRect,
    pitch: f64,
}

/// Uniform B-spline blending weights of `degree` at local parameter `t`.
fn uniform_basis(degree: usize, t: f64, out: &mut [f64]) {
    out[0] = 1.0;
    for d in 1..=degree {
        let inv = 1.0 / d as f64;
        // walk downwards so out[j-1] still holds the degree d-1 value
        let mut prev = 0.0; // N^{d-1}_{j-1}
        for j in 0..=d {
            let cur = if j < d { out[j] } else { 0.0 }; // N^{d-1}_j
            out[j] = (t + (d - j) as f64) * inv * prev + ((j + 1) as f64 - t) * inv * cur;
            prev = cur;
        }
    }
}

/// Knot span and local parameter for pixel offset `u_px` along an axis.
#[inline]
fn span_of(u_px: f64, spacing: f64, n_spans: usize) -> (usize, f64) {
    let u = u_px / spacing;
    let k = (u.floor().max(0.0) as usize).min(n_spans - 1);
    (k, u - k as f64)
}

fn n_spans(len: usize, spacing: usize) -> usize {
    (len.saturating_sub(1)).div_ceil(spacing).max(1)
}

impl BSplineSurface {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn control_dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn control(&self) -> &[f64] {
        &self.control
    }

    pub fn domain(&self) -> PixelRect {
        self.domain
    }

    /// Height at a (fractional) pixel position in grid coordinates.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let p = self.degree;
        let mut bx = [0.0; 8];
        let mut by = [0.0; 8];
        let (kx, tx) = span_of(x - self.domain.x0 as f64, self.spacing, self.nx - p);
        let (ky, ty) = span_of(y - self.domain.y0 as f64, self.spacing, self.ny - p);
        uniform_basis(p, tx, &mut bx);
        uniform_basis(p, ty, &mut by);
        let mut z = 0.0;
        for (j, wy) in by[..=p].iter().enumerate() {
            let row = &self.control[(ky + j) * self.nx + kx..];
            let mut acc = 0.0;
            for (i, wx) in bx[..=p].iter().enumerate() {
                acc += wx * row[i];
            }
            z += wy * acc;
        }
        z
    }
}

/// Fit with the default smoothness weight.
pub fn fit_bspline(
    h: &HeightField,
    mask: &PixelMask,
    spacing: usize,
    degree: usize,
) -> Result<(BSplineSurface, FitReport)> {
    fit_bspline_with(
        h,
        mask,
        &FitOptions {
            spacing,
            degree,
            smoothness: DEFAULT_SMOOTHNESS,
        },
    )
}

pub fn fit_bspline_with(
    h: &HeightField,
    mask: &PixelMask,
    opts: &FitOptions,
) -> Result<(BSplineSurface, FitReport)> {
    let p = opts.degree;
    if !(1..=5).contains(&p) {
        return Err(Error::Parameter(format!("spline degree must be in 1..=5, got {p}")));
    }
    if opts.spacing < 2 {
        return Err(Error::Parameter(format!("knot spacing must be >= 2, got {}", opts.spacing)));
    }
    if !(opts.smoothness.is_finite() && opts.smoothness >= 0.0) {
        return Err(Error::Parameter("smoothness must be non-negative".into()));
    }
    if mask.width() != h.width() || mask.height() != h.height() {
        return Err(Error::InvalidInput("mask and height field dimensions differ".into()));
    }
    let (w, hgt) = (h.width(), h.height());
    let domain = PixelRect::new(0, 0, w, hgt);
    let spacing = opts.spacing as f64;
    let (sx, sy) = (n_spans(w, opts.spacing), n_spans(hgt, opts.spacing));
    let (nx, ny) = (sx + p, sy + p);
    let n = nx * ny;
    let used = mask.and(h.valid());
    let n_points = used.count();
    if n_points < (p + 1) * (p + 1) {
        return Err(Error::Fit {
            region: format!("pixels (0, 0)..({w}, {hgt})"),
            reason: format!("{n_points} valid pixels for a degree-{p} surface"),
        });
    }

    // per-column and per-row basis tables
    let mut bx_tab = vec![0.0; w * (p + 1)];
    let mut kx_tab = vec![0usize; w];
    for x in 0..w {
        let (k, t) = span_of(x as f64, spacing, sx);
        kx_tab[x] = k;
        uniform_basis(p, t, &mut bx_tab[x * (p + 1)..(x + 1) * (p + 1)]);
    }
    let mut by_tab = vec![0.0; hgt * (p + 1)];
    let mut ky_tab = vec![0usize; hgt];
    for y in 0..hgt {
        let (k, t) = span_of(y as f64, spacing, sy);
        ky_tab[y] = k;
        uniform_basis(p, t, &mut by_tab[y * (p + 1)..(y + 1) * (p + 1)]);
    }

    let reg_reach = p.max(3);
    let bw = reg_reach * nx + reg_reach;
    let mut band = BandMatrix::new(n, bw);
    let mut rhs = vec![0.0; n];
    let mut idx = vec![0usize; (p + 1) * (p + 1)];
    let mut val = vec![0.0; (p + 1) * (p + 1)];
    for px in used.iter_set() {
        let (kx, ky) = (kx_tab[px.x], ky_tab[px.y]);
        let bx = &bx_tab[px.x * (p + 1)..(px.x + 1) * (p + 1)];
        let by = &by_tab[px.y * (p + 1)..(px.y + 1) * (p + 1)];
        let z = h.get(px.x, px.y);
        let mut m = 0;
        for (j, wy) in by.iter().enumerate() {
            for (i, wx) in bx.iter().enumerate() {
                idx[m] = (ky + j) * nx + kx + i;
                val[m] = wy * wx;
                m += 1;
            }
        }
        for a in 0..m {
            rhs[idx[a]] += val[a] * z;
            for b in 0..=a {
                // idx is increasing in (j, i) order, so idx[a] >= idx[b]
                band.add(idx[a], idx[b], val[a] * val[b]);
            }
        }
    }

    if opts.smoothness > 0.0 {
        let lam = opts.smoothness;
        let mut add_stencil = |cells: [usize; 4]| {
            let coef = [-1.0, 3.0, -3.0, 1.0];
            for a in 0..4 {
                for b in 0..4 {
                    if cells[a] >= cells[b] {
                        band.add(cells[a], cells[b], lam * coef[a] * coef[b]);
                    }
                }
            }
        };
        for j in 0..ny {
            for i in 0..nx.saturating_sub(3) {
                let c = j * nx + i;
                add_stencil([c, c + 1, c + 2, c + 3]);
            }
        }
        for j in 0..ny.saturating_sub(3) {
            for i in 0..nx {
                let c = j * nx + i;
                add_stencil([c, c + nx, c + 2 * nx, c + 3 * nx]);
            }
        }
    }

    band.cholesky().map_err(|row| {
        let (ci, cj) = (row % nx, row / nx);
        let x0 = ci.saturating_sub(p) * opts.spacing;
        let y0 = cj.saturating_sub(p) * opts.spacing;
        Error::Fit {
            region: format!(
                "pixels ({x0}, {y0})..({}, {})",
                ((ci + 1) * opts.spacing).min(w),
                ((cj + 1) * opts.spacing).min(hgt)
            ),
            reason: "control point is not determined by the data".into(),
        }
    })?;
    let control = band.solve(rhs);

    let surface = BSplineSurface {
        degree: p,
        spacing,
        nx,
        ny,
        control,
        domain,
        pitch: h.pitch(),
    };

    let mut sum_sq = 0.0;
    let mut max_residual: f64 = 0.0;
    for px in used.iter_set() {
        let r = (surface.eval(px.x as f64, px.y as f64) - h.get(px.x, px.y)).abs();
        sum_sq += r * r;
        max_residual = max_residual.max(r);
    }
    let report = FitReport {
        rmse: (sum_sq / n_points as f64).sqrt(),
        max_residual,
        n_points,
    };
    Ok((surface, report))
}

/// Dense, fully valid samples of the surface over `domain`. The result's
/// pixel `(0, 0)` corresponds to `(domain.x0, domain.y0)`.
pub fn evaluate_surface(s: &BSplineSurface, domain: PixelRect) -> Result<HeightField> {
    if domain.width == 0 || domain.height == 0 || !s.domain.contains_rect(&domain) {
        return Err(Error::Domain(format!(
            "evaluation rectangle {domain:?} outside fit domain {:?}",
            s.domain
        )));
    }
    let p = s.degree;
    let (sx, sy) = (s.nx - p, s.ny - p);
    let mut bx_tab = vec![0.0; domain.width * (p + 1)];
    let mut kx_tab = vec![0usize; domain.width];
    for i in 0..domain.width {
        let (k, t) = span_of((domain.x0 + i - s.domain.x0) as f64, s.spacing, sx);
        kx_tab[i] = k;
        uniform_basis(p, t, &mut bx_tab[i * (p + 1)..(i + 1) * (p + 1)]);
    }
    let mut row_ctrl = vec![0.0; s.nx];
    let mut by = [0.0; 8];
    let mut values = Vec::with_capacity(domain.width * domain.height);
    for j in 0..domain.height {
        let (ky, ty) = span_of((domain.y0 + j - s.domain.y0) as f64, s.spacing, sy);
        uniform_basis(p, ty, &mut by);
        // collapse the y direction first
        for (i, rc) in row_ctrl.iter_mut().enumerate() {
            *rc = (0..=p).map(|m| by[m] * s.control[(ky + m) * s.nx + i]).sum();
        }
        for i in 0..domain.width {
            let bx = &bx_tab[i * (p + 1)..(i + 1) * (p + 1)];
            let k = kx_tab[i];
            values.push(bx.iter().zip(&row_ctrl[k..]).map(|(a, b)| a * b).sum());
        }
    }
    HeightField::from_values(Grid::from_vec(domain.width, domain.height, values)?, s.pitch)
}

/// Fit over the mask and resample the whole grid.
pub fn smooth_height_field(
    h: &HeightField,
    mask: &PixelMask,
    opts: &FitOptions,
) -> Result<(HeightField, FitReport)> {
    let (s, report) = fit_bspline_with(h, mask, opts)?;
    let dense = evaluate_surface(&s, s.domain())?;
    Ok((dense, report))
}

/// Symmetric banded matrix, lower band stored row by row.
struct BandMatrix {
    n: usize,
    bw: usize,
    /// `data[i * (bw + 1) + (i - j)]` holds entry `(i, j)` for `i - bw <= j <= i`.
    data: Vec<f64>,
}

impl BandMatrix {
    fn new(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    #[inline]
    fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i >= j && i - j <= self.bw);
        self.data[i * (self.bw + 1) + (i - j)] += v;
    }

    /// In-place `L L^T` factorisation. Returns the failing row on a
    /// non-positive pivot.
    fn cholesky(&mut self) -> std::result::Result<(), usize> {
        let (n, bw) = (self.n, self.bw);
        let stride = bw + 1;
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut sum = self.data[i * stride + (i - j)];
                for k in k0..j {
                    sum -= self.data[i * stride + (i - k)] * self.data[j * stride + (j - k)];
                }
                if i == j {
                    let diag = self.data[i * stride];
                    if !(sum > 1e-13 * diag.abs().max(f64::MIN_POSITIVE)) {
                        return Err(i);
                    }
                    self.data[i * stride] = sum.sqrt();
                } else {
                    self.data[i * stride + (i - j)] = sum / self.data[j * stride];
                }
            }
        }
        Ok(())
    }

    fn solve(&self, mut b: Vec<f64>) -> Vec<f64> {
        let (n, bw) = (self.n, self.bw);
        let stride = bw + 1;
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.data[i * stride + (i - k)] * b[k];
            }
            b[i] = s / self.data[i * stride];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= self.data[k * stride + (k - i)] * b[k];
            }
            b[i] = s / self.data[i * stride];
        }
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn basis_partition_of_unity() {
        let mut b = [0.0; 8];
        for p in 1..=5 {
            for t in [0.0, 0.25, 0.5, 0.9, 1.0] {
                uniform_basis(p, t, &mut b);
                let s: f64 = b[..=p].iter().sum();
                assert!((s - 1.0).abs() < 1e-14, "p={p} t={t} sum={s}");
                assert!(b[..=p].iter().all(|&v| v >= -1e-15));
            }
        }
        uniform_basis(3, 0.0, &mut b);
        assert!((b[0] - 1.0 / 6.0).abs() < 1e-15);
        assert!((b[1] - 4.0 / 6.0).abs() < 1e-15);
        assert!((b[2] - 1.0 / 6.0).abs() < 1e-15);
        assert!(b[3].abs() < 1e-15);
    }

    #[test]
    fn band_cholesky_solves_small_system() {
        // tridiagonal 2,-1 system
        let n = 6;
        let mut m = BandMatrix::new(n, 1);
        for i in 0..n {
            m.add(i, i, 2.0);
            if i > 0 {
                m.add(i, i - 1, -1.0);
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| i as f64 * 0.5 - 1.0).collect();
        let b: Vec<f64> = (0..n)
            .map(|i| {
                2.0 * x_true[i] - if i > 0 { x_true[i - 1] } else { 0.0 } - if i + 1 < n { x_true[i + 1] } else { 0.0 }
            })
            .collect();
        m.cholesky().unwrap();
        let x = m.solve(b);
        for (a, b) in x.iter().zip(&x_true) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn field(w: usize, h: usize, pitch: f64, f: impl Fn(f64, f64) -> f64) -> HeightField {
        HeightField::from_world_fn(w, h, pitch, f).unwrap()
    }

    #[test]
    fn plane_is_reproduced() {
        let h = field(64, 48, 0.001, |_, _| 0.01);
        let mask = PixelMask::full(64, 48).unwrap();
        let (s, rep) = fit_bspline(&h, &mask, 8, 3).unwrap();
        assert!(rep.rmse < 1e-9, "rmse {}", rep.rmse);
        assert!((s.eval(13.7, 40.2) - 0.01).abs() < 1e-9);
        assert_eq!(rep.n_points, 64 * 48);
    }

    #[test]
    fn quadratic_bowl_is_reproduced() {
        let h = field(80, 80, 0.001, |x, y| x * x + y * y);
        let mask = PixelMask::full(80, 80).unwrap();
        let (_, rep) = fit_bspline(&h, &mask, 8, 3).unwrap();
        assert!(rep.rmse < 1e-9, "rmse {}", rep.rmse);
        assert!(rep.max_residual >= rep.rmse);
    }

    #[test]
    fn evaluation_on_own_grid_matches_report() {
        let h = field(40, 40, 0.001, |x, y| (x * 90.0).sin() * 0.004 + y * 0.1);
        let mask = PixelMask::full(40, 40).unwrap();
        let (s, rep) = fit_bspline(&h, &mask, 6, 3).unwrap();
        let e = evaluate_surface(&s, s.domain()).unwrap();
        let mut sq = 0.0;
        for p in mask.iter_set() {
            sq += (e.get(p.x, p.y) - h.get(p.x, p.y)).powi(2);
        }
        assert!(((sq / 1600.0).sqrt() - rep.rmse).abs() < 1e-15);
    }

    #[test]
    fn sub_rectangle_and_out_of_domain() {
        let h = field(30, 20, 0.001, |x, y| 0.5 * x - 0.25 * y);
        let mask = PixelMask::full(30, 20).unwrap();
        let (s, _) = fit_bspline(&h, &mask, 4, 3).unwrap();
        let sub = evaluate_surface(&s, PixelRect::new(5, 3, 10, 7)).unwrap();
        assert_eq!((sub.width(), sub.height()), (10, 7));
        assert!((sub.get(2, 4) - h.get(7, 7)).abs() < 1e-9);
        assert!(matches!(evaluate_surface(&s, PixelRect::new(25, 0, 10, 5)), Err(Error::Domain(_))));
    }

    #[test]
    fn hole_is_filled_continuously() {
        let (w, hh) = (64usize, 64usize);
        let h = field(w, hh, 0.001, |x, y| 0.02 * (-((x - 0.032).powi(2) + (y - 0.03).powi(2)) / (2.0 * 0.012f64.powi(2))).exp());
        let mask = PixelMask::from_fn(w, hh, |x, y| {
            let (dx, dy) = (x as f64 - 30.0, y as f64 - 34.0);
            dx * dx + dy * dy > 36.0
        })
        .unwrap();
        let (s, _) = fit_bspline(&h, &mask, 8, 3).unwrap();
        let e = evaluate_surface(&s, s.domain()).unwrap();
        // largest step anywhere against the largest step of the source field
        let mut max_src: f64 = 0.0;
        let mut max_fit: f64 = 0.0;
        for y in 0..hh {
            for x in 1..w {
                max_src = max_src.max((h.get(x, y) - h.get(x - 1, y)).abs());
                max_fit = max_fit.max((e.get(x, y) - e.get(x - 1, y)).abs());
            }
        }
        assert!(max_fit <= 2.0 * max_src, "jump {max_fit} vs {max_src}");
        // inside the hole the surface follows the underlying bump closely
        assert!((e.get(30, 34) - h.get(30, 34)).abs() < 1e-3);
    }

    #[test]
    fn too_few_points_is_a_fit_error() {
        let h = field(20, 20, 0.001, |_, _| 0.0);
        let mut mask = PixelMask::empty(20, 20).unwrap();
        for i in 0..5 {
            mask.set(i, i, true);
        }
        assert!(matches!(fit_bspline(&h, &mask, 8, 3), Err(Error::Fit { .. })));
    }

    #[test]
    fn degenerate_single_row_is_a_fit_error() {
        let h = field(40, 40, 0.001, |x, _| x);
        let mask = PixelMask::from_fn(40, 40, |_, y| y == 20).unwrap();
        let err = fit_bspline_with(&h, &mask, &FitOptions { smoothness: 0.0, ..Default::default() });
        assert!(matches!(err, Err(Error::Fit { .. })), "{err:?}");
    }

    #[test]
    fn bad_parameters() {
        let h = field(20, 20, 0.001, |_, _| 0.0);
        let mask = PixelMask::full(20, 20).unwrap();
        assert!(matches!(fit_bspline(&h, &mask, 1, 3), Err(Error::Parameter(_))));
        assert!(matches!(fit_bspline(&h, &mask, 4, 0), Err(Error::Parameter(_))));
        let other = PixelMask::full(10, 20).unwrap();
        assert!(fit_bspline(&h, &other, 4, 3).is_err());
        let _ = Grid::new(1, 1, 0.0).unwrap();
    }
}
