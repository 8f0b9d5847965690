//! Wrinkle detection: ridge linking, junction splitting, grouping, quintic
//! description, Hough splitting of joined wrinkles and quantification.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_2;

use crate::differential::{fold_half_turn, CurvatureMaps};
use crate::error::{Error, Result};
use crate::grid::{HeightField, Pixel, PixelMask};
use crate::planner::principal_direction_of;
use crate::surface_class::{ShapeType, ShapeTypeMap, TopologyMasks};
use crate::triplets::{Triplet, TripletMatcher, TripletOptions};

pub const MIN_SEGMENT_PX: usize = 5;
pub const DEFAULT_RMSE_THRESHOLD: f64 = 2.0;
pub const DEFAULT_HOUGH_ALPHA_DEG: f64 = 20.0;
pub const MIN_FIT_POINTS: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RidgeSegment {
    pub points: Vec<Pixel>,
}

impl RidgeSegment {
    pub fn length_px(&self) -> usize {
        self.points.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WrinkleOptions {
    pub min_segment_px: usize,
    pub junction_window: usize,
    pub junction_min_count: usize,
    pub group_gap_px: f64,
    pub group_angle_deg: f64,
    /// Pixels back from an endpoint used for its tangent.
    pub tangent_reach: usize,
    pub rmse_threshold: f64,
    pub hough_alpha_deg: f64,
    pub hough: HoughOptions,
    pub max_depth: usize,
    pub triplet: TripletOptions,
}

impl Default for WrinkleOptions {
    fn default() -> Self {
        Self {
            min_segment_px: MIN_SEGMENT_PX,
            junction_window: 5,
            junction_min_count: 3,
            group_gap_px: 24.0,
            group_angle_deg: 30.0,
            tangent_reach: 10,
            rmse_threshold: DEFAULT_RMSE_THRESHOLD,
            hough_alpha_deg: DEFAULT_HOUGH_ALPHA_DEG,
            hough: HoughOptions::default(),
            max_depth: 4,
            triplet: TripletOptions::default(),
        }
    }
}

fn m_neighbours(mask: &PixelMask, p: Pixel) -> Vec<Pixel> {
    let (x, y) = (p.x as i64, p.y as i64);
    let mut out = Vec::with_capacity(4);
    for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
        if mask.get_signed(x + dx, y + dy) {
            out.push(Pixel::new((x + dx) as usize, (y + dy) as usize));
        }
    }
    for (dx, dy) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
        if mask.get_signed(x + dx, y + dy) && !mask.get_signed(x + dx, y) && !mask.get_signed(x, y + dy) {
            out.push(Pixel::new((x + dx) as usize, (y + dy) as usize));
        }
    }
    out
}

/// Trace a mask whose pixels all have at most two m-neighbours into polylines.
fn trace_paths(mask: &PixelMask) -> Vec<Vec<Pixel>> {
    let mut visited = PixelMask::empty(mask.width(), mask.height()).unwrap();
    let mut paths = vec![];
    let trace = |start: Pixel, visited: &mut PixelMask| {
        let mut path = vec![start];
        visited.set(start.x, start.y, true);
        let mut cur = start;
        while let Some(next) = m_neighbours(mask, cur).into_iter().find(|q| !visited.get(q.x, q.y)) {
            visited.set(next.x, next.y, true);
            path.push(next);
            cur = next;
        }
        path
    };
    // open paths from their endpoints first, then closed loops
    for p in mask.iter_set() {
        if !visited.get(p.x, p.y) && m_neighbours(mask, p).len() <= 1 {
            paths.push(trace(p, &mut visited));
        }
    }
    for p in mask.iter_set() {
        if !visited.get(p.x, p.y) {
            paths.push(trace(p, &mut visited));
        }
    }
    paths
}

/// Zhang-Suen thinning to a one-pixel-wide 8-connected skeleton.
pub fn thin(mask: &PixelMask) -> PixelMask {
    let mut m = mask.clone();
    let at = |m: &PixelMask, x: i64, y: i64| m.get_signed(x, y) as u8;
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let mut remove = vec![];
            for p in m.iter_set() {
                let (x, y) = (p.x as i64, p.y as i64);
                // p2..p9 clockwise from north
                let n = [
                    at(&m, x, y - 1),
                    at(&m, x + 1, y - 1),
                    at(&m, x + 1, y),
                    at(&m, x + 1, y + 1),
                    at(&m, x, y + 1),
                    at(&m, x - 1, y + 1),
                    at(&m, x - 1, y),
                    at(&m, x - 1, y - 1),
                ];
                let b: u8 = n.iter().sum();
                let a = (0..8).filter(|&i| n[i] == 0 && n[(i + 1) % 8] == 1).count();
                let cond = if pass == 0 {
                    n[0] * n[2] * n[4] == 0 && n[2] * n[4] * n[6] == 0
                } else {
                    n[0] * n[2] * n[6] == 0 && n[0] * n[4] * n[6] == 0
                };
                if (2..=6).contains(&b) && a == 1 && cond {
                    remove.push(p);
                }
            }
            for p in &remove {
                m.set(p.x, p.y, false);
            }
            changed |= !remove.is_empty();
        }
        if !changed {
            return m;
        }
    }
}

/// Connected ridge pixels thinned and traced into polylines, split at
/// branch pixels and sharp corners.
pub fn link_segments(topo: &TopologyMasks) -> Vec<RidgeSegment> {
    link_segments_with(&topo.ridge_points, MIN_SEGMENT_PX)
}

pub fn link_segments_with(ridge: &PixelMask, min_len: usize) -> Vec<RidgeSegment> {
    let mut mask = thin(ridge);
    loop {
        let branches: Vec<Pixel> = mask.iter_set().filter(|&p| m_neighbours(&mask, p).len() >= 3).collect();
        if branches.is_empty() {
            break;
        }
        for p in branches {
            mask.set(p.x, p.y, false);
        }
    }
    trace_paths(&mask)
        .into_iter()
        .flat_map(|p| split_at_corners(p, CORNER_REACH, CORNER_ANGLE_DEG))
        .filter(|p| p.len() >= min_len)
        .map(|points| RidgeSegment { points })
        .collect()
}

pub const CORNER_REACH: usize = 5;
pub const CORNER_ANGLE_DEG: f64 = 45.0;

/// Cut a polyline where the direction over `reach` (or `2 * reach`) steps
/// turns by more than `angle_deg`. The sharpest point of each corner and
/// `reach` points either side of it are dropped, so the pieces' end tangents
/// do not inherit the bend.
pub fn split_at_corners(path: Vec<Pixel>, reach: usize, angle_deg: f64) -> Vec<Vec<Pixel>> {
    let n = path.len();
    if n < 2 * reach + 1 {
        return vec![path];
    }
    let dir = |a: Pixel, b: Pixel| (b.y as f64 - a.y as f64).atan2(b.x as f64 - a.x as f64);
    let turn_at = |i: usize, r: usize| {
        if i < r || i + r >= n {
            return 0.0;
        }
        let d = (dir(path[i], path[i + r]) - dir(path[i - r], path[i])).to_degrees();
        let d = d.rem_euclid(360.0);
        d.min(360.0 - d)
    };
    // the wider reach catches corners rounded off over several pixels
    let turn: Vec<f64> = (0..n).map(|i| turn_at(i, reach).max(turn_at(i, 2 * reach))).collect();
    let mut cuts = vec![];
    let mut i = 0;
    while i < n {
        if turn[i] > angle_deg {
            let start = i;
            while i < n && turn[i] > angle_deg {
                i += 1;
            }
            let peak = (start..i).max_by(|&a, &b| turn[a].total_cmp(&turn[b]).then(b.cmp(&a))).unwrap();
            cuts.push(peak);
        } else {
            i += 1;
        }
    }
    let mut out = vec![];
    let mut from = 0;
    for c in cuts {
        let to = c.saturating_sub(reach).max(from);
        out.push(path[from..to].to_vec());
        from = (c + reach + 1).min(n);
    }
    out.push(path[from..].to_vec());
    out.retain(|p| !p.is_empty());
    out
}

/// Cut segments where the neighbourhood holds enough junction labels.
pub fn split_at_junctions(segments: &[RidgeSegment], types: &ShapeTypeMap) -> Vec<RidgeSegment> {
    let o = WrinkleOptions::default();
    split_at_junctions_with(segments, types, o.junction_window, o.junction_min_count, o.min_segment_px)
}

/// Labels that surround a crest only where ridges meet or end.
fn is_junction_label(t: ShapeType) -> bool {
    matches!(
        t,
        ShapeType::Dome | ShapeType::Cap | ShapeType::Saddle | ShapeType::SaddleRidge | ShapeType::Rut
    )
}

pub fn split_at_junctions_with(
    segments: &[RidgeSegment],
    types: &ShapeTypeMap,
    window: usize,
    min_count: usize,
    min_len: usize,
) -> Vec<RidgeSegment> {
    let r = (window / 2) as i64;
    let is_cut = |p: Pixel| {
        let mut n = 0;
        for dy in -r..=r {
            for dx in -r..=r {
                let (x, y) = (p.x as i64 + dx, p.y as i64 + dy);
                if types.contains(x, y) && is_junction_label(*types.get(x as usize, y as usize)) {
                    n += 1;
                }
            }
        }
        n >= min_count
    };
    let mut out = vec![];
    for s in segments {
        let mut cur = vec![];
        for &p in &s.points {
            if is_cut(p) {
                if cur.len() >= min_len {
                    out.push(RidgeSegment { points: std::mem::take(&mut cur) });
                }
                cur.clear();
            } else {
                cur.push(p);
            }
        }
        if cur.len() >= min_len {
            out.push(RidgeSegment { points: cur });
        }
    }
    out
}

/// Outward unit tangent at the start (`front`) or end of a segment.
fn end_tangent(s: &RidgeSegment, front: bool, reach: usize) -> [f64; 2] {
    let n = s.points.len();
    let k = reach.min(n - 1);
    let (e, q) = if front { (s.points[0], s.points[k]) } else { (s.points[n - 1], s.points[n - 1 - k]) };
    let d = [e.x as f64 - q.x as f64, e.y as f64 - q.y as f64];
    let l = d[0].hypot(d[1]);
    if l == 0.0 {
        [0.0, 0.0]
    } else {
        [d[0] / l, d[1] / l]
    }
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut c = i;
    while parent[c] != r {
        let next = parent[c];
        parent[c] = r;
        c = next;
    }
    r
}

fn end_point(s: &RidgeSegment, front: bool) -> Pixel {
    if front { s.points[0] } else { s.points[s.points.len() - 1] }
}

/// Merge segments whose nearest endpoints are close and continue each other.
pub fn group_segments(segments: &[RidgeSegment]) -> Vec<Vec<Pixel>> {
    let o = WrinkleOptions::default();
    group_segments_with(segments, o.group_gap_px, o.group_angle_deg, o.tangent_reach)
}

pub fn group_segments_with(segments: &[RidgeSegment], gap_px: f64, angle_deg: f64, reach: usize) -> Vec<Vec<Pixel>> {
    let n = segments.len();
    let mut parent: Vec<usize> = (0..n).collect();
    let cos_gate = angle_deg.to_radians().cos();
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&segments[i], &segments[j]);
            let mut best: Option<(f64, bool, bool)> = None;
            for fa in [true, false] {
                for fb in [true, false] {
                    let (pa, pb) = (end_point(a, fa), end_point(b, fb));
                    let d = (pa.x as f64 - pb.x as f64).hypot(pa.y as f64 - pb.y as f64);
                    if best.is_none_or(|(bd, _, _)| d < bd) {
                        best = Some((d, fa, fb));
                    }
                }
            }
            let (d, fa, fb) = best.unwrap();
            if d > gap_px {
                continue;
            }
            let ta = end_tangent(a, fa, reach);
            let tb = end_tangent(b, fb, reach);
            // a continues into b when its outward tangent opposes b's
            let joins = -(ta[0] * tb[0] + ta[1] * tb[1]) >= cos_gate;
            if joins {
                let (ra, rb) = (find(&mut parent, i), find(&mut parent, j));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut groups: Vec<(usize, Vec<Pixel>)> = vec![];
    for i in 0..n {
        let r = find(&mut parent, i);
        match groups.iter_mut().find(|(root, _)| *root == r) {
            Some((_, g)) => g.extend_from_slice(&segments[i].points),
            None => groups.push((r, segments[i].points.clone())),
        }
    }
    groups.into_iter().map(|(_, g)| g).collect()
}

/// `v = a u^5 + b u^4 + c u^3 + d u^2 + e u + f` in a frame centred on the
/// point centroid with the abscissa along the points' principal axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuinticCurve {
    /// `[a, b, c, d, e, f]`
    pub coefficients: [f64; 6],
    pub origin: [f64; 2],
    /// Direction of the local abscissa in the image, radians.
    pub frame_angle: f64,
    pub rmse_px: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl QuinticCurve {
    pub fn eval(&self, u: f64) -> f64 {
        self.coefficients.iter().fold(0.0, |acc, c| acc * u + c)
    }

    pub fn slope(&self, u: f64) -> f64 {
        let [a, b, c, d, e, _] = self.coefficients;
        (((5.0 * a * u + 4.0 * b) * u + 3.0 * c) * u + 2.0 * d) * u + e
    }

    fn axes(&self) -> ([f64; 2], [f64; 2]) {
        let (s, c) = self.frame_angle.sin_cos();
        ([c, s], [-s, c])
    }

    /// Local abscissa of an image point.
    pub fn local_u(&self, p: [f64; 2]) -> f64 {
        let (e1, _) = self.axes();
        (p[0] - self.origin[0]) * e1[0] + (p[1] - self.origin[1]) * e1[1]
    }

    /// Image point of the curve at local abscissa `u`.
    pub fn point_at(&self, u: f64) -> [f64; 2] {
        let (e1, e2) = self.axes();
        let v = self.eval(u);
        [
            self.origin[0] + u * e1[0] + v * e2[0],
            self.origin[1] + u * e1[1] + v * e2[1],
        ]
    }

    /// Tangent angle in the local frame, `atan f'(u)`.
    pub fn local_tangent_angle(&self, u: f64) -> f64 {
        self.slope(u).atan()
    }
}

fn centroid(points: &[[f64; 2]]) -> [f64; 2] {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
    [sx / n, sy / n]
}

/// Angle of the major axis of the point covariance and the eigenvalue gap.
pub(crate) fn major_axis(points: &[[f64; 2]]) -> ([f64; 2], f64, f64) {
    let c = centroid(points);
    let n = points.len() as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let (sxx, sxy, syy) = (sxx / n, sxy / n, syy / n);
    let gap = 2.0 * (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
    (c, 0.5 * (2.0 * sxy).atan2(sxx - syy), gap)
}

pub fn to_points(pixels: &[Pixel]) -> Vec<[f64; 2]> {
    pixels.iter().map(|p| [p.x as f64, p.y as f64]).collect()
}

/// Least-squares quintic in the principal frame of the points.
pub fn fit_quintic(points: &[[f64; 2]]) -> Result<QuinticCurve> {
    if points.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientPoints {
            needed: MIN_FIT_POINTS,
            got: points.len(),
        });
    }
    let (origin, angle, _) = major_axis(points);
    let (s, c) = angle.sin_cos();
    let local: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            let (dx, dy) = (p[0] - origin[0], p[1] - origin[1]);
            (dx * c + dy * s, -dx * s + dy * c)
        })
        .collect();
    let scale = local.iter().map(|l| l.0.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::Fit {
            region: "quintic".into(),
            reason: "all points project to one abscissa".into(),
        });
    }
    let n = local.len();
    let a = DMatrix::from_fn(n, 6, |i, j| (local[i].0 / scale).powi(5 - j as i32));
    let b = DVector::from_iterator(n, local.iter().map(|l| l.1));
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-10 * smax) {
        return Err(Error::Fit {
            region: "quintic".into(),
            reason: format!("rank-deficient design (condition {:.3e})", smax / smin),
        });
    }
    let x = svd.solve(&b, 0.0).map_err(|e| Error::Fit {
        region: "quintic".into(),
        reason: e.to_string(),
    })?;
    let resid = &a * &x - &b;
    let rmse = (resid.norm_squared() / n as f64).sqrt();
    let mut coefficients = [0.0; 6];
    for j in 0..6 {
        coefficients[j] = x[j] / scale.powi(5 - j as i32);
    }
    let (u_min, u_max) = local.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), l| (lo.min(l.0), hi.max(l.0)));
    Ok(QuinticCurve {
        coefficients,
        origin,
        frame_angle: angle,
        rmse_px: rmse,
        u_min,
        u_max,
    })
}

/// Image-frame tangent direction at local abscissa `u`, in `(-pi/2, pi/2]`.
pub fn tangent_direction(c: &QuinticCurve, u: f64) -> f64 {
    fold_half_turn(c.frame_angle + c.local_tangent_angle(u))
}

/// Across-wrinkle search direction at `u`.
pub fn normal_direction(c: &QuinticCurve, u: f64) -> f64 {
    fold_half_turn(tangent_direction(c, u) + FRAC_PI_2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoughOptions {
    pub alpha_bin_deg: f64,
    pub beta_bin_px: f64,
    /// Minimum share of points a second line must hold away from the first.
    pub min_exclusive_share: f64,
    pub min_exclusive_points: usize,
}

impl Default for HoughOptions {
    fn default() -> Self {
        Self {
            alpha_bin_deg: 1.0,
            beta_bin_px: 2.0,
            min_exclusive_share: 0.2,
            min_exclusive_points: 5,
        }
    }
}

/// Infinite line through `point` with unit direction `dir`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line2 {
    pub point: [f64; 2],
    pub dir: [f64; 2],
}

impl Line2 {
    pub fn distance(&self, p: [f64; 2]) -> f64 {
        ((p[0] - self.point[0]) * self.dir[1] - (p[1] - self.point[1]) * self.dir[0]).abs()
    }

    /// Direction in degrees, in `(-90, 90]`.
    pub fn angle_deg(&self) -> f64 {
        fold_half_turn(self.dir[1].atan2(self.dir[0])).to_degrees()
    }

    fn from_normal(alpha: f64, beta: f64, origin: [f64; 2]) -> Line2 {
        let (s, c) = alpha.sin_cos();
        Line2 {
            point: [origin[0] + beta * c, origin[1] + beta * s],
            dir: [-s, c],
        }
    }

    /// Orthogonal regression through `points`; `None` for fewer than two.
    fn fit(points: &[[f64; 2]]) -> Option<Line2> {
        if points.len() < 2 {
            return None;
        }
        let (c, angle, _) = major_axis(points);
        Some(Line2 {
            point: c,
            dir: [angle.cos(), angle.sin()],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum HoughOutcome {
    /// The quintic already fits within the threshold.
    Unsplit,
    /// No second peak passed the non-locality test.
    UnsplitWithWarning(String),
    Split {
        first: Vec<usize>,
        second: Vec<usize>,
        lines: [Line2; 2],
    },
}

#[derive(Clone, Copy, Debug)]
struct Peak {
    votes: u32,
    alpha_bin: usize,
    beta_bin: usize,
}

/// Split joined wrinkles along the two dominant Hough directions. Returned
/// indices refer to `points`.
pub fn hough_split(points: &[[f64; 2]], thres_rmse: f64, thres_alpha_deg: f64) -> Result<HoughOutcome> {
    hough_split_with(points, thres_rmse, thres_alpha_deg, &HoughOptions::default())
}

pub fn hough_split_with(points: &[[f64; 2]], thres_rmse: f64, thres_alpha_deg: f64, o: &HoughOptions) -> Result<HoughOutcome> {
    if points.is_empty() {
        return Err(Error::InvalidInput("no points to split".into()));
    }
    if !(thres_rmse > 0.0 && thres_alpha_deg > 0.0) {
        return Err(Error::Parameter("Hough thresholds must be positive".into()));
    }
    match fit_quintic(points) {
        Ok(c) if c.rmse_px <= thres_rmse => return Ok(HoughOutcome::Unsplit),
        Ok(_) => {}
        Err(Error::InsufficientPoints { .. }) => return Ok(HoughOutcome::Unsplit),
        Err(Error::Fit { .. }) => {}
        Err(e) => return Err(e),
    }

    let origin = centroid(points);
    let rel: Vec<[f64; 2]> = points.iter().map(|p| [p[0] - origin[0], p[1] - origin[1]]).collect();
    let r_max = rel.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max);
    let n_alpha = (180.0 / o.alpha_bin_deg).round() as usize;
    let n_beta = (2.0 * r_max / o.beta_bin_px).floor() as usize + 1;
    let alphas: Vec<f64> = (0..n_alpha).map(|i| (i as f64 * o.alpha_bin_deg).to_radians()).collect();
    let mut acc = vec![0u32; n_alpha * n_beta];
    for p in &rel {
        for (i, a) in alphas.iter().enumerate() {
            let beta = p[0] * a.cos() + p[1] * a.sin();
            let j = (((beta + r_max) / o.beta_bin_px).floor() as usize).min(n_beta - 1);
            acc[i * n_beta + j] += 1;
        }
    }
    let cell = |i: i64, j: i64| -> u32 {
        // alpha wraps onto itself with beta mirrored
        let (i, j) = if i < 0 {
            (i + n_alpha as i64, n_beta as i64 - 1 - j)
        } else if i >= n_alpha as i64 {
            (i - n_alpha as i64, n_beta as i64 - 1 - j)
        } else {
            (i, j)
        };
        if j < 0 || j >= n_beta as i64 {
            0
        } else {
            acc[i as usize * n_beta + j as usize]
        }
    };
    let mut peaks = vec![];
    for i in 0..n_alpha as i64 {
        for j in 0..n_beta as i64 {
            let v = cell(i, j);
            if v < 2 {
                continue;
            }
            let is_peak = (-1..=1).all(|di| (-1..=1).all(|dj| (di == 0 && dj == 0) || cell(i + di, j + dj) <= v));
            if is_peak {
                peaks.push(Peak {
                    votes: v,
                    alpha_bin: i as usize,
                    beta_bin: j as usize,
                });
            }
        }
    }
    peaks.sort_by(|a, b| b.votes.cmp(&a.votes).then(a.alpha_bin.cmp(&b.alpha_bin)).then(a.beta_bin.cmp(&b.beta_bin)));
    let Some(&p1) = peaks.first() else {
        return Ok(HoughOutcome::UnsplitWithWarning("empty Hough accumulator".into()));
    };
    let line_of = |p: &Peak| {
        let beta = (p.beta_bin as f64 + 0.5) * o.beta_bin_px - r_max;
        Line2::from_normal(alphas[p.alpha_bin], beta, origin)
    };
    let tol = o.beta_bin_px;
    let l1 = line_of(&p1);
    let min_exclusive = o.min_exclusive_points.max((o.min_exclusive_share * points.len() as f64).ceil() as usize);
    let mut l2 = None;
    for p in &peaks[1..] {
        let da = (p.alpha_bin as f64 - p1.alpha_bin as f64).abs() * o.alpha_bin_deg;
        let da = da.min(180.0 - da);
        if da <= thres_alpha_deg {
            continue;
        }
        let cand = line_of(p);
        let exclusive = points.iter().filter(|&&q| cand.distance(q) <= tol && l1.distance(q) > tol).count();
        if exclusive >= min_exclusive {
            l2 = Some(cand);
            break;
        }
    }
    let Some(l2) = l2 else {
        return Ok(HoughOutcome::UnsplitWithWarning(format!(
            "no second Hough peak beyond {thres_alpha_deg} degrees"
        )));
    };
    // refine both lines on their own inliers
    let inliers = |l: &Line2, other: &Line2| -> Vec<[f64; 2]> {
        points.iter().copied().filter(|&q| l.distance(q) <= tol && l.distance(q) < other.distance(q)).collect()
    };
    let r1 = Line2::fit(&inliers(&l1, &l2)).unwrap_or(l1);
    let r2 = Line2::fit(&inliers(&l2, &l1)).unwrap_or(l2);
    let (mut first, mut second) = (vec![], vec![]);
    for (i, &q) in points.iter().enumerate() {
        if r1.distance(q) <= r2.distance(q) {
            first.push(i);
        } else {
            second.push(i);
        }
    }
    if first.is_empty() || second.is_empty() {
        return Ok(HoughOutcome::UnsplitWithWarning("Hough lines did not separate the points".into()));
    }
    Ok(HoughOutcome::Split {
        first,
        second,
        lines: [r1, r2],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wrinkle {
    pub points: Vec<Pixel>,
    pub curve: QuinticCurve,
    pub triplets: Vec<Triplet>,
    pub width_m: f64,
    pub height_m: f64,
    pub volume_m3: f64,
    pub principal_dir: [f64; 2],
    pub score: f64,
    pub quantified: bool,
    pub warning: Option<String>,
}

impl Wrinkle {
    pub fn centroid_px(&self) -> [f64; 2] {
        centroid(&to_points(&self.points))
    }

    /// Mean cross-section slack over the triplets.
    pub fn mean_slack(&self) -> f64 {
        if self.triplets.is_empty() {
            0.0
        } else {
            self.triplets.iter().map(|t| t.slack_m).sum::<f64>() / self.triplets.len() as f64
        }
    }

    /// Direction of the principal axis in degrees, `(-90, 90]`.
    pub fn direction_deg(&self) -> f64 {
        fold_half_turn(self.principal_dir[1].atan2(self.principal_dir[0])).to_degrees()
    }
}

/// `(width_m, height_m, volume_m3)`: triplet means and the parabolic-section
/// volume `sum (2/3) h w ds` along the curve.
pub fn quantify_wrinkle(w: &Wrinkle) -> Result<(f64, f64, f64)> {
    quantify_triplets(&w.triplets, &w.curve)
}

fn quantify_triplets(triplets: &[Triplet], curve: &QuinticCurve) -> Result<(f64, f64, f64)> {
    if triplets.is_empty() {
        return Err(Error::Unquantified);
    }
    let n = triplets.len() as f64;
    let width = triplets.iter().map(|t| t.width_m).sum::<f64>() / n;
    let height = triplets.iter().map(|t| t.height_m).sum::<f64>() / n;
    let mut order: Vec<(f64, &Triplet)> = triplets
        .iter()
        .map(|t| (curve.local_u(t.ridge_px.as_f64()), t))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    // cumulative arc position of each ridge point in metres
    let mut s = vec![0.0; order.len()];
    for i in 1..order.len() {
        let (p, q) = (&order[i - 1].1.ridge_w, &order[i].1.ridge_w);
        s[i] = s[i - 1] + (p.x - q.x).hypot(p.y - q.y);
    }
    let m = order.len();
    let mut volume = 0.0;
    for i in 1..m {
        let ds = s[i] - s[i - 1];
        let (a, b) = (order[i - 1].1, order[i].1);
        volume += 2.0 / 3.0 * 0.5 * (a.height_m * a.width_m + b.height_m * b.width_m) * ds;
    }
    Ok((width, height, volume))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionStats {
    pub ridge_points: usize,
    pub segments: usize,
    pub segments_after_junctions: usize,
    pub groups: usize,
    pub hough_splits: usize,
    pub triplets: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub wrinkles: Vec<Wrinkle>,
    pub warnings: Vec<String>,
    pub stats: DetectionStats,
}

pub fn detect_wrinkles(
    topo: &TopologyMasks,
    types: &ShapeTypeMap,
    curvatures: &CurvatureMaps,
    h: &HeightField,
) -> Result<Vec<Wrinkle>> {
    Ok(detect_wrinkles_with(topo, types, curvatures, h, &WrinkleOptions::default())?.wrinkles)
}

/// Point sets after recursive Hough splitting; each with an optional warning.
fn split_recursive(
    points: Vec<Pixel>,
    depth: usize,
    o: &WrinkleOptions,
    out: &mut Vec<(Vec<Pixel>, Option<String>)>,
    splits: &mut usize,
) -> Result<()> {
    if points.len() < MIN_FIT_POINTS {
        return Ok(());
    }
    if depth >= o.max_depth {
        let fit = fit_quintic(&to_points(&points))?;
        let warn = (fit.rmse_px > o.rmse_threshold).then(|| format!("recursion depth {depth} reached with rmse {:.2} px", fit.rmse_px));
        out.push((points, warn));
        return Ok(());
    }
    match hough_split_with(&to_points(&points), o.rmse_threshold, o.hough_alpha_deg, &o.hough)? {
        HoughOutcome::Unsplit => out.push((points, None)),
        HoughOutcome::UnsplitWithWarning(w) => out.push((points, Some(w))),
        HoughOutcome::Split { first, second, .. } => {
            *splits += 1;
            let a = first.iter().map(|&i| points[i]).collect();
            let b = second.iter().map(|&i| points[i]).collect();
            split_recursive(a, depth + 1, o, out, splits)?;
            split_recursive(b, depth + 1, o, out, splits)?;
        }
    }
    Ok(())
}

pub fn detect_wrinkles_with(
    topo: &TopologyMasks,
    types: &ShapeTypeMap,
    curvatures: &CurvatureMaps,
    h: &HeightField,
    o: &WrinkleOptions,
) -> Result<Detection> {
    if types.width() != h.width() || curvatures.width() != h.width() || types.height() != h.height() {
        return Err(Error::InvalidInput("wrinkle inputs differ in dimensions".into()));
    }
    let mut stats = DetectionStats {
        ridge_points: topo.ridge_points.count(),
        ..Default::default()
    };
    let segments = link_segments_with(&topo.ridge_points, o.min_segment_px);
    stats.segments = segments.len();
    let segments = split_at_junctions_with(&segments, types, o.junction_window, o.junction_min_count, o.min_segment_px);
    stats.segments_after_junctions = segments.len();
    let groups = group_segments_with(&segments, o.group_gap_px, o.group_angle_deg, o.tangent_reach);
    stats.groups = groups.len();

    let mut sets = vec![];
    for g in groups {
        let unique: Vec<Pixel> = g.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        split_recursive(unique, 0, o, &mut sets, &mut stats.hough_splits)?;
    }

    let matcher = TripletMatcher::new(topo, h, o.triplet)?;
    let mut warnings = vec![];
    let mut wrinkles = vec![];
    for (mut points, warning) in sets {
        points.sort_by_key(|p| (p.y, p.x));
        let curve = match fit_quintic(&to_points(&points)) {
            Ok(c) => c,
            Err(e @ (Error::Fit { .. } | Error::InsufficientPoints { .. })) => {
                warnings.push(format!("dropped {} ridge points: {e}", points.len()));
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut triplets = vec![];
        for &p in &points {
            let u = curve.local_u(p.as_f64()).clamp(curve.u_min, curve.u_max);
            if let Some(t) = matcher.match_at(p, normal_direction(&curve, u))? {
                triplets.push(t);
            }
        }
        stats.triplets += triplets.len();
        let principal_dir = match principal_direction_of(&points) {
            Ok(d) => d,
            Err(Error::DegenerateDirection { .. }) => {
                let (s, c) = curve.frame_angle.sin_cos();
                [c, s]
            }
            Err(e) => return Err(e),
        };
        let (quantified, (width_m, height_m, volume_m3)) = match quantify_triplets(&triplets, &curve) {
            Ok(m) => (true, m),
            Err(Error::Unquantified) => (false, (0.0, 0.0, 0.0)),
            Err(e) => return Err(e),
        };
        if let Some(w) = &warning {
            warnings.push(w.clone());
        }
        wrinkles.push(Wrinkle {
            points,
            curve,
            triplets,
            width_m,
            height_m,
            volume_m3,
            principal_dir,
            score: volume_m3,
            quantified,
            warning,
        });
    }
    rank_wrinkles(&mut wrinkles);
    Ok(Detection { wrinkles, warnings, stats })
}

/// Order by score (descending), then centroid row, then centroid column.
pub fn rank_wrinkles(wrinkles: &mut [Wrinkle]) {
    wrinkles.sort_by(|a, b| {
        let (ca, cb) = (a.centroid_px(), b.centroid_px());
        b.score
            .total_cmp(&a.score)
            .then(ca[1].total_cmp(&cb[1]))
            .then(ca[0].total_cmp(&cb[0]))
    });
}

/// Angular distance between two undirected directions, degrees in `[0, 90]`.
pub fn direction_difference_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(180.0);
    d.min(180.0 - d)
}
