//! Ridge / contour / contour triplets and their physical measures.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{label_components, Grid, HeightField, Pixel, PixelMask, WorldPoint};
use crate::surface_class::TopologyMasks;

pub const DEFAULT_MAX_STEPS: usize = 60;
/// Largest height increase (m) tolerated between walk steps.
pub const DEFAULT_MAX_RISE: f64 = 0.0005;
/// Slack of the triangle inequality accepted as rounding (relative).
pub const TRIANGLE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub ridge_px: Pixel,
    pub contour_px_1: Pixel,
    pub contour_px_2: Pixel,
    /// Sub-pixel contour positions `(x, y)`.
    pub contour_pos_1: [f64; 2],
    pub contour_pos_2: [f64; 2],
    pub ridge_w: WorldPoint,
    pub contour_w1: WorldPoint,
    pub contour_w2: WorldPoint,
    pub height_m: f64,
    pub width_m: f64,
    pub slack_m: f64,
    /// Search direction in radians; contour 1 lies ahead, contour 2 behind.
    pub direction: f64,
}

impl Triplet {
    /// The same triplet with its contour points exchanged.
    pub fn swapped(&self) -> Triplet {
        Triplet {
            contour_px_1: self.contour_px_2,
            contour_px_2: self.contour_px_1,
            contour_pos_1: self.contour_pos_2,
            contour_pos_2: self.contour_pos_1,
            contour_w1: self.contour_w2,
            contour_w2: self.contour_w1,
            direction: self.direction + std::f64::consts::PI,
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TripletOptions {
    pub max_steps: usize,
    pub max_rise: f64,
    /// Dilation (px) of the convex region a walk may not leave.
    pub region_tolerance: usize,
    /// Move each contour hit to the inflection of the height profile.
    pub refine_inflection: bool,
}

impl Default for TripletOptions {
    fn default() -> Self {
        Self {
            max_steps: DEFAULT_MAX_STEPS,
            max_rise: DEFAULT_MAX_RISE,
            region_tolerance: 2,
            refine_inflection: true,
        }
    }
}

/// Heron area with Kahan's ordering, accurate for needle-like triangles.
pub fn heron_area(a: f64, b: f64, c: f64) -> f64 {
    let mut s = [a, b, c];
    s.sort_by(|p, q| q.total_cmp(p));
    let [x, y, z] = s;
    let f = [x + (y + z), z - (x - y), z + (x - y), x + (y - z)];
    let prod = f.iter().map(|v| v.max(0.0)).product::<f64>();
    0.25 * prod.sqrt()
}

/// Side lengths `a = |r - c1|`, `b = |r - c2|`, `c = |c1 - c2|` and semi-perimeter `d`.
pub fn triangle_sides(ridge: &WorldPoint, c1: &WorldPoint, c2: &WorldPoint) -> (f64, f64, f64, f64) {
    let a = ridge.distance(c1);
    let b = ridge.distance(c2);
    let c = c1.distance(c2);
    (a, b, c, 0.5 * (a + b + c))
}

/// `(height_m, width_m)`: apex height above the contour chord and the chord length.
pub fn triplet_metrics(ridge: &WorldPoint, c1: &WorldPoint, c2: &WorldPoint) -> Result<(f64, f64)> {
    let (a, b, c, _) = triangle_sides(ridge, c1, c2);
    if !(c > 0.0) {
        return Err(Error::DegenerateTriplet("contour points coincide".into()));
    }
    let scale = a.max(b).max(c);
    let excess = (a - (b + c)).max(b - (a + c)).max(c - (a + b));
    if excess > TRIANGLE_TOL * scale {
        return Err(Error::DegenerateTriplet(format!(
            "sides {a}, {b}, {c} violate the triangle inequality"
        )));
    }
    let area = heron_area(a, b, c);
    Ok((2.0 * area / c, c))
}

/// Cross-section arc length between the contour points minus their 3D chord.
pub fn geodesic_slack(t: &Triplet, h: &HeightField) -> f64 {
    profile_slack(t.contour_pos_1, t.contour_pos_2, &t.contour_w1, &t.contour_w2, h)
}

fn profile_slack(p1: [f64; 2], p2: [f64; 2], w1: &WorldPoint, w2: &WorldPoint, h: &HeightField) -> f64 {
    let (dx, dy) = (p2[0] - p1[0], p2[1] - p1[1]);
    let len_px = dx.hypot(dy);
    let n = (len_px / 0.25).ceil().max(1.0) as usize;
    let ds = len_px * h.pitch() / n as f64;
    let mut arc = 0.0;
    let mut prev = w1.z;
    for i in 1..=n {
        let f = i as f64 / n as f64;
        let z = if i == n {
            w2.z
        } else {
            h.bilinear(p1[0] + f * dx, p1[1] + f * dy)
                .unwrap_or(w1.z + f * (w2.z - w1.z))
        };
        arc += ds.hypot(z - prev);
        prev = z;
    }
    (arc - w1.distance(w2)).max(0.0)
}

/// Precomputed masks for matching many ridge pixels against one scene.
pub struct TripletMatcher<'a> {
    topo: &'a TopologyMasks,
    h: &'a HeightField,
    regions: Grid<u32>,
    contour_hit: PixelMask,
    opts: TripletOptions,
}

impl<'a> TripletMatcher<'a> {
    pub fn new(topo: &'a TopologyMasks, h: &'a HeightField, opts: TripletOptions) -> Result<Self> {
        if topo.convex.width() != h.width() || topo.convex.height() != h.height() {
            return Err(Error::InvalidInput("topology and height field differ in dimensions".into()));
        }
        let (regions, _) = label_components(&topo.convex.dilate(opts.region_tolerance));
        Ok(Self {
            topo,
            h,
            regions,
            contour_hit: topo.contours.dilate(1),
            opts,
        })
    }

    pub fn options(&self) -> &TripletOptions {
        &self.opts
    }

    /// Walk from a ridge pixel along `direction` and its opposite; `Ok(None)`
    /// unless both walks reach a contour.
    pub fn match_at(&self, ridge_px: Pixel, direction: f64) -> Result<Option<Triplet>> {
        if ridge_px.x >= self.h.width() || ridge_px.y >= self.h.height() || !self.topo.ridge_points.get(ridge_px.x, ridge_px.y) {
            return Err(Error::Domain(format!("({}, {}) is not a ridge point", ridge_px.x, ridge_px.y)));
        }
        if !direction.is_finite() {
            return Err(Error::Domain("search direction is not finite".into()));
        }
        let d = [direction.cos(), direction.sin()];
        let start = [ridge_px.x as f64, ridge_px.y as f64];
        let Some(t1) = self.walk(ridge_px, start, d) else {
            return Ok(None);
        };
        let Some(t2) = self.walk(ridge_px, start, [-d[0], -d[1]]) else {
            return Ok(None);
        };
        let p1 = [start[0] + t1 * d[0], start[1] + t1 * d[1]];
        let p2 = [start[0] - t2 * d[0], start[1] - t2 * d[1]];
        let (Some(w1), Some(w2), Some(wr)) = (
            self.h.world_at(p1[0], p1[1]),
            self.h.world_at(p2[0], p2[1]),
            self.h.world_at(start[0], start[1]),
        ) else {
            return Ok(None);
        };
        let (height_m, width_m) = match triplet_metrics(&wr, &w1, &w2) {
            Ok(m) => m,
            Err(Error::DegenerateTriplet(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let slack_m = profile_slack(p1, p2, &w1, &w2, self.h);
        let round = |p: [f64; 2]| Pixel::new(p[0].round() as usize, p[1].round() as usize);
        Ok(Some(Triplet {
            ridge_px,
            contour_px_1: round(p1),
            contour_px_2: round(p2),
            contour_pos_1: p1,
            contour_pos_2: p2,
            ridge_w: wr,
            contour_w1: w1,
            contour_w2: w2,
            height_m,
            width_m,
            slack_m,
            direction,
        }))
    }

    /// Distance (px) along the ray to the contour, or `None` if the walk aborts.
    fn walk(&self, origin: Pixel, start: [f64; 2], d: [f64; 2]) -> Option<f64> {
        let label = *self.regions.get(origin.x, origin.y);
        let mut prev = self.h.bilinear(start[0], start[1])?;
        for k in 1..=self.opts.max_steps {
            let t = k as f64;
            let (x, y) = (start[0] + t * d[0], start[1] + t * d[1]);
            let (px, py) = (x.round() as i64, y.round() as i64);
            if !self.regions.contains(px, py) || *self.regions.get(px as usize, py as usize) != label {
                return None;
            }
            let z = self.h.bilinear(x, y)?;
            if z - prev > self.opts.max_rise {
                return None;
            }
            prev = z;
            if self.contour_hit.get(px as usize, py as usize) {
                return Some(self.locate(start, d, t));
            }
        }
        None
    }

    /// Contour position near the first hit at distance `t`.
    fn locate(&self, start: [f64; 2], d: [f64; 2], t: f64) -> f64 {
        if self.opts.refine_inflection {
            if let Some(r) = self.profile_inflection(start, d, t) {
                return r;
            }
        }
        // the undilated contour is at most a pixel or two further on
        for extra in 0..=2 {
            let s = t + extra as f64;
            let (px, py) = ((start[0] + s * d[0]).round() as i64, (start[1] + s * d[1]).round() as i64);
            if self.topo.contours.get_signed(px, py) {
                return s;
            }
        }
        t
    }

    /// Inflection of a cubic fitted to heights at `t - 4 ..= t + 4` along the ray.
    fn profile_inflection(&self, start: [f64; 2], d: [f64; 2], t: f64) -> Option<f64> {
        let mut ata = Matrix4::<f64>::zeros();
        let mut atb = Vector4::<f64>::zeros();
        for i in -4i32..=4 {
            let u = i as f64;
            let s = t + u;
            let z = self.h.bilinear(start[0] + s * d[0], start[1] + s * d[1])?;
            let row = Vector4::new(1.0, u, u * u, u * u * u);
            ata += row * row.transpose();
            atb += row * z;
        }
        let c = ata.cholesky()?.solve(&atb);
        if c[3].abs() < 1e-15 {
            return None;
        }
        let u = -c[2] / (3.0 * c[3]);
        (u.abs() <= 3.0 && t + u > 0.5).then_some(t + u)
    }
}

/// One-off match; builds a [`TripletMatcher`] for the call.
pub fn match_triplet(
    ridge_px: Pixel,
    theta: f64,
    topo: &TopologyMasks,
    h: &HeightField,
    max_steps: usize,
) -> Result<Option<Triplet>> {
    let opts = TripletOptions {
        max_steps,
        ..Default::default()
    };
    TripletMatcher::new(topo, h, opts)?.match_at(ridge_px, theta)
}
