//! Shape index, the nine surface types, rank filtering and the ridge /
//! contour / convex masks.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_2_PI;

use crate::differential::{CurvatureMaps, ScalarField, Units};
use crate::error::{Error, Result};
use crate::grid::{Grid, PixelMask};

/// Below this both `|k_min - k_max|` and `|k_min + k_max|` the point is flat.
pub const SHAPE_EPS: f64 = 1e-9;
pub const DEFAULT_RANK_WINDOW: usize = 5;
/// Minimum bump curvature (1/m) for a ridge point.
pub const DEFAULT_RIDGE_MIN_CURVATURE: f64 = 20.0;
/// Laplacian pairs differing by less than this (1/m) are not a sign change.
pub const DEFAULT_CONTOUR_MIN_STEP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PointKind {
    Regular,
    Umbilic,
    Flat,
    Invalid,
}

#[derive(Clone, Debug)]
pub struct ShapeIndexMap {
    pub values: ScalarField,
    pub kinds: Grid<PointKind>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum ShapeType {
    Cup = 0,
    Trough,
    Rut,
    SaddleRut,
    Saddle,
    SaddleRidge,
    Ridge,
    Dome,
    Cap,
    Flat,
    Invalid,
}

impl ShapeType {
    pub const ALL: [ShapeType; 11] = [
        ShapeType::Cup,
        ShapeType::Trough,
        ShapeType::Rut,
        ShapeType::SaddleRut,
        ShapeType::Saddle,
        ShapeType::SaddleRidge,
        ShapeType::Ridge,
        ShapeType::Dome,
        ShapeType::Cap,
        ShapeType::Flat,
        ShapeType::Invalid,
    ];

    /// The nine shape-index bins, from `-1` upwards.
    pub const BINS: [ShapeType; 9] = [
        ShapeType::Cup,
        ShapeType::Trough,
        ShapeType::Rut,
        ShapeType::SaddleRut,
        ShapeType::Saddle,
        ShapeType::SaddleRidge,
        ShapeType::Ridge,
        ShapeType::Dome,
        ShapeType::Cap,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_convex(self) -> bool {
        matches!(
            self,
            ShapeType::SaddleRidge | ShapeType::Ridge | ShapeType::Dome | ShapeType::Cap
        )
    }

    /// Labels that can carry a crest.
    pub fn is_ridge_like(self) -> bool {
        matches!(self, ShapeType::Ridge)
    }

    /// Label of the negated surface.
    pub fn mirrored(self) -> ShapeType {
        match self {
            ShapeType::Flat | ShapeType::Invalid => self,
            t => ShapeType::BINS[8 - t.index()],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeType::Cup => "cup",
            ShapeType::Trough => "trough",
            ShapeType::Rut => "rut",
            ShapeType::SaddleRut => "saddle_rut",
            ShapeType::Saddle => "saddle",
            ShapeType::SaddleRidge => "saddle_ridge",
            ShapeType::Ridge => "ridge",
            ShapeType::Dome => "dome",
            ShapeType::Cap => "cap",
            ShapeType::Flat => "flat",
            ShapeType::Invalid => "invalid",
        }
    }
}

pub type ShapeTypeMap = Grid<ShapeType>;

#[derive(Clone, Debug, PartialEq)]
pub struct TopologyMasks {
    pub ridge_points: PixelMask,
    pub contours: PixelMask,
    pub convex: PixelMask,
}

/// `S = (2/pi) atan((k_min + k_max) / (k_min - k_max))`, with umbilic and
/// flat points labelled instead of divided.
pub fn shape_index_value(k_max: f64, k_min: f64, mean: f64) -> (f64, PointKind) {
    let sum = k_min + k_max;
    let diff = k_min - k_max;
    if diff.abs() < SHAPE_EPS {
        if sum.abs() < SHAPE_EPS {
            return (0.0, PointKind::Flat);
        }
        let s = if mean < 0.0 { 1.0 } else { -1.0 };
        return (s, PointKind::Umbilic);
    }
    (FRAC_2_PI * (sum / diff).atan(), PointKind::Regular)
}

pub fn shape_index(c: &CurvatureMaps) -> ShapeIndexMap {
    let (w, h) = (c.width(), c.height());
    let mut values = vec![0.0; w * h];
    let mut kinds = vec![PointKind::Invalid; w * h];
    let mut valid = c.valid().clone();
    for p in c.valid().iter_set() {
        let i = p.y * w + p.x;
        let (s, kind) = shape_index_value(c.k_max.get(p.x, p.y), c.k_min.get(p.x, p.y), c.mean.get(p.x, p.y));
        values[i] = s;
        kinds[i] = kind;
        if kind == PointKind::Flat {
            valid.set(p.x, p.y, false);
        }
    }
    ShapeIndexMap {
        values: ScalarField {
            values: Grid::from_vec(w, h, values).unwrap(),
            valid,
            units: Units::Dimensionless,
        },
        kinds: Grid::from_vec(w, h, kinds).unwrap(),
    }
}

/// Bin of a shape-index value; edges at `(2k - 9) / 9`, lower edge inclusive.
pub fn shape_type_of(s: f64) -> ShapeType {
    let mut bin = 0;
    for k in 1..9 {
        if s >= (2 * k as i32 - 9) as f64 / 9.0 {
            bin = k;
        }
    }
    ShapeType::BINS[bin]
}

pub fn quantize_types(s: &ShapeIndexMap) -> ShapeTypeMap {
    let (w, h) = (s.kinds.width(), s.kinds.height());
    Grid::from_fn(w, h, |x, y| match *s.kinds.get(x, y) {
        PointKind::Invalid => ShapeType::Invalid,
        PointKind::Flat => ShapeType::Flat,
        _ => shape_type_of(s.values.get(x, y)),
    })
    .unwrap()
}

/// Modal label over a `window x window` neighbourhood, clipped at the border.
/// Invalid pixels neither vote nor change; a tie keeps the original label
/// when it is among the winners, otherwise the lowest-ordered winner.
pub fn majority_rank_filter(t: &ShapeTypeMap, window: usize) -> Result<ShapeTypeMap> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::Parameter(format!(
            "rank window must be odd and >= 3, got {window}"
        )));
    }
    let (w, h) = (t.width(), t.height());
    let r = window / 2;
    Ok(Grid::from_fn(w, h, |x, y| {
        let own = *t.get(x, y);
        if own == ShapeType::Invalid {
            return own;
        }
        let mut counts = [0u32; 11];
        for yy in y.saturating_sub(r)..(y + r + 1).min(h) {
            for xx in x.saturating_sub(r)..(x + r + 1).min(w) {
                let l = *t.get(xx, yy);
                if l != ShapeType::Invalid {
                    counts[l.index()] += 1;
                }
            }
        }
        let best = *counts.iter().max().unwrap();
        if counts[own.index()] == best {
            own
        } else {
            ShapeType::ALL[counts.iter().position(|&c| c == best).unwrap()]
        }
    })
    .unwrap())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyOptions {
    pub ridge_min_curvature: f64,
    pub contour_min_step: f64,
}

impl Default for TopologyOptions {
    fn default() -> Self {
        Self {
            ridge_min_curvature: DEFAULT_RIDGE_MIN_CURVATURE,
            contour_min_step: DEFAULT_CONTOUR_MIN_STEP,
        }
    }
}

pub fn extract_topology(t: &ShapeTypeMap, c: &CurvatureMaps, lap: &ScalarField) -> Result<TopologyMasks> {
    extract_topology_with(t, c, lap, &TopologyOptions::default())
}

/// Ridge points: crest-labelled pixels whose bump curvature `-k_min` is a
/// strict maximum ahead and a non-strict maximum behind along the `k_min`
/// principal direction. Contours: Laplacian sign changes between
/// 4-neighbours, marked on the side closer to zero.
pub fn extract_topology_with(
    t: &ShapeTypeMap,
    c: &CurvatureMaps,
    lap: &ScalarField,
    opts: &TopologyOptions,
) -> Result<TopologyMasks> {
    let (w, h) = (t.width(), t.height());
    if c.width() != w || c.height() != h || lap.width() != w || lap.height() != h {
        return Err(Error::InvalidInput("topology inputs differ in dimensions".into()));
    }
    let convex = PixelMask::from_fn(w, h, |x, y| t.get(x, y).is_convex())?;

    let bump = |x: f64, y: f64| c.k_min.bilinear(x, y).map(|v| -v);
    let mut ridge = PixelMask::empty(w, h)?;
    for p in c.principal_dir.valid.iter_set() {
        if !t.get(p.x, p.y).is_ridge_like() {
            continue;
        }
        let v = -c.k_min.get(p.x, p.y);
        if v <= opts.ridge_min_curvature {
            continue;
        }
        let phi = c.principal_dir.get(p.x, p.y);
        let (mut dx, mut dy) = (phi.cos(), phi.sin());
        // fixed orientation so a crest between two pixel rows keeps one of them
        if (dx.abs() >= dy.abs() && dx < 0.0) || (dx.abs() < dy.abs() && dy < 0.0) {
            (dx, dy) = (-dx, -dy);
        }
        let (x, y) = (p.x as f64, p.y as f64);
        let (Some(ahead), Some(behind)) = (bump(x + dx, y + dy), bump(x - dx, y - dy)) else {
            continue;
        };
        if v > ahead && v >= behind {
            ridge.set(p.x, p.y, true);
        }
    }

    let mut contours = PixelMask::empty(w, h)?;
    for p in lap.valid.iter_set() {
        let a = lap.get(p.x, p.y);
        for (qx, qy) in [(p.x + 1, p.y), (p.x, p.y + 1)] {
            if qx >= w || qy >= h || !lap.is_valid(qx, qy) {
                continue;
            }
            let b = lap.get(qx, qy);
            if a * b < 0.0 && (a - b).abs() > opts.contour_min_step {
                if a.abs() <= b.abs() {
                    contours.set(p.x, p.y, true);
                } else {
                    contours.set(qx, qy, true);
                }
            }
        }
    }
    let contours = contours.and_not(&ridge);

    Ok(TopologyMasks {
        ridge_points: ridge.and(&convex),
        contours,
        convex,
    })
}

/// Boundary between convex and non-convex labels (debug output only).
pub fn type_boundaries(t: &ShapeTypeMap) -> PixelMask {
    let (w, h) = (t.width(), t.height());
    PixelMask::from_fn(w, h, |x, y| {
        let own = *t.get(x, y);
        if !own.is_convex() {
            return false;
        }
        [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)].iter().any(|&(dx, dy)| {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            t.contains(nx, ny) && {
                let l = *t.get(nx as usize, ny as usize);
                l != ShapeType::Invalid && !l.is_convex()
            }
        })
    })
    .unwrap()
}
