//! Dense 2.5D containers shared by every stage: depth maps, height fields,
//! pixel masks and the pixel/world conversion.
//!
//! Pixel coordinates are `(x, y)` = `(column, row)`, row-major storage,
//! row 0 at the top. World coordinates are metres with `x = col * pitch`,
//! `y = row * pitch`.

use serde::{Deserialize, Serialize};
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Integer pixel position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pixel {
    pub x: usize,
    pub y: usize,
}

impl Pixel {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn as_f64(self) -> [f64; 2] {
        [self.x as f64, self.y as f64]
    }

    /// Neighbour at a signed offset, if it stays inside `width x height`.
    pub fn offset(self, dx: i64, dy: i64, width: usize, height: usize) -> Option<Pixel> {
        let x = self.x as i64 + dx;
        let y = self.y as i64 + dy;
        (x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height)
            .then(|| Pixel::new(x as usize, y as usize))
    }
}

/// A point in metres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &WorldPoint) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn scaled(&self, s: f64) -> WorldPoint {
        WorldPoint::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Row-major 2D grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            data: vec![fill; width * height],
        })
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "grid data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn map<U: Clone>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Rotate by 90 degrees so that pixel `(x, y)` moves to `(height-1-y, x)`.
    pub fn rotate90(&self) -> Grid<T> {
        let (w, h) = (self.width, self.height);
        let mut data = Vec::with_capacity(w * h);
        // new grid is h wide, w tall; new(x', y') = old(y', h-1-x')
        for ny in 0..w {
            for nx in 0..h {
                data.push(self.data[(h - 1 - nx) * w + ny].clone());
            }
        }
        Grid {
            width: h,
            height: w,
            data,
        }
    }

    /// Mirror left-right: `(x, y)` moves to `(width-1-x, y)`.
    pub fn mirror_x(&self) -> Grid<T> {
        let w = self.width;
        Grid::from_fn(self.width, self.height, |x, y| self.data[y * w + (w - 1 - x)].clone())
            .expect("dimensions already validated")
    }
}

impl<T> Grid<T> {
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index_of(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    #[inline]
    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn pixels(&self) -> impl Iterator<Item = Pixel> + '_ {
        let w = self.width;
        (0..self.data.len()).map(move |i| Pixel::new(i % w, i / w))
    }
}

impl<T> Index<Pixel> for Grid<T> {
    type Output = T;
    fn index(&self, p: Pixel) -> &T {
        &self.data[p.y * self.width + p.x]
    }
}

impl<T> IndexMut<Pixel> for Grid<T> {
    fn index_mut(&mut self, p: Pixel) -> &mut T {
        &mut self.data[p.y * self.width + p.x]
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidInput(format!(
            "grid dimensions must be positive, got {width}x{height}"
        )));
    }
    Ok(())
}

/// Per-pixel boolean annotation.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelMask(Grid<bool>);

impl PixelMask {
    pub fn full(width: usize, height: usize) -> Result<Self> {
        Grid::new(width, height, true).map(Self)
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Grid::new(width, height, false).map(Self)
    }

    pub fn from_grid(grid: Grid<bool>) -> Self {
        Self(grid)
    }

    pub fn from_fn(width: usize, height: usize, f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        Grid::from_fn(width, height, f).map(Self)
    }

    pub fn grid(&self) -> &Grid<bool> {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        *self.0.get(x, y)
    }

    /// Out-of-range coordinates read as unset.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        self.0.contains(x, y) && *self.0.get(x as usize, y as usize)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        *self.0.get_mut(x, y) = v;
    }

    pub fn count(&self) -> usize {
        self.0.data().iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.0.data().iter().any(|&b| b)
    }

    pub fn iter_set(&self) -> impl Iterator<Item = Pixel> + '_ {
        let w = self.0.width();
        self.0
            .data()
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| Pixel::new(i % w, i / w))
    }

    pub fn and(&self, other: &PixelMask) -> PixelMask {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &PixelMask) -> PixelMask {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn and_not(&self, other: &PixelMask) -> PixelMask {
        self.zip_with(other, |a, b| a && !b)
    }

    fn zip_with(&self, other: &PixelMask, f: impl Fn(bool, bool) -> bool) -> PixelMask {
        assert!(self.0.same_shape(&other.0), "mask dimensions differ");
        let data = self
            .0
            .data()
            .iter()
            .zip(other.0.data())
            .map(|(&a, &b)| f(a, b))
            .collect();
        PixelMask(Grid::from_vec(self.width(), self.height(), data).expect("same shape"))
    }

    pub fn dilate(&self, radius: usize) -> PixelMask {
        if radius == 0 {
            return self.clone();
        }
        // dilation = complement of erosion of complement, except that
        // outside pixels count as unset for both operations
        let w = self.width();
        let h = self.height();
        let rows = box_pass(self.0.data(), w, h, radius, true, Reduce::Any);
        PixelMask(Grid::from_vec(w, h, box_pass(&rows, w, h, radius, false, Reduce::Any)).unwrap())
    }
}

#[derive(Clone, Copy)]
enum Reduce {
    All,
    Any,
}

/// One separable pass of a Chebyshev box min/max filter; out-of-grid reads as unset.
fn box_pass(src: &[bool], w: usize, h: usize, r: usize, horizontal: bool, reduce: Reduce) -> Vec<bool> {
    let (n_lines, line_len) = if horizontal { (h, w) } else { (w, h) };
    let at = |line: usize, i: usize| {
        if horizontal {
            line * w + i
        } else {
            i * w + line
        }
    };
    let mut out = vec![false; w * h];
    let mut prefix = vec![0usize; line_len + 1];
    for line in 0..n_lines {
        for i in 0..line_len {
            prefix[i + 1] = prefix[i] + src[at(line, i)] as usize;
        }
        for i in 0..line_len {
            let lo = i.saturating_sub(r);
            let hi = (i + r).min(line_len - 1);
            let count = prefix[hi + 1] - prefix[lo];
            out[at(line, i)] = match reduce {
                Reduce::All => i >= r && i + r < line_len && count == 2 * r + 1,
                Reduce::Any => count > 0,
            };
        }
    }
    out
}

/// Keep a pixel iff every pixel within Chebyshev distance `radius` is set.
/// Pixels outside the grid count as unset.
pub fn erode_mask(mask: &PixelMask, radius: usize) -> PixelMask {
    if radius == 0 {
        return mask.clone();
    }
    let w = mask.width();
    let h = mask.height();
    let rows = box_pass(mask.0.data(), w, h, radius, true, Reduce::All);
    PixelMask(Grid::from_vec(w, h, box_pass(&rows, w, h, radius, false, Reduce::All)).unwrap())
}

/// 8-connected component labels; `0` is background, components are numbered
/// from 1 in raster order of their first pixel.
pub fn label_components(mask: &PixelMask) -> (Grid<u32>, usize) {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.0.data()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if mask.get_signed(nx, ny) {
                        let j = ny as usize * w + nx as usize;
                        if labels[j] == 0 {
                            labels[j] = next;
                            stack.push(j);
                        }
                    }
                }
            }
        }
    }
    (Grid::from_vec(w, h, labels).unwrap(), next as usize)
}

/// Pixel to metre conversion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Metres per pixel.
    pub pitch: f64,
    /// Depth of the reference plane; `height = depth_offset - depth`.
    pub depth_offset: f64,
}

impl Calibration {
    pub fn new(pitch: f64, depth_offset: f64) -> Result<Self> {
        if !(pitch.is_finite() && pitch > 0.0) {
            return Err(Error::Parameter(format!("pitch must be positive, got {pitch}")));
        }
        if !depth_offset.is_finite() {
            return Err(Error::Parameter("depth offset must be finite".into()));
        }
        Ok(Self { pitch, depth_offset })
    }
}

/// Raw sensor depth, larger values are farther from the camera.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    values: Grid<f64>,
    valid: PixelMask,
}

impl DepthMap {
    /// Pixels whose depth is non-finite or non-positive are marked as holes.
    pub fn from_values(values: Grid<f64>) -> Self {
        let valid = PixelMask(values.map(|&d| d.is_finite() && d > 0.0));
        Self { values, valid }
    }

    pub fn new(values: Grid<f64>, valid: PixelMask) -> Result<Self> {
        if !values.same_shape(valid.grid()) {
            return Err(Error::InvalidInput("depth and validity dimensions differ".into()));
        }
        for p in valid.iter_set() {
            let d = values[p];
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "valid depth at ({}, {}) must be finite and positive, got {d}",
                    p.x, p.y
                )));
            }
        }
        Ok(Self { values, valid })
    }

    pub fn values(&self) -> &Grid<f64> {
        &self.values
    }

    pub fn valid(&self) -> &PixelMask {
        &self.valid
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    pub fn max_valid_depth(&self) -> Option<f64> {
        self.valid.iter_set().map(|p| self.values[p]).reduce(f64::max)
    }
}

/// Surface heights in metres with bumps as local maxima.
#[derive(Clone, Debug, PartialEq)]
pub struct HeightField {
    values: Grid<f64>,
    valid: PixelMask,
    pitch: f64,
}

impl HeightField {
    pub fn new(values: Grid<f64>, valid: PixelMask, pitch: f64) -> Result<Self> {
        if !values.same_shape(valid.grid()) {
            return Err(Error::InvalidInput("height and validity dimensions differ".into()));
        }
        if !(pitch.is_finite() && pitch > 0.0) {
            return Err(Error::Parameter(format!("pitch must be positive, got {pitch}")));
        }
        for p in valid.iter_set() {
            if !values[p].is_finite() {
                return Err(Error::InvalidInput(format!(
                    "valid height at ({}, {}) is not finite",
                    p.x, p.y
                )));
            }
        }
        Ok(Self { values, valid, pitch })
    }

    /// Fully valid field.
    pub fn from_values(values: Grid<f64>, pitch: f64) -> Result<Self> {
        let valid = PixelMask(values.map(|v| v.is_finite()));
        Self::new(values, valid, pitch)
    }

    /// Field sampled from a function of world coordinates `(x, y)` in metres.
    pub fn from_world_fn(
        width: usize,
        height: usize,
        pitch: f64,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let values = Grid::from_fn(width, height, |x, y| f(x as f64 * pitch, y as f64 * pitch))?;
        Self::from_values(values, pitch)
    }

    pub fn values(&self) -> &Grid<f64> {
        &self.values
    }

    pub fn valid(&self) -> &PixelMask {
        &self.valid
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

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

    /// Bilinear height at a fractional pixel position; `None` if any of the
    /// four support pixels is outside the grid or invalid.
    pub fn bilinear(&self, x: f64, y: f64) -> Option<f64> {
        if !(x.is_finite() && y.is_finite()) {
            return None;
        }
        let x0 = x.floor();
        let y0 = y.floor();
        let (fx, fy) = (x - x0, y - y0);
        let (x0, y0) = (x0 as i64, y0 as i64);
        let x1 = if fx > 0.0 { x0 + 1 } else { x0 };
        let y1 = if fy > 0.0 { y0 + 1 } else { y0 };
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

    /// World point of a fractional pixel position using bilinear height.
    pub fn world_at(&self, x: f64, y: f64) -> Option<WorldPoint> {
        self.bilinear(x, y)
            .map(|z| WorldPoint::new(x * self.pitch, y * self.pitch, z))
    }

    pub fn with_values(&self, values: Grid<f64>) -> Result<HeightField> {
        HeightField::new(values, self.valid.clone(), self.pitch)
    }

    pub fn map_heights(&self, f: impl Fn(f64) -> f64) -> HeightField {
        HeightField {
            values: self.values.map(|&v| f(v)),
            valid: self.valid.clone(),
            pitch: self.pitch,
        }
    }

    pub fn with_valid(&self, valid: PixelMask) -> Result<HeightField> {
        HeightField::new(self.values.clone(), valid, self.pitch)
    }

    /// Heights rounded to the nearest `f32`, the precision of PFM files.
    pub fn to_single_precision(&self) -> HeightField {
        self.map_heights(|v| v as f32 as f64)
    }

    pub fn rotate90(&self) -> HeightField {
        HeightField {
            values: self.values.rotate90(),
            valid: PixelMask(self.valid.grid().rotate90()),
            pitch: self.pitch,
        }
    }

    pub fn mirror_x(&self) -> HeightField {
        HeightField {
            values: self.values.mirror_x(),
            valid: PixelMask(self.valid.grid().mirror_x()),
            pitch: self.pitch,
        }
    }
}

/// `height = depth_offset - depth` on valid pixels.
pub fn depth_to_height(depth: &DepthMap, calib: &Calibration) -> Result<HeightField> {
    let values = Grid::from_fn(depth.width(), depth.height(), |x, y| {
        if depth.valid.get(x, y) {
            calib.depth_offset - *depth.values.get(x, y)
        } else {
            0.0
        }
    })?;
    HeightField::new(values, depth.valid.clone(), calib.pitch)
}

pub fn pixel_to_world(h: &HeightField, px: Pixel) -> Result<WorldPoint> {
    if px.x >= h.width() || px.y >= h.height() {
        return Err(Error::Domain(format!(
            "pixel ({}, {}) outside {}x{} grid",
            px.x,
            px.y,
            h.width(),
            h.height()
        )));
    }
    if !h.is_valid(px.x, px.y) {
        return Err(Error::Domain(format!("pixel ({}, {}) is invalid", px.x, px.y)));
    }
    Ok(WorldPoint::new(
        px.x as f64 * h.pitch,
        px.y as f64 * h.pitch,
        h.get(px.x, px.y),
    ))
}
