//! PPM overlays of each analysis stage.
//!
//! Palette (RGB), fixed so rendered images are byte-stable:
//!
//! | layer          | colour          |
//! |----------------|-----------------|
//! | invalid pixel  | 0 0 0           |
//! | cup            | 0 0 160         |
//! | trough         | 0 96 224        |
//! | rut            | 0 176 224       |
//! | saddle_rut     | 96 208 160      |
//! | saddle         | 224 224 96      |
//! | saddle_ridge   | 240 160 64      |
//! | ridge          | 224 64 32       |
//! | dome           | 192 0 96        |
//! | cap            | 128 0 128       |
//! | flat           | 200 200 200     |
//! | ridge point    | 255 0 0         |
//! | contour point  | 0 255 0         |
//! | triplet        | 255 255 0       |
//! | rank label     | 255 255 255 on 0 0 0 |
//!
//! Wrinkles cycle through [`WRINKLE_COLOURS`] by rank. Height underlays map
//! the valid range linearly onto grey levels 40..=220.

use crease_core::codec::{encode_ppm, Rgb};
use crease_core::{Analysis, Grid, HeightField, Pixel, ShapeType};

pub const INVALID: Rgb = [0, 0, 0];
pub const RIDGE: Rgb = [255, 0, 0];
pub const CONTOUR: Rgb = [0, 255, 0];
pub const TRIPLET: Rgb = [255, 255, 0];
pub const LABEL_FG: Rgb = [255, 255, 255];
pub const LABEL_BG: Rgb = [0, 0, 0];

pub const WRINKLE_COLOURS: [Rgb; 6] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
];

pub fn shape_colour(t: ShapeType) -> Rgb {
    match t {
        ShapeType::Cup => [0, 0, 160],
        ShapeType::Trough => [0, 96, 224],
        ShapeType::Rut => [0, 176, 224],
        ShapeType::SaddleRut => [96, 208, 160],
        ShapeType::Saddle => [224, 224, 96],
        ShapeType::SaddleRidge => [240, 160, 64],
        ShapeType::Ridge => [224, 64, 32],
        ShapeType::Dome => [192, 0, 96],
        ShapeType::Cap => [128, 0, 128],
        ShapeType::Flat => [200, 200, 200],
        ShapeType::Invalid => INVALID,
    }
}

pub fn height_image(h: &HeightField) -> Grid<Rgb> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in h.valid().iter_set() {
        let z = h.get(p.x, p.y);
        lo = lo.min(z);
        hi = hi.max(z);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    Grid::from_fn(h.width(), h.height(), |x, y| {
        if !h.is_valid(x, y) {
            return INVALID;
        }
        let g = (40.0 + 180.0 * (h.get(x, y) - lo) / span).round() as u8;
        [g, g, g]
    })
    .expect("non-empty grid")
}

pub fn shape_image(a: &Analysis) -> Grid<Rgb> {
    a.types.map(|&t| shape_colour(t))
}

pub fn topology_image(a: &Analysis) -> Grid<Rgb> {
    let mut img = height_image(&a.height);
    for p in a.topology.contours.iter_set() {
        *img.get_mut(p.x, p.y) = CONTOUR;
    }
    for p in a.topology.ridge_points.iter_set() {
        *img.get_mut(p.x, p.y) = RIDGE;
    }
    img
}

pub fn triplet_image(a: &Analysis) -> Grid<Rgb> {
    let mut img = height_image(&a.height);
    for w in &a.detection.wrinkles {
        for t in &w.triplets {
            let (r, c1, c2) = (t.ridge_px, t.contour_px_1, t.contour_px_2);
            line(&mut img, r, c1, TRIPLET);
            line(&mut img, c1, c2, TRIPLET);
            line(&mut img, c2, r, TRIPLET);
        }
    }
    img
}

pub fn wrinkle_image(a: &Analysis) -> Grid<Rgb> {
    let mut img = height_image(&a.height);
    let ws = &a.detection.wrinkles;
    for (i, w) in ws.iter().enumerate() {
        let c = WRINKLE_COLOURS[i % WRINKLE_COLOURS.len()];
        for p in &w.points {
            *img.get_mut(p.x, p.y) = c;
        }
    }
    for (i, w) in ws.iter().enumerate() {
        let [cx, cy] = w.centroid_px();
        label(&mut img, cx.round() as i64 + 3, cy.round() as i64 - 3, i + 1);
    }
    img
}

/// Every overlay with its file name, in stage order.
pub fn render_all(a: &Analysis) -> Vec<(&'static str, Vec<u8>)> {
    vec![
        ("height.ppm", encode_ppm(&height_image(&a.height))),
        ("shape_types.ppm", encode_ppm(&shape_image(a))),
        ("topology.ppm", encode_ppm(&topology_image(a))),
        ("triplets.ppm", encode_ppm(&triplet_image(a))),
        ("wrinkles.ppm", encode_ppm(&wrinkle_image(a))),
    ]
}

fn put(img: &mut Grid<Rgb>, x: i64, y: i64, c: Rgb) {
    if img.contains(x, y) {
        *img.get_mut(x as usize, y as usize) = c;
    }
}

fn line(img: &mut Grid<Rgb>, a: Pixel, b: Pixel, c: Rgb) {
    let (mut x, mut y) = (a.x as i64, a.y as i64);
    let (x1, y1) = (b.x as i64, b.y as i64);
    let dx = (x1 - x).abs();
    let dy = -(y1 - y).abs();
    let sx = if x < x1 { 1 } else { -1 };
    let sy = if y < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        put(img, x, y, c);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

// 3x5 digits, one row per u8, high bit on the left
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

fn label(img: &mut Grid<Rgb>, x0: i64, y0: i64, n: usize) {
    let text = n.to_string();
    let w = 4 * text.len() as i64 + 1;
    for dy in -1..6 {
        for dx in -1..w {
            put(img, x0 + dx, y0 + dy, LABEL_BG);
        }
    }
    for (k, ch) in text.bytes().enumerate() {
        let glyph = DIGITS[(ch - b'0') as usize];
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..3 {
                if bits >> (2 - col) & 1 == 1 {
                    put(img, x0 + 4 * k as i64 + col, y0 + row as i64, LABEL_FG);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crease_core::{analyze, generate, AnalysisConfig, SceneSpec};

    #[test]
    fn palette_is_distinct() {
        let mut seen: Vec<Rgb> = ShapeType::ALL.iter().map(|&t| shape_colour(t)).collect();
        seen.extend([RIDGE, CONTOUR, TRIPLET]);
        let n = seen.len();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), n);
    }

    #[test]
    fn line_covers_endpoints() {
        let mut img = Grid::new(10, 10, INVALID).unwrap();
        line(&mut img, Pixel::new(1, 8), Pixel::new(7, 2), TRIPLET);
        assert_eq!(*img.get(1, 8), TRIPLET);
        assert_eq!(*img.get(7, 2), TRIPLET);
        assert_eq!(img.data().iter().filter(|&&c| c == TRIPLET).count(), 7);
    }

    #[test]
    fn label_clips_at_border() {
        let mut img = Grid::new(6, 6, INVALID).unwrap();
        label(&mut img, 4, 4, 12);
        assert!(img.data().contains(&LABEL_FG));
    }

    #[test]
    fn overlays_mark_ridges_and_wrinkles() {
        let (h, mask, _) = generate(&SceneSpec::gaussian_ridge(0.02, 0.01, 0.0)).unwrap();
        let a = analyze(&h, &mask, &AnalysisConfig::default()).unwrap();
        let topo = topology_image(&a);
        for p in a.topology.ridge_points.iter_set() {
            assert_eq!(*topo.get(p.x, p.y), RIDGE);
        }
        let wr = wrinkle_image(&a);
        assert!(wr.data().contains(&WRINKLE_COLOURS[0]));
        assert!(wr.data().contains(&LABEL_FG));
        let tri = triplet_image(&a);
        assert!(tri.data().contains(&TRIPLET));
        let files = render_all(&a);
        assert_eq!(files.len(), 5);
        assert_eq!(files, render_all(&a));
    }
}
