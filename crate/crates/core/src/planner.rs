//! Grasp selection, flattening plans, the halting test and a virtual
//! flattening step for closed-loop simulation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, HeightField, Pixel, PixelMask, WorldPoint};
use crate::triplets::Triplet;
use crate::wrinkles::Wrinkle;

/// Total slack below which a garment counts as flat, metres.
pub const FLAT_SLACK_M: f64 = 0.005;
/// Virtual flattening reaches this many ridge-to-contour distances outward.
pub const FOOTPRINT_REACH: f64 = 3.0;
pub const DEGENERATE_GAP: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspCandidate {
    pub wrinkle_index: usize,
    pub triplet: Triplet,
    pub grasp_point: WorldPoint,
    /// Across-wrinkle direction, radians.
    pub approach_dir: f64,
    pub utility: f64,
}

/// The tallest triplet that fits in the gripper; ties go to the wrinkle
/// with the larger score.
pub fn select_grasp(wrinkles: &[Wrinkle], aperture_m: f64) -> Result<Option<GraspCandidate>> {
    if !(aperture_m > 0.0 && aperture_m.is_finite()) {
        return Err(Error::Parameter(format!("gripper aperture must be positive, got {aperture_m}")));
    }
    let mut best: Option<(f64, f64, GraspCandidate)> = None;
    for (i, w) in wrinkles.iter().enumerate() {
        for t in w.triplets.iter().filter(|t| t.width_m <= aperture_m) {
            let better = match &best {
                None => true,
                Some((h, s, _)) => t.height_m > *h || (t.height_m == *h && w.score > *s),
            };
            if better {
                best = Some((
                    t.height_m,
                    w.score,
                    GraspCandidate {
                        wrinkle_index: i,
                        triplet: t.clone(),
                        grasp_point: t.ridge_w,
                        approach_dir: t.direction,
                        utility: t.height_m,
                    },
                ));
            }
        }
    }
    Ok(best.map(|(_, _, g)| g))
}

/// Dominant eigenvector of the covariance of the wrinkle's pixel coordinates.
pub fn principal_direction(w: &Wrinkle) -> Result<[f64; 2]> {
    principal_direction_of(&w.points)
}

pub fn principal_direction_of(points: &[Pixel]) -> Result<[f64; 2]> {
    principal_direction_of_coords(&points.iter().map(|p| p.as_f64()).collect::<Vec<_>>())
}

/// Sign is normalised to `x >= 0`, or `y >= 0` when `x == 0`.
pub fn principal_direction_of_coords(points: &[[f64; 2]]) -> Result<[f64; 2]> {
    if points.len() < 2 {
        return Err(Error::InsufficientPoints {
            needed: 2,
            got: points.len(),
        });
    }
    let n = points.len() as f64;
    let (mx, my) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0] / n, b + p[1] / n));
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p[0] - mx, p[1] - my);
        sxx += dx * dx / n;
        sxy += dx * dy / n;
        syy += dy * dy / n;
    }
    let gap = ((sxx - syy).powi(2) + 4.0 * sxy * sxy).sqrt();
    if gap < DEGENERATE_GAP {
        return Err(Error::DegenerateDirection { gap });
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let (mut y, mut x) = angle.sin_cos();
    // snap rounding residue so axis-aligned sets give exact axes
    if x.abs() < 1e-15 {
        x = 0.0;
    }
    if y.abs() < 1e-15 {
        y = 0.0;
    }
    if x < 0.0 || (x == 0.0 && y < 0.0) {
        x = -x;
        y = -y;
    }
    Ok([x, y])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlattenPlan {
    pub wrinkle_id: usize,
    pub grasp_a: Option<WorldPoint>,
    pub grasp_b: Option<WorldPoint>,
    pub grasp_px_a: Option<Pixel>,
    pub grasp_px_b: Option<Pixel>,
    pub pull_dir_a: [f64; 2],
    pub pull_dir_b: [f64; 2],
    /// Per arm, metres.
    pub pull_dist_m: f64,
    pub dual_arm: bool,
}

/// Last mask pixel on the ray from `start` along `dir`.
fn boundary_along(mask: &PixelMask, start: [f64; 2], dir: [f64; 2]) -> Option<Pixel> {
    let at = |t: f64| {
        let x = (start[0] + t * dir[0]).round() as i64;
        let y = (start[1] + t * dir[1]).round() as i64;
        (x, y)
    };
    let (x0, y0) = at(0.0);
    if !mask.get_signed(x0, y0) {
        return None;
    }
    let mut last = Pixel::new(x0 as usize, y0 as usize);
    let mut t = 0.0;
    loop {
        t += 0.5;
        let (x, y) = at(t);
        if !mask.get_signed(x, y) {
            return Some(last);
        }
        last = Pixel::new(x as usize, y as usize);
    }
}

fn world_of(h: &HeightField, p: Pixel) -> WorldPoint {
    let z = if h.is_valid(p.x, p.y) { h.get(p.x, p.y) } else { 0.0 };
    WorldPoint::new(p.x as f64 * h.pitch(), p.y as f64 * h.pitch(), z)
}

/// Grasp the garment edge beyond each end of the wrinkle and pull both
/// arms apart along its principal axis.
pub fn make_flatten_plan(w: &Wrinkle, wrinkle_id: usize, garment_mask: &PixelMask, h: &HeightField) -> Result<FlattenPlan> {
    if garment_mask.is_empty() {
        return Err(Error::Planning("garment mask is empty".into()));
    }
    if garment_mask.width() != h.width() || garment_mask.height() != h.height() {
        return Err(Error::InvalidInput("garment mask and height field differ in size".into()));
    }
    if w.points.is_empty() {
        return Err(Error::Planning("wrinkle has no points".into()));
    }
    let dir = match principal_direction(w) {
        Ok(d) => d,
        Err(Error::DegenerateDirection { .. } | Error::InsufficientPoints { .. }) => w.principal_dir,
        Err(e) => return Err(e),
    };
    let proj = |p: &Pixel| p.x as f64 * dir[0] + p.y as f64 * dir[1];
    let lo = *w.points.iter().min_by(|a, b| proj(a).total_cmp(&proj(b))).unwrap();
    let hi = *w.points.iter().max_by(|a, b| proj(a).total_cmp(&proj(b))).unwrap();
    let a = boundary_along(garment_mask, lo.as_f64(), [-dir[0], -dir[1]]);
    let b = boundary_along(garment_mask, hi.as_f64(), dir);
    if a.is_none() && b.is_none() {
        return Err(Error::Planning(format!("wrinkle {wrinkle_id} lies outside the garment mask")));
    }
    Ok(FlattenPlan {
        wrinkle_id,
        grasp_a: a.map(|p| world_of(h, p)),
        grasp_b: b.map(|p| world_of(h, p)),
        grasp_px_a: a,
        grasp_px_b: b,
        // 0.0 - x never yields -0.0
        pull_dir_a: [0.0 - dir[0], 0.0 - dir[1]],
        pull_dir_b: dir,
        pull_dist_m: w.mean_slack() / 2.0,
        dual_arm: a.is_some() && b.is_some(),
    })
}

/// True when no wrinkle would need a total pull of `FLAT_SLACK_M` or more.
pub fn is_flat(wrinkles: &[Wrinkle]) -> bool {
    is_flat_with(wrinkles, FLAT_SLACK_M)
}

pub fn is_flat_with(wrinkles: &[Wrinkle], threshold_m: f64) -> bool {
    wrinkles.iter().all(|w| w.mean_slack() < threshold_m)
}

/// Pull each cross-section of the planned wrinkle toward the chord between
/// its far ends, by the fraction of slack the plan removes.
pub fn virtual_flatten_step(h: &HeightField, plan: &FlattenPlan, wrinkles: &[Wrinkle]) -> Result<HeightField> {
    let w = wrinkles
        .get(plan.wrinkle_id)
        .ok_or_else(|| Error::Planning(format!("plan refers to missing wrinkle {}", plan.wrinkle_id)))?;
    let slack_total = w.mean_slack();
    if plan.pull_dist_m <= 0.0 || slack_total <= 0.0 || w.triplets.is_empty() {
        return Ok(h.clone());
    }
    let f = (2.0 * plan.pull_dist_m / slack_total).min(1.0);

    let (wd, ht) = (h.width(), h.height());
    let mut sum = vec![0.0; wd * ht];
    let mut count = vec![0u32; wd * ht];
    for t in &w.triplets {
        let r = t.ridge_px.as_f64();
        let Some((e1, z1)) = far_end(h, r, t.contour_pos_1) else { continue };
        let Some((e2, z2)) = far_end(h, r, t.contour_pos_2) else { continue };
        let d = [e1[0] - e2[0], e1[1] - e2[1]];
        let len = d[0].hypot(d[1]);
        if len == 0.0 {
            continue;
        }
        let nrm = [-d[1] / len, d[0] / len];
        let steps = (len / 0.25).ceil() as usize;
        for k in 0..=steps {
            let s = k as f64 / steps as f64;
            let chord = z2 + s * (z1 - z2);
            for off in [-0.5, 0.0, 0.5] {
                let x = (e2[0] + s * d[0] + off * nrm[0]).round() as i64;
                let y = (e2[1] + s * d[1] + off * nrm[1]).round() as i64;
                if x >= 0 && y >= 0 && (x as usize) < wd && (y as usize) < ht && h.is_valid(x as usize, y as usize) {
                    let i = y as usize * wd + x as usize;
                    sum[i] += chord;
                    count[i] += 1;
                }
            }
        }
    }
    let values = Grid::from_fn(wd, ht, |x, y| {
        let i = y * wd + x;
        let z = h.get(x, y);
        if count[i] == 0 {
            z
        } else {
            let chord = sum[i] / count[i] as f64;
            z - f * (z - chord)
        }
    })?;
    h.with_values(values)
}

/// Point `FOOTPRINT_REACH` times as far from the ridge as the contour,
/// pulled back until it lands on a valid height.
fn far_end(h: &HeightField, ridge: [f64; 2], contour: [f64; 2]) -> Option<([f64; 2], f64)> {
    let mut reach = FOOTPRINT_REACH;
    while reach >= 1.0 {
        let p = [
            ridge[0] + reach * (contour[0] - ridge[0]),
            ridge[1] + reach * (contour[1] - ridge[1]),
        ];
        if let Some(z) = h.bilinear(p[0], p[1]) {
            return Some((p, z));
        }
        reach -= 0.25;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{analyze, simulate, AnalysisConfig};
    use crate::synth::{generate, SceneSpec};
    use proptest::prelude::*;

    fn detect(h: &HeightField) -> Vec<Wrinkle> {
        let mask = PixelMask::full(h.width(), h.height()).unwrap();
        analyze(h, &mask, &AnalysisConfig::default()).unwrap().detection.wrinkles
    }

    fn scene(spec: &SceneSpec) -> (HeightField, PixelMask, Vec<Wrinkle>) {
        let (h, mask, _) = generate(spec).unwrap();
        let w = detect(&h);
        (h, mask, w)
    }

    /// Two horizontal ridges: tall and narrow at row 80, low and wide at row 180.
    fn two_ridges() -> HeightField {
        HeightField::from_world_fn(256, 256, 0.001, |_, y| {
            0.02 * (-(y - 0.080f64).powi(2) / (2.0 * 0.006f64.powi(2))).exp()
                + 0.01 * (-(y - 0.180f64).powi(2) / (2.0 * 0.014f64.powi(2))).exp()
        })
        .unwrap()
    }

    #[test]
    fn grasp_prefers_the_tall_wrinkle_that_fits() {
        let ws = detect(&two_ridges());
        assert_eq!(ws.len(), 2);
        let g = select_grasp(&ws, 0.02).unwrap().expect("a graspable triplet");
        assert!((g.triplet.ridge_px.y as i64 - 80).abs() <= 1);
        assert!(g.triplet.width_m <= 0.02);
        assert_eq!(g.utility, g.triplet.height_m);
        assert!(select_grasp(&ws, 0.005).unwrap().is_none());
        assert!(select_grasp(&ws, 0.0).is_err());
    }

    #[test]
    fn single_triplet_is_selected() {
        let (_, _, mut ws) = scene(&SceneSpec::gaussian_ridge(0.02, 0.01, 0.0));
        ws[0].triplets.truncate(1);
        let g = select_grasp(&ws[..1], 1.0).unwrap().unwrap();
        assert_eq!(g.triplet, ws[0].triplets[0]);
        assert_eq!(g.wrinkle_index, 0);
    }

    #[test]
    fn principal_direction_examples() {
        let line: Vec<Pixel> = (0..10).map(|x| Pixel::new(x, 4)).collect();
        assert_eq!(principal_direction_of(&line).unwrap(), [1.0, 0.0]);
        let diag: Vec<Pixel> = (0..10).map(|x| Pixel::new(x, x)).collect();
        let d = principal_direction_of(&diag).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((d[0] - r).abs() < 1e-9 && (d[1] - r).abs() < 1e-9);
        let vertical: Vec<Pixel> = (0..10).map(|y| Pixel::new(3, y)).collect();
        assert_eq!(principal_direction_of(&vertical).unwrap(), [0.0, 1.0]);
        let square = [Pixel::new(0, 0), Pixel::new(1, 0), Pixel::new(0, 1), Pixel::new(1, 1)];
        assert!(matches!(principal_direction_of(&square), Err(Error::DegenerateDirection { .. })));
        assert!(principal_direction_of(&line[..1]).is_err());
    }

    #[test]
    fn rotated_ridge_direction() {
        let (_, _, ws) = scene(&SceneSpec::benchmark(7));
        assert_eq!(ws.len(), 1);
        let d = principal_direction(&ws[0]).unwrap();
        assert!((d[1].atan2(d[0]).to_degrees() - 45.0).abs() < 3.0);
    }

    #[test]
    fn benchmark_plan_grasps_opposite_edges() {
        let spec = SceneSpec {
            orientation_deg: 0.0,
            ..SceneSpec::benchmark(0)
        };
        let (h, mask, ws) = scene(&spec);
        let plan = make_flatten_plan(&ws[0], 0, &mask, &h).unwrap();
        assert!(plan.dual_arm);
        let (a, b) = (plan.grasp_px_a.unwrap(), plan.grasp_px_b.unwrap());
        assert_eq!(a.x, 0);
        assert_eq!(b.x, 255);
        assert!((a.y as f64 - 127.5).abs() <= 1.0 && (b.y as f64 - 127.5).abs() <= 1.0);
        assert!((plan.pull_dir_b[0] - 1.0).abs() < 1e-6 && (plan.pull_dir_a[0] + 1.0).abs() < 1e-6);
        assert_eq!(plan.pull_dir_a, [-plan.pull_dir_b[0], -plan.pull_dir_b[1]]);
        assert!((plan.pull_dist_m - ws[0].mean_slack() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn plan_edge_cases() {
        let (h, mask, mut ws) = scene(&SceneSpec::gaussian_ridge(0.02, 0.01, 0.0));
        for t in &mut ws[0].triplets {
            t.slack_m = 0.0;
        }
        assert_eq!(make_flatten_plan(&ws[0], 0, &mask, &h).unwrap().pull_dist_m, 0.0);

        let right_cut = PixelMask::from_fn(256, 256, |x, _| x < 200).unwrap();
        let plan = make_flatten_plan(&ws[0], 0, &right_cut, &h).unwrap();
        assert!(!plan.dual_arm);
        assert!(plan.grasp_a.is_some() && plan.grasp_b.is_none());

        let elsewhere = PixelMask::from_fn(256, 256, |_, y| y < 20).unwrap();
        assert!(matches!(make_flatten_plan(&ws[0], 0, &elsewhere, &h), Err(Error::Planning(_))));
        assert!(make_flatten_plan(&ws[0], 0, &PixelMask::empty(256, 256).unwrap(), &h).is_err());
    }

    #[test]
    fn plan_mirrors_with_the_scene() {
        let (h, mask, ws) = scene(&SceneSpec::benchmark(2));
        let m = h.mirror_x();
        let wm = detect(&m);
        let p = make_flatten_plan(&ws[0], 0, &mask, &h).unwrap();
        let q = make_flatten_plan(&wm[0], 0, &mask, &m).unwrap();
        let flip = |px: Pixel| Pixel::new(h.width() - 1 - px.x, px.y);
        assert_eq!(q.grasp_px_a, p.grasp_px_b.map(flip));
        assert_eq!(q.grasp_px_b, p.grasp_px_a.map(flip));
        assert!((q.pull_dir_a[0] + p.pull_dir_b[0]).abs() < 1e-9 && (q.pull_dir_a[1] - p.pull_dir_b[1]).abs() < 1e-9);
    }

    #[test]
    fn halting_examples() {
        assert!(is_flat(&[]));
        let (_, _, mut ws) = scene(&SceneSpec::gaussian_ridge(0.02, 0.01, 0.0));
        for t in &mut ws[0].triplets {
            t.slack_m = 0.004;
        }
        assert!(is_flat(&ws));
        for t in &mut ws[0].triplets {
            t.slack_m = 0.02;
        }
        assert!(!is_flat(&ws));
    }

    #[test]
    fn full_pull_removes_the_crest() {
        let (h, mask, ws) = scene(&SceneSpec::gaussian_ridge(0.02, 0.01, 0.0));
        let plan = make_flatten_plan(&ws[0], 0, &mask, &h).unwrap();
        let flat = virtual_flatten_step(&h, &plan, &ws).unwrap();
        for x in [60, 128, 200] {
            let crest = (120..136).map(|y| flat.get(x, y)).fold(f64::MIN, f64::max);
            assert!(crest <= 0.1 * 0.02, "crest {crest} at column {x}");
        }
        let vol_before: f64 = ws.iter().map(|w| w.volume_m3).sum();
        let vol_after: f64 = detect(&flat).iter().map(|w| w.volume_m3).sum();
        assert!(vol_after < vol_before);

        let zero = FlattenPlan {
            pull_dist_m: 0.0,
            ..plan.clone()
        };
        assert_eq!(virtual_flatten_step(&h, &zero, &ws).unwrap(), h);
        let missing = FlattenPlan {
            wrinkle_id: 5,
            ..plan
        };
        assert!(virtual_flatten_step(&h, &missing, &ws).is_err());
    }

    #[test]
    fn partial_pull_reduces_volume() {
        let (h, mask, ws) = scene(&SceneSpec::gaussian_ridge(0.02, 0.01, 10.0));
        let mut plan = make_flatten_plan(&ws[0], 0, &mask, &h).unwrap();
        plan.pull_dist_m *= 0.5;
        let after = detect(&virtual_flatten_step(&h, &plan, &ws).unwrap());
        let before: f64 = ws.iter().map(|w| w.volume_m3).sum();
        assert!(after.iter().map(|w| w.volume_m3).sum::<f64>() < before);
    }

    #[test]
    fn benchmark_flattens_in_one_step() {
        let (h, mask, _) = generate(&SceneSpec::benchmark(3)).unwrap();
        let (log, _) = simulate(&h, &mask, &AnalysisConfig::default(), FLAT_SLACK_M, 10).unwrap();
        assert!(log.converged);
        assert_eq!(log.rni, 1);
    }

    proptest! {
        #[test]
        fn direction_scales_and_rotates(
            pts in prop::collection::vec((-50.0..50.0f64, -5.0..5.0f64), 10..40),
            s in 0.1..10.0f64,
            rot in -3.0..3.0f64,
        ) {
            let base: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
            let Ok(d) = principal_direction_of_coords(&base) else { return Ok(()) };
            let scaled: Vec<[f64; 2]> = base.iter().map(|p| [p[0] * s, p[1] * s]).collect();
            let ds = principal_direction_of_coords(&scaled).unwrap();
            prop_assert!((ds[0] - d[0]).abs() < 1e-9 && (ds[1] - d[1]).abs() < 1e-9);
            let (sn, cs) = rot.sin_cos();
            let rotated: Vec<[f64; 2]> = base.iter().map(|p| [cs * p[0] - sn * p[1], sn * p[0] + cs * p[1]]).collect();
            let dr = principal_direction_of_coords(&rotated).unwrap();
            let expect = d[1].atan2(d[0]) + rot;
            let diff = (dr[1].atan2(dr[0]) - expect).rem_euclid(std::f64::consts::PI);
            prop_assert!(diff.min(std::f64::consts::PI - diff) < 1e-6);
        }
    }
}
