//! Crossing scenes at many orientations split into their two ridges.

use crease_core::wrinkles::direction_difference_deg;
use crease_core::{analyze, generate, AnalysisConfig, SceneKind, SceneSpec};

fn directions(first: f64, second: f64) -> Vec<f64> {
    let (h, mask, _) = generate(&SceneSpec::crossing(first, second)).unwrap();
    let a = analyze(&h, &mask, &AnalysisConfig::default()).unwrap();
    a.detection.wrinkles.iter().map(|w| w.direction_deg()).collect()
}

#[test]
fn crossings_split_at_any_orientation() {
    for first in [-40.0, -25.0, -10.0, 5.0, 20.0, 35.0] {
        for included in [30.0, 60.0, 90.0] {
            let second = first + included;
            let d = directions(first, second);
            assert_eq!(d.len(), 2, "{first}+{included}: {d:?}");
            let err = (direction_difference_deg(d[0], first).max(direction_difference_deg(d[1], second)))
                .min(direction_difference_deg(d[0], second).max(direction_difference_deg(d[1], first)));
            assert!(err < 2.0, "{first}+{included}: {d:?}");
        }
    }
}

#[test]
fn domes_carry_no_wrinkles() {
    for radius in [0.03, 0.05, 0.08] {
        let s = SceneSpec {
            kind: SceneKind::Hemisphere,
            radius,
            ..Default::default()
        };
        let (h, mask, _) = generate(&s).unwrap();
        let a = analyze(&h, &mask, &AnalysisConfig::default()).unwrap();
        assert!(a.detection.wrinkles.is_empty(), "radius {radius}");
    }
}
