//! Fixed scenes shared by the benchmarks.

use crease_core::{generate, HeightField, PixelMask, SceneSpec};

/// Height field and mask of `spec`; panics on an invalid spec.
pub fn scene(spec: &SceneSpec) -> (HeightField, PixelMask) {
    let (h, m, _) = generate(spec).expect("valid scene");
    (h, m)
}

pub fn ridge(size: usize) -> SceneSpec {
    SceneSpec {
        width: size,
        height: size,
        ..SceneSpec::gaussian_ridge(0.02, 0.01, 20.0)
    }
}

pub fn crossing() -> SceneSpec {
    SceneSpec::crossing(15.0, 75.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_build() {
        let (h, m) = scene(&ridge(128));
        assert_eq!((h.width(), m.count()), (128, 128 * 128));
        scene(&crossing());
    }
}
