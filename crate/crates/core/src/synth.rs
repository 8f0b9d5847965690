//! Analytic height-field scenes with closed-form ground truth.
//!
//! Every scene is a list of features (Gaussian ridges, half-cylinders,
//! hemispheres) on a zero plane, combined pointwise by max or sum. World
//! coordinates are `(x, y) = pitch * (col, row)`; orientations are measured
//! from the +x axis towards +y (image rows).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, HeightField, PixelMask};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    Plane,
    Hemisphere,
    HalfCylinder,
    GaussianRidge,
    CrossingRidges,
    TJunction,
    MultiWrinkle,
    BenchmarkOriented,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Superposition {
    #[default]
    Max,
    Sum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub width: usize,
    pub height: usize,
    pub pitch: f64,
    /// Ridge amplitude (m).
    pub amplitude: f64,
    /// Ridge profile standard deviation (m).
    pub sigma: f64,
    /// Hemisphere / cylinder radius (m).
    pub radius: f64,
    pub orientation_deg: f64,
    /// Second ridge of a crossing scene; defaults to `orientation_deg + 90`.
    pub second_orientation_deg: Option<f64>,
    /// Crest length (m) of a single ridge; `None` runs across the grid.
    pub length: Option<f64>,
    /// Ridge count for `multi_wrinkle`.
    pub count: usize,
    /// Crest spacing (m) for `multi_wrinkle`.
    pub spacing: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub superposition: Superposition,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            kind: SceneKind::GaussianRidge,
            width: 256,
            height: 256,
            pitch: 0.001,
            amplitude: 0.02,
            sigma: 0.01,
            radius: 0.05,
            orientation_deg: 0.0,
            second_orientation_deg: None,
            length: None,
            count: 1,
            spacing: 0.035,
            noise_sigma: 0.0,
            seed: 0,
            superposition: Superposition::Max,
        }
    }
}

/// Amplitude of the benchmark scenes (m).
pub const BENCHMARK_AMPLITUDE: f64 = 0.03;
pub const BENCHMARK_SCENES: usize = 8;

impl SceneSpec {
    pub fn plane(width: usize, height: usize) -> Self {
        Self {
            kind: SceneKind::Plane,
            width,
            height,
            ..Default::default()
        }
    }

    pub fn gaussian_ridge(amplitude: f64, sigma: f64, orientation_deg: f64) -> Self {
        Self {
            kind: SceneKind::GaussianRidge,
            amplitude,
            sigma,
            orientation_deg,
            ..Default::default()
        }
    }

    pub fn crossing(first_deg: f64, second_deg: f64) -> Self {
        Self {
            kind: SceneKind::CrossingRidges,
            orientation_deg: first_deg,
            second_orientation_deg: Some(second_deg),
            ..Default::default()
        }
    }

    /// Orientation of benchmark scene `k`: eight steps from -45 to +45 degrees.
    pub fn benchmark_orientation(k: usize) -> f64 {
        -45.0 + k as f64 * 90.0 / (BENCHMARK_SCENES - 1) as f64
    }

    pub fn benchmark(k: usize) -> Self {
        Self {
            kind: SceneKind::BenchmarkOriented,
            amplitude: BENCHMARK_AMPLITUDE,
            orientation_deg: Self::benchmark_orientation(k),
            ..Default::default()
        }
    }

    fn centre(&self) -> [f64; 2] {
        [
            (self.width as f64 - 1.0) * 0.5 * self.pitch,
            (self.height as f64 - 1.0) * 0.5 * self.pitch,
        ]
    }

    /// Parse and validate a TOML scene spec; missing keys take defaults.
    pub fn from_toml_str(s: &str) -> Result<SceneSpec> {
        let spec: SceneSpec = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::Scene(format!("grid {}x{} is too small", self.width, self.height)));
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Scene(format!("{name} must be positive, got {v}")))
            }
        };
        positive("pitch", self.pitch)?;
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Scene("noise_sigma must be non-negative".into()));
        }
        if !(-90.0..=90.0).contains(&self.orientation_deg) {
            return Err(Error::Scene(format!(
                "orientation {} outside [-90, 90] degrees",
                self.orientation_deg
            )));
        }
        if let Some(a) = self.second_orientation_deg {
            if !(a.is_finite() && a.abs() <= 180.0) {
                return Err(Error::Scene(format!("second orientation {a} outside [-180, 180] degrees")));
            }
        }
        let extent = self.width.min(self.height) as f64 * self.pitch;
        match self.kind {
            SceneKind::Plane => {}
            SceneKind::Hemisphere => positive("radius", self.radius)?,
            SceneKind::HalfCylinder => {
                positive("radius", self.radius)?;
                if 2.0 * self.radius > 0.8 * extent {
                    return Err(Error::Scene(format!(
                        "cylinder diameter {} m exceeds 80% of the grid",
                        2.0 * self.radius
                    )));
                }
            }
            _ => {
                positive("amplitude", self.amplitude)?;
                positive("sigma", self.sigma)?;
                if 6.0 * self.sigma > 0.8 * extent {
                    return Err(Error::Scene(format!(
                        "ridge cross-section 6 sigma = {} m exceeds 80% of the grid",
                        6.0 * self.sigma
                    )));
                }
                if let Some(l) = self.length {
                    positive("length", l)?;
                    if l > 0.8 * extent {
                        return Err(Error::Scene(format!("ridge length {l} m exceeds 80% of the grid")));
                    }
                }
                if self.kind == SceneKind::MultiWrinkle {
                    if self.count == 0 {
                        return Err(Error::Scene("multi_wrinkle needs count >= 1".into()));
                    }
                    positive("spacing", self.spacing)?;
                    let span = (self.count - 1) as f64 * self.spacing + 6.0 * self.sigma;
                    if span > 0.8 * extent {
                        return Err(Error::Scene(format!("{} ridges span {span} m, over 80% of the grid", self.count)));
                    }
                }
            }
        }
        Ok(())
    }

    /// The features making up the scene.
    pub fn features(&self) -> Result<Vec<Feature>> {
        self.validate()?;
        let c = self.centre();
        let ridge = |deg: f64, centre: [f64; 2], amplitude: f64, span: (f64, f64)| Feature {
            shape: FeatureShape::GaussianRidge {
                amplitude,
                sigma: self.sigma,
            },
            centre,
            angle_deg: deg,
            span,
        };
        let full = (f64::NEG_INFINITY, f64::INFINITY);
        let span = self.length.map_or(full, |l| (-0.5 * l, 0.5 * l));
        Ok(match self.kind {
            SceneKind::Plane => vec![],
            SceneKind::Hemisphere => vec![Feature {
                shape: FeatureShape::Hemisphere { radius: self.radius },
                centre: c,
                angle_deg: 0.0,
                span: full,
            }],
            SceneKind::HalfCylinder => vec![Feature {
                shape: FeatureShape::HalfCylinder { radius: self.radius },
                centre: c,
                angle_deg: self.orientation_deg,
                span: full,
            }],
            SceneKind::GaussianRidge | SceneKind::BenchmarkOriented => {
                vec![ridge(self.orientation_deg, c, self.amplitude, span)]
            }
            SceneKind::CrossingRidges => {
                let second = self.second_orientation_deg.unwrap_or(self.orientation_deg + 90.0);
                vec![
                    ridge(self.orientation_deg, c, self.amplitude, span),
                    ridge(second, c, self.amplitude, span),
                ]
            }
            SceneKind::TJunction => {
                // bar through the centre, stem leaving it along the bar normal
                let stem_len = self.length.unwrap_or(0.35 * self.width.min(self.height) as f64 * self.pitch);
                vec![
                    ridge(self.orientation_deg, c, self.amplitude, full),
                    ridge(self.orientation_deg + 90.0, c, self.amplitude, (0.0, stem_len)),
                ]
            }
            SceneKind::MultiWrinkle => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_0f_a11);
                let phi = self.orientation_deg.to_radians();
                let n = [-phi.sin(), phi.cos()];
                (0..self.count)
                    .map(|i| {
                        let off = (i as f64 - (self.count - 1) as f64 * 0.5) * self.spacing;
                        let scale: f64 = rand::Rng::random_range(&mut rng, 0.6..1.4);
                        ridge(
                            self.orientation_deg,
                            [c[0] + off * n[0], c[1] + off * n[1]],
                            self.amplitude * scale,
                            span,
                        )
                    })
                    .collect()
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum FeatureShape {
    GaussianRidge { amplitude: f64, sigma: f64 },
    HalfCylinder { radius: f64 },
    Hemisphere { radius: f64 },
}

/// One analytic bump. Ridges run along `angle` through `centre`, restricted
/// to the crest interval `span` (signed arc length from `centre`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub shape: FeatureShape,
    pub centre: [f64; 2],
    pub angle_deg: f64,
    pub span: (f64, f64),
}

/// Height, gradient and Hessian of one feature at a point.
#[derive(Clone, Copy, Debug)]
struct Jet {
    z: f64,
    g: [f64; 2],
    /// `[h_xx, h_xy, h_yy]`
    hess: [f64; 3],
}

impl Jet {
    fn zero() -> Self {
        Jet {
            z: 0.0,
            g: [0.0; 2],
            hess: [0.0; 3],
        }
    }
}

/// Relative band around a rim where the surface has no derivative.
const RIM_EPS: f64 = 1e-12;

impl Feature {
    fn tangent(&self) -> [f64; 2] {
        let a = self.angle_deg.to_radians();
        [a.cos(), a.sin()]
    }

    fn normal(&self) -> [f64; 2] {
        let a = self.angle_deg.to_radians();
        [-a.sin(), a.cos()]
    }

    /// Height and derivatives; `None` where the surface is not differentiable.
    fn jet(&self, x: f64, y: f64) -> Option<Jet> {
        let (dx, dy) = (x - self.centre[0], y - self.centre[1]);
        match self.shape {
            FeatureShape::Hemisphere { radius } => {
                let r2 = dx * dx + dy * dy;
                let z2 = radius * radius - r2;
                if z2 <= RIM_EPS * radius * radius {
                    return (z2 < -RIM_EPS * radius * radius).then(Jet::zero);
                }
                let z = z2.sqrt();
                let z3 = z * z2;
                Some(Jet {
                    z,
                    g: [-dx / z, -dy / z],
                    hess: [-1.0 / z - dx * dx / z3, -dx * dy / z3, -1.0 / z - dy * dy / z3],
                })
            }
            FeatureShape::HalfCylinder { radius } => {
                let n = self.normal();
                let u = dx * n[0] + dy * n[1];
                let z2 = radius * radius - u * u;
                if z2 <= RIM_EPS * radius * radius {
                    return (z2 < -RIM_EPS * radius * radius).then(Jet::zero);
                }
                let z = z2.sqrt();
                let k = -radius * radius / (z * z2);
                Some(Jet {
                    z,
                    g: [-u * n[0] / z, -u * n[1] / z],
                    hess: [k * n[0] * n[0], k * n[0] * n[1], k * n[1] * n[1]],
                })
            }
            FeatureShape::GaussianRidge { amplitude, sigma } => {
                let t = self.tangent();
                let s = dx * t[0] + dy * t[1];
                let clamped = s.clamp(self.span.0, self.span.1);
                let r = [dx - clamped * t[0], dy - clamped * t[1]];
                let d2 = r[0] * r[0] + r[1] * r[1];
                let s2 = sigma * sigma;
                let z = amplitude * (-d2 / (2.0 * s2)).exp();
                // Hessian of d^2: 2 n n^T beside the crest, 2 I in the end caps
                let n = self.normal();
                let cap = s != clamped;
                let hd = |i: usize, j: usize| {
                    if cap {
                        if i == j {
                            2.0
                        } else {
                            0.0
                        }
                    } else {
                        2.0 * n[i] * n[j]
                    }
                };
                let hij = |i: usize, j: usize| z * r[i] * r[j] / (s2 * s2) - z * hd(i, j) / (2.0 * s2);
                Some(Jet {
                    z,
                    g: [-z * r[0] / s2, -z * r[1] / s2],
                    hess: [hij(0, 0), hij(0, 1), hij(1, 1)],
                })
            }
        }
    }

    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        self.jet(x, y).map_or(0.0, |j| j.z)
    }
}

fn combine(features: &[Feature], mode: Superposition, x: f64, y: f64) -> f64 {
    match mode {
        Superposition::Max => features.iter().map(|f| f.height_at(x, y)).fold(0.0, f64::max),
        Superposition::Sum => features.iter().map(|f| f.height_at(x, y)).sum(),
    }
}

/// Noise-free scene height at a world point.
pub fn scene_height(spec: &SceneSpec, x: f64, y: f64) -> Result<f64> {
    let features = spec.features()?;
    Ok(combine(&features, spec.superposition, x, y))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeTruth {
    pub amplitude: f64,
    pub sigma: f64,
    pub direction_deg: f64,
    /// Crest polyline in world coordinates, clipped to the grid.
    pub crest: Vec<[f64; 2]>,
    /// The two inflection lines at `+-sigma`.
    pub contours: [Vec<[f64; 2]>; 2],
    /// Apex height above the chord between the inflection points.
    pub height: f64,
    /// Distance between the inflection lines.
    pub width: f64,
    /// Cross-section arc length minus chord between the inflection lines.
    pub slack: f64,
    pub crest_length: f64,
    /// Cross-section area above the chord times crest length.
    pub volume: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub kind: SceneKind,
    pub wrinkle_count: usize,
    pub ridges: Vec<RidgeTruth>,
    pub principal_directions_deg: Vec<f64>,
}

impl GroundTruth {
    pub fn crests(&self) -> Vec<&[[f64; 2]]> {
        self.ridges.iter().map(|r| r.crest.as_slice()).collect()
    }
}

/// Simpson's rule with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Arc length minus chord of `A exp(-u^2 / 2 sigma^2)` over `[-sigma, sigma]`.
pub fn gaussian_ridge_slack(amplitude: f64, sigma: f64) -> f64 {
    let dh = |u: f64| -amplitude * u / (sigma * sigma) * (-u * u / (2.0 * sigma * sigma)).exp();
    simpson(|u| (1.0 + dh(u).powi(2)).sqrt(), -sigma, sigma, 20_000) - 2.0 * sigma
}

/// Area between the Gaussian profile and the chord joining its inflection points.
pub fn gaussian_ridge_section_area(amplitude: f64, sigma: f64) -> f64 {
    let base = amplitude * (-0.5f64).exp();
    simpson(
        |u| amplitude * (-u * u / (2.0 * sigma * sigma)).exp() - base,
        -sigma,
        sigma,
        20_000,
    )
}

/// Amplitude whose inflection-to-inflection slack equals `target`.
pub fn amplitude_for_slack(target: f64, sigma: f64) -> Result<f64> {
    if !(target > 0.0 && sigma > 0.0) {
        return Err(Error::Parameter("target slack and sigma must be positive".into()));
    }
    let (mut lo, mut hi) = (0.0, sigma);
    while gaussian_ridge_slack(hi, sigma) < target {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::Parameter(format!("slack {target} unreachable")));
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if gaussian_ridge_slack(mid, sigma) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Part of the line `p0 + s t` with `s` in `span` that lies inside `[0, wx] x [0, wy]`.
fn clip_line(p0: [f64; 2], t: [f64; 2], span: (f64, f64), wx: f64, wy: f64) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = span;
    for (p, d, max) in [(p0[0], t[0], wx), (p0[1], t[1], wy)] {
        if d.abs() < 1e-15 {
            if p < 0.0 || p > max {
                return None;
            }
        } else {
            let (a, b) = ((0.0 - p) / d, (max - p) / d);
            lo = lo.max(a.min(b));
            hi = hi.min(a.max(b));
        }
    }
    (hi > lo).then_some((lo, hi))
}

fn sample_line(p0: [f64; 2], t: [f64; 2], lo: f64, hi: f64, step: f64) -> Vec<[f64; 2]> {
    let n = ((hi - lo) / step).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| {
            let s = lo + (hi - lo) * i as f64 / n as f64;
            [p0[0] + s * t[0], p0[1] + s * t[1]]
        })
        .collect()
}

fn ground_truth(spec: &SceneSpec, features: &[Feature]) -> GroundTruth {
    let wx = (spec.width - 1) as f64 * spec.pitch;
    let wy = (spec.height - 1) as f64 * spec.pitch;
    let mut ridges = vec![];
    for f in features {
        let (a, sigma, is_ridge) = match f.shape {
            FeatureShape::GaussianRidge { amplitude, sigma } => (amplitude, sigma, true),
            FeatureShape::HalfCylinder { radius } => (radius, radius, false),
            FeatureShape::Hemisphere { .. } => continue,
        };
        let t = f.tangent();
        let n = f.normal();
        let Some((lo, hi)) = clip_line(f.centre, t, f.span, wx, wy) else {
            continue;
        };
        let crest = sample_line(f.centre, t, lo, hi, spec.pitch);
        let offset = |k: f64| {
            let p = [f.centre[0] + k * n[0], f.centre[1] + k * n[1]];
            clip_line(p, t, f.span, wx, wy).map_or(vec![], |(l, h)| sample_line(p, t, l, h, spec.pitch))
        };
        let length = hi - lo;
        let (height, width, slack, area) = if is_ridge {
            (
                a * (1.0 - (-0.5f64).exp()),
                2.0 * sigma,
                gaussian_ridge_slack(a, sigma),
                gaussian_ridge_section_area(a, sigma),
            )
        } else {
            // the cylinder's profile meets the plane at +-R
            let r = a;
            (r, 2.0 * r, (std::f64::consts::PI - 2.0) * r, 0.5 * std::f64::consts::PI * r * r)
        };
        let mut deg = f.angle_deg;
        while deg > 90.0 {
            deg -= 180.0;
        }
        while deg <= -90.0 {
            deg += 180.0;
        }
        ridges.push(RidgeTruth {
            amplitude: a,
            sigma,
            direction_deg: deg,
            crest,
            contours: [offset(-sigma), offset(sigma)],
            height,
            width,
            slack,
            crest_length: length,
            volume: area * length,
        });
    }
    let wrinkle_count = ridges.len();
    let principal_directions_deg = ridges.iter().map(|r| r.direction_deg).collect();
    GroundTruth {
        kind: spec.kind,
        wrinkle_count,
        ridges,
        principal_directions_deg,
    }
}

/// Deterministic field, full-grid garment mask and ground truth.
pub fn generate(spec: &SceneSpec) -> Result<(HeightField, PixelMask, GroundTruth)> {
    let features = spec.features()?;
    let p = spec.pitch;
    let mut values = Grid::from_fn(spec.width, spec.height, |x, y| {
        combine(&features, spec.superposition, x as f64 * p, y as f64 * p)
    })?;
    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Scene(e.to_string()))?;
        for v in values.data_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    let field = HeightField::from_values(values, p)?;
    let mask = PixelMask::full(spec.width, spec.height)?;
    let truth = ground_truth(spec, &features);
    Ok((field, mask, truth))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSample {
    pub mean: f64,
    pub gaussian: f64,
    pub k_max: f64,
    pub k_min: f64,
}

/// Closed-form curvatures of the noise-free surface from the shape operator
/// `I^-1 II` of its Monge patch.
pub fn analytic_curvature(spec: &SceneSpec, x: f64, y: f64) -> Result<CurvatureSample> {
    let features = spec.features()?;
    let jet = match features.len() {
        0 => Jet::zero(),
        _ => {
            let mut jets = vec![];
            for f in &features {
                jets.push(f.jet(x, y).ok_or(Error::NotAvailable { x, y })?);
            }
            match spec.superposition {
                Superposition::Sum => jets.iter().fold(Jet::zero(), |acc, j| Jet {
                    z: acc.z + j.z,
                    g: [acc.g[0] + j.g[0], acc.g[1] + j.g[1]],
                    hess: [acc.hess[0] + j.hess[0], acc.hess[1] + j.hess[1], acc.hess[2] + j.hess[2]],
                }),
                Superposition::Max => {
                    jets.sort_by(|a, b| b.z.total_cmp(&a.z));
                    if jets.len() > 1 && jets[0].z - jets[1].z <= 1e-12 * jets[0].z.abs().max(1e-300) {
                        // on the crease where two features meet
                        if jets[0].z > 0.0 {
                            return Err(Error::NotAvailable { x, y });
                        }
                    }
                    jets[0]
                }
            }
        }
    };
    let (p, q) = (jet.g[0], jet.g[1]);
    let w = (1.0 + p * p + q * q).sqrt();
    let (e, f, g) = (1.0 + p * p, p * q, 1.0 + q * q);
    let (l, m, n) = (jet.hess[0] / w, jet.hess[1] / w, jet.hess[2] / w);
    // shape operator S = I^-1 II
    let det_i = e * g - f * f;
    let s11 = (g * l - f * m) / det_i;
    let s12 = (g * m - f * n) / det_i;
    let s21 = (e * m - f * l) / det_i;
    let s22 = (e * n - f * m) / det_i;
    let mean = 0.5 * (s11 + s22);
    let gaussian = s11 * s22 - s12 * s21;
    let half_gap = (0.25 * (s11 - s22).powi(2) + s12 * s21).max(0.0).sqrt();
    Ok(CurvatureSample {
        mean,
        gaussian,
        k_max: mean + half_gap,
        k_min: mean - half_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plane_scene() {
        let (h, mask, truth) = generate(&SceneSpec::plane(32, 24)).unwrap();
        assert!(h.values().data().iter().all(|&v| v == 0.0));
        assert_eq!(mask.count(), 32 * 24);
        assert!(truth.ridges.is_empty());
        assert_eq!(truth.wrinkle_count, 0);
        let c = analytic_curvature(&SceneSpec::plane(32, 24), 0.01, 0.01).unwrap();
        assert_eq!((c.mean, c.gaussian, c.k_max, c.k_min), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn horizontal_ridge_truth() {
        let spec = SceneSpec {
            height: 201,
            ..SceneSpec::gaussian_ridge(0.02, 0.01, 0.0)
        };
        let (h, _, truth) = generate(&spec).unwrap();
        assert_eq!(truth.wrinkle_count, 1);
        let r = &truth.ridges[0];
        assert!(r.crest.iter().all(|p| (p[1] - 0.1).abs() < 1e-15));
        assert!(r.contours[0].iter().all(|p| (p[1] - 0.09).abs() < 1e-12));
        assert!(r.contours[1].iter().all(|p| (p[1] - 0.11).abs() < 1e-12));
        for x in 0..256 {
            assert!((h.get(x, 100) - 0.02).abs() < 1e-12);
        }
        assert!((r.height - 0.02 * (1.0 - (-0.5f64).exp())).abs() < 1e-15);
        assert!((r.width - 0.02).abs() < 1e-15);
    }

    #[test]
    fn curvature_oracle_examples() {
        let sphere = SceneSpec {
            kind: SceneKind::Hemisphere,
            radius: 0.5,
            width: 512,
            height: 512,
            ..Default::default()
        };
        let c = sphere.centre();
        let s = analytic_curvature(&sphere, c[0], c[1]).unwrap();
        assert!((s.mean + 2.0).abs() < 1e-12);
        assert!((s.gaussian - 4.0).abs() < 1e-12);
        // umbilic everywhere on the sphere
        let s = analytic_curvature(&sphere, c[0] + 0.1, c[1] - 0.2).unwrap();
        assert!((s.k_max + 2.0).abs() < 1e-9 && (s.k_min + 2.0).abs() < 1e-9);

        let cyl = SceneSpec {
            kind: SceneKind::HalfCylinder,
            radius: 0.05,
            orientation_deg: 90.0,
            ..Default::default()
        };
        let c = cyl.centre();
        let s = analytic_curvature(&cyl, c[0], c[1] + 0.03).unwrap();
        assert!(s.k_max.abs() < 1e-12);
        assert!((s.k_min + 20.0).abs() < 1e-9);
        // rim of the cylinder has no derivative
        assert!(matches!(
            analytic_curvature(&cyl, c[0] + 0.05, c[1]),
            Err(Error::NotAvailable { .. })
        ));
    }

    #[test]
    fn crossing_crease_is_not_available() {
        let spec = SceneSpec::crossing(30.0, 120.0);
        let c = spec.centre();
        assert!(matches!(analytic_curvature(&spec, c[0], c[1]), Err(Error::NotAvailable { .. })));
        let (_, _, truth) = generate(&spec).unwrap();
        assert_eq!(truth.wrinkle_count, 2);
        assert_eq!(truth.principal_directions_deg, vec![30.0, -60.0]);
    }

    #[test]
    fn gaussian_ridge_curvature_matches_profile() {
        let spec = SceneSpec::gaussian_ridge(0.02, 0.01, 0.0);
        let c = spec.centre();
        let s = analytic_curvature(&spec, c[0], c[1]).unwrap();
        // crest: h'' = -A / sigma^2, along-crest curvature 0
        assert!((s.k_min + 0.02 / 1e-4).abs() < 1e-9);
        assert!(s.k_max.abs() < 1e-12);
        // inflection: zero curvature across
        let s = analytic_curvature(&spec, c[0], c[1] + 0.01).unwrap();
        assert!(s.k_min.abs() < 1e-9 && s.k_max.abs() < 1e-9);
    }

    #[test]
    fn slack_oracles() {
        // a profile with h' = 0 has no slack
        assert!(gaussian_ridge_slack(0.0, 0.01).abs() < 1e-15);
        let a = amplitude_for_slack(0.004, 0.01).unwrap();
        assert!((gaussian_ridge_slack(a, 0.01) - 0.004).abs() < 1e-12);
        // slack grows with amplitude
        assert!(gaussian_ridge_slack(0.03, 0.01) > gaussian_ridge_slack(0.02, 0.01));
        // closed-form area check: A sigma (sqrt(2 pi) erf(1/sqrt 2) - 2 e^-1/2)
        let erf_half = 0.682_689_492_137_085_9;
        let exact = 0.02 * 0.01 * ((2.0 * std::f64::consts::PI).sqrt() * erf_half - 2.0 * (-0.5f64).exp());
        assert!((gaussian_ridge_section_area(0.02, 0.01) - exact).abs() < 1e-12);
    }

    #[test]
    fn benchmark_orientations() {
        let o: Vec<f64> = (0..8).map(SceneSpec::benchmark_orientation).collect();
        assert_eq!(o[0], -45.0);
        assert_eq!(o[7], 45.0);
        assert!((o[1] - o[0] - 90.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_specs() {
        let too_wide = SceneSpec {
            sigma: 0.05,
            ..SceneSpec::gaussian_ridge(0.02, 0.05, 0.0)
        };
        assert!(matches!(generate(&too_wide), Err(Error::Scene(_))));
        let bad_angle = SceneSpec::gaussian_ridge(0.02, 0.01, 95.0);
        assert!(matches!(generate(&bad_angle), Err(Error::Scene(_))));
        let neg = SceneSpec::gaussian_ridge(-0.02, 0.01, 0.0);
        assert!(matches!(generate(&neg), Err(Error::Scene(_))));
    }

    #[test]
    fn deterministic_noise() {
        let spec = SceneSpec {
            noise_sigma: 3e-4,
            seed: 11,
            ..SceneSpec::plane(40, 40)
        };
        let (a, _, _) = generate(&spec).unwrap();
        let (b, _, _) = generate(&spec).unwrap();
        assert_eq!(a.values().data(), b.values().data());
        let (c, _, _) = generate(&SceneSpec { seed: 12, ..spec.clone() }).unwrap();
        assert_ne!(a.values().data(), c.values().data());
        let n = a.values().len() as f64;
        let sd = (a.values().data().iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        assert!((sd / 3e-4 - 1.0).abs() < 0.05);
    }

    #[test]
    fn finite_ridge_length() {
        let spec = SceneSpec {
            length: Some(0.1),
            ..SceneSpec::gaussian_ridge(0.02, 0.01, 0.0)
        };
        let (_, _, truth) = generate(&spec).unwrap();
        assert!((truth.ridges[0].crest_length - 0.1).abs() < 1e-12);
        assert!((truth.ridges[0].volume - 0.1 * gaussian_ridge_section_area(0.02, 0.01)).abs() < 1e-15);
    }

    #[test]
    fn multi_wrinkle_is_seeded() {
        let spec = SceneSpec {
            kind: SceneKind::MultiWrinkle,
            count: 5,
            spacing: 0.035,
            seed: 3,
            ..Default::default()
        };
        let a = spec.features().unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(a, spec.features().unwrap());
        let amps: Vec<f64> = generate(&spec).unwrap().2.ridges.iter().map(|r| r.amplitude).collect();
        assert!(amps.windows(2).any(|w| w[0] != w[1]));
    }

    proptest! {
        #[test]
        fn crest_recovers_amplitude(a in 0.005f64..0.05, sigma in 0.005f64..0.015) {
            let spec = SceneSpec { height: 129, ..SceneSpec::gaussian_ridge(a, sigma, 0.0) };
            let (_, _, truth) = generate(&spec).unwrap();
            for p in &truth.ridges[0].crest {
                prop_assert!((scene_height(&spec, p[0], p[1]).unwrap() - a).abs() < 1e-12);
            }
        }

        #[test]
        fn rotation_consistency(phi in -90.0f64..=90.0) {
            let spec = SceneSpec { width: 201, height: 201, ..SceneSpec::gaussian_ridge(0.02, 0.01, phi) };
            let (_, _, truth) = generate(&spec).unwrap();
            let c = spec.centre();
            let (s, co) = phi.to_radians().sin_cos();
            // every crest vertex lies on the 0-degree centre line rotated by phi
            for p in &truth.ridges[0].crest {
                let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
                let v = -dx * s + dy * co;
                prop_assert!(v.abs() / spec.pitch <= 0.5);
            }
        }
    }
}
