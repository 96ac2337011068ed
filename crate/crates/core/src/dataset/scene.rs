use nalgebra::{Point2, Point3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::texture::Texture;
use crate::error::{ensure, Error, Result};
use crate::geometry::{Camera, GrayImage, Intrinsics, Pose};
use crate::sweep::{DepthMap, View};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Surface {
    /// The plane `z = depth` in the reference frame.
    FrontoPlane { depth: f64 },
    SlantedPlane { point: [f64; 3], normal: [f64; 3] },
    Sphere { center: [f64; 3], radius: f64 },
}

impl Surface {
    /// Smallest ray parameter `t > eps` with `origin + t * dir` on the surface.
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        const EPS: f64 = 1e-9;
        let plane = |p: Vector3<f64>, n: Vector3<f64>| {
            let den = n.dot(dir);
            if den.abs() < 1e-12 {
                return None;
            }
            Some((p - origin).dot(&n) / den).filter(|&t| t > EPS)
        };
        match self {
            Surface::FrontoPlane { depth } => plane(Vector3::new(0.0, 0.0, *depth), Vector3::z()),
            Surface::SlantedPlane { point, normal } => plane(Vector3::from(*point), Vector3::from(*normal)),
            Surface::Sphere { center, radius } => {
                let oc = origin - Vector3::from(*center);
                let b = oc.dot(dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                [-b - s, -b + s].into_iter().find(|&t| t > EPS)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Surface::FrontoPlane { depth } => *depth > 0.0 && depth.is_finite(),
            Surface::SlantedPlane { point, normal } => {
                point.iter().chain(normal).all(|v| v.is_finite()) && Vector3::from(*normal).norm() > 1e-12
            }
            Surface::Sphere { center, radius } => center.iter().all(|v| v.is_finite()) && *radius > 0.0,
        };
        ensure!(ok, InvalidArgument, "invalid surface {self:?}");
        Ok(())
    }
}

/// Cameras on a ring around the reference, all looking at a common target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraRing {
    /// Total number of views including the reference.
    pub count: usize,
    /// Ring radius in metres.
    pub baseline: f64,
    /// Focal length in pixels.
    pub focal: f64,
    /// Depth of the look-at target on the reference axis; mid-range when absent.
    pub target_depth: Option<f64>,
}

impl Default for CameraRing {
    fn default() -> Self {
        CameraRing {
            count: 5,
            baseline: 0.2,
            focal: 250.0,
            target_depth: None,
        }
    }
}

/// View-dependent additive highlight in image space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Specular {
    pub view: usize,
    pub center: [f64; 2],
    pub radius: f64,
    pub strength: f64,
}

impl Specular {
    /// Gaussian blob whose standard deviation is half the radius.
    pub fn intensity(&self, x: f64, y: f64) -> f64 {
        let d2 = (x - self.center[0]).powi(2) + (y - self.center[1]).powi(2);
        self.strength * (-2.0 * d2 / (self.radius * self.radius)).exp()
    }

    pub fn covers(&self, x: f64, y: f64) -> bool {
        (x - self.center[0]).powi(2) + (y - self.center[1]).powi(2) <= self.radius * self.radius
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub z_min: f64,
    pub z_max: f64,
    pub cameras: CameraRing,
    pub surfaces: Vec<Surface>,
    pub texture: Texture,
    pub speculars: Vec<Specular>,
    /// Per-view gain and bias; missing entries default to 1 and 0.
    pub gains: Vec<f64>,
    pub biases: Vec<f64>,
    pub noise_sigma: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 0,
            width: 228,
            height: 228,
            z_min: 0.45,
            z_max: 1.0,
            cameras: CameraRing::default(),
            surfaces: vec![Surface::FrontoPlane { depth: 0.7 }],
            texture: Texture::default(),
            speculars: Vec::new(),
            gains: Vec::new(),
            biases: Vec::new(),
            noise_sigma: 0.0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.width >= 32 && self.height >= 32,
            InvalidArgument,
            "scene must be at least 32x32, got {}x{}",
            self.width,
            self.height
        );
        ensure!(
            self.z_min > 0.0 && self.z_min < self.z_max && self.z_max.is_finite(),
            InvalidArgument,
            "need 0 < z_min < z_max"
        );
        let c = &self.cameras;
        ensure!(c.count >= 2, InvalidArgument, "a scene needs at least 2 cameras");
        ensure!(c.baseline > 0.0 && c.focal > 0.0, InvalidArgument, "baseline and focal must be positive");
        if let Some(t) = c.target_depth {
            ensure!(t > 0.0, InvalidArgument, "target depth must be positive");
        }
        ensure!(!self.surfaces.is_empty(), InvalidArgument, "a scene needs at least one surface");
        for s in &self.surfaces {
            s.validate()?;
        }
        self.texture.validate().map_err(Error::InvalidArgument)?;
        for s in &self.speculars {
            ensure!(
                s.view < c.count && s.radius > 0.0 && s.strength >= 0.0,
                InvalidArgument,
                "invalid specular {s:?}"
            );
        }
        ensure!(
            self.gains.len() <= c.count && self.biases.len() <= c.count,
            InvalidArgument,
            "more gains or biases than views"
        );
        ensure!(self.noise_sigma >= 0.0, InvalidArgument, "noise sigma must be non-negative");
        Ok(())
    }

    /// Camera `k` of the ring; camera 0 is the reference at the world origin.
    pub fn camera(&self, k: usize) -> Result<Camera> {
        let c = &self.cameras;
        let intr = Intrinsics::new(
            c.focal,
            c.focal,
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
        )?;
        if k == 0 {
            return Ok(Camera::new(intr, Pose::identity()));
        }
        let angle = std::f64::consts::TAU * van_der_corput(k as u64 - 1);
        let center = Vector3::new(c.baseline * angle.cos(), c.baseline * angle.sin(), 0.0);
        let target = Vector3::new(0.0, 0.0, c.target_depth.unwrap_or(0.5 * (self.z_min + self.z_max)));
        Ok(Camera::new(intr, Pose::look_at(center, target)?))
    }
}

/// Base-2 radical inverse: 0, 1/2, 1/4, 3/4, 1/8, ...
/// Any prefix of the ring is spread around the reference.
pub fn van_der_corput(mut i: u64) -> f64 {
    let (mut v, mut denom) = (0.0, 1.0);
    while i > 0 {
        denom *= 2.0;
        v += (i & 1) as f64 / denom;
        i >>= 1;
    }
    v
}

/// A rendered scene; view 0 is the reference.
#[derive(Clone, Debug)]
pub struct Scene {
    /// The generating spec, when known.
    pub spec: Option<SceneSpec>,
    pub views: Vec<View>,
    /// Reference z-depth; invalid where no surface is hit.
    pub gt_depth: DepthMap,
    /// Per partner view: which reference pixels are unoccluded in that view.
    pub visibility: Vec<Vec<bool>>,
    /// Reference pixels inside a reference-view highlight.
    pub highlight: Vec<bool>,
}

struct Hit {
    t: f64,
    point: Point3<f64>,
    surface: usize,
}

fn cast(surfaces: &[Surface], origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for (i, s) in surfaces.iter().enumerate() {
        if let Some(t) = s.intersect(origin, dir) {
            if best.as_ref().is_none_or(|b| t < b.t) {
                best = Some(Hit {
                    t,
                    point: Point3::from(origin + t * dir),
                    surface: i,
                });
            }
        }
    }
    best
}

const SUBSAMPLES: [(f64, f64); 4] = [(-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)];

fn quantize(v: f64) -> f32 {
    ((v.clamp(0.0, 1.0) * 255.0).round() / 255.0) as f32
}

/// Render all views, the reference depth, visibility and highlight masks.
/// Intensities are quantized to 8 bits so a scene read back from disk is identical.
pub fn render_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let cams = (0..spec.cameras.count).map(|k| spec.camera(k)).collect::<Result<Vec<_>>>()?;
    let albedo = |hit: &Hit| spec.texture.albedo(&hit.point, spec.seed.wrapping_mul(31).wrapping_add(hit.surface as u64));

    let views = cams
        .par_iter()
        .enumerate()
        .map(|(k, cam)| {
            let gain = spec.gains.get(k).copied().unwrap_or(1.0);
            let bias = spec.biases.get(k).copied().unwrap_or(0.0);
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (0x5eed_0000 + k as u64));
            let noise = Normal::new(0.0, spec.noise_sigma.max(0.0)).expect("finite sigma");
            let mut data = Vec::with_capacity(w * h);
            let mut mask = Vec::with_capacity(w * h);
            for y in 0..h {
                for x in 0..w {
                    let (mut sum, mut hits) = (0.0, 0);
                    for (dx, dy) in SUBSAMPLES {
                        let (o, d) = cam.ray(&Point2::new(x as f64 + dx, y as f64 + dy));
                        if let Some(hit) = cast(&spec.surfaces, &o, &d) {
                            sum += albedo(&hit);
                            hits += 1;
                        }
                    }
                    let mut v = if hits > 0 { sum / hits as f64 } else { 0.0 };
                    v = gain * v + bias;
                    for s in spec.speculars.iter().filter(|s| s.view == k) {
                        v += s.intensity(x as f64, y as f64);
                    }
                    if spec.noise_sigma > 0.0 {
                        v += noise.sample(&mut rng);
                    }
                    data.push(quantize(v));
                    mask.push(hits == SUBSAMPLES.len());
                }
            }
            Ok(View {
                image: GrayImage::with_mask(w, h, data, mask)?,
                camera: *cam,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let reference = &cams[0];
    let mut gt = DepthMap::invalid(w, h);
    let mut points = vec![None; w * h];
    for y in 0..h {
        for x in 0..w {
            let (o, d) = reference.ray(&Point2::new(x as f64, y as f64));
            if let Some(hit) = cast(&spec.surfaces, &o, &d) {
                let z = reference.world_to_camera(&hit.point).z;
                ensure!(
                    z >= spec.z_min - 1e-9 && z <= spec.z_max + 1e-9,
                    InvalidArgument,
                    "surface {} is seen at depth {z:.4} m, outside [{}, {}]",
                    hit.surface,
                    spec.z_min,
                    spec.z_max
                );
                let i = y * w + x;
                gt.depth[i] = z.clamp(spec.z_min, spec.z_max);
                gt.valid[i] = true;
                points[i] = Some(hit.point);
            }
        }
    }

    let visibility = cams[1..]
        .iter()
        .map(|cam| {
            points
                .iter()
                .map(|p| {
                    let Some(p) = p else { return false };
                    let Ok(px) = cam.project(p) else { return false };
                    if !(px.x >= 0.0 && px.y >= 0.0 && px.x <= (w - 1) as f64 && px.y <= (h - 1) as f64) {
                        return false;
                    }
                    let center = cam.pose.center();
                    let to = p.coords - center;
                    let dist = to.norm();
                    cast(&spec.surfaces, &center, &(to / dist)).is_some_and(|hit| hit.t >= dist - 1e-6 * dist.max(1.0))
                })
                .collect()
        })
        .collect();

    let highlight = (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            spec.speculars.iter().any(|s| s.view == 0 && s.covers(x, y))
        })
        .collect();

    Ok(Scene {
        spec: Some(spec.clone()),
        views,
        gt_depth: gt,
        visibility,
        highlight,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fronto_plane_depth_is_constant() {
        let spec = SceneSpec::default();
        let scene = render_scene(&spec).unwrap();
        assert!(scene.gt_depth.valid.iter().all(|&v| v));
        assert!(scene.gt_depth.depth.iter().all(|&d| (d - 0.7).abs() < 1e-12));
        assert_eq!(scene.views.len(), 5);
    }

    #[test]
    fn deterministic() {
        let spec = SceneSpec {
            noise_sigma: 0.02,
            ..SceneSpec::default()
        };
        let a = render_scene(&spec).unwrap();
        let b = render_scene(&spec).unwrap();
        for (va, vb) in a.views.iter().zip(&b.views) {
            assert_eq!(va.image, vb.image);
        }
    }

    #[test]
    fn sphere_depth_matches_analytic_intersection() {
        let spec = SceneSpec {
            surfaces: vec![
                Surface::FrontoPlane { depth: 0.95 },
                Surface::Sphere {
                    center: [0.0, 0.0, 0.7],
                    radius: 0.15,
                },
            ],
            ..SceneSpec::default()
        };
        let scene = render_scene(&spec).unwrap();
        let cam = &scene.views[0].camera;
        let (w, h) = (spec.width, spec.height);
        let mut min = (f64::INFINITY, 0);
        for y in 0..h {
            for x in 0..w {
                let (_, d) = cam.ray(&Point2::new(x as f64, y as f64));
                // Closed-form near root of |t d - c|^2 = r^2 with unit d.
                let c = Vector3::new(0.0, 0.0, 0.7);
                let b = d.dot(&c);
                let disc = b * b - (c.norm_squared() - 0.15 * 0.15);
                let want = if disc >= 0.0 { (b - disc.sqrt()) * d.z } else { 0.95 };
                let i = y * w + x;
                assert!((scene.gt_depth.depth[i] - want).abs() < 1e-6);
                if scene.gt_depth.depth[i] < min.0 {
                    min = (scene.gt_depth.depth[i], i);
                }
            }
        }
        assert!((min.0 - 0.55).abs() < 1e-3);
        let (mx, my) = (min.1 % w, min.1 / w);
        assert!(mx.abs_diff(w / 2) <= 1 && my.abs_diff(h / 2) <= 1);
    }

    #[test]
    fn rejects_surfaces_outside_range() {
        let spec = SceneSpec {
            surfaces: vec![Surface::FrontoPlane { depth: 1.5 }],
            ..SceneSpec::default()
        };
        assert!(render_scene(&spec).is_err());
    }

    #[test]
    fn occluded_points_are_not_visible() {
        let spec = SceneSpec {
            surfaces: vec![
                Surface::FrontoPlane { depth: 0.95 },
                Surface::Sphere {
                    center: [0.0, 0.0, 0.6],
                    radius: 0.08,
                },
            ],
            ..SceneSpec::default()
        };
        let scene = render_scene(&spec).unwrap();
        for vis in &scene.visibility {
            let hidden = vis.iter().filter(|&&v| !v).count();
            assert!(hidden > 0 && hidden < vis.len() / 2);
        }
    }

    #[test]
    fn ring_order_spreads_partners() {
        assert_eq!(
            (0..4).map(van_der_corput).collect::<Vec<_>>(),
            vec![0.0, 0.5, 0.25, 0.75]
        );
        let spec = SceneSpec::default();
        let c1 = spec.camera(1).unwrap().pose.center();
        let c2 = spec.camera(2).unwrap().pose.center();
        assert!((c1 + c2).norm() < 1e-12);
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = SceneSpec {
            speculars: vec![Specular {
                view: 0,
                center: [110.0, 114.0],
                radius: 12.0,
                strength: 0.8,
            }],
            surfaces: vec![
                Surface::FrontoPlane { depth: 0.9 },
                Surface::SlantedPlane {
                    point: [0.0, 0.0, 0.7],
                    normal: [0.3, 0.0, -1.0],
                },
            ],
            ..SceneSpec::default()
        };
        let text = serde_json::to_string_pretty(&spec).unwrap();
        assert_eq!(serde_json::from_str::<SceneSpec>(&text).unwrap(), spec);
        assert!(serde_json::from_str::<SceneSpec>(r#"{"bogus": 1}"#).is_err());
    }
}
