use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CameraRing, SceneSpec, Specular, Surface, Texture};

impl SceneSpec {
    /// A textured fronto-parallel plane at `depth`.
    pub fn plane(seed: u64, depth: f64) -> Self {
        SceneSpec {
            seed,
            surfaces: vec![Surface::FrontoPlane { depth }],
            ..SceneSpec::default()
        }
    }

    /// Nine views of a tilted backdrop and two spheres.
    pub fn benchmark(seed: u64) -> Self {
        SceneSpec {
            seed,
            cameras: CameraRing {
                count: 9,
                ..CameraRing::default()
            },
            surfaces: vec![
                Surface::SlantedPlane {
                    point: [0.0, 0.0, 0.85],
                    normal: [-0.2, -0.08, 1.0],
                },
                Surface::Sphere {
                    center: [0.03, -0.02, 0.68],
                    radius: 0.1,
                },
                Surface::Sphere {
                    center: [-0.12, 0.1, 0.62],
                    radius: 0.05,
                },
            ],
            ..SceneSpec::default()
        }
    }

    /// Five views of the benchmark geometry with a highlight on the large
    /// sphere whose image position moves from view to view.
    pub fn specular(seed: u64) -> Self {
        let base = SceneSpec::benchmark(seed);
        let centre = [124.0, 106.0];
        let speculars = (0..5)
            .map(|k| {
                let a = k as f64 * 1.3;
                let shift = if k == 0 { 0.0 } else { 30.0 };
                Specular {
                    view: k,
                    center: [centre[0] + shift * a.cos(), centre[1] + shift * a.sin()],
                    radius: 22.0,
                    strength: 0.9,
                }
            })
            .collect();
        SceneSpec {
            cameras: CameraRing {
                count: 5,
                ..base.cameras.clone()
            },
            speculars,
            ..base
        }
    }

    /// Randomized training scene: tilted backdrop, a few spheres, random
    /// texture frequency, and highlights on random views for half the seeds.
    pub fn training(seed: u64, views: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a11);
        let mut surfaces = vec![Surface::SlantedPlane {
            point: [0.0, 0.0, rng.random_range(0.75..0.82)],
            normal: [rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15), 1.0],
        }];
        for _ in 0..rng.random_range(1..=3) {
            let z = rng.random_range(0.58..0.75);
            surfaces.push(Surface::Sphere {
                center: [rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15), z],
                radius: rng.random_range(0.04..0.1),
            });
        }
        let texture = if rng.random_bool(0.85) {
            Texture::Noise {
                scale: rng.random_range(35.0..70.0),
                octaves: 3,
                contrast: rng.random_range(0.3..0.5),
            }
        } else {
            Texture::Checker {
                size: rng.random_range(0.01..0.03),
                contrast: rng.random_range(0.2..0.4),
            }
        };
        let mut speculars = Vec::new();
        if rng.random_bool(0.5) {
            for _ in 0..rng.random_range(1..=3) {
                speculars.push(Specular {
                    view: rng.random_range(0..views),
                    center: [rng.random_range(30.0..198.0), rng.random_range(30.0..198.0)],
                    radius: rng.random_range(12.0..35.0),
                    strength: rng.random_range(0.3..1.0),
                });
            }
        }
        SceneSpec {
            seed,
            cameras: CameraRing {
                count: views,
                ..CameraRing::default()
            },
            surfaces,
            texture,
            speculars,
            ..SceneSpec::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::dataset::{render_scene, SceneSpec};

    #[test]
    fn presets_render_within_range() {
        for spec in [
            SceneSpec::plane(1, 0.6),
            SceneSpec::benchmark(1),
            SceneSpec::specular(1),
            SceneSpec::training(4, 5),
        ] {
            let s = render_scene(&spec).unwrap();
            assert!(s.gt_depth.valid.iter().all(|&v| v));
            assert!(s.gt_depth.depth.iter().all(|&d| (0.45..=1.0).contains(&d)));
        }
    }

    #[test]
    fn specular_scene_marks_highlight() {
        let s = render_scene(&SceneSpec::specular(0)).unwrap();
        let n = s.highlight.iter().filter(|&&h| h).count();
        assert!(n > 1200 && n < 1800, "{n}");
    }
}
