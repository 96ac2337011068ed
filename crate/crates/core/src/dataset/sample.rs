use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mix_seed, Scene};
use crate::error::{ensure, Error, Result};
use crate::geometry::{depth_planes, plane_homography, warp_region, DepthRange, GrayImage};
use crate::nn::network::{Example, PATCH_SIDE};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Views per sample, reference included.
    pub n_views: usize,
    /// Plane offset of the negative twin.
    pub neg_offset: usize,
    /// Emit both the `-offset` and `+offset` negatives (each group then
    /// carries two copies of the positive).
    pub both_twins: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_views: 5,
            neg_offset: 15,
            both_twins: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.n_views >= 2, InvalidArgument, "samples need at least two views");
        ensure!(self.neg_offset >= 1, InvalidArgument, "negative offset must be at least 1");
        Ok(())
    }

    fn group_size(&self) -> usize {
        if self.both_twins { 4 } else { 2 }
    }
}

/// `n` aligned patches and a match label.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchSample {
    pub patches: Vec<Tensor<f32>>,
    pub label: u8,
    /// Reference pixel and plane index the sample was cut at.
    pub pixel: (usize, usize),
    pub plane: usize,
}

impl Example<f32> for PatchSample {
    fn patches(&self) -> &[Tensor<f32>] {
        &self.patches
    }

    fn label(&self) -> u8 {
        self.label
    }
}

/// The reference window and each partner warped onto the plane at `depth`,
/// for the 32x32 window centred at `(x, y)`. `None` unless every pixel is valid.
///
/// Uses the same warp call as the sweep.
pub fn extract_views(scene: &Scene, n_views: usize, x: usize, y: usize, depth: f64) -> Result<Option<Vec<GrayImage>>> {
    let half = PATCH_SIDE / 2;
    let (x0, y0) = (x as isize - half as isize, y as isize - half as isize);
    let reference = &scene.views[0];
    let mut out = Vec::with_capacity(n_views);
    let r = reference.image.crop(x0, y0, PATCH_SIDE, PATCH_SIDE);
    if !r.all_valid() {
        return Ok(None);
    }
    out.push(r);
    for p in &scene.views[1..n_views] {
        let h = plane_homography(&reference.camera, &p.camera, depth)?;
        let w = warp_region(&p.image, &h, x0, y0, PATCH_SIDE, PATCH_SIDE)?;
        if !w.all_valid() {
            return Ok(None);
        }
        out.push(w);
    }
    Ok(Some(out))
}

struct Candidates<'a> {
    scene: &'a Scene,
    pixels: Vec<(usize, usize, usize)>,
}

fn candidates<'a>(scene: &'a Scene, range: &DepthRange, cfg: &SamplerConfig) -> Result<Candidates<'a>> {
    ensure!(
        scene.views.len() >= cfg.n_views,
        InvalidArgument,
        "scene has {} views, samples need {}",
        scene.views.len(),
        cfg.n_views
    );
    let (w, h) = (scene.gt_depth.width, scene.gt_depth.height);
    let half = PATCH_SIDE / 2;
    let d = range.plane_count;
    let mut pixels = Vec::new();
    for y in half..=h.saturating_sub(half) {
        for x in half..=w.saturating_sub(half) {
            let i = y * w + x;
            if !scene.gt_depth.valid[i] || !scene.visibility[..cfg.n_views - 1].iter().all(|v| v[i]) {
                continue;
            }
            let Some(k) = range.nearest_plane(scene.gt_depth.depth[i]) else { continue };
            let minus = k >= cfg.neg_offset;
            let plus = k + cfg.neg_offset < d;
            if (cfg.both_twins && minus && plus) || (!cfg.both_twins && (minus || plus)) {
                pixels.push((x, y, k));
            }
        }
    }
    Ok(Candidates { scene, pixels })
}

fn to_sample(views: Vec<GrayImage>, label: u8, pixel: (usize, usize), plane: usize) -> PatchSample {
    PatchSample {
        patches: views.iter().map(GrayImage::to_tensor).collect(),
        label,
        pixel,
        plane,
    }
}

const MAX_ATTEMPTS: usize = 10_000;

fn sample_group(
    cands: &[Candidates],
    depths: &[f64],
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<PatchSample>> {
    let off = cfg.neg_offset;
    for _ in 0..MAX_ATTEMPTS {
        let c = &cands[rng.random_range(0..cands.len())];
        if c.pixels.is_empty() {
            continue;
        }
        let (x, y, k) = c.pixels[rng.random_range(0..c.pixels.len())];
        let Some(pos) = extract_views(c.scene, cfg.n_views, x, y, depths[k])? else { continue };
        let negative_planes: Vec<usize> = if cfg.both_twins {
            vec![k - off, k + off]
        } else {
            let up = rng.random_bool(0.5);
            // Flip the sign if the drawn twin falls outside the plane range.
            let up = if up { k + off < depths.len() } else { k < off };
            vec![if up { k + off } else { k - off }]
        };
        let mut group = Vec::with_capacity(cfg.group_size());
        let mut ok = true;
        for &nk in &negative_planes {
            match extract_views(c.scene, cfg.n_views, x, y, depths[nk])? {
                Some(neg) => {
                    group.push(to_sample(pos.clone(), 1, (x, y), k));
                    group.push(to_sample(neg, 0, (x, y), nk));
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok(group);
        }
    }
    Err(Error::InvalidArgument(format!(
        "no valid sample found after {MAX_ATTEMPTS} attempts; the scenes may be too small or the offset too large"
    )))
}

/// Balanced samples drawn across `scenes`: alternating positive and
/// negative, exactly half of each. Group `g` uses its own generator seeded
/// from `(seed, g)`, so the result does not depend on the thread count.
pub fn sample_from_scenes(
    scenes: &[&Scene],
    range: &DepthRange,
    count: usize,
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<Vec<PatchSample>> {
    cfg.validate()?;
    range.validate()?;
    ensure!(!scenes.is_empty(), InvalidArgument, "sampling needs at least one scene");
    let g = cfg.group_size();
    ensure!(
        count % g == 0,
        InvalidArgument,
        "sample count {count} must be a multiple of {g} for balanced classes"
    );
    let cands = scenes
        .iter()
        .map(|s| candidates(s, range, cfg))
        .collect::<Result<Vec<_>>>()?;
    ensure!(
        cands.iter().any(|c| !c.pixels.is_empty()),
        InvalidArgument,
        "no reference pixel has a usable ground-truth depth"
    );
    let depths = depth_planes(range);
    let groups = (0..count / g)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, i as u64));
            sample_group(&cands, &depths, cfg, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(groups.into_iter().flatten().collect())
}

pub fn sample_patches(scene: &Scene, range: &DepthRange, count: usize, cfg: &SamplerConfig, seed: u64) -> Result<Vec<PatchSample>> {
    sample_from_scenes(&[scene], range, count, cfg, seed)
}

/// Supplies the training batch for a given iteration. Batches depend only on
/// the source's seed and the iteration, so a resumed run sees the same data.
pub trait BatchSource {
    fn batch(&mut self, iteration: usize, size: usize) -> Result<Vec<PatchSample>>;
}

/// Fresh samples cut from rendered scenes for every batch.
pub struct SceneSampler {
    pub scenes: Vec<Scene>,
    pub range: DepthRange,
    pub config: SamplerConfig,
    pub seed: u64,
}

impl BatchSource for SceneSampler {
    fn batch(&mut self, iteration: usize, size: usize) -> Result<Vec<PatchSample>> {
        let refs: Vec<&Scene> = self.scenes.iter().collect();
        sample_from_scenes(&refs, &self.range, size, &self.config, mix_seed(self.seed, iteration as u64))
    }
}

/// Batches drawn with replacement from a fixed set of samples.
pub struct PatchPool {
    positives: Vec<PatchSample>,
    negatives: Vec<PatchSample>,
    seed: u64,
}

impl PatchPool {
    pub fn new(samples: Vec<PatchSample>, seed: u64) -> Result<Self> {
        let (positives, negatives): (Vec<_>, Vec<_>) = samples.into_iter().partition(|s| s.label == 1);
        ensure!(
            !positives.is_empty() && !negatives.is_empty(),
            InvalidArgument,
            "a patch pool needs both positive and negative samples"
        );
        Ok(PatchPool {
            positives,
            negatives,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl BatchSource for PatchPool {
    fn batch(&mut self, iteration: usize, size: usize) -> Result<Vec<PatchSample>> {
        ensure!(size % 2 == 0, InvalidArgument, "batch size must be even");
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, iteration as u64));
        let mut out = Vec::with_capacity(size);
        for _ in 0..size / 2 {
            out.push(self.positives[rng.random_range(0..self.positives.len())].clone());
            out.push(self.negatives[rng.random_range(0..self.negatives.len())].clone());
        }
        Ok(out)
    }
}
