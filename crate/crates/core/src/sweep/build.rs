use nalgebra::Matrix3;
use rayon::prelude::*;

use super::{CostVolume, SweepConfig};
use crate::error::{ensure, Result};
use crate::geometry::{plane_homography, warp_image, warp_region, Camera, GrayImage};
use crate::nn::NetworkWeights;
use crate::similarity::{pairwise_consensus, zncc_from_moments, MeasureKind};
use crate::tensor::Tensor;

/// An image with its calibrated camera.
#[derive(Clone, Debug)]
pub struct View {
    pub image: GrayImage,
    pub camera: Camera,
}

/// A similarity measure ready to evaluate, with weights for the learned ones.
#[derive(Clone, Copy, Debug)]
pub enum Measure<'a> {
    Sad,
    Zncc,
    LearnedPairwise(&'a NetworkWeights<f32>),
    LearnedMulti(&'a NetworkWeights<f32>),
}

impl Measure<'_> {
    pub fn kind(&self) -> MeasureKind {
        match self {
            Measure::Sad => MeasureKind::Sad,
            Measure::Zncc => MeasureKind::Zncc,
            Measure::LearnedPairwise(_) => MeasureKind::LearnedPairwise,
            Measure::LearnedMulti(_) => MeasureKind::LearnedMulti,
        }
    }
}

/// Tile origins along one axis: steps of `step`, the last one clamped so the
/// tile ends at the image border.
pub fn tile_origins(extent: usize, tile: usize, step: usize) -> Result<Vec<usize>> {
    ensure!(
        extent >= tile,
        InvalidArgument,
        "image extent {extent} is smaller than the {tile}-pixel tile"
    );
    ensure!(step > 0, InvalidArgument, "tile step must be positive");
    let mut out = vec![0];
    let mut o = 0;
    while o + tile < extent {
        o = (o + step).min(extent - tile);
        out.push(o);
    }
    Ok(out)
}

/// Range of pixel indices whose `side`-wide window `[p - side/2, p - side/2 + side)` fits.
pub fn window_centres(extent: usize, side: usize) -> std::ops::Range<usize> {
    let half = side / 2;
    if extent < side {
        return 0..0;
    }
    half..extent - side + half + 1
}

/// Summed-area table of size `(w+1) x (h+1)`.
pub(crate) struct Integral {
    w1: usize,
    t: Vec<f64>,
}

impl Integral {
    pub(crate) fn new(width: usize, height: usize, f: impl Fn(usize) -> f64) -> Self {
        let w1 = width + 1;
        let mut t = vec![0.0; w1 * (height + 1)];
        for y in 0..height {
            let mut row = 0.0;
            for x in 0..width {
                row += f(y * width + x);
                t[(y + 1) * w1 + x + 1] = t[y * w1 + x + 1] + row;
            }
        }
        Integral { w1, t }
    }

    /// Sum over `[x0, x0 + s) x [y0, y0 + s)`.
    #[inline]
    pub(crate) fn square(&self, x0: usize, y0: usize, s: usize) -> f64 {
        let w1 = self.w1;
        let (x1, y1) = (x0 + s, y0 + s);
        self.t[y1 * w1 + x1] - self.t[y0 * w1 + x1] - self.t[y1 * w1 + x0] + self.t[y0 * w1 + x0]
    }
}

fn check_inputs(reference: &View, partners: &[View], depths: &[f64]) -> Result<()> {
    ensure!(!partners.is_empty(), InvalidArgument, "the sweep needs at least one partner view");
    ensure!(!depths.is_empty(), InvalidArgument, "the sweep needs at least one depth");
    ensure!(
        depths.iter().all(|d| d.is_finite() && *d > 0.0),
        InvalidArgument,
        "sweep depths must be positive"
    );
    let (w, h) = (reference.image.width(), reference.image.height());
    for (i, p) in partners.iter().enumerate() {
        ensure!(
            p.image.width() == w && p.image.height() == h,
            Shape,
            "partner {i} is {}x{}, reference is {w}x{h}",
            p.image.width(),
            p.image.height()
        );
    }
    Ok(())
}

fn homographies(reference: &View, partners: &[View], depth: f64) -> Result<Vec<Matrix3<f64>>> {
    partners
        .iter()
        .map(|p| plane_homography(&reference.camera, &p.camera, depth))
        .collect()
}

/// Build the `D x H x W` volume of max-oriented scores for the reference view.
pub fn build_cost_volume(
    reference: &View,
    partners: &[View],
    depths: &[f64],
    measure: &Measure,
    config: &SweepConfig,
) -> Result<CostVolume> {
    check_inputs(reference, partners, depths)?;
    config.validate(measure.kind())?;
    let (w, h) = (reference.image.width(), reference.image.height());
    let slices: Vec<(Vec<f32>, Vec<bool>)> = match measure {
        Measure::Sad | Measure::Zncc => {
            let stats = RefStats::new(&reference.image);
            depths
                .par_iter()
                .map(|&d| classic_slice(reference, partners, d, measure.kind(), config, &stats))
                .collect::<Result<_>>()?
        }
        Measure::LearnedPairwise(net) | Measure::LearnedMulti(net) => {
            let tiles = RefTiles::new(&reference.image, net, config)?;
            depths
                .par_iter()
                .map(|&d| learned_slice(reference, partners, d, measure, net, config, &tiles))
                .collect::<Result<_>>()?
        }
    };
    let mut scores = Vec::with_capacity(w * h * depths.len());
    let mut valid = Vec::with_capacity(w * h * depths.len());
    for (s, v) in slices {
        scores.extend(s);
        valid.extend(v);
    }
    CostVolume::new(w, h, depths.to_vec(), scores, valid)
}

/// Smallest fraction of jointly valid window pixels for a classic score.
/// Smaller overlaps make correlations of a handful of pixels look perfect.
pub const MIN_COVERAGE: f64 = 0.5;

/// Reference intensities shifted by -0.5 to keep the moment differences well
/// conditioned.
struct RefStats {
    shifted: Vec<f64>,
}

impl RefStats {
    fn new(img: &GrayImage) -> Self {
        RefStats {
            shifted: img.data().iter().map(|&v| v as f64 - 0.5).collect(),
        }
    }
}

/// Per-pixel scores of the reference against one warped partner over the
/// jointly valid pixels of each window; `None` below [`MIN_COVERAGE`] or
/// where the window does not fit.
fn pair_scores(
    reference: &GrayImage,
    warped: &GrayImage,
    kind: MeasureKind,
    side: usize,
    stats: &RefStats,
) -> Vec<Option<f64>> {
    let (w, h) = (reference.width(), reference.height());
    let (rm, wm) = (reference.mask(), warped.mask());
    let joint: Vec<bool> = rm.iter().zip(wm).map(|(&a, &b)| a && b).collect();
    let a = &stats.shifted;
    let b: Vec<f64> = warped.data().iter().map(|&v| v as f64 - 0.5).collect();
    let masked = |f: &dyn Fn(usize) -> f64| Integral::new(w, h, |i| if joint[i] { f(i) } else { 0.0 });
    let count = masked(&|_| 1.0);
    let min_count = MIN_COVERAGE * (side * side) as f64;
    let half = side / 2;
    let mut out = vec![None; w * h];
    match kind {
        MeasureKind::Sad => {
            let absdiff = masked(&|i| (a[i] - b[i]).abs());
            for y in window_centres(h, side) {
                for x in window_centres(w, side) {
                    let (x0, y0) = (x - half, y - half);
                    let n = count.square(x0, y0, side);
                    if n > 0.0 && n >= min_count {
                        out[y * w + x] = Some(-absdiff.square(x0, y0, side) / n);
                    }
                }
            }
        }
        _ => {
            let sa = masked(&|i| a[i]);
            let saa = masked(&|i| a[i] * a[i]);
            let sb = masked(&|i| b[i]);
            let sbb = masked(&|i| b[i] * b[i]);
            let sab = masked(&|i| a[i] * b[i]);
            for y in window_centres(h, side) {
                for x in window_centres(w, side) {
                    let (x0, y0) = (x - half, y - half);
                    let n = count.square(x0, y0, side);
                    if !(n > 0.0 && n >= min_count) {
                        continue;
                    }
                    let ma = sa.square(x0, y0, side) / n;
                    let mb = sb.square(x0, y0, side) / n;
                    let var_a = (saa.square(x0, y0, side) / n - ma * ma).max(0.0);
                    let var_b = (sbb.square(x0, y0, side) / n - mb * mb).max(0.0);
                    let cov = sab.square(x0, y0, side) / n - ma * mb;
                    out[y * w + x] = Some(zncc_from_moments(var_a, var_b, cov));
                }
            }
        }
    }
    out
}

fn classic_slice(
    reference: &View,
    partners: &[View],
    depth: f64,
    kind: MeasureKind,
    config: &SweepConfig,
    stats: &RefStats,
) -> Result<(Vec<f32>, Vec<bool>)> {
    let per_partner = homographies(reference, partners, depth)?
        .iter()
        .zip(partners)
        .map(|(hm, p)| {
            let warped = warp_image(&p.image, hm)?;
            Ok(pair_scores(&reference.image, &warped, kind, config.patch_side, stats))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = reference.image.width() * reference.image.height();
    let mut scores = vec![kind.worst_score() as f32; n];
    let mut valid = vec![false; n];
    let mut buf = Vec::with_capacity(partners.len());
    for i in 0..n {
        buf.clear();
        buf.extend(per_partner.iter().map_while(|s| s[i]));
        if buf.len() == partners.len() {
            scores[i] = pairwise_consensus(&buf, config.consensus)? as f32;
            valid[i] = true;
        }
    }
    Ok((scores, valid))
}

/// Reference tiles and their branch features, computed once per sweep.
struct RefTiles {
    origins: Vec<(usize, usize)>,
    crops: Vec<GrayImage>,
    features: Vec<Tensor<f32>>,
}

impl RefTiles {
    fn new(img: &GrayImage, net: &NetworkWeights<f32>, config: &SweepConfig) -> Result<Self> {
        let (g, _) = config.tile_grid();
        let step = g * config.score_stride;
        let t = config.tile_side;
        let xs = tile_origins(img.width(), t, step)?;
        let ys = tile_origins(img.height(), t, step)?;
        let origins: Vec<(usize, usize)> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
        let crops: Vec<GrayImage> = origins
            .iter()
            .map(|&(x, y)| img.crop(x as isize, y as isize, t, t))
            .collect();
        let features = crops
            .par_iter()
            .map(|c| net.forward_branch(&c.to_tensor()))
            .collect::<Result<Vec<_>>>()?;
        Ok(RefTiles {
            origins,
            crops,
            features,
        })
    }
}

fn learned_slice(
    reference: &View,
    partners: &[View],
    depth: f64,
    measure: &Measure,
    net: &NetworkWeights<f32>,
    config: &SweepConfig,
    tiles: &RefTiles,
) -> Result<(Vec<f32>, Vec<bool>)> {
    let (w, h) = (reference.image.width(), reference.image.height());
    let kind = measure.kind();
    let hs = homographies(reference, partners, depth)?;
    let (g, inset) = config.tile_grid();
    let (t, stride, side) = (config.tile_side, config.score_stride, config.patch_side);
    let mut scores = vec![kind.worst_score() as f32; w * h];
    let mut valid = vec![false; w * h];
    for (ti, &(ox, oy)) in tiles.origins.iter().enumerate() {
        let warped = hs
            .iter()
            .zip(partners)
            .map(|(hm, p)| warp_region(&p.image, hm, ox as isize, oy as isize, t, t))
            .collect::<Result<Vec<_>>>()?;
        let rmask = tiles.crops[ti].mask();
        let invalid = Integral::new(t, t, |i| (!(rmask[i] && warped.iter().all(|wp| wp.mask()[i]))) as u8 as f64);
        let feats = warped
            .iter()
            .map(|wp| net.forward_branch(&wp.to_tensor()))
            .collect::<Result<Vec<_>>>()?;
        let ref_feat = &tiles.features[ti];
        let grid: Vec<f64> = if let Measure::LearnedMulti(_) = measure {
            let mut all = vec![ref_feat];
            all.extend(feats.iter());
            net.score_features(&all)?.data().iter().map(|&s| s as f64).collect()
        } else {
            let per = feats
                .iter()
                .map(|f| net.score_features(&[ref_feat, f]))
                .collect::<Result<Vec<_>>>()?;
            (0..g * g)
                .map(|c| pairwise_consensus(&per.iter().map(|s| s.data()[c] as f64).collect::<Vec<_>>(), config.consensus))
                .collect::<Result<_>>()?
        };
        for i in 0..g {
            for j in 0..g {
                let ok = invalid.square(stride * j, stride * i, side) == 0.0;
                let (s, v) = if ok { (grid[i * g + j] as f32, true) } else { (kind.worst_score() as f32, false) };
                let (by, bx) = (oy + inset + stride * i, ox + inset + stride * j);
                for y in by..by + stride {
                    for x in bx..bx + stride {
                        scores[y * w + x] = s;
                        valid[y * w + x] = v;
                    }
                }
            }
        }
    }
    Ok((scores, valid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Intrinsics, Pose};
    use crate::nn::{Fusion, NetworkConfig};
    use crate::similarity::{sad, zncc, Patch};
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_view(rng: &mut ChaCha8Rng, w: usize, h: usize, center: Vector3<f64>) -> View {
        let img = GrayImage::from_fn(w, h, |_, _| 0.0);
        let data = (0..w * h).map(|_| rng.random::<f32>()).collect();
        let k = Intrinsics::new(60.0, 60.0, w as f64 / 2.0, h as f64 / 2.0).unwrap();
        let pose = Pose::look_at(center, Vector3::new(0.0, 0.0, 1.0)).unwrap();
        View {
            image: GrayImage::new(img.width(), img.height(), data).unwrap(),
            camera: Camera::new(k, pose),
        }
    }

    #[test]
    fn tile_origin_rules() {
        assert_eq!(tile_origins(128, 128, 100).unwrap(), vec![0]);
        assert_eq!(tile_origins(250, 128, 100).unwrap(), vec![0, 100, 122]);
        assert_eq!(tile_origins(328, 128, 100).unwrap(), vec![0, 100, 200]);
        assert!(tile_origins(100, 128, 100).is_err());
        assert_eq!(window_centres(40, 32), 16..25);
    }

    #[test]
    fn classic_matches_patch_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let reference = random_view(&mut rng, 24, 20, Vector3::zeros());
        let partner = random_view(&mut rng, 24, 20, Vector3::new(0.05, 0.01, 0.0));
        let config = SweepConfig {
            patch_side: 6,
            ..SweepConfig::default()
        };
        let depth = 1.3;
        for kind in [Measure::Sad, Measure::Zncc] {
            let vol = build_cost_volume(&reference, std::slice::from_ref(&partner), &[depth], &kind, &config).unwrap();
            let hm = plane_homography(&reference.camera, &partner.camera, depth).unwrap();
            let warped = warp_image(&partner.image, &hm).unwrap();
            let (mut checked, mut partial) = (0, 0);
            for y in 0..20 {
                for x in 0..24 {
                    let (x0, y0) = (x as isize - 3, y as isize - 3);
                    let a = Patch::from_image(&reference.image.crop(x0, y0, 6, 6)).unwrap();
                    let b = Patch::from_image(&warped.crop(x0, y0, 6, 6)).unwrap();
                    let i = vol.index(0, x, y);
                    let joint = a.mask().iter().zip(b.mask()).filter(|(p, q)| **p && **q).count();
                    let inside = window_centres(24, 6).contains(&x) && window_centres(20, 6).contains(&y);
                    if inside && joint as f64 >= MIN_COVERAGE * 36.0 {
                        let want = if matches!(kind, Measure::Sad) { sad(&a, &b) } else { zncc(&a, &b) }.unwrap();
                        assert!(vol.valid()[i]);
                        assert!((vol.scores()[i] as f64 - want).abs() < 1e-6);
                        checked += 1;
                        partial += (joint < 36) as usize;
                    } else {
                        assert!(!vol.valid()[i]);
                    }
                }
            }
            assert!(checked > 50 && partial > 0, "{checked} {partial}");
        }
    }

    #[test]
    fn learned_single_tile_fills_inner_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let reference = random_view(&mut rng, 128, 128, Vector3::zeros());
        // Identical partner camera: every warp is the identity, all windows valid.
        let mut partner = random_view(&mut rng, 128, 128, Vector3::zeros());
        partner.camera = reference.camera;
        let cfg = NetworkConfig {
            branch_channels: [4, 8],
            head_width: 8,
            fusion: Fusion::Mean,
            n_views: 2,
        };
        let net = NetworkWeights::<f32>::init(&cfg, 2).unwrap();
        let vol = build_cost_volume(&reference, &[partner], &[0.8], &Measure::LearnedMulti(&net), &SweepConfig::default()).unwrap();
        for y in 0..128 {
            for x in 0..128 {
                let inside = (14..114).contains(&x) && (14..114).contains(&y);
                assert_eq!(vol.valid()[vol.index(0, x, y)], inside, "({x},{y})");
            }
        }
        let distinct: std::collections::BTreeSet<u32> =
            vol.scores().iter().zip(vol.valid()).filter(|p| *p.1).map(|p| p.0.to_bits()).collect();
        assert!(distinct.len() <= 625);
        assert!(vol.scores().iter().all(|s| (0.0..=1.0).contains(s)));
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = random_view(&mut rng, 40, 40, Vector3::zeros());
        let p = random_view(&mut rng, 40, 40, Vector3::new(0.1, 0.0, 0.0));
        let c = SweepConfig::default();
        assert!(build_cost_volume(&r, &[], &[1.0], &Measure::Zncc, &c).is_err());
        assert!(build_cost_volume(&r, std::slice::from_ref(&p), &[], &Measure::Zncc, &c).is_err());
        let small = random_view(&mut rng, 30, 40, Vector3::zeros());
        assert!(build_cost_volume(&r, &[small], &[1.0], &Measure::Zncc, &c).is_err());
        let net = NetworkWeights::<f32>::init(&NetworkConfig::default(), 0).unwrap();
        assert!(build_cost_volume(&r, &[p], &[1.0], &Measure::LearnedMulti(&net), &c).is_err());
    }
}
