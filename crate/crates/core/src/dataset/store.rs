//! Scene directories: `images/NN.pgm`, `cams.txt`, `gt_depth.pfm`, `spec.json`.

use std::fs;
use std::path::Path;

use super::{render_scene, Scene, SceneSpec};
use crate::error::{ensure, Result};
use crate::io::{read_cameras, read_pfm, read_pgm, write_cameras, write_pfm, write_pgm};
use crate::sweep::{DepthMap, View};

pub fn image_path(dir: &Path, index: usize) -> std::path::PathBuf {
    dir.join("images").join(format!("{index:02}.pgm"))
}

pub fn write_scene(scene: &Scene, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("images"))?;
    for (i, v) in scene.views.iter().enumerate() {
        write_pgm(&v.image, image_path(dir, i))?;
    }
    let cams: Vec<_> = scene.views.iter().map(|v| v.camera).collect();
    write_cameras(&cams, dir.join("cams.txt"))?;
    write_pfm(&scene.gt_depth.depth_map(), dir.join("gt_depth.pfm"))?;
    if let Some(spec) = &scene.spec {
        fs::write(dir.join("spec.json"), serde_json::to_string_pretty(spec)? + "\n")?;
    }
    Ok(())
}

/// Read a scene directory. Images, cameras and depth come from the files;
/// visibility and highlight masks are re-derived from `spec.json` when present
/// (all visible and no highlight otherwise).
pub fn load_scene(dir: impl AsRef<Path>) -> Result<Scene> {
    let dir = dir.as_ref();
    let cams = read_cameras(dir.join("cams.txt"))?;
    let views = cams
        .iter()
        .enumerate()
        .map(|(i, &camera)| {
            Ok(View {
                image: read_pgm(image_path(dir, i))?,
                camera,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (w, h) = (views[0].image.width(), views[0].image.height());
    ensure!(
        views.iter().all(|v| v.image.width() == w && v.image.height() == h),
        Shape,
        "scene images differ in size"
    );
    let gt_map = read_pfm(dir.join("gt_depth.pfm"))?;
    ensure!(
        gt_map.width == w && gt_map.height == h,
        Shape,
        "gt_depth.pfm is {}x{}, images are {w}x{h}",
        gt_map.width,
        gt_map.height
    );
    let gt_depth = DepthMap::from_float_map(&gt_map);
    let spec_path = dir.join("spec.json");
    let (spec, visibility, highlight) = if spec_path.exists() {
        let spec: SceneSpec = serde_json::from_str(&fs::read_to_string(&spec_path)?)?;
        let rendered = render_scene(&spec)?;
        ensure!(
            rendered.views.len() == views.len(),
            InvalidArgument,
            "spec.json describes {} views, cams.txt has {}",
            rendered.views.len(),
            views.len()
        );
        (Some(spec), rendered.visibility, rendered.highlight)
    } else {
        (None, vec![vec![true; w * h]; views.len() - 1], vec![false; w * h])
    };
    Ok(Scene {
        spec,
        views,
        gt_depth,
        visibility,
        highlight,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_images_and_cameras() {
        let scene = render_scene(&SceneSpec::benchmark(3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_scene(&scene, dir.path()).unwrap();
        assert!(dir.path().join("images/08.pgm").exists());
        let back = load_scene(dir.path()).unwrap();
        assert_eq!(back.views.len(), 9);
        for (a, b) in scene.views.iter().zip(&back.views) {
            assert_eq!(a.image, b.image);
            assert_eq!(a.camera, b.camera);
        }
        assert_eq!(back.visibility, scene.visibility);
        for (a, b) in scene.gt_depth.depth.iter().zip(&back.gt_depth.depth) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(back.spec, scene.spec);
    }
}
