//! Cameras, plane sweeping geometry and image warping.

pub mod camera;
pub mod homography;
pub mod image;
pub mod planes;

pub use camera::{Camera, Intrinsics, Pose};
pub use homography::{apply_homography, general_plane_homography, plane_homography};
pub use image::{warp_image, warp_region, GrayImage};
pub use planes::{depth_planes, DepthRange};
