//! File formats: PGM/PPM images, PFM float maps, ASCII PLY clouds and camera text files.

pub mod cams;
pub mod netpbm;
pub mod pfm;
pub mod ply;

pub use cams::{decode_cameras, encode_cameras, read_cameras, write_cameras};
pub use netpbm::{decode_ppm, encode_ppm, read_pgm, write_pgm, write_ppm, RgbImage};
pub use pfm::{read_pfm, write_pfm, FloatMap};
pub use ply::{read_ply, write_ply};
