//! Procedural textures and backgrounds for synthetic sequences.

use image::RgbImage;
use nalgebra::Vector3;

use crate::camera::{PinholeCamera, Pixel, StereoRig};
use crate::scene::KinematicModel;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice(seed: u64, x: i64, y: i64, z: i64) -> f64 {
    let h = splitmix(seed ^ splitmix(x as u64 ^ splitmix(y as u64 ^ splitmix(z as u64))));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Smooth 3-D value noise in [0, 1] with feature size `scale`.
pub fn value_noise(seed: u64, p: Vector3<f64>, scale: f64) -> f64 {
    let q = p / scale;
    let (fx, fy, fz) = (q.x.floor(), q.y.floor(), q.z.floor());
    let (ix, iy, iz) = (fx as i64, fy as i64, fz as i64);
    let s = |t: f64| t * t * (3.0 - 2.0 * t);
    let (tx, ty, tz) = (s(q.x - fx), s(q.y - fy), s(q.z - fz));
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    let mut c = [0.0; 8];
    for (k, v) in c.iter_mut().enumerate() {
        let (dx, dy, dz) = ((k & 1) as i64, ((k >> 1) & 1) as i64, ((k >> 2) & 1) as i64);
        *v = lattice(seed, ix + dx, iy + dy, iz + dz);
    }
    let x00 = lerp(c[0], c[1], tx);
    let x10 = lerp(c[2], c[3], tx);
    let x01 = lerp(c[4], c[5], tx);
    let x11 = lerp(c[6], c[7], tx);
    lerp(lerp(x00, x10, ty), lerp(x01, x11, ty), tz)
}

fn noise_color(seed: u64, p: Vector3<f64>, scale: f64) -> [u8; 3] {
    std::array::from_fn(|ch| {
        let s = splitmix(seed.wrapping_add(ch as u64 * 0x1000_0001));
        let n = 0.7 * value_noise(s, p, scale) + 0.3 * value_noise(s ^ 0xABCD, p, scale / 2.0);
        // stretch the contrast a bit; the sum concentrates around 0.5
        let v = (0.5 + (n - 0.5) * 1.8).clamp(0.0, 1.0);
        (20.0 + v * 215.0).round() as u8
    })
}

/// Per-vertex colours of a smooth random texture over the rest mesh.
pub fn vertex_texture(model: &KinematicModel, seed: u64, scale: f64) -> Vec<[u8; 3]> {
    model
        .vertices
        .iter()
        .map(|v| noise_color(seed, v.coords, scale))
        .collect()
}

pub fn uniform_texture(model: &KinematicModel, color: [u8; 3]) -> Vec<[u8; 3]> {
    vec![color; model.vertices.len()]
}

/// A stereo-consistent background: a textured plane at world depth
/// `plane_z` (mm), seen by both cameras.
pub fn plane_background(rig: &StereoRig, seed: u64, plane_z: f64, scale: f64) -> (RgbImage, RgbImage) {
    let view = |camera: &PinholeCamera| {
        let origin = camera.center();
        RgbImage::from_fn(camera.width, camera.height, |x, y| {
            let d = camera.ray_direction(&Pixel::new(x as f64, y as f64));
            let t = if d.z.abs() > 1e-12 { (plane_z - origin.z) / d.z } else { -1.0 };
            if t <= 0.0 {
                return image::Rgb([0, 0, 0]);
            }
            let hit = origin.coords + d * t;
            image::Rgb(noise_color(seed, Vector3::new(hit.x, hit.y, 0.0), scale))
        })
    };
    (view(&rig.left), view(&rig.right))
}

pub fn uniform_background(rig: &StereoRig, color: [u8; 3]) -> (RgbImage, RgbImage) {
    let (w, h) = rig.resolution();
    let img = RgbImage::from_pixel(w, h, image::Rgb(color));
    (img.clone(), img)
}
