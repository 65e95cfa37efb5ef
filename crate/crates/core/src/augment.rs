//! Point-cloud augmentation: free-space sampling along LiDAR ray paths,
//! voxel downsampling, and seeded geometric augmentation.

use crate::scene_sim::{MeasurePoint, PointCloud, PointLabel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use std::collections::BTreeMap;

/// Free-space sampling parameters. `h_fs` is the maximum kept height
/// relative to the sensor mount (negative values select near-ground space),
/// `d_fs` is the guard band before the hit point, `s_fs` the march step
/// along the ray, `v_fs` the voxel size of the final downsampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeSpaceConfig {
    pub h_fs: f64,
    pub d_fs: f64,
    pub s_fs: f64,
    pub v_fs: f64,
}

impl FreeSpaceConfig {
    pub fn validate(&self) {
        assert!(self.s_fs > 0.0, "s_fs must be positive");
        assert!(self.v_fs > 0.0, "v_fs must be positive");
        assert!(self.d_fs >= 0.0, "d_fs must be non-negative");
    }
}

impl Default for FreeSpaceConfig {
    fn default() -> Self {
        Self {
            h_fs: -1.5,
            d_fs: 1.0,
            s_fs: 6.0,
            v_fs: 0.2,
        }
    }
}

/// Geometric augmentation parameters. Flips negate the named coordinate;
/// rotation, when enabled, is uniform over the full circle about z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeomAugConfig {
    pub scale_lo: f64,
    pub scale_hi: f64,
    pub flip_x: bool,
    pub flip_y: bool,
    pub rotate: bool,
    pub noise_sigma: f64,
}

impl GeomAugConfig {
    pub fn validate(&self) {
        assert!(
            self.scale_lo > 0.0 && self.scale_lo <= self.scale_hi,
            "scale range must satisfy 0 < lo <= hi"
        );
        assert!(self.noise_sigma >= 0.0);
    }
}

impl Default for GeomAugConfig {
    fn default() -> Self {
        Self {
            scale_lo: 0.95,
            scale_hi: 1.05,
            flip_x: true,
            flip_y: true,
            rotate: true,
            noise_sigma: 0.2,
        }
    }
}

fn voxel_key(p: &MeasurePoint, size: f64) -> (i64, i64, i64) {
    (
        (p.x / size).floor() as i64,
        (p.y / size).floor() as i64,
        (p.z / size).floor() as i64,
    )
}

/// Collapse the cloud to one point per occupied voxel: the centroid of its
/// members, with the majority label (ties go to the lowest label value) and
/// the free-space marker decided by majority (ties go to reflected). The
/// intensity of a reflected output is the mean over reflected members.
/// Output is sorted by voxel key, so the result is order-independent.
pub fn voxel_downsample(cloud: &PointCloud, size: f64) -> PointCloud {
    assert!(size > 0.0, "voxel size must be positive");
    let mut voxels: BTreeMap<(i64, i64, i64), Vec<&MeasurePoint>> = BTreeMap::new();
    for p in &cloud.points {
        voxels.entry(voxel_key(p, size)).or_default().push(p);
    }
    let points = voxels
        .values()
        .map(|members| {
            let n = members.len() as f64;
            let (mut sx, mut sy, mut sz) = (0.0, 0.0, 0.0);
            let mut label_counts = [0usize; 3];
            let mut free = 0usize;
            let mut intensity_sum = 0.0;
            for p in members {
                sx += p.x;
                sy += p.y;
                sz += p.z;
                label_counts[p.label as usize] += 1;
                if p.is_free_space() {
                    free += 1;
                } else {
                    intensity_sum += p.intensity;
                }
            }
            let label = match label_counts
                .iter()
                .enumerate()
                .max_by_key(|&(i, &c)| (c, std::cmp::Reverse(i)))
            {
                Some((0, _)) => PointLabel::Road,
                Some((1, _)) => PointLabel::Vehicle,
                _ => PointLabel::Other,
            };
            let reflected = members.len() - free;
            let intensity = if free > reflected {
                -1.0
            } else {
                intensity_sum / reflected as f64
            };
            MeasurePoint::from_xyz(sx / n, sy / n, sz / n, intensity, label)
        })
        .collect();
    PointCloud::new(points)
}

/// Sample free-space points along the ray from `origin` to each reflected
/// point: candidates at arc lengths s_fs, 2*s_fs, ... are kept while they
/// stay at least `d_fs` before the hit and no higher than `h_fs` above the
/// mount. Kept candidates are voxel-downsampled at `v_fs`; outputs carry
/// intensity -1.
pub fn sample_free_space(
    cloud: &PointCloud,
    origin: [f64; 3],
    cfg: &FreeSpaceConfig,
) -> PointCloud {
    cfg.validate();
    let mut candidates = Vec::new();
    for p in &cloud.points {
        if p.is_free_space() {
            continue;
        }
        let delta = [p.x - origin[0], p.y - origin[1], p.z - origin[2]];
        let hit_range = (delta[0] * delta[0] + delta[1] * delta[1] + delta[2] * delta[2]).sqrt();
        debug_assert!(hit_range.is_finite() && hit_range > 0.0);
        if !(hit_range.is_finite() && hit_range > 0.0) {
            continue;
        }
        let mut step = 1u32;
        loop {
            let s = step as f64 * cfg.s_fs;
            if s > hit_range - cfg.d_fs {
                break;
            }
            let f = s / hit_range;
            let z = origin[2] + delta[2] * f;
            if z - origin[2] <= cfg.h_fs {
                candidates.push(MeasurePoint::from_xyz(
                    origin[0] + delta[0] * f,
                    origin[1] + delta[1] * f,
                    z,
                    -1.0,
                    PointLabel::Other,
                ));
            }
            step += 1;
        }
    }
    voxel_downsample(&PointCloud::new(candidates), cfg.v_fs)
}

fn apply_transform(
    cloud: &PointCloud,
    angle: f64,
    flip_x: bool,
    flip_y: bool,
    scale: f64,
    noise: &[(f64, f64, f64)],
) -> PointCloud {
    let (sin_a, cos_a) = angle.sin_cos();
    let points = cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut x = cos_a * p.x - sin_a * p.y;
            let mut y = sin_a * p.x + cos_a * p.y;
            if flip_x {
                x = -x;
            }
            if flip_y {
                y = -y;
            }
            let mut z = p.z;
            x *= scale;
            y *= scale;
            z *= scale;
            if let Some(&(dx, dy, dz)) = noise.get(i) {
                x += dx;
                y += dy;
                z += dz;
            }
            MeasurePoint::from_xyz(x, y, z, p.intensity, p.label)
        })
        .collect();
    PointCloud::new(points)
}

/// Randomly rotate about z, flip x/y, scale, then add per-point Gaussian
/// noise. Range and bearing fields are recomputed after the transform.
/// Deterministic for a given (cloud, cfg, seed).
pub fn geometric_augment(cloud: &PointCloud, cfg: &GeomAugConfig, seed: u64) -> PointCloud {
    cfg.validate();
    assert!(
        !cloud.is_empty(),
        "geometric_augment requires a non-empty cloud"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle = if cfg.rotate {
        rng.gen::<f64>() * std::f64::consts::TAU
    } else {
        0.0
    };
    let flip_x = cfg.flip_x && rng.gen::<bool>();
    let flip_y = cfg.flip_y && rng.gen::<bool>();
    let scale = if cfg.scale_lo < cfg.scale_hi {
        Uniform::new_inclusive(cfg.scale_lo, cfg.scale_hi).sample(&mut rng)
    } else {
        cfg.scale_lo
    };
    let noise: Vec<(f64, f64, f64)> = if cfg.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");
        cloud
            .points
            .iter()
            .map(|_| {
                (
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                )
            })
            .collect()
    } else {
        Vec::new()
    };
    apply_transform(cloud, angle, flip_x, flip_y, scale, &noise)
}
