//! Lung-like chest phantoms on a 0.5 mm z-grid.
//!
//! A phantom is an elliptic body cylinder with two ellipsoidal lungs filled
//! with band-limited texture, tubular vessels, a spine and spherical nodules
//! (optionally part-solid: a solid core inside a ground-glass halo). Every
//! boundary uses a one-voxel cosine ramp.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Result, SimError};
use crate::volume::{RoiBox, Volume, HU_MAX, HU_MIN};

/// z spacing of generated phantoms.
pub const PHANTOM_SLICE_MM: f32 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TissueHu {
    pub air: f32,
    pub soft_tissue: f32,
    pub lung: f32,
    pub vessel: f32,
    pub bone: f32,
}

impl Default for TissueHu {
    fn default() -> Self {
        TissueHu {
            air: -1000.0,
            soft_tissue: 40.0,
            lung: -800.0,
            vessel: 40.0,
            bone: 700.0,
        }
    }
}

/// Ellipsoidal lung; coordinates in mm relative to the volume centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LungSpec {
    /// (y, x) centre.
    pub center_mm: [f32; 2],
    /// (z, y, x) semi-axes.
    pub semi_axes_mm: [f32; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoduleSpec {
    /// (z, y, x) centre in mm relative to the volume centre.
    pub center_mm: [f32; 3],
    pub radius_mm: f32,
    pub core_hu: f32,
    pub halo_hu: f32,
    /// Part-solid nodules have a solid core of 40% of the radius inside a
    /// ground-glass halo; solid nodules are all core.
    pub part_solid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    /// Grid size (nz, ny, nx); z is sampled at [`PHANTOM_SLICE_MM`].
    pub dims: [usize; 3],
    pub pixel_mm: f32,
    /// (y, x) semi-axes of the body cylinder.
    pub body_semi_axes_mm: [f32; 2],
    pub lungs: Vec<LungSpec>,
    pub texture_amplitude_hu: f32,
    /// In-plane correlation length of the lung texture in voxels.
    pub texture_correlation_voxels: f32,
    pub vessel_count: usize,
    /// (min, max) vessel radius.
    pub vessel_radius_mm: [f32; 2],
    pub nodules: Vec<NoduleSpec>,
    pub tissue_hu: TissueHu,
}

impl Default for PhantomSpec {
    /// Desk-scale chest: 128 × 64 × 64 voxels, 3 mm pixels, 0.5 mm slices.
    fn default() -> Self {
        PhantomSpec {
            dims: [128, 64, 64],
            pixel_mm: 3.0,
            body_semi_axes_mm: [65.0, 90.0],
            lungs: vec![
                LungSpec {
                    center_mm: [-5.0, -42.0],
                    semi_axes_mm: [48.0, 45.0, 30.0],
                },
                LungSpec {
                    center_mm: [-5.0, 42.0],
                    semi_axes_mm: [48.0, 45.0, 30.0],
                },
            ],
            texture_amplitude_hu: 60.0,
            texture_correlation_voxels: 1.2,
            vessel_count: 14,
            vessel_radius_mm: [1.0, 2.5],
            nodules: vec![
                NoduleSpec {
                    center_mm: [0.0, -10.0, -42.0],
                    radius_mm: 7.0,
                    core_hu: 30.0,
                    halo_hu: -450.0,
                    part_solid: true,
                },
                NoduleSpec {
                    center_mm: [6.0, 5.0, 40.0],
                    radius_mm: 5.0,
                    core_hu: 30.0,
                    halo_hu: -450.0,
                    part_solid: false,
                },
            ],
            tissue_hu: TissueHu::default(),
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::InvalidSpec(m));
        if self.dims.contains(&0) {
            return bad(format!("dims must be positive, got {:?}", self.dims));
        }
        if !(self.pixel_mm > 0.0) {
            return bad("pixel_mm must be positive".into());
        }
        if self.body_semi_axes_mm.iter().any(|&a| !(a > 0.0)) {
            return bad("body semi-axes must be positive".into());
        }
        for (i, l) in self.lungs.iter().enumerate() {
            if l.semi_axes_mm.iter().any(|&a| !(a > 0.0)) {
                return bad(format!("lung {i} semi-axes must be positive"));
            }
        }
        if !(self.texture_correlation_voxels > 0.0) || self.texture_amplitude_hu < 0.0 {
            return bad("texture correlation must be positive and amplitude non-negative".into());
        }
        let [rmin, rmax] = self.vessel_radius_mm;
        if !(rmin > 0.0 && rmax >= rmin) {
            return bad("vessel radius range must satisfy 0 < min <= max".into());
        }
        let t = &self.tissue_hu;
        for (name, hu) in [
            ("air", t.air),
            ("soft_tissue", t.soft_tissue),
            ("lung", t.lung),
            ("vessel", t.vessel),
            ("bone", t.bone),
        ] {
            if !(HU_MIN..=HU_MAX).contains(&hu) {
                return bad(format!("{name} HU {hu} outside [{HU_MIN}, {HU_MAX}]"));
            }
        }
        for (i, n) in self.nodules.iter().enumerate() {
            if !(n.radius_mm > 0.0) {
                return bad(format!("nodule {i} radius must be positive"));
            }
            for hu in [n.core_hu, n.halo_hu] {
                if !(HU_MIN..=HU_MAX).contains(&hu) {
                    return bad(format!("nodule {i} HU {hu} out of range"));
                }
            }
            let [z, y, x] = n.center_mm;
            if !self
                .lungs
                .iter()
                .any(|l| l.normalized_radius(z, y, x) < 1.0)
            {
                return bad(format!(
                    "nodule {i} centre {:?} lies outside every lung",
                    n.center_mm
                ));
            }
        }
        Ok(())
    }

    /// Replaces the nodule list with `count` randomly placed nodules, about
    /// half of them part-solid.
    pub fn with_random_nodules(mut self, count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6E6F_6475_6C65);
        self.nodules.clear();
        if self.lungs.is_empty() {
            return self;
        }
        let z_half = self.dims[0] as f32 * PHANTOM_SLICE_MM / 2.0;
        while self.nodules.len() < count {
            let lung = self.lungs[rng.random_range(0..self.lungs.len())];
            let radius_mm = rng.random_range(4.0..7.5f32);
            let z = rng.random_range(-0.5..0.5f32) * (z_half - radius_mm).max(0.0);
            let y = lung.center_mm[0] + rng.random_range(-0.5..0.5f32) * lung.semi_axes_mm[1];
            let x = lung.center_mm[1] + rng.random_range(-0.5..0.5f32) * lung.semi_axes_mm[2];
            if lung.normalized_radius(z, y, x) > 0.6 {
                continue;
            }
            self.nodules.push(NoduleSpec {
                center_mm: [z, y, x],
                radius_mm,
                core_hu: rng.random_range(0.0..60.0),
                halo_hu: rng.random_range(-550.0..-350.0),
                part_solid: rng.random_bool(0.5),
            });
        }
        self
    }

    fn z_mm(&self, k: usize) -> f32 {
        (k as f32 + 0.5) * PHANTOM_SLICE_MM - self.dims[0] as f32 * PHANTOM_SLICE_MM / 2.0
    }

    fn yx_mm(&self, i: usize, n: usize) -> f32 {
        (i as f32 - (n as f32 - 1.0) / 2.0) * self.pixel_mm
    }

    fn mm_to_voxel(&self, p: [f32; 3]) -> [usize; 3] {
        let z = ((p[0] + self.dims[0] as f32 * PHANTOM_SLICE_MM / 2.0) / PHANTOM_SLICE_MM - 0.5)
            .round();
        let y = (p[1] / self.pixel_mm + (self.dims[1] as f32 - 1.0) / 2.0).round();
        let x = (p[2] / self.pixel_mm + (self.dims[2] as f32 - 1.0) / 2.0).round();
        [
            (z.max(0.0) as usize).min(self.dims[0] - 1),
            (y.max(0.0) as usize).min(self.dims[1] - 1),
            (x.max(0.0) as usize).min(self.dims[2] - 1),
        ]
    }
}

impl LungSpec {
    fn normalized_radius(&self, z: f32, y: f32, x: f32) -> f32 {
        let [a, b, c] = self.semi_axes_mm;
        ((z / a).powi(2)
            + ((y - self.center_mm[0]) / b).powi(2)
            + ((x - self.center_mm[1]) / c).powi(2))
        .sqrt()
    }

    /// Approximate signed distance in mm (negative inside).
    fn signed_distance(&self, z: f32, y: f32, x: f32) -> f32 {
        let rho = self.normalized_radius(z, y, x);
        let dy = y - self.center_mm[0];
        let dx = x - self.center_mm[1];
        let dist = (z * z + dy * dy + dx * dx).sqrt();
        let scale = if rho > 1e-6 {
            dist / rho
        } else {
            self.semi_axes_mm
                .iter()
                .cloned()
                .fold(f32::INFINITY, f32::min)
        };
        (rho - 1.0) * scale
    }
}

/// Nodule location in the generated grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoduleRoi {
    pub center_voxel: [usize; 3],
    /// Bounding box of the nodule including its ramp.
    pub bounds: RoiBox,
    pub radius_mm: f32,
    pub part_solid: bool,
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub volume: Volume,
    pub nodules: Vec<NoduleRoi>,
    /// Fraction of lung per voxel, in [0, 1].
    pub lung_weight: Vec<f32>,
}

/// Weight of the inside of a shape given its signed distance `s` in mm.
#[inline]
fn ramp(s: f32, width: f32) -> f32 {
    let h = width / 2.0;
    if s <= -h {
        1.0
    } else if s >= h {
        0.0
    } else {
        0.5 * (1.0 + (std::f32::consts::PI * (s + h) / width).cos())
    }
}

fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f32> = (-radius..=radius)
        .map(|i| (-(i as f32).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur along `axis` of a z-major grid, clamped edges.
fn blur_axis(data: &mut [f32], dims: [usize; 3], axis: usize, sigma: f32) {
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let strides = [dims[1] * dims[2], dims[2], 1];
    let n = dims[axis] as isize;
    let stride = strides[axis];
    let mut line = vec![0.0f32; dims[axis]];
    let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
    for i in 0..dims[others[0]] {
        for j in 0..dims[others[1]] {
            let base = i * strides[others[0]] + j * strides[others[1]];
            for (p, l) in line.iter_mut().enumerate() {
                *l = data[base + p * stride];
            }
            for p in 0..n {
                let mut acc = 0.0;
                for (q, w) in kernel.iter().enumerate() {
                    let src = (p + q as isize - radius).clamp(0, n - 1) as usize;
                    acc += w * line[src];
                }
                data[base + p as usize * stride] = acc;
            }
        }
    }
}

fn lung_texture(spec: &PhantomSpec, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let dims = spec.dims;
    let n = dims.iter().product();
    let mut field: Vec<f32> = (0..n)
        .map(|_| rng.sample::<f32, _>(StandardNormal))
        .collect();
    let sigma_xy = spec.texture_correlation_voxels;
    let sigma_z = sigma_xy * spec.pixel_mm / PHANTOM_SLICE_MM;
    blur_axis(&mut field, dims, 0, sigma_z);
    blur_axis(&mut field, dims, 1, sigma_xy);
    blur_axis(&mut field, dims, 2, sigma_xy);
    let mean = field.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let var = field
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    let scale = if var > 0.0 {
        spec.texture_amplitude_hu as f64 / var.sqrt()
    } else {
        0.0
    };
    field
        .iter()
        .map(|&v| ((v as f64 - mean) * scale) as f32)
        .collect()
}

struct Vessel {
    a: [f32; 3],
    b: [f32; 3],
    radius: f32,
}

impl Vessel {
    fn distance(&self, p: [f32; 3]) -> f32 {
        let ab = [
            self.b[0] - self.a[0],
            self.b[1] - self.a[1],
            self.b[2] - self.a[2],
        ];
        let ap = [p[0] - self.a[0], p[1] - self.a[1], p[2] - self.a[2]];
        let len2 = ab.iter().map(|v| v * v).sum::<f32>();
        let t = if len2 > 0.0 {
            (ap.iter().zip(&ab).map(|(x, y)| x * y).sum::<f32>() / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let d = [ap[0] - t * ab[0], ap[1] - t * ab[1], ap[2] - t * ab[2]];
        d.iter().map(|v| v * v).sum::<f32>().sqrt()
    }
}

fn sample_vessels(spec: &PhantomSpec, rng: &mut ChaCha8Rng) -> Vec<Vessel> {
    let mut vessels = Vec::with_capacity(spec.vessel_count);
    if spec.lungs.is_empty() {
        return vessels;
    }
    let z_half = spec.dims[0] as f32 * PHANTOM_SLICE_MM / 2.0;
    let mut attempts = 0;
    while vessels.len() < spec.vessel_count && attempts < 100 * spec.vessel_count.max(1) {
        attempts += 1;
        let lung = spec.lungs[rng.random_range(0..spec.lungs.len())];
        let z = rng.random_range(-z_half..z_half);
        let y = lung.center_mm[0] + rng.random_range(-1.0..1.0f32) * lung.semi_axes_mm[1];
        let x = lung.center_mm[1] + rng.random_range(-1.0..1.0f32) * lung.semi_axes_mm[2];
        if lung.normalized_radius(z, y, x) > 0.85 {
            continue;
        }
        // mostly cranio-caudal with a random tilt
        let tilt = rng.random_range(0.0..0.8f32);
        let phi = rng.random_range(0.0..std::f32::consts::TAU);
        let dir = [tilt.cos(), tilt.sin() * phi.sin(), tilt.sin() * phi.cos()];
        let half_len = rng.random_range(10.0..30.0f32);
        let [rmin, rmax] = spec.vessel_radius_mm;
        let radius = if rmax > rmin {
            rng.random_range(rmin..rmax)
        } else {
            rmin
        };
        vessels.push(Vessel {
            a: [
                z - dir[0] * half_len,
                y - dir[1] * half_len,
                x - dir[2] * half_len,
            ],
            b: [
                z + dir[0] * half_len,
                y + dir[1] * half_len,
                x + dir[2] * half_len,
            ],
            radius,
        });
    }
    vessels
}

/// Renders `spec` deterministically from `seed`.
pub fn generate_phantom(spec: &PhantomSpec, seed: u64) -> Result<Phantom> {
    spec.validate()?;
    let [nz, ny, nx] = spec.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let texture = lung_texture(spec, &mut rng);
    let vessels = sample_vessels(spec, &mut rng);
    let t = spec.tissue_hu;
    let width = spec.pixel_mm;
    let [by, bx] = spec.body_semi_axes_mm;
    let spine_center = [by - 22.0, 0.0f32];
    let spine_radius = 12.0f32.min(by / 3.0);

    let mut voxels = vec![0.0f32; nz * ny * nx];
    let mut lung_weight = vec![0.0f32; nz * ny * nx];
    for k in 0..nz {
        let z = spec.z_mm(k);
        for i in 0..ny {
            let y = spec.yx_mm(i, ny);
            for j in 0..nx {
                let x = spec.yx_mm(j, nx);
                let idx = (k * ny + i) * nx + j;
                let p = [z, y, x];

                let rho = ((y / by).powi(2) + (x / bx).powi(2)).sqrt();
                let body_scale = if rho > 1e-6 {
                    (y * y + x * x).sqrt() / rho
                } else {
                    by.min(bx)
                };
                let w_body = ramp((rho - 1.0) * body_scale, width);
                let mut v = t.air * (1.0 - w_body) + t.soft_tissue * w_body;

                let spine_d =
                    ((y - spine_center[0]).powi(2) + (x - spine_center[1]).powi(2)).sqrt();
                let w_spine = ramp(spine_d - spine_radius, width) * w_body;
                v = v * (1.0 - w_spine) + t.bone * w_spine;

                let w_lung = spec
                    .lungs
                    .iter()
                    .map(|l| ramp(l.signed_distance(z, y, x), width))
                    .fold(0.0f32, f32::max)
                    * w_body;
                lung_weight[idx] = w_lung;
                v = v * (1.0 - w_lung) + (t.lung + texture[idx]) * w_lung;

                for vessel in &vessels {
                    let w = ramp(vessel.distance(p) - vessel.radius, width) * w_lung;
                    if w > 0.0 {
                        v = v * (1.0 - w) + t.vessel * w;
                    }
                }

                for n in &spec.nodules {
                    let d = ((z - n.center_mm[0]).powi(2)
                        + (y - n.center_mm[1]).powi(2)
                        + (x - n.center_mm[2]).powi(2))
                    .sqrt();
                    if d > n.radius_mm + width {
                        continue;
                    }
                    if n.part_solid {
                        let w_halo = ramp(d - n.radius_mm, width);
                        v = v * (1.0 - w_halo) + n.halo_hu * w_halo;
                        let w_core = ramp(d - 0.4 * n.radius_mm, width);
                        v = v * (1.0 - w_core) + n.core_hu * w_core;
                    } else {
                        let w = ramp(d - n.radius_mm, width);
                        v = v * (1.0 - w) + n.core_hu * w;
                    }
                }
                voxels[idx] = v.clamp(HU_MIN, HU_MAX);
            }
        }
    }

    let nodules = spec
        .nodules
        .iter()
        .map(|n| {
            let center_voxel = spec.mm_to_voxel(n.center_mm);
            let reach = n.radius_mm + width;
            let lo = spec.mm_to_voxel([
                n.center_mm[0] - reach,
                n.center_mm[1] - reach,
                n.center_mm[2] - reach,
            ]);
            let hi = spec.mm_to_voxel([
                n.center_mm[0] + reach,
                n.center_mm[1] + reach,
                n.center_mm[2] + reach,
            ]);
            NoduleRoi {
                center_voxel,
                bounds: RoiBox::new(
                    lo,
                    [hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1],
                ),
                radius_mm: n.radius_mm,
                part_solid: n.part_solid,
            }
        })
        .collect();

    let volume = Volume::new(
        spec.dims,
        [PHANTOM_SLICE_MM, spec.pixel_mm, spec.pixel_mm],
        voxels,
    )?;
    Ok(Phantom {
        volume,
        nodules,
        lung_weight,
    })
}
