#![allow(dead_code)]

use holotomo::field::{AxialBox, Field2D, FieldVolume, GridSpec};
use holotomo::phantom::{CellSpec, PhantomSpec};
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cnormal(r: &mut ChaCha8Rng) -> Complex64 {
    let a: f64 = StandardNormal.sample(r);
    let b: f64 = StandardNormal.sample(r);
    Complex64::new(a, b)
}

pub fn grid(n: usize, dx: f64) -> GridSpec {
    GridSpec::new(n, n, dx, dx, 0.75, 0.65, 0.75, 40.0).unwrap()
}

pub fn random_field(g: GridSpec, r: &mut ChaCha8Rng) -> Field2D {
    let vals = Array2::from_shape_simple_fn((g.ny, g.nx), || cnormal(r));
    Field2D::new(g, vals).unwrap()
}

pub fn random_volume(g: GridSpec, axial: AxialBox, r: &mut ChaCha8Rng) -> FieldVolume {
    let vals = Array3::from_shape_simple_fn((axial.nz, g.ny, g.nx), || cnormal(r));
    FieldVolume::new(g, axial.z_center, vals).unwrap()
}

/// 64x64x5 scene with 0.25 um pixels and one disc in the central slices.
pub fn small_scene() -> PhantomSpec {
    PhantomSpec {
        cells: vec![CellSpec::disc((0.0, 0.0), 3.0, (1, 3))],
        grid: grid(64, 0.25),
        axial: AxialBox::new(5, 9.0, 0.75).unwrap(),
    }
}
