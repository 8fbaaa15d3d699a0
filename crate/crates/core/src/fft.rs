//! Unitary 2D discrete Fourier transform.
//!
//! Spectra are kept in natural FFT order (zero frequency at index 0); the
//! frequency of bin `k` is `k / (n d)` for `k < n/2` and `(k - n) / (n d)`
//! otherwise, covering `{-n/2, ..., n/2 - 1} / (n d)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::Result;
use crate::field::Field2D;

type Plan = Arc<dyn Fft<f64>>;
type PlanCache = Mutex<(FftPlanner<f64>, HashMap<(usize, bool), Plan>)>;

fn plan(n: usize, inverse: bool) -> Plan {
    static CACHE: OnceLock<PlanCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    let (planner, plans) = &mut *guard;
    plans
        .entry((n, inverse))
        .or_insert_with(|| {
            if inverse {
                planner.plan_fft_inverse(n)
            } else {
                planner.plan_fft_forward(n)
            }
        })
        .clone()
}

/// Reusable row/column plans for one array shape.
#[derive(Clone)]
pub struct Fft2 {
    ny: usize,
    nx: usize,
    rows: Plan,
    cols: Plan,
    scale: f64,
}

impl Fft2 {
    pub fn forward(ny: usize, nx: usize) -> Self {
        Self::build(ny, nx, false)
    }

    pub fn inverse(ny: usize, nx: usize) -> Self {
        Self::build(ny, nx, true)
    }

    fn build(ny: usize, nx: usize, inverse: bool) -> Self {
        Fft2 {
            ny,
            nx,
            rows: plan(nx, inverse),
            cols: plan(ny, inverse),
            scale: 1.0 / ((nx * ny) as f64).sqrt(),
        }
    }

    /// Transforms `data` in place, including the `1/sqrt(N)` factor.
    pub fn process(&self, data: &mut Array2<Complex64>) {
        assert_eq!(data.dim(), (self.ny, self.nx));
        if !data.is_standard_layout() {
            *data = data.as_standard_layout().into_owned();
        }
        let flat = data.as_slice_mut().expect("standard layout");
        self.rows.process(flat);

        let mut column = vec![Complex64::new(0.0, 0.0); self.ny];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.cols.get_inplace_scratch_len()];
        for mut col in data.axis_iter_mut(Axis(1)) {
            for (dst, src) in column.iter_mut().zip(col.iter()) {
                *dst = *src;
            }
            self.cols.process_with_scratch(&mut column, &mut scratch);
            for (dst, src) in col.iter_mut().zip(column.iter()) {
                *dst = *src * self.scale;
            }
        }
    }
}

/// Frequencies of the bins of an `n`-point axis with pitch `d`, in cycles per unit length.
pub fn frequency_axis(n: usize, d: f64) -> Vec<f64> {
    (0..n).map(|k| signed_bin(k, n) as f64 / (n as f64 * d)).collect()
}

/// Signed bin number of index `k` in natural FFT order.
pub fn signed_bin(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Array index of a signed bin number.
pub fn bin_index(bin: i64, n: usize) -> usize {
    bin.rem_euclid(n as i64) as usize
}

pub fn dft2_forward(f: &Field2D) -> Result<Field2D> {
    f.check_finite()?;
    let g = *f.grid();
    let mut data = f.values().to_owned();
    Fft2::forward(g.ny, g.nx).process(&mut data);
    Ok(Field2D::from_parts(g, data))
}

pub fn dft2_inverse(spectrum: &Field2D) -> Result<Field2D> {
    spectrum.check_finite()?;
    let g = *spectrum.grid();
    let mut data = spectrum.values().to_owned();
    Fft2::inverse(g.ny, g.nx).process(&mut data);
    Ok(Field2D::from_parts(g, data))
}
