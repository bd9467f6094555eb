use std::sync::Arc;

use ndarray::{Array3, Axis};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

/// Planned 3D complex FFT over a fixed shape.
///
/// The inverse is normalized by `1/N`, so `inverse(forward(x)) == x`.
pub(crate) struct Fft3 {
    shape: (usize, usize, usize),
    fwd: [Arc<dyn Fft<f64>>; 3],
    inv: [Arc<dyn Fft<f64>>; 3],
}

impl Fft3 {
    pub fn new(shape: (usize, usize, usize)) -> Self {
        let mut planner = FftPlanner::new();
        let dims = [shape.0, shape.1, shape.2];
        let fwd = dims.map(|n| planner.plan_fft(n, FftDirection::Forward));
        let inv = dims.map(|n| planner.plan_fft(n, FftDirection::Inverse));
        Self { shape, fwd, inv }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.shape
    }

    pub fn forward(&self, data: &mut Array3<Complex64>) {
        self.run(data, &self.fwd);
    }

    pub fn inverse(&self, data: &mut Array3<Complex64>) {
        self.run(data, &self.inv);
        let scale = 1.0 / data.len() as f64;
        data.par_mapv_inplace(|v| v * scale);
    }

    fn run(&self, data: &mut Array3<Complex64>, plans: &[Arc<dyn Fft<f64>>; 3]) {
        assert_eq!(data.dim(), self.shape, "fft shape mismatch");
        assert!(data.is_standard_layout());
        let (n0, n1, n2) = self.shape;

        let plan = &plans[2];
        data.as_slice_mut()
            .expect("standard layout")
            .par_chunks_mut(n2 * 64)
            .for_each(|chunk| {
                let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
                plan.process_with_scratch(chunk, &mut scratch);
            });

        let plan = &plans[1];
        data.axis_iter_mut(Axis(0))
            .into_par_iter()
            .for_each(|mut slab| {
                let mut lane = vec![Complex64::default(); n1];
                let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
                for k in 0..n2 {
                    for (j, v) in lane.iter_mut().enumerate() {
                        *v = slab[[j, k]];
                    }
                    plan.process_with_scratch(&mut lane, &mut scratch);
                    for (j, v) in lane.iter().enumerate() {
                        slab[[j, k]] = *v;
                    }
                }
            });

        let plan = &plans[0];
        data.axis_iter_mut(Axis(1))
            .into_par_iter()
            .for_each(|mut slab| {
                let mut lane = vec![Complex64::default(); n0];
                let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
                for k in 0..n2 {
                    for (i, v) in lane.iter_mut().enumerate() {
                        *v = slab[[i, k]];
                    }
                    plan.process_with_scratch(&mut lane, &mut scratch);
                    for (i, v) in lane.iter().enumerate() {
                        slab[[i, k]] = *v;
                    }
                }
            });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(x: &Array3<Complex64>) -> Array3<Complex64> {
        let (n0, n1, n2) = x.dim();
        let mut out = Array3::zeros(x.dim());
        let tau = std::f64::consts::TAU;
        for ((a, b, c), o) in out.indexed_iter_mut() {
            let mut acc = Complex64::default();
            for ((i, j, k), v) in x.indexed_iter() {
                let phase = -tau
                    * ((a * i) as f64 / n0 as f64
                        + (b * j) as f64 / n1 as f64
                        + (c * k) as f64 / n2 as f64);
                acc += v * Complex64::from_polar(1.0, phase);
            }
            *o = acc;
        }
        out
    }

    #[test]
    fn matches_naive_dft() {
        let shape = (4, 3, 6);
        let x = Array3::from_shape_fn(shape, |(i, j, k)| {
            Complex64::new((i * 7 + j * 3 + k) as f64 % 5.0 - 2.0, (i + 2 * k) as f64 * 0.1)
        });
        let want = naive_dft(&x);
        let mut got = x.clone();
        let fft = Fft3::new(shape);
        fft.forward(&mut got);
        for (a, b) in got.iter().zip(want.iter()) {
            assert!((a - b).norm() < 1e-9, "{a} vs {b}");
        }
        fft.inverse(&mut got);
        for (a, b) in got.iter().zip(x.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
