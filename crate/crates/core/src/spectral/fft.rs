//! Discrete Fourier transforms of real signals.
//!
//! Power-of-two lengths use an iterative radix-2 transform; every other length
//! goes through Bluestein's chirp-z reformulation on a power-of-two
//! convolution, so the output bins are those of the unpadded length-`n` DFT.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::rc::Rc;

use num_complex::Complex64;

use super::Spectrum;

/// Precomputed twiddles (and, for non-power-of-two sizes, the chirp) for one length.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    kind: PlanKind,
}

#[derive(Debug, Clone)]
enum PlanKind {
    Radix2 {
        twiddles: Vec<Complex64>,
    },
    Bluestein {
        inner: Box<FftPlan>,
        /// `exp(-i pi k^2 / n)` for `k < n`
        chirp: Vec<Complex64>,
        /// forward transform of the conjugate chirp, laid out circularly
        kernel_hat: Vec<Complex64>,
    },
}

impl FftPlan {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "transform length must be at least 1");
        if n.is_power_of_two() {
            let twiddles = (0..n / 2)
                .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
                .collect();
            return FftPlan {
                n,
                kind: PlanKind::Radix2 { twiddles },
            };
        }
        let m = (2 * n - 1).next_power_of_two();
        let inner = FftPlan::new(m);
        // k^2 mod 2n keeps the phase argument small and exact
        let chirp: Vec<Complex64> = (0..n)
            .map(|k| {
                let k2 = (k as u128 * k as u128 % (2 * n as u128)) as f64;
                Complex64::from_polar(1.0, -PI * k2 / n as f64)
            })
            .collect();
        let mut kernel = vec![Complex64::new(0.0, 0.0); m];
        kernel[0] = chirp[0].conj();
        for k in 1..n {
            kernel[k] = chirp[k].conj();
            kernel[m - k] = chirp[k].conj();
        }
        inner.process(&mut kernel);
        FftPlan {
            n,
            kind: PlanKind::Bluestein {
                inner: Box::new(inner),
                chirp,
                kernel_hat: kernel,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place forward transform, `X[k] = sum_j x[j] exp(-2 pi i j k / n)`.
    pub fn process(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.n, "buffer length does not match plan");
        match &self.kind {
            PlanKind::Radix2 { twiddles } => radix2(data, twiddles),
            PlanKind::Bluestein {
                inner,
                chirp,
                kernel_hat,
            } => {
                let m = inner.n;
                let mut work = vec![Complex64::new(0.0, 0.0); m];
                for (k, (w, &x)) in work.iter_mut().zip(data.iter()).enumerate() {
                    *w = x * chirp[k];
                }
                inner.process(&mut work);
                for (w, &h) in work.iter_mut().zip(kernel_hat) {
                    *w *= h;
                }
                inverse_in_place(inner, &mut work);
                for (k, x) in data.iter_mut().enumerate() {
                    *x = work[k] * chirp[k];
                }
            }
        }
    }
}

fn inverse_in_place(plan: &FftPlan, data: &mut [Complex64]) {
    data.iter_mut().for_each(|x| *x = x.conj());
    plan.process(data);
    let scale = 1.0 / data.len() as f64;
    data.iter_mut().for_each(|x| *x = x.conj() * scale);
}

fn radix2(data: &mut [Complex64], twiddles: &[Complex64]) {
    let n = data.len();
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            data.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = twiddles[k * stride];
                let a = data[start + k];
                let b = data[start + k + half] * w;
                data[start + k] = a + b;
                data[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

thread_local! {
    static PLANS: RefCell<HashMap<usize, Rc<FftPlan>>> = RefCell::new(HashMap::new());
}

/// Cached plan for length `n`, per thread.
pub fn plan_for(n: usize) -> Rc<FftPlan> {
    PLANS.with(|plans| {
        plans
            .borrow_mut()
            .entry(n)
            .or_insert_with(|| Rc::new(FftPlan::new(n)))
            .clone()
    })
}

/// Full complex DFT of a real signal.
pub fn fft_full(signal: &[f64]) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    plan_for(signal.len()).process(&mut data);
    data
}

/// One-sided spectrum of a real signal sampled every `dt` seconds.
pub fn fft(signal: &[f64], dt: f64) -> Spectrum {
    assert!(!signal.is_empty(), "fft of an empty signal");
    let n = signal.len();
    let mut full = fft_full(signal);
    full.truncate(n / 2 + 1);
    Spectrum::from_bins(n, dt, full)
}

/// Direct `O(n^2)` evaluation of the one-sided DFT.
pub fn dft_naive(signal: &[f64], dt: f64) -> Spectrum {
    assert!(!signal.is_empty(), "dft of an empty signal");
    let n = signal.len();
    let bins = (0..=n / 2)
        .map(|k| {
            signal
                .iter()
                .enumerate()
                .map(|(j, &x)| {
                    // reduce j*k mod n before scaling so the angle stays in [0, 2 pi)
                    let phase = ((j * k) % n) as f64 / n as f64;
                    Complex64::from_polar(x, -2.0 * PI * phase)
                })
                .sum()
        })
        .collect();
    Spectrum::from_bins(n, dt, bins)
}
