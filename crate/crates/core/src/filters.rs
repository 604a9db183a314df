//! Filter primitives: Butterworth low-pass cascades, root-raised-cosine taps
//! and FFT-based linear convolution.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Second-order section in transposed direct form II.
#[derive(Debug, Clone, Copy)]
struct Section {
    b: [f64; 3],
    a: [f64; 2],
}

impl Section {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }
}

/// Digital Butterworth low-pass obtained by the prewarped bilinear transform.
/// Order zero is the identity (flat response).
#[derive(Debug, Clone)]
pub struct Butterworth {
    sections: Vec<Section>,
    order: usize,
}

impl Butterworth {
    pub fn lowpass(order: usize, cutoff_hz: f64, sample_rate_hz: f64) -> Result<Self> {
        if order == 0 {
            return Ok(Self {
                sections: Vec::new(),
                order,
            });
        }
        if !(cutoff_hz > 0.0 && cutoff_hz < sample_rate_hz / 2.0) {
            return Err(Error::Config(format!(
                "filter cutoff {cutoff_hz} Hz must lie in (0, {}) Hz",
                sample_rate_hz / 2.0
            )));
        }
        let k = (PI * cutoff_hz / sample_rate_hz).tan();
        let k2 = k * k;
        let mut sections = Vec::with_capacity(order.div_ceil(2));
        for i in 0..order / 2 {
            let q = 1.0 / (2.0 * ((2 * i + 1) as f64 * PI / (2 * order) as f64).sin());
            let norm = 1.0 / (1.0 + k / q + k2);
            let b0 = k2 * norm;
            sections.push(Section {
                b: [b0, 2.0 * b0, b0],
                a: [2.0 * (k2 - 1.0) * norm, (1.0 - k / q + k2) * norm],
            });
        }
        if order % 2 == 1 {
            let norm = 1.0 / (1.0 + k);
            sections.push(Section {
                b: [k * norm, k * norm, 0.0],
                a: [(k - 1.0) * norm, 0.0],
            });
        }
        Ok(Self { sections, order })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Magnitude response at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / sample_rate_hz;
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        self.sections
            .iter()
            .map(|s| {
                let num = s.b[0] + z1 * s.b[1] + z2 * s.b[2];
                let den = 1.0 + z1 * s.a[0] + z2 * s.a[1];
                (num / den).norm()
            })
            .product()
    }

    /// Causal filtering of a real sequence, zero initial state.
    pub fn filter_real(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        self.run(&mut y, 0.0);
        y
    }

    /// Causal filtering of a complex sequence (real coefficients).
    pub fn filter_complex(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = x.to_vec();
        self.run(&mut y, Complex64::new(0.0, 0.0));
        y
    }

    /// Zero-phase forward-backward filtering with odd-reflection padding.
    pub fn filtfilt_real(&self, x: &[f64]) -> Vec<f64> {
        self.filtfilt(x)
    }

    pub fn filtfilt_complex(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.filtfilt(x)
    }

    fn filtfilt<T: Sample>(&self, x: &[T]) -> Vec<T> {
        if self.sections.is_empty() || x.is_empty() {
            return x.to_vec();
        }
        let n = x.len();
        let pad = (3 * (2 * self.sections.len() + 1)).max(64).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        for i in (1..=pad).rev() {
            ext.push(x[0] * 2.0 - x[i]);
        }
        ext.extend_from_slice(x);
        for i in 1..=pad {
            ext.push(x[n - 1] * 2.0 - x[n - 1 - i]);
        }
        let init = ext[0];
        self.run(&mut ext, init);
        ext.reverse();
        let init = ext[0];
        self.run(&mut ext, init);
        ext.reverse();
        ext.truncate(pad + n);
        ext.drain(..pad);
        ext
    }

    /// Run the cascade in place. States start at the steady state for a
    /// constant input equal to `init` (zero gives a rest start).
    fn run<T: Sample>(&self, y: &mut [T], init: T) {
        let ns = self.sections.len();
        if ns == 0 {
            return;
        }
        let mut z = vec![(T::zero(), T::zero()); ns];
        let mut level = init;
        for (s, st) in self.sections.iter().zip(z.iter_mut()) {
            let out = level * s.dc_gain();
            let z2 = level * s.b[2] - out * s.a[1];
            *st = (level * s.b[1] - out * s.a[0] + z2, z2);
            level = out;
        }
        for v in y.iter_mut() {
            let mut x = *v;
            for (s, st) in self.sections.iter().zip(z.iter_mut()) {
                let out = x * s.b[0] + st.0;
                st.0 = x * s.b[1] - out * s.a[0] + st.1;
                st.1 = x * s.b[2] - out * s.a[1];
                x = out;
            }
            *v = x;
        }
    }
}

/// Scalar types the filters operate on.
trait Sample:
    Copy + std::ops::Add<Output = Self> + std::ops::Sub<Output = Self> + std::ops::Mul<f64, Output = Self>
{
    fn zero() -> Self;
}

impl Sample for f64 {
    fn zero() -> Self {
        0.0
    }
}

impl Sample for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
}

/// Root-raised-cosine taps spanning `span_symbols` symbols, unit energy.
pub fn rrc_taps(rolloff: f64, sps: usize, span_symbols: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&rolloff) {
        return Err(Error::InvalidArgument(format!("roll-off {rolloff} outside [0, 1]")));
    }
    if sps == 0 || span_symbols == 0 {
        return Err(Error::InvalidArgument("RRC needs sps and span > 0".into()));
    }
    let half = (span_symbols * sps / 2) as isize;
    let b = rolloff;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|i| {
            let t = i as f64 / sps as f64;
            if i == 0 {
                1.0 - b + 4.0 * b / PI
            } else if b > 0.0 && ((4.0 * b * t).abs() - 1.0).abs() < 1e-9 {
                b / 2f64.sqrt()
                    * ((1.0 + 2.0 / PI) * (PI / (4.0 * b)).sin() + (1.0 - 2.0 / PI) * (PI / (4.0 * b)).cos())
            } else {
                let num = (PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos();
                let den = PI * t * (1.0 - (4.0 * b * t).powi(2));
                num / den
            }
        })
        .collect();
    let energy: f64 = taps.iter().map(|h| h * h).sum();
    let norm = energy.sqrt();
    taps.iter_mut().for_each(|h| *h /= norm);
    Ok(taps)
}

/// Full linear convolution of a complex sequence with real taps, computed by
/// blocked overlap-add FFTs.
pub fn fft_convolve(x: &[Complex64], h: &[f64]) -> Vec<Complex64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let out_len = x.len() + h.len() - 1;
    let n = (4 * h.len()).next_power_of_two().max(64);
    let block = n - h.len() + 1;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut hf = vec![Complex64::new(0.0, 0.0); n];
    let scale = 1.0 / n as f64;
    for (d, &v) in hf.iter_mut().zip(h) {
        *d = Complex64::new(v * scale, 0.0);
    }
    fwd.process(&mut hf);
    let mut y = vec![Complex64::new(0.0, 0.0); out_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())];
    for start in (0..x.len()).step_by(block) {
        let end = (start + block).min(x.len());
        buf[..end - start].copy_from_slice(&x[start..end]);
        buf[end - start..]
            .iter_mut()
            .for_each(|v| *v = Complex64::new(0.0, 0.0));
        fwd.process_with_scratch(&mut buf, &mut scratch);
        for (a, b) in buf.iter_mut().zip(&hf) {
            *a *= b;
        }
        inv.process_with_scratch(&mut buf, &mut scratch);
        let valid = (end - start + h.len() - 1).min(out_len - start);
        for (o, v) in y[start..start + valid].iter_mut().zip(&buf[..valid]) {
            *o += v;
        }
    }
    y
}

/// Convolution trimmed to the input length with the filter delay removed
/// (odd-length, symmetric taps).
pub fn fft_filter_centered(x: &[Complex64], h: &[f64]) -> Vec<Complex64> {
    let delay = h.len() / 2;
    let mut full = fft_convolve(x, h);
    full.truncate(delay + x.len());
    full.drain(..delay);
    full
}

/// e^{j(φ0 + w·k)} for k = 0..n, by a recursive phasor renormalised in blocks.
pub fn phasor(n: usize, w: f64, phi0: f64) -> Vec<Complex64> {
    let step = Complex64::from_polar(1.0, w);
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    while k < n {
        let mut p = Complex64::from_polar(1.0, phi0 + w * k as f64);
        for _ in 0..(n - k).min(256) {
            out.push(p);
            p *= step;
        }
        k += 256;
    }
    out
}
