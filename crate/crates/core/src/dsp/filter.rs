//! Bandpass IIR design (Butterworth and Bessel prototypes, bilinear transform
//! with prewarping) and zero-phase forward-backward filtering.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::DspError;
use crate::signal::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterKind {
    Bessel,
    Butterworth,
}

/// One second-order section in transposed direct form II.
/// Denominator is `1 + a[0] z^-1 + a[1] z^-2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let num = self.b[0] + z_inv * (self.b[1] + z_inv * self.b[2]);
        let den = 1.0 + z_inv * (self.a[0] + z_inv * self.a[1]);
        num / den
    }

    /// Roots of the denominator.
    pub fn poles(&self) -> [Complex64; 2] {
        let (a1, a2) = (self.a[0], self.a[1]);
        let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
        [(-a1 + disc) / 2.0, (-a1 - disc) / 2.0]
    }

    /// Initial state for a unit-step steady state.
    fn step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let z2 = self.b[2] - self.a[1] * g;
        let z1 = self.b[1] - self.a[0] * g + z2;
        [z1, z2]
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    fn run(&self, x: &mut [f64], mut state: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        for v in x.iter_mut() {
            let input = *v;
            let y = b0 * input + state[0];
            state[0] = b1 * input - a1 * y + state[1];
            state[1] = b2 * input - a2 * y;
            *v = y;
        }
    }
}

/// Bandpass biquad cascade plus its design metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct IirFilter {
    sections: Vec<Biquad>,
    kind: FilterKind,
    low_hz: f64,
    high_hz: f64,
    order: usize,
    fs: f64,
}

impl IirFilter {
    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    pub fn band(&self) -> (f64, f64) {
        (self.low_hz, self.high_hz)
    }

    /// Order of the analog lowpass prototype.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(|s| s.poles()).collect()
    }

    /// Complex frequency response at `f_hz`.
    pub fn response(&self, f_hz: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * f_hz / self.fs);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    /// Single causal pass with zero initial state.
    pub fn apply_causal(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            s.run(&mut y, [0.0, 0.0]);
        }
        y
    }

    pub fn impulse_response(&self, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        if n > 0 {
            x[0] = 1.0;
        }
        self.apply_causal(&x)
    }

    /// Reflection length used at each edge by [`filtfilt`].
    pub fn pad_len(&self) -> usize {
        3 * (2 * self.sections.len() + 1)
    }

    /// Samples averaged to seed [`filtfilt`]: one period of the lower band
    /// edge, so oscillations inside the band average out.
    pub fn level_len(&self) -> usize {
        ((self.fs() / self.band().0).round() as usize).max(self.pad_len())
    }

    /// Cascade pass whose initial state is the steady state for a constant
    /// input equal to the mean of the leading `level_len` samples.
    fn run_with_steady_state(&self, x: &mut [f64]) {
        let head = &x[..self.level_len().min(x.len())];
        let mut level = head.iter().sum::<f64>() / head.len() as f64;
        for s in &self.sections {
            let zi = s.step_state();
            s.run(x, [zi[0] * level, zi[1] * level]);
            level *= s.dc_gain();
        }
    }
}

/// Designs a bandpass filter from an order-`order` analog lowpass prototype.
pub fn design_bandpass(
    kind: FilterKind,
    low_hz: f64,
    high_hz: f64,
    order: usize,
    fs: f64,
) -> Result<IirFilter, DspError> {
    if !(fs.is_finite() && fs > 0.0) {
        return Err(DspError::InvalidRate(fs));
    }
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0) {
        return Err(DspError::InvalidBand {
            low: low_hz,
            high: high_hz,
            fs,
        });
    }
    if order < 2 || order % 2 != 0 {
        return Err(DspError::InvalidOrder(order));
    }

    let prototype = match kind {
        FilterKind::Butterworth => butterworth_poles(order),
        FilterKind::Bessel => bessel_poles(order)?,
    };

    let warp = |f: f64| 2.0 * fs * (PI * f / fs).tan();
    let (wl, wh) = (warp(low_hz), warp(high_hz));
    let bw = wh - wl;
    let w0_sq = wl * wh;

    let mut analog = Vec::with_capacity(2 * order);
    for p in prototype {
        let q = p * (bw / 2.0);
        let d = (q * q - w0_sq).sqrt();
        analog.push(q + d);
        analog.push(q - d);
    }
    let two_fs = 2.0 * fs;
    let digital: Vec<Complex64> = analog.iter().map(|&s| (two_fs + s) / (two_fs - s)).collect();
    if digital.iter().any(|p| !p.norm().is_finite() || p.norm() >= 1.0) {
        return Err(DspError::NumericalInstability);
    }

    let mut sections: Vec<Biquad> = pair_conjugates(&digital)
        .into_iter()
        .map(|(p, q)| Biquad {
            // one zero at z = 1 and one at z = -1 per section
            b: [1.0, 0.0, -1.0],
            a: [-(p + q).re, (p * q).re],
        })
        .collect();

    let mut filter = IirFilter {
        sections: Vec::new(),
        kind,
        low_hz,
        high_hz,
        order,
        fs,
    };
    // unit gain at the geometric band centre
    let centre_hz = (w0_sq.sqrt() / two_fs).atan() * fs / PI;
    filter.sections = sections.clone();
    let gain = filter.response(centre_hz).norm();
    if !(gain.is_finite() && gain > 0.0) {
        return Err(DspError::NumericalInstability);
    }
    let per_section = gain.powf(-1.0 / sections.len() as f64);
    for s in &mut sections {
        for b in &mut s.b {
            *b *= per_section;
        }
    }
    filter.sections = sections;
    Ok(filter)
}

fn pair_conjugates(poles: &[Complex64]) -> Vec<(Complex64, Complex64)> {
    const IMAG_TOL: f64 = 1e-12;
    let mut upper: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > IMAG_TOL).collect();
    let mut real: Vec<f64> = poles
        .iter()
        .filter(|p| p.im.abs() <= IMAG_TOL)
        .map(|p| p.re)
        .collect();
    upper.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    real.sort_by(f64::total_cmp);
    let mut pairs: Vec<(Complex64, Complex64)> = upper.into_iter().map(|p| (p, p.conj())).collect();
    for chunk in real.chunks(2) {
        let p = Complex64::new(chunk[0], 0.0);
        let q = Complex64::new(*chunk.get(1).unwrap_or(&0.0), 0.0);
        pairs.push((p, q));
    }
    pairs
}

/// Butterworth prototype poles, unit cutoff.
pub fn butterworth_poles(order: usize) -> Vec<Complex64> {
    let n = order as f64;
    (1..=order)
        .map(|k| Complex64::from_polar(1.0, PI * (2.0 * k as f64 + n - 1.0) / (2.0 * n)))
        .collect()
}

/// Coefficients of the reverse Bessel polynomial, lowest degree first.
pub fn reverse_bessel_coefficients(order: usize) -> Vec<f64> {
    // a_k = (2n-k)! / (2^(n-k) k! (n-k)!), built by the ratio a_{k+1}/a_k
    let n = order as f64;
    let mut coeffs = Vec::with_capacity(order + 1);
    let mut a = 1.0;
    for i in 0..order {
        // a_0 = (2n)! / (2^n n!) = product of the odd numbers up to 2n-1
        a *= (2 * i + 1) as f64;
    }
    coeffs.push(a);
    for k in 0..order {
        let k = k as f64;
        a *= 2.0 * (n - k) / ((2.0 * n - k) * (k + 1.0));
        coeffs.push(a);
    }
    coeffs
}

/// Bessel prototype poles normalized to a -3 dB cutoff at 1 rad/s.
pub fn bessel_poles(order: usize) -> Result<Vec<Complex64>, DspError> {
    let coeffs = reverse_bessel_coefficients(order);
    let roots = durand_kerner(&coeffs, 1e-12, 2000).ok_or(DspError::NumericalInstability)?;
    let theta0 = coeffs[0];
    let mag_sq = |w: f64| {
        let s = Complex64::new(0.0, w);
        let v = coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c);
        (theta0 / v.norm()).powi(2)
    };
    let (mut lo, mut hi) = (1e-3_f64, 1e3_f64);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if mag_sq(mid) > 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let cutoff = (lo * hi).sqrt();
    Ok(roots.into_iter().map(|r| r / cutoff).collect())
}

/// Simultaneous root finding for a monic polynomial (coefficients lowest
/// degree first, leading coefficient normalized internally).
fn durand_kerner(coeffs: &[f64], tol: f64, max_iter: usize) -> Option<Vec<Complex64>> {
    let degree = coeffs.len() - 1;
    let lead = coeffs[degree];
    let monic: Vec<f64> = coeffs.iter().map(|c| c / lead).collect();
    let eval = |z: Complex64| {
        monic
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    };
    // Scale the starting circle by the root magnitude bound.
    let radius = 1.0 + monic[..degree].iter().map(|c| c.abs()).fold(0.0, f64::max);
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..degree)
        .map(|k| seed.powu(k as u32) * (radius / 2.0).min(10.0))
        .collect();
    for _ in 0..max_iter {
        let mut max_step: f64 = 0.0;
        for i in 0..degree {
            let zi = roots[i];
            let denom = (0..degree)
                .filter(|&j| j != i)
                .fold(Complex64::new(1.0, 0.0), |acc, j| acc * (zi - roots[j]));
            let step = eval(zi) / denom;
            roots[i] = zi - step;
            max_step = max_step.max(step.norm() / roots[i].norm().max(1.0));
        }
        if max_step < tol {
            return Some(roots);
        }
    }
    None
}

/// Zero-phase forward-backward filtering with mirror-reflection edge padding.
/// Each pass starts in the steady state of the mean over its leading
/// [`IirFilter::level_len`] samples; seeding from a single edge sample, or a
/// short window, leaves a slow transient from the lowest poles.
pub fn filtfilt(filter: &IirFilter, x: &TimeSeries) -> Result<TimeSeries, DspError> {
    let data = x.samples();
    let n = data.len();
    let pad = filter.pad_len();
    if n <= pad {
        return Err(DspError::SignalTooShort {
            len: n,
            required: pad + 1,
        });
    }
    // mirror reflection without repeating the edge sample
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| data[i]));
    ext.extend_from_slice(data);
    ext.extend((1..=pad).map(|i| data[n - 1 - i]));

    filter.run_with_steady_state(&mut ext);
    ext.reverse();
    filter.run_with_steady_state(&mut ext);
    ext.reverse();

    Ok(x.with_samples(ext[pad..pad + n].to_vec())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::TARGET_FS;

    /// DTFT of a truncated impulse response, evaluated at `f_hz`.
    fn dft_magnitude(h: &[f64], f_hz: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f_hz / fs;
        let (mut re, mut im) = (0.0, 0.0);
        for (k, v) in h.iter().enumerate() {
            re += v * (w * k as f64).cos();
            im -= v * (w * k as f64).sin();
        }
        re.hypot(im)
    }

    fn sine(f: f64, secs: f64, fs: f64) -> TimeSeries {
        let n = (secs * fs).round() as usize;
        let s = (0..n).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect();
        TimeSeries::new(s, fs).unwrap()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn reverse_bessel_coefficients_match_factorial_formula() {
        fn fact(n: u64) -> f64 {
            (1..=n).map(|v| v as f64).product()
        }
        for n in 1..=6u64 {
            let c = reverse_bessel_coefficients(n as usize);
            for k in 0..=n {
                let expect = fact(2 * n - k) / (2f64.powi((n - k) as i32) * fact(k) * fact(n - k));
                assert!((c[k as usize] - expect).abs() < 1e-9 * expect, "n={n} k={k}");
            }
        }
        assert_eq!(reverse_bessel_coefficients(4), vec![105.0, 105.0, 45.0, 10.0, 1.0]);
    }

    #[test]
    fn bessel_prototype_is_minus_3db_at_unity() {
        for order in [2, 4, 6] {
            let poles = bessel_poles(order).unwrap();
            let s = Complex64::new(0.0, 1.0);
            let dc: Complex64 = poles.iter().map(|p| -p).product();
            let h: Complex64 = dc / poles.iter().map(|p| s - p).product::<Complex64>();
            assert!((h.norm_sqr() - 0.5).abs() < 1e-9, "order {order}");
            assert!(poles.iter().all(|p| p.re < 0.0));
        }
    }

    #[test]
    fn butterworth_response_against_impulse_dft() {
        let f = design_bandpass(FilterKind::Butterworth, 0.1, 50.0, 4, TARGET_FS).unwrap();
        let h = f.impulse_response(8192);
        let peak = (1..1420)
            .map(|i| dft_magnitude(&h, i as f64 * 0.1, TARGET_FS))
            .fold(0.0, f64::max);
        let at10 = dft_magnitude(&h, 10.0, TARGET_FS) / peak;
        assert!((0.95..=1.0 + 1e-9).contains(&at10), "{at10}");
        let at100 = dft_magnitude(&h, 100.0, TARGET_FS) / peak;
        assert!(at100 <= 0.05, "{at100}");
        // analytic response agrees with the DFT route
        for fq in [10.0, 60.0, 100.0] {
            let a = f.response(fq).norm();
            let b = dft_magnitude(&h, fq, TARGET_FS);
            assert!((a - b).abs() < 1e-5, "{fq}: {a} vs {b}");
        }
    }

    #[test]
    fn bessel_poles_stable() {
        let f = design_bandpass(FilterKind::Bessel, 0.1, 50.0, 4, TARGET_FS).unwrap();
        assert_eq!(f.sections().len(), 4);
        assert!(f.poles().iter().all(|p| p.norm() < 1.0));
    }

    #[test]
    fn design_rejects_bad_parameters() {
        assert!(matches!(
            design_bandpass(FilterKind::Butterworth, 60.0, 50.0, 4, TARGET_FS),
            Err(DspError::InvalidBand { .. })
        ));
        assert!(matches!(
            design_bandpass(FilterKind::Butterworth, 1.0, 150.0, 4, TARGET_FS),
            Err(DspError::InvalidBand { .. })
        ));
        assert!(matches!(
            design_bandpass(FilterKind::Bessel, 1.0, 50.0, 3, TARGET_FS),
            Err(DspError::InvalidOrder(3))
        ));
    }

    #[test]
    fn filtfilt_passes_10hz_with_zero_lag() {
        let f = design_bandpass(FilterKind::Butterworth, 0.1, 50.0, 4, TARGET_FS).unwrap();
        let x = sine(10.0, 2.0, TARGET_FS);
        let y = filtfilt(&f, &x).unwrap();
        assert_eq!(y.len(), x.len());
        // amplitude via DFT projection at 10 Hz (20 whole cycles)
        let amp = |s: &[f64]| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in s.iter().enumerate() {
                let ph = 2.0 * PI * 10.0 * i as f64 / TARGET_FS;
                re += v * ph.cos();
                im += v * ph.sin();
            }
            2.0 * re.hypot(im) / s.len() as f64
        };
        let ratio = amp(y.samples()) / amp(x.samples());
        assert!((0.9..=1.0 + 1e-6).contains(&ratio), "{ratio}");
        let xs = x.samples();
        let ys = y.samples();
        let corr = |lag: isize| -> f64 {
            let mut acc = 0.0;
            for i in 0..xs.len() as isize {
                let j = i + lag;
                if j >= 0 && (j as usize) < ys.len() {
                    acc += xs[i as usize] * ys[j as usize];
                }
            }
            acc
        };
        let best = (-10..=10).max_by(|&a, &b| corr(a).total_cmp(&corr(b))).unwrap();
        assert_eq!(best, 0);
        let r0 = corr(0) / (rms(xs) * rms(ys) * xs.len() as f64);
        assert!(r0 >= 0.99, "{r0}");
    }

    #[test]
    fn filtfilt_attenuates_60hz() {
        let f = design_bandpass(FilterKind::Butterworth, 0.1, 50.0, 4, TARGET_FS).unwrap();
        let single = f.response(60.0).norm();
        assert!(single <= 0.6);
        let x = sine(60.0, 2.0, TARGET_FS);
        let y = filtfilt(&f, &x).unwrap();
        let ratio = rms(y.samples()) / rms(x.samples());
        assert!(ratio <= 0.35, "{ratio}");
        assert!((ratio - single * single).abs() < 0.05, "{ratio} vs {}", single * single);
    }

    #[test]
    fn filtfilt_zero_and_short_inputs() {
        let f = design_bandpass(FilterKind::Bessel, 0.1, 50.0, 4, TARGET_FS).unwrap();
        let z = TimeSeries::new(vec![0.0; 300], TARGET_FS).unwrap();
        assert!(filtfilt(&f, &z).unwrap().samples().iter().all(|&v| v == 0.0));
        let short = TimeSeries::new(vec![1.0; 10], TARGET_FS).unwrap();
        assert!(matches!(filtfilt(&f, &short), Err(DspError::SignalTooShort { .. })));
    }
}
