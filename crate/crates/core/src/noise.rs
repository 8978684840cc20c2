//! Complex Gaussian Ito increments with reproducible, order-independent streams.
//!
//! Each `(seed, stream_id)` pair selects a distinct ChaCha20 stream, so a
//! trajectory's noise path depends only on its id and never on which worker
//! ran it or in what order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{QsdError, Result};
use crate::hilbert::C64;

/// One draw of `dxi`: real and imaginary parts independent, each `N(0, dt/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplexIncrement {
    pub re: f64,
    pub im: f64,
}

impl ComplexIncrement {
    pub const ZERO: ComplexIncrement = ComplexIncrement { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        ComplexIncrement { re, im }
    }

    pub fn as_complex(self) -> C64 {
        C64::new(self.re, self.im)
    }
}

impl std::ops::Add for ComplexIncrement {
    type Output = ComplexIncrement;

    fn add(self, rhs: Self) -> Self {
        ComplexIncrement { re: self.re + rhs.re, im: self.im + rhs.im }
    }
}

#[derive(Debug, Clone)]
pub struct NoiseStream {
    seed: u64,
    stream_id: u64,
    dt: f64,
    sigma: f64,
    rng: ChaCha20Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, stream_id: u64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(QsdError::InvalidArgument(format!("noise time step must be positive, got {dt}")));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Ok(NoiseStream { seed, stream_id, dt, sigma: (dt / 2.0).sqrt(), rng })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn next_increment(&mut self) -> ComplexIncrement {
        let re: f64 = self.rng.sample(StandardNormal);
        let im: f64 = self.rng.sample(StandardNormal);
        ComplexIncrement { re: self.sigma * re, im: self.sigma * im }
    }

    pub fn take_increments(&mut self, count: usize) -> Vec<ComplexIncrement> {
        (0..count).map(|_| self.next_increment()).collect()
    }
}

/// A sample estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    fn from_moments(sum: f64, sum_sq: f64, n: usize) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        let var = if n > 1 { ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
        Estimate { value: mean, std_error: (var / nf).sqrt() }
    }

    /// `|value - target| <= k * std_error`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub seed: u64,
    pub stream_count: usize,
    pub draws_per_stream: usize,
    pub dt: f64,
    /// `M dxi`, real and imaginary parts.
    pub mean_re: Estimate,
    pub mean_im: Estimate,
    /// `M (dxi)^2`, real and imaginary parts.
    pub mean_square_re: Estimate,
    pub mean_square_im: Estimate,
    /// `M |dxi|^2`, expected to equal `dt`.
    pub mean_abs_square: Estimate,
    pub var_re: Estimate,
    pub var_im: Estimate,
    pub cov_re_im: Estimate,
    /// Pearson correlation of the real parts of streams 0 and 1; absent with one stream.
    pub cross_correlation: Option<Estimate>,
}

impl MomentReport {
    /// Every moment within `k` standard errors of its Ito value.
    pub fn passes(&self, k: f64) -> bool {
        let half = self.dt / 2.0;
        self.mean_re.within(0.0, k)
            && self.mean_im.within(0.0, k)
            && self.mean_square_re.within(0.0, k)
            && self.mean_square_im.within(0.0, k)
            && self.mean_abs_square.within(self.dt, k)
            && self.var_re.within(half, k)
            && self.var_im.within(half, k)
            && self.cov_re_im.within(0.0, k)
            && self.cross_correlation.is_none_or(|r| r.within(0.0, k))
    }
}

#[derive(Default)]
struct Accumulator {
    sum: f64,
    sum_sq: f64,
}

impl Accumulator {
    fn push(&mut self, x: f64) {
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn estimate(&self, n: usize) -> Estimate {
        Estimate::from_moments(self.sum, self.sum_sq, n)
    }
}

/// Sample moments of `dxi` pooled over `stream_count` streams.
///
/// Since the means are zero by construction, `re^2 - dt/2` and `im^2 - dt/2`
/// serve directly as per-draw estimators of the component variances.
pub fn moment_report(seed: u64, stream_count: usize, draws_per_stream: usize, dt: f64) -> Result<MomentReport> {
    if stream_count == 0 || draws_per_stream == 0 {
        return Err(QsdError::InvalidArgument("stream_count and draws_per_stream must be at least 1".into()));
    }
    let mut mean_re = Accumulator::default();
    let mut mean_im = Accumulator::default();
    let mut sq_re = Accumulator::default();
    let mut sq_im = Accumulator::default();
    let mut abs_sq = Accumulator::default();
    let mut var_re = Accumulator::default();
    let mut var_im = Accumulator::default();
    let mut cov = Accumulator::default();
    let mut first_two: Vec<Vec<f64>> = Vec::new();

    for stream_id in 0..stream_count as u64 {
        let mut stream = NoiseStream::new(seed, stream_id, dt)?;
        let keep = stream_id < 2 && stream_count >= 2;
        let mut kept = Vec::with_capacity(if keep { draws_per_stream } else { 0 });
        for _ in 0..draws_per_stream {
            let d = stream.next_increment();
            mean_re.push(d.re);
            mean_im.push(d.im);
            sq_re.push(d.re * d.re - d.im * d.im);
            sq_im.push(2.0 * d.re * d.im);
            abs_sq.push(d.re * d.re + d.im * d.im);
            var_re.push(d.re * d.re);
            var_im.push(d.im * d.im);
            cov.push(d.re * d.im);
            if keep {
                kept.push(d.re);
            }
        }
        if keep {
            first_two.push(kept);
        }
    }

    let n = stream_count * draws_per_stream;
    let cross_correlation = (first_two.len() == 2).then(|| {
        let r = pearson(&first_two[0], &first_two[1]);
        Estimate { value: r, std_error: 1.0 / (draws_per_stream as f64).sqrt() }
    });
    Ok(MomentReport {
        seed,
        stream_count,
        draws_per_stream,
        dt,
        mean_re: mean_re.estimate(n),
        mean_im: mean_im.estimate(n),
        mean_square_re: sq_re.estimate(n),
        mean_square_im: sq_im.estimate(n),
        mean_abs_square: abs_sq.estimate(n),
        var_re: var_re.estimate(n),
        var_im: var_im.estimate(n),
        cov_re_im: cov.estimate(n),
        cross_correlation,
    })
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}
