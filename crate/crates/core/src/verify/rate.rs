//! Mean squared error of the V-statistic `Q_n⊗Q_n f` against `Q⊗Q f`, and
//! its log-log decay rate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::VerificationReport;
use crate::error::{GeometryError, Result};
use crate::measures::FiniteMeasure;
use crate::rng::{derive_seed, seeded};
use crate::spaces::Point;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateOptions {
    pub n_schedule: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub slope_band: (f64, f64),
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions {
            n_schedule: (0..8).map(|k| 10 << k).collect(),
            reps: 200,
            seed: 0,
            slope_band: (-1.3, -0.7),
        }
    }
}

impl RateOptions {
    pub fn validate(&self) -> Result<()> {
        let ns = &self.n_schedule;
        if ns.len() < 2 || ns[0] == 0 || ns.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GeometryError::input("n_schedule must be increasing, positive, length >= 2"));
        }
        if (*ns.last().unwrap() as f64 / ns[0] as f64) < 100.0 {
            return Err(GeometryError::input("n_schedule must span at least two decades"));
        }
        if self.reps < 100 {
            return Err(GeometryError::input(format!("reps must be at least 100, got {}", self.reps)));
        }
        let (lo, hi) = self.slope_band;
        if !(lo < hi) {
            return Err(GeometryError::input("slope_band must satisfy lo < hi"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub n_schedule: Vec<usize>,
    pub mse: Vec<f64>,
    /// Standard error of each MSE estimate.
    pub stderr: Vec<f64>,
    /// `Q⊗Q f`.
    pub target: f64,
    /// Least-squares slope of `ln mse` against `ln n`; `None` when degenerate.
    pub slope: Option<f64>,
    /// 95% half-width of the slope from the regression residuals.
    pub half_width: f64,
    /// Zero variance: every V-statistic equals the target.
    pub degenerate: bool,
}

impl RateResult {
    pub fn report(&self, band: (f64, f64), tolerance: f64, seed: u64) -> VerificationReport {
        let margin = match self.slope {
            Some(k) => (k - band.0).min(band.1 - k),
            None => f64::NEG_INFINITY,
        };
        let mut r = VerificationReport::new("ustat-rate", margin, tolerance, seed)
            .with("degenerate", self.degenerate)
            .with("half_width", self.half_width)
            .with("target", self.target);
        if let Some(k) = self.slope {
            r = r.with("slope", k);
        }
        r
    }
}

/// Estimates `E|Q⊗Q f - Q_n⊗Q_n f|^2` for each `n` by `reps` independent
/// empirical measures and fits the log-log slope. Replicates run in
/// parallel with seeds derived from `(seed, n index, replicate)`.
pub fn ustat_rate<F>(q: &FiniteMeasure, f: F, opts: &RateOptions) -> Result<RateResult>
where
    F: Fn(&Point, &Point) -> f64,
{
    opts.validate()?;
    let m = q.len();
    let atoms = q.support();
    let kernel: Vec<f64> = (0..m * m).map(|k| f(&atoms[k / m], &atoms[k % m])).collect();
    let w = q.weights();
    let target: f64 = (0..m * m).map(|k| w[k / m] * w[k % m] * kernel[k]).sum();

    let mut mse = Vec::with_capacity(opts.n_schedule.len());
    let mut stderr = Vec::with_capacity(opts.n_schedule.len());
    for (ni, &n) in opts.n_schedule.iter().enumerate() {
        let level = derive_seed(opts.seed, ni as u64);
        let sq: Vec<f64> = (0..opts.reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = seeded(derive_seed(level, r as u64));
                let counts = q.draw_counts(n, &mut rng);
                let nn = (n * n) as f64;
                let mut v = 0.0;
                for i in 0..m {
                    if counts[i] == 0 {
                        continue;
                    }
                    for j in 0..m {
                        v += (counts[i] * counts[j]) as f64 * kernel[i * m + j];
                    }
                }
                (v / nn - target).powi(2)
            })
            .collect();
        let reps = sq.len() as f64;
        let mean = sq.iter().sum::<f64>() / reps;
        let var = sq.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1.0);
        mse.push(mean);
        stderr.push((var / reps).sqrt());
    }

    let scale = 1.0 + target * target + kernel.iter().map(|k| k * k).fold(0.0, f64::max);
    let degenerate = m == 1 || mse.iter().all(|&e| e <= 1e-24 * scale);
    let (slope, half_width) = if degenerate || mse.iter().any(|&e| e <= 0.0) {
        (None, f64::NAN)
    } else {
        let xs: Vec<f64> = opts.n_schedule.iter().map(|&n| (n as f64).ln()).collect();
        let ys: Vec<f64> = mse.iter().map(|e| e.ln()).collect();
        let (k, se) = least_squares(&xs, &ys);
        (Some(k), 1.96 * se)
    };
    Ok(RateResult {
        n_schedule: opts.n_schedule.clone(),
        mse,
        stderr,
        target,
        slope,
        half_width,
        degenerate,
    })
}

/// Slope of the least-squares line and its standard error.
fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let k = sxy / sxx;
    let c = my - k * mx;
    if xs.len() <= 2 {
        return (k, 0.0);
    }
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - c - k * x).powi(2)).sum();
    (k, (rss / (n - 2.0) / sxx).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::SpaceDescriptor;
    use crate::tangent::TieBreak;

    fn planar_pair() -> (SpaceDescriptor, FiniteMeasure) {
        let s = SpaceDescriptor::euclidean(2);
        let q = FiniteMeasure::new(
            &s,
            vec![Point::new(vec![0.0, 0.0]), Point::new(vec![1.0, 0.0])],
            vec![0.5, 0.5],
        )
        .unwrap();
        (s, q)
    }

    #[test]
    fn dirac_is_degenerate() {
        let q = FiniteMeasure::dirac(Point::new(vec![0.0]));
        let r = ustat_rate(&q, |a, b| a.coords()[0] * b.coords()[0] + 1.0, &RateOptions::default()).unwrap();
        assert!(r.degenerate && r.slope.is_none());
        assert!(!r.report((-1.3, -0.7), 1e-12, 0).passed);
    }

    #[test]
    fn constant_kernel_is_degenerate() {
        let (_, q) = planar_pair();
        let r = ustat_rate(&q, |_, _| 2.5, &RateOptions::default()).unwrap();
        assert!(r.mse.iter().all(|&e| e <= 1e-24));
        assert!(r.degenerate);
    }

    #[test]
    fn inner_kernel_off_center_has_unit_rate() {
        let (s, q) = planar_pair();
        let base = Point::new(vec![0.2, 0.3]);
        let f = |x: &Point, y: &Point| {
            let u = s.log_unchecked(&base, x, TieBreak::Error).unwrap();
            let v = s.log_unchecked(&base, y, TieBreak::Error).unwrap();
            u.inner(&v).unwrap()
        };
        let opts = RateOptions {
            seed: 17,
            ..RateOptions::default()
        };
        let r = ustat_rate(&q, f, &opts).unwrap();
        let k = r.slope.unwrap();
        assert!((-1.3..=-0.7).contains(&k), "slope {k}");
        assert!(r.mse.windows(2).all(|w| w[1] < w[0]), "{:?}", r.mse);
        assert!(r.report((-1.3, -0.7), 1e-12, 17).passed);
        // identical options reproduce identical estimates
        assert_eq!(ustat_rate(&q, f, &opts).unwrap(), r);
    }

    #[test]
    fn schedule_preconditions() {
        let (_, q) = planar_pair();
        let short = RateOptions {
            n_schedule: vec![10, 20, 40],
            ..RateOptions::default()
        };
        assert!(ustat_rate(&q, |_, _| 1.0, &short).is_err());
        let few = RateOptions {
            reps: 10,
            ..RateOptions::default()
        };
        assert!(ustat_rate(&q, |_, _| 1.0, &few).is_err());
    }

    #[test]
    fn least_squares_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, -1.0, -3.0, -5.0];
        let (k, se) = least_squares(&xs, &ys);
        assert!((k + 2.0).abs() < 1e-12 && se < 1e-12);
    }
}
