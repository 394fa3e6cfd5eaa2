//! Variance-preserving cosine noise schedule.

use physdyn_core::TrajArray;

use crate::{Error, Result};

const COSINE_OFFSET: f64 = 0.008;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    steps: usize,
}

impl NoiseSchedule {
    pub fn new(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("diffusion steps must be positive".into()));
        }
        Ok(Self { steps })
    }

    /// Number of training steps `T`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    fn alpha_bar(&self, t: f64) -> f64 {
        let f = |u: f64| ((u + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * std::f64::consts::FRAC_PI_2).cos().powi(2);
        (f(t / self.steps as f64) / f(0.0)).clamp(0.0, 1.0)
    }

    /// Signal scale at step `t` (`t` in `0..=T`).
    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha_bar(t as f64).sqrt()
    }

    /// Noise scale at step `t`; `alpha² + sigma² = 1`.
    pub fn sigma(&self, t: usize) -> f64 {
        (1.0 - self.alpha_bar(t as f64)).sqrt()
    }

    /// `alpha_t * traj + sigma_t * eps` for `t` in `1..=T`.
    pub fn add_noise(&self, traj: &TrajArray, t: usize, eps: &[f64]) -> Result<TrajArray> {
        if t == 0 || t > self.steps {
            return Err(Error::Config(format!("noise step {t} outside [1, {}]", self.steps)));
        }
        if eps.len() != traj.data.len() {
            return Err(Error::Shape(format!("noise has {} entries, trajectory {}", eps.len(), traj.data.len())));
        }
        let (a, s) = (self.alpha(t), self.sigma(t));
        let data = traj.data.iter().zip(eps).map(|(x, e)| a * x + s * e).collect();
        Ok(TrajArray { frames: traj.frames, points: traj.points, data })
    }

    /// Evenly spaced sub-schedule `round(k T / steps)` for `k = 0..=steps`.
    pub fn sub_schedule(&self, steps: usize) -> Vec<usize> {
        let steps = steps.max(1);
        (0..=steps)
            .map(|k| ((k as f64) * self.steps as f64 / steps as f64).round() as usize)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use physdyn_core::Rng;

    #[test]
    fn endpoints_and_monotonicity() {
        let s = NoiseSchedule::new(1000).unwrap();
        assert!((s.alpha(0) - 1.0).abs() < 1e-12 && s.sigma(0) < 1e-6);
        assert!(s.alpha(1000) < 1e-6);
        for t in 0..1000 {
            assert!(s.alpha(t + 1) < s.alpha(t));
            assert!(s.sigma(t + 1) > s.sigma(t));
            assert!((s.alpha(t).powi(2) + s.sigma(t).powi(2) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn add_noise_endpoints() {
        let s = NoiseSchedule::new(1000).unwrap();
        let mut rng = Rng::new(3);
        let x = TrajArray::from_vec(2, 4, rng.normals(24)).unwrap();
        let eps = rng.normals(24);
        let at_end = s.add_noise(&x, 1000, &eps).unwrap();
        for (a, b) in at_end.data.iter().zip(&eps) {
            assert!((a - b).abs() < 1e-5);
        }
        let small = s.add_noise(&x, 1, &eps).unwrap();
        for (a, b) in small.data.iter().zip(&x.data) {
            assert!((a - b).abs() < 0.05 * (1.0 + b.abs()));
        }
        assert!(s.add_noise(&x, 0, &eps).is_err());
        assert!(s.add_noise(&x, 1001, &eps).is_err());
    }

    #[test]
    fn variance_preserved() {
        let s = NoiseSchedule::new(1000).unwrap();
        let mut rng = Rng::new(11);
        let n = 100_000;
        for t in [1, 250, 500, 900] {
            let x = TrajArray::from_vec(1, n / 3 + 1, rng.normals(3 * (n / 3 + 1))).unwrap();
            let eps = rng.normals(x.data.len());
            let y = s.add_noise(&x, t, &eps).unwrap();
            let m = y.data.iter().sum::<f64>() / y.data.len() as f64;
            let v = y.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / y.data.len() as f64;
            assert!((v - 1.0).abs() < 0.02, "t={t} var={v}");
        }
    }

    #[test]
    fn sub_schedule_is_even() {
        let s = NoiseSchedule::new(1000).unwrap();
        let sub = s.sub_schedule(25);
        assert_eq!(sub.len(), 26);
        assert_eq!(sub[0], 0);
        assert_eq!(sub[25], 1000);
        assert_eq!(sub[1], 40);
        assert_eq!(s.sub_schedule(1), vec![0, 1000]);
    }
}
