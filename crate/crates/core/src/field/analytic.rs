//! Closed-form fields for Gaussian and Gaussian-mixture data. Used as test
//! oracles and as exact drifts for solver studies.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::field::FieldModel;
use crate::interpolant::{InterpolantSchedule, PredictionTarget, ScheduleValues, TimePoint};

/// Diagonal Gaussian data distribution `N(mean, diag(var))`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticGaussianField {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl AnalyticGaussianField {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        check_dim(mean.len(), var.len())?;
        if var.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidConfig(
                "Gaussian variances must be positive".into(),
            ));
        }
        Ok(AnalyticGaussianField { mean, var })
    }

    pub fn standard(dim: usize) -> Self {
        AnalyticGaussianField {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Marginal variance of `I_t` in dimension `d`.
    fn marginal_var(&self, c: &ScheduleValues, d: usize) -> f64 {
        c.alpha * c.alpha * self.var[d] + c.sigma * c.sigma
    }

    /// `s = -(x - alpha mean) / (alpha^2 var + sigma^2)`.
    pub fn score(&self, x: &[f64], t: TimePoint, sched: &InterpolantSchedule) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let c = sched.eval(t);
        Ok((0..self.dim())
            .map(|d| -(x[d] - c.alpha * self.mean[d]) / self.marginal_var(&c, d))
            .collect())
    }

    /// `E[x_star | I_t = x]`.
    pub fn posterior_mean(
        &self,
        x: &[f64],
        t: TimePoint,
        sched: &InterpolantSchedule,
    ) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let c = sched.eval(t);
        Ok((0..self.dim())
            .map(|d| {
                self.mean[d]
                    + c.alpha * self.var[d] * (x[d] - c.alpha * self.mean[d])
                        / self.marginal_var(&c, d)
            })
            .collect())
    }

    /// `v = dalpha E[x*|x] + dsigma E[eps|x]`, written so it stays finite at `t = 0`
    /// whenever `dalpha` is finite.
    pub fn velocity(
        &self,
        x: &[f64],
        t: TimePoint,
        sched: &InterpolantSchedule,
    ) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let c = sched.eval(t);
        if !c.dalpha.is_finite() {
            return Err(Error::DegenerateSchedule {
                what: "dalpha_t not finite",
                t: t.get(),
            });
        }
        Ok((0..self.dim())
            .map(|d| {
                let gain = (c.dalpha * c.alpha * self.var[d] + c.dsigma * c.sigma)
                    / self.marginal_var(&c, d);
                c.dalpha * self.mean[d] + gain * (x[d] - c.alpha * self.mean[d])
            })
            .collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim())
            .map(|d| {
                let z: f64 = rng.sample(StandardNormal);
                self.mean[d] + self.var[d].sqrt() * z
            })
            .collect()
    }
}

/// Gaussian mixture with diagonal components.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixtureOracle {
    weights: Vec<f64>,
    components: Vec<AnalyticGaussianField>,
}

impl GaussianMixtureOracle {
    pub fn new(components: Vec<(f64, Vec<f64>, Vec<f64>)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidConfig(
                "mixture needs at least one component".into(),
            ));
        }
        let total: f64 = components.iter().map(|c| c.0).sum();
        if components.iter().any(|c| !(c.0 > 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "mixture weights must be positive and sum to 1, got {total}"
            )));
        }
        let dim = components[0].1.len();
        let mut weights = Vec::new();
        let mut comps = Vec::new();
        for (w, m, v) in components {
            check_dim(dim, m.len())?;
            weights.push(w);
            comps.push(AnalyticGaussianField::new(m, v)?);
        }
        Ok(GaussianMixtureOracle {
            weights,
            components: comps,
        })
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    /// Posterior component probabilities given `I_t = x`.
    pub fn responsibilities(
        &self,
        x: &[f64],
        t: TimePoint,
        sched: &InterpolantSchedule,
    ) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let c = sched.eval(t);
        let logs: Vec<f64> = self
            .components
            .iter()
            .zip(&self.weights)
            .map(|(g, w)| {
                let mut lp = w.ln();
                for d in 0..g.dim() {
                    let var = g.marginal_var(&c, d);
                    let r = x[d] - c.alpha * g.mean[d];
                    lp -= 0.5 * (r * r / var + (2.0 * std::f64::consts::PI * var).ln());
                }
                lp
            })
            .collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ex: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = ex.iter().sum();
        Ok(ex.into_iter().map(|e| e / z).collect())
    }

    /// Log density of `I_t` at `x`.
    pub fn log_density(&self, x: &[f64], t: TimePoint, sched: &InterpolantSchedule) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let c = sched.eval(t);
        let mut acc = 0.0;
        for (g, w) in self.components.iter().zip(&self.weights) {
            let mut lp = 0.0;
            for d in 0..g.dim() {
                let var = g.marginal_var(&c, d);
                let r = x[d] - c.alpha * g.mean[d];
                lp -= 0.5 * (r * r / var + (2.0 * std::f64::consts::PI * var).ln());
            }
            acc += w * lp.exp();
        }
        Ok(acc.ln())
    }

    fn blend<F>(
        &self,
        x: &[f64],
        t: TimePoint,
        sched: &InterpolantSchedule,
        per: F,
    ) -> Result<Vec<f64>>
    where
        F: Fn(&AnalyticGaussianField) -> Result<Vec<f64>>,
    {
        let r = self.responsibilities(x, t, sched)?;
        let mut out = vec![0.0; self.dim()];
        for (g, rk) in self.components.iter().zip(r) {
            for (o, v) in out.iter_mut().zip(per(g)?) {
                *o += rk * v;
            }
        }
        Ok(out)
    }

    pub fn score(&self, x: &[f64], t: TimePoint, sched: &InterpolantSchedule) -> Result<Vec<f64>> {
        self.blend(x, t, sched, |g| g.score(x, t, sched))
    }

    pub fn velocity(
        &self,
        x: &[f64],
        t: TimePoint,
        sched: &InterpolantSchedule,
    ) -> Result<Vec<f64>> {
        self.blend(x, t, sched, |g| g.velocity(x, t, sched))
    }

    pub fn posterior_mean(
        &self,
        x: &[f64],
        t: TimePoint,
        sched: &InterpolantSchedule,
    ) -> Result<Vec<f64>> {
        self.blend(x, t, sched, |g| g.posterior_mean(x, t, sched))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        self.components[k].sample(rng)
    }
}

/// Data densities with a closed-form field.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleDensity {
    Gaussian(AnalyticGaussianField),
    Mixture(GaussianMixtureOracle),
}

impl OracleDensity {
    pub fn dim(&self) -> usize {
        match self {
            OracleDensity::Gaussian(g) => g.dim(),
            OracleDensity::Mixture(m) => m.dim(),
        }
    }

    pub fn score(&self, x: &[f64], t: TimePoint, sched: &InterpolantSchedule) -> Result<Vec<f64>> {
        match self {
            OracleDensity::Gaussian(g) => g.score(x, t, sched),
            OracleDensity::Mixture(m) => m.score(x, t, sched),
        }
    }

    pub fn velocity(
        &self,
        x: &[f64],
        t: TimePoint,
        sched: &InterpolantSchedule,
    ) -> Result<Vec<f64>> {
        match self {
            OracleDensity::Gaussian(g) => g.velocity(x, t, sched),
            OracleDensity::Mixture(m) => m.velocity(x, t, sched),
        }
    }
}

/// An oracle density exposed through [`FieldModel`] in a chosen representation.
/// Ignores observations.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticModel {
    pub density: OracleDensity,
    pub schedule: InterpolantSchedule,
    pub target: PredictionTarget,
}

impl AnalyticModel {
    pub fn gaussian(
        field: AnalyticGaussianField,
        schedule: InterpolantSchedule,
        target: PredictionTarget,
    ) -> Self {
        AnalyticModel {
            density: OracleDensity::Gaussian(field),
            schedule,
            target,
        }
    }

    pub fn mixture(
        m: GaussianMixtureOracle,
        schedule: InterpolantSchedule,
        target: PredictionTarget,
    ) -> Self {
        AnalyticModel {
            density: OracleDensity::Mixture(m),
            schedule,
            target,
        }
    }
}

impl FieldModel for AnalyticModel {
    fn action_dim(&self) -> usize {
        self.density.dim()
    }

    fn obs_dim(&self) -> usize {
        0
    }

    fn target(&self) -> PredictionTarget {
        self.target
    }

    fn predict(&self, x: &[f64], t: f64, _obs: &[f64]) -> Result<Vec<f64>> {
        let t = TimePoint::new(t)?;
        match self.target {
            PredictionTarget::Velocity => self.density.velocity(x, t, &self.schedule),
            PredictionTarget::Score => self.density.score(x, t, &self.schedule),
            PredictionTarget::Noise => {
                let sigma = self.schedule.eval(t).sigma;
                Ok(self
                    .density
                    .score(x, t, &self.schedule)?
                    .into_iter()
                    .map(|s| -sigma * s)
                    .collect())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interpolant::{score_from_velocity, velocity_from_score};
    use crate::par::stream_rng;

    fn tp(t: f64) -> TimePoint {
        TimePoint::new(t).unwrap()
    }

    #[test]
    fn standard_normal_examples() {
        let g = AnalyticGaussianField::standard(1);
        let lin = InterpolantSchedule::linear();
        assert!((g.score(&[1.0], tp(0.5), &lin).unwrap()[0] + 2.0).abs() < 1e-14);
        for x in [-2.0, 0.3, 1.7] {
            assert!(g.velocity(&[x], tp(0.5), &lin).unwrap()[0].abs() < 1e-14);
        }
        let gvp = InterpolantSchedule::gvp();
        for t in [0.0, 0.2, 0.5, 0.9, 1.0] {
            for x in [-1.5, 0.4] {
                assert!(g.velocity(&[x], tp(t), &gvp).unwrap()[0].abs() < 1e-14);
            }
        }
    }

    #[test]
    fn score_vanishes_at_mode() {
        let g = AnalyticGaussianField::new(vec![0.7, -1.2], vec![0.3, 2.0]).unwrap();
        for sched in [
            InterpolantSchedule::linear(),
            InterpolantSchedule::vp(),
            InterpolantSchedule::gvp(),
        ] {
            let t = tp(0.6);
            let a = sched.eval(t).alpha;
            let s = g.score(&[a * 0.7, -a * 1.2], t, &sched).unwrap();
            assert!(s.iter().all(|v| v.abs() < 1e-14));
        }
    }

    #[test]
    fn point_mass_limit_velocity() {
        let c = 0.8;
        let g = AnalyticGaussianField::new(vec![c], vec![1e-12]).unwrap();
        for sched in [InterpolantSchedule::linear(), InterpolantSchedule::gvp()] {
            let v = g.velocity(&[c], tp(1.0), &sched).unwrap()[0];
            let da = sched.eval(tp(1.0)).dalpha;
            assert!((v - da * c).abs() < 1e-9, "{:?}", sched.kind);
        }
    }

    #[test]
    fn velocity_equals_conversion_of_score() {
        let g = AnalyticGaussianField::new(vec![0.5, -0.3], vec![0.25, 1.5]).unwrap();
        for sched in [
            InterpolantSchedule::linear(),
            InterpolantSchedule::vp(),
            InterpolantSchedule::gvp(),
        ] {
            for t in [0.05, 0.3, 0.7, 0.95] {
                let x = [0.9, -1.1];
                let s = g.score(&x, tp(t), &sched).unwrap();
                let via = velocity_from_score(&x, &s, tp(t), &sched).unwrap();
                let direct = g.velocity(&x, tp(t), &sched).unwrap();
                for d in 0..2 {
                    assert!((via[d] - direct[d]).abs() < 1e-10 * (1.0 + direct[d].abs()));
                }
                let back = score_from_velocity(&x, &direct, tp(t), &sched).unwrap();
                for d in 0..2 {
                    assert!((back[d] - s[d]).abs() < 1e-8 * s[d].abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn score_matches_monte_carlo_conditional_noise() {
        // -E[eps | I_t = x] / sigma_t estimated by binning 10^6 draws near x.
        let g = AnalyticGaussianField::standard(1);
        let sched = InterpolantSchedule::linear();
        let t = tp(0.5);
        let c = sched.eval(t);
        let x = 0.6;
        let mut rng = stream_rng(2024, 0);
        let (mut sum, mut sum2, mut n) = (0.0, 0.0, 0usize);
        for _ in 0..1_000_000 {
            let xs: f64 = rng.sample(StandardNormal);
            let e: f64 = rng.sample(StandardNormal);
            let it = c.alpha * xs + c.sigma * e;
            if (it - x).abs() < 0.01 {
                let v = -e / c.sigma;
                sum += v;
                sum2 += v * v;
                n += 1;
            }
        }
        let mean = sum / n as f64;
        let se = ((sum2 / n as f64 - mean * mean) / n as f64).sqrt();
        let exact = g.score(&[x], t, &sched).unwrap()[0];
        assert!(
            (mean - exact).abs() < 3.0 * se,
            "mc={mean} exact={exact} se={se} n={n}"
        );
    }

    #[test]
    fn mixture_score_is_log_density_gradient() {
        let m = GaussianMixtureOracle::new(vec![
            (0.3, vec![-1.0, 0.5], vec![0.2, 0.1]),
            (0.7, vec![1.0, -0.5], vec![0.3, 0.4]),
        ])
        .unwrap();
        let h = 1e-6;
        for sched in [
            InterpolantSchedule::linear(),
            InterpolantSchedule::vp(),
            InterpolantSchedule::gvp(),
        ] {
            for t in [0.2, 0.6, 0.9] {
                let x = [0.3, -0.2];
                let s = m.score(&x, tp(t), &sched).unwrap();
                for d in 0..2 {
                    let mut xp = x;
                    let mut xm = x;
                    xp[d] += h;
                    xm[d] -= h;
                    let fd = (m.log_density(&xp, tp(t), &sched).unwrap()
                        - m.log_density(&xm, tp(t), &sched).unwrap())
                        / (2.0 * h);
                    assert!(
                        (fd - s[d]).abs() < 1e-5 * (1.0 + s[d].abs()),
                        "t={t} d={d} fd={fd} s={}",
                        s[d]
                    );
                }
                // Mixture velocity and score are linked by the same conversion as single Gaussians.
                let v = m.velocity(&x, tp(t), &sched).unwrap();
                let via = velocity_from_score(&x, &s, tp(t), &sched).unwrap();
                for d in 0..2 {
                    assert!((v[d] - via[d]).abs() < 1e-9 * (1.0 + v[d].abs()));
                }
            }
        }
    }

    #[test]
    fn mixture_rejects_bad_weights() {
        assert!(GaussianMixtureOracle::new(vec![(0.5, vec![0.0], vec![1.0])]).is_err());
        assert!(GaussianMixtureOracle::new(vec![]).is_err());
        assert!(AnalyticGaussianField::new(vec![0.0], vec![0.0]).is_err());
    }
}
