//! Domain-specific normalization: batch statistics kept apart per domain,
//! one shared affine transform.
//!
//! Data is laid out as `elements × channels`; each channel is normalized with
//! the mean and population variance of its own domain's elements.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::NormError;
use crate::simdet::Domain;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DsNormState {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    /// Weight of the newest batch in the moving average.
    pub momentum: f64,
    pub eps: f64,
    pub source: Option<RunningStats>,
    pub target: Option<RunningStats>,
}

impl DsNormState {
    /// Identity affine, momentum 0.1, ε 1e-5, no running statistics yet.
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            momentum: 0.1,
            eps: 1e-5,
            source: None,
            target: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn stats(&self, domain: Domain) -> Option<&RunningStats> {
        match domain {
            Domain::Source => self.source.as_ref(),
            Domain::Target => self.target.as_ref(),
        }
    }

    fn stats_mut(&mut self, domain: Domain) -> &mut Option<RunningStats> {
        match domain {
            Domain::Source => &mut self.source,
            Domain::Target => &mut self.target,
        }
    }

    pub fn validate(&self) -> Result<(), NormError> {
        if self.beta.len() != self.gamma.len() {
            return Err(NormError::ChannelMismatch {
                expected: self.gamma.len(),
                got: self.beta.len(),
            });
        }
        if !(self.eps > 0.0) {
            return Err(NormError::InvalidState(format!("eps must be positive, got {}", self.eps)));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(NormError::InvalidState(format!(
                "momentum must lie in [0, 1], got {}",
                self.momentum
            )));
        }
        Ok(())
    }

    fn check(&self, data: &ArrayView2<f64>) -> Result<(), NormError> {
        if data.ncols() != self.channels() {
            return Err(NormError::ChannelMismatch {
                expected: self.channels(),
                got: data.ncols(),
            });
        }
        Ok(())
    }

    fn affine(&self, data: &ArrayView2<f64>, mean: &Array1<f64>, var: &Array1<f64>) -> Array2<f64> {
        let scale = &self.gamma / var.mapv(|v| (v + self.eps).sqrt());
        let shift = &self.beta - &(mean * &scale);
        data * &scale + &shift
    }
}

/// One training step's inputs; an empty domain (zero rows) is skipped.
#[derive(Clone, Copy, Debug)]
pub struct DomainBatch<'a> {
    pub source: ArrayView2<'a, f64>,
    pub target: ArrayView2<'a, f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DsNormOutput {
    pub source: Option<Array2<f64>>,
    pub target: Option<Array2<f64>>,
}

/// Mean and population variance per channel.
pub fn batch_stats(data: &ArrayView2<f64>) -> RunningStats {
    let n = data.nrows() as f64;
    let mean = data.sum_axis(Axis(0)) / n;
    let centered = data - &mean;
    let var = (&centered * &centered).sum_axis(Axis(0)) / n;
    RunningStats { mean, var }
}

/// Normalizes each domain with its own batch statistics, then folds those
/// statistics into the running averages. The output is computed before the
/// running statistics change.
pub fn dsnorm_train(
    batch: &DomainBatch<'_>,
    state: &DsNormState,
) -> Result<(DsNormOutput, DsNormState), NormError> {
    state.validate()?;
    let mut next = state.clone();
    let mut out = DsNormOutput {
        source: None,
        target: None,
    };
    for (domain, data) in [(Domain::Source, batch.source), (Domain::Target, batch.target)] {
        if data.nrows() == 0 {
            continue;
        }
        state.check(&data)?;
        let stats = batch_stats(&data);
        let normalized = state.affine(&data, &stats.mean, &stats.var);
        let m = state.momentum;
        let slot = next.stats_mut(domain);
        *slot = Some(match slot.take() {
            None => stats,
            Some(r) => RunningStats {
                mean: r.mean * (1.0 - m) + &stats.mean * m,
                var: (r.var * (1.0 - m) + &stats.var * m).mapv(|v| v.max(0.0)),
            },
        });
        match domain {
            Domain::Source => out.source = Some(normalized),
            Domain::Target => out.target = Some(normalized),
        }
    }
    Ok((out, next))
}

/// Normalizes with the running statistics of `domain` and the shared affine.
pub fn dsnorm_infer(
    data: ArrayView2<'_, f64>,
    state: &DsNormState,
    domain: Domain,
) -> Result<Array2<f64>, NormError> {
    state.validate()?;
    state.check(&data)?;
    let stats = state
        .stats(domain)
        .ok_or(NormError::Uninitialized(domain.as_str()))?;
    Ok(state.affine(&data, &stats.mean, &stats.var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn empty() -> Array2<f64> {
        Array2::zeros((0, 2))
    }

    #[test]
    fn constant_input_maps_to_zero() {
        let s = DsNormState::new(2);
        let src = Array2::from_elem((5, 2), 3.0);
        let e = empty();
        let (out, _) = dsnorm_train(&DomainBatch { source: src.view(), target: e.view() }, &s).unwrap();
        assert!(out.source.unwrap().iter().all(|v| *v == 0.0));
        assert!(out.target.is_none());
    }

    #[test]
    fn first_step_seeds_running_stats() {
        let s = DsNormState::new(2);
        let x = array![[1.0, 10.0], [3.0, 30.0]];
        let e = empty();
        let (_, s) = dsnorm_train(&DomainBatch { source: e.view(), target: x.view() }, &s).unwrap();
        assert!(s.source.is_none());
        let t = s.target.as_ref().unwrap();
        assert_eq!(t.mean, array![2.0, 20.0]);
        assert_eq!(t.var, array![1.0, 100.0]);
    }

    #[test]
    fn moving_average_blends() {
        let s = DsNormState::new(1);
        let e = Array2::zeros((0, 1));
        let a = array![[0.0], [2.0]];
        let b = array![[10.0], [10.0]];
        let (_, s) = dsnorm_train(&DomainBatch { source: a.view(), target: e.view() }, &s).unwrap();
        let (_, s) = dsnorm_train(&DomainBatch { source: b.view(), target: e.view() }, &s).unwrap();
        let r = s.source.unwrap();
        assert!((r.mean[0] - (0.9 * 1.0 + 0.1 * 10.0)).abs() < 1e-12);
        assert!((r.var[0] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn infer_requires_stats() {
        let s = DsNormState::new(2);
        let x = array![[1.0, 2.0]];
        assert_eq!(
            dsnorm_infer(x.view(), &s, Domain::Target).unwrap_err(),
            NormError::Uninitialized("target")
        );
    }

    #[test]
    fn channel_mismatch() {
        let s = DsNormState::new(3);
        let x = array![[1.0, 2.0]];
        let e = Array2::zeros((0, 2));
        assert!(matches!(
            dsnorm_train(&DomainBatch { source: x.view(), target: e.view() }, &s),
            Err(NormError::ChannelMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn affine_applies() {
        let mut s = DsNormState::new(1);
        s.gamma[0] = 2.0;
        s.beta[0] = 3.0;
        s.momentum = 1.0;
        let x = array![[-1.0], [1.0], [-1.0], [1.0]];
        let e = Array2::zeros((0, 1));
        let (out, s) = dsnorm_train(&DomainBatch { source: x.view(), target: e.view() }, &s).unwrap();
        let y = out.source.unwrap();
        let mean = y.mean().unwrap();
        let std = (y.mapv(|v| (v - mean).powi(2)).mean().unwrap()).sqrt();
        assert!((mean - 3.0).abs() < 1e-9);
        assert!((std - 2.0).abs() < 1e-4);
        let inf = dsnorm_infer(x.view(), &s, Domain::Source).unwrap();
        assert!((&inf - &y).iter().all(|d| d.abs() < 1e-12));
    }
}
