use thiserror::Error;

/// Mass below this threshold is trimmed from distribution tails before
/// renormalizing. Chosen well under solver feasibility tolerances.
const TAIL_EPS: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum DistError {
    #[error("probability mass function is empty")]
    EmptySupport,
    #[error("negative probability {value} at support point {index}")]
    NegativeProbability { index: usize, value: f64 },
    #[error("probabilities sum to {sum}, not 1")]
    MassNotOne { sum: f64 },
    #[error("truncation cap must be at least 1")]
    DegenerateCap,
    #[error("rate parameter must be positive, got {0}")]
    NonPositiveRate(f64),
}

/// Finite-support probability distribution over the nonnegative integers.
///
/// Index `k` of the stored vector is the probability of the value `k`; the
/// support is `0..=max_support()`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist {
    pmf: Vec<f64>,
}

impl DiscreteDist {
    /// Builds a distribution from an explicit pmf. Probabilities must be
    /// nonnegative and sum to 1 within 1e-9.
    pub fn new(pmf: Vec<f64>) -> Result<Self, DistError> {
        if pmf.is_empty() {
            return Err(DistError::EmptySupport);
        }
        for (index, &value) in pmf.iter().enumerate() {
            if value < 0.0 {
                return Err(DistError::NegativeProbability { index, value });
            }
        }
        let sum: f64 = pmf.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DistError::MassNotOne { sum });
        }
        let mut d = DiscreteDist { pmf };
        d.trim();
        Ok(d)
    }

    /// The distribution that is `k` with probability one.
    pub fn point_mass(k: usize) -> Self {
        let mut pmf = vec![0.0; k + 1];
        pmf[k] = 1.0;
        DiscreteDist { pmf }
    }

    /// Poisson distribution with the far tail (mass below 1e-10) trimmed and
    /// the remainder renormalized.
    pub fn poisson(lambda: f64) -> Result<Self, DistError> {
        if lambda <= 0.0 {
            return Err(DistError::NonPositiveRate(lambda));
        }
        let mut pmf = Vec::new();
        let mut p = (-lambda).exp();
        let mut cum = 0.0;
        let mut k = 0usize;
        loop {
            pmf.push(p);
            cum += p;
            if 1.0 - cum < TAIL_EPS {
                break;
            }
            k += 1;
            p *= lambda / k as f64;
            // guard against pathological rates; mass this small is tail anyway
            if k > 10_000 {
                break;
            }
        }
        let total: f64 = pmf.iter().sum();
        for v in &mut pmf {
            *v /= total;
        }
        Ok(DiscreteDist { pmf })
    }

    /// Poisson distribution truncated at `cap` and renormalized so the mass on
    /// `0..=cap` sums to one.
    pub fn truncated_poisson(lambda: f64, cap: usize) -> Result<Self, DistError> {
        if lambda <= 0.0 {
            return Err(DistError::NonPositiveRate(lambda));
        }
        if cap == 0 {
            return Err(DistError::DegenerateCap);
        }
        let mut pmf = Vec::with_capacity(cap + 1);
        let mut p = (-lambda).exp();
        pmf.push(p);
        for k in 1..=cap {
            p *= lambda / k as f64;
            pmf.push(p);
        }
        let total: f64 = pmf.iter().sum();
        for v in &mut pmf {
            *v /= total;
        }
        Ok(DiscreteDist { pmf })
    }

    /// Distribution of `J_1 + ... + J_M` where `M ~ Poisson(lambda)` and the
    /// jumps `J_n` are i.i.d. with distribution `jump`. Computed exactly as a
    /// Poisson mixture of convolution powers, truncated where the residual
    /// mixture weight drops below 1e-10, then renormalized.
    pub fn compound_poisson(lambda: f64, jump: &DiscreteDist) -> Result<Self, DistError> {
        if lambda <= 0.0 {
            return Err(DistError::NonPositiveRate(lambda));
        }
        let mut weight = (-lambda).exp(); // P(M = 0)
        let mut acc = vec![weight]; // running mixture, starts at point mass 0
        let mut power = DiscreteDist::point_mass(0);
        let mut used = weight;
        let mut m = 0usize;
        while 1.0 - used > TAIL_EPS && m < 10_000 {
            m += 1;
            weight *= lambda / m as f64;
            power = power.convolve(jump);
            if acc.len() < power.pmf.len() {
                acc.resize(power.pmf.len(), 0.0);
            }
            for (k, &p) in power.pmf.iter().enumerate() {
                acc[k] += weight * p;
            }
            used += weight;
        }
        let mut d = DiscreteDist { pmf: acc };
        d.trim();
        let total: f64 = d.pmf.iter().sum();
        for v in &mut d.pmf {
            *v /= total;
        }
        Ok(d)
    }

    /// Exact pmf of the sum of two independent variables.
    pub fn convolve(&self, other: &DiscreteDist) -> DiscreteDist {
        let mut pmf = vec![0.0; self.pmf.len() + other.pmf.len() - 1];
        for (i, &a) in self.pmf.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.pmf.iter().enumerate() {
                pmf[i + j] += a * b;
            }
        }
        DiscreteDist { pmf }
    }

    pub fn pmf(&self, k: usize) -> f64 {
        self.pmf.get(k).copied().unwrap_or(0.0)
    }

    pub fn pmf_slice(&self) -> &[f64] {
        &self.pmf
    }

    /// Largest support point (pmf is trimmed, so this carries positive mass).
    pub fn max_support(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(k, &p)| k as f64 * p).sum()
    }

    /// First-order loss function `E[(D - q)^+]` for real `q`; the sum handles
    /// real arguments exactly, no interpolation involved.
    pub fn loss(&self, q: f64) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(k, &p)| (k as f64 - q).max(0.0) * p)
            .sum()
    }

    /// Complementary first-order loss function `E[(q - D)^+]`.
    pub fn complementary_loss(&self, q: f64) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(k, &p)| (q - k as f64).max(0.0) * p)
            .sum()
    }

    /// Inverse-CDF sample for a uniform draw `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> usize {
        let mut cum = 0.0;
        for (k, &p) in self.pmf.iter().enumerate() {
            cum += p;
            if u < cum {
                return k;
            }
        }
        self.max_support()
    }

    fn trim(&mut self) {
        // drop a trailing run whose total mass is below the tail threshold
        let mut tail = 0.0;
        let mut keep = self.pmf.len();
        for (k, &p) in self.pmf.iter().enumerate().rev() {
            tail += p;
            if tail > TAIL_EPS {
                keep = k + 1;
                break;
            }
        }
        self.pmf.truncate(keep.max(1));
    }
}
