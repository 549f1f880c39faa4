use thiserror::Error;

#[derive(Debug, Error)]
pub enum MleError {
    #[error("need at least 30 samples, got {0}")]
    InsufficientSamples(usize),
}

/// Result of a compound-Poisson maximum-likelihood fit.
#[derive(Debug, Clone, Copy)]
pub struct CompoundPoissonFit {
    /// Event rate per bucket.
    pub lambda: f64,
    /// Mean of the Poisson jump-size distribution.
    pub jump_mean: f64,
    pub log_likelihood: f64,
    /// Set when the data are all zero and the rate estimate sits at the lower
    /// search bound.
    pub degenerate: bool,
}

const SEARCH_LO: f64 = 1e-3;
const SEARCH_HI: f64 = 10.0;
const GRID: usize = 24;
const REFINE_ROUNDS: usize = 3;

/// Exact compound-Poisson pmf values on `0..=kmax` for Poisson(lambda) event
/// counts and Poisson(mu) jumps. Truncating the mixture at `kmax` is exact for
/// those entries: convolution values below `kmax` never depend on mass above.
fn cp_pmf_upto(lambda: f64, mu: f64, kmax: usize) -> Vec<f64> {
    let jump: Vec<f64> = {
        let mut v = Vec::with_capacity(kmax + 1);
        let mut p = (-mu).exp();
        v.push(p);
        for k in 1..=kmax {
            p *= mu / k as f64;
            v.push(p);
        }
        v
    };
    let mut acc = vec![0.0; kmax + 1];
    let mut weight = (-lambda).exp();
    acc[0] = weight;
    let mut power = vec![0.0; kmax + 1];
    power[0] = 1.0;
    let mut used = weight;
    let mut m = 0usize;
    while 1.0 - used > 1e-14 && m < 10_000 {
        m += 1;
        weight *= lambda / m as f64;
        let mut next = vec![0.0; kmax + 1];
        for i in 0..=kmax {
            if power[i] == 0.0 {
                continue;
            }
            for j in 0..=kmax - i {
                next[i + j] += power[i] * jump[j];
            }
        }
        power = next;
        for k in 0..=kmax {
            acc[k] += weight * power[k];
        }
        used += weight;
        if weight < 1e-16 && m as f64 > lambda {
            break;
        }
    }
    acc
}

fn log_likelihood(counts: &[u64], lambda: f64, mu: f64) -> f64 {
    let kmax = counts.len() - 1;
    let pmf = cp_pmf_upto(lambda, mu, kmax);
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(k, &c)| c as f64 * pmf[k].max(1e-300).ln())
        .sum()
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Fits a compound-Poisson(lambda, Poisson(mu) jumps) distribution to
/// per-bucket consumption counts by log-grid search with local refinement.
pub fn fit_compound_poisson_mle(samples: &[u64]) -> Result<CompoundPoissonFit, MleError> {
    if samples.len() < 30 {
        return Err(MleError::InsufficientSamples(samples.len()));
    }
    let kmax = *samples.iter().max().unwrap() as usize;
    let mut counts = vec![0u64; kmax + 1];
    for &s in samples {
        counts[s as usize] += 1;
    }
    if kmax == 0 {
        // all-zero data: likelihood increases as lambda -> 0, pin at the bound
        let ll = log_likelihood(&counts, SEARCH_LO, SEARCH_LO);
        return Ok(CompoundPoissonFit {
            lambda: SEARCH_LO,
            jump_mean: SEARCH_LO,
            log_likelihood: ll,
            degenerate: true,
        });
    }

    let mut lam_range = (SEARCH_LO, SEARCH_HI);
    let mut mu_range = (SEARCH_LO, SEARCH_HI);
    let mut best = (f64::NEG_INFINITY, SEARCH_LO, SEARCH_LO);
    for _ in 0..=REFINE_ROUNDS {
        let lams = log_grid(lam_range.0, lam_range.1, GRID);
        let mus = log_grid(mu_range.0, mu_range.1, GRID);
        for &lam in &lams {
            for &mu in &mus {
                let ll = log_likelihood(&counts, lam, mu);
                if ll > best.0 {
                    best = (ll, lam, mu);
                }
            }
        }
        // shrink the window one grid step around the incumbent, clamped to the
        // original bounds
        let lam_step = (lam_range.1 / lam_range.0).powf(1.0 / (GRID - 1) as f64);
        let mu_step = (mu_range.1 / mu_range.0).powf(1.0 / (GRID - 1) as f64);
        lam_range = ((best.1 / lam_step).max(SEARCH_LO), (best.1 * lam_step).min(SEARCH_HI));
        mu_range = ((best.2 / mu_step).max(SEARCH_LO), (best.2 * mu_step).min(SEARCH_HI));
    }
    Ok(CompoundPoissonFit {
        lambda: best.1,
        jump_mean: best.2,
        log_likelihood: best.0,
        degenerate: false,
    })
}
