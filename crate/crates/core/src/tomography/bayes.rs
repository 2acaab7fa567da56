//! Bayesian state estimation.
//!
//! The state is parameterized as `ρ = T T† / Tr(T T†)` with the 32 real
//! components of `T` drawn from a standard normal prior, which induces the
//! Hilbert-Schmidt measure on two-qubit states. Counts are Poisson with mean
//! `K · s_i · Tr(Π_i ρ)`, where `s_i` is duration times relative efficiency
//! and `K` an unknown global flux. Integrating `K` out under the
//! scale-invariant prior `1/K` leaves
//!
//! ```text
//! log L(ρ) = Σ n_i ln(s_i p_i) - N ln(Σ s_i p_i)
//! ```
//!
//! which is invariant under rescaling of `ρ`, so the unnormalized `T T†` can
//! be used directly. The posterior is explored by random-walk Metropolis with
//! a step size tuned during burn-in toward a fixed acceptance rate; several
//! chains are run and compared with the split-R̂ statistic.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    bell_psi_plus, fidelity, log_negativity, DensityMatrix4, TomographyDataset, TomographyError,
};
use crate::linalg::{c, Matrix4, C64};
use crate::math;
use crate::rng::{self, derive_seed, rng_from_seed};

const DIM: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prior {
    /// Ginibre factor with standard normal entries.
    #[default]
    HilbertSchmidt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerParams {
    pub chains: usize,
    pub burn_in: usize,
    pub samples: usize,
    /// Keep every `thin`-th post-burn-in draw.
    pub thin: usize,
    pub initial_step: f64,
    pub target_acceptance: f64,
    pub rhat_threshold: f64,
}

impl Default for SamplerParams {
    fn default() -> Self {
        Self {
            chains: 4,
            burn_in: 3000,
            samples: 6000,
            thin: 5,
            initial_step: 0.05,
            target_acceptance: 0.25,
            rhat_threshold: 1.05,
        }
    }
}

impl SamplerParams {
    fn validate(&self) -> Result<(), TomographyError> {
        if self.chains < 2 {
            return Err(TomographyError::InvalidParams("need at least two chains"));
        }
        if self.thin == 0 || self.samples / self.thin < 4 {
            return Err(TomographyError::InvalidParams("too few retained samples"));
        }
        if !(self.initial_step > 0.0) {
            return Err(TomographyError::InvalidParams("step must be positive"));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(TomographyError::InvalidParams("target acceptance outside (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub mean: DensityMatrix4,
    /// Fidelity with `|Ψ+>`.
    pub fidelity_mean: f64,
    pub fidelity_sd: f64,
    pub log_negativity_mean: f64,
    pub log_negativity_sd: f64,
    pub samples: usize,
    /// Split-R̂ of the fidelity trace across chains.
    pub rhat: f64,
    pub converged: bool,
    pub acceptance: f64,
}

impl PosteriorSummary {
    /// Whether `value` lies within `k` posterior standard deviations of the
    /// posterior mean fidelity.
    pub fn fidelity_covers(&self, value: f64, k: f64) -> bool {
        math::abs(self.fidelity_mean - value) <= k * self.fidelity_sd
    }
}

struct Term {
    vector: [C64; 4],
    weight: f64,
    counts: f64,
}

struct Likelihood {
    terms: Vec<Term>,
    total: f64,
}

impl Likelihood {
    fn new(dataset: &TomographyDataset) -> Self {
        let terms: Vec<Term> = dataset
            .entries
            .iter()
            .map(|e| Term {
                vector: e.setting.vector(),
                weight: e.duration_s * e.efficiency,
                counts: e.counts as f64,
            })
            .collect();
        let total = terms.iter().map(|t| t.counts).sum();
        Self { terms, total }
    }

    fn log_likelihood(&self, t: &Matrix4) -> f64 {
        if self.total == 0.0 {
            return 0.0;
        }
        let mut weighted = 0.0;
        let mut acc = 0.0;
        for term in &self.terms {
            // <v|T T†|v> = |T† v|²
            let mut q = 0.0;
            for col in 0..4 {
                let mut z = c(0.0, 0.0);
                for r in 0..4 {
                    z += t[(r, col)].conj() * term.vector[r];
                }
                q += z.norm_sqr();
            }
            let q = q.max(1e-300);
            weighted += term.weight * q;
            if term.counts > 0.0 {
                acc += term.counts * math::ln(term.weight * q);
            }
        }
        acc - self.total * math::ln(weighted)
    }
}

fn factor_from(z: &[f64; DIM]) -> Matrix4 {
    let mut t = Matrix4::zeros();
    for r in 0..4 {
        for col in 0..4 {
            let k = 2 * (4 * r + col);
            t[(r, col)] = c(z[k], z[k + 1]);
        }
    }
    t
}

fn params_from(t: &Matrix4) -> [f64; DIM] {
    let mut z = [0.0; DIM];
    for r in 0..4 {
        for col in 0..4 {
            let k = 2 * (4 * r + col);
            z[k] = t[(r, col)].re;
            z[k + 1] = t[(r, col)].im;
        }
    }
    z
}

fn log_prior(z: &[f64; DIM]) -> f64 {
    -0.5 * z.iter().map(|x| x * x).sum::<f64>()
}

/// Pauli-expansion estimate from per-basis relative frequencies. Needs all
/// four outcomes of every one of the nine basis pairs; the result is
/// Hermitian with unit trace but not necessarily positive.
pub fn linear_inversion(dataset: &TomographyDataset) -> Option<Matrix4> {
    // freq[axis_a][axis_b][outcome_a][outcome_b]
    let mut rates = [[[[None::<f64>; 2]; 2]; 3]; 3];
    for e in &dataset.entries {
        let (ax, sa) = e.setting.a.axis();
        let (bx, sb) = e.setting.b.axis();
        let oa = usize::from(sa < 0.0);
        let ob = usize::from(sb < 0.0);
        rates[ax][bx][oa][ob] = Some(e.counts as f64 / (e.duration_s * e.efficiency));
    }

    // s[mu][nu], index 0 = identity, 1 = X, 2 = Y, 3 = Z
    let mut s = [[0.0f64; 4]; 4];
    let pauli_index = [3usize, 1, 2];
    let mut marg_a = [[0.0f64; 3]; 3];
    let mut marg_b = [[0.0f64; 3]; 3];
    for ax in 0..3 {
        for bx in 0..3 {
            let mut p = [[0.0; 2]; 2];
            let mut total = 0.0;
            for oa in 0..2 {
                for ob in 0..2 {
                    let r = rates[ax][bx][oa][ob]?;
                    p[oa][ob] = r;
                    total += r;
                }
            }
            if total <= 0.0 {
                return None;
            }
            let sign = |o: usize| if o == 0 { 1.0 } else { -1.0 };
            let mut corr = 0.0;
            for oa in 0..2 {
                for ob in 0..2 {
                    let q = p[oa][ob] / total;
                    corr += sign(oa) * sign(ob) * q;
                    marg_a[ax][bx] += sign(oa) * q;
                    marg_b[ax][bx] += sign(ob) * q;
                }
            }
            s[pauli_index[ax]][pauli_index[bx]] = corr;
        }
    }
    s[0][0] = 1.0;
    for k in 0..3 {
        s[pauli_index[k]][0] = (marg_a[k][0] + marg_a[k][1] + marg_a[k][2]) / 3.0;
        s[0][pauli_index[k]] = (marg_b[0][k] + marg_b[1][k] + marg_b[2][k]) / 3.0;
    }

    let paulis: [[[C64; 2]; 2]; 4] = [
        [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]],
        [[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]],
        [[c(0.0, 0.0), c(0.0, -1.0)], [c(0.0, 1.0), c(0.0, 0.0)]],
        [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]],
    ];
    let mut rho = Matrix4::zeros();
    for mu in 0..4 {
        for nu in 0..4 {
            if s[mu][nu] != 0.0 {
                rho = rho + Matrix4::kron2(&paulis[mu], &paulis[nu]).scale(s[mu][nu] / 4.0);
            }
        }
    }
    Some(rho)
}

/// Positive definite starting state close to the linear-inversion estimate.
fn warm_start(dataset: &TomographyDataset) -> Matrix4 {
    let mixed = Matrix4::identity().scale(0.25);
    let Some(li) = linear_inversion(dataset) else {
        return mixed;
    };
    let floor = 0.01 / 4.0;
    let lmin = li.hermitian_eigenvalues()[0];
    let w = if lmin < floor {
        (floor - lmin) / (0.25 - lmin)
    } else {
        0.0
    };
    li.scale(1.0 - w) + mixed.scale(w)
}

struct ChainTrace {
    fidelity: Vec<f64>,
    log_negativity: Vec<f64>,
    mean_sum: Matrix4,
    accepted: usize,
    proposed: usize,
}

fn run_chain(
    likelihood: &Likelihood,
    start: &[f64; DIM],
    params: &SamplerParams,
    seed: u64,
) -> ChainTrace {
    let mut rng = rng_from_seed(seed);
    let target = bell_psi_plus();

    let mut z = *start;
    let mut log_post = log_prior(&z) + likelihood.log_likelihood(&factor_from(&z));
    let mut log_step = math::ln(params.initial_step);
    let mut window_accepts = 0usize;
    const WINDOW: usize = 50;

    let mut trace = ChainTrace {
        fidelity: Vec::with_capacity(params.samples / params.thin + 1),
        log_negativity: Vec::with_capacity(params.samples / params.thin + 1),
        mean_sum: Matrix4::zeros(),
        accepted: 0,
        proposed: 0,
    };

    let total = params.burn_in + params.samples;
    for iter in 0..total {
        let step = math::exp(log_step);
        let mut proposal = z;
        for x in proposal.iter_mut() {
            *x += step * rng::standard_normal(&mut rng);
        }
        let lp = log_prior(&proposal) + likelihood.log_likelihood(&factor_from(&proposal));
        let accept = lp >= log_post || math::ln(rng.random::<f64>()) < lp - log_post;
        if accept {
            z = proposal;
            log_post = lp;
        }

        if iter < params.burn_in {
            window_accepts += usize::from(accept);
            if (iter + 1) % WINDOW == 0 {
                let rate = window_accepts as f64 / WINDOW as f64;
                // shrink adjustments as burn-in proceeds
                let gain = 2.0 / math::sqrt(1.0 + (iter / WINDOW) as f64);
                log_step += gain * (rate - params.target_acceptance);
                window_accepts = 0;
            }
            continue;
        }

        trace.proposed += 1;
        trace.accepted += usize::from(accept);
        if (iter - params.burn_in) % params.thin == 0 {
            let rho = DensityMatrix4::from_factor(&factor_from(&z));
            trace.fidelity.push(fidelity(&rho, &target));
            trace.log_negativity.push(log_negativity(&rho));
            trace.mean_sum = trace.mean_sum + *rho.matrix();
        }
    }
    trace
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, math::sqrt(var))
}

/// Split-R̂: each chain is cut in half and the halves are compared as
/// separate chains.
pub(crate) fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0) / 2;
    if n < 2 {
        return f64::INFINITY;
    }
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..n], &c[n..2 * n]])
        .collect();
    let m = halves.len() as f64;
    let stats: Vec<(f64, f64)> = halves
        .iter()
        .map(|h| {
            let mean = h.iter().sum::<f64>() / n as f64;
            let var = h.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
            (mean, var)
        })
        .collect();
    let grand = stats.iter().map(|s| s.0).sum::<f64>() / m;
    let b = n as f64 * stats.iter().map(|s| (s.0 - grand) * (s.0 - grand)).sum::<f64>() / (m - 1.0);
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m;
    if w <= 0.0 {
        return if b <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b / n as f64;
    math::sqrt(var_plus / w)
}

/// Posterior summary for a tomography dataset; deterministic in `seed`.
///
/// A run whose split-R̂ exceeds the threshold is returned with
/// `converged == false` rather than as an error.
pub fn bayesian_estimate(
    dataset: &TomographyDataset,
    prior: Prior,
    params: &SamplerParams,
    seed: u64,
) -> Result<PosteriorSummary, TomographyError> {
    let Prior::HilbertSchmidt = prior;
    dataset.validate()?;
    params.validate()?;

    let likelihood = Likelihood::new(dataset);
    let informative = likelihood.total > 0.0;

    let start_state = warm_start(dataset);
    let factor = start_state
        .cholesky()
        .unwrap_or_else(|| Matrix4::identity().scale(0.5));
    // typical norm of a draw from the prior
    let base = params_from(&factor.scale(math::sqrt(DIM as f64)));
    let jitter = 2.0 / math::sqrt(likelihood.total + 4.0);

    let mut traces = Vec::with_capacity(params.chains);
    for chain in 0..params.chains {
        let chain_seed = derive_seed(seed, &[chain as u64]);
        let mut init_rng = rng_from_seed(derive_seed(chain_seed, &[0xfeed]));
        let mut start = [0.0; DIM];
        for (k, x) in start.iter_mut().enumerate() {
            let noise = rng::standard_normal(&mut init_rng);
            *x = if informative {
                base[k] + jitter * noise
            } else {
                noise
            };
        }
        traces.push(run_chain(&likelihood, &start, params, chain_seed));
    }

    let fidelities: Vec<f64> = traces.iter().flat_map(|t| t.fidelity.iter().copied()).collect();
    let negativities: Vec<f64> = traces
        .iter()
        .flat_map(|t| t.log_negativity.iter().copied())
        .collect();
    let (fidelity_mean, fidelity_sd) = mean_sd(&fidelities);
    let (log_negativity_mean, log_negativity_sd) = mean_sd(&negativities);

    let mut sum = Matrix4::zeros();
    for t in &traces {
        sum = sum + t.mean_sum;
    }
    let mean_matrix = sum.scale(1.0 / fidelities.len() as f64);
    // renormalize away accumulated rounding in the trace
    let mean_matrix = mean_matrix.scale(1.0 / mean_matrix.trace().re);
    let mean_matrix = (mean_matrix + mean_matrix.adjoint()).scale(0.5);
    let mean = DensityMatrix4::new(mean_matrix)?;

    let per_chain: Vec<Vec<f64>> = traces.iter().map(|t| t.fidelity.clone()).collect();
    let rhat = split_rhat(&per_chain);
    let accepted: usize = traces.iter().map(|t| t.accepted).sum();
    let proposed: usize = traces.iter().map(|t| t.proposed).sum();

    Ok(PosteriorSummary {
        mean,
        fidelity_mean,
        fidelity_sd,
        log_negativity_mean,
        log_negativity_sd,
        samples: fidelities.len(),
        rhat,
        converged: rhat < params.rhat_threshold,
        acceptance: accepted as f64 / proposed.max(1) as f64,
    })
}
