use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

use super::polya_gamma::sample_pg1;
use super::snps::SnpMatrix;
use super::{GwasConfig, GwasDraw, GwasLabels, GwasTrace};
use crate::cgmm::chain_rng;
use crate::error::{Error, Result};
use crate::stats::{norm_logpdf, sample_gamma, sample_normal};

const NEWTON_STEPS: usize = 3;
const MAX_SLICE_SHRINKS: usize = 200;

/// Log-probability of class `y` (0 = reference) given the non-reference
/// predictors of one strain.
fn class_loglik(eta: &[f64], y: usize) -> f64 {
    let m = eta.iter().fold(0.0f64, |a, b| a.max(*b));
    let lse = m + ((-m).exp() + eta.iter().map(|e| (e - m).exp()).sum::<f64>()).ln();
    let top = if y == 0 { 0.0 } else { eta[y - 1] };
    top - lse
}

struct Chain<'a> {
    snps: &'a SnpMatrix,
    y: &'a [usize],
    cfg: &'a GwasConfig,
    chol: Option<DMatrix<f64>>,
    n: usize,
    l: usize,
    omega_b: f64,
    /// n × l non-reference linear predictors, row-major.
    eta: Vec<f64>,
    alpha: Vec<f64>,
    included: BTreeMap<usize, Vec<f64>>,
    u: Vec<f64>,
    sigma_u2: f64,
    omega: f64,
    add_tries: u64,
    add_accepts: u64,
    remove_tries: u64,
    remove_accepts: u64,
}

impl<'a> Chain<'a> {
    fn row(&self, i: usize) -> &[f64] {
        &self.eta[i * self.l..(i + 1) * self.l]
    }

    fn recompute_eta(&mut self) {
        for i in 0..self.n {
            for k in 0..self.l {
                self.eta[i * self.l + k] = self.alpha[k] + self.u[i];
            }
        }
        for (j, b) in &self.included {
            for &i in self.snps.carriers(*j) {
                let i = i as usize;
                for k in 0..self.l {
                    self.eta[i * self.l + k] += b[k];
                }
            }
        }
    }

    /// Polya-Gamma block update of the intercept and included effects of
    /// each non-reference class, one class at a time against its
    /// conditional logit.
    fn update_regression<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let l = self.l;
        let s: Vec<usize> = self.included.keys().copied().collect();
        let d = 1 + s.len();
        // Dense indicators for intersection sums.
        let mut member = vec![vec![false; self.n]; s.len()];
        for (a, j) in s.iter().enumerate() {
            for &i in self.snps.carriers(*j) {
                member[a][i as usize] = true;
            }
        }
        let mut w = vec![0.0; self.n];
        let mut t = vec![0.0; self.n];
        for k in 0..l {
            for i in 0..self.n {
                let row = &self.eta[i * l..(i + 1) * l];
                let m = row.iter().enumerate().filter(|(c, _)| *c != k).fold(0.0f64, |a, (_, e)| a.max(*e));
                let others = (-m).exp()
                    + row.iter().enumerate().filter(|(c, _)| *c != k).map(|(_, e)| (e - m).exp()).sum::<f64>();
                let c = m + others.ln();
                let psi = row[k] - c;
                let omega = sample_pg1(rng, psi).max(1e-12);
                let kappa = if self.y[i] == k + 1 { 0.5 } else { -0.5 };
                w[i] = omega;
                t[i] = kappa / omega - (self.u[i] - c);
            }
            let mut prec = DMatrix::<f64>::zeros(d, d);
            let mut rhs = DVector::<f64>::zeros(d);
            prec[(0, 0)] = w.iter().sum::<f64>() + 1.0 / self.cfg.intercept_var;
            rhs[0] = w.iter().zip(&t).map(|(a, b)| a * b).sum();
            for (a, j) in s.iter().enumerate() {
                let mut g0 = 0.0;
                let mut r = 0.0;
                let mut cross = vec![0.0; s.len()];
                for &i in self.snps.carriers(*j) {
                    let i = i as usize;
                    g0 += w[i];
                    r += w[i] * t[i];
                    for (b, col) in member.iter().enumerate().skip(a + 1) {
                        if col[i] {
                            cross[b] += w[i];
                        }
                    }
                }
                prec[(0, a + 1)] = g0;
                prec[(a + 1, 0)] = g0;
                prec[(a + 1, a + 1)] = g0 + 1.0 / self.cfg.tau2_beta;
                for b in a + 1..s.len() {
                    prec[(a + 1, b + 1)] = cross[b];
                    prec[(b + 1, a + 1)] = cross[b];
                }
                rhs[a + 1] = r;
            }
            let chol = prec
                .cholesky()
                .ok_or_else(|| Error::Numerical("regression precision is not positive definite".into()))?;
            let mean = chol.solve(&rhs);
            let z = DVector::from_iterator(d, (0..d).map(|_| sample_normal(rng, 0.0, 1.0)));
            let noise = chol
                .l()
                .transpose()
                .solve_upper_triangular(&z)
                .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
            let theta = mean + noise;
            self.alpha[k] = theta[0];
            for (a, j) in s.iter().enumerate() {
                self.included.get_mut(j).unwrap()[k] = theta[a + 1];
            }
            for i in 0..self.n {
                self.eta[i * l + k] = self.alpha[k] + self.u[i];
            }
            for j in &s {
                let bk = self.included[j][k];
                for &i in self.snps.carriers(*j) {
                    self.eta[i as usize * l + k] += bk;
                }
            }
        }
        Ok(())
    }

    /// Row-scaled exponentials of the linear predictors, `l + 1` per strain
    /// with the reference class first, so softmax terms under a shift of
    /// one variant's effects need no further exponentials per strain.
    fn exp_table(&self) -> Vec<f64> {
        let mut ex = vec![0.0; self.n * (self.l + 1)];
        for i in 0..self.n {
            self.fill_exp_row(i, &mut ex);
        }
        ex
    }

    fn fill_exp_row(&self, i: usize, ex: &mut [f64]) {
        let w = self.l + 1;
        let row = self.row(i);
        let m = row.iter().fold(0.0f64, |a, b| a.max(*b));
        ex[i * w] = (-m).exp();
        for (k, e) in row.iter().enumerate() {
            ex[i * w + k + 1] = (e - m).exp();
        }
    }

    /// Log-likelihood of the carriers with their predictors moved by
    /// `ln(factor)`.
    fn carriers_loglik(&self, carriers: &[u32], ex: &[f64], factor: &[f64]) -> f64 {
        let w = self.l + 1;
        let mut total = 0.0;
        for &i in carriers {
            let i = i as usize;
            let e = &ex[i * w..(i + 1) * w];
            let denom = e[0] + e[1..].iter().zip(factor).map(|(a, f)| a * f).sum::<f64>();
            let y = self.y[i];
            let top = if y == 0 { e[0] } else { e[y] * factor[y - 1] };
            total += (top / denom).ln();
        }
        total
    }

    /// Gaussian proposal for a variant's effects from diagonal Newton steps
    /// on its conditional posterior at the reduced state. `current` holds
    /// the effects already inside the cached predictors.
    fn newton_proposal(&self, carriers: &[u32], ex: &[f64], current: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let l = self.l;
        let w = l + 1;
        let inv_tau2 = 1.0 / self.cfg.tau2_beta;
        let mut b = vec![0.0; l];
        let mut hess = vec![inv_tau2; l];
        let mut grad = vec![0.0; l];
        let mut factor = vec![0.0; l];
        let mut p = vec![0.0; l];
        for step in 0..=NEWTON_STEPS {
            for k in 0..l {
                factor[k] = (b[k] - current[k]).exp();
                grad[k] = -b[k] * inv_tau2;
                hess[k] = inv_tau2;
            }
            for &i in carriers {
                let i = i as usize;
                let e = &ex[i * w..(i + 1) * w];
                let mut denom = e[0];
                for k in 0..l {
                    p[k] = e[k + 1] * factor[k];
                    denom += p[k];
                }
                let y = self.y[i];
                let inv = 1.0 / denom;
                for k in 0..l {
                    let pk = p[k] * inv;
                    grad[k] += (y == k + 1) as u8 as f64 - pk;
                    hess[k] += pk * (1.0 - pk);
                }
            }
            if step == NEWTON_STEPS {
                break;
            }
            for k in 0..l {
                b[k] += grad[k] / hess[k];
            }
        }
        (b, hess.iter().map(|h| 1.0 / h).collect())
    }

    fn update_inclusion<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let l = self.l;
        let tau = self.cfg.tau2_beta.sqrt();
        let log_odds = self.omega.ln() - (-self.omega).ln_1p();
        let mut ex = self.exp_table();
        let zero = vec![0.0; l];
        for j in 0..self.snps.n_variants() {
            let carriers = self.snps.carriers(j);
            let current = self.included.get(&j).cloned();
            let cur = current.as_deref().unwrap_or(&zero);
            let (mode, var) = self.newton_proposal(carriers, &ex, cur);
            let log_q = |b: &[f64]| -> f64 {
                b.iter().zip(&mode).zip(&var).map(|((x, m), v)| norm_logpdf(*x, *m, v.sqrt())).sum()
            };
            let log_prior = |b: &[f64]| -> f64 { b.iter().map(|x| norm_logpdf(*x, 0.0, tau)).sum() };
            let to_factor = |b: &[f64]| -> Vec<f64> { b.iter().zip(cur).map(|(v, c)| (v - c).exp()).collect() };
            let ll_reduced = self.carriers_loglik(carriers, &ex, &to_factor(&zero));
            let (candidate, log_ratio) = match &current {
                None => {
                    let b: Vec<f64> = mode.iter().zip(&var).map(|(m, v)| sample_normal(rng, *m, v.sqrt())).collect();
                    let ll = self.carriers_loglik(carriers, &ex, &to_factor(&b));
                    let r = ll - ll_reduced + log_odds + log_prior(&b) - log_q(&b);
                    self.add_tries += 1;
                    (Some(b), r)
                }
                Some(b) => {
                    let ll = self.carriers_loglik(carriers, &ex, &vec![1.0; l]);
                    let r = ll_reduced - ll - log_odds - log_prior(b) + log_q(b);
                    self.remove_tries += 1;
                    (None, r)
                }
            };
            if !(rng.random::<f64>().ln() < log_ratio) {
                continue;
            }
            let delta: Vec<f64> = match (&candidate, &current) {
                (Some(b), None) => {
                    self.add_accepts += 1;
                    b.clone()
                }
                (None, Some(b)) => {
                    self.remove_accepts += 1;
                    b.iter().map(|v| -v).collect()
                }
                _ => unreachable!(),
            };
            for &i in carriers {
                let i = i as usize;
                for k in 0..l {
                    self.eta[i * l + k] += delta[k];
                }
                self.fill_exp_row(i, &mut ex);
            }
            match candidate {
                Some(b) => {
                    self.included.insert(j, b);
                }
                None => {
                    self.included.remove(&j);
                }
            }
        }
    }

    fn update_omega<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let s = self.included.len() as f64;
        let p = self.snps.n_variants() as f64;
        let a = sample_gamma(rng, self.cfg.omega_a + s, 1.0);
        let b = sample_gamma(rng, self.omega_b + p - s, 1.0);
        self.omega = (a / (a + b)).clamp(1e-300, 1.0 - 1e-16);
    }

    fn full_loglik(&self, shift: &[f64]) -> f64 {
        let mut row = vec![0.0; self.l];
        (0..self.n)
            .map(|i| {
                for k in 0..self.l {
                    row[k] = self.eta[i * self.l + k] + shift[i];
                }
                class_loglik(&row, self.y[i])
            })
            .sum()
    }

    /// Elliptical slice update of the polygenic effect against its
    /// `N(0, σ_u² Σ)` prior.
    fn update_random_effect<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let Some(chol) = &self.chol else { return Ok(()) };
        let z = DVector::from_iterator(self.n, (0..self.n).map(|_| sample_normal(rng, 0.0, 1.0)));
        let nu: Vec<f64> = (chol * z).iter().map(|v| v * self.sigma_u2.sqrt()).collect();
        let zero = vec![0.0; self.n];
        let threshold = self.full_loglik(&zero) + rng.random::<f64>().ln();
        let mut theta = rng.random::<f64>() * std::f64::consts::TAU;
        let (mut lo, mut hi) = (theta - std::f64::consts::TAU, theta);
        for _ in 0..MAX_SLICE_SHRINKS {
            let (s, c) = theta.sin_cos();
            let proposal: Vec<f64> = self.u.iter().zip(&nu).map(|(u, v)| u * c + v * s).collect();
            let shift: Vec<f64> = proposal.iter().zip(&self.u).map(|(p, u)| p - u).collect();
            if self.full_loglik(&shift) > threshold {
                for i in 0..self.n {
                    for k in 0..self.l {
                        self.eta[i * self.l + k] += shift[i];
                    }
                }
                self.u = proposal;
                return Ok(());
            }
            if theta < 0.0 {
                lo = theta;
            } else {
                hi = theta;
            }
            theta = lo + rng.random::<f64>() * (hi - lo);
        }
        log::warn!("elliptical slice step did not find an acceptable point; keeping the random effect");
        Ok(())
    }

    fn update_sigma_u2<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let Some(chol) = &self.chol else { return Ok(()) };
        let u = DVector::from_column_slice(&self.u);
        let w = chol.solve_lower_triangular(&u).ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let shape = self.cfg.sigma_u_shape + 0.5 * self.n as f64;
        let rate = self.cfg.sigma_u_scale + 0.5 * w.norm_squared();
        self.sigma_u2 = 1.0 / sample_gamma(rng, shape, rate);
        Ok(())
    }

    fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        self.update_regression(rng)?;
        self.update_inclusion(rng);
        self.update_omega(rng);
        self.update_random_effect(rng)?;
        self.update_sigma_u2(rng)?;
        self.recompute_eta();
        Ok(())
    }
}

/// One Metropolis-within-Gibbs chain of the spike-and-slab softmax
/// regression. `grm` must match the strain order of `labels.snps`; it is
/// ignored when the random effect is disabled.
pub fn run_gwas_chain(
    labels: &GwasLabels,
    grm: Option<&DMatrix<f64>>,
    config: &GwasConfig,
    seed: u64,
    chain: usize,
) -> Result<GwasTrace> {
    config.validate()?;
    let snps = &labels.snps;
    let n = snps.n_strains();
    let k = labels.classes.len();
    if k < 2 {
        return Err(Error::Validation("association needs at least two label classes".into()));
    }
    if labels.y.len() != n {
        return Err(Error::Validation(format!("{} labels for {n} genotyped strains", labels.y.len())));
    }
    let chol = if config.random_effect {
        let grm = grm.ok_or_else(|| Error::Validation("random effect needs a relationship matrix".into()))?;
        if grm.nrows() != n || grm.ncols() != n {
            return Err(Error::Validation(format!(
                "relationship matrix is {}x{}, expected {n}x{n}",
                grm.nrows(),
                grm.ncols()
            )));
        }
        let c = grm
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("relationship matrix is not positive definite".into()))?;
        Some(c.l())
    } else {
        None
    };
    let start = Instant::now();
    let mut rng = chain_rng(seed, chain);
    let l = k - 1;
    let mut counts = vec![0.0f64; k];
    for &c in &labels.y {
        counts[c] += 1.0;
    }
    let alpha: Vec<f64> = (1..k).map(|c| ((counts[c] + 0.5) / (counts[0] + 0.5)).ln()).collect();
    let omega_b = config.omega_b.unwrap_or(snps.n_variants() as f64);
    let mut state = Chain {
        snps,
        y: &labels.y,
        cfg: config,
        chol,
        n,
        l,
        omega_b,
        eta: vec![0.0; n * l],
        alpha,
        included: BTreeMap::new(),
        u: vec![0.0; n],
        sigma_u2: if config.sigma_u_shape > 1.0 {
            config.sigma_u_scale / (config.sigma_u_shape - 1.0)
        } else {
            config.sigma_u_scale
        },
        omega: config.omega_a / (config.omega_a + omega_b),
        add_tries: 0,
        add_accepts: 0,
        remove_tries: 0,
        remove_accepts: 0,
    };
    state.recompute_eta();
    let mut draws = Vec::with_capacity(config.retained_draws());
    for iter in 1..=config.iterations {
        state.sweep(&mut rng)?;
        if iter > config.burnin && (iter - config.burnin) % config.thin == 0 {
            draws.push(GwasDraw {
                iter,
                included: state.included.keys().map(|j| *j as u32).collect(),
                effects: state.included.values().cloned().collect(),
                intercepts: state.alpha.clone(),
                omega: state.omega,
                sigma_u2: if config.random_effect { state.sigma_u2 } else { 0.0 },
            });
        }
    }
    let rate = |a: u64, t: u64| if t == 0 { 0.0 } else { a as f64 / t as f64 };
    Ok(GwasTrace {
        classes: labels.classes.clone(),
        n_strains: n,
        n_variants: snps.n_variants(),
        seed,
        chain,
        draws,
        add_acceptance: rate(state.add_accepts, state.add_tries),
        remove_acceptance: rate(state.remove_accepts, state.remove_tries),
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// Shuffled copy of the strain order, used by the permutation tests.
#[doc(hidden)]
pub fn permute_strains<R: Rng + ?Sized>(labels: &GwasLabels, rng: &mut R) -> Result<(GwasLabels, Vec<usize>)> {
    let mut order: Vec<usize> = (0..labels.snps.n_strains()).collect();
    order.shuffle(rng);
    let ids: Vec<String> = order.iter().map(|i| labels.snps.strain_ids()[*i].clone()).collect();
    let snps = labels.snps.subset_strains(&ids)?;
    let y = order.iter().map(|i| labels.y[*i]).collect();
    Ok((GwasLabels { snps, y, classes: labels.classes.clone() }, order))
}
