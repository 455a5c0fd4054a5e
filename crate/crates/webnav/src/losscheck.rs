//! Self-check of the loss implementations against closed forms and
//! numerical differentiation.

use std::fmt;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use webnav_core::alignment::{dpo_loss, grad_dpo, sft_loss, total_loss_with, LossError, LossInputs, LossMode};

/// DPO loss of (−1.0, −1.2, −2.0, −1.5) at β = 0.15, computed to 20 digits.
pub const REFERENCE_CASE: f64 = 0.642_024_672_948_695_4;
pub const REFERENCE_BETA: f64 = 0.15;

#[derive(Debug, Clone)]
pub struct LossCheckOptions {
    pub beta: f64,
    pub lambda: f64,
    pub samples: usize,
    pub seed: u64,
    pub step: f64,
}

impl Default for LossCheckOptions {
    fn default() -> Self {
        LossCheckOptions {
            beta: webnav_core::alignment::DEFAULT_BETA,
            lambda: webnav_core::alignment::DEFAULT_LAMBDA,
            samples: 1000,
            seed: 0,
            step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.detail)
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn error(name: &'static str, e: impl fmt::Display) -> Check {
    check(name, false, format!("error: {e}"))
}

fn random_inputs(rng: &mut StdRng, beta: f64) -> LossInputs {
    let mut lp = || -rng.random_range(0.01..20.0);
    let (a, b, c, d) = (lp(), lp(), lp(), lp());
    LossInputs::new(a, b, c, d).with_beta(beta)
}

fn central_difference(x: &LossInputs, h: f64) -> Result<[f64; 4], LossError> {
    let mut out = [0.0; 4];
    for (k, slot) in out.iter_mut().enumerate() {
        let at = |delta: f64| {
            let mut y = *x;
            match k {
                0 => y.logp_policy_chosen += delta,
                1 => y.logp_ref_chosen += delta,
                2 => y.logp_policy_rejected += delta,
                _ => y.logp_ref_rejected += delta,
            }
            dpo_loss(&y)
        };
        *slot = (at(h)? - at(-h)?) / (2.0 * h);
    }
    Ok(out)
}

/// Runs every check. Inputs to the random checks stay at least 1e-2 away
/// from zero so the `±h` probes remain valid log-probabilities.
pub fn run_checks(opts: &LossCheckOptions) -> Vec<Check> {
    let mut out = Vec::new();
    let ln2 = std::f64::consts::LN_2;

    let name = "dpo at policy = reference is ln 2";
    match [(-4.0, -9.5), (-0.5, -0.25), (-30.0, -1.0)]
        .iter()
        .map(|&(c, r)| dpo_loss(&LossInputs::new(c, c, r, r).with_beta(opts.beta)))
        .collect::<Result<Vec<_>, _>>()
    {
        Ok(values) => {
            let worst = values.iter().map(|v| (v - ln2).abs()).fold(0.0, f64::max);
            out.push(check(name, worst < 1e-12, format!("max |loss - ln 2| = {worst:.3e}")));
        }
        Err(e) => out.push(error(name, e)),
    }

    let name = "reference case";
    match dpo_loss(&LossInputs::new(-1.0, -1.2, -2.0, -1.5).with_beta(REFERENCE_BETA)) {
        Ok(v) => {
            let err = (v - REFERENCE_CASE).abs();
            out.push(check(
                name,
                err < 1e-9,
                format!("(-1.0, -1.2, -2.0, -1.5) at beta 0.15: {v:.16} (|error| = {err:.3e})"),
            ));
        }
        Err(e) => out.push(error(name, e)),
    }

    let mut rng = StdRng::seed_from_u64(opts.seed);
    let mut worst_rel: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    let mut failure = None;
    for _ in 0..opts.samples {
        let x = random_inputs(&mut rng, opts.beta);
        match (grad_dpo(&x), central_difference(&x, opts.step)) {
            (Ok(g), Ok(fd)) => {
                for k in 0..4 {
                    worst_rel = worst_rel.max((g[k] - fd[k]).abs() / g[k].abs().max(f64::MIN_POSITIVE));
                }
                worst_sum = worst_sum.max(g.iter().sum::<f64>().abs());
            }
            (Err(e), _) | (_, Err(e)) => {
                failure = Some(e);
                break;
            }
        }
    }
    let name = "gradient matches central differences";
    match failure {
        Some(e) => out.push(error(name, e)),
        None => {
            out.push(check(
                name,
                worst_rel < 1e-6,
                format!(
                    "{} inputs, h = {:e}, max relative error {worst_rel:.3e}",
                    opts.samples, opts.step
                ),
            ));
            out.push(check(
                "gradient components sum to zero",
                worst_sum < 1e-15,
                format!("max |sum| = {worst_sum:.3e}"),
            ));
        }
    }

    let name = "total loss is affine in lambda";
    let x = LossInputs::new(-1.0, -1.2, -2.0, -1.5).with_beta(opts.beta);
    let affine = || -> Result<(f64, f64), LossError> {
        let at = |lambda: f64| total_loss_with(&x, LossMode::WeightedDpo { lambda });
        let (dpo, sft) = (dpo_loss(&x)?, sft_loss(x.logp_policy_chosen)?);
        let (t0, t1, t2) = (at(0.0)?, at(opts.lambda)?, at(2.0 * opts.lambda)?);
        Ok(((t1 - (opts.lambda * dpo + sft)).abs(), (t1 - 0.5 * (t0 + t2)).abs()))
    };
    match affine() {
        Ok((direct, midpoint)) => out.push(check(
            name,
            direct < 1e-12 && midpoint < 1e-12,
            format!("|total - (lambda dpo + sft)| = {direct:.3e}, midpoint defect {midpoint:.3e}"),
        )),
        Err(e) => out.push(error(name, e)),
    }

    out
}
