//! Central-finite-difference gradient verification.
//!
//! The harness re-evaluates a scalar-valued forward closure under parameter
//! perturbations and compares against the gradients produced by the reverse
//! pass. It is the independent oracle for every differentiable operation,
//! so it deliberately shares nothing with the backward rules.

use super::{Elem, Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Half-width of the central difference.
    pub eps: f64,
    /// Cap on entries checked per parameter tensor (0 = all).
    pub max_entries_per_param: usize,
    /// Seed for entry subsampling.
    pub seed: u64,
    /// Below this magnitude the comparison is absolute, not relative.
    pub abs_floor: f64,
    /// Entries where both gradients fall below this are excluded: the
    /// difference quotient cannot resolve them at working precision.
    pub min_grad: f64,
    /// Evaluate the quotient at eps and eps/2 and exclude entries where the
    /// two disagree: a perturbation that crosses a kink (relu, abs, L1 tie)
    /// somewhere downstream makes the quotient step-size dependent, which
    /// is exactly the masked-nondifferentiable-point condition. Smooth
    /// entries agree to O(eps^2) and are Richardson-extrapolated.
    pub kink_filter: bool,
}

impl GradCheckOptions {
    /// Defaults for the 32-bit training precision. The difference quotient
    /// carries ~1e-7 relative rounding noise from each loss evaluation, so
    /// gradients below `min_grad` cannot be resolved at this precision and
    /// are excluded rather than compared against noise.
    pub fn f32_defaults() -> Self {
        GradCheckOptions {
            eps: 2e-2,
            max_entries_per_param: 0,
            seed: 0,
            abs_floor: 1e-4,
            min_grad: 5e-2,
            kink_filter: false,
        }
    }

    /// Defaults for the 64-bit check mode. The `min_grad` floor sits above
    /// the difference-quotient noise (~1e-16 * loss / eps), so parameters
    /// whose true gradient is zero (e.g. conv bias feeding a norm layer)
    /// are excluded instead of comparing noise against noise.
    pub fn f64_defaults() -> Self {
        GradCheckOptions {
            eps: 1e-5,
            max_entries_per_param: 0,
            seed: 0,
            abs_floor: 1e-10,
            min_grad: 1e-8,
            kink_filter: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckOutcome {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub checked: usize,
    pub excluded: usize,
}

impl GradCheckOutcome {
    pub fn passes(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_err < tol
    }
}

/// Compare reverse-mode gradients of `forward`'s scalar output against
/// central differences over the listed parameters.
///
/// `exclude(name, index)` masks entries where the function is not
/// differentiable (L1 ties, relu kinks near 0); masked entries count in
/// `excluded` and never affect the reported error.
pub fn grad_check<E: Elem>(
    params: &[(String, Tensor<E>)],
    forward: &mut dyn FnMut() -> Tensor<E>,
    exclude: &dyn Fn(&str, usize) -> bool,
    opts: &GradCheckOptions,
) -> Result<GradCheckOutcome> {
    for (_, p) in params {
        p.zero_grad();
    }
    let loss = forward();
    loss.backward()?;

    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|(_, p)| {
            p.grad()
                .map(|g| g.iter().map(|v| v.to_f64()).collect())
                .unwrap_or_else(|| vec![0.0; p.numel()])
        })
        .collect();
    check_against_reference(params, forward, &analytic, exclude, opts)
}

/// Compare externally supplied analytic gradients against difference
/// quotients of `forward`. This powers the cross-precision verification:
/// gradients from the f32 engine are checked against quotients of an f64
/// twin evaluated at the same parameter values, so the probe itself is
/// free of f32 rounding noise.
pub fn check_against_reference<E: Elem>(
    params: &[(String, Tensor<E>)],
    forward: &mut dyn FnMut() -> Tensor<E>,
    analytic: &[Vec<f64>],
    exclude: &dyn Fn(&str, usize) -> bool,
    opts: &GradCheckOptions,
) -> Result<GradCheckOutcome> {
    let mut outcome = GradCheckOutcome {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        checked: 0,
        excluded: 0,
    };

    for (pi, (name, param)) in params.iter().enumerate() {
        let n = param.numel();
        let indices: Vec<usize> = if opts.max_entries_per_param == 0 || n <= opts.max_entries_per_param
        {
            (0..n).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (pi as u64).wrapping_mul(0x9E3779B97F4A7C15));
            let mut all: Vec<usize> = (0..n).collect();
            for i in 0..opts.max_entries_per_param {
                let j = rng.gen_range(i..n);
                all.swap(i, j);
            }
            all.truncate(opts.max_entries_per_param);
            all
        };

        for idx in indices {
            if exclude(name, idx) {
                outcome.excluded += 1;
                continue;
            }
            let original = param.data()[idx];
            let guard = super::no_grad();
            let mut quotient = |eps: f64| -> Result<f64> {
                // Use the values as actually rounded to E, not nominal eps.
                let h = E::from_f64(eps);
                let theta_plus = original + h;
                let theta_minus = original - h;
                param.with_data_mut(|d| d[idx] = theta_plus);
                let f_plus = forward().item()?.to_f64();
                param.with_data_mut(|d| d[idx] = theta_minus);
                let f_minus = forward().item()?.to_f64();
                param.with_data_mut(|d| d[idx] = original);
                Ok((f_plus - f_minus) / (theta_plus.to_f64() - theta_minus.to_f64()))
            };

            let numeric = if opts.kink_filter {
                let n1 = quotient(opts.eps)?;
                let n2 = quotient(opts.eps / 2.0)?;
                let scale = n1.abs().max(n2.abs()).max(opts.min_grad);
                if (n1 - n2).abs() <= 0.25 * scale {
                    // smooth here: Richardson cancels the O(eps^2) term
                    (4.0 * n2 - n1) / 3.0
                } else {
                    // step-size dependent quotient: drill down once; if the
                    // dependence persists, a kink sits inside the stencil
                    // and the point is not differentiable here. A wrong
                    // backward rule stays step-size CONSISTENT and is not
                    // excused by this path.
                    let n3 = quotient(opts.eps / 4.0)?;
                    let scale = n2.abs().max(n3.abs()).max(opts.min_grad);
                    if (n2 - n3).abs() > 0.25 * scale {
                        drop(guard);
                        outcome.excluded += 1;
                        continue;
                    }
                    (4.0 * n3 - n2) / 3.0
                }
            } else {
                quotient(opts.eps)?
            };
            drop(guard);
            let a = analytic[pi][idx];
            let denom = a.abs().max(numeric.abs());
            if denom < opts.min_grad {
                outcome.excluded += 1;
                continue;
            }
            let err = if denom < opts.abs_floor {
                (a - numeric).abs()
            } else {
                (a - numeric).abs() / denom
            };
            outcome.checked += 1;
            if err > outcome.max_rel_err {
                outcome.max_rel_err = err;
                outcome.worst_param = name.clone();
                outcome.worst_index = idx;
            }
        }
    }
    Ok(outcome)
}
