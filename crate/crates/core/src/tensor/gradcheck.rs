use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of comparing autodiff gradients with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Flat index (across all inputs, in order) of the worst entry.
    pub worst: Option<usize>,
    pub checked: usize,
    /// Entries whose every stencil crossed a kink, so no difference quotient
    /// was meaningful.
    pub skipped: usize,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }

    pub fn merge(self, other: GradCheck) -> GradCheck {
        let (max_rel_error, worst) = if other.max_rel_error > self.max_rel_error {
            (other.max_rel_error, other.worst.map(|w| w + self.checked + self.skipped))
        } else {
            (self.max_rel_error, self.worst)
        };
        GradCheck {
            max_rel_error,
            worst,
            checked: self.checked + other.checked,
            skipped: self.skipped + other.skipped,
        }
    }
}

/// `|a − n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the gradient of a scalar function `f` at `x` against central
/// differences with step `eps`.
pub fn finite_diff_check<F>(f: F, x: &Tensor, eps: f64) -> Result<GradCheck>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    finite_diff_check_many(|g, vs| f(g, vs[0]), std::slice::from_ref(x), eps)
}

/// Multi-input variant of [`finite_diff_check`]: every entry of every input
/// is perturbed in turn.
pub fn finite_diff_check_many<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let all: Vec<Vec<usize>> = inputs.iter().map(|t| (0..t.len()).collect()).collect();
    finite_diff_check_at(f, inputs, &all, eps)
}

/// Like [`finite_diff_check_many`] but perturbs only the listed entries of
/// each input (`coords[i]` indexes into `inputs[i]`).
pub fn finite_diff_check_at<F>(f: F, inputs: &[Tensor], coords: &[Vec<usize>], eps: f64) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    finite_diff_check_steps(f, inputs, coords, &[eps])
}

/// Like [`finite_diff_check_at`] with fallback step sizes. A stencil whose
/// ends lie on a different smooth piece than the base point (a ReLU input or
/// BCE clamp changed side, see [`Graph::kink_signature`]) gives a meaningless
/// quotient, so the next step in `steps` is tried; an entry where every step
/// crosses a kink is counted as skipped.
pub fn finite_diff_check_steps<F>(
    f: F,
    inputs: &[Tensor],
    coords: &[Vec<usize>],
    steps: &[f64],
) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if coords.len() != inputs.len() {
        return Err(Error::shape("finite_diff_check_at", &[inputs.len()], &[coords.len()]));
    }
    for (t, cs) in inputs.iter().zip(coords) {
        if let Some(&k) = cs.iter().find(|&&k| k >= t.len()) {
            return Err(Error::shape("finite_diff_check_at", t.shape(), &[k]));
        }
    }
    if steps.is_empty() {
        return Err(Error::Empty("finite-difference steps"));
    }
    if let Some(eps) = steps.iter().find(|&&e| e.is_nan() || e <= 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {eps}")));
    }
    let tracked: Vec<Tensor> = inputs
        .iter()
        .map(|t| t.clone().with_requires_grad(true))
        .collect();

    let (analytic, base): (Vec<Vec<f64>>, u64) = {
        let mut g = Graph::new();
        let vars: Vec<Var> = tracked.iter().map(|t| g.leaf_ref(t)).collect();
        let out = f(&mut g, &vars)?;
        if g.value(out).len() != 1 {
            return Err(Error::shape("finite_diff_check output", g.shape(out), &[1]));
        }
        g.backward_scalar(out)?;
        let grads = vars
            .iter()
            .zip(&tracked)
            .map(|(&v, t)| g.grad(v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
            .collect();
        (grads, g.kink_signature())
    };

    let eval = |probe: &[Tensor]| -> Result<(f64, u64)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = probe.iter().map(|t| g.leaf_ref(t)).collect();
        let out = f(&mut g, &vars)?;
        Ok((g.value(out).data()[0], g.kink_signature()))
    };

    let mut probe = tracked.clone();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped: 0,
    };
    for (which, grads) in analytic.iter().enumerate() {
        for &k in &coords[which] {
            let orig = probe[which].data()[k];
            let mut err = None;
            for &eps in steps {
                probe[which].data_mut()[k] = orig + eps;
                let (up, su) = eval(&probe)?;
                probe[which].data_mut()[k] = orig - eps;
                let (down, sd) = eval(&probe)?;
                probe[which].data_mut()[k] = orig;
                if su == base && sd == base {
                    err = Some(relative_error(grads[k], (up - down) / (2.0 * eps)));
                    break;
                }
            }
            let Some(err) = err else {
                report.skipped += 1;
                continue;
            };
            if err > report.max_rel_error || report.worst.is_none() && err >= report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some(report.checked + report.skipped);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let x = Tensor::scalar(3.0);
        let r = finite_diff_check(|g, x| g.mul(x, x), &x, 1e-4).unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let x = Tensor::vector(vec![1.0, -2.0]).unwrap();
        let r = finite_diff_check(|g, _| Ok(g.constant(Tensor::scalar(4.0))), &x, 1e-4).unwrap();
        assert_eq!(r.max_rel_error, 0.0);
        assert_eq!(r.checked, 2);
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let x = Tensor::vector(vec![1.0, 2.0]).unwrap();
        assert!(finite_diff_check(|g, x| Ok(g.relu(x)), &x, 1e-4).is_err());
        assert!(finite_diff_check(|g, x| Ok(g.sum(x)), &x, 0.0).is_err());
    }

    #[test]
    fn stencil_across_a_relu_kink_is_skipped() {
        let x = Tensor::vector(vec![1e-4, 0.5]).unwrap();
        let f = |g: &mut Graph, v: &[Var]| {
            let y = g.relu(v[0]);
            Ok(g.sum(y))
        };
        let r = finite_diff_check_steps(f, std::slice::from_ref(&x), &[vec![0, 1]], &[1e-3]).unwrap();
        assert_eq!((r.checked, r.skipped), (1, 1));
        let r = finite_diff_check_steps(f, &[x], &[vec![0, 1]], &[1e-3, 1e-5]).unwrap();
        assert_eq!((r.checked, r.skipped), (2, 0));
        assert!(r.max_rel_error < 1e-9);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 0.5) - 0.5).abs() < 1e-15);
    }
}
