//! Central finite-difference verification of autodiff gradients.

use super::rng::Rng;
use super::tape::{NodeId, Tape};
use super::{Real, Tensor, TensorError};

/// Relative error with an absolute floor: |a - n| / max(|a|, |n|, 1).
/// Values below 1 are therefore compared absolutely, above 1 relatively.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1.0)
}

/// Check the gradient of a scalar-valued tensor function at `x`.
///
/// Each coordinate is perturbed by `h * max(1, |x_i|)` and the central
/// difference is compared against the autodiff gradient. Returns the maximum
/// relative error over all coordinates.
pub fn grad_check<T, F>(f: F, x: &Tensor<T>, h: f64) -> Result<f64, TensorError>
where
    T: Real,
    F: Fn(&mut Tape<T>, NodeId) -> Result<NodeId, TensorError>,
{
    let report = grad_check_multi(
        |tape, ids| f(tape, ids[0]),
        &[("x", x.clone())],
        h,
        None,
        0,
    )?;
    Ok(report.max_rel_err)
}

pub struct GradCheckReport {
    /// (input name, max relative error over its checked coordinates)
    pub per_input: Vec<(String, f64)>,
    pub max_rel_err: f64,
    pub coords_checked: usize,
}

/// Multi-input gradient check. When `samples_per_input` is set, only that
/// many coordinates per tensor are finite-differenced (chosen by a seeded
/// RNG); otherwise every coordinate is checked.
pub fn grad_check_multi<T, F>(
    f: F,
    inputs: &[(&str, Tensor<T>)],
    h: f64,
    samples_per_input: Option<usize>,
    seed: u64,
) -> Result<GradCheckReport, TensorError>
where
    T: Real,
    F: Fn(&mut Tape<T>, &[NodeId]) -> Result<NodeId, TensorError>,
{
    // Analytic pass.
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs
        .iter()
        .map(|(_, t)| tape.leaf(t.clone(), true))
        .collect();
    let root = f(&mut tape, &ids)?;
    tape.backward(root)?;
    let analytic: Vec<Tensor<T>> = ids
        .iter()
        .zip(inputs.iter())
        .map(|(&id, (_, t))| tape.grad(id).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let eval = |tensors: &[Tensor<T>]| -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = tensors.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        let root = f(&mut tape, &ids)?;
        Ok(tape.value(root).item().to64())
    };

    let mut rng = Rng::new(seed ^ 0x6a09_e667_f3bc_c908);
    let mut per_input = Vec::new();
    let mut global_max = 0.0f64;
    let mut checked = 0usize;
    let mut work: Vec<Tensor<T>> = inputs.iter().map(|(_, t)| t.clone()).collect();
    for (pi, (name, tensor)) in inputs.iter().enumerate() {
        let coords: Vec<usize> = match samples_per_input {
            Some(k) if k < tensor.numel() => rng.sample_indices(tensor.numel(), k),
            _ => (0..tensor.numel()).collect(),
        };
        let mut local_max = 0.0f64;
        for &ci in &coords {
            let x0 = tensor.data()[ci].to64();
            let step = h * x0.abs().max(1.0);
            work[pi].data_mut()[ci] = T::from64(x0 + step);
            let fp = eval(&work)?;
            work[pi].data_mut()[ci] = T::from64(x0 - step);
            let fm = eval(&work)?;
            work[pi].data_mut()[ci] = tensor.data()[ci];
            let numeric = (fp - fm) / (2.0 * step);
            let e = rel_err(analytic[pi].data()[ci].to64(), numeric);
            if e > local_max {
                local_max = e;
            }
            checked += 1;
        }
        if local_max > global_max {
            global_max = local_max;
        }
        per_input.push((name.to_string(), local_max));
    }
    Ok(GradCheckReport {
        per_input,
        max_rel_err: global_max,
        coords_checked: checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_exact() {
        let x = Tensor::<f64>::from_f64_slice(&[2, 4], &[0.3, -1.2, 0.0, 5.0, 2.0, -0.7, 1.1, 0.4])
            .unwrap();
        let err = grad_check(|tape, x| Ok(tape.sum_all(x)), &x, 1e-5).unwrap();
        assert!(err < 1e-10, "err {err}");
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        let mut rng = Rng::new(21);
        let a = Tensor::<f64>::randn(&[3, 4], 1.0, &mut rng);
        let b = Tensor::<f64>::randn(&[4, 2], 1.0, &mut rng);
        let rep = grad_check_multi(
            |tape, ids| {
                let c = tape.matmul(ids[0], ids[1])?;
                Ok(tape.sum_all(c))
            },
            &[("a", a), ("b", b)],
            1e-5,
            None,
            0,
        )
        .unwrap();
        assert!(rep.max_rel_err < 1e-5, "err {}", rep.max_rel_err);
    }

    #[test]
    fn layer_norm_gradcheck_random_row() {
        let mut rng = Rng::new(33);
        let x = Tensor::<f64>::randn(&[2, 8], 1.0, &mut rng);
        let gain = Tensor::<f64>::randn(&[8], 0.5, &mut rng);
        let bias = Tensor::<f64>::randn(&[8], 0.5, &mut rng);
        let rep = grad_check_multi(
            |tape, ids| {
                let y = tape.layer_norm(ids[0], ids[1], ids[2], 1e-5)?;
                // A non-symmetric functional so gradients are informative.
                let sm = tape.softmax_rows(y)?;
                let picked = tape.gather_rows(sm, &[0])?;
                Ok(tape.sum_all(picked))
            },
            &[("x", x), ("gain", gain), ("bias", bias)],
            1e-5,
            None,
            0,
        )
        .unwrap();
        assert!(rep.max_rel_err < 1e-5, "err {}", rep.max_rel_err);
    }

    #[test]
    fn softmax_matmul_chain_under_1e5() {
        let mut rng = Rng::new(8);
        let a = Tensor::<f64>::randn(&[3, 5], 0.8, &mut rng);
        let b = Tensor::<f64>::randn(&[5, 4], 0.8, &mut rng);
        let rep = grad_check_multi(
            |tape, ids| {
                let c = tape.matmul(ids[0], ids[1])?;
                let s = tape.softmax_rows(c)?;
                let w = tape.gather_rows(s, &[1, 2])?;
                Ok(tape.mean_all(w))
            },
            &[("a", a), ("b", b)],
            1e-5,
            None,
            0,
        )
        .unwrap();
        assert!(rep.max_rel_err < 1e-5, "err {}", rep.max_rel_err);
    }

    #[test]
    fn cross_entropy_gradcheck() {
        let mut rng = Rng::new(4);
        let logits = Tensor::<f64>::randn(&[4, 6], 1.0, &mut rng);
        let err = grad_check(
            |tape, x| tape.cross_entropy(x, &[1, 0, 5, 3], Some(&[true, false, true, true])),
            &logits,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "err {err}");
    }

    #[test]
    fn gelu_gradcheck() {
        let mut rng = Rng::new(12);
        let x = Tensor::<f64>::randn(&[2, 6], 1.5, &mut rng);
        let err = grad_check(
            |tape, x| {
                let g = tape.gelu(x);
                Ok(tape.sum_all(g))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "err {err}");
    }

    #[test]
    fn sampled_mode_checks_fewer_coords() {
        let x = Tensor::<f64>::zeros(&[10, 10]);
        let rep = grad_check_multi(
            |tape, ids| Ok(tape.sum_all(ids[0])),
            &[("x", x)],
            1e-5,
            Some(7),
            3,
        )
        .unwrap();
        assert_eq!(rep.coords_checked, 7);
    }
}
