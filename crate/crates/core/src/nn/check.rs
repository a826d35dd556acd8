use super::{NnError, ParamRef, Params, Tape, Var};
use crate::scalar::FloatScalar;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport<T> {
    /// max over entries of |analytic - numeric| / max(|analytic|, |numeric|, FD_FLOOR)
    pub max_rel_error: T,
    /// max over entries of |analytic - numeric|
    pub max_abs_error: T,
    /// Entry with the largest error.
    pub worst: Option<(ParamRef, usize)>,
    pub entries_checked: usize,
    /// Smallest |pre-activation| seen by a relu during the analytic pass.
    pub relu_margin: Option<T>,
}

/// Gradient magnitude below which central differences at double precision
/// cannot resolve a relative error; such entries are judged against it.
pub const FD_FLOOR: f64 = 1e-6;

/// Compares reverse-mode gradients of `loss` against central differences.
///
/// `loss` records a scalar on the tape it is handed; it is re-run twice per
/// parameter entry. Grads of every tensor in `params` are zeroed first and
/// hold the analytic gradient afterwards.
pub fn grad_check<T, P, F>(params: &mut P, eps: T, loss: F) -> Result<GradCheckReport<T>, NnError>
where
    T: FloatScalar,
    P: Params<T> + ?Sized,
    F: Fn(&mut Tape<T>, &P) -> Result<Var, NnError>,
{
    let refs = params.refs();
    for &r in &refs {
        params.tensor_mut(r).zero_grad();
    }
    let mut tape = Tape::new();
    let out = loss(&mut tape, params)?;
    let relu_margin = tape.relu_margin();
    tape.backward(out, params)?;

    let two = T::one() + T::one();
    let floor = T::lit(FD_FLOOR);
    let mut report = GradCheckReport {
        max_rel_error: T::zero(),
        max_abs_error: T::zero(),
        worst: None,
        entries_checked: 0,
        relu_margin,
    };
    let eval = |params: &P| -> Result<T, NnError> {
        let mut tape = Tape::new();
        let v = loss(&mut tape, params)?;
        Ok(tape.scalar(v))
    };
    for &r in &refs {
        for j in 0..params.tensor(r).len() {
            let orig = params.tensor(r).values[j];
            params.tensor_mut(r).values[j] = orig + eps;
            let plus = eval(params)?;
            params.tensor_mut(r).values[j] = orig - eps;
            let minus = eval(params)?;
            params.tensor_mut(r).values[j] = orig;

            let numeric = (plus - minus) / (two * eps);
            let analytic = params.tensor(r).grad[j];
            let diff = (analytic - numeric).abs();
            let err = diff / analytic.abs().max(numeric.abs()).max(floor);
            report.max_abs_error = report.max_abs_error.max(diff);
            if !(err <= report.max_rel_error) {
                report.max_rel_error = err;
                report.worst = Some((r, j));
            }
            report.entries_checked += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Head, Mlp, NetworkSpec, ParamStore};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn check_mlp(hidden: Vec<usize>, input: Vec<f64>, seed: u64) -> GradCheckReport<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::<f64>::new();
        let net = Mlp::new(NetworkSpec::new(input.len(), hidden, Head::Logits(2)), &mut store, "n", &mut rng);
        grad_check(&mut store, 1e-5, |tape, p| {
            let x = tape.input(input.clone());
            let y = net.forward(tape, p, 0, x)?;
            let lp = tape.log_softmax(y);
            let a = tape.pick(lp, 0)?;
            Ok(tape.scale(a, -1.0))
        })
        .unwrap()
    }

    #[test]
    fn linear_net() {
        let r = check_mlp(vec![], vec![0.3, -1.2], 1);
        assert!(r.max_rel_error < 1e-6, "{r:?}");
        assert_eq!(r.entries_checked, 6);
    }

    #[test]
    fn relu_net_away_from_kinks() {
        let r = check_mlp(vec![16], vec![0.5, 0.25], 2);
        assert!(r.relu_margin.unwrap() > 1e-3);
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn zero_network_has_zero_gradients_on_value_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::<f64>::new();
        let net = Mlp::new(NetworkSpec::new(2, vec![4], Head::Value), &mut store, "v", &mut rng);
        for t in &mut store.tensors {
            t.values.iter_mut().for_each(|v| *v = 0.0);
        }
        let r = grad_check(&mut store, 1e-5, |tape, p| {
            let x = tape.input(vec![0.7, 0.1]);
            net.forward(tape, p, 0, x)
        })
        .unwrap();
        // output bias has gradient 1; every other entry is exactly 0 both ways
        assert_eq!(r.max_rel_error, 0.0);
        let nonzero: Vec<f64> = store
            .tensors
            .iter()
            .flat_map(|t| t.grad.iter().copied())
            .filter(|&g| g != 0.0)
            .collect();
        assert_eq!(nonzero, vec![1.0]);
    }
}
