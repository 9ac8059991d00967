use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Worst disagreement found by [`grad_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub param: usize,
    pub element: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Magnitude below which gradient errors are measured absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-4;

/// Compares reverse-mode gradients of the scalar built by `f` against central
/// finite differences with step `eps`, over every element of `params`.
///
/// `f` receives the graph and one trainable leaf per parameter. The relative
/// error of an element is `|a - n| / max(|a|, |n|, GRAD_CHECK_FLOOR)`.
pub fn grad_check<F>(f: F, params: &mut [Tensor<f64>], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |params: &[Tensor<f64>]| -> Result<(Graph<f64>, Vec<Var>, Var)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
        let loss = f(&mut g, &vars)?;
        g.check_finite()?;
        Ok((g, vars, loss))
    };
    let (g, vars, loss) = eval(params)?;
    let grads = g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params.iter())
        .map(|(&v, p)| grads.get(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p.len()]))
        .collect();
    drop(g);
    let mut report = GradCheckReport { max_rel_err: 0.0, param: 0, element: 0, analytic: 0.0, numeric: 0.0 };
    for pi in 0..params.len() {
        for ei in 0..params[pi].len() {
            let orig = params[pi].data()[ei];
            params[pi].data_mut()[ei] = orig + eps;
            let (g, _, l) = eval(params)?;
            let plus = g.value(l).data()[0];
            params[pi].data_mut()[ei] = orig - eps;
            let (g, _, l) = eval(params)?;
            let minus = g.value(l).data()[0];
            params[pi].data_mut()[ei] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[pi][ei];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
            if rel > report.max_rel_err || (pi, ei) == (0, 0) {
                report = GradCheckReport { max_rel_err: rel, param: pi, element: ei, analytic: a, numeric };
            }
        }
    }
    Ok(report)
}
