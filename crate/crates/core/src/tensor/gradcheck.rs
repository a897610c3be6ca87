use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, GraphError, NodeId, ParamStore, Tensor};

/// One coordinate whose analytic and numeric derivatives disagree.
#[derive(Debug, Clone, PartialEq)]
pub struct GradMismatch {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub tol: f64,
    /// Coordinates whose probes crossed a pooling switch and were
    /// re-measured with a smaller step.
    pub refined: usize,
    /// Coordinates with relative error above `tol`.
    pub failures: Vec<GradMismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.max_rel_error.is_finite()
    }

    fn record(&mut self, tensor: &str, index: usize, analytic: f64, numeric: f64) {
        let rel = relative_error(analytic, numeric);
        self.checked += 1;
        if rel > self.max_rel_error || rel.is_nan() {
            self.max_rel_error = rel;
        }
        if !(rel <= self.tol) {
            self.failures.push(GradMismatch {
                tensor: tensor.into(),
                index,
                analytic,
                numeric,
                rel_error: rel,
            });
        }
    }
}

/// Smallest step tried when a probe crosses a pooling switch.
const MIN_STEP: f64 = 1e-8;

/// Central difference at `step`; if either probe lands on a different
/// max-pool argmax pattern than the unperturbed point, the step is
/// divided by ten until both probes stay on the same smooth piece.
fn central_difference(
    eval: &mut dyn FnMut(f64) -> Result<(f64, u64), GraphError>,
    base_sig: u64,
    step: f64,
) -> Result<(f64, bool), GraphError> {
    let mut h = step;
    let mut refined = false;
    loop {
        let (up, su) = eval(h)?;
        let (down, sd) = eval(-h)?;
        if (su == base_sig && sd == base_sig) || h / 10.0 < MIN_STEP {
            return Ok(((up - down) / (2.0 * h), refined));
        }
        refined = true;
        h /= 10.0;
    }
}

/// `|a - n| / (|a| + |n| + 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-12)
}

fn scalar_of(g: &Graph<f64>, node: NodeId) -> Result<f64, GraphError> {
    let v = g.value(node);
    if v.len() != 1 {
        return Err(GraphError::NonScalarLoss {
            shape: v.shape().to_vec(),
        });
    }
    Ok(v.data()[0])
}

/// Central finite-difference check of `d f(x) / d x` for a scalar-valued
/// graph builder `f`. Every coordinate of `input` is checked.
pub fn grad_check<F>(
    f: F,
    input: &Tensor<f64>,
    step: f64,
    tol: f64,
) -> Result<GradCheckReport, GraphError>
where
    F: Fn(&mut Graph<f64>, NodeId) -> Result<NodeId, GraphError>,
{
    grad_check_with(f, input, step, tol, Graph::new)
}

pub fn grad_check_with<F>(
    f: F,
    input: &Tensor<f64>,
    step: f64,
    tol: f64,
    new_graph: impl Fn() -> Graph<f64>,
) -> Result<GradCheckReport, GraphError>
where
    F: Fn(&mut Graph<f64>, NodeId) -> Result<NodeId, GraphError>,
{
    let mut g = new_graph();
    let x = g.variable(input.clone());
    let loss = f(&mut g, x)?;
    let analytic = g
        .backward_leaves(loss)?
        .get(x)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(input.shape()));

    let base_sig = g.kink_signature();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        tol,
        refined: 0,
        failures: Vec::new(),
    };
    let mut probe = input.clone();
    for i in 0..input.len() {
        let orig = input.data()[i];
        let mut eval = |h: f64| -> Result<(f64, u64), GraphError> {
            probe.data_mut()[i] = orig + h;
            let mut g = new_graph();
            let x = g.variable(probe.clone());
            let out = f(&mut g, x)?;
            Ok((scalar_of(&g, out)?, g.kink_signature()))
        };
        let (numeric, refined) = central_difference(&mut eval, base_sig, step)?;
        probe.data_mut()[i] = orig;
        report.refined += refined as usize;
        report.record("input", i, analytic.data()[i], numeric);
    }
    Ok(report)
}

/// Central finite-difference check of the gradient with respect to the
/// parameters in `store`. With `per_tensor = Some(k)` at most `k`
/// randomly chosen coordinates of every tensor are checked.
pub fn grad_check_params<F>(
    f: F,
    store: &ParamStore<f64>,
    step: f64,
    tol: f64,
    per_tensor: Option<usize>,
    seed: u64,
) -> Result<GradCheckReport, GraphError>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<NodeId, GraphError>,
{
    grad_check_params_with(f, store, step, tol, per_tensor, seed, Graph::new)
}

pub fn grad_check_params_with<F>(
    f: F,
    store: &ParamStore<f64>,
    step: f64,
    tol: f64,
    per_tensor: Option<usize>,
    seed: u64,
    new_graph: impl Fn() -> Graph<f64>,
) -> Result<GradCheckReport, GraphError>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<NodeId, GraphError>,
{
    let mut g = new_graph();
    let loss = f(&mut g, store)?;
    let analytic = g.backward(loss, store)?;
    let base_sig = g.kink_signature();
    drop(g);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = store.clone();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        tol,
        refined: 0,
        failures: Vec::new(),
    };
    for id in store.ids() {
        let n = store.get(id).len();
        let coords: Vec<usize> = match per_tensor {
            Some(k) if k < n => {
                let mut c = sample(&mut rng, n, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        for i in coords {
            let orig = store.get(id).data()[i];
            let mut eval = |h: f64| -> Result<(f64, u64), GraphError> {
                probe.get_mut(id).data_mut()[i] = orig + h;
                let mut g = new_graph();
                let out = f(&mut g, &probe)?;
                Ok((scalar_of(&g, out)?, g.kink_signature()))
            };
            let (numeric, refined) = central_difference(&mut eval, base_sig, step)?;
            probe.get_mut(id).data_mut()[i] = orig;
            report.refined += refined as usize;
            report.record(store.name(id), i, analytic.get(id).data()[i], numeric);
        }
    }
    Ok(report)
}
