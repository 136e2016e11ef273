use super::{Graph, Tensor, Var};
use crate::error::Result;

/// Comparison of one gradient coordinate against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
    /// The perturbation crossed a discrete branch (ReLU kink, histogram bin
    /// edge), so the finite difference is meaningless here.
    pub nondifferentiable: bool,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    /// Largest relative error over coordinates that were not flagged.
    pub max_rel_err: f64,
    pub flagged: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }

    pub fn checked(&self) -> usize {
        self.entries.len() - self.flagged
    }
}

/// Errors below this magnitude are measured absolutely rather than relatively.
pub const REL_ERR_FLOOR: f64 = 1e-6;

fn eval<F>(f: &F, inputs: &[Tensor]) -> Result<(f64, u64)>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::with_branch_tracking();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t)).collect();
    let out = f(&mut g, &vars)?;
    Ok((g.value(out).item(), g.branch_hash()))
}

/// Checks tape gradients of the scalar function `f` at `inputs` against
/// central differences with step `h`, coordinate by coordinate.
///
/// The relative error is `|a - n| / max(|a|, |n|, REL_ERR_FLOOR)`.
/// Coordinates whose `+h` or `-h` evaluation takes a different discrete
/// branch than the base point are reported as non-differentiable and left out
/// of `max_rel_err`.
pub fn grad_check<F>(inputs: &[Tensor], h: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::with_branch_tracking();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t)).collect();
    let out = f(&mut g, &vars)?;
    let base_hash = g.branch_hash();
    g.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| g.grad(v).unwrap()).collect();

    let mut entries = Vec::new();
    let mut work = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        for j in 0..input.len() {
            let x = input.data()[j];
            work[i].data_mut()[j] = x + h;
            let (fp, hp) = eval(&f, &work)?;
            work[i].data_mut()[j] = x - h;
            let (fm, hm) = eval(&f, &work)?;
            work[i].data_mut()[j] = x;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[i].data()[j];
            let rel_err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
            entries.push(GradCheckEntry {
                input: i,
                index: j,
                analytic: a,
                numeric,
                rel_err,
                nondifferentiable: hp != base_hash || hm != base_hash,
            });
        }
    }
    let flagged = entries.iter().filter(|e| e.nondifferentiable).count();
    let max_rel_err = entries
        .iter()
        .filter(|e| !e.nondifferentiable)
        .map(|e| e.rel_err)
        .fold(0.0, f64::max);
    Ok(GradCheckReport {
        entries,
        max_rel_err,
        flagged,
    })
}
