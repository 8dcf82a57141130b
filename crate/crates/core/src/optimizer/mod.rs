//! Sparse factorization of an embedding signal `E ~ Psi A`.
//!
//! `Psi` (`M x k`) holds one candidate speaker embedding per column and `A`
//! (`k x T`) holds per-step speaker activity. The objective is
//!
//! ```text
//! |E - Psi A|_1 + l1 |Psi|_1 + l2 |A|_1 + l3 J(A)
//! J(A) = 1/(kT) sum_r sum_t |A[r,t] - A[r,t-1]|
//! ```
//!
//! subject to `|Psi[:,c]|_2 <= 1` and `0 <= A <= 1`. It is minimized by
//! alternating half-steps: an Adam step on the reconstruction (and jitter)
//! subgradient, soft thresholding for the L1 penalty, then projection back
//! onto the feasible set.

mod adam;
mod ops;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use adam::AdamState;
pub use ops::{
    compute_loss, grad_a, grad_psi, jitter_loss, normalize_basis_columns, project_interval, project_unit_disk, shrink,
    LossBreakdown,
};

use crate::error::{Error, Result};
use crate::signal::EmbeddingSignal;

/// Feasibility slack for basis column norms.
pub const BASIS_NORM_TOL: f64 = 1e-9;
/// Abort when the total loss grows past this multiple of its initial value.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

/// Speaker basis: columns have L2 norm at most one.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix(pub(crate) DMatrix<f64>);

impl BasisMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        for (c, col) in data.column_iter().enumerate() {
            let norm = col.norm();
            if !(norm <= 1.0 + BASIS_NORM_TOL) {
                return Err(Error::InvalidArgument(format!("basis column {c} has norm {norm} > 1")));
            }
        }
        Ok(Self(data))
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn is_feasible(&self) -> bool {
        self.0.column_iter().all(|c| c.norm() <= 1.0 + BASIS_NORM_TOL)
    }
}

/// Speaker activity: every entry lies in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix(pub(crate) DMatrix<f64>);

impl ActivationMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("activation {v} outside [0, 1]")));
        }
        Ok(Self(data))
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn speakers(&self) -> usize {
        self.0.nrows()
    }

    pub fn steps(&self) -> usize {
        self.0.ncols()
    }

    /// Total activation of each row.
    pub fn row_mass(&self) -> Vec<f64> {
        self.0.row_iter().map(|r| r.sum()).collect()
    }

    pub fn is_feasible(&self) -> bool {
        self.0.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

/// How basis columns are brought back into the unit ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BasisProjection {
    /// Scale a column only when its norm exceeds one.
    #[default]
    Disk,
    /// Rescale every nonzero column to unit norm.
    Normalize,
}

/// Step length used by the soft-thresholding that follows each Adam update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShrinkStep {
    /// Adam's per-coordinate step `lr / (sqrt(v_hat) + eps)`, so the L1
    /// penalty keeps its weight relative to the data term.
    #[default]
    Preconditioned,
    /// The nominal learning rate for every coordinate.
    Nominal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// Weight of the basis L1 penalty.
    pub lambda1: f64,
    /// Weight of the activation L1 penalty.
    pub lambda2: f64,
    /// Weight of the jitter penalty.
    pub lambda3: f64,
    pub lr_psi: f64,
    pub lr_a: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    /// Window length for the moving-average convergence test.
    pub patience: usize,
    pub seed: u64,
    /// Independent random starts; the one with the lowest final loss wins.
    pub restarts: usize,
    pub basis_projection: BasisProjection,
    pub shrink_step: ShrinkStep,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            lambda1: 0.3366,
            lambda2: 0.2424,
            lambda3: 0.06,
            lr_psi: 0.01,
            lr_a: 0.01,
            max_iters: 5000,
            rel_tol: 1e-5,
            patience: 10,
            seed: 0,
            restarts: 8,
            basis_projection: BasisProjection::Disk,
            shrink_step: ShrinkStep::Preconditioned,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [("lr_psi", self.lr_psi), ("lr_a", self.lr_a), ("rel_tol", self.rel_tol)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidArgument("patience must be >= 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("restarts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Adam state for both factors plus the iteration counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub psi: AdamState,
    pub a: AdamState,
    pub iteration: usize,
}

impl OptimizerState {
    pub fn new(m: usize, k: usize, t: usize) -> Self {
        Self {
            psi: AdamState::new(m, k),
            a: AdamState::new(k, t),
            iteration: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Factorization {
    pub psi: BasisMatrix,
    pub activations: ActivationMatrix,
    /// Entry 0 is the loss at initialization, entry `i` the loss after
    /// iteration `i`.
    pub trace: Vec<LossBreakdown>,
    pub iterations: usize,
    pub converged: bool,
    /// Index of the random start this result came from.
    pub restart: usize,
}

impl Factorization {
    pub fn initial_loss(&self) -> &LossBreakdown {
        &self.trace[0]
    }

    pub fn final_loss(&self) -> &LossBreakdown {
        self.trace.last().expect("trace holds the initial loss")
    }

    /// Loss trace as CSV with header
    /// `iteration,reconstruction,l1_psi,l1_a,jitter,total`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,reconstruction,l1_psi,l1_a,jitter,total\n");
        for (i, l) in self.trace.iter().enumerate() {
            out.push_str(&format!(
                "{i},{:.9},{:.9},{:.9},{:.9},{:.9}\n",
                l.reconstruction, l.l1_psi, l.l1_a, l.jitter, l.total
            ));
        }
        out
    }
}

/// Snapshot handed to a [`factorize_with`] observer after every iteration.
#[derive(Clone, Copy)]
pub struct IterationView<'a> {
    pub restart: usize,
    pub iteration: usize,
    pub psi: &'a BasisMatrix,
    pub activations: &'a ActivationMatrix,
    pub loss: &'a LossBreakdown,
}

/// Seeded feasible starting point: unit-norm Gaussian basis columns and
/// uniform `[0, 1)` activations.
pub fn initialize(m: usize, k: usize, t: usize, seed: u64) -> (BasisMatrix, ActivationMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut psi = DMatrix::<f64>::from_fn(m, k, |_, _| rng.sample(StandardNormal));
    for mut col in psi.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let a = DMatrix::<f64>::from_fn(k, t, |_, _| rng.random::<f64>());
    (BasisMatrix(psi), ActivationMatrix(a))
}

pub fn factorize(signal: &EmbeddingSignal, k: usize, hp: &Hyperparams) -> Result<Factorization> {
    factorize_with(signal, k, hp, |_| {})
}

/// Seed of random start `restart`; start 0 uses `seed` itself.
pub fn restart_seed(seed: u64, restart: usize) -> u64 {
    seed.wrapping_add((restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Runs the alternating solver from `hp.restarts` seeded starting points and
/// keeps the run with the lowest final loss (the earliest one on ties).
/// `observer` sees every iteration of every run.
pub fn factorize_with<F>(signal: &EmbeddingSignal, k: usize, hp: &Hyperparams, mut observer: F) -> Result<Factorization>
where
    F: FnMut(&IterationView<'_>),
{
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    hp.validate()?;
    let target = signal.to_f64();
    let mut best: Option<Factorization> = None;
    for restart in 0..hp.restarts {
        let (psi, a) = initialize(target.nrows(), k, target.ncols(), restart_seed(hp.seed, restart));
        let mut run = factorize_from(&target, psi, a, hp, |view| {
            observer(&IterationView { restart, ..*view })
        })?;
        run.restart = restart;
        let better = best
            .as_ref()
            .is_none_or(|b| run.final_loss().total < b.final_loss().total);
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Solver core on an arbitrary target matrix and starting point.
pub fn factorize_from<F>(
    target: &DMatrix<f64>,
    psi: BasisMatrix,
    activations: ActivationMatrix,
    hp: &Hyperparams,
    mut observer: F,
) -> Result<Factorization>
where
    F: FnMut(&IterationView<'_>),
{
    hp.validate()?;
    ops::check_shapes(target, psi.as_matrix(), activations.as_matrix())?;
    let (m, t) = target.shape();
    let k = psi.as_matrix().ncols();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }

    let mut psi = psi.into_inner();
    let mut a = activations.into_inner();
    let mut state = OptimizerState::new(m, k, t);

    let initial = compute_loss(target, &psi, &a, hp)?;
    if !initial.is_finite() {
        return Err(Error::Diverged {
            iteration: 0,
            reason: "non-finite initial loss".into(),
        });
    }
    let mut trace = Vec::with_capacity(hp.max_iters.min(100_000) + 1);
    trace.push(initial);
    let limit = DIVERGENCE_FACTOR * initial.total.max(f64::MIN_POSITIVE);
    let mut converged = false;

    let mut psi_steps = DMatrix::<f64>::zeros(m, k);
    let mut a_steps = DMatrix::<f64>::zeros(k, t);

    while state.iteration < hp.max_iters {
        state.iteration += 1;
        let iteration = state.iteration;

        // basis half-step
        let (signs, _) = ops::residual_signs(target, &psi, &a);
        let g_psi = ops::grad_psi_from_signs(&signs, &a);
        state.psi.step(&mut psi, &g_psi, hp.lr_psi);
        match hp.shrink_step {
            ShrinkStep::Preconditioned => {
                state.psi.effective_steps(hp.lr_psi, &mut psi_steps);
                ops::shrink_scaled_in_place(&mut psi, &psi_steps, hp.lambda1);
            }
            ShrinkStep::Nominal => ops::shrink_in_place(&mut psi, hp.lr_psi * hp.lambda1),
        }
        psi = match hp.basis_projection {
            BasisProjection::Disk => project_unit_disk(&psi).0,
            BasisProjection::Normalize => normalize_basis_columns(&psi).0,
        };

        // activation half-step against the updated basis
        let (signs, _) = ops::residual_signs(target, &psi, &a);
        let g_a = ops::grad_a_from_signs(&signs, &psi, &a, hp.lambda3);
        state.a.step(&mut a, &g_a, hp.lr_a);
        match hp.shrink_step {
            ShrinkStep::Preconditioned => {
                state.a.effective_steps(hp.lr_a, &mut a_steps);
                ops::shrink_scaled_in_place(&mut a, &a_steps, hp.lambda2);
            }
            ShrinkStep::Nominal => ops::shrink_in_place(&mut a, hp.lr_a * hp.lambda2),
        }
        a = project_interval(&a).0;

        let loss = compute_loss(target, &psi, &a, hp)?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                iteration,
                reason: "non-finite loss".into(),
            });
        }
        if loss.total > limit {
            return Err(Error::Diverged {
                iteration,
                reason: format!(
                    "loss {} exceeds {}x the initial loss {}",
                    loss.total, DIVERGENCE_FACTOR, initial.total
                ),
            });
        }
        trace.push(loss);

        let psi_view = BasisMatrix(psi);
        let a_view = ActivationMatrix(a);
        debug_assert!(psi_view.is_feasible(), "basis left the unit ball");
        debug_assert!(a_view.is_feasible(), "activations left [0, 1]");
        observer(&IterationView {
            restart: 0,
            iteration,
            psi: &psi_view,
            activations: &a_view,
            loss: &loss,
        });
        psi = psi_view.0;
        a = a_view.0;

        if has_converged(&trace, hp.patience, hp.rel_tol) {
            converged = true;
            break;
        }
    }

    Ok(Factorization {
        psi: BasisMatrix(psi),
        activations: ActivationMatrix(a),
        trace,
        iterations: state.iteration,
        converged,
        restart: 0,
    })
}

/// Relative change between the mean total loss of the last `patience`
/// iterations and the `patience` before them.
fn has_converged(trace: &[LossBreakdown], patience: usize, rel_tol: f64) -> bool {
    // trace[0] is the initialization, not an iteration
    let iterations = &trace[1..];
    if iterations.len() < 2 * patience {
        return false;
    }
    let n = iterations.len();
    let mean = |s: &[LossBreakdown]| s.iter().map(|l| l.total).sum::<f64>() / s.len() as f64;
    let recent = mean(&iterations[n - patience..]);
    let previous = mean(&iterations[n - 2 * patience..n - patience]);
    (recent - previous).abs() / previous.abs().max(1e-12) < rel_tol
}
