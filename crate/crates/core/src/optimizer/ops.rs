//! Loss, subgradients, and the proximal/projection operators used by the
//! alternating solver.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{ActivationMatrix, BasisMatrix, Hyperparams};
use crate::error::{Error, Result};

/// Components of the objective. `total` applies the hyperparameter weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub reconstruction: f64,
    pub l1_psi: f64,
    pub l1_a: f64,
    pub jitter: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn combine(reconstruction: f64, l1_psi: f64, l1_a: f64, jitter: f64, hp: &Hyperparams) -> Self {
        Self {
            reconstruction,
            l1_psi,
            l1_a,
            jitter,
            total: reconstruction + hp.lambda1 * l1_psi + hp.lambda2 * l1_a + hp.lambda3 * jitter,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.reconstruction.is_finite()
            && self.l1_psi.is_finite()
            && self.l1_a.is_finite()
            && self.jitter.is_finite()
            && self.total.is_finite()
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn check_shapes(signal: &DMatrix<f64>, psi: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<()> {
    let (m, t) = signal.shape();
    let (pm, pk) = psi.shape();
    let (ak, at) = a.shape();
    if pm != m || ak != pk || at != t {
        return Err(Error::Shape(format!(
            "signal {m}x{t}, basis {pm}x{pk}, activations {ak}x{at}"
        )));
    }
    Ok(())
}

/// Signs of the residual `E - Psi A` together with its entrywise L1 norm.
///
/// Columns are processed in parallel; the norm is reduced in column order so
/// the result does not depend on the thread count.
pub(crate) fn residual_signs(signal: &DMatrix<f64>, psi: &DMatrix<f64>, a: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let (m, t) = signal.shape();
    let k = psi.ncols();
    let mut signs = DMatrix::<f64>::zeros(m, t);
    let mut column_l1 = vec![0.0f64; t];
    if m == 0 || t == 0 {
        return (signs, 0.0);
    }
    let psi_s = psi.as_slice();
    let a_s = a.as_slice();
    signs
        .as_mut_slice()
        .par_chunks_mut(m)
        .zip(signal.as_slice().par_chunks(m))
        .zip(column_l1.par_iter_mut())
        .enumerate()
        .for_each(|(col, ((out, e), l1))| {
            let mut acc = 0.0;
            for row in 0..m {
                let mut model = 0.0;
                for r in 0..k {
                    model += psi_s[r * m + row] * a_s[col * k + r];
                }
                let res = e[row] - model;
                out[row] = sign(res);
                acc += res.abs();
            }
            *l1 = acc;
        });
    (signs, column_l1.iter().sum())
}

/// `(1/(kT)) * sum_r sum_{t>=1} |A[r,t] - A[r,t-1]|`; zero when `T < 2`.
pub fn jitter_loss(a: &DMatrix<f64>) -> f64 {
    let (k, t) = a.shape();
    if k == 0 || t < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for r in 0..k {
        for c in 1..t {
            sum += (a[(r, c)] - a[(r, c - 1)]).abs();
        }
    }
    sum / (k * t) as f64
}

fn l1(x: &DMatrix<f64>) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

pub fn compute_loss(
    signal: &DMatrix<f64>,
    psi: &DMatrix<f64>,
    a: &DMatrix<f64>,
    hp: &Hyperparams,
) -> Result<LossBreakdown> {
    check_shapes(signal, psi, a)?;
    let (_, reconstruction) = residual_signs(signal, psi, a);
    Ok(LossBreakdown::combine(
        reconstruction,
        l1(psi),
        l1(a),
        jitter_loss(a),
        hp,
    ))
}

/// Soft thresholding: `sign(x) * max(0, |x| - step * lam)` elementwise.
pub fn shrink(x: &DMatrix<f64>, step: f64, lam: f64) -> DMatrix<f64> {
    let mut out = x.clone();
    shrink_in_place(&mut out, step * lam);
    out
}

/// Soft thresholding with a per-entry step: entry `i` moves toward zero by
/// `steps[i] * lam`.
pub(crate) fn shrink_scaled_in_place(x: &mut DMatrix<f64>, steps: &DMatrix<f64>, lam: f64) {
    if lam <= 0.0 {
        return;
    }
    for (v, &s) in x.iter_mut().zip(steps.iter()) {
        *v = sign(*v) * (v.abs() - s * lam).max(0.0);
    }
}

pub(crate) fn shrink_in_place(x: &mut DMatrix<f64>, threshold: f64) {
    if threshold <= 0.0 {
        return;
    }
    for v in x.iter_mut() {
        *v = sign(*v) * (v.abs() - threshold).max(0.0);
    }
}

/// Euclidean projection of each column onto the unit ball.
pub fn project_unit_disk(psi: &DMatrix<f64>) -> BasisMatrix {
    let mut out = psi.clone();
    for mut col in out.column_iter_mut() {
        let norm = col.norm();
        if norm > 1.0 {
            col /= norm;
        }
    }
    BasisMatrix(out)
}

/// Scales every nonzero column to unit norm regardless of its length.
pub fn normalize_basis_columns(psi: &DMatrix<f64>) -> BasisMatrix {
    let mut out = psi.clone();
    for mut col in out.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    BasisMatrix(out)
}

/// Elementwise clamp to `[0, 1]`.
pub fn project_interval(a: &DMatrix<f64>) -> ActivationMatrix {
    // NaN is not in [0, 1]; `clamp` would keep it
    ActivationMatrix(a.map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) }))
}

/// Subgradient of the reconstruction term w.r.t. the basis: `-sign(R) A^T`.
pub fn grad_psi(signal: &DMatrix<f64>, psi: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_shapes(signal, psi, a)?;
    let (signs, _) = residual_signs(signal, psi, a);
    Ok(grad_psi_from_signs(&signs, a))
}

pub(crate) fn grad_psi_from_signs(signs: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    -(signs * a.transpose())
}

/// Subgradient of reconstruction plus weighted jitter w.r.t. the activations.
/// The L1 penalties are left to the proximal step.
pub fn grad_a(signal: &DMatrix<f64>, psi: &DMatrix<f64>, a: &DMatrix<f64>, hp: &Hyperparams) -> Result<DMatrix<f64>> {
    check_shapes(signal, psi, a)?;
    let (signs, _) = residual_signs(signal, psi, a);
    Ok(grad_a_from_signs(&signs, psi, a, hp.lambda3))
}

pub(crate) fn grad_a_from_signs(
    signs: &DMatrix<f64>,
    psi: &DMatrix<f64>,
    a: &DMatrix<f64>,
    lambda3: f64,
) -> DMatrix<f64> {
    let mut grad = -(psi.transpose() * signs);
    if lambda3 != 0.0 {
        add_jitter_subgradient(&mut grad, a, lambda3);
    }
    grad
}

fn add_jitter_subgradient(grad: &mut DMatrix<f64>, a: &DMatrix<f64>, weight: f64) {
    let (k, t) = a.shape();
    if t < 2 {
        return;
    }
    let scale = weight / (k * t) as f64;
    for r in 0..k {
        for c in 0..t {
            let back = if c > 0 { sign(a[(r, c)] - a[(r, c - 1)]) } else { 0.0 };
            let fwd = if c + 1 < t {
                sign(a[(r, c + 1)] - a[(r, c)])
            } else {
                0.0
            };
            grad[(r, c)] += scale * (back - fwd);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, v)
    }

    #[test]
    fn shrink_examples() {
        assert_eq!(shrink(&m(1, 1, &[0.5]), 1.0, 0.2)[(0, 0)], 0.3);
        assert_eq!(shrink(&m(1, 1, &[-0.1]), 1.0, 0.2)[(0, 0)], 0.0);
        assert_eq!(shrink(&m(1, 1, &[-0.5]), 0.5, 0.4)[(0, 0)], -0.3);
        let x = m(2, 2, &[0.1, -3.0, 7.0, 0.0]);
        assert_eq!(shrink(&x, 0.7, 0.0), x);
    }

    #[test]
    fn scaled_shrink_uses_per_entry_steps() {
        let mut x = m(1, 3, &[0.5, -0.5, 0.05]);
        shrink_scaled_in_place(&mut x, &m(1, 3, &[1.0, 0.5, 1.0]), 0.2);
        assert_eq!(x, m(1, 3, &[0.3, -0.4, 0.0]));
        let mut uniform = m(2, 2, &[0.1, -3.0, 7.0, 0.0]);
        let expected = shrink(&uniform, 0.7, 0.3);
        shrink_scaled_in_place(&mut uniform, &DMatrix::from_element(2, 2, 0.7), 0.3);
        assert_eq!(uniform, expected);
    }

    #[test]
    fn disk_projection_examples() {
        let x = m(4, 1, &[3.0, 4.0, 0.0, 0.0]);
        assert_eq!(project_unit_disk(&x).as_matrix(), &m(4, 1, &[0.6, 0.8, 0.0, 0.0]));
        let inner = m(2, 1, &[0.3, 0.4]);
        assert_eq!(project_unit_disk(&inner).as_matrix(), &inner);
        let zero = DMatrix::zeros(3, 1);
        assert_eq!(project_unit_disk(&zero).as_matrix(), &zero);
    }

    #[test]
    fn normalize_basis_scales_interior_columns() {
        let inner = m(2, 2, &[0.3, 0.0, 0.4, 0.0]);
        let out = normalize_basis_columns(&inner);
        assert_eq!(out.as_matrix(), &m(2, 2, &[0.6, 0.0, 0.8, 0.0]));
    }

    #[test]
    fn interval_projection_examples() {
        let x = m(1, 4, &[1.5, -0.2, 0.37, f64::NAN]);
        let p = project_interval(&x);
        assert_eq!(p.as_matrix(), &m(1, 4, &[1.0, 0.0, 0.37, 0.0]));
    }

    #[test]
    fn jitter_examples() {
        assert_eq!(jitter_loss(&m(2, 3, &[0.3, 0.3, 0.3, 1.0, 1.0, 1.0])), 0.0);
        assert_eq!(jitter_loss(&m(1, 3, &[0.0, 1.0, 0.0])), 2.0 / 3.0);
        assert_eq!(jitter_loss(&m(2, 2, &[0.0, 1.0, 1.0, 0.0])), 0.5);
        assert_eq!(jitter_loss(&m(3, 1, &[0.2, 0.9, 0.1])), 0.0);
    }

    #[test]
    fn scalar_gradients() {
        let e = m(1, 1, &[0.8]);
        let psi = m(1, 1, &[1.0]);
        let a = m(1, 1, &[0.5]);
        let hp = Hyperparams::default();
        assert!((grad_psi(&e, &psi, &a).unwrap()[(0, 0)] + 0.5).abs() < 1e-15);
        assert!((grad_a(&e, &psi, &a, &hp).unwrap()[(0, 0)] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn exact_factorization_loss_and_gradients() {
        // Psi = zero-padded identity, A = one-hot columns
        let psi = m(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let a = m(2, 4, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        let e = &psi * &a;
        let hp = Hyperparams::default();
        let loss = compute_loss(&e, &psi, &a, &hp).unwrap();
        assert_eq!(loss.reconstruction, 0.0);
        assert_eq!(loss.l1_psi, 2.0);
        assert_eq!(loss.l1_a, 4.0);
        assert_eq!(loss.jitter, 2.0 / 8.0);
        let expected = 0.3366 * 2.0 + 0.2424 * 4.0 + 0.06 * 0.25;
        assert!((loss.total - expected).abs() < 1e-15);

        assert_eq!(grad_psi(&e, &psi, &a).unwrap(), DMatrix::zeros(3, 2));
        let ga = grad_a(&e, &psi, &a, &hp).unwrap();
        let s = 0.06 / 8.0;
        // row 0 drops 1 -> 0 between t=1 and t=2; row 1 rises there
        let expected_ga = m(2, 4, &[0.0, s, -s, 0.0, 0.0, -s, s, 0.0]);
        assert!((ga - expected_ga).abs().max() < 1e-15);
    }

    #[test]
    fn zero_model_loss_is_signal_norm() {
        let e = m(2, 3, &[0.6, -0.8, 0.0, 0.8, 0.6, 0.0]);
        let loss = compute_loss(
            &e,
            &DMatrix::zeros(2, 4),
            &DMatrix::zeros(4, 3),
            &Hyperparams::default(),
        )
        .unwrap();
        assert!((loss.total - 2.8).abs() < 1e-15);
        assert_eq!(loss.total, loss.reconstruction);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let e = DMatrix::zeros(3, 4);
        let err = compute_loss(
            &e,
            &DMatrix::zeros(3, 2),
            &DMatrix::zeros(3, 4),
            &Hyperparams::default(),
        );
        assert!(matches!(err, Err(Error::Shape(_))));
        assert!(grad_psi(&e, &DMatrix::zeros(2, 2), &DMatrix::zeros(2, 4)).is_err());
    }
}
