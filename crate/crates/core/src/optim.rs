//! Adam and plain SGD over lists of flat parameter slices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zeroed moments for parameter slices of the given lengths.
    pub fn new(lengths: &[usize], lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m: lengths.iter().map(|&n| vec![0.0; n]).collect(),
            v: lengths.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_slices(params: &[&[f64]], lr: f64) -> Self {
        let lengths: Vec<usize> = params.iter().map(|s| s.len()).collect();
        Self::new(&lengths, lr)
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.m.iter().map(Vec::len).collect()
    }
}

fn check_shapes(params: &[&mut [f64]], grads: &[&[f64]], lengths: Option<&[usize]>) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape(
            "optimizer",
            format!("{} parameter slices, {} gradient slices", params.len(), grads.len()),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() {
            return Err(Error::shape(
                "optimizer",
                format!("slice {i}: {} parameters, {} gradients", p.len(), g.len()),
            ));
        }
        if let Some(l) = lengths {
            if l.get(i) != Some(&p.len()) {
                return Err(Error::shape(
                    "optimizer",
                    format!("slice {i} does not match optimizer state"),
                ));
            }
        }
    }
    if let Some(l) = lengths {
        if l.len() != params.len() {
            return Err(Error::shape(
                "optimizer",
                format!("state tracks {} slices, got {}", l.len(), params.len()),
            ));
        }
    }
    Ok(())
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut AdamState) -> Result<()> {
    check_shapes(params, grads, Some(&state.lengths()))?;
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.epsilon);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// `p ← p − lr·g`.
pub fn sgd_step(params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) -> Result<()> {
    check_shapes(params, grads, None)?;
    for (p, g) in params.iter_mut().zip(grads) {
        for (pi, gi) in p.iter_mut().zip(g.iter()) {
            *pi -= lr * gi;
        }
    }
    Ok(())
}
