//! Born-rule correlations of the noisy EPR state `p Φ + (1 - p) 𝕀/4`
//! measured along directions on the equator of the Bloch sphere.
//!
//! Alice's input `x` measures along angle `πx/M`. Bob's estimation input `y`
//! measures along `-π(y - 1/2)/M`, which puts his directions half a step
//! apart from Alice's `x = y` and `x = y - 1`; his raw-key input `y = M`
//! coincides with Alice's `x = 0`. Outcome 0 is the eigenvector
//! `|0⟩ - e^{iθ}|1⟩` for both parties.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::boxcore::{check_settings, ConditionalBox};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EprParams {
    /// Purity `p ∈ [0, 1]`.
    pub p: f64,
    /// Setting count `M ≥ 2`.
    pub m: usize,
}

impl EprParams {
    pub fn new(p: f64, m: usize) -> Result<Self> {
        let params = Self { p, m };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidParameter(format!(
                "purity {} outside [0, 1]",
                self.p
            )));
        }
        check_settings(self.m)
    }
}

type Ket2 = [Complex64; 2];
type Ket4 = [Complex64; 4];
type Density4 = [[Complex64; 4]; 4];

fn alice_angle(x: usize, m: usize) -> f64 {
    PI * x as f64 / m as f64
}

fn bob_angle(y: usize, m: usize) -> f64 {
    if y == m {
        0.0
    } else {
        -PI * (y as f64 - 0.5) / m as f64
    }
}

/// Normalized `|0⟩ ∓ e^{iθ}|1⟩`; outcome 0 takes the minus sign.
fn eigenvector(theta: f64, outcome: u8) -> Ket2 {
    let sign = if outcome == 0 { -1.0 } else { 1.0 };
    [
        Complex64::new(FRAC_1_SQRT_2, 0.0),
        Complex64::from_polar(sign * FRAC_1_SQRT_2, theta),
    ]
}

fn kron(u: &Ket2, v: &Ket2) -> Ket4 {
    [u[0] * v[0], u[0] * v[1], u[1] * v[0], u[1] * v[1]]
}

fn noisy_epr_state(p: f64) -> Density4 {
    let phi = [FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2];
    let mut rho = [[Complex64::new(0.0, 0.0); 4]; 4];
    for (i, row) in rho.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let noise = if i == j { (1.0 - p) / 4.0 } else { 0.0 };
            *cell = Complex64::new(p * phi[i] * phi[j] + noise, 0.0);
        }
    }
    rho
}

/// `Tr[ρ |v⟩⟨v|] = ⟨v|ρ|v⟩`.
fn expectation(rho: &Density4, v: &Ket4) -> f64 {
    let mut total = Complex64::new(0.0, 0.0);
    for i in 0..4 {
        for j in 0..4 {
            total += v[i].conj() * rho[i][j] * v[j];
        }
    }
    total.re
}

/// The honest parties' box, including Bob's raw-key input.
pub fn epr_box(params: EprParams) -> Result<ConditionalBox> {
    params.validate()?;
    let EprParams { p, m } = params;
    let rho = noisy_epr_state(p);
    ConditionalBox::from_fn(m, true, |a, b, x, y| {
        let v = kron(
            &eigenvector(alice_angle(x, m), a),
            &eigenvector(bob_angle(y, m), b),
        );
        expectation(&rho, &v)
    })
}

/// Asymptotic BC value of the noisy EPR box:
/// `1/2 + M (p sin²(π/4M) + (1 - p)/2)`.
pub fn expected_bc(p: f64, m: usize) -> f64 {
    let s = (PI / (4.0 * m as f64)).sin();
    0.5 + m as f64 * (p * s * s + (1.0 - p) / 2.0)
}

/// Disagreement probability on the raw-key inputs, `(1 - p)/2`.
pub fn raw_error_rate(p: f64) -> f64 {
    (1.0 - p) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximally_mixed_is_uniform() {
        let b = epr_box(EprParams::new(0.0, 3).unwrap()).unwrap();
        assert!(b.entries().iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn raw_key_disagreement() {
        for p in [0.0, 0.5, 1.0] {
            let b = epr_box(EprParams::new(p, 4).unwrap()).unwrap();
            let disagree = b.get(0, 1, 0, 4) + b.get(1, 0, 0, 4);
            assert!((disagree - (1.0 - p) / 2.0).abs() < 1e-14);
            assert!((1.0 - disagree - (1.0 + p) / 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn closed_forms() {
        assert!((expected_bc(1.0, 2) - 0.792_893_218_813_452_5).abs() < 1e-12);
        assert!((expected_bc(1.0, 100) - 0.506_168_375_916_970_1).abs() < 1e-12);
        for m in 2..10 {
            assert!((expected_bc(0.0, m) - (0.5 + m as f64 / 2.0)).abs() < 1e-12);
        }
        assert_eq!(raw_error_rate(1.0), 0.0);
        assert_eq!(raw_error_rate(0.0), 0.5);
        assert!((raw_error_rate(0.972) - 0.014).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(EprParams::new(1.2, 3).is_err());
        assert!(EprParams::new(0.5, 1).is_err());
    }
}
