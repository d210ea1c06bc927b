//! Interaction and external potentials with exact gradients, the repulsion
//! regularization radius `epsilon`, and the convexity constants entering the
//! theoretical envelope.
//!
//! Both interaction kernels combine an attraction term with a regularized
//! Newtonian repulsion in the plane:
//!
//! ```text
//! K_2(x)   = |x|^2 / 2        + rep(|x|)
//! K_3/2(x) = 2/3 |x|^{3/2}    + rep(|x|)
//! rep(r)   = (1 - 2 ln eps)/(4 pi) - r^2 / (4 pi eps^2)   for r < eps
//!            -ln(r) / (2 pi)                              for r >= eps
//! ```
//!
//! The cap constant makes `rep` continuous at `r = eps`; its gradient is
//! continuous there by construction, so K is C^1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const INV_TWO_PI: f64 = 1.0 / (2.0 * std::f64::consts::PI);
const INV_FOUR_PI: f64 = 1.0 / (4.0 * std::f64::consts::PI);

/// Interaction kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PotentialKind {
    /// Quadratic attraction; twice weakly differentiable.
    K2,
    /// 3/2-power attraction; C^1 with a Lipschitz singularity of the
    /// gradient at the origin.
    K32,
}

/// External potential. Only the zero potential is used by the experiments;
/// the enum is the extension point for nonzero fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExternalPotential {
    Zero,
}

/// Interaction + external potential with regularization and convexity data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub epsilon: f64,
    pub external: ExternalPotential,
    /// min{0, lambda_K}: one-sided convexity bound of the interaction.
    pub lambda_k_minus: f64,
    /// min{0, lambda_V}: one-sided convexity bound of the external field.
    pub lambda_v_minus: f64,
}

impl PotentialSpec {
    /// Build a spec, deriving the convexity constants from `kind` and
    /// `epsilon`:
    ///
    /// * `K2`: the repulsion Hessian is bounded below by `-1/(2 pi eps^2)`
    ///   and the quadratic attraction adds `+1`, so
    ///   `lambda_K = 1 - 1/(2 pi eps^2)`.
    /// * `K32`: the convex attraction contributes nothing negative and the
    ///   repulsion bound binds: `lambda_K^- = -1/(2 pi eps^2)`.
    pub fn new(kind: PotentialKind, epsilon: f64, external: ExternalPotential) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidPotential(format!(
                "epsilon must be positive and finite, got {epsilon}"
            )));
        }
        let cap = INV_TWO_PI / (epsilon * epsilon);
        let lambda_k_minus = match kind {
            PotentialKind::K2 => (1.0 - cap).min(0.0),
            PotentialKind::K32 => -cap,
        };
        let lambda_v_minus = match external {
            ExternalPotential::Zero => 0.0,
        };
        Ok(PotentialSpec {
            kind,
            epsilon,
            external,
            lambda_k_minus,
            lambda_v_minus,
        })
    }

    /// Spec with the default regularization radius 0.05.
    pub fn with_default_epsilon(kind: PotentialKind) -> Self {
        PotentialSpec::new(kind, 0.05, ExternalPotential::Zero).expect("valid default")
    }

    /// Sum of the convexity constants, `Lambda = lambda_K^- + lambda_V^-`.
    pub fn lambda_sum(&self) -> f64 {
        self.lambda_k_minus + self.lambda_v_minus
    }

    /// Interaction potential value K(x).
    pub fn interaction_value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let r = r2.sqrt();
        let eps = self.epsilon;
        let attraction = match self.kind {
            PotentialKind::K2 => 0.5 * r2,
            PotentialKind::K32 => (2.0 / 3.0) * r * r.sqrt(),
        };
        let repulsion = if r < eps {
            (1.0 - 2.0 * eps.ln()) * INV_FOUR_PI - r2 * INV_FOUR_PI / (eps * eps)
        } else {
            -r.ln() * INV_TWO_PI
        };
        attraction + repulsion
    }

    /// Interaction gradient; zero at the origin by symmetry.
    pub fn grad_interaction(&self, x: &[f64]) -> Vec<f64> {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let f = self.pair_kernel().factor(r2);
        x.iter().map(|v| f * v).collect()
    }

    /// External field gradient; identically zero for [`ExternalPotential::Zero`].
    pub fn grad_external(&self, x: &[f64]) -> Vec<f64> {
        match self.external {
            ExternalPotential::Zero => vec![0.0; x.len()],
        }
    }

    /// Theoretical divergence envelope
    /// `2 d nu t (1 - 2 Lambda t exp(-2 Lambda t))`, nondecreasing in `t`
    /// and `nu` for `Lambda <= 0`.
    pub fn theorem_envelope(&self, dim: usize, nu: f64, t: f64) -> f64 {
        let lambda = self.lambda_sum();
        2.0 * dim as f64 * nu * t * (1.0 - 2.0 * lambda * t * (-2.0 * lambda * t).exp())
    }

    /// Scalar pair kernel for the N-body loops.
    #[inline]
    pub(crate) fn pair_kernel(&self) -> PairKernel {
        PairKernel {
            sqrt_attraction: matches!(self.kind, PotentialKind::K32),
            eps_sq: self.epsilon * self.epsilon,
            cap: -INV_TWO_PI / (self.epsilon * self.epsilon),
        }
    }
}

/// grad K(x) = factor(|x|^2) * x. Precomputes the branch constants so the
/// pairwise force loop stays free of divisions against `epsilon`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PairKernel {
    sqrt_attraction: bool,
    eps_sq: f64,
    cap: f64,
}

impl PairKernel {
    #[inline(always)]
    pub fn factor(&self, r2: f64) -> f64 {
        if r2 == 0.0 {
            return 0.0;
        }
        let inv_r2 = 1.0 / r2;
        let repulsion = if r2 < self.eps_sq {
            self.cap
        } else {
            -INV_TWO_PI * inv_r2
        };
        let attraction = if self.sqrt_attraction {
            // |x|^{-1/2} = (1/r^2)^{1/4}
            inv_r2.sqrt().sqrt()
        } else {
            1.0
        };
        attraction + repulsion
    }
}
