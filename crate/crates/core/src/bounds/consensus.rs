//! Consensus budgets and the broadcast consensus-error bound.

use std::collections::BTreeMap;

use nalgebra::{Complex, DMatrix};
use serde::Serialize;

use super::search::{log_grid_coordinate_max, LogGridSearch};
use super::{lag_report, BoundQuery, BoundReport, SearchParams, CERTIFY_OFFSET};
use crate::design::{broadcast_sigma, design_constants, verify_lyapunov_family, GainDesign};
use crate::graphs::{algebraic_connectivity, GraphAlgebra};
use crate::matan::{expm, growth_integral, inf_norm, max_singular_value};
use crate::{Error, LtiModel, Matrix, Result, Vector};

const SEVEN_THIRDS: f64 = 7.0 / 3.0;

/// Supremum of `(a - b/γ)/(bγ + c)` over the admissible `γ > 0`
/// (numerator and denominator both positive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaSupremum {
    /// Maximiser; `None` when the supremum is not attained.
    pub gamma_star: Option<f64>,
    /// `+∞` when some admissible-numerator `γ` makes the denominator
    /// non-positive.
    pub value: f64,
    /// Some `γ` has positive numerator and non-positive denominator, so
    /// the Lyapunov derivative is negative whatever the sampling.
    pub any_period: bool,
    /// No `γ` satisfies both conditions.
    pub empty: bool,
}

/// `(a - b/γ)/(bγ + c)`.
pub fn gamma_objective(a: f64, b: f64, c: f64, gamma: f64) -> f64 {
    (a - b / gamma) / (b * gamma + c)
}

/// Closed form: the stationary condition is `aγ² - 2bγ - c = 0`.
pub fn gamma_supremum(a: f64, b: f64, c: f64) -> GammaSupremum {
    debug_assert!(a > 0.0 && b >= 0.0);
    if b == 0.0 {
        return if c > 0.0 {
            GammaSupremum { gamma_star: Some(1.0), value: a / c, any_period: false, empty: false }
        } else {
            GammaSupremum { gamma_star: None, value: f64::INFINITY, any_period: true, empty: true }
        };
    }
    let disc = b * b + a * c;
    if c < 0.0 && disc < 0.0 {
        // At γ = -c/b the numerator is a + b²/c > 0 while the denominator vanishes.
        return GammaSupremum { gamma_star: None, value: f64::INFINITY, any_period: true, empty: false };
    }
    let any_period = c <= 0.0 && a * (-c / b) > b;
    let g = (b + disc.sqrt()) / a;
    GammaSupremum {
        gamma_star: Some(g),
        value: gamma_objective(a, b, c, g),
        any_period,
        empty: false,
    }
}

fn require_connected(algebra: &GraphAlgebra) -> Result<()> {
    if algebra.vertex_count() < 2 {
        return Err(Error::Precondition("consensus needs at least two agents".into()));
    }
    if algebraic_connectivity(algebra) <= crate::graphs::CONNECTIVITY_TOL {
        return Err(Error::Precondition(format!(
            "graph is disconnected (λ₂ = {:.3e})",
            algebraic_connectivity(algebra)
        )));
    }
    Ok(())
}

/// Budget for consensus over sampled relative states.
pub fn theorem2_budget(
    model: &LtiModel,
    design: &GainDesign,
    algebra: &GraphAlgebra,
    omega: f64,
) -> Result<BoundReport> {
    require_connected(algebra)?;
    if !(omega >= 0.0 && omega.is_finite()) {
        return Err(Error::Parameter(format!("ω = {omega} must be finite and ≥ 0")));
    }
    if !verify_lyapunov_family(design, model, algebra.nonzero_modes()) {
        return Err(Error::Precondition(
            "Lyapunov inequalities fail for some nonzero Laplacian eigenvalue".into(),
        ));
    }
    let dc = design_constants(design, model, algebra)?;
    let lambda_n = algebra.lambda_max();
    let (a, b, c) = (design.mu, dc.sigma_edge / 2.0, lambda_n * dc.lambda_pbk_s - design.mu);
    let sup = gamma_supremum(a, b, c);
    let sc = model.spectral_constants();

    let base = |r: BoundReport| {
        r.detail("sigma", dc.sigma_edge)
            .detail("lambda_pbk_s", dc.lambda_pbk_s)
            .detail("sigma_bk", dc.sigma_bk)
            .detail("lambda_n", lambda_n)
            .detail("omega", omega)
            .detail("sup_objective", sup.value)
    };
    if sup.empty {
        return Ok(base(BoundReport::infeasible(
            "admissible γ set is empty (any sampling period flag: the error term cannot be negative)",
        )));
    }
    if sup.value.is_infinite() {
        let mut r = base(BoundReport {
            feasible: true,
            unbounded: true,
            budget: None,
            margin: f64::INFINITY,
            witness: SearchParams::default(),
            diagnostics: "some γ gives a negative Lyapunov derivative for any sampling period (unbounded)".into(),
            details: BTreeMap::new(),
        });
        r.witness.gamma = -c / b * 2.0;
        return Ok(r);
    }
    let gamma = sup.gamma_star.expect("finite supremum is attained");
    let q = BoundQuery {
        mu: sup.value,
        eps: 1.0,
        omega,
        lambda_as: sc.lambda_as,
        sigma_a: sc.sigma_a,
        sigma_g: lambda_n,
        sigma_k: dc.sigma_bk,
        h: 0.0,
        tau: 0.0,
        tau_in: 0.0,
    };
    let mut r = base(lag_report(&q, "relative-state consensus")).detail("gamma_star", gamma);
    r.witness.gamma = gamma;
    if sup.any_period {
        r.diagnostics.push_str("; note: some γ also gives a negative derivative for any sampling period");
    }
    Ok(r)
}

/// [`theorem2_budget`] with `ω = (ε_q - 1)²` from a logarithmic quantizer.
pub fn corollary1_consensus_budget(
    model: &LtiModel,
    design: &GainDesign,
    algebra: &GraphAlgebra,
    quant_level: f64,
) -> Result<BoundReport> {
    let omega = super::quantizer_omega(quant_level)?;
    theorem2_budget(model, design, algebra, omega)
}

/// Budget for broadcast consensus of error-free single integrators.
pub fn theorem3_budget(algebra: &GraphAlgebra) -> Result<BoundReport> {
    require_connected(algebra)?;
    let l2 = algebraic_connectivity(algebra);
    let ln = algebra.lambda_max();
    let sigma = (2.0 * l2).max(ln - 2.0 * l2);
    let sup = gamma_supremum(l2, sigma / 2.0, ln - l2);
    let gamma = sup.gamma_star.expect("c = λ_n - λ₂ ≥ 0 always attains the supremum");
    let objective = sup.value;
    let budget = (3.0 * objective / (7.0 * ln * ln)).sqrt();
    let at = budget * (1.0 - CERTIFY_OFFSET);
    let margin = objective - SEVEN_THIRDS * ln * ln * at * at;
    Ok(BoundReport {
        feasible: margin > 0.0,
        unbounded: false,
        budget: Some(budget),
        margin,
        witness: SearchParams { gamma, ..SearchParams::default() },
        diagnostics: format!(
            "single-integrator broadcast: certified h + τ < {budget:.6}; synchronous exact bound for comparison h ≤ 2/λ_n = {:.6}",
            2.0 / ln
        ),
        details: BTreeMap::new(),
    }
    .detail("lambda_2", l2)
    .detail("lambda_n", ln)
    .detail("sigma", sigma)
    .detail("gamma_star", gamma)
    .detail("objective", objective)
    .detail("sync_comparison", 2.0 / ln))
}

/// Sampled maxima of `‖e^{As}‖₂` and `‖e^{As}‖_∞` over `s ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpNormEnvelope {
    pub max_norm2: f64,
    pub max_norm_inf: f64,
    /// Sampled horizon.
    pub horizon: f64,
    pub samples: usize,
}

pub const ENVELOPE_SAMPLES: usize = 10_000;
const EIG_CLUSTER_TOL: f64 = 1e-6;

/// Checks marginal stability (spectrum in the closed left half-plane,
/// imaginary-axis eigenvalues semisimple), then samples the exponential
/// over one period of the slowest oscillation, or `10/|λ_slowest|` for
/// decaying modes, whichever is longer.
pub fn exp_norm_envelope(a: &Matrix) -> Result<ExpNormEnvelope> {
    let n = a.nrows();
    let eig: Vec<Complex<f64>> = a.complex_eigenvalues().iter().copied().collect();
    let scale = 1.0 + a.norm();
    if let Some(bad) = eig.iter().find(|z| z.re > EIG_CLUSTER_TOL * scale) {
        return Err(Error::Precondition(format!(
            "A is not marginally stable: eigenvalue {:.6}{:+.6}i",
            bad.re, bad.im
        )));
    }
    let ac = a.map(|x| Complex::new(x, 0.0));
    let mut horizon: f64 = 0.0;
    for z in &eig {
        if z.re.abs() <= EIG_CLUSTER_TOL * scale {
            let alg = eig.iter().filter(|w| (*w - z).norm() <= EIG_CLUSTER_TOL * scale).count();
            let shifted = &ac - DMatrix::<Complex<f64>>::identity(n, n) * *z;
            let sv = shifted.svd(false, false).singular_values;
            let rank = sv.iter().filter(|&&s| s > 1e-8 * scale).count();
            if n - rank < alg {
                return Err(Error::Precondition(format!(
                    "A is not marginally stable: imaginary-axis eigenvalue {:.6}{:+.6}i is defective",
                    z.re, z.im
                )));
            }
            if z.im.abs() > EIG_CLUSTER_TOL * scale {
                horizon = horizon.max(2.0 * std::f64::consts::PI / z.im.abs());
            }
        } else {
            horizon = horizon.max(10.0 / z.re.abs());
        }
    }
    if horizon == 0.0 {
        // All modes are semisimple at the origin: e^{As} = I.
        horizon = 1.0;
    }
    let mut max_norm2: f64 = 0.0;
    let mut max_norm_inf: f64 = 0.0;
    for k in 0..ENVELOPE_SAMPLES {
        let s = horizon * k as f64 / (ENVELOPE_SAMPLES - 1) as f64;
        let e = expm(a, s)?;
        max_norm2 = max_norm2.max(max_singular_value(&e)?);
        max_norm_inf = max_norm_inf.max(inf_norm(&e));
    }
    Ok(ExpNormEnvelope { max_norm2, max_norm_inf, horizon, samples: ENVELOPE_SAMPLES })
}

/// Data of the broadcast consensus-error bound.
#[derive(Debug, Clone)]
pub struct Theorem4Inputs<'a> {
    pub model: &'a LtiModel,
    pub design: &'a GainDesign,
    pub algebra: &'a GraphAlgebra,
    /// Largest sampling period.
    pub h: f64,
    /// Largest delay.
    pub tau: f64,
    /// Bound on the stacked measurement error `‖e(t)‖₂`.
    pub delta_e: f64,
    /// `Σ xᵢ(0)`.
    pub x0_sum: Vector,
}

/// Parameter-independent constants of the bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem4Setup {
    pub envelope: ExpNormEnvelope,
    pub lambda_as: f64,
    pub sigma_a: f64,
    pub lambda_n: f64,
    pub lambda_p: f64,
    pub sigma_pb: f64,
    pub sigma_bbtp: f64,
    /// `‖DDᵀ ⊗ BK‖₂`.
    pub coupling_norm: f64,
    pub delta_kappa: f64,
    pub delta: f64,
}

/// Every intermediate quantity at one parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem4Terms {
    pub sigma: f64,
    /// `γσ/2 - μ + λ_P/(2η) + λ_n σ_PB²`.
    pub c4: f64,
    /// `μ - λ_P/(2η) - σ/(2γ)`.
    pub decay: f64,
    pub delta_bar: f64,
    pub gamma_term: f64,
    pub bound: f64,
}

impl Theorem4Inputs<'_> {
    pub fn setup(&self) -> Result<Theorem4Setup> {
        require_connected(self.algebra)?;
        for (name, v) in [("h", self.h), ("tau", self.tau), ("delta_e", self.delta_e)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} = {v} must be finite and ≥ 0")));
            }
        }
        if self.x0_sum.len() != self.model.state_dim() {
            return Err(Error::Dimension(format!(
                "Σxᵢ(0) has length {}, state dimension is {}",
                self.x0_sum.len(),
                self.model.state_dim()
            )));
        }
        let envelope = exp_norm_envelope(self.model.a())?;
        let sc = self.model.spectral_constants();
        let dc = design_constants(self.design, self.model, self.algebra)?;
        let n = self.algebra.vertex_count() as f64;
        let lambda_n = self.algebra.lambda_max();
        let coupling_norm = max_singular_value(&crate::matan::kron(
            &self.algebra.graph_laplacian,
            &(self.model.b() * &self.design.k),
        ))?;
        let delta_kappa = self.x0_sum.norm() / n.sqrt()
            * envelope.max_norm2
            * sc.sigma_a
            * growth_integral(sc.lambda_as, self.h);
        Ok(Theorem4Setup {
            envelope,
            lambda_as: sc.lambda_as,
            sigma_a: sc.sigma_a,
            lambda_n,
            lambda_p: dc.lambda_p,
            sigma_pb: dc.sigma_pb,
            sigma_bbtp: dc.sigma_bbtp,
            coupling_norm,
            delta_kappa,
            delta: coupling_norm * (delta_kappa + self.delta_e),
        })
    }

    /// Evaluates the bound at `p` without checking membership.
    pub fn terms(&self, setup: &Theorem4Setup, p: &SearchParams) -> Result<Theorem4Terms> {
        let mu = self.design.mu;
        let sigma = broadcast_sigma(self.design, self.model, self.algebra, setup.lambda_p, p.eta)?;
        let leak = setup.lambda_p / (2.0 * p.eta);
        let c4 = p.gamma * sigma / 2.0 - mu + leak + setup.lambda_n * setup.sigma_pb.powi(2);
        let decay = mu - leak - sigma / (2.0 * p.gamma);
        let s = self.h + self.tau;
        let n = self.algebra.vertex_count() as f64;
        let d2 = setup.delta * setup.delta;
        let delta_bar = c4 * (1.0 + 1.0 / p.alpha) * setup.envelope.max_norm_inf.powi(2) * n * s * s * d2
            + 0.5 * setup.lambda_p * p.eta * d2;
        let y = SEVEN_THIRDS * setup.lambda_n.powi(2) * setup.sigma_bbtp.powi(2);
        let gamma_term = decay
            - c4 * (1.0 + p.alpha)
                * ((1.0 + 1.0 / p.beta) * setup.sigma_a.powi(2) + (1.0 + p.beta) * y)
                * s
                * s
                * (2.0 * setup.lambda_as * s).exp();
        Ok(Theorem4Terms {
            sigma,
            c4,
            decay,
            delta_bar,
            gamma_term,
            bound: p.theta * delta_bar / gamma_term,
        })
    }
}

fn membership_failures(p: &SearchParams, t: &Theorem4Terms) -> Vec<String> {
    let mut bad = match p.validate() {
        Err(Error::SetMembership(v)) => v,
        _ => Vec::new(),
    };
    if !(t.decay > 0.0) {
        bad.push(format!("μ - λ_P/(2η) - σ/(2γ) = {:.6} must be > 0", t.decay));
    }
    if !(t.c4 >= 0.0) {
        bad.push(format!("γσ/2 - μ + λ_P/(2η) + λ_n σ_PB² = {:.6} must be ≥ 0", t.c4));
    }
    if !(t.gamma_term > 0.0) {
        bad.push(format!("Γ = {:.6} must be > 0", t.gamma_term));
    }
    bad
}

/// `θ Δ̄ / Γ` at `p`; a set-membership error lists every violated condition.
pub fn theorem4_error_bound(inputs: &Theorem4Inputs, p: &SearchParams) -> Result<f64> {
    let setup = inputs.setup()?;
    Ok(checked_terms(inputs, &setup, p)?.bound)
}

fn checked_terms(inputs: &Theorem4Inputs, setup: &Theorem4Setup, p: &SearchParams) -> Result<Theorem4Terms> {
    let t = inputs.terms(setup, p)?;
    let bad = membership_failures(p, &t);
    if bad.is_empty() {
        Ok(t)
    } else {
        Err(Error::SetMembership(bad))
    }
}

/// The `β` maximising `Γ` for the given constants: `σ_A/√Y` with
/// `Y = (7/3) λ_n² σ_BBᵀP²`, clamped to `[1e-12, 1e12]`.
pub fn theorem4_best_beta(setup: &Theorem4Setup) -> f64 {
    let y = SEVEN_THIRDS * setup.lambda_n.powi(2) * setup.sigma_bbtp.powi(2);
    let b = setup.sigma_a / y.sqrt();
    if b.is_nan() {
        1.0
    } else {
        b.clamp(1e-12, 1e12)
    }
}

/// Smallest bound over the supplied points (members of the admissible
/// set only). `None` if no point is admissible.
pub fn theorem4_infimum(
    inputs: &Theorem4Inputs,
    grid: &[SearchParams],
) -> Result<Option<(SearchParams, Theorem4Terms)>> {
    let setup = inputs.setup()?;
    let mut best: Option<(SearchParams, Theorem4Terms)> = None;
    for p in grid {
        if let Ok(t) = checked_terms(inputs, &setup, p) {
            if best.as_ref().is_none_or(|(_, b)| t.bound < b.bound) {
                best = Some((*p, t));
            }
        }
    }
    Ok(best)
}

/// Minimises the bound over `(α, γ, η)` by log-grid coordinate search,
/// with `β` at its closed-form optimum and `θ` fixed.
pub fn theorem4_search(
    inputs: &Theorem4Inputs,
    theta: f64,
    cfg: &LogGridSearch,
) -> Result<Option<(SearchParams, Theorem4Terms)>> {
    let setup = inputs.setup()?;
    let beta = theorem4_best_beta(&setup);
    let point = |x: &[f64]| SearchParams { alpha: x[0], beta, gamma: x[1], eta: x[2], theta };
    let (x, v) = log_grid_coordinate_max(
        |x| match checked_terms(inputs, &setup, &point(x)) {
            Ok(t) => -t.bound,
            Err(_) => f64::NEG_INFINITY,
        },
        3,
        cfg,
    );
    if !v.is_finite() {
        return Ok(None);
    }
    let p = point(&x);
    Ok(Some((p, checked_terms(inputs, &setup, &p)?)))
}

/// Report form: `budget` carries the consensus-error bound, `margin` is Γ.
/// `β` is replaced by its optimum when `optimise_beta` is set.
pub fn theorem4_report(inputs: &Theorem4Inputs, p: &SearchParams, optimise_beta: bool) -> Result<BoundReport> {
    let setup = inputs.setup()?;
    let p = if optimise_beta {
        SearchParams { beta: theorem4_best_beta(&setup), ..*p }
    } else {
        *p
    };
    let t = checked_terms(inputs, &setup, &p)?;
    Ok(BoundReport {
        feasible: t.gamma_term > 0.0,
        unbounded: false,
        budget: Some(t.bound),
        margin: t.gamma_term,
        witness: p,
        diagnostics: format!(
            "broadcast consensus error: δ̃ᵀδ̃ ≤ {:.6} infinitely often (Δ(h) = {:.6}, β = {:.3e})",
            t.bound, setup.delta, p.beta
        ),
        details: BTreeMap::new(),
    }
    .detail("delta_kappa", setup.delta_kappa)
    .detail("delta", setup.delta)
    .detail("delta_bar", t.delta_bar)
    .detail("gamma_term", t.gamma_term)
    .detail("sigma", t.sigma)
    .detail("c4", t.c4)
    .detail("beta", p.beta)
    .detail("exp_norm_2", setup.envelope.max_norm2)
    .detail("exp_norm_inf", setup.envelope.max_norm_inf)
    .detail("envelope_horizon", setup.envelope.horizon))
}
