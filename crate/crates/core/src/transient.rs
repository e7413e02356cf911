//! Uniformization-based transient analysis with accumulated rewards.
//!
//! A CTMC with generator `Q` and uniformization rate `λ ≥ max_s E(s)` has the
//! transient distribution
//!
//! ```text
//! π(t) = Σ_j π(0) · P^j · Poisson(j; λt),      P = I + Q/λ
//! ```
//!
//! and the expected reward accumulated over `[0, t]` is
//!
//! ```text
//! ∫ π(u)·r du = Σ_j (π(0) · P^j · r) · P(N(λt) > j) / λ.
//! ```
//!
//! Both series are truncated after `J` terms where the Poisson tail drops
//! below the allowed error. Grids `{δ, 2δ, …, Kδ}` are swept step by step,
//! each step restarting the series from the previous vector, so every step
//! costs exactly `J` vector-matrix products and no power of `P` is ever formed.

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Default cap on vector-matrix products for one sweep.
pub const DEFAULT_PRODUCT_BUDGET: u128 = 1_000_000_000_000;

/// Poisson probabilities `p_j` and upper tails `P(N > j)` for `j = 0..len`.
#[derive(Debug, Clone)]
pub struct PoissonTerms {
    pub weights: Vec<f64>,
    pub tails: Vec<f64>,
}

/// Poisson(mean) terms, far enough into the right tail that the mass not
/// represented is below `precision * 1e-3`.
///
/// Weights are accumulated in log space, `ln p_j = ln p_{j-1} + ln(mean) - ln j`,
/// exponentiated and renormalised; tails are summed from the far end so small
/// tails keep full relative precision.
pub fn poisson_terms(mean: f64, precision: f64) -> PoissonTerms {
    assert!(mean >= 0.0 && mean.is_finite(), "Poisson mean must be finite and non-negative");
    if mean == 0.0 {
        return PoissonTerms {
            weights: vec![1.0],
            tails: vec![0.0],
        };
    }
    let stop = (precision * 1e-3).max(f64::MIN_POSITIVE);
    let ln_mean = mean.ln();
    let mut log_w = -mean;
    let mut weights = Vec::new();
    let mut j = 0usize;
    let rest_bound = loop {
        let w = log_w.exp();
        weights.push(w);
        if (j as f64) > mean {
            let ratio = mean / (j as f64 + 1.0);
            let bound = w * ratio / (1.0 - ratio);
            if bound <= stop || w == 0.0 {
                break bound;
            }
        }
        j += 1;
        log_w += ln_mean - (j as f64).ln();
    };
    let total: f64 = weights.iter().sum::<f64>() + rest_bound;
    weights.iter_mut().for_each(|w| *w /= total);
    let rest = rest_bound / total;
    let mut tails = vec![0.0; weights.len()];
    let mut acc = rest;
    for k in (0..weights.len()).rev() {
        tails[k] = acc;
        acc += weights[k];
    }
    PoissonTerms { weights, tails }
}

/// Truncation depth `J` for one uniformization step of length δ.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationPlan {
    /// Number of uniformization jumps kept: terms `j = 0..=jumps`.
    pub jumps: usize,
    /// Poisson mass beyond `jumps`, i.e. probability lost per unit of input mass.
    pub per_step_error: f64,
    pub lambda_delta: f64,
    weights: Vec<f64>,
    tails: Vec<f64>,
}

impl TruncationPlan {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `P(N > j)` for `j = 0..=jumps`.
    pub fn tails(&self) -> &[f64] {
        &self.tails
    }
}

/// Smallest `J` with `Σ_{j>J} Poisson(j; λδ) ≤ epsilon_step`.
pub fn poisson_truncation(lambda_delta: f64, epsilon_step: f64) -> TruncationPlan {
    assert!(epsilon_step > 0.0, "truncation error must be positive");
    let terms = poisson_terms(lambda_delta, epsilon_step);
    let jumps = terms
        .tails
        .iter()
        .position(|&t| t <= epsilon_step)
        .unwrap_or(terms.tails.len() - 1);
    TruncationPlan {
        jumps,
        per_step_error: terms.tails[jumps],
        lambda_delta,
        weights: terms.weights[..=jumps].to_vec(),
        tails: terms.tails[..=jumps].to_vec(),
    }
}

/// A uniformized CTMC with rate and impulse rewards.
#[derive(Debug, Clone)]
pub struct UniformizedChain {
    kernel: CsrMatrix,
    rate: f64,
    rate_reward: Vec<f64>,
    jump_impulse: Vec<f64>,
    reward_rate: Vec<f64>,
    initial: usize,
}

impl UniformizedChain {
    /// Uniformizes the CTMC with per-source rate rows `rates[i] = [(j, q_ij)]`.
    ///
    /// `impulse_rate[i]` is the expected impulse reward collected per unit of
    /// time in `i` through exponential jumps (`Σ_j q_ij · impulse(i, j)`).
    /// The uniformization rate is the largest exit rate, or 1 when the chain
    /// has no transitions at all. Self-loops count towards the exit rate but
    /// leave the state in place.
    pub fn from_rates(
        rates: &[Vec<(usize, f64)>],
        rate_reward: Vec<f64>,
        impulse_rate: Vec<f64>,
        initial: usize,
    ) -> Result<Self> {
        let max_exit = rates
            .iter()
            .map(|row| row.iter().map(|&(_, q)| q).sum::<f64>())
            .fold(0.0, f64::max);
        let rate = if max_exit > 0.0 { max_exit } else { 1.0 };
        Self::with_rate(rates, rate_reward, impulse_rate, initial, rate)
    }

    pub fn with_rate(
        rates: &[Vec<(usize, f64)>],
        rate_reward: Vec<f64>,
        impulse_rate: Vec<f64>,
        initial: usize,
        rate: f64,
    ) -> Result<Self> {
        let n = rates.len();
        for len in [rate_reward.len(), impulse_rate.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: len,
                });
            }
        }
        if initial >= n {
            return Err(Error::StateOutOfRange(initial));
        }
        let max_exit = rates
            .iter()
            .map(|row| row.iter().map(|&(_, q)| q).sum::<f64>())
            .fold(0.0, f64::max);
        assert!(
            rate > 0.0 && rate >= max_exit * (1.0 - 1e-12),
            "uniformization rate {rate} below maximal exit rate {max_exit}"
        );
        let rows: Vec<Vec<(usize, f64)>> = rates
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut out: Vec<(usize, f64)> =
                    row.iter().filter(|&&(j, _)| j != i).map(|&(j, q)| (j, q / rate)).collect();
                let moving: f64 = out.iter().map(|&(_, p)| p).sum();
                out.push((i, (1.0 - moving).max(0.0)));
                out
            })
            .collect();
        let kernel = CsrMatrix::from_rows(n, &rows);
        let jump_impulse: Vec<f64> = impulse_rate.iter().map(|&x| x / rate).collect();
        let reward_rate = rate_reward
            .iter()
            .zip(&impulse_rate)
            .map(|(r, i)| r + i)
            .collect();
        Ok(UniformizedChain {
            kernel,
            rate,
            rate_reward,
            jump_impulse,
            reward_rate,
            initial,
        })
    }

    pub fn len(&self) -> usize {
        self.kernel.n_rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn kernel(&self) -> &CsrMatrix {
        &self.kernel
    }

    pub fn rate_reward(&self) -> &[f64] {
        &self.rate_reward
    }

    /// Expected impulse per uniformization jump out of each state.
    pub fn jump_impulse(&self) -> &[f64] {
        &self.jump_impulse
    }

    /// Rate reward plus impulse collected per unit time.
    pub fn reward_rate(&self) -> &[f64] {
        &self.reward_rate
    }

    pub fn initial(&self) -> usize {
        self.initial
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientState {
    pub pi: Vec<f64>,
    pub accumulated_reward: f64,
    pub elapsed: f64,
    /// Probability mass dropped by truncation so far.
    pub truncation_budget_used: f64,
    pub step: usize,
}

impl TransientState {
    /// Point mass on the chain's initial state at time 0.
    pub fn initial(chain: &UniformizedChain) -> Self {
        let mut pi = vec![0.0; chain.len()];
        pi[chain.initial()] = 1.0;
        TransientState {
            pi,
            accumulated_reward: 0.0,
            elapsed: 0.0,
            truncation_budget_used: 0.0,
            step: 0,
        }
    }

    pub fn mass(&self) -> f64 {
        self.pi.iter().sum()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scratch buffers for one uniformization step.
#[derive(Debug, Clone)]
struct StepBuffers {
    v: Vec<f64>,
    w: Vec<f64>,
}

impl StepBuffers {
    fn new(n: usize) -> Self {
        StepBuffers {
            v: vec![0.0; n],
            w: vec![0.0; n],
        }
    }
}

/// `out = Σ_{j≤J} start·P^j·p_j`; returns the reward accumulated over the step.
fn uniformization_step(
    chain: &UniformizedChain,
    plan: &TruncationPlan,
    start: &[f64],
    out: &mut [f64],
    buf: &mut StepBuffers,
) -> f64 {
    let inv_rate = 1.0 / chain.rate;
    let r = &chain.reward_rate;
    buf.v.copy_from_slice(start);
    let w0 = plan.weights[0];
    for (o, &x) in out.iter_mut().zip(start) {
        *o = w0 * x;
    }
    let mut reward = plan.tails[0] * inv_rate * dot(start, r);
    for j in 1..=plan.jumps {
        chain.kernel.left_mul(&buf.v, &mut buf.w);
        std::mem::swap(&mut buf.v, &mut buf.w);
        let wj = plan.weights[j];
        for (o, &x) in out.iter_mut().zip(&buf.v) {
            *o += wj * x;
        }
        reward += plan.tails[j] * inv_rate * dot(&buf.v, r);
    }
    reward
}

/// Advances `current` by one step of length `delta` using `plan`.
pub fn transient_step(
    chain: &UniformizedChain,
    current: &TransientState,
    delta: f64,
    plan: &TruncationPlan,
) -> Result<TransientState> {
    if current.pi.len() != chain.len() {
        return Err(Error::DimensionMismatch {
            expected: chain.len(),
            actual: current.pi.len(),
        });
    }
    let mut out = vec![0.0; chain.len()];
    let mut buf = StepBuffers::new(chain.len());
    let reward = uniformization_step(chain, plan, &current.pi, &mut out, &mut buf);
    Ok(TransientState {
        truncation_budget_used: current.truncation_budget_used + current.mass() * plan.per_step_error,
        pi: out,
        accumulated_reward: current.accumulated_reward + reward,
        elapsed: current.elapsed + delta,
        step: current.step + 1,
    })
}

/// Single-point transient distribution and accumulated reward at time `t`
/// from the initial state, with truncation error at most `epsilon`.
pub fn transient_at(chain: &UniformizedChain, t: f64, epsilon: f64) -> TransientState {
    let plan = poisson_truncation(chain.rate * t, epsilon);
    transient_step(chain, &TransientState::initial(chain), t, &plan).expect("dimensions match by construction")
}

/// Truncation plan for a sweep of `steps` steps of length `delta` whose
/// accumulated truncation error stays within `kappa` on every prefix.
pub fn sweep_plan(chain: &UniformizedChain, delta: f64, steps: usize, kappa: f64) -> TruncationPlan {
    poisson_truncation(chain.rate * delta, kappa / steps.max(1) as f64)
}

/// Incremental sweep over the grid `δ, 2δ, …`; one [`advance`](Sweeper::advance)
/// per grid point, `J` vector-matrix products each.
#[derive(Debug, Clone)]
pub struct Sweeper<'a> {
    chain: &'a UniformizedChain,
    plan: TruncationPlan,
    delta: f64,
    pi: Vec<f64>,
    next: Vec<f64>,
    buf: StepBuffers,
    reward: f64,
    step: usize,
    truncation_used: f64,
    products: u64,
}

impl<'a> Sweeper<'a> {
    pub fn new(chain: &'a UniformizedChain, delta: f64, plan: TruncationPlan) -> Self {
        let start = TransientState::initial(chain);
        Sweeper {
            chain,
            plan,
            delta,
            pi: start.pi,
            next: vec![0.0; chain.len()],
            buf: StepBuffers::new(chain.len()),
            reward: 0.0,
            step: 0,
            truncation_used: 0.0,
            products: 0,
        }
    }

    pub fn advance(&mut self) {
        let mass: f64 = self.pi.iter().sum();
        self.reward += uniformization_step(self.chain, &self.plan, &self.pi, &mut self.next, &mut self.buf);
        std::mem::swap(&mut self.pi, &mut self.next);
        self.truncation_used += mass * self.plan.per_step_error;
        self.step += 1;
        self.products += self.plan.jumps as u64;
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn accumulated_reward(&self) -> f64 {
        self.reward
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn products(&self) -> u64 {
        self.products
    }

    pub fn plan(&self) -> &TruncationPlan {
        &self.plan
    }

    pub fn snapshot(&self) -> TransientState {
        TransientState {
            pi: self.pi.clone(),
            accumulated_reward: self.reward,
            elapsed: self.step as f64 * self.delta,
            truncation_budget_used: self.truncation_used,
            step: self.step,
        }
    }
}

/// Transient states on a whole grid together with the work performed.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub plan: TruncationPlan,
    pub states: Vec<TransientState>,
    /// Vector-matrix products performed.
    pub products: u64,
}

fn check_budget(required: u128, budget: u128) -> Result<()> {
    if required > budget {
        Err(Error::BudgetExceeded { required, budget })
    } else {
        Ok(())
    }
}

/// Iterative sweep over `steps` grid points with a single truncation depth
/// chosen so that every prefix stays within `kappa`.
pub fn transient_sweep(chain: &UniformizedChain, delta: f64, steps: usize, kappa: f64) -> Result<Sweep> {
    transient_sweep_with_budget(chain, delta, steps, kappa, DEFAULT_PRODUCT_BUDGET)
}

pub fn transient_sweep_with_budget(
    chain: &UniformizedChain,
    delta: f64,
    steps: usize,
    kappa: f64,
    budget: u128,
) -> Result<Sweep> {
    let plan = sweep_plan(chain, delta, steps, kappa);
    check_budget(plan.jumps as u128 * steps as u128, budget)?;
    let mut sweeper = Sweeper::new(chain, delta, plan.clone());
    let mut states = Vec::with_capacity(steps);
    for _ in 0..steps {
        sweeper.advance();
        states.push(sweeper.snapshot());
    }
    Ok(Sweep {
        plan,
        states,
        products: sweeper.products(),
    })
}

/// Reference grid evaluation: every grid point `iδ` computed from scratch
/// with its own depth `J_i` for error `kappa`.
#[derive(Debug, Clone)]
pub struct NaiveGrid {
    pub states: Vec<TransientState>,
    pub jumps: Vec<usize>,
    pub products: u64,
}

pub fn naive_transient_grid(
    chain: &UniformizedChain,
    delta: f64,
    steps: usize,
    kappa: f64,
) -> Result<NaiveGrid> {
    naive_transient_grid_with_budget(chain, delta, steps, kappa, DEFAULT_PRODUCT_BUDGET)
}

pub fn naive_transient_grid_with_budget(
    chain: &UniformizedChain,
    delta: f64,
    steps: usize,
    kappa: f64,
    budget: u128,
) -> Result<NaiveGrid> {
    let plans: Vec<TruncationPlan> = (1..=steps)
        .map(|i| poisson_truncation(chain.rate * delta * i as f64, kappa))
        .collect();
    let jumps: Vec<usize> = plans.iter().map(|p| p.jumps).collect();
    check_budget(jumps.iter().map(|&j| j as u128).sum(), budget)?;
    let start = TransientState::initial(chain);
    let states = plans
        .iter()
        .enumerate()
        .map(|(i, plan)| transient_step(chain, &start, delta * (i + 1) as f64, plan))
        .collect::<Result<Vec<_>>>()?;
    Ok(NaiveGrid {
        states,
        products: jumps.iter().map(|&j| j as u64).sum(),
        jumps,
    })
}

/// One-step matrix `M = Σ_{j≤J} p_j P^j` and reward vector
/// `g = Σ_{j≤J} P(N>j)/λ · P^j r`, so a grid step is `π ← π·M`, `reward += π·g`.
#[derive(Debug, Clone)]
pub struct PrecomputedStep {
    pub plan: TruncationPlan,
    pub matrix: CsrMatrix,
    pub reward_vector: Vec<f64>,
    /// Sparse matrix-matrix products spent building `matrix`.
    pub matrix_products: u64,
}

impl PrecomputedStep {
    pub fn new(chain: &UniformizedChain, plan: TruncationPlan) -> Self {
        let n = chain.len();
        let p = chain.kernel();
        let inv_rate = 1.0 / chain.rate;
        let mut power = CsrMatrix::identity(n);
        let mut matrix = power.scaled(plan.weights[0]);
        let mut u = chain.reward_rate.clone();
        let mut g: Vec<f64> = u.iter().map(|x| x * plan.tails[0] * inv_rate).collect();
        let mut tmp = vec![0.0; n];
        for j in 1..=plan.jumps {
            power = power.matmul(p);
            matrix = matrix.add_scaled(&power, plan.weights[j]);
            p.right_mul(&u, &mut tmp);
            std::mem::swap(&mut u, &mut tmp);
            let c = plan.tails[j] * inv_rate;
            g.iter_mut().zip(&u).for_each(|(gi, ui)| *gi += c * ui);
        }
        PrecomputedStep {
            matrix_products: plan.jumps as u64,
            plan,
            matrix,
            reward_vector: g,
        }
    }

    pub fn density(&self) -> f64 {
        self.matrix.density()
    }
}

/// Grid sweep using a precomputed step matrix: one product per grid point.
pub fn precomputed_sweep(
    chain: &UniformizedChain,
    delta: f64,
    steps: usize,
    kappa: f64,
) -> Result<(Sweep, PrecomputedStep)> {
    let plan = sweep_plan(chain, delta, steps, kappa);
    let pre = PrecomputedStep::new(chain, plan.clone());
    let mut state = TransientState::initial(chain);
    let mut next = vec![0.0; chain.len()];
    let mut states = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mass = state.mass();
        let reward = dot(&state.pi, &pre.reward_vector);
        pre.matrix.left_mul(&state.pi, &mut next);
        state = TransientState {
            pi: next.clone(),
            accumulated_reward: state.accumulated_reward + reward,
            elapsed: state.elapsed + delta,
            truncation_budget_used: state.truncation_budget_used + mass * plan.per_step_error,
            step: state.step + 1,
        };
        states.push(state.clone());
    }
    Ok((
        Sweep {
            plan,
            states,
            products: steps as u64,
        },
        pre,
    ))
}

/// Which grid-sweep scheme to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransientStrategy {
    /// `J` vector-matrix products per step with the sparse kernel.
    #[default]
    Iterative,
    /// One product per step with the precomputed (usually denser) matrix.
    Precomputed,
    /// Precomputed only while its density stays below [`PRECOMPUTE_MAX_DENSITY`].
    Auto,
}

pub const PRECOMPUTE_MAX_DENSITY: f64 = 0.25;

/// A grid stepper for either scheme, yielding grid points one at a time.
#[derive(Debug, Clone)]
pub enum GridStepper<'a> {
    Iterative(Sweeper<'a>),
    Precomputed {
        step: Box<PrecomputedStep>,
        pi: Vec<f64>,
        next: Vec<f64>,
        reward: f64,
        index: usize,
    },
}

impl<'a> GridStepper<'a> {
    pub fn new(chain: &'a UniformizedChain, delta: f64, plan: TruncationPlan, strategy: TransientStrategy) -> Self {
        let precomputed = match strategy {
            TransientStrategy::Iterative => None,
            TransientStrategy::Precomputed => Some(PrecomputedStep::new(chain, plan.clone())),
            TransientStrategy::Auto => {
                let pre = PrecomputedStep::new(chain, plan.clone());
                (pre.density() < PRECOMPUTE_MAX_DENSITY).then_some(pre)
            }
        };
        match precomputed {
            None => GridStepper::Iterative(Sweeper::new(chain, delta, plan)),
            Some(step) => {
                let start = TransientState::initial(chain);
                GridStepper::Precomputed {
                    step: Box::new(step),
                    next: vec![0.0; start.pi.len()],
                    pi: start.pi,
                    reward: 0.0,
                    index: 0,
                }
            }
        }
    }

    pub fn advance(&mut self) {
        match self {
            GridStepper::Iterative(s) => s.advance(),
            GridStepper::Precomputed {
                step,
                pi,
                next,
                reward,
                index,
            } => {
                *reward += dot(pi, &step.reward_vector);
                step.matrix.left_mul(pi, next);
                std::mem::swap(pi, next);
                *index += 1;
            }
        }
    }

    pub fn pi(&self) -> &[f64] {
        match self {
            GridStepper::Iterative(s) => s.pi(),
            GridStepper::Precomputed { pi, .. } => pi,
        }
    }

    pub fn accumulated_reward(&self) -> f64 {
        match self {
            GridStepper::Iterative(s) => s.accumulated_reward(),
            GridStepper::Precomputed { reward, .. } => *reward,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A -> B at rate 1, B absorbing, reward 1 in A.
    fn two_state() -> UniformizedChain {
        UniformizedChain::from_rates(&[vec![(1, 1.0)], vec![]], vec![1.0, 0.0], vec![0.0, 0.0], 0).unwrap()
    }

    #[test]
    fn truncation_examples() {
        assert_eq!(poisson_truncation(1.0, 0.01).jumps, 4);
        assert_eq!(poisson_truncation(0.0, 0.01).jumps, 0);
        assert_eq!(poisson_truncation(0.1, 0.01 / 1000.0).jumps, 3);
    }

    #[test]
    fn poisson_tails_for_large_mean() {
        let terms = poisson_terms(5000.0, 1e-12);
        let total: f64 = terms.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        // mass is centred around the mean
        let mode = terms
            .weights
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!((mode as i64 - 5000).abs() <= 1);
        assert!(terms.tails[4000] > 0.999999);
    }

    #[test]
    fn two_state_closed_form() {
        let chain = two_state();
        let s = transient_at(&chain, 1.0, 1e-14);
        let e = (-1.0f64).exp();
        assert!((s.pi[0] - e).abs() < 1e-12);
        assert!((s.pi[1] - (1.0 - e)).abs() < 1e-12);
        // ∫ e^{-u} du over [0, 1]
        assert!((s.accumulated_reward - (1.0 - e)).abs() < 1e-12);
    }

    #[test]
    fn no_jumps_means_deterministic_dwell() {
        let chain =
            UniformizedChain::from_rates(&[vec![], vec![]], vec![2.5, 0.0], vec![0.0, 0.0], 0).unwrap();
        assert_eq!(chain.rate(), 1.0);
        let plan = poisson_truncation(0.0, 1e-9);
        let start = TransientState::initial(&chain);
        let s = transient_step(&chain, &start, 0.0, &plan).unwrap();
        assert_eq!(s.pi, start.pi);
        // with positive δ the identity kernel keeps all mass in place
        let s = transient_at(&chain, 2.0, 1e-12);
        assert!((s.pi[0] - 1.0).abs() < 1e-12);
        assert!((s.accumulated_reward - 5.0).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let chain = two_state();
        let bad = TransientState {
            pi: vec![1.0],
            accumulated_reward: 0.0,
            elapsed: 0.0,
            truncation_budget_used: 0.0,
            step: 0,
        };
        let plan = poisson_truncation(0.1, 1e-6);
        assert!(matches!(
            transient_step(&chain, &bad, 0.1, &plan),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn iterated_steps_match_single_point() {
        let chain = two_state();
        let sweep = transient_sweep(&chain, 0.1, 10, 1e-13).unwrap();
        let direct = transient_at(&chain, 1.0, 1e-14);
        let last = sweep.states.last().unwrap();
        for (a, b) in last.pi.iter().zip(&direct.pi) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!((last.accumulated_reward - direct.accumulated_reward).abs() < 1e-8);
    }

    #[test]
    fn single_step_sweep_equals_step() {
        let chain = two_state();
        let sweep = transient_sweep(&chain, 0.3, 1, 1e-9).unwrap();
        let step = transient_step(&chain, &TransientState::initial(&chain), 0.3, &sweep.plan).unwrap();
        assert_eq!(sweep.states[0], step);
    }

    #[test]
    fn budget_is_enforced() {
        let chain = two_state();
        let err = transient_sweep_with_budget(&chain, 0.1, 1000, 0.01, 100).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { required: 3000, budget: 100 }));
    }

    #[test]
    fn precomputed_agrees_with_iterative() {
        let chain = UniformizedChain::from_rates(
            &[vec![(1, 2.0), (2, 0.5)], vec![(0, 1.0), (2, 1.0)], vec![]],
            vec![1.0, 3.0, 0.0],
            vec![0.2, 0.0, 0.0],
            0,
        )
        .unwrap();
        let it = transient_sweep(&chain, 0.05, 40, 1e-10).unwrap();
        let (pre, _) = precomputed_sweep(&chain, 0.05, 40, 1e-10).unwrap();
        for (a, b) in it.states.iter().zip(&pre.states) {
            for (x, y) in a.pi.iter().zip(&b.pi) {
                assert!((x - y).abs() < 1e-10);
            }
            assert!((a.accumulated_reward - b.accumulated_reward).abs() < 1e-10);
        }
    }

    #[test]
    fn grid_stepper_auto_prefers_sparse_result() {
        // 50-state cycle: the precomputed matrix for J >= 12 has density > 25%
        let n = 50;
        let rows: Vec<Vec<(usize, f64)>> = (0..n).map(|i| vec![((i + 1) % n, 1.0)]).collect();
        let chain = UniformizedChain::from_rates(&rows, vec![1.0; n], vec![0.0; n], 0).unwrap();
        let plan = poisson_truncation(5.0, 1e-9);
        let stepper = GridStepper::new(&chain, 5.0, plan, TransientStrategy::Auto);
        assert!(matches!(stepper, GridStepper::Iterative(_)));
    }
}
