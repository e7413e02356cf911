use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

use fdctmc::lang::{elaborate_with_warnings, parse};
use fdctmc::reward::{expected_reward, ExpectedRewardOptions};
use fdctmc::sim::{estimate_expected_reward, simulate_run, write_trace_csv};
use fdctmc::subordinated::SubordinatedChain;
use fdctmc::synthesis::{synthesize as run_synthesis, GridOverride, SolverKind, SynthesisOptions};
use fdctmc::transient::{
    naive_transient_grid_with_budget, precomputed_sweep, sweep_plan, transient_sweep_with_budget,
    UniformizedChain, DEFAULT_PRODUCT_BUDGET,
};
use fdctmc::validate::{setting_states, validate_basic, validate_restrictions, Restrictions};
use fdctmc::{models, Error, EventRef, FdctmcModel};

use crate::report::*;
use crate::{BenchArgs, ExpRewardArgs, RestrictionLevel, SimulateArgs, SolverArg, SynthesizeArgs, ValidateArgs};

#[derive(Debug)]
pub enum Failure {
    Model { source: String, error: Error },
    Io(String),
    Usage(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Model { error, .. } if error.is_resource_failure() => 2,
            Failure::Io(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Model { source, error } => match error {
                Error::Syntax { line, column, message } => write!(f, "{source}:{line}:{column}: {message}"),
                _ => write!(f, "{source}: {error}"),
            },
            Failure::Io(m) | Failure::Usage(m) => f.write_str(m),
        }
    }
}

type Outcome = Result<Report, Failure>;

struct Loaded {
    name: String,
    model: FdctmcModel,
    warnings: Vec<String>,
}

impl Loaded {
    fn fail(&self, error: Error) -> Failure {
        Failure::Model {
            source: self.name.clone(),
            error,
        }
    }
}

fn load(path: &Path) -> Result<Loaded, Failure> {
    let name = path.display().to_string();
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => match models::source(&name) {
            Some(src) => src.to_string(),
            None => return Err(Failure::Io(format!("cannot read {name}: {e}"))),
        },
    };
    let fail = |error| Failure::Model {
        source: name.clone(),
        error,
    };
    let ast = parse(&text).map_err(fail)?;
    let (model, warnings) = elaborate_with_warnings(&ast).map_err(fail)?;
    Ok(Loaded { name, model, warnings })
}

pub fn validate(args: &ValidateArgs) -> Outcome {
    let loaded = load(&args.model.model)?;
    let m = &loaded.model;
    let mut diagnostics = validate_basic(m);
    let setting: Vec<Option<String>> = match args.restrictions {
        RestrictionLevel::None => setting_states(m)
            .into_iter()
            .map(|set| {
                let names: Vec<String> = set.iter().map(|&s| describe(m, s)).collect();
                (!names.is_empty()).then(|| names.join(", "))
            })
            .collect(),
        level => {
            let which = if level == RestrictionLevel::All {
                Restrictions::All
            } else {
                Restrictions::Structural
            };
            let report = validate_restrictions(m, which);
            diagnostics.extend(report.diagnostics.iter().cloned());
            report
                .setting_states
                .iter()
                .map(|s| s.map(|s| describe(m, s)))
                .collect()
        }
    };
    let events = m
        .events()
        .iter()
        .zip(setting)
        .map(|(e, setting_state)| EventInfo {
            name: e.name.clone(),
            delay: e.delay,
            active_states: e.active_states().count(),
            setting_state,
        })
        .collect();
    let fd_entries: usize = m.events().iter().flat_map(|e| e.kernel_rows()).map(|(_, k)| k.len()).sum();
    Ok(Report::Validate(ValidateReport {
        schema: schema("validate"),
        ok: diagnostics.is_empty(),
        states: m.num_states(),
        transitions: m.rates().nonzeros() + fd_entries,
        target_states: m.target().map(|t| t.len()),
        events,
        warnings: loaded.warnings.clone(),
        diagnostics: diagnostics
            .into_iter()
            .map(|d| DiagnosticInfo {
                kind: serde_json::to_value(d.kind)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default(),
                restriction: d.kind.restriction(),
                message: d.message,
            })
            .collect(),
    }))
}

fn describe(m: &FdctmcModel, s: fdctmc::StateId) -> String {
    if m.metadata().variables.is_empty() {
        s.0.to_string()
    } else {
        m.metadata().describe(s)
    }
}

pub fn exp_reward(args: &ExpRewardArgs) -> Outcome {
    let loaded = load(&args.model.model)?;
    let opts = ExpectedRewardOptions::from_epsilon(args.epsilon);
    let r = expected_reward(&loaded.model, &opts).map_err(|e| loaded.fail(e))?;
    Ok(Report::ExpReward(ExpRewardReport {
        schema: schema("exp-reward"),
        value: r.value,
        epsilon: args.epsilon,
        residual: r.residual,
        iterations: r.iterations,
        infinite_states: r.infinite_states.len(),
    }))
}

pub fn synthesize(args: &SynthesizeArgs) -> Outcome {
    let loaded = load(&args.model.model)?;
    let m = &loaded.model;
    let mut opts = SynthesisOptions::new(args.epsilon);
    if let Some(b) = args.budget {
        opts.budget = b;
    }
    opts.solver = match args.solver {
        SolverArg::Auto => SolverKind::Auto,
        SolverArg::ValueIteration => SolverKind::ValueIteration,
        SolverArg::PolicyIteration => SolverKind::PolicyIteration,
    };
    if let Some(steps) = args.grid_steps {
        let steps = usize::try_from(steps)
            .ok()
            .filter(|&s| s > 0)
            .ok_or_else(|| Failure::Usage("--grid-steps must be a positive integer".into()))?;
        opts.grid = Some(GridOverride {
            upper_delay: args.max_delay,
            steps,
        });
    }
    let r = run_synthesis(m, &opts).map_err(|e| loaded.fail(e))?;
    let name = |e: fdctmc::EventId| m.event(e).name.clone();
    Ok(Report::Synthesize(SynthesizeReport {
        schema: schema("synthesize"),
        epsilon: r.epsilon,
        delays: r.delays.iter().map(|(&e, &d)| (name(e), d)).collect(),
        grid_indices: r.grid_indices.iter().map(|(&e, &i)| (name(e), i)).collect(),
        value: r.value,
        achieved: r.achieved,
        val_upper: r.val_upper,
        solver: match r.solver {
            SolverKind::Auto => "auto",
            SolverKind::ValueIteration => "value-iteration",
            SolverKind::PolicyIteration => "policy-iteration",
        }
        .into(),
        iterations: r.iterations,
        products: r.products,
        action_counts: r.action_counts.iter().map(|(&e, &k)| (name(e), k)).collect(),
        bounds: r
            .bounds
            .iter()
            .map(|b| BoundsInfo {
                event: b.event_name.clone(),
                steps: b.steps,
                step: b.step,
                upper_delay: b.upper_delay,
                kappa: b.kappa,
                alpha: b.alpha,
                bound_steps: b.bound_steps,
                d1: b.d1,
                raw_step: b.raw_step,
                lambda: b.inputs.lambda,
                min_branching: b.inputs.min_branching,
                min_reward: b.inputs.min_reward,
                max_reward: b.inputs.max_reward,
                min_step_reward: b.inputs.min_step_reward,
                decision_states: b.inputs.decision_states,
                region_size: b.inputs.region_size,
            })
            .collect(),
    }))
}

fn to_usize(x: u128, flag: &str) -> Result<usize, Failure> {
    usize::try_from(x)
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("{flag} must be a positive integer")))
}

pub fn simulate(args: &SimulateArgs) -> Outcome {
    let loaded = load(&args.model.model)?;
    let runs = to_usize(args.runs, "--runs")?;
    let cap = to_usize(args.step_cap, "--step-cap")?;
    let est = estimate_expected_reward(&loaded.model, runs, args.seed, cap).map_err(|e| loaded.fail(e))?;
    if let Some(path) = &args.trace {
        let run = simulate_run(&loaded.model, args.seed, 0, cap);
        let file = fs::File::create(path).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?;
        write_trace_csv(&loaded.model, &run.steps, file)
            .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(Report::Simulate(SimulateReport {
        schema: schema("simulate"),
        mean: est.mean,
        std_error: est.std_error,
        runs: est.runs,
        truncated_runs: est.truncated_runs,
        deadlocked_runs: est.deadlocked_runs,
        requested_runs: runs,
        seed: args.seed,
    }))
}

/// The exponential part of the model as a uniformized chain.
fn exponential_chain(m: &FdctmcModel, lambda: Option<f64>) -> Result<UniformizedChain, Failure> {
    let rows: Vec<Vec<(usize, f64)>> = m
        .states()
        .map(|s| m.rates().row(s).iter().map(|&(d, q)| (d.0, q)).collect())
        .collect();
    let rate_reward = m.rewards().rates().to_vec();
    let impulse_rate = m
        .states()
        .map(|s| {
            m.rates()
                .row(s)
                .iter()
                .map(|&(d, q)| q * m.rewards().impulse(s, EventRef::Exponential, d))
                .sum()
        })
        .collect();
    let max_exit = m.states().map(|s| m.exit_rate(s)).fold(0.0, f64::max);
    let built = match lambda {
        None => UniformizedChain::from_rates(&rows, rate_reward, impulse_rate, m.initial().0),
        Some(l) if l > 0.0 && l >= max_exit => {
            UniformizedChain::with_rate(&rows, rate_reward, impulse_rate, m.initial().0, l)
        }
        Some(l) => {
            return Err(Failure::Usage(format!(
                "--lambda {l} is below the largest exit rate {max_exit}"
            )))
        }
    };
    built.map_err(|e| Failure::Usage(e.to_string()))
}

pub fn bench_transient(args: &BenchArgs) -> Outcome {
    let loaded = load(&args.model.model)?;
    let m = &loaded.model;
    if !(args.delta > 0.0 && args.kappa > 0.0) {
        return Err(Failure::Usage("--delta and --kappa must be positive".into()));
    }
    let steps = to_usize(args.steps, "--steps")?;
    let budget = args.budget.unwrap_or(DEFAULT_PRODUCT_BUDGET);
    let chain = match &args.event {
        Some(name) => {
            let e = m
                .event_by_name(name)
                .ok_or_else(|| Failure::Usage(format!("no fd event named {name}")))?;
            SubordinatedChain::build(m, e).map_err(|e| loaded.fail(e))?.chain
        }
        None => exponential_chain(m, args.lambda)?,
    };

    let t = Instant::now();
    let naive = naive_transient_grid_with_budget(&chain, args.delta, steps, args.kappa, budget)
        .map_err(|e| loaded.fail(e))?;
    let naive_cost = StrategyCost {
        products: naive.products,
        seconds: t.elapsed().as_secs_f64(),
    };
    drop(naive);

    let t = Instant::now();
    let sweep =
        transient_sweep_with_budget(&chain, args.delta, steps, args.kappa, budget).map_err(|e| loaded.fail(e))?;
    let iterative = StrategyCost {
        products: sweep.products,
        seconds: t.elapsed().as_secs_f64(),
    };
    let jumps = sweep.plan.jumps;
    drop(sweep);

    let plan = sweep_plan(&chain, args.delta, steps, args.kappa);
    let required = steps as u128 + plan.jumps as u128;
    if required > budget {
        return Err(loaded.fail(Error::BudgetExceeded { required, budget }));
    }
    let t = Instant::now();
    let (sweep, pre) = precomputed_sweep(&chain, args.delta, steps, args.kappa).map_err(|e| loaded.fail(e))?;
    let precomputed = PrecomputedCost {
        products: sweep.products,
        matrix_products: pre.matrix_products,
        seconds: t.elapsed().as_secs_f64(),
        density: pre.density(),
    };

    Ok(Report::Bench(BenchReport {
        schema: schema("bench-transient"),
        states: chain.len(),
        delta: args.delta,
        steps,
        lambda: chain.rate(),
        kappa: args.kappa,
        jumps_per_step: jumps,
        kernel_density: chain.kernel().density(),
        naive_over_iterative: naive_cost.products as f64 / iterative.products.max(1) as f64,
        naive: naive_cost,
        iterative,
        precomputed,
    }))
}
