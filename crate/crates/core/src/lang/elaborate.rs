//! From syntax tree to explicit model over the reachable valuations.

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::lang::ast::*;
use crate::model::{EventId, EventRef, FdctmcModel, Metadata, ModelBuilder, StateId};

/// Tolerance on the sum of the probabilities of one fd command.
const PROBABILITY_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Value {
    Int(i64),
    Real(f64),
    Bool(bool),
}

impl Value {
    fn number(self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(i as f64),
            Value::Real(x) => Some(x),
            Value::Bool(_) => None,
        }
    }
}

fn err(span: Span, message: impl std::fmt::Display) -> Error {
    Error::Elaboration(format!("line {}: {message}", span.line))
}

struct Scope<'a> {
    constants: &'a HashMap<String, Value>,
    variables: &'a HashMap<String, usize>,
    valuation: &'a [i64],
}

impl Scope<'_> {
    fn eval(&self, e: &Expr, span: Span) -> Result<Value> {
        Ok(match e {
            Expr::Int(i) => Value::Int(*i),
            Expr::Num(x) => Value::Real(*x),
            Expr::Bool(b) => Value::Bool(*b),
            Expr::Ident(name) => {
                if let Some(&v) = self.constants.get(name) {
                    v
                } else if let Some(&i) = self.variables.get(name) {
                    match self.valuation.get(i) {
                        Some(&v) => Value::Int(v),
                        None => return Err(err(span, format!("variable {name} used in a constant expression"))),
                    }
                } else {
                    return Err(err(span, format!("unknown identifier {name}")));
                }
            }
            Expr::Unary(UnaryOp::Neg, a) => match self.eval(a, span)? {
                Value::Int(i) => Value::Int(-i),
                Value::Real(x) => Value::Real(-x),
                Value::Bool(_) => return Err(err(span, "cannot negate a boolean")),
            },
            Expr::Unary(UnaryOp::Not, a) => Value::Bool(!self.boolean(a, span)?),
            Expr::Binary(op, a, b) => self.binary(*op, a, b, span)?,
            Expr::Call(f, args) => {
                let xs = args.iter().map(|a| self.eval(a, span)).collect::<Result<Vec<_>>>()?;
                let all_int = xs.iter().all(|v| matches!(v, Value::Int(_)));
                let nums = xs
                    .iter()
                    .map(|v| v.number().ok_or_else(|| err(span, "boolean argument to arithmetic function")))
                    .collect::<Result<Vec<_>>>()?;
                let wrap = |x: f64, int: bool| if int { Value::Int(x as i64) } else { Value::Real(x) };
                match f {
                    Function::Min => wrap(nums.iter().copied().fold(f64::INFINITY, f64::min), all_int),
                    Function::Max => wrap(nums.iter().copied().fold(f64::NEG_INFINITY, f64::max), all_int),
                    Function::Floor => Value::Int(nums[0].floor() as i64),
                    Function::Ceil => Value::Int(nums[0].ceil() as i64),
                    Function::Mod => match (xs[0], xs[1]) {
                        (Value::Int(a), Value::Int(b)) if b != 0 => Value::Int(a.rem_euclid(b)),
                        _ => return Err(err(span, "mod needs integer arguments and a non-zero divisor")),
                    },
                }
            }
        })
    }

    fn binary(&self, op: BinaryOp, a: &Expr, b: &Expr, span: Span) -> Result<Value> {
        use BinaryOp::*;
        match op {
            Or => return Ok(Value::Bool(self.boolean(a, span)? || self.boolean(b, span)?)),
            And => return Ok(Value::Bool(self.boolean(a, span)? && self.boolean(b, span)?)),
            Implies => return Ok(Value::Bool(!self.boolean(a, span)? || self.boolean(b, span)?)),
            _ => {}
        }
        let (x, y) = (self.eval(a, span)?, self.eval(b, span)?);
        if let (Eq | Ne, Value::Bool(p), Value::Bool(q)) = (op, x, y) {
            return Ok(Value::Bool((p == q) == (op == Eq)));
        }
        let (Some(u), Some(v)) = (x.number(), y.number()) else {
            return Err(err(span, "boolean used in arithmetic"));
        };
        let ints = match (x, y) {
            (Value::Int(i), Value::Int(j)) => Some((i, j)),
            _ => None,
        };
        Ok(match op {
            Eq => Value::Bool(u == v),
            Ne => Value::Bool(u != v),
            Lt => Value::Bool(u < v),
            Le => Value::Bool(u <= v),
            Gt => Value::Bool(u > v),
            Ge => Value::Bool(u >= v),
            Add => ints.map_or(Value::Real(u + v), |(i, j)| Value::Int(i + j)),
            Sub => ints.map_or(Value::Real(u - v), |(i, j)| Value::Int(i - j)),
            Mul => ints.map_or(Value::Real(u * v), |(i, j)| Value::Int(i * j)),
            Div => Value::Real(u / v),
            Or | And | Implies => unreachable!(),
        })
    }

    fn boolean(&self, e: &Expr, span: Span) -> Result<bool> {
        match self.eval(e, span)? {
            Value::Bool(b) => Ok(b),
            _ => Err(err(span, "expected a boolean expression")),
        }
    }

    fn number(&self, e: &Expr, span: Span) -> Result<f64> {
        self.eval(e, span)?
            .number()
            .ok_or_else(|| err(span, "expected a numeric expression"))
    }

    fn integer(&self, e: &Expr, span: Span) -> Result<i64> {
        match self.eval(e, span)? {
            Value::Int(i) => Ok(i),
            Value::Real(x) if x.fract() == 0.0 && x.abs() < 9e15 => Ok(x as i64),
            v => Err(err(span, format!("expected an integer, got {v:?}"))),
        }
    }
}

/// A command with its module-level context resolved.
struct Resolved<'a> {
    command: &'a Command,
    event: Option<EventId>,
}

/// Successors of one enabled command in one state: `(weight, destination)`.
type Branches = Vec<(f64, Vec<i64>)>;

/// Builds the explicit model, returning it with non-fatal warnings.
pub fn elaborate_with_warnings(ast: &Ast) -> Result<(FdctmcModel, Vec<String>)> {
    let mut warnings = Vec::new();
    let empty_vars = HashMap::new();
    let mut constants = HashMap::new();
    for c in &ast.constants {
        let scope = Scope {
            constants: &constants,
            variables: &empty_vars,
            valuation: &[],
        };
        let v = scope.eval(&c.value, c.span)?;
        let v = match (c.ty, v) {
            (Some(ConstType::Int), Value::Real(x)) if x.fract() == 0.0 => Value::Int(x as i64),
            (Some(ConstType::Int), Value::Real(_)) | (Some(ConstType::Int | ConstType::Double), Value::Bool(_)) => {
                return Err(err(c.span, format!("constant {} has the wrong type", c.name)))
            }
            (Some(ConstType::Double), Value::Int(i)) => Value::Real(i as f64),
            (Some(ConstType::Bool), Value::Int(_) | Value::Real(_)) => {
                return Err(err(c.span, format!("constant {} has the wrong type", c.name)))
            }
            (_, v) => v,
        };
        constants.insert(c.name.clone(), v);
    }
    let cscope = Scope {
        constants: &constants,
        variables: &empty_vars,
        valuation: &[],
    };

    // variables in declaration order across modules
    let mut names = Vec::new();
    let mut ranges = Vec::new();
    let mut init = Vec::new();
    let mut var_index = HashMap::new();
    for m in &ast.modules {
        for v in &m.variables {
            if constants.contains_key(&v.name) {
                return Err(err(v.span, format!("{} is both a constant and a variable", v.name)));
            }
            let (lo, hi) = (cscope.integer(&v.low, v.span)?, cscope.integer(&v.high, v.span)?);
            let i0 = cscope.integer(&v.init, v.span)?;
            if lo > hi {
                return Err(err(v.span, format!("empty range [{lo}..{hi}] for {}", v.name)));
            }
            if !(lo..=hi).contains(&i0) {
                return Err(err(v.span, format!("initial value {i0} of {} outside [{lo}..{hi}]", v.name)));
            }
            var_index.insert(v.name.clone(), names.len());
            names.push(v.name.clone());
            ranges.push((lo, hi));
            init.push(i0);
        }
    }

    // fd events in declaration order; each is local to its module
    let mut events: Vec<(String, f64)> = Vec::new();
    let mut resolved = Vec::new();
    for m in &ast.modules {
        let mut local = HashMap::new();
        for f in &m.fdelays {
            let delay = cscope.number(&f.delay, f.span)?;
            local.insert(f.name.clone(), EventId(events.len()));
            events.push((f.name.clone(), delay));
        }
        let mut used = vec![false; events.len()];
        for c in &m.commands {
            let event = match &c.trigger {
                Trigger::Exponential => None,
                Trigger::Fd(name) => match local.get(name) {
                    Some(&e) => {
                        used[e.0] = true;
                        Some(e)
                    }
                    None => {
                        return Err(err(
                            c.span,
                            format!("fd event {name} is not declared in module {}", m.name),
                        ))
                    }
                },
            };
            for (var, _) in c.updates.iter().flat_map(|u| &u.assignments) {
                if !var_index.contains_key(var) {
                    return Err(err(c.span, format!("assignment to unknown variable {var}")));
                }
            }
            resolved.push(Resolved { command: c, event });
        }
        for f in &m.fdelays {
            if !used[local[&f.name].0] {
                warnings.push(format!("fd event {} is declared but never used", f.name));
            }
        }
    }

    // reachable valuations
    let mut index: HashMap<Vec<i64>, usize> = HashMap::new();
    let mut valuations: Vec<Vec<i64>> = Vec::new();
    let mut exp_edges: Vec<(usize, usize, f64, usize)> = Vec::new(); // (src, dst, rate, command)
    let mut fd_edges: BTreeMap<(usize, EventId), (usize, Vec<(usize, f64)>)> = BTreeMap::new();
    let mut queue = VecDeque::new();
    index.insert(init.clone(), 0);
    valuations.push(init.clone());
    queue.push_back(0usize);
    while let Some(src) = queue.pop_front() {
        let val = valuations[src].clone();
        let scope = Scope {
            constants: &constants,
            variables: &var_index,
            valuation: &val,
        };
        for (ci, r) in resolved.iter().enumerate() {
            let c = r.command;
            if !scope.boolean(&c.guard, c.span)? {
                continue;
            }
            let branches = branches(&scope, c, &var_index, &ranges, &names, &val)?;
            let mut targets = Vec::with_capacity(branches.len());
            for (w, dst) in branches {
                let next = index.len();
                let d = *index.entry(dst.clone()).or_insert_with(|| {
                    valuations.push(dst);
                    queue.push_back(next);
                    next
                });
                targets.push((d, w));
            }
            match r.event {
                None => {
                    for (d, rate) in targets {
                        if rate < 0.0 {
                            return Err(err(c.span, format!("negative rate {rate}")));
                        }
                        exp_edges.push((src, d, rate, ci));
                    }
                }
                Some(e) => {
                    let total: f64 = targets.iter().map(|&(_, p)| p).sum();
                    if targets.iter().any(|&(_, p)| p < 0.0) {
                        return Err(err(c.span, "negative probability in fd command"));
                    }
                    if (total - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
                        return Err(err(
                            c.span,
                            format!(
                                "probabilities sum to {total} in fd command of {} in state {}",
                                events[e.0].0,
                                describe(&names, &val)
                            ),
                        ));
                    }
                    if let Some(&(other, _)) = fd_edges.get(&(src, e)) {
                        return Err(err(
                            c.span,
                            format!(
                                "fd event {} has two commands enabled in state {} (the other on line {})",
                                events[e.0].0,
                                describe(&names, &val),
                                resolved[other].command.span.line
                            ),
                        ));
                    }
                    fd_edges.insert((src, e), (ci, targets));
                }
            }
        }
    }

    // canonical numbering: lexicographic order of valuations
    let mut order: Vec<usize> = (0..valuations.len()).collect();
    order.sort_by(|&a, &b| valuations[a].cmp(&valuations[b]));
    let mut id = vec![StateId(0); valuations.len()];
    for (new, &old) in order.iter().enumerate() {
        id[old] = StateId(new);
    }
    let n = valuations.len();
    let mut b = ModelBuilder::new(n);
    b.initial(id[0]);
    for (name, delay) in &events {
        b.fd_event(name.clone(), *delay);
    }

    let state_scope = |s: usize| Scope {
        constants: &constants,
        variables: &var_index,
        valuation: &valuations[s],
    };

    // rewards
    if ast.rewards.len() > 1 {
        return Err(err(ast.rewards[1].span, "only one reward structure is supported"));
    }
    let items: Vec<&RewardItem> = ast.rewards.iter().flat_map(|r| &r.items).collect();
    let mut rate_reward = vec![0.0; n];
    for item in items.iter().filter(|i| i.kind == RewardKind::Rate) {
        for (s, r) in rate_reward.iter_mut().enumerate() {
            let scope = state_scope(s);
            if scope.boolean(&item.guard, item.span)? {
                *r += scope.number(&item.value, item.span)?;
            }
        }
    }
    for (s, &r) in rate_reward.iter().enumerate() {
        if r != 0.0 {
            b.rate_reward(id[s], r);
        }
    }
    let impulse_of = |s: usize, label: &Option<String>| -> Result<f64> {
        let scope = state_scope(s);
        let mut total = 0.0;
        for item in &items {
            if let RewardKind::Impulse(l) = &item.kind {
                if l == label && scope.boolean(&item.guard, item.span)? {
                    total += scope.number(&item.value, item.span)?;
                }
            }
        }
        Ok(total)
    };

    // exponential transitions; impulses of parallel commands combine rate-weighted
    let mut exp: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for &(src, dst, rate, ci) in &exp_edges {
        if rate == 0.0 {
            continue;
        }
        let imp = impulse_of(src, &resolved[ci].command.label)?;
        let entry = exp.entry((src, dst)).or_insert((0.0, 0.0));
        entry.0 += rate;
        entry.1 += rate * imp;
    }
    for (&(src, dst), &(rate, weighted)) in &exp {
        b.rate(id[src], id[dst], rate);
        if weighted != 0.0 {
            b.impulse(id[src], EventRef::Exponential, id[dst], weighted / rate);
        }
    }
    for (&(src, e), (ci, targets)) in &fd_edges {
        b.fd_transition(e, id[src], targets.iter().map(|&(d, p)| (id[d], p)));
        let imp = impulse_of(src, &resolved[*ci].command.label)?;
        if imp != 0.0 {
            for &(d, p) in targets {
                if p > 0.0 {
                    b.impulse(id[src], EventRef::Fd(e), id[d], imp);
                }
            }
        }
    }

    // target label
    if let Some(label) = ast.labels.iter().find(|l| l.name == "target") {
        b.declare_target();
        for s in 0..n {
            if state_scope(s).boolean(&label.guard, label.span)? {
                b.target(id[s]);
            }
        }
    }
    for l in &ast.labels {
        for s in 0..n {
            state_scope(s).boolean(&l.guard, l.span)?;
        }
    }

    let mut sorted = vec![Vec::new(); n];
    for (old, v) in valuations.into_iter().enumerate() {
        sorted[id[old].0] = v;
    }
    b.metadata(Metadata {
        variables: names,
        valuations: sorted,
    });
    Ok((b.build()?, warnings))
}

fn describe(names: &[String], val: &[i64]) -> String {
    let parts: Vec<String> = names.iter().zip(val).map(|(n, v)| format!("{n}={v}")).collect();
    format!("({})", parts.join(","))
}

fn branches(
    scope: &Scope,
    c: &Command,
    var_index: &HashMap<String, usize>,
    ranges: &[(i64, i64)],
    names: &[String],
    val: &[i64],
) -> Result<Branches> {
    let mut out = Vec::with_capacity(c.updates.len());
    for u in &c.updates {
        let w = scope.number(&u.weight, c.span)?;
        let mut next = val.to_vec();
        for (var, e) in &u.assignments {
            let i = var_index[var];
            let v = scope.integer(e, c.span)?;
            let (lo, hi) = ranges[i];
            if !(lo..=hi).contains(&v) {
                return Err(err(
                    c.span,
                    format!("update sets {var} to {v}, outside [{lo}..{hi}], in state {}", describe(names, val)),
                ));
            }
            next[i] = v;
        }
        out.push((w, next));
    }
    Ok(out)
}

/// Builds the explicit model of a parsed file.
pub fn elaborate(ast: &Ast) -> Result<FdctmcModel> {
    elaborate_with_warnings(ast).map(|(m, _)| m)
}
