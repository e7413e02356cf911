use std::collections::BTreeMap;

use fdctmc::model::ModelBuilder;
use fdctmc::reward::{expected_reward, ExpectedRewardOptions};
use fdctmc::{models, EventRef, FdctmcModel, StateId};

type Dense = Vec<Vec<f64>>;

fn matmul(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] != 0.0 {
                for j in 0..n {
                    c[i][j] += a[i][k] * b[k][j];
                }
            }
        }
    }
    c
}

/// Matrix exponential by scaling and squaring of a Taylor series.
fn expm(a: &Dense) -> Dense {
    let n = a.len();
    let norm = a.iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let s = (norm / 0.25).log2().ceil().max(0.0) as i32;
    let scale = 0.5f64.powi(s);
    let x: Dense = a.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
    let mut result: Dense = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut term = result.clone();
    for k in 1..30 {
        term = matmul(&term, &x);
        term.iter_mut().flatten().for_each(|v| *v /= k as f64);
        for i in 0..n {
            for j in 0..n {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..s {
        result = matmul(&result, &result);
    }
    result
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Dense, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Successor distribution and expected reward of one step from `s`.
fn dense_step(m: &FdctmcModel, s: StateId) -> (BTreeMap<StateId, f64>, f64) {
    let mut out = BTreeMap::new();
    let active = m.active_events(s);
    if active.is_empty() {
        let e = m.exit_rate(s);
        let mut reward = m.rewards().rate(s) / e;
        for &(d, q) in m.rates().row(s) {
            *out.entry(d).or_insert(0.0) += q / e;
            reward += q / e * m.rewards().impulse(s, EventRef::Exponential, d);
        }
        return (out, reward);
    }
    let f = active[0];
    let ev = m.event(f);
    let mut region = vec![s];
    let mut i = 0;
    while i < region.len() {
        let u = region[i];
        for &(d, _) in m.rates().row(u) {
            if ev.is_active(d) && !m.is_target(d) && !region.contains(&d) {
                region.push(d);
            }
        }
        i += 1;
    }
    let mut index: BTreeMap<StateId, usize> = region.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let mut all = region.clone();
    for &u in &region {
        for &(d, _) in m.rates().row(u) {
            if !index.contains_key(&d) {
                index.insert(d, all.len());
                all.push(d);
            }
        }
    }
    let n = all.len() + 1;
    let mut a = vec![vec![0.0; n]; n];
    for (i, &u) in region.iter().enumerate() {
        let mut rate = m.rewards().rate(u);
        for &(d, q) in m.rates().row(u) {
            let j = index[&d];
            a[i][j] += q;
            a[i][i] -= q;
            rate += q * m.rewards().impulse(u, EventRef::Exponential, d);
        }
        a[i][n - 1] = rate;
    }
    let scaled: Dense = a.iter().map(|r| r.iter().map(|v| v * ev.delay).collect()).collect();
    let e = expm(&scaled);
    let mut reward = e[0][n - 1];
    for (j, &u) in all.iter().enumerate() {
        let p = e[0][j];
        if j < region.len() {
            for (d, k) in ev.kernel(u).unwrap().iter() {
                *out.entry(d).or_insert(0.0) += p * k;
                reward += p * k * m.rewards().impulse(u, EventRef::Fd(f), d);
            }
        } else {
            *out.entry(u).or_insert(0.0) += p;
        }
    }
    (out, reward)
}

fn dense_expected_reward(m: &FdctmcModel) -> f64 {
    let mut nodes = vec![m.initial()];
    let mut steps = Vec::new();
    let mut i = 0;
    while i < nodes.len() {
        let s = nodes[i];
        let step = if m.is_target(s) { (BTreeMap::new(), 0.0) } else { dense_step(m, s) };
        for &d in step.0.keys() {
            if !nodes.contains(&d) {
                nodes.push(d);
            }
        }
        steps.push(step);
        i += 1;
    }
    let n = nodes.len();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for (i, (succ, r)) in steps.iter().enumerate() {
        a[i][i] += 1.0;
        b[i] = *r;
        for (d, p) in succ {
            let j = nodes.iter().position(|x| x == d).unwrap();
            a[i][j] -= p;
        }
    }
    solve(a, b)[0]
}

#[test]
fn bundled_models_match_dense_oracle() {
    for &(name, _) in models::ALL {
        let m = models::load(name).unwrap().unwrap();
        let ours = expected_reward(&m, &ExpectedRewardOptions::default()).unwrap().value;
        let oracle = dense_expected_reward(&m);
        assert!((ours - oracle).abs() < 1e-9 * oracle.max(1.0), "{name}: {ours} vs {oracle}");
    }
}

#[test]
fn declared_delay_changes_follow_the_oracle() {
    let m = models::load("dpm2").unwrap().unwrap();
    for (f1, f2) in [(0.1, 0.1), (0.5, 3.0), (4.0, 0.25)] {
        let d = BTreeMap::from([(m.event_by_name("f1").unwrap(), f1), (m.event_by_name("f2").unwrap(), f2)]);
        let mm = m.apply_delays(&d).unwrap();
        let ours = expected_reward(&mm, &ExpectedRewardOptions::default()).unwrap().value;
        assert!((ours - dense_expected_reward(&mm)).abs() < 1e-9, "{f1} {f2}");
    }
}

#[test]
fn unreachable_target_gives_infinity() {
    let mut b = ModelBuilder::new(3);
    b.rate(StateId(0), StateId(1), 1.0)
        .rate(StateId(0), StateId(2), 1.0)
        .rate(StateId(1), StateId(1), 1.0)
        .rate_reward(StateId(0), 1.0)
        .rate_reward(StateId(1), 1.0)
        .target(StateId(2));
    let r = expected_reward(&b.build().unwrap(), &ExpectedRewardOptions::default()).unwrap();
    assert_eq!(r.value, f64::INFINITY);
    assert!(r.infinite_states.contains(&StateId(1)));
}

#[test]
fn zero_rewards_reach_target_for_free() {
    let mut b = ModelBuilder::new(2);
    let f = b.fd_event("f", 2.0);
    b.fd_transition(f, StateId(0), [(StateId(1), 1.0)]).target(StateId(1));
    let r = expected_reward(&b.build().unwrap(), &ExpectedRewardOptions::default()).unwrap();
    assert_eq!(r.value, 0.0);
}
