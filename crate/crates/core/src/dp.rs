//! Exact average-cost solutions of small two-queue scheduling problems.
//!
//! The unbounded single-hop MDP is approximated by a sequence of truncated
//! MDPs with queues bounded by `L`. Each truncated problem is solved by
//! policy iteration, and `L` grows until the policy stops changing on a
//! fixed region of small queue lengths.
//!
//! Capacities are i.i.d. across steps and independent of the action, so the
//! relative value of a state averaged over its capacities only depends on
//! the queue lengths. Policy evaluation therefore solves a linear system
//! over `(q1, q2)` alone; the system is banded because queues move by a
//! bounded amount per step.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::baselines::{MaxWeight, StatePolicy};
use crate::env::NetworkState;
use crate::rng::CountDist;
use crate::{Error, Result};

const NUM_QUEUES: usize = 2;

/// What happens to arrivals that would push a queue past the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overflow {
    /// The queue is clamped to the bound.
    #[default]
    Clamp,
    /// The step's arrivals to that queue are dropped.
    Reject,
}

/// Arrival and capacity distributions of a two-queue single-hop network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpSpec {
    pub arrivals: Vec<CountDist>,
    pub capacities: Vec<CountDist>,
    #[serde(default)]
    pub overflow: Overflow,
}

impl MdpSpec {
    /// Bernoulli(0.4) arrivals and capacities in {0, 1, 2} with
    /// probabilities (0.5, 0.3, 0.2) at both queues.
    pub fn symmetric() -> Self {
        MdpSpec {
            arrivals: vec![CountDist::Bernoulli { p: 0.4 }; NUM_QUEUES],
            capacities: vec![CountDist::Finite { probs: vec![0.5, 0.3, 0.2] }; NUM_QUEUES],
            overflow: Overflow::Clamp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.arrivals.len() != NUM_QUEUES || self.capacities.len() != NUM_QUEUES {
            return Err(Error::InvalidParameter("exact solving supports exactly two queues".into()));
        }
        for dist in self.arrivals.iter().chain(&self.capacities) {
            dist.validate()?;
            if dist.support().is_none() {
                return Err(Error::InvalidParameter("exact solving needs finite distributions".into()));
            }
        }
        Ok(())
    }
}

fn support(dist: &CountDist) -> Vec<(u64, f64)> {
    dist.support().expect("validated as finite")
}

/// A truncated MDP with states `(q1, q2, y1, y2)`, `q_k` in `[0, bound]`
/// and `y_k` in the capacity support.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedMdp {
    pub spec: MdpSpec,
    pub bound: u64,
    arrivals: [Vec<(u64, f64)>; NUM_QUEUES],
    capacities: [Vec<(u64, f64)>; NUM_QUEUES],
    /// All `(y1, y2)` pairs with their joint probability, `y2` fastest.
    capacity_pairs: Vec<([u64; 2], f64)>,
    /// All `(x1, x2)` arrival pairs with their joint probability.
    arrival_pairs: Vec<([u64; 2], f64)>,
}

pub fn build_truncated_mdp(spec: &MdpSpec, bound: u64) -> Result<TruncatedMdp> {
    spec.validate()?;
    if bound < 1 {
        return Err(Error::InvalidParameter("queue bound must be at least 1".into()));
    }
    let arrivals = [support(&spec.arrivals[0]), support(&spec.arrivals[1])];
    let capacities = [support(&spec.capacities[0]), support(&spec.capacities[1])];
    let pairs = |a: &[(u64, f64)], b: &[(u64, f64)]| {
        a.iter().flat_map(|&(va, pa)| b.iter().map(move |&(vb, pb)| ([va, vb], pa * pb))).collect::<Vec<_>>()
    };
    Ok(TruncatedMdp {
        spec: spec.clone(),
        bound,
        capacity_pairs: pairs(&capacities[0], &capacities[1]),
        arrival_pairs: pairs(&arrivals[0], &arrivals[1]),
        arrivals,
        capacities,
    })
}

impl TruncatedMdp {
    fn side(&self) -> usize {
        self.bound as usize + 1
    }

    pub fn num_queue_states(&self) -> usize {
        self.side() * self.side()
    }

    pub fn num_states(&self) -> usize {
        self.num_queue_states() * self.capacity_pairs.len()
    }

    pub fn capacity_values(&self, queue: usize) -> Vec<u64> {
        self.capacities[queue].iter().map(|&(v, _)| v).collect()
    }

    fn q_index(&self, q: [u64; 2]) -> usize {
        q[0] as usize * self.side() + q[1] as usize
    }

    /// Index of `(q, y)` in the enumerated state list; `y` must be in the
    /// capacity support.
    pub fn state_index(&self, q: [u64; 2], y: [u64; 2]) -> Option<usize> {
        if q[0] > self.bound || q[1] > self.bound {
            return None;
        }
        let y_pos = self.capacity_pairs.iter().position(|(v, _)| *v == y)?;
        Some(self.q_index(q) * self.capacity_pairs.len() + y_pos)
    }

    /// `(q, y)` of an enumerated state.
    pub fn state(&self, index: usize) -> ([u64; 2], [u64; 2]) {
        let n_y = self.capacity_pairs.len();
        let qi = index / n_y;
        let side = self.side();
        ([(qi / side) as u64, (qi % side) as u64], self.capacity_pairs[index % n_y].0)
    }

    pub fn cost(&self, index: usize) -> f64 {
        let (q, _) = self.state(index);
        (q[0] + q[1]) as f64
    }

    fn next_queue(&self, q: u64, served: u64, arrivals: u64) -> u64 {
        let after = q.saturating_sub(served);
        let next = after + arrivals;
        if next <= self.bound {
            next
        } else {
            match self.spec.overflow {
                Overflow::Clamp => self.bound,
                Overflow::Reject => after,
            }
        }
    }

    /// Distribution of the next queue lengths, as `(q index, probability)`
    /// with repeated indices possible.
    fn queue_transitions(&self, q: [u64; 2], y: [u64; 2], action: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.arrival_pairs.iter().map(move |&(x, p)| {
            let served = |k: usize| if k == action { y[k] } else { 0 };
            let next = [self.next_queue(q[0], served(0), x[0]), self.next_queue(q[1], served(1), x[1])];
            (self.q_index(next), p)
        })
    }

    /// Full transition row of `(state, action)`: `(next state, probability)`
    /// with distinct next states, in increasing index order.
    pub fn transitions(&self, index: usize, action: usize) -> Result<Vec<(usize, f64)>> {
        if action >= NUM_QUEUES {
            return Err(Error::InvalidAction { action, num_queues: NUM_QUEUES });
        }
        let (q, y) = self.state(index);
        let n_y = self.capacity_pairs.len();
        let mut row: Vec<(usize, f64)> = Vec::new();
        for (qi, p) in self.queue_transitions(q, y, action) {
            for (yi, (_, py)) in self.capacity_pairs.iter().enumerate() {
                row.push((qi * n_y + yi, p * py));
            }
        }
        row.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
        for (i, p) in row {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += p,
                _ => merged.push((i, p)),
            }
        }
        Ok(merged)
    }

    /// Expected relative value after each action, `sum_x P(x) W(next q)`,
    /// for `W` indexed like [`Solution::relative_values`].
    pub fn action_values(&self, w: &[f64], q: [u64; 2], y: [u64; 2]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (a, v) in out.iter_mut().enumerate() {
            *v = self.queue_transitions(q, y, a).map(|(qi, p)| p * w[qi]).sum();
        }
        out
    }

    /// Largest per-step decrease and increase of any queue length.
    fn queue_step_range(&self) -> (usize, usize) {
        let down = self.capacities.iter().flatten().map(|&(v, _)| v).max().unwrap_or(0);
        let up = self.arrivals.iter().flatten().map(|&(v, _)| v).max().unwrap_or(0);
        (down.min(self.bound) as usize, up.min(self.bound) as usize)
    }
}

/// A deterministic two-queue policy tabulated over
/// `q_k in [0, q_bound]` and the capacity support. Actions are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub q_bound: u64,
    /// Capacity support of each queue, increasing.
    pub y_values: [Vec<u64>; 2],
    actions: Vec<u8>,
    /// Queue bound of the truncated MDP that produced the table, if any.
    pub solved_bound: Option<u64>,
}

impl PolicyTable {
    pub fn from_fn<F: FnMut([u64; 2], [u64; 2]) -> usize>(q_bound: u64, y_values: [Vec<u64>; 2], mut f: F) -> Self {
        let mut actions = Vec::new();
        for q1 in 0..=q_bound {
            for q2 in 0..=q_bound {
                for &y1 in &y_values[0] {
                    for &y2 in &y_values[1] {
                        actions.push(f([q1, q2], [y1, y2]) as u8);
                    }
                }
            }
        }
        PolicyTable { q_bound, y_values, actions, solved_bound: None }
    }

    /// Tabulates any state policy (for example a baseline or a greedy
    /// network policy).
    pub fn from_policy(policy: &dyn StatePolicy, q_bound: u64, y_values: [Vec<u64>; 2]) -> Self {
        PolicyTable::from_fn(q_bound, y_values, |q, y| {
            let state = NetworkState { q: q.to_vec(), y: y.to_vec(), t: 0 };
            policy.select(&state)
        })
    }

    fn index(&self, q: [u64; 2], y: [u64; 2]) -> Option<usize> {
        if q[0] > self.q_bound || q[1] > self.q_bound {
            return None;
        }
        let y1 = self.y_values[0].iter().position(|&v| v == y[0])?;
        let y2 = self.y_values[1].iter().position(|&v| v == y[1])?;
        let side = self.q_bound as usize + 1;
        let n_y2 = self.y_values[1].len();
        Some(((q[0] as usize * side + q[1] as usize) * self.y_values[0].len() + y1) * n_y2 + y2)
    }

    /// Action at `(q, y)`, or `None` outside the table.
    pub fn get(&self, q: [u64; 2], y: [u64; 2]) -> Option<usize> {
        self.index(q, y).map(|i| self.actions[i] as usize)
    }

    pub fn set(&mut self, q: [u64; 2], y: [u64; 2], action: usize) -> Result<()> {
        if action >= NUM_QUEUES {
            return Err(Error::InvalidAction { action, num_queues: NUM_QUEUES });
        }
        let i = self.index(q, y).ok_or_else(|| Error::InvalidParameter("state outside the table".into()))?;
        self.actions[i] = action as u8;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// All `(q, y, action)` entries in table order.
    pub fn entries(&self) -> impl Iterator<Item = ([u64; 2], [u64; 2], usize)> + '_ {
        let q_bound = self.q_bound;
        (0..=q_bound).flat_map(move |q1| {
            (0..=q_bound).flat_map(move |q2| {
                self.y_values[0].iter().flat_map(move |&y1| {
                    self.y_values[1]
                        .iter()
                        .map(move |&y2| ([q1, q2], [y1, y2], self.get([q1, q2], [y1, y2]).expect("in range")))
                })
            })
        })
    }

    /// The same policy on the smaller grid `q_k <= q_bound`.
    pub fn restrict(&self, q_bound: u64) -> Result<PolicyTable> {
        if q_bound > self.q_bound {
            return Err(Error::InvalidParameter("restriction must not enlarge the table".into()));
        }
        let mut table =
            PolicyTable::from_fn(q_bound, self.y_values.clone(), |q, y| self.get(q, y).expect("inside the table"));
        table.solved_bound = self.solved_bound;
        Ok(table)
    }

    /// States where the two tables choose differently. Both tables must
    /// share the grid.
    pub fn disagreements(&self, other: &PolicyTable) -> Result<Vec<[u64; 4]>> {
        if self.q_bound != other.q_bound || self.y_values != other.y_values {
            return Err(Error::InvalidParameter("tables cover different grids".into()));
        }
        Ok(self
            .entries()
            .zip(other.entries())
            .filter(|(a, b)| a.2 != b.2)
            .map(|((q, y, _), _)| [q[0], q[1], y[0], y[1]])
            .collect())
    }
}

/// Result of one policy-iteration solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub table: PolicyTable,
    /// Average cost per step of the final policy.
    pub gain: f64,
    /// Average cost of the policy evaluated in each iteration.
    pub gain_history: Vec<f64>,
    /// Relative values averaged over capacities, indexed `q1 * (L+1) + q2`,
    /// zero at `(0, 0)`.
    pub relative_values: Vec<f64>,
    pub iterations: usize,
}

const MAX_ITERATIONS: usize = 200;
/// Actions whose values differ by less than this fraction of the largest
/// relative value are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Average-cost policy iteration started from MaxWeight.
///
/// An action is only replaced when another one is better by more than the
/// tie tolerance, which guarantees termination despite rounding noise in
/// the evaluation. The stable policy is then canonicalized so that tied
/// states take the lowest action.
pub fn policy_iteration(mdp: &TruncatedMdp) -> Result<Solution> {
    let y_values = [mdp.capacity_values(0), mdp.capacity_values(1)];
    let mut table = PolicyTable::from_policy(&MaxWeight, mdp.bound, y_values);
    table.solved_bound = Some(mdp.bound);
    let mut gain_history = Vec::new();
    for iteration in 1..=MAX_ITERATIONS {
        let (w, gain) = evaluate_policy(mdp, &table)?;
        gain_history.push(gain);
        let improved = improve_policy(mdp, &w, &table, Some(&table));
        if improved == table {
            let table = improve_policy(mdp, &w, &table, None);
            return Ok(Solution { table, gain, gain_history, relative_values: w, iterations: iteration });
        }
        table = improved;
    }
    Err(Error::InvalidParameter(alloc::format!("policy iteration did not stabilize in {MAX_ITERATIONS} iterations")))
}

/// Greedy improvement. Actions within the tie tolerance of the best one
/// count as optimal; among those, `keep` (if given) wins, else the lowest.
fn improve_policy(mdp: &TruncatedMdp, w: &[f64], current: &PolicyTable, keep: Option<&PolicyTable>) -> PolicyTable {
    let tolerance = TIE_TOLERANCE * (1.0 + w.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let mut table = PolicyTable::from_fn(mdp.bound, current.y_values.clone(), |q, y| {
        let values = mdp.action_values(w, q, y);
        let best = values[0].min(values[1]);
        let optimal = |a: usize| values[a] <= best + tolerance;
        match keep.and_then(|t| t.get(q, y)) {
            Some(a) if optimal(a) => a,
            _ => (0..values.len()).find(|&a| optimal(a)).expect("minimum is attained"),
        }
    });
    table.solved_bound = current.solved_bound;
    table
}

/// Solves `W(q) + g = c(q) + sum_y P(y) sum_q' P(q' | q, y, pi(q, y)) W(q')`
/// with `W(0, 0) = 0`. Returns `(W, g)` with `W` indexed `q1 * (L+1) + q2`.
///
/// Unknowns are ordered in reverse so the frequently visited empty state
/// is last; its column then carries the gain. Pinning a rarely visited
/// state instead would leave the remaining block nearly singular.
pub fn evaluate_policy(mdp: &TruncatedMdp, table: &PolicyTable) -> Result<(Vec<f64>, f64)> {
    if table.q_bound != mdp.bound {
        return Err(Error::ShapeMismatch { expected: mdp.bound as usize, actual: table.q_bound as usize });
    }
    let n = mdp.num_queue_states();
    let (down, up) = mdp.queue_step_range();
    let side = mdp.side();
    let position = |q_index: usize| n - 1 - q_index;
    let mut system = BandedSystem::new(n, up * side + up, down * side + down);
    for q1 in 0..=mdp.bound {
        for q2 in 0..=mdp.bound {
            let q = [q1, q2];
            let row = position(mdp.q_index(q));
            system.add(row, row, 1.0);
            for &(y, py) in &mdp.capacity_pairs {
                let action =
                    table.get(q, y).ok_or_else(|| Error::InvalidParameter("capacity outside the table".into()))?;
                for (col, p) in mdp.queue_transitions(q, y, action) {
                    system.add(row, position(col), -py * p);
                }
            }
            system.rhs[row] = (q1 + q2) as f64;
        }
    }
    // The reference value is pinned to zero, so its column is free to hold
    // the coefficient of the gain.
    system.set_last_column(1.0);
    let solution = system.solve()?;
    let gain = solution[n - 1];
    let mut w: Vec<f64> = (0..n).map(|i| solution[position(i)]).collect();
    w[0] = 0.0;
    Ok((w, gain))
}

/// Square banded matrix plus one dense last column, solved by Gaussian
/// elimination without pivoting. Without pivoting, elimination creates no
/// fill outside the band.
struct BandedSystem {
    n: usize,
    lower: usize,
    upper: usize,
    /// Row `i` stores columns `i - lower ..= i + upper` (excluding `n - 1`).
    band: Vec<f64>,
    last_column: Vec<f64>,
    rhs: Vec<f64>,
}

impl BandedSystem {
    fn new(n: usize, lower: usize, upper: usize) -> Self {
        BandedSystem {
            n,
            lower,
            upper,
            band: vec![0.0; n * (lower + upper + 1)],
            last_column: vec![0.0; n],
            rhs: vec![0.0; n],
        }
    }

    fn slot(&self, row: usize, col: usize) -> usize {
        debug_assert!(col + self.lower >= row && col <= row + self.upper, "entry outside the band");
        row * (self.lower + self.upper + 1) + (col + self.lower - row)
    }

    fn add(&mut self, row: usize, col: usize, value: f64) {
        if col == self.n - 1 {
            self.last_column[row] += value;
        } else {
            let s = self.slot(row, col);
            self.band[s] += value;
        }
    }

    fn get(&self, row: usize, col: usize) -> f64 {
        if col == self.n - 1 {
            self.last_column[row]
        } else if col + self.lower >= row && col <= row + self.upper {
            self.band[self.slot(row, col)]
        } else {
            0.0
        }
    }

    fn set_last_column(&mut self, value: f64) {
        self.last_column.iter_mut().for_each(|v| *v = value);
    }

    fn solve(mut self) -> Result<Vec<f64>> {
        let n = self.n;
        let last = n - 1;
        let scale = self.band.iter().chain(&self.last_column).fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let pivot = self.get(k, k);
            if !(pivot.abs() > 1e-13 * scale) {
                return Err(Error::SingularSystem { pivot: k });
            }
            let row_end = (k + self.lower).min(last);
            let col_end = (k + self.upper).min(last.saturating_sub(1));
            for i in k + 1..=row_end {
                let factor = self.get(i, k) / pivot;
                if factor == 0.0 {
                    continue;
                }
                for j in k + 1..=col_end {
                    let s = self.slot(i, j);
                    self.band[s] -= factor * self.band[self.slot(k, j)];
                }
                self.last_column[i] -= factor * self.last_column[k];
                self.rhs[i] -= factor * self.rhs[k];
                let s = self.slot(i, k);
                self.band[s] = 0.0;
            }
        }
        let mut x = vec![0.0; n];
        x[last] = self.rhs[last] / self.last_column[last];
        for i in (0..last).rev() {
            let mut acc = self.rhs[i] - self.last_column[i] * x[last];
            for j in i + 1..=(i + self.upper).min(last.saturating_sub(1)) {
                acc -= self.band[self.slot(i, j)] * x[j];
            }
            x[i] = acc / self.band[self.slot(i, i)];
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy evaluation".into()));
        }
        Ok(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SequenceConfig {
    /// Convergence is judged on `q_k <= region_bound`.
    pub region_bound: u64,
    pub schedule: Vec<u64>,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        SequenceConfig { region_bound: 20, schedule: vec![25, 30, 35, 40, 45, 50] }
    }
}

/// Outcome of the approximate-MDP sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceResult {
    /// Converged policy restricted to the region.
    pub table: PolicyTable,
    /// Queue bounds that were solved, in order.
    pub solved: Vec<u64>,
    /// Gain of each solve.
    pub gains: Vec<f64>,
}

/// Solves truncated MDPs of increasing size until two consecutive policies
/// agree on the region.
pub fn approximate_mdp_sequence(spec: &MdpSpec, config: &SequenceConfig) -> Result<SequenceResult> {
    if config.schedule.is_empty() || config.schedule.iter().any(|&l| l <= config.region_bound) {
        return Err(Error::InvalidParameter("every queue bound must exceed the region bound".into()));
    }
    let mut previous: Option<PolicyTable> = None;
    let mut solved = Vec::new();
    let mut gains = Vec::new();
    let mut last_disagreements = Vec::new();
    for &bound in &config.schedule {
        let solution = policy_iteration(&build_truncated_mdp(spec, bound)?)?;
        solved.push(bound);
        gains.push(solution.gain);
        let region = solution.table.restrict(config.region_bound)?;
        if let Some(prev) = &previous {
            last_disagreements = prev.disagreements(&region)?;
            if last_disagreements.is_empty() {
                return Ok(SequenceResult { table: region, solved, gains });
            }
        }
        previous = Some(region);
    }
    Err(Error::NoConvergence { disagreements: last_disagreements })
}

/// Which direction of a queue length counts as "increasing the component".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueSense {
    /// Coordinates `(q, y)`.
    #[default]
    Positive,
    /// Coordinates `(-q, y)`, as for routing.
    Negative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub q: [u64; 2],
    pub y: [u64; 2],
    pub action: usize,
    pub neighbor_q: [u64; 2],
    pub neighbor_y: [u64; 2],
    pub neighbor_action: usize,
}

/// Checks that raising the chosen component's coordinates never moves the
/// decision away from it. Returns every violation.
pub fn is_switch_type(table: &PolicyTable, sense: QueueSense) -> (bool, Vec<Counterexample>) {
    let mut violations = Vec::new();
    for (q, y, action) in table.entries() {
        let i = action;
        let next_q = match sense {
            QueueSense::Positive => Some(q[i] + 1).filter(|&v| v <= table.q_bound),
            QueueSense::Negative => q[i].checked_sub(1),
        };
        let next_y = table.y_values[i].iter().copied().find(|&v| v > y[i]);
        let q_up = next_q.map(|v| {
            let mut q2 = q;
            q2[i] = v;
            q2
        });
        let y_up = next_y.map(|v| {
            let mut y2 = y;
            y2[i] = v;
            y2
        });
        let neighbors = [q_up.map(|q2| (q2, y)), y_up.map(|y2| (q, y2)), q_up.zip(y_up)];
        for (q2, y2) in neighbors.into_iter().flatten() {
            let neighbor_action = table.get(q2, y2).expect("neighbor inside the table");
            if neighbor_action != i {
                violations.push(Counterexample { q, y, action, neighbor_q: q2, neighbor_y: y2, neighbor_action });
            }
        }
    }
    (violations.is_empty(), violations)
}

/// One cell of a decision-region grid. `action` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionCell {
    pub q1: u64,
    pub q2: u64,
    pub y1: u64,
    pub y2: u64,
    pub action: usize,
}

/// The `(q1, q2)` grid of actions at a fixed capacity pair.
pub fn export_decision_regions(table: &PolicyTable, y: [u64; 2]) -> Result<Vec<RegionCell>> {
    if table.get([0, 0], y).is_none() {
        return Err(Error::InvalidParameter(alloc::format!("capacity slice {y:?} is not in the table")));
    }
    let mut cells = Vec::with_capacity(((table.q_bound + 1) * (table.q_bound + 1)) as usize);
    for q1 in 0..=table.q_bound {
        for q2 in 0..=table.q_bound {
            let action = table.get([q1, q2], y).expect("inside the table") + 1;
            cells.push(RegionCell { q1, q2, y1: y[0], y2: y[1], action });
        }
    }
    Ok(cells)
}
