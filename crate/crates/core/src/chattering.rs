//! Chattering levels, measures and signals for one partition interval.
//!
//! On each interval the control is relaxed to a probability measure over a
//! finite set of constant levels. Minimizing the level-weighted Hamiltonian
//! over the simplex is a relaxed knapsack LP whose optimum is a vertex, so it
//! is solved in closed form by [`solve_measure_lp`].

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{ChatterError, Result};
use crate::model::{ControlKind, ControlProblem};

/// Hamiltonian values within this distance of the minimum count as ties.
pub const LP_TIE_TOLERANCE: f64 = 1e-9;
/// Bisection iterations per violated end in [`level_bound_search`].
pub const BOUND_SEARCH_ITERATIONS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridParams {
    /// Requested number of levels per control dimension (at least 2).
    pub levels_per_dim: usize,
    /// Upper bound on the total number of levels in a grid.
    pub cap: usize,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            levels_per_dim: 101,
            cap: 4096,
        }
    }
}

impl GridParams {
    pub fn validate(&self) -> Result<()> {
        if self.levels_per_dim < 2 {
            return Err(ChatterError::Config(format!(
                "levels per dimension must be at least 2, got {}",
                self.levels_per_dim
            )));
        }
        if self.cap < 1 {
            return Err(ChatterError::Config("level cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// Ordered set of constant control levels used on one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelGrid {
    levels: Vec<Vec<f64>>,
    axes: Vec<Vec<f64>>,
    interval_index: usize,
}

impl LevelGrid {
    /// Grid from explicit levels. Levels are sorted lexicographically and
    /// deduplicated; the per-dimension axes are the distinct values seen.
    pub fn from_levels(mut levels: Vec<Vec<f64>>, interval_index: usize) -> Result<Self> {
        let Some(first) = levels.first() else {
            return Err(ChatterError::EmptyGrid);
        };
        let m = first.len();
        for level in &levels {
            if level.len() != m {
                return Err(ChatterError::DimensionMismatch {
                    what: "control level",
                    expected: m,
                    found: level.len(),
                });
            }
            if level.iter().any(|v| !v.is_finite()) {
                return Err(ChatterError::Config("control levels must be finite".into()));
            }
        }
        levels.sort_by(|a, b| lex_cmp(a, b));
        levels.dedup();
        let axes = axes_of(&levels, m);
        Ok(LevelGrid {
            levels,
            axes,
            interval_index,
        })
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.levels[k]
    }

    /// Number of levels `K`.
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn control_dim(&self) -> usize {
        self.axes.len()
    }

    /// Sorted scalar grid of each control dimension.
    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn interval_index(&self) -> usize {
        self.interval_index
    }

    /// Grid restricted to the listed level indices, preserving order.
    pub fn subset(&self, indices: &[usize]) -> Result<LevelGrid> {
        if indices.is_empty() {
            return Err(ChatterError::EmptyGrid);
        }
        let mut levels = Vec::with_capacity(indices.len());
        for &k in indices {
            let level = self.levels.get(k).ok_or(ChatterError::DimensionMismatch {
                what: "level index",
                expected: self.levels.len(),
                found: k,
            })?;
            if !levels.contains(level) {
                levels.push(level.clone());
            }
        }
        Ok(LevelGrid {
            axes: axes_of(&levels, self.control_dim()),
            levels,
            interval_index: self.interval_index,
        })
    }
}

fn axes_of(levels: &[Vec<f64>], m: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|j| {
            let mut axis: Vec<f64> = levels.iter().map(|l| l[j]).collect();
            axis.sort_by(f64::total_cmp);
            axis.dedup();
            axis
        })
        .collect()
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Simplex weights `α` over the levels of one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatteringMeasure {
    weights: Vec<f64>,
    interval_index: usize,
}

impl ChatteringMeasure {
    pub fn new(weights: Vec<f64>, interval_index: usize) -> Result<Self> {
        if weights.is_empty() {
            return Err(ChatterError::EmptyGrid);
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) || (sum - 1.0).abs() > 1e-12 {
            return Err(ChatterError::Config(format!(
                "chattering weights must lie in [0, 1] and sum to 1 (sum = {sum})"
            )));
        }
        Ok(ChatteringMeasure { weights, interval_index })
    }

    pub fn point_mass(len: usize, k: usize, interval_index: usize) -> Self {
        let mut weights = vec![0.0; len];
        weights[k] = 1.0;
        ChatteringMeasure { weights, interval_index }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn interval_index(&self) -> usize {
        self.interval_index
    }

    pub(crate) fn with_interval(mut self, interval_index: usize) -> Self {
        self.interval_index = interval_index;
        self
    }

    /// Indices of levels carrying positive weight.
    pub fn support(&self) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(k, _)| k)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalSegment {
    pub start: f64,
    pub end: f64,
    /// `α_k·Δ`, kept separately so it carries no cancellation from `end − start`.
    pub duration: f64,
    pub level_index: usize,
}

impl SignalSegment {
    pub fn duration(&self) -> f64 {
        self.duration
    }
}

/// Piecewise-constant duty-cycle realization of a chattering measure.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatteringSignal {
    segments: Vec<SignalSegment>,
    span: f64,
}

impl ChatteringSignal {
    pub fn segments(&self) -> &[SignalSegment] {
        &self.segments
    }

    pub fn start(&self) -> f64 {
        self.segments[0].start
    }

    pub fn end(&self) -> f64 {
        self.segments[self.segments.len() - 1].end
    }

    /// Level index active at time `t` (segments are half-open except the last).
    pub fn level_at(&self, t: f64) -> Option<usize> {
        let last = self.segments.len() - 1;
        self.segments
            .iter()
            .enumerate()
            .find(|(i, s)| t >= s.start && (t < s.end || (*i == last && t <= s.end)))
            .map(|(_, s)| s.level_index)
    }

    /// Total time spent at level `k`.
    pub fn occupation(&self, k: usize) -> f64 {
        self.segments
            .iter()
            .filter(|s| s.level_index == k)
            .map(SignalSegment::duration)
            .sum()
    }

    /// `∫ φ(signal(t)) dt` over the interval for a per-level integrand.
    pub fn integrate(&self, mut per_level: impl FnMut(usize) -> f64) -> f64 {
        self.segments.iter().map(|s| s.duration() * per_level(s.level_index)).sum()
    }

    /// Time average of the realized control.
    pub fn time_average(&self, grid: &LevelGrid) -> Vec<f64> {
        let span = self.span;
        let mut avg = vec![0.0; grid.control_dim()];
        for s in &self.segments {
            for (a, c) in avg.iter_mut().zip(grid.level(s.level_index)) {
                *a += s.duration() * c;
            }
        }
        avg.iter_mut().for_each(|a| *a /= span);
        avg
    }
}

/// Whether `x + dt·f(t, x, u)` satisfies the state bounds componentwise.
pub(crate) fn next_state_within_bounds(
    problem: &ControlProblem,
    t: f64,
    x: &[f64],
    dt: f64,
    u: &[f64],
    f_buf: &mut [f64],
) -> Result<bool> {
    problem.dynamics_into(t, x, u, f_buf)?;
    let lower = problem.state_lower();
    let upper = problem.state_upper();
    Ok(x.iter().zip(f_buf.iter()).enumerate().all(|(j, (xj, fj))| {
        let next = xj + dt * fj;
        lower.is_none_or(|lo| next >= lo[j]) && upper.is_none_or(|hi| next <= hi[j])
    }))
}

/// Largest sub-range of control dimension `dim` keeping one Euler step inside
/// the state bounds, with other dimensions frozen at their bound midpoints.
///
/// Only state components whose derivative actually moves with `u[dim]` are
/// checked; a bound broken by the frozen dimensions cannot be repaired here.
pub fn level_bound_search(problem: &ControlProblem, t: f64, x: &[f64], dt: f64, dim: usize) -> Result<(f64, f64)> {
    let (lo, hi) = (problem.control_lower()[dim], problem.control_upper()[dim]);
    bound_search_in(problem, t, x, dt, dim, lo, hi)
}

fn bound_search_in(
    problem: &ControlProblem,
    t: f64,
    x: &[f64],
    dt: f64,
    dim: usize,
    lo: f64,
    hi: f64,
) -> Result<(f64, f64)> {
    if !problem.has_state_bounds() || hi <= lo {
        return Ok((lo, hi));
    }
    let n = problem.state_dim();
    let mut u: Vec<f64> = problem
        .control_lower()
        .iter()
        .zip(problem.control_upper())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();

    let mut coupled = vec![false; n];
    let mut f_ref = vec![0.0; n];
    let mut f_buf = vec![0.0; n];
    u[dim] = lo;
    problem.dynamics_into(t, x, &u, &mut f_ref)?;
    for v in [hi, 0.5 * (lo + hi)] {
        u[dim] = v;
        problem.dynamics_into(t, x, &u, &mut f_buf)?;
        for j in 0..n {
            coupled[j] |= f_buf[j] != f_ref[j];
        }
    }
    if !coupled.iter().any(|&c| c) {
        return Ok((lo, hi));
    }

    let lower = problem.state_lower();
    let upper = problem.state_upper();
    let mut feasible = |v: f64| -> Result<bool> {
        u[dim] = v;
        problem.dynamics_into(t, x, &u, &mut f_buf)?;
        Ok((0..n).filter(|&j| coupled[j]).all(|j| {
            let next = x[j] + dt * f_buf[j];
            lower.is_none_or(|b| next >= b[j]) && upper.is_none_or(|b| next <= b[j])
        }))
    };

    let lo_ok = feasible(lo)?;
    let hi_ok = feasible(hi)?;
    if lo_ok && hi_ok {
        return Ok((lo, hi));
    }
    let anchor = if lo_ok {
        lo
    } else if hi_ok {
        hi
    } else {
        let mut found = None;
        for s in 1..64 {
            let v = lo + (hi - lo) * s as f64 / 64.0;
            if feasible(v)? {
                found = Some(v);
                break;
            }
        }
        found.ok_or(ChatterError::InfeasibleLevels { dim: Some(dim) })?
    };

    let mut bisect = |bad: f64, good: f64| -> Result<f64> {
        let (mut bad, mut good) = (bad, good);
        for _ in 0..BOUND_SEARCH_ITERATIONS {
            let mid = 0.5 * (bad + good);
            if feasible(mid)? {
                good = mid;
            } else {
                bad = mid;
            }
        }
        Ok(good)
    };
    let c_min = if lo_ok { lo } else { bisect(lo, anchor)? };
    let c_max = if hi_ok { hi } else { bisect(hi, anchor)? };
    Ok((c_min, c_max))
}

fn uniform_axis(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 || hi <= lo {
        return vec![lo];
    }
    let mut axis: Vec<f64> = (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect();
    axis[count - 1] = hi;
    axis
}

/// Per-dimension admissible ranges after state-bound shrinking.
struct DimensionRange {
    off: Option<f64>,
    lo: f64,
    hi: f64,
}

impl DimensionRange {
    fn axis(&self, count: usize) -> Vec<f64> {
        let mut axis = uniform_axis(self.lo, self.hi, count);
        if let Some(off) = self.off {
            axis.push(off);
        }
        axis.sort_by(f64::total_cmp);
        axis.dedup();
        axis
    }
}

/// Builds the level grid for interval `interval_index` starting at `(t, x)`.
///
/// Each control dimension gets a uniform axis over its admissible range,
/// shrunk by [`level_bound_search`] when state bounds exist. Semi-continuous
/// dimensions also keep their off value. Axes are combined by Cartesian
/// product; the per-dimension count is lowered uniformly until the product
/// fits `params.cap`. If even two points per dimension overflow the cap, a
/// deterministic low-discrepancy subset of that product is used, always
/// containing the all-lowest and all-highest corners. Finally, levels whose
/// Euler step would leave the state bounds are dropped.
pub fn generate_levels(
    problem: &ControlProblem,
    interval_index: usize,
    t: f64,
    x: &[f64],
    dt: f64,
    params: &GridParams,
) -> Result<LevelGrid> {
    params.validate()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(ChatterError::Config(format!("interval length must be positive, got {dt}")));
    }
    let m = problem.control_dim();
    let mut ranges = Vec::with_capacity(m);
    for dim in 0..m {
        let lower = problem.control_lower()[dim];
        let upper = problem.control_upper()[dim];
        let (off, lo, hi) = match problem.control_kinds()[dim] {
            ControlKind::Continuous => (None, lower, upper),
            ControlKind::SemiContinuous { on_min } => (Some(lower), on_min, upper),
        };
        let (lo, hi) = match bound_search_in(problem, t, x, dt, dim, lo, hi) {
            Ok(range) => range,
            // The frozen-midpoint slice may be infeasible while other
            // combinations are fine; the final filter decides.
            Err(ChatterError::InfeasibleLevels { .. }) => {
                log::debug!("interval {interval_index}: no feasible slice for control dimension {dim}");
                (lo, hi)
            }
            Err(e) => return Err(e),
        };
        ranges.push(DimensionRange { off, lo, hi });
    }

    let product = |count: usize| -> (Vec<Vec<f64>>, usize) {
        let axes: Vec<Vec<f64>> = ranges.iter().map(|r| r.axis(count)).collect();
        let size = axes.iter().fold(1usize, |acc, a| acc.saturating_mul(a.len()));
        (axes, size)
    };

    // Product size is monotone in the per-dimension count; find the largest
    // count that fits by bisection.
    let top = params.levels_per_dim.min(params.cap.max(2));
    let (mut axes, mut size) = product(top);
    if size > params.cap && top > 2 {
        let (mut fits, mut over) = (2, top);
        (axes, size) = product(fits);
        if size <= params.cap {
            while over - fits > 1 {
                let mid = (fits + over) / 2;
                let (mid_axes, mid_size) = product(mid);
                if mid_size <= params.cap {
                    fits = mid;
                    (axes, size) = (mid_axes, mid_size);
                } else {
                    over = mid;
                }
            }
        }
    }

    let patterns = if size <= params.cap {
        Arc::new(cartesian_indices(&axes))
    } else {
        let lengths: Vec<usize> = axes.iter().map(Vec::len).collect();
        low_discrepancy_indices(&lengths, params.cap)
    };

    let mut f_buf = vec![0.0; problem.state_dim()];
    let mut used: Vec<Vec<bool>> = axes.iter().map(|a| vec![false; a.len()]).collect();
    let mut levels = Vec::with_capacity(patterns.len());
    for idx in patterns.iter() {
        let level: Vec<f64> = idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect();
        if problem.has_state_bounds() && !next_state_within_bounds(problem, t, x, dt, &level, &mut f_buf)? {
            continue;
        }
        for (d, &i) in idx.iter().enumerate() {
            used[d][i] = true;
        }
        levels.push(level);
    }
    if levels.is_empty() {
        return Err(ChatterError::InfeasibleLevels { dim: None });
    }
    let axes = axes
        .into_iter()
        .zip(used)
        .map(|(axis, used)| axis.into_iter().zip(used).filter(|(_, u)| *u).map(|(v, _)| v).collect())
        .collect();
    // Product order is lexicographic and subset points are distinct, so no
    // sorting is needed.
    Ok(LevelGrid {
        levels,
        axes,
        interval_index,
    })
}

fn cartesian_indices(axes: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let size: usize = axes.iter().map(Vec::len).product();
    let mut out = Vec::with_capacity(size);
    let mut idx = vec![0usize; axes.len()];
    for _ in 0..size {
        out.push(idx.clone());
        for d in (0..axes.len()).rev() {
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

type PatternCache = Mutex<HashMap<(Vec<usize>, usize), Arc<Vec<Vec<usize>>>>>;

/// Up to `cap` distinct index tuples of the product lattice with the given
/// axis lengths, picked by an additive recurrence with irrational
/// per-dimension increments. The pattern only depends on the lengths, so it
/// is memoized.
fn low_discrepancy_indices(lengths: &[usize], cap: usize) -> Arc<Vec<Vec<usize>>> {
    static CACHE: OnceLock<PatternCache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (lengths.to_vec(), cap);
    if let Some(hit) = cache.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
        return Arc::clone(hit);
    }

    let increments: Vec<f64> = (0..lengths.len())
        .map(|d| {
            let r = (nth_prime(d) as f64).sqrt();
            r - r.floor()
        })
        .collect();
    let mut seen = HashSet::with_capacity(cap);
    let mut out = Vec::with_capacity(cap);
    let mut push = |idx: Vec<usize>, out: &mut Vec<Vec<usize>>| {
        if seen.insert(idx.clone()) {
            out.push(idx);
        }
    };
    push(vec![0; lengths.len()], &mut out);
    if cap > 1 {
        push(lengths.iter().map(|l| l - 1).collect(), &mut out);
    }
    let mut s = 1u64;
    while out.len() < cap && s < 16 * cap as u64 {
        let idx = increments
            .iter()
            .zip(lengths)
            .map(|(inc, &len)| {
                let frac = (s as f64 * inc).fract();
                ((frac * len as f64) as usize).min(len - 1)
            })
            .collect();
        push(idx, &mut out);
        s += 1;
    }
    let pattern = Arc::new(out);
    cache
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .insert(key, Arc::clone(&pattern));
    pattern
}

fn nth_prime(n: usize) -> u64 {
    let mut found = 0;
    let mut candidate = 1u64;
    loop {
        candidate += 1;
        if (2..).take_while(|d| d * d <= candidate).all(|d| !candidate.is_multiple_of(d)) {
            if found == n {
                return candidate;
            }
            found += 1;
        }
    }
}

/// Analytic minimizer of `Σ h_k α_k` over the probability simplex.
///
/// All levels within [`LP_TIE_TOLERANCE`] of the minimum share the weight
/// uniformly; every other weight is zero.
pub fn solve_measure_lp(h_values: &[f64]) -> Result<ChatteringMeasure> {
    if h_values.is_empty() {
        return Err(ChatterError::EmptyGrid);
    }
    if h_values.iter().any(|h| !h.is_finite()) {
        return Err(ChatterError::NonFiniteEvaluation {
            what: "level Hamiltonian",
            t: f64::NAN,
        });
    }
    let min = h_values.iter().copied().fold(f64::INFINITY, f64::min);
    let ties = h_values.iter().filter(|&&h| h - min <= LP_TIE_TOLERANCE).count();
    let share = 1.0 / ties as f64;
    let weights = h_values
        .iter()
        .map(|&h| if h - min <= LP_TIE_TOLERANCE { share } else { 0.0 })
        .collect();
    Ok(ChatteringMeasure {
        weights,
        interval_index: 0,
    })
}

/// Relaxed control `Σ_k α_k c_k`.
pub fn control_from_measure(grid: &LevelGrid, measure: &ChatteringMeasure) -> Result<Vec<f64>> {
    if grid.len() != measure.len() {
        return Err(ChatterError::DimensionMismatch {
            what: "chattering measure",
            expected: grid.len(),
            found: measure.len(),
        });
    }
    let mut u = vec![0.0; grid.control_dim()];
    for (w, level) in measure.weights().iter().zip(grid.levels()) {
        if *w == 0.0 {
            continue;
        }
        for (uj, cj) in u.iter_mut().zip(level) {
            *uj += w * cj;
        }
    }
    Ok(u)
}

/// Duty-cycle signal on `[t_start, t_start + dt]`: one segment per level with
/// positive weight, in level order, lasting `α_k · dt`.
pub fn realize_signal(
    grid: &LevelGrid,
    measure: &ChatteringMeasure,
    t_start: f64,
    dt: f64,
) -> Result<ChatteringSignal> {
    if grid.len() != measure.len() {
        return Err(ChatterError::DimensionMismatch {
            what: "chattering measure",
            expected: grid.len(),
            found: measure.len(),
        });
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(ChatterError::Config(format!("interval length must be positive, got {dt}")));
    }
    let support = measure.support();
    let mut segments = Vec::with_capacity(support.len());
    let mut elapsed = 0.0;
    let mut start = t_start;
    for (n, &k) in support.iter().enumerate() {
        let weight = measure.weights()[k];
        elapsed += weight;
        let end = if n + 1 == support.len() {
            t_start + dt
        } else {
            t_start + elapsed * dt
        };
        segments.push(SignalSegment {
            start,
            end,
            duration: weight * dt,
            level_index: k,
        });
        start = end;
    }
    Ok(ChatteringSignal { segments, span: dt })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(lower: f64, upper: f64, state_bounds: Option<(f64, f64)>, x0: f64) -> ControlProblem {
        let b = ControlProblem::builder(1, 1, |_, _, u| u[0] * u[0], |_, _, u, out| out[0] = u[0])
            .initial_state(vec![x0])
            .control_bounds(vec![lower], vec![upper]);
        match state_bounds {
            Some((lo, hi)) => b.state_bounds(Some(vec![lo]), Some(vec![hi])),
            None => b,
        }
        .build()
        .unwrap()
    }

    fn brute_force_min(h: &[f64]) -> f64 {
        // Objective at each simplex vertex e_k.
        let mut best = f64::INFINITY;
        for k in 0..h.len() {
            let mut alpha = vec![0.0; h.len()];
            alpha[k] = 1.0;
            let value: f64 = h.iter().zip(&alpha).map(|(a, b)| a * b).sum();
            best = best.min(value);
        }
        best
    }

    #[test]
    fn uniform_grid_without_state_bounds() {
        let problem = scalar(-1.0, 1.0, None, 0.0);
        let params = GridParams { levels_per_dim: 5, cap: 4096 };
        let grid = generate_levels(&problem, 0, 0.0, &[0.0], 0.1, &params).unwrap();
        let flat: Vec<f64> = grid.levels().iter().map(|l| l[0]).collect();
        assert_eq!(flat, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn upper_state_bound_collapses_grid() {
        let problem = scalar(0.0, 10.0, Some((-1.0, 1.0)), 1.0);
        let params = GridParams { levels_per_dim: 7, cap: 4096 };
        let grid = generate_levels(&problem, 3, 0.0, &[1.0], 0.25, &params).unwrap();
        assert_eq!(grid.levels(), &[vec![0.0]]);
        assert_eq!(grid.interval_index(), 3);
    }

    #[test]
    fn bound_search_cases() {
        let free = scalar(-10.0, 10.0, None, 0.0);
        assert_eq!(level_bound_search(&free, 0.0, &[0.0], 0.5, 0).unwrap(), (-10.0, 10.0));

        let boxed = scalar(-10.0, 10.0, Some((-1.0, 1.0)), 0.0);
        let (lo, hi) = level_bound_search(&boxed, 0.0, &[0.0], 0.5, 0).unwrap();
        assert!((lo + 2.0).abs() < 1e-6 && (hi - 2.0).abs() < 1e-6, "({lo}, {hi})");
        assert!(0.0 + 0.5 * lo >= -1.0 && 0.0 + 0.5 * hi <= 1.0);

        let pinned = scalar(0.0, 10.0, Some((-1.0, 1.0)), 1.0);
        assert_eq!(level_bound_search(&pinned, 0.0, &[1.0], 1.0, 0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn infeasible_levels_reported() {
        // Any control pushes the state above its upper bound.
        let problem = scalar(5.0, 10.0, Some((-1.0, 1.0)), 1.0);
        let err = generate_levels(&problem, 0, 0.0, &[1.0], 1.0, &GridParams::default()).unwrap_err();
        assert_eq!(err, ChatterError::InfeasibleLevels { dim: None });
        let err = level_bound_search(&problem, 0.0, &[1.0], 1.0, 0).unwrap_err();
        assert_eq!(err, ChatterError::InfeasibleLevels { dim: Some(0) });
    }

    #[test]
    fn semi_continuous_axis_keeps_off_level() {
        let problem = ControlProblem::builder(1, 1, |_, _, _| 0.0, |_, _, u, out| out[0] = u[0])
            .control_bounds(vec![0.0], vec![14.0])
            .control_kinds(vec![ControlKind::SemiContinuous { on_min: 7.0 }])
            .build()
            .unwrap();
        let grid = generate_levels(&problem, 0, 0.0, &[0.0], 0.1, &GridParams { levels_per_dim: 8, cap: 64 }).unwrap();
        let flat: Vec<f64> = grid.levels().iter().map(|l| l[0]).collect();
        assert_eq!(flat, vec![0.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0, 13.0, 14.0]);
    }

    #[test]
    fn cap_coarsens_product_uniformly() {
        let problem = ControlProblem::builder(1, 3, |_, _, _| 0.0, |_, _, _, out| out[0] = 0.0)
            .control_bounds(vec![0.0; 3], vec![1.0; 3])
            .build()
            .unwrap();
        let grid = generate_levels(&problem, 0, 0.0, &[0.0], 0.1, &GridParams { levels_per_dim: 11, cap: 100 }).unwrap();
        // 4^3 = 64 <= 100 < 5^3
        assert_eq!(grid.len(), 64);
        assert!(grid.axes().iter().all(|a| a.len() == 4));
        assert!(grid.levels().windows(2).all(|w| lex_cmp(&w[0], &w[1]).is_lt()));
    }

    #[test]
    fn oversized_product_uses_capped_subset() {
        let m = 20;
        let problem = ControlProblem::builder(1, m, |_, _, _| 0.0, |_, _, _, out| out[0] = 0.0)
            .control_bounds(vec![-1.0; m], vec![1.0; m])
            .build()
            .unwrap();
        let params = GridParams { levels_per_dim: 5, cap: 256 };
        let grid = generate_levels(&problem, 0, 0.0, &[0.0], 0.1, &params).unwrap();
        assert_eq!(grid.len(), 256);
        assert_eq!(grid.level(0), vec![-1.0; m].as_slice());
        assert_eq!(grid.level(1), vec![1.0; m].as_slice());
        let mut sorted = grid.levels().to_vec();
        sorted.sort_by(|a, b| lex_cmp(a, b));
        sorted.dedup();
        assert_eq!(sorted.len(), 256);
        let again = generate_levels(&problem, 0, 0.0, &[0.0], 0.1, &params).unwrap();
        assert_eq!(grid, again);
    }

    #[test]
    fn lp_examples() {
        assert_eq!(solve_measure_lp(&[5.0, 2.0, 9.0]).unwrap().weights(), &[0.0, 1.0, 0.0]);
        assert_eq!(solve_measure_lp(&[3.0, 3.0, 7.0]).unwrap().weights(), &[0.5, 0.5, 0.0]);
        assert_eq!(solve_measure_lp(&[4.2]).unwrap().weights(), &[1.0]);
        assert_eq!(solve_measure_lp(&[]).unwrap_err(), ChatterError::EmptyGrid);
    }

    #[test]
    fn control_reconstruction_examples() {
        let grid = LevelGrid::from_levels(vec![vec![-1.0], vec![0.0], vec![1.0]], 0).unwrap();
        let m = ChatteringMeasure::new(vec![0.0, 1.0, 0.0], 0).unwrap();
        assert_eq!(control_from_measure(&grid, &m).unwrap(), vec![0.0]);

        let grid = LevelGrid::from_levels(vec![vec![2.0], vec![4.0], vec![6.0]], 0).unwrap();
        let m = ChatteringMeasure::new(vec![0.5, 0.5, 0.0], 0).unwrap();
        assert_eq!(control_from_measure(&grid, &m).unwrap(), vec![3.0]);

        let grid = LevelGrid::from_levels(vec![vec![1.25]], 0).unwrap();
        let m = ChatteringMeasure::new(vec![1.0], 0).unwrap();
        assert_eq!(control_from_measure(&grid, &m).unwrap(), vec![1.25]);

        let bad = ChatteringMeasure::new(vec![0.5, 0.5], 0).unwrap();
        assert!(matches!(
            control_from_measure(&grid, &bad),
            Err(ChatterError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn signal_examples() {
        let grid = LevelGrid::from_levels(vec![vec![0.0], vec![1.0]], 0).unwrap();
        let s = realize_signal(&grid, &ChatteringMeasure::new(vec![1.0, 0.0], 0).unwrap(), 0.0, 1.0).unwrap();
        assert_eq!(s.segments(), &[SignalSegment { start: 0.0, end: 1.0, duration: 1.0, level_index: 0 }]);

        let s = realize_signal(&grid, &ChatteringMeasure::new(vec![0.25, 0.75], 0).unwrap(), 0.0, 4.0).unwrap();
        assert_eq!(
            s.segments(),
            &[
                SignalSegment { start: 0.0, end: 1.0, duration: 1.0, level_index: 0 },
                SignalSegment { start: 1.0, end: 4.0, duration: 3.0, level_index: 1 },
            ]
        );
        assert_eq!(s.level_at(0.5), Some(0));
        assert_eq!(s.level_at(4.0), Some(1));

        let grid = LevelGrid::from_levels(vec![vec![0.0], vec![1.0], vec![2.0]], 0).unwrap();
        let third = 1.0 / 3.0;
        let s = realize_signal(&grid, &ChatteringMeasure::new(vec![third; 3], 0).unwrap(), 0.0, 3.0).unwrap();
        assert_eq!(s.segments().len(), 3);
        for seg in s.segments() {
            assert!((seg.duration() - 1.0).abs() < 1e-12);
        }
    }

    fn measure_strategy(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, k).prop_map(|raw| {
            let sum: f64 = raw.iter().sum::<f64>() + 1e-3;
            let mut w: Vec<f64> = raw.iter().map(|r| (r + 1e-3 / raw.len() as f64) / sum).collect();
            let drift: f64 = 1.0 - w.iter().sum::<f64>();
            w[0] += drift;
            w
        })
    }

    proptest! {
        #[test]
        fn lp_matches_vertex_enumeration(h in prop::collection::vec(-1e3f64..1e3, 1..=8)) {
            let measure = solve_measure_lp(&h).unwrap();
            let w = measure.weights();
            let sum: f64 = w.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(w.iter().all(|a| (0.0..=1.0).contains(a)));
            let min = brute_force_min(&h);
            let support = measure.support();
            prop_assert!(support.iter().all(|&k| (h[k] - min).abs() <= LP_TIE_TOLERANCE));
            let objective: f64 = h.iter().zip(w).map(|(a, b)| a * b).sum();
            prop_assert!((objective - min).abs() <= LP_TIE_TOLERANCE);
        }

        #[test]
        fn signal_average_matches_relaxed_control(
            (levels, weights) in (1usize..6).prop_flat_map(|k| (
                prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), k),
                measure_strategy(k),
            )),
            t0 in -10.0f64..10.0,
            dt in 1e-3f64..5.0,
        ) {
            let grid = LevelGrid { axes: vec![vec![], vec![]], levels, interval_index: 0 };
            let measure = ChatteringMeasure::new(weights, 0).unwrap();
            let signal = realize_signal(&grid, &measure, t0, dt).unwrap();
            let u = control_from_measure(&grid, &measure).unwrap();
            for (a, b) in signal.time_average(&grid).iter().zip(&u) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
            for k in 0..grid.len() {
                prop_assert!((signal.occupation(k) - measure.weights()[k] * dt).abs() <= 1e-12 * dt.max(1.0));
            }
        }

        #[test]
        fn one_step_respects_state_bounds(x in -1.0f64..1.0, dt in 0.01f64..2.0, k in 2usize..30) {
            let problem = scalar(-10.0, 10.0, Some((-1.0, 1.0)), x);
            let grid = generate_levels(&problem, 0, 0.0, &[x], dt, &GridParams { levels_per_dim: k, cap: 4096 }).unwrap();
            for level in grid.levels() {
                let next = x + dt * level[0];
                prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&next));
                prop_assert!(level[0] >= -10.0 && level[0] <= 10.0);
            }
            prop_assert!(grid.axes()[0].windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn bound_search_ignores_uncoupled_violations() {
        // x1 is pushed negative by u1 at its midpoint; that must not shrink u0.
        let problem = ControlProblem::builder(2, 2, |_, _, _| 0.0, |_, _, u, out| {
            out[0] = -u[0];
            out[1] = -u[1];
        })
        .initial_state(vec![1.0, 0.0])
        .control_bounds(vec![0.0, 1.0], vec![20.0, 3.0])
        .state_bounds(Some(vec![0.0, 0.0]), None)
        .build()
        .unwrap();
        let (lo, hi) = level_bound_search(&problem, 0.0, &[1.0, 0.0], 0.1, 0).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - 10.0).abs() < 1e-6, "{hi}");
        assert!(matches!(
            level_bound_search(&problem, 0.0, &[1.0, 0.0], 0.1, 1),
            Err(ChatterError::InfeasibleLevels { dim: Some(1) })
        ));
    }

}
