//! `N`-player games induced by a cost model: pure Nash search, defects, mixed
//! extensions and the McShane extension, at desk scale.
//!
//! Player `i` with type `θ_i` playing node `y` against opponents `x_{−i}` pays
//! `F(θ_i, y, ν_{−i})` where `ν_{−i}` is the empirical measure of the
//! opponents' nodes. Costs depend on opponents only through node counts, so
//! permuting opponents never changes a cost.

use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::equilibrium::equilibrium_defect;
use crate::error::{Error, Result};
use crate::measures::{Coupling, DiscreteMeasure};
use crate::model::{distance, CostModel, Grid, Point, Scenario};
use crate::numeric::{argmin_first, CompensatedSum};
use crate::solvers::w1_distance;
use crate::transport::{empirical_on, min_cost_assignment};

/// Exact enumeration limits for [`mixed_cost_exact`].
pub const MIXED_MAX_PLAYERS: usize = 4;
pub const MIXED_MAX_NODES: usize = 8;
/// Enumeration limits for [`mcshane_extend`].
pub const MCSHANE_MAX_PLAYERS: usize = 3;
pub const MCSHANE_MAX_NODES: usize = 6;
pub const MCSHANE_MAX_TYPES: usize = 4;
/// Seeded restarts of best-response dynamics after a cycle.
pub const MAX_RESTARTS: usize = 5;
/// Sweep cap used by [`convergence_experiment`].
pub const EXPERIMENT_SWEEP_CAP: usize = 200;
/// Sampled pairs and inflation for Lipschitz estimates.
pub const LIPSCHITZ_SAMPLES: usize = 1000;
pub const LIPSCHITZ_INFLATION: f64 = 1.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    /// i.i.d. draws from `μ` with a seeded generator.
    Iid { seed: u64 },
    /// `θ_i = quantile_μ((i − ½)/N)`; 1D only.
    Quantile,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModulusOfContinuity {
    Linear { k: f64 },
}

impl ModulusOfContinuity {
    pub fn linear(k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Precondition(format!("modulus constant must be positive, got {k}")));
        }
        Ok(ModulusOfContinuity::Linear { k })
    }

    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            ModulusOfContinuity::Linear { k } => k * t,
        }
    }
}

/// One probability vector over the strategy grid per player.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedProfile {
    weights: Vec<Vec<f64>>,
}

impl MixedProfile {
    pub fn new(weights: Vec<Vec<f64>>) -> Result<Self> {
        for (i, row) in weights.iter().enumerate() {
            if row.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                return Err(Error::InvalidMeasure(format!("player {i} has a negative or non-finite weight")));
            }
            let total: f64 = row.iter().copied().collect::<CompensatedSum>().value();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidMeasure(format!("player {i} weights sum to {total}")));
            }
        }
        Ok(MixedProfile { weights })
    }

    /// Diracs at the given nodes.
    pub fn pure(profile: &[usize], nodes: usize) -> Result<Self> {
        let weights = profile
            .iter()
            .map(|&x| {
                if x >= nodes {
                    return Err(Error::Precondition(format!("node {x} outside a grid of {nodes}")));
                }
                let mut row = vec![0.0; nodes];
                row[x] = 1.0;
                Ok(row)
            })
            .collect::<Result<_>>()?;
        Ok(MixedProfile { weights })
    }

    /// Independent uniform-then-normalised weights; some entries are zeroed to
    /// exercise sparse supports.
    pub fn random(players: usize, nodes: usize, rng: &mut impl Rng) -> Self {
        let weights = (0..players)
            .map(|_| {
                let mut row: Vec<f64> =
                    (0..nodes).map(|_| if rng.gen_bool(0.25) { 0.0 } else { rng.gen::<f64>() }).collect();
                if row.iter().all(|&w| w == 0.0) {
                    row[rng.gen_range(0..nodes)] = 1.0;
                }
                let total: f64 = row.iter().sum();
                row.iter_mut().for_each(|w| *w /= total);
                row
            })
            .collect();
        MixedProfile { weights }
    }

    pub fn players(&self) -> usize {
        self.weights.len()
    }

    pub fn strategy(&self, i: usize) -> &[f64] {
        &self.weights[i]
    }
}

#[derive(Clone, Debug)]
pub struct FiniteGame {
    type_grid: Arc<Grid>,
    type_nodes: Vec<usize>,
    types: Vec<Point>,
    strategy_grid: Arc<Grid>,
    cost: CostModel,
    points: Vec<Point>,
    m0: Vec<f64>,
    potential: Vec<f64>,
}

/// Draws the `N` player types and assembles the game.
pub fn build_finite_game(scenario: &Scenario, n: usize, sampling: Sampling) -> Result<FiniteGame> {
    if n < 2 {
        return Err(Error::Precondition(format!("a finite game needs at least 2 players, got {n}")));
    }
    let mu = &scenario.mu;
    let type_grid = mu.grid().clone();
    let type_nodes: Vec<usize> = match sampling {
        Sampling::Iid { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dist = WeightedIndex::new(mu.weights())
                .map_err(|e| Error::InvalidMeasure(format!("cannot sample types: {e}")))?;
            (0..n).map(|_| dist.sample(&mut rng)).collect()
        }
        Sampling::Quantile => {
            if type_grid.dim() != 1 {
                return Err(Error::UnsupportedDimension {
                    dim: type_grid.dim(),
                    context: "quantile sampling of types is 1D only".into(),
                });
            }
            (0..n)
                .map(|i| {
                    let q = mu.quantile_1d((i as f64 + 0.5) / n as f64)?;
                    Ok(type_grid.nearest([q, 0.0]))
                })
                .collect::<Result<_>>()?
        }
    };
    let types = type_nodes.iter().map(|&i| type_grid.point(i)).collect();
    let strategy_grid = scenario.strategy_grid.clone();
    let cost = scenario.cost.clone();
    let points = strategy_grid.points();
    let m0 = cost.reference_weights(&strategy_grid);
    let potential = points.iter().map(|&p| cost.potential_at(p)).collect();
    Ok(FiniteGame { type_grid, type_nodes, types, strategy_grid, cost, points, m0, potential })
}

impl FiniteGame {
    pub fn players(&self) -> usize {
        self.types.len()
    }

    pub fn types(&self) -> &[Point] {
        &self.types
    }

    pub fn type_nodes(&self) -> &[usize] {
        &self.type_nodes
    }

    pub fn type_grid(&self) -> &Arc<Grid> {
        &self.type_grid
    }

    pub fn strategy_grid(&self) -> &Arc<Grid> {
        &self.strategy_grid
    }

    pub fn cost(&self) -> &CostModel {
        &self.cost
    }

    fn check_profile(&self, profile: &[usize]) -> Result<()> {
        if profile.len() != self.players() {
            return Err(Error::LengthMismatch { left: profile.len(), right: self.players() });
        }
        if let Some(&x) = profile.iter().find(|&&x| x >= self.points.len()) {
            return Err(Error::Precondition(format!("strategy node {x} outside the grid")));
        }
        Ok(())
    }

    /// `J^N(θ, y, x_{−i})` for an arbitrary type point and opponent list.
    pub fn pure_cost(&self, theta: Point, y: usize, opponents: &[usize]) -> f64 {
        let mut counts = vec![0usize; self.points.len()];
        opponents.iter().for_each(|&z| counts[z] += 1);
        self.cost_from_counts(theta, y, &counts, opponents.len())
    }

    fn cost_from_counts(&self, theta: Point, y: usize, counts: &[usize], others: usize) -> f64 {
        let py = self.points[y];
        let scale = others as f64;
        let mut value = self.cost.transport.eval(theta, py) + self.potential[y];
        if !self.cost.congestion.is_none() {
            value += self.cost.congestion.marginal(counts[y] as f64 / (scale * self.m0[y]));
        }
        if self.cost.has_kernel() {
            let mut acc = CompensatedSum::new();
            for (z, &c) in counts.iter().enumerate().filter(|(_, c)| **c > 0) {
                acc.add(c as f64 * self.cost.kernel_at(py, self.points[z]));
            }
            value += acc.value() / scale;
        }
        value
    }

    /// `J_i(y, x_{−i})`.
    pub fn player_cost(&self, i: usize, y: usize, profile: &[usize]) -> Result<f64> {
        self.check_profile(profile)?;
        let opponents: Vec<usize> =
            profile.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, &x)| x).collect();
        Ok(self.pure_cost(self.types[i], y, &opponents))
    }

    /// Empirical measure of all players' nodes.
    pub fn strategy_measure(&self, profile: &[usize]) -> Result<DiscreteMeasure> {
        self.check_profile(profile)?;
        empirical_on(self.strategy_grid.clone(), profile)
    }

    /// Empirical measure of the nodes of everyone but `i`.
    pub fn leave_one_out(&self, profile: &[usize], i: usize) -> Result<DiscreteMeasure> {
        self.check_profile(profile)?;
        let opponents: Vec<usize> =
            profile.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, &x)| x).collect();
        empirical_on(self.strategy_grid.clone(), &opponents)
    }

    /// Empirical measure of the types, on the type grid.
    pub fn type_measure(&self) -> Result<DiscreteMeasure> {
        empirical_on(self.type_grid.clone(), &self.type_nodes)
    }

    /// `(1/N) Σ δ_{(θ_i, x_i)}`.
    pub fn profile_coupling(&self, profile: &[usize]) -> Result<Coupling> {
        self.check_profile(profile)?;
        let w = 1.0 / self.players() as f64;
        let entries = self.type_nodes.iter().zip(profile).map(|(&t, &x)| (t, x, w)).collect();
        Coupling::new(self.type_grid.clone(), self.strategy_grid.clone(), entries)
    }
}

/// Counts and kernel sums of a profile, for sweeping best responses.
struct Sweeper<'a> {
    game: &'a FiniteGame,
    profile: Vec<usize>,
    counts: Vec<usize>,
    kernel_sum: Vec<f64>,
}

impl<'a> Sweeper<'a> {
    fn new(game: &'a FiniteGame, profile: Vec<usize>) -> Self {
        let mut counts = vec![0; game.points.len()];
        profile.iter().for_each(|&x| counts[x] += 1);
        let mut s = Sweeper { game, profile, counts, kernel_sum: Vec::new() };
        s.refresh();
        s
    }

    /// Kernel sums from the counts, in node order; incremental updates drift.
    fn refresh(&mut self) {
        let game = self.game;
        if !game.cost.has_kernel() {
            return;
        }
        let occupied: Vec<(Point, f64)> = self
            .counts
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0)
            .map(|(z, &c)| (game.points[z], c as f64))
            .collect();
        self.kernel_sum = game
            .points
            .par_iter()
            .map(|&py| {
                let mut acc = CompensatedSum::new();
                for &(pz, c) in &occupied {
                    acc.add(c * game.cost.kernel_at(py, pz));
                }
                acc.value()
            })
            .collect();
    }

    fn costs(&self, i: usize, out: &mut Vec<f64>) {
        let game = self.game;
        let theta = game.types[i];
        let xi = self.profile[i];
        let others = (game.players() - 1) as f64;
        out.clear();
        out.extend(game.points.iter().enumerate().map(|(y, &py)| {
            let mut value = game.cost.transport.eval(theta, py) + game.potential[y];
            if !game.cost.congestion.is_none() {
                let c = self.counts[y] - usize::from(y == xi);
                value += game.cost.congestion.marginal(c as f64 / (others * game.m0[y]));
            }
            if game.cost.has_kernel() {
                value += (self.kernel_sum[y] - game.cost.kernel_at(py, game.points[xi])) / others;
            }
            value
        }));
    }

    fn relocate(&mut self, i: usize, to: usize) {
        let game = self.game;
        let from = std::mem::replace(&mut self.profile[i], to);
        self.counts[from] -= 1;
        self.counts[to] += 1;
        if game.cost.has_kernel() {
            let (pf, pt) = (game.points[from], game.points[to]);
            for (k, &py) in self.kernel_sum.iter_mut().zip(&game.points) {
                *k += game.cost.kernel_at(py, pt) - game.cost.kernel_at(py, pf);
            }
        }
    }

    /// One round-robin pass; returns whether anybody moved.
    fn sweep(&mut self) -> bool {
        self.refresh();
        let mut changed = false;
        let mut buf = Vec::with_capacity(self.game.points.len());
        for i in 0..self.profile.len() {
            self.costs(i, &mut buf);
            let (best, _) = argmin_first(buf.iter().copied()).expect("nonempty grid");
            if best != self.profile[i] {
                self.relocate(i, best);
                changed = true;
            }
        }
        changed
    }

    fn defect(&mut self) -> f64 {
        self.refresh();
        let mut buf = Vec::with_capacity(self.game.points.len());
        let mut worst = 0.0f64;
        for i in 0..self.profile.len() {
            self.costs(i, &mut buf);
            worst = worst.max(gain(&buf, self.profile[i]));
        }
        worst
    }
}

/// `J(current) − min J`, zero when the current node attains the minimum.
fn gain(costs: &[f64], current: usize) -> f64 {
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let here = costs[current];
    if here <= min {
        0.0
    } else {
        here - min
    }
}

/// `max_i [J_i(x_i, x_{−i}) − min_y J_i(y, x_{−i})]`.
pub fn nash_defect(game: &FiniteGame, profile: &[usize]) -> Result<f64> {
    game.check_profile(profile)?;
    Ok(Sweeper::new(game, profile.to_vec()).defect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DynamicsReport {
    /// The Nash profile, or the lowest-defect profile seen before the cap.
    pub profile: Vec<usize>,
    pub nash: bool,
    pub defect: f64,
    pub sweeps: usize,
    pub restarts: usize,
}

/// Round-robin exact best responses, smallest node on ties, until a sweep
/// moves nobody or `cap` sweeps have run.
pub fn best_response_dynamics(game: &FiniteGame, x0: &[usize], cap: usize) -> Result<DynamicsReport> {
    game.check_profile(x0)?;
    let mut state = Sweeper::new(game, x0.to_vec());
    let mut best: Option<(f64, Vec<usize>)> = None;
    for sweep in 1..=cap {
        if !state.sweep() {
            return Ok(DynamicsReport { profile: state.profile, nash: true, defect: 0.0, sweeps: sweep, restarts: 0 });
        }
        let d = state.defect();
        if best.as_ref().map_or(true, |(b, _)| d < *b) {
            best = Some((d, state.profile.clone()));
        }
    }
    let (defect, profile) = match best {
        Some(b) => b,
        None => (state.defect(), state.profile),
    };
    Ok(DynamicsReport { profile, nash: defect == 0.0, defect, sweeps: cap, restarts: 0 })
}

/// Best-response dynamics from `x0`, then from up to [`MAX_RESTARTS`] seeded
/// uniform random profiles while no Nash profile is found.
pub fn find_pure_nash(game: &FiniteGame, x0: &[usize], cap: usize, seed: u64) -> Result<DynamicsReport> {
    let mut report = best_response_dynamics(game, x0, cap)?;
    let mut total_sweeps = report.sweeps;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    for restart in 1..=MAX_RESTARTS {
        if report.nash {
            break;
        }
        let start: Vec<usize> = (0..game.players()).map(|_| rng.gen_range(0..game.points.len())).collect();
        let next = best_response_dynamics(game, &start, cap)?;
        total_sweeps += next.sweeps;
        if next.nash || next.defect < report.defect {
            report = DynamicsReport { restarts: restart, ..next };
        } else {
            report.restarts = restart;
        }
    }
    report.sweeps = total_sweeps;
    Ok(report)
}

/// Nearest strategy node to each player's type.
pub fn nearest_profile(game: &FiniteGame) -> Vec<usize> {
    game.types.iter().map(|&t| game.strategy_grid.nearest(t)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub pure_nash_found: bool,
    #[serde(rename = "W1_to_ref")]
    pub w1_to_ref: f64,
    pub gamma_defect: f64,
    #[serde(rename = "epsilon_N")]
    pub epsilon_n: Option<f64>,
    pub sweeps_used: usize,
    #[serde(skip)]
    pub profile: Vec<usize>,
}

/// `2ω(diam(X)/N)`.
pub fn epsilon_n(modulus: ModulusOfContinuity, diameter: f64, n: usize) -> f64 {
    2.0 * modulus.eval(diameter / n as f64)
}

/// For every `(N, seed)`: draw `N` i.i.d. types, search a pure Nash profile
/// from the nearest-node profile, and compare its empirical strategy measure
/// with `reference`. Rows come back sorted by `(N, seed)`.
pub fn convergence_experiment(
    scenario: &Scenario,
    n_list: &[usize],
    seeds: &[u64],
    reference: &DiscreteMeasure,
    modulus: Option<ModulusOfContinuity>,
) -> Result<Vec<ExperimentRow>> {
    if **reference.grid() != *scenario.strategy_grid {
        return Err(Error::InvalidMeasure("reference measure is not on the strategy grid".into()));
    }
    let mut cells: Vec<(usize, u64)> = n_list.iter().flat_map(|&n| seeds.iter().map(move |&s| (n, s))).collect();
    cells.sort_unstable();
    cells.dedup();
    let diameter = scenario.strategy_grid.diameter();
    cells
        .par_iter()
        .map(|&(n, seed)| {
            let game = build_finite_game(scenario, n, Sampling::Iid { seed })?;
            let report = find_pure_nash(&game, &nearest_profile(&game), EXPERIMENT_SWEEP_CAP, seed)?;
            let nu_n = game.strategy_measure(&report.profile)?;
            let gamma = game.profile_coupling(&report.profile)?;
            let defect = equilibrium_defect(&gamma, &game.type_measure()?, &game.cost, None)?;
            Ok(ExperimentRow {
                n,
                seed,
                pure_nash_found: report.nash,
                w1_to_ref: w1_distance(&nu_n, reference)?,
                gamma_defect: defect.relative_defect,
                epsilon_n: modulus.map(|m| epsilon_n(m, diameter, n)),
                sweeps_used: report.sweeps,
                profile: report.profile,
            })
        })
        .collect()
}

/// Median of `W1_to_ref` over the rows for `n` that found a pure Nash profile.
pub fn median_w1(rows: &[ExperimentRow], n: usize) -> Option<f64> {
    let mut v: Vec<f64> = rows.iter().filter(|r| r.n == n && r.pure_nash_found).map(|r| r.w1_to_ref).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Largest sampled `|J^N(a) − J^N(b)| / (d(θ, θ') + d(x, y) + W₁(ν_{−i}, ν'_{−i}))`,
/// inflated by [`LIPSCHITZ_INFLATION`]. Half the pairs are independent
/// draws, half change one coordinate of the first argument.
pub fn estimate_lipschitz(game: &FiniteGame, samples: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = game.points.len();
    let others = game.players() - 1;
    let grid = game.strategy_grid.clone();
    let mut best = 0.0f64;
    for s in 0..samples {
        let t = rng.gen_range(0..game.players());
        let x = rng.gen_range(0..nodes);
        let opp: Vec<usize> = (0..others).map(|_| rng.gen_range(0..nodes)).collect();
        let (t2, y, opp2) = if s % 2 == 0 {
            (rng.gen_range(0..game.players()), rng.gen_range(0..nodes), (0..others).map(|_| rng.gen_range(0..nodes)).collect())
        } else {
            let mut opp2 = opp.clone();
            let (mut t2, mut y) = (t, x);
            match rng.gen_range(0..3) {
                0 => t2 = rng.gen_range(0..game.players()),
                1 => y = rng.gen_range(0..nodes),
                _ => {
                    let k = rng.gen_range(0..others);
                    opp2[k] = rng.gen_range(0..nodes);
                }
            }
            (t2, y, opp2)
        };
        let a = game.pure_cost(game.types[t], x, &opp);
        let b = game.pure_cost(game.types[t2], y, &opp2);
        if !a.is_finite() || !b.is_finite() {
            continue;
        }
        let d = distance(game.types[t], game.types[t2])
            + distance(game.points[x], game.points[y])
            + w1_distance(&empirical_on(grid.clone(), &opp)?, &empirical_on(grid.clone(), &opp2)?)?;
        if d > 0.0 {
            best = best.max((a - b).abs() / d);
        }
    }
    Ok(best * LIPSCHITZ_INFLATION)
}

fn require_mixed_size(game: &FiniteGame) -> Result<()> {
    if game.players() > MIXED_MAX_PLAYERS || game.points.len() > MIXED_MAX_NODES {
        return Err(Error::TooLarge(format!(
            "mixed-cost enumeration needs N <= {MIXED_MAX_PLAYERS} and at most {MIXED_MAX_NODES} nodes, got N = {} and {} nodes",
            game.players(),
            game.points.len()
        )));
    }
    Ok(())
}

/// `∫ J^N(θ_i, x_i, x_{−i}) d(π_1 ⊗ … ⊗ π_N)` by full enumeration.
pub fn mixed_cost_exact(game: &FiniteGame, profile: &MixedProfile, i: usize) -> Result<f64> {
    mixed_cost_at(game, game.types.get(i).copied().ok_or_else(|| bad_player(i, game))?, profile, i)
}

fn bad_player(i: usize, game: &FiniteGame) -> Error {
    Error::Precondition(format!("player {i} outside a game of {} players", game.players()))
}

/// As [`mixed_cost_exact`] with player `i`'s type replaced by `theta`.
pub fn mixed_cost_at(game: &FiniteGame, theta: Point, profile: &MixedProfile, i: usize) -> Result<f64> {
    require_mixed_size(game)?;
    let n = game.players();
    let m = game.points.len();
    if i >= n {
        return Err(bad_player(i, game));
    }
    if profile.players() != n || profile.weights.iter().any(|r| r.len() != m) {
        return Err(Error::LengthMismatch { left: profile.players(), right: n });
    }
    let mut acc = CompensatedSum::new();
    let mut x = vec![0usize; n];
    let mut opponents = Vec::with_capacity(n - 1);
    for code in 0..m.pow(n as u32) {
        let mut c = code;
        let mut p = 1.0;
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = c % m;
            c /= m;
            p *= profile.weights[j][*xj];
        }
        if p == 0.0 {
            continue;
        }
        opponents.clear();
        opponents.extend(x.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, &v)| v));
        acc.add(p * game.pure_cost(theta, x[i], &opponents));
    }
    Ok(acc.value())
}

/// RHS − LHS of the Lipschitz bound for mixed extensions:
/// `|J̄(θ_i, π_i, π_{−i}) − J̄(θ', η_i, η_{−i})|` against
/// `K d(θ_i, θ') + K W₁(π_i, η_i) + K min_σ (1/(N−1)) Σ_j W₁(π_j, η_σ(j))`.
pub fn lemma_lipschitz_check(
    game: &FiniteGame,
    i: usize,
    theta_prime: Point,
    pi: &MixedProfile,
    eta: &MixedProfile,
    k: f64,
) -> Result<f64> {
    let theta = *game.types.get(i).ok_or_else(|| bad_player(i, game))?;
    let lhs = (mixed_cost_at(game, theta, pi, i)? - mixed_cost_at(game, theta_prime, eta, i)?).abs();
    let grid = &game.strategy_grid;
    let measure = |p: &MixedProfile, j: usize| DiscreteMeasure::new(grid.clone(), p.weights[j].clone());
    let opponents: Vec<usize> = (0..game.players()).filter(|&j| j != i).collect();
    let matrix = opponents
        .iter()
        .map(|&a| opponents.iter().map(|&b| w1_distance(&measure(pi, a)?, &measure(eta, b)?)).collect())
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let (_, matched) = min_cost_assignment(&matrix);
    let own = w1_distance(&measure(pi, i)?, &measure(eta, i)?)?;
    let rhs = k * (distance(theta, theta_prime) + own + matched / opponents.len() as f64);
    Ok(rhs - lhs)
}

/// `inf_{θ_i ∈ Θ_N, x_{−i} ∈ X^{N−1}} J^N(θ_i, x, x_{−i}) + ω(d(θ_i, θ)) + ω(W₁(ν, ν_{x_{−i}}))`.
pub fn mcshane_extend(
    game: &FiniteGame,
    theta: Point,
    x: usize,
    nu: &DiscreteMeasure,
    omega: ModulusOfContinuity,
) -> Result<f64> {
    let m = game.points.len();
    if game.players() > MCSHANE_MAX_PLAYERS || m > MCSHANE_MAX_NODES || game.players() > MCSHANE_MAX_TYPES {
        return Err(Error::TooLarge(format!(
            "McShane enumeration needs N <= {MCSHANE_MAX_PLAYERS}, at most {MCSHANE_MAX_NODES} nodes and {MCSHANE_MAX_TYPES} types"
        )));
    }
    if x >= m {
        return Err(Error::Precondition(format!("strategy node {x} outside the grid")));
    }
    if **nu.grid() != *game.strategy_grid {
        return Err(Error::InvalidMeasure("measure is not on the strategy grid".into()));
    }
    let others = game.players() - 1;
    let mut best = f64::INFINITY;
    // opponent multisets as nondecreasing node lists
    let mut opp = vec![0usize; others];
    loop {
        let penalty = omega.eval(w1_distance(nu, &empirical_on(game.strategy_grid.clone(), &opp)?)?);
        for &t in &game.types {
            best = best.min(game.pure_cost(t, x, &opp) + omega.eval(distance(t, theta)) + penalty);
        }
        let Some(k) = (0..others).rev().find(|&k| opp[k] + 1 < m) else { break };
        let v = opp[k] + 1;
        opp[k..].iter_mut().for_each(|o| *o = v);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_types_on_the_unit_interval() {
        let s = Scenario::named("trivial_uniform").unwrap().with_grid(4).unwrap();
        let g = build_finite_game(&s, 4, Sampling::Quantile).unwrap();
        let xs: Vec<f64> = g.types().iter().map(|p| p[0]).collect();
        assert_eq!(xs, vec![0.125, 0.375, 0.625, 0.875]);
    }

    #[test]
    fn epsilon_example() {
        assert!((epsilon_n(ModulusOfContinuity::linear(1.0).unwrap(), 1.0, 10) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn gain_handles_infinite_costs() {
        assert_eq!(gain(&[f64::NEG_INFINITY, f64::NEG_INFINITY], 1), 0.0);
        assert_eq!(gain(&[1.0, 3.0], 1), 2.0);
    }
}
