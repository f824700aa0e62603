//! RRT* in the plane. Plans positions only; headings come from the path
//! built on the waypoints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{min_clearance, ConvexPolytope, DEFAULT_DELTA_SEP};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Sampling box `[xmin, ymin, xmax, ymax]`.
    pub bounds: [f64; 4],
    pub max_iterations: usize,
    pub steer_step: f64,
    pub goal_bias: f64,
    pub rewire_radius: f64,
    pub rng_seed: u64,
    /// Required clearance; edges are sampled at half this spacing.
    pub delta_sep: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            bounds: [-0.5, -2.0, 3.0, 2.0],
            max_iterations: 1000,
            steer_step: 0.2,
            goal_bias: 0.05,
            rewire_radius: 0.5,
            rng_seed: 0,
            delta_sep: DEFAULT_DELTA_SEP,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        let [x0, y0, x1, y1] = self.bounds;
        if !(x0 < x1 && y0 < y1) || self.bounds.iter().any(|v| !v.is_finite()) {
            return Err(Error::Planner(format!("bad sampling box {:?}", self.bounds)));
        }
        if !(0.0..=1.0).contains(&self.goal_bias) {
            return Err(Error::Planner(format!(
                "goal bias {} is not a probability",
                self.goal_bias
            )));
        }
        for (name, v) in [
            ("steer_step", self.steer_step),
            ("rewire_radius", self.rewire_radius),
            ("delta_sep", self.delta_sep),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Planner(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    fn contains(&self, p: [f64; 2]) -> bool {
        let [x0, y0, x1, y1] = self.bounds;
        (x0..=x1).contains(&p[0]) && (y0..=y1).contains(&p[1])
    }
}

/// Search tree rooted at the start (node 0).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlannerTree {
    pub nodes: Vec<[f64; 2]>,
    pub parents: Vec<Option<usize>>,
    pub costs: Vec<f64>,
    children: Vec<Vec<usize>>,
}

impl PlannerTree {
    fn new(root: [f64; 2]) -> Self {
        Self {
            nodes: vec![root],
            parents: vec![None],
            costs: vec![0.0],
            children: vec![Vec::new()],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, p: [f64; 2], parent: usize, cost: f64) -> usize {
        let i = self.nodes.len();
        self.nodes.push(p);
        self.parents.push(Some(parent));
        self.costs.push(cost);
        self.children.push(Vec::new());
        self.children[parent].push(i);
        i
    }

    fn reparent(&mut self, i: usize, parent: usize, cost: f64) {
        if let Some(old) = self.parents[i] {
            self.children[old].retain(|c| *c != i);
        }
        self.parents[i] = Some(parent);
        self.children[parent].push(i);
        let delta = self.costs[i] - cost;
        debug_assert!(delta > 0.0, "rewiring raised a cost");
        let mut stack = vec![i];
        while let Some(j) = stack.pop() {
            self.costs[j] -= delta;
            stack.extend(self.children[j].iter().copied());
        }
    }

    /// Waypoints from the root to node `i`.
    pub fn branch(&self, mut i: usize) -> Vec<[f64; 2]> {
        let mut out = vec![self.nodes[i]];
        while let Some(p) = self.parents[i] {
            out.push(self.nodes[p]);
            i = p;
        }
        out.reverse();
        out
    }

    /// Every non-root node has an earlier-reachable parent and its cost
    /// equals the parent's plus the edge length (within `tol`).
    pub fn is_consistent(&self, tol: f64) -> bool {
        if self.parents.first() != Some(&None) || self.costs[0] != 0.0 {
            return false;
        }
        (1..self.len()).all(|i| {
            let Some(p) = self.parents[i] else { return false };
            // walking up must reach the root without revisiting i
            let mut j = p;
            let mut steps = 0;
            while let Some(q) = self.parents[j] {
                if j == i || steps > self.len() {
                    return false;
                }
                j = q;
                steps += 1;
            }
            (self.costs[i] - self.costs[p] - dist(self.nodes[i], self.nodes[p])).abs() <= tol
        })
    }
}

/// Tree and path of one planning call.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub tree: PlannerTree,
    pub path: Option<Vec<[f64; 2]>>,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub fn path_length(waypoints: &[[f64; 2]]) -> f64 {
    waypoints.windows(2).map(|w| dist(w[0], w[1])).sum()
}

pub fn point_free(obstacles: &[ConvexPolytope], p: [f64; 2], delta_sep: f64) -> bool {
    min_clearance(obstacles, p) >= delta_sep
}

/// Checks `a → b` at spacing `delta_sep / 2`, endpoints included.
pub fn segment_free(obstacles: &[ConvexPolytope], a: [f64; 2], b: [f64; 2], delta_sep: f64) -> bool {
    if obstacles.is_empty() {
        return true;
    }
    let samples = (dist(a, b) / (0.5 * delta_sep)).ceil().max(1.0) as usize;
    (0..=samples).all(|k| {
        let t = k as f64 / samples as f64;
        point_free(
            obstacles,
            [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])],
            delta_sep,
        )
    })
}

/// Runs RRT* and returns the lowest-cost start-to-goal waypoint list, or
/// `None` when no tree node ends within `steer_step` of the goal.
pub fn rrt_star(
    start: [f64; 2],
    goal: [f64; 2],
    obstacles: &[ConvexPolytope],
    config: &PlannerConfig,
) -> Result<Option<Vec<[f64; 2]>>> {
    Ok(plan(start, goal, obstacles, config)?.path)
}

/// [`rrt_star`] that also returns the search tree.
pub fn plan(
    start: [f64; 2],
    goal: [f64; 2],
    obstacles: &[ConvexPolytope],
    config: &PlannerConfig,
) -> Result<PlanResult> {
    config.validate()?;
    for (name, p) in [("start", start), ("goal", goal)] {
        if !(p[0].is_finite() && p[1].is_finite()) || !config.contains(p) {
            return Err(Error::Planner(format!("{name} {p:?} is outside the sampling box")));
        }
        if !point_free(obstacles, p, config.delta_sep) {
            return Err(Error::Planner(format!("{name} {p:?} is in collision")));
        }
    }
    let mut tree = PlannerTree::new(start);
    if dist(start, goal) <= 1e-12 {
        return Ok(PlanResult {
            tree,
            path: Some(vec![start]),
        });
    }

    let free = |a: [f64; 2], b: [f64; 2]| segment_free(obstacles, a, b, config.delta_sep);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let [x0, y0, x1, y1] = config.bounds;
    for _ in 0..config.max_iterations {
        let sample = if rng.gen::<f64>() < config.goal_bias {
            goal
        } else {
            [rng.gen_range(x0..=x1), rng.gen_range(y0..=y1)]
        };
        let nearest = (0..tree.len())
            .min_by(|a, b| dist(tree.nodes[*a], sample).total_cmp(&dist(tree.nodes[*b], sample)))
            .unwrap_or(0);
        let from = tree.nodes[nearest];
        let d = dist(from, sample);
        if d <= 1e-12 {
            continue;
        }
        let t = (config.steer_step / d).min(1.0);
        let new = [from[0] + t * (sample[0] - from[0]), from[1] + t * (sample[1] - from[1])];
        if !free(from, new) {
            continue;
        }

        let near: Vec<usize> = (0..tree.len())
            .filter(|j| dist(tree.nodes[*j], new) <= config.rewire_radius)
            .collect();
        let mut parent = nearest;
        let mut cost = tree.costs[nearest] + dist(from, new);
        for &j in &near {
            let c = tree.costs[j] + dist(tree.nodes[j], new);
            if c < cost && free(tree.nodes[j], new) {
                parent = j;
                cost = c;
            }
        }
        let id = tree.push(new, parent, cost);
        for &j in &near {
            if j == parent {
                continue;
            }
            let c = cost + dist(new, tree.nodes[j]);
            if c < tree.costs[j] && free(new, tree.nodes[j]) {
                tree.reparent(j, id, c);
            }
        }
    }

    let best = (0..tree.len())
        .filter(|i| dist(tree.nodes[*i], goal) <= config.steer_step)
        .map(|i| (i, tree.costs[i] + dist(tree.nodes[i], goal)))
        .filter(|(i, _)| free(tree.nodes[*i], goal))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    let path = best.map(|(i, _)| {
        let mut p = tree.branch(i);
        if dist(tree.nodes[i], goal) > 1e-12 {
            p.push(goal);
        }
        p
    });
    Ok(PlanResult { tree, path })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_box() -> ConvexPolytope {
        ConvexPolytope::from_box(1.0, -1.0, 1.5, 1.0).unwrap()
    }

    #[test]
    fn path_length_examples() {
        assert_eq!(path_length(&[[0.0, 0.0], [3.0, 4.0]]), 5.0);
        assert_eq!(path_length(&[[1.0, 1.0]]), 0.0);
        assert_eq!(path_length(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]), 2.0);
    }

    #[test]
    fn empty_map_is_nearly_straight() {
        let path = rrt_star([0.0, 0.0], [1.0, 0.0], &[], &PlannerConfig::default())
            .unwrap()
            .unwrap();
        assert_eq!(path[0], [0.0, 0.0]);
        assert_eq!(*path.last().unwrap(), [1.0, 0.0]);
        assert!(path_length(&path) <= 1.2, "{}", path_length(&path));
    }

    #[test]
    fn start_equals_goal() {
        let p = rrt_star([0.3, 0.2], [0.3, 0.2], &[], &PlannerConfig::default()).unwrap();
        assert_eq!(p, Some(vec![[0.3, 0.2]]));
    }

    #[test]
    fn walled_off_goal_is_unreachable() {
        // a wall spanning the whole sampling box
        let wall = ConvexPolytope::from_box(1.0, -3.0, 1.2, 3.0).unwrap();
        let p = rrt_star([0.0, 0.0], [2.0, 0.0], &[wall], &PlannerConfig::default()).unwrap();
        assert_eq!(p, None);
    }

    #[test]
    fn box_map_path_goes_around() {
        let obstacles = [sample_box()];
        let cfg = PlannerConfig::default();
        let result = plan([0.0, 0.0], [2.5, 0.0], &obstacles, &cfg).unwrap();
        let path = result.path.unwrap();
        assert!(path.len() >= 3);
        for w in path.windows(2) {
            assert!(segment_free(&obstacles, w[0], w[1], cfg.delta_sep));
        }
        assert!(result.tree.is_consistent(1e-9));
    }

    #[test]
    fn same_seed_same_tree() {
        let obstacles = [sample_box()];
        let cfg = PlannerConfig::default();
        let a = plan([0.0, 0.0], [2.5, 0.0], &obstacles, &cfg).unwrap();
        let b = plan([0.0, 0.0], [2.5, 0.0], &obstacles, &cfg).unwrap();
        assert_eq!(a, b);
        let other = PlannerConfig { rng_seed: 7, ..cfg };
        assert_ne!(plan([0.0, 0.0], [2.5, 0.0], &obstacles, &other).unwrap().tree, a.tree);
    }

    #[test]
    fn input_errors() {
        let cfg = PlannerConfig::default();
        assert!(rrt_star([1.2, 0.0], [2.5, 0.0], &[sample_box()], &cfg).is_err());
        assert!(rrt_star([0.0, 0.0], [1.2, 0.5], &[sample_box()], &cfg).is_err());
        assert!(rrt_star([0.0, 0.0], [9.0, 0.0], &[], &cfg).is_err());
        let bad = PlannerConfig {
            goal_bias: 1.5,
            ..cfg.clone()
        };
        assert!(rrt_star([0.0, 0.0], [1.0, 0.0], &[], &bad).is_err());
        let bad = PlannerConfig { steer_step: 0.0, ..cfg };
        assert!(rrt_star([0.0, 0.0], [1.0, 0.0], &[], &bad).is_err());
    }

    #[test]
    fn segment_check_catches_thin_crossings() {
        let thin = ConvexPolytope::from_box(0.5, -1.0, 0.502, 1.0).unwrap();
        assert!(!segment_free(std::slice::from_ref(&thin), [0.0, 0.0], [1.0, 0.0], 1e-3));
        assert!(segment_free(&[thin], [0.0, 0.0], [0.49, 0.0], 1e-3));
    }

    #[test]
    fn config_parses_with_defaults() {
        let c: PlannerConfig = toml::from_str("max_iterations = 50\nrng_seed = 3").unwrap();
        assert_eq!(c.max_iterations, 50);
        assert_eq!(c.steer_step, 0.2);
        assert!(toml::from_str::<PlannerConfig>("nope = 1").is_err());
    }
}
