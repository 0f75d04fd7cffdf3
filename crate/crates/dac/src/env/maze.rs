//! Continuous 4-room maze.
//!
//! A square of side `side` split into four rooms by two internal walls of
//! thickness `wall_thickness` whose inner faces sit at `side/2`. Each of
//! the four wall segments carries one door of width `door_width` centered
//! in the segment. With the defaults (side 100, thickness 1, doors 4) the
//! vertical wall occupies `x ∈ [50, 51]` with door spans `y ∈ [23, 27]`
//! and `y ∈ [73.5, 77.5]`, and symmetrically for the horizontal wall.
//!
//! Movement is a straight segment `(x, y) → (x+dx, y+dy)`; if the segment
//! hits a wall or the outer boundary the agent stops at the contact point
//! backed off by a small skin margin. There is no reward.

use std::fmt::Write as _;

use crate::env::{ContinuousEnv, StepOutcome};
use crate::error::{DacError, Result};

#[derive(Debug, Clone)]
pub struct MazeConfig {
    pub side: f64,
    pub wall_thickness: f64,
    pub door_width: f64,
    pub start: (f64, f64),
    /// Episode length. The environment itself never terminates (there is
    /// no goal); the training loop resets every `horizon` steps and
    /// bootstraps through the reset, so timeout is not treated as a
    /// terminal state.
    pub horizon: usize,
    pub skin: f64,
}

impl Default for MazeConfig {
    fn default() -> Self {
        MazeConfig {
            side: 100.0,
            wall_thickness: 1.0,
            door_width: 4.0,
            start: (0.5, 0.5),
            horizon: 1000,
            skin: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MazeState {
    pub x: f64,
    pub y: f64,
}

/// Axis-aligned wall rectangle `[x0,x1] × [y0,y1]`.
#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Rect {
    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    /// Entry parameter `t ∈ [0, 1]` of the segment `p + t·d` into the
    /// rectangle, if it enters.
    fn entry(&self, px: f64, py: f64, dx: f64, dy: f64) -> Option<f64> {
        let mut t_lo = 0.0_f64;
        let mut t_hi = 1.0_f64;
        for (p, d, lo, hi) in [(px, dx, self.x0, self.x1), (py, dy, self.y0, self.y1)] {
            if d == 0.0 {
                if p < lo || p > hi {
                    return None;
                }
            } else {
                let mut t0 = (lo - p) / d;
                let mut t1 = (hi - p) / d;
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                t_lo = t_lo.max(t0);
                t_hi = t_hi.min(t1);
                if t_lo > t_hi {
                    return None;
                }
            }
        }
        Some(t_lo)
    }
}

#[derive(Debug, Clone)]
pub struct MazeEnv {
    pub cfg: MazeConfig,
    state: MazeState,
    walls: Vec<Rect>,
}

impl MazeEnv {
    pub fn new(cfg: MazeConfig) -> Result<Self> {
        if cfg.door_width >= cfg.side / 2.0 {
            return Err(DacError::validation("door width must be below the room side"));
        }
        if !(cfg.start.0 > 0.0 && cfg.start.0 < cfg.side / 2.0)
            || !(cfg.start.1 > 0.0 && cfg.start.1 < cfg.side / 2.0)
        {
            return Err(DacError::validation("start must lie inside the lower-left room"));
        }
        let walls = build_walls(&cfg);
        Ok(MazeEnv {
            state: MazeState {
                x: cfg.start.0,
                y: cfg.start.1,
            },
            walls,
            cfg,
        })
    }

    pub fn position(&self) -> MazeState {
        self.state
    }

    /// True when the point is inside the upper-right room (past both
    /// internal walls). Used as a sparse-reward predicate.
    pub fn in_upper_right_room(&self, x: f64, y: f64) -> bool {
        let hi = self.cfg.side / 2.0 + self.cfg.wall_thickness;
        x > hi && y > hi
    }

    /// True when the point lies inside any wall rectangle.
    pub fn inside_any_wall(&self, x: f64, y: f64) -> bool {
        self.walls.iter().any(|r| r.contains(x, y))
    }

    /// Straight-line move with stop-at-contact collision handling.
    pub fn move_from(&self, state: MazeState, action: (f64, f64)) -> MazeState {
        let dx = action.0.clamp(-1.0, 1.0);
        let dy = action.1.clamp(-1.0, 1.0);
        if dx == 0.0 && dy == 0.0 {
            return state;
        }
        let len = (dx * dx + dy * dy).sqrt();
        let mut t_hit = f64::INFINITY;
        // Outer boundary treated as exit times per axis.
        for (p, d) in [(state.x, dx), (state.y, dy)] {
            if d > 0.0 {
                t_hit = t_hit.min((self.cfg.side - p) / d);
            } else if d < 0.0 {
                t_hit = t_hit.min(-p / d);
            }
        }
        for rect in &self.walls {
            if let Some(t) = rect.entry(state.x, state.y, dx, dy) {
                t_hit = t_hit.min(t);
            }
        }
        let t = if t_hit > 1.0 {
            1.0
        } else {
            (t_hit - self.cfg.skin / len).max(0.0)
        };
        MazeState {
            x: state.x + dx * t,
            y: state.y + dy * t,
        }
    }

    fn obs(&self) -> Vec<f64> {
        // Rescaled to [−1, 1] for network conditioning.
        vec![
            2.0 * self.state.x / self.cfg.side - 1.0,
            2.0 * self.state.y / self.cfg.side - 1.0,
        ]
    }
}

fn build_walls(cfg: &MazeConfig) -> Vec<Rect> {
    let lo = cfg.side / 2.0;
    let hi = lo + cfg.wall_thickness;
    let half_door = cfg.door_width / 2.0;
    // Door spans centered in the near segment [0, lo] and far segment [hi, side].
    let near_center = lo / 2.0;
    let far_center = (hi + cfg.side) / 2.0;
    let spans = [
        (0.0, near_center - half_door),
        (near_center + half_door, far_center - half_door),
        (far_center + half_door, cfg.side),
    ];
    let mut walls = Vec::with_capacity(6);
    for &(a, b) in &spans {
        // Vertical wall pieces.
        walls.push(Rect {
            x0: lo,
            y0: a,
            x1: hi,
            y1: b,
        });
        // Horizontal wall pieces.
        walls.push(Rect {
            x0: a,
            y0: lo,
            x1: b,
            y1: hi,
        });
    }
    walls
}

impl ContinuousEnv for MazeEnv {
    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn reset(&mut self) -> Vec<f64> {
        self.state = MazeState {
            x: self.cfg.start.0,
            y: self.cfg.start.1,
        };
        self.obs()
    }

    fn step(&mut self, action: &[f64]) -> StepOutcome {
        self.state = self.move_from(self.state, (action[0], action[1]));
        StepOutcome {
            obs: self.obs(),
            reward: 0.0,
            done: false,
        }
    }
}

/// Visit counts over unit cells of the maze. A state at `(x, y)` lands in
/// cell `(⌊x⌋, ⌊y⌋)`.
#[derive(Debug, Clone)]
pub struct VisitationGrid {
    pub side: usize,
    counts: Vec<u64>,
    total: u64,
}

impl VisitationGrid {
    pub fn new(side: usize) -> Self {
        VisitationGrid {
            side,
            counts: vec![0; side * side],
            total: 0,
        }
    }

    pub fn record(&mut self, x: f64, y: f64) -> Result<()> {
        if x < 0.0 || y < 0.0 || x >= self.side as f64 + 1.0 || y >= self.side as f64 + 1.0 {
            return Err(DacError::validation(format!(
                "state ({x},{y}) outside the maze"
            )));
        }
        let ix = (x.floor() as usize).min(self.side - 1);
        let iy = (y.floor() as usize).min(self.side - 1);
        self.counts[iy * self.side + ix] += 1;
        self.total += 1;
        Ok(())
    }

    pub fn count_at(&self, ix: usize, iy: usize) -> u64 {
        self.counts[iy * self.side + ix]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of distinct cells visited at least once.
    pub fn unique_count(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// CSV grid: one row per `y`, columns ordered by `x`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# schema dac.visitation-grid v1\n");
        for y in 0..self.side {
            let row: Vec<String> = (0..self.side)
                .map(|x| self.count_at(x, y).to_string())
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// ASCII portable graymap with log-scaled intensities (brighter means
    /// more visits). Row 0 is `y = side−1` so the origin sits at the
    /// bottom-left of the rendered image.
    pub fn to_pgm(&self) -> String {
        let max = self.counts.iter().cloned().max().unwrap_or(0);
        let mut out = String::new();
        writeln!(out, "P2\n{} {}\n255", self.side, self.side).unwrap();
        for y in (0..self.side).rev() {
            let row: Vec<String> = (0..self.side)
                .map(|x| {
                    let c = self.count_at(x, y);
                    let v = if max == 0 {
                        0
                    } else {
                        ((255.0 * (1.0 + c as f64).ln() / (1.0 + max as f64).ln()).round()) as u32
                    };
                    v.to_string()
                })
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn maze() -> MazeEnv {
        MazeEnv::new(MazeConfig::default()).unwrap()
    }

    #[test]
    fn free_space_translation() {
        let m = maze();
        let next = m.move_from(MazeState { x: 10.0, y: 10.0 }, (1.0, 0.0));
        assert_eq!(next, MazeState { x: 11.0, y: 10.0 });
    }

    #[test]
    fn outer_boundary_pins_at_skin() {
        let m = maze();
        let next = m.move_from(MazeState { x: 0.5, y: 0.5 }, (-1.0, 0.0));
        assert!((next.x - m.cfg.skin).abs() < 1e-12, "x = {}", next.x);
        assert_eq!(next.y, 0.5);
    }

    #[test]
    fn internal_wall_stops_at_face_minus_skin() {
        let m = maze();
        // y = 10 is solid wall (door spans y ∈ [23,27]).
        let next = m.move_from(MazeState { x: 49.5, y: 10.0 }, (1.0, 0.0));
        assert!((next.x - (50.0 - m.cfg.skin)).abs() < 1e-9, "x = {}", next.x);

        // Independent segment-rectangle oracle: binary search the largest
        // collision-free travel along the ray.
        let mut lo = 0.0_f64;
        let mut hi = 1.0_f64;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let x = 49.5 + mid;
            if x < 50.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((next.x - (49.5 + lo - m.cfg.skin)).abs() < 1e-6);
    }

    #[test]
    fn door_is_passable() {
        let m = maze();
        // Door in the lower vertical segment spans y ∈ [23, 27].
        let next = m.move_from(MazeState { x: 49.8, y: 25.0 }, (1.0, 0.0));
        assert!((next.x - 50.8).abs() < 1e-12);
    }

    #[test]
    fn random_moves_never_penetrate_walls() {
        let mut env = maze();
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        env.reset();
        for _ in 0..100_000 {
            let a = [rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0];
            env.step(&a);
            let p = env.position();
            assert!(
                !env.inside_any_wall(p.x, p.y),
                "state ({}, {}) inside a wall",
                p.x,
                p.y
            );
            assert!(p.x >= 0.0 && p.x <= env.cfg.side && p.y >= 0.0 && p.y <= env.cfg.side);
        }
    }

    #[test]
    fn visitation_floor_quantization() {
        let mut g = VisitationGrid::new(100);
        g.record(0.5, 0.5).unwrap();
        assert_eq!(g.count_at(0, 0), 1);
        g.record(3.2, 7.9).unwrap();
        g.record(3.8, 7.1).unwrap();
        assert_eq!(g.count_at(3, 7), 2);
        assert_eq!(g.unique_count(), 2);
        assert_eq!(g.total(), 3);
        assert!(g.record(-1.0, 5.0).is_err());
    }

    #[test]
    fn unique_count_is_monotone_under_random_walk() {
        let mut env = maze();
        let mut g = VisitationGrid::new(100);
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        env.reset();
        let mut last = 0;
        for step in 0..50_000 {
            let a = [rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0];
            env.step(&a);
            let p = env.position();
            g.record(p.x, p.y).unwrap();
            let u = g.unique_count();
            assert!(u >= last);
            last = u;
            if step == 999 {
                env.reset();
            }
        }
        assert_eq!(g.total(), 50_000);
        // Free cells only: the grid can never exceed the non-wall area.
        assert!(last <= 100 * 100);
    }

    #[test]
    fn upper_right_room_membership() {
        let env = maze();
        assert!(env.in_upper_right_room(75.0, 75.0));
        assert!(!env.in_upper_right_room(25.0, 75.0));
        assert!(!env.in_upper_right_room(75.0, 25.0));
        assert!(!env.in_upper_right_room(50.5, 50.5));
    }

    #[test]
    fn grid_exports_have_stable_shape() {
        let mut g = VisitationGrid::new(4);
        g.record(0.1, 0.1).unwrap();
        g.record(3.5, 3.5).unwrap();
        let csv = g.to_csv();
        assert!(csv.starts_with("# schema dac.visitation-grid v1\n"));
        assert_eq!(csv.lines().count(), 5);
        let pgm = g.to_pgm();
        let mut lines = pgm.lines();
        assert_eq!(lines.next().unwrap(), "P2");
        assert_eq!(lines.next().unwrap(), "4 4");
        assert_eq!(lines.next().unwrap(), "255");
        assert_eq!(lines.count(), 4);
    }
}
