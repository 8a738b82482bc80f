//! Grid-world navigation with obstacles, a goal cell and an optional wind
//! field. The windy variant displaces the agent by the wind of the cell it
//! lands on, clamped at the borders.
//!
//! Layout text format, one row of whitespace-separated cell codes per line
//! (first line is the top row): `.` free, `#` obstacle, `G` goal,
//! `w<dx><dy>` wind cell with signed single-digit displacement, e.g. `w+0+1`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mdp::{
    ActionSet, Environment, InitialDistribution, MdpSpec, StateVector, Step,
};
use crate::rng::{self};

/// Default 20x20 layout shipped with the repository.
pub const DEFAULT_LAYOUT: &str = include_str!("../../assets/grid20.txt");

/// Action order after magnitude sort: left(-2), down(-1), up(+1), right(+2).
pub const GRID_ACTION_VALUES: [f64; 4] = [-2.0, -1.0, 1.0, 2.0];

const DISPLACEMENTS: [(i64, i64); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];

#[derive(Debug, Clone, PartialEq)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    obstacles: Vec<bool>,
    wind: Vec<(i64, i64)>,
    pub goal: (i64, i64),
}

impl GridLayout {
    pub fn parse(text: &str) -> Result<GridLayout> {
        let rows: Vec<Vec<&str>> = text
            .lines()
            .map(|l| l.split_whitespace().collect())
            .filter(|r: &Vec<&str>| !r.is_empty())
            .collect();
        if rows.is_empty() {
            return Err(Error::Parse("empty grid layout".into()));
        }
        let height = rows.len();
        let width = rows[0].len();
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Parse("ragged grid layout".into()));
        }
        let mut obstacles = vec![false; width * height];
        let mut wind = vec![(0, 0); width * height];
        let mut goal = None;
        for (ri, row) in rows.iter().enumerate() {
            let y = height - 1 - ri; // first text line is the top row
            for (x, tok) in row.iter().enumerate() {
                let idx = y * width + x;
                match *tok {
                    "." => {}
                    "#" => obstacles[idx] = true,
                    "G" => {
                        if goal.replace((x as i64, y as i64)).is_some() {
                            return Err(Error::Parse("multiple goal cells".into()));
                        }
                    }
                    w if w.starts_with('w') => {
                        wind[idx] = parse_wind(&w[1..])?;
                    }
                    other => {
                        return Err(Error::Parse(format!("unknown cell code '{other}'")));
                    }
                }
            }
        }
        let goal = goal.ok_or_else(|| Error::Parse("layout has no goal cell".into()))?;
        Ok(GridLayout {
            width,
            height,
            obstacles,
            wind,
            goal,
        })
    }

    fn idx(&self, x: i64, y: i64) -> usize {
        y as usize * self.width + x as usize
    }

    pub fn in_grid(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn is_obstacle(&self, x: i64, y: i64) -> bool {
        self.in_grid(x, y) && self.obstacles[self.idx(x, y)]
    }

    pub fn wind_at(&self, x: i64, y: i64) -> (i64, i64) {
        if self.in_grid(x, y) {
            self.wind[self.idx(x, y)]
        } else {
            (0, 0)
        }
    }

    /// All non-obstacle, non-goal cells (start candidates).
    pub fn free_cells(&self) -> Vec<(i64, i64)> {
        let mut cells = Vec::new();
        for y in 0..self.height as i64 {
            for x in 0..self.width as i64 {
                if !self.is_obstacle(x, y) && (x, y) != self.goal {
                    cells.push((x, y));
                }
            }
        }
        cells
    }
}

fn parse_wind(code: &str) -> Result<(i64, i64)> {
    // two signed single-digit integers, e.g. "+0+1" or "-10"
    let bytes: Vec<char> = code.chars().collect();
    let mut pos = 0;
    let read = |pos: &mut usize| -> Result<i64> {
        let sign = match bytes.get(*pos) {
            Some('+') => {
                *pos += 1;
                1
            }
            Some('-') => {
                *pos += 1;
                -1
            }
            _ => 1,
        };
        let d = bytes
            .get(*pos)
            .and_then(|c| c.to_digit(10))
            .ok_or_else(|| Error::Parse(format!("bad wind code 'w{code}'")))?;
        *pos += 1;
        Ok(sign * d as i64)
    };
    let dx = read(&mut pos)?;
    let dy = read(&mut pos)?;
    if pos != bytes.len() {
        return Err(Error::Parse(format!("trailing characters in wind code 'w{code}'")));
    }
    Ok((dx, dy))
}

#[derive(Clone)]
pub struct GridWorld {
    layout: Arc<GridLayout>,
    windy: bool,
    spec: MdpSpec,
    state: StateVector,
    episode_step: usize,
    steps: u64,
}

impl GridWorld {
    pub fn new(layout: Arc<GridLayout>, windy: bool, horizon: usize, discount: f64) -> Self {
        let cells = layout.free_cells();
        let spec = MdpSpec {
            state_dim: 2,
            action_set: ActionSet::new(GRID_ACTION_VALUES.to_vec()).unwrap(),
            horizon,
            discount,
            initial_distribution: InitialDistribution::Cells { cells },
            reward_bound: 10.0,
            state_lo: vec![0.0, 0.0],
            state_hi: vec![layout.width as f64 - 1.0, layout.height as f64 - 1.0],
        };
        let start = StateVector::new(vec![0.0, 0.0]);
        GridWorld {
            layout,
            windy,
            spec,
            state: start,
            episode_step: 0,
            steps: 0,
        }
    }

    pub fn default_pair(horizon: usize, discount: f64) -> (GridWorld, GridWorld) {
        let layout = Arc::new(GridLayout::parse(DEFAULT_LAYOUT).unwrap());
        (
            GridWorld::new(layout.clone(), false, horizon, discount),
            GridWorld::new(layout, true, horizon, discount),
        )
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    fn cell_of(s: &StateVector) -> (i64, i64) {
        (s[0].round() as i64, s[1].round() as i64)
    }

    /// Pure transition; wind (windy variant) displaces from the landing cell.
    fn transition(&self, s: &StateVector, action_index: usize) -> Step {
        let (x, y) = Self::cell_of(s);
        let (dx, dy) = DISPLACEMENTS[action_index];
        let (ax, ay) = (x + dx, y + dy);
        let (mut nx, mut ny) = (x, y);
        let mut reward = 0.0;
        if !self.layout.in_grid(ax, ay) {
            // clamped at the border, stay put
        } else if self.layout.is_obstacle(ax, ay) {
            reward = -1.0;
        } else {
            nx = ax;
            ny = ay;
            if self.windy {
                let (wx, wy) = self.layout.wind_at(nx, ny);
                if wx != 0 || wy != 0 {
                    let cx = (nx + wx).clamp(0, self.layout.width as i64 - 1);
                    let cy = (ny + wy).clamp(0, self.layout.height as i64 - 1);
                    if !self.layout.is_obstacle(cx, cy) {
                        nx = cx;
                        ny = cy;
                    }
                }
            }
        }
        let terminal = (nx, ny) == self.layout.goal;
        if terminal {
            reward = 10.0;
        }
        Step {
            next: StateVector::new(vec![nx as f64, ny as f64]),
            reward,
            terminal,
        }
    }
}

impl Environment for GridWorld {
    fn spec(&self) -> &MdpSpec {
        &self.spec
    }

    fn name(&self) -> &str {
        if self.windy {
            "grid_windy"
        } else {
            "grid"
        }
    }

    fn state(&self) -> &StateVector {
        &self.state
    }

    fn reset(&mut self, seed: u64) -> StateVector {
        let mut r = rng::stream(seed, rng::INIT_STREAM);
        self.state = self.spec.initial_distribution.sample(&mut r);
        self.episode_step = 0;
        self.state.clone()
    }

    fn reset_to(&mut self, state: StateVector) {
        self.state = self.canonicalize(state);
        self.episode_step = 0;
    }

    fn step(&mut self, action_index: usize) -> Step {
        let step = self.transition(&self.state, action_index);
        self.state = step.next.clone();
        self.episode_step += 1;
        self.steps += 1;
        step
    }

    fn step_applied(&mut self, _value: f64) -> Result<Step> {
        Err(Error::Precondition(
            "grid world has no continuous actuation".into(),
        ))
    }

    fn supports_continuous_action(&self) -> bool {
        false
    }

    fn peek(&self, state: &StateVector, action_index: usize, _step_index: usize) -> Step {
        self.transition(state, action_index)
    }

    fn peek_applied(&self, _state: &StateVector, _value: f64, _step_index: usize) -> Result<Step> {
        Err(Error::Precondition(
            "grid world has no continuous actuation".into(),
        ))
    }

    fn reward_of(&self, state: &StateVector, action_index: usize, next: &StateVector) -> f64 {
        let (x, y) = Self::cell_of(state);
        let (dx, dy) = DISPLACEMENTS[action_index];
        if Self::cell_of(next) == self.layout.goal {
            10.0
        } else if self.layout.is_obstacle(x + dx, y + dy) {
            -1.0
        } else {
            0.0
        }
    }

    fn is_terminal(&self, state: &StateVector) -> bool {
        Self::cell_of(state) == self.layout.goal
    }

    fn canonicalize(&self, state: StateVector) -> StateVector {
        let x = state[0]
            .round()
            .clamp(0.0, self.layout.width as f64 - 1.0);
        let y = state[1]
            .round()
            .clamp(0.0, self.layout.height as f64 - 1.0);
        StateVector::new(vec![x, y])
    }

    fn actuated_dim(&self) -> Option<usize> {
        None
    }

    fn step_index(&self) -> usize {
        self.episode_step
    }

    fn steps_taken(&self) -> u64 {
        self.steps
    }

    fn boxed_clone(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{rollout, rollout_from, FixedPolicy};
    use std::collections::VecDeque;

    fn open_layout() -> Arc<GridLayout> {
        // 5x5, goal at the right middle, no obstacles or wind
        let text = ". . . . .\n. . . . .\n. . . . G\n. . . . .\n. . . . .\n";
        Arc::new(GridLayout::parse(text).unwrap())
    }

    #[test]
    fn parse_default_layout() {
        let l = GridLayout::parse(DEFAULT_LAYOUT).unwrap();
        assert_eq!((l.width, l.height), (20, 20));
        assert_eq!(l.goal, (17, 10));
        assert!(l.is_obstacle(5, 10));
        assert!(!l.is_obstacle(5, 2));
        assert_eq!(l.wind_at(9, 3), (0, 1));
        assert_eq!(l.wind_at(3, 3), (0, 0));
    }

    #[test]
    fn fixed_policy_walks_right() {
        let mut gw = GridWorld::new(open_layout(), false, 10, 0.95);
        gw.reset_to(StateVector::new(vec![0.0, 0.0]));
        // action index 3 = right
        let s1 = gw.step(3);
        let s2 = gw.step(3);
        let s3 = gw.step(3);
        assert_eq!(s1.next.as_slice(), &[1.0, 0.0]);
        assert_eq!(s2.next.as_slice(), &[2.0, 0.0]);
        assert_eq!(s3.next.as_slice(), &[3.0, 0.0]);
    }

    #[test]
    fn goal_step_rewards_and_terminates() {
        let mut gw = GridWorld::new(open_layout(), false, 10, 0.95);
        gw.reset_to(StateVector::new(vec![3.0, 2.0]));
        let step = gw.step(3);
        assert_eq!(step.reward, 10.0);
        assert!(step.terminal);
        assert_eq!(step.next.as_slice(), &[4.0, 2.0]);
    }

    #[test]
    fn obstacle_bump_stays_put() {
        let text = ". . .\n. # G\n. . .\n";
        let l = Arc::new(GridLayout::parse(text).unwrap());
        let mut gw = GridWorld::new(l, false, 10, 0.95);
        gw.reset_to(StateVector::new(vec![0.0, 1.0]));
        let step = gw.step(3); // right into the obstacle
        assert_eq!(step.reward, -1.0);
        assert!(!step.terminal);
        assert_eq!(step.next.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn wind_composes_after_move_and_clamps() {
        // single wind column; top row shows y=2
        let text = ". w+0+1 .\n. w+0+1 .\n. w+0+1 G\n";
        let l = Arc::new(GridLayout::parse(text).unwrap());
        let mut gw = GridWorld::new(l.clone(), true, 10, 0.95);
        gw.reset_to(StateVector::new(vec![0.0, 0.0]));
        let step = gw.step(3); // right into windy column, then pushed up
        assert_eq!(step.next.as_slice(), &[1.0, 1.0]);
        // at the top border the wind push clamps
        gw.reset_to(StateVector::new(vec![0.0, 2.0]));
        let step = gw.step(3);
        assert_eq!(step.next.as_slice(), &[1.0, 2.0]);
        // the non-windy variant ignores the field
        let mut nw = GridWorld::new(l, false, 10, 0.95);
        nw.reset_to(StateVector::new(vec![0.0, 0.0]));
        assert_eq!(nw.step(3).next.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn every_free_cell_reaches_goal_in_both_variants() {
        for windy in [false, true] {
            let layout = Arc::new(GridLayout::parse(DEFAULT_LAYOUT).unwrap());
            let gw = GridWorld::new(layout.clone(), windy, 200, 0.95);
            let mut queue = VecDeque::new();
            let goal = layout.goal;
            // reverse reachability on the forward transition graph
            let mut reaches_goal = vec![false; layout.width * layout.height];
            reaches_goal[(goal.1 as usize) * layout.width + goal.0 as usize] = true;
            queue.push_back(goal);
            // build predecessor lists by scanning all transitions
            let mut preds: Vec<Vec<(i64, i64)>> = vec![Vec::new(); layout.width * layout.height];
            for (x, y) in layout.free_cells() {
                let s = StateVector::new(vec![x as f64, y as f64]);
                for a in 0..4 {
                    let step = gw.peek(&s, a, 0);
                    let (nx, ny) = (step.next[0] as i64, step.next[1] as i64);
                    preds[(ny as usize) * layout.width + nx as usize].push((x, y));
                }
            }
            while let Some((cx, cy)) = queue.pop_front() {
                for &(px, py) in &preds[(cy as usize) * layout.width + cx as usize] {
                    let idx = (py as usize) * layout.width + px as usize;
                    if !reaches_goal[idx] {
                        reaches_goal[idx] = true;
                        queue.push_back((px, py));
                    }
                }
            }
            for (x, y) in layout.free_cells() {
                assert!(
                    reaches_goal[(y as usize) * layout.width + x as usize],
                    "cell ({x},{y}) cannot reach the goal (windy={windy})"
                );
            }
        }
    }

    #[test]
    fn rollout_from_visits_expected_cells() {
        let mut gw = GridWorld::new(open_layout(), false, 10, 0.95);
        let t = rollout_from(
            &mut gw,
            &FixedPolicy { action: 3 },
            StateVector::new(vec![0.0, 0.0]),
            3,
            7,
        )
        .unwrap();
        let visited: Vec<Vec<f64>> = t
            .transitions
            .iter()
            .map(|tr| tr.next_state.as_slice().to_vec())
            .collect();
        assert_eq!(
            visited,
            vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 0.0]]
        );
        assert!(t.is_chained());
    }

    #[test]
    fn rollout_is_deterministic_per_seed() {
        let layout = Arc::new(GridLayout::parse(DEFAULT_LAYOUT).unwrap());
        let mut a = GridWorld::new(layout.clone(), true, 50, 0.95);
        let mut b = GridWorld::new(layout, true, 50, 0.95);
        let pol = crate::mdp::RandomPolicy { n_actions: 4 };
        let ta = rollout(&mut a, &pol, 50, 123).unwrap();
        let tb = rollout(&mut b, &pol, 50, 123).unwrap();
        assert_eq!(ta, tb);
    }
}
