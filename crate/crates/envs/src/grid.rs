//! Egocentric gridworlds: beacon/flag memory tasks (open or partitioned into
//! rooms), key-door tasks, and the hallucinated-rooms overlay.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{EnvError, Observation, PomdpEnv, Result, Step};

pub const TURN_LEFT: usize = 0;
pub const TURN_RIGHT: usize = 1;
pub const FORWARD: usize = 2;

pub const CHANNELS: usize = 11;
pub const WINDOW: usize = 6;
pub const OBS_WIDTH: usize = CHANNELS * WINDOW;

/// Window cells as (steps ahead, steps to the right), in observation order.
pub const WINDOW_OFFSETS: [(i64, i64); WINDOW] = [(1, -1), (1, 0), (1, 1), (0, -1), (0, 0), (0, 1)];

const PLACEMENT_ATTEMPTS: usize = 10_000;
const DECOY_COLOR: u8 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Open,
    Rooms { per_side: usize },
    Keydoor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridConfig {
    pub size: usize,
    pub layout: Layout,
    pub beacons: usize,
    /// Rooms per side of a passable wall overlay drawn on an open layout.
    pub hallucinated_rooms: Option<usize>,
}

impl GridConfig {
    pub fn memory(size: usize) -> Self {
        GridConfig {
            size,
            layout: Layout::Open,
            beacons: 1,
            hallucinated_rooms: None,
        }
    }

    pub fn rooms(size: usize, per_side: usize) -> Self {
        GridConfig {
            layout: Layout::Rooms { per_side },
            ..Self::memory(size)
        }
    }

    pub fn keydoor(size: usize) -> Self {
        GridConfig {
            layout: Layout::Keydoor,
            beacons: 0,
            ..Self::memory(size)
        }
    }

    pub fn with_beacons(self, beacons: usize) -> Self {
        GridConfig { beacons, ..self }
    }

    pub fn max_episode_steps(&self) -> usize {
        4 * self.size * self.size
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(EnvError::Config(msg));
        let n = self.size;
        if !(5..=21).contains(&n) || n % 2 == 0 {
            return bad(format!("grid size must be odd and within 5..=21, got {n}"));
        }
        let fits = |r: usize| r >= 1 && 2 * r - 1 <= n - 2;
        match self.layout {
            Layout::Keydoor => {
                if self.beacons != 0 || self.hallucinated_rooms.is_some() {
                    return bad("key-door grids have no beacons or overlay".into());
                }
                return Ok(());
            }
            Layout::Rooms { per_side } if !fits(per_side) => {
                return bad(format!(
                    "{per_side} rooms per side do not fit in a {n}x{n} grid"
                ));
            }
            _ => {}
        }
        if !(1..=3).contains(&self.beacons) {
            return bad(format!("beacon count must be 1..=3, got {}", self.beacons));
        }
        if let Some(r) = self.hallucinated_rooms {
            if self.layout != Layout::Open {
                return bad("the hallucinated overlay needs an open layout".into());
            }
            if !fits(r) {
                return bad(format!(
                    "{r} overlay rooms per side do not fit in a {n}x{n} grid"
                ));
            }
        }
        Ok(())
    }
}

/// Adds a passable copy of the `rooms(per_side)` wall pattern to an open layout.
pub fn hallucinate_rooms(cfg: &GridConfig, per_side: usize) -> Result<GridConfig> {
    if cfg.layout != Layout::Open {
        return Err(EnvError::Config(format!(
            "hallucinated rooms need an open layout, got {:?}",
            cfg.layout
        )));
    }
    let out = GridConfig {
        hallucinated_rooms: Some(per_side),
        ..*cfg
    };
    out.validate()?;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    Empty,
    Wall,
    Beacon(u8),
    Flag(u8),
    Key,
    Door,
    Goal,
}

impl Cell {
    pub fn channel(self) -> usize {
        match self {
            Cell::Empty => 0,
            Cell::Wall => 1,
            Cell::Beacon(c) => 2 + c as usize,
            Cell::Flag(c) => 5 + c as usize,
            Cell::Key => 8,
            Cell::Door => 9,
            Cell::Goal => 10,
        }
    }

    pub fn glyph(self) -> char {
        match self {
            Cell::Empty => '.',
            Cell::Wall => '#',
            Cell::Beacon(c) => (b'a' + c) as char,
            Cell::Flag(c) => (b'A' + c) as char,
            Cell::Key => 'k',
            Cell::Door => 'D',
            Cell::Goal => 'G',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    fn index(self) -> usize {
        self as usize
    }

    pub fn left(self) -> Heading {
        Self::ALL[(self.index() + 3) % 4]
    }

    pub fn right(self) -> Heading {
        Self::ALL[(self.index() + 1) % 4]
    }

    /// (row, col) displacement of one step forward.
    pub fn delta(self) -> (i64, i64) {
        match self {
            Heading::North => (-1, 0),
            Heading::East => (0, 1),
            Heading::South => (1, 0),
            Heading::West => (0, -1),
        }
    }

    fn glyph(self) -> char {
        ['^', '>', 'v', '<'][self.index()]
    }

    fn letter(self) -> char {
        ['N', 'E', 'S', 'W'][self.index()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pose {
    pub row: usize,
    pub col: usize,
    pub heading: Heading,
}

/// Room extents along one axis as (first coordinate, length), with one wall
/// line between consecutive rooms. Leftover cells go to the first rooms.
pub fn room_spans(size: usize, per_side: usize) -> Vec<(usize, usize)> {
    let free = size - 2 - (per_side - 1);
    let (base, extra) = (free / per_side, free % per_side);
    let mut start = 1;
    (0..per_side)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let span = (start, len);
            start += len + 1;
            span
        })
        .collect()
}

/// Interior wall cells of a `per_side × per_side` room partition, with one
/// door gap in every wall segment between adjacent rooms.
pub fn room_walls(size: usize, per_side: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let spans = room_spans(size, per_side);
    let lines: Vec<usize> = spans[..per_side - 1].iter().map(|(s, l)| s + l).collect();
    let mut walls = vec![false; size * size];
    for &line in &lines {
        for i in 1..size - 1 {
            walls[i * size + line] = true;
            walls[line * size + i] = true;
        }
    }
    for &line in &lines {
        for &(start, len) in &spans {
            let r = rng.gen_range(start..start + len);
            walls[r * size + line] = false;
            let c = rng.gen_range(start..start + len);
            walls[line * size + c] = false;
        }
    }
    walls
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridWorld {
    config: GridConfig,
    seed: u64,
    cells: Vec<Cell>,
    overlay: Vec<bool>,
    pose: Pose,
    target: Option<u8>,
    key_held: bool,
    steps: usize,
    done: bool,
}

impl GridWorld {
    pub fn new(config: GridConfig) -> Result<Self> {
        config.validate()?;
        let mut env = GridWorld {
            config,
            seed: 0,
            cells: Vec::new(),
            overlay: Vec::new(),
            pose: Pose {
                row: 0,
                col: 0,
                heading: Heading::North,
            },
            target: None,
            key_held: false,
            steps: 0,
            done: false,
        };
        env.generate(0)?;
        Ok(env)
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn size(&self) -> usize {
        self.config.size
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.size() + col]
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// Passable wall cells that only appear in observations.
    pub fn overlay(&self) -> &[bool] {
        &self.overlay
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    /// Teleports the agent, e.g. for exhaustive kernel scans.
    pub fn set_pose(&mut self, pose: Pose) {
        self.pose = pose;
    }

    /// Color of the flag that ends the episode successfully.
    pub fn target_color(&self) -> Option<u8> {
        self.target
    }

    pub fn key_held(&self) -> bool {
        self.key_held
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    fn in_bounds(&self, row: i64, col: i64) -> bool {
        let n = self.size() as i64;
        (0..n).contains(&row) && (0..n).contains(&col)
    }

    pub fn blocks(&self, row: usize, col: usize, key_held: bool) -> bool {
        match self.cell(row, col) {
            Cell::Wall => true,
            Cell::Door => !key_held,
            _ => false,
        }
    }

    /// Pose after `action`, ignoring what the destination cell contains.
    pub fn transition(&self, pose: Pose, action: usize, key_held: bool) -> Pose {
        match action {
            TURN_LEFT => Pose {
                heading: pose.heading.left(),
                ..pose
            },
            TURN_RIGHT => Pose {
                heading: pose.heading.right(),
                ..pose
            },
            _ => {
                let (dr, dc) = pose.heading.delta();
                let (r, c) = (pose.row as i64 + dr, pose.col as i64 + dc);
                if self.in_bounds(r, c) && !self.blocks(r as usize, c as usize, key_held) {
                    Pose {
                        row: r as usize,
                        col: c as usize,
                        ..pose
                    }
                } else {
                    pose
                }
            }
        }
    }

    /// Cells visible from `pose` in window order; `None` is off the grid.
    pub fn window(&self, pose: Pose) -> [Option<(usize, usize)>; WINDOW] {
        let (fr, fc) = pose.heading.delta();
        let (rr, rc) = pose.heading.right().delta();
        WINDOW_OFFSETS.map(|(ahead, right)| {
            let r = pose.row as i64 + ahead * fr + right * rr;
            let c = pose.col as i64 + ahead * fc + right * rc;
            self.in_bounds(r, c).then_some((r as usize, c as usize))
        })
    }

    /// Channel of a cell as the agent sees it.
    pub fn seen(&self, row: usize, col: usize) -> usize {
        let cell = self.cell(row, col);
        if cell == Cell::Empty && self.overlay[row * self.size() + col] {
            Cell::Wall.channel()
        } else {
            cell.channel()
        }
    }

    pub fn observe_pose(&self, pose: Pose) -> Observation {
        let mut obs = vec![0.0; OBS_WIDTH];
        for (slot, cell) in self.window(pose).iter().enumerate() {
            let ch = match cell {
                Some((r, c)) => self.seen(*r, *c),
                None => Cell::Wall.channel(),
            };
            obs[slot * CHANNELS + ch] = 1.0;
        }
        obs
    }

    pub fn observe(&self) -> Observation {
        self.observe_pose(self.pose)
    }

    /// Cells reachable from `from` without stepping through flags, goals or
    /// blocking cells; terminal cells are reachable but not expanded.
    pub fn reachable(&self, from: (usize, usize), key_held: bool) -> Vec<bool> {
        let n = self.size();
        let mut seen = vec![false; n * n];
        let mut queue = VecDeque::from([from]);
        seen[from.0 * n + from.1] = true;
        while let Some((r, c)) = queue.pop_front() {
            if (r, c) != from && matches!(self.cell(r, c), Cell::Flag(_) | Cell::Goal) {
                continue;
            }
            for h in Heading::ALL {
                let (dr, dc) = h.delta();
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if !self.in_bounds(nr, nc) {
                    continue;
                }
                let (nr, nc) = (nr as usize, nc as usize);
                if !seen[nr * n + nc] && !self.blocks(nr, nc, key_held) {
                    seen[nr * n + nc] = true;
                    queue.push_back((nr, nc));
                }
            }
        }
        seen
    }

    fn generate(&mut self, seed: u64) -> Result<()> {
        let n = self.size();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut wall_rng = ChaCha8Rng::seed_from_u64(seed);
        wall_rng.set_stream(1);

        let mut base = vec![Cell::Empty; n * n];
        for i in 0..n {
            for j in 0..n {
                if i == 0 || j == 0 || i == n - 1 || j == n - 1 {
                    base[i * n + j] = Cell::Wall;
                }
            }
        }
        self.overlay = vec![false; n * n];
        self.key_held = false;
        self.steps = 0;
        self.done = false;
        self.seed = seed;

        match self.config.layout {
            Layout::Open => {
                let mid = n / 2;
                let beacon_spots = [(1, 1), (n - 2, 1), (mid, 1)];
                let flag_spots = [(1, n - 2), (n - 2, n - 2)];
                let (target, beacons, flags) = self.draw_colors(&mut rng);
                for (spot, color) in beacon_spots.iter().zip(&beacons) {
                    base[spot.0 * n + spot.1] = Cell::Beacon(*color);
                }
                for (spot, color) in flag_spots.iter().zip(&flags) {
                    base[spot.0 * n + spot.1] = Cell::Flag(*color);
                }
                let heading = Heading::ALL[rng.gen_range(0..4)];
                self.cells = base;
                self.target = Some(target);
                self.pose = Pose {
                    row: mid,
                    col: mid,
                    heading,
                };
                if let Some(r) = self.config.hallucinated_rooms {
                    self.overlay = room_walls(n, r, &mut wall_rng);
                }
                Ok(())
            }
            Layout::Rooms { per_side } => {
                let walls = room_walls(n, per_side, &mut wall_rng);
                let spans = room_spans(n, per_side);
                let mut room_cells = Vec::new();
                for &(rs, rl) in &spans {
                    for &(cs, cl) in &spans {
                        for r in rs..rs + rl {
                            for c in cs..cs + cl {
                                room_cells.push((r, c));
                            }
                        }
                    }
                }
                for (i, w) in walls.iter().enumerate() {
                    if *w {
                        base[i] = Cell::Wall;
                    }
                }
                let (target, beacons, flags) = self.draw_colors(&mut rng);
                let k = beacons.len();
                for _ in 0..PLACEMENT_ATTEMPTS {
                    let spots: Vec<(usize, usize)> = room_cells
                        .choose_multiple(&mut rng, k + 3)
                        .copied()
                        .collect();
                    let mut cells = base.clone();
                    for (spot, color) in spots[1..=k].iter().zip(&beacons) {
                        cells[spot.0 * n + spot.1] = Cell::Beacon(*color);
                    }
                    for (spot, color) in spots[k + 1..].iter().zip(&flags) {
                        cells[spot.0 * n + spot.1] = Cell::Flag(*color);
                    }
                    let heading = Heading::ALL[rng.gen_range(0..4)];
                    self.cells = cells;
                    self.target = Some(target);
                    self.pose = Pose {
                        row: spots[0].0,
                        col: spots[0].1,
                        heading,
                    };
                    let reach = self.reachable(spots[0], false);
                    if spots[1..].iter().all(|(r, c)| reach[r * n + c]) {
                        return Ok(());
                    }
                }
                Err(EnvError::Unreachable(PLACEMENT_ATTEMPTS))
            }
            Layout::Keydoor => {
                let split = n / 2;
                let door_row = rng.gen_range(1..n - 1);
                for r in 1..n - 1 {
                    base[r * n + split] = Cell::Wall;
                }
                base[door_row * n + split] = Cell::Door;
                let left: Vec<(usize, usize)> = (1..n - 1)
                    .flat_map(|r| (1..split).map(move |c| (r, c)))
                    .collect();
                let right: Vec<(usize, usize)> = (1..n - 1)
                    .flat_map(|r| (split + 1..n - 1).map(move |c| (r, c)))
                    .collect();
                let picks: Vec<(usize, usize)> =
                    left.choose_multiple(&mut rng, 2).copied().collect();
                let goal = *right.choose(&mut rng).expect("right room is non-empty");
                base[picks[1].0 * n + picks[1].1] = Cell::Key;
                base[goal.0 * n + goal.1] = Cell::Goal;
                let heading = Heading::ALL[rng.gen_range(0..4)];
                self.cells = base;
                self.target = None;
                self.pose = Pose {
                    row: picks[0].0,
                    col: picks[0].1,
                    heading,
                };
                Ok(())
            }
        }
    }

    /// Target flag color, beacon colors and the colors of the two flags.
    ///
    /// With several beacons the target is the majority color among beacons
    /// showing a flag color: two beacons pair the target with a color no flag
    /// has, three beacons show the target twice and the other flag once.
    fn draw_colors(&self, rng: &mut ChaCha8Rng) -> (u8, Vec<u8>, [u8; 2]) {
        let target: u8 = rng.gen_range(0..2);
        let flags = if rng.gen_bool(0.5) { [0, 1] } else { [1, 0] };
        let mut beacons = match self.config.beacons {
            1 => vec![target],
            2 => vec![target, DECOY_COLOR],
            _ => vec![target, target, 1 - target],
        };
        beacons.shuffle(rng);
        (target, beacons, flags)
    }

    /// Plain-text map, one character per cell, preceded by a JSON header.
    pub fn layout_dump(&self) -> String {
        let header = serde_json::json!({ "seed": self.seed, "config": self.config });
        let mut out = header.to_string();
        out.push('\n');
        let n = self.size();
        for r in 0..n {
            for c in 0..n {
                let ch = if (r, c) == (self.pose.row, self.pose.col) {
                    self.pose.heading.glyph()
                } else if self.cell(r, c) == Cell::Empty && self.overlay[r * n + c] {
                    '+'
                } else {
                    self.cell(r, c).glyph()
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}

impl PomdpEnv for GridWorld {
    fn obs_width(&self) -> usize {
        OBS_WIDTH
    }

    fn action_count(&self) -> usize {
        3
    }

    fn max_episode_steps(&self) -> usize {
        self.config.max_episode_steps()
    }

    fn reset(&mut self, seed: u64) -> Observation {
        self.generate(seed)
            .expect("a layout that generated once regenerates for any seed");
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        if action >= 3 {
            return Err(EnvError::InvalidAction { action, count: 3 });
        }
        self.pose = self.transition(self.pose, action, self.key_held);
        self.steps += 1;
        let n = self.size();
        let here = self.pose.row * n + self.pose.col;
        let mut success = false;
        match self.cells[here] {
            Cell::Key => {
                self.key_held = true;
                self.cells[here] = Cell::Empty;
            }
            Cell::Flag(color) => {
                self.done = true;
                success = Some(color) == self.target;
            }
            Cell::Goal => {
                self.done = true;
                success = true;
            }
            _ => {}
        }
        if self.steps >= self.max_episode_steps() {
            self.done = true;
        }
        Ok(Step {
            obs: self.observe(),
            reward: if success { 1.0 } else { 0.0 },
            done: self.done,
            success,
        })
    }

    fn describe(&self) -> String {
        format!(
            "row={} col={} heading={} key={}",
            self.pose.row,
            self.pose.col,
            self.pose.heading.letter(),
            u8::from(self.key_held)
        )
    }
}
