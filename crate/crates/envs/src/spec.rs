use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::grid::{GridConfig, Layout};
use crate::{
    CarFlag, EnvError, GridWorld, MemoryCards, MemoryCardsConfig, Observation, PomdpEnv, Result,
    Step,
};

/// Which environment to build, parsed from names such as `carflag`,
/// `memorycards-p3-t6`, `gv-memory-9x9`, `gv-memory-4rooms-7x7-2beacon`,
/// `gv-memory-13x13-hallucinated` or `gv-keydoor-5x5`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    CarFlag,
    MemoryCards(MemoryCardsConfig),
    Grid(GridConfig),
}

/// Overlay rooms per side used when a hallucinated name gives no count.
pub const DEFAULT_HALLUCINATED_ROOMS: usize = 5;

impl EnvSpec {
    pub fn build(&self) -> Result<Env> {
        Ok(match self {
            EnvSpec::CarFlag => Env::CarFlag(CarFlag::new()),
            EnvSpec::MemoryCards(cfg) => Env::MemoryCards(MemoryCards::new(*cfg)?),
            EnvSpec::Grid(cfg) => Env::Grid(GridWorld::new(*cfg)?),
        })
    }
}

fn parse_size(token: &str) -> Option<usize> {
    let (a, b) = token.split_once('x')?;
    let (a, b) = (a.parse().ok()?, b.parse::<usize>().ok()?);
    (a == b).then_some(a)
}

fn square_root(rooms: usize) -> Option<usize> {
    (1..=rooms).find(|r| r * r == rooms)
}

impl FromStr for EnvSpec {
    type Err = EnvError;

    fn from_str(name: &str) -> Result<Self> {
        let fail = |reason: &str| EnvError::UnknownEnv {
            name: name.to_string(),
            reason: reason.to_string(),
        };
        let lower = name.to_ascii_lowercase();
        let tokens: Vec<&str> = lower.split('-').collect();
        let spec = match tokens.as_slice() {
            ["carflag"] => EnvSpec::CarFlag,
            ["memorycards", rest @ ..] => {
                let mut cfg = MemoryCardsConfig::default();
                for t in rest {
                    let value = |s: &str| {
                        s.parse::<usize>()
                            .map_err(|_| fail("expected -p<pairs> or -t<steps>"))
                    };
                    match t.split_at(1) {
                        ("p", v) => cfg.pairs = value(v)?,
                        ("t", v) => cfg.max_steps = value(v)?,
                        _ => return Err(fail("expected -p<pairs> or -t<steps>")),
                    }
                }
                EnvSpec::MemoryCards(cfg)
            }
            ["gv", "keydoor", size] => EnvSpec::Grid(GridConfig::keydoor(
                parse_size(size).ok_or_else(|| fail("expected NxN size"))?,
            )),
            ["gv", "memory", rest @ ..] => {
                let mut size = None;
                let mut rooms = None;
                let mut beacons = 1;
                let mut hallucinated = None;
                for t in rest {
                    if let Some(n) = parse_size(t) {
                        size = Some(n);
                    } else if let Some(r) = t.strip_suffix("rooms") {
                        let r: usize = r.parse().map_err(|_| fail("expected <count>rooms"))?;
                        rooms = Some(
                            square_root(r)
                                .ok_or_else(|| fail("room count must be a perfect square"))?,
                        );
                    } else if let Some(k) = t.strip_suffix("beacon") {
                        beacons = k.parse().map_err(|_| fail("expected <k>beacon"))?;
                    } else if *t == "hallucinated" {
                        hallucinated = Some(DEFAULT_HALLUCINATED_ROOMS);
                    } else {
                        return Err(fail(&format!("unexpected token {t:?}")));
                    }
                }
                let size = size.ok_or_else(|| fail("missing NxN size"))?;
                let mut cfg = match (rooms, hallucinated) {
                    (Some(r), None) => GridConfig::rooms(size, r),
                    (None, h) => GridConfig {
                        hallucinated_rooms: h,
                        ..GridConfig::memory(size)
                    },
                    (Some(r), Some(_)) => GridConfig {
                        hallucinated_rooms: Some(r),
                        ..GridConfig::memory(size)
                    },
                };
                cfg.beacons = beacons;
                EnvSpec::Grid(cfg)
            }
            _ => {
                return Err(fail(
                    "expected carflag, memorycards[-pP][-tT], gv-memory-..., or gv-keydoor-NxN",
                ))
            }
        };
        match &spec {
            EnvSpec::MemoryCards(cfg) => cfg.validate(),
            EnvSpec::Grid(cfg) => cfg.validate(),
            EnvSpec::CarFlag => Ok(()),
        }
        .map_err(|e| fail(&e.to_string()))?;
        Ok(spec)
    }
}

impl fmt::Display for EnvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvSpec::CarFlag => write!(f, "carflag"),
            EnvSpec::MemoryCards(cfg) => {
                write!(f, "memorycards")?;
                let d = MemoryCardsConfig::default();
                if cfg.pairs != d.pairs {
                    write!(f, "-p{}", cfg.pairs)?;
                }
                if cfg.max_steps != d.max_steps {
                    write!(f, "-t{}", cfg.max_steps)?;
                }
                Ok(())
            }
            EnvSpec::Grid(cfg) => {
                let n = cfg.size;
                match cfg.layout {
                    Layout::Keydoor => return write!(f, "gv-keydoor-{n}x{n}"),
                    Layout::Open => write!(f, "gv-memory-{n}x{n}")?,
                    Layout::Rooms { per_side } => {
                        write!(f, "gv-memory-{}rooms-{n}x{n}", per_side * per_side)?
                    }
                }
                if cfg.beacons != 1 {
                    write!(f, "-{}beacon", cfg.beacons)?;
                }
                match cfg.hallucinated_rooms {
                    Some(DEFAULT_HALLUCINATED_ROOMS) => write!(f, "-hallucinated"),
                    Some(r) => write!(f, "-{}rooms-hallucinated", r * r),
                    None => Ok(()),
                }
            }
        }
    }
}

/// Any environment, as one serializable value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Env {
    CarFlag(CarFlag),
    MemoryCards(MemoryCards),
    Grid(GridWorld),
}

macro_rules! dispatch {
    ($self:ident, $e:ident => $body:expr) => {
        match $self {
            Env::CarFlag($e) => $body,
            Env::MemoryCards($e) => $body,
            Env::Grid($e) => $body,
        }
    };
}

impl PomdpEnv for Env {
    fn obs_width(&self) -> usize {
        dispatch!(self, e => e.obs_width())
    }

    fn action_count(&self) -> usize {
        dispatch!(self, e => e.action_count())
    }

    fn max_episode_steps(&self) -> usize {
        dispatch!(self, e => e.max_episode_steps())
    }

    fn reset(&mut self, seed: u64) -> Observation {
        dispatch!(self, e => e.reset(seed))
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        dispatch!(self, e => e.step(action))
    }

    fn describe(&self) -> String {
        dispatch!(self, e => e.describe())
    }
}
