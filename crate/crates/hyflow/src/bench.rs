//! Built-in benchmark models.

use crate::diag::FrontResult;
use crate::dsl::load_dsl;
use crate::json_model::parse_json_automaton;
use crate::model::Model;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Dsl(&'static str),
    Json(&'static str),
}

#[derive(Clone, Copy, Debug)]
pub struct BenchmarkEntry {
    pub name: &'static str,
    pub source: Source,
    /// Integrate with the fixed step `dt` instead of adaptive steps.
    pub fixed_step: bool,
    /// The dynamics are a documented stand-in with the stated numbers of
    /// locations and variables, not the original model.
    pub reconstruction: bool,
    pub summary: &'static str,
}

impl BenchmarkEntry {
    pub fn text(&self) -> &'static str {
        match self.source {
            Source::Dsl(t) | Source::Json(t) => t,
        }
    }

    pub fn load(&self) -> FrontResult<Model> {
        let mut m = match self.source {
            Source::Dsl(t) => load_dsl(t)?,
            Source::Json(t) => parse_json_automaton(t)?,
        };
        m.cfg.fixed_step = self.fixed_step;
        Ok(m)
    }
}

const fn entry(name: &'static str, source: Source, summary: &'static str) -> BenchmarkEntry {
    BenchmarkEntry { name, source, fixed_step: false, reconstruction: false, summary }
}

pub const REGISTRY: &[BenchmarkEntry] = &[
    entry("brusselator", Source::Dsl(include_str!("../models/brusselator.hs")), "1 location, 2 variables, t = 15"),
    entry("vanderpol", Source::Dsl(include_str!("../models/vanderpol.hs")), "1 location, 2 variables, t = 6"),
    BenchmarkEntry {
        fixed_step: true,
        ..entry("lorenz", Source::Dsl(include_str!("../models/lorenz.hs")), "1 location, 3 variables, t = 1, fixed step 0.02")
    },
    BenchmarkEntry {
        reconstruction: true,
        ..entry("watertank", Source::Json(include_str!("../models/watertank.json")), "2 locations, 5 variables, t = 30")
    },
    BenchmarkEntry {
        reconstruction: true,
        ..entry("hybrid3d", Source::Json(include_str!("../models/hybrid3d.json")), "2 locations, 3 variables, t = 2")
    },
    entry("pendulum", Source::Dsl(include_str!("../models/pendulum.hs")), "1 location, 3 variables, t = 3.8, nonlinear guard"),
    BenchmarkEntry {
        reconstruction: true,
        ..entry("diode", Source::Json(include_str!("../models/diode.json")), "3 locations, 2 variables, t = 15")
    },
    entry("windy_ball", Source::Dsl(include_str!("../models/windy_ball.hs")), "bouncing ball with time-varying wind, t = 13"),
    entry("car", Source::Dsl(include_str!("../models/car.hs")), "steered car, t = 30"),
    entry("sinusoidal_floor", Source::Dsl(include_str!("../models/sinusoidal_floor.hs")), "ball on a sinusoidal floor, first 3 bounces"),
    entry("wolfgram", Source::Json(include_str!("../models/wolfgram.json")), "2 locations, polynomial jump condition, t = 1"),
    entry("bouncing_ball", Source::Dsl(include_str!("../models/bouncing_ball.hs")), "classical bouncing ball, t = 8"),
    entry("thermostat", Source::Json(include_str!("../models/thermostat.json")), "2 locations, t = 15"),
];

/// Models used by tests and examples but not part of `bench`.
pub const FIXTURES: &[BenchmarkEntry] = &[
    entry("graze", Source::Dsl(include_str!("../models/graze.hs")), "trajectories touching a guard tangentially"),
    entry("graze_miss", Source::Dsl(include_str!("../models/graze_miss.hs")), "trajectories passing just above a guard"),
];

pub fn find(name: &str) -> Option<&'static BenchmarkEntry> {
    REGISTRY.iter().chain(FIXTURES).find(|e| e.name == name)
}
