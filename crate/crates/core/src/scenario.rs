//! Static worlds: walls, named waypoint areas and bounds.
//!
//! Scenario files are line-oriented key-value text. Blank lines and lines
//! starting with `#` are ignored; every other line is `key = values`:
//!
//! ```text
//! name = corridor
//! bounds = -8 -8 8 8           # xmin ymin xmax ymax
//! wall = -1 1 -1 8             # ax ay bx by
//! waypoint = north 0 7.5 0.5   # name cx cy radius
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{Vec2, WallSegment};
use crate::io::{parse_f64, sig17};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Vec2,
    pub max: Vec2,
}

impl Bounds {
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaypointArea {
    pub name: String,
    pub center: Vec2,
    pub radius: f64,
}

impl WaypointArea {
    pub fn contains(&self, p: Vec2) -> bool {
        p.distance(self.center) <= self.radius
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub walls: Vec<WallSegment>,
    pub waypoints: Vec<WaypointArea>,
    pub bounds: Bounds,
}

/// Half width of each corridor of the crossing scenario.
pub const CORRIDOR_HALF_WIDTH: f64 = 1.0;
/// Distance from the crossing centre to the open end of each arm.
pub const CORRIDOR_ARM_END: f64 = 8.0;
pub const CORRIDOR_WAYPOINT_RADIUS: f64 = 0.5;

impl Scenario {
    /// Wall-free plane without waypoints.
    pub fn open() -> Scenario {
        Scenario {
            name: "open".into(),
            walls: Vec::new(),
            waypoints: Vec::new(),
            bounds: Bounds {
                min: Vec2::new(-25.0, -25.0),
                max: Vec2::new(25.0, 25.0),
            },
        }
    }

    /// Two 2 m wide perpendicular corridors crossing at the origin with
    /// 8 m arms and a waypoint area at the end of every arm.
    pub fn corridor() -> Scenario {
        let w = CORRIDOR_HALF_WIDTH;
        let l = CORRIDOR_ARM_END;
        let seg = |ax, ay, bx, by| WallSegment::new(Vec2::new(ax, ay), Vec2::new(bx, by)).unwrap();
        let walls = vec![
            // north arm
            seg(-w, w, -w, l),
            seg(w, w, w, l),
            // south arm
            seg(-w, -w, -w, -l),
            seg(w, -w, w, -l),
            // east arm
            seg(w, w, l, w),
            seg(w, -w, l, -w),
            // west arm
            seg(-w, w, -l, w),
            seg(-w, -w, -l, -w),
        ];
        let c = l - CORRIDOR_WAYPOINT_RADIUS;
        let area = |name: &str, x, y| WaypointArea {
            name: name.into(),
            center: Vec2::new(x, y),
            radius: CORRIDOR_WAYPOINT_RADIUS,
        };
        Scenario {
            name: "corridor".into(),
            walls,
            waypoints: vec![
                area("north", 0.0, c),
                area("east", c, 0.0),
                area("south", 0.0, -c),
                area("west", -c, 0.0),
            ],
            bounds: Bounds {
                min: Vec2::new(-l, -l),
                max: Vec2::new(l, l),
            },
        }
    }

    /// Built-in name (`open`, `corridor`) or a scenario file path.
    pub fn load(spec: &str) -> Result<Scenario> {
        match spec {
            "open" => Ok(Scenario::open()),
            "corridor" => Ok(Scenario::corridor()),
            path => Scenario::read(Path::new(path)),
        }
    }

    pub fn read(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Scenario::parse(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.min.x >= self.bounds.max.x || self.bounds.min.y >= self.bounds.max.y {
            return Err(Error::InvalidParams("empty scenario bounds".into()));
        }
        for wp in &self.waypoints {
            if !self.bounds.contains(wp.center) {
                return Err(Error::InvalidParams(format!(
                    "waypoint `{}` lies outside the scenario bounds",
                    wp.name
                )));
            }
            if !(wp.radius > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "waypoint `{}` needs a positive radius",
                    wp.name
                )));
            }
        }
        for (i, a) in self.waypoints.iter().enumerate() {
            if self.waypoints[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::InvalidParams(format!("duplicate waypoint `{}`", a.name)));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str, source: &str) -> Result<Scenario> {
        let mut name = String::from("custom");
        let mut walls = Vec::new();
        let mut waypoints = Vec::new();
        let mut bounds = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = i + 1;
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::parse(source, lineno, "expected `key = value`"));
            };
            let fields: Vec<&str> = value.split_whitespace().collect();
            let nums = |from: usize, count: usize| -> Result<Vec<f64>> {
                if fields.len() != from + count {
                    return Err(Error::parse(
                        source,
                        lineno,
                        format!("expected {} values, found {}", from + count, fields.len()),
                    ));
                }
                fields[from..]
                    .iter()
                    .map(|f| {
                        parse_f64(f)
                            .filter(|v| v.is_finite())
                            .ok_or_else(|| Error::parse(source, lineno, format!("bad number `{f}`")))
                    })
                    .collect()
            };
            match key.trim() {
                "name" => name = value.trim().to_string(),
                "bounds" => {
                    let v = nums(0, 4)?;
                    bounds = Some(Bounds {
                        min: Vec2::new(v[0], v[1]),
                        max: Vec2::new(v[2], v[3]),
                    });
                }
                "wall" => {
                    let v = nums(0, 4)?;
                    let wall = WallSegment::new(Vec2::new(v[0], v[1]), Vec2::new(v[2], v[3]))
                        .map_err(|e| Error::parse(source, lineno, e.to_string()))?;
                    walls.push(wall);
                }
                "waypoint" => {
                    let v = nums(1, 3)?;
                    waypoints.push(WaypointArea {
                        name: fields[0].to_string(),
                        center: Vec2::new(v[0], v[1]),
                        radius: v[2],
                    });
                }
                other => {
                    return Err(Error::parse(source, lineno, format!("unknown key `{other}`")));
                }
            }
        }
        let bounds = bounds.ok_or_else(|| Error::parse(source, 0, "missing `bounds`"))?;
        let scenario = Scenario {
            name,
            walls,
            waypoints,
            bounds,
        };
        scenario
            .validate()
            .map_err(|e| Error::parse(source, 0, e.to_string()))?;
        Ok(scenario)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "name = {}", self.name);
        let b = &self.bounds;
        let _ = writeln!(
            out,
            "bounds = {} {} {} {}",
            sig17(b.min.x),
            sig17(b.min.y),
            sig17(b.max.x),
            sig17(b.max.y)
        );
        for w in &self.walls {
            let _ = writeln!(
                out,
                "wall = {} {} {} {}",
                sig17(w.a().x),
                sig17(w.a().y),
                sig17(w.b().x),
                sig17(w.b().y)
            );
        }
        for wp in &self.waypoints {
            let _ = writeln!(
                out,
                "waypoint = {} {} {} {}",
                wp.name,
                sig17(wp.center.x),
                sig17(wp.center.y),
                sig17(wp.radius)
            );
        }
        out
    }

    pub fn waypoint(&self, name: &str) -> Option<&WaypointArea> {
        self.waypoints.iter().find(|w| w.name == name)
    }

    /// Waypoint area containing `p`, falling back to the nearest centre.
    pub fn area_of(&self, p: Vec2) -> Option<usize> {
        if let Some(i) = self.waypoints.iter().position(|w| w.contains(p)) {
            return Some(i);
        }
        self.waypoints
            .iter()
            .enumerate()
            .min_by(|a, b| {
                a.1.center
                    .distance(p)
                    .total_cmp(&b.1.center.distance(p))
            })
            .map(|(i, _)| i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corridor_layout() {
        let s = Scenario::corridor();
        s.validate().unwrap();
        assert_eq!(s.walls.len(), 8);
        assert_eq!(s.waypoints.len(), 4);
        // Centre line of every arm is 1 m from the nearest wall.
        for wp in &s.waypoints {
            let d = s
                .walls
                .iter()
                .map(|w| w.distance(wp.center))
                .fold(f64::INFINITY, f64::min);
            assert!((d - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn text_round_trip() {
        let s = Scenario::corridor();
        let back = Scenario::parse(&s.to_text(), "mem").unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn parse_errors_name_line() {
        let text = "bounds = 0 0 1 1\nwall = 0 0 0 0\n";
        let err = Scenario::parse(text, "f.txt").unwrap_err().to_string();
        assert!(err.starts_with("f.txt:2:"), "{err}");

        let text = "bounds = 0 0 1 1\nfoo = 3\n";
        assert!(Scenario::parse(text, "f.txt").unwrap_err().to_string().contains("unknown key"));

        let text = "bounds = 0 0 1 1\nwaypoint = a 5 5 0.5\n";
        assert!(Scenario::parse(text, "f.txt").is_err());
    }

    #[test]
    fn area_lookup() {
        let s = Scenario::corridor();
        assert_eq!(s.area_of(Vec2::new(0.1, 7.4)), Some(0));
        assert_eq!(s.area_of(Vec2::new(5.0, 0.2)), Some(1));
        assert_eq!(Scenario::open().area_of(Vec2::ZERO), None);
    }
}
