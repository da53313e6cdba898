//! Points on the unit sphere and in the unit ball, the local moving frame,
//! and the two point sets used by the solver: the equiangular evaluation
//! grid and the quasi-uniform ring grid that seeds kernel centers.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cartesian point or vector in R³.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3(pub [f64; 3]);

impl Vec3 {
    pub const ZERO: Vec3 = Vec3([0.0; 3]);

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3([x, y, z])
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.0[0]
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.0[1]
    }

    #[inline]
    pub fn z(&self) -> f64 {
        self.0[2]
    }

    #[inline]
    pub fn dot(&self, other: &Vec3) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    #[inline]
    pub fn cross(&self, o: &Vec3) -> Vec3 {
        let [a, b, c] = self.0;
        let [d, e, f] = o.0;
        Vec3([b * f - c * e, c * d - a * f, a * e - b * d])
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        for (a, b) in self.0.iter_mut().zip(o.0) {
            *a += b;
        }
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl SubAssign for Vec3 {
    #[inline]
    fn sub_assign(&mut self, o: Vec3) {
        for (a, b) in self.0.iter_mut().zip(o.0) {
            *a -= b;
        }
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        Vec3([self * v.0[0], self * v.0[1], self * v.0[2]])
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3([-self.0[0], -self.0[1], -self.0[2]])
    }
}

/// A point on the unit sphere given by longitude and polar distance
/// `t = cos(co-latitude)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub lon: f64,
    pub t: f64,
}

impl Direction {
    pub const NORTH_POLE: Direction = Direction { lon: 0.0, t: 1.0 };

    /// Builds a direction, wrapping the longitude into `[0, 2π)` and clamping
    /// `t` into `[-1, 1]`.
    pub fn new(lon: f64, t: f64) -> Self {
        let mut lon = lon.rem_euclid(TAU);
        if lon >= TAU {
            lon = 0.0;
        }
        Direction {
            lon,
            t: t.clamp(-1.0, 1.0),
        }
    }

    /// `sqrt(1 - t²)`, the sine of the co-latitude.
    #[inline]
    pub fn sin_colat(&self) -> f64 {
        ((1.0 - self.t) * (1.0 + self.t)).max(0.0).sqrt()
    }

    #[inline]
    pub fn unit(&self) -> Vec3 {
        to_cartesian(*self, 1.0)
    }
}

/// Cartesian coordinates of the point at radius `r` in direction `d`.
#[inline]
pub fn to_cartesian(d: Direction, r: f64) -> Vec3 {
    let s = d.sin_colat();
    let (sin_l, cos_l) = d.lon.sin_cos();
    Vec3([r * s * cos_l, r * s * sin_l, r * d.t])
}

/// Radius and direction of a non-zero point. At the poles the longitude is 0.
pub fn from_cartesian(p: Vec3) -> Result<(f64, Direction)> {
    let r = p.norm();
    if r == 0.0 || !r.is_finite() {
        return Err(Error::DegeneratePoint);
    }
    let t = (p.z() / r).clamp(-1.0, 1.0);
    let lon = if p.x() == 0.0 && p.y() == 0.0 {
        0.0
    } else {
        p.y().atan2(p.x())
    };
    Ok((r, Direction::new(lon, t)))
}

/// The local orthonormal frame `(ε^r, ε^φ, ε^t)` at a direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MovingFrame {
    pub eps_r: Vec3,
    pub eps_lon: Vec3,
    pub eps_t: Vec3,
}

/// Moving frame away from the poles. `∂_φ ε^r = √(1-t²) ε^φ` and
/// `∂_t ε^r = ε^t / √(1-t²)`.
pub fn moving_frame(d: Direction) -> Result<MovingFrame> {
    if d.t.abs() >= 1.0 {
        return Err(Error::PolarFrame);
    }
    Ok(moving_frame_unchecked(d))
}

/// Same as [`moving_frame`] but evaluates the meridian limit at the poles.
pub(crate) fn moving_frame_unchecked(d: Direction) -> MovingFrame {
    let s = d.sin_colat();
    let (sin_l, cos_l) = d.lon.sin_cos();
    MovingFrame {
        eps_r: Vec3([s * cos_l, s * sin_l, d.t]),
        eps_lon: Vec3([-sin_l, cos_l, 0.0]),
        eps_t: Vec3([-d.t * cos_l, -d.t * sin_l, s]),
    }
}

/// A point of the open unit ball, stored in Cartesian coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallPoint(Vec3);

impl BallPoint {
    pub const ORIGIN: BallPoint = BallPoint(Vec3::ZERO);

    pub fn new(x: Vec3) -> Result<Self> {
        let h = x.norm();
        if !(h < 1.0) || !x.is_finite() {
            return Err(Error::OutsideBall(h));
        }
        Ok(BallPoint(x))
    }

    pub fn from_polar(h: f64, dir: Direction) -> Result<Self> {
        if !(0.0..1.0).contains(&h) {
            return Err(Error::OutsideBall(h));
        }
        Ok(BallPoint(to_cartesian(dir, h)))
    }

    #[inline]
    pub fn cartesian(&self) -> Vec3 {
        self.0
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.0.norm()
    }

    /// Direction of the center; `None` at the origin.
    pub fn dir(&self) -> Option<Direction> {
        from_cartesian(self.0).ok().map(|(_, d)| d)
    }

    /// The point with the same direction and magnitude `h²`, i.e. `|x| x`.
    #[inline]
    pub fn squared_scale(&self) -> BallPoint {
        BallPoint(self.h() * self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridKind {
    DriscollHealy { n_lat: usize, n_lon: usize },
    Reuter { gamma: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGrid {
    pub kind: GridKind,
    pub points: Vec<Direction>,
}

impl SurfaceGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Closed equiangular grid: co-latitudes `iπ/(n_lat-1)` including both poles,
/// longitudes `2πj/n_lon`. Points are ordered latitude-outer.
pub fn driscoll_healy(n_lat: usize, n_lon: usize) -> Result<SurfaceGrid> {
    if n_lat < 2 || n_lon < 1 {
        return Err(Error::InvalidArgument(format!(
            "Driscoll-Healy grid needs n_lat >= 2 and n_lon >= 1, got {n_lat}x{n_lon}"
        )));
    }
    let mut points = Vec::with_capacity(n_lat * n_lon);
    for i in 0..n_lat {
        let theta = i as f64 * PI / (n_lat - 1) as f64;
        let t = if i == 0 {
            1.0
        } else if i == n_lat - 1 {
            -1.0
        } else {
            theta.cos()
        };
        for j in 0..n_lon {
            let lon = TAU * j as f64 / n_lon as f64;
            points.push(Direction { lon, t });
        }
    }
    Ok(SurfaceGrid {
        kind: GridKind::DriscollHealy { n_lat, n_lon },
        points,
    })
}

/// Reuter grid: both poles plus `gamma - 1` latitude rings at `θ_i = iπ/γ`,
/// ring `i` carrying `⌊2π / arccos((cos Δθ - cos²θ_i)/sin²θ_i)⌋` points at
/// longitudes `(j - ½)·2π/γ_i`.
pub fn reuter(gamma: usize) -> Result<SurfaceGrid> {
    if gamma < 1 {
        return Err(Error::InvalidArgument("Reuter gamma must be >= 1".into()));
    }
    let dtheta = PI / gamma as f64;
    let mut points = vec![Direction::NORTH_POLE];
    for i in 1..gamma {
        let theta = i as f64 * dtheta;
        let (st, ct) = theta.sin_cos();
        let arg = ((dtheta.cos() - ct * ct) / (st * st)).clamp(-1.0, 1.0);
        let count = (TAU / arg.acos()).floor().max(1.0) as usize;
        for j in 1..=count {
            let lon = (j as f64 - 0.5) * TAU / count as f64;
            points.push(Direction { lon, t: ct });
        }
    }
    points.push(Direction { lon: 0.0, t: -1.0 });
    Ok(SurfaceGrid {
        kind: GridKind::Reuter { gamma },
        points,
    })
}

/// Smallest Reuter parameter whose grid holds at least `min_points` points.
pub fn reuter_gamma_for(min_points: usize) -> usize {
    let mut gamma = 1;
    while reuter(gamma).map(|g| g.len()).unwrap_or(0) < min_points {
        gamma += 1;
    }
    gamma
}

/// Default seed grid size for kernel centers.
pub const DEFAULT_SEED_POINTS: usize = 123;
