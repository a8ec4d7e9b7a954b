//! Drive trajectories on the torus `T^d`.
//!
//! Every coordinate follows a linear protocol `phi^i(t) = phi^i_0 + omega_i t`.
//! Angles are carried unreduced through the time evolution and only folded
//! into `[0, 2pi)` when a [`TorusPoint`] is built.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point on the torus with every coordinate reduced to `[0, 2pi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusPoint<const D: usize> {
    coords: [f64; D],
}

/// The two-tone drives live on `T^2`.
pub type Phase = TorusPoint<2>;

impl<const D: usize> TorusPoint<D> {
    pub fn new(coords: [f64; D]) -> Self {
        TorusPoint {
            coords: coords.map(reduce_angle),
        }
    }

    pub fn coords(&self) -> &[f64; D] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        D
    }

    /// The point displaced by `delta` along `axis`, reduced again.
    pub fn shifted(&self, axis: usize, delta: f64) -> Self {
        let mut c = self.coords;
        c[axis] += delta;
        Self::new(c)
    }

    /// Smallest coordinate-wise angular separation, accounting for wrap-around.
    pub fn distance(&self, other: &Self) -> f64 {
        self.coords
            .iter()
            .zip(other.coords.iter())
            .map(|(a, b)| {
                let d = (a - b).rem_euclid(TAU);
                d.min(TAU - d)
            })
            .fold(0.0, f64::max)
    }
}

/// Folds an angle into `[0, 2pi)`.
pub fn reduce_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Position and velocity on a trajectory at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint<const D: usize> {
    pub t: f64,
    pub phi: TorusPoint<D>,
    /// `phi_0 + f(t)` before reduction.
    pub unwrapped: [f64; D],
    pub velocity: [f64; D],
}

/// A smooth curve `t -> phi_t` on `T^2`.
pub trait Trajectory: Sync {
    fn eval(&self, t: f64) -> TrajectoryPoint<2>;

    fn start(&self) -> Phase {
        self.eval(0.0).phi
    }
}

/// Straight line `phi(t) = start + velocity * t` with arbitrary real velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPath {
    pub start: [f64; 2],
    pub velocity: [f64; 2],
}

impl Trajectory for LinearPath {
    fn eval(&self, t: f64) -> TrajectoryPoint<2> {
        let unwrapped = [
            self.start[0] + self.velocity[0] * t,
            self.start[1] + self.velocity[1] * t,
        ];
        TrajectoryPoint {
            t,
            phi: TorusPoint::new(unwrapped),
            unwrapped,
            velocity: self.velocity,
        }
    }
}

/// Two-tone drive with `omega_1 = omega` and `omega_2 = (p/q) omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveProtocol {
    phi0: Phase,
    omega: f64,
    p: u64,
    q: u64,
}

impl DriveProtocol {
    /// Requires `omega > 0` and a ratio `p/q` in lowest terms.
    pub fn new(phi0: Phase, omega: f64, p: u64, q: u64) -> Result<Self> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::validation(format!("omega must be positive, got {omega}")));
        }
        if p == 0 || q == 0 {
            return Err(Error::validation("ratio p/q needs positive integers"));
        }
        if gcd(p, q) != 1 {
            return Err(Error::validation(format!("ratio {p}/{q} is not in lowest terms")));
        }
        Ok(DriveProtocol { phi0, omega, p, q })
    }

    pub fn phi0(&self) -> Phase {
        self.phi0
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn ratio(&self) -> (u64, u64) {
        (self.p, self.q)
    }

    pub fn frequencies(&self) -> [f64; 2] {
        [self.omega, self.omega * self.p as f64 / self.q as f64]
    }

    /// Closing time `2 pi q / omega` of the rational orbit.
    pub fn period(&self) -> f64 {
        TAU * self.q as f64 / self.omega
    }

    pub fn with_phi0(&self, phi0: Phase) -> Self {
        DriveProtocol { phi0, ..*self }
    }

    fn as_path(&self) -> LinearPath {
        LinearPath {
            start: *self.phi0.coords(),
            velocity: self.frequencies(),
        }
    }
}

impl Trajectory for DriveProtocol {
    fn eval(&self, t: f64) -> TrajectoryPoint<2> {
        self.as_path().eval(t)
    }

    fn start(&self) -> Phase {
        self.phi0
    }
}

/// Piecewise-constant frequency schedule: each segment is a two-tone drive
/// that takes over at `start_time`, continuing from wherever the previous
/// segment left the angles.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveSchedule {
    phi0: Phase,
    // (start time, frequencies)
    segments: Vec<(f64, [f64; 2])>,
}

impl DriveSchedule {
    pub fn new(first: DriveProtocol) -> Self {
        DriveSchedule {
            phi0: first.phi0,
            segments: vec![(0.0, first.frequencies())],
        }
    }

    /// Switches to `omega`, `p/q` at `start_time`, which must come after the
    /// previous switch.
    pub fn then(mut self, start_time: f64, omega: f64, p: u64, q: u64) -> Result<Self> {
        let proto = DriveProtocol::new(self.phi0, omega, p, q)?;
        let last = self.segments.last().map(|s| s.0).unwrap_or(0.0);
        if !(start_time > last) {
            return Err(Error::validation(format!(
                "segment start {start_time} must follow previous start {last}"
            )));
        }
        self.segments.push((start_time, proto.frequencies()));
        Ok(self)
    }
}

impl Trajectory for DriveSchedule {
    fn eval(&self, t: f64) -> TrajectoryPoint<2> {
        let mut angle = *self.phi0.coords();
        let mut velocity = self.segments[0].1;
        for (k, &(start, freq)) in self.segments.iter().enumerate() {
            if t < start && k > 0 {
                break;
            }
            let end = self
                .segments
                .get(k + 1)
                .map(|s| s.0)
                .filter(|&e| e < t)
                .unwrap_or(t);
            let span = end - start;
            angle[0] += freq[0] * span;
            angle[1] += freq[1] * span;
            velocity = freq;
        }
        TrajectoryPoint {
            t,
            phi: TorusPoint::new(angle),
            unwrapped: angle,
            velocity,
        }
    }

    fn start(&self) -> Phase {
        self.phi0
    }
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Successive Fibonacci pairs `(F_{n+1}, F_n)` starting from `(2, 1)`.
pub fn fibonacci_ratios(count: usize) -> Result<Vec<(u64, u64)>> {
    if count == 0 {
        return Err(Error::validation("count must be at least 1"));
    }
    let mut out = Vec::with_capacity(count);
    let (mut hi, mut lo) = (2u64, 1u64);
    out.push((hi, lo));
    while out.len() < count {
        let next = hi
            .checked_add(lo)
            .ok_or_else(|| Error::validation(format!("Fibonacci ratio #{} overflows u64", out.len() + 1)))?;
        (hi, lo) = (next, hi);
        out.push((hi, lo));
    }
    Ok(out)
}

/// Initial drive phase of trajectory `index`.
///
/// Generator: ChaCha20 keyed through `SeedableRng::seed_from_u64(seed)`, with
/// the stream id set to `index`. Each coordinate is `2pi * U` where `U` is
/// the standard 53-bit uniform draw on `[0, 1)`, first coordinate first.
pub fn sample_initial_phase(seed: u64, index: u64) -> Phase {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let a: f64 = rng.gen();
    let b: f64 = rng.gen();
    TorusPoint::new([TAU * a, TAU * b])
}

pub fn sample_initial_phases(seed: u64, count: usize) -> Result<Vec<Phase>> {
    if count == 0 {
        return Err(Error::validation("need at least one phase"));
    }
    Ok((0..count as u64)
        .map(|i| sample_initial_phase(seed, i))
        .collect())
}

/// Serializable description of the drive parameters shared by configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveParams {
    pub omega: f64,
    pub p: u64,
    pub q: u64,
}

impl DriveParams {
    pub fn protocol(&self, phi0: Phase) -> Result<DriveProtocol> {
        DriveProtocol::new(phi0, self.omega, self.p, self.q)
    }
}
