//! Three-state telegraph blinking: ON <-> OFF_A and ON <-> OFF_B.

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::{BlinkRates, Error, Result};

const PS_PER_US: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlinkLevel {
    On,
    OffA,
    OffB,
}

/// Blinking level and how long it has been occupied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlinkState {
    pub level: BlinkLevel,
    /// Time spent in `level` so far, ps.
    pub since_ps: f64,
}

/// Two-exponential bunching envelope `1 + a1 exp(-t/tau1) + a2 exp(-t/tau2)`
/// of the ON-state autocorrelation, with the matching on-fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BunchingShape {
    pub on_fraction: f64,
    pub a1: f64,
    pub tau1_us: f64,
    pub a2: f64,
    pub tau2_us: f64,
}

impl BunchingShape {
    pub fn envelope(&self, t_us: f64) -> f64 {
        let t = t_us.abs();
        let term = |a: f64, tau: f64| if a == 0.0 { 0.0 } else { a * (-t / tau).exp() };
        1.0 + term(self.a1, self.tau1_us) + term(self.a2, self.tau2_us)
    }
}

impl BlinkRates {
    /// Total rate out of `level`, 1/µs.
    pub fn exit_rate(&self, level: BlinkLevel) -> f64 {
        match level {
            BlinkLevel::On => self.k_off_a + self.k_off_b,
            BlinkLevel::OffA => self.k_on_a,
            BlinkLevel::OffB => self.k_on_b,
        }
    }

    /// Stationary occupation of (ON, OFF_A, OFF_B).
    pub fn stationary(&self) -> [f64; 3] {
        let ratio = |off: f64, on: f64| if off == 0.0 { 0.0 } else { off / on };
        let ra = ratio(self.k_off_a, self.k_on_a);
        let rb = ratio(self.k_off_b, self.k_on_b);
        let on = 1.0 / (1.0 + ra + rb);
        [on, on * ra, on * rb]
    }

    pub fn on_fraction(&self) -> f64 {
        self.stationary()[0]
    }

    /// Bunching envelope produced by these rates (eigen-decomposition of the chain).
    pub fn bunching(&self) -> BunchingShape {
        let (x, y, u, v) = (self.k_off_a, self.k_on_a, self.k_off_b, self.k_on_b);
        let on = self.on_fraction();
        let one_state = |off: f64, back: f64| BunchingShape {
            on_fraction: on,
            a1: off / back,
            tau1_us: 1.0 / (off + back),
            a2: 0.0,
            tau2_us: f64::INFINITY,
        };
        match (x > 0.0, u > 0.0) {
            (false, false) => BunchingShape { on_fraction: 1.0, a1: 0.0, tau1_us: f64::INFINITY, a2: 0.0, tau2_us: f64::INFINITY },
            (true, false) => one_state(x, y),
            (false, true) => one_state(u, v),
            (true, true) => {
                let s = x + y + u + v;
                let p = x * v + u * y + y * v;
                let root = (s * s - 4.0 * p).max(0.0).sqrt();
                let (l1, l2) = (0.5 * (s + root), 0.5 * (s - root));
                let e1 = (x + u) / on;
                let e2 = ((x + u) * (x + u) + x * y + u * v) / on;
                if (l1 - l2).abs() <= 1e-12 * l1 {
                    return BunchingShape { on_fraction: on, a1: e1 / l1, tau1_us: 1.0 / l1, a2: 0.0, tau2_us: f64::INFINITY };
                }
                let c1 = (e2 - l2 * e1) / (l1 * (l1 - l2));
                let c2 = (e1 * l1 - e2) / (l2 * (l1 - l2));
                BunchingShape { on_fraction: on, a1: c1, tau1_us: 1.0 / l1, a2: c2, tau2_us: 1.0 / l2 }
            }
        }
    }

    /// Rates whose ON autocorrelation has on-fraction `beta`, decay times
    /// `tau1_us`/`tau2_us` and a fraction `split` of the total bunching amplitude
    /// `1/beta - 1` in the first component.
    pub fn from_bunching(beta: f64, tau1_us: f64, tau2_us: f64, split: f64) -> Result<BlinkRates> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::Domain("on-fraction must lie in (0, 1]"));
        }
        if !(tau1_us > 0.0 && tau2_us > 0.0 && (0.0..=1.0).contains(&split)) {
            return Err(Error::Domain("bunching times must be positive and split in [0, 1]"));
        }
        let total = 1.0 / beta - 1.0;
        if total == 0.0 {
            return Ok(BlinkRates::NONE);
        }
        let (c1, c2) = (split * total, (1.0 - split) * total);
        let (l1, l2) = (1.0 / tau1_us, 1.0 / tau2_us);
        if c2 == 0.0 || c1 == 0.0 {
            // One OFF state: amplitude off/on, decay rate off + on.
            let (c, l) = if c2 == 0.0 { (c1, l1) } else { (c2, l2) };
            let k_on = l / (1.0 + c);
            return Ok(BlinkRates { k_on_a: k_on, k_off_a: c * k_on, ..BlinkRates::NONE });
        }
        let s = l1 + l2;
        let p = l1 * l2;
        let d1 = beta * (c1 * l1 + c2 * l2);
        let d2 = beta * (c1 * l1 * l1 + c2 * l2 * l2);
        let e = d2 - d1 * d1;
        let sum_on = s - d1;
        let prod_on = e + p - d1 * sum_on;
        let disc = sum_on * sum_on - 4.0 * prod_on;
        if disc < 0.0 || prod_on <= 0.0 {
            return Err(Error::Domain("no non-negative three-state rates reproduce this bunching"));
        }
        let root = disc.sqrt();
        let roots = [0.5 * (sum_on - root), 0.5 * (sum_on + root)];
        for (y, v) in [(roots[0], roots[1]), (roots[1], roots[0])] {
            let u = if (v - y).abs() > 1e-15 * sum_on { (e - d1 * y) / (v - y) } else { 0.5 * d1 };
            let x = d1 - u;
            if x >= 0.0 && u >= 0.0 && y > 0.0 && v > 0.0 {
                return Ok(BlinkRates { k_on_a: y, k_off_a: x, k_on_b: v, k_off_b: u });
            }
        }
        Err(Error::Domain("no non-negative three-state rates reproduce this bunching"))
    }
}

/// Draw the level entered when leaving `level`.
pub(crate) fn next_level<R: Rng + ?Sized>(level: BlinkLevel, rates: &BlinkRates, rng: &mut R) -> BlinkLevel {
    match level {
        BlinkLevel::OffA | BlinkLevel::OffB => BlinkLevel::On,
        BlinkLevel::On => {
            let total = rates.k_off_a + rates.k_off_b;
            if rng.random::<f64>() * total < rates.k_off_a {
                BlinkLevel::OffA
            } else {
                BlinkLevel::OffB
            }
        }
    }
}

/// Holding time in `level`, ps; infinite when the level is absorbing.
pub(crate) fn holding_time<R: Rng + ?Sized>(level: BlinkLevel, rates: &BlinkRates, rng: &mut R) -> f64 {
    let rate = rates.exit_rate(level);
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    let e: f64 = Exp1.sample(rng);
    e / rate * PS_PER_US
}

pub(crate) fn stationary_level<R: Rng + ?Sized>(rates: &BlinkRates, rng: &mut R) -> BlinkLevel {
    let [on, a, _] = rates.stationary();
    let u: f64 = rng.random();
    if u < on {
        BlinkLevel::On
    } else if u < on + a {
        BlinkLevel::OffA
    } else {
        BlinkLevel::OffB
    }
}

/// Advance the blinking chain by `dt_ps` with exact exponential waiting times.
pub fn step_blinking<R: Rng + ?Sized>(state: BlinkState, dt_ps: f64, rates: &BlinkRates, rng: &mut R) -> BlinkState {
    let mut level = state.level;
    let mut left = dt_ps;
    let mut age = state.since_ps;
    loop {
        let hold = holding_time(level, rates, rng);
        if hold > left {
            return BlinkState { level, since_ps: age + left };
        }
        left -= hold;
        level = next_level(level, rates, rng);
        age = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    #[test]
    fn inversion_round_trips() {
        for &(beta, t1, t2, split) in &[(0.508, 65.0, 125.0, 0.5), (0.487, 65.0, 125.0, 0.5), (0.3, 10.0, 400.0, 0.2), (0.9, 5.0, 6.0, 0.7)] {
            let rates = BlinkRates::from_bunching(beta, t1, t2, split).unwrap();
            rates.validate().unwrap();
            let shape = rates.bunching();
            assert!((shape.on_fraction - beta).abs() < 1e-12);
            let (fast, slow) = if shape.tau1_us < shape.tau2_us { ((shape.a1, shape.tau1_us), (shape.a2, shape.tau2_us)) } else { ((shape.a2, shape.tau2_us), (shape.a1, shape.tau1_us)) };
            let total = 1.0 / beta - 1.0;
            assert!((fast.1 - t1.min(t2)).abs() < 1e-9 * t1, "{shape:?}");
            assert!((slow.1 - t1.max(t2)).abs() < 1e-9 * t2);
            let want_fast = if t1 < t2 { split } else { 1.0 - split } * total;
            assert!((fast.0 - want_fast).abs() < 1e-9, "{shape:?}");
            assert!((fast.0 + slow.0 - total).abs() < 1e-9);
        }
    }

    #[test]
    fn amplitudes_sum_to_inverse_on_fraction() {
        let rates = BlinkRates { k_on_a: 0.02, k_off_a: 0.01, k_on_b: 0.005, k_off_b: 0.003 };
        let b = rates.bunching();
        assert!((1.0 + b.a1 + b.a2 - 1.0 / b.on_fraction).abs() < 1e-12);
    }

    #[test]
    fn single_off_state_and_no_blinking() {
        let r = BlinkRates::from_bunching(1.0, 65.0, 125.0, 0.5).unwrap();
        assert_eq!(r, BlinkRates::NONE);
        let r = BlinkRates::from_bunching(0.5, 65.0, 125.0, 1.0).unwrap();
        let b = r.bunching();
        assert!((b.on_fraction - 0.5).abs() < 1e-12 && (b.tau1_us - 65.0).abs() < 1e-9);
        assert!(BlinkRates::from_bunching(0.0, 1.0, 2.0, 0.5).is_err());
    }

    #[test]
    fn zero_rates_freeze_state() {
        let mut rng = stream(1, Purpose::Test, 0);
        let s = BlinkState { level: BlinkLevel::OffB, since_ps: 5.0 };
        let t = step_blinking(s, 1e12, &BlinkRates::NONE, &mut rng);
        assert_eq!(t.level, BlinkLevel::OffB);
        assert_eq!(t.since_ps, 1e12 + 5.0);
    }

    #[test]
    fn huge_off_rate_switches_off() {
        let mut rng = stream(2, Purpose::Test, 0);
        let rates = BlinkRates { k_on_a: 1e-9, k_off_a: 1e9, ..BlinkRates::NONE };
        let off = (0..1000)
            .filter(|_| step_blinking(BlinkState { level: BlinkLevel::On, since_ps: 0.0 }, 1e3, &rates, &mut rng).level != BlinkLevel::On)
            .count();
        assert_eq!(off, 1000);
    }
}
