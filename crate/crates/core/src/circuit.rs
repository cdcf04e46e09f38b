//! Photon propagation through the on-chip and fibre optics, and detection.
//!
//! Every loss element takes one Bernoulli survival draw per photon. Detectors
//! collect candidate clicks segment by segment; dark counts and dead time are
//! applied once the whole run is known, because dead time needs a global order.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};

use crate::emitter::PhotonSource;
use crate::rng::{self, Purpose};
use crate::{CircuitConfig, DetectorConfig, EmitterConfig, Error, Origin, PhotonPacket, PolConfig, Result, TimeTag};

/// Interference windows extend this many decay constants.
pub const INTERFERENCE_WINDOW_TAUS: f64 = 10.0;

/// A photon after a routing element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutedPhoton {
    pub packet: PhotonPacket,
    pub port: u8,
    pub survived: bool,
}

/// Survival probability after `length_mm` of waveguide with loss `alpha_db_per_mm`.
pub fn attenuate(survival: f64, alpha_db_per_mm: f64, length_mm: f64) -> f64 {
    survival * 10f64.powf(-alpha_db_per_mm * length_mm / 10.0)
}

/// Lossy splitter: survives with `eta_mmi`, then exits port 0 with probability `r_mmi`.
pub fn mmi_split<R: Rng + ?Sized>(packet: PhotonPacket, r_mmi: f64, eta_mmi: f64, rng: &mut R) -> RoutedPhoton {
    let survived = rng.random::<f64>() < eta_mmi;
    let port = if survived && rng.random::<f64>() >= r_mmi { 1 } else { 0 };
    RoutedPhoton { packet, port, survived }
}

/// Mode overlap `|<xi_1|xi_2>|^2` of two exponentially decaying packets.
///
/// Start times are taken as given (delay compensation is the caller's job).
/// Orthogonal polarizations give 0.
pub fn hom_overlap(p1: &PhotonPacket, p2: &PhotonPacket) -> Result<f64> {
    if !(p1.tau_ps > 0.0 && p2.tau_ps > 0.0) {
        return Err(Error::Domain("decay constant must be positive"));
    }
    if p1.polarization != p2.polarization {
        return Ok(0.0);
    }
    let (early, late) = if p1.t0_ps <= p2.t0_ps { (p1, p2) } else { (p2, p1) };
    let dt = (late.t0_ps - early.t0_ps) as f64;
    let dw = 2.0 * PI * (p1.detuning_ghz - p2.detuning_ghz) * 1e-3;
    let m = if p1.tau_ps == p2.tau_ps {
        let x = dw * p1.tau_ps;
        (-dt / p1.tau_ps).exp() / (1.0 + x * x)
    } else {
        let g = 0.5 / p1.tau_ps + 0.5 / p2.tau_ps;
        (-dt / early.tau_ps).exp() / (p1.tau_ps * p2.tau_ps * (g * g + dw * dw))
    };
    Ok(m.clamp(0.0, 1.0))
}

/// Cross-port coincidence probability for one photon in each input of a
/// beamsplitter with reflectivity `r_b` and mode overlap `m`.
pub fn coincidence_probability(r_b: f64, m: f64) -> f64 {
    let t_b = 1.0 - r_b;
    (r_b * r_b + t_b * t_b - 2.0 * r_b * t_b * m).max(0.0)
}

/// Output ports of two photons entering opposite inputs of the fibre splitter.
pub fn fiber_bs_two_photon<R: Rng + ?Sized>(
    _p1: &PhotonPacket,
    _p2: &PhotonPacket,
    r_b: f64,
    m: f64,
    rng: &mut R,
) -> (u8, u8) {
    let t_b = 1.0 - r_b;
    let p_c = coincidence_probability(r_b, m);
    if rng.random::<f64>() < p_c {
        // Both reflected or both transmitted.
        if rng.random::<f64>() * (r_b * r_b + t_b * t_b) < r_b * r_b {
            (0, 1)
        } else {
            (1, 0)
        }
    } else {
        let port = u8::from(rng.random::<bool>());
        (port, port)
    }
}

/// Classical routing of a lone photon: port 0 with probability `r_b`.
pub fn fiber_bs_single<R: Rng + ?Sized>(_p: &PhotonPacket, r_b: f64, rng: &mut R) -> u8 {
    if rng.random::<f64>() < r_b {
        0
    } else {
        1
    }
}

/// Fate of every photon in a run. Signal, re-excitation and stray packets all
/// count as `emitted`; dark counts are tracked separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PhotonLedger {
    pub emitted: u64,
    pub lost_waveguide: u64,
    pub lost_mmi: u64,
    pub lost_efficiency: u64,
    pub lost_dead_time: u64,
    pub detected: u64,
    pub dark_generated: u64,
    pub dark_dead_time: u64,
    pub dark_detected: u64,
}

impl PhotonLedger {
    pub fn merge(&mut self, o: &PhotonLedger) {
        self.emitted += o.emitted;
        self.lost_waveguide += o.lost_waveguide;
        self.lost_mmi += o.lost_mmi;
        self.lost_efficiency += o.lost_efficiency;
        self.lost_dead_time += o.lost_dead_time;
        self.detected += o.detected;
        self.dark_generated += o.dark_generated;
        self.dark_dead_time += o.dark_dead_time;
        self.dark_detected += o.dark_detected;
    }

    /// Every photon and every dark count has exactly one recorded fate.
    pub fn reconciles(&self) -> bool {
        self.emitted
            == self.lost_waveguide + self.lost_mmi + self.lost_efficiency + self.lost_dead_time + self.detected
            && self.dark_generated == self.dark_dead_time + self.dark_detected
    }

    pub fn tags(&self) -> u64 {
        self.detected + self.dark_detected
    }
}

/// One detector channel accumulating candidate clicks.
#[derive(Debug, Clone)]
pub struct Detector {
    cfg: DetectorConfig,
    channel: u8,
    candidates: Vec<(u64, bool)>,
    ledger: PhotonLedger,
}

impl Detector {
    pub fn new(channel: u8, cfg: &DetectorConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg: cfg.clone(), channel, candidates: Vec::new(), ledger: PhotonLedger::default() })
    }

    /// Thin by efficiency and assign a click time: start, plus an emission delay
    /// drawn from the packet's decay, plus Gaussian jitter, plus fixed offset.
    pub fn register<R: Rng + ?Sized>(&mut self, photon: &PhotonPacket, rng: &mut R) {
        if rng.random::<f64>() >= self.cfg.efficiency {
            self.ledger.lost_efficiency += 1;
            return;
        }
        let delay: f64 = Exp1.sample(rng);
        let mut t = photon.t0_ps as f64 + self.cfg.offset_ps as f64 + delay * photon.tau_ps;
        if self.cfg.irf_sigma_ps > 0.0 {
            let n: f64 = StandardNormal.sample(rng);
            t += n * self.cfg.irf_sigma_ps;
        }
        let t = t.round().clamp(0.0, TimeTag::MAX_TIME_PS as f64) as u64;
        self.candidates.push((t, false));
    }

    /// Add dark counts over `[0, duration_ps)`, sort, apply dead time.
    pub fn finish<R: Rng + ?Sized>(mut self, duration_ps: u64, rng: &mut R) -> (Vec<TimeTag>, PhotonLedger) {
        let mean = self.cfg.dark_rate_hz * duration_ps as f64 * 1e-12;
        if mean > 0.0 && duration_ps > 0 {
            let n: f64 = Poisson::new(mean).expect("finite positive mean").sample(rng);
            for _ in 0..n as u64 {
                self.candidates.push((rng.random_range(0..duration_ps), true));
            }
            self.ledger.dark_generated += n as u64;
        }
        self.candidates.sort_unstable();
        let mut tags = Vec::with_capacity(self.candidates.len());
        let mut last: Option<u64> = None;
        for &(t, dark) in &self.candidates {
            let blocked = last.is_some_and(|l| t - l < self.cfg.dead_time_ps);
            match (blocked, dark) {
                (true, false) => self.ledger.lost_dead_time += 1,
                (true, true) => self.ledger.dark_dead_time += 1,
                (false, d) => {
                    if d {
                        self.ledger.dark_detected += 1;
                    } else {
                        self.ledger.detected += 1;
                    }
                    last = Some(t);
                    tags.push(TimeTag::new(self.channel, t));
                }
            }
        }
        (tags, self.ledger)
    }
}

/// Detect a list of photons on one channel.
pub fn detect<R: Rng + ?Sized>(
    photons: &[PhotonPacket],
    channel: u8,
    cfg: &DetectorConfig,
    duration_ps: u64,
    rng: &mut R,
) -> Result<(Vec<TimeTag>, PhotonLedger)> {
    let mut det = Detector::new(channel, cfg)?;
    for p in photons {
        det.register(p, rng);
    }
    let (tags, mut ledger) = det.finish(duration_ps, rng);
    ledger.emitted = photons.len() as u64;
    Ok((tags, ledger))
}

/// Counters of the fibre-splitter pairing step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HomStats {
    /// Windows with one photon in each input that interfered.
    pub pairs: u64,
    /// Sum of the overlaps of those pairs, excluding pairs with CW background.
    pub overlap_sum: f64,
    pub overlap_pairs: u64,
    /// Windows with more than two photons or two in the same input.
    pub classical_windows: u64,
}

impl HomStats {
    /// Mean injected overlap of interfering pairs.
    pub fn mean_overlap(&self) -> f64 {
        if self.overlap_pairs == 0 {
            f64::NAN
        } else {
            self.overlap_sum / self.overlap_pairs as f64
        }
    }
}

/// Delay arm, polarization control and fibre splitter of the HOM setup.
///
/// Photons are fed arm by arm with their on-chip start times; arm 1 is delayed by
/// `delay_ps` (and rotated in the cross configuration). Photons are then grouped
/// into interference windows: consecutive arrivals closer than
/// [`INTERFERENCE_WINDOW_TAUS`] decay constants share a window.
#[derive(Debug, Clone)]
pub struct HomTopology {
    delay_ps: u64,
    pol: PolConfig,
    r_b: f64,
    pending: Vec<(u8, PhotonPacket)>,
    max_tau_ps: f64,
    pub stats: HomStats,
}

impl HomTopology {
    pub fn new(cfg: &CircuitConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            delay_ps: cfg.delay_ps,
            pol: cfg.pol_config,
            r_b: cfg.fiber_bs_ratio,
            pending: Vec::new(),
            max_tau_ps: 0.0,
            stats: HomStats::default(),
        })
    }

    /// Queue a photon that left the MMI through `arm`.
    pub fn push(&mut self, arm: u8, mut packet: PhotonPacket) {
        if arm == 1 {
            packet.t0_ps += self.delay_ps;
            if self.pol == PolConfig::Cross {
                packet.polarization = packet.polarization.rotated();
            }
        }
        self.max_tau_ps = self.max_tau_ps.max(packet.tau_ps);
        self.pending.push((arm, packet));
    }

    /// Route every window that ends before `horizon_ps`, where no later photon can
    /// still join it. Routed photons are appended to `out[port]`.
    pub fn flush<R: Rng + ?Sized>(&mut self, horizon_ps: u64, rng: &mut R, out: &mut [Vec<PhotonPacket>; 2]) {
        self.pending.sort_by_key(|(arm, p)| (p.t0_ps, *arm));
        let mut start = 0;
        let n = self.pending.len();
        while start < n {
            let mut end = start + 1;
            while end < n && joins(&self.pending[end - 1].1, &self.pending[end].1) {
                end += 1;
            }
            // A photon arriving at or after the horizon could still join.
            let reach = self.pending[end - 1].1.t0_ps as f64 + INTERFERENCE_WINDOW_TAUS * self.max_tau_ps;
            if reach >= horizon_ps as f64 {
                break;
            }
            self.route_window(start, end, rng, out);
            start = end;
        }
        self.pending.drain(..start);
    }

    /// Route everything that is left.
    pub fn finish<R: Rng + ?Sized>(&mut self, rng: &mut R, out: &mut [Vec<PhotonPacket>; 2]) {
        self.flush(u64::MAX, rng, out);
    }

    fn route_window<R: Rng + ?Sized>(&mut self, start: usize, end: usize, rng: &mut R, out: &mut [Vec<PhotonPacket>; 2]) {
        let win = &self.pending[start..end];
        if win.len() == 2 && win[0].0 != win[1].0 {
            let (a, b) = (&win[0].1, &win[1].1);
            let cw = a.origin == Origin::StrayCw || b.origin == Origin::StrayCw;
            let m = if a.origin.is_stray() || b.origin.is_stray() { 0.0 } else { hom_overlap(a, b).unwrap_or(0.0) };
            self.stats.pairs += 1;
            if !cw {
                self.stats.overlap_sum += m;
                self.stats.overlap_pairs += 1;
            }
            let (input0, input1) = if win[0].0 == 0 { (a, b) } else { (b, a) };
            let (pa, pb) = fiber_bs_two_photon(input0, input1, self.r_b, m, rng);
            out[pa as usize].push(*input0);
            out[pb as usize].push(*input1);
            return;
        }
        if win.len() > 1 {
            self.stats.classical_windows += 1;
        }
        for (_, p) in win {
            out[fiber_bs_single(p, self.r_b, rng) as usize].push(*p);
        }
    }
}

fn joins(prev: &PhotonPacket, next: &PhotonPacket) -> bool {
    let w = INTERFERENCE_WINDOW_TAUS * prev.tau_ps.max(next.tau_ps);
    ((next.t0_ps - prev.t0_ps) as f64) < w
}

/// Run the fibre-splitter stage on two complete arm streams.
pub fn run_hom_topology<R: Rng + ?Sized>(
    arms: [&[PhotonPacket]; 2],
    cfg: &CircuitConfig,
    rng: &mut R,
) -> Result<([Vec<PhotonPacket>; 2], HomStats)> {
    let mut topo = HomTopology::new(cfg)?;
    for (arm, photons) in arms.iter().enumerate() {
        for p in photons.iter() {
            topo.push(arm as u8, *p);
        }
    }
    let mut out = [Vec::new(), Vec::new()];
    topo.finish(rng, &mut out);
    out[0].sort_by_key(|p| p.t0_ps);
    out[1].sort_by_key(|p| p.t0_ps);
    Ok((out, topo.stats))
}

/// Two-channel tag record of a simulated measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct TagRun {
    pub tags: [Vec<TimeTag>; 2],
    pub ledger: PhotonLedger,
    pub duration_ps: u64,
    pub n_pulses: u64,
    /// Present for HOM runs.
    pub hom: Option<HomStats>,
}

/// Which measurement topology follows the MMI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    /// MMI outputs go straight to the two detectors.
    Hbt,
    /// MMI outputs recombine on the fibre splitter after the delay arm.
    Hom,
}

/// Full pipeline: emitter, waveguide, MMI, optional HOM stage, two detectors.
pub fn simulate_tags(
    topology: Topology,
    emitter: &EmitterConfig,
    circuit: &CircuitConfig,
    detectors: &[DetectorConfig; 2],
    n_pulses: u64,
    seed: u64,
) -> Result<TagRun> {
    let mut source = PhotonSource::new(emitter, circuit, n_pulses, seed)?;
    let mut dets = [Detector::new(0, &detectors[0])?, Detector::new(1, &detectors[1])?];
    let mut topo = HomTopology::new(circuit)?;
    let mut ledger = PhotonLedger::default();
    let wg = attenuate(1.0, circuit.attenuation_db_per_mm, circuit.path_length_mm);
    let mut packets = Vec::new();
    let mut ports: [Vec<PhotonPacket>; 2] = [Vec::new(), Vec::new()];

    while let Some(seg) = source.next_segment(&mut packets) {
        let mut crng = rng::stream(seed, Purpose::Circuit, seg.index);
        ledger.emitted += packets.len() as u64;
        for p in &packets {
            if crng.random::<f64>() >= wg {
                ledger.lost_waveguide += 1;
                continue;
            }
            let routed = mmi_split(*p, circuit.mmi_ratio, circuit.mmi_transmission, &mut crng);
            if !routed.survived {
                ledger.lost_mmi += 1;
                continue;
            }
            match topology {
                Topology::Hbt => ports[routed.port as usize].push(routed.packet),
                Topology::Hom => topo.push(routed.port, routed.packet),
            }
        }
        if topology == Topology::Hom {
            topo.flush(seg.end_ps, &mut crng, &mut ports);
            if seg.index + 1 == source.n_segments() {
                topo.finish(&mut crng, &mut ports);
            }
        }
        for (ch, (det, photons)) in dets.iter_mut().zip(ports.iter_mut()).enumerate() {
            let mut drng = rng::substream(seed, Purpose::Detector, seg.index, ch as u8);
            for p in photons.iter() {
                det.register(p, &mut drng);
            }
            photons.clear();
        }
    }

    let duration_ps = source.duration_ps();
    let mut tags = [Vec::new(), Vec::new()];
    for (ch, det) in dets.into_iter().enumerate() {
        let mut dark = rng::stream(seed, Purpose::Dark, ch as u64);
        let (t, l) = det.finish(duration_ps, &mut dark);
        tags[ch] = t;
        ledger.merge(&l);
    }
    Ok(TagRun {
        tags,
        ledger,
        duration_ps,
        n_pulses,
        hom: (topology == Topology::Hom).then_some(topo.stats),
    })
}
