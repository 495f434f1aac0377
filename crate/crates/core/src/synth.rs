//! Parametric generator of labeled Y-cycle telemetry.
//!
//! A cycle is planned as an ordered list of segments (approach travel, dig,
//! reverse, travel to the truck, dump, return), each with a duration and a
//! kinematic envelope, then synthesized at 50 Hz with band-limited noise.
//! Driver profiles vary speeds, timing jitter and the chance of irregular
//! cycles (a low-proficiency driver sometimes reverses and digs a second
//! time). Channel amplitudes are synthetic conventions; after per-channel
//! normalization only their structure matters.
//!
//! Signed velocity integrates to (approximately) zero over a cycle: the
//! machine ends near where it started.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{Label, LabeledSeries, Provenance, TelemetryFrame, FRAME_DT};
use crate::seed::rng_for;

/// Reference cycle length that the envelope constants below are tuned for.
const REFERENCE_CYCLE_S: f64 = 28.0;

/// Driving style and skill of one operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverProfile {
    pub name: String,
    /// 0..1; scales peak speeds and accelerations.
    pub aggressiveness: f64,
    /// 0..1; probability of clean cycles (no double dig).
    pub proficiency: f64,
    /// Nominal cycle duration before jitter, seconds.
    pub base_cycle_duration_s: f64,
    /// Fractional per-segment duration jitter.
    pub duration_jitter: f64,
}

impl DriverProfile {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("aggressiveness", self.aggressiveness),
            ("proficiency", self.proficiency),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} {v} outside [0, 1]")));
            }
        }
        if self.base_cycle_duration_s <= 0.0 || self.duration_jitter < 0.0 {
            return Err(Error::Config("invalid duration parameters".into()));
        }
        Ok(())
    }
}

/// Heap and truck positions for one cycle, metres of travel per leg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleGeometry {
    pub heap_distance_m: f64,
    pub truck_distance_m: f64,
}

impl Default for CycleGeometry {
    fn default() -> Self {
        CycleGeometry {
            heap_distance_m: 7.0,
            truck_distance_m: 9.0,
        }
    }
}

/// Kinematic envelope of one planned segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SegmentKind {
    /// Trapezoidal velocity profile covering a fixed distance.
    Travel {
        v_peak: f64,
        ramp_s: f64,
        /// +1 forward, -1 reverse.
        direction: f64,
        loaded: bool,
    },
    /// Bucket fills against the heap; drivetrain pressure spikes.
    Dig,
    /// Boom lifts and the bucket empties over the truck.
    Dump,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub label: Label,
    pub duration_s: f64,
    pub kind: SegmentKind,
}

/// An ordered segment plan for one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyclePlan {
    pub segments: Vec<Segment>,
}

impl CyclePlan {
    pub fn duration_s(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_s).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.iter().any(|s| s.duration_s <= 0.0) {
            return Err(Error::Config("segment durations must be positive".into()));
        }
        Ok(())
    }
}

// Envelope constants (bar, m/s). Synthetic conventions, documented in the
// telemetry format description.
const BUCKET_EMPTY: f64 = 18.0;
const BUCKET_LOADED: f64 = 85.0;
const BUCKET_DIG_PEAK: f64 = 175.0;
const BOOM_BASE: f64 = 25.0;
const BOOM_DIG_LIFT: f64 = 45.0;
const BOOM_DUMP_PEAK: f64 = 120.0;
const DRIVE_IDLE: f64 = 10.0;
const DRIVE_DIG: f64 = 150.0;
const DIG_CRAWL_V: f64 = 0.2;
const DOUBLE_DIG_REVERSE_M: f64 = 1.8;

/// Per-channel noise sigma as a fraction of the envelope amplitude.
const NOISE_FRAC: f64 = 0.05;
/// AR(1) pole of the band-limited noise.
const NOISE_RHO: f64 = 0.85;

/// Mean displacement of the dig crawl, compensated on the following reverse
/// leg so cycles stay closed.
fn dig_displacement(duration_s: f64) -> f64 {
    DIG_CRAWL_V * (2.0 / std::f64::consts::PI) * duration_s
}

/// Plans the segment sequence for one cycle.
pub fn plan_cycle(
    profile: &DriverProfile,
    geometry: &CycleGeometry,
    rng: &mut ChaCha8Rng,
) -> Result<CyclePlan> {
    profile.validate()?;
    if geometry.heap_distance_m <= 0.0 || geometry.truck_distance_m <= 0.0 {
        return Err(Error::Input("cycle distances must be positive".into()));
    }
    let scale = profile.base_cycle_duration_s / REFERENCE_CYCLE_S;
    let jitter = |rng: &mut ChaCha8Rng| -> f64 {
        1.0 + profile.duration_jitter * rng.gen_range(-1.0..1.0)
    };

    let v_base = 1.7 + 0.9 * profile.aggressiveness;
    let accel = 0.9 + 0.6 * profile.aggressiveness;
    let d_heap = geometry.heap_distance_m * scale;
    let d_truck = geometry.truck_distance_m * scale;

    let travel = |distance: f64, direction: f64, loaded: bool, rng: &mut ChaCha8Rng| -> Segment {
        let v_pk = (v_base * jitter(rng)).min((0.9 * distance * accel).sqrt());
        let ramp = v_pk / accel;
        Segment {
            label: Label::Travel,
            duration_s: distance / v_pk + ramp,
            kind: SegmentKind::Travel {
                v_peak: v_pk,
                ramp_s: ramp,
                direction,
                loaded,
            },
        }
    };
    let dig = |duration: f64| Segment {
        label: Label::Loading,
        duration_s: duration,
        kind: SegmentKind::Dig,
    };
    let dump = |duration: f64| Segment {
        label: Label::Unloading,
        duration_s: duration,
        kind: SegmentKind::Dump,
    };

    let mut segments = Vec::with_capacity(8);
    // forward displacement accrued by dig crawls, repaid on the next reverse
    let mut crawl_debt = 0.0;

    segments.push(travel(d_heap, 1.0, false, rng));
    let dig_s = 3.2 * scale * jitter(rng);
    segments.push(dig(dig_s));
    crawl_debt += dig_displacement(dig_s);

    if rng.gen::<f64>() < (1.0 - profile.proficiency) * 0.7 {
        // small reversing process, then into the heap again
        segments.push(travel(DOUBLE_DIG_REVERSE_M + crawl_debt, -1.0, true, rng));
        crawl_debt = 0.0;
        segments.push(travel(DOUBLE_DIG_REVERSE_M, 1.0, true, rng));
        let second_dig_s = 1.9 * scale * jitter(rng);
        segments.push(dig(second_dig_s));
        crawl_debt += dig_displacement(second_dig_s);
    }

    segments.push(travel(d_heap + crawl_debt, -1.0, true, rng));
    segments.push(travel(d_truck, 1.0, true, rng));
    segments.push(dump(2.2 * scale * jitter(rng)));
    segments.push(travel(d_truck, -1.0, false, rng));

    let plan = CyclePlan { segments };
    plan.validate()?;
    Ok(plan)
}

struct NoiseState {
    value: f64,
    sigma: f64,
}

impl NoiseState {
    fn next(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        // Box-Muller from two uniforms
        let u1: f64 = rng.gen_range(1e-12..1.0);
        let u2: f64 = rng.gen::<f64>();
        let white = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        self.value =
            NOISE_RHO * self.value + self.sigma * (1.0 - NOISE_RHO * NOISE_RHO).sqrt() * white;
        self.value
    }
}

/// Synthesizes one labeled 50 Hz recording from a profile and geometry.
/// Deterministic for a fixed seed.
pub fn generate_cycle(
    profile: &DriverProfile,
    geometry: &CycleGeometry,
    material_density: f64,
    seed: u64,
) -> Result<LabeledSeries> {
    let mut rng = rng_for(seed, "cycle-plan", 0);
    let plan = plan_cycle(profile, geometry, &mut rng)?;
    synthesize(&plan, profile, material_density, seed)
}

/// Renders a plan into frames. Split out so tests can drive explicit plans.
pub fn synthesize(
    plan: &CyclePlan,
    profile: &DriverProfile,
    material_density: f64,
    seed: u64,
) -> Result<LabeledSeries> {
    plan.validate()?;
    if material_density <= 0.0 {
        return Err(Error::Input("material density must be positive".into()));
    }
    let mut noise_rng = rng_for(seed, "cycle-noise", 0);
    let bucket_loaded = BUCKET_LOADED * material_density;
    let bucket_peak = BUCKET_DIG_PEAK * material_density;

    let mut noise = [
        NoiseState { value: 0.0, sigma: NOISE_FRAC * bucket_peak },
        NoiseState { value: 0.0, sigma: 0.03 * 2.5 },
        NoiseState { value: 0.0, sigma: 0.0 }, // joystick: discrete, no noise
        NoiseState { value: 0.0, sigma: NOISE_FRAC * DRIVE_DIG },
        NoiseState { value: 0.0, sigma: NOISE_FRAC * BOOM_DUMP_PEAK },
    ];

    let mut frames = Vec::new();
    let mut labels = Vec::new();
    // bucket level carried across segments
    let mut carry = BUCKET_EMPTY;
    let mut index = 0usize;

    for segment in &plan.segments {
        let steps = (segment.duration_s / FRAME_DT).round().max(1.0) as usize;
        let seg_start_carry = carry;
        for s in 0..steps {
            let p = s as f64 / steps as f64;
            let (mut bucket, velocity, joystick, drive, boom);
            match segment.kind {
                SegmentKind::Travel {
                    v_peak,
                    ramp_s,
                    direction,
                    loaded,
                } => {
                    let t = p * segment.duration_s;
                    let v = trapezoid(t, segment.duration_s, v_peak, ramp_s);
                    velocity = direction * v;
                    joystick = direction;
                    bucket = if loaded { bucket_loaded } else { BUCKET_EMPTY };
                    let a = trapezoid_accel(t, segment.duration_s, v_peak, ramp_s);
                    drive = 15.0 + 45.0 * (a.abs() / 1.2) + 12.0 * (v / 2.5);
                    boom = BOOM_BASE;
                }
                SegmentKind::Dig => {
                    let hump = (std::f64::consts::PI * p).sin();
                    let roughness =
                        8.0 * (std::f64::consts::TAU * 3.5 * p * segment.duration_s).sin() * p;
                    bucket = seg_start_carry
                        + (bucket_loaded - seg_start_carry) * p
                        + (bucket_peak - bucket_loaded) * hump * hump
                        + roughness;
                    velocity = DIG_CRAWL_V * hump;
                    joystick = 1.0;
                    drive = DRIVE_IDLE + (DRIVE_DIG - DRIVE_IDLE) * hump.sqrt();
                    boom = BOOM_BASE + BOOM_DIG_LIFT * smoothstep((p - 0.7) / 0.3);
                    if s == steps - 1 {
                        carry = bucket_loaded;
                    }
                }
                SegmentKind::Dump => {
                    let lift = (std::f64::consts::PI * p).sin();
                    boom = BOOM_BASE + (BOOM_DUMP_PEAK - BOOM_BASE) * lift * lift.abs().sqrt();
                    bucket = seg_start_carry
                        + (BUCKET_EMPTY - seg_start_carry) * smoothstep((p - 0.3) / 0.5);
                    velocity = 0.0;
                    joystick = 0.0;
                    drive = DRIVE_IDLE;
                    if s == steps - 1 {
                        carry = BUCKET_EMPTY;
                    }
                }
            }
            bucket = bucket.max(0.0);
            frames.push(TelemetryFrame {
                t: index as f64 * FRAME_DT,
                bucket_dp: bucket + noise[0].next(&mut noise_rng),
                velocity: velocity + noise[1].next(&mut noise_rng),
                joystick_dir: joystick,
                drive_dp: (drive + noise[3].next(&mut noise_rng)).max(0.0),
                boom_dp: (boom + noise[4].next(&mut noise_rng)).max(0.0),
            });
            labels.push(segment.label);
            index += 1;
        }
    }

    let series = LabeledSeries {
        frames,
        labels,
        provenance: Provenance {
            driver: profile.name.clone(),
            session: 0,
            force_train: false,
        },
    };
    series.validate()?;
    Ok(series)
}

fn trapezoid(t: f64, total: f64, v_peak: f64, ramp: f64) -> f64 {
    if t < ramp {
        v_peak * t / ramp
    } else if t > total - ramp {
        (v_peak * (total - t) / ramp).max(0.0)
    } else {
        v_peak
    }
}

fn trapezoid_accel(t: f64, total: f64, v_peak: f64, ramp: f64) -> f64 {
    if t < ramp {
        v_peak / ramp
    } else if t > total - ramp {
        -v_peak / ramp
    } else {
        0.0
    }
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// One line of the dataset roster: a driver, how many cycles they recorded,
/// and whether those recordings are forced into the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub profile: DriverProfile,
    pub cycles: usize,
    pub force_train: bool,
    /// Scales bucket pressure amplitudes (wet material is denser).
    pub material_density: f64,
}

/// The default roster: 40 cycles from an experienced test engineer, 30 from
/// an aggressive development engineer, 20 from a badly calibrated machine
/// (training only), 29 from a senior manager. 119 cycles in total.
pub fn default_roster() -> Vec<RosterEntry> {
    let profile = |name: &str, agg: f64, prof: f64| DriverProfile {
        name: name.to_string(),
        aggressiveness: agg,
        proficiency: prof,
        base_cycle_duration_s: REFERENCE_CYCLE_S,
        duration_jitter: 0.12,
    };
    vec![
        RosterEntry {
            profile: profile("test_engineer", 0.5, 0.95),
            cycles: 40,
            force_train: false,
            material_density: 1.0,
        },
        RosterEntry {
            profile: profile("aggressive_engineer", 0.9, 0.8),
            cycles: 30,
            force_train: false,
            material_density: 1.0,
        },
        RosterEntry {
            profile: profile("uncalibrated_machine", 0.55, 0.65),
            cycles: 20,
            force_train: true,
            material_density: 1.1,
        },
        RosterEntry {
            profile: profile("senior_manager", 0.3, 0.9),
            cycles: 29,
            force_train: false,
            material_density: 1.0,
        },
    ]
}

/// Generates every cycle of a roster. Per-cycle seeds derive from the master
/// seed and the global cycle index, so the result is independent of
/// generation order.
pub fn generate_dataset(roster: &[RosterEntry], seed: u64) -> Result<Vec<LabeledSeries>> {
    if roster.iter().any(|r| r.cycles == 0) {
        return Err(Error::Config("roster cycle counts must be positive".into()));
    }
    let mut out = Vec::new();
    let mut global = 0u64;
    for entry in roster {
        entry.profile.validate()?;
        for session in 0..entry.cycles {
            let mut geo_rng = rng_for(seed, "cycle-geometry", global);
            let geometry = CycleGeometry {
                heap_distance_m: 7.0 * geo_rng.gen_range(0.8..1.25),
                truck_distance_m: 9.0 * geo_rng.gen_range(0.8..1.25),
            };
            let cycle_seed = crate::seed::derive_seed(seed, "cycle", global);
            let mut series = generate_cycle(
                &entry.profile,
                &geometry,
                entry.material_density,
                cycle_seed,
            )?;
            series.provenance.session = session as u32;
            series.provenance.force_train = entry.force_train;
            out.push(series);
            global += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean_profile() -> DriverProfile {
        DriverProfile {
            name: "clean".into(),
            aggressiveness: 0.5,
            proficiency: 1.0,
            base_cycle_duration_s: REFERENCE_CYCLE_S,
            duration_jitter: 0.0,
        }
    }

    #[test]
    fn clean_cycle_has_six_segments_and_is_deterministic() {
        let profile = clean_profile();
        let geometry = CycleGeometry::default();
        let mut rng = rng_for(1, "t", 0);
        let plan = plan_cycle(&profile, &geometry, &mut rng).unwrap();
        assert_eq!(plan.segments.len(), 6);
        let labels: Vec<Label> = plan.segments.iter().map(|s| s.label).collect();
        assert_eq!(
            labels,
            vec![
                Label::Travel,
                Label::Loading,
                Label::Travel,
                Label::Travel,
                Label::Unloading,
                Label::Travel
            ]
        );
        let a = generate_cycle(&profile, &geometry, 1.0, 5).unwrap();
        let b = generate_cycle(&profile, &geometry, 1.0, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn low_proficiency_produces_double_digs() {
        let mut profile = clean_profile();
        profile.proficiency = 0.3;
        let geometry = CycleGeometry::default();
        let mut with_double = 0;
        for i in 0..40 {
            let mut rng = rng_for(100 + i, "t", 0);
            let plan = plan_cycle(&profile, &geometry, &mut rng).unwrap();
            let digs = plan
                .segments
                .iter()
                .filter(|s| s.label == Label::Loading)
                .count();
            if digs == 2 {
                with_double += 1;
            }
        }
        assert!(with_double > 5, "double digs: {with_double}/40");
    }

    #[test]
    fn generated_series_passes_frame_invariants() {
        let series =
            generate_cycle(&clean_profile(), &CycleGeometry::default(), 1.0, 3).unwrap();
        series.validate().unwrap();
        assert!(series.len() > 500);
    }

    #[test]
    fn velocity_integrates_to_a_closed_trajectory() {
        for seed in [2, 9, 41] {
            let series =
                generate_cycle(&clean_profile(), &CycleGeometry::default(), 1.0, seed).unwrap();
            let disp: f64 = series.frames.iter().map(|f| f.velocity * FRAME_DT).sum();
            assert!(disp.abs() < 1.0, "seed {seed}: displacement {disp}");
        }
    }

    #[test]
    fn labels_are_consistent_with_envelopes() {
        let series =
            generate_cycle(&clean_profile(), &CycleGeometry::default(), 1.0, 7).unwrap();
        let mut sums = [[0.0f64; 2]; 3]; // [label][|v|, bucket]
        let mut counts = [0usize; 3];
        for (f, l) in series.frames.iter().zip(series.labels.iter()) {
            sums[l.index()][0] += f.velocity.abs();
            sums[l.index()][1] += f.bucket_dp;
            counts[l.index()] += 1;
        }
        let mean = |label: usize, ch: usize| sums[label][ch] / counts[label] as f64;
        assert!(counts.iter().all(|&c| c > 0));
        assert!(mean(1, 0) < mean(0, 0), "loading slower than travel");
        assert!(mean(1, 1) > mean(0, 1), "loading bucket pressure higher");
    }

    #[test]
    fn default_roster_counts_and_tags() {
        let roster = default_roster();
        let total: usize = roster.iter().map(|r| r.cycles).sum();
        assert_eq!(total, 119);
        let forced: usize = roster
            .iter()
            .filter(|r| r.force_train)
            .map(|r| r.cycles)
            .sum();
        assert_eq!(forced, 20);
    }

    #[test]
    fn dataset_is_deterministic_and_matches_class_skew() {
        let roster = default_roster();
        let a = generate_dataset(&roster, 20260501).unwrap();
        let b = generate_dataset(&roster, 20260501).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 119);
        assert_eq!(a.iter().filter(|c| c.provenance.force_train).count(), 20);

        let mut time = [0.0f64; 3];
        for series in &a {
            let t = series.time_per_label();
            for k in 0..3 {
                time[k] += t[k];
            }
        }
        let total: f64 = time.iter().sum();
        let loading = time[1] / total * 100.0;
        let unloading = time[2] / total * 100.0;
        assert!(
            (loading - 11.62).abs() < 2.0,
            "loading share {loading:.2}% vs 11.62 +- 2"
        );
        assert!(
            (unloading - 7.86).abs() < 2.0,
            "unloading share {unloading:.2}% vs 7.86 +- 2"
        );
    }

    #[test]
    fn denser_material_raises_bucket_amplitudes() {
        let profile = clean_profile();
        let geometry = CycleGeometry::default();
        let dry = generate_cycle(&profile, &geometry, 1.0, 11).unwrap();
        let wet = generate_cycle(&profile, &geometry, 1.3, 11).unwrap();
        let peak = |s: &LabeledSeries| {
            s.frames
                .iter()
                .map(|f| f.bucket_dp)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        assert!(peak(&wet) > peak(&dry) * 1.15);
    }
}
