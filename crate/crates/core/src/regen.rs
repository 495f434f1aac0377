//! Regeneration-potential analysis for a hydrostatic drivetrain without
//! accumulators.
//!
//! A longitudinal point-mass model runs over a piecewise-constant-
//! acceleration velocity profile. During deceleration the kinetic energy,
//! less rolling losses over the braking distance, can be routed through the
//! traction motor working as a pump into the implement circuit; the chain is
//! motor (0.8) x mechanical (0.98) x implement pump (0.8) by default, each
//! stage toggleable. Baseline energy is the positive traction work of the
//! cycle without regeneration; the efficiency gain is regenerated energy
//! over that baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One constant-acceleration stretch of the velocity profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSegment {
    pub duration_s: f64,
    pub v_start_mps: f64,
    pub v_end_mps: f64,
    /// Material in the bucket during this segment.
    pub loaded: bool,
    /// External push force the drivetrain works against (heap penetration
    /// while digging), newtons.
    pub push_force_n: f64,
}

impl ProfileSegment {
    pub fn distance_m(&self) -> f64 {
        0.5 * (self.v_start_mps + self.v_end_mps) * self.duration_s
    }
}

/// Vehicle, environment and chain parameters plus the velocity profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegenScenario {
    pub vehicle_mass_kg: f64,
    pub material_mass_kg: f64,
    pub rolling_friction_mu: f64,
    pub pump_loss_coeff: f64,
    pub motor_loss_coeff: f64,
    pub mechanical_loss_coeff: f64,
    pub gravity_mps2: f64,
    /// Stage toggles; disabling a stage removes its coefficient from the
    /// regeneration chain (for auditing the chain's composition).
    pub enable_motor_stage: bool,
    pub enable_mechanical_stage: bool,
    pub enable_pump_stage: bool,
    pub profile: Vec<ProfileSegment>,
}

impl Default for RegenScenario {
    fn default() -> Self {
        RegenScenario {
            vehicle_mass_kg: 10_000.0,
            material_mass_kg: 4_000.0,
            rolling_friction_mu: 0.05,
            pump_loss_coeff: 0.8,
            motor_loss_coeff: 0.8,
            mechanical_loss_coeff: 0.98,
            gravity_mps2: 9.81,
            enable_motor_stage: true,
            enable_mechanical_stage: true,
            enable_pump_stage: true,
            profile: representative_profile(2.78),
        }
    }
}

impl RegenScenario {
    /// Product of the enabled regeneration stages (0.6272 with defaults).
    pub fn chain_efficiency(&self) -> f64 {
        let mut eta = 1.0;
        if self.enable_motor_stage {
            eta *= self.motor_loss_coeff;
        }
        if self.enable_mechanical_stage {
            eta *= self.mechanical_loss_coeff;
        }
        if self.enable_pump_stage {
            eta *= self.pump_loss_coeff;
        }
        eta
    }

    pub fn validate(&self) -> Result<()> {
        if self.vehicle_mass_kg <= 0.0 || self.material_mass_kg < 0.0 {
            return Err(Error::Input("masses must be positive".into()));
        }
        for (name, c) in [
            ("pump", self.pump_loss_coeff),
            ("motor", self.motor_loss_coeff),
            ("mechanical", self.mechanical_loss_coeff),
        ] {
            if !(0.0..=1.0).contains(&c) || c == 0.0 {
                return Err(Error::Input(format!(
                    "{name} loss coefficient {c} outside (0, 1]"
                )));
            }
        }
        if self.rolling_friction_mu < 0.0 {
            return Err(Error::Input("rolling friction must be non-negative".into()));
        }
        for (i, seg) in self.profile.iter().enumerate() {
            if seg.duration_s <= 0.0 {
                return Err(Error::Input(format!("segment {i} duration not positive")));
            }
            if seg.v_start_mps < 0.0 || seg.v_end_mps < 0.0 {
                return Err(Error::Input(format!("segment {i} has negative speed")));
            }
        }
        for i in 1..self.profile.len() {
            let prev = self.profile[i - 1].v_end_mps;
            let next = self.profile[i].v_start_mps;
            if (prev - next).abs() > 1e-9 {
                return Err(Error::Input(format!(
                    "speed discontinuity between segments {} and {}: {prev} vs {next}",
                    i - 1,
                    i
                )));
            }
        }
        Ok(())
    }
}

/// One deceleration event in the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecelEvent {
    pub segment: usize,
    pub onset_speed_mps: f64,
    pub mass_kg: f64,
    /// Kinetic energy released over the segment, joules.
    pub kinetic_j: f64,
    /// Kinetic energy left after rolling losses, before the chain.
    pub recoverable_j: f64,
    pub regenerated_j: f64,
}

/// Cycle energy accounting.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyLedger {
    /// Positive traction work per segment, joules.
    pub segment_traction_j: Vec<f64>,
    pub rolling_loss_j: f64,
    pub decel_events: Vec<DecelEvent>,
    pub regenerated_j: f64,
    /// Total traction work without regeneration.
    pub baseline_j: f64,
    /// regenerated / baseline; 0 when the baseline is 0.
    pub efficiency_gain: f64,
}

/// Runs the point-mass model over the scenario's profile.
pub fn simulate_cycle(scenario: &RegenScenario) -> Result<EnergyLedger> {
    scenario.validate()?;
    let chain = scenario.chain_efficiency();
    let g = scenario.gravity_mps2;
    let mu = scenario.rolling_friction_mu;

    let mut ledger = EnergyLedger::default();
    for (i, seg) in scenario.profile.iter().enumerate() {
        let mass = scenario.vehicle_mass_kg + if seg.loaded { scenario.material_mass_kg } else { 0.0 };
        let d = seg.distance_m();
        let rolling = mu * mass * g * d;
        let push = seg.push_force_n * d;
        let delta_ke = 0.5 * mass * (seg.v_end_mps.powi(2) - seg.v_start_mps.powi(2));

        ledger.rolling_loss_j += rolling;
        let traction;
        if delta_ke > 0.0 {
            // acceleration: supply the kinetic energy plus losses
            traction = delta_ke + rolling + push;
        } else if delta_ke < 0.0 {
            let released = -delta_ke;
            let recoverable = (released - rolling).max(0.0);
            if recoverable > 0.0 {
                let regenerated = recoverable * chain;
                ledger.decel_events.push(DecelEvent {
                    segment: i,
                    onset_speed_mps: seg.v_start_mps,
                    mass_kg: mass,
                    kinetic_j: released,
                    recoverable_j: recoverable,
                    regenerated_j: regenerated,
                });
                ledger.regenerated_j += regenerated;
                traction = push;
            } else {
                // rolling alone overwhelms the deceleration; the drivetrain
                // must keep pushing to follow the profile
                ledger.decel_events.push(DecelEvent {
                    segment: i,
                    onset_speed_mps: seg.v_start_mps,
                    mass_kg: mass,
                    kinetic_j: released,
                    recoverable_j: 0.0,
                    regenerated_j: 0.0,
                });
                traction = (rolling - released) + push;
            }
        } else {
            // constant speed (possibly zero)
            traction = rolling + push;
        }
        ledger.segment_traction_j.push(traction);
        ledger.baseline_j += traction;
    }

    ledger.efficiency_gain = if ledger.baseline_j > 0.0 {
        ledger.regenerated_j / ledger.baseline_j
    } else {
        0.0
    };
    Ok(ledger)
}

/// The documented representative cycle: roughly 20 s, an empty leg to the
/// heap and a loaded leg to the truck, two main deceleration phases with the
/// given onset speed, and a crowding dig at crawl speed working against a
/// 150 kN penetration force.
pub fn representative_profile(onset_speed_mps: f64) -> Vec<ProfileSegment> {
    let v = onset_speed_mps;
    let seg = |duration, v0, v1, loaded, push| ProfileSegment {
        duration_s: duration,
        v_start_mps: v0,
        v_end_mps: v1,
        loaded,
        push_force_n: push,
    };
    vec![
        seg(1.5, 0.0, v, false, 0.0),        // accelerate toward the heap
        seg(3.5, v, v, false, 0.0),          // cruise empty
        seg(1.5, v, 0.0, false, 0.0),        // decel 1: empty
        seg(0.3, 0.0, 0.5, false, 150e3),    // crowd into the heap
        seg(2.4, 0.5, 0.5, false, 150e3),    // dig crawl under push force
        seg(0.3, 0.5, 0.0, false, 0.0),      // crawl stop; bucket now full
        seg(1.5, 0.0, v, true, 0.0),         // accelerate toward the truck
        seg(3.5, v, v, true, 0.0),           // cruise loaded
        seg(1.5, v, 0.0, true, 0.0),         // decel 2: loaded
        seg(2.0, 0.0, 0.0, true, 0.0),       // dump over the truck bed
    ]
}

/// One cell of the parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mu: f64,
    pub onset_speed_mps: f64,
    pub material_mass_kg: f64,
    pub ledger: EnergyLedger,
}

/// Full factorial sweep over friction, deceleration-onset speed and material
/// mass, rebuilding the representative profile for each speed.
pub fn sweep(
    base: &RegenScenario,
    mu_values: &[f64],
    speed_values: &[f64],
    material_masses: &[f64],
) -> Result<Vec<SweepRow>> {
    if mu_values.is_empty() || speed_values.is_empty() || material_masses.is_empty() {
        return Err(Error::Input("sweep value lists must be non-empty".into()));
    }
    let mut rows = Vec::with_capacity(mu_values.len() * speed_values.len() * material_masses.len());
    for &mu in mu_values {
        for &speed in speed_values {
            for &mat in material_masses {
                let scenario = RegenScenario {
                    rolling_friction_mu: mu,
                    material_mass_kg: mat,
                    profile: representative_profile(speed),
                    ..base.clone()
                };
                rows.push(SweepRow {
                    mu,
                    onset_speed_mps: speed,
                    material_mass_kg: mat,
                    ledger: simulate_cycle(&scenario)?,
                });
            }
        }
    }
    Ok(rows)
}

/// Renders sweep rows as a tab-separated table with a header line.
pub fn render_sweep_table(rows: &[SweepRow]) -> String {
    let mut out =
        String::from("mu\tonset_speed_mps\tmaterial_mass_kg\tregenerated_j\tbaseline_j\tgain\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{:.1}\t{:.1}\t{:.6}\n",
            r.mu,
            r.onset_speed_mps,
            r.material_mass_kg,
            r.ledger.regenerated_j,
            r.ledger.baseline_j,
            r.ledger.efficiency_gain
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_profile_regenerates_nothing() {
        let scenario = RegenScenario {
            profile: vec![ProfileSegment {
                duration_s: 20.0,
                v_start_mps: 0.0,
                v_end_mps: 0.0,
                loaded: false,
                push_force_n: 0.0,
            }],
            ..RegenScenario::default()
        };
        let ledger = simulate_cycle(&scenario).unwrap();
        assert_eq!(ledger.regenerated_j, 0.0);
        assert_eq!(ledger.efficiency_gain, 0.0);
    }

    #[test]
    fn loaded_decel_kinetic_energy_matches_hand_arithmetic() {
        // 10 t + 4 t at 2.78 m/s: 0.5 * 14000 * 2.78^2 = 54098.8 J
        let scenario = RegenScenario::default();
        let ledger = simulate_cycle(&scenario).unwrap();
        let loaded_decel = ledger
            .decel_events
            .iter()
            .find(|e| e.mass_kg == 14_000.0 && e.onset_speed_mps == 2.78)
            .expect("loaded decel event");
        assert!((loaded_decel.kinetic_j - 54_098.8).abs() < 1e-9);
        // the chain is 0.8 * 0.98 * 0.8 = 0.6272
        assert!((scenario.chain_efficiency() - 0.6272).abs() < 1e-12);
        assert!(loaded_decel.regenerated_j <= loaded_decel.kinetic_j * 0.6272 + 1e-9);
    }

    #[test]
    fn high_friction_defeats_regeneration() {
        let scenario = RegenScenario {
            rolling_friction_mu: 0.3,
            ..RegenScenario::default()
        };
        let ledger = simulate_cycle(&scenario).unwrap();
        assert!(
            ledger.regenerated_j < 1.0,
            "regenerated {}",
            ledger.regenerated_j
        );
    }

    #[test]
    fn representative_cycle_gain_brackets_the_expected_range() {
        let ledger = simulate_cycle(&RegenScenario::default()).unwrap();
        let gain = ledger.efficiency_gain;
        assert!(
            (0.05..=0.12).contains(&gain),
            "gain {:.4} outside [0.05, 0.12]",
            gain
        );
    }

    #[test]
    fn energy_conservation_per_decel_event() {
        for mu in [0.01, 0.05, 0.3] {
            let scenario = RegenScenario {
                rolling_friction_mu: mu,
                ..RegenScenario::default()
            };
            let ledger = simulate_cycle(&scenario).unwrap();
            for e in &ledger.decel_events {
                assert!(e.regenerated_j <= e.kinetic_j + 1e-9);
                assert!(e.recoverable_j <= e.kinetic_j + 1e-9);
            }
        }
    }

    #[test]
    fn gain_monotone_in_friction_and_speed() {
        let base = RegenScenario::default();
        let rows = sweep(&base, &[0.01, 0.05, 0.3], &[1.5, 2.78, 3.5], &[4000.0]).unwrap();
        assert_eq!(rows.len(), 9);
        // non-increasing in mu for fixed speed
        for &speed in &[1.5, 2.78, 3.5] {
            let gains: Vec<f64> = [0.01, 0.05, 0.3]
                .iter()
                .map(|&mu| {
                    rows.iter()
                        .find(|r| r.mu == mu && r.onset_speed_mps == speed)
                        .unwrap()
                        .ledger
                        .efficiency_gain
                })
                .collect();
            assert!(gains[0] >= gains[1] && gains[1] >= gains[2], "{gains:?}");
        }
        // non-decreasing in onset speed for fixed mu
        for &mu in &[0.01, 0.05] {
            let gains: Vec<f64> = [1.5, 2.78, 3.5]
                .iter()
                .map(|&s| {
                    rows.iter()
                        .find(|r| r.mu == mu && r.onset_speed_mps == s)
                        .unwrap()
                        .ledger
                        .efficiency_gain
                })
                .collect();
            assert!(gains[0] <= gains[1] && gains[1] <= gains[2], "{gains:?}");
        }
    }

    #[test]
    fn discontinuous_profile_rejected() {
        let mut scenario = RegenScenario::default();
        scenario.profile[1].v_start_mps += 1.0;
        assert!(matches!(simulate_cycle(&scenario), Err(Error::Input(_))));
    }

    #[test]
    fn sweep_table_lists_all_friction_rows() {
        let rows = sweep(
            &RegenScenario::default(),
            &[0.01, 0.05, 0.3],
            &[2.78],
            &[4000.0],
        )
        .unwrap();
        let table = render_sweep_table(&rows);
        for mu in ["0.01", "0.05", "0.3"] {
            assert!(table.lines().any(|l| l.starts_with(mu)), "missing {mu} row");
        }
    }
}
