//! Architectural and technology parameters.
//!
//! The technology functions are kept parametric: every function is a small
//! closed form over the coefficients stored in [`ArchParams`], so a whole
//! technology node can be described in a single JSON file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Routing direction of a wire or of a metal layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchParams {
    /// Number of tiles on the chip.
    pub n_tiles: u32,
    /// Area of all endpoints of one tile, in gate equivalents.
    pub endpoint_area_ge: f64,
    /// Tile height divided by tile width.
    pub tile_aspect_ratio: f64,
    pub frequency_hz: f64,
    /// Bandwidth of one router-to-router link in bits per cycle.
    pub link_bandwidth: u32,
    /// mm² per gate equivalent.
    pub ge_area_coeff: f64,
    pub h_layer_pitches_nm: Vec<f64>,
    pub v_layer_pitches_nm: Vec<f64>,
    /// W per mm² of logic-dominated area.
    pub logic_power_coeff: f64,
    /// W per mm² of wire-dominated area.
    pub wire_power_coeff: f64,
    /// Delay of a buffered wire in s per mm.
    pub wire_delay_coeff: f64,
    pub wires_per_bit: f64,
    pub wire_overhead: u32,
    /// `(a2, a1, a0)` of the router area polynomial in the total port count.
    pub router_area_coeffs: [f64; 3],
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(field, format!("must be a positive finite number, got {v}")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::param(field, format!("must be a non-negative finite number, got {v}")))
    }
}

impl ArchParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_tiles == 0 {
            return Err(Error::param("n_tiles", "must be positive"));
        }
        positive("endpoint_area_ge", self.endpoint_area_ge)?;
        positive("tile_aspect_ratio", self.tile_aspect_ratio)?;
        positive("frequency_hz", self.frequency_hz)?;
        if self.link_bandwidth == 0 {
            return Err(Error::param("link_bandwidth", "must be positive"));
        }
        positive("ge_area_coeff", self.ge_area_coeff)?;
        for (field, pitches) in [
            ("h_layer_pitches_nm", &self.h_layer_pitches_nm),
            ("v_layer_pitches_nm", &self.v_layer_pitches_nm),
        ] {
            if pitches.is_empty() {
                return Err(Error::param(field, "needs at least one metal layer"));
            }
            for &p in pitches.iter() {
                positive(field, p)?;
            }
        }
        non_negative("logic_power_coeff", self.logic_power_coeff)?;
        non_negative("wire_power_coeff", self.wire_power_coeff)?;
        positive("wire_delay_coeff", self.wire_delay_coeff)?;
        positive("wires_per_bit", self.wires_per_bit)?;
        for c in self.router_area_coeffs {
            non_negative("router_area_coeffs", c)?;
        }
        Ok(())
    }

    /// Parses and validates a JSON document. Unknown fields are rejected.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let arch: ArchParams = serde_json::from_str(s)
            .map_err(|e| Error::param("arch", e.to_string()))?;
        arch.validate()?;
        Ok(arch)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::param("arch", format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// Same parameters with a different tile count.
    pub fn with_tiles(&self, n_tiles: u32) -> Self {
        ArchParams {
            n_tiles,
            ..self.clone()
        }
    }

    pub fn ge_to_mm2(&self, ge: f64) -> f64 {
        ge * self.ge_area_coeff
    }

    fn pitches(&self, dir: Direction) -> &[f64] {
        match dir {
            Direction::Horizontal => &self.h_layer_pitches_nm,
            Direction::Vertical => &self.v_layer_pitches_nm,
        }
    }

    /// Wires per nm of channel width over all layers of one direction.
    pub fn wire_density_per_nm(&self, dir: Direction) -> f64 {
        self.pitches(dir).iter().map(|p| 1.0 / p).sum()
    }

    /// Channel width in mm needed for `wire_count` parallel wires.
    pub fn wires_to_mm(&self, dir: Direction, wire_count: u64) -> f64 {
        if wire_count == 0 {
            return 0.0;
        }
        wire_count as f64 * 1e-6 / self.wire_density_per_nm(dir)
    }

    /// Number of wires needed to build one link of the given bandwidth.
    pub fn bw_to_wires(&self, bandwidth: u32) -> Result<u64> {
        if bandwidth == 0 {
            return Err(Error::param("bandwidth", "must be positive"));
        }
        let wires = (bandwidth as f64 * self.wires_per_bit).ceil() as u64;
        Ok(wires + self.wire_overhead as u64)
    }

    /// Wires of one link at the configured link bandwidth.
    pub fn link_wires(&self) -> u64 {
        // link_bandwidth > 0 is checked by validate()
        self.bw_to_wires(self.link_bandwidth.max(1))
            .expect("positive bandwidth")
    }

    /// Router area in GE for `manager_ports` + `subordinate_ports` ports.
    pub fn router_area(
        &self,
        manager_ports: u32,
        subordinate_ports: u32,
        bandwidth: u32,
    ) -> Result<f64> {
        if manager_ports == 0 {
            return Err(Error::param("manager_ports", "a router needs at least one port"));
        }
        if subordinate_ports == 0 {
            return Err(Error::param("subordinate_ports", "a router needs at least one port"));
        }
        let [a2, a1, a0] = self.router_area_coeffs;
        let radix = (manager_ports + subordinate_ports) as f64;
        Ok((a2 * radix * radix + a1 * radix + a0) * bandwidth as f64)
    }

    pub fn logic_power_w(&self, area_mm2: f64) -> f64 {
        area_mm2 * self.logic_power_coeff
    }

    pub fn wire_power_w(&self, area_mm2: f64) -> f64 {
        area_mm2 * self.wire_power_coeff
    }

    /// Signal delay in seconds along a buffered wire of `length_mm`.
    pub fn wire_delay_s(&self, length_mm: f64) -> f64 {
        length_mm * self.wire_delay_coeff
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pitch_example_horizontal() {
        let arch = pitch_example();
        let expected = 1e-6 / (1.0 / 40.0 + 1.0 / 50.0 + 1.0 / 60.0);
        let got = arch.wires_to_mm(Direction::Horizontal, 1);
        assert!((got - expected).abs() / expected < 1e-12);
        assert!((got - 1.6216e-5).abs() < 1e-9);
    }

    #[test]
    fn pitch_example_vertical() {
        let arch = pitch_example();
        let got = arch.wires_to_mm(Direction::Vertical, 1000);
        // 1000e-6 / (1/45 + 1/55) = 1000e-6 * 2475 / 100
        assert!((got - 0.02475).abs() < 1e-12);
    }

    #[test]
    fn zero_wires_take_no_space() {
        let arch = pitch_example();
        assert_eq!(arch.wires_to_mm(Direction::Horizontal, 0), 0.0);
        assert_eq!(arch.wires_to_mm(Direction::Vertical, 0), 0.0);
    }

    #[test]
    fn bw_to_wires_examples() {
        let mut arch = simple();
        assert_eq!(arch.bw_to_wires(512).unwrap(), 512);
        assert_eq!(arch.bw_to_wires(1).unwrap(), 1);
        arch.wires_per_bit = 1.25;
        arch.wire_overhead = 10;
        assert_eq!(arch.bw_to_wires(512).unwrap(), 650);
        assert!(arch.bw_to_wires(0).is_err());
    }

    #[test]
    fn router_area_examples() {
        let mut arch = simple();
        arch.router_area_coeffs = [1.0, 0.0, 0.0];
        assert_eq!(arch.router_area(2, 2, 1).unwrap(), 16.0);
        assert_eq!(arch.router_area(4, 4, 1).unwrap(), 64.0);
        arch.router_area_coeffs = [0.0, 0.0, 5.0];
        assert_eq!(arch.router_area(1, 1, 2).unwrap(), 10.0);
        assert!(arch.router_area(0, 1, 2).is_err());
        assert!(arch.router_area(1, 0, 2).is_err());
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut arch = simple();
        arch.h_layer_pitches_nm.clear();
        assert_eq!(arch.validate().unwrap_err().field(), Some("h_layer_pitches_nm"));
        let mut arch = simple();
        arch.wire_delay_coeff = 0.0;
        assert!(arch.validate().is_err());
        let mut arch = simple();
        arch.router_area_coeffs[1] = -1.0;
        assert!(arch.validate().is_err());
    }

    #[test]
    fn unknown_json_fields_rejected() {
        let mut v = serde_json::to_value(simple()).unwrap();
        v["bogus"] = serde_json::json!(1);
        assert!(ArchParams::from_json_str(&v.to_string()).is_err());
        v.as_object_mut().unwrap().remove("bogus");
        assert_eq!(ArchParams::from_json_str(&v.to_string()).unwrap(), simple());
    }

    fn pitches() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(10.0f64..500.0, 1..5)
    }

    proptest! {
        #[test]
        fn wires_to_mm_is_linear(p in pitches(), a in 0u64..100_000, b in 0u64..100_000) {
            let arch = ArchParams { h_layer_pitches_nm: p, ..simple() };
            let d = Direction::Horizontal;
            let sum = arch.wires_to_mm(d, a) + arch.wires_to_mm(d, b);
            let joint = arch.wires_to_mm(d, a + b);
            prop_assert!((sum - joint).abs() <= 1e-12 * joint.abs().max(1e-300));
        }

        #[test]
        fn extra_layer_never_widens_channel(p in pitches(), extra in 1.0f64..1000.0, x in 0u64..10_000) {
            let arch = ArchParams { v_layer_pitches_nm: p.clone(), ..simple() };
            let mut more = p;
            more.push(extra);
            let wider = ArchParams { v_layer_pitches_nm: more, ..simple() };
            prop_assert!(wider.wires_to_mm(Direction::Vertical, x) <= arch.wires_to_mm(Direction::Vertical, x));
        }

        #[test]
        fn router_area_linear_in_bandwidth(m in 1u32..20, s in 1u32..20, bw in 1u32..2048,
                                           a2 in 0.0f64..10.0, a1 in 0.0f64..10.0, a0 in 0.0f64..10.0) {
            let arch = ArchParams { router_area_coeffs: [a2, a1, a0], ..simple() };
            let one = arch.router_area(m, s, bw).unwrap();
            let two = arch.router_area(m, s, 2 * bw).unwrap();
            prop_assert!((two - 2.0 * one).abs() <= 1e-9 * two.max(1.0));
            let bigger = arch.router_area(m + 1, s, bw).unwrap();
            prop_assert!(bigger >= one);
        }
    }
}
