use log::debug;

use crate::error::Result;
use crate::scalar::Real;

use super::{NetworkCase, Units};

impl<T: Real> NetworkCase<T> {
    /// Impedance base in ohm, `kV^2 / MVA`.
    pub fn z_base(&self) -> T {
        self.base.kv * self.base.kv / self.base.mva
    }

    /// Power base in kW.
    pub fn s_base_kw(&self) -> T {
        self.base.mva * T::lit(1000.0)
    }

    /// Current base in A for a three-phase system.
    pub fn i_base_a(&self) -> T {
        T::lit(1000.0) * self.base.mva / (T::lit(3.0).sqrt() * self.base.kv)
    }

    /// Per-unit copy; a no-op when already per-unit.
    pub fn to_per_unit(&self) -> Result<Self> {
        if self.units == Units::PerUnit {
            return Ok(self.clone());
        }
        let (z, s, i) = (self.z_base(), self.s_base_kw(), self.i_base_a());
        debug!(
            "per-unit conversion of {}: z_base = {z} ohm, s_base = {s} kW, i_base = {i} A",
            self.name
        );
        Ok(self.rescale(Units::PerUnit, T::one() / z, T::one() / s, T::one() / i))
    }

    /// Physical-unit copy; a no-op when already physical.
    pub fn from_per_unit(&self) -> Result<Self> {
        if self.units == Units::Physical {
            return Ok(self.clone());
        }
        let (z, s, i) = (self.z_base(), self.s_base_kw(), self.i_base_a());
        debug!("physical-unit conversion of {}", self.name);
        Ok(self.rescale(Units::Physical, z, s, i))
    }

    fn rescale(&self, units: Units, z: T, s: T, i: T) -> Self {
        let mut out = self.clone();
        out.units = units;
        for bus in &mut out.buses {
            bus.p_load *= s;
            bus.q_load *= s;
        }
        for br in &mut out.branches {
            br.r *= z;
            br.x *= z;
            br.i_max = br.i_max.map(|v| v * i);
        }
        for g in &mut out.generators {
            g.p_min *= s;
            g.p_max *= s;
            g.q_min *= s;
            g.q_max *= s;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Base, Branch, Bus, BusKind, Generator};

    fn case(mva: f64, kv: f64) -> NetworkCase<f64> {
        let bus = |id, kind, p| Bus { id, kind, p_load: p, q_load: 60.0, v_min: 0.95, v_max: 1.05, v_set: 1.0 };
        NetworkCase::new(
            "pu",
            Base { mva, kv },
            Units::Physical,
            vec![bus(1, BusKind::Slack, 0.0), bus(2, BusKind::Load, 100.0)],
            vec![Branch { from: 0, to: 1, r: 0.0922, x: 0.047, i_max: Some(400.0), tap: None }],
            vec![Generator { bus: 1, p_min: 0.0, p_max: 500.0, q_min: -100.0, q_max: 100.0 }],
        )
        .unwrap()
    }

    #[test]
    fn ieee33_line_impedance() {
        let pu = case(10.0, 12.66).to_per_unit().unwrap();
        let expected = 0.0922 * 10.0 / (12.66 * 12.66);
        assert!((pu.branches()[0].r - expected).abs() < 1e-15);
        assert!((pu.branches()[0].r - 5.7527e-3).abs() < 1e-6);
        assert!((pu.buses()[1].p_load - 0.01).abs() < 1e-15);
        assert_eq!(pu.units(), Units::PerUnit);
    }

    #[test]
    fn unit_impedance_base_is_identity() {
        let pu = case(4.0, 2.0).to_per_unit().unwrap();
        assert_eq!(pu.branches()[0].r, 0.0922);
        assert_eq!(pu.branches()[0].x, 0.047);
    }

    #[test]
    fn conversion_is_idempotent() {
        let pu = case(10.0, 12.66).to_per_unit().unwrap();
        assert_eq!(pu.to_per_unit().unwrap(), pu);
    }
}
