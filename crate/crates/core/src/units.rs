//! Physical constants and unit handling.
//!
//! Everything inside the crate is SI: joules, seconds, rad/s, metres and
//! kelvin. The [`Unit`] table covers the convenience units used at the
//! human-facing edges (scenario files, CLI flags, reports).

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};

/// CODATA 2018 reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant (exact), J/K.
pub const K_B: f64 = 1.380_649e-23;
/// Atomic mass unit, kg.
pub const AMU: f64 = 1.660_539_066_60e-27;
/// Mass of 133Cs, kg.
pub const CS133_MASS: f64 = 132.905_451_961 * AMU;
/// 133Cs ground-state hyperfine splitting (SI second definition), Hz.
pub const CS133_HFS_HZ: f64 = 9_192_631_770.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysConstants {
    pub hbar: f64,
    pub k_b: f64,
    pub atom_mass: f64,
    /// Hyperfine splitting as an angular frequency, rad/s.
    pub omega_hfs: f64,
}

impl Default for PhysConstants {
    fn default() -> Self {
        PhysConstants { hbar: HBAR, k_b: K_B, atom_mass: CS133_MASS, omega_hfs: TAU * CS133_HFS_HZ }
    }
}

impl PhysConstants {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("constants.hbar", self.hbar)?;
        ensure_positive("constants.k_b", self.k_b)?;
        ensure_positive("constants.atom_mass", self.atom_mass)?;
        ensure_positive("constants.omega_hfs", self.omega_hfs)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Dimension {
    Temperature,
    Energy,
    /// Cycles per second and radians per second share this class.
    Frequency,
    Time,
    Length,
    Acceleration,
    /// Event rates (1/s), kept apart from angular frequencies.
    Rate,
    Dimensionless,
}

/// A supported unit. The `scale` converts a value in this unit to the SI
/// base of its dimension (K, J, rad/s, s, m, m/s²).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    Kelvin,
    MilliKelvin,
    MicroKelvin,
    Joule,
    Hertz,
    KiloHertz,
    MegaHertz,
    GigaHertz,
    TeraHertz,
    RadPerSecond,
    Second,
    MilliSecond,
    MicroSecond,
    Metre,
    MilliMetre,
    MicroMetre,
    NanoMetre,
    MetrePerSecondSquared,
    PerSecond,
    PerMilliSecond,
    One,
}

impl Unit {
    fn dimension(self) -> Dimension {
        use Unit::*;
        match self {
            Kelvin | MilliKelvin | MicroKelvin => Dimension::Temperature,
            Joule => Dimension::Energy,
            Hertz | KiloHertz | MegaHertz | GigaHertz | TeraHertz | RadPerSecond => Dimension::Frequency,
            Second | MilliSecond | MicroSecond => Dimension::Time,
            Metre | MilliMetre | MicroMetre | NanoMetre => Dimension::Length,
            MetrePerSecondSquared => Dimension::Acceleration,
            PerSecond | PerMilliSecond => Dimension::Rate,
            One => Dimension::Dimensionless,
        }
    }

    fn scale(self) -> f64 {
        use Unit::*;
        match self {
            Kelvin | Joule | RadPerSecond | Second | Metre | MetrePerSecondSquared | PerSecond | One => 1.0,
            PerMilliSecond => 1e3,
            MilliKelvin | MilliSecond | MilliMetre => 1e-3,
            MicroKelvin | MicroSecond | MicroMetre => 1e-6,
            NanoMetre => 1e-9,
            Hertz => TAU,
            KiloHertz => TAU * 1e3,
            MegaHertz => TAU * 1e6,
            GigaHertz => TAU * 1e9,
            TeraHertz => TAU * 1e12,
        }
    }

    pub fn symbol(self) -> &'static str {
        use Unit::*;
        match self {
            Kelvin => "K",
            MilliKelvin => "mK",
            MicroKelvin => "uK",
            Joule => "J",
            Hertz => "Hz",
            KiloHertz => "kHz",
            MegaHertz => "MHz",
            GigaHertz => "GHz",
            TeraHertz => "THz",
            RadPerSecond => "rad/s",
            Second => "s",
            MilliSecond => "ms",
            MicroSecond => "us",
            Metre => "m",
            MilliMetre => "mm",
            MicroMetre => "um",
            NanoMetre => "nm",
            MetrePerSecondSquared => "m/s^2",
            PerSecond => "1/s",
            PerMilliSecond => "1/ms",
            One => "1",
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use Unit::*;
        let unit = match s.trim() {
            "K" => Kelvin,
            "mK" => MilliKelvin,
            "uK" | "µK" | "μK" => MicroKelvin,
            "J" => Joule,
            "Hz" => Hertz,
            "kHz" => KiloHertz,
            "MHz" => MegaHertz,
            "GHz" => GigaHertz,
            "THz" => TeraHertz,
            "rad/s" => RadPerSecond,
            "s" => Second,
            "ms" => MilliSecond,
            "us" | "µs" | "μs" => MicroSecond,
            "m" => Metre,
            "mm" => MilliMetre,
            "um" | "µm" | "μm" => MicroMetre,
            "nm" => NanoMetre,
            "m/s^2" | "m/s2" | "m/s²" => MetrePerSecondSquared,
            "1/s" | "/s" => PerSecond,
            "1/ms" | "/ms" => PerMilliSecond,
            "" | "1" => One,
            other => return Err(Error::Units { from: other.to_string(), to: String::from("?") }),
        };
        Ok(unit)
    }
}

/// Converts `value` between two supported units.
///
/// Temperature and energy interconvert through `E = k_B T` using the supplied
/// constants; every other pair must share a dimension.
pub fn convert_units(value: f64, from: Unit, to: Unit, constants: &PhysConstants) -> Result<f64> {
    let (df, dt) = (from.dimension(), to.dimension());
    let si = value * from.scale();
    let si = match (df, dt) {
        (a, b) if a == b => si,
        (Dimension::Temperature, Dimension::Energy) => si * constants.k_b,
        (Dimension::Energy, Dimension::Temperature) => si / constants.k_b,
        _ => {
            return Err(Error::Units { from: from.to_string(), to: to.to_string() });
        }
    };
    Ok(si / to.scale())
}

/// A number with a unit, as written in scenario files (`"1.0 mK"`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quantity {
    pub value: f64,
    pub unit: Unit,
}

impl Quantity {
    pub fn new(value: f64, unit: Unit) -> Self {
        Quantity { value, unit }
    }

    /// Value in the SI unit of the requested target dimension.
    pub fn to(&self, unit: Unit, constants: &PhysConstants) -> Result<f64> {
        convert_units(self.value, self.unit, unit, constants)
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.unit == Unit::One {
            write!(f, "{:?}", self.value)
        } else {
            write!(f, "{:?} {}", self.value, self.unit)
        }
    }
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let split = s.char_indices().find(|&(_, c)| c.is_whitespace()).map(|(i, _)| i).unwrap_or(s.len());
        let (num, unit) = s.split_at(split);
        let value: f64 = num.parse().map_err(|_| Error::validation("quantity", format!("cannot parse number in `{s}`")))?;
        let unit: Unit = unit.parse()?;
        Ok(Quantity { value, unit })
    }
}

impl Serialize for Quantity {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Quantity {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c() -> PhysConstants {
        PhysConstants::default()
    }

    #[test]
    fn millikelvin_to_joule() {
        let e = convert_units(1.0, Unit::MilliKelvin, Unit::Joule, &c()).unwrap();
        assert!((e - 1.380649e-26).abs() < 1e-40);
    }

    #[test]
    fn angular_to_kilohertz() {
        let f = convert_units(2.0 * PI * 3000.0, Unit::RadPerSecond, Unit::KiloHertz, &c()).unwrap();
        assert!((f - 3.0).abs() < 1e-12);
    }

    #[test]
    fn metric_prefix() {
        let t = convert_units(0.86, Unit::MilliSecond, Unit::Second, &c()).unwrap();
        assert!((t - 8.6e-4).abs() < 1e-18);
    }

    #[test]
    fn rates_are_not_angular() {
        let r = convert_units(2.0, Unit::PerMilliSecond, Unit::PerSecond, &c()).unwrap();
        assert!((r - 2000.0).abs() < 1e-9);
        assert!(convert_units(1.0, Unit::PerSecond, Unit::Hertz, &c()).is_err());
    }

    #[test]
    fn incompatible_pair_rejected() {
        let err = convert_units(1.0, Unit::MilliSecond, Unit::Kelvin, &c()).unwrap_err();
        assert!(matches!(err, Error::Units { .. }));
    }

    #[test]
    fn codata_defaults() {
        let k = c();
        assert!(k.validate().is_ok());
        assert!((k.atom_mass / 2.206_946_95e-25 - 1.0).abs() < 1e-8);
        assert!((k.omega_hfs / (2.0 * PI) - 9.192_631_77e9).abs() < 1.0);
    }

    #[test]
    fn quantity_parse_and_print() {
        let q: Quantity = "1.0 mK".parse().unwrap();
        assert_eq!(q, Quantity::new(1.0, Unit::MilliKelvin));
        assert_eq!(q.to_string(), "1.0 mK");
        let q: Quantity = "-64 THz".parse().unwrap();
        assert_eq!(q.unit, Unit::TeraHertz);
        assert!("3 furlongs".parse::<Quantity>().is_err());
        assert!("abc mK".parse::<Quantity>().is_err());
    }

    proptest::proptest! {
        #[test]
        fn conversion_round_trip(x in -1e6f64..1e6, pair in 0usize..6) {
            let pairs = [
                (Unit::MilliKelvin, Unit::Joule),
                (Unit::MicroKelvin, Unit::Kelvin),
                (Unit::KiloHertz, Unit::RadPerSecond),
                (Unit::Hertz, Unit::KiloHertz),
                (Unit::MilliSecond, Unit::Second),
                (Unit::MicroMetre, Unit::MilliMetre),
            ];
            let (a, b) = pairs[pair];
            let y = convert_units(x, a, b, &c()).unwrap();
            let back = convert_units(y, b, a, &c()).unwrap();
            proptest::prop_assert!((back - x).abs() <= 1e-12 * x.abs().max(1e-300));
        }

        #[test]
        fn quantity_display_round_trip(x in -1e9f64..1e9) {
            let q = Quantity::new(x, Unit::MicroSecond);
            let back: Quantity = q.to_string().parse().unwrap();
            proptest::prop_assert_eq!(back, q);
        }
    }
}
