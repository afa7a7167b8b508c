//! Class labels, channel domains and frequency-band tags shared by every stage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 5;

/// The five modulation classes, in their fixed label-encoding order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modulation {
    #[serde(rename = "BPSK")]
    Bpsk,
    #[serde(rename = "QPSK")]
    Qpsk,
    #[serde(rename = "16QAM")]
    Qam16,
    #[serde(rename = "64QAM")]
    Qam64,
    #[serde(rename = "256QAM")]
    Qam256,
}

impl Modulation {
    pub const ALL: [Modulation; NUM_CLASSES] = [
        Modulation::Bpsk,
        Modulation::Qpsk,
        Modulation::Qam16,
        Modulation::Qam64,
        Modulation::Qam256,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Modulation::Bpsk => "BPSK",
            Modulation::Qpsk => "QPSK",
            Modulation::Qam16 => "16QAM",
            Modulation::Qam64 => "64QAM",
            Modulation::Qam256 => "256QAM",
        }
    }

    /// Name as printed in report tables (`16-QAM`).
    pub fn display_name(self) -> &'static str {
        match self {
            Modulation::Bpsk => "BPSK",
            Modulation::Qpsk => "QPSK",
            Modulation::Qam16 => "16-QAM",
            Modulation::Qam64 => "64-QAM",
            Modulation::Qam256 => "256-QAM",
        }
    }

    pub fn bits_per_symbol(self) -> u32 {
        match self {
            Modulation::Bpsk => 1,
            Modulation::Qpsk => 2,
            Modulation::Qam16 => 4,
            Modulation::Qam64 => 6,
            Modulation::Qam256 => 8,
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.map(|m| m.name()).join(", ")
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modulation {
    type Err = Error;

    /// Accepts `16QAM`, `16-QAM`, `16qam` and the numeric code `2`.
    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .trim()
            .chars()
            .filter(|c| *c != '-' && *c != '_' && *c != ' ')
            .collect::<String>()
            .to_ascii_uppercase();
        let m = match norm.as_str() {
            "BPSK" | "0" => Modulation::Bpsk,
            "QPSK" | "4QAM" | "1" => Modulation::Qpsk,
            "16QAM" | "2" => Modulation::Qam16,
            "64QAM" | "3" => Modulation::Qam64,
            "256QAM" | "4" => Modulation::Qam256,
            _ => {
                return Err(Error::invalid(format!(
                    "unknown modulation {s:?}; valid: {}",
                    Self::valid_names()
                )))
            }
        };
        Ok(m)
    }
}

/// Channel domain of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Rayleigh,
    Rician,
}

impl Domain {
    pub const ALL: [Domain; 2] = [Domain::Rayleigh, Domain::Rician];

    pub fn name(self) -> &'static str {
        match self {
            Domain::Rayleigh => "rayleigh",
            Domain::Rician => "rician",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Domain::Rayleigh => "Rayleigh",
            Domain::Rician => "Rician",
        }
    }

    pub fn other(self) -> Domain {
        match self {
            Domain::Rayleigh => Domain::Rician,
            Domain::Rician => Domain::Rayleigh,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rayleigh" => Ok(Domain::Rayleigh),
            "rician" | "rice" => Ok(Domain::Rician),
            _ => Err(Error::invalid(format!(
                "unknown domain {s:?}; valid: rayleigh, rician"
            ))),
        }
    }
}

/// Nominal sampling-frequency band. A pure tag: it selects generation presets
/// and labels reports, it does not change the channel physics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Band {
    #[serde(rename = "1MHz")]
    Mhz1,
    #[serde(rename = "10MHz")]
    Mhz10,
    #[serde(rename = "100MHz")]
    Mhz100,
    #[serde(rename = "500MHz")]
    Mhz500,
    #[serde(rename = "1GHz")]
    Ghz1,
}

impl Band {
    pub const ALL: [Band; 5] = [Band::Mhz1, Band::Mhz10, Band::Mhz100, Band::Mhz500, Band::Ghz1];

    pub fn tag(self) -> &'static str {
        match self {
            Band::Mhz1 => "1MHz",
            Band::Mhz10 => "10MHz",
            Band::Mhz100 => "100MHz",
            Band::Mhz500 => "500MHz",
            Band::Ghz1 => "1GHz",
        }
    }

    /// Label used in report tables (`100 MHz`).
    pub fn display_name(self) -> &'static str {
        match self {
            Band::Mhz1 => "1 MHz",
            Band::Mhz10 => "10 MHz",
            Band::Mhz100 => "100 MHz",
            Band::Mhz500 => "500 MHz",
            Band::Ghz1 => "1 GHz",
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Band {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "1mhz" => Ok(Band::Mhz1),
            "10mhz" => Ok(Band::Mhz10),
            "100mhz" => Ok(Band::Mhz100),
            "500mhz" => Ok(Band::Mhz500),
            "1ghz" | "1000mhz" => Ok(Band::Ghz1),
            _ => Err(Error::invalid(format!(
                "unknown band {s:?}; valid: 1MHz, 10MHz, 100MHz, 500MHz, 1GHz"
            ))),
        }
    }
}

/// Transfer direction: train on `source`, adapt to and evaluate on `target`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "rayleigh_to_rician")]
    RayleighToRician,
    #[serde(rename = "rician_to_rayleigh")]
    RicianToRayleigh,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::RayleighToRician, Direction::RicianToRayleigh];

    pub fn source(self) -> Domain {
        match self {
            Direction::RayleighToRician => Domain::Rayleigh,
            Direction::RicianToRayleigh => Domain::Rician,
        }
    }

    pub fn target(self) -> Domain {
        self.source().other()
    }

    pub fn tag(self) -> &'static str {
        match self {
            Direction::RayleighToRician => "rayleigh_to_rician",
            Direction::RicianToRayleigh => "rician_to_rayleigh",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Direction::RayleighToRician => "Rayleigh→Rician",
            Direction::RicianToRayleigh => "Rician→Rayleigh",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "rayleigh_to_rician" | "rayleigh2rician" => Ok(Direction::RayleighToRician),
            "rician_to_rayleigh" | "rician2rayleigh" => Ok(Direction::RicianToRayleigh),
            _ => Err(Error::invalid(format!(
                "unknown direction {s:?}; valid: rayleigh_to_rician, rician_to_rayleigh"
            ))),
        }
    }
}
