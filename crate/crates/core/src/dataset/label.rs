use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DatasetError;

pub const NUM_CLASSES6: usize = 6;
pub const NUM_CLASSES3: usize = 3;

/// Display names of the six side-aware classes, in class-index order.
pub const CLASS6_NAMES: [&str; 6] = ["₹1 Rev", "₹2 Rev", "₹5 Rev", "₹1 Obv", "₹2 Obv", "₹5 Obv"];
pub const CLASS3_NAMES: [&str; 3] = ["₹1", "₹2", "₹5"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Denomination {
    One,
    Two,
    Five,
}

impl Denomination {
    pub const ALL: [Denomination; 3] = [Denomination::One, Denomination::Two, Denomination::Five];

    pub fn rupees(self) -> u8 {
        match self {
            Denomination::One => 1,
            Denomination::Two => 2,
            Denomination::Five => 5,
        }
    }

    pub fn from_rupees(value: u8) -> Option<Self> {
        match value {
            1 => Some(Denomination::One),
            2 => Some(Denomination::Two),
            5 => Some(Denomination::Five),
            _ => None,
        }
    }

    /// Position in the 3-class ordering.
    pub fn index(self) -> usize {
        self as usize
    }

    /// Number of minted styles in circulation for this denomination.
    pub fn style_count(self) -> u8 {
        match self {
            Denomination::One => 3,
            Denomination::Two => 4,
            Denomination::Five => 5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Reverse,
    Obverse,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Reverse => "reverse",
            Side::Obverse => "obverse",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Side {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reverse" => Ok(Side::Reverse),
            "obverse" => Ok(Side::Obverse),
            other => Err(DatasetError::Label(format!("unknown side {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoinLabel {
    pub denomination: Denomination,
    pub side: Side,
    pub style: u8,
}

impl CoinLabel {
    pub fn new(denomination: Denomination, side: Side, style: u8) -> Result<Self, DatasetError> {
        if style == 0 || style > denomination.style_count() {
            return Err(DatasetError::Label(format!(
                "style {style} out of range for ₹{} (1..={})",
                denomination.rupees(),
                denomination.style_count()
            )));
        }
        Ok(CoinLabel { denomination, side, style })
    }

    /// Reverse sides first, then obverse, each in ₹1, ₹2, ₹5 order.
    pub fn class6(&self) -> usize {
        let side = match self.side {
            Side::Reverse => 0,
            Side::Obverse => 3,
        };
        side + self.denomination.index()
    }

    /// Label for a class index with style 1.
    pub fn from_class6(class: usize) -> Result<Self, DatasetError> {
        if class >= NUM_CLASSES6 {
            return Err(DatasetError::ClassIndex(class));
        }
        let side = if class < 3 { Side::Reverse } else { Side::Obverse };
        Ok(CoinLabel { denomination: Denomination::ALL[class % 3], side, style: 1 })
    }

    /// `<rupees>/<side>/<style>` directory of this label.
    pub fn relative_dir(&self) -> String {
        format!("{}/{}/{}", self.denomination.rupees(), self.side, self.style)
    }
}

/// Collapses a side-aware class to its denomination.
pub fn merge_label(class6: usize) -> Result<usize, DatasetError> {
    if class6 >= NUM_CLASSES6 {
        return Err(DatasetError::ClassIndex(class6));
    }
    Ok(class6 % 3)
}

/// `merge_label` for every class, as a lookup table.
pub fn denomination_mapping() -> [usize; NUM_CLASSES6] {
    [0, 1, 2, 0, 1, 2]
}
