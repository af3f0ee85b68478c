use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 13 genre categories, in canonical label-index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Genre {
    Action,
    Animation,
    Biography,
    Comedy,
    Crime,
    Drama,
    Family,
    Fantasy,
    Horror,
    Mystery,
    Romance,
    SciFi,
    Thriller,
}

impl Genre {
    pub const ALL: [Genre; 13] = [
        Genre::Action,
        Genre::Animation,
        Genre::Biography,
        Genre::Comedy,
        Genre::Crime,
        Genre::Drama,
        Genre::Family,
        Genre::Fantasy,
        Genre::Horror,
        Genre::Mystery,
        Genre::Romance,
        Genre::SciFi,
        Genre::Thriller,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Genre::Action => "action",
            Genre::Animation => "animation",
            Genre::Biography => "biography",
            Genre::Comedy => "comedy",
            Genre::Crime => "crime",
            Genre::Drama => "drama",
            Genre::Family => "family",
            Genre::Fantasy => "fantasy",
            Genre::Horror => "horror",
            Genre::Mystery => "mystery",
            Genre::Romance => "romance",
            Genre::SciFi => "sci-fi",
            Genre::Thriller => "thriller",
        }
    }

    pub fn names() -> Vec<String> {
        Self::ALL.iter().map(|g| g.name().to_string()).collect()
    }
}

impl fmt::Display for Genre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Genre {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Genre::ALL
            .iter()
            .copied()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown genre '{s}'")))
    }
}

impl TryFrom<String> for Genre {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Genre> for String {
    fn from(g: Genre) -> Self {
        g.name().to_string()
    }
}

/// Inclusive USD ranges of the five budget tiers. Values in the gaps between
/// published ranges belong to the lower tier.
pub const BUDGET_TIERS: [(u64, u64); 5] = [
    (218, 890_000),
    (900_000, 4_800_000),
    (4_900_000, 19_400_000),
    (19_500_000, 71_500_000),
    (72_000_000, 300_000_000),
];

pub fn tier_names() -> Vec<String> {
    (1..=5).map(|t| format!("tier-{t}")).collect()
}

/// Maps a budget to its tier in `1..=5`.
pub fn budget_to_tier(budget_usd: u64) -> Result<usize> {
    if budget_usd == 0 {
        return Err(Error::Validation("budget must be positive".into()));
    }
    let (min, _) = BUDGET_TIERS[0];
    let (_, max) = BUDGET_TIERS[4];
    if budget_usd < min {
        log::warn!("budget ${budget_usd} below the tier-1 range; assigned tier 1");
    } else if budget_usd > max {
        log::warn!("budget ${budget_usd} above the tier-5 range; assigned tier 5");
    }
    let tier = BUDGET_TIERS
        .iter()
        .take_while(|(lo, _)| *lo <= budget_usd)
        .count();
    Ok(tier.max(1))
}
