use std::fmt;
use std::str::FromStr;

/// Built-in co-occurrence keyword lists used to carve topic subsets out of a
/// seed-term corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum KeywordCategory {
    Education,
    Pandemic,
    Partisanship,
    Flashpoints,
}

impl KeywordCategory {
    pub const ALL: [KeywordCategory; 4] = [
        KeywordCategory::Education,
        KeywordCategory::Pandemic,
        KeywordCategory::Partisanship,
        KeywordCategory::Flashpoints,
    ];

    pub fn terms(self) -> &'static [&'static str] {
        match self {
            KeywordCategory::Education => &["teachers", "students", "schools", "books"],
            KeywordCategory::Pandemic => &["vaccine", "remote", "masks", "distancing"],
            KeywordCategory::Partisanship => &["republicans", "liberals", "democrats", "conservatives"],
            KeywordCategory::Flashpoints => &["trans", "racism", "migrant", "guns"],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KeywordCategory::Education => "education",
            KeywordCategory::Pandemic => "pandemic",
            KeywordCategory::Partisanship => "partisanship",
            KeywordCategory::Flashpoints => "flashpoints",
        }
    }
}

impl fmt::Display for KeywordCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KeywordCategory {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "education" => Ok(KeywordCategory::Education),
            "pandemic" => Ok(KeywordCategory::Pandemic),
            "partisanship" | "ideology" => Ok(KeywordCategory::Partisanship),
            "flashpoints" | "flashpoint" => Ok(KeywordCategory::Flashpoints),
            other => Err(format!(
                "unknown keyword category {other:?} (expected education, pandemic, partisanship or flashpoints)"
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_are_verbatim() {
        assert_eq!(
            KeywordCategory::Pandemic.terms(),
            ["vaccine", "remote", "masks", "distancing"]
        );
        assert_eq!(
            KeywordCategory::Education.terms(),
            ["teachers", "students", "schools", "books"]
        );
        assert_eq!(
            KeywordCategory::Partisanship.terms(),
            ["republicans", "liberals", "democrats", "conservatives"]
        );
        assert_eq!(
            KeywordCategory::Flashpoints.terms(),
            ["trans", "racism", "migrant", "guns"]
        );
        for c in KeywordCategory::ALL {
            assert_eq!(c.name().parse::<KeywordCategory>().unwrap(), c);
        }
    }
}
