use core::fmt;

/// Kleene three-valued truth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Trivalent {
    False,
    Unknown,
    True,
}

impl Trivalent {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Trivalent::True
        } else {
            Trivalent::False
        }
    }

    pub fn and(self, other: Trivalent) -> Trivalent {
        use Trivalent::*;
        match (self, other) {
            (False, _) | (_, False) => False,
            (True, True) => True,
            _ => Unknown,
        }
    }

    pub fn or(self, other: Trivalent) -> Trivalent {
        use Trivalent::*;
        match (self, other) {
            (True, _) | (_, True) => True,
            (False, False) => False,
            _ => Unknown,
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Trivalent {
        match self {
            Trivalent::True => Trivalent::False,
            Trivalent::False => Trivalent::True,
            Trivalent::Unknown => Trivalent::Unknown,
        }
    }

    pub fn is_true(self) -> bool {
        self == Trivalent::True
    }

    pub fn is_false(self) -> bool {
        self == Trivalent::False
    }

    pub fn is_unknown(self) -> bool {
        self == Trivalent::Unknown
    }
}

impl fmt::Display for Trivalent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Trivalent::True => "true",
            Trivalent::False => "false",
            Trivalent::Unknown => "unknown",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::Trivalent::{self, *};

    const ALL: [Trivalent; 3] = [False, Unknown, True];

    #[test]
    fn kleene_tables() {
        assert_eq!(Unknown.and(False), False);
        assert_eq!(Unknown.or(True), True);
        assert_eq!(Unknown.and(True), Unknown);
        for a in ALL {
            for b in ALL {
                // De Morgan holds in Kleene logic
                assert_eq!(a.and(b).not(), a.not().or(b.not()));
            }
        }
    }
}
