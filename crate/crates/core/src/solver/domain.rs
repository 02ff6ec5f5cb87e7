//! Finite integer sets stored as sorted, disjoint, non-adjacent inclusive
//! intervals.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// An ordered finite set of integers.
///
/// Intervals are kept ascending, non-overlapping and non-adjacent, so two
/// domains holding the same values always compare equal. The empty domain
/// is representable and stands for failure.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Domain {
    intervals: Vec<(i64, i64)>,
}

impl Domain {
    pub fn empty() -> Self {
        Domain { intervals: Vec::new() }
    }

    /// `[lo..hi]`; empty when `lo > hi`.
    pub fn interval(lo: i64, hi: i64) -> Self {
        if lo > hi {
            Self::empty()
        } else {
            Domain { intervals: vec![(lo, hi)] }
        }
    }

    pub fn singleton(v: i64) -> Self {
        Self::interval(v, v)
    }

    pub fn boolean() -> Self {
        Self::interval(0, 1)
    }

    /// Builds a domain from arbitrary (possibly overlapping, unordered)
    /// intervals. Intervals with `lo > hi` are ignored.
    pub fn from_intervals<I: IntoIterator<Item = (i64, i64)>>(items: I) -> Self {
        let mut raw: Vec<(i64, i64)> = items.into_iter().filter(|(l, h)| l <= h).collect();
        raw.sort_unstable();
        let mut intervals: Vec<(i64, i64)> = Vec::with_capacity(raw.len());
        for (lo, hi) in raw {
            match intervals.last_mut() {
                Some(last) if (lo as i128) <= last.1 as i128 + 1 => last.1 = last.1.max(hi),
                _ => intervals.push((lo, hi)),
            }
        }
        Domain { intervals }
    }

    pub fn from_values<I: IntoIterator<Item = i64>>(values: I) -> Self {
        Self::from_intervals(values.into_iter().map(|v| (v, v)))
    }

    pub fn intervals(&self) -> &[(i64, i64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn is_singleton(&self) -> bool {
        self.intervals.len() == 1 && self.intervals[0].0 == self.intervals[0].1
    }

    /// The value of a singleton domain.
    pub fn value(&self) -> Option<i64> {
        self.is_singleton().then(|| self.intervals[0].0)
    }

    pub fn min(&self) -> Option<i64> {
        self.intervals.first().map(|i| i.0)
    }

    pub fn max(&self) -> Option<i64> {
        self.intervals.last().map(|i| i.1)
    }

    /// Number of values, saturating at `u64::MAX`.
    pub fn size(&self) -> u64 {
        self.intervals
            .iter()
            .map(|&(l, h)| (h as i128 - l as i128 + 1) as u128)
            .sum::<u128>()
            .min(u64::MAX as u128) as u64
    }

    pub fn contains(&self, v: i64) -> bool {
        match self.intervals.binary_search_by(|&(l, _)| l.cmp(&v)) {
            Ok(_) => true,
            Err(0) => false,
            Err(i) => self.intervals[i - 1].1 >= v,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = i64> + '_ {
        self.intervals.iter().flat_map(|&(l, h)| l..=h)
    }

    pub fn intersect(&self, other: &Domain) -> Domain {
        let (a, b) = (&self.intervals, &other.intervals);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() && j < b.len() {
            let lo = a[i].0.max(b[j].0);
            let hi = a[i].1.min(b[j].1);
            if lo <= hi {
                out.push((lo, hi));
            }
            if a[i].1 < b[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        Domain { intervals: out }
    }

    pub fn union(&self, other: &Domain) -> Domain {
        Self::from_intervals(self.intervals.iter().chain(other.intervals.iter()).copied())
    }

    pub fn is_subset(&self, other: &Domain) -> bool {
        self.intersect(other) == *self
    }

    pub fn is_disjoint(&self, other: &Domain) -> bool {
        self.intersect(other).is_empty()
    }

    /// Values `>= lo`.
    pub fn restrict_min(&self, lo: i128) -> Domain {
        if lo <= i64::MIN as i128 {
            return self.clone();
        }
        if lo > i64::MAX as i128 {
            return Domain::empty();
        }
        self.intersect(&Domain::interval(lo as i64, i64::MAX))
    }

    /// Values `<= hi`.
    pub fn restrict_max(&self, hi: i128) -> Domain {
        if hi >= i64::MAX as i128 {
            return self.clone();
        }
        if hi < i64::MIN as i128 {
            return Domain::empty();
        }
        self.intersect(&Domain::interval(i64::MIN, hi as i64))
    }

    pub fn remove_value(&self, v: i64) -> Domain {
        if !self.contains(v) {
            return self.clone();
        }
        let mut out = Vec::with_capacity(self.intervals.len() + 1);
        for &(l, h) in &self.intervals {
            if l <= v && v <= h {
                if l < v {
                    out.push((l, v - 1));
                }
                if v < h {
                    out.push((v + 1, h));
                }
            } else {
                out.push((l, h));
            }
        }
        Domain { intervals: out }
    }
}

impl fmt::Debug for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// `{}`, `{3}`, `{0..3}`, `{0, 2..5}`.
impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, &(l, h)) in self.intervals.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            if l == h {
                write!(f, "{l}")?;
            } else {
                write!(f, "{l}..{h}")?;
            }
        }
        f.write_str("}")
    }
}

/// Serialized as `[[lo,hi],...]`.
impl Serialize for Domain {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.intervals
            .iter()
            .map(|&(l, h)| [l, h])
            .collect::<Vec<_>>()
            .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Domain {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = Vec::<[i64; 2]>::deserialize(deserializer)?;
        Ok(Domain::from_intervals(raw.into_iter().map(|[l, h]| (l, h))))
    }
}
