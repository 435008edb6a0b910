//! Calendar dates at day, month or year granularity.
//!
//! Every event in the system is anchored to a [`CalendarDate`]. Coarse dates
//! (month or year) are first-class values: they sort, serialize and take part in
//! distance computations by widening to the midpoint day of their interval.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use chrono::{Datelike, Duration, NaiveDate};
use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DateError {
    #[error("unparseable date expression: {0:?}")]
    Unparseable(String),
    #[error("invalid date: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Day,
    Month,
    Year,
}

/// A proleptic-Gregorian date with explicit granularity.
///
/// Construction goes through [`CalendarDate::day`], [`CalendarDate::month`] or
/// [`CalendarDate::year`], so a value always satisfies its granularity invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CalendarDate {
    year: i32,
    month: Option<u32>,
    day: Option<u32>,
}

const MIN_YEAR: i32 = 1;
const MAX_YEAR: i32 = 9999;

impl CalendarDate {
    pub fn day(year: i32, month: u32, day: u32) -> Result<Self, DateError> {
        check_year(year)?;
        check_month(month)?;
        if NaiveDate::from_ymd_opt(year, month, day).is_none() {
            return Err(DateError::Invalid(format!(
                "{year:04}-{month:02}-{day:02} is not a calendar day"
            )));
        }
        Ok(Self {
            year,
            month: Some(month),
            day: Some(day),
        })
    }

    pub fn month(year: i32, month: u32) -> Result<Self, DateError> {
        check_year(year)?;
        check_month(month)?;
        Ok(Self {
            year,
            month: Some(month),
            day: None,
        })
    }

    pub fn year(year: i32) -> Result<Self, DateError> {
        check_year(year)?;
        Ok(Self {
            year,
            month: None,
            day: None,
        })
    }

    pub fn from_naive(date: NaiveDate) -> Self {
        Self {
            year: date.year(),
            month: Some(date.month()),
            day: Some(date.day()),
        }
    }

    pub fn year_value(&self) -> i32 {
        self.year
    }

    pub fn month_value(&self) -> Option<u32> {
        self.month
    }

    pub fn day_value(&self) -> Option<u32> {
        self.day
    }

    pub fn granularity(&self) -> Granularity {
        match (self.month, self.day) {
            (Some(_), Some(_)) => Granularity::Day,
            (Some(_), None) => Granularity::Month,
            _ => Granularity::Year,
        }
    }

    pub fn is_day(&self) -> bool {
        self.granularity() == Granularity::Day
    }

    /// The representative day used for distance arithmetic: the date itself
    /// for day granularity, the 15th for a month, July 1 for a year.
    pub fn midpoint(&self) -> NaiveDate {
        let (m, d) = match (self.month, self.day) {
            (Some(m), Some(d)) => (m, d),
            (Some(m), None) => (m, 15),
            _ => (7, 1),
        };
        NaiveDate::from_ymd_opt(self.year, m, d).expect("constructor guarantees a valid day")
    }

    /// First and last day covered by this date.
    pub fn interval(&self) -> (NaiveDate, NaiveDate) {
        match (self.month, self.day) {
            (Some(_), Some(_)) => {
                let d = self.midpoint();
                (d, d)
            }
            (Some(m), None) => {
                let first = NaiveDate::from_ymd_opt(self.year, m, 1).expect("valid month");
                let next = if m == 12 {
                    NaiveDate::from_ymd_opt(self.year + 1, 1, 1)
                } else {
                    NaiveDate::from_ymd_opt(self.year, m + 1, 1)
                }
                .expect("valid month");
                (first, next - Duration::days(1))
            }
            _ => (
                NaiveDate::from_ymd_opt(self.year, 1, 1).expect("valid year"),
                NaiveDate::from_ymd_opt(self.year, 12, 31).expect("valid year"),
            ),
        }
    }

    pub fn shifted_days(&self, days: i64) -> Option<Self> {
        if !self.is_day() {
            return None;
        }
        let shifted = self.midpoint().checked_add_signed(Duration::days(days))?;
        (MIN_YEAR..=MAX_YEAR)
            .contains(&shifted.year())
            .then(|| Self::from_naive(shifted))
    }

    fn sort_key(&self) -> (i32, u32, u32, Granularity) {
        (
            self.year,
            self.month.unwrap_or(1),
            self.day.unwrap_or(1),
            self.granularity(),
        )
    }
}

fn check_year(year: i32) -> Result<(), DateError> {
    if (MIN_YEAR..=MAX_YEAR).contains(&year) {
        Ok(())
    } else {
        Err(DateError::Invalid(format!("year {year} out of range")))
    }
}

fn check_month(month: u32) -> Result<(), DateError> {
    if (1..=12).contains(&month) {
        Ok(())
    } else {
        Err(DateError::Invalid(format!("month {month} out of range")))
    }
}

impl Ord for CalendarDate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for CalendarDate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for CalendarDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.month, self.day) {
            (Some(m), Some(d)) => write!(f, "{:04}-{:02}-{:02}", self.year, m, d),
            (Some(m), None) => write!(f, "{:04}-{:02}", self.year, m),
            _ => write!(f, "{:04}", self.year),
        }
    }
}

/// Canonical text form: `YYYY`, `YYYY-MM` or `YYYY-MM-DD`.
pub fn format_date(date: &CalendarDate) -> String {
    date.to_string()
}

impl FromStr for CalendarDate {
    type Err = DateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_date(s, None)
    }
}

impl Serialize for CalendarDate {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for CalendarDate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        parse_date(&raw, None).map_err(serde::de::Error::custom)
    }
}

fn iso_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(\d{4})(?:-(\d{1,2})(?:-(\d{1,2}))?)?$").unwrap())
}

fn month_day_year_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^([a-z]+)\.?\s+(\d{1,2})(?:st|nd|rd|th)?,?\s+(\d{4})$").unwrap()
    })
}

fn day_month_year_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(\d{1,2})(?:st|nd|rd|th)?\s+(?:of\s+)?([a-z]+)\.?,?\s+(\d{4})$").unwrap()
    })
}

fn month_year_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^([a-z]+)\.?,?\s+(\d{4})$").unwrap())
}

fn month_number(name: &str) -> Option<u32> {
    let m = match name {
        "january" | "jan" => 1,
        "february" | "feb" => 2,
        "march" | "mar" => 3,
        "april" | "apr" => 4,
        "may" => 5,
        "june" | "jun" => 6,
        "july" | "jul" => 7,
        "august" | "aug" => 8,
        "september" | "sep" | "sept" => 9,
        "october" | "oct" => 10,
        "november" | "nov" => 11,
        "december" | "dec" => 12,
        _ => return None,
    };
    Some(m)
}

fn number(raw: &str) -> Result<u32, DateError> {
    raw.parse::<u32>()
        .map_err(|_| DateError::Invalid(format!("numeric component {raw:?} out of range")))
}

fn year_number(raw: &str) -> Result<i32, DateError> {
    raw.parse::<i32>()
        .map_err(|_| DateError::Invalid(format!("year {raw:?} out of range")))
}

/// Parses a date expression into the narrowest granularity it expresses.
///
/// Accepted forms: `YYYY`, `YYYY-MM`, `YYYY-MM-DD`, `Month D, YYYY`,
/// `D Month YYYY`, `Month YYYY`, and the relative tokens `today`, `yesterday`,
/// `tomorrow` (which need a day-granularity `reference`).
pub fn parse_date(text: &str, reference: Option<CalendarDate>) -> Result<CalendarDate, DateError> {
    let cleaned = text
        .trim()
        .trim_end_matches(['.', ',', ';'])
        .trim()
        .to_lowercase();
    if cleaned.is_empty() {
        return Err(DateError::Unparseable(text.to_string()));
    }

    let offset = match cleaned.as_str() {
        "today" => Some(0),
        "yesterday" => Some(-1),
        "tomorrow" => Some(1),
        _ => None,
    };
    if let Some(offset) = offset {
        return reference
            .filter(CalendarDate::is_day)
            .and_then(|r| r.shifted_days(offset))
            .ok_or_else(|| DateError::Unparseable(text.to_string()));
    }

    if let Some(c) = iso_re().captures(&cleaned) {
        let year = year_number(&c[1])?;
        return match (c.get(2), c.get(3)) {
            (Some(m), Some(d)) => CalendarDate::day(year, number(m.as_str())?, number(d.as_str())?),
            (Some(m), None) => CalendarDate::month(year, number(m.as_str())?),
            _ => CalendarDate::year(year),
        };
    }

    if let Some(c) = month_day_year_re().captures(&cleaned) {
        if let Some(month) = month_number(&c[1]) {
            return CalendarDate::day(year_number(&c[3])?, month, number(&c[2])?);
        }
    }

    if let Some(c) = day_month_year_re().captures(&cleaned) {
        if let Some(month) = month_number(&c[2]) {
            return CalendarDate::day(year_number(&c[3])?, month, number(&c[1])?);
        }
    }

    if let Some(c) = month_year_re().captures(&cleaned) {
        if let Some(month) = month_number(&c[1]) {
            return CalendarDate::month(year_number(&c[2])?, month);
        }
    }

    Err(DateError::Unparseable(text.to_string()))
}

/// Absolute distance in days between the midpoint days of two dates.
pub fn date_distance_days(a: &CalendarDate, b: &CalendarDate) -> u64 {
    (a.midpoint() - b.midpoint()).num_days().unsigned_abs()
}
